//! On-disk model format.
//!
//! A model is one JSON document holding the explicit region graph, the
//! block sizes, every parameter, the feature scaling fitted at training time
//! and a little training provenance. Float arrays are stored either as
//! base64 of little-endian IEEE-754 doubles (`"raw"`) or as JSON numbers in
//! shortest round-trip decimal form (`"text"`). See `docs/model-format.md`.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitShape, LeafKind};
use crate::data::Scaling;
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::region_graph::{GraphConfig, Partition, RegionGraph, VariableScope};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Raw,
    Text,
}

/// Everything stored next to the circuit that is not a parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelMeta {
    /// Feature transform to apply to raw inputs before evaluation.
    pub scaling: Scaling,
    /// Objective weight of the most recent training run.
    pub lambda: Option<f64>,
    /// Total epochs trained, across warm starts.
    pub epochs: usize,
    pub train_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedModel {
    pub circuit: Circuit,
    pub params: ParameterSet,
    pub meta: ModelMeta,
    pub encoding: Encoding,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    encoding: Encoding,
    structure: Structure,
    regions: Vec<Vec<usize>>,
    root: usize,
    partitions: Vec<[usize; 3]>,
    parameter_count: Counts,
    parameters: Parameters,
    scaling: ScalingFile,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Structure {
    num_vars: usize,
    classes: usize,
    depth: usize,
    repetitions: usize,
    sums: usize,
    leaves: usize,
    seed: u64,
    leaf: String,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
#[serde(deny_unknown_fields)]
struct Counts {
    sum_logits: usize,
    leaf_params: usize,
    leaf_log_vars: usize,
    total: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Floats {
    Raw(String),
    Text(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Parameters {
    sum_logits: Floats,
    leaf_params: Floats,
    leaf_log_vars: Option<Floats>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
enum ScalingFile {
    None,
    Divmax { max: Floats },
    Zscore { mean: Floats, std: Floats },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Provenance {
    lambda: Option<Floats>,
    epochs: usize,
    train_seed: Option<u64>,
}

fn encode(values: &[f64], encoding: Encoding) -> Floats {
    match encoding {
        Encoding::Raw => {
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            Floats::Raw(B64.encode(bytes))
        }
        Encoding::Text => Floats::Text(values.to_vec()),
    }
}

fn decode(f: &Floats, encoding: Encoding, field: &str) -> std::result::Result<Vec<f64>, String> {
    match (f, encoding) {
        (Floats::Raw(s), Encoding::Raw) => {
            let bytes = B64
                .decode(s)
                .map_err(|e| format!("{field}: invalid base64 ({e})"))?;
            if bytes.len() % 8 != 0 {
                return Err(format!(
                    "{field}: {} bytes is not a whole number of doubles",
                    bytes.len()
                ));
            }
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect())
        }
        (Floats::Text(v), Encoding::Text) => Ok(v.clone()),
        _ => Err(format!(
            "{field}: array encoding does not match header encoding"
        )),
    }
}

fn leaf_from_str(s: &str) -> Option<LeafKind> {
    [LeafKind::Gaussian, LeafKind::Bernoulli]
        .into_iter()
        .find(|k| k.as_str() == s)
}

/// Serialises a model. Output is deterministic: equal inputs give equal
/// bytes.
pub fn model_to_string(
    circuit: &Circuit,
    params: &ParameterSet,
    meta: &ModelMeta,
    encoding: Encoding,
) -> Result<String> {
    params.check(circuit)?;
    let graph = circuit.graph();
    let cfg = graph.config();
    let shape = circuit.shape();
    let count = circuit.count_parameters(params.train_variance());
    let scaling = match &meta.scaling {
        Scaling::None => ScalingFile::None,
        Scaling::DivMax { max } => ScalingFile::Divmax {
            max: encode(&[*max], encoding),
        },
        Scaling::ZScore { mean, std } => ScalingFile::Zscore {
            mean: encode(mean, encoding),
            std: encode(std, encoding),
        },
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        encoding,
        structure: Structure {
            num_vars: graph.num_vars(),
            classes: shape.classes,
            depth: cfg.depth,
            repetitions: cfg.repetitions,
            sums: shape.sums,
            leaves: shape.leaves,
            seed: cfg.seed,
            leaf: shape.leaf.as_str().to_owned(),
        },
        regions: graph
            .regions()
            .iter()
            .map(|r| r.scope.as_slice().to_vec())
            .collect(),
        root: graph.root(),
        partitions: graph
            .partitions()
            .iter()
            .map(|p| [p.parent, p.children[0], p.children[1]])
            .collect(),
        parameter_count: Counts {
            sum_logits: count.num_sum_logits,
            leaf_params: circuit.num_leaf_slots(),
            leaf_log_vars: params.leaf_log_vars.as_ref().map_or(0, Vec::len),
            total: count.total,
        },
        parameters: Parameters {
            sum_logits: encode(&params.sum_logits, encoding),
            leaf_params: encode(&params.leaf_params, encoding),
            leaf_log_vars: params.leaf_log_vars.as_ref().map(|v| encode(v, encoding)),
        },
        scaling,
        provenance: Provenance {
            lambda: meta.lambda.map(|l| encode(&[l], encoding)),
            epochs: meta.epochs,
            train_seed: meta.train_seed,
        },
    };
    let mut s =
        serde_json::to_string_pretty(&file).map_err(|e| Error::format(None, e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn save_model(
    path: &Path,
    circuit: &Circuit,
    params: &ParameterSet,
    meta: &ModelMeta,
    encoding: Encoding,
) -> Result<()> {
    let text = model_to_string(circuit, params, meta, encoding)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses and fully validates a model document. `path` only labels errors.
pub fn model_from_str(text: &str, path: Option<&Path>) -> Result<LoadedModel> {
    let fmt = |m: String| Error::format(path, m);
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| fmt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| fmt("missing or non-integer format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| fmt(e.to_string()))?;
    let enc = file.encoding;
    let st = &file.structure;
    let leaf =
        leaf_from_str(&st.leaf).ok_or_else(|| fmt(format!("unknown leaf type {:?}", st.leaf)))?;

    let scopes = file
        .regions
        .iter()
        .map(|r| VariableScope::new(r.iter().copied()))
        .collect::<Result<Vec<_>>>()?;
    let partitions = file
        .partitions
        .iter()
        .map(|&[parent, a, b]| Partition {
            parent,
            children: [a, b],
        })
        .collect();
    let config = GraphConfig {
        depth: st.depth,
        repetitions: st.repetitions,
        seed: st.seed,
    };
    let graph = RegionGraph::from_parts(st.num_vars, config, scopes, partitions, file.root)?;
    let circuit = Circuit::new(
        graph,
        CircuitShape {
            classes: st.classes,
            sums: st.sums,
            leaves: st.leaves,
            leaf,
        },
    )?;

    let params = ParameterSet {
        sum_logits: decode(&file.parameters.sum_logits, enc, "sum_logits").map_err(fmt)?,
        leaf_params: decode(&file.parameters.leaf_params, enc, "leaf_params").map_err(fmt)?,
        leaf_log_vars: file
            .parameters
            .leaf_log_vars
            .as_ref()
            .map(|f| decode(f, enc, "leaf_log_vars"))
            .transpose()
            .map_err(fmt)?,
    };
    params
        .check(&circuit)
        .map_err(|e| Error::structure(format!("wiring width mismatch: {e}")))?;
    let count = circuit.count_parameters(params.train_variance());
    if file.parameter_count.total != count.total
        || file.parameter_count.sum_logits != count.num_sum_logits
    {
        return Err(Error::structure(format!(
            "recorded parameter count {} differs from the {} the structure implies",
            file.parameter_count.total, count.total
        )));
    }

    let scalar = |f: &Floats, field: &str| -> Result<f64> {
        match decode(f, enc, field).map_err(fmt)?[..] {
            [v] => Ok(v),
            _ => Err(fmt(format!("{field}: expected one value"))),
        }
    };
    let scaling = match &file.scaling {
        ScalingFile::None => Scaling::None,
        ScalingFile::Divmax { max } => Scaling::DivMax {
            max: scalar(max, "scaling.max")?,
        },
        ScalingFile::Zscore { mean, std } => {
            let mean = decode(mean, enc, "scaling.mean").map_err(fmt)?;
            let std = decode(std, enc, "scaling.std").map_err(fmt)?;
            if mean.len() != st.num_vars || std.len() != st.num_vars {
                return Err(fmt(format!(
                    "z-score statistics cover {} and {} features, model has {}",
                    mean.len(),
                    std.len(),
                    st.num_vars
                )));
            }
            Scaling::ZScore { mean, std }
        }
    };
    let meta = ModelMeta {
        scaling,
        lambda: file
            .provenance
            .lambda
            .as_ref()
            .map(|l| scalar(l, "provenance.lambda"))
            .transpose()?,
        epochs: file.provenance.epochs,
        train_seed: file.provenance.train_seed,
    };
    Ok(LoadedModel {
        circuit,
        params,
        meta,
        encoding: enc,
    })
}

pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text, Some(path))
}
