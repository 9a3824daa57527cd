//! Dataset specifications given on the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratspn_core::data::{load_csv, load_idx, LabelColumn};
use ratspn_core::{Dataset, Scaling};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// `idx:IMAGES[,LABELS]`, `csv:PATH` or `noise:COUNT[,SEED]`.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
    },
    Csv {
        path: PathBuf,
    },
    Noise {
        count: usize,
        seed: u64,
    },
}

impl std::str::FromStr for DataSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("{s:?}: expected idx:, csv: or noise: prefix"))?;
        if rest.is_empty() {
            return Err(format!("{s:?}: nothing after the prefix"));
        }
        match kind {
            "idx" => {
                let (images, labels) = match rest.split_once(',') {
                    Some((i, l)) => (i, Some(PathBuf::from(l))),
                    None => (rest, None),
                };
                Ok(DataSpec::Idx {
                    images: images.into(),
                    labels,
                })
            }
            "csv" => Ok(DataSpec::Csv { path: rest.into() }),
            "noise" => {
                let (count, seed) = rest.split_once(',').unwrap_or((rest, "0"));
                Ok(DataSpec::Noise {
                    count: count
                        .parse()
                        .map_err(|_| format!("bad noise count {count:?}"))?,
                    seed: seed
                        .parse()
                        .map_err(|_| format!("bad noise seed {seed:?}"))?,
                })
            }
            other => Err(format!("unknown data kind {other:?}")),
        }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSpec::Idx {
                images,
                labels: None,
            } => write!(f, "idx:{}", images.display()),
            DataSpec::Idx {
                images,
                labels: Some(l),
            } => write!(f, "idx:{},{}", images.display(), l.display()),
            DataSpec::Csv { path } => write!(f, "csv:{}", path.display()),
            DataSpec::Noise { count, seed } => write!(f, "noise:{count},{seed}"),
        }
    }
}

/// How to read CSV files.
#[derive(Clone, Copy, Debug)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub header: bool,
}

pub fn parse_label_column(s: &str) -> Result<LabelColumn, String> {
    match s {
        "none" => Ok(LabelColumn::None),
        "first" => Ok(LabelColumn::First),
        "last" => Ok(LabelColumn::Last),
        k => k
            .parse()
            .map(LabelColumn::Index)
            .map_err(|_| format!("label column must be none, first, last or an index, got {k:?}")),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Fingerprint {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

fn fingerprint(path: &Path) -> Result<Fingerprint, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes);
    Ok(Fingerprint {
        path: path.to_path_buf(),
        bytes: bytes.len() as u64,
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DataRecord {
    pub spec: String,
    pub samples: usize,
    pub files: Vec<Fingerprint>,
}

/// Reads a file-backed dataset in raw feature units.
pub fn load_raw(spec: &DataSpec, csv: CsvOptions) -> Result<(Dataset, DataRecord), CliError> {
    let (data, files) = match spec {
        DataSpec::Idx { images, labels } => {
            let mut files = vec![fingerprint(images)?];
            if let Some(l) = labels {
                files.push(fingerprint(l)?);
            }
            (load_idx(images, labels.as_deref())?, files)
        }
        DataSpec::Csv { path } => (
            load_csv(path, csv.label, csv.header)?,
            vec![fingerprint(path)?],
        ),
        DataSpec::Noise { .. } => {
            return Err(CliError::usage(format!(
                "{spec}: noise needs a trained model's feature count"
            )))
        }
    };
    let record = DataRecord {
        spec: spec.to_string(),
        samples: data.len(),
        files,
    };
    Ok((data, record))
}

/// Loads a dataset and brings it into the model's feature space. Noise
/// samples are drawn uniformly from `[0, 1]` directly in that space.
pub fn load_scaled(
    spec: &DataSpec,
    csv: CsvOptions,
    scaling: &Scaling,
    num_vars: usize,
) -> Result<(Dataset, DataRecord), CliError> {
    let (data, record) = match spec {
        DataSpec::Noise { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let x = Array2::from_shape_simple_fn((*count, num_vars), || rng.random::<f64>());
            let record = DataRecord {
                spec: spec.to_string(),
                samples: *count,
                files: Vec::new(),
            };
            (Dataset::new(x, None)?, record)
        }
        _ => {
            let (raw, record) = load_raw(spec, csv)?;
            (raw.apply_scaling(scaling)?, record)
        }
    };
    if data.is_empty() {
        return Err(CliError::data(format!("{spec}: dataset is empty")));
    }
    if data.num_vars() != num_vars {
        return Err(CliError::data(format!(
            "{spec}: {} features, model expects {num_vars}",
            data.num_vars()
        )));
    }
    Ok((data, record))
}
