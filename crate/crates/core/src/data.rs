//! Dataset ingestion, feature scaling, batching and missing-value masks.
//!
//! Class labels are 0-based everywhere in this crate: a model with `C`
//! classes predicts indices `0..C`.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;

/// Floor applied to per-feature standard deviations under z-scoring.
pub const ZSCORE_STD_FLOOR: f64 = 1e-6;

/// Which variables are unobserved, per sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryMask {
    missing: Array2<bool>,
}

impl QueryMask {
    pub fn new(missing: Array2<bool>) -> Self {
        QueryMask { missing }
    }

    /// Nothing missing.
    pub fn observed(samples: usize, vars: usize) -> Self {
        QueryMask::new(Array2::from_elem((samples, vars), false))
    }

    /// Everything missing.
    pub fn all_missing(samples: usize, vars: usize) -> Self {
        QueryMask::new(Array2::from_elem((samples, vars), true))
    }

    pub fn dim(&self) -> (usize, usize) {
        self.missing.dim()
    }

    pub fn is_missing(&self, sample: usize, var: usize) -> bool {
        self.missing[[sample, var]]
    }

    pub fn missing(&self) -> ArrayView2<'_, bool> {
        self.missing.view()
    }

    pub fn count_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Missing in either mask.
    pub fn union(&self, other: &QueryMask) -> Result<QueryMask> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "mask shapes differ: {:?} vs {:?}",
                self.dim(),
                other.dim()
            )));
        }
        let mut m = self.missing.clone();
        m.zip_mut_with(&other.missing, |a, &b| *a |= b);
        Ok(QueryMask::new(m))
    }

    pub fn select_rows(&self, rows: &[usize]) -> QueryMask {
        QueryMask::new(self.missing.select(Axis(0), rows))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScalingMode {
    None,
    #[default]
    DivMax,
    ZScore,
}

/// A fitted feature transform. Statistics come from the training split and
/// are reapplied unchanged to any other split.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Scaling {
    #[default]
    None,
    DivMax {
        max: f64,
    },
    ZScore {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

impl Scaling {
    pub fn mode(&self) -> ScalingMode {
        match self {
            Scaling::None => ScalingMode::None,
            Scaling::DivMax { .. } => ScalingMode::DivMax,
            Scaling::ZScore { .. } => ScalingMode::ZScore,
        }
    }

    /// Fits statistics on `data`'s raw features.
    ///
    /// DivMax uses the format's nominal maximum when one is known (255 for
    /// IDX bytes) and the observed maximum otherwise.
    pub fn fit(mode: ScalingMode, data: &Dataset) -> Scaling {
        match mode {
            ScalingMode::None => Scaling::None,
            ScalingMode::DivMax => {
                let max = data.nominal_max.unwrap_or_else(|| {
                    data.features
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max)
                });
                let max = if max.is_finite() && max > 0.0 {
                    max
                } else {
                    1.0
                };
                Scaling::DivMax { max }
            }
            ScalingMode::ZScore => {
                let n = data.len().max(1) as f64;
                let d = data.num_vars();
                let mut mean = vec![0.0; d];
                let mut std = vec![0.0; d];
                for row in data.features.rows() {
                    for (j, &x) in row.iter().enumerate() {
                        mean[j] += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for row in data.features.rows() {
                    for (j, &x) in row.iter().enumerate() {
                        std[j] += (x - mean[j]).powi(2);
                    }
                }
                std.iter_mut()
                    .for_each(|s| *s = (*s / n).sqrt().max(ZSCORE_STD_FLOOR));
                Scaling::ZScore { mean, std }
            }
        }
    }

    pub fn transform(&self, features: &mut Array2<f64>) -> Result<()> {
        match self {
            Scaling::None => {}
            Scaling::DivMax { max } => features.mapv_inplace(|x| x / max),
            Scaling::ZScore { mean, std } => {
                if mean.len() != features.ncols() {
                    return Err(Error::invalid(format!(
                        "z-score statistics cover {} features, data has {}",
                        mean.len(),
                        features.ncols()
                    )));
                }
                for mut row in features.rows_mut() {
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = (*x - mean[j]) / std[j];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Features plus optional 0-based labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    nominal_max: Option<f64>,
    scaling: Scaling,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != features.nrows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} samples",
                    l.len(),
                    features.nrows()
                )));
            }
        }
        if let Some((i, _)) = features.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let d = features.ncols().max(1);
            return Err(Error::invalid(format!(
                "non-finite feature at sample {}, feature {}",
                i / d,
                i % d
            )));
        }
        Ok(Dataset {
            features,
            labels,
            nominal_max: None,
            scaling: Scaling::None,
        })
    }

    pub fn with_nominal_max(mut self, max: f64) -> Self {
        self.nominal_max = Some(max);
        self
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn nominal_max(&self) -> Option<f64> {
        self.nominal_max
    }

    /// The transform already applied to the features.
    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_vars(&self) -> usize {
        self.features.ncols()
    }

    /// `1 + max label`, or 0 when unlabeled or empty.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
            nominal_max: self.nominal_max,
            scaling: self.scaling.clone(),
        }
    }

    /// Samples whose label satisfies `keep`; unlabeled data is returned whole.
    pub fn filter_labels(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        match &self.labels {
            Some(l) => {
                let rows: Vec<usize> = (0..l.len()).filter(|&i| keep(l[i])).collect();
                self.select(&rows)
            }
            None => self.clone(),
        }
    }

    /// Seeded random split into `(rest, held_out)` with `fraction` held out.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "split fraction {fraction} not in [0, 1)"
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = (fraction * self.len() as f64).round() as usize;
        let (a, b) = idx.split_at(held);
        let mut rest = b.to_vec();
        let mut out = a.to_vec();
        rest.sort_unstable();
        out.sort_unstable();
        Ok((self.select(&rest), self.select(&out)))
    }

    /// Applies a fitted transform to raw features.
    pub fn apply_scaling(&self, scaling: &Scaling) -> Result<Dataset> {
        if self.scaling != Scaling::None {
            return Err(Error::invalid("dataset is already scaled"));
        }
        let mut features = self.features.clone();
        scaling.transform(&mut features)?;
        Ok(Dataset {
            features,
            labels: self.labels.clone(),
            nominal_max: self.nominal_max,
            scaling: scaling.clone(),
        })
    }
}

/// Fits `mode` on `data` and returns the transformed copy; the fitted
/// statistics are available from [`Dataset::scaling`].
pub fn scale_features(data: &Dataset, mode: ScalingMode) -> Result<Dataset> {
    data.apply_scaling(&Scaling::fit(mode, data))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: Option<&Path>) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                path,
                format!(
                    "truncated header: need 4 bytes at offset {offset}, file has {}",
                    bytes.len()
                ),
            )
        })
}

/// Parsed IDX image file: `count` images of `rows × cols` bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len());
        for v in [
            IDX_IMAGE_MAGIC,
            self.count() as u32,
            self.rows as u32,
            self.cols as u32,
        ] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

pub fn parse_idx_images(bytes: &[u8], path: Option<&Path>) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            path,
            format!("bad image magic {magic} at offset 0 (expected {IDX_IMAGE_MAGIC})"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(Error::format(
            path,
            format!(
                "payload at offset 16 holds {} bytes, header declares {count}×{rows}×{cols} = {need}",
                payload.len()
            ),
        ));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: Option<&Path>) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::format(
            path,
            format!("bad label magic {magic} at offset 0 (expected {IDX_LABEL_MAGIC})"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(
            path,
            format!(
                "payload at offset 8 holds {} bytes, header declares {count} labels",
                payload.len()
            ),
        ));
    }
    Ok(payload.to_vec())
}

pub fn idx_labels_to_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads big-endian IDX images (and optionally labels) as a dataset with
/// `rows · cols` features per sample and a nominal maximum of 255.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let img = parse_idx_images(&read_file(images)?, Some(images))?;
    let labels = match labels {
        Some(path) => {
            let l = parse_idx_labels(&read_file(path)?, Some(path))?;
            if l.len() != img.count() {
                return Err(Error::format(
                    Some(path),
                    format!("{} labels for {} images", l.len(), img.count()),
                ));
            }
            Some(l.into_iter().map(usize::from).collect())
        }
        None => None,
    };
    dataset_from_idx(&img, labels)
}

pub fn dataset_from_idx(img: &IdxImages, labels: Option<Vec<usize>>) -> Result<Dataset> {
    let d = img.rows * img.cols;
    let features = Array2::from_shape_vec(
        (img.count(), d),
        img.pixels.iter().map(|&b| f64::from(b)).collect(),
    )
    .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(Dataset::new(features, labels)?.with_nominal_max(255.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    None,
    First,
    Last,
    Index(usize),
}

/// Loads a rectangular numeric CSV. Labels are non-negative integers used
/// as 0-based class indices.
pub fn load_csv(path: &Path, label: LabelColumn, has_header: bool) -> Result<Dataset> {
    let text = read_file(path)?;
    parse_csv(&text, label, has_header, Some(path))
}

pub fn parse_csv(
    bytes: &[u8],
    label: LabelColumn,
    has_header: bool,
    path: Option<&Path>,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut width = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1 + usize::from(has_header);
        let record = record.map_err(|e| Error::format(path, format!("row {row}: {e}")))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::format(
                    path,
                    format!("row {row} has {} columns, expected {w}", record.len()),
                ))
            }
            _ => {}
        }
        let n = record.len();
        let label_col = match label {
            LabelColumn::None => None,
            LabelColumn::First => Some(0),
            LabelColumn::Last => Some(n - 1),
            LabelColumn::Index(k) if k < n => Some(k),
            LabelColumn::Index(k) => {
                return Err(Error::format(
                    path,
                    format!("label column {k} out of range ({n} columns)"),
                ))
            }
        };
        for (c, cell) in record.iter().enumerate() {
            let col = c + 1;
            if Some(c) == label_col {
                let v: usize = cell.parse().map_err(|_| {
                    Error::format(
                        path,
                        format!(
                            "row {row}, column {col}: label {cell:?} is not a non-negative integer"
                        ),
                    )
                })?;
                labels.push(v);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::format(
                        path,
                        format!("row {row}, column {col}: {cell:?} is not a number"),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::format(
                        path,
                        format!("row {row}, column {col}: non-finite value"),
                    ));
                }
                features.push(v);
            }
        }
        rows += 1;
    }
    let Some(width) = width else {
        return Err(Error::format(path, "no data rows"));
    };
    let d = width - usize::from(label != LabelColumn::None);
    let features = Array2::from_shape_vec((rows, d), features)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let labels = (label != LabelColumn::None).then_some(labels);
    Dataset::new(features, labels)
}

/// Shuffled mini-batches covering `0..n` exactly once; the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Marks each (sample, feature) missing independently with probability `fraction`.
pub fn random_missing_mask(
    samples: usize,
    vars: usize,
    fraction: f64,
    seed: u64,
) -> Result<QueryMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "missing fraction {fraction} not in [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let missing = Array2::from_shape_simple_fn((samples, vars), || rng.random::<f64>() < fraction);
    Ok(QueryMask::new(missing))
}
