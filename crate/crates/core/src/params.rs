use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::circuit::{Circuit, LeafKind};
use crate::error::{Error, Result};

/// Smallest variance a trainable Gaussian leaf may take.
pub const MIN_VARIANCE: f64 = 1e-4;

/// Spread of the initial sum logits around zero.
pub const LOGIT_INIT_STD: f64 = 1e-2;

/// Learnable values of a circuit, stored as flat vectors indexed by the
/// offsets recorded in the circuit's blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    /// Unnormalised sum-weight logits; weights are their per-node softmax.
    pub sum_logits: Vec<f64>,
    /// Gaussian means, or Bernoulli success logits.
    pub leaf_params: Vec<f64>,
    /// Gaussian log-variances, present only when variances are trained.
    pub leaf_log_vars: Option<Vec<f64>>,
}

/// Gradients share the exact layout of the parameters they belong to.
pub type GradientSet = ParameterSet;

/// Per-feature bounds used to place initial leaf means.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRange {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl FeatureRange {
    pub fn of(features: ndarray::ArrayView2<'_, f64>) -> Self {
        let d = features.ncols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in features.rows() {
            for (j, &x) in row.iter().enumerate() {
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
        if features.nrows() == 0 {
            lo.fill(0.0);
            hi.fill(0.0);
        }
        FeatureRange { lo, hi }
    }
}

impl ParameterSet {
    pub fn zeros(circuit: &Circuit, train_variance: bool) -> Self {
        let slots = circuit.num_leaf_slots();
        ParameterSet {
            sum_logits: vec![0.0; circuit.num_sum_logits()],
            leaf_params: vec![0.0; slots],
            leaf_log_vars: (train_variance && circuit.leaf_kind() == LeafKind::Gaussian)
                .then(|| vec![0.0; slots]),
        }
    }

    /// Random initialisation. Logits are drawn near zero so every sum starts
    /// close to a uniform mixture. Gaussian means are standard normal draws,
    /// mapped onto `range` when given (centre ± half-width · z). Log-variances
    /// start at zero.
    pub fn init(
        circuit: &Circuit,
        train_variance: bool,
        range: Option<&FeatureRange>,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(circuit, train_variance);
        let logit = Normal::new(0.0, LOGIT_INIT_STD).expect("valid normal");
        for z in &mut p.sum_logits {
            *z = logit.sample(&mut rng);
        }
        for block in circuit.leaf_blocks() {
            let vars = block.scope.as_slice();
            for node in 0..block.width {
                for (t, &v) in vars.iter().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let value = match (circuit.leaf_kind(), range) {
                        (LeafKind::Gaussian, Some(r)) => {
                            let centre = 0.5 * (r.lo[v] + r.hi[v]);
                            let half = 0.5 * (r.hi[v] - r.lo[v]);
                            centre + half * z
                        }
                        _ => z,
                    };
                    p.leaf_params[block.param_offset + node * vars.len() + t] = value;
                }
            }
        }
        p
    }

    /// Random parameters with logits of unit spread, for tests that need
    /// strongly non-uniform mixtures.
    pub fn random<R: Rng>(circuit: &Circuit, train_variance: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(circuit, train_variance);
        for z in &mut p.sum_logits {
            *z = rng.sample::<f64, _>(StandardNormal);
        }
        for m in &mut p.leaf_params {
            *m = rng.sample::<f64, _>(StandardNormal);
        }
        if let Some(lv) = &mut p.leaf_log_vars {
            for v in lv {
                *v = 0.5 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            sum_logits: vec![0.0; self.sum_logits.len()],
            leaf_params: vec![0.0; self.leaf_params.len()],
            leaf_log_vars: self.leaf_log_vars.as_ref().map(|v| vec![0.0; v.len()]),
        }
    }

    pub fn train_variance(&self) -> bool {
        self.leaf_log_vars.is_some()
    }

    pub fn len(&self) -> usize {
        self.parts().map(<[f64]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parts(&self) -> impl Iterator<Item = &[f64]> {
        [
            Some(&self.sum_logits[..]),
            Some(&self.leaf_params[..]),
            self.leaf_log_vars.as_deref(),
        ]
        .into_iter()
        .flatten()
    }

    pub fn parts_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        [
            Some(&mut self.sum_logits[..]),
            Some(&mut self.leaf_params[..]),
            self.leaf_log_vars.as_deref_mut(),
        ]
        .into_iter()
        .flatten()
    }

    /// All values in storage order: logits, leaf parameters, log-variances.
    pub fn to_flat(&self) -> Vec<f64> {
        self.parts().flatten().copied().collect()
    }

    /// Inverse of [`ParameterSet::to_flat`], keeping `self`'s layout.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::invalid(format!(
                "flat vector has {} values, parameter set has {}",
                flat.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        let mut rest = flat;
        for part in out.parts_mut() {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(out)
    }

    pub fn same_layout(&self, other: &ParameterSet) -> bool {
        self.sum_logits.len() == other.sum_logits.len()
            && self.leaf_params.len() == other.leaf_params.len()
            && self.leaf_log_vars.as_ref().map(Vec::len)
                == other.leaf_log_vars.as_ref().map(Vec::len)
    }

    pub fn all_finite(&self) -> bool {
        self.parts().flatten().all(|v| v.is_finite())
    }

    /// Checks that the vectors fit `circuit` and every value is finite.
    pub fn check(&self, circuit: &Circuit) -> Result<()> {
        if self.sum_logits.len() != circuit.num_sum_logits() {
            return Err(Error::structure(format!(
                "sum blocks need {} logits, parameter set has {}",
                circuit.num_sum_logits(),
                self.sum_logits.len()
            )));
        }
        if self.leaf_params.len() != circuit.num_leaf_slots() {
            return Err(Error::structure(format!(
                "leaf blocks need {} parameters, parameter set has {}",
                circuit.num_leaf_slots(),
                self.leaf_params.len()
            )));
        }
        if let Some(lv) = &self.leaf_log_vars {
            if circuit.leaf_kind() != LeafKind::Gaussian {
                return Err(Error::structure(
                    "log-variances given for non-Gaussian leaves",
                ));
            }
            if lv.len() != circuit.num_leaf_slots() {
                return Err(Error::structure(format!(
                    "leaf blocks need {} log-variances, parameter set has {}",
                    circuit.num_leaf_slots(),
                    lv.len()
                )));
            }
        }
        if !self.all_finite() {
            return Err(Error::invalid("parameter set contains non-finite values"));
        }
        Ok(())
    }

    /// Effective log-variance of a leaf slot, after the variance floor.
    pub fn log_var(&self, slot: usize) -> f64 {
        match &self.leaf_log_vars {
            Some(lv) => lv[slot].max(MIN_VARIANCE.ln()),
            None => 0.0,
        }
    }

    /// Normalised weights of one sum node.
    pub fn weights(&self, circuit: &Circuit, block: usize, node: usize) -> Vec<f64> {
        let sb = &circuit.sum_blocks()[block];
        let start = sb.logit_offset + node * sb.num_inputs;
        let mut w = vec![0.0; sb.num_inputs];
        crate::logspace::softmax_into(&self.sum_logits[start..start + sb.num_inputs], &mut w);
        w
    }
}
