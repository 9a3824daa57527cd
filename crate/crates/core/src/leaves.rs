//! Input distributions.
//!
//! Leaves factorise over their scope, so marginalising a variable amounts to
//! dropping its term: a missing variable contributes `log 1 = 0`.

use ndarray::{Array2, ArrayView2};

use crate::circuit::{Circuit, LeafKind};
use crate::data::QueryMask;
use crate::error::{Error, Result};
use crate::logspace::softplus;
use crate::params::ParameterSet;
use crate::region_graph::VariableScope;

/// `0.5 · ln(2π)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

pub fn gaussian_log_density(x: f64, mean: f64, log_var: f64) -> f64 {
    let d = x - mean;
    -HALF_LN_2PI - 0.5 * log_var - 0.5 * d * d * (-log_var).exp()
}

/// `ln p(x)` for `x ∈ {0, 1}` with success probability `sigmoid(logit)`.
pub fn bernoulli_log_mass(x: f64, logit: f64) -> f64 {
    if x >= 0.5 {
        -softplus(-logit)
    } else {
        -softplus(logit)
    }
}

fn check_observed(x: &[f64], missing: &[bool], scope: &VariableScope) -> Result<()> {
    if x.len() != scope.len() || missing.len() != scope.len() {
        return Err(Error::invalid(format!(
            "leaf over {} variables given {} values and {} mask entries",
            scope.len(),
            x.len(),
            missing.len()
        )));
    }
    for (t, (&v, &m)) in x.iter().zip(missing).enumerate() {
        if !m && !v.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite value for observed variable {}",
                scope.as_slice()[t]
            )));
        }
    }
    Ok(())
}

/// Product of univariate Gaussians over a scope.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLeaf {
    pub scope: VariableScope,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianLeaf {
    pub fn unit_variance(scope: VariableScope, means: Vec<f64>) -> Self {
        let variances = vec![1.0; means.len()];
        GaussianLeaf {
            scope,
            means,
            variances,
        }
    }

    /// `x` and `missing` are indexed by scope position.
    pub fn log_density(&self, x: &[f64], missing: &[bool]) -> Result<f64> {
        check_observed(x, missing, &self.scope)?;
        Ok(x.iter()
            .zip(missing)
            .zip(self.means.iter().zip(&self.variances))
            .filter(|((_, &m), _)| !m)
            .map(|((&v, _), (&mu, &var))| gaussian_log_density(v, mu, var.ln()))
            .sum())
    }
}

/// Product of independent Bernoullis over a scope.
#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliLeaf {
    pub scope: VariableScope,
    pub success_logits: Vec<f64>,
}

impl BernoulliLeaf {
    pub fn log_density(&self, x: &[f64], missing: &[bool]) -> Result<f64> {
        check_observed(x, missing, &self.scope)?;
        let mut total = 0.0;
        for ((&v, &m), &l) in x.iter().zip(missing).zip(&self.success_logits) {
            if m {
                continue;
            }
            if v != 0.0 && v != 1.0 {
                return Err(Error::invalid(format!(
                    "Bernoulli leaf observed {v}, expected 0 or 1"
                )));
            }
            total += bernoulli_log_mass(v, l);
        }
        Ok(total)
    }
}

/// Scalar view of one Gaussian leaf node of a circuit.
pub fn gaussian_leaf(
    circuit: &Circuit,
    params: &ParameterSet,
    block: usize,
    node: usize,
) -> GaussianLeaf {
    let lb = &circuit.leaf_blocks()[block];
    let k = lb.scope.len();
    let start = lb.param_offset + node * k;
    GaussianLeaf {
        scope: lb.scope.clone(),
        means: params.leaf_params[start..start + k].to_vec(),
        variances: (start..start + k)
            .map(|s| params.log_var(s).exp())
            .collect(),
    }
}

/// Scalar view of one Bernoulli leaf node of a circuit.
pub fn bernoulli_leaf(
    circuit: &Circuit,
    params: &ParameterSet,
    block: usize,
    node: usize,
) -> BernoulliLeaf {
    let lb = &circuit.leaf_blocks()[block];
    let k = lb.scope.len();
    let start = lb.param_offset + node * k;
    BernoulliLeaf {
        scope: lb.scope.clone(),
        success_logits: params.leaf_params[start..start + k].to_vec(),
    }
}

/// Log-densities of every node of leaf block `block` for every sample:
/// a `samples × width` table. `batch` holds all circuit variables.
pub fn leaf_log_density_batch(
    circuit: &Circuit,
    params: &ParameterSet,
    block: usize,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
) -> Result<Array2<f64>> {
    let n = batch.nrows();
    if batch.ncols() != circuit.num_vars() {
        return Err(Error::invalid(format!(
            "batch has {} features, circuit has {} variables",
            batch.ncols(),
            circuit.num_vars()
        )));
    }
    if let Some(m) = mask {
        if m.dim() != batch.dim() {
            return Err(Error::invalid(format!(
                "mask shape {:?} does not match batch shape {:?}",
                m.dim(),
                batch.dim()
            )));
        }
    }
    let lb = &circuit.leaf_blocks()[block];
    let vars = lb.scope.as_slice();
    let k = vars.len();
    let mut out = Array2::zeros((n, lb.width));
    for (s, mut row) in out.rows_mut().into_iter().enumerate() {
        for (t, &v) in vars.iter().enumerate() {
            if mask.is_some_and(|m| m.is_missing(s, v)) {
                continue;
            }
            let x = batch[[s, v]];
            if !x.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite value at sample {s}, variable {v}"
                )));
            }
            match circuit.leaf_kind() {
                LeafKind::Gaussian => {
                    for (i, cell) in row.iter_mut().enumerate() {
                        let slot = lb.param_offset + i * k + t;
                        *cell +=
                            gaussian_log_density(x, params.leaf_params[slot], params.log_var(slot));
                    }
                }
                LeafKind::Bernoulli => {
                    if x != 0.0 && x != 1.0 {
                        return Err(Error::invalid(format!(
                            "Bernoulli leaves need binary data, sample {s} variable {v} is {x}"
                        )));
                    }
                    for (i, cell) in row.iter_mut().enumerate() {
                        *cell +=
                            bernoulli_log_mass(x, params.leaf_params[lb.param_offset + i * k + t]);
                    }
                }
            }
        }
    }
    Ok(out)
}
