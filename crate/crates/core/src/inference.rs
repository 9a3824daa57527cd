//! Batched log-domain evaluation and the queries built on it.
//!
//! Sum blocks are evaluated as `m + ln(exp(inputs - m) · Wᵀ)` where `m` is the
//! per-sample maximum over the block's inputs, so every exponent is `≤ 0`
//! and the weighted mixture reduces to one matrix product per block.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};

use crate::circuit::{Circuit, Layer, RegionOutput, SumInput};
use crate::data::QueryMask;
use crate::error::{Error, Result};
use crate::leaves::leaf_log_density_batch;
use crate::logspace::{log_sum_exp, softmax_into};
use crate::params::ParameterSet;

/// Rows evaluated together by the streaming entry points.
const CHUNK_ROWS: usize = 512;

/// Normalisation tolerance for class priors.
pub const PRIOR_TOLERANCE: f64 = 1e-9;

/// Which sum inputs survive sum-dropout: one `samples × num_inputs` table
/// per sum block. Dropped inputs evaluate to `-inf`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SumDropout {
    keep: Vec<Array2<bool>>,
}

impl SumDropout {
    pub fn new(circuit: &Circuit, samples: usize, keep: Vec<Array2<bool>>) -> Result<Self> {
        if keep.len() != circuit.sum_blocks().len() {
            return Err(Error::invalid(format!(
                "dropout covers {} sum blocks, circuit has {}",
                keep.len(),
                circuit.sum_blocks().len()
            )));
        }
        for (b, (k, sb)) in keep.iter().zip(circuit.sum_blocks()).enumerate() {
            if k.dim() != (samples, sb.num_inputs) {
                return Err(Error::invalid(format!(
                    "dropout table for sum block {b} is {:?}, expected {:?}",
                    k.dim(),
                    (samples, sb.num_inputs)
                )));
            }
        }
        Ok(SumDropout { keep })
    }

    pub fn keep(&self, block: usize) -> ArrayView2<'_, bool> {
        self.keep[block].view()
    }

    pub fn samples(&self) -> usize {
        self.keep.first().map_or(0, |k| k.nrows())
    }

    fn rows(&self, from: usize, to: usize) -> SumDropout {
        SumDropout {
            keep: self
                .keep
                .iter()
                .map(|k| k.slice(s![from..to, ..]).to_owned())
                .collect(),
        }
    }
}

/// Every intermediate table of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTables {
    pub(crate) leaf: Vec<Array2<f64>>,
    /// Per sum block: input log-values after dropout, `samples × num_inputs`.
    pub(crate) sum_inputs: Vec<Array2<f64>>,
    /// Per sum block: per-sample maximum over inputs.
    pub(crate) shift: Vec<Array1<f64>>,
    /// Per sum block: `exp(inputs - shift)`.
    pub(crate) scaled: Vec<Array2<f64>>,
    /// Per sum block: `scaled · Wᵀ`, i.e. `exp(output - shift)`.
    pub(crate) mix: Vec<Array2<f64>>,
    pub(crate) sum_out: Vec<Array2<f64>>,
    /// Per sum block: normalised weights, `width × num_inputs`.
    pub(crate) weights: Vec<Array2<f64>>,
    root: usize,
}

impl ForwardTables {
    /// Class-root log-values, `samples × classes`.
    pub fn roots(&self) -> ArrayView2<'_, f64> {
        self.sum_out[self.root].view()
    }

    pub fn leaf_table(&self, block: usize) -> ArrayView2<'_, f64> {
        self.leaf[block].view()
    }

    pub fn sum_table(&self, block: usize) -> ArrayView2<'_, f64> {
        self.sum_out[block].view()
    }

    pub fn sum_inputs(&self, block: usize) -> ArrayView2<'_, f64> {
        self.sum_inputs[block].view()
    }

    fn region_table<'a>(&'a self, circuit: &Circuit, region: usize) -> ArrayView2<'a, f64> {
        match circuit.region_output(region) {
            RegionOutput::Leaf(b) => self.leaf[b].view(),
            RegionOutput::Sum(b) => self.sum_out[b].view(),
        }
    }

    /// First block holding a non-finite value in row `sample`, for diagnostics.
    pub fn first_nonfinite(&self, circuit: &Circuit, sample: usize) -> Option<String> {
        for (b, t) in self.leaf.iter().enumerate() {
            if t.row(sample).iter().any(|v| !v.is_finite()) {
                let lb = &circuit.leaf_blocks()[b];
                return Some(format!(
                    "leaf block {b} (region {}, scope {})",
                    lb.region, lb.scope
                ));
            }
        }
        for layer in circuit.layers() {
            if let Layer::Sums(ids) = layer {
                for &b in ids {
                    if self.sum_out[b].row(sample).iter().any(|v| !v.is_finite()) {
                        let sb = &circuit.sum_blocks()[b];
                        return Some(format!(
                            "sum block {b} (region {}, scope {})",
                            sb.region, sb.scope
                        ));
                    }
                }
            }
        }
        None
    }
}

fn normalised_weights(circuit: &Circuit, params: &ParameterSet, block: usize) -> Array2<f64> {
    let sb = &circuit.sum_blocks()[block];
    let mut w = Array2::zeros((sb.width, sb.num_inputs));
    for (k, mut row) in w.rows_mut().into_iter().enumerate() {
        let start = sb.logit_offset + k * sb.num_inputs;
        softmax_into(
            &params.sum_logits[start..start + sb.num_inputs],
            row.as_slice_mut().expect("standard layout"),
        );
    }
    w
}

fn check_inputs(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    dropout: Option<&SumDropout>,
) -> Result<()> {
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
    if let Some(d) = dropout {
        if d.samples() != batch.nrows() {
            return Err(Error::invalid(format!(
                "dropout drawn for {} samples, batch has {}",
                d.samples(),
                batch.nrows()
            )));
        }
    }
    params.check(circuit)
}

/// Full forward pass retaining every intermediate table.
pub fn forward_tables(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    dropout: Option<&SumDropout>,
) -> Result<ForwardTables> {
    check_inputs(circuit, params, batch, mask, dropout)?;
    let n = batch.nrows();
    let sums = circuit.sum_blocks();
    let mut t = ForwardTables {
        leaf: Vec::with_capacity(circuit.leaf_blocks().len()),
        sum_inputs: sums
            .iter()
            .map(|sb| Array2::zeros((n, sb.num_inputs)))
            .collect(),
        shift: vec![Array1::zeros(0); sums.len()],
        scaled: vec![Array2::zeros((0, 0)); sums.len()],
        mix: vec![Array2::zeros((0, 0)); sums.len()],
        sum_out: vec![Array2::zeros((0, 0)); sums.len()],
        weights: (0..sums.len())
            .map(|b| normalised_weights(circuit, params, b))
            .collect(),
        root: circuit.root_block(),
    };

    for layer in circuit.layers() {
        match layer {
            Layer::Leaves(ids) => {
                for &b in ids {
                    t.leaf
                        .push(leaf_log_density_batch(circuit, params, b, batch, mask)?);
                }
            }
            Layer::Products(ids) => {
                for &p in ids {
                    let pb = &circuit.product_blocks()[p];
                    let left = t.region_table(circuit, pb.inputs[0]).to_owned();
                    let right = t.region_table(circuit, pb.inputs[1]).to_owned();
                    let [w1, w2] = pb.widths;
                    let mut dest = t.sum_inputs[pb.sum_block]
                        .slice_mut(s![.., pb.column_offset..pb.column_offset + w1 * w2]);
                    for ((mut out, l), r) in dest
                        .rows_mut()
                        .into_iter()
                        .zip(left.rows())
                        .zip(right.rows())
                    {
                        for i in 0..w1 {
                            for j in 0..w2 {
                                out[i * w2 + j] = l[i] + r[j];
                            }
                        }
                    }
                }
            }
            Layer::Sums(ids) => {
                for &b in ids {
                    let sb = &sums[b];
                    if let [SumInput::Leaves(l)] = sb.inputs[..] {
                        t.sum_inputs[b].assign(&t.leaf[l]);
                    }
                    if let Some(d) = dropout {
                        Zip::from(&mut t.sum_inputs[b])
                            .and(d.keep(b))
                            .for_each(|v, &keep| {
                                if !keep {
                                    *v = f64::NEG_INFINITY;
                                }
                            });
                    }
                    let input = &t.sum_inputs[b];
                    let shift: Array1<f64> = input
                        .rows()
                        .into_iter()
                        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                        .collect();
                    let mut scaled = input.clone();
                    for (mut row, &m) in scaled.rows_mut().into_iter().zip(&shift) {
                        if m.is_finite() {
                            row.mapv_inplace(|v| (v - m).exp());
                        } else {
                            row.fill(0.0);
                        }
                    }
                    let mix = scaled.dot(&t.weights[b].t());
                    let mut out = mix.mapv(f64::ln);
                    for (mut row, &m) in out.rows_mut().into_iter().zip(&shift) {
                        if m.is_finite() {
                            row += m;
                        } else {
                            row.fill(f64::NEG_INFINITY);
                        }
                    }
                    t.shift[b] = shift;
                    t.scaled[b] = scaled;
                    t.mix[b] = mix;
                    t.sum_out[b] = out;
                }
            }
        }
    }
    Ok(t)
}

/// Class-root log-values `ln S_c(x)` per sample (`samples × classes`),
/// streamed in row chunks without retaining intermediate tables.
pub fn forward_log(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    dropout: Option<&SumDropout>,
) -> Result<Array2<f64>> {
    check_inputs(circuit, params, batch, mask, dropout)?;
    let n = batch.nrows();
    if n <= CHUNK_ROWS {
        return Ok(forward_tables(circuit, params, batch, mask, dropout)?
            .roots()
            .to_owned());
    }
    let mut roots = Array2::zeros((n, circuit.num_classes()));
    for from in (0..n).step_by(CHUNK_ROWS) {
        let to = (from + CHUNK_ROWS).min(n);
        let rows: Vec<usize> = (from..to).collect();
        let m = mask.map(|m| m.select_rows(&rows));
        let d = dropout.map(|d| d.rows(from, to));
        let t = forward_tables(
            circuit,
            params,
            batch.slice(s![from..to, ..]),
            m.as_ref(),
            d.as_ref(),
        )?;
        roots.slice_mut(s![from..to, ..]).assign(&t.roots());
    }
    Ok(roots)
}

/// Class prior `ln p(c)`, normalised to within [`PRIOR_TOLERANCE`].
#[derive(Clone, Debug, PartialEq)]
pub struct LogPrior(Vec<f64>);

impl LogPrior {
    pub fn uniform(classes: usize) -> Self {
        LogPrior(vec![-(classes as f64).ln(); classes])
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::invalid(format!(
                "prior {probs:?} has entries outside [0, 1]"
            )));
        }
        Self::from_log(probs.iter().map(|p| p.ln()).collect())
    }

    pub fn from_log(log_probs: Vec<f64>) -> Result<Self> {
        if log_probs.is_empty() || log_probs.iter().any(|v| v.is_nan() || *v > 0.0) {
            return Err(Error::invalid(format!("invalid log prior {log_probs:?}")));
        }
        let total: f64 = log_probs.iter().map(|v| v.exp()).sum();
        if (total - 1.0).abs() > PRIOR_TOLERANCE {
            return Err(Error::invalid(format!("prior sums to {total}, not 1")));
        }
        Ok(LogPrior(log_probs))
    }

    /// Class frequencies of `labels`.
    pub fn empirical(labels: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("empirical prior needs at least one label"));
        }
        let mut counts = vec![0usize; classes];
        for &l in labels {
            if l >= classes {
                return Err(Error::invalid(format!(
                    "label {l} out of range for {classes} classes"
                )));
            }
            counts[l] += 1;
        }
        let n = labels.len() as f64;
        Ok(LogPrior(
            counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
        ))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `ln p(x, c) = ln S_c(x) + ln p(c)` from precomputed roots.
pub fn joint_from_roots(roots: ArrayView2<'_, f64>, prior: &LogPrior) -> Result<Array2<f64>> {
    if roots.ncols() != prior.len() {
        return Err(Error::invalid(format!(
            "prior has {} classes, roots have {}",
            prior.len(),
            roots.ncols()
        )));
    }
    let mut out = roots.to_owned();
    for mut row in out.rows_mut() {
        for (v, &lp) in row.iter_mut().zip(prior.as_slice()) {
            *v += lp;
        }
    }
    Ok(out)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn argmax_rows(table: ArrayView2<'_, f64>) -> Vec<usize> {
    table
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// `ln Σ_c exp(table[n, c])` per row.
pub fn logsumexp_rows(table: ArrayView2<'_, f64>) -> Array1<f64> {
    table
        .rows()
        .into_iter()
        .map(|r| log_sum_exp(&r.to_vec()))
        .collect()
}

pub fn log_joint(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    prior: &LogPrior,
) -> Result<Array2<f64>> {
    let roots = forward_log(circuit, params, batch, mask, None)?;
    joint_from_roots(roots.view(), prior)
}

/// Most probable class per sample under `prior`, marginalising masked features.
pub fn classify(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    prior: &LogPrior,
) -> Result<Vec<usize>> {
    Ok(argmax_rows(
        log_joint(circuit, params, batch, mask, prior)?.view(),
    ))
}

/// `ln p(x) = ln Σ_c p(c) S_c(x)` per sample.
pub fn log_marginal_input(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    prior: &LogPrior,
) -> Result<Array1<f64>> {
    Ok(logsumexp_rows(
        log_joint(circuit, params, batch, mask, prior)?.view(),
    ))
}

/// `ln p(x_q | x_e)` per sample, where `query[n, v]` / `evidence[n, v]` mark
/// membership of variable `v` in each set. Variables in neither set are
/// marginalised.
pub fn conditional_log(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    query: ArrayView2<'_, bool>,
    evidence: ArrayView2<'_, bool>,
    prior: &LogPrior,
) -> Result<Array1<f64>> {
    if query.dim() != batch.dim() || evidence.dim() != batch.dim() {
        return Err(Error::invalid(
            "query/evidence masks must match the batch shape",
        ));
    }
    if Zip::from(&query).and(&evidence).any(|&q, &e| q && e) {
        return Err(Error::invalid("query and evidence sets overlap"));
    }
    let both = QueryMask::new(
        Zip::from(&query)
            .and(&evidence)
            .map_collect(|&q, &e| !(q || e)),
    );
    let ev = QueryMask::new(evidence.mapv(|e| !e));
    let joint = log_marginal_input(circuit, params, batch, Some(&both), prior)?;
    let marg = log_marginal_input(circuit, params, batch, Some(&ev), prior)?;
    Ok(joint - marg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitShape, LeafKind};
    use crate::region_graph::random_region_graph;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(
        n: usize,
        d: usize,
        r: usize,
        classes: usize,
        leaf: LeafKind,
        seed: u64,
    ) -> (Circuit, ParameterSet) {
        let g = random_region_graph(n, d, r, seed).unwrap();
        let c = Circuit::new(
            g,
            CircuitShape {
                classes,
                sums: 3,
                leaves: 2,
                leaf,
            },
        )
        .unwrap();
        let p = ParameterSet::random(&c, false, &mut ChaCha8Rng::seed_from_u64(seed));
        (c, p)
    }

    #[test]
    fn single_sum_half_half() {
        // 2 vars, 1 root sum over 4 products; set up a 2-input view by
        // making two products carry each value.
        let (c, mut p) = build(2, 1, 1, 1, LeafKind::Bernoulli, 0);
        // Leaves per region: node 0 -> P(x=1)=0.2 / node 1 -> P(x=1)=0.4 on the
        // first region; the second region's leaves are certain-ish ones.
        let lb = c.leaf_blocks();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        p.leaf_params[lb[0].param_offset] = logit(0.2);
        p.leaf_params[lb[0].param_offset + 1] = logit(0.4);
        p.leaf_params[lb[1].param_offset] = 0.0;
        p.leaf_params[lb[1].param_offset + 1] = 0.0;
        // Weights: product (0,0) and (1,0) with 0.5 each, others ~0.
        p.sum_logits = vec![0.0, -800.0, 0.0, -800.0];
        let mut missing = Array2::from_elem((1, 2), false);
        let second_var = lb[1].scope.as_slice()[0];
        missing[[0, second_var]] = true;
        let mut x = Array2::zeros((1, 2));
        x[[0, lb[0].scope.as_slice()[0]]] = 1.0;
        let roots = forward_log(&c, &p, x.view(), Some(&QueryMask::new(missing)), None).unwrap();
        assert!((roots[[0, 0]] - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_missing_gives_zero() {
        let (c, p) = build(9, 2, 3, 3, LeafKind::Gaussian, 1);
        let x = Array2::from_elem((4, 9), 0.5);
        let roots =
            forward_log(&c, &p, x.view(), Some(&QueryMask::all_missing(4, 9)), None).unwrap();
        assert!(roots.iter().all(|v| v.abs() < 1e-12));
        let prior = LogPrior::uniform(3);
        let pred = classify(
            &c,
            &p,
            x.view(),
            Some(&QueryMask::all_missing(4, 9)),
            &prior,
        )
        .unwrap();
        // roots are only zero up to rounding, so the tie-break is checked on exact ties below
        assert_eq!(pred.len(), 4);
        assert_eq!(argmax_rows(array![[0.0, 0.0, 0.0]].view()), vec![0]);
        let lm = log_marginal_input(
            &c,
            &p,
            x.view(),
            Some(&QueryMask::all_missing(4, 9)),
            &prior,
        )
        .unwrap();
        assert!(lm.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn prior_handling() {
        let roots = array![[-1.0, -1.0], [-5.0, -3.0]];
        let u = joint_from_roots(roots.view(), &LogPrior::uniform(2)).unwrap();
        assert!((u[[0, 0]] - (-1.0 - 2f64.ln())).abs() < 1e-15);
        let d =
            joint_from_roots(roots.view(), &LogPrior::from_probs(&[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(d[[0, 1]], f64::NEG_INFINITY);
        let r = -2.5;
        let pr = LogPrior::from_probs(&[0.9, 0.1]).unwrap();
        let j = joint_from_roots(array![[r, r]].view(), &pr).unwrap();
        assert!((j[[0, 0]] - (r + 0.9f64.ln())).abs() < 1e-15);
        assert!((j[[0, 1]] - (r + 0.1f64.ln())).abs() < 1e-15);
        assert_eq!(argmax_rows(roots.view()), vec![0, 1]);
        assert!(LogPrior::from_probs(&[0.5, 0.6]).is_err());
        assert!(joint_from_roots(roots.view(), &LogPrior::uniform(3)).is_err());
        let e = LogPrior::empirical(&[0, 0, 1, 0], 2).unwrap();
        assert!((e.as_slice()[0] - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn marginal_over_classes() {
        let roots = array![[0.2f64.ln(), 0.4f64.ln()], [-7.0, -7.0]];
        let j = joint_from_roots(roots.view(), &LogPrior::uniform(2)).unwrap();
        let m = logsumexp_rows(j.view());
        assert!((m[0] - 0.3f64.ln()).abs() < 1e-15);
        assert!((m[1] + 7.0).abs() < 1e-15);
    }

    #[test]
    fn chunked_equals_whole() {
        let (c, p) = build(6, 2, 2, 2, LeafKind::Gaussian, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_simple_fn((1100, 6), || rand::Rng::random::<f64>(&mut rng));
        let streamed = forward_log(&c, &p, x.view(), None, None).unwrap();
        let whole = forward_tables(&c, &p, x.view(), None, None).unwrap();
        assert_eq!(streamed, whole.roots());
    }

    #[test]
    fn shape_errors() {
        let (c, p) = build(6, 2, 2, 2, LeafKind::Gaussian, 5);
        let x = Array2::zeros((2, 5));
        assert!(matches!(
            forward_log(&c, &p, x.view(), None, None),
            Err(Error::InvalidInput(_))
        ));
        let x = Array2::zeros((2, 6));
        let m = QueryMask::observed(3, 6);
        assert!(forward_log(&c, &p, x.view(), Some(&m), None).is_err());
    }

    #[test]
    fn shared_leaf_factor_shifts_every_root() {
        // With every leaf mean of variable v equal, each leaf's factor for v is
        // the same constant k, so observing v instead of marginalising it
        // shifts every root by exactly k.
        let (c, mut p) = build(5, 2, 3, 2, LeafKind::Gaussian, 9);
        let v = 3;
        for lb in c.leaf_blocks() {
            if let Ok(t) = lb.scope.as_slice().binary_search(&v) {
                for node in 0..lb.width {
                    p.leaf_params[lb.param_offset + node * lb.scope.len() + t] = 0.25;
                }
            }
        }
        let x = array![[0.1, 0.2, -0.4, 1.7, 0.0]];
        let observed = forward_log(&c, &p, x.view(), None, None).unwrap();
        let mut missing = Array2::from_elem((1, 5), false);
        missing[[0, v]] = true;
        let masked = forward_log(&c, &p, x.view(), Some(&QueryMask::new(missing)), None).unwrap();
        let k = crate::leaves::gaussian_log_density(1.7, 0.25, 0.0);
        for (o, m) in observed.iter().zip(&masked) {
            assert!((o - m - k).abs() < 1e-10, "{o} {m} {k}");
        }
    }

    #[test]
    fn conditional_edge_cases() {
        let (c, p) = build(4, 2, 2, 2, LeafKind::Gaussian, 2);
        let x = array![[0.3, -0.1, 0.8, 0.2]];
        let prior = LogPrior::uniform(2);
        let none = Array2::from_elem((1, 4), false);
        let q = array![[true, false, true, false]];
        let cond = conditional_log(&c, &p, x.view(), q.view(), none.view(), &prior).unwrap();
        let marg = log_marginal_input(
            &c,
            &p,
            x.view(),
            Some(&QueryMask::new(q.mapv(|v| !v))),
            &prior,
        )
        .unwrap();
        assert!((cond[0] - marg[0]).abs() < 1e-12);
        let e = array![[false, true, false, false]];
        let empty = conditional_log(&c, &p, x.view(), none.view(), e.view(), &prior).unwrap();
        assert!(empty[0].abs() < 1e-12);
        assert!(conditional_log(&c, &p, x.view(), q.view(), q.view(), &prior).is_err());
    }

    #[test]
    fn dropout_keep_one_is_single_term() {
        let (c, p) = build(4, 1, 1, 1, LeafKind::Gaussian, 4);
        let x = array![[0.3, -0.1, 0.8, 0.2]];
        let sb = &c.sum_blocks()[c.root_block()];
        let mut keep = Array2::from_elem((1, sb.num_inputs), false);
        keep[[0, 2]] = true;
        let d = SumDropout::new(&c, 1, vec![keep]).unwrap();
        let t = forward_tables(&c, &p, x.view(), None, Some(&d)).unwrap();
        let lw = p.weights(&c, c.root_block(), 0)[2].ln();
        let undropped = forward_tables(&c, &p, x.view(), None, None).unwrap();
        let product = undropped.sum_inputs(c.root_block())[[0, 2]];
        assert!((t.roots()[[0, 0]] - (lw + product)).abs() < 1e-12);
        assert!(SumDropout::new(&c, 2, vec![Array2::from_elem((1, sb.num_inputs), true)]).is_err());
    }

    #[test]
    fn fully_dropped_sum_is_neg_infinity_not_nan() {
        let (c, p) = build(4, 1, 1, 1, LeafKind::Gaussian, 4);
        let x = array![[0.3, -0.1, 0.8, 0.2]];
        let sb = &c.sum_blocks()[c.root_block()];
        let d = SumDropout::new(&c, 1, vec![Array2::from_elem((1, sb.num_inputs), false)]).unwrap();
        let r = forward_log(&c, &p, x.view(), None, Some(&d)).unwrap();
        assert_eq!(r[[0, 0]], f64::NEG_INFINITY);
    }
}
