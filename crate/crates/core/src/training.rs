//! Hybrid generative/discriminative training.
//!
//! The objective is `O = λ·CE + (1 − λ)·nLL` where `CE` is the cross-entropy
//! of the class posterior `S_y / Σ_c S_c` and `nLL` the negative
//! log-likelihood of the labelled root, normalised by sample and variable
//! count. Gradients are derived by hand and propagated in reverse layer
//! order over the tables retained by [`forward_tables`].

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, Layer, LeafKind, RegionOutput, SumInput};
use crate::data::{batch_indices, Dataset, QueryMask};
use crate::error::{Error, Result};
use crate::inference::{argmax_rows, forward_log, forward_tables, ForwardTables, SumDropout};
use crate::logspace::{log_sum_exp, sigmoid};
use crate::params::{GradientSet, ParameterSet, MIN_VARIANCE};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of cross-entropy against normalised negative log-likelihood.
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability that an input feature is kept (not marginalised).
    pub keep_input: f64,
    /// Probability that a sum input (product) is kept.
    pub keep_sum: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            epochs: 20,
            batch_size: 100,
            keep_input: 1.0,
            keep_sum: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        for (name, p) in [
            ("input keep rate", self.keep_input),
            ("sum keep rate", self.keep_sum),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("{name} {p} not in (0, 1]")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} {b} not in [0, 1)")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} not in [0, 1]")));
    }
    Ok(())
}

fn check_labels(roots: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if labels.len() != roots.nrows() {
        return Err(Error::invalid(format!(
            "{} labels for {} samples",
            labels.len(),
            roots.nrows()
        )));
    }
    if roots.nrows() == 0 {
        return Err(Error::invalid("objective needs at least one sample"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= roots.ncols()) {
        return Err(Error::invalid(format!(
            "label {l} out of range for {} classes",
            roots.ncols()
        )));
    }
    Ok(())
}

/// `−(1/N) Σ_n [ln S_{y_n} − ln Σ_c S_c]`.
pub fn cross_entropy(roots: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    check_labels(roots, labels)?;
    let mut total = 0.0;
    for (row, &y) in roots.rows().into_iter().zip(labels) {
        let lse = log_sum_exp(&row.to_vec());
        if row[y] == f64::INFINITY || lse == f64::INFINITY {
            continue;
        }
        total += lse - row[y];
    }
    Ok(total / roots.nrows() as f64)
}

/// `−(1/(N·|X|)) Σ_n ln S_{y_n}`.
pub fn neg_log_likelihood(
    roots: ArrayView2<'_, f64>,
    labels: &[usize],
    num_vars: usize,
) -> Result<f64> {
    check_labels(roots, labels)?;
    if num_vars == 0 {
        return Err(Error::invalid("num_vars must be positive"));
    }
    let total: f64 = roots
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(r, &y)| r[y])
        .sum();
    Ok(-total / (roots.nrows() * num_vars) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    pub objective: f64,
    pub cross_entropy: f64,
    pub nll: f64,
}

/// Combines the two terms. At `λ ∈ {0, 1}` the unused term is not touched,
/// so an infinite `CE` cannot poison a pure likelihood objective.
pub fn combine(lambda: f64, cross_entropy: f64, nll: f64) -> f64 {
    if lambda == 1.0 {
        cross_entropy
    } else if lambda == 0.0 {
        nll
    } else {
        lambda * cross_entropy + (1.0 - lambda) * nll
    }
}

pub fn hybrid_objective(
    roots: ArrayView2<'_, f64>,
    labels: &[usize],
    num_vars: usize,
    lambda: f64,
) -> Result<ObjectiveValue> {
    check_lambda(lambda)?;
    let ce = cross_entropy(roots, labels)?;
    let nll = neg_log_likelihood(roots, labels, num_vars)?;
    Ok(ObjectiveValue {
        objective: combine(lambda, ce, nll),
        cross_entropy: ce,
        nll,
    })
}

/// `∂O/∂ ln S_c(x_n)`.
fn root_gradient(
    roots: ArrayView2<'_, f64>,
    labels: &[usize],
    num_vars: usize,
    lambda: f64,
) -> Array2<f64> {
    let n = roots.nrows() as f64;
    let mut g = Array2::zeros(roots.raw_dim());
    for ((mut gr, r), &y) in g.rows_mut().into_iter().zip(roots.rows()).zip(labels) {
        if lambda > 0.0 {
            let lse = log_sum_exp(&r.to_vec());
            for (c, v) in gr.iter_mut().enumerate() {
                let post = (r[c] - lse).exp();
                let hit = if c == y { 1.0 } else { 0.0 };
                *v += -lambda * (hit - post) / n;
            }
        }
        if lambda < 1.0 {
            gr[y] += -(1.0 - lambda) / (n * num_vars as f64);
        }
    }
    g
}

/// Gradient of the hybrid objective with respect to every parameter, plus
/// the objective value at `params`.
#[allow(clippy::too_many_arguments)]
pub fn backward_gradients(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    labels: &[usize],
    mask: Option<&QueryMask>,
    dropout: Option<&SumDropout>,
    lambda: f64,
) -> Result<(GradientSet, ObjectiveValue)> {
    check_lambda(lambda)?;
    let tables = forward_tables(circuit, params, batch, mask, dropout)?;
    let value = hybrid_objective(tables.roots(), labels, circuit.num_vars(), lambda)?;
    if !value.objective.is_finite() {
        let culprit = (0..batch.nrows())
            .find_map(|n| {
                tables
                    .first_nonfinite(circuit, n)
                    .map(|b| format!("sample {n}: {b}"))
            })
            .unwrap_or_else(|| "no block underflowed; the root posterior saturated".into());
        return Err(Error::Numeric(format!(
            "objective is {} ({culprit})",
            value.objective
        )));
    }
    let seed = root_gradient(tables.roots(), labels, circuit.num_vars(), lambda);
    let grads = backpropagate(circuit, params, batch, mask, &tables, seed);
    Ok((grads, value))
}

/// Reverse pass from `∂O/∂roots`.
fn backpropagate(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    t: &ForwardTables,
    root_grad: Array2<f64>,
) -> GradientSet {
    let n = batch.nrows();
    let mut grads = params.zeros_like();
    let sums = circuit.sum_blocks();
    let mut sum_out_grad: Vec<Option<Array2<f64>>> = vec![None; sums.len()];
    let mut sum_in_grad: Vec<Option<Array2<f64>>> = vec![None; sums.len()];
    let mut leaf_grad: Vec<Option<Array2<f64>>> = vec![None; circuit.leaf_blocks().len()];
    sum_out_grad[circuit.root_block()] = Some(root_grad);

    fn accumulate(slot: &mut Option<Array2<f64>>, delta: ArrayView2<'_, f64>) {
        match slot {
            Some(g) => *g += &delta,
            None => *slot = Some(delta.to_owned()),
        }
    }

    for layer in circuit.layers().iter().rev() {
        match layer {
            Layer::Sums(ids) => {
                for &b in ids {
                    let Some(g_out) = sum_out_grad[b].take() else {
                        continue;
                    };
                    let sb = &sums[b];
                    let w = &t.weights[b];
                    // a[n,k] = g_out[n,k] / mix[n,k]; zero where the node is -inf.
                    let a = Zip::from(&g_out).and(&t.mix[b]).map_collect(|&g, &m| {
                        if g == 0.0 || m == 0.0 {
                            0.0
                        } else {
                            g / m
                        }
                    });
                    // ∂/∂inputs: scaled ⊙ (a · W)
                    let mut g_in = a.dot(w);
                    g_in *= &t.scaled[b];
                    // ∂/∂W: aᵀ · scaled, then through the softmax.
                    let g_w = a.t().dot(&t.scaled[b]);
                    let logits = &mut grads.sum_logits
                        [sb.logit_offset..sb.logit_offset + sb.width * sb.num_inputs];
                    for (k, (gw_row, w_row)) in g_w.rows().into_iter().zip(w.rows()).enumerate() {
                        let dot: f64 = gw_row.iter().zip(w_row).map(|(g, w)| g * w).sum();
                        let out = &mut logits[k * sb.num_inputs..(k + 1) * sb.num_inputs];
                        for ((o, &g), &wj) in out.iter_mut().zip(gw_row).zip(w_row) {
                            *o = wj * (g - dot);
                        }
                    }
                    if let [SumInput::Leaves(l)] = sb.inputs[..] {
                        accumulate(&mut leaf_grad[l], g_in.view());
                    } else {
                        sum_in_grad[b] = Some(g_in);
                    }
                }
            }
            Layer::Products(ids) => {
                for &p in ids {
                    let pb = &circuit.product_blocks()[p];
                    let Some(g_in) = sum_in_grad[pb.sum_block].as_ref() else {
                        continue;
                    };
                    let [w1, w2] = pb.widths;
                    let g = g_in.slice(s![.., pb.column_offset..pb.column_offset + w1 * w2]);
                    let cube = g
                        .to_owned()
                        .into_shape_with_order((n, w1, w2))
                        .expect("contiguous product block");
                    let g_left = cube.sum_axis(Axis(2));
                    let g_right = cube.sum_axis(Axis(1));
                    for (region, delta) in [(pb.inputs[0], g_left), (pb.inputs[1], g_right)] {
                        match circuit.region_output(region) {
                            RegionOutput::Leaf(l) => accumulate(&mut leaf_grad[l], delta.view()),
                            RegionOutput::Sum(s) => accumulate(&mut sum_out_grad[s], delta.view()),
                        }
                    }
                }
            }
            Layer::Leaves(ids) => {
                for &l in ids {
                    let Some(g) = leaf_grad[l].as_ref() else {
                        continue;
                    };
                    leaf_parameter_gradients(circuit, params, batch, mask, l, g.view(), &mut grads);
                }
            }
        }
    }
    grads
}

fn leaf_parameter_gradients(
    circuit: &Circuit,
    params: &ParameterSet,
    batch: ArrayView2<'_, f64>,
    mask: Option<&QueryMask>,
    block: usize,
    g: ArrayView2<'_, f64>,
    grads: &mut GradientSet,
) {
    let lb = &circuit.leaf_blocks()[block];
    let vars = lb.scope.as_slice();
    let k = vars.len();
    let floor = MIN_VARIANCE.ln();
    for (s, g_row) in g.rows().into_iter().enumerate() {
        for (t, &v) in vars.iter().enumerate() {
            if mask.is_some_and(|m| m.is_missing(s, v)) {
                continue;
            }
            let x = batch[[s, v]];
            for (i, &gi) in g_row.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                let slot = lb.param_offset + i * k + t;
                let theta = params.leaf_params[slot];
                match circuit.leaf_kind() {
                    LeafKind::Gaussian => {
                        let lv = params.log_var(slot);
                        let inv_var = (-lv).exp();
                        let d = x - theta;
                        grads.leaf_params[slot] += gi * d * inv_var;
                        if let (Some(glv), Some(raw)) =
                            (grads.leaf_log_vars.as_mut(), params.leaf_log_vars.as_ref())
                        {
                            if raw[slot] > floor {
                                glv[slot] += gi * (-0.5 + 0.5 * d * d * inv_var);
                            }
                        }
                    }
                    LeafKind::Bernoulli => {
                        grads.leaf_params[slot] += gi * (x - sigmoid(theta));
                    }
                }
            }
        }
    }
}

/// Input dropout: each (sample, variable) is kept with probability
/// `keep_input` and marginalised otherwise. Kept values are not rescaled.
pub fn sample_input_dropout_mask<R: Rng>(
    num_vars: usize,
    batch_size: usize,
    keep_input: f64,
    rng: &mut R,
) -> QueryMask {
    if keep_input >= 1.0 {
        return QueryMask::observed(batch_size, num_vars);
    }
    QueryMask::new(Array2::from_shape_simple_fn((batch_size, num_vars), || {
        rng.random::<f64>() >= keep_input
    }))
}

/// Sum dropout: per sample and per region, each product feeding the
/// region's sums is kept with probability `keep_sum`, shared by all sums of
/// the region. A row with nothing kept is redrawn.
pub fn sample_sum_dropout_mask<R: Rng>(
    circuit: &Circuit,
    keep_sum: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<SumDropout> {
    let keep = circuit
        .sum_blocks()
        .iter()
        .map(|sb| {
            let mut k = Array2::from_elem((batch_size, sb.num_inputs), true);
            if keep_sum < 1.0 {
                for mut row in k.rows_mut() {
                    loop {
                        row.mapv_inplace(|_| rng.random::<f64>() < keep_sum);
                        if row.iter().any(|&x| x) {
                            break;
                        }
                    }
                }
            }
            k
        })
        .collect();
    SumDropout::new(circuit, batch_size, keep)
}

/// First and second moment estimates of Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: GradientSet,
    pub second: GradientSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        AdamState {
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &GradientSet,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.first) {
        return Err(Error::invalid(
            "parameter, gradient and optimizer layouts differ",
        ));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let (b1, b2, lr, eps) = (
        config.beta1,
        config.beta2,
        config.learning_rate,
        config.epsilon,
    );
    for (((p, g), m), v) in params
        .parts_mut()
        .zip(grads.parts())
        .zip(state.first.parts_mut())
        .zip(state.second.parts_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Objective terms and accuracy of a model on a labelled dataset, with
/// dropout disabled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub cross_entropy: f64,
    pub nll: f64,
    pub accuracy: f64,
}

pub fn evaluate(
    circuit: &Circuit,
    params: &ParameterSet,
    data: &Dataset,
    mask: Option<&QueryMask>,
    lambda: f64,
) -> Result<Evaluation> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::invalid("evaluation needs a labelled dataset"))?;
    if data.is_empty() {
        return Err(Error::invalid("evaluation dataset is empty"));
    }
    let roots = forward_log(circuit, params, data.features(), mask, None)?;
    let value = hybrid_objective(roots.view(), labels, circuit.num_vars(), lambda)?;
    let pred = argmax_rows(roots.view());
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(Evaluation {
        objective: value.objective,
        cross_entropy: value.cross_entropy,
        nll: value.nll,
        accuracy: hits as f64 / labels.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: Evaluation,
    pub valid: Option<Evaluation>,
}

/// Mini-batch Adam over the hybrid objective with probabilistic dropout.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig, params: &ParameterSet) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            adam: AdamState::new(params),
            config,
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// One pass over `data` in shuffled mini-batches with fresh dropout
    /// masks per batch. Returns the mean batch objective.
    pub fn run_epoch(
        &mut self,
        circuit: &Circuit,
        params: &mut ParameterSet,
        data: &Dataset,
    ) -> Result<f64> {
        let labels = data
            .labels()
            .ok_or_else(|| Error::invalid("training needs a labelled dataset"))?;
        if data.num_vars() != circuit.num_vars() {
            return Err(Error::invalid(format!(
                "dataset has {} features, circuit has {} variables",
                data.num_vars(),
                circuit.num_vars()
            )));
        }
        let cfg = self.config.clone();
        let order = batch_indices(data.len(), cfg.batch_size, self.rng.random())?;
        let mut total = 0.0;
        for rows in &order {
            let x = data.features().select(Axis(0), rows);
            let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
            let input = (cfg.keep_input < 1.0).then(|| {
                sample_input_dropout_mask(
                    circuit.num_vars(),
                    rows.len(),
                    cfg.keep_input,
                    &mut self.rng,
                )
            });
            let sum = if cfg.keep_sum < 1.0 {
                Some(sample_sum_dropout_mask(
                    circuit,
                    cfg.keep_sum,
                    rows.len(),
                    &mut self.rng,
                )?)
            } else {
                None
            };
            let (grads, value) = backward_gradients(
                circuit,
                params,
                x.view(),
                &y,
                input.as_ref(),
                sum.as_ref(),
                cfg.lambda,
            )?;
            adam_step(params, &grads, &mut self.adam, &cfg)?;
            total += value.objective * rows.len() as f64;
        }
        self.epochs_done += 1;
        Ok(total / data.len().max(1) as f64)
    }
}

/// Trains for `config.epochs` epochs, recording metrics after each one.
/// Passing already-trained parameters post-trains them (warm start).
pub fn train(
    circuit: &Circuit,
    params: &ParameterSet,
    train_data: &Dataset,
    valid_data: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(ParameterSet, Vec<EpochMetrics>)> {
    let mut params = params.clone();
    params.check(circuit)?;
    let mut trainer = Trainer::new(config.clone(), &params)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        trainer.run_epoch(circuit, &mut params, train_data)?;
        let train = evaluate(circuit, &params, train_data, None, config.lambda)?;
        let valid = valid_data
            .map(|v| evaluate(circuit, &params, v, None, config.lambda))
            .transpose()?;
        history.push(EpochMetrics {
            epoch,
            train,
            valid,
        });
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitShape;
    use crate::region_graph::random_region_graph;
    use ndarray::array;

    #[test]
    fn cross_entropy_cases() {
        let eq = array![[-2.0, -2.0, -2.0], [5.0, 5.0, 5.0]];
        assert!((cross_entropy(eq.view(), &[0, 2]).unwrap() - 3f64.ln()).abs() < 1e-12);
        let k = 17.3;
        let r = array![[0.9f64.ln() + k, 0.1f64.ln() + k]];
        assert!((cross_entropy(r.view(), &[0]).unwrap() + 0.9f64.ln()).abs() < 1e-12);
        let sure = array![[0.0, f64::NEG_INFINITY]];
        assert_eq!(cross_entropy(sure.view(), &[0]).unwrap(), 0.0);
        assert!(cross_entropy(eq.view(), &[0, 3]).is_err());
    }

    #[test]
    fn nll_cases() {
        let r = array![[-8.0, 0.0], [1.0, -4.0]];
        assert!((neg_log_likelihood(r.view(), &[0, 1], 4).unwrap() - 1.5).abs() < 1e-15);
        assert!((neg_log_likelihood(r.view(), &[0, 1], 8).unwrap() - 0.75).abs() < 1e-15);
        let zero = array![[0.0], [0.0]];
        assert_eq!(neg_log_likelihood(zero.view(), &[0, 0], 3).unwrap(), 0.0);
    }

    #[test]
    fn hybrid_endpoints() {
        let r = array![[-3.0, -1.0], [-2.0, -6.0]];
        let y = [1, 1];
        let ce = cross_entropy(r.view(), &y).unwrap();
        let nll = neg_log_likelihood(r.view(), &y, 5).unwrap();
        assert_eq!(
            hybrid_objective(r.view(), &y, 5, 1.0).unwrap().objective,
            ce
        );
        assert_eq!(
            hybrid_objective(r.view(), &y, 5, 0.0).unwrap().objective,
            nll
        );
        assert_eq!(combine(0.5, 2.0, 1.0), 1.5);
        assert!(hybrid_objective(r.view(), &y, 5, 1.5).is_err());
        assert!(hybrid_objective(r.view(), &y, 5, -0.1).is_err());
    }

    fn small() -> (Circuit, ParameterSet) {
        let g = random_region_graph(4, 1, 2, 1).unwrap();
        let c = Circuit::new(
            g,
            CircuitShape {
                classes: 2,
                sums: 2,
                leaves: 2,
                leaf: LeafKind::Gaussian,
            },
        )
        .unwrap();
        let p = ParameterSet::random(&c, true, &mut ChaCha8Rng::seed_from_u64(3));
        (c, p)
    }

    #[test]
    fn logit_gradients_sum_to_zero_per_node() {
        let (c, p) = small();
        let x = array![[0.1, 0.5, -0.3, 1.2], [0.9, -0.5, 0.3, 0.0]];
        let (g, _) = backward_gradients(&c, &p, x.view(), &[0, 1], None, None, 0.5).unwrap();
        for sb in c.sum_blocks() {
            for k in 0..sb.width {
                let start = sb.logit_offset + k * sb.num_inputs;
                let s: f64 = g.sum_logits[start..start + sb.num_inputs].iter().sum();
                assert!(s.abs() < 1e-10, "{s}");
            }
        }
    }

    #[test]
    fn fully_masked_likelihood_has_zero_leaf_gradient() {
        let (c, p) = small();
        let x = array![[0.1, 0.5, -0.3, 1.2]];
        let m = QueryMask::all_missing(1, 4);
        let (g, v) = backward_gradients(&c, &p, x.view(), &[1], Some(&m), None, 0.0).unwrap();
        assert!(v.objective.abs() < 1e-12);
        assert!(g.leaf_params.iter().all(|&d| d == 0.0));
        assert!(g.leaf_log_vars.unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn input_dropout_sampler() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_input_dropout_mask(5, 3, 1.0, &mut rng).count_missing(),
            0
        );
        let m = sample_input_dropout_mask(1000, 100, 0.3, &mut rng);
        let kept = 1.0 - m.count_missing() as f64 / 1e5;
        assert!((kept - 0.3).abs() < 0.01, "{kept}");
        let a = sample_input_dropout_mask(10, 10, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_input_dropout_mask(10, 10, 0.5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn sum_dropout_sampler_keeps_one() {
        let g = random_region_graph(4, 1, 1, 0).unwrap();
        let c = Circuit::new(
            g,
            CircuitShape {
                classes: 1,
                sums: 1,
                leaves: 2,
                leaf: LeafKind::Gaussian,
            },
        )
        .unwrap();
        assert_eq!(c.sum_blocks()[0].num_inputs, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let all = sample_sum_dropout_mask(&c, 1.0, 7, &mut rng).unwrap();
        assert!(all.keep(0).iter().all(|&k| k));
        let d = sample_sum_dropout_mask(&c, 0.5, 20_000, &mut rng).unwrap();
        let per_row: Vec<usize> = d
            .keep(0)
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&k| k).count())
            .collect();
        assert!(per_row.iter().all(|&k| k >= 1));
        // Binomial(4, 1/2) conditioned on ≥ 1: mean 2 / (1 − 1/16) = 32/15.
        let mean = per_row.iter().sum::<usize>() as f64 / per_row.len() as f64;
        assert!((mean - 32.0 / 15.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let (c, p) = small();
        let cfg = TrainConfig::default();
        let mut grads = p.zeros_like();
        grads.sum_logits[0] = 0.37;
        grads.leaf_params[0] = -2.0;
        let mut q = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut q, &grads, &mut st, &cfg).unwrap();
        assert_eq!(st.step, 1);
        let d0 = q.sum_logits[0] - p.sum_logits[0];
        assert!((d0 + 1e-3 * 0.37 / (0.37 + 1e-8)).abs() < 1e-15);
        assert!((q.leaf_params[0] - p.leaf_params[0] - 1e-3 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(q.sum_logits[1], p.sum_logits[1]);

        let mut r = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut r, &p.zeros_like(), &mut st, &cfg).unwrap();
        assert_eq!(r, p);
        assert_eq!(st.step, 1);
        let _ = c;

        let mut bad = p.zeros_like();
        bad.leaf_params[1] = f64::NAN;
        assert!(matches!(
            adam_step(&mut r, &bad, &mut st, &cfg),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                lambda: 1.5,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                keep_input: 0.0,
                ..Default::default()
            },
            TrainConfig {
                keep_sum: 1.2,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (c, p) = small();
        let d = Dataset::new(array![[0.0, 1.0, 2.0, 3.0]], Some(vec![1])).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (q, hist) = train(&c, &p, &d, None, &cfg).unwrap();
        assert_eq!(q, p);
        assert!(hist.is_empty());
    }

    #[test]
    fn infinite_objective_names_block() {
        let (c, p) = small();
        let x = array![[0.1, 0.5, -0.3, 1.2]];
        let sb = &c.sum_blocks()[c.root_block()];
        let keep: Vec<Array2<bool>> = c
            .sum_blocks()
            .iter()
            .map(|b| Array2::from_elem((1, b.num_inputs), !std::ptr::eq(b, sb)))
            .collect();
        let d = SumDropout::new(&c, 1, keep).unwrap();
        let e = backward_gradients(&c, &p, x.view(), &[0], None, Some(&d), 0.0).unwrap_err();
        assert!(
            matches!(e, Error::Numeric(ref m) if m.contains("sum block")),
            "{e}"
        );
    }
}
