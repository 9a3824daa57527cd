#![allow(dead_code)]

use rand::Rng;
use ratspn_core::serde_model::model_to_string;
use ratspn_core::{
    random_region_graph, Circuit, CircuitShape, Encoding, LeafKind, ModelMeta, ParameterSet,
};
use ratspn_oracle::OracleModel;

/// Random circuit with at most `max_vars` variables and small block sizes.
pub fn random_circuit<R: Rng>(rng: &mut R, leaf: LeafKind, max_vars: usize) -> Circuit {
    let num_vars = rng.random_range(1..=max_vars);
    let graph = random_region_graph(
        num_vars,
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random(),
    )
    .unwrap();
    let shape = CircuitShape {
        classes: rng.random_range(1..=3),
        sums: rng.random_range(1..=3),
        leaves: rng.random_range(1..=3),
        leaf,
    };
    Circuit::new(graph, shape).unwrap()
}

/// The oracle's independent reading of the serialised model.
pub fn oracle_of(circuit: &Circuit, params: &ParameterSet) -> OracleModel {
    let text = model_to_string(circuit, params, &ModelMeta::default(), Encoding::Raw).unwrap();
    OracleModel::from_json(&text).unwrap()
}

/// Random binary assignment.
pub fn binary_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
