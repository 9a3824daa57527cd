//! Shared fixtures for the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratspn_core::{random_region_graph, Circuit, CircuitShape, LeafKind, ParameterSet};

/// Circuit size of a benchmark case.
#[derive(Clone, Copy, Debug)]
pub struct Size {
    pub num_vars: usize,
    pub depth: usize,
    pub repetitions: usize,
    pub sums: usize,
    pub leaves: usize,
    pub classes: usize,
}

impl Size {
    /// 8×8 digit images with the default command-line structure.
    pub const DIGITS: Size = Size {
        num_vars: 64,
        depth: 2,
        repetitions: 8,
        sums: 8,
        leaves: 8,
        classes: 10,
    };

    pub const SMALL: Size = Size {
        num_vars: 16,
        depth: 2,
        repetitions: 2,
        sums: 4,
        leaves: 4,
        classes: 2,
    };
}

/// A circuit, its parameters and one labelled batch of uniform inputs.
pub struct Fixture {
    pub circuit: Circuit,
    pub params: ParameterSet,
    pub batch: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Fixture {
    pub fn new(size: Size, samples: usize, seed: u64) -> Self {
        let graph = random_region_graph(size.num_vars, size.depth, size.repetitions, seed)
            .expect("valid benchmark graph");
        let shape = CircuitShape {
            classes: size.classes,
            sums: size.sums,
            leaves: size.leaves,
            leaf: LeafKind::Gaussian,
        };
        let circuit = Circuit::new(graph, shape).expect("valid benchmark circuit");
        let params = ParameterSet::init(&circuit, false, None, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = Array2::from_shape_simple_fn((samples, size.num_vars), || rng.random::<f64>());
        let labels = (0..samples)
            .map(|_| rng.random_range(0..size.classes))
            .collect();
        Fixture {
            circuit,
            params,
            batch,
            labels,
        }
    }
}
