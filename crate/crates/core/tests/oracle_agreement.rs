mod common;

use common::{binary_row, oracle_of, random_circuit, relative_error};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratspn_core::inference::forward_log;
use ratspn_core::training::backward_gradients;
use ratspn_core::{LeafKind, ParameterSet, QueryMask};
use ratspn_oracle::{
    brute_force_marginal, brute_force_mass, finite_diff_gradient, hybrid_objective, quadrature_mass,
};

#[test]
fn discrete_roots_normalise_and_match_engine() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..25 {
        let c = random_circuit(&mut rng, LeafKind::Bernoulli, 8);
        let p = ParameterSet::random(&c, false, &mut rng);
        let o = oracle_of(&c, &p);
        let table = brute_force_mass(&o).unwrap();
        let n = c.num_vars();
        let x = Array2::from_shape_fn((1 << n, n), |(k, v)| ((k >> v) & 1) as f64);
        let roots = forward_log(&c, &p, x.view(), None, None).unwrap();
        for (class, col) in table.iter().enumerate() {
            let mass: f64 = col.iter().map(|v| v.exp()).sum();
            assert!((mass - 1.0).abs() < 1e-9, "class {class}: {mass}");
            for (k, v) in col.iter().enumerate() {
                assert!((v - roots[[k, class]]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn masked_evaluation_matches_enumerated_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..60 {
        let c = random_circuit(&mut rng, LeafKind::Bernoulli, 10);
        let p = ParameterSet::random(&c, false, &mut rng);
        let o = oracle_of(&c, &p);
        let n = c.num_vars();
        let x = binary_row(&mut rng, n);
        let missing: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let missing_set: Vec<usize> = (0..n).filter(|&v| missing[v]).collect();
        let expect = brute_force_marginal(&o, &x, &missing_set).unwrap();
        let xa = Array2::from_shape_vec((1, n), x).unwrap();
        let mask = QueryMask::new(Array2::from_shape_vec((1, n), missing).unwrap());
        let got = forward_log(&c, &p, xa.view(), Some(&mask), None).unwrap();
        for (class, e) in expect.iter().enumerate() {
            assert!((e - got[[0, class]]).abs() < 1e-9);
        }
    }
}

#[test]
fn two_variable_gaussian_mass_by_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..5 {
        let c = random_circuit(&mut rng, LeafKind::Gaussian, 2);
        let p = ParameterSet::random(&c, true, &mut rng);
        let o = oracle_of(&c, &p);
        for class in 0..c.num_classes() {
            let mass = quadrature_mass(&o, class, 9.0, 300).unwrap();
            assert!((mass - 1.0).abs() < 1e-4, "{mass}");
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for trial in 0..6 {
        let leaf = if trial % 2 == 0 {
            LeafKind::Gaussian
        } else {
            LeafKind::Bernoulli
        };
        let c = random_circuit(&mut rng, leaf, 6);
        let p = ParameterSet::random(&c, leaf == LeafKind::Gaussian, &mut rng);
        let o = oracle_of(&c, &p);
        let n = c.num_vars();
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| match leaf {
                LeafKind::Gaussian => (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                LeafKind::Bernoulli => binary_row(&mut rng, n),
            })
            .collect();
        let labels: Vec<usize> = (0..4)
            .map(|_| rng.random_range(0..c.num_classes()))
            .collect();
        let x = Array2::from_shape_fn((4, n), |(i, j)| rows[i][j]);
        for lambda in [0.0, 0.5, 1.0] {
            let (g, _) = backward_gradients(&c, &p, x.view(), &labels, None, None, lambda).unwrap();
            let fd = finite_diff_gradient(
                |t| {
                    hybrid_objective(&o.with_parameters(t).unwrap(), &rows, &labels, lambda)
                        .unwrap()
                },
                &o.parameters(),
                1e-5,
            )
            .unwrap();
            for (i, (a, f)) in g.to_flat().iter().zip(&fd).enumerate() {
                assert!(relative_error(*a, *f, 1e-6) < 1e-4, "param {i}: {a} vs {f}");
            }
        }
    }
}
