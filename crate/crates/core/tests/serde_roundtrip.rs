mod common;

use common::random_circuit;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ratspn_core::data::Scaling;
use ratspn_core::inference::forward_log;
use ratspn_core::{load_model, save_model, Encoding, LeafKind, ModelMeta, ParameterSet};
use ratspn_oracle::OracleModel;

#[test]
fn file_roundtrip_is_bit_exact_and_stable() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..10 {
        let c = random_circuit(&mut rng, LeafKind::Gaussian, 12);
        let p = ParameterSet::random(&c, k % 2 == 0, &mut rng);
        let meta = ModelMeta {
            scaling: Scaling::DivMax { max: 255.0 },
            lambda: Some(0.5),
            epochs: k,
            train_seed: Some(k as u64),
        };
        let a = dir.path().join(format!("m{k}.json"));
        let b = dir.path().join(format!("m{k}-again.json"));
        save_model(&a, &c, &p, &meta, Encoding::Raw).unwrap();
        let m = load_model(&a).unwrap();
        save_model(&b, &m.circuit, &m.params, &m.meta, Encoding::Raw).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(
            m.circuit.count_parameters(p.train_variance()).total,
            c.count_parameters(p.train_variance()).total
        );

        let n = c.num_vars();
        let x = Array2::from_shape_fn((8, n), |_| rng.random_range(-3.0..3.0));
        let before = forward_log(&c, &p, x.view(), None, None).unwrap();
        let after = forward_log(&m.circuit, &m.params, x.view(), None, None).unwrap();
        assert!(before
            .iter()
            .zip(&after)
            .all(|(u, v)| u.to_bits() == v.to_bits()));

        let oracle = OracleModel::from_json(&std::fs::read_to_string(&a).unwrap()).unwrap();
        for (row, out) in x.rows().into_iter().zip(before.rows()) {
            let r = oracle.log_roots(&row.to_vec(), &vec![false; n]).unwrap();
            for (o, e) in r.iter().zip(out) {
                assert!((o - e).abs() < 1e-9 * e.abs().max(1.0));
            }
        }
    }
}

#[test]
fn unwritable_and_missing_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = random_circuit(&mut rng, LeafKind::Gaussian, 4);
    let p = ParameterSet::random(&c, false, &mut rng);
    let bad = dir.path().join("no/such/dir/model.json");
    assert!(save_model(&bad, &c, &p, &ModelMeta::default(), Encoding::Text).is_err());
    assert!(load_model(&dir.path().join("absent.json")).is_err());
}
