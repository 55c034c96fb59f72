use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::catalog::primitive_set;
use super::*;
use crate::error::Error;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn softmax_of_equal_row_is_uniform() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::full(&[1, 4], 3.3));
    let y = t.softmax_rows(x);
    assert_eq!(t.value(y).data(), &[0.25; 4]);
}

#[test]
fn layer_norm_rows_have_zero_mean_unit_variance() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::randn(&[5, 9], 3.0, &mut rng(1)));
    let y = t.layer_norm_rows(x, 0.0);
    for i in 0..5 {
        let row = t.value(y).row(i);
        let mean = row.iter().sum::<f64>() / 9.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(2);
    let a = Tensor::<f64>::randn(&[2, 3], 1.0, &mut r);
    let b = Tensor::<f64>::randn(&[3, 2], 1.0, &mut r);
    let mut want = [0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..3 {
                want[i * 2 + j] += a.at(i, k) * b.at(k, j);
            }
        }
    }
    let mut t = Tape::new();
    let (va, vb) = (t.constant(a), t.constant(b));
    let c = t.matmul(va, vb).unwrap();
    for (x, y) in t.value(c).data().iter().zip(want) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn shape_errors_name_operands() {
    let mut t = Tape::<f64>::new();
    let a = t.constant(Tensor::zeros(&[2, 3]));
    let b = t.constant(Tensor::zeros(&[2, 3]));
    let err = t.matmul(a, b).unwrap_err();
    match err {
        Error::Shape { op, detail } => {
            assert_eq!(op, "matmul");
            assert!(detail.contains("2x3"), "{detail}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn masked_entries_get_exact_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::from_rows(&[vec![1.0, 50.0, 2.0]]).unwrap());
    let y = t.masked_softmax_rows(x, &[true, false, true]).unwrap();
    let v = t.value(y).data();
    assert_eq!(v[1], 0.0);
    assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
}

#[test]
fn quadratic_central_difference_is_exact() {
    let mut p = ParamStore::new();
    p.add("x", Tensor::scalar(3.0));
    let rep = check_gradients(
        |t, p| {
            let x = t.param(p, ParamId(0));
            t.sum_squares(x)
        },
        &mut p,
        1e-3,
    )
    .unwrap();
    assert!((rep.analytic - 6.0).abs() < 1e-15);
    assert!((rep.numeric - 6.0).abs() < 1e-9);
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut p = ParamStore::new();
    p.add("logits", Tensor::randn(&[3, 5], 1.0, &mut rng(5)));
    let rep = check_gradients(
        |t, p| {
            let l = t.param(p, ParamId(0));
            t.cross_entropy(l, &[1, 3, 0], &[1.0; 3])
        },
        &mut p,
        1e-3,
    )
    .unwrap();
    assert!(rep.max_rel_error < 1e-6, "{rep:?}");
}

#[test]
fn every_primitive_passes_finite_differences() {
    for prim in primitive_set() {
        let mut p = prim.random_inputs(11);
        let rep = check_gradients_with(
            |t, p| prim.objective(t, p),
            &mut p,
            GradCheckOptions {
                eps: 1e-5,
                train: prim.train,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{}: {rep:?}", prim.name);
    }
}

#[test]
fn dropout_is_seed_deterministic_and_inactive_in_eval() {
    let x = Tensor::<f64>::randn(&[6, 6], 1.0, &mut rng(9));
    let run = |train: bool, seed: u64| {
        let mut t = Tape::with_mode(train, seed);
        let v = t.constant(x.clone());
        let y = t.dropout(v, 0.5);
        t.value(y).clone()
    };
    assert_eq!(run(true, 4), run(true, 4));
    assert_ne!(run(true, 4), run(true, 5));
    assert_eq!(run(false, 4), x);
}

#[test]
fn nondeterministic_objective_is_rejected() {
    let mut p = ParamStore::new();
    p.add("x", Tensor::scalar(1.0));
    let mut calls = 0.0;
    let err = check_gradients(
        |t, p| {
            calls += 1.0;
            let x = t.param(p, ParamId(0));
            Ok(t.scale(x, calls))
        },
        &mut p,
        1e-3,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonDeterministic { .. }));
}

#[test]
fn param_leaf_is_shared_and_gradients_accumulate() {
    let mut p = ParamStore::new();
    let id = p.add("w", Tensor::scalar(2.0));
    let mut t = Tape::new();
    let a = t.param(&p, id);
    let b = t.param(&p, id);
    assert_eq!(a, b);
    let s = t.mul(a, b).unwrap();
    let s = t.add(s, a).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.params()[0].1.data()[0], 5.0);
}

#[test]
fn replayed_detach_makes_stop_gradient_checkable() {
    // loss = (x + sg(x² − x))², whose value is x⁴ but whose gradient treats
    // the detached term as a constant.
    let mut p = ParamStore::new();
    p.add("x", Tensor::scalar(1.5));
    let build = |t: &mut Tape<f64>, p: &ParamStore<f64>| {
        let x = t.param(p, ParamId(0));
        let sq = t.mul(x, x)?;
        let d = t.sub(sq, x)?;
        let d = t.detach(d);
        let y = t.add(x, d)?;
        t.sum_squares(y)
    };
    let mut t = Tape::new();
    t.record_detached();
    let l = build(&mut t, &p).unwrap();
    let frozen = t.take_detached();
    assert_eq!(t.value(l).data()[0], 1.5f64.powi(4));
    assert_eq!(t.backward(l).unwrap().params()[0].1.data()[0], 2.0 * 2.25);
    let report = check_gradients(
        |t, p| {
            t.replay_detached(frozen.clone());
            build(t, p)
        },
        &mut p,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-8, "{report:?}");
}
