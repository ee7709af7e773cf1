use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_params;
use super::*;
use crate::error::Error;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `out` to a scalar through fixed random weights so every output entry
/// contributes a distinct coefficient to the gradient.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random_tensor(&mut rng, r, c));
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod)
}



/// Compares analytic gradients of `build` (projected to a scalar) with central
/// differences at h = 1e-5.
fn assert_gradients(inputs: Vec<Tensor>, tolerance: f64, build: &dyn Fn(&mut Tape, &[Var]) -> crate::Result<Var>) {
    let mut params = ParamSet::new();
    for (i, t) in inputs.into_iter().enumerate() {
        params.insert(format!("x{i}"), t);
    }
    let eval = |p: &ParamSet, want_grad: bool| -> crate::Result<(f64, ParamSet)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = p.iter().map(|(_, t)| tape.param(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        let loss = project(&mut tape, out, 99);
        let value = tape.value(loss).item()?;
        let mut grads = ParamSet::new();
        if want_grad {
            tape.backward(loss)?;
            for ((name, t), v) in p.iter().zip(&vars) {
                let g = tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()));
                grads.insert(name.clone(), g);
            }
        }
        Ok((value, grads))
    };
    let (_, analytic) = eval(&params, true).unwrap();
    let report = check_params(&params, &analytic, 1e-5, tolerance, |p| eval(p, false).map(|r| r.0)).unwrap();
    assert_eq!(report.passed, report.checked, "gradient mismatches: {:?}", report.worst);
}

#[test]
fn relu_and_elu_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);

    let z = tape.constant(Tensor::from_vec(1, 2, vec![0.0, -60.0]).unwrap());
    let e = tape.elu(z);
    assert_eq!(tape.value(e).data()[0], 0.0);
    assert!((tape.value(e).data()[1] + 1.0).abs() < 1e-12);
}

#[test]
fn leaky_relu_gradient_at_negative_input() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(-3.0));
    let y = tape.leaky_relu(x, 0.2);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert!((tape.grad(x).unwrap().data()[0] - 0.2).abs() < 1e-15);
    // finite-difference side
    let f = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    let numeric = (f(-3.0 + 1e-5) - f(-3.0 - 1e-5)) / 2e-5;
    assert!((numeric - 0.2).abs() < 1e-9);
}

#[test]
fn elementwise_dispatch_checks_arity() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::scalar(1.0));
    assert!(matches!(tape.elementwise(Elementwise::Add, &[x]), Err(Error::Contract(_))));
    let y = tape.elementwise(Elementwise::Exp, &[x]).unwrap();
    assert!((tape.value(y).data()[0] - std::f64::consts::E).abs() < 1e-15);
}

#[test]
fn broadcast_only_supports_row_vectors() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(2, 3));
    let row = tape.constant(Tensor::filled(1, 3, 1.0));
    let col = tape.constant(Tensor::zeros(2, 1));
    assert!(tape.add(a, row).is_ok());
    assert!(matches!(tape.add(a, col), Err(Error::Dimension { .. })));
    assert!(matches!(tape.mul(a, col), Err(Error::Dimension { .. })));
}

#[test]
fn softmax_uniform_and_stable() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0, 0.0], vec![1000.0, 0.0, -5.0]], 3).unwrap());
    let y = tape.row_softmax(x);
    let v = tape.value(y);
    for &p in v.row(0) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    assert!((v.get(1, 0) - 1.0).abs() < 1e-12);
    assert!(v.is_finite());
}

#[test]
fn segment_mean_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(2, 1, vec![2.0, 4.0]).unwrap());
    let m = tape.segment_mean(x, &[0, 0], 2).unwrap();
    assert_eq!(tape.value(m).data(), &[3.0, 0.0]);
    assert!(matches!(tape.segment_mean(x, &[0, 2], 2), Err(Error::Index { .. })));
}

#[test]
fn segment_mean_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let values = random_tensor(&mut rng, 6, 3);
    let segments = [2, 0, 2, 1, 0, 2];
    let mut tape = Tape::new();
    let x = tape.constant(values.clone());
    let m = tape.segment_mean(x, &segments, 3).unwrap();
    for s in 0..3 {
        let members: Vec<usize> = (0..6).filter(|&i| segments[i] == s).collect();
        for c in 0..3 {
            let mean = members.iter().map(|&i| values.get(i, c)).sum::<f64>() / members.len() as f64;
            assert!((tape.value(m).get(s, c) - mean).abs() < 1e-15);
        }
    }
}

#[test]
fn cross_entropy_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::from_vec(1, 2, vec![10.0, -10.0]).unwrap());
    let l = tape.weighted_cross_entropy(z, &[0], &[1.0, 1.0]).unwrap();
    assert!(tape.value(l).item().unwrap() < 1e-8);

    let z = tape.constant(Tensor::from_vec(1, 2, vec![0.0, 0.0]).unwrap());
    let l = tape.weighted_cross_entropy(z, &[1], &[1.0, 1.0]).unwrap();
    assert!((tape.value(l).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

    assert!(matches!(
        tape.weighted_cross_entropy(z, &[2], &[1.0, 1.0]),
        Err(Error::Index { .. })
    ));
}

#[test]
fn weighted_cross_entropy_hand_expansion() {
    // logits [[1, 0], [0.5, 2]], labels [0, 1], weights [1, 3]
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]], 2).unwrap());
    let l = tape.weighted_cross_entropy(z, &[0, 1], &[1.0, 3.0]).unwrap();
    let nll0 = -(1.0f64.exp() / (1.0f64.exp() + 1.0)).ln();
    let nll1 = -(2.0f64.exp() / (0.5f64.exp() + 2.0f64.exp())).ln();
    let expected = (1.0 * nll0 + 3.0 * nll1) / 2.0;
    assert!((tape.value(l).item().unwrap() - expected).abs() < 1e-14);
}

#[test]
fn backward_requires_scalar_and_accumulates() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));

    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(5.0));
    let y = tape.add(x, x).unwrap();
    tape.backward(y).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[2.0]);
}

#[test]
fn backward_visits_each_reachable_op_once() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(1.5));
    let a = tape.exp(x);
    let b = tape.mul(a, x).unwrap();
    let c = tape.add(b, a).unwrap();
    let _unused = tape.relu(x);
    tape.backward(c).unwrap();
    // x, a, b, c; the dangling relu is never visited
    assert_eq!(tape.backward_visits(), 4);
    let expected = 1.5f64.exp() * (1.5 + 1.0) + 1.5f64.exp();
    assert!((tape.grad(x).unwrap().data()[0] - expected).abs() < 1e-12);
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random_tensor(&mut rng, 3, 4);
    let b = random_tensor(&mut rng, 4, 2);
    assert_gradients(vec![a, b], 1e-6, &|t, v| t.matmul(v[0], v[1]));
}

#[test]
fn softmax_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random_tensor(&mut rng, 2, 3);
    assert_gradients(vec![x], 1e-6, &|t, v| Ok(t.row_softmax(v[0])));
}

#[test]
fn every_op_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = random_tensor(&mut rng, 4, 3);
    let b = random_tensor(&mut rng, 4, 3);
    let row = random_tensor(&mut rng, 1, 3);
    let col = random_tensor(&mut rng, 4, 1);
    let seg = [1usize, 0, 1, 2];

    assert_gradients(vec![a.clone(), b.clone()], 1e-6, &|t, v| t.add(v[0], v[1]));
    assert_gradients(vec![a.clone(), row.clone()], 1e-6, &|t, v| t.add(v[0], v[1]));
    assert_gradients(vec![a.clone(), b.clone()], 1e-6, &|t, v| t.mul(v[0], v[1]));
    assert_gradients(vec![a.clone(), row.clone()], 1e-6, &|t, v| t.mul(v[0], v[1]));
    assert_gradients(vec![a.clone(), col.clone()], 1e-6, &|t, v| t.scale_rows(v[0], v[1]));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.scale(v[0], -2.5)));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.elu(v[0])));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.leaky_relu(v[0], 0.2)));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.exp(v[0])));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.relu(v[0])));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| t.gather_rows(v[0], &[3, 0, 3, 1, 1]));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| t.segment_sum(v[0], &seg, 4));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| t.segment_mean(v[0], &seg, 3));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| t.segment_softmax(v[0], &seg, 3));
    assert_gradients(vec![a.clone(), b.clone()], 1e-6, &|t, v| t.concat_rows(&[v[0], v[1]]));
    assert_gradients(vec![a.clone(), col.clone()], 1e-6, &|t, v| t.concat_cols(&[v[0], v[1], v[0]]));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.row_sum(v[0])));
    assert_gradients(vec![a.clone()], 1e-6, &|t, v| Ok(t.mean_rows(v[0])));
    let logits = random_tensor(&mut rng, 3, 2);
    assert_gradients(vec![logits], 1e-6, &|t, v| t.weighted_cross_entropy(v[0], &[0, 1, 1], &[1.0, 3.0]));
}

#[test]
fn composed_two_layer_model_gradients_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random_tensor(&mut rng, 5, 4);
    let w1 = random_tensor(&mut rng, 4, 3);
    let b1 = random_tensor(&mut rng, 1, 3);
    let w2 = random_tensor(&mut rng, 3, 2);
    assert_gradients(vec![x, w1, b1, w2], 1e-4, &|t, v| {
        let h = t.matmul(v[0], v[1])?;
        let h = t.add(h, v[2])?;
        let h = t.elu(h);
        let agg = t.segment_mean(h, &[0, 0, 1, 1, 1], 2)?;
        let logits = t.matmul(agg, v[3])?;
        t.weighted_cross_entropy(logits, &[1, 0], &[0.75, 1.5])
    });
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(values in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::from_vec(3, 4, values).unwrap());
            let y = tape.row_softmax(x);
            for r in 0..3 {
                let s: f64 = tape.value(y).row(r).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn segment_mean_of_constant_rows_is_constant(value in -10.0f64..10.0, n in 1usize..8) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::filled(n, 2, value));
            let segments: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let m = tape.segment_mean(x, &segments, 2).unwrap();
            for s in 0..n.min(2) {
                for c in 0..2 {
                    prop_assert!((tape.value(m).get(s, c) - value).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn forward_is_deterministic(seed in 0u64..1000) {
            let run = || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut tape = Tape::new();
                let a = tape.param(random_tensor(&mut rng, 3, 3));
                let b = tape.param(random_tensor(&mut rng, 3, 2));
                let c = tape.matmul(a, b).unwrap();
                let d = tape.row_softmax(c);
                let s = tape.sum(d);
                let e = tape.elu(c);
                let f = tape.sum(e);
                let g = tape.add(s, f).unwrap();
                tape.backward(g).unwrap();
                (tape.value(g).clone(), tape.grad(a).unwrap().clone())
            };
            prop_assert_eq!(run(), run());
        }
    }
}
