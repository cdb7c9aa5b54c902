use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn store(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, shape, data) in entries {
        s.insert(*name, Array::new(shape.clone(), data.clone()).unwrap()).unwrap();
    }
    s
}

#[test]
fn linear_identity_and_zero_cases() {
    let p = store(&[
        ("eye", vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]),
        ("zero", vec![2, 2], vec![0.0; 4]),
        ("b0", vec![2], vec![0.0, 0.0]),
        ("b", vec![2], vec![0.3, -0.7]),
    ]);
    let mut g = Graph::new(&p);
    let v = g.input(vec![1.5, -2.0]);
    let eye = g.param(p.id("eye").unwrap());
    let zero = g.param(p.id("zero").unwrap());
    let b0 = g.param(p.id("b0").unwrap());
    let b = g.param(p.id("b").unwrap());
    let out = g.linear(v, eye, b0).unwrap();
    assert_eq!(g.value(out), &[1.5, -2.0]);
    let out = g.linear(v, zero, b).unwrap();
    assert_eq!(g.value(out), &[0.3, -0.7]);
}

#[test]
fn linear_shape_mismatch_names_operands() {
    let p = store(&[("w", vec![3, 2], vec![0.0; 6]), ("b", vec![2], vec![0.0; 2])]);
    let mut g = Graph::new(&p);
    let x = g.input(vec![1.0, 2.0]);
    let w = g.param(p.id("w").unwrap());
    let b = g.param(p.id("b").unwrap());
    let err = g.linear(x, w, b).unwrap_err();
    assert!(matches!(err, crate::Error::Dimension { op: "linear", .. }), "{err:?}");
}

#[test]
fn linear_input_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p = store(&[("w", vec![3, 2], w), ("b", vec![3], b), ("x", vec![2], x)]);
    let report = gradient_check(&mut p, 1e-6, &GradCheckOptions::default(), |g| {
        let ps = g.params();
        let (w, b, x) = (ps.id("w").unwrap(), ps.id("b").unwrap(), ps.id("x").unwrap());
        let (w, b, x) = (g.param(w), g.param(b), g.param(x));
        let y = g.linear(x, w, b)?;
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.params.len(), 3);
}

#[test]
fn sigmoid_values_and_derivative() {
    assert_eq!(sigmoid(0.0), 0.5);
    assert!((1.0 - sigmoid(800.0)).abs() < f64::EPSILON);
    assert_eq!(sigmoid(-800.0), 0.0);
    assert!(sigmoid(-800.0).is_finite());

    let mut p = store(&[("x", vec![1], vec![0.0])]);
    let mut grads = Gradients::zeros_like(&p);
    {
        let mut g = Graph::new(&p);
        let x = g.param(p.id("x").unwrap());
        let y = g.sigmoid(x);
        g.backward(y, 1.0, &mut grads).unwrap();
    }
    assert_eq!(grads.get(p.id("x").unwrap()), &[0.25]);
    let report = gradient_check(&mut p, 1e-8, &GradCheckOptions::default(), |g| {
        let x = g.param(g.params().id("x").unwrap());
        Ok(g.sigmoid(x))
    })
    .unwrap();
    assert!(report.passed, "{report:?}");
    assert!((report.params[0].numeric - 0.25).abs() < 1e-10);
}

#[test]
fn softmax_cases() {
    let k = 7;
    let u = softmax(&vec![0.0; k]).unwrap();
    assert!(u.iter().all(|&v| (v - 1.0 / k as f64).abs() < 1e-15));

    let two = softmax(&[libm::log(2.0), 0.0]).unwrap();
    assert!((two[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!((two[1] - 1.0 / 3.0).abs() < 1e-15);

    assert!(matches!(softmax(&[]), Err(crate::Error::Dimension { .. })));
    // large logits must not overflow
    let big = softmax(&[1000.0, 999.0]).unwrap();
    assert!(big.iter().all(|v| v.is_finite()));
}

#[test]
fn bce_cases() {
    let ln2 = core::f64::consts::LN_2;
    assert!((bce(0.5, 1.0) - ln2).abs() < 1e-15);
    assert!((bce(0.5, 0.0) - ln2).abs() < 1e-15);
    assert!(bce(1.0 - BCE_EPS, 1.0) < 2e-7);
    assert!((bce(0.8, 0.0) - 1.6094379124341003).abs() < 1e-12);
    // clamping keeps the loss finite
    assert!(bce(0.0, 1.0).is_finite());

    let p = ParamStore::new();
    let mut g = Graph::new(&p);
    let x = g.input(vec![0.4]);
    assert!(matches!(g.bce(x, 0.5), Err(crate::Error::Validation { .. })));
}

#[test]
fn gradient_check_on_square() {
    let mut p = store(&[("x", vec![1], vec![3.0])]);
    let report = gradient_check(&mut p, 1e-8, &GradCheckOptions::default(), |g| {
        let x = g.param(g.params().id("x").unwrap());
        let y = g.mul(x, x)?;
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(report.passed);
    assert_eq!(report.params[0].analytic, 6.0);
    assert!((report.params[0].numeric - 6.0).abs() / 6.0 < 1e-8);
}

#[test]
fn gradient_check_aborts_on_non_finite_loss() {
    let mut p = store(&[("x", vec![1], vec![800.0])]);
    let err = gradient_check(&mut p, 1e-6, &GradCheckOptions::default(), |g| {
        let x = g.param(g.params().id("x").unwrap());
        let e = g.exp(x);
        Ok(g.sum(e))
    })
    .unwrap_err();
    assert!(matches!(err, crate::Error::NonFinite { .. }));
}

#[test]
fn corrupted_gradient_is_reported_by_name() {
    let mut p = store(&[("a", vec![2], vec![0.3, 0.1]), ("b", vec![2], vec![0.5, -0.2])]);
    let opts = GradCheckOptions { corrupt: Some("b".into()), ..Default::default() };
    let report = gradient_check(&mut p, 1e-6, &opts, |g| {
        let ps = g.params();
        let (a, b) = (g.param(ps.id("a").unwrap()), g.param(ps.id("b").unwrap()));
        let y = g.mul(a, b)?;
        Ok(g.sum(y))
    })
    .unwrap();
    assert!(!report.passed);
    assert_eq!(report.worst().unwrap().name, "b");
    assert!(report.params[0].max_rel_err < 1e-6);
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let p = store(&[("w", vec![3, 3], (0..9).map(|i| i as f64 * 0.1 - 0.4).collect())]);
    let run = || {
        let mut grads = Gradients::zeros_like(&p);
        let mut g = Graph::new(&p);
        let w = g.param(p.id("w").unwrap());
        let x = g.input(vec![0.2, -0.1, 0.7]);
        let y = g.matvec(w, x, 3, 3).unwrap();
        let s = g.softmax(y).unwrap();
        let q = g.squash(s);
        let l = g.norm(q);
        g.backward(l, 1.0, &mut grads).unwrap();
        (g.scalar(l).to_bits(), grads)
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

/// Builds `sum(r ⊙ op(x, y))` for primitive `which`, with `r` a fixed random
/// projection so every output entry contributes to the scalar.
fn primitive_loss(g: &mut Graph<'_>, which: usize, r: &[f64]) -> crate::Result<NodeId> {
    let ps = g.params();
    let x = g.param(ps.id("x").unwrap());
    let y = g.param(ps.id("y").unwrap());
    let w = g.param(ps.id("w").unwrap());
    let n = g.node_len(x);
    let out = match which {
        0 => g.matvec(w, x, n, n)?,
        1 => g.add(x, y)?,
        2 => g.sub(x, y)?,
        3 => g.mul(x, y)?,
        4 => g.scale(x, -1.7),
        5 => {
            let s = g.slice(y, 0, 1)?;
            g.scale_by(x, s)?
        }
        6 => g.sigmoid(x),
        7 => g.tanh(x),
        8 => g.exp(x),
        9 => {
            let e = g.exp(y);
            g.ln(e)?
        }
        10 => g.softmax(x)?,
        11 => g.squash(x),
        12 => {
            let a = g.norm(x);
            let b = g.dot(x, y)?;
            g.concat(&[a, b])
        }
        13 => {
            let e = g.exp(x);
            g.normalize_sum(e)?
        }
        14 => {
            let p = g.softmax(y)?;
            let items: Vec<NodeId> = (0..n).map(|i| g.scale(x, 1.0 + i as f64)).collect();
            g.weighted_sum(p, &items)?
        }
        15 => g.mean(&[x, y, x])?,
        16 => {
            let s = g.sum_n(&[x, y])?;
            g.add_const(s, 0.5)
        }
        17 => {
            let s = g.sigmoid(x);
            let s0 = g.slice(s, 0, 1)?;
            g.bce(s0, 1.0)?
        }
        _ => {
            let s = g.sigmoid(x);
            let s0 = g.slice(s, 1, 1)?;
            g.bce(s0, 0.0)?
        }
    };
    let rn = g.input(r[..g.node_len(out)].to_vec());
    let prod = g.mul(out, rn)?;
    Ok(g.sum(prod))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn every_primitive_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.5..1.5)).collect() };
        let (x, y, w, r) = (draw(n), draw(n), draw(n * n), draw(n));
        let mut p = store(&[("x", vec![n], x), ("y", vec![n], y), ("w", vec![n, n], w)]);
        for which in 0..19 {
            let report = gradient_check(&mut p, 1e-5, &GradCheckOptions::default(), |g| {
                primitive_loss(g, which, &r)
            }).unwrap();
            prop_assert!(report.passed, "primitive {which}: {report:?}");
        }
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant(
        v in proptest::collection::vec(-50.0f64..50.0, 1..20),
        c in -100.0f64..100.0,
    ) {
        let a = softmax(&v).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let b = softmax(&shifted).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.iter().all(|&x| x >= 0.0));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_is_non_negative(p in 0.0f64..=1.0, label in 0u8..=1) {
        let l = bce(p, label as f64);
        prop_assert!(l >= 0.0);
        if l == 0.0 {
            prop_assert!(false, "loss reached exactly zero at p={p}");
        }
    }
}
