use numcore::{
    grad_check, DctBasis, Graph, NumError, OneCycleSchedule, OptimizerConfig, OptimizerState, Tensor, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn matmul_identity_and_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = random(&[3, 3], &mut rng);
    let mut g = Graph::new();
    let i3 = g.constant(Tensor::eye(3));
    let bv = g.constant(b.clone());
    let out = g.matmul(i3, bv).unwrap();
    assert_eq!(g.value(out), &b);

    let z = g.constant(Tensor::zeros([2, 2]));
    let b2 = g.constant(random(&[2, 2], &mut rng));
    let out = g.matmul(z, b2).unwrap();
    assert_eq!(g.value(out), &Tensor::zeros([2, 2]));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&[3, 3], &mut rng);
    let b = random(&[3, 3], &mut rng);
    let mut expected = Tensor::zeros([3, 3]);
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += a.get(&[i, k]) * b.get(&[k, j]);
            }
            expected.set(&[i, j], acc);
        }
    }
    let mut g = Graph::new();
    let (av, bv) = (g.constant(a), g.constant(b));
    let out = g.matmul(av, bv).unwrap();
    assert!(g.value(out).max_abs_diff(&expected) < 1e-14);
}

#[test]
fn matmul_batched_matches_per_slice() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[2, 3, 4], &mut rng);
    let w = random(&[4, 5], &mut rng);
    let mut g = Graph::new();
    let (av, wv) = (g.constant(a.clone()), g.constant(w.clone()));
    let out = g.matmul(av, wv).unwrap();
    assert_eq!(g.shape(out), &[2, 3, 5]);
    for b in 0..2 {
        let slice = Tensor::new([3, 4], a.data()[b * 12..(b + 1) * 12].to_vec()).unwrap();
        let expect = slice.matmul(&w).unwrap();
        assert_eq!(&g.value(out).data()[b * 15..(b + 1) * 15], expect.data());
    }
}

#[test]
fn matmul_dimension_mismatch() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::zeros([2, 3]));
    let b = g.constant(Tensor::zeros([2, 3]));
    assert!(matches!(g.matmul(a, b), Err(NumError::Shape { .. })));
}

fn ln(x: Tensor<f64>, axis: usize) -> Tensor<f64> {
    let d = x.shape()[axis];
    let mut g = Graph::new();
    let xv = g.constant(x);
    let gain = g.constant(Tensor::ones([d]));
    let bias = g.constant(Tensor::zeros([d]));
    let y = g.layer_norm(xv, gain, bias, axis, 1e-5).unwrap();
    g.value(y).clone()
}

#[test]
fn layer_norm_examples() {
    let c = ln(Tensor::full([1, 4], 3.5), 1);
    assert!(c.data().iter().all(|&v| v == 0.0));

    let y = ln(Tensor::new([2], vec![1.0, 3.0]).unwrap(), 0);
    assert!((y.data()[0] + 1.0).abs() < 1e-4 && (y.data()[1] - 1.0).abs() < 1e-4);
}

#[test]
fn layer_norm_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[4], &mut rng);
    let mean = x.data().iter().sum::<f64>() / 4.0;
    let var = x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
    let expect: Vec<f64> = x.data().iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect();
    let y = ln(x, 0);
    for (a, b) in y.data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_over_inner_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 5, 3], &mut rng);
    let y = ln(x, 1);
    for o in 0..2 {
        for i in 0..3 {
            let col: Vec<f64> = (0..5).map(|j| y.get(&[o, j, i])).collect();
            let mean = col.iter().sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
        }
    }
}

#[test]
fn layer_norm_gain_mismatch() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros([2, 4]));
    let gain = g.constant(Tensor::ones([3]));
    let bias = g.constant(Tensor::zeros([3]));
    assert!(g.layer_norm(x, gain, bias, 1, 1e-5).is_err());
}

#[test]
fn dct_constant_has_only_dc() {
    let b = DctBasis::<f64>::new(16).unwrap();
    let x = Tensor::full([16, 2], 0.7);
    let c = b.dct_tensor(&x).unwrap();
    for k in 1..16 {
        for j in 0..2 {
            assert!(c.get(&[k, j]).abs() < 1e-12);
        }
    }
    assert!((c.get(&[0, 0]) - 0.7 * 4.0).abs() < 1e-12);
}

#[test]
fn dct_impulse_is_closed_form_column() {
    let n = 8;
    let b = DctBasis::<f64>::new(n).unwrap();
    for t in 0..n {
        let mut x = Tensor::zeros([n, 1]);
        x.set(&[t, 0], 1.0);
        let c = b.dct_tensor(&x).unwrap();
        for k in 0..n {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            let expect = scale * (std::f64::consts::PI * (2 * t + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            assert!((c.get(&[k, 0]) - expect).abs() < 1e-14);
        }
    }
}

#[test]
fn dct_roundtrip_on_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in [2, 8, 16, 32] {
        let b = DctBasis::<f64>::new(n).unwrap();
        let x = random(&[3, n, 5], &mut rng);
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let c = b.dct(&mut g, xv).unwrap();
        let back = b.idct(&mut g, c).unwrap();
        assert!(g.value(back).max_abs_diff(&x) < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_roundtrip_and_norm(seed in any::<u64>(), which in 0usize..4) {
        let n = [2, 8, 16, 32][which];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DctBasis::<f64>::new(n).unwrap();
        let x = random(&[n, 3], &mut rng);
        let c = b.dct_tensor(&x).unwrap();
        let back = b.idct_tensor(&c).unwrap();
        prop_assert!(back.max_abs_diff(&x) < 1e-9);
        for j in 0..3 {
            let nx: f64 = (0..n).map(|i| x.get(&[i, j]).powi(2)).sum::<f64>().sqrt();
            let nc: f64 = (0..n).map(|i| c.get(&[i, j]).powi(2)).sum::<f64>().sqrt();
            prop_assert!((nx - nc).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_lr_is_identity(seed in any::<u64>(), radam in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = if radam { OptimizerConfig::radam(0.0) } else { OptimizerConfig::adam(0.0) };
        let mut params = vec![random(&[4], &mut rng), random(&[2, 2], &mut rng)];
        let before = params.clone();
        let mut st = OptimizerState::new(cfg, &params);
        for _ in 0..8 {
            let grads = vec![random(&[4], &mut rng), random(&[2, 2], &mut rng)];
            st.step(&mut params, &grads, 0.0).unwrap();
        }
        prop_assert_eq!(params, before);
    }

    #[test]
    fn onecycle_shape(total in 2usize..500, ratio in 0.01f64..0.99) {
        let Ok(s) = OneCycleSchedule::new(1e-2, total, ratio) else { return Ok(()) };
        let warm = s.warmup_steps();
        prop_assert_eq!(s.lr(warm).unwrap(), 1e-2);
        prop_assert!(s.lr(0).unwrap() < 1e-2);
        prop_assert!(s.lr(total).unwrap() < 1e-2);
        for step in 1..=total {
            let (prev, cur) = (s.lr(step - 1).unwrap(), s.lr(step).unwrap());
            if step <= warm { prop_assert!(cur >= prev); } else { prop_assert!(cur <= prev); }
        }
    }
}

/// Literal transcription of the published RAdam pseudocode for one scalar.
fn radam_reference(theta0: f64, grads: &[f64], lr: f64) -> Vec<f64> {
    let (b1, b2) = (0.9f64, 0.999f64);
    let rho_inf = 2.0 / (1.0 - b2) - 1.0;
    let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
    let mut out = Vec::new();
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        v = b2 * v + (1.0 - b2) * g * g;
        m = b1 * m + (1.0 - b1) * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let rho_t = rho_inf - 2.0 * t as f64 * b2.powi(t) / (1.0 - b2.powi(t));
        if rho_t > 4.0 {
            let l = ((1.0 - b2.powi(t)) / v).sqrt();
            let r = ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t)).sqrt();
            theta -= lr * r * m_hat * l;
        } else {
            theta -= lr * m_hat;
        }
        out.push(theta);
    }
    out
}

#[test]
fn radam_matches_reference_pseudocode() {
    let grads = [0.5, -1.2, 0.3, 0.9, -0.4, 1.1, 0.2, -0.7, 0.6, 0.05, -0.3, 0.8];
    let reference = radam_reference(0.25, &grads, 1e-2);
    let mut params = vec![Tensor::scalar(0.25f64)];
    let mut st = OptimizerState::new(OptimizerConfig::radam(0.0), &params);
    for (i, &g) in grads.iter().enumerate() {
        st.step(&mut params, &[Tensor::scalar(g)], 1e-2).unwrap();
        let got = params[0].item();
        // The first steps use the unrectified momentum branch and match
        // exactly; later steps differ only by eps in the denominator.
        let tol = if i < 4 { 1e-15 } else { 1e-9 };
        assert!((got - reference[i]).abs() < tol, "step {}: {got} vs {}", i + 1, reference[i]);
    }
}

#[test]
fn adam_hand_evaluated_first_step() {
    let mut params = vec![Tensor::scalar(2.0f64)];
    let mut st = OptimizerState::new(OptimizerConfig::adam(0.0), &params);
    st.step(&mut params, &[Tensor::scalar(1.0)], 0.1).unwrap();
    // m̂ = 1, v̂ = 1 → Δ = -0.1 / (1 + 1e-8)
    assert!((params[0].item() - (2.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
}

#[test]
fn decoupled_weight_decay() {
    let mut params = vec![Tensor::scalar(2.0f64)];
    let mut st = OptimizerState::new(OptimizerConfig::adam(0.5), &params);
    st.step(&mut params, &[Tensor::scalar(0.0)], 0.1).unwrap();
    // p ← p − lr·wd·p, then a zero adaptive step
    assert!((params[0].item() - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
}

fn check(name: &str, f: impl Fn(&mut Graph<f64>, &[Var]) -> numcore::Result<Var>, params: &[Tensor<f64>]) {
    let r = grad_check(f, params, 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-3, "{name}: {r:?}");
}

#[test]
fn every_op_passes_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut r = |s: &[usize]| random(s, &mut rng);
    // a random projection keeps losses from being symmetric sums
    let proj = r(&[2, 3, 4]);
    let weighted = move |g: &mut Graph<f64>, y: Var| -> numcore::Result<Var> {
        let n = g.value(y).len();
        let w = Tensor::new(g.shape(y).to_vec(), (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect())?;
        let wv = g.constant(w);
        let p = g.mul(y, wv)?;
        Ok(g.sum(p))
    };

    check("add/sub/mul/div broadcast", |g, v| {
        let a = g.add(v[0], v[1])?;
        let b = g.mul(a, v[1])?;
        let c = g.sub(b, v[0])?;
        let den = g.add_scalar(v[1], 3.0);
        let d = g.div(c, den)?;
        weighted(g, d)
    }, &[r(&[2, 3, 4]), r(&[3, 1])]);

    check("matmul batched", |g, v| {
        let y = g.matmul(v[0], v[1])?;
        let z = g.matmul(v[2], y)?;
        weighted(g, z)
    }, &[r(&[2, 3, 4]), r(&[4, 2]), r(&[3, 3])]);

    check("matmul both batched", |g, v| {
        let bt = g.transpose(v[1])?;
        let y = g.matmul(v[0], bt)?;
        weighted(g, y)
    }, &[r(&[2, 3, 4]), r(&[2, 5, 4])]);

    for f in [numcore::Unary::Exp, numcore::Unary::Gelu, numcore::Unary::Silu, numcore::Unary::Softplus,
              numcore::Unary::Sigmoid, numcore::Unary::Tanh, numcore::Unary::Square] {
        check(&format!("{f:?}"), move |g, v| {
            let y = g.unary(v[0], f);
            weighted(g, y)
        }, &[r(&[3, 4])]);
    }

    check("permute/reshape/narrow/concat", |g, v| {
        let p = g.permute(v[0], &[2, 0, 1])?;
        let q = g.reshape(p, &[4, 6])?;
        let a = g.narrow(q, 1, 1, 3)?;
        let b = g.narrow(q, 0, 0, 2)?;
        let bt = g.reshape(b, &[4, 3])?;
        let c = g.concat(&[a, bt, a], 0)?;
        weighted(g, c)
    }, &[proj.clone()]);

    check("select_rows/gather_tokens", |g, v| {
        let s = g.select_rows(v[0], &[2, 0, 2])?;
        let t = g.reshape(s, &[3, 2, 2])?;
        let gt = g.gather_tokens(t, &[1, 0, 1])?;
        weighted(g, gt)
    }, &[r(&[3, 4])]);

    check("layer_norm", |g, v| {
        let y = g.layer_norm(v[0], v[1], v[2], 1, 1e-5)?;
        weighted(g, y)
    }, &[r(&[2, 5, 3]), r(&[5]), r(&[5])]);

    check("softmax with mask", |g, v| {
        let mut m = Tensor::zeros([1, 4]);
        m.set(&[0, 3], f64::NEG_INFINITY);
        let mv = g.constant(m);
        let x = g.add(v[0], mv)?;
        let s = g.softmax(x)?;
        weighted(g, s)
    }, &[r(&[3, 4])]);

    check("norm_last/mean", |g, v| {
        let n = g.norm_last(v[0])?;
        let sq = g.mul(n, n)?;
        let s = g.add(sq, n)?;
        Ok(g.mean(s))
    }, &[r(&[3, 4])]);

    check("cross_entropy", |g, v| g.cross_entropy(v[0], &[2, 0, 1]), &[r(&[3, 4])]);

    check("causal_conv1d", |g, v| {
        let y = g.causal_conv1d(v[0], v[1], v[2])?;
        weighted(g, y)
    }, &[r(&[2, 5, 3]), r(&[3, 4]), r(&[3])]);

    check("selective_scan", |g, v| {
        let delta = g.softplus(v[1]);
        let y = g.selective_scan(v[0], delta, v[2], v[3], v[4], v[5])?;
        weighted(g, y)
    }, &[r(&[2, 4, 3]), r(&[2, 4, 3]), r(&[3, 2]), r(&[2, 4, 2]), r(&[2, 4, 2]), r(&[3])]);
}

#[test]
fn backward_populates_every_reachable_param() {
    let mut g = Graph::<f64>::new();
    let a = g.param(Tensor::full([2, 2], 0.5));
    let b = g.param(Tensor::full([2], 1.0));
    let unused = g.param(Tensor::full([3], 1.0));
    let x = g.constant(Tensor::eye(2));
    let y = g.linear(x, a, b).unwrap();
    let loss = g.sum(y);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(a).unwrap().shape(), &[2, 2]);
    assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0]);
    assert!(grads.get(x).is_none());
    assert!(grads.get(unused).is_none());
    assert_eq!(grads.collect(&g, &[unused])[0], Tensor::zeros([3]));
}

#[test]
fn backward_requires_scalar_loss() {
    let mut g = Graph::<f64>::new();
    let a = g.param(Tensor::zeros([2]));
    assert!(g.backward(a).is_err());
}

#[test]
fn scan_hand_recurrence_single_step() {
    // one step, one channel, one state: y = C·(Δ·B·u) + D·u
    let (u, dt, a, b, c, d) = (0.7, 0.3, -1.0, 0.4, 1.5, 0.2);
    let mut g = Graph::<f64>::new();
    let uv = g.constant(Tensor::new([1, 1, 1], vec![u]).unwrap());
    let dv = g.constant(Tensor::new([1, 1, 1], vec![dt]).unwrap());
    let av = g.constant(Tensor::new([1, 1], vec![a]).unwrap());
    let bv = g.constant(Tensor::new([1, 1, 1], vec![b]).unwrap());
    let cv = g.constant(Tensor::new([1, 1, 1], vec![c]).unwrap());
    let skip = g.constant(Tensor::new([1], vec![d]).unwrap());
    let y = g.selective_scan(uv, dv, av, bv, cv, skip).unwrap();
    assert!((g.value(y).item() - (c * dt * b * u + d * u)).abs() < 1e-15);
}

#[test]
fn single_precision_instantiation_tracks_double() {
    fn run<S: numcore::Scalar>(a: Tensor<S>, b: Tensor<S>) -> (Vec<S>, Vec<S>) {
        let mut g = Graph::new();
        let (av, bv) = (g.param(a), g.param(b));
        let y = g.matmul(av, bv).unwrap();
        let y = g.unary(y, numcore::Unary::Tanh);
        let loss = g.sum(y);
        let grads = g.backward(loss).unwrap().collect(&g, &[av, bv]);
        (g.value(y).data().to_vec(), grads.iter().flat_map(|t| t.data().to_vec()).collect())
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (a, b) = (random(&[3, 4], &mut rng), random(&[4, 2], &mut rng));
    let (y64, g64) = run(a.clone(), b.clone());
    let (y32, g32) = run(a.cast::<f32>(), b.cast::<f32>());
    for (x, y) in y64.iter().zip(&y32).chain(g64.iter().zip(&g32)) {
        assert!((x - *y as f64).abs() < 1e-5, "{x} vs {y}");
    }
}
