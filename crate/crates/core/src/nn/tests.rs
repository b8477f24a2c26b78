use super::*;
use crate::check;
use ndarray::array;

fn relu_spec(widths: Vec<usize>) -> MlpSpec {
    MlpSpec::relu(widths).unwrap()
}

#[test]
fn spec_rejects_bad_shapes() {
    assert!(MlpSpec::relu(vec![3]).is_err());
    assert!(MlpSpec::relu(vec![3, 0, 2]).is_err());
    assert!(MlpSpec::new(
        vec![2, 2],
        Activation::LeakyRelu { slope: 1.5 },
        OutputActivation::Identity
    )
    .is_err());
}

#[test]
fn init_biases_are_exactly_zero() {
    let spec = relu_spec(vec![3, 7, 2]);
    let params = init_params(&spec, &mut Rng::new(5));
    for b in &params.biases {
        assert!(b.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn init_is_deterministic_given_seed() {
    let spec = relu_spec(vec![4, 8, 3]);
    let a = init_params(&spec, &mut Rng::new(11));
    let b = init_params(&spec, &mut Rng::new(11));
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        for (x, y) in wa.iter().zip(wb.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn init_weight_moments_match_target_distribution() {
    // 100 x 100 = 10^4 weights
    let spec = relu_spec(vec![100, 100]);
    let params = init_params(&spec, &mut Rng::new(0));
    let w = &params.weights[0];
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    assert!(mean > -0.002 && mean < 0.002, "mean {mean}");
    assert!(std > 0.045 && std < 0.055, "std {std}");
}

#[test]
fn forward_all_zero_params_gives_zero_outputs() {
    let spec = relu_spec(vec![3, 5, 2]);
    let mlp = Mlp {
        params: MlpParams::zeros(&spec),
        spec,
    };
    let out = mlp.forward(&array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
    assert!(out.iter().all(|&x| x == 0.0));
}

#[test]
fn forward_identity_layer_passes_input_through() {
    let spec = relu_spec(vec![2, 2]);
    let mut mlp = Mlp {
        params: MlpParams::zeros(&spec),
        spec,
    };
    mlp.params.weights[0] = array![[1.0, 0.0], [0.0, 1.0]];
    let x = array![[0.3, -0.7], [2.0, 4.0]];
    let out = mlp.forward(&x).unwrap();
    assert_eq!(out, x);
}

#[test]
fn forward_matches_hand_composed_matrix_products() {
    // Independent oracle: explicit loops, no ndarray dot.
    let spec = MlpSpec::new(
        vec![3, 4, 2],
        Activation::Tanh,
        OutputActivation::Identity,
    )
    .unwrap();
    let mlp = Mlp::init(spec, &mut Rng::new(21));
    let x = array![[0.2, -0.4, 1.1], [0.0, 0.9, -0.3], [1.0, 1.0, 1.0]];
    let out = mlp.forward(&x).unwrap();

    for r in 0..3 {
        let mut hidden = [0.0f64; 4];
        for j in 0..4 {
            let mut z = mlp.params.biases[0][j];
            for i in 0..3 {
                z += x[[r, i]] * mlp.params.weights[0][[i, j]];
            }
            hidden[j] = z.tanh();
        }
        for k in 0..2 {
            let mut z = mlp.params.biases[1][k];
            for j in 0..4 {
                z += hidden[j] * mlp.params.weights[1][[j, k]];
            }
            assert!((out[[r, k]] - z).abs() < 1e-12, "row {r} col {k}");
        }
    }
}

#[test]
fn forward_rejects_wrong_input_width() {
    let spec = relu_spec(vec![3, 2]);
    let mlp = Mlp::init(spec, &mut Rng::new(0));
    assert!(matches!(
        mlp.forward(&Array2::zeros((4, 2))),
        Err(Error::ShapeMismatch { .. })
    ));
}

#[test]
fn backward_zero_output_grads_give_zero_param_grads() {
    let spec = relu_spec(vec![3, 6, 2]);
    let mlp = Mlp::init(spec, &mut Rng::new(3));
    let cache = mlp.forward_cached(&Array2::ones((5, 3))).unwrap();
    let (grads, input_grads) = mlp.backward(&cache, &Array2::zeros((5, 2))).unwrap();
    assert!(grads.weights.iter().all(|w| w.iter().all(|&x| x == 0.0)));
    assert!(input_grads.iter().all(|&x| x == 0.0));
}

#[test]
fn backward_linear_least_squares_matches_closed_form() {
    // Single linear layer, loss = (1/n) sum ||y_hat - y||^2.
    let spec = relu_spec(vec![3, 2]);
    let mlp = Mlp::init(spec, &mut Rng::new(7));
    let mut rng = Rng::new(8);
    let x = rng.normal_matrix(6, 3, 1.0);
    let y = rng.normal_matrix(6, 2, 1.0);
    let cache = mlp.forward_cached(&x).unwrap();
    let resid = cache.output() - &y;
    let n = x.nrows() as f64;
    let (grads, _) = mlp.backward(&cache, &(resid.mapv(|r| 2.0 * r / n))).unwrap();

    let expected = x.t().dot(&resid) * (2.0 / n);
    for (a, b) in grads.weights[0].iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    let expected_bias = resid.sum_axis(ndarray::Axis(0)) * (2.0 / n);
    for (a, b) in grads.biases[0].iter().zip(expected_bias.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

/// Loss used by the finite-difference checks: a fixed random linear
/// functional of the outputs, so dL/d(output) is a known constant matrix.
fn weighted_output_loss(mlp: &Mlp, x: &Array2<f64>, coeffs: &Array2<f64>) -> f64 {
    let out = mlp.forward(x).unwrap();
    (&out * coeffs).sum()
}

fn check_param_grads(spec: MlpSpec, seed: u64) {
    let mlp = Mlp::init(spec, &mut Rng::new(seed));
    let mut rng = Rng::new(seed ^ 0xABCD);
    let x = rng.normal_matrix(4, mlp.input_dim(), 1.0);
    let coeffs = rng.normal_matrix(4, mlp.output_dim(), 1.0);

    let cache = mlp.forward_cached(&x).unwrap();
    let (grads, input_grads) = mlp.backward(&cache, &coeffs).unwrap();

    let theta = mlp.params.flatten();
    let numeric = check::central_diff_grad(
        |flat| {
            let mut probe = mlp.clone();
            probe.params.assign_flat(flat);
            weighted_output_loss(&probe, &x, &coeffs)
        },
        &theta,
    );
    let err = check::max_rel_err(&grads.flatten(), &numeric);
    assert!(err < 1e-4, "param grad mismatch {err} for seed {seed}");

    // Input gradients against the same oracle.
    let flat_x: Vec<f64> = x.iter().cloned().collect();
    let numeric_x = check::central_diff_grad(
        |flat| {
            let xp = Array2::from_shape_vec(x.dim(), flat.to_vec()).unwrap();
            weighted_output_loss(&mlp, &xp, &coeffs)
        },
        &flat_x,
    );
    let analytic_x: Vec<f64> = input_grads.iter().cloned().collect();
    let err_x = check::max_rel_err(&analytic_x, &numeric_x);
    assert!(err_x < 1e-4, "input grad mismatch {err_x} for seed {seed}");
}

#[test]
fn backward_matches_central_differences_on_small_nets() {
    check_param_grads(
        MlpSpec::new(vec![3, 8, 2], Activation::Tanh, OutputActivation::Identity).unwrap(),
        1,
    );
    check_param_grads(
        MlpSpec::new(
            vec![2, 16, 16, 3],
            Activation::leaky_relu(),
            OutputActivation::Tanh,
        )
        .unwrap(),
        2,
    );
    check_param_grads(
        MlpSpec::new(vec![4, 5, 1], Activation::Relu, OutputActivation::Sigmoid).unwrap(),
        3,
    );
}

#[test]
fn backward_from_intermediate_layer_matches_truncated_network() {
    // Seeding gradients at hidden layer 0 of a 2-layer net must equal the
    // gradients of the 1-layer network made of the same first layer.
    let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh, OutputActivation::Identity).unwrap();
    let mlp = Mlp::init(spec, &mut Rng::new(17));
    let mut rng = Rng::new(18);
    let x = rng.normal_matrix(4, 3, 1.0);
    let seed_grads = rng.normal_matrix(4, 5, 1.0);

    let cache = mlp.forward_cached(&x).unwrap();
    let (grads, _) = mlp.backward_from_layer(&cache, 1, &seed_grads).unwrap();

    let trunc_spec =
        MlpSpec::new(vec![3, 5], Activation::Tanh, OutputActivation::Tanh).unwrap();
    let trunc = Mlp {
        spec: trunc_spec,
        params: MlpParams {
            weights: vec![mlp.params.weights[0].clone()],
            biases: vec![mlp.params.biases[0].clone()],
        },
    };
    let tcache = trunc.forward_cached(&x).unwrap();
    let (tgrads, _) = trunc.backward(&tcache, &seed_grads).unwrap();

    for (a, b) in grads.weights[0].iter().zip(tgrads.weights[0].iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    // Layers above the seed point receive no gradient.
    assert!(grads.weights[1].iter().all(|&g| g == 0.0));
}

#[test]
fn backward_rejects_mismatched_cache() {
    let spec = relu_spec(vec![3, 2]);
    let mlp = Mlp::init(spec, &mut Rng::new(0));
    let cache = mlp.forward_cached(&Array2::zeros((4, 3))).unwrap();
    assert!(mlp.backward(&cache, &Array2::zeros((5, 2))).is_err());
    assert!(mlp.backward(&cache, &Array2::zeros((4, 3))).is_err());
}

#[test]
fn adam_zero_grads_leave_params_unchanged() {
    let spec = relu_spec(vec![2, 3]);
    let mut mlp = Mlp::init(spec.clone(), &mut Rng::new(1));
    let before = mlp.params.clone();
    let mut opt = OptimizerState::new(OptimizerKind::adam(0.1, 0.9), &spec).unwrap();
    opt.step(&mut mlp.params, &MlpParams::zeros(&spec)).unwrap();
    assert_eq!(mlp.params, before);
    assert_eq!(opt.step_count, 1);
}

#[test]
fn adam_first_step_is_bias_corrected() {
    let spec = relu_spec(vec![1, 1]);
    let mut params = MlpParams::zeros(&spec);
    params.weights[0][[0, 0]] = 1.0;
    let mut grads = MlpParams::zeros(&spec);
    grads.weights[0][[0, 0]] = 1.0;
    let mut opt = OptimizerState::new(OptimizerKind::adam(0.1, 0.9), &spec).unwrap();
    opt.step(&mut params, &grads).unwrap();
    // m_hat = v_hat = 1 after correction, so the step is alpha / (1 + eps).
    assert!((params.weights[0][[0, 0]] - 0.9).abs() < 1e-6);
}

#[test]
fn rmsprop_reproduces_the_recurrence() {
    let (alpha, decay, eps) = (0.01, 0.9, 1e-8);
    let spec = relu_spec(vec![1, 1]);
    let mut params = MlpParams::zeros(&spec);
    let mut grads = MlpParams::zeros(&spec);
    grads.weights[0][[0, 0]] = 1.0;
    let mut opt =
        OptimizerState::new(OptimizerKind::Rmsprop { alpha, decay, eps }, &spec).unwrap();

    // Direct recurrence, evaluated independently.
    let mut v = 0.0;
    let mut p = 0.0;
    for _ in 0..2 {
        v = decay * v + (1.0 - decay);
        p -= alpha * 1.0 / (v.sqrt() + eps);
        opt.step(&mut params, &grads).unwrap();
        assert!((params.weights[0][[0, 0]] - p).abs() < 1e-15);
    }
    assert!((params.weights[0][[0, 0]] + 0.05456435).abs() < 1e-6);
}

#[test]
fn optimizer_rejects_non_finite_grads() {
    let spec = relu_spec(vec![1, 1]);
    let mut params = MlpParams::zeros(&spec);
    let mut grads = MlpParams::zeros(&spec);
    grads.weights[0][[0, 0]] = f64::NAN;
    let mut opt = OptimizerState::new(OptimizerKind::adam(0.1, 0.9), &spec).unwrap();
    assert!(matches!(
        opt.step(&mut params, &grads),
        Err(Error::NonFinite(_))
    ));
}

#[test]
fn ema_decay_zero_copies_current() {
    let spec = relu_spec(vec![2, 2]);
    let current = init_params(&spec, &mut Rng::new(4));
    let mut ema = EmaParams::new(MlpParams::zeros(&spec), 0.0).unwrap();
    ema.update(&current).unwrap();
    assert_eq!(ema.shadow, current);
}

#[test]
fn ema_decay_one_freezes_shadow() {
    let spec = relu_spec(vec![2, 2]);
    let start = init_params(&spec, &mut Rng::new(4));
    let mut ema = EmaParams::new(start.clone(), 1.0).unwrap();
    ema.update(&init_params(&spec, &mut Rng::new(5))).unwrap();
    assert_eq!(ema.shadow, start);
}

#[test]
fn ema_half_decay_two_updates() {
    let spec = relu_spec(vec![1, 1]);
    let mut current = MlpParams::zeros(&spec);
    current.weights[0][[0, 0]] = 2.0;
    let mut ema = EmaParams::new(MlpParams::zeros(&spec), 0.5).unwrap();
    ema.update(&current).unwrap();
    ema.update(&current).unwrap();
    assert_eq!(ema.shadow.weights[0][[0, 0]], 1.5);
}

#[test]
fn ema_converges_geometrically_to_constant_params() {
    let spec = relu_spec(vec![1, 1]);
    let mut current = MlpParams::zeros(&spec);
    current.weights[0][[0, 0]] = 1.0;
    let decay = 0.9;
    let mut ema = EmaParams::new(MlpParams::zeros(&spec), decay).unwrap();
    let mut prev_gap = 1.0;
    for n in 1..=20 {
        ema.update(&current).unwrap();
        let gap = (ema.shadow.weights[0][[0, 0]] - 1.0).abs();
        assert!(gap < prev_gap, "not monotone at step {n}");
        assert!((gap - decay.powi(n)).abs() < 1e-12);
        prev_gap = gap;
    }
}

#[test]
fn flatten_assign_round_trip() {
    let spec = relu_spec(vec![3, 4, 2]);
    let params = init_params(&spec, &mut Rng::new(9));
    let flat = params.flatten();
    assert_eq!(flat.len(), params.param_count());
    let mut restored = MlpParams::zeros(&spec);
    restored.assign_flat(&flat);
    assert_eq!(restored, params);
}
