use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::tensor::{Shape, Tensor};

fn random(shape: impl Into<Shape>, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = shape.into();
    let data = (0..shape.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Direct cross-correlation, no im2col.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f32], stride: usize, pad: usize) -> Tensor {
    let (s, ws) = (x.shape(), w.shape());
    let oh = (s.height + 2 * pad - ws.height) / stride + 1;
    let ow = (s.width + 2 * pad - ws.width) / stride + 1;
    let mut out = Tensor::zeros([s.batch, ws.batch, oh, ow]);
    for n in 0..s.batch {
        for co in 0..ws.batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co] as f64;
                    for ci in 0..s.channels {
                        for ky in 0..ws.height {
                            for kx in 0..ws.width {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize {
                                    continue;
                                }
                                acc += x.at(n, ci, iy as usize, ix as usize) as f64 * w.at(co, ci, ky, kx) as f64;
                            }
                        }
                    }
                    let i = out.index(n, co, oy, ox);
                    out.data_mut()[i] = acc as f32;
                }
            }
        }
    }
    out
}

fn conv_once(x: Tensor, w: Tensor, b: Option<Tensor>, spec: &ConvSpec) -> crate::Result<Tensor> {
    let mut g = Graph::new();
    let (x, w) = (g.constant(x), g.constant(w));
    let b = b.map(|b| g.constant(b));
    let y = g.conv2d(x, w, b, spec)?;
    Ok(g.value(y).clone())
}

fn conv_t_once(x: Tensor, w: Tensor, spec: &ConvSpec) -> crate::Result<Tensor> {
    let mut g = Graph::new();
    let (x, w) = (g.constant(x), g.constant(w));
    let y = g.conv_transpose2d(x, w, None, spec)?;
    Ok(g.value(y).clone())
}

#[test]
fn identity_kernel_returns_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random([1, 1, 4, 4], &mut rng);
    let spec = ConvSpec::new(1, 1, 1, 1, 0);
    let y = conv_once(
        x.clone(),
        Tensor::full([1, 1, 1, 1], 1.0),
        Some(Tensor::zeros([1, 1, 1, 1])),
        &spec,
    )
    .unwrap();
    assert_eq!(y, x);
}

#[test]
fn stride_two_halves_256() {
    let spec = ConvSpec::new(1, 1, 3, 2, 1);
    assert_eq!(spec.conv_output_size(256, 256).unwrap(), (128, 128));
    let y = conv_once(
        Tensor::zeros([1, 1, 256, 256]),
        Tensor::zeros([1, 1, 3, 3]),
        None,
        &spec,
    )
    .unwrap();
    assert_eq!(y.shape(), Shape::new(1, 1, 128, 128));
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random([1, 2, 5, 5], &mut rng);
    let w = random([3, 2, 3, 3], &mut rng);
    let b = random([1, 3, 1, 1], &mut rng);
    let spec = ConvSpec::new(2, 3, 3, 2, 1);
    let got = conv_once(x.clone(), w.clone(), Some(b.clone()), &spec).unwrap();
    let want = conv_oracle(&x, &w, b.data(), 2, 1);
    assert_eq!(got.shape(), want.shape());
    for (a, e) in got.data().iter().zip(want.data()) {
        assert!((a - e).abs() < 1e-6, "{a} vs {e}");
    }
}

#[test]
fn conv_channel_mismatch_names_axis() {
    let spec = ConvSpec::new(3, 4, 3, 2, 1);
    let err = conv_once(Tensor::zeros([1, 2, 8, 8]), Tensor::zeros([4, 3, 3, 3]), None, &spec).unwrap_err();
    match err {
        Error::Dimension {
            axis, expected, found, ..
        } => {
            assert_eq!((axis, expected, found), ("channel", 3, 2));
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = conv_once(Tensor::zeros([1, 3, 8, 8]), Tensor::zeros([4, 3, 2, 3]), None, &spec).unwrap_err();
    assert!(matches!(
        err,
        Error::Dimension {
            axis: "kernel height",
            ..
        }
    ));
    let tiny = ConvSpec::new(1, 1, 5, 1, 0);
    assert!(matches!(
        conv_once(Tensor::zeros([1, 1, 3, 3]), Tensor::zeros([1, 1, 5, 5]), None, &tiny),
        Err(Error::Geometry { .. })
    ));
}

#[test]
fn transpose_minimal_doubling() {
    let spec = ConvSpec::new(1, 1, 3, 2, 1).with_output_padding(1);
    let y = conv_t_once(Tensor::full([1, 1, 1, 1], 1.0), Tensor::full([1, 1, 3, 3], 1.0), &spec).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
}

#[test]
fn transpose_bottleneck_shape() {
    let spec = ConvSpec::new(512, 512, 3, 2, 1).with_output_padding(1);
    let y = conv_t_once(Tensor::zeros([1, 512, 1, 1]), Tensor::zeros([512, 512, 3, 3]), &spec).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 512, 2, 2));
    let two = ConvSpec::new(512, 512, 2, 2, 0);
    let y = conv_t_once(Tensor::zeros([1, 512, 1, 1]), Tensor::zeros([512, 512, 2, 2]), &two).unwrap();
    assert_eq!(y.shape(), Shape::new(1, 512, 2, 2));
}

#[test]
fn transpose_rejects_degenerate_geometry() {
    let spec = ConvSpec::new(1, 1, 1, 1, 1);
    assert!(matches!(spec.transpose_output_size(1, 1), Err(Error::Geometry { .. })));
    let bad_op = ConvSpec::new(1, 1, 3, 2, 1).with_output_padding(2);
    assert!(bad_op.transpose_output_size(4, 4).is_err());
}

#[test]
fn adjoint_identity_random_5x5() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = ConvSpec::new(2, 3, 3, 2, 1);
    let x = random([1, 2, 5, 5], &mut rng);
    let w = random(spec.conv_weight_shape(), &mut rng);
    let (oh, ow) = spec.conv_output_size(5, 5).unwrap();
    let y = random([1, 3, oh, ow], &mut rng);
    let tspec = spec.transposed().with_output_padding((5 + 2 - 3) % 2);
    let lhs = conv_once(x.clone(), w.clone(), None, &spec).unwrap().dot(&y).unwrap();
    let ty = conv_t_once(y, w, &tspec).unwrap();
    assert_eq!(ty.shape(), x.shape());
    let rhs = x.dot(&ty).unwrap();
    assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
}

#[test]
fn leaky_relu_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap());
    let y = g.leaky_relu(x, 0.2).unwrap();
    assert_eq!(g.value(y).data(), &[-0.2, 0.0, 2.0]);
    let p = g.constant(Tensor::from_vec([1, 1, 1, 3], vec![0.1, 5.0, 3.0]).unwrap());
    let q = g.leaky_relu(p, 0.2).unwrap();
    assert_eq!(g.value(q).data(), g.value(p).data());
    assert!(g.leaky_relu(p, 1.0).is_err());
}

#[test]
fn tanh_and_sigmoid_values() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_vec([1, 1, 1, 3], vec![0.0, 20.0, -20.0]).unwrap());
    let t = g.tanh(x);
    assert_eq!(g.value(t).data()[0], 0.0);
    assert!((g.value(t).data()[1] - 1.0).abs() < 1e-6);
    assert!((g.value(t).data()[2] + 1.0).abs() < 1e-6);
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data()[0], 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let v: f32 = rng.random_range(-10.0..10.0);
        let a = graph::sigmoid(v);
        let b = graph::sigmoid(-v);
        assert!((a - (1.0 - b)).abs() < 1e-6);
    }
}

#[test]
fn dropout_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random([1, 2, 8, 8], &mut rng);
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let off = g.dropout::<ChaCha8Rng>(v, 0.1, None).unwrap();
    assert_eq!(g.value(off).data(), x.data());
    let zero_rate = g.dropout(v, 0.0, Some(&mut rng)).unwrap();
    assert_eq!(g.value(zero_rate).data(), x.data());
    assert!(g.dropout(v, 1.0, Some(&mut rng)).is_err());
}

#[test]
fn dropout_zero_fraction_concentrates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut g = Graph::new();
    let v = g.constant(Tensor::full([1, 1, 1000, 1000], 1.0));
    let d = g.dropout(v, 0.1, Some(&mut rng)).unwrap();
    let out = g.value(d).data();
    let zeros = out.iter().filter(|&&v| v == 0.0).count() as f64 / out.len() as f64;
    assert!((zeros - 0.1).abs() < 0.002, "{zeros}");
    let survivor = out.iter().find(|&&v| v != 0.0).unwrap();
    assert!((survivor - 1.0 / 0.9).abs() < 1e-6);
}

#[test]
fn concat_shapes_and_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (a, b) = (random([1, 3, 4, 4], &mut rng), random([1, 31, 4, 4], &mut rng));
    let mut g = Graph::new();
    let (va, vb) = (g.variable(a.clone()), g.variable(b.clone()));
    let c = g.concat_channels(va, vb).unwrap();
    assert_eq!(g.value(c).shape(), Shape::new(1, 34, 4, 4));
    assert_eq!(&g.value(c).data()[..48], a.data());
    assert_eq!(&g.value(c).data()[48..], b.data());
    let w = random([1, 34, 4, 4], &mut rng);
    let l = g.weighted_sum(c, &w).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(va).unwrap(), &w.data()[..48]);
    assert_eq!(g.grad(vb).unwrap(), &w.data()[48..]);
    let bad = g.constant(Tensor::zeros([1, 1, 4, 5]));
    assert!(matches!(
        g.concat_channels(va, bad),
        Err(Error::Dimension { axis: "width", .. })
    ));
}

#[test]
fn bce_examples() {
    let mut g = Graph::new();
    let half = g.constant(Tensor::full([1, 1, 8, 8], 0.5));
    let l = g.bce_loss(half, true).unwrap();
    assert!((g.scalar_f64(l) - std::f64::consts::LN_2).abs() < 1e-7);
    let near_one = g.constant(Tensor::full([1, 1, 8, 8], 1.0));
    let l = g.bce_loss(near_one, true).unwrap();
    assert!(g.scalar_f64(l) < 1e-6);
    let bad = g.constant(Tensor::full([1, 1, 1, 1], 1.5));
    assert!(matches!(g.bce_loss(bad, false), Err(Error::Contract(_))));
    let nan = g.constant(Tensor::full([1, 1, 1, 1], f32::NAN));
    assert!(g.bce_loss(nan, false).is_err());
}

#[test]
fn bce_matches_hand_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p: Vec<f32> = (0..64).map(|_| rng.random_range(0.01f32..0.99)).collect();
    let mut g = Graph::new();
    let v = g.constant(Tensor::from_vec([1, 1, 8, 8], p.clone()).unwrap());
    for real in [true, false] {
        let l = g.bce_loss(v, real).unwrap();
        let mut sum = 0.0f64;
        for &x in &p {
            let x = x as f64;
            sum += if real { -x.ln() } else { -(1.0 - x).ln() };
        }
        assert!((g.scalar_f64(l) - sum / 64.0).abs() < 1e-6);
    }
}

#[test]
fn l1_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = random([1, 2, 3, 3], &mut rng);
    let mut g = Graph::new();
    let va = g.constant(a.clone());
    let l = g.l1_loss(va, va).unwrap();
    assert_eq!(g.scalar_f64(l), 0.0);
    let shifted = Tensor::from_vec(a.shape(), a.data().iter().map(|v| v + 0.25).collect()).unwrap();
    let vs = g.constant(shifted);
    let l = g.l1_loss(vs, va).unwrap();
    assert!((g.scalar_f64(l) - 0.25).abs() < 1e-6);
    let b = random([1, 2, 3, 3], &mut rng);
    let vb = g.constant(b.clone());
    let l = g.l1_loss(va, vb).unwrap();
    let want: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() as f64)
        .sum::<f64>()
        / 18.0;
    assert!((g.scalar_f64(l) - want).abs() < 1e-9);
    let wrong = g.constant(Tensor::zeros([1, 3, 3, 3]));
    assert!(matches!(
        g.l1_loss(va, wrong),
        Err(Error::Dimension { axis: "channel", .. })
    ));
}

fn single_input_check(
    x: Tensor,
    mut build: impl FnMut(&mut Graph, Var) -> crate::Result<Var>,
    seed: u64,
    opts: &GradCheckOptions,
) -> GradCheckReport {
    let mut ps = ParamSet::new();
    let shape = x.shape();
    ps.push("x", Parameter::new(x));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = random(shape, &mut rng);
    let mut inner = |g: &mut Graph, v: &[Var]| -> crate::Result<Var> {
        let y = build(g, v[0])?;
        let probe = if g.value(y).shape() == probe.shape() {
            probe.clone()
        } else {
            let mut r = ChaCha8Rng::seed_from_u64(seed + 1);
            random(g.value(y).shape(), &mut r)
        };
        g.weighted_sum(y, &probe)
    };
    grad_check(&mut ps, &mut inner, opts).unwrap()
}

/// Values bounded away from the leaky ReLU kink.
fn away_from_zero(shape: impl Into<Shape>, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = shape.into();
    let data = (0..shape.numel())
        .map(|_| {
            let m = rng.random_range(0.1f32..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

#[test]
fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let opts = GradCheckOptions {
        epsilon: 1e-2,
        ..GradCheckOptions::default()
    };
    let r = single_input_check(
        away_from_zero([1, 2, 3, 3], &mut rng),
        |g, x| g.leaky_relu(x, 0.2),
        11,
        &opts,
    );
    assert!(r.max_rel_error < 1e-4, "leaky {r:?}");
    let r = single_input_check(random([1, 2, 3, 3], &mut rng), |g, x| Ok(g.tanh(x)), 12, &opts);
    assert!(r.max_rel_error < 1e-4, "tanh {r:?}");
    let r = single_input_check(random([1, 2, 3, 3], &mut rng), |g, x| Ok(g.sigmoid(x)), 13, &opts);
    assert!(r.max_rel_error < 1e-4, "sigmoid {r:?}");
}

#[test]
fn concat_and_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let other = random([1, 2, 3, 3], &mut rng);
    let opts = GradCheckOptions::default();
    let r = single_input_check(
        random([1, 1, 3, 3], &mut rng),
        |g, x| {
            let o = g.constant(other.clone());
            g.concat_channels(x, o)
        },
        15,
        &opts,
    );
    assert!(r.max_rel_error < 1e-4, "concat {r:?}");

    let target = random([1, 1, 3, 3], &mut rng);
    let mut ps = ParamSet::new();
    ps.push("x", Parameter::new(away_from_zero([1, 1, 3, 3], &mut rng)));
    let r = grad_check(
        &mut ps,
        |g, v| {
            let t = g.constant(Tensor::zeros(target.shape()));
            g.l1_loss(v[0], t)
        },
        &GradCheckOptions { epsilon: 1e-3, ..opts },
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "l1 {r:?}");

    let mut ps = ParamSet::new();
    let p: Vec<f32> = (0..9).map(|_| rng.random_range(0.1f32..0.9)).collect();
    ps.push("p", Parameter::new(Tensor::from_vec([1, 1, 3, 3], p).unwrap()));
    for real in [true, false] {
        let r = grad_check(
            &mut ps,
            |g, v| g.bce_loss(v[0], real),
            &GradCheckOptions { epsilon: 1e-3, ..opts },
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "bce {r:?}");
    }
}

#[test]
fn conv_layer_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    // Convolution is linear in each argument, so a wide step carries no
    // truncation error and keeps f32 rounding of the outputs negligible.
    let opts = GradCheckOptions {
        epsilon: 0.5,
        richardson: false,
        ..GradCheckOptions::default()
    };
    let spec = ConvSpec::new(2, 3, 3, 2, 1);
    let mut ps = ParamSet::new();
    ps.push("x", Parameter::new(random([1, 2, 5, 5], &mut rng)));
    ps.push("w", Parameter::new(random(spec.conv_weight_shape(), &mut rng)));
    ps.push("b", Parameter::new(random(spec.bias_shape(), &mut rng)));
    let probe = random([1, 3, 3, 3], &mut rng);
    let r = grad_check(
        &mut ps,
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), &spec)?;
            g.weighted_sum(y, &probe)
        },
        &opts,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "conv {r:?}");

    let tspec = ConvSpec::new(3, 2, 3, 2, 1).with_output_padding(1);
    let mut ps = ParamSet::new();
    ps.push("x", Parameter::new(random([1, 3, 3, 3], &mut rng)));
    ps.push("w", Parameter::new(random(tspec.transpose_weight_shape(), &mut rng)));
    ps.push("b", Parameter::new(random(tspec.bias_shape(), &mut rng)));
    let probe = random([1, 2, 6, 6], &mut rng);
    let r = grad_check(
        &mut ps,
        |g, v| {
            let y = g.conv_transpose2d(v[0], v[1], Some(v[2]), &tspec)?;
            g.weighted_sum(y, &probe)
        },
        &opts,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "conv_transpose {r:?}");
}

#[test]
fn flipped_backward_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let r = single_input_check(
        away_from_zero([1, 1, 3, 3], &mut rng),
        |g, x| {
            let xs = g.value(x).clone();
            let out = Tensor::from_vec(xs.shape(), xs.data().iter().map(|&v| v.max(0.2 * v)).collect())?;
            Ok(g.custom(
                &[x],
                out,
                Box::new(|inputs, _out, up| {
                    let g: Vec<f32> = inputs[0]
                        .data()
                        .iter()
                        .zip(up)
                        .map(|(&v, &u)| -(if v > 0.0 { u } else { 0.2 * u }))
                        .collect();
                    vec![Some(g)]
                }),
            ))
        },
        18,
        &GradCheckOptions::default(),
    );
    assert!(r.max_rel_error > 1.0, "{r:?}");
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros([1, 1, 2, 2]));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(50))]
    #[test]
    fn adjointness_over_random_specs(
        cin in 1usize..4, cout in 1usize..4, k in 1usize..5, stride in 1usize..4,
        pad in 0usize..3, h in 3usize..9, w in 3usize..9, seed in 0u64..u64::MAX,
    ) {
        let spec = ConvSpec::new(cin, cout, k, stride, pad);
        proptest::prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let (oh, ow) = spec.conv_output_size(h, w).unwrap();
        // output padding only recovers one axis residue at a time
        proptest::prop_assume!((h + 2 * pad - k) % stride == (w + 2 * pad - k) % stride);
        let tspec = spec.transposed().with_output_padding((h + 2 * pad - k) % stride);
        proptest::prop_assume!(tspec.transpose_output_size(oh, ow).map(|s| s == (h, w)).unwrap_or(false));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random([1, cin, h, w], &mut rng);
        let wt = random(spec.conv_weight_shape(), &mut rng);
        let y = random([1, cout, oh, ow], &mut rng);
        let lhs = conv_once(x.clone(), wt.clone(), None, &spec).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&conv_t_once(y, wt, &tspec).unwrap()).unwrap();
        proptest::prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }
}
