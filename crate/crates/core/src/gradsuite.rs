//! Finite-difference gradient suites over every layer primitive and over
//! small end-to-end models, shared by the CLI and the tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{grad_check, ConvSpec, GradCheckOptions, GradCheckReport, Graph, ParamSet, Parameter, Var};
use crate::error::Result;
use crate::models::{build_discriminator_with, build_generator, DiscriminatorConfig, GeneratorConfig};
use crate::tensor::{Shape, Tensor};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub report: GradCheckReport,
    pub tolerance: f64,
}

impl SuiteResult {
    /// Passes when the error is within tolerance and at least two thirds
    /// of the probes avoided kinks.
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= self.tolerance && self.report.checked >= 2 * self.report.skipped
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<16} max_rel_error={:.3e} tol={:.0e} checked={} skipped={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.report.max_rel_error,
            self.tolerance,
            self.report.checked,
            self.report.skipped
        )
    }
}

fn random(shape: impl Into<Shape>, rng: &mut ChaCha8Rng) -> Tensor {
    let shape = shape.into();
    Tensor::from_vec(
        shape,
        (0..shape.numel()).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )
    .unwrap()
}

/// Uniform magnitudes in [0.1, 1) with random sign.
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

fn params(inputs: Vec<(&str, Tensor)>) -> ParamSet {
    let mut ps = ParamSet::new();
    for (n, t) in inputs {
        ps.push(n, Parameter::new(t));
    }
    ps
}

/// Contracts the op's output with a fixed random probe.
fn probed<F>(mut ps: ParamSet, mut op: F, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check(
        &mut ps,
        |g, v| {
            let y = op(g, v)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probe = random(g.value(y).shape(), &mut rng);
            g.weighted_sum(y, &probe)
        },
        opts,
    )
}

fn faulty_leaky_relu(g: &mut Graph, x: Var) -> Result<Var> {
    let xs = g.value(x).clone();
    let out = Tensor::from_vec(xs.shape(), xs.data().iter().map(|&v| v.max(0.2 * v)).collect())?;
    Ok(g.custom(
        &[x],
        out,
        Box::new(|inputs, _out, up| {
            let grad = inputs[0]
                .data()
                .iter()
                .zip(up)
                .map(|(&v, &u)| -(if v > 0.0 { u } else { 0.2 * u }))
                .collect();
            vec![Some(grad)]
        }),
    ))
}

/// One check per primitive. With `inject_fault` an extra leaky ReLU with a
/// sign-flipped backward rule is included, which must fail.
pub fn layer_suite(inject_fault: bool) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let smooth = GradCheckOptions {
        epsilon: 1e-2,
        ..GradCheckOptions::default()
    };
    // Linear ops: a wide step has no truncation error and swamps rounding.
    let linear = GradCheckOptions {
        epsilon: 0.5,
        richardson: false,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    let mut push = |name, report| {
        out.push(SuiteResult {
            name,
            report,
            tolerance: LAYER_TOLERANCE,
        })
    };

    let spec = ConvSpec::new(2, 3, 3, 2, 1);
    let ps = params(vec![
        ("x", random([1, 2, 7, 7], &mut rng)),
        ("w", random(spec.conv_weight_shape(), &mut rng)),
        ("b", random(spec.bias_shape(), &mut rng)),
    ]);
    push(
        "conv2d",
        probed(ps, |g, v| g.conv2d(v[0], v[1], Some(v[2]), &spec), 1, &linear)?,
    );

    let tspec = ConvSpec::new(3, 2, 2, 2, 0);
    let ps = params(vec![
        ("x", random([1, 3, 3, 3], &mut rng)),
        ("w", random(tspec.transpose_weight_shape(), &mut rng)),
        ("b", random(tspec.bias_shape(), &mut rng)),
    ]);
    push(
        "conv_transpose2d",
        probed(
            ps,
            |g, v| g.conv_transpose2d(v[0], v[1], Some(v[2]), &tspec),
            2,
            &linear,
        )?,
    );

    let ps = params(vec![("x", away_from_zero([1, 2, 4, 4], &mut rng))]);
    push("leaky_relu", probed(ps, |g, v| g.leaky_relu(v[0], 0.2), 3, &smooth)?);
    let ps = params(vec![("x", random([1, 2, 4, 4], &mut rng))]);
    push("tanh", probed(ps, |g, v| Ok(g.tanh(v[0])), 4, &smooth)?);
    let ps = params(vec![("x", random([1, 2, 4, 4], &mut rng))]);
    push("sigmoid", probed(ps, |g, v| Ok(g.sigmoid(v[0])), 5, &smooth)?);

    let mut drop_rng = ChaCha8Rng::seed_from_u64(6);
    let mask_seed: u64 = drop_rng.random();
    let ps = params(vec![("x", random([1, 2, 4, 4], &mut rng))]);
    push(
        "dropout",
        probed(
            ps,
            |g, v| {
                let mut r = ChaCha8Rng::seed_from_u64(mask_seed);
                g.dropout(v[0], 0.25, Some(&mut r))
            },
            7,
            &linear,
        )?,
    );

    let ps = params(vec![
        ("a", random([1, 1, 3, 3], &mut rng)),
        ("b", random([1, 2, 3, 3], &mut rng)),
    ]);
    push("concat", probed(ps, |g, v| g.concat_channels(v[0], v[1]), 8, &linear)?);
    let ps = params(vec![
        ("a", random([1, 2, 3, 3], &mut rng)),
        ("b", random([1, 2, 3, 3], &mut rng)),
    ]);
    push("add", probed(ps, |g, v| g.add(v[0], v[1]), 9, &linear)?);

    let target = random([1, 2, 3, 3], &mut rng);
    let mut ps = params(vec![("x", away_from_zero([1, 2, 3, 3], &mut rng))]);
    push(
        "l1_loss",
        grad_check(
            &mut ps,
            |g, v| {
                let t = g.constant(target.clone());
                g.l1_loss(v[0], t)
            },
            &GradCheckOptions {
                epsilon: 1e-2,
                richardson: false,
                ..GradCheckOptions::default()
            },
        )?,
    );

    for (name, real) in [("bce_real", true), ("bce_fake", false)] {
        let p: Vec<f32> = (0..9).map(|_| rng.random_range(0.1f32..0.9)).collect();
        let mut ps = params(vec![("p", Tensor::from_vec([1, 1, 3, 3], p)?)]);
        push(
            name,
            grad_check(
                &mut ps,
                |g, v| g.bce_loss(v[0], real),
                &GradCheckOptions {
                    epsilon: 1e-3,
                    ..GradCheckOptions::default()
                },
            )?,
        );
    }

    if inject_fault {
        let ps = params(vec![("x", away_from_zero([1, 1, 3, 3], &mut rng))]);
        push(
            "faulty_leaky",
            probed(ps, |g, v| faulty_leaky_relu(g, v[0]), 10, &smooth)?,
        );
    }
    Ok(out)
}

/// End-to-end checks: a depth-4 generator on 16x16 input under an L1 loss,
/// and a narrow discriminator with respect to both of its inputs.
pub fn model_suite() -> Result<Vec<SuiteResult>> {
    let mut c = GeneratorConfig::full(16);
    c.base_filters = 4;
    c.filter_cap = 8;
    c.final_hidden = 6;
    let mut gen = build_generator(&c, 2)?;
    // Unit-order activations; at the 0.02 init every gradient would sit
    // below the relative-error floor and the check would be vacuous.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (_, p) in gen.params_mut().iter_mut() {
        let s = p.value.shape();
        let std = if s.batch == 1 {
            0.3
        } else {
            1.0 / ((s.channels * s.height * s.width) as f32).sqrt()
        };
        for v in p.value.data_mut() {
            *v = rng.random_range(-1.7..1.7f32) * std;
        }
    }
    let x = random([1, 3, 16, 16], &mut rng);
    let target = random([1, 31, 16, 16], &mut rng);
    let frozen = gen.clone();
    let opts = GradCheckOptions {
        max_elements: 40,
        epsilon: 0.05,
        ..GradCheckOptions::default()
    };
    let g_report = grad_check(
        gen.params_mut(),
        |g, vars| {
            let xi = g.constant(x.clone());
            let y = frozen.forward::<ChaCha8Rng>(g, vars, xi, None)?;
            let t = g.constant(target.clone());
            g.l1_loss(y, t)
        },
        &opts,
    )?;

    let d = build_discriminator_with(
        &DiscriminatorConfig {
            base_filters: 2,
            ..DiscriminatorConfig::default()
        },
        3,
    )?;
    let mut inputs = params(vec![
        ("rgb", random([1, 3, 32, 32], &mut rng)),
        ("hs", random([1, 31, 32, 32], &mut rng)),
    ]);
    let d_report = grad_check(
        &mut inputs,
        |g, v| {
            let dv = d.params().bind(g, false);
            let y = d.forward(g, &dv, v[0], v[1])?;
            g.bce_loss(y, true)
        },
        &GradCheckOptions {
            max_elements: 30,
            ..GradCheckOptions::default()
        },
    )?;
    Ok(vec![
        SuiteResult {
            name: "generator",
            report: g_report,
            tolerance: MODEL_TOLERANCE,
        },
        SuiteResult {
            name: "discriminator",
            report: d_report,
            tolerance: MODEL_TOLERANCE,
        },
    ])
}
