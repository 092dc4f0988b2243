//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::optim::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Perturbation applied to each probed weight.
    pub epsilon: f32,
    /// Denominator floor of the relative error,
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Probe at most this many elements per parameter (evenly spaced).
    pub max_elements: usize,
    /// Combine steps `e` and `e/2` to cancel the second-order truncation
    /// term.
    pub richardson: bool,
    /// How often the step is halved when it straddles a kink before the
    /// probe is skipped.
    pub kink_retries: u32,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-2,
            floor: 1e-3,
            max_elements: usize::MAX,
            richardson: true,
            kink_retries: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Probes dropped because every tried step crossed a kink.
    pub skipped: usize,
}

fn eval<F>(params: &ParamSet, loss_fn: &mut F) -> Result<(f64, u64)>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let loss = loss_fn(&mut g, &vars)?;
    Ok((g.scalar_f64(loss), g.kink_pattern()))
}

/// Symmetric difference quotient at step `eps`, or `None` when either
/// side lands on a different smooth piece than the base point.
fn difference<F>(
    params: &mut ParamSet,
    slot: usize,
    idx: usize,
    eps: f32,
    pattern: u64,
    loss_fn: &mut F,
) -> Result<Option<f64>>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let orig = params.get(slot).value.data()[idx];
    params.get_mut(slot).value.data_mut()[idx] = orig + eps;
    let plus = eval(params, loss_fn);
    params.get_mut(slot).value.data_mut()[idx] = orig - eps;
    let minus = eval(params, loss_fn);
    params.get_mut(slot).value.data_mut()[idx] = orig;
    let ((plus, pp), (minus, pm)) = (plus?, minus?);
    if pp != pattern || pm != pattern {
        return Ok(None);
    }
    // Use the step actually representable in f32.
    let h = ((orig + eps) as f64) - ((orig - eps) as f64);
    Ok(Some((plus - minus) / h))
}

/// Compares the analytic gradient of `loss_fn` with respect to every
/// parameter against `(f(w + e) - f(w - e)) / 2e`. `loss_fn` receives a
/// fresh graph and one bound handle per parameter slot and must be
/// deterministic; a closure that returns different losses for identical
/// weights is rejected.
pub fn grad_check<F>(params: &mut ParamSet, mut loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g, true);
    let loss = loss_fn(&mut g, &vars)?;
    let base = g.scalar_f64(loss);
    let pattern = g.kink_pattern();
    g.backward(loss)?;
    let analytic: Vec<Vec<f32>> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, (_, p))| g.grad(v).map_or_else(|| vec![0.0; p.numel()], <[f32]>::to_vec))
        .collect();
    drop(g);

    let (again, _) = eval(params, &mut loss_fn)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::Contract(format!(
            "grad_check: loss is not deterministic ({base} then {again})"
        )));
    }

    let eps = opts.epsilon;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for slot in 0..params.len() {
        let n = params.get(slot).numel();
        let probes = opts.max_elements.min(n).max(1);
        for j in 0..probes {
            let idx = if probes == n { j } else { j * n / probes };
            let mut step = eps;
            let mut numeric = None;
            for _ in 0..=opts.kink_retries {
                let Some(d1) = difference(params, slot, idx, step, pattern, &mut loss_fn)? else {
                    step /= 2.0;
                    continue;
                };
                if !opts.richardson {
                    numeric = Some(d1);
                    break;
                }
                if let Some(d2) = difference(params, slot, idx, step / 2.0, pattern, &mut loss_fn)? {
                    numeric = Some((4.0 * d2 - d1) / 3.0);
                    break;
                }
                step /= 2.0;
            }
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            let a = analytic[slot][idx] as f64;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(slot).to_string(), idx));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
