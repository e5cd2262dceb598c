//! Finite-difference gradient oracle.
//!
//! Central differences, always evaluated in `f64` whatever precision the
//! function under test uses. Coordinate `i` is probed with step
//! `h * max(1, |x_i|)`.

mod sweep;

pub use sweep::{sweep_ops, OpReport, OP_NAMES};

use crate::array::Array;
use crate::error::{Error, Result};
use crate::graph::{no_grad, Node};
use crate::precision::{with_precision, Precision};

/// Default base step, the cube root of `f64` machine epsilon.
pub fn default_step() -> f64 {
    f64::EPSILON.cbrt()
}

fn probe_step(h: f64, x: f64) -> f64 {
    h * x.abs().max(1.0)
}

/// Central-difference gradient of a scalar function at `x`.
pub fn finite_diff_gradient<F>(mut f: F, x: &Array, h: f64) -> Result<Array>
where
    F: FnMut(&Array) -> Result<f64>,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidConfig(
            "finite-difference step must be positive".into(),
        ));
    }
    let base = x.to_precision(Precision::F64);
    let mut probe = base.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xi = base.data()[i];
        let step = probe_step(h, xi);
        probe.data_mut()[i] = xi + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = xi - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = xi;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                op: "finite difference probe",
            });
        }
        grad.push((up - down) / (2.0 * step));
    }
    Array::with_precision(x.shape().to_vec(), grad, Precision::F64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Flat index over all checked parameters, in order.
    pub worst_index: usize,
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
}

impl GradCheckReport {
    /// Compares autodiff partials against oracle values. An element passes
    /// when its relative error is within `rtol` or its absolute error within
    /// `atol`. `skip[i]` excludes coordinate `i`.
    pub fn compare(
        analytic: &[f64],
        oracle: &[f64],
        skip: &[bool],
        rtol: f64,
        atol: f64,
    ) -> GradCheckReport {
        let mut report = GradCheckReport {
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            worst_index: 0,
            passed: true,
            checked: 0,
            skipped: 0,
        };
        let mut worst_score = f64::NEG_INFINITY;
        for (i, (&a, &o)) in analytic.iter().zip(oracle).enumerate() {
            if skip.get(i).copied().unwrap_or(false) {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let abs = (a - o).abs();
            let scale = a.abs().max(o.abs());
            let rel = if scale == 0.0 { 0.0 } else { abs / scale };
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            let score = (rel / rtol).min(abs / atol);
            if score > worst_score || score.is_nan() {
                worst_score = score;
                report.worst_index = i;
            }
        }
        report.passed = report.checked == 0 || worst_score <= 1.0;
        report
    }
}

/// Tolerances and kink handling for [`check_with`].
pub struct CheckConfig<'a> {
    pub rtol: f64,
    pub atol: f64,
    pub step: f64,
    /// `(param index, flat index, margin)`: true when a non-differentiable
    /// point lies within `margin` of that coordinate.
    pub near_kink: Option<&'a dyn Fn(usize, usize, f64) -> bool>,
}

impl CheckConfig<'_> {
    pub fn new(rtol: f64, atol: f64) -> Self {
        CheckConfig {
            rtol,
            atol,
            step: default_step(),
            near_kink: None,
        }
    }
}

/// Runs autodiff on `f` and compares every parameter's partial with the
/// central-difference oracle.
pub fn check<F>(f: F, params: &[Node], rtol: f64, atol: f64) -> Result<GradCheckReport>
where
    F: FnMut() -> Result<Node>,
{
    check_with(f, params, &CheckConfig::new(rtol, atol))
}

pub fn check_with<F>(mut f: F, params: &[Node], config: &CheckConfig<'_>) -> Result<GradCheckReport>
where
    F: FnMut() -> Result<Node>,
{
    let loss = f()?;
    loss.compute_gradient()?;
    drop(loss);

    let mut analytic = Vec::new();
    let mut oracle = Vec::new();
    let mut skip = Vec::new();
    for (pi, param) in params.iter().enumerate() {
        let partial = param.partial().ok_or_else(|| {
            Error::InvalidConfig("gradient check requires parameter nodes".into())
        })?;
        analytic.extend_from_slice(partial.data());

        let original = param.value().clone();
        let numeric = with_precision(Precision::F64, || {
            finite_diff_gradient(
                |x| {
                    param.replace_value(x.clone());

                    no_grad(&mut f).and_then(|l| l.item())
                },
                &original,
                config.step,
            )
        });
        param.replace_value(original.clone());
        oracle.extend_from_slice(numeric?.data());

        for (i, &x) in original.data().iter().enumerate() {
            let margin = 10.0 * probe_step(config.step, x);
            skip.push(config.near_kink.is_some_and(|k| k(pi, i, margin)));
        }
    }
    Ok(GradCheckReport::compare(
        &analytic,
        &oracle,
        &skip,
        config.rtol,
        config.atol,
    ))
}
