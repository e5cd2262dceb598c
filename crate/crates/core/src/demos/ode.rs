//! The damped oscillator `2 y'' + y' + 2 y = 0` as a boundary-value problem
//! with `y(0) = 1` and `y(t1) = b`, solved by minimizing the mean squared
//! finite-difference residual over a grid.

use std::time::Instant;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::graph::Node;
use crate::ops;
use crate::optim::{Convergence, LossTrace, Optimizer, OptimizerConfig, StepHook};
use crate::precision::{with_precision, Precision};

use super::{linspace, max_abs_diff, DemoResult};

/// Fourth-order central first derivative.
pub const CENTRAL_FIRST: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
/// Fourth-order central second derivative.
pub const CENTRAL_SECOND: [f64; 5] = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
/// One-sided first derivative at the left end of a 5-point window.
pub const FORWARD_FIRST: [f64; 5] = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -1.0 / 4.0];
/// One-sided second derivative at the left end of a 5-point window.
pub const FORWARD_SECOND: [f64; 5] = [
    35.0 / 12.0,
    -26.0 / 3.0,
    19.0 / 2.0,
    -14.0 / 3.0,
    11.0 / 12.0,
];

/// Mirror image of a forward stencil, evaluating at the right end of the
/// window. Odd derivatives change sign under the reflection.
fn backward(forward: &[f64; 5], sign: f64) -> Vec<f64> {
    forward.iter().rev().map(|c| sign * c).collect()
}

/// Exact solution with `y(0) = 1`, `y'(0) = 1`.
pub fn analytic_solution(t: f64) -> f64 {
    let r = 15f64.sqrt();
    let w = r * t / 4.0;
    (-t / 4.0).exp() * (r * w.sin() + 3.0 * w.cos()) / 3.0
}

/// First `t > 0` where the exact solution falls to `b`, by bisection.
pub fn crossing_time(b: f64) -> Result<f64> {
    let scan = 1e-3;
    let mut lo = 0.0;
    if b.is_nan() || b >= 1.0 {
        return Err(Error::InvalidConfig(format!(
            "boundary value {b} is never reached"
        )));
    }
    let mut hi = lo;
    while analytic_solution(hi) > b {
        lo = hi;
        hi += scan;
        if hi > 100.0 {
            return Err(Error::InvalidConfig(format!(
                "boundary value {b} is never reached"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if analytic_solution(mid) > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
pub struct OdeSpec {
    pub n: usize,
    pub t1: f64,
    pub b: f64,
    pub precision: Precision,
    pub optimizer: OptimizerConfig,
}

impl OdeSpec {
    /// Grid of `n` points with `t1` where the exact solution crosses `b`.
    pub fn new(n: usize, b: f64) -> Result<OdeSpec> {
        Ok(OdeSpec {
            n,
            t1: crossing_time(b)?,
            b,
            precision: Precision::F64,
            optimizer: OptimizerConfig {
                beta: 0.01,
                s0: 6e-4,
                m: 50,
                max_steps: 40_000,
                ..OptimizerConfig::default()
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidConfig(
                "ODE grid needs at least 10 points".into(),
            ));
        }
        if !(self.t1 > 0.0 && self.t1.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidConfig(
                "t1 must be positive and b finite".into(),
            ));
        }
        self.optimizer.validate()
    }

    pub fn dt(&self) -> f64 {
        self.t1 / (self.n - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(0.0, self.t1, self.n)
    }
}

impl Default for OdeSpec {
    fn default() -> Self {
        OdeSpec::new(20, 0.1).expect("0.1 is crossed")
    }
}

/// Derivative estimate at every grid point: two one-sided points at each
/// end, central stencils between.
fn derivative(
    y: &Node,
    n: usize,
    central: &[f64; 5],
    forward: &[f64; 5],
    backward: Vec<f64>,
    scale: f64,
) -> Result<Node> {
    let k = |c: &[f64]| Array::from_vec(c.iter().map(|v| v * scale).collect());
    let head = ops::cross_correlate(ops::slice(y, 0, 6)?, k(forward))?;
    let body = ops::cross_correlate(y, k(central))?;
    let tail = ops::cross_correlate(ops::slice(y, n - 6, n)?, k(&backward))?;
    ops::concatenate(&[head, body, tail])
}

/// Mean of `(2 y'' + y' + 2 y)^2` over the grid with spacing `dt`.
pub fn ode_residual(y: &Node, dt: f64) -> Result<Node> {
    let shape = y.shape();
    if shape.len() != 1 {
        return Err(Error::RankError {
            op: "ode_residual",
            shape,
        });
    }
    let n = shape[0];
    if n < 6 {
        return Err(Error::InvalidConfig(
            "residual stencils need at least 6 points".into(),
        ));
    }
    let d1 = derivative(
        y,
        n,
        &CENTRAL_FIRST,
        &FORWARD_FIRST,
        backward(&FORWARD_FIRST, -1.0),
        1.0 / dt,
    )?;
    let d2 = derivative(
        y,
        n,
        &CENTRAL_SECOND,
        &FORWARD_SECOND,
        backward(&FORWARD_SECOND, 1.0),
        1.0 / (dt * dt),
    )?;
    let r = ops::add_all(&[ops::times(&d2, 2.0)?, d1, ops::times(y, 2.0)?])?;
    ops::mean(ops::power(r, 2.0)?)
}

struct Clamp {
    b: f64,
}

impl StepHook for Clamp {
    fn after_update(&mut self, params: &[Node]) -> Result<()> {
        for p in params {
            let mut v = p.value().clone();
            let last = v.len() - 1;
            v.data_mut()[0] = 1.0;
            v.data_mut()[last] = self.b;
            p.set_value(v)?;
        }
        Ok(())
    }
}

/// Straight line from `(0, 1)` to `(t1, b)`.
pub fn initial_curve(spec: &OdeSpec) -> Array {
    let last = (spec.n - 1) as f64;
    Array::from_vec(
        (0..spec.n)
            .map(|i| 1.0 + (spec.b - 1.0) * i as f64 / last)
            .collect(),
    )
}

pub fn solve_ode_bvp(spec: &OdeSpec) -> Result<DemoResult> {
    spec.validate()?;
    let start = Instant::now();
    with_precision(spec.precision, || {
        let y = Node::parameter(initial_curve(spec))?;
        let dt = spec.dt();
        let mut opt = Optimizer::new(spec.optimizer.clone())?;
        let converged = Convergence::default();
        let params = [y.clone()];
        opt.minimize_with(
            &params,
            || ode_residual(&y, dt),
            &mut Clamp { b: spec.b },
            |t: &LossTrace| converged.is_converged(t),
        )?;

        let grid = spec.grid();
        let solution = y.value().clone();
        let reference = Array::from_vec(grid.iter().map(|&t| analytic_solution(t)).collect());
        Ok(DemoResult {
            grid: Array::from_vec(grid),
            max_abs_error: max_abs_diff(&solution, &reference),
            solution,
            reference,
            loss_trace: opt.into_trace(),
            runtime_seconds: start.elapsed().as_secs_f64(),
            metrics: vec![("t1".to_string(), spec.t1)],
        })
    })
}

/// Forward Euler for the equivalent first-order system from `y(0) = 1`,
/// `y'(0) = 1`, returning `y` at the `steps + 1` points of `[0, t1]`.
pub fn euler_reference(t1: f64, steps: usize) -> Array {
    let h = t1 / steps as f64;
    let (mut y, mut v) = (1.0, 1.0);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y);
    for _ in 0..steps {
        let accel = -(v + 2.0 * y) / 2.0;
        y += h * v;
        v += h * accel;
        out.push(y);
    }
    Array::with_precision(vec![steps + 1], out, Precision::F64).expect("length matches")
}
