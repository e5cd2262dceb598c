//! Shape of a rope of fixed length hanging between (0, 0) and (1, 0).
//!
//! The rope is cut into `n` straight segments over an even grid. The loss
//! `(L - L0)^2 + E` trades the length constraint against potential energy
//! `E`, the segment lengths weighted by their midpoint heights.

use std::time::Instant;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::graph::{no_grad, Node};
use crate::ops;
use crate::optim::{Convergence, LossTrace, Optimizer, OptimizerConfig, StepHook};
use crate::precision::{with_precision, Precision};
use crate::rng::Rng;

use super::{linspace, max_abs_diff, DemoResult};

/// Scale of the reference catenary `a cosh((x - 1/2) / a) + c`.
pub const CATENARY_A: f64 = 0.3094;
/// Offset of the reference catenary.
pub const CATENARY_C: f64 = -0.8094;

#[derive(Debug, Clone)]
pub struct CatenarySpec {
    pub n: usize,
    /// Target rope length.
    pub l0: f64,
    pub seed: u64,
    /// Interior heights start uniformly in `[-init_depth, 0]`.
    pub init_depth: f64,
    pub precision: Precision,
    pub optimizer: OptimizerConfig,
}

impl Default for CatenarySpec {
    fn default() -> Self {
        CatenarySpec {
            n: 50,
            l0: default_l0(),
            seed: 0,
            init_depth: 0.5,
            precision: Precision::F64,
            optimizer: OptimizerConfig {
                beta: 0.7,
                s0: 1e-2,
                m: 10,
                max_steps: 6000,
                ..OptimizerConfig::default()
            },
        }
    }
}

impl CatenarySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(
                "catenary needs at least 2 segments".into(),
            ));
        }
        if !(self.l0 > 1.0 && self.l0.is_finite()) {
            return Err(Error::InvalidConfig("rope length must exceed 1".into()));
        }
        if !(self.init_depth >= 0.0 && self.init_depth.is_finite()) {
            return Err(Error::InvalidConfig(
                "init depth must be non-negative".into(),
            ));
        }
        self.optimizer.validate()
    }

    pub fn grid(&self) -> Vec<f64> {
        linspace(0.0, 1.0, self.n + 1)
    }
}

/// The reference catenary at `x`.
pub fn reference_catenary(x: f64) -> f64 {
    CATENARY_A * ((x - 0.5) / CATENARY_A).cosh() + CATENARY_C
}

pub fn parabola(x: f64) -> f64 {
    2.0 * x * (x - 1.0)
}

/// Lower half of the circle through both endpoints centred at (1/2, 0).
pub fn circle(x: f64) -> f64 {
    -(0.25 - (x - 0.5) * (x - 0.5)).max(0.0).sqrt()
}

/// Arc length of the reference catenary on `[0, 1]` by composite Simpson
/// quadrature.
pub fn reference_arc_length() -> f64 {
    let intervals = 1 << 16;
    let h = 1.0 / intervals as f64;
    let speed = |x: f64| {
        let slope = ((x - 0.5) / CATENARY_A).sinh();
        (1.0 + slope * slope).sqrt()
    };
    let mut acc = speed(0.0) + speed(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * speed(i as f64 * h);
    }
    acc * h / 3.0
}

/// Target length whose minimizer is the reference catenary.
///
/// At a minimizer of `(L - L0)^2 + E` the length term acts as a tension
/// `2 (L - L0)` that sets the curve's vertical offset to `-2 (L - L0)`. For
/// the minimizer to be the reference curve its length must therefore exceed
/// `L0` by `-c / 2`.
pub fn default_l0() -> f64 {
    reference_arc_length() + CATENARY_C / 2.0
}

/// `(L - l0)^2 + E` for the heights `y` (length `n + 1`).
pub fn catenary_loss(y: &Node, l0: f64) -> Result<Node> {
    let shape = y.shape();
    if shape.len() != 1 || shape[0] < 3 {
        return Err(Error::RankError {
            op: "catenary_loss",
            shape,
        });
    }
    let n = (shape[0] - 1) as f64;
    let dy = ops::cross_correlate(y, vec![1.0, -1.0])?;
    let seg = ops::sqrt(ops::add(ops::power(&dy, 2.0)?, 1.0 / (n * n))?)?;
    let length = ops::sum(&seg)?;
    let mid = ops::cross_correlate(y, vec![0.5, 0.5])?;
    let energy = ops::dot(&seg, mid)?;
    ops::add(ops::power(ops::subtract(length, l0)?, 2.0)?, energy)
}

/// Loss of a fixed curve, without recording a graph.
pub fn curve_loss(y: &Array, l0: f64) -> Result<f64> {
    no_grad(|| catenary_loss(&Node::constant(y.clone()), l0)?.item())
}

/// Polyline length of heights `y` over an even grid on `[0, 1]`.
pub fn rope_length(y: &Array) -> f64 {
    let dx = 1.0 / (y.len() - 1) as f64;
    y.data()
        .windows(2)
        .map(|w| (dx * dx + (w[1] - w[0]).powi(2)).sqrt())
        .sum()
}

struct PinEnds;

impl StepHook for PinEnds {
    fn on_gradient(&mut self, grads: &mut [Array]) {
        for g in grads {
            let last = g.len() - 1;
            let data = g.data_mut();
            data[0] = 0.0;
            data[last] = 0.0;
        }
    }
}

/// Random initial heights: negative interior, zero endpoints.
pub fn initial_heights(spec: &CatenarySpec) -> Array {
    let mut rng = Rng::new(spec.seed);
    let mut y: Vec<f64> = (0..=spec.n)
        .map(|_| -rng.uniform(0.0, spec.init_depth))
        .collect();
    y[0] = 0.0;
    y[spec.n] = 0.0;
    Array::from_vec(y)
}

pub fn solve_catenary(spec: &CatenarySpec) -> Result<DemoResult> {
    spec.validate()?;
    let start = Instant::now();
    with_precision(spec.precision, || {
        let y = Node::parameter(initial_heights(spec))?;
        let mut opt = Optimizer::new(spec.optimizer.clone())?;
        let converged = Convergence::default();
        let params = [y.clone()];
        opt.minimize_with(
            &params,
            || catenary_loss(&y, spec.l0),
            &mut PinEnds,
            |t: &LossTrace| converged.is_converged(t),
        )?;

        let grid = spec.grid();
        let solution = y.value().clone();
        let reference = Array::from_vec(grid.iter().map(|&x| reference_catenary(x)).collect());
        let curve = |f: fn(f64) -> f64| {
            curve_loss(
                &Array::from_vec(grid.iter().map(|&x| f(x)).collect()),
                spec.l0,
            )
        };
        let metrics = vec![
            ("length".to_string(), rope_length(&solution)),
            ("loss_reference".to_string(), curve(reference_catenary)?),
            ("loss_parabola".to_string(), curve(parabola)?),
            ("loss_circle".to_string(), curve(circle)?),
        ];
        Ok(DemoResult {
            grid: Array::from_vec(grid),
            max_abs_error: max_abs_diff(&solution, &reference),
            solution,
            reference,
            loss_trace: opt.into_trace(),
            runtime_seconds: start.elapsed().as_secs_f64(),
            metrics,
        })
    })
}
