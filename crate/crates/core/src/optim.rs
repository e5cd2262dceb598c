//! Gradient descent on an exponential moving average of the gradient, with
//! a heuristic step size.
//!
//! The step size `s` starts small and grows by `grow` per step while the
//! smoothed loss keeps falling. Once the smoothed loss is rising and concave
//! up, `s` shrinks by `shrink` and is never allowed to grow again.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::graph::Node;
use crate::io::format_sig;

/// Backward-difference weights for the first derivative, oldest to newest.
pub const FIRST_DERIVATIVE: [f64; 4] = [-1.0 / 3.0, 3.0 / 2.0, -3.0, 11.0 / 6.0];
/// Backward-difference weights for the second derivative, oldest to newest.
pub const SECOND_DERIVATIVE: [f64; 4] = [-1.0, 4.0, -5.0, 2.0];

/// First and second derivative estimates of a 4-sample window ordered
/// oldest to newest.
pub fn smoothed_derivatives(window: &[f64; 4]) -> (f64, f64) {
    let dot = |c: &[f64; 4]| c.iter().zip(window).map(|(c, v)| c * v).sum::<f64>();
    (dot(&FIRST_DERIVATIVE), dot(&SECOND_DERIVATIVE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Weight of the newest gradient in the direction average, in (0, 1].
    pub beta: f64,
    /// Initial step size.
    pub s0: f64,
    /// Number of raw losses averaged into each smoothed sample.
    pub m: usize,
    pub max_steps: usize,
    pub shrink: f64,
    pub grow: f64,
    /// When false the step size stays at `s0`.
    pub adapt_step: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            beta: 0.7,
            s0: 1e-3,
            m: 10,
            max_steps: 50_000,
            shrink: 0.99,
            grow: 1.02,
            adapt_step: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta must lie in (0, 1]");
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return bad("s0 must be positive");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(0.0 < self.shrink && self.shrink < 1.0) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.grow > 1.0 && self.grow.is_finite()) {
            return bad("grow must exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAction {
    Shrink,
    Grow,
    Hold,
}

/// Outcome of feeding one loss value to the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub smoothed: f64,
    pub d1: f64,
    pub d2: f64,
    pub action: StepAction,
    /// Step size after the adjustment.
    pub s: f64,
    pub r: bool,
}

/// The step-size state machine, independent of any graph.
#[derive(Debug, Clone)]
pub struct StepSizeController {
    s: f64,
    r: bool,
    m: usize,
    shrink: f64,
    grow: f64,
    adapt: bool,
    raw: VecDeque<f64>,
    smoothed: VecDeque<f64>,
}

impl StepSizeController {
    pub fn new(config: &OptimizerConfig) -> Self {
        StepSizeController {
            s: config.s0,
            r: true,
            m: config.m,
            shrink: config.shrink,
            grow: config.grow,
            adapt: config.adapt_step,
            raw: VecDeque::with_capacity(config.m + 1),
            smoothed: VecDeque::with_capacity(5),
        }
    }

    pub fn step_size(&self) -> f64 {
        self.s
    }

    /// Whether the step size may still grow.
    pub fn may_grow(&self) -> bool {
        self.r
    }

    /// Smoothed-loss window, oldest first. Empty before the first loss.
    pub fn smoothed(&self) -> Vec<f64> {
        self.smoothed.iter().copied().collect()
    }

    pub fn raw_losses(&self) -> Vec<f64> {
        self.raw.iter().copied().collect()
    }

    pub fn observe(&mut self, loss: f64) -> Observation {
        if self.smoothed.is_empty() {
            // Both queues start from the first loss.
            self.raw.push_back(loss);
            self.smoothed.extend([loss; 4]);
        }
        self.raw.push_back(loss);
        while self.raw.len() > self.m {
            self.raw.pop_front();
        }
        let mean = self.raw.iter().sum::<f64>() / self.raw.len() as f64;
        self.smoothed.push_back(mean);
        self.smoothed.pop_front();

        let window = [
            self.smoothed[0],
            self.smoothed[1],
            self.smoothed[2],
            self.smoothed[3],
        ];
        let (d1, d2) = smoothed_derivatives(&window);
        let action = if !self.adapt {
            StepAction::Hold
        } else if d1 > 0.0 && d2 > 0.0 {
            self.s *= self.shrink;
            self.r = false;
            StepAction::Shrink
        } else if self.r && d1 < 0.0 {
            self.s *= self.grow;
            StepAction::Grow
        } else {
            StepAction::Hold
        };
        Observation {
            smoothed: mean,
            d1,
            d2,
            action,
            s: self.s,
            r: self.r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub loss: f64,
    pub smoothed: f64,
    pub s: f64,
    pub r: bool,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub records: Vec<StepRecord>,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// `t,loss,s,r` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,loss,s,r\n");
        for rec in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                rec.t,
                format_sig(rec.loss),
                format_sig(rec.s),
                rec.r
            );
        }
        out
    }
}

/// Stops once the smoothed loss changed by less than `rel_tol` (relative)
/// on each of the last `window` steps.
#[derive(Debug, Clone, Copy)]
pub struct Convergence {
    pub rel_tol: f64,
    pub window: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence {
            rel_tol: 1e-9,
            window: 10,
        }
    }
}

impl Convergence {
    pub fn is_converged(&self, trace: &LossTrace) -> bool {
        let recs = &trace.records;
        if recs.len() <= self.window {
            return false;
        }
        recs[recs.len() - self.window - 1..].windows(2).all(|w| {
            let (a, b) = (w[0].smoothed, w[1].smoothed);
            (b - a).abs() <= self.rel_tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
        })
    }
}

/// Callbacks around the parameter update.
pub trait StepHook {
    /// Sees (and may edit) the raw gradients before they enter the average.
    fn on_gradient(&mut self, _grads: &mut [Array]) {}
    /// Runs after the parameters were moved.
    fn after_update(&mut self, _params: &[Node]) -> Result<()> {
        Ok(())
    }
}

impl StepHook for () {}

pub struct Optimizer {
    config: OptimizerConfig,
    controller: StepSizeController,
    directions: Vec<Array>,
    t: usize,
    trace: LossTrace,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            controller: StepSizeController::new(&config),
            config,
            directions: Vec::new(),
            t: 0,
            trace: LossTrace::default(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn controller(&self) -> &StepSizeController {
        &self.controller
    }

    /// The averaged descent direction per parameter.
    pub fn directions(&self) -> &[Array] {
        &self.directions
    }

    pub fn trace(&self) -> &LossTrace {
        &self.trace
    }

    pub fn into_trace(self) -> LossTrace {
        self.trace
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn step<F>(&mut self, params: &[Node], loss_fn: F) -> Result<f64>
    where
        F: FnMut() -> Result<Node>,
    {
        self.step_with(params, loss_fn, &mut ())
    }

    /// One iteration: evaluate, adjust the step size, differentiate, average
    /// the direction, move the parameters. Returns the loss at the point
    /// before the move.
    pub fn step_with<F, H>(&mut self, params: &[Node], mut loss_fn: F, hook: &mut H) -> Result<f64>
    where
        F: FnMut() -> Result<Node>,
        H: StepHook + ?Sized,
    {
        let step = self.t;
        let overflow = |e: Error| match e {
            Error::NonFinite { .. } => Error::NonFiniteLoss { step },
            other => other,
        };
        let root = loss_fn().map_err(overflow)?;
        let loss = root.item()?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }

        let obs = self.controller.observe(loss);
        self.trace.records.push(StepRecord {
            t: step,
            loss,
            smoothed: obs.smoothed,
            s: obs.s,
            r: obs.r,
            d1: obs.d1,
            d2: obs.d2,
        });
        self.t += 1;

        root.compute_gradient()?;
        drop(root);
        let mut grads = params
            .iter()
            .map(|p| {
                p.partial().filter(|_| p.is_parameter()).ok_or_else(|| {
                    Error::InvalidConfig("optimizer can only update parameters".into())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        hook.on_gradient(&mut grads);

        if self.directions.len() != params.len() {
            self.directions = grads.iter().map(|g| g.scale(0.0)).collect();
        }
        let beta = self.config.beta;
        let s = obs.s;
        for ((param, grad), dir) in params.iter().zip(&grads).zip(self.directions.iter_mut()) {
            *dir = dir.zip_map(grad, |d, g| beta * g + (1.0 - beta) * d)?;
            let moved = param.value().zip_map(dir, |x, d| x - s * d)?;
            if !moved.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            param.set_value(moved)?;
        }
        hook.after_update(params)?;
        Ok(loss)
    }

    /// Steps until `stop` holds or `max_steps` iterations have run. On error
    /// the trace up to the failing step stays available via [`Self::trace`].
    pub fn minimize<F, S>(&mut self, params: &[Node], loss_fn: F, stop: S) -> Result<&LossTrace>
    where
        F: FnMut() -> Result<Node>,
        S: FnMut(&LossTrace) -> bool,
    {
        self.minimize_with(params, loss_fn, &mut (), stop)
    }

    pub fn minimize_with<F, H, S>(
        &mut self,
        params: &[Node],
        mut loss_fn: F,
        hook: &mut H,
        mut stop: S,
    ) -> Result<&LossTrace>
    where
        F: FnMut() -> Result<Node>,
        H: StepHook + ?Sized,
        S: FnMut(&LossTrace) -> bool,
    {
        while self.t < self.config.max_steps {
            self.step_with(params, &mut loss_fn, hook)?;
            if stop(&self.trace) {
                break;
            }
        }
        Ok(&self.trace)
    }
}
