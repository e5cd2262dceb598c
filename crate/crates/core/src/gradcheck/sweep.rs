//! Randomized oracle sweep over every elementary function.

use crate::array::Array;
use crate::error::Result;
use crate::graph::Node;
use crate::ops;
use crate::precision::{with_precision, Precision};
use crate::rng::Rng;

use super::{check_with, CheckConfig};

pub const OP_NAMES: [&str; 22] = [
    "matrix_multiply",
    "cross_correlate",
    "times",
    "divide",
    "max",
    "min",
    "maxpool",
    "sum",
    "add",
    "subtract",
    "power",
    "exponential",
    "log",
    "sqrt",
    "sin",
    "cos",
    "tanh",
    "mean",
    "absolute_value",
    "concatenate",
    "expand",
    "slice",
];

/// Aggregate of all random instances of one op.
#[derive(Debug, Clone, PartialEq)]
pub struct OpReport {
    pub op: &'static str,
    pub instances: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub skipped: usize,
    pub passed: bool,
}

/// Tolerances the sweep applies at each precision.
pub fn tolerances(precision: Precision) -> (f64, f64) {
    match precision {
        Precision::F32 => (1e-3, 1e-5),
        Precision::F64 => (1e-6, 1e-9),
    }
}

/// Checks `instances` random problems per op at `precision`.
pub fn sweep_ops(precision: Precision, instances: usize, seed: u64) -> Result<Vec<OpReport>> {
    let mut rng = Rng::new(seed);
    with_precision(precision, || {
        OP_NAMES
            .iter()
            .map(|&name| {
                let mut op_rng = rng.fork();
                sweep_one(name, precision, instances, &mut op_rng)
            })
            .collect()
    })
}

fn sweep_one(
    name: &'static str,
    precision: Precision,
    instances: usize,
    rng: &mut Rng,
) -> Result<OpReport> {
    let (rtol, atol) = tolerances(precision);
    let mut report = OpReport {
        op: name,
        instances,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        skipped: 0,
        passed: true,
    };
    for _ in 0..instances {
        let case = Case::random(name, rng)?;
        let kink = |p: usize, i: usize, margin: f64| case.near_kink(p, i, margin);
        let config = CheckConfig {
            near_kink: Some(&kink),
            ..CheckConfig::new(rtol, atol)
        };
        let r = check_with(|| case.loss(), &case.params, &config)?;
        report.max_abs_err = report.max_abs_err.max(r.max_abs_err);
        report.max_rel_err = report.max_rel_err.max(r.max_rel_err);
        report.skipped += r.skipped;
        report.passed &= r.passed;
    }
    Ok(report)
}

/// One random problem: parameters, the op applied to them, and a random
/// weighting `w` so the loss is `sum(w * op(params))`.
struct Case {
    name: &'static str,
    params: Vec<Node>,
    weights: Node,
    width: usize,
    exponent: f64,
    range: (usize, usize),
}

fn param(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Result<Node> {
    Node::parameter(rng.uniform_array(shape, lo, hi))
}

fn random_shape(rng: &mut Rng) -> Vec<usize> {
    let rank = 1 + rng.below(2);
    (0..rank).map(|_| 1 + rng.below(4)).collect()
}

/// A shape that broadcasts against `shape`: some axes collapsed to 1, and
/// sometimes the leading axis dropped.
fn broadcastable(rng: &mut Rng, shape: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = shape
        .iter()
        .map(|&d| if rng.below(2) == 0 { 1 } else { d })
        .collect();
    if s.len() > 1 && rng.below(2) == 0 {
        s.remove(0);
    }
    s
}

impl Case {
    fn random(name: &'static str, rng: &mut Rng) -> Result<Case> {
        let mut width = 1;
        let mut exponent: f64 = 1.0;
        let mut range = (0, 0);
        let params = match name {
            "matrix_multiply" => {
                let (m, k, n) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4));
                let b_shape = if rng.below(4) == 0 {
                    vec![k]
                } else {
                    vec![k, n]
                };
                vec![
                    param(rng, &[m, k], -2.0, 2.0)?,
                    param(rng, &b_shape, -2.0, 2.0)?,
                ]
            }
            "cross_correlate" => {
                let n = 1 + rng.below(10);
                let m = 1 + rng.below(n);
                vec![param(rng, &[n], -2.0, 2.0)?, param(rng, &[m], -2.0, 2.0)?]
            }
            "times" | "add" | "subtract" => {
                let shape = random_shape(rng);
                let other = broadcastable(rng, &shape);
                let (a, b) = if rng.below(2) == 0 {
                    (shape, other)
                } else {
                    (other, shape)
                };
                let mut ps = vec![param(rng, &a, -2.0, 2.0)?, param(rng, &b, -2.0, 2.0)?];
                if name == "add" && rng.below(2) == 0 {
                    ps.push(param(rng, &a, -2.0, 2.0)?);
                }
                ps
            }
            "divide" => {
                let shape = random_shape(rng);
                let other = broadcastable(rng, &shape);
                let b =
                    rng.uniform_array(&other, 0.5, 2.0)
                        .map(|v| if v > 1.25 { v } else { -v - 0.75 });
                vec![param(rng, &shape, -2.0, 2.0)?, Node::parameter(b)?]
            }
            "max" | "min" => {
                let shape = random_shape(rng);
                vec![
                    param(rng, &shape, -2.0, 2.0)?,
                    param(rng, &shape, -2.0, 2.0)?,
                ]
            }
            "maxpool" => {
                width = 1 + rng.below(4);
                let cells = 1 + rng.below(4);
                vec![param(rng, &[width * cells], -2.0, 2.0)?]
            }
            "power" => {
                exponent = [2.0, 3.0, 0.5, -1.0, 1.5][rng.below(5)];
                let shape = random_shape(rng);
                if exponent.fract() == 0.0 && exponent > 0.0 {
                    vec![param(rng, &shape, -2.0, 2.0)?]
                } else {
                    vec![param(rng, &shape, 0.5, 2.0)?]
                }
            }
            "log" | "sqrt" => {
                let shape = random_shape(rng);
                vec![param(rng, &shape, 0.5, 3.0)?]
            }
            "concatenate" => {
                let count = 1 + rng.below(4);
                (0..count)
                    .map(|_| {
                        let len = 1 + rng.below(4);
                        param(rng, &[len], -2.0, 2.0)
                    })
                    .collect::<Result<_>>()?
            }
            "expand" => {
                let shape: Vec<usize> = if rng.below(2) == 0 { vec![] } else { vec![1] };
                vec![param(rng, &shape, -2.0, 2.0)?]
            }
            "slice" => {
                let len = 1 + rng.below(8);
                let a = rng.below(len + 1);
                let b = rng.below(len + 1);
                range = (a.min(b), a.max(b));
                vec![param(rng, &[len], -2.0, 2.0)?]
            }
            // sum, mean, exponential, sin, cos, tanh, absolute_value
            _ => {
                let shape = random_shape(rng);
                vec![param(rng, &shape, -2.0, 2.0)?]
            }
        };
        let mut case = Case {
            name,
            params,
            weights: Node::constant(Array::scalar(1.0)),
            width,
            exponent,
            range,
        };
        let out_shape = case.apply()?.shape();
        case.weights = Node::constant(rng.uniform_array(&out_shape, -1.0, 1.0));
        Ok(case)
    }

    fn apply(&self) -> Result<Node> {
        let p = &self.params;
        match self.name {
            "matrix_multiply" => ops::matrix_multiply(&p[0], &p[1]),
            "cross_correlate" => ops::cross_correlate(&p[0], &p[1]),
            "times" => ops::times(&p[0], &p[1]),
            "divide" => ops::divide(&p[0], &p[1]),
            "max" => ops::max(&p[0], &p[1]),
            "min" => ops::min(&p[0], &p[1]),
            "maxpool" => ops::maxpool(&p[0], self.width),
            "sum" => ops::sum(&p[0]),
            "add" => ops::add_all(p),
            "subtract" => ops::subtract(&p[0], &p[1]),
            "power" => ops::power(&p[0], self.exponent),
            "exponential" => ops::exponential(&p[0]),
            "log" => ops::log(&p[0]),
            "sqrt" => ops::sqrt(&p[0]),
            "sin" => ops::sin(&p[0]),
            "cos" => ops::cos(&p[0]),
            "tanh" => ops::tanh(&p[0]),
            "mean" => ops::mean(&p[0]),
            "absolute_value" => ops::absolute_value(&p[0]),
            "concatenate" => ops::concatenate(p),
            "expand" => ops::expand(&p[0]),
            "slice" => ops::slice(&p[0], self.range.0, self.range.1),
            other => unreachable!("unknown op {other}"),
        }
    }

    fn loss(&self) -> Result<Node> {
        ops::dot(&self.weights, self.apply()?)
    }

    fn near_kink(&self, _param: usize, i: usize, margin: f64) -> bool {
        let value = |k: usize| self.params[k].value().data().to_vec();
        match self.name {
            "absolute_value" => value(0)[i].abs() < margin,
            "max" | "min" => (value(0)[i] - value(1)[i]).abs() < margin,
            "maxpool" => {
                let x = value(0);
                let cell = i / self.width * self.width;
                (cell..cell + self.width).any(|j| j != i && (x[j] - x[i]).abs() < margin)
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_has_a_case() {
        let mut rng = Rng::new(3);
        for name in OP_NAMES {
            let case = with_precision(Precision::F64, || Case::random(name, &mut rng)).unwrap();
            assert!(case.loss().is_ok(), "{name}");
        }
    }

    #[test]
    fn small_sweep_passes_at_f64() {
        let reports = sweep_ops(Precision::F64, 5, 11).unwrap();
        assert_eq!(reports.len(), OP_NAMES.len());
        for r in reports {
            assert!(r.passed, "{r:?}");
        }
    }
}
