//! Elementary functions: forward evaluation and backward rule.
//!
//! Each [`Op`] maps input values to an output value, and maps
//! `(dl/dy, y, x1..xn)` to `(dl/dx1..dl/dxn)`. Binary element-wise ops
//! broadcast; their backward results are reduced back to each input's shape.
//!
//! The free functions at the bottom of this module build graph nodes.

use std::fmt;

use crate::array::{broadcast_shapes, Array};
use crate::error::{Error, Result};
use crate::graph::{evaluate, IntoNode, Node};

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    MatrixMultiply,
    CrossCorrelate,
    Times,
    Divide,
    Max,
    Min,
    Maxpool { width: usize },
    Sum,
    Add,
    Subtract,
    Power { exponent: f64 },
    Exponential,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tanh,
    Mean,
    AbsoluteValue,
    Concatenate,
    Expand,
    Slice { start: usize, end: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatrixMultiply => "matrix_multiply",
            Op::CrossCorrelate => "cross_correlate",
            Op::Times => "times",
            Op::Divide => "divide",
            Op::Max => "max",
            Op::Min => "min",
            Op::Maxpool { .. } => "maxpool",
            Op::Sum => "sum",
            Op::Add => "add",
            Op::Subtract => "subtract",
            Op::Power { .. } => "power",
            Op::Exponential => "exponential",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Mean => "mean",
            Op::AbsoluteValue => "absolute_value",
            Op::Concatenate => "concatenate",
            Op::Expand => "expand",
            Op::Slice { .. } => "slice",
        }
    }

    fn check_arity(&self, got: usize) -> Result<()> {
        let ok = match self {
            Op::Add => got >= 2,
            Op::Concatenate => got >= 1,
            Op::MatrixMultiply
            | Op::CrossCorrelate
            | Op::Times
            | Op::Divide
            | Op::Max
            | Op::Min
            | Op::Subtract => got == 2,
            _ => got == 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Arity {
                op: self.name(),
                got,
            })
        }
    }

    pub fn forward(&self, xs: &[&Array]) -> Result<Array> {
        self.check_arity(xs.len())?;
        match self {
            Op::MatrixMultiply => matmul_forward(xs[0], xs[1]),
            Op::CrossCorrelate => {
                let (s, k) = (xs[0], xs[1]);
                require_1d(self, s)?;
                require_1d(self, k)?;
                if k.is_empty() || k.len() > s.len() {
                    return Err(Error::KernelTooLong {
                        signal: s.len(),
                        kernel: k.len(),
                    });
                }
                Ok(vector(
                    correlate_valid(s.data(), k.data()),
                    s.precision().widest(k.precision()),
                ))
            }
            Op::Maxpool { width } => {
                let x = xs[0];
                require_1d(self, x)?;
                check_pool(x.len(), *width)?;
                let y = x
                    .data()
                    .chunks(*width)
                    .map(|cell| cell.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect();
                Ok(vector(y, x.precision()))
            }
            Op::Add => {
                let mut acc = xs[0].broadcast_zip(xs[1], |a, b| a + b)?;
                for x in &xs[2..] {
                    acc = acc.broadcast_zip(x, |a, b| a + b)?;
                }
                Ok(acc)
            }
            Op::Subtract => xs[0].broadcast_zip(xs[1], |a, b| a - b),
            Op::Times => xs[0].broadcast_zip(xs[1], |a, b| a * b),
            Op::Divide => {
                if xs[1].data().contains(&0.0) {
                    return Err(Error::DivisionByZero);
                }
                xs[0].broadcast_zip(xs[1], |a, b| a / b)
            }
            Op::Max => xs[0].broadcast_zip(xs[1], |a, b| if a >= b { a } else { b }),
            Op::Min => xs[0].broadcast_zip(xs[1], |a, b| if a <= b { a } else { b }),
            Op::Sum => Ok(scalar(xs[0].sum(), xs[0])),
            Op::Mean => Ok(scalar(xs[0].sum() / xs[0].len() as f64, xs[0])),
            Op::Power { exponent } => {
                let n = *exponent;
                if n.fract() != 0.0 && xs[0].data().iter().any(|&v| v < 0.0) {
                    return Err(Error::DomainError { op: self.name() });
                }
                Ok(xs[0].map(|v| v.powf(n)))
            }
            Op::Exponential => Ok(xs[0].map(f64::exp)),
            Op::Log => {
                if xs[0].data().iter().any(|&v| v <= 0.0) {
                    return Err(Error::DomainError { op: self.name() });
                }
                Ok(xs[0].map(f64::ln))
            }
            Op::Sqrt => {
                if xs[0].data().iter().any(|&v| v < 0.0) {
                    return Err(Error::DomainError { op: self.name() });
                }
                Ok(xs[0].map(f64::sqrt))
            }
            Op::Sin => Ok(xs[0].map(f64::sin)),
            Op::Cos => Ok(xs[0].map(f64::cos)),
            Op::Tanh => Ok(xs[0].map(f64::tanh)),
            Op::AbsoluteValue => Ok(xs[0].map(f64::abs)),
            Op::Concatenate => {
                let mut out = Vec::with_capacity(xs.iter().map(|x| x.len()).sum());
                let mut precision = xs[0].precision();
                for x in xs {
                    require_1d(self, x)?;
                    out.extend_from_slice(x.data());
                    precision = precision.widest(x.precision());
                }
                Ok(vector(out, precision))
            }
            Op::Expand => {
                let x = xs[0];
                if x.len() != 1 {
                    return Err(Error::NotScalar {
                        shape: x.shape().to_vec(),
                    });
                }
                let mut shape = x.shape().to_vec();
                shape.push(1);
                x.reshape(shape)
            }
            Op::Slice { start, end } => {
                let x = xs[0];
                require_1d(self, x)?;
                if start > end || *end > x.len() {
                    return Err(Error::OutOfBounds {
                        start: *start,
                        end: *end,
                        len: x.len(),
                    });
                }
                Ok(vector(x.data()[*start..*end].to_vec(), x.precision()))
            }
        }
    }

    /// Partials of the loss with respect to each input, each shaped like
    /// that input.
    pub fn backward(&self, grad: &Array, y: &Array, xs: &[&Array]) -> Result<Vec<Array>> {
        self.check_arity(xs.len())?;
        let g = grad;
        let out = match self {
            Op::MatrixMultiply => matmul_backward(g, xs[0], xs[1])?,
            Op::CrossCorrelate => {
                let (s, k) = (xs[0], xs[1]);
                let ds = convolve_full(k.data(), g.data());
                let dk = correlate_valid(s.data(), g.data());
                vec![vector(ds, s.precision()), vector(dk, k.precision())]
            }
            Op::Maxpool { width } => {
                let x = xs[0];
                let mut dx = vec![0.0; x.len()];
                for (cell, (chunk, &gk)) in x.data().chunks(*width).zip(g.data()).enumerate() {
                    dx[cell * width + first_argmax(chunk)] = gk;
                }
                vec![vector(dx, x.precision())]
            }
            Op::Add => xs
                .iter()
                .map(|x| g.reduce_to_shape(x.shape()))
                .collect::<Result<_>>()?,
            Op::Subtract => vec![
                g.reduce_to_shape(xs[0].shape())?,
                g.map(|v| -v).reduce_to_shape(xs[1].shape())?,
            ],
            Op::Times => binary_backward(g, xs[0], xs[1], |g, a, b| (g * b, g * a))?,
            Op::Divide => binary_backward(g, xs[0], xs[1], |g, a, b| (g / b, -g * a / (b * b)))?,
            Op::Max => binary_backward(
                g,
                xs[0],
                xs[1],
                |g, a, b| {
                    if a >= b {
                        (g, 0.0)
                    } else {
                        (0.0, g)
                    }
                },
            )?,
            Op::Min => binary_backward(
                g,
                xs[0],
                xs[1],
                |g, a, b| {
                    if a <= b {
                        (g, 0.0)
                    } else {
                        (0.0, g)
                    }
                },
            )?,
            Op::Sum => {
                let gv = g.item()?;
                vec![Array::from_parts(
                    xs[0].shape().to_vec(),
                    vec![gv; xs[0].len()],
                    xs[0].precision(),
                )]
            }
            Op::Mean => {
                let gv = g.item()? / xs[0].len() as f64;
                vec![Array::from_parts(
                    xs[0].shape().to_vec(),
                    vec![gv; xs[0].len()],
                    xs[0].precision(),
                )]
            }
            Op::Power { exponent } => {
                let n = *exponent;
                vec![unary_backward(g, xs[0], |g, x| g * n * x.powf(n - 1.0))?]
            }
            Op::Exponential => vec![g.zip_map(y, |g, y| g * y)?.to_precision(xs[0].precision())],
            Op::Log => vec![unary_backward(g, xs[0], |g, x| g / x)?],
            Op::Sqrt => vec![g
                .zip_map(y, |g, y| g / (2.0 * y))?
                .to_precision(xs[0].precision())],
            Op::Sin => vec![unary_backward(g, xs[0], |g, x| g * x.cos())?],
            Op::Cos => vec![unary_backward(g, xs[0], |g, x| -g * x.sin())?],
            Op::Tanh => vec![g
                .zip_map(y, |g, y| g * (1.0 - y * y))?
                .to_precision(xs[0].precision())],
            Op::AbsoluteValue => vec![unary_backward(
                g,
                xs[0],
                |g, x| if x > 0.0 { g } else { -g },
            )?],
            Op::Concatenate => {
                let mut offset = 0;
                xs.iter()
                    .map(|x| {
                        let piece = g.data()[offset..offset + x.len()].to_vec();
                        offset += x.len();
                        vector(piece, x.precision())
                    })
                    .collect()
            }
            Op::Expand => vec![g
                .reduce_to_shape(y.shape())?
                .reshape(xs[0].shape().to_vec())?],
            Op::Slice { start, end } => {
                let x = xs[0];
                let mut dx = vec![0.0; x.len()];
                dx[*start..*end].copy_from_slice(g.data());
                vec![vector(dx, x.precision())]
            }
        };
        Ok(out)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn vector(data: Vec<f64>, precision: crate::Precision) -> Array {
    let n = data.len();
    Array::from_parts(vec![n], data, precision)
}

fn scalar(v: f64, like: &Array) -> Array {
    Array::from_parts(Vec::new(), vec![v], like.precision())
}

fn require_1d(op: &Op, x: &Array) -> Result<()> {
    if x.ndim() == 1 {
        Ok(())
    } else {
        Err(Error::RankError {
            op: op.name(),
            shape: x.shape().to_vec(),
        })
    }
}

fn check_pool(len: usize, width: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::InvalidConfig("pool width must be positive".into()));
    }
    if !len.is_multiple_of(width) {
        return Err(Error::NotDivisible { len, width });
    }
    Ok(())
}

/// Index of the first maximal element; ties go to the lowest index.
fn first_argmax(cell: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in cell.iter().enumerate().skip(1) {
        if v > cell[best] {
            best = i;
        }
    }
    best
}

/// `c_i = sum_j k_j s_{i+j}` for every full overlap of `kernel` on `signal`.
pub(crate) fn correlate_valid(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = signal.len() + 1 - kernel.len();
    (0..n)
        .map(|i| kernel.iter().zip(&signal[i..]).map(|(k, s)| k * s).sum())
        .collect()
}

/// Full-mode convolution, length `a.len() + b.len() - 1`.
pub(crate) fn convolve_full(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn matmul_dims(a: &Array, b: &Array) -> Result<(usize, usize, usize)> {
    let mismatch = || Error::IncompatibleShapes {
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    };
    if a.ndim() != 2 {
        return Err(mismatch());
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (kb, n) = match b.shape() {
        [kb] => (*kb, 1),
        [kb, n] => (*kb, *n),
        _ => return Err(mismatch()),
    };
    if k != kb {
        return Err(mismatch());
    }
    Ok((m, k, n))
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for r in 0..m {
        for p in 0..k {
            let arp = a[r * k + p];
            if arp == 0.0 {
                continue;
            }
            let row = &b[p * n..p * n + n];
            for (cv, &bv) in c[r * n..r * n + n].iter_mut().zip(row) {
                *cv += arp * bv;
            }
        }
    }
    c
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

fn matmul_forward(a: &Array, b: &Array) -> Result<Array> {
    let (m, k, n) = matmul_dims(a, b)?;
    let c = matmul_raw(a.data(), b.data(), m, k, n);
    let shape = if b.ndim() == 1 { vec![m] } else { vec![m, n] };
    Ok(Array::from_parts(
        shape,
        c,
        a.precision().widest(b.precision()),
    ))
}

/// `dl/dA = L B^T`, `dl/dB = A^T L`.
fn matmul_backward(g: &Array, a: &Array, b: &Array) -> Result<Vec<Array>> {
    let (m, k, n) = matmul_dims(a, b)?;
    let bt = transpose(b.data(), k, n);
    let at = transpose(a.data(), m, k);
    let da = matmul_raw(g.data(), &bt, m, n, k);
    let db = matmul_raw(&at, g.data(), k, m, n);
    Ok(vec![
        Array::from_parts(a.shape().to_vec(), da, a.precision()),
        Array::from_parts(b.shape().to_vec(), db, b.precision()),
    ])
}

fn unary_backward(g: &Array, x: &Array, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
    Ok(g.zip_map(x, f)?.to_precision(x.precision()))
}

/// Evaluates `f(g, a, b) -> (da, db)` at every broadcast position, then
/// reduces each partial to its input's shape.
fn binary_backward(
    g: &Array,
    a: &Array,
    b: &Array,
    f: impl Fn(f64, f64, f64) -> (f64, f64),
) -> Result<Vec<Array>> {
    let shape = broadcast_shapes(a.shape(), b.shape())?;
    let ab = a.broadcast_to(&shape)?;
    let bb = b.broadcast_to(&shape)?;
    let (da, db): (Vec<f64>, Vec<f64>) = g
        .data()
        .iter()
        .zip(ab.data().iter().zip(bb.data()))
        .map(|(&g, (&a, &b))| f(g, a, b))
        .unzip();
    Ok(vec![
        Array::from_parts(shape.clone(), da, a.precision()).reduce_to_shape(a.shape())?,
        Array::from_parts(shape, db, b.precision()).reduce_to_shape(b.shape())?,
    ])
}

// ---------------------------------------------------------------------------
// Graph builders
// ---------------------------------------------------------------------------

pub fn matrix_multiply(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::MatrixMultiply, vec![a.into_node(), b.into_node()])
}

pub fn cross_correlate(signal: impl IntoNode, kernel: impl IntoNode) -> Result<Node> {
    evaluate(
        Op::CrossCorrelate,
        vec![signal.into_node(), kernel.into_node()],
    )
}

pub fn times(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Times, vec![a.into_node(), b.into_node()])
}

pub fn divide(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Divide, vec![a.into_node(), b.into_node()])
}

pub fn max(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Max, vec![a.into_node(), b.into_node()])
}

pub fn min(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Min, vec![a.into_node(), b.into_node()])
}

pub fn maxpool(x: impl IntoNode, width: usize) -> Result<Node> {
    evaluate(Op::Maxpool { width }, vec![x.into_node()])
}

pub fn sum(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Sum, vec![x.into_node()])
}

pub fn mean(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Mean, vec![x.into_node()])
}

pub fn add(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Add, vec![a.into_node(), b.into_node()])
}

/// Variadic addition of two or more terms.
pub fn add_all(terms: &[Node]) -> Result<Node> {
    evaluate(Op::Add, terms.to_vec())
}

pub fn subtract(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    evaluate(Op::Subtract, vec![a.into_node(), b.into_node()])
}

/// `x^exponent` element-wise; the exponent is not differentiated.
pub fn power(x: impl IntoNode, exponent: f64) -> Result<Node> {
    evaluate(Op::Power { exponent }, vec![x.into_node()])
}

pub fn exponential(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Exponential, vec![x.into_node()])
}

pub fn log(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Log, vec![x.into_node()])
}

pub fn sqrt(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Sqrt, vec![x.into_node()])
}

pub fn sin(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Sin, vec![x.into_node()])
}

pub fn cos(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Cos, vec![x.into_node()])
}

pub fn tanh(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Tanh, vec![x.into_node()])
}

pub fn absolute_value(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::AbsoluteValue, vec![x.into_node()])
}

pub fn concatenate(parts: &[Node]) -> Result<Node> {
    evaluate(Op::Concatenate, parts.to_vec())
}

pub fn expand(x: impl IntoNode) -> Result<Node> {
    evaluate(Op::Expand, vec![x.into_node()])
}

pub fn slice(x: impl IntoNode, start: usize, end: usize) -> Result<Node> {
    evaluate(Op::Slice { start, end }, vec![x.into_node()])
}

/// Inner product `sum(a * b)`.
pub fn dot(a: impl IntoNode, b: impl IntoNode) -> Result<Node> {
    sum(times(a, b)?)
}
