//! Telling normal samples from uniform ones by their 16-bin histograms,
//! with a small convolutional model, and nudging inputs across its decision
//! boundary.

use std::time::Instant;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::graph::{no_grad, IntoNode, Node};
use crate::ops;
use crate::optim::{Optimizer, OptimizerConfig};
use crate::precision::{with_precision, Precision};
use crate::rng::Rng;

use super::DemoResult;

pub const BINS: usize = 16;
pub const DRAWS: usize = 500;
const KERNEL: usize = 5;
const HIDDEN: usize = 7;
const FEATURES: usize = 3 * (BINS - KERNEL + 1) / 2;

/// Normalized 16-bin histogram of 500 draws. Class 1 draws from N(0, 1),
/// class 0 from the uniform distribution with the same mean and variance.
/// Bins span the sample's own range.
pub fn generate_histogram_example(class: u8, rng: &mut Rng) -> Array {
    let half_width = 3f64.sqrt();
    let samples: Vec<f64> = (0..DRAWS)
        .map(|_| {
            if class == 1 {
                rng.normal()
            } else {
                rng.uniform(-half_width, half_width)
            }
        })
        .collect();
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let width = (hi - lo) / BINS as f64;
    let mut counts = [0usize; BINS];
    for v in samples {
        let bin = if width > 0.0 {
            ((v - lo) / width) as usize
        } else {
            0
        };
        counts[bin.min(BINS - 1)] += 1;
    }
    Array::from_vec(counts.iter().map(|&c| c as f64 / DRAWS as f64).collect())
}

/// Three length-5 kernels, a 7x18 matrix with bias, and a 7-vector of
/// output weights.
#[derive(Debug, Clone)]
pub struct HistogramModel {
    pub kernels: [Node; 3],
    pub matrix: Node,
    pub bias: Node,
    pub output: Node,
}

impl HistogramModel {
    /// Trainable model with standard-normal entries.
    pub fn random(rng: &mut Rng) -> Result<Self> {
        Ok(HistogramModel {
            kernels: [
                Node::parameter(rng.normal_array(&[KERNEL]))?,
                Node::parameter(rng.normal_array(&[KERNEL]))?,
                Node::parameter(rng.normal_array(&[KERNEL]))?,
            ],
            matrix: Node::parameter(rng.normal_array(&[HIDDEN, FEATURES]))?,
            bias: Node::parameter(rng.normal_array(&[HIDDEN]))?,
            output: Node::parameter(rng.normal_array(&[HIDDEN]))?,
        })
    }

    pub fn zeros() -> Self {
        let c = |shape: &[usize]| Node::constant(Array::zeros(shape.to_vec()));
        HistogramModel {
            kernels: [c(&[KERNEL]), c(&[KERNEL]), c(&[KERNEL])],
            matrix: c(&[HIDDEN, FEATURES]),
            bias: c(&[HIDDEN]),
            output: c(&[HIDDEN]),
        }
    }

    /// Same weights, frozen.
    pub fn to_constants(&self) -> Self {
        let c = |n: &Node| Node::constant(n.value().clone());
        HistogramModel {
            kernels: [
                c(&self.kernels[0]),
                c(&self.kernels[1]),
                c(&self.kernels[2]),
            ],
            matrix: c(&self.matrix),
            bias: c(&self.bias),
            output: c(&self.output),
        }
    }

    pub fn parameters(&self) -> Vec<Node> {
        let mut p = self.kernels.to_vec();
        p.extend([self.matrix.clone(), self.bias.clone(), self.output.clone()]);
        p
    }

    /// Model score without recording a graph.
    pub fn score(&self, x: &Array) -> Result<f64> {
        no_grad(|| classifier_forward(self, x)?.item())
    }
}

/// Scalar score `f(x)`; positive means class 1.
pub fn classifier_forward(model: &HistogramModel, x: impl IntoNode) -> Result<Node> {
    let x = x.into_node();
    let pooled = model
        .kernels
        .iter()
        .map(|k| ops::maxpool(ops::cross_correlate(&x, k)?, 2))
        .collect::<Result<Vec<_>>>()?;
    let features = ops::concatenate(&pooled)?;
    let hidden = ops::add(ops::matrix_multiply(&model.matrix, features)?, &model.bias)?;
    ops::dot(hidden, &model.output)
}

/// Logistic cross-entropy `log(1 + e^y) - target * y` for a score `y`,
/// written so that neither branch exponentiates a positive number.
pub fn classifier_loss(y: &Node, target: u8) -> Result<Node> {
    let t = f64::from(target);
    let v = y.item()?;
    let softplus = if v > 0.0 {
        ops::add(
            y,
            ops::log(ops::add(ops::exponential(ops::times(y, -1.0)?)?, 1.0)?)?,
        )?
    } else {
        ops::log(ops::add(ops::exponential(y)?, 1.0)?)?
    };
    ops::subtract(softplus, ops::times(y, t)?)
}

#[derive(Debug, Clone)]
pub struct ClassifierSpec {
    pub seed: u64,
    /// Examples per class in each training batch.
    pub batch: usize,
    /// Held-out examples per class.
    pub holdout: usize,
    pub precision: Precision,
    pub optimizer: OptimizerConfig,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            seed: 0,
            batch: 20,
            holdout: 1000,
            precision: Precision::F64,
            optimizer: OptimizerConfig {
                beta: 0.1,
                s0: 1e-2,
                m: 100,
                max_steps: 3_000,
                ..OptimizerConfig::default()
            },
        }
    }
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.holdout == 0 {
            return Err(Error::InvalidConfig(
                "batch and holdout sizes must be positive".into(),
            ));
        }
        self.optimizer.validate()
    }
}

/// Labelled held-out examples, alternating class 0 and class 1.
pub fn holdout_set(rng: &mut Rng, per_class: usize) -> Vec<(Array, u8)> {
    (0..2 * per_class)
        .map(|i| {
            let class = (i % 2) as u8;
            (generate_histogram_example(class, rng), class)
        })
        .collect()
}

/// Fraction of `examples` on the correct side of zero.
pub fn accuracy(model: &HistogramModel, examples: &[(Array, u8)]) -> Result<f64> {
    let mut correct = 0;
    for (x, class) in examples {
        if (model.score(x)? > 0.0) == (*class == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

pub struct TrainedClassifier {
    pub model: HistogramModel,
    pub result: DemoResult,
    /// Held-out examples used for the reported accuracy.
    pub holdout: Vec<(Array, u8)>,
}

/// Trains on fresh random batches for `optimizer.max_steps` steps and scores
/// the held-out set. The result's solution holds the predicted labels and
/// its reference the true ones.
pub fn train_classifier(spec: &ClassifierSpec) -> Result<TrainedClassifier> {
    spec.validate()?;
    let start = Instant::now();
    with_precision(spec.precision, || {
        let mut rng = Rng::new(spec.seed);
        let mut init_rng = rng.fork();
        let mut data_rng = rng.fork();
        let mut holdout_rng = rng.fork();
        let model = HistogramModel::random(&mut init_rng)?;
        let params = model.parameters();
        let mut opt = Optimizer::new(spec.optimizer.clone())?;

        let steps = spec.optimizer.max_steps;
        for _ in 0..steps {
            let batch: Vec<(Array, u8)> = (0..2 * spec.batch)
                .map(|i| {
                    let class = (i % 2) as u8;
                    (generate_histogram_example(class, &mut data_rng), class)
                })
                .collect();
            opt.step(&params, || {
                let losses = batch
                    .iter()
                    .map(|(x, class)| classifier_loss(&classifier_forward(&model, x)?, *class))
                    .collect::<Result<Vec<_>>>()?;
                ops::mean(ops::concatenate(
                    &losses
                        .into_iter()
                        .map(ops::expand)
                        .collect::<Result<Vec<_>>>()?,
                )?)
            })?;
        }

        let holdout = holdout_set(&mut holdout_rng, spec.holdout);
        let mut predicted = Vec::with_capacity(holdout.len());
        let mut truth = Vec::with_capacity(holdout.len());
        for (x, class) in &holdout {
            predicted.push(if model.score(x)? > 0.0 { 1.0 } else { 0.0 });
            truth.push(f64::from(*class));
        }
        let correct = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
        let acc = correct as f64 / holdout.len() as f64;
        let result = DemoResult {
            grid: Array::from_vec((0..holdout.len()).map(|i| i as f64).collect()),
            max_abs_error: if correct == holdout.len() { 0.0 } else { 1.0 },
            solution: Array::from_vec(predicted),
            reference: Array::from_vec(truth),
            loss_trace: opt.into_trace(),
            runtime_seconds: start.elapsed().as_secs_f64(),
            metrics: vec![("accuracy".to_string(), acc)],
        };
        Ok(TrainedClassifier {
            model,
            result,
            holdout,
        })
    })
}

/// Moves `x0` along `target_sign * grad f` in steps of `eps` until the
/// sign of `f` equals `target_sign`. Model weights are held fixed.
pub fn morph_input(
    model: &HistogramModel,
    x0: &Array,
    target_sign: f64,
    eps: f64,
    max_iterations: usize,
) -> Result<Array> {
    if eps.is_nan() || eps <= 0.0 || target_sign == 0.0 {
        return Err(Error::InvalidConfig(
            "eps must be positive and target sign nonzero".into(),
        ));
    }
    let frozen = model.to_constants();
    let x = Node::parameter(x0.clone())?;
    let direction = target_sign.signum();
    for _ in 0..max_iterations {
        let f = classifier_forward(&frozen, &x)?;
        if f.item()? * direction > 0.0 {
            return Ok(x.value().clone());
        }
        f.compute_gradient()?;
        let grad = x.partial().expect("parameter has a partial");
        let next = x.value().zip_map(&grad, |v, g| v + direction * eps * g)?;
        x.set_value(next)?;
    }
    if classifier_forward(&frozen, &x)?.item()? * direction > 0.0 {
        return Ok(x.value().clone());
    }
    Err(Error::NoProgress {
        iterations: max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histograms_are_normalized() {
        let mut rng = Rng::new(1);
        for class in [0, 1] {
            let h = generate_histogram_example(class, &mut rng);
            assert_eq!(h.shape(), &[BINS]);
            assert!(h.data().iter().all(|&v| v >= 0.0));
            assert!((h.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn same_seed_same_example() {
        let a = generate_histogram_example(1, &mut Rng::new(9));
        let b = generate_histogram_example(1, &mut Rng::new(9));
        assert_eq!(a, b);
    }

    #[test]
    fn normal_profile_is_bell_shaped() {
        let mut rng = Rng::new(2);
        let mut mean = [0.0; BINS];
        for _ in 0..1000 {
            let h = generate_histogram_example(1, &mut rng);
            for (m, v) in mean.iter_mut().zip(h.data()) {
                *m += v / 1000.0;
            }
        }
        let peak = (0..BINS)
            .max_by(|&a, &b| mean[a].total_cmp(&mean[b]))
            .unwrap();
        assert!((6..=9).contains(&peak));
        for i in 0..peak {
            assert!(mean[i] < mean[i + 1], "rising at {i}");
        }
        for i in peak..BINS - 1 {
            assert!(mean[i] > mean[i + 1], "falling at {i}");
        }
    }

    #[test]
    fn zero_model_scores_zero() {
        let model = HistogramModel::zeros();
        let x = generate_histogram_example(0, &mut Rng::new(3));
        assert_eq!(model.score(&x).unwrap(), 0.0);
    }

    #[test]
    fn loss_values() {
        with_precision(Precision::F64, || {
            let at = |y: f64, t: u8| {
                classifier_loss(&Node::constant(Array::scalar(y)), t)
                    .unwrap()
                    .item()
                    .unwrap()
            };
            let ln2 = std::f64::consts::LN_2;
            assert!((at(0.0, 1) - ln2).abs() < 1e-15);
            assert!((at(0.0, 0) - ln2).abs() < 1e-15);
            let big = at(100.0, 1);
            assert!(big.is_finite() && big.abs() < 1e-40);
            assert!((at(-100.0, 1) - 100.0).abs() < 1e-12);
        });
    }

    #[test]
    fn morph_is_identity_when_sign_matches() {
        let mut rng = Rng::new(4);
        let model = HistogramModel::random(&mut rng).unwrap();
        let x = generate_histogram_example(1, &mut rng);
        let sign = model.score(&x).unwrap().signum();
        assert_eq!(morph_input(&model, &x, sign, 1e-3, 10).unwrap(), x);
    }
}
