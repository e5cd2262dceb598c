//! Worked problems solved with the library: a hanging rope, a histogram
//! classifier, and a boundary-value ODE.

pub mod catenary;
pub mod histogram;
pub mod ode;

use std::path::Path;

use crate::array::Array;
use crate::error::Result;
use crate::io::{columns_to_csv, write_file, Plot, Series};
use crate::optim::LossTrace;

pub use catenary::{catenary_loss, solve_catenary, CatenarySpec};
pub use histogram::{
    classifier_forward, classifier_loss, generate_histogram_example, morph_input, train_classifier,
    ClassifierSpec, HistogramModel,
};
pub use ode::{euler_reference, ode_residual, solve_ode_bvp, OdeSpec};

/// Output of one demo run.
#[derive(Debug, Clone)]
pub struct DemoResult {
    /// Abscissa of `solution` and `reference`.
    pub grid: Array,
    pub solution: Array,
    pub reference: Array,
    pub loss_trace: LossTrace,
    pub max_abs_error: f64,
    pub runtime_seconds: f64,
    /// Demo-specific scalars such as accuracy.
    pub metrics: Vec<(String, f64)>,
}

impl DemoResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(k, _)| k == name)
            .map(|&(_, v)| v)
    }

    /// `grid,numeric,analytic` rows with a header.
    pub fn solution_csv(&self) -> String {
        columns_to_csv(
            &["grid", "numeric", "analytic"],
            &[
                self.grid.data(),
                self.solution.data(),
                self.reference.data(),
            ],
        )
    }

    pub fn plot(&self, title: &str) -> Plot {
        Plot::new(title, "x", "y")
            .with_series(Series::new(
                "numeric",
                self.grid.data(),
                self.solution.data(),
            ))
            .with_series(Series::new("analytic", self.grid.data(), self.reference.data()).dashed())
    }

    /// Writes `solution.csv`, `trace.csv` and `plot.svg` into `dir`.
    pub fn write_artifacts(&self, dir: &Path, title: &str) -> Result<()> {
        write_file(&dir.join("solution.csv"), &self.solution_csv())?;
        write_file(&dir.join("trace.csv"), &self.loss_trace.to_csv())?;
        write_file(&dir.join("plot.svg"), &self.plot(title).to_svg())
    }
}

pub(crate) fn max_abs_diff(a: &Array, b: &Array) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
