use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gradflow::demos::catenary::{solve_catenary, CatenarySpec};
use gradflow::demos::histogram::{morph_input, train_classifier, ClassifierSpec};
use gradflow::demos::ode::{solve_ode_bvp, OdeSpec};
use gradflow::gradcheck::sweep_ops;
use gradflow::io::{format_sig, write_file, Plot, Series};
use gradflow::optim::{Convergence, Optimizer, OptimizerConfig};
use gradflow::{ops, with_precision, Array, Error, Node, Precision};

#[derive(Parser, Debug)]
#[command(
    name = "gradflow",
    version,
    about = "Reverse-mode autodiff demos and diagnostics"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Random seed.
    #[arg(long, global = true, env = "GRADFLOW_SEED", default_value_t = 0)]
    seed: u64,
    /// Element precision, f32 or f64.
    #[arg(long, global = true, default_value = "f64")]
    precision: Precision,
    /// Maximum optimizer steps.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    /// Directory for CSV and SVG output; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Weight of the newest gradient in the search direction, in (0, 1]
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Initial step size
    #[arg(long, global = true)]
    s0: Option<f64>,
    /// Smoothing window for the loss
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    m: Option<u64>,
    /// Step-size factor on a rising, convex loss, in (0, 1)
    #[arg(long, global = true)]
    shrink: Option<f64>,
    /// Step-size factor on a falling loss, greater than 1
    #[arg(long, global = true)]
    grow: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hanging rope of fixed length.
    Catenary {
        /// Number of segments.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// Target rope length.
        #[arg(long)]
        l0: Option<f64>,
    },
    /// Histogram classifier, then morph class-0 inputs into class 1.
    Histogram {
        /// Held-out examples per class.
        #[arg(long, default_value_t = 1000)]
        holdout: usize,
        /// Number of held-out class-0 inputs to morph.
        #[arg(long, default_value_t = 10)]
        morph: usize,
        /// Morphing step size.
        #[arg(long, default_value_t = 1e-2)]
        eps: f64,
    },
    /// Damped oscillator boundary-value problem.
    Ode {
        /// Grid points.
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// Value at the right boundary.
        #[arg(long, default_value_t = 0.1)]
        b: f64,
    },
    /// Compare every op's gradient with finite differences.
    Gradcheck {
        /// Random instances per op.
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
    /// Minimize the Rosenbrock function.
    Bench {
        /// Dimension.
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let c = &cli.common;
    match cli.command {
        Command::Catenary { n, l0 } => {
            let mut spec = CatenarySpec {
                n,
                seed: c.seed,
                precision: c.precision,
                ..Default::default()
            };
            if let Some(l0) = l0 {
                spec.l0 = l0;
            }
            spec.optimizer = optimizer(c, spec.optimizer);
            let result = solve_catenary(&spec)?;
            result.write_artifacts(&out_dir(c)?, "catenary")?;
            summary(
                "catenary",
                result.final_loss(),
                result.max_abs_error,
                result.runtime_seconds,
                "",
            );
        }
        Command::Ode { n, b } => {
            let mut spec = OdeSpec::new(n, b)?;
            spec.precision = c.precision;
            spec.optimizer = optimizer(c, spec.optimizer);
            let result = solve_ode_bvp(&spec)?;
            result.write_artifacts(&out_dir(c)?, "ode")?;
            let extra = format!(" t1={}", format_sig(spec.t1));
            summary(
                "ode",
                result.final_loss(),
                result.max_abs_error,
                result.runtime_seconds,
                &extra,
            );
        }
        Command::Histogram {
            holdout,
            morph,
            eps,
        } => {
            let mut spec = ClassifierSpec {
                seed: c.seed,
                holdout,
                precision: c.precision,
                ..Default::default()
            };
            spec.optimizer = optimizer(c, spec.optimizer);
            let trained = train_classifier(&spec)?;
            let result = &trained.result;
            let dir = out_dir(c)?;
            write_file(&dir.join("solution.csv"), &result.solution_csv())?;
            write_file(&dir.join("trace.csv"), &result.loss_trace.to_csv())?;
            let t: Vec<f64> = result
                .loss_trace
                .records
                .iter()
                .map(|r| r.t as f64)
                .collect();
            let smoothed: Vec<f64> = result
                .loss_trace
                .records
                .iter()
                .map(|r| r.smoothed)
                .collect();
            let plot = Plot::new("histogram classifier", "step", "loss")
                .with_series(Series::new("loss", &t, &result.loss_trace.losses()))
                .with_series(Series::new("smoothed", &t, &smoothed).dashed());
            write_file(&dir.join("plot.svg"), &plot.to_svg())?;

            let flipped = with_precision(c.precision, || -> Result<usize, Error> {
                let mut flipped = 0;
                for (x, _) in trained
                    .holdout
                    .iter()
                    .filter(|(_, class)| *class == 0)
                    .take(morph)
                {
                    match morph_input(&trained.model, x, 1.0, eps, 10_000) {
                        Ok(_) => flipped += 1,
                        Err(Error::NoProgress { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok(flipped)
            })?;
            let accuracy = result.metric("accuracy").unwrap_or(f64::NAN);
            let extra = format!(
                " accuracy={} morphed={flipped}/{morph}",
                format_sig(accuracy)
            );
            summary(
                "histogram",
                result.final_loss(),
                result.max_abs_error,
                result.runtime_seconds,
                &extra,
            );
        }
        Command::Gradcheck { instances } => {
            if instances == 0 {
                return Err(Failure::Usage("--instances must be positive".into()));
            }
            let reports = sweep_ops(c.precision, instances, c.seed)?;
            println!("op,precision,instances,max_abs_err,max_rel_err,skipped,passed");
            for r in &reports {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.op,
                    c.precision,
                    r.instances,
                    format_sig(r.max_abs_err),
                    format_sig(r.max_rel_err),
                    r.skipped,
                    r.passed
                );
            }
            if reports.iter().any(|r| !r.passed) {
                return Err(Failure::Numerical("gradient check failed".into()));
            }
        }
        Command::Bench { n } => {
            if n < 2 {
                return Err(Failure::Usage("--n must be at least 2".into()));
            }
            let config = optimizer(
                c,
                OptimizerConfig {
                    beta: 0.5,
                    s0: 1e-4,
                    m: 10,
                    max_steps: 20_000,
                    ..Default::default()
                },
            );
            let start = Instant::now();
            let (loss, error, trace) = with_precision(c.precision, || -> Result<_, Error> {
                let x = Node::parameter(Array::zeros(vec![n]))?;
                let mut opt = Optimizer::new(config)?;
                let done = Convergence::default();
                opt.minimize(
                    std::slice::from_ref(&x),
                    || rosenbrock(&x, n),
                    |t| done.is_converged(t),
                )?;
                let error = x
                    .value()
                    .data()
                    .iter()
                    .map(|v| (v - 1.0).abs())
                    .fold(0.0, f64::max);
                let loss = opt.trace().last().map_or(f64::NAN, |r| r.loss);
                Ok((loss, error, opt.into_trace()))
            })?;
            write_file(&out_dir(c)?.join("trace.csv"), &trace.to_csv())?;
            let extra = format!(" steps={}", trace.len());
            summary("bench", loss, error, start.elapsed().as_secs_f64(), &extra);
        }
    }
    Ok(())
}

/// `sum(100 (x[i+1] - x[i]^2)^2 + (1 - x[i])^2)`, minimized at all ones.
fn rosenbrock(x: &Node, n: usize) -> gradflow::Result<Node> {
    let head = ops::slice(x, 0, n - 1)?;
    let tail = ops::slice(x, 1, n)?;
    let valley = ops::power(ops::subtract(tail, ops::power(&head, 2.0)?)?, 2.0)?;
    let slope = ops::power(ops::subtract(1.0, head)?, 2.0)?;
    ops::sum(ops::add(ops::times(valley, 100.0)?, slope)?)
}

fn optimizer(c: &Common, mut config: OptimizerConfig) -> OptimizerConfig {
    if let Some(v) = c.beta {
        config.beta = v;
    }
    if let Some(v) = c.s0 {
        config.s0 = v;
    }
    if let Some(v) = c.m {
        config.m = v as usize;
    }
    if let Some(v) = c.shrink {
        config.shrink = v;
    }
    if let Some(v) = c.grow {
        config.grow = v;
    }
    if let Some(v) = c.steps {
        config.max_steps = v as usize;
    }
    config
}

fn out_dir(c: &Common) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(&c.out_dir)?;
    Ok(c.out_dir.clone())
}

fn summary(name: &str, loss: f64, error: f64, runtime: f64, extra: &str) {
    println!(
        "{name}: final_loss={} max_abs_error={} runtime={runtime:.2}s{extra}",
        format_sig(loss),
        format_sig(error)
    );
}
