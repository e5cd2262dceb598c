//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gradflow::demos::catenary::{solve_catenary, CatenarySpec};
use gradflow::demos::histogram::{morph_input, train_classifier, ClassifierSpec};
use gradflow::demos::ode::{analytic_solution, euler_reference, solve_ode_bvp, OdeSpec};
use gradflow::gradcheck::{sweep_ops, OP_NAMES};
use gradflow::optim::{smoothed_derivatives, OptimizerConfig, StepAction, StepSizeController};
use gradflow::{ops, with_precision, Array, Error, Node, Precision, Rng};

const SWEEP_INSTANCES: usize = 50;
const SWEEP_BUDGET: Duration = Duration::from_secs(60);
const CATENARY_TOL: f64 = 0.01;
const CATENARY_BUDGET: Duration = Duration::from_secs(60);
const MIN_ACCURACY: f64 = 0.97;
const MAX_TRAIN_STEPS: usize = 20_000;
const CLASSIFIER_BUDGET: Duration = Duration::from_secs(300);
const MORPH_EPS: f64 = 1e-2;
const MORPH_ITERATIONS: usize = 10_000;
const MIN_MORPHED: usize = 9;
const ODE_TOL: f64 = 0.05;
const ODE_BUDGET: Duration = Duration::from_secs(60);
const POLY_TOL: f64 = 1e-12;
const EULER_TOL: f64 = 1e-3;
const EULER_STEPS: usize = 100_000;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient oracle sweep", gradient_sweep),
        ("maxpool worked example", maxpool_table),
        ("catenary accuracy", catenary_accuracy),
        ("catenary ordering", catenary_ordering),
        ("classifier accuracy", classifier_accuracy),
        ("input morphing", morphing),
        ("ODE boundary-value problem", ode_bvp),
        ("optimizer state machine", optimizer_state_machine),
        ("Euler vs analytic", euler_agreement),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_sweep() -> Outcome {
    let start = Instant::now();
    let mut failing = Vec::new();
    for precision in [Precision::F32, Precision::F64] {
        let reports = sweep_ops(precision, SWEEP_INSTANCES, 2024).map_err(|e| e.to_string())?;
        if reports.len() != OP_NAMES.len() {
            return Err(format!("{} ops swept at {precision}", reports.len()));
        }
        failing.extend(
            reports
                .iter()
                .filter(|r| !r.passed)
                .map(|r| format!("{}@{precision}", r.op)),
        );
    }
    let elapsed = start.elapsed();
    ensure(
        failing.is_empty() && elapsed < SWEEP_BUDGET,
        format!(
            "{} ops x {SWEEP_INSTANCES} instances at f32 and f64, failing {failing:?}, {:.2}s",
            OP_NAMES.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn maxpool_table() -> Outcome {
    with_precision(Precision::F64, || {
        let x = Node::parameter(Array::from_vec(vec![
            3.0, 1.0, -5.0, 0.0, 2.0, 2.0, 9.0, 5.0,
        ]))
        .map_err(|e| e.to_string())?;
        // Distinct upstream partials 1..4 make the routing visible.
        let loss = ops::dot(
            ops::maxpool(&x, 2).map_err(|e| e.to_string())?,
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .map_err(|e| e.to_string())?;
        loss.compute_gradient().map_err(|e| e.to_string())?;
        let grad = x.partial().expect("parameter");
        let expect = [1.0, 0.0, 0.0, 2.0, 3.0, 0.0, 4.0, 0.0];
        ensure(grad.data() == expect, format!("partials {:?}", grad.data()))
    })
}

fn catenary_run() -> Result<gradflow::demos::DemoResult, String> {
    let spec = CatenarySpec {
        n: 50,
        precision: Precision::F64,
        ..Default::default()
    };
    solve_catenary(&spec).map_err(|e| e.to_string())
}

fn catenary_accuracy() -> Outcome {
    let r = catenary_run()?;
    let ends = (r.solution.data()[0], r.solution.data()[50]);
    ensure(
        r.max_abs_error < CATENARY_TOL
            && ends == (0.0, 0.0)
            && r.runtime_seconds < CATENARY_BUDGET.as_secs_f64(),
        format!(
            "max abs error {:.3e} (< {CATENARY_TOL}), endpoints {ends:?}, {} steps, {:.2}s",
            r.max_abs_error,
            r.loss_trace.len(),
            r.runtime_seconds
        ),
    )
}

fn catenary_ordering() -> Outcome {
    let r = catenary_run()?;
    let spec = CatenarySpec::default();
    let y = Array::from_vec(r.solution.data().to_vec());
    let converged =
        gradflow::demos::catenary::curve_loss(&y, spec.l0).map_err(|e| e.to_string())?;
    let parabola = r.metric("loss_parabola").unwrap_or(f64::NAN);
    let circle = r.metric("loss_circle").unwrap_or(f64::NAN);
    ensure(
        converged < parabola && converged < circle,
        format!("converged {converged:.6} < parabola {parabola:.6} and circle {circle:.6}"),
    )
}

fn classifier_spec(seed: u64) -> ClassifierSpec {
    ClassifierSpec {
        seed,
        ..Default::default()
    }
}

fn classifier_accuracy() -> Outcome {
    let start = Instant::now();
    let mut accuracies = Vec::new();
    let mut steps = 0;
    for seed in 0..3 {
        let spec = classifier_spec(seed);
        steps = spec.optimizer.max_steps;
        let trained = train_classifier(&spec).map_err(|e| e.to_string())?;
        accuracies.push(trained.result.metric("accuracy").unwrap_or(0.0));
    }
    let mut sorted = accuracies.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[1];
    let elapsed = start.elapsed();
    ensure(
        median >= MIN_ACCURACY && steps <= MAX_TRAIN_STEPS && elapsed < CLASSIFIER_BUDGET,
        format!(
            "median held-out accuracy {median} over seeds 0..3 {accuracies:?}, {steps} steps, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn morphing() -> Outcome {
    let trained = train_classifier(&classifier_spec(0)).map_err(|e| e.to_string())?;
    let model = &trained.model;
    let starts: Vec<&Array> = trained
        .holdout
        .iter()
        .filter(|(x, class)| *class == 0 && model.score(x).is_ok_and(|f| f < 0.0))
        .map(|(x, _)| x)
        .take(10)
        .collect();
    let mut flipped = 0;
    let mut scores = Vec::new();
    with_precision(Precision::F64, || {
        for x0 in &starts {
            match morph_input(model, x0, 1.0, MORPH_EPS, MORPH_ITERATIONS) {
                Ok(x1) => {
                    flipped += 1;
                    scores.push((
                        model.score(x0).unwrap_or(f64::NAN),
                        model.score(&x1).unwrap_or(f64::NAN),
                    ));
                }
                Err(Error::NoProgress { .. }) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
        Ok(())
    })?;
    let (f0, f1) = scores.first().copied().unwrap_or((f64::NAN, f64::NAN));
    ensure(
        starts.len() == 10 && flipped >= MIN_MORPHED,
        format!(
            "{flipped}/{} class-0 inputs flipped; first went {f0:.3} -> {f1:.3}",
            starts.len()
        ),
    )
}

fn ode_bvp() -> Outcome {
    let start = Instant::now();
    let mut spec = OdeSpec::new(20, 0.1).map_err(|e| e.to_string())?;
    spec.precision = Precision::F64;
    let r = solve_ode_bvp(&spec).map_err(|e| e.to_string())?;
    let ends = (r.solution.data()[0], r.solution.data()[19]);

    let mut f32_spec = OdeSpec::new(30, 0.1).map_err(|e| e.to_string())?;
    f32_spec.precision = Precision::F32;
    let overflow = solve_ode_bvp(&f32_spec);
    let elapsed = start.elapsed();
    ensure(
        r.max_abs_error < ODE_TOL
            && ends == (1.0, 0.1)
            && matches!(overflow, Err(Error::NonFiniteLoss { .. }))
            && elapsed < ODE_BUDGET,
        format!(
            "N=20 f64 max abs error {:.3e} (< {ODE_TOL}), boundaries {ends:?}; N=30 f32 -> {:?}; {:.2}s",
            r.max_abs_error,
            overflow.err(),
            elapsed.as_secs_f64()
        ),
    )
}

fn optimizer_state_machine() -> Outcome {
    // Falls, bottoms out, rises, with noise.
    let mut rng = Rng::new(8);
    let losses: Vec<f64> = (0..400)
        .map(|t| {
            let x = t as f64 / 100.0 - 2.0;
            x * x + 0.002 * rng.normal()
        })
        .collect();
    let mut c = StepSizeController::new(&OptimizerConfig::default());
    let mut ceiling: Option<f64> = None;
    let mut violations = 0;
    let mut grew = 0;
    for &l in &losses {
        let obs = c.observe(l);
        if obs.action == StepAction::Grow {
            grew += 1;
        }
        if let Some(cap) = ceiling {
            if obs.s > cap {
                violations += 1;
            }
        }
        if obs.action == StepAction::Shrink && ceiling.is_none() {
            ceiling = Some(obs.s);
        }
    }

    let mut worst: f64 = 0.0;
    for a in -3..=3 {
        for b in -3..=3 {
            for q in -3..=3 {
                let p = |t: f64| a as f64 + b as f64 * t + q as f64 * t * t;
                let (d1, d2) = smoothed_derivatives(&[p(0.0), p(1.0), p(2.0), p(3.0)]);
                worst = worst
                    .max((d1 - (b as f64 + 6.0 * q as f64)).abs())
                    .max((d2 - 2.0 * q as f64).abs());
            }
        }
    }
    ensure(
        ceiling.is_some() && grew > 0 && violations == 0 && worst <= POLY_TOL,
        format!("{grew} grow steps, shrink ceiling {ceiling:?}, {violations} later increases; polynomial error {worst:.1e}"),
    )
}

fn euler_agreement() -> Outcome {
    let e = euler_reference(1.0, EULER_STEPS);
    let diff = (e.data()[EULER_STEPS] - analytic_solution(1.0)).abs();
    ensure(
        diff < EULER_TOL && e.data()[0] == 1.0,
        format!("|euler - analytic| at t=1 is {diff:.3e} with {EULER_STEPS} steps"),
    )
}
