//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the summary is always printed; exits non-zero if any
//! criterion fails.

use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use kfp_core::cauchy::{self, CauchyDatum, SolveConfig};
use kfp_core::covariance;
use kfp_core::fixtures;
use kfp_core::kernel;
use kfp_core::operator::OperatorSpec;
use kfp_core::verify::{self, Moments, SdeConfig, MC_BLOCK};

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        summary: summary.into(),
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn fmt_s(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn kolmogorov_closed_form() -> Outcome {
    let start = Instant::now();
    let k = fixtures::kolmogorov();
    let g = kernel::gamma(&k, &[0.0, 0.0], 1.0, &[0.0, 0.0], 0.0).unwrap().value;
    let exact = 3f64.sqrt() / (2.0 * std::f64::consts::PI);
    let gamma_err = (g - exact).abs() / exact;
    let mut cov_err = 0.0f64;
    for t in [0.5, 1.0, 2.0] {
        let c = covariance::covariance_matrix(&k, 0.0, t).unwrap();
        let e = [t, -t * t / 2.0, -t * t / 2.0, t * t * t / 3.0];
        for (a, b) in c.iter().zip(e) {
            cov_err = cov_err.max((a - b).abs() / b.abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        gamma_err <= 1e-10 && cov_err <= 1e-13 && within(elapsed, 1.0),
        format!(
            "gamma rel err {gamma_err:.2e} (<= 1e-10), C(t) entrywise {cov_err:.2e} (<= 1e-13), {}",
            fmt_s(elapsed)
        ),
    )
}

fn mass_identities() -> Outcome {
    let start = Instant::now();
    let specs = [
        ("heat", fixtures::heat()),
        ("ornstein-uhlenbeck", fixtures::ornstein_uhlenbeck()),
        ("kolmogorov", fixtures::kolmogorov()),
        ("chain3", fixtures::chain3()),
    ];
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (name, spec) in &specs {
        let x0: Vec<f64> = (0..spec.dim()).map(|i| 0.4 - 0.3 * i as f64).collect();
        for span in verify::MASS_SPANS {
            let (ex, ey) = verify::mass_errors(spec, &x0, 0.2, span).unwrap();
            if ex.max(ey) > worst {
                worst = ex.max(ey);
                worst_at = format!("{name} at span {span}");
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-6 && within(elapsed, 10.0),
        format!("worst rel err {worst:.2e} ({worst_at}) (<= 1e-6), {}", fmt_s(elapsed)),
    )
}

fn pde_residuals() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (name, spec) in fixtures::all() {
        for (kind, rec) in [
            ("L", verify::pde_sweep(&spec, 101, 0..100).unwrap()),
            ("L*", verify::adjoint_sweep(&spec, 102, 0..100).unwrap()),
        ] {
            if rec.worst > worst || rec.worst.is_nan() {
                worst = rec.worst;
                worst_at = format!("{kind} on {name}");
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && within(elapsed, 30.0),
        format!(
            "worst normalized residual {worst:.2e} ({worst_at}) (<= 1e-4), {}",
            fmt_s(elapsed)
        ),
    )
}

fn trace_identities() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let mut samples = 0;
    for (name, spec) in fixtures::all() {
        let rec = verify::trace_sweep(&spec, 20).unwrap();
        samples += rec.samples;
        if rec.worst > worst || rec.worst.is_nan() {
            worst = rec.worst;
            worst_at = name.to_string();
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-5,
        format!(
            "worst residual {worst:.2e} ({worst_at}) over {samples} evaluations (<= 1e-5), {}",
            fmt_s(elapsed)
        ),
    )
}

fn comparison() -> Outcome {
    let start = Instant::now();
    let piecewise = fixtures::kolmogorov_piecewise();
    let constant = fixtures::kolmogorov();
    let sandwich = parallel_record(10_000, |r| verify::comparison_sweep(&piecewise, None, 201, r).unwrap());
    let equality = parallel_record(10_000, |r| {
        verify::comparison_equality_sweep(&constant, 202, r).unwrap()
    });
    let elapsed = start.elapsed();
    outcome(
        sandwich.passed && equality.passed && sandwich.samples == 10_000,
        format!(
            "piecewise max violation {:.2e} over {} samples (<= 1e-12), nu = 1 max gap {:.2e} (<= 1e-12), {}",
            sandwich.worst,
            sandwich.samples,
            equality.worst,
            fmt_s(elapsed)
        ),
    )
}

fn short_time_slope() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, spec) in [
        ("heat2", fixtures::heat2()),
        ("kolmogorov", fixtures::kolmogorov()),
        ("chain3", fixtures::chain3()),
    ] {
        let fit = verify::short_time_slope(&spec).unwrap();
        ok &= fit.rel_error() <= 0.01;
        parts.push(format!("{name} Q_fit {:.4} vs {}", fit.q_fit, fit.q_expected));
    }
    let elapsed = start.elapsed();
    outcome(ok, format!("{} (within 1%), {}", parts.join(", "), fmt_s(elapsed)))
}

fn reproduction() -> Outcome {
    let start = Instant::now();
    let cfg = SolveConfig::default();
    let heat = cauchy::reproduction_residual(&fixtures::heat(), &[0.0], 1.0, &[0.0], 0.0, 0.5, &cfg).unwrap();
    let kol =
        cauchy::reproduction_residual(&fixtures::kolmogorov(), &[1.0, 1.0], 1.0, &[0.0, 0.0], 0.0, 0.5, &cfg).unwrap();
    let ou =
        cauchy::reproduction_residual(&fixtures::ornstein_uhlenbeck(), &[0.0], 2.0, &[0.0], 0.0, 1.0, &cfg).unwrap();
    // plus random configurations on the same fixtures
    let heat_sweep = verify::reproduction_sweep(&fixtures::heat(), 301, 0..10, &cfg)
        .unwrap()
        .worst;
    let kol_sweep = verify::reproduction_sweep(&fixtures::kolmogorov(), 302, 0..10, &cfg)
        .unwrap()
        .worst;
    let ou_sweep = verify::reproduction_sweep(&fixtures::ornstein_uhlenbeck(), 303, 0..10, &cfg)
        .unwrap()
        .worst;
    let heat_worst = heat.max(heat_sweep);
    let other_worst = kol.max(ou).max(kol_sweep).max(ou_sweep);
    let elapsed = start.elapsed();
    outcome(
        heat_worst <= 1e-8 && other_worst <= 1e-6,
        format!(
            "heat {heat_worst:.2e} (<= 1e-8), kolmogorov {:.2e} / OU {:.2e} (<= 1e-6), {}",
            kol.max(kol_sweep),
            ou.max(ou_sweep),
            fmt_s(elapsed)
        ),
    )
}

fn horizon() -> Outcome {
    let start = Instant::now();
    let heat = fixtures::heat();
    let h = cauchy::horizon(&heat, 0.0, 1.0, 0.5).unwrap();
    let datum = CauchyDatum::gaussian_growth(|y| (y[0] * y[0]).exp(), 1.0).unwrap();
    let u = cauchy::solve_at(&heat, &datum, 0.0, &[0.0], 0.1, &SolveConfig::default()).unwrap();
    let exact = 1.0 / 0.6f64.sqrt();
    let horizon_err = (h.raw - 0.25).abs();
    let solve_err = (u - exact).abs();
    let elapsed = start.elapsed();
    outcome(
        horizon_err <= 1e-4 && solve_err <= 1e-6,
        format!(
            "raw horizon {:.10} (|T - 0.25| = {horizon_err:.1e} <= 1e-4), u(0, 0.1) = {u:.10} (err {solve_err:.1e} <= 1e-6), {}",
            h.raw,
            fmt_s(elapsed)
        ),
    )
}

/// Blocks in parallel, merged in block order (same bits as sequential).
/// Splits `0..count` across threads and absorbs the parts in range order.
fn parallel_record(
    count: u64,
    sweep: impl Fn(std::ops::Range<u64>) -> verify::CheckRecord + Sync,
) -> verify::CheckRecord {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()) as u64;
    let chunk = count.div_ceil(workers).max(1);
    let sweep = &sweep;
    let parts: Vec<verify::CheckRecord> = thread::scope(|scope| {
        let handles: Vec<_> = (0..count)
            .step_by(chunk as usize)
            .map(|a| scope.spawn(move || sweep(a..(a + chunk).min(count))))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("at least one part");
    for p in parts {
        total.absorb(p);
    }
    total
}

fn parallel_moments(spec: &OperatorSpec, x0: &[f64], t0: f64, t: f64, sde: &SdeConfig, seed: u64) -> Moments {
    let blocks: Vec<(u64, u64)> = (0..sde.paths.div_ceil(MC_BLOCK))
        .map(|b| (b * MC_BLOCK, ((b + 1) * MC_BLOCK).min(sde.paths)))
        .collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = blocks.len().div_ceil(workers);
    let parts: Vec<Vec<Moments>> = thread::scope(|scope| {
        let handles: Vec<_> = blocks
            .chunks(chunk)
            .map(|mine| {
                scope.spawn(move || {
                    mine.iter()
                        .map(|&(a, b)| verify::mc_moments(spec, x0, t0, t, sde, seed, a..b).unwrap())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut total = Moments::zeros(spec.dim());
    for m in parts.iter().flatten() {
        total.merge(m);
    }
    total
}

fn monte_carlo() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (i, (name, spec)) in fixtures::all().into_iter().enumerate() {
        let (x0, t0, t) = verify::mc_setup(&spec);
        let sde = SdeConfig::from_spec(&spec, 100_000, 1e-3).unwrap();
        let m = parallel_moments(&spec, &x0, t0, t, &sde, 900 + i as u64);
        let report = verify::mc_summarize(&spec, &x0, t0, t, &m).unwrap();
        if report.worst_z > worst || report.worst_z.is_nan() {
            worst = report.worst_z;
            worst_at = name.to_string();
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 5.0 && within(elapsed, 60.0),
        format!(
            "worst deviation {worst:.2} SE ({worst_at}) at 1e5 paths, dt = 1e-3 (<= 5), {}",
            fmt_s(elapsed)
        ),
    )
}

fn derivative_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for (name, spec) in fixtures::all() {
        let rec = verify::derivative_sweep(&spec, 1001, 0..200).unwrap();
        if rec.worst > worst || rec.worst.is_nan() {
            worst = rec.worst;
            worst_at = name.to_string();
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-5,
        format!(
            "worst relative deviation {worst:.2e} ({worst_at}) at 200 points per fixture (<= 1e-5), {}",
            fmt_s(elapsed)
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("kolmogorov closed form", kolmogorov_closed_form),
        ("mass identities", mass_identities),
        ("pde residuals", pde_residuals),
        ("trace identities", trace_identities),
        ("comparison sandwich", comparison),
        ("short-time slope", short_time_slope),
        ("reproduction", reproduction),
        ("horizon", horizon),
        ("monte-carlo", monte_carlo),
        ("derivative oracle", derivative_oracle),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<24} {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            name,
            o.summary
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
