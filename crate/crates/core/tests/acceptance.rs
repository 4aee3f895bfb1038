//! Acceptance suite. Prints one PASS/FAIL line per criterion (with indented
//! details) and exits non-zero if any criterion fails.
//!
//! Extra arguments act as substring filters on the criterion names, e.g.
//! `cargo test -p fas-aircomp --test acceptance -- majorizer`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fas_aircomp::channel::assemble_factors;
use fas_aircomp::harness::{
    check_model_equivalence, random_feasible_layout, run_experiment, run_experiment_to_file, solve_fpa,
    solve_proposed_from, ExperimentSpec, ResultTable, Scheme, Solution, SweepVariable,
};
use fas_aircomp::model::{sample_channel, trial_rng, SystemConfig, C64};
use fas_aircomp::position_opt::{build_surrogate, surrogate_bound};
use fas_aircomp::transceiver::{mse_per_subcarrier, position_objective, update_combiners, update_precoders};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

const SNR_POINTS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
const USER_COUNTS: [f64; 5] = [3.0, 4.0, 5.0, 6.0, 7.0];
const PAIRED_TRIALS: usize = 50;
/// One-sided level of the paired t-tests.
const ALPHA: f64 = 0.05;
/// Rounding allowance when checking that an MSE trace never increases.
const TRACE_RTOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, details: Vec<String>) -> Self {
        Self { pass, details }
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn reference_config() -> SystemConfig {
    SystemConfig::default()
}

fn random_complex(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
}

fn random_precoders(cfg: &SystemConfig, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(cfg.num_users, cfg.num_subcarriers, |_, _| {
        C64::from_polar(
            cfg.power_budget.sqrt() * rng.random::<f64>(),
            2.0 * PI * rng.random::<f64>(),
        )
    })
}

fn model_equivalence() -> Outcome {
    let cfg = SystemConfig {
        num_users: 5,
        num_subcarriers: 64,
        num_antennas: 4,
        num_paths: 4,
        ..reference_config()
    };
    let mut rng = trial_rng(1, 0);
    let report = check_model_equivalence(&cfg, 16, 20, &mut rng).expect("valid setup");
    Outcome::new(
        report.max_relative_error <= 1e-10,
        vec![format!(
            "{} instances, cp_len 16: max relative error {:.2e} (limit 1e-10)",
            report.instances, report.max_relative_error
        )],
    )
}

fn majorizer_validity() -> Outcome {
    let cfg = reference_config();
    let mut worst_gap: f64 = 0.0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut violations = 0;
    for point in 0..100 {
        let mut rng = trial_rng(2, point);
        let chan = sample_channel(&cfg, &mut rng);
        let layout = random_feasible_layout(&cfg, &mut rng);
        let b = random_precoders(&cfg, &mut rng);
        let fc = assemble_factors(&layout, &chan, cfg.num_subcarriers, cfg.wavelength);
        let coeffs = build_surrogate(&fc, &b, cfg.noise_power).expect("positive definite");
        let at = position_objective(&fc, &b, cfg.noise_power).expect("positive definite");
        let bound = surrogate_bound(&coeffs, &layout, &chan, cfg.wavelength);
        worst_gap = worst_gap.max((bound - at).abs() / at.abs().max(f64::MIN_POSITIVE));
        let scale = at.abs().max(coeffs.constant().abs());
        for _ in 0..50 {
            let other = random_feasible_layout(&cfg, &mut rng);
            let ofc = assemble_factors(&other, &chan, cfg.num_subcarriers, cfg.wavelength);
            let truth = position_objective(&ofc, &b, cfg.noise_power).expect("positive definite");
            let excess = (surrogate_bound(&coeffs, &other, &chan, cfg.wavelength) - truth) / scale;
            worst_excess = worst_excess.max(excess);
            if excess > 1e-12 {
                violations += 1;
            }
        }
    }
    Outcome::new(
        worst_gap <= 1e-8 && violations == 0,
        vec![
            format!("tightness at 100 expansion points: worst relative gap {worst_gap:.2e} (limit 1e-8)"),
            format!(
                "lower bound at 5000 layouts: {violations} violations, worst (bound - objective)/scale {worst_excess:.2e}"
            ),
        ],
    )
}

fn kronecker_eigenvalue() -> Outcome {
    let cfg = SystemConfig {
        num_users: 2,
        num_paths: 2,
        num_antennas: 2,
        num_subcarriers: 8,
        max_delay: 3,
        ..reference_config()
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in 0..10 {
        let mut rng = trial_rng(3, inst);
        let chan = sample_channel(&cfg, &mut rng);
        let layout = random_feasible_layout(&cfg, &mut rng);
        let b = random_precoders(&cfg, &mut rng);
        let fc = assemble_factors(&layout, &chan, cfg.num_subcarriers, cfg.wavelength);
        let coeffs = build_surrogate(&fc, &b, cfg.noise_power).expect("positive definite");
        for (idx, sc) in coeffs.subcarriers.iter().enumerate() {
            let ge = fc.g_matrix() * fc.e_matrix(idx);
            let powers = DMatrix::from_diagonal(&b.column(idx).map(|v| C64::new(v.norm_sqr(), 0.0)));
            let lambda = &ge * powers * ge.adjoint();
            let psi = sc.s_matrix().transpose().kronecker(&lambda);
            let dense = SymmetricEigen::new(psi).eigenvalues.max();
            worst = worst.max((dense - sc.beta).abs() / dense.abs().max(1.0));
            count += 1;
        }
    }
    Outcome::new(
        worst <= 1e-10,
        vec![format!(
            "{count} subcarrier instances (K=L=M=2): worst relative difference {worst:.2e} (limit 1e-10)"
        )],
    )
}

fn closed_form_optimality() -> Outcome {
    let cfg = reference_config();
    let p = cfg.power_budget;
    let eps = 1e-5;
    let mut precoder_losses = 0usize;
    let mut combiner_losses = 0usize;
    let mut checked_dirs = 0usize;
    for inst in 0..20 {
        let mut rng = trial_rng(4, inst);
        let chan = sample_channel(&cfg, &mut rng);
        let layout = random_feasible_layout(&cfg, &mut rng);
        let fc = assemble_factors(&layout, &chan, cfg.num_subcarriers, cfg.wavelength);

        let w = DMatrix::from_fn(cfg.num_antennas, cfg.num_subcarriers, |_, _| random_complex(&mut rng));
        let b = update_precoders(&fc, &w, p);
        for idx in 0..cfg.num_subcarriers {
            for k in 0..cfg.num_users {
                let gain = w.column(idx).dotc(&fc.h(idx).column(k));
                let closed = (gain * b[(k, idx)] - 1.0).norm_sqr();
                for i in 0..200 {
                    let mag = p.sqrt() * i as f64 / 199.0;
                    for j in 0..64 {
                        let cand = C64::from_polar(mag, 2.0 * PI * j as f64 / 64.0);
                        if closed > (gain * cand - 1.0).norm_sqr() + 1e-12 {
                            precoder_losses += 1;
                        }
                    }
                }
            }
        }

        let b = random_precoders(&cfg, &mut rng);
        let w = update_combiners(&fc, &b, cfg.noise_power).expect("positive definite");
        for n in 1..=cfg.num_subcarriers {
            let base = mse_per_subcarrier(&fc, &b, &w, cfg.noise_power, n).expect("in range");
            for _ in 0..100 {
                let dir = DVector::from_fn(cfg.num_antennas, |_, _| random_complex(&mut rng));
                let dir = dir.unscale(dir.norm());
                for sign in [1.0, -1.0] {
                    let mut moved = w.clone();
                    let col = moved.column(n - 1) + dir.scale(sign * eps);
                    moved.set_column(n - 1, &col);
                    checked_dirs += 1;
                    if mse_per_subcarrier(&fc, &b, &moved, cfg.noise_power, n).expect("in range") <= base {
                        combiner_losses += 1;
                    }
                }
            }
        }
    }
    Outcome::new(
        precoder_losses == 0 && combiner_losses == 0,
        vec![
            format!("precoder: {precoder_losses} grid points (200x64 per entry, 20 instances) beat the closed form"),
            format!("combiner: {combiner_losses} of {checked_dirs} perturbations (eps 1e-5) failed to increase MSE"),
        ],
    )
}

struct PairedRun {
    fpa: Solution,
    proposed: Solution,
}

fn default_runs() -> &'static [PairedRun] {
    static RUNS: OnceLock<Vec<PairedRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let cfg = reference_config();
        (0..100)
            .map(|t| {
                let chan = sample_channel(&cfg, &mut trial_rng(cfg.rng_seed, t));
                let fpa = solve_fpa(&cfg, &chan).expect("solvable");
                let proposed = solve_proposed_from(&cfg, &chan, &fpa).expect("solvable");
                PairedRun { fpa, proposed }
            })
            .collect()
    })
}

fn ao_monotonicity() -> Outcome {
    let mut violations = 0;
    let mut worst_rise: f64 = 0.0;
    for run in default_runs() {
        for pair in run.proposed.trace.windows(2) {
            let rise = (pair[1] - pair[0]) / pair[0];
            worst_rise = worst_rise.max(rise);
            if rise > TRACE_RTOL {
                violations += 1;
            }
        }
    }
    Outcome::new(
        violations == 0,
        vec![format!(
            "100 trials at the reference config: {violations} increases, largest relative rise {worst_rise:.2e} (rounding allowance {TRACE_RTOL:.0e})"
        )],
    )
}

fn sweep(sweep: SweepVariable, values: &[f64]) -> ResultTable {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let spec = ExperimentSpec {
        sweep,
        values: values.to_vec(),
        trials: PAIRED_TRIALS,
        schemes: Scheme::ALL.to_vec(),
        output: None,
        record_wall_time: false,
        threads,
    };
    run_experiment(&spec, &reference_config()).expect("sweep runs")
}

fn snr_table() -> &'static ResultTable {
    static TABLE: OnceLock<ResultTable> = OnceLock::new();
    TABLE.get_or_init(|| sweep(SweepVariable::SnrDb, &SNR_POINTS))
}

fn user_table() -> &'static ResultTable {
    static TABLE: OnceLock<ResultTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let cfg = SystemConfig {
            power_budget: 10.0,
            noise_power: 1.0,
            ..reference_config()
        };
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let spec = ExperimentSpec {
            sweep: SweepVariable::NumUsers,
            values: USER_COUNTS.to_vec(),
            trials: PAIRED_TRIALS,
            schemes: Scheme::ALL.to_vec(),
            output: None,
            record_wall_time: false,
            threads,
        };
        run_experiment(&spec, &cfg).expect("sweep runs")
    })
}

/// One-sided paired t-test that the mean of `diffs` is positive.
struct Paired {
    mean: f64,
    t: f64,
    significant: bool,
}

fn paired_positive(diffs: &[f64]) -> Paired {
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = if var > 0.0 {
        mean / (var / n).sqrt()
    } else if mean > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let crit = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("valid degrees of freedom")
        .inverse_cdf(1.0 - ALPHA);
    Paired {
        mean,
        t,
        significant: mean > 0.0 && t > crit,
    }
}

fn diffs(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn qualitative_results() -> Outcome {
    let snr = snr_table();
    let users = user_table();
    let mut details = Vec::new();
    let mut pass = true;

    details.push("(a) proposed below fpa and eas at every P/sigma^2 (mean, paired t):".to_string());
    for &v in &SNR_POINTS {
        let prop = snr.series(Scheme::Proposed, v);
        let mut line = format!(
            "    {v:>4} dB: proposed {:.4}",
            snr.mean(Scheme::Proposed, v).unwrap_or(f64::NAN)
        );
        for other in [Scheme::Fpa, Scheme::Eas] {
            let test = paired_positive(&diffs(&snr.series(other, v), &prop));
            pass &= test.significant;
            line += &format!(
                ", {other} {:.4} (gap {:+.2e}, t {:.2}) {}",
                snr.mean(other, v).unwrap_or(f64::NAN),
                test.mean,
                test.t,
                if test.significant { "ok" } else { "FAILS" }
            );
        }
        details.push(line);
    }

    let gap = |v: f64| diffs(&snr.series(Scheme::Fpa, v), &snr.series(Scheme::Proposed, v));
    let widening = paired_positive(&diffs(&gap(20.0), &gap(0.0)));
    pass &= widening.significant;
    details.push(format!(
        "(b) fpa-proposed gap: {:.3e} at 0 dB, {:.3e} at 20 dB; paired t {:.2} {}",
        gap(0.0).iter().sum::<f64>() / PAIRED_TRIALS as f64,
        gap(20.0).iter().sum::<f64>() / PAIRED_TRIALS as f64,
        widening.t,
        if widening.significant { "ok" } else { "FAILS" }
    ));

    details.push("(c) MSE rises with K at 10 dB:".to_string());
    for scheme in Scheme::ALL {
        let means: Vec<String> = USER_COUNTS
            .iter()
            .map(|&k| format!("{:.4}", users.mean(scheme, k).unwrap_or(f64::NAN)))
            .collect();
        let mut ok = true;
        for pair in USER_COUNTS.windows(2) {
            let test = paired_positive(&diffs(&users.series(scheme, pair[1]), &users.series(scheme, pair[0])));
            ok &= test.significant;
        }
        pass &= ok;
        details.push(format!(
            "    {:<8} K=3..7: {} {}",
            scheme.name(),
            means.join(" "),
            if ok { "ok" } else { "FAILS" }
        ));
    }
    details.push(format!(
        "{PAIRED_TRIALS} paired trials per point, one-sided alpha {ALPHA}"
    ));
    Outcome::new(pass, details)
}

fn per_trial_dominance() -> Outcome {
    let mut checked = 0;
    let mut violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut check = |prop: f64, fpa: f64| {
        checked += 1;
        worst = worst.max(prop - fpa);
        if prop > fpa + 1e-9 {
            violations += 1;
        }
    };
    for run in default_runs() {
        check(run.proposed.mse, run.fpa.mse);
    }
    for (table, values) in [(snr_table(), &SNR_POINTS[..]), (user_table(), &USER_COUNTS[..])] {
        for &v in values {
            for (p, f) in table
                .series(Scheme::Proposed, v)
                .iter()
                .zip(table.series(Scheme::Fpa, v))
            {
                check(*p, f);
            }
        }
    }
    Outcome::new(
        violations == 0,
        vec![format!(
            "{checked} paired trials: {violations} with proposed > fpa + 1e-9, largest proposed - fpa {worst:.2e}"
        )],
    )
}

fn csv_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = SystemConfig {
        rng_seed: 17,
        ..reference_config()
    };
    let run = |name: &str| {
        let spec = ExperimentSpec {
            sweep: SweepVariable::SnrDb,
            values: vec![0.0, 10.0],
            trials: 3,
            schemes: Scheme::ALL.to_vec(),
            output: Some(dir.path().join(name)),
            record_wall_time: false,
            threads: 1,
        };
        run_experiment_to_file(&spec, &cfg).expect("sweep runs");
        std::fs::read(dir.path().join(name)).expect("csv written")
    };
    let first = run("a.csv");
    let second = run("b.csv");
    Outcome::new(
        first == second && !first.is_empty(),
        vec![format!(
            "two runs, seed 17, threads 1: {} bytes each, identical: {}",
            first.len(),
            first == second
        )],
    )
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion {
            name: "model equivalence",
            budget: Some(Duration::from_secs(5)),
            run: model_equivalence,
        },
        Criterion {
            name: "majorizer validity",
            budget: Some(Duration::from_secs(120)),
            run: majorizer_validity,
        },
        Criterion {
            name: "kronecker eigenvalue",
            budget: Some(Duration::from_secs(1)),
            run: kronecker_eigenvalue,
        },
        Criterion {
            name: "closed-form optimality",
            budget: Some(Duration::from_secs(30)),
            run: closed_form_optimality,
        },
        Criterion {
            name: "ao monotonicity",
            budget: Some(Duration::from_secs(600)),
            run: ao_monotonicity,
        },
        Criterion {
            name: "qualitative results",
            budget: Some(Duration::from_secs(7200)),
            run: qualitative_results,
        },
        Criterion {
            name: "per-trial dominance",
            budget: None,
            run: per_trial_dominance,
        },
        Criterion {
            name: "csv determinism",
            budget: None,
            run: csv_determinism,
        },
    ];

    let mut failed = Vec::new();
    for (i, c) in criteria.iter().enumerate() {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = c.budget.is_none_or(|b| elapsed <= b);
        let pass = outcome.pass && in_budget;
        let budget = c.budget.map_or(String::new(), |b| format!(" / {} s", b.as_secs()));
        println!(
            "{} {}. {} ({:.2} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            c.name,
            elapsed.as_secs_f64()
        );
        for line in &outcome.details {
            println!("       {line}");
        }
        if !in_budget {
            println!("       exceeded the runtime budget");
        }
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
