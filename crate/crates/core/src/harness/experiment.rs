//! Monte-Carlo sweeps and their CSV output.
//!
//! Experiment spec files are TOML:
//!
//! ```toml
//! sweep = "snr_db"            # or "num_users"
//! values = [0, 5, 10, 15, 20]
//! trials = 50
//! schemes = ["proposed", "fpa", "eas"]
//! output = "results.csv"
//! record_wall_time = false
//! ```
//!
//! Trial `t` reads RNG stream `t` of the config seed at every sweep value, so
//! all schemes and all sweep points of a trial see the same scenario (for a
//! `num_users` sweep, the first K users of it).

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Deserialize;

use super::{solve_eas, solve_fpa, solve_proposed_from, Scheme, Solution};
use crate::error::{Error, Result};
use crate::model::{sample_channel, trial_rng, SystemConfig};

pub const CSV_HEADER: [&str; 8] = [
    "scheme",
    "sweep_name",
    "sweep_value",
    "trial",
    "seed",
    "mse",
    "iterations",
    "wall_time_s",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// `P/σ²` in dB with `σ² = 1`.
    SnrDb,
    NumUsers,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::NumUsers => "num_users",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub output: Option<PathBuf>,
    /// Measured wall time goes into the CSV only when set; otherwise the
    /// column is 0 so that reruns are byte-identical.
    pub record_wall_time: bool,
    pub threads: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    sweep: Option<SweepVariable>,
    values: Option<Vec<f64>>,
    trials: Option<usize>,
    schemes: Option<Vec<String>>,
    output: Option<PathBuf>,
    record_wall_time: Option<bool>,
    threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn from_toml_str(source: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(source).map_err(|e| Error::Parse {
            what: "experiment spec",
            message: e.to_string(),
        })?;
        let schemes = match raw.schemes {
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?,
            None => Scheme::ALL.to_vec(),
        };
        let spec = Self {
            sweep: raw.sweep.ok_or(Error::MissingKey("sweep"))?,
            values: raw.values.ok_or(Error::MissingKey("values"))?,
            trials: raw.trials.unwrap_or(50),
            schemes,
            output: raw.output,
            record_wall_time: raw.record_wall_time.unwrap_or(false),
            threads: raw.threads.unwrap_or(1),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.threads == 0 {
            return Err(Error::invalid("threads", "must be at least 1"));
        }
        if self.values.is_empty() {
            return Err(Error::invalid("values", "must not be empty"));
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        if !self.values.windows(2).all(|w| w[0] <= w[1]) {
            return Err(Error::invalid("values", "must be sorted ascending"));
        }
        if self.sweep == SweepVariable::NumUsers && !self.values.iter().all(|v| *v >= 1.0 && v.fract() == 0.0) {
            return Err(Error::invalid("values", "user counts must be positive integers"));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "must not be empty"));
        }
        if self
            .schemes
            .iter()
            .enumerate()
            .any(|(i, s)| self.schemes[..i].contains(s))
        {
            return Err(Error::invalid("schemes", "duplicate scheme"));
        }
        Ok(())
    }
}

/// The config used at one sweep point.
pub fn apply_sweep(cfg: &SystemConfig, sweep: SweepVariable, value: f64) -> SystemConfig {
    let mut out = cfg.clone();
    match sweep {
        SweepVariable::SnrDb => {
            out.noise_power = 1.0;
            out.power_budget = 10f64.powf(value / 10.0);
        }
        SweepVariable::NumUsers => out.num_users = value as usize,
    }
    out
}

/// One CSV row. Aggregate rows have `trial = -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scheme: Scheme,
    pub sweep_name: &'static str,
    pub sweep_value: f64,
    pub trial: i64,
    pub seed: u64,
    pub mse: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
}

impl TrialResult {
    fn record(&self) -> [String; 8] {
        [
            self.scheme.name().to_string(),
            self.sweep_name.to_string(),
            self.sweep_value.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.mse.to_string(),
            self.iterations.to_string(),
            self.wall_time_s.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<TrialResult>,
}

impl ResultTable {
    /// Per-trial rows only.
    pub fn trials(&self) -> impl Iterator<Item = &TrialResult> {
        self.rows.iter().filter(|r| r.trial >= 0)
    }

    /// The aggregate row for `(scheme, sweep_value)`.
    pub fn mean(&self, scheme: Scheme, sweep_value: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.trial < 0 && r.scheme == scheme && r.sweep_value == sweep_value)
            .map(|r| r.mse)
    }

    /// Per-trial MSEs of `scheme` at `sweep_value`, ordered by trial.
    pub fn series(&self, scheme: Scheme, sweep_value: f64) -> Vec<f64> {
        self.trials()
            .filter(|r| r.scheme == scheme && r.sweep_value == sweep_value)
            .map(|r| r.mse)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            w.write_record(row.record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

type TrialOutput = Vec<(Scheme, Solution, f64)>;

struct Timed {
    solution: Solution,
    seconds: f64,
}

fn timed<F: FnOnce() -> Result<Solution>>(f: F) -> Result<Timed> {
    let start = Instant::now();
    let solution = f()?;
    Ok(Timed {
        solution,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every requested scheme on one channel draw. The reference-layout
/// solution seeds the proposed scheme, so it is computed whenever either is
/// requested.
pub(crate) fn run_trial(cfg: &SystemConfig, trial: u64, schemes: &[Scheme]) -> Result<TrialOutput> {
    let chan = sample_channel(cfg, &mut trial_rng(cfg.rng_seed, trial));
    let mut out = Vec::with_capacity(schemes.len());
    let fpa = if schemes.iter().any(|s| matches!(s, Scheme::Fpa | Scheme::Proposed)) {
        Some(timed(|| solve_fpa(cfg, &chan))?)
    } else {
        None
    };
    for &scheme in schemes {
        let (solution, seconds) = match scheme {
            Scheme::Fpa => {
                let f = fpa.as_ref().expect("computed above");
                (f.solution.clone(), f.seconds)
            }
            Scheme::Proposed => {
                let f = fpa.as_ref().expect("computed above");
                let t = timed(|| solve_proposed_from(cfg, &chan, &f.solution))?;
                (t.solution, f.seconds + t.seconds)
            }
            Scheme::Eas => {
                let t = timed(|| solve_eas(cfg, &chan).map(|e| e.best))?;
                (t.solution, t.seconds)
            }
        };
        out.push((scheme, solution, seconds));
    }
    Ok(out)
}

/// Runs the sweep. Rows are sorted by sweep value, then scheme (spec order),
/// then trial, with each group's aggregate row last; the result does not
/// depend on `spec.threads`.
pub fn run_experiment(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<ResultTable> {
    spec.validate()?;
    let configs: Vec<SystemConfig> = spec
        .values
        .iter()
        .map(|&v| {
            let c = apply_sweep(cfg, spec.sweep, v);
            c.validate().map(|_| c)
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|s| (0..spec.trials as u64).map(move |t| (s, t)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, u64, Result<TrialOutput>)>> = Mutex::new(Vec::new());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(s, t)) = jobs.get(i) else { break };
        let r = run_trial(&configs[s], t, &spec.schemes);
        results.lock().expect("no poisoned workers").push((s, t, r));
    };
    let threads = spec.threads.min(jobs.len()).max(1);
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(worker);
            }
        });
    }

    let mut done = results.into_inner().expect("no poisoned workers");
    done.sort_by_key(|(s, t, _)| (*s, *t));
    let mut rows = Vec::new();
    for (s, t, r) in done {
        for (scheme, sol, seconds) in r? {
            rows.push(TrialResult {
                scheme,
                sweep_name: spec.sweep.name(),
                sweep_value: spec.values[s],
                trial: t as i64,
                seed: cfg.rng_seed,
                mse: sol.mse,
                iterations: sol.iterations,
                wall_time_s: if spec.record_wall_time { seconds } else { 0.0 },
            });
        }
    }

    let mut table = Vec::with_capacity(rows.len() + spec.values.len() * spec.schemes.len());
    for &value in &spec.values {
        for &scheme in &spec.schemes {
            let group: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| r.scheme == scheme && r.sweep_value == value)
                .collect();
            let count = group.len() as f64;
            let mean = |f: &dyn Fn(&TrialResult) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / count;
            let aggregate = TrialResult {
                scheme,
                sweep_name: spec.sweep.name(),
                sweep_value: value,
                trial: -1,
                seed: cfg.rng_seed,
                mse: mean(&|r| r.mse),
                iterations: mean(&|r| r.iterations as f64).round() as usize,
                wall_time_s: mean(&|r| r.wall_time_s),
            };
            table.extend(group.into_iter().cloned());
            table.push(aggregate);
        }
    }
    Ok(ResultTable { rows: table })
}

/// Opens `spec.output` before any work so an unwritable path fails fast, then
/// runs the sweep and writes the CSV there.
pub fn run_experiment_to_file(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<ResultTable> {
    let path = spec.output.as_ref().ok_or(Error::MissingKey("output"))?;
    let file = File::create(path)?;
    let table = run_experiment(spec, cfg)?;
    table.write_csv(file)?;
    Ok(table)
}
