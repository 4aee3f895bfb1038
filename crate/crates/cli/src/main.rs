use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fas_aircomp::harness::{
    check_model_equivalence, run_experiment, run_experiment_to_file, solve_eas, solve_fpa, solve_proposed_from,
    ExperimentSpec, Scheme, Solution,
};
use fas_aircomp::model::{load_config, sample_channel, trial_rng, SystemConfig};

/// Relative error bound for the time/frequency model agreement.
const EQUIVALENCE_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "fas-aircomp",
    version,
    about = "OFDM over-the-air computation with movable receive antennas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep described by an experiment spec and write CSV.
    Run(RunArgs),
    /// Solve one trial and print each scheme's MSE trace and layout.
    Single(SingleArgs),
    /// Check the frequency-domain model against a sample-level OFDM simulation.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario config (TOML). Defaults to the reference scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<SystemConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path).with_context(|| format!("loading {}", path.display()))?,
            None => SystemConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// CSV destination; overrides the spec. Without either, CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of proposed,fpa,eas.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record measured wall time instead of 0 in the CSV.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: Common,
    /// Trial index (RNG stream) to draw the channel from.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long, value_delimiter = ',', default_value = "proposed,fpa,eas")]
    schemes: Vec<Scheme>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Cyclic prefix length; defaults to `max_delay + 1`.
    #[arg(long)]
    cp_len: Option<usize>,
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let mut spec = ExperimentSpec::load(&args.spec).with_context(|| format!("loading {}", args.spec.display()))?;
    if let Some(out) = args.out {
        spec.output = Some(out);
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    if let Some(schemes) = args.schemes {
        spec.schemes = schemes;
    }
    if let Some(threads) = args.threads {
        spec.threads = threads;
    }
    spec.record_wall_time |= args.timing;
    spec.validate()?;
    if spec.output.is_some() {
        let table = run_experiment_to_file(&spec, &cfg)?;
        eprintln!(
            "wrote {} rows to {}",
            table.rows.len(),
            spec.output
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        );
    } else {
        run_experiment(&spec, &cfg)?.write_csv(std::io::stdout().lock())?;
    }
    Ok(())
}

fn print_solution(scheme: Scheme, sol: &Solution) {
    println!("[{scheme}] mse = {:.6e}, iterations = {}", sol.mse, sol.iterations);
    let positions: Vec<String> = sol
        .layout
        .positions()
        .iter()
        .map(|p| format!("({:+.4}, {:+.4})", p.x, p.y))
        .collect();
    println!("  layout (m): {}", positions.join(" "));
    for (i, v) in sol.trace.iter().enumerate() {
        println!("  trace[{i:3}] = {v:.9e}");
    }
}

fn single(args: SingleArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let chan = sample_channel(&cfg, &mut trial_rng(cfg.rng_seed, args.trial));
    println!(
        "seed {} trial {}: K = {}, N = {}, M = {}, L = {}, P/σ² = {:.2} dB",
        cfg.rng_seed,
        args.trial,
        cfg.num_users,
        cfg.num_subcarriers,
        cfg.num_antennas,
        cfg.num_paths,
        10.0 * cfg.snr().log10()
    );
    let fpa = solve_fpa(&cfg, &chan)?;
    for scheme in args.schemes {
        match scheme {
            Scheme::Fpa => print_solution(scheme, &fpa),
            Scheme::Proposed => print_solution(scheme, &solve_proposed_from(&cfg, &chan, &fpa)?),
            Scheme::Eas => {
                let eas = solve_eas(&cfg, &chan)?;
                println!("[eas] {} subsets evaluated", eas.subsets_evaluated);
                print_solution(scheme, &eas.best);
            }
        }
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<bool> {
    let cfg = args.common.config()?;
    let cp_len = args.cp_len.unwrap_or(cfg.max_delay + 1);
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let mut rng = trial_rng(cfg.rng_seed, 0);
    let report = check_model_equivalence(&cfg, cp_len, args.trials, &mut rng)?;
    let pass = report.max_relative_error <= EQUIVALENCE_TOL;
    println!(
        "model equivalence: {} instances, cp_len {}, max relative error {:.3e} (tol {:.0e}) {}",
        report.instances,
        cp_len,
        report.max_relative_error,
        EQUIVALENCE_TOL,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Single(a) => single(a).map(|_| true),
        Command::Validate(a) => validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
