mod args;
mod config;
mod error;
mod output;

use std::fs::File;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Serialize;
use survseg::inference::bootstrap_ci;
use survseg::simulation::{
    simulate_scenario, simulate_table, synthetic_null_table, synthetic_two_breakpoint_table, HazardTable,
    SimulatedCohort, Truth,
};
use survseg::{fit, load_dataset, sweep, Dataset, EntryMode, FitResult};

use args::{BootstrapArgs, Cli, Command, FitArgs, SimulateArgs, SweepArgs, SyntheticArg};
use config::{resolve, Effective, FileConfig};
use error::CliError;

const THREADS_VAR: &str = "SURVSEG_THREADS";

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_VAR}={raw} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Fit(a) => run_fit(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::Simulate(a) => run_simulate(a),
    }
}

fn load(eff: &Effective) -> Result<Dataset, CliError> {
    let file = File::open(&eff.input).map_err(CliError::io(&eff.input))?;
    Ok(load_dataset(file, &eff.schema)?)
}

#[derive(Serialize)]
struct ParamsFile<'a> {
    config: &'a Effective,
    entry_mode: EntryMode,
    reordered: usize,
    #[serde(flatten)]
    fit: &'a FitResult,
    km_truncated_at: Vec<Option<f64>>,
}

fn write_fit(out: &Path, eff: &Effective, ds: &Dataset, res: &FitResult) -> Result<(), CliError> {
    output::write_weights(out, ds, res)?;
    output::write_bp_marginals(out, ds, res)?;
    output::write_baseline_grid(out, ds, res)?;
    let km_truncated_at = output::write_km(out, ds, res)?;
    let params = ParamsFile {
        config: eff,
        entry_mode: ds.entry_mode(),
        reordered: ds.reordered(),
        fit: res,
        km_truncated_at,
    };
    output::write_json(out, "params.json", &params)
}

fn run_fit(a: FitArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.model.config.as_deref())?;
    let eff = resolve(&a.data, &a.model, &file, a.k);
    let ds = load(&eff)?;
    let prior = eff.prior.build(&ds, eff.fit.segments)?;
    let res = fit(&ds, &prior, &eff.fit)?;
    write_fit(&a.out, &eff, &ds, &res)
}

fn run_sweep(a: SweepArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.model.config.as_deref())?;
    let eff = resolve(&a.data, &a.model, &file, Some(1));
    let k_max = a.k_max.or(file.k_max).unwrap_or(5);
    if k_max == 0 {
        return Err(CliError::Usage("--k-max must be at least 1".into()));
    }
    let ds = load(&eff)?;
    let table = sweep(&ds, &eff.prior, &eff.fit, 1..=k_max)?;
    output::write_sweep(&a.out, &table)?;
    if let Some(best) = table.selected.and_then(|k| table.fit_for(k)) {
        let mut chosen = resolve(&a.data, &a.model, &file, Some(best.segments()));
        chosen.fit.segments = best.segments();
        write_fit(&a.out, &chosen, &ds, best)?;
    }
    Ok(())
}

fn run_bootstrap(a: BootstrapArgs) -> Result<(), CliError> {
    let file = FileConfig::load(a.model.config.as_deref())?;
    let eff = resolve(&a.data, &a.model, &file, a.k);
    let replicates = a.replicates.or(file.replicates).unwrap_or(200);
    let level = a.level.or(file.level).unwrap_or(0.95);
    let ds = load(&eff)?;
    let summary = bootstrap_ci(&ds, &eff.prior, &eff.fit, replicates, level)?;
    output::write_intervals(&a.out, &summary)?;
    eprintln!("bootstrap: {} replicates, {} failed", summary.replicates, summary.failed);
    Ok(())
}

#[derive(Serialize)]
struct TruthFile<'a> {
    #[serde(flatten)]
    truth: &'a Truth,
    breakpoints: Vec<usize>,
    labels: &'a [usize],
}

fn even_split(n: usize, blocks: usize) -> Vec<usize> {
    (0..blocks).map(|b| n / blocks + usize::from(b < n % blocks)).collect()
}

fn run_simulate(a: SimulateArgs) -> Result<(), CliError> {
    let cohort: SimulatedCohort = if let Some(id) = a.scenario {
        if a.block_sizes.is_some() {
            return Err(CliError::Usage("--block-sizes does not apply to --scenario".into()));
        }
        simulate_scenario(id, a.n, a.seed)?
    } else {
        let table = match (&a.table, a.synthetic) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                toml::from_str::<HazardTable>(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?
            }
            (None, Some(SyntheticArg::Null)) => synthetic_null_table(),
            (None, Some(SyntheticArg::TwoBreakpoint)) => synthetic_two_breakpoint_table(),
            (None, None) => unreachable!("clap requires a source"),
        };
        let sizes = match &a.block_sizes {
            Some(s) => s.clone(),
            None => even_split(a.n, table.betas.len()),
        };
        let n = sizes.iter().sum();
        simulate_table(&table, &sizes, n, a.seed)?
    };
    output::write_cohort(&a.out, &cohort.dataset)?;
    let truth = TruthFile {
        truth: &cohort.truth,
        breakpoints: cohort.truth.breakpoints(),
        labels: &cohort.labels,
    };
    output::write_json(&a.out, "truth.json", &truth)
}
