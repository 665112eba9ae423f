use std::io::Write;
use std::path::Path;

use serde::Serialize;
use survseg::inference::{weighted_km, BootstrapSummary};
use survseg::selection::{SweepOutcome, SweepTable};
use survseg::{Dataset, FitResult};
use tempfile::NamedTempFile;

use crate::error::CliError;

const GRID_POINTS: usize = 100;

/// Writes `name` inside `dir` through a temporary file and a rename, so a
/// crash never leaves a half-written output behind.
pub fn atomic_write(
    dir: &Path,
    name: &str,
    fill: impl FnOnce(&mut dyn Write) -> Result<(), CliError>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(CliError::io(dir))?;
    fill(tmp.as_file_mut())?;
    tmp.as_file_mut().flush().map_err(CliError::io(dir))?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| CliError::Io { path: target, source: e.error })?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    atomic_write(dir, name, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(CliError::io(name))
    })
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    atomic_write(dir, name, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&header)?;
        for row in rows {
            out.write_record(&row)?;
        }
        out.flush().map_err(CliError::io(name))
    })
}

/// Shortest representation that parses back to the same bits.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |k| format!("{prefix}{k}"))
}

pub fn write_weights(dir: &Path, ds: &Dataset, fit: &FitResult) -> Result<(), CliError> {
    let w = fit.weights();
    let header = ["position", "order_key"].map(String::from).into_iter().chain(numbered("w", fit.segments())).collect();
    let rows = ds.records().iter().enumerate().map(|(i, r)| {
        let mut row = vec![(i + 1).to_string(), num(r.order_key)];
        row.extend(w.row(i).iter().map(|&x| num(x)));
        row
    });
    write_csv(dir, "weights.csv", header, rows)
}

/// Row `i` holds the probability that the break falls between subjects `i` and `i + 1`.
pub fn write_bp_marginals(dir: &Path, ds: &Dataset, fit: &FitResult) -> Result<(), CliError> {
    let bp = &fit.posteriors.bp_marginal;
    let header = ["position", "order_key"]
        .map(String::from)
        .into_iter()
        .chain(numbered("bp", fit.segments() - 1))
        .collect();
    let cols = if bp.nrows() == 0 { 0 } else { bp.ncols() };
    let rows = (0..cols).map(|i| {
        let mut row = vec![(i + 1).to_string(), num(ds.records()[i].order_key)];
        row.extend(bp.column(i).iter().map(|&x| num(x)));
        row
    });
    write_csv(dir, "bp_marginals.csv", header, rows)
}

pub fn write_baseline_grid(dir: &Path, ds: &Dataset, fit: &FitResult) -> Result<(), CliError> {
    let top = ds.max_time();
    let header = ["segment", "time", "hazard", "cumulative_hazard"].map(String::from).to_vec();
    let rows = fit.theta.baselines.iter().enumerate().flat_map(move |(k, b)| {
        (1..=GRID_POINTS).map(move |j| {
            let t = top * j as f64 / GRID_POINTS as f64;
            vec![(k + 1).to_string(), num(t), num(b.hazard(t)), num(b.cumulative(t))]
        })
    });
    write_csv(dir, "baseline_grid.csv", header, rows)
}

/// Returns, per segment, the time at which the weighted risk set emptied, if it did.
pub fn write_km(dir: &Path, ds: &Dataset, fit: &FitResult) -> Result<Vec<Option<f64>>, CliError> {
    let curves = (0..fit.segments())
        .map(|k| weighted_km(ds, fit.weights().column(k)))
        .collect::<Result<Vec<_>, _>>()?;
    let header = ["segment", "time", "survival"].map(String::from).to_vec();
    let rows = curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| c.points.iter().map(move |(t, s)| vec![(k + 1).to_string(), num(*t), num(*s)]));
    write_csv(dir, "km_curves.csv", header, rows)?;
    Ok(curves.iter().map(|c| c.truncated_at).collect())
}

pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<(), CliError> {
    let header = ["segments", "status", "log_lik", "bic", "aic", "dimension", "converged", "iterations", "selected", "note"]
        .map(String::from)
        .to_vec();
    let rows = table.rows.iter().map(|row| {
        let selected = (table.selected == Some(row.segments)).to_string();
        let mut out = vec![row.segments.to_string()];
        match &row.outcome {
            SweepOutcome::Fitted { log_lik, bic, aic, dimension, converged, iterations, .. } => out.extend([
                "fitted".into(),
                num(*log_lik),
                num(*bic),
                num(*aic),
                dimension.to_string(),
                converged.to_string(),
                iterations.to_string(),
                selected,
                String::new(),
            ]),
            SweepOutcome::Skipped { reason } => {
                out.push("skipped".into());
                out.extend(std::iter::repeat_n(String::new(), 6));
                out.extend([selected, reason.clone()]);
            }
            SweepOutcome::Failed { kind, message } => {
                out.push("failed".into());
                out.extend(std::iter::repeat_n(String::new(), 6));
                out.extend([selected, format!("{kind}: {message}")]);
            }
        }
        out
    });
    write_csv(dir, "sweep.csv", header, rows)
}

pub fn write_intervals(dir: &Path, summary: &BootstrapSummary) -> Result<(), CliError> {
    let header = ["parameter", "estimate", "lower", "upper", "level"].map(String::from).to_vec();
    let rows = summary.intervals.iter().map(|i| {
        vec![
            i.name.clone(),
            num(i.estimate),
            num(i.lower),
            num(i.upper),
            num(summary.level),
        ]
    });
    write_csv(dir, "intervals.csv", header, rows)
}

pub fn write_cohort(dir: &Path, ds: &Dataset) -> Result<(), CliError> {
    let header = ["order", "time", "event", "x"].map(String::from).to_vec();
    let rows = ds.records().iter().map(|r| {
        let mut row = vec![num(r.order_key), num(r.time), u8::from(r.event).to_string()];
        row.extend(r.covariates.iter().map(|&x| num(x)));
        row
    });
    write_csv(dir, "cohort.csv", header, rows)
}
