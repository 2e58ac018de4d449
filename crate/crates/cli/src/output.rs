//! Result JSON and plot-data CSV writers. Every CSV starts with `#` lines
//! carrying the command and the resolved config, then a column header.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use demix::{DelayEstimates, DualPolynomialSet, Result, Scenario};

use crate::experiment::{RunEntry, Summary, Timing};

/// Grid density of the emitted curves, as a multiple of `N`.
pub const CURVE_GRID_FACTOR: usize = 16;

/// Shortest round-trip representation; exponent form for tiny and huge
/// magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, num)
}

pub struct Provenance<'a> {
    pub command: &'a str,
    pub config_json: &'a str,
}

fn csv_writer(path: &Path, prov: &Provenance) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# demix {}", prov.command)?;
    writeln!(w, "# config {}", prov.config_json)?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w))
}

fn finish(mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> demix::Error {
    demix::Error::Io(std::io::Error::other(e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// `t, D1..DK`: `||q_k(t)||` on a `16N` grid, plus rows at every true and
/// estimated delay so peak values can be read off exactly.
pub fn write_curves(
    path: &Path,
    prov: &Provenance,
    polys: &DualPolynomialSet,
    scenario: &Scenario,
    estimates: &DelayEstimates,
) -> Result<()> {
    let n = polys.n_samples();
    let grid = CURVE_GRID_FACTOR * n;
    let mut ts: Vec<f64> = (0..grid).map(|i| i as f64 / grid as f64).collect();
    ts.extend(scenario.channels.iter().flat_map(|c| c.delays()));
    ts.extend(estimates.per_user.iter().flatten().map(|p| p.tau));
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let mut w = csv_writer(path, prov)?;
    let mut head = vec!["t".to_string()];
    head.extend((1..=polys.user_count()).map(|k| format!("D{k}")));
    w.write_record(&head).map_err(csv_err)?;
    for t in ts {
        let mut row = vec![num(t)];
        row.extend((0..polys.user_count()).map(|k| num(polys.magnitude(k, t))));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

fn support_points(
    polys: &DualPolynomialSet,
    scenario: &Scenario,
    estimates: &DelayEstimates,
) -> Vec<(usize, &'static str, f64, f64)> {
    let mut pts = Vec::new();
    for (k, ch) in scenario.channels.iter().enumerate() {
        for tau in ch.delays() {
            pts.push((k + 1, "true", tau, polys.magnitude(k, tau)));
        }
        for p in &estimates.per_user[k] {
            pts.push((k + 1, "estimated", p.tau, p.value));
        }
    }
    pts
}

/// `user,kind,tau,value` for true and estimated delays.
pub fn write_support(
    path: &Path,
    prov: &Provenance,
    polys: &DualPolynomialSet,
    scenario: &Scenario,
    estimates: &DelayEstimates,
) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["user", "kind", "tau", "value"]).map_err(csv_err)?;
    for (k, kind, tau, v) in support_points(polys, scenario, estimates) {
        w.write_record([k.to_string(), kind.to_string(), num(tau), num(v)])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// `user,kind,tau,x,y` with `(x, y) = (cos 2 pi tau, sin 2 pi tau)`.
pub fn write_polar(
    path: &Path,
    prov: &Provenance,
    polys: &DualPolynomialSet,
    scenario: &Scenario,
    estimates: &DelayEstimates,
) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["user", "kind", "tau", "x", "y"]).map_err(csv_err)?;
    for (k, kind, tau, _) in support_points(polys, scenario, estimates) {
        let (s, c) = (2.0 * PI * tau).sin_cos();
        w.write_record([k.to_string(), kind.to_string(), num(tau), num(c), num(s)])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// `N,mse_mean,mse_median,success_rate,delay_err_mean`.
pub fn write_sweep(path: &Path, prov: &Provenance, summary: &[Summary]) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["N", "mse_mean", "mse_median", "success_rate", "delay_err_mean"])
        .map_err(csv_err)?;
    for s in summary {
        w.write_record([
            s.n_samples.to_string(),
            num(s.mse_mean),
            num(s.mse_median),
            num(s.success_rate),
            num(s.delay_err_mean),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// One row per repetition.
pub fn write_runs(path: &Path, prov: &Provenance, runs: &[RunEntry]) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record([
        "N",
        "seed",
        "status",
        "iterations",
        "objective",
        "gain_l1",
        "mse",
        "max_delay_error",
        "success",
        "certified",
        "error",
    ])
    .map_err(csv_err)?;
    for r in runs {
        let row = match r {
            RunEntry::Done(d) => vec![
                d.n_samples.to_string(),
                d.seed.to_string(),
                serde_json::to_value(d.solver.status)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
                d.solver.iterations.to_string(),
                num(d.solver.objective),
                num(d.certificate.gain_l1),
                num(d.mse),
                opt(d.max_delay_error),
                d.success.to_string(),
                d.certificate.certified.to_string(),
                String::new(),
            ],
            RunEntry::Failed(f) => {
                let mut row = vec![f.n_samples.to_string(), f.seed.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(f.error.clone());
                row
            }
        };
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Wall-clock seconds per run. Not reproducible by nature, so it lives
/// outside the result file.
pub fn write_timing(path: &Path, prov: &Provenance, timing: &[Timing]) -> Result<()> {
    let mut w = csv_writer(path, prov)?;
    w.write_record(["N", "seed", "seconds"]).map_err(csv_err)?;
    for t in timing {
        w.write_record([t.n_samples.to_string(), t.seed.to_string(), format!("{:.3}", t.seconds)])
            .map_err(csv_err)?;
    }
    finish(w)
}

/// Data rows of a CSV written here, comment lines and header skipped.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let head = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((head, rows))
}
