//! CSV and JSON output of Monte Carlo runs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a CSV back yields the exact values (`NaN` marks infeasible trials).

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::montecarlo::{AlgorithmSummary, Report, SweepPoint};
use crate::harness::trial::TrialResult;

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CDF_FILE: &str = "cdf.csv";
pub const OUTAGE_FILE: &str = "outage.csv";
pub const COVERAGE_FILE: &str = "coverage.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const METADATA_FILE: &str = "metadata.json";

pub fn trial_header(num_users: usize, num_bs: usize) -> Vec<String> {
    let mut h: Vec<String> = ["seed", "algorithm", "R_sum", "EE", "status", "draw", "iterations", "power"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..num_users).map(|k| format!("rate_u{k}")));
    h.extend((0..num_bs).map(|s| format!("served_bs{s}")));
    h.extend((0..num_bs).map(|s| format!("mean_rate_bs{s}")));
    h
}

fn trial_record(t: &TrialResult) -> Vec<String> {
    let mut r = vec![
        t.seed.to_string(),
        t.algorithm.tag().to_string(),
        t.r_sum.to_string(),
        t.ee.to_string(),
        t.status.as_str().to_string(),
        t.draw.to_string(),
        t.iterations.to_string(),
        t.power.to_string(),
    ];
    r.extend(t.user_rates.iter().map(f64::to_string));
    r.extend(t.served_counts.iter().map(usize::to_string));
    r.extend(t.bs_mean_rate.iter().map(f64::to_string));
    r
}

/// The per-trial table as CSV text.
pub fn trials_csv(trials: &[TrialResult], num_users: usize, num_bs: usize) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(trial_header(num_users, num_bs))?;
    for t in trials {
        w.write_record(trial_record(t))?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

fn parse<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Io(format!("bad value '{field}' in column {name}")))
}

/// Parses the output of [`trials_csv`].
pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialResult>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (k, s) = (count("rate_u"), count("served_bs"));
    if header.iter().collect::<Vec<_>>() != trial_header(k, s) {
        return Err(Error::Io("unexpected trials header".into()));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |i: usize| &rec[i];
        let floats = |from: usize, n: usize| -> Result<Vec<f64>> {
            (from..from + n).map(|i| parse(f(i), &header[i])).collect()
        };
        out.push(TrialResult {
            seed: parse(f(0), "seed")?,
            algorithm: f(1).parse()?,
            r_sum: parse(f(2), "R_sum")?,
            ee: parse(f(3), "EE")?,
            status: f(4).parse()?,
            draw: parse(f(5), "draw")?,
            iterations: parse(f(6), "iterations")?,
            power: parse(f(7), "power")?,
            user_rates: floats(8, k)?,
            served_counts: (8 + k..8 + k + s)
                .map(|i| parse(f(i), &header[i]))
                .collect::<Result<_>>()?,
            bs_mean_rate: floats(8 + k + s, s)?,
        });
    }
    Ok(out)
}

pub fn summary_csv(summaries: &[AlgorithmSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "algorithm",
        "trials",
        "feasible",
        "infeasible",
        "converged",
        "mean_R_sum",
        "std_R_sum",
        "p10_R_sum",
        "p50_R_sum",
        "p90_R_sum",
        "mean_EE",
        "mean_iterations",
    ])?;
    for s in summaries {
        w.write_record([
            s.algorithm.tag().to_string(),
            s.trials.to_string(),
            s.feasible.to_string(),
            s.infeasible.to_string(),
            s.converged.to_string(),
            s.mean_r_sum.to_string(),
            s.std_r_sum.to_string(),
            s.p10_r_sum.to_string(),
            s.p50_r_sum.to_string(),
            s.p90_r_sum.to_string(),
            s.mean_ee.to_string(),
            s.mean_iterations.to_string(),
        ])?;
    }
    finish(w)
}

fn curve_csv(report: &Report, header: [&str; 3], curve: impl Fn(&Report, crate::harness::trial::Algorithm) -> Vec<(f64, f64)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for &a in &report.options.algorithms {
        for (x, y) in curve(report, a) {
            w.write_record([a.tag().to_string(), x.to_string(), y.to_string()])?;
        }
    }
    finish(w)
}

pub fn cdf_csv(report: &Report) -> Result<String> {
    curve_csv(report, ["algorithm", "R_sum", "probability"], Report::sum_rate_cdf)
}

pub fn outage_csv(report: &Report) -> Result<String> {
    curve_csv(report, ["algorithm", "R_min", "outage"], Report::outage_curve)
}

pub fn coverage_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "bs", "mean_served", "mean_user_rate"])?;
    for &a in &report.options.algorithms {
        let c = report.coverage(a);
        for s in 0..report.config.num_bs {
            w.write_record([
                a.tag().to_string(),
                s.to_string(),
                c.mean_served[s].to_string(),
                c.mean_user_rate[s].to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "param",
        "value",
        "algorithm",
        "trials",
        "feasible",
        "infeasible",
        "mean_R_sum",
        "std_err_R_sum",
        "mean_EE",
    ])?;
    for p in points {
        let s = &p.summary;
        w.write_record([
            p.param.name().to_string(),
            p.value.to_string(),
            s.algorithm.tag().to_string(),
            s.trials.to_string(),
            s.feasible.to_string(),
            s.infeasible.to_string(),
            s.mean_r_sum.to_string(),
            s.std_error().to_string(),
            s.mean_ee.to_string(),
        ])?;
    }
    finish(w)
}

#[derive(Serialize)]
struct Metadata<'a> {
    seed: u64,
    trials: usize,
    channels_per_scene: usize,
    algorithms: Vec<&'static str>,
    outage_grid: &'a [f64],
    config: &'a crate::config::SystemConfig,
    summaries: Vec<AlgorithmSummary>,
}

pub fn metadata_json(report: &Report) -> Result<String> {
    let o = &report.options;
    let meta = Metadata {
        seed: o.seed,
        trials: o.trials,
        channels_per_scene: o.channels_per_scene,
        algorithms: o.algorithms.iter().map(|a| a.tag()).collect(),
        outage_grid: &o.outage_grid,
        config: &report.config,
        summaries: report.summaries(),
    };
    serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))
}

/// Writes the metadata, per-trial table and curve files into `dir`,
/// creating it if needed.
pub fn emit_report(report: &Report, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &report.config;
    fs::write(dir.join(METADATA_FILE), metadata_json(report)?)?;
    fs::write(
        dir.join(TRIALS_FILE),
        trials_csv(&report.trials, cfg.num_users, cfg.num_bs)?,
    )?;
    fs::write(dir.join(SUMMARY_FILE), summary_csv(&report.summaries())?)?;
    fs::write(dir.join(CDF_FILE), cdf_csv(report)?)?;
    fs::write(dir.join(OUTAGE_FILE), outage_csv(report)?)?;
    fs::write(dir.join(COVERAGE_FILE), coverage_csv(report)?)?;
    Ok(())
}

pub fn emit_sweep(points: &[SweepPoint], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SWEEP_FILE), sweep_csv(points)?)?;
    Ok(())
}
