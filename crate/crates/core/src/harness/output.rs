//! Output files. Every file starts with the version and the resolved
//! configuration (CSV files carry them in a `#` comment line). Wall times go
//! to their own file so the others are reproducible byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{compare_se, ExperimentReport, PointSummary, SeDeviation};
use crate::error::Result;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SE_FILE: &str = "se_trajectory.csv";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    config: &'a super::ExperimentConfig,
    points: Vec<&'a PointSummary>,
    se_deviation: Vec<SeDeviation>,
}

#[derive(Serialize)]
struct TrialTime {
    point: usize,
    trial: usize,
    seconds: f64,
}

#[derive(Serialize)]
struct Timing<'a> {
    version: &'a str,
    config: &'a super::ExperimentConfig,
    total_seconds: f64,
    trials: Vec<TrialTime>,
}

/// The configuration as recorded in the files. The output directory is left
/// out so identical runs written to different places stay identical.
fn recorded_config(report: &ExperimentReport) -> super::ExperimentConfig {
    super::ExperimentConfig { output_dir: None, ..report.config.clone() }
}

fn header(config: &super::ExperimentConfig, version: &str) -> Result<String> {
    Ok(format!("# {version} config={}\n", serde_json::to_string(config)?))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes results, summary, state evolution and timing files into `dir`.
pub fn write_outputs(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let config = recorded_config(report);
    let head = header(&config, &report.version)?;

    let mut results = head.clone().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut results);
        w.write_record([
            "point",
            "value",
            "trial",
            "stream_id",
            "iterations",
            "stopped_early",
            "ser_overall",
            "ser_unseeded",
            "error_event",
            "final_mse",
            "final_mse_se",
            "diverged",
        ])?;
        for point in &report.points {
            for t in &point.trials {
                w.write_record(&[
                    t.point.to_string(),
                    opt(point.summary.value),
                    t.trial.to_string(),
                    t.stream_id.to_string(),
                    t.iterations.to_string(),
                    t.stopped_early.to_string(),
                    t.ser_overall.to_string(),
                    t.ser_unseeded.to_string(),
                    t.error_event.to_string(),
                    opt(t.mse.last().copied()),
                    opt(t.mse_se.get(t.iterations.saturating_sub(1)).copied()),
                    t.diverged.clone().unwrap_or_default(),
                ])?;
            }
        }
        w.flush()?;
    }
    fs::write(dir.join(RESULTS_FILE), results)?;

    let summary = Summary {
        version: &report.version,
        config: &config,
        points: report.points.iter().map(|p| &p.summary).collect(),
        se_deviation: compare_se(report),
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(dir.join(SUMMARY_FILE), text)?;

    let mut se = head.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut se);
        w.write_record(["point", "value", "t", "c", "psi", "tau", "r", "sigma", "phi"])?;
        for point in &report.points {
            let traj = &point.se;
            for t in 0..traj.iterations() {
                for b in 0..traj.gamma {
                    w.write_record(&[
                        point.summary.point.to_string(),
                        opt(point.summary.value),
                        t.to_string(),
                        b.to_string(),
                        traj.psi[t][b].to_string(),
                        traj.tau[t][b].to_string(),
                        b.to_string(),
                        traj.sigma[t][b].to_string(),
                        traj.phi[t][b].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    fs::write(dir.join(SE_FILE), se)?;

    let trials: Vec<TrialTime> = report
        .points
        .iter()
        .flat_map(|p| p.trials.iter().map(|t| TrialTime { point: t.point, trial: t.trial, seconds: t.wall_time }))
        .collect();
    let timing = Timing {
        version: &report.version,
        config: &config,
        total_seconds: trials.iter().map(|t| t.seconds).sum(),
        trials,
    };
    let mut file = fs::File::create(dir.join(TIMING_FILE))?;
    serde_json::to_writer_pretty(&mut file, &timing)?;
    file.write_all(b"\n")?;
    Ok(())
}
