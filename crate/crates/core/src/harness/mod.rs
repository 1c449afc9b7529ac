//! Experiment orchestration: trials in parallel with derived streams,
//! aggregation into error-event estimates, and file outputs.
//!
//! Trial `i` at sweep point `p` draws everything from
//! `RngStream::new(seed, TRIAL_STREAMS).derive2(p, i)`, so a record depends
//! only on the configuration and its own indices. Results are collected by
//! index before any reduction, which makes every output independent of the
//! thread count and of completion order.

mod config;
mod output;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::code_design::{BaseMatrix, DesignMatrix, DesignOptions, SparcParams, StorageMode};
use crate::codec::{encode, section_error_rate, Decoder, DecoderOptions, Message, Schedule, TauMode};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::state_evolution::{regime_classify, run_se, SeOptions, SeTrajectory, WaveOptions, WaveReport};

pub use config::{CodeConfig, DecoderConfig, ExperimentConfig, StorageChoice, Sweep, SweepAxis};
pub use output::{write_outputs, RESULTS_FILE, SE_FILE, SUMMARY_FILE, TIMING_FILE};

/// Version string embedded in every output file.
pub const VERSION: &str = concat!("sc-sparc ", env!("CARGO_PKG_VERSION"));

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "SC_SPARC_THREADS";

const SE_STREAMS: u64 = 1;
const TRIAL_STREAMS: u64 = 2;

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub trial: usize,
    pub stream_id: u64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub ser_overall: f64,
    pub ser_unseeded: f64,
    pub error_event: bool,
    /// Empirical `||beta^t - beta||^2 / L` per iteration.
    pub mse: Vec<f64>,
    /// State evolution prediction per iteration.
    pub mse_se: Vec<f64>,
    /// Set when the decoder diverged; the other fields are then empty.
    pub diverged: Option<String>,
    /// Wall time in seconds; written only to the timing file.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Aggregate over the trials of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub value: Option<f64>,
    pub params: SparcParams,
    pub capacity: f64,
    pub rate_ratio: f64,
    pub effective_rate: f64,
    pub wave: WaveReport,
    pub iterations: usize,
    pub trials: usize,
    pub diverged: usize,
    pub error_events: usize,
    /// Estimate of `P(ser_unseeded > threshold)` over non-diverged trials.
    pub p_error: f64,
    /// 95% Wilson interval for `p_error`.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_ser_overall: f64,
    pub mean_ser_unseeded: f64,
    /// Final state evolution error over unseeded blocks.
    pub se_final_psi_unseeded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub summary: PointSummary,
    pub se: SeTrajectory,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub points: Vec<PointReport>,
}

/// Per-iteration gap between empirical and predicted error at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeDeviation {
    pub point: usize,
    pub t: usize,
    pub se: f64,
    /// Empirical error averaged over trials.
    pub mean_empirical: f64,
    /// `|mean_empirical - se|`.
    pub deviation_of_mean: f64,
    /// Mean over trials of `|empirical - se|`.
    pub mean_abs_deviation: f64,
    /// Largest over trials of `|empirical - se|`.
    pub max_abs_deviation: f64,
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2n = z * z / nf;
    let center = (p + 0.5 * z2n) / (1.0 + z2n);
    let half = z / (1.0 + z2n) * (p * (1.0 - p) / nf + 0.25 * z * z / (nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if k >= n { 1.0 } else { (center + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Number of worker threads from [`THREADS_ENV`], if set.
pub fn configured_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::param(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a pool sized by [`THREADS_ENV`] (all cores when unset).
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = configured_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Everything a trial needs at one sweep point.
pub struct TrialSetup<'a> {
    pub params: SparcParams,
    pub w: &'a BaseMatrix,
    pub channel: &'a ChannelSpec,
    pub se: &'a SeTrajectory,
    pub mode: TauMode,
    pub iterations: usize,
    pub f_stop: f64,
    pub storage: StorageMode,
    pub memory_cap_bytes: u64,
    pub error_threshold: f64,
}

impl TrialSetup<'_> {
    /// Draws a design matrix, message and channel noise from `stream`,
    /// decodes, and scores the result.
    pub fn run(&self, point: usize, trial: usize, stream: RngStream) -> Result<TrialRecord> {
        let start = Instant::now();
        let p = &self.params;
        let options = DesignOptions { storage: self.storage.clone(), memory_cap_bytes: self.memory_cap_bytes };
        let a = DesignMatrix::sample_with(p, self.w, stream.derive(0), &options)?;
        let msg = Message::random(p.l, p.m, &stream.derive(1));
        let beta = encode(&msg, p)?;
        let y = self.channel.transmit(&a.matvec(&beta)?, &stream.derive(2));
        let schedule = match self.mode {
            TauMode::StateEvolution => Schedule::StateEvolution(self.se),
            TauMode::Online => Schedule::Online,
        };
        let decoder_options =
            DecoderOptions { iterations: self.iterations, f_stop: self.f_stop, record_iterates: false };
        let mut record = TrialRecord {
            point,
            trial,
            stream_id: stream.stream_id,
            iterations: 0,
            stopped_early: false,
            ser_overall: f64::NAN,
            ser_unseeded: f64::NAN,
            error_event: false,
            mse: Vec::new(),
            mse_se: Vec::new(),
            diverged: None,
            wall_time: 0.0,
        };
        match Decoder::new(&a, self.channel, p, self.w)?.decode(&y, &beta, schedule, &decoder_options, Some(&beta)) {
            Ok(run) => {
                let ser = section_error_rate(&run.decoded, &msg, &p.seeds()?, p)?;
                record.iterations = run.iterations;
                record.stopped_early = run.stopped_early;
                record.ser_overall = ser.overall;
                record.ser_unseeded = ser.unseeded;
                record.error_event = ser.unseeded > self.error_threshold;
                record.mse = run.records.iter().map(|r| r.mse_empirical.unwrap_or(f64::NAN)).collect();
                record.mse_se = (0..self.iterations).map(|t| self.se.mean_psi(t + 1)).collect();
            }
            Err(Error::Diverged { iteration, block, message }) => {
                record.diverged = Some(format!("iteration {iteration}, block {block}: {message}"));
            }
            Err(e) => return Err(e),
        }
        record.wall_time = start.elapsed().as_secs_f64();
        Ok(record)
    }
}

/// Storage layout for one trial; `Auto` keeps the unseeded blocks when they fit.
pub fn storage_for(choice: StorageChoice, params: &SparcParams, cap: u64) -> Result<StorageMode> {
    Ok(match choice {
        StorageChoice::Dense => StorageMode::Dense,
        StorageChoice::OnTheFly => StorageMode::OnTheFly,
        StorageChoice::Auto => {
            let free: Vec<bool> = params.seeds()?.mask().iter().map(|s| !s).collect();
            let bytes = free.iter().filter(|&&f| f).count() as u64
                * (params.cols_per_block() * params.n * std::mem::size_of::<f32>()) as u64;
            if bytes <= cap {
                StorageMode::Partial(free)
            } else {
                StorageMode::OnTheFly
            }
        }
    })
}

/// Runs every sweep point of `config` and writes the output files when an
/// output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let points = config.points()?;
    let channel = ChannelSpec::from_config(&config.channel)?;
    let capacity = channel.capacity()?;
    let root = RngStream::root(config.master_seed);
    let threads = rayon::current_num_threads();
    let mut reports = Vec::with_capacity(points.len());

    for (index, (value, code)) in points.into_iter().enumerate() {
        let params = code.resolve(&channel)?;
        let w = params.base_matrix()?;
        let wave = regime_classify(&params, &channel, &WaveOptions::default())?;
        let budget = config.decoder.iterations.or(wave.t_iters).unwrap_or(config.se.t_max);
        let se_options = SeOptions { t_max: budget, ..config.se };
        let se = run_se(&params, &w, &channel, &se_options, root.derive(SE_STREAMS).derive(index as u64))?;
        // State evolution stops early only once every block is decoded.
        let iterations = budget.min(se.iterations());

        let storage = storage_for(config.decoder.storage, &params, config.decoder.memory_cap_bytes)?;
        let trial_bytes = match &storage {
            StorageMode::Partial(mask) => mask.iter().filter(|&&m| m).count() as u64,
            StorageMode::Dense => params.gamma as u64,
            StorageMode::OnTheFly => 0,
        } * (params.cols_per_block() * params.n * std::mem::size_of::<f32>()) as u64;
        let concurrent = match config.decoder.memory_cap_bytes.checked_div(trial_bytes) {
            Some(fit) => (fit as usize).clamp(1, threads),
            None => threads,
        };

        let setup = TrialSetup {
            params,
            w: &w,
            channel: &channel,
            se: &se,
            mode: config.decoder.mode,
            iterations,
            f_stop: config.decoder.f_stop,
            storage,
            memory_cap_bytes: config.decoder.memory_cap_bytes,
            error_threshold: config.error_threshold,
        };
        let trial_root = root.derive(TRIAL_STREAMS);
        let mut trials = Vec::with_capacity(config.trials);
        for batch in (0..config.trials).collect::<Vec<_>>().chunks(concurrent) {
            let done: Vec<Result<TrialRecord>> =
                batch.par_iter().map(|&i| setup.run(index, i, trial_root.derive2(index as u64, i as u64))).collect();
            for record in done {
                trials.push(record?);
            }
        }

        let diverged = trials.iter().filter(|t| t.diverged.is_some()).count();
        if 2 * diverged > trials.len() {
            return Err(Error::Experiment(format!(
                "{diverged} of {} trials diverged at sweep point {index}",
                trials.len()
            )));
        }
        let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.diverged.is_none()).collect();
        let events = ok.iter().filter(|t| t.error_event).count();
        let (wilson_low, wilson_high) = wilson_interval(events, ok.len());
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|t| f(t)).sum::<f64>() / ok.len() as f64
            }
        };
        let summary = PointSummary {
            point: index,
            value,
            params,
            capacity,
            rate_ratio: params.rate_nats / capacity,
            effective_rate: params.effective_rate(),
            iterations,
            trials: trials.len(),
            diverged,
            error_events: events,
            p_error: if ok.is_empty() { f64::NAN } else { events as f64 / ok.len() as f64 },
            wilson_low,
            wilson_high,
            mean_ser_overall: mean(&|t| t.ser_overall),
            mean_ser_unseeded: mean(&|t| t.ser_unseeded),
            se_final_psi_unseeded: se.mean_psi_unseeded(iterations),
            wave,
        };
        reports.push(PointReport { summary, se, trials });
    }

    let report = ExperimentReport { version: VERSION.into(), config: config.clone(), points: reports };
    if let Some(dir) = &config.output_dir {
        write_outputs(&report, dir)?;
    }
    Ok(report)
}

/// Empirical error against state evolution, per iteration and sweep point.
/// A trial that stopped early keeps its last error for the remaining
/// iterations, since its estimate no longer changes materially.
pub fn compare_se(report: &ExperimentReport) -> Vec<SeDeviation> {
    let mut rows = Vec::new();
    for point in &report.points {
        let ok: Vec<&TrialRecord> = point.trials.iter().filter(|t| t.diverged.is_none() && !t.mse.is_empty()).collect();
        if ok.is_empty() {
            continue;
        }
        for t in 0..point.summary.iterations {
            let se = point.se.mean_psi(t + 1);
            let values: Vec<f64> = ok.iter().map(|r| r.mse[t.min(r.mse.len() - 1)]).collect();
            let k = values.len() as f64;
            let mean_empirical = values.iter().sum::<f64>() / k;
            let devs: Vec<f64> = values.iter().map(|v| (v - se).abs()).collect();
            rows.push(SeDeviation {
                point: point.summary.point,
                t,
                se,
                mean_empirical,
                deviation_of_mean: (mean_empirical - se).abs(),
                mean_abs_deviation: devs.iter().sum::<f64>() / k,
                max_abs_deviation: devs.iter().copied().fold(0.0, f64::max),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilson_reference_values() {
        // 10 of 100: standard Wilson interval (0.0552, 0.1744).
        let (lo, hi) = wilson_interval(10, 100);
        assert_abs_diff_eq!(lo, 0.05522, epsilon = 1e-4);
        assert_abs_diff_eq!(hi, 0.17437, epsilon = 1e-4);
        let (lo, hi) = wilson_interval(0, 20);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.1 && hi < 0.2);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn sweep_validation() {
        let mut c = ExperimentConfig::desk_preset();
        c.sweep = Some(Sweep { axis: SweepAxis::N, values: vec![] });
        assert!(c.validate().unwrap_err().is_parameter());
        c.sweep = Some(Sweep { axis: SweepAxis::N, values: vec![3000.0, 2000.0] });
        assert!(c.validate().is_err());
        c.sweep = Some(Sweep { axis: SweepAxis::M, values: vec![16.5] });
        assert!(c.validate().is_err());
        c.sweep = None;
        c.trials = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn n_sweep_keeps_the_rate() {
        let mut c = ExperimentConfig::desk_preset();
        c.code = CodeConfig {
            l: 256,
            m: 32,
            gamma: 16,
            omega: 1,
            rho: Some(0.0),
            rate_ratio: Some(0.8),
            rate_nats: None,
            n: None,
        };
        c.channel.param = 0.1;
        let base = c.code.resolve(&ChannelSpec::from_config(&c.channel).unwrap()).unwrap();
        c.sweep = Some(Sweep { axis: SweepAxis::N, values: vec![base.n as f64, 2.0 * base.n as f64] });
        let points = c.points().unwrap();
        assert_eq!(points[0].1.l, 256);
        assert_eq!(points[1].1.l, 512);
        let ch = ChannelSpec::from_config(&c.channel).unwrap();
        let p1 = points[1].1.resolve(&ch).unwrap();
        assert_abs_diff_eq!(p1.rate_nats, base.rate_nats, epsilon = 1e-12);
    }

    #[test]
    fn desk_preset_round_trips_through_json() {
        let c = ExperimentConfig::desk_preset();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).unwrap_err().is_parameter());
    }
}
