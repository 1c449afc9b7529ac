//! `sc-sparc` command-line front end.
//!
//! Exit status is 0 on success, 2 for invalid parameters and 3 when an
//! experiment or computation fails.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sc_sparc::channels::{ChannelConfig, ChannelKind, ChannelSpec};
use sc_sparc::code_design::{BaseMatrix, DesignMatrix, DesignOptions, SparcParams, StorageMode};
use sc_sparc::codec::{encode, Decoder, DecoderOptions, Message, Schedule, TauMode};
use sc_sparc::glm::{run_se_glm, simulate_glm, GlmParams, PriorSpec};
use sc_sparc::harness::{
    run_experiment, storage_for, with_thread_pool, CodeConfig, ExperimentConfig, StorageChoice, Sweep, SweepAxis,
    VERSION,
};
use sc_sparc::numerics::RngStream;
use sc_sparc::state_evolution::{regime_classify, run_se, SeOptions, WaveOptions};
use sc_sparc::{Error, Result};

#[derive(Parser)]
#[command(name = "sc-sparc", version, about = "Spatially coupled sparse superposition code laboratory")]
struct Cli {
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Channel capacity in nats and bits.
    Capacity(ChannelArgs),
    /// State evolution trajectory as CSV.
    Se {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        se: SeArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Wave regime analysis as JSON.
    Wave {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        code: CodeArgs,
        /// Exponent constant of the decoded threshold.
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        /// Rate slack; the midpoint of its allowed interval by default.
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Base matrix: a JSON header line, then one CSV row per row block.
    Design {
        #[arg(long)]
        gamma: Option<usize>,
        #[arg(long)]
        omega: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        code: CodeArgs,
    },
    /// Encode, transmit and decode one random message; one JSON line per iteration.
    Decode {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        se: SeArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Iteration budget; the wave-analysis budget by default.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        f_stop: Option<f64>,
        #[arg(long, value_enum)]
        storage: Option<StorageArg>,
    },
    /// Monte Carlo experiment; writes the output files and prints the point summaries.
    Simulate {
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        se: SeArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        storage: Option<StorageArg>,
        /// Sweep axis; requires --sweep-values.
        #[arg(long, value_enum, requires = "sweep_values")]
        sweep: Option<AxisArg>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',', requires = "sweep")]
        sweep_values: Option<Vec<f64>>,
        #[arg(long)]
        error_threshold: Option<f64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coupled compressed sensing with a separable prior; one JSON line per trial and iteration.
    Glm(GlmArgs),
}

#[derive(Args)]
struct ChannelArgs {
    /// Channel as `kind:param`, e.g. `awgn:1`, `bec:0.2`, `bsc:0.11`.
    #[arg(long)]
    channel: Option<String>,
}

#[derive(Args)]
struct CodeArgs {
    /// Code parameters as inline JSON or a path to a JSON file.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "code-gamma")]
    code_gamma: Option<usize>,
    #[arg(long = "code-omega")]
    code_omega: Option<usize>,
    #[arg(long = "code-rho")]
    code_rho: Option<f64>,
    /// Rate as a fraction of capacity.
    #[arg(long)]
    rate_ratio: Option<f64>,
    /// Code length; sets the rate from `L ln M / n`.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SeArgs {
    #[arg(long)]
    t_max: Option<usize>,
    /// Monte Carlo samples per evaluation of the section error.
    #[arg(long)]
    n_mc: Option<usize>,
}

#[derive(Args)]
struct GlmArgs {
    #[arg(long, value_enum, default_value_t = PriorArg::Bg)]
    prior: PriorArg,
    /// Nonzero probability for the Bernoulli priors.
    #[arg(long, default_value_t = 0.1)]
    prior_p: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_var: f64,
    #[arg(long, default_value_t = 0.0)]
    prior_mean: f64,
    #[command(flatten)]
    channel: ChannelArgs,
    /// Signal length.
    #[arg(long, default_value_t = 20_000)]
    n_cols: usize,
    /// Measurements per signal entry.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 16)]
    gamma: usize,
    #[arg(long, default_value_t = 1)]
    omega: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Gaussian,
    Bernoulli,
    Bg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    StateEvolution,
    Online,
}

#[derive(Clone, Copy, ValueEnum)]
enum StorageArg {
    Auto,
    Dense,
    OnTheFly,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    N,
    RateRatio,
    M,
    Omega,
}

impl From<ModeArg> for TauMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::StateEvolution => TauMode::StateEvolution,
            ModeArg::Online => TauMode::Online,
        }
    }
}

impl From<StorageArg> for StorageChoice {
    fn from(s: StorageArg) -> Self {
        match s {
            StorageArg::Auto => StorageChoice::Auto,
            StorageArg::Dense => StorageChoice::Dense,
            StorageArg::OnTheFly => StorageChoice::OnTheFly,
        }
    }
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::N => SweepAxis::N,
            AxisArg::RateRatio => SweepAxis::RateRatio,
            AxisArg::M => SweepAxis::M,
            AxisArg::Omega => SweepAxis::Omega,
        }
    }
}

fn param(message: impl Into<String>) -> Error {
    Error::Parameter(message.into())
}

fn parse_channel(text: &str) -> Result<ChannelConfig> {
    let (kind, value) = text.split_once(':').ok_or_else(|| param(format!("channel {text:?} is not kind:param")))?;
    let kind = match kind.trim().to_ascii_lowercase().as_str() {
        "awgn" => ChannelKind::Awgn,
        "bec" => ChannelKind::Bec,
        "bsc" => ChannelKind::Bsc,
        other => return Err(param(format!("unknown channel kind {other:?}"))),
    };
    let param_value = value.trim().parse::<f64>().map_err(|_| param(format!("bad channel parameter {value:?}")))?;
    Ok(ChannelConfig { kind, param: param_value })
}

fn read_json_arg(text: &str) -> Result<String> {
    if text.trim_start().starts_with('{') {
        Ok(text.to_string())
    } else {
        Ok(fs::read_to_string(text)?)
    }
}

/// Base configuration: the `--config` file, else the desk preset.
fn base_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::desk_preset()),
    }
}

impl ChannelArgs {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(text) = &self.channel {
            config.channel = parse_channel(text)?;
        }
        Ok(())
    }
}

impl CodeArgs {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        let code = &mut config.code;
        if let Some(text) = &self.params {
            *code = serde_json::from_str::<CodeConfig>(&read_json_arg(text)?)?;
        }
        if let Some(v) = self.l {
            code.l = v;
        }
        if let Some(v) = self.m {
            code.m = v;
        }
        if let Some(v) = self.code_gamma {
            code.gamma = v;
        }
        if let Some(v) = self.code_omega {
            code.omega = v;
        }
        if let Some(v) = self.code_rho {
            code.rho = Some(v);
        }
        if self.rate_ratio.is_some() || self.n.is_some() {
            code.rate_ratio = self.rate_ratio;
            code.rate_nats = None;
            code.n = self.n;
        }
        Ok(())
    }
}

impl SeArgs {
    fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(v) = self.t_max {
            config.se.t_max = v;
        }
        if let Some(v) = self.n_mc {
            config.se.n_mc = v;
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn resolved(config: &ExperimentConfig) -> Result<(ChannelSpec, SparcParams, BaseMatrix)> {
    config.validate()?;
    let channel = ChannelSpec::from_config(&config.channel)?;
    let params = config.code.resolve(&channel)?;
    let w = params.base_matrix()?;
    Ok((channel, params, w))
}

fn capacity(config: &ExperimentConfig) -> Result<()> {
    let channel = ChannelSpec::from_config(&config.channel)?;
    let c = channel.capacity()?;
    let entropy = channel.capacity_entropy()?;
    print_json(&json!({
        "version": VERSION,
        "channel": config.channel,
        "capacity_nats": c,
        "capacity_bits": c / std::f64::consts::LN_2,
        "closed_form_nats": entropy,
    }))
}

fn se(config: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    let (channel, params, w) = resolved(config)?;
    let stream = RngStream::root(config.master_seed).derive(1).derive(0);
    let traj = run_se(&params, &w, &channel, &config.se, stream)?;
    match out {
        Some(path) => traj.write_csv(fs::File::create(path)?),
        None => traj.write_csv(io::stdout().lock()),
    }
}

fn wave(config: &ExperimentConfig, options: WaveOptions) -> Result<()> {
    let (channel, params, _) = resolved(config)?;
    print_json(&regime_classify(&params, &channel, &options)?)
}

fn design(config: &ExperimentConfig, gamma: Option<usize>, omega: Option<usize>, rho: Option<f64>) -> Result<()> {
    let code = &config.code;
    let gamma = gamma.unwrap_or(code.gamma);
    let omega = omega.unwrap_or(code.omega);
    let rho = match rho.or(code.rho) {
        Some(r) => r,
        None => resolved(config)?.1.rho,
    };
    let w = BaseMatrix::new(gamma, omega, rho)?;
    let mut out = io::stdout().lock();
    let header = json!({"version": VERSION, "gamma": gamma, "omega": omega, "rho": rho, "row_sums": w.row_sums()});
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in 0..gamma {
        let line: Vec<String> = w.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DecodeLine {
    t: usize,
    mse_empirical: Option<f64>,
    mse_se: Option<f64>,
    ser_running: Option<f64>,
}

fn decode(config: &ExperimentConfig) -> Result<()> {
    let (channel, params, w) = resolved(config)?;
    let wave = regime_classify(&params, &channel, &WaveOptions::default())?;
    let budget = config.decoder.iterations.or(wave.t_iters).unwrap_or(config.se.t_max);
    let root = RngStream::root(config.master_seed);
    let se_options = SeOptions { t_max: budget, ..config.se };
    let schedule_traj = match config.decoder.mode {
        TauMode::StateEvolution => Some(run_se(&params, &w, &channel, &se_options, root.derive(1).derive(0))?),
        TauMode::Online => None,
    };
    let iterations = schedule_traj.as_ref().map_or(budget, |t| budget.min(t.iterations()));
    let storage = storage_for(config.decoder.storage, &params, config.decoder.memory_cap_bytes)?;
    let options = DesignOptions { storage, memory_cap_bytes: config.decoder.memory_cap_bytes };
    let stream = root.derive(2).derive2(0, 0);
    let a = DesignMatrix::sample_with(&params, &w, stream.derive(0), &options)?;
    let msg = Message::random(params.l, params.m, &stream.derive(1));
    let beta = encode(&msg, &params)?;
    let y = channel.transmit(&a.matvec(&beta)?, &stream.derive(2));
    let schedule = match &schedule_traj {
        Some(t) => Schedule::StateEvolution(t),
        None => Schedule::Online,
    };
    let decoder_options = DecoderOptions { iterations, f_stop: config.decoder.f_stop, record_iterates: false };
    let run = Decoder::new(&a, &channel, &params, &w)?.decode(&y, &beta, schedule, &decoder_options, Some(&beta))?;
    let mut out = io::stdout().lock();
    for r in &run.records {
        let line = DecodeLine { t: r.t, mse_empirical: r.mse_empirical, mse_se: r.mse_se, ser_running: r.ser_running };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn simulate(config: &ExperimentConfig) -> Result<()> {
    let report = run_experiment(config)?;
    let points: Vec<_> = report.points.iter().map(|p| &p.summary).collect();
    print_json(&json!({"version": report.version, "points": points}))
}

#[derive(Serialize)]
struct GlmLine {
    trial: usize,
    t: usize,
    mse_empirical: f64,
    mse_se: f64,
}

fn glm(args: &GlmArgs, config: &ExperimentConfig) -> Result<()> {
    let prior = match args.prior {
        PriorArg::Gaussian => PriorSpec::gaussian(args.prior_mean, args.prior_var)?,
        PriorArg::Bernoulli => PriorSpec::bernoulli(args.prior_p)?,
        PriorArg::Bg => PriorSpec::bernoulli_gaussian(args.prior_p, args.prior_var)?,
    };
    if args.trials == 0 {
        return Err(param("trials must be at least 1"));
    }
    let channel = ChannelSpec::from_config(&config.channel)?;
    let params = GlmParams::new(args.n_cols, args.alpha, args.gamma, args.omega, args.rho)?;
    let w = params.base_matrix()?;
    let se_options = SeOptions { t_max: args.iters, stop_tol: 0.0, ..config.se };
    let traj = run_se_glm(&params, &w, &channel, &prior, &se_options)?;
    let iterations = args.iters.min(traj.iterations());
    let root = RngStream::root(config.master_seed).derive(3);
    let mut out = io::stdout().lock();
    for trial in 0..args.trials {
        let run = simulate_glm(
            &params,
            &w,
            &channel,
            &prior,
            &traj,
            iterations,
            root.derive(trial as u64),
            StorageMode::Dense,
        )?;
        for r in &run.records {
            serde_json::to_writer(
                &mut out,
                &GlmLine { trial, t: r.t, mse_empirical: r.mse_empirical, mse_se: r.mse_se },
            )?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = base_config(cli.config.as_deref())?;
    match cli.command {
        Command::Capacity(channel) => {
            channel.apply(&mut config)?;
            capacity(&config)
        }
        Command::Se { channel, code, se: se_args, seed, out } => {
            channel.apply(&mut config)?;
            code.apply(&mut config)?;
            se_args.apply(&mut config);
            config.master_seed = seed.unwrap_or(config.master_seed);
            with_thread_pool(|| se(&config, out.as_deref()))?
        }
        Command::Wave { channel, code, k, delta } => {
            channel.apply(&mut config)?;
            code.apply(&mut config)?;
            wave(&config, WaveOptions { k, delta })
        }
        Command::Design { gamma, omega, rho, channel, code } => {
            channel.apply(&mut config)?;
            code.apply(&mut config)?;
            design(&config, gamma, omega, rho)
        }
        Command::Decode { channel, code, se: se_args, seed, iters, mode, f_stop, storage } => {
            channel.apply(&mut config)?;
            code.apply(&mut config)?;
            se_args.apply(&mut config);
            config.master_seed = seed.unwrap_or(config.master_seed);
            config.decoder.iterations = iters.or(config.decoder.iterations);
            if let Some(m) = mode {
                config.decoder.mode = m.into();
            }
            config.decoder.f_stop = f_stop.unwrap_or(config.decoder.f_stop);
            if let Some(s) = storage {
                config.decoder.storage = s.into();
            }
            with_thread_pool(|| decode(&config))?
        }
        Command::Simulate {
            channel,
            code,
            se: se_args,
            seed,
            trials,
            iters,
            mode,
            storage,
            sweep,
            sweep_values,
            error_threshold,
            out,
        } => {
            channel.apply(&mut config)?;
            code.apply(&mut config)?;
            se_args.apply(&mut config);
            config.master_seed = seed.unwrap_or(config.master_seed);
            config.trials = trials.unwrap_or(config.trials);
            config.decoder.iterations = iters.or(config.decoder.iterations);
            if let Some(m) = mode {
                config.decoder.mode = m.into();
            }
            if let Some(s) = storage {
                config.decoder.storage = s.into();
            }
            if let (Some(axis), Some(values)) = (sweep, sweep_values) {
                config.sweep = Some(Sweep { axis: axis.into(), values });
            }
            config.error_threshold = error_threshold.unwrap_or(config.error_threshold);
            if out.is_some() {
                config.output_dir = out;
            }
            config.validate()?;
            with_thread_pool(|| simulate(&config))?
        }
        Command::Glm(args) => {
            args.channel.apply(&mut config)?;
            if let Some(seed) = args.seed {
                config.master_seed = seed;
            }
            with_thread_pool(|| glm(&args, &config))?
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sc-sparc: {e}");
            if e.is_parameter() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
