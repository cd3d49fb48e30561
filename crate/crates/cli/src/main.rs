//! `emitloc` command line: Monte Carlo sweeps, data generation and
//! localization of stored observations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use emitloc::channel::{ClusterParams, ExpPdpParams, Pdp};
use emitloc::estimator::GridSpec;
use emitloc::harness::{
    config_scenario, emit_results, localize, run_monte_carlo, simulate_trial, Axis, ChannelConfig, EstimatorKind,
    PdpSource, PointModel, RunConfig, SignalConfig, Sweep,
};
use emitloc::io::{read_json, read_observations, write_json, write_observations};
use emitloc::scenario::{Position, Scenario};
use emitloc::{channel, Execution};

#[derive(Parser, Debug)]
#[command(name = "emitloc", version, about = "Emitter localization in dense multipath")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// RMSE and bound against SNR (values in dB).
    SweepSnr(SweepArgs),
    /// RMSE and bound against the number of base stations.
    SweepStations(SweepArgs),
    /// RMSE and bound against the exponential decay constant (values in seconds).
    SweepDelayspread(SweepArgs),
    /// Synthesize one trial and write the observation, scenario and PDP prior.
    GenData(GenDataArgs),
    /// Localize the emitter from a stored observation.
    Localize(LocalizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SignalArg {
    White,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ChannelArg {
    Exp1,
    Exp2,
    Cluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PdpArg {
    Analytic,
    Empirical,
}

/// Overrides applied on top of the defaults or a `--config` file.
#[derive(Args, Debug)]
struct RunArgs {
    /// Base configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frequency bins per window.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Number of windows.
    #[arg(long = "D", alias = "d")]
    d: Option<usize>,
    /// Sampling rate in Hz.
    #[arg(long)]
    fs_hz: Option<f64>,
    /// Number of base stations.
    #[arg(long = "M", alias = "stations")]
    m: Option<usize>,
    /// SNR in dB when SNR is not the swept axis.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, value_enum)]
    signal: Option<SignalArg>,
    /// PSK order of the flat signal.
    #[arg(long, default_value_t = 256)]
    psk_order: usize,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// Source of the estimator's PDP prior.
    #[arg(long, value_enum)]
    pdp: Option<PdpArg>,
    /// Channel draws averaged by the empirical PDP.
    #[arg(long)]
    pdp_count: Option<usize>,
    #[arg(long)]
    num_configs: Option<usize>,
    #[arg(long)]
    trials_per_config: Option<usize>,
    /// Comma-separated subset of usage, usage_cwc, baseline.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    /// Give the estimators the true signal magnitudes.
    #[arg(long)]
    known_magnitudes: bool,
    /// Skip the bound computation.
    #[arg(long)]
    no_crlb: bool,
    /// Half side of the square search grid in metres.
    #[arg(long)]
    grid_half_extent: Option<f64>,
    /// Coarse grid step in metres.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    refine_levels: Option<usize>,
    /// Run trials on one thread.
    #[arg(long)]
    sequential: bool,
    /// Keep per-trial records in the JSON output.
    #[arg(long)]
    record_trials: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: u64,
    /// Axis values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    seed: u64,
    /// Configuration index of the geometry draw.
    #[arg(long, default_value_t = 0)]
    config_id: usize,
    /// Trial index of the channel, signal and noise draws.
    #[arg(long, default_value_t = 0)]
    trial_id: usize,
    /// Observation binary; its header goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
    /// Scenario (emitter and stations) as JSON.
    #[arg(long)]
    scenario_out: PathBuf,
    /// PDP prior as JSON.
    #[arg(long)]
    pdp_out: PathBuf,
}

#[derive(Args, Debug)]
struct LocalizeArgs {
    /// Observation binary with its `.json` header alongside.
    #[arg(long)]
    obs: PathBuf,
    /// PDP prior as JSON.
    #[arg(long)]
    pdp: PathBuf,
    /// Station positions: a scenario JSON or a list of positions.
    #[arg(long)]
    stations: PathBuf,
    #[arg(long, default_value = "usage_cwc")]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 0.0)]
    center_x: f64,
    #[arg(long, default_value_t = 0.0)]
    center_y: f64,
    #[arg(long, default_value_t = 0.0)]
    center_z: f64,
    #[arg(long)]
    grid_half_extent: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    refine_levels: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StationsFile {
    Scenario(Scenario),
    List(Vec<Position>),
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn base_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    })
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(fs) = self.fs_hz {
            cfg.fs_hz = fs;
        }
        if let Some(m) = self.m {
            cfg.geometry.num_stations = m;
        }
        if let Some(snr) = self.snr_db {
            cfg.snr_db = snr;
        }
        match self.signal {
            Some(SignalArg::White) => cfg.signal = SignalConfig::White,
            Some(SignalArg::Flat) => cfg.signal = SignalConfig::Flat { order: self.psk_order },
            None => {}
        }
        let mut source = cfg.channel.pdp_source();
        if let Some(channel) = self.channel {
            cfg.channel = match channel {
                ChannelArg::Exp1 => ChannelConfig::Exp { params: ExpPdpParams::exp1(), pdp_source: source },
                ChannelArg::Exp2 => ChannelConfig::Exp { params: ExpPdpParams::exp2(), pdp_source: source },
                ChannelArg::Cluster => ChannelConfig::Cluster {
                    params: ClusterParams::default(),
                    delta_tau_s: 1e-9,
                    pdp_source: source,
                },
            };
        }
        match (self.pdp, self.pdp_count) {
            (Some(PdpArg::Analytic), Some(_)) => return Err("--pdp-count needs an empirical PDP".into()),
            (Some(PdpArg::Analytic), None) => source = PdpSource::Analytic,
            (Some(PdpArg::Empirical), count) | (None, count @ Some(_)) => {
                let default = match source {
                    PdpSource::Empirical { count } => count,
                    PdpSource::Analytic => 1000,
                };
                source = PdpSource::Empirical { count: count.unwrap_or(default) };
            }
            (None, None) => {}
        }
        match &mut cfg.channel {
            ChannelConfig::Exp { pdp_source, .. } | ChannelConfig::Cluster { pdp_source, .. } => *pdp_source = source,
        }
        if let Some(n) = self.num_configs {
            cfg.num_configs = n;
        }
        if let Some(n) = self.trials_per_config {
            cfg.trials_per_config = n;
        }
        if let Some(list) = &self.estimators {
            cfg.estimators = list.clone();
        }
        cfg.known_magnitudes |= self.known_magnitudes;
        if self.no_crlb {
            cfg.crlb = false;
        }
        apply_grid(&mut cfg.grid, self.grid_half_extent, self.grid_step, self.refine_levels);
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.record_trials |= self.record_trials;
        Ok(())
    }
}

fn apply_grid(grid: &mut GridSpec, half_extent: Option<f64>, step: Option<f64>, refine: Option<usize>) {
    if let Some(h) = half_extent {
        grid.half_extent = h;
    }
    if let Some(s) = step {
        grid.step = s;
    }
    if let Some(r) = refine {
        grid.refine_levels = r;
    }
}

fn default_values(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Snr => vec![10.0, 20.0, 30.0],
        Axis::Stations => vec![4.0, 8.0, 16.0],
        Axis::DelaySpread => vec![10e-9, 20e-9, 30e-9, 40e-9],
    }
}

fn sweep(axis: Axis, args: &SweepArgs) -> CliResult<()> {
    let mut cfg = base_config(args.run.config.as_deref())?;
    args.run.apply(&mut cfg)?;
    cfg.seed = args.seed;
    let values = match &args.values {
        Some(v) => v.clone(),
        None if cfg.sweep.axis == axis && args.run.config.is_some() => cfg.sweep.values.clone(),
        None => default_values(axis),
    };
    cfg.sweep = Sweep { axis, values };
    let result = run_monte_carlo(&cfg)?;
    emit_results(&result, args.csv.as_deref(), args.json.as_deref())?;
    if args.csv.is_none() {
        print!("{}", emitloc::harness::csv_string(&result));
    }
    Ok(())
}

fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let mut cfg = base_config(args.run.config.as_deref())?;
    args.run.apply(&mut cfg)?;
    cfg.seed = args.seed;
    cfg.sweep = Sweep { axis: Axis::Snr, values: vec![cfg.snr_db] };
    cfg.validate()?;
    let model = PointModel::new(&cfg, 0, cfg.point(cfg.snr_db)?)?;
    let scenario = config_scenario(&cfg, &model, 0, args.config_id)?;
    let data = simulate_trial(&cfg, &model, &scenario, 0, args.config_id, args.trial_id)?;
    write_observations(&args.out, &data.obs)?;
    write_json(&args.scenario_out, &scenario)?;
    write_json(&args.pdp_out, &model.prior)?;
    Ok(())
}

fn localize_file(args: &LocalizeArgs) -> CliResult<()> {
    let obs = read_observations(&args.obs)?;
    let pdp: Pdp = read_json(&args.pdp)?;
    pdp.validate()?;
    let (stations, truth) = match read_json::<StationsFile>(&args.stations)? {
        StationsFile::Scenario(s) => (s.stations, Some(s.emitter)),
        StationsFile::List(list) => (list, None),
    };
    if stations.len() != obs.num_stations() {
        return Err(format!("{} station positions for {} observed stations", stations.len(), obs.num_stations()).into());
    }
    let cov = channel::channel_covariance(&pdp, &obs.grid)?.compact(channel::DEFAULT_EPS_RANK)?;
    let covs = vec![cov; stations.len()];
    let mut grid = GridSpec {
        center: Position::new(args.center_x, args.center_y, args.center_z),
        ..GridSpec::default()
    };
    apply_grid(&mut grid, args.grid_half_extent, args.grid_step, args.refine_levels);
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let gpm = emitloc::gpm::GpmConfig::default();
    let out = localize(args.estimator, &obs, &covs, &stations, &grid, &gpm, exec, None)?;
    let mut report = serde_json::json!({
        "estimator": args.estimator.name(),
        "x": out.q_hat.x,
        "y": out.q_hat.y,
        "z": out.q_hat.z,
        "cost": out.cost,
        "evaluations": out.evaluations,
    });
    if let Some(t) = truth {
        report["error_m"] = serde_json::json!(out.q_hat.squared_error(&t).sqrt());
    }
    println!("{report}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::SweepSnr(a) => sweep(Axis::Snr, a),
        Command::SweepStations(a) => sweep(Axis::Stations, a),
        Command::SweepDelayspread(a) => sweep(Axis::DelaySpread, a),
        Command::GenData(a) => gen_data(a),
        Command::Localize(a) => localize_file(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
