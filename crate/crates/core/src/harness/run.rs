//! Monte Carlo execution.
//!
//! For every axis value the PDP prior and channel covariance are built once.
//! Then `num_configs` geometries are drawn and each one is used for
//! `trials_per_config` trials with fresh channels, signal and noise. All
//! requested estimators see the same observation set within a trial.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::baseline::baseline_grid_search;
use super::config::{ChannelConfig, EstimatorKind, PdpSource, PointSettings, RunConfig, SignalConfig};
use super::seed::{stream_rng, Stream};
use crate::channel::{
    channel_covariance, empirical_pdp, exp_pdp, sample_cluster_channel, sample_rayleigh_channel, ChannelCovariance,
    ChannelRealization, ClusterParams, FrequencyGrid, Pdp, DEFAULT_EPS_RANK,
};
use crate::crlb::{crlb_position, fim, FimOptions, FimResult};
use crate::cwc::usage_cwc_grid_search;
use crate::estimator::{usage_grid_search, GridSpec, SearchOutcome, UsageOptions};
use crate::gpm::GpmConfig;
use crate::scenario::{sample_scenario, Position, Scenario};
use crate::signal::{gen_flat_psk, gen_white, noise_variance_for_snr, synthesize_observations, ObservationSet, TransmitSignal};
use crate::{Error, Execution, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    pub q_hat: Position,
    pub sq_err_m2: f64,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config_id: usize,
    pub trial_id: usize,
    pub truth: Position,
    pub noise_variance: f64,
    pub estimates: Vec<EstimateRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fim: Option<FimResult>,
}

impl TrialRecord {
    pub fn estimate(&self, kind: EstimatorKind) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|e| e.estimator == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub rmse_m: f64,
    pub n_trials: usize,
    /// Mean wall-clock seconds per estimator call.
    pub mean_wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub axis: f64,
    pub n_trials: usize,
    /// `sqrt(σ_q²)` from the FIM averaged over all trials of this point.
    pub crlb_m: Option<f64>,
    pub estimators: Vec<EstimatorSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Vec<TrialRecord>>,
}

impl PointResult {
    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: RunConfig,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    /// RMSE per axis point for one estimator.
    pub fn rmse(&self, kind: EstimatorKind) -> Option<Vec<f64>> {
        self.points.iter().map(|p| p.summary(kind).map(|s| s.rmse_m)).collect()
    }

    /// Copy with every wall-clock measurement zeroed, the only part of a
    /// result that is not a function of the seed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            p.estimators.iter_mut().for_each(|s| s.mean_wall_s = 0.0);
            for t in p.trials.iter_mut().flatten() {
                t.estimates.iter_mut().for_each(|e| e.wall_s = 0.0);
            }
        }
        out
    }
}

/// Channel model and estimator prior at one axis value.
#[derive(Clone, Debug)]
pub struct PointModel {
    pub settings: PointSettings,
    pub grid: FrequencyGrid,
    truth: Truth,
    /// PDP handed to the estimators and the bound.
    pub prior: Pdp,
    pub covariance: ChannelCovariance,
    /// Expected channel energy used to set the noise level.
    pub channel_power: f64,
}

#[derive(Clone, Debug)]
enum Truth {
    Rayleigh(Pdp),
    Cluster(ClusterParams),
}

impl Truth {
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization> {
        match self {
            Truth::Rayleigh(pdp) => Ok(sample_rayleigh_channel(pdp, rng)),
            Truth::Cluster(params) => sample_cluster_channel(params, rng),
        }
    }
}

impl PointModel {
    pub fn new(cfg: &RunConfig, axis_index: usize, settings: PointSettings) -> Result<Self> {
        let grid = cfg.frequency_grid()?;
        let mut rng = stream_rng(cfg.seed, &[axis_index as u64], Stream::Pdp);
        let (truth, analytic, delta_tau_s, n_h) = match settings.channel {
            ChannelConfig::Exp { params, .. } => {
                let pdp = exp_pdp(&params)?;
                let (dt, n) = (pdp.delta_tau_s, pdp.len());
                (Truth::Rayleigh(pdp.clone()), Some(pdp), dt, n)
            }
            ChannelConfig::Cluster { params, delta_tau_s, .. } => {
                let n_h = (params.max_delay_s / delta_tau_s).ceil() as usize + 1;
                (Truth::Cluster(params), None, delta_tau_s, n_h)
            }
        };
        let prior = match (settings.channel.pdp_source(), &analytic) {
            (PdpSource::Analytic, Some(pdp)) => pdp.clone(),
            (PdpSource::Analytic, None) => {
                return Err(Error::config("cluster channels have no analytic PDP"));
            }
            (PdpSource::Empirical { count }, _) => {
                let draws = (0..count).map(|_| truth.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
                empirical_pdp(&draws, delta_tau_s, n_h)?
            }
        };
        let channel_power = analytic.as_ref().unwrap_or(&prior).total_power();
        let covariance = channel_covariance(&prior, &grid)?.compact(DEFAULT_EPS_RANK)?;
        Ok(Self {
            settings,
            grid,
            truth,
            prior,
            covariance,
            channel_power,
        })
    }
}

/// Runs one estimator on a shared observation.
#[allow(clippy::too_many_arguments)]
pub fn localize(
    kind: EstimatorKind,
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    grid: &GridSpec,
    gpm: &GpmConfig,
    execution: Execution,
    known_magnitudes: Option<&[f64]>,
) -> Result<SearchOutcome> {
    let opts = UsageOptions {
        gpm: *gpm,
        execution,
        keep_gammas: false,
    };
    match kind {
        EstimatorKind::Usage => usage_grid_search(obs, covs, stations, grid, &opts, known_magnitudes),
        EstimatorKind::UsageCwc => usage_cwc_grid_search(obs, covs, stations, grid, &opts, known_magnitudes),
        EstimatorKind::Baseline => baseline_grid_search(obs, stations, grid, execution),
    }
}

fn gen_signal<R: rand::Rng + ?Sized>(cfg: &RunConfig, rng: &mut R) -> Result<TransmitSignal> {
    match cfg.signal {
        SignalConfig::White => gen_white(cfg.k, cfg.d, rng),
        SignalConfig::Flat { order } => gen_flat_psk(cfg.k, cfg.d, order, rng),
    }
}

/// Transmitted signal and received observation of one trial.
#[derive(Clone, Debug)]
pub struct TrialData {
    pub x: TransmitSignal,
    pub obs: ObservationSet,
}

/// Draws the channels, signal and noise of one trial from its sub-seeds.
pub fn simulate_trial(
    cfg: &RunConfig,
    model: &PointModel,
    scenario: &Scenario,
    axis_index: usize,
    config_id: usize,
    trial_id: usize,
) -> Result<TrialData> {
    let path = [axis_index as u64, config_id as u64, trial_id as u64];
    let mut ch_rng = stream_rng(cfg.seed, &path, Stream::Channel);
    let mut sig_rng = stream_rng(cfg.seed, &path, Stream::Signal);
    let mut noise_rng = stream_rng(cfg.seed, &path, Stream::Noise);

    let channels = (0..scenario.num_stations())
        .map(|_| model.truth.sample(&mut ch_rng))
        .collect::<Result<Vec<_>>>()?;
    let x = gen_signal(cfg, &mut sig_rng)?;
    let sigma2 = noise_variance_for_snr(&x, model.channel_power, model.settings.snr_db)?;
    let obs = synthesize_observations(scenario, &channels, &x, &model.grid, sigma2, &mut noise_rng)?;
    Ok(TrialData { x, obs })
}

/// Geometry of one configuration at one axis value.
pub fn config_scenario(cfg: &RunConfig, model: &PointModel, axis_index: usize, config_id: usize) -> Result<Scenario> {
    let mut rng = stream_rng(cfg.seed, &[axis_index as u64, config_id as u64], Stream::Scenario);
    sample_scenario(&model.settings.geometry, &mut rng)
}

/// One trial: fresh channels, signal and noise for a fixed geometry.
pub fn run_trial(
    cfg: &RunConfig,
    model: &PointModel,
    scenario: &Scenario,
    axis_index: usize,
    config_id: usize,
    trial_id: usize,
) -> Result<TrialRecord> {
    let TrialData { x, obs } = simulate_trial(cfg, model, scenario, axis_index, config_id, trial_id)?;
    let sigma2 = obs.noise_variance;

    let covs = vec![model.covariance.clone(); scenario.num_stations()];
    let magnitudes = cfg.known_magnitudes.then(|| x.magnitudes());
    let estimates = cfg
        .estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let out = localize(
                kind,
                &obs,
                &covs,
                &scenario.stations,
                &cfg.grid,
                &cfg.gpm,
                Execution::Sequential,
                magnitudes.as_deref(),
            )?;
            let wall_s = start.elapsed().as_secs_f64();
            Ok(EstimateRecord {
                estimator: kind,
                q_hat: out.q_hat,
                sq_err_m2: out.q_hat.squared_error(&scenario.emitter),
                wall_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fim = if cfg.crlb {
        let opts = FimOptions {
            known_magnitudes: cfg.known_magnitudes,
            omitted_phase: None,
        };
        Some(fim(&x, &covs, scenario, &model.grid, sigma2, opts)?)
    } else {
        None
    };

    Ok(TrialRecord {
        config_id,
        trial_id,
        truth: scenario.emitter,
        noise_variance: sigma2,
        estimates,
        fim,
    })
}

/// All trials at one axis value.
pub fn run_point(cfg: &RunConfig, axis_index: usize) -> Result<PointResult> {
    let value = *cfg
        .sweep
        .values
        .get(axis_index)
        .ok_or_else(|| Error::IndexOutOfRange(format!("axis index {axis_index}")))?;
    let model = PointModel::new(cfg, axis_index, cfg.point(value)?)?;

    let mut sq_err = vec![0.0; cfg.estimators.len()];
    let mut wall = vec![0.0; cfg.estimators.len()];
    let mut fim_sum: Option<(DMatrix<f64>, FimResult)> = None;
    let mut records = Vec::new();
    let mut n = 0usize;

    for config_id in 0..cfg.num_configs {
        let scenario = config_scenario(cfg, &model, axis_index, config_id)?;
        let trials = cfg
            .execution
            .map_range(cfg.trials_per_config, |t| run_trial(cfg, &model, &scenario, axis_index, config_id, t));
        // Reduce in (config, trial) order so the sums do not depend on scheduling.
        for trial in trials {
            let mut trial = trial?;
            n += 1;
            for (i, e) in trial.estimates.iter().enumerate() {
                sq_err[i] += e.sq_err_m2;
                wall[i] += e.wall_s;
            }
            if let Some(f) = &trial.fim {
                match &mut fim_sum {
                    Some((acc, _)) => *acc += &f.j,
                    None => fim_sum = Some((f.j.clone(), f.clone())),
                }
            }
            if !cfg.record_fim {
                trial.fim = None;
            }
            if cfg.record_trials {
                records.push(trial);
            }
        }
    }

    let crlb_m = match fim_sum {
        Some((acc, layout)) => {
            let avg = FimResult { j: acc / n as f64, ..layout };
            let planar = model.settings.geometry.plane_height == cfg.grid.center.z;
            Some(crlb_position(&avg, planar)?.sigma_q_sq.sqrt())
        }
        None => None,
    };
    let estimators = cfg
        .estimators
        .iter()
        .enumerate()
        .map(|(i, &estimator)| EstimatorSummary {
            estimator,
            rmse_m: (sq_err[i] / n as f64).sqrt(),
            n_trials: n,
            mean_wall_s: wall[i] / n as f64,
        })
        .collect();

    Ok(PointResult {
        axis: value,
        n_trials: n,
        crlb_m,
        estimators,
        trials: cfg.record_trials.then_some(records),
    })
}

/// Runs the configured sweep. The whole configuration is validated before
/// the first trial.
pub fn run_monte_carlo(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let points = (0..cfg.sweep.values.len())
        .map(|a| run_point(cfg, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        config: cfg.clone(),
        points,
    })
}
