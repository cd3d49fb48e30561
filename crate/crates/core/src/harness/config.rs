//! Run configuration.

use serde::{Deserialize, Serialize};

use crate::channel::{ClusterParams, ExpPdpParams, FrequencyGrid};
use crate::estimator::GridSpec;
use crate::gpm::GpmConfig;
use crate::scenario::GeometryConfig;
use crate::{Error, Execution, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SignalConfig {
    /// Unit-variance complex Gaussian coefficients.
    White,
    /// Unit-magnitude PSK coefficients.
    Flat { order: usize },
}

/// Where the estimator's PDP prior comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PdpSource {
    /// The generating exponential profile itself (exponential channels only).
    Analytic,
    /// Sample mean over `count` independent channel draws.
    Empirical { count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChannelConfig {
    Exp {
        params: ExpPdpParams,
        pdp_source: PdpSource,
    },
    Cluster {
        params: ClusterParams,
        /// Delay grid of the empirical PDP.
        delta_tau_s: f64,
        pdp_source: PdpSource,
    },
}

impl ChannelConfig {
    pub fn pdp_source(&self) -> PdpSource {
        match self {
            ChannelConfig::Exp { pdp_source, .. } | ChannelConfig::Cluster { pdp_source, .. } => *pdp_source,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ChannelConfig::Exp { params, .. } => params.validate()?,
            ChannelConfig::Cluster {
                params,
                delta_tau_s,
                pdp_source,
            } => {
                params.validate()?;
                if !(*delta_tau_s > 0.0 && delta_tau_s.is_finite()) {
                    return Err(Error::config("cluster channel needs a positive PDP grid spacing"));
                }
                if *pdp_source == PdpSource::Analytic {
                    return Err(Error::config("cluster channels have no analytic PDP; use an empirical source"));
                }
            }
        }
        if let PdpSource::Empirical { count: 0 } = self.pdp_source() {
            return Err(Error::config("empirical PDP needs at least one realization"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Usage,
    UsageCwc,
    Baseline,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Usage => "usage",
            EstimatorKind::UsageCwc => "usage_cwc",
            EstimatorKind::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "usage" => Ok(EstimatorKind::Usage),
            "usage_cwc" | "usage-cwc" | "cwc" => Ok(EstimatorKind::UsageCwc),
            "baseline" => Ok(EstimatorKind::Baseline),
            other => Err(Error::config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// The swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// SNR in dB.
    Snr,
    /// Number of base stations.
    Stations,
    /// Exponential decay constant `μ1` in seconds, NLOS energy held fixed.
    DelaySpread,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub signal: SignalConfig,
    pub channel: ChannelConfig,
    /// Placement protocol; `num_stations` is `M` unless the stations axis is swept.
    pub geometry: GeometryConfig,
    pub grid: GridSpec,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub fs_hz: f64,
    /// SNR used when the SNR axis is not swept.
    pub snr_db: f64,
    pub sweep: Sweep,
    pub num_configs: usize,
    pub trials_per_config: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Hand the true `|x|` to USAGE and use the known-magnitude bound.
    pub known_magnitudes: bool,
    pub crlb: bool,
    pub gpm: GpmConfig,
    /// How trials are scheduled; candidates inside a trial run sequentially.
    pub execution: Execution,
    /// Keep every trial record in the result.
    pub record_trials: bool,
    /// Also keep each trial's FIM (large).
    pub record_fim: bool,
}

impl Default for RunConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            signal: SignalConfig::White,
            channel: ChannelConfig::Exp {
                params: ExpPdpParams::exp2(),
                pdp_source: PdpSource::Empirical { count: 1000 },
            },
            geometry: GeometryConfig {
                num_stations: 8,
                ..GeometryConfig::default()
            },
            grid: GridSpec::default(),
            k: 16,
            d: 10,
            fs_hz: 40e6,
            snr_db: 25.0,
            sweep: Sweep {
                axis: Axis::Snr,
                values: vec![10.0, 20.0, 30.0],
            },
            num_configs: 10,
            trials_per_config: 20,
            seed: 0,
            estimators: vec![EstimatorKind::UsageCwc, EstimatorKind::Baseline],
            known_magnitudes: false,
            crlb: true,
            gpm: GpmConfig::default(),
            execution: Execution::default(),
            record_trials: false,
            record_fim: false,
        }
    }
}

impl RunConfig {
    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.k, self.fs_hz)
    }

    pub fn trials_per_point(&self) -> usize {
        self.num_configs * self.trials_per_config
    }

    /// Checks everything that can be checked before a trial runs, including
    /// every axis value.
    pub fn validate(&self) -> Result<()> {
        self.frequency_grid()?;
        if self.d == 0 {
            return Err(Error::config("D must be at least 1"));
        }
        if let SignalConfig::Flat { order } = self.signal {
            if order < 2 || !order.is_power_of_two() {
                return Err(Error::config(format!("PSK order must be a power of two ≥ 2, got {order}")));
            }
        }
        self.channel.validate()?;
        self.geometry.validate()?;
        self.gpm.validate()?;
        self.grid.validate()?;
        if self.num_configs == 0 || self.trials_per_config == 0 {
            return Err(Error::config("need at least one configuration and one trial"));
        }
        if self.estimators.is_empty() {
            return Err(Error::config("no estimator selected"));
        }
        let mut sorted = self.estimators.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.estimators.len() {
            return Err(Error::config("estimator listed twice"));
        }

        let center = self.grid.center;
        let offset = center.x.hypot(center.y);
        if offset + self.geometry.emitter_radius > self.grid.half_extent {
            return Err(Error::config(format!(
                "search grid (half extent {} m around ({}, {})) does not cover the emitter disc of radius {} m",
                self.grid.half_extent, center.x, center.y, self.geometry.emitter_radius
            )));
        }
        if self.grid.center.z != self.geometry.plane_height {
            return Err(Error::config("search grid must lie in the placement plane"));
        }

        if self.sweep.values.is_empty() {
            return Err(Error::config("sweep has no axis values"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("SNR must be finite"));
        }
        for &v in &self.sweep.values {
            self.point(v)?;
        }
        Ok(())
    }

    /// Settings at one axis value.
    pub fn point(&self, value: f64) -> Result<PointSettings> {
        let mut out = PointSettings {
            snr_db: self.snr_db,
            geometry: self.geometry.clone(),
            channel: self.channel,
        };
        match self.sweep.axis {
            Axis::Snr => {
                if !value.is_finite() {
                    return Err(Error::config(format!("SNR axis value {value} is not finite")));
                }
                out.snr_db = value;
            }
            Axis::Stations => {
                if !(value >= 2.0 && value.fract() == 0.0 && value <= 1e6) {
                    return Err(Error::config(format!("station count {value} is not an integer ≥ 2")));
                }
                out.geometry.num_stations = value as usize;
                out.geometry.validate()?;
            }
            Axis::DelaySpread => match &mut out.channel {
                ChannelConfig::Exp { params, .. } => {
                    if !(value > 0.0 && value.is_finite()) {
                        return Err(Error::config(format!("delay spread {value} s must be positive")));
                    }
                    *params = params.with_delay_spread(value);
                    params.validate()?;
                }
                ChannelConfig::Cluster { .. } => {
                    return Err(Error::config("delay-spread sweeps need an exponential channel"));
                }
            },
        }
        Ok(out)
    }
}

/// The parts of a [`RunConfig`] that depend on the axis value.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSettings {
    pub snr_db: f64,
    pub geometry: GeometryConfig,
    pub channel: ChannelConfig,
}
