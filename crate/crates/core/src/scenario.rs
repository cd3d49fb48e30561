//! Emitter and base-station geometry.
//!
//! Positions are 3D in meters. The benchmark places everything on a horizontal
//! plane: the emitter uniformly (in area) inside a disc, and station `m` of `M`
//! uniformly inside the annular segment `[r_min, r_max] x [2πm/M, 2π(m+1)/M)`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Propagation speed in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let (dx, dy, dz) = self.delta(other);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Componentwise `self - other`.
    pub fn delta(&self, other: &Position) -> (f64, f64, f64) {
        (self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn with_coord(mut self, axis: usize, value: f64) -> Self {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            2 => self.z = value,
            _ => panic!("axis {axis} out of range"),
        }
        self
    }

    pub fn squared_error(&self, other: &Position) -> f64 {
        let d = self.distance(other);
        d * d
    }
}

/// Line-of-sight propagation delay between `q` and `p`, in seconds.
pub fn toa(q: &Position, p: &Position) -> f64 {
    q.distance(p) / SPEED_OF_LIGHT
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub emitter: Position,
    pub stations: Vec<Position>,
}

impl Scenario {
    pub fn new(emitter: Position, stations: Vec<Position>) -> Result<Self> {
        let scenario = Self { emitter, stations };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations.len() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 stations, got {}",
                self.stations.len()
            )));
        }
        if !self.emitter.is_finite() || self.stations.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("non-finite coordinate"));
        }
        for (i, a) in self.stations.iter().enumerate() {
            if a == &self.emitter {
                return Err(Error::validation(format!("emitter coincides with station {i}")));
            }
            if self.stations[i + 1..].contains(a) {
                return Err(Error::validation(format!("station {i} is duplicated")));
            }
        }
        Ok(())
    }

    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    /// True when every station and the emitter share the same `z`.
    pub fn is_planar(&self) -> bool {
        let z = self.emitter.z;
        self.stations.iter().all(|p| p.z == z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub emitter_radius: f64,
    pub station_radius_min: f64,
    pub station_radius_max: f64,
    pub num_stations: usize,
    pub plane_height: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            emitter_radius: 25.0,
            station_radius_min: 45.0,
            station_radius_max: 55.0,
            num_stations: 6,
            plane_height: 0.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.emitter_radius > 0.0
            && self.emitter_radius < self.station_radius_min
            && self.station_radius_min < self.station_radius_max
            && self.station_radius_max.is_finite()
            && self.plane_height.is_finite();
        if !ok {
            return Err(Error::config(format!(
                "need 0 < emitter_radius < station_radius_min < station_radius_max, got {} / {} / {}",
                self.emitter_radius, self.station_radius_min, self.station_radius_max
            )));
        }
        if self.num_stations < 2 {
            return Err(Error::config("need at least 2 stations"));
        }
        Ok(())
    }
}

/// Draws one emitter/station configuration.
pub fn sample_scenario<R: Rng + ?Sized>(cfg: &GeometryConfig, rng: &mut R) -> Result<Scenario> {
    cfg.validate()?;
    let z = cfg.plane_height;

    let r = cfg.emitter_radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    let emitter = Position::new(r * theta.cos(), r * theta.sin(), z);

    let arc = 2.0 * PI / cfg.num_stations as f64;
    let span = cfg.station_radius_max - cfg.station_radius_min;
    let stations = (0..cfg.num_stations)
        .map(|m| {
            let r = cfg.station_radius_min + span * rng.random::<f64>();
            let theta = arc * (m as f64 + rng.random::<f64>());
            Position::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect();

    Scenario::new(emitter, stations)
}
