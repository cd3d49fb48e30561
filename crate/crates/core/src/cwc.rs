//! Coherent window combining.
//!
//! The phase offset of window `d` relative to the running sum is estimated
//! jointly over stations, the window is rotated back and added:
//!
//! ```text
//! Δφ̂^d = ∠( (1/M) Σ_m y_m^d ⊙ conj(ȳ_m^{d-1}) ),   ȳ_m^d = ȳ_m^{d-1} + e^{-jΔφ̂^d} ⊙ y_m^d.
//! ```
//!
//! The result is a one-window observation set whose noise variance is taken
//! as `D σ_v²`, on which USAGE runs with dimension `K` instead of `K D`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelCovariance;
use crate::estimator::{
    grid_search, resolve_magnitudes, CandidateSet, GridSpec, SearchOutcome, UsageModel, UsageOptions, UsageResult,
};
use crate::scenario::Position;
use crate::signal::ObservationSet;
use crate::{Complex64, Error, Result};

/// Output of [`cwc_combine`]: a `D = 1` observation set plus the original
/// window count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedObservationSet {
    pub combined: ObservationSet,
    pub d_original: usize,
}

impl CombinedObservationSet {
    pub fn y_bar(&self) -> &[Vec<Complex64>] {
        &self.combined.y
    }

    pub fn effective_noise_variance(&self) -> f64 {
        self.combined.noise_variance
    }
}

/// Angle of `z`, with `angle(0) = 0`.
fn angle(z: Complex64) -> f64 {
    if z == Complex64::new(0.0, 0.0) {
        0.0
    } else {
        z.arg()
    }
}

/// Folds the `D` windows into one. `delta_phi[d][k]` is the estimated phase of
/// window `d` at bin `k` relative to the running sum; row 0 is all zeros.
pub fn cwc_combine(obs: &ObservationSet) -> Result<(CombinedObservationSet, Vec<Vec<f64>>)> {
    obs.validate()?;
    let (k, d_total, m_total) = (obs.k(), obs.d, obs.num_stations());
    let mut y_bar: Vec<Vec<Complex64>> = (0..m_total).map(|m| obs.window(m, 0).to_vec()).collect();
    let mut delta_phi = vec![vec![0.0; k]; d_total];
    let inv_m = 1.0 / m_total as f64;

    for (d, phi) in delta_phi.iter_mut().enumerate().skip(1) {
        for (kk, p) in phi.iter_mut().enumerate() {
            let corr: Complex64 = (0..m_total)
                .map(|m| obs.window(m, d)[kk] * y_bar[m][kk].conj())
                .sum::<Complex64>()
                * inv_m;
            *p = angle(corr);
        }
        let rot: Vec<Complex64> = phi.iter().map(|p| Complex64::from_polar(1.0, -p)).collect();
        for (m, acc) in y_bar.iter_mut().enumerate() {
            for ((a, y), r) in acc.iter_mut().zip(obs.window(m, d)).zip(&rot) {
                *a += r * y;
            }
        }
    }

    let combined = ObservationSet {
        y: y_bar,
        grid: obs.grid,
        d: 1,
        noise_variance: d_total as f64 * obs.noise_variance,
    };
    Ok((CombinedObservationSet { combined, d_original: d_total }, delta_phi))
}

/// Known magnitudes of the combined signal: `|x̄[k]| = Σ_d |x^d[k]|`.
pub fn fold_magnitudes(magnitudes: &[f64], k: usize, d: usize) -> Result<Vec<f64>> {
    if magnitudes.len() != k * d {
        return Err(Error::validation(format!("{} magnitudes for K·D = {}", magnitudes.len(), k * d)));
    }
    let mut out = vec![0.0; k];
    for (i, g) in magnitudes.iter().enumerate() {
        out[i % k] += g;
    }
    Ok(out)
}

fn combined_model(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    known_magnitudes: Option<&[f64]>,
) -> Result<UsageModel> {
    let (comb, _) = cwc_combine(obs)?;
    let folded = known_magnitudes.map(|g| fold_magnitudes(g, obs.k(), obs.d)).transpose()?;
    let mags = resolve_magnitudes(&comb.combined, covs, folded.as_deref())?;
    UsageModel::new(&comb.combined, covs, stations, &mags)
}

/// USAGE on the combined observations.
pub fn usage_cwc_estimate(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    candidates: &CandidateSet,
    opts: &UsageOptions,
    known_magnitudes: Option<&[f64]>,
) -> Result<UsageResult> {
    opts.gpm.validate()?;
    let model = combined_model(obs, covs, stations, known_magnitudes)?;
    let results = model.evaluate(candidates, &opts.gpm, opts.execution);
    UsageResult::from_costs(candidates, results, opts.keep_gammas)
}

/// USAGE on the combined observations over a refined grid.
pub fn usage_cwc_grid_search(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    spec: &GridSpec,
    opts: &UsageOptions,
    known_magnitudes: Option<&[f64]>,
) -> Result<SearchOutcome> {
    opts.gpm.validate()?;
    let model = combined_model(obs, covs, stations, known_magnitudes)?;
    grid_search(spec, |cands| {
        Ok(model.evaluate(cands, &opts.gpm, opts.execution).into_iter().map(|r| r.cost).collect())
    })
}
