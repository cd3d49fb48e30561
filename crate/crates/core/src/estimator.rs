//! The USAGE estimator.
//!
//! With `x = Γ̂γ` and a Gaussian channel prior, the per-station likelihood term
//! that depends on the hypothesis `q` is the quadratic form
//!
//! ```text
//! a_m = σ⁻⁴ γ*† Γ̂ Y_m† G_m U_m B_m⁻¹ U_m† G_m† Y_m Γ̂ γ*,
//! B_m = I + σ⁻² U_m† Γ̂² U_m,
//! ```
//!
//! where `Γ̂²` inside the bracket is the `K × K` per-bin energy `X†X`. Because
//! `G_m` is diagonal and unit-modulus, `B_m` does not depend on `q`, so the
//! kernel `W_m = σ⁻⁴ U_m B_m⁻¹ U_m†` is formed once per observation. For a
//! hypothesis the matrix `A(q)` then reduces to
//!
//! ```text
//! A[i, j] = Σ_m conj(t_mi) W_m[k_i, k_j] t_mj,   t_mi = Γ̂_i y_m[i] conj(g_m[k_i]),
//! ```
//!
//! and GPM applies it in that factored form, or as a dense matrix when `KD`
//! is small enough that a dense product is cheaper. `A` acts on `γ*`; the phases
//! reported in [`UsageResult`] are those of `x` itself.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::channel::{phasor, ChannelCovariance};
use crate::gpm::{gpm_solve_op, GpmConfig, GpmResult, HermitianOperator};
use crate::scenario::{toa, Position};
use crate::signal::ObservationSet;
use crate::{CMatrix, CVector, Complex64, Error, Execution, Result};

/// Diagonal of `Γ̂`, one nonnegative magnitude per sample `i = k + K d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeEstimate {
    pub gamma_hat_diag: Vec<f64>,
}

impl MagnitudeEstimate {
    pub fn new(gamma_hat_diag: Vec<f64>) -> Result<Self> {
        if gamma_hat_diag.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::validation("magnitudes must be finite and non-negative"));
        }
        Ok(Self { gamma_hat_diag })
    }
}

/// `|x̂^d[k]| = sqrt((1/M) Σ_m |y_m^d[k]|² / H_m[k,k])`.
pub fn estimate_magnitudes(obs: &ObservationSet, covs: &[ChannelCovariance]) -> Result<MagnitudeEstimate> {
    check_covs(obs, covs)?;
    let k = obs.k();
    let mut acc = vec![0.0; obs.kd()];
    for (m, (y, cov)) in obs.y.iter().zip(covs).enumerate() {
        for kk in 0..k {
            if !(cov.h[(kk, kk)].re > 0.0) {
                return Err(Error::DegenerateChannel(format!(
                    "station {m} has zero channel power at bin {kk}"
                )));
            }
        }
        for (i, yi) in y.iter().enumerate() {
            acc[i] += yi.norm_sqr() / cov.h[(i % k, i % k)].re;
        }
    }
    let inv_m = 1.0 / obs.num_stations() as f64;
    Ok(MagnitudeEstimate {
        gamma_hat_diag: acc.into_iter().map(|a| (a * inv_m).sqrt()).collect(),
    })
}

fn check_covs(obs: &ObservationSet, covs: &[ChannelCovariance]) -> Result<()> {
    obs.validate()?;
    if covs.len() != obs.num_stations() {
        return Err(Error::validation(format!(
            "{} covariances for {} stations",
            covs.len(),
            obs.num_stations()
        )));
    }
    if let Some(c) = covs.iter().find(|c| c.k() != obs.k() || c.u.nrows() != obs.k()) {
        return Err(Error::validation(format!("covariance has K={}, observations K={}", c.k(), obs.k())));
    }
    Ok(())
}

/// Nonempty list of position hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    positions: Vec<Position>,
}

impl CandidateSet {
    pub fn new(positions: Vec<Position>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(Self { positions })
    }

    /// Square grid in the plane `z = center.z`, nodes at `center + (i, j)·step`
    /// for `|i|, |j| ≤ half_extent / step`, `x` varying fastest.
    pub fn grid_2d(center: Position, half_extent: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && half_extent >= 0.0 && step.is_finite() && half_extent.is_finite()) {
            return Err(Error::config(format!("invalid grid extent {half_extent} / step {step}")));
        }
        let n = (half_extent / step + 1e-9).floor() as i64;
        let positions = (-n..=n)
            .flat_map(|j| {
                (-n..=n).map(move |i| {
                    Position::new(center.x + i as f64 * step, center.y + j as f64 * step, center.z)
                })
            })
            .collect();
        Self::new(positions)
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Index of the largest finite cost, first one on ties.
pub fn argmax_first(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b| *c > costs[b]) {
            best = Some(i);
        }
    }
    best
}

/// Hypothesis-independent part of the USAGE cost for one observation.
#[derive(Clone, Debug)]
pub struct UsageModel {
    k: usize,
    kd: usize,
    freqs: Vec<f64>,
    stations: Vec<Position>,
    /// `σ⁻⁴ U B⁻¹ U†` per station.
    kernels: Vec<CMatrix>,
    /// `Γ̂_i y_m[i]` per station.
    weighted: Vec<Vec<Complex64>>,
}

impl UsageModel {
    pub fn new(
        obs: &ObservationSet,
        covs: &[ChannelCovariance],
        stations: &[Position],
        magnitudes: &MagnitudeEstimate,
    ) -> Result<Self> {
        check_covs(obs, covs)?;
        if stations.len() != obs.num_stations() {
            return Err(Error::validation("one position per station required"));
        }
        let sigma2 = obs.noise_variance;
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::validation("USAGE needs a positive noise variance"));
        }
        let (k, kd) = (obs.k(), obs.kd());
        if magnitudes.gamma_hat_diag.len() != kd {
            return Err(Error::validation(format!(
                "{} magnitudes for K·D = {kd}",
                magnitudes.gamma_hat_diag.len()
            )));
        }
        let gamma = &magnitudes.gamma_hat_diag;
        let mut energy = vec![0.0; k];
        for (i, g) in gamma.iter().enumerate() {
            energy[i % k] += g * g;
        }

        let kernels = covs
            .iter()
            .map(|cov| {
                let u = &cov.u;
                let r = u.ncols();
                let mut b = CMatrix::from_fn(r, r, |a, c| {
                    (0..k).map(|kk| u[(kk, a)].conj() * energy[kk] * u[(kk, c)]).sum::<Complex64>() / sigma2
                });
                for c in 0..r {
                    b[(c, c)] += Complex64::new(1.0, 0.0);
                }
                let chol = Cholesky::new(b).expect("identity plus a Gram matrix is positive definite");
                let mut w = u * chol.solve(&u.adjoint());
                w.scale_mut(1.0 / (sigma2 * sigma2));
                (&w + w.adjoint()).scale(0.5)
            })
            .collect();
        let weighted = obs
            .y
            .iter()
            .map(|y| y.iter().zip(gamma).map(|(yi, g)| yi * *g).collect())
            .collect();

        Ok(Self {
            k,
            kd,
            freqs: obs.grid.frequencies(),
            stations: stations.to_vec(),
            kernels,
            weighted,
        })
    }

    pub fn dim(&self) -> usize {
        self.kd
    }

    /// `A(q)` in factored form.
    pub fn operator(&self, q: &Position) -> UsageOperator<'_> {
        let t = self
            .stations
            .iter()
            .zip(&self.weighted)
            .map(|(p, s)| {
                let tau = toa(q, p);
                let g_conj: Vec<Complex64> = self.freqs.iter().map(|&f| phasor(f, tau).conj()).collect();
                s.iter().enumerate().map(|(i, si)| si * g_conj[i % self.k]).collect()
            })
            .collect();
        UsageOperator { model: self, t }
    }

    /// Dense `A(q)`.
    pub fn cost_matrix(&self, q: &Position) -> CMatrix {
        let op = self.operator(q);
        let k = self.k;
        let n = self.kd;
        let mut a = CMatrix::zeros(n, n);
        for (t, w) in op.t.iter().zip(&self.kernels) {
            for (j, tj) in t.iter().enumerate() {
                let wcol = w.column(j % k);
                for (i, (aij, ti)) in a.column_mut(j).iter_mut().zip(t).enumerate() {
                    *aij += ti.conj() * wcol[i % k] * tj;
                }
            }
        }
        a
    }

    /// Whether materializing `A(q)` makes a matrix-vector product cheaper
    /// than the factored form.
    fn prefers_dense(&self) -> bool {
        let (k, n) = (self.k, self.kd);
        n * n <= self.kernels.len() * (k * k + 2 * n)
    }

    /// `max_γ γ*†A(q)γ*` by GPM. The returned `gamma` holds the phases of `x`.
    pub fn cost(&self, q: &Position, gpm: &GpmConfig) -> GpmResult {
        let mut out = if self.prefers_dense() {
            gpm_solve_op(&self.cost_matrix(q), gpm)
        } else {
            gpm_solve_op(&self.operator(q), gpm)
        };
        for g in &mut out.gamma {
            *g = g.conj();
        }
        out
    }

    pub fn evaluate(&self, candidates: &CandidateSet, gpm: &GpmConfig, exec: Execution) -> Vec<GpmResult> {
        exec.map(candidates.positions(), |q| self.cost(q, gpm))
    }
}

/// `A(q)` for one hypothesis, never materialized.
pub struct UsageOperator<'a> {
    model: &'a UsageModel,
    t: Vec<Vec<Complex64>>,
}

impl HermitianOperator for UsageOperator<'_> {
    fn dim(&self) -> usize {
        self.model.kd
    }

    fn apply(&self, x: &CVector, out: &mut CVector) {
        let k = self.model.k;
        let zero = Complex64::new(0.0, 0.0);
        out.fill(zero);
        let x = x.as_slice();
        let out = out.as_mut_slice();
        let mut z = vec![zero; k];
        let mut w = vec![zero; k];
        for (t, kern) in self.t.iter().zip(&self.model.kernels) {
            z.fill(zero);
            for (tc, xc) in t.chunks_exact(k).zip(x.chunks_exact(k)) {
                for ((zi, ti), xi) in z.iter_mut().zip(tc).zip(xc) {
                    *zi += ti * xi;
                }
            }
            // kernels are Hermitian, so column c of the stored matrix is row c conjugated
            for (wr, col) in w.iter_mut().zip(kern.column_iter()) {
                *wr = col.iter().zip(&z).fold(zero, |acc, (a, b)| acc + a.conj() * b);
            }
            for (tc, oc) in t.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
                for ((oi, ti), wi) in oc.iter_mut().zip(tc).zip(&w) {
                    *oi += ti.conj() * wi;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let k = self.model.k;
        let mut d = vec![0.0; self.model.kd];
        for (t, kern) in self.t.iter().zip(&self.model.kernels) {
            for (i, ti) in t.iter().enumerate() {
                d[i] += ti.norm_sqr() * kern[(i % k, i % k)].re;
            }
        }
        d
    }
}

/// Dense `A(q)` from scratch.
pub fn cost_matrix_a(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    q: &Position,
    magnitudes: &MagnitudeEstimate,
) -> Result<CMatrix> {
    Ok(UsageModel::new(obs, covs, stations, magnitudes)?.cost_matrix(q))
}

/// GPM-maximized cost and the maximizing phases of `x` at one hypothesis.
pub fn cost_c1(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    q: &Position,
    magnitudes: &MagnitudeEstimate,
    gpm: &GpmConfig,
) -> Result<(f64, Vec<Complex64>)> {
    gpm.validate()?;
    let out = UsageModel::new(obs, covs, stations, magnitudes)?.cost(q, gpm);
    Ok((out.cost, out.gamma))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageOptions {
    pub gpm: GpmConfig,
    #[serde(default)]
    pub execution: Execution,
    /// Keep the maximizing phases of every candidate in the result.
    #[serde(default)]
    pub keep_gammas: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageResult {
    pub q_hat: Position,
    pub index: usize,
    pub candidates: Vec<Position>,
    pub costs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<Vec<Complex64>>>,
}

impl UsageResult {
    pub(crate) fn from_costs(candidates: &CandidateSet, results: Vec<GpmResult>, keep_gammas: bool) -> Result<Self> {
        let costs: Vec<f64> = results.iter().map(|r| r.cost).collect();
        let index = argmax_first(&costs)
            .ok_or_else(|| Error::validation("no candidate produced a finite cost"))?;
        let gammas = keep_gammas.then(|| results.into_iter().map(|r| r.gamma).collect());
        Ok(Self {
            q_hat: candidates.positions()[index],
            index,
            candidates: candidates.positions().to_vec(),
            costs,
            gammas,
        })
    }
}

/// Magnitudes from `known` when given, otherwise estimated from `obs`.
pub fn resolve_magnitudes(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    known: Option<&[f64]>,
) -> Result<MagnitudeEstimate> {
    match known {
        Some(mags) => {
            if mags.len() != obs.kd() {
                return Err(Error::validation(format!("{} known magnitudes for K·D = {}", mags.len(), obs.kd())));
            }
            MagnitudeEstimate::new(mags.to_vec())
        }
        None => estimate_magnitudes(obs, covs),
    }
}

/// Evaluates every candidate and returns the argmax.
pub fn usage_estimate(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    candidates: &CandidateSet,
    opts: &UsageOptions,
    known_magnitudes: Option<&[f64]>,
) -> Result<UsageResult> {
    opts.gpm.validate()?;
    let mags = resolve_magnitudes(obs, covs, known_magnitudes)?;
    let model = UsageModel::new(obs, covs, stations, &mags)?;
    let results = model.evaluate(candidates, &opts.gpm, opts.execution);
    UsageResult::from_costs(candidates, results, opts.keep_gammas)
}

/// Square search grid with optional local refinement.
///
/// Each refinement level re-grids around the current argmax with half-extent
/// equal to the previous step and the step divided by `refine_factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Position,
    pub half_extent: f64,
    pub step: f64,
    pub refine_levels: usize,
    pub refine_factor: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            center: Position::default(),
            half_extent: 30.0,
            step: 2.0,
            refine_levels: 1,
            refine_factor: 5.0,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.half_extent >= 0.0 && self.refine_factor > 1.0) {
            return Err(Error::config(format!("invalid search grid {self:?}")));
        }
        if !self.center.is_finite() {
            return Err(Error::config("search grid center must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub q_hat: Position,
    pub cost: f64,
    pub evaluations: usize,
}

/// Coarse-to-fine argmax of `score` over the grids described by `spec`.
pub fn grid_search<F>(spec: &GridSpec, mut score: F) -> Result<SearchOutcome>
where
    F: FnMut(&CandidateSet) -> Result<Vec<f64>>,
{
    spec.validate()?;
    let mut center = spec.center;
    let mut half = spec.half_extent;
    let mut step = spec.step;
    let mut evaluations = 0;
    let mut best = (center, f64::NEG_INFINITY);
    for level in 0..=spec.refine_levels {
        if level > 0 {
            center = best.0;
            half = step;
            step /= spec.refine_factor;
        }
        let cands = CandidateSet::grid_2d(center, half, step)?;
        let costs = score(&cands)?;
        evaluations += cands.len();
        let i = argmax_first(&costs).ok_or_else(|| Error::validation("no finite cost on search grid"))?;
        best = (cands.positions()[i], costs[i]);
    }
    Ok(SearchOutcome { q_hat: best.0, cost: best.1, evaluations })
}

/// USAGE over a refined grid.
pub fn usage_grid_search(
    obs: &ObservationSet,
    covs: &[ChannelCovariance],
    stations: &[Position],
    spec: &GridSpec,
    opts: &UsageOptions,
    known_magnitudes: Option<&[f64]>,
) -> Result<SearchOutcome> {
    opts.gpm.validate()?;
    let mags = resolve_magnitudes(obs, covs, known_magnitudes)?;
    let model = UsageModel::new(obs, covs, stations, &mags)?;
    grid_search(spec, |cands| {
        Ok(model.evaluate(cands, &opts.gpm, opts.execution).into_iter().map(|r| r.cost).collect())
    })
}
