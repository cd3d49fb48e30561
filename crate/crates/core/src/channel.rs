//! Multipath channels and their frequency-domain covariance.
//!
//! A channel realization is a list of taps with LOS-relative delays (first tap
//! at delay 0). Its power-delay profile (PDP) on a grid of spacing `Δτ`
//! determines the `K x K` covariance
//!
//! ```text
//! H = Σ_n σ²_n g(nΔτ) g(nΔτ)†,     g(τ)[k] = exp(-j 2π f_k τ),  f_k = k Fs / K
//! ```
//!
//! which is factored as `H = U U†`, either on the delay grid (`U = 𝒢 Λ^½`) or
//! through a rank-truncated eigendecomposition.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Default relative eigenvalue floor for [`eigen_factor`].
pub const DEFAULT_EPS_RANK: f64 = 1e-10;

/// `K` DFT bins at `f_k = k Fs / K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub k: usize,
    pub fs_hz: f64,
}

impl FrequencyGrid {
    pub fn new(k: usize, fs_hz: f64) -> Result<Self> {
        let grid = Self { k, fs_hz };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.fs_hz > 0.0 && self.fs_hz.is_finite()) {
            return Err(Error::config(format!(
                "frequency grid needs K >= 1 and Fs > 0, got K={} Fs={}",
                self.k, self.fs_hz
            )));
        }
        Ok(())
    }

    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.fs_hz / self.k as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.k).map(|k| self.freq(k)).collect()
    }

    /// Window duration `K / Fs`, the period of every steering vector.
    pub fn window_s(&self) -> f64 {
        self.k as f64 / self.fs_hz
    }
}

/// `exp(-j 2π f τ)` with the cycle count reduced before the trig call.
pub(crate) fn phasor(f: f64, tau: f64) -> Complex64 {
    let cycles = f * tau;
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, -2.0 * PI * frac)
}

/// Delay steering vector `g_τ`.
pub fn steering_vector(tau: f64, grid: &FrequencyGrid) -> CVector {
    CVector::from_iterator(grid.k, (0..grid.k).map(|k| phasor(grid.freq(k), tau)))
}

/// Exponentially decaying PDP with a separate LOS tap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpPdpParams {
    pub mu0_los: f64,
    pub mu0_nlos: f64,
    pub mu1_s: f64,
    pub delta_tau_s: f64,
    pub num_paths: usize,
}

impl ExpPdpParams {
    /// The "Exp1" profile: strong LOS, 100 ns span.
    pub fn exp1() -> Self {
        Self {
            mu0_los: 0.45,
            mu0_nlos: 0.1,
            mu1_s: 20e-9,
            delta_tau_s: 1e-9,
            num_paths: 100,
        }
    }

    /// The "Exp2" profile: weak LOS, 300 ns span.
    pub fn exp2() -> Self {
        Self {
            mu0_los: 0.098,
            mu0_nlos: 0.13,
            mu1_s: 30e-9,
            delta_tau_s: 1e-9,
            num_paths: 300,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu0_los >= 0.0
            && self.mu0_nlos >= 0.0
            && (self.mu0_los > 0.0 || self.mu0_nlos > 0.0)
            && self.mu1_s > 0.0
            && self.delta_tau_s > 0.0
            && self.num_paths >= 1
            && self.mu0_los.is_finite()
            && self.mu0_nlos.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid exponential PDP parameters {self:?}")))
        }
    }

    /// `Σ_{l=1}^{L-1} exp(-l Δτ / μ1)`, the NLOS energy per unit `mu0_nlos`.
    pub fn nlos_energy_factor(&self) -> f64 {
        (1..self.num_paths)
            .map(|l| (-(l as f64) * self.delta_tau_s / self.mu1_s).exp())
            .sum()
    }

    /// Same NLOS energy, different decay constant.
    pub fn with_delay_spread(&self, mu1_s: f64) -> Self {
        let energy = self.mu0_nlos * self.nlos_energy_factor();
        let mut out = Self { mu1_s, ..*self };
        let factor = out.nlos_energy_factor();
        out.mu0_nlos = if factor > 0.0 { energy / factor } else { 0.0 };
        out
    }
}

/// Power-delay profile: tap `n` sits at delay `n Δτ` with variance `σ²_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pdp {
    pub delta_tau_s: f64,
    pub variances: Vec<f64>,
}

impl Pdp {
    pub fn new(delta_tau_s: f64, variances: Vec<f64>) -> Result<Self> {
        let pdp = Self {
            delta_tau_s,
            variances,
        };
        pdp.validate()?;
        Ok(pdp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tau_s > 0.0 && self.delta_tau_s.is_finite()) {
            return Err(Error::config("PDP grid spacing must be positive"));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config("PDP variances must be finite and non-negative"));
        }
        if !self.variances.iter().any(|v| *v > 0.0) {
            return Err(Error::DegenerateChannel("PDP has no positive tap".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    /// Expected channel energy `P_h = Σ σ²_n`.
    pub fn total_power(&self) -> f64 {
        self.variances.iter().sum()
    }
}

pub fn exp_pdp(params: &ExpPdpParams) -> Result<Pdp> {
    params.validate()?;
    let variances = (0..params.num_paths)
        .map(|l| {
            if l == 0 {
                params.mu0_los
            } else {
                params.mu0_nlos * (-(l as f64) * params.delta_tau_s / params.mu1_s).exp()
            }
        })
        .collect();
    Pdp::new(params.delta_tau_s, variances)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub delay_s: f64,
    pub gain: Complex64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
}

impl ChannelRealization {
    pub fn validate(&self) -> Result<()> {
        if self.taps.windows(2).any(|w| w[1].delay_s < w[0].delay_s) {
            return Err(Error::validation("tap delays must be nondecreasing"));
        }
        if self.taps.iter().any(|t| {
            !(t.delay_s >= 0.0 && t.delay_s.is_finite() && t.gain.re.is_finite() && t.gain.im.is_finite())
        }) {
            return Err(Error::validation("tap delays and gains must be finite, delays >= 0"));
        }
        Ok(())
    }

    /// `η[k] = Σ_l gain_l exp(-j 2π f_k τ'_l)`.
    pub fn frequency_response(&self, grid: &FrequencyGrid) -> Vec<Complex64> {
        (0..grid.k)
            .map(|k| {
                let f = grid.freq(k);
                self.taps.iter().map(|t| t.gain * phasor(f, t.delay_s)).sum()
            })
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }
}

/// Circularly-symmetric complex Gaussian with `E|z|² = variance`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Independent Rayleigh taps on the PDP grid.
pub fn sample_rayleigh_channel<R: Rng + ?Sized>(pdp: &Pdp, rng: &mut R) -> ChannelRealization {
    let taps = pdp
        .variances
        .iter()
        .enumerate()
        .map(|(n, &var)| {
            // draw unconditionally so the stream layout does not depend on zeros
            let g = complex_gaussian(rng, 1.0);
            Tap {
                delay_s: n as f64 * pdp.delta_tau_s,
                gain: if var > 0.0 { g * var.sqrt() } else { Complex64::new(0.0, 0.0) },
            }
        })
        .collect();
    ChannelRealization { taps }
}

/// Clustered multipath in the Saleh–Valenzuela style: cluster and ray arrivals
/// are Poisson processes, expected ray power decays exponentially in both the
/// cluster delay and the intra-cluster delay, gains are Rayleigh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    /// Cluster arrival rate (1/s). Zero gives a single cluster.
    pub cluster_rate_hz: f64,
    /// Intra-cluster ray arrival rate (1/s). Zero gives one ray per cluster.
    pub ray_rate_hz: f64,
    /// Cluster power decay constant (s); `inf` disables the decay.
    pub cluster_decay_s: f64,
    /// Ray power decay constant (s); `inf` disables the decay.
    pub ray_decay_s: f64,
    /// Arrivals at or beyond this excess delay are dropped.
    pub max_delay_s: f64,
    /// Expected power of the first ray.
    pub power: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            cluster_rate_hz: 1.0 / 40e-9,
            ray_rate_hz: 1.0 / 2e-9,
            cluster_decay_s: 40e-9,
            ray_decay_s: 10e-9,
            max_delay_s: 300e-9,
            power: 1.0,
        }
    }
}

impl ClusterParams {
    const MAX_EXPECTED_TAPS: f64 = 1e6;

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
        let decay_ok = |d: f64| d > 0.0 && !d.is_nan();
        if !rate_ok(self.cluster_rate_hz) || !rate_ok(self.ray_rate_hz) {
            return Err(Error::config("cluster/ray rates must be finite and >= 0"));
        }
        if !decay_ok(self.cluster_decay_s) || !decay_ok(self.ray_decay_s) {
            return Err(Error::config("decay constants must be positive"));
        }
        if !(self.max_delay_s > 0.0 && self.max_delay_s.is_finite()) {
            return Err(Error::config("max delay must be positive and finite"));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::config("first-ray power must be positive"));
        }
        let expected =
            (1.0 + self.cluster_rate_hz * self.max_delay_s) * (1.0 + self.ray_rate_hz * self.max_delay_s);
        if expected > Self::MAX_EXPECTED_TAPS {
            return Err(Error::config(format!(
                "rates imply ~{expected:.0} taps per realization"
            )));
        }
        Ok(())
    }

    /// Expected power of a ray at cluster delay `t` and intra-cluster delay `tau`.
    pub fn expected_power(&self, t: f64, tau: f64) -> f64 {
        self.power * (-t / self.cluster_decay_s).exp() * (-tau / self.ray_decay_s).exp()
    }
}

fn poisson_arrivals<R: Rng + ?Sized>(rate: f64, start: f64, end: f64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![start];
    if rate > 0.0 {
        let gap = Exp::new(rate).expect("validated rate");
        let mut t = start;
        loop {
            t += gap.sample(rng);
            if t >= end {
                break;
            }
            out.push(t);
        }
    }
    out
}

pub fn sample_cluster_channel<R: Rng + ?Sized>(
    params: &ClusterParams,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    let mut taps = Vec::new();
    for t in poisson_arrivals(params.cluster_rate_hz, 0.0, params.max_delay_s, rng) {
        for delay in poisson_arrivals(params.ray_rate_hz, t, params.max_delay_s, rng) {
            let power = params.expected_power(t, delay - t);
            taps.push(Tap {
                delay_s: delay,
                gain: complex_gaussian(rng, power),
            });
        }
    }
    taps.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));
    Ok(ChannelRealization { taps })
}

/// Sample-mean PDP: tap energy binned to the nearest grid cell and averaged
/// over realizations.
pub fn empirical_pdp(
    realizations: &[ChannelRealization],
    delta_tau_s: f64,
    n_h: usize,
) -> Result<Pdp> {
    if realizations.is_empty() {
        return Err(Error::validation("need at least one realization"));
    }
    if !(delta_tau_s > 0.0) || n_h == 0 {
        return Err(Error::config("PDP grid needs Δτ > 0 and at least one cell"));
    }
    let mut acc = vec![0.0; n_h];
    for real in realizations {
        for tap in &real.taps {
            let cell = (tap.delay_s / delta_tau_s).round();
            if !(cell >= 0.0 && cell < n_h as f64) {
                return Err(Error::DelayOutOfRange {
                    delay_s: tap.delay_s,
                    delta_tau_s,
                    cells: n_h,
                });
            }
            acc[cell as usize] += tap.gain.norm_sqr();
        }
    }
    let scale = 1.0 / realizations.len() as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Pdp::new(delta_tau_s, acc)
}

/// `H` together with a factor `U` such that `H = U U†`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCovariance {
    pub h: CMatrix,
    pub u: CMatrix,
}

impl ChannelCovariance {
    pub fn k(&self) -> usize {
        self.h.nrows()
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// Replaces a grid factor wider than `K` by a rank-truncated eigen factor.
    pub fn compact(self, eps_rank: f64) -> Result<Self> {
        if self.u.ncols() <= self.k() {
            return Ok(self);
        }
        let u = eigen_factor(&self.h, eps_rank)?;
        Ok(Self { h: self.h, u })
    }

    pub fn check_invariants(&self) -> Result<()> {
        let h_norm = self.h.norm();
        let asym = (&self.h - self.h.adjoint()).norm();
        if asym > 1e-10 * h_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::validation(format!("H not Hermitian (‖H-H†‖={asym:e})")));
        }
        let eig = SymmetricEigen::new(self.h.clone()).eigenvalues;
        let trace: f64 = self.h.diagonal().iter().map(|z| z.re).sum();
        if eig.iter().any(|&l| l < -1e-10 * trace) {
            return Err(Error::validation("H has a negative eigenvalue"));
        }
        let resid = (&self.h - &self.u * self.u.adjoint()).norm();
        if resid > 1e-8 * h_norm {
            return Err(Error::validation(format!("‖H - UU†‖ = {resid:e}")));
        }
        Ok(())
    }
}

/// Grid-factor covariance: `U = 𝒢 Λ^½` over taps with positive variance.
pub fn channel_covariance(pdp: &Pdp, grid: &FrequencyGrid) -> Result<ChannelCovariance> {
    pdp.validate()?;
    grid.validate()?;
    let active: Vec<(usize, f64)> = pdp
        .variances
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, v)| *v > 0.0)
        .collect();
    let mut u = CMatrix::zeros(grid.k, active.len());
    for (col, &(n, var)) in active.iter().enumerate() {
        let tau = n as f64 * pdp.delta_tau_s;
        let amp = var.sqrt();
        for k in 0..grid.k {
            u[(k, col)] = phasor(grid.freq(k), tau) * amp;
        }
    }
    let h = &u * u.adjoint();
    let h = (&h + h.adjoint()).scale(0.5);
    Ok(ChannelCovariance { h, u })
}

/// `U = V D^½` over eigenpairs with `λ > eps_rank · λ_max`, largest first.
pub fn eigen_factor(h: &CMatrix, eps_rank: f64) -> Result<CMatrix> {
    if !h.is_square() {
        return Err(Error::validation("covariance must be square"));
    }
    let norm = h.norm();
    let asym = (h - h.adjoint()).norm();
    if asym > 1e-10 * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::validation(format!(
            "matrix is not Hermitian (‖H-H†‖_F = {asym:e})"
        )));
    }
    let k = h.nrows();
    let eig = SymmetricEigen::new(h.clone());
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..k)
        .filter(|&i| eig.eigenvalues[i] > eps_rank * lambda_max && eig.eigenvalues[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut u = CMatrix::zeros(k, order.len());
    for (col, &i) in order.iter().enumerate() {
        let s = eig.eigenvalues[i].sqrt();
        u.set_column(col, &(eig.eigenvectors.column(i) * Complex64::new(s, 0.0)));
    }
    Ok(u)
}
