//! Fisher information over `(q, |x|, ∠x)` and the position Cramér–Rao bound.
//!
//! Each station contributes `Tr{R⁻¹ ∂R/∂ξ_u R⁻¹ ∂R/∂ξ_v}` with
//! `R = X C X† + σ_v² I` and `C = G H G†`. The signal derivatives are rank two
//! (`e_i a† + a e_i†`) and the position derivatives are `X E_c X†` with a
//! `K × K` core, so [`fim`] assembles `J` from a handful of `KD × K` products
//! instead of explicit `KD × KD` derivative matrices. The explicit matrices
//! ([`dr_dq`], [`dr_dmag`], [`dr_dphase`]) are still exposed for checking.
//!
//! Parameter layout: `[q_x, q_y, q_z, |x_0| .. |x_{KD-1}|, ∠x_i for i ≠ ref]`,
//! where the reference phase (by default `KD - 1`) is the gauge and is left
//! out. With known magnitudes the magnitude rows and columns are dropped.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, ChannelCovariance, FrequencyGrid};
use crate::scenario::{toa, Position, Scenario, SPEED_OF_LIGHT};
use crate::signal::TransmitSignal;
use crate::{CMatrix, CVector, Complex64, Error, Result};

const J: Complex64 = Complex64::new(0.0, 1.0);

fn check_inputs(x: &TransmitSignal, cov: &ChannelCovariance, grid: &FrequencyGrid) -> Result<()> {
    if x.k != grid.k || cov.k() != grid.k {
        return Err(Error::validation(format!(
            "dimension mismatch: signal K={}, covariance K={}, grid K={}",
            x.k,
            cov.k(),
            grid.k
        )));
    }
    Ok(())
}

fn check_noise(noise_variance: f64) -> Result<()> {
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::validation("noise variance must be positive"));
    }
    Ok(())
}

/// The `KD × K` stack of per-window diagonal matrices of `x`.
pub fn signal_matrix(x: &TransmitSignal) -> CMatrix {
    let mut m = CMatrix::zeros(x.k * x.d, x.k);
    for (i, xi) in x.x.iter().enumerate() {
        m[(i, i % x.k)] = *xi;
    }
    m
}

/// `G H G†` for the LOS delay from `station` to `q`.
fn delay_corrected(cov: &ChannelCovariance, q: &Position, station: &Position, grid: &FrequencyGrid) -> CMatrix {
    let g = steering_vector(toa(q, station), grid);
    CMatrix::from_fn(grid.k, grid.k, |k, l| g[k] * cov.h[(k, l)] * g[l].conj())
}

/// `X C X†` entrywise for a `K × K` core `C`.
fn sandwich(x: &[Complex64], k: usize, c: &CMatrix) -> CMatrix {
    let n = x.len();
    CMatrix::from_fn(n, n, |i, j| x[i] * c[(i % k, j % k)] * x[j].conj())
}

/// `R = X G H G† X† + σ_v² I`.
pub fn covariance_r(
    x: &TransmitSignal,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
    noise_variance: f64,
) -> Result<CMatrix> {
    check_inputs(x, cov, grid)?;
    let c = delay_corrected(cov, q, station, grid);
    let mut r = sandwich(&x.x, grid.k, &c);
    for i in 0..r.nrows() {
        r[(i, i)] += noise_variance;
    }
    Ok(r)
}

/// `R⁻¹ = σ⁻² I − σ⁻⁴ V (I + σ⁻² V†V)⁻¹ V†` with `V = X G U`.
pub fn woodbury_inverse(
    x: &TransmitSignal,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
    noise_variance: f64,
) -> Result<CMatrix> {
    check_inputs(x, cov, grid)?;
    check_noise(noise_variance)?;
    let g = steering_vector(toa(q, station), grid);
    Ok(woodbury_core(&x.x, grid.k, &cov.u, &g, noise_variance))
}

fn woodbury_core(x: &[Complex64], k: usize, u: &CMatrix, g: &CVector, noise_variance: f64) -> CMatrix {
    let n = x.len();
    let r = u.ncols();
    let v = CMatrix::from_fn(n, r, |i, c| x[i] * g[i % k] * u[(i % k, c)]);
    let inv_s2 = 1.0 / noise_variance;
    let mut b = v.adjoint() * &v;
    b.scale_mut(inv_s2);
    for c in 0..r {
        b[(c, c)] += Complex64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(b).expect("identity plus a Gram matrix is positive definite");
    let z = chol.solve(&v.adjoint());
    let mut s = &v * z;
    s.scale_mut(-inv_s2 * inv_s2);
    for i in 0..n {
        s[(i, i)] += inv_s2;
    }
    (&s + s.adjoint()).scale(0.5)
}

/// `ln|R| = KD ln σ² + ln|I + σ⁻² U† X†X U|`; independent of the emitter
/// position because `G` is diagonal and unit-modulus.
pub fn log_det_r(x: &TransmitSignal, cov: &ChannelCovariance, noise_variance: f64) -> Result<f64> {
    if x.k != cov.k() {
        return Err(Error::validation("signal and covariance disagree on K"));
    }
    check_noise(noise_variance)?;
    let k = x.k;
    let mut power = vec![0.0; k];
    for (i, xi) in x.x.iter().enumerate() {
        power[i % k] += xi.norm_sqr();
    }
    let r = cov.rank();
    let mut b = CMatrix::from_fn(r, r, |a, c| {
        (0..k).map(|kk| cov.u[(kk, a)].conj() * power[kk] * cov.u[(kk, c)]).sum::<Complex64>()
            / noise_variance
    });
    for c in 0..r {
        b[(c, c)] += Complex64::new(1.0, 0.0);
    }
    let chol = Cholesky::new(b).expect("identity plus a Gram matrix is positive definite");
    let l = chol.l();
    let bracket: f64 = (0..r).map(|c| 2.0 * l[(c, c)].re.ln()).sum();
    Ok(x.x.len() as f64 * noise_variance.ln() + bracket)
}

/// Direction cosines `(q - p)/‖q - p‖`.
fn direction(q: &Position, station: &Position) -> Result<[f64; 3]> {
    let dist = q.distance(station);
    if dist == 0.0 {
        return Err(Error::Singular(format!("hypothesis {q:?} coincides with a station")));
    }
    let (dx, dy, dz) = q.delta(station);
    Ok([dx / dist, dy / dist, dz / dist])
}

/// `∂C/∂q_c = −jα (F C − C F)`, `α = 2π u_c / c`.
fn position_core(c: &CMatrix, freqs: &[f64], dir: f64) -> CMatrix {
    let alpha = 2.0 * std::f64::consts::PI * dir / SPEED_OF_LIGHT;
    CMatrix::from_fn(c.nrows(), c.ncols(), |k, l| -J * alpha * (freqs[k] - freqs[l]) * c[(k, l)])
}

/// `∂R/∂q_x, ∂R/∂q_y, ∂R/∂q_z`.
pub fn dr_dq(
    x: &TransmitSignal,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
) -> Result<[CMatrix; 3]> {
    check_inputs(x, cov, grid)?;
    let dir = direction(q, station)?;
    let c = delay_corrected(cov, q, station, grid);
    let freqs = grid.frequencies();
    Ok(dir.map(|u| sandwich(&x.x, grid.k, &position_core(&c, &freqs, u))))
}

fn signal_index(x: &TransmitSignal, k: usize, d: usize) -> Result<usize> {
    if k >= x.k || d >= x.d {
        return Err(Error::IndexOutOfRange(format!(
            "(k={k}, d={d}) outside K={}, D={}",
            x.k, x.d
        )));
    }
    Ok(k + x.k * d)
}

/// `e_i a† + a e_i†` with `a = s · (X C)[:, k_i]`.
fn rank_two(x: &[Complex64], k: usize, c: &CMatrix, i: usize, s: Complex64) -> CMatrix {
    let n = x.len();
    let ki = i % k;
    let a: Vec<Complex64> = (0..n).map(|j| s * x[j] * c[(ki, j % k)].conj()).collect();
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        m[(i, j)] += a[j].conj();
        m[(j, i)] += a[j];
    }
    m
}

fn phase_of(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// `∂R/∂|x^d[k]|`.
pub fn dr_dmag(
    x: &TransmitSignal,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
    k: usize,
    d: usize,
) -> Result<CMatrix> {
    check_inputs(x, cov, grid)?;
    let i = signal_index(x, k, d)?;
    let c = delay_corrected(cov, q, station, grid);
    Ok(rank_two(&x.x, grid.k, &c, i, phase_of(x.x[i]).conj()))
}

/// `∂R/∂∠x^d[k]`.
pub fn dr_dphase(
    x: &TransmitSignal,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
    k: usize,
    d: usize,
) -> Result<CMatrix> {
    check_inputs(x, cov, grid)?;
    let i = signal_index(x, k, d)?;
    let c = delay_corrected(cov, q, station, grid);
    Ok(rank_two(&x.x, grid.k, &c, i, -J * x.x[i].conj()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimOptions {
    pub known_magnitudes: bool,
    /// Phase entry held fixed as the gauge; `None` means `KD - 1`.
    pub omitted_phase: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FimResult {
    pub j: DMatrix<f64>,
    pub kd: usize,
    pub known_magnitudes: bool,
    pub omitted_phase: usize,
}

impl FimResult {
    /// Parameter names in layout order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = ["q_x", "q_y", "q_z"].iter().map(|s| s.to_string()).collect();
        if !self.known_magnitudes {
            out.extend((0..self.kd).map(|i| format!("|x[{i}]|")));
        }
        out.extend((0..self.kd).filter(|&i| i != self.omitted_phase).map(|i| format!("∠x[{i}]")));
        out
    }

    /// Entrywise mean of FIMs sharing one layout.
    pub fn average(items: &[FimResult]) -> Result<FimResult> {
        let first = items.first().ok_or_else(|| Error::validation("no FIMs to average"))?;
        let mut acc = DMatrix::<f64>::zeros(first.j.nrows(), first.j.ncols());
        for f in items {
            if (f.kd, f.known_magnitudes, f.omitted_phase) != (first.kd, first.known_magnitudes, first.omitted_phase) {
                return Err(Error::validation("FIM layouts differ"));
            }
            acc += &f.j;
        }
        acc /= items.len() as f64;
        Ok(FimResult { j: acc, ..first.clone() })
    }
}

/// Per-station structured contribution to the full-layout FIM.
#[allow(clippy::too_many_arguments)]
fn station_fim(
    x: &[Complex64],
    k: usize,
    cov: &ChannelCovariance,
    q: &Position,
    station: &Position,
    grid: &FrequencyGrid,
    noise_variance: f64,
    rank2: &[(usize, Complex64)],
    out: &mut DMatrix<f64>,
) -> Result<()> {
    let n = x.len();
    let dir = direction(q, station)?;
    let g = steering_vector(toa(q, station), grid);
    let c = CMatrix::from_fn(k, k, |a, b| g[a] * cov.h[(a, b)] * g[b].conj());
    let s = woodbury_core(x, k, &cov.u, &g, noise_variance);

    let wm = CMatrix::from_fn(n, k, |j, col| x[j] * c[(j % k, col)]);
    let pm = &s * &wm;
    let gm = wm.adjoint() * &pm;
    let xm = CMatrix::from_fn(n, k, |j, col| if j % k == col { x[j] } else { Complex64::new(0.0, 0.0) });
    let qm = &s * &xm;
    let nm = xm.adjoint() * &qm;
    let qw = qm.adjoint() * &wm;

    let freqs = grid.frequencies();
    let cores: Vec<CMatrix> = dir.iter().map(|&u| position_core(&c, &freqs, u)).collect();
    let ne: Vec<CMatrix> = cores.iter().map(|e| &nm * e).collect();
    for a in 0..3 {
        for b in a..3 {
            let tr: Complex64 = (0..k)
                .flat_map(|r| (0..k).map(move |t| (r, t)))
                .map(|(r, t)| ne[a][(r, t)] * ne[b][(t, r)])
                .sum();
            out[(a, b)] += tr.re;
            if a != b {
                out[(b, a)] += tr.re;
            }
        }
        let mc = &qm * &cores[a] * &qw;
        for (u, &(i, su)) in rank2.iter().enumerate() {
            let v = 2.0 * (su * mc[(i, i % k)]).re;
            out[(a, 3 + u)] += v;
            out[(3 + u, a)] += v;
        }
    }

    for (u, &(i, su)) in rank2.iter().enumerate() {
        let ki = i % k;
        for (v, &(l, sv)) in rank2.iter().enumerate().skip(u) {
            let kl = l % k;
            let t = su * sv * pm[(l, ki)] * pm[(i, kl)] + su.conj() * sv * gm[(ki, kl)] * s[(l, i)];
            let val = 2.0 * t.re;
            out[(3 + u, 3 + v)] += val;
            if u != v {
                out[(3 + v, 3 + u)] += val;
            }
        }
    }
    Ok(())
}

/// Fisher information of all stations at the true emitter position.
pub fn fim(
    x: &TransmitSignal,
    covs: &[ChannelCovariance],
    scenario: &Scenario,
    grid: &FrequencyGrid,
    noise_variance: f64,
    opts: FimOptions,
) -> Result<FimResult> {
    check_noise(noise_variance)?;
    if covs.len() != scenario.num_stations() {
        return Err(Error::validation("one channel covariance per station required"));
    }
    for cov in covs {
        check_inputs(x, cov, grid)?;
    }
    let kd = x.x.len();
    let omitted = opts.omitted_phase.unwrap_or(kd - 1);
    if omitted >= kd {
        return Err(Error::IndexOutOfRange(format!("omitted phase {omitted} ≥ KD={kd}")));
    }

    let mut rank2: Vec<(usize, Complex64)> = (0..kd).map(|i| (i, phase_of(x.x[i]).conj())).collect();
    rank2.extend((0..kd).filter(|&i| i != omitted).map(|i| (i, -J * x.x[i].conj())));
    let full = 3 + rank2.len();
    let mut j = DMatrix::<f64>::zeros(full, full);
    for (m, (p, cov)) in scenario.stations.iter().zip(covs).enumerate() {
        station_fim(&x.x, x.k, cov, &scenario.emitter, p, grid, noise_variance, &rank2, &mut j).map_err(
            |e| match e {
                Error::Singular(msg) => Error::Singular(format!("station {m}: {msg}")),
                other => other,
            },
        )?;
    }

    if opts.known_magnitudes {
        let keep: Vec<usize> = (0..3).chain(3 + kd..full).collect();
        j = j.select_rows(&keep).select_columns(&keep);
    }
    Ok(FimResult {
        j,
        kd,
        known_magnitudes: opts.known_magnitudes,
        omitted_phase: omitted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrlbResult {
    /// Trace of the position block of `J⁻¹`, in m².
    pub sigma_q_sq: f64,
    /// Position block of `J⁻¹` (2×2 when planar).
    pub position_cov: DMatrix<f64>,
}

/// Inverts `J` (without `q_z` when `planar`) and extracts the position block.
pub fn crlb_position(fim: &FimResult, planar: bool) -> Result<CrlbResult> {
    let labels = fim.labels();
    let keep: Vec<usize> = (0..fim.j.nrows()).filter(|&i| !(planar && i == 2)).collect();
    let sub = fim.j.select_rows(&keep).select_columns(&keep);
    let n = keep.len();

    let diag: Vec<f64> = (0..n).map(|i| sub[(i, i)]).collect();
    if let Some(i) = diag.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::RankDeficient { direction: labels[keep[i]].clone() });
    }
    let scale: Vec<f64> = diag.iter().map(|d| d.sqrt().recip()).collect();
    let scaled = DMatrix::from_fn(n, n, |a, b| {
        let v = 0.5 * (sub[(a, b)] + sub[(b, a)]);
        v * scale[a] * scale[b]
    });
    let eig = SymmetricEigen::new(scaled);
    let lmax = eig.eigenvalues.max();
    let (imin, lmin) = eig.eigenvalues.argmin();
    if !(lmin > 1e-12 * lmax) {
        let v = eig.eigenvectors.column(imin);
        let (worst, _) = v.iamax_full();
        return Err(Error::RankDeficient { direction: labels[keep[worst]].clone() });
    }

    let npos = if planar { 2 } else { 3 };
    let cov = DMatrix::from_fn(npos, npos, |a, b| {
        let s: f64 = (0..n)
            .map(|t| eig.eigenvectors[(a, t)] * eig.eigenvectors[(b, t)] / eig.eigenvalues[t])
            .sum();
        s * scale[a] * scale[b]
    });
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(CrlbResult {
        sigma_q_sq: cov.trace(),
        position_cov: cov,
    })
}
