//! Generalized power method for `max γ†Aγ` over unit-modulus vectors.
//!
//! Starting from the phases of the leading eigenvector of `A`, iterate
//! `γ ← exp(j∠((I + βA)γ))` until the relative change of the cost falls below
//! `rel_tol`. For PSD `A` and `β > 0` the cost sequence is non-decreasing.
//!
//! The power iterations can creep along a flat ridge for tens of thousands of
//! steps before the relative change drops below `rel_tol`. When
//! `newton_steps > 0` the power iterations stop at the looser
//! `newton_switch_tol` and the iterate is polished to `rel_tol` by damped
//! Newton steps on the phases, each accepted only if it raises the cost, so the sequence stays
//! monotone and ends at the local maximum the power iterations were
//! approaching.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Complex64, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpmConfig {
    pub beta: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Convergence tolerance of the power iteration used for initialization.
    pub power_tol: f64,
    pub power_max_iters: usize,
    /// Keep the per-iteration cost sequence in [`GpmResult::trace`].
    #[serde(default)]
    pub record_trace: bool,
    /// Cap on Newton polishing steps after the power iterations; 0 disables.
    #[serde(default = "default_newton_steps")]
    pub newton_steps: usize,
    /// Relative cost change at which the power iterations hand over to Newton.
    #[serde(default = "default_newton_switch_tol")]
    pub newton_switch_tol: f64,
}

fn default_newton_switch_tol() -> f64 {
    GpmConfig::default().newton_switch_tol
}

fn default_newton_steps() -> usize {
    GpmConfig::default().newton_steps
}

impl Default for GpmConfig {
    fn default() -> Self {
        Self {
            beta: 300.0,
            rel_tol: 1e-9,
            max_iters: 10_000,
            power_tol: 1e-8,
            power_max_iters: 1_000,
            record_trace: false,
            newton_steps: 30,
            newton_switch_tol: 1e-6,
        }
    }
}

impl GpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0
            && self.rel_tol > 0.0
            && self.max_iters >= 1
            && self.power_tol > 0.0
            && self.newton_switch_tol >= self.rel_tol)
        {
            return Err(Error::config(format!("invalid GPM configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpmResult {
    pub gamma: Vec<Complex64>,
    pub cost: f64,
    /// Power iterations performed.
    pub iterations: usize,
    /// Accepted Newton steps.
    #[serde(default)]
    pub newton_steps: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// `z / |z|`, or `1` at the origin.
#[inline]
pub fn unit_phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// `Re(γ† A γ)`.
pub fn quadratic_form(a: &CMatrix, gamma: &[Complex64]) -> f64 {
    let g = CVector::from_column_slice(gamma);
    g.dotc(&(a * &g)).re
}

/// A Hermitian linear map applied without necessarily materializing it.
pub trait HermitianOperator {
    fn dim(&self) -> usize;
    /// `out = A x`.
    fn apply(&self, x: &CVector, out: &mut CVector);
    /// Real diagonal of `A`.
    fn diagonal(&self) -> Vec<f64>;
    /// `A` as a dense matrix, by default column by column.
    fn to_dense(&self) -> CMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        let mut e = CVector::zeros(n);
        let mut col = CVector::zeros(n);
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            out.set_column(j, &col);
            e[j] = Complex64::new(0.0, 0.0);
        }
        out
    }
}

impl HermitianOperator for CMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &CVector, out: &mut CVector) {
        self.mul_to(x, out);
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self[(i, i)].re).collect()
    }

    fn to_dense(&self) -> CMatrix {
        self.clone()
    }
}

/// Leading eigenvector of a PSD matrix by power iteration, seeded with the
/// column of largest diagonal entry.
pub fn leading_eigenvector(a: &CMatrix, tol: f64, max_iters: usize) -> CVector {
    leading_eigenvector_op(a, tol, max_iters)
}

pub fn leading_eigenvector_op<O: HermitianOperator + ?Sized>(
    a: &O,
    tol: f64,
    max_iters: usize,
) -> CVector {
    let n = a.dim();
    let ones = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let diag = a.diagonal();
    let seed = (0..n)
        .max_by(|&i, &j| diag[i].total_cmp(&diag[j]))
        .filter(|&i| diag[i] > 0.0);
    let Some(seed) = seed else {
        return ones;
    };
    let mut v = CVector::zeros(n);
    let mut e = CVector::zeros(n);
    e[seed] = Complex64::new(1.0, 0.0);
    a.apply(&e, &mut v);
    let norm = v.norm();
    if norm == 0.0 {
        return ones;
    }
    v.unscale_mut(norm);
    let mut w = CVector::zeros(n);
    for _ in 0..max_iters {
        a.apply(&v, &mut w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        w.unscale_mut(norm);
        let step = (&w - &v).norm();
        std::mem::swap(&mut v, &mut w);
        if step < tol {
            break;
        }
    }
    v
}

/// Validates `A` (Hermitian within `1e-8‖A‖`, eigenvalues above
/// `-1e-8 λ_max`), clips small negative eigenvalues by a diagonal shift, then
/// runs [`gpm_solve_psd`]. The returned cost is always on the original `A`.
pub fn gpm_solve(a: &CMatrix, cfg: &GpmConfig) -> Result<GpmResult> {
    cfg.validate()?;
    if !a.is_square() {
        return Err(Error::validation("GPM matrix must be square"));
    }
    let norm = a.norm();
    let asym = (a - a.adjoint()).norm();
    if asym > 1e-8 * norm {
        return Err(Error::validation(format!(
            "GPM matrix is not Hermitian (‖A-A†‖_F = {asym:e}, ‖A‖_F = {norm:e})"
        )));
    }
    let herm = (a + a.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm.clone()).eigenvalues;
    let lmax = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < -1e-8 * lmax.abs() {
        return Err(Error::validation(format!(
            "GPM matrix is not PSD (λ_min = {lmin:e}, λ_max = {lmax:e})"
        )));
    }
    let shifted;
    let target = if lmin < 0.0 {
        shifted = &herm + CMatrix::identity(a.nrows(), a.ncols()).scale(-lmin);
        &shifted
    } else {
        &herm
    };
    let mut out = gpm_solve_psd(target, cfg);
    out.cost = quadratic_form(a, &out.gamma);
    Ok(out)
}

/// GPM without input checks; `a` must be Hermitian PSD.
pub fn gpm_solve_psd(a: &CMatrix, cfg: &GpmConfig) -> GpmResult {
    gpm_solve_op(a, cfg)
}

/// GPM on an operator; `a` must be Hermitian PSD.
pub fn gpm_solve_op<O: HermitianOperator + ?Sized>(a: &O, cfg: &GpmConfig) -> GpmResult {
    let n = a.dim();
    let v0 = leading_eigenvector_op(a, cfg.power_tol, cfg.power_max_iters);
    let mut gamma = v0.map(unit_phase);
    let mut av = CVector::zeros(n);
    a.apply(&gamma, &mut av);
    let mut cost = gamma.dotc(&av).re;
    let mut trace = cfg.record_trace.then(|| vec![cost]);

    let mut iterations = 0;
    let mut converged = cost == 0.0;
    let beta = Complex64::new(cfg.beta, 0.0);
    let polish = cfg.newton_steps > 0 && n > 1;
    let tol = if polish { cfg.newton_switch_tol } else { cfg.rel_tol };
    while !converged && iterations < cfg.max_iters {
        gamma.zip_apply(&av, |g, w| *g = unit_phase(*g + beta * w));
        a.apply(&gamma, &mut av);
        let next = gamma.dotc(&av).re;
        iterations += 1;
        if let Some(t) = trace.as_mut() {
            t.push(next);
        }
        let change = (next - cost).abs() / cost.abs().max(f64::MIN_POSITIVE);
        cost = next;
        converged = change < tol;
    }

    let mut newton_steps = 0;
    if polish && cost > 0.0 {
        let dense = a.to_dense();
        let (steps, done) = newton_polish(&dense, &mut gamma, &mut cost, cfg, trace.as_mut());
        newton_steps = steps;
        converged = done;
    }

    GpmResult {
        gamma: gamma.as_slice().to_vec(),
        cost,
        iterations,
        newton_steps,
        converged,
        trace,
    }
}

/// Damped Newton ascent on `θ`, `γ = e^{jθ}`, with `θ_{N-1}` held fixed as
/// the gauge. With `z = Aγ`:
///
/// ```text
/// ∂f/∂θ_i     = 2 Im(γ_i* z_i)
/// ∂²f/∂θ_i∂θ_k = 2 Re(γ_i* A_ik γ_k) − δ_ik 2 Re(γ_i* z_i)
/// ```
///
/// Returns the number of accepted steps and whether the relative gain fell
/// below `rel_tol`.
fn newton_polish(
    a: &CMatrix,
    gamma: &mut CVector,
    cost: &mut f64,
    cfg: &GpmConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> (usize, bool) {
    let n = a.nrows() - 1;
    let scale = (0..=n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut damping = 0.0;
    let mut accepted = 0;
    for _ in 0..cfg.newton_steps {
        let z = a * &*gamma;
        let grad = DVector::from_fn(n, |i, _| 2.0 * (gamma[i].conj() * z[i]).im);
        let neg_hess = DMatrix::from_fn(n, n, |i, k| {
            let off = -2.0 * (gamma[i].conj() * a[(i, k)] * gamma[k]).re;
            if i == k {
                off + 2.0 * (gamma[i].conj() * z[i]).re
            } else {
                off
            }
        });

        let mut step = None;
        for _ in 0..40 {
            let mut m = neg_hess.clone();
            for i in 0..n {
                m[(i, i)] += damping;
            }
            if let Some(chol) = Cholesky::new(m) {
                let delta = chol.solve(&grad);
                let mut trial = gamma.clone();
                for i in 0..n {
                    trial[i] *= Complex64::from_polar(1.0, delta[i]);
                }
                let next = trial.dotc(&(a * &trial)).re;
                if next >= *cost {
                    step = Some((trial, next));
                    break;
                }
            }
            damping = (damping * 10.0).max(1e-12 * scale);
        }
        let Some((trial, next)) = step else {
            return (accepted, true);
        };
        let gain = (next - *cost) / cost.abs();
        *gamma = trial;
        *cost = next;
        accepted += 1;
        damping *= 0.1;
        if let Some(t) = trace.as_mut() {
            t.push(next);
        }
        if gain < cfg.rel_tol {
            return (accepted, true);
        }
    }
    (accepted, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let b = CMatrix::from_fn(n, rank, |_, _| complex_gaussian(rng, 1.0));
        let a = &b * b.adjoint();
        (&a + a.adjoint()).scale(0.5)
    }

    /// Best cost over a 32-level phase grid with γ₀ fixed to 1.
    fn brute_force(a: &CMatrix, levels: usize) -> f64 {
        let n = a.nrows();
        let phasors: Vec<Complex64> = (0..levels)
            .map(|l| Complex64::from_polar(1.0, 2.0 * PI * l as f64 / levels as f64))
            .collect();
        let mut idx = vec![0usize; n];
        let mut best = f64::NEG_INFINITY;
        let mut g = vec![Complex64::new(1.0, 0.0); n];
        loop {
            for i in 1..n {
                g[i] = phasors[idx[i]];
            }
            best = best.max(quadratic_form(a, &g));
            let mut i = 1;
            loop {
                if i == n {
                    return best;
                }
                idx[i] += 1;
                if idx[i] < levels {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn rank_one_optimum_is_phase_match() {
        let a_vec: Vec<Complex64> =
            [0.3, -1.2, 2.5, 0.9].iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let a = CVector::from_column_slice(&a_vec);
        let m = &a * a.adjoint();
        let out = gpm_solve(&m, &GpmConfig::default()).unwrap();
        assert!((out.cost - 16.0).abs() < 1e-9);
        let rot = out.gamma[0] / a_vec[0];
        for (g, v) in out.gamma.iter().zip(&a_vec) {
            assert!((g - v * rot).norm() < 1e-9);
        }
    }

    #[test]
    fn identity_is_constant_objective() {
        for n in [1, 3, 7] {
            let out = gpm_solve(&CMatrix::identity(n, n), &GpmConfig::default()).unwrap();
            assert!((out.cost - n as f64).abs() < 1e-12);
            assert!(out.iterations <= 2);
            assert!(out.converged);
        }
    }

    #[test]
    fn beats_phase_grid_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..5 {
            let a = random_psd(4, 3, &mut rng);
            let out = gpm_solve(&a, &GpmConfig::default()).unwrap();
            let brute = brute_force(&a, 32);
            assert!(out.cost >= brute - 1e-3 * brute, "{} < {}", out.cost, brute);
        }
    }

    #[test]
    fn iterates_are_monotone_and_unit_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for beta in [0.01, 1.0, 300.0] {
            let a = random_psd(12, 4, &mut rng);
            let cfg = GpmConfig { beta, record_trace: true, ..GpmConfig::default() };
            let out = gpm_solve(&a, &cfg).unwrap();
            let trace = out.trace.as_ref().unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
            assert!(out.gamma.iter().all(|g| (g.norm() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn newton_polish_reaches_the_long_run_power_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [3, 8, 16] {
            let a = random_psd(n, n, &mut rng);
            let slow = GpmConfig {
                newton_steps: 0,
                max_iters: 2_000_000,
                rel_tol: 1e-15,
                ..GpmConfig::default()
            };
            let reference = gpm_solve(&a, &slow).unwrap();
            let fast = gpm_solve(&a, &GpmConfig::default()).unwrap();
            assert!(fast.converged);
            assert!(
                (fast.cost - reference.cost).abs() <= 1e-9 * reference.cost,
                "n={n}: {} vs {}",
                fast.cost,
                reference.cost
            );
            assert!(fast.iterations <= reference.iterations);
        }
    }

    #[test]
    fn polished_point_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_psd(10, 6, &mut rng);
        let out = gpm_solve(&a, &GpmConfig::default()).unwrap();
        let g = CVector::from_column_slice(&out.gamma);
        let z = &a * &g;
        let scale = z.norm();
        for i in 0..10 {
            assert!((g[i].conj() * z[i]).im.abs() < 1e-7 * scale);
        }
    }

    #[test]
    fn global_phase_is_a_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_psd(6, 6, &mut rng);
        let out = gpm_solve(&a, &GpmConfig::default()).unwrap();
        let rot = Complex64::from_polar(1.0, 1.234);
        let turned: Vec<_> = out.gamma.iter().map(|g| g * rot).collect();
        let (c0, c1) = (quadratic_form(&a, &out.gamma), quadratic_form(&a, &turned));
        assert!((c0 - c1).abs() <= 1e-12 * c0);
    }

    #[test]
    fn zero_phase_defaults_to_one() {
        assert_eq!(unit_phase(Complex64::new(0.0, 0.0)), Complex64::new(1.0, 0.0));
        let out = gpm_solve(&CMatrix::zeros(3, 3), &GpmConfig::default()).unwrap();
        assert_eq!(out.cost, 0.0);
        assert!(out.gamma.iter().all(|g| *g == Complex64::new(1.0, 0.0)));
        // A with an all-zero row: that entry of (I + βA)γ is just γ_i
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = Complex64::new(2.0, 0.0);
        let out = gpm_solve(&a, &GpmConfig::default()).unwrap();
        assert!((out.cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian_and_clips_tiny_negatives() {
        let mut a = CMatrix::identity(3, 3);
        a[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(matches!(gpm_solve(&a, &GpmConfig::default()), Err(Error::Validation(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = random_psd(5, 2, &mut rng);
        let lmax = SymmetricEigen::new(b.clone()).eigenvalues.max();
        let nudged = &b - CMatrix::identity(5, 5).scale(1e-10 * lmax);
        let out = gpm_solve(&nudged, &GpmConfig::default()).unwrap();
        assert!((out.cost - quadratic_form(&nudged, &out.gamma)).abs() < 1e-9 * out.cost.abs());

        let indefinite = &b - CMatrix::identity(5, 5).scale(0.5 * lmax);
        assert!(gpm_solve(&indefinite, &GpmConfig::default()).is_err());
    }

    #[test]
    fn invalid_config() {
        let cfg = GpmConfig { beta: 0.0, ..GpmConfig::default() };
        assert!(matches!(gpm_solve(&CMatrix::identity(2, 2), &cfg), Err(Error::Config(_))));
    }
}
