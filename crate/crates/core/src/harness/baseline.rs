//! Non-coherent cross-power TDOA baseline.
//!
//! ```text
//! score(q) = Σ_{m<m'} | Σ_k c_{mm'}[k] e^{+j2π f_k (τ_m0(q) − τ_m'0(q))} |,
//! c_{mm'}[k] = Σ_d y_m^d[k] conj(y_m'^d[k]).
//! ```
//!
//! The cross spectra are formed once per observation, so a candidate costs
//! `O(M² K)`.

use crate::channel::phasor;
use crate::estimator::{argmax_first, grid_search, CandidateSet, GridSpec, SearchOutcome};
use crate::scenario::{toa, Position};
use crate::signal::ObservationSet;
use crate::{Complex64, Error, Execution, Result};

#[derive(Clone, Debug)]
pub struct BaselineModel {
    freqs: Vec<f64>,
    stations: Vec<Position>,
    /// `(m, m', c_{mm'})` for every pair `m < m'`.
    cross: Vec<(usize, usize, Vec<Complex64>)>,
}

impl BaselineModel {
    pub fn new(obs: &ObservationSet, stations: &[Position]) -> Result<Self> {
        obs.validate()?;
        let m = obs.num_stations();
        if m < 2 {
            return Err(Error::validation("the cross-power baseline needs at least two stations"));
        }
        if stations.len() != m {
            return Err(Error::validation("one position per station required"));
        }
        let k = obs.k();
        let mut cross = Vec::with_capacity(m * (m - 1) / 2);
        for a in 0..m {
            for b in a + 1..m {
                let mut c = vec![Complex64::new(0.0, 0.0); k];
                for d in 0..obs.d {
                    for ((ck, ya), yb) in c.iter_mut().zip(obs.window(a, d)).zip(obs.window(b, d)) {
                        *ck += ya * yb.conj();
                    }
                }
                cross.push((a, b, c));
            }
        }
        Ok(Self {
            freqs: obs.grid.frequencies(),
            stations: stations.to_vec(),
            cross,
        })
    }

    pub fn score(&self, q: &Position) -> f64 {
        let tau: Vec<f64> = self.stations.iter().map(|p| toa(q, p)).collect();
        self.cross
            .iter()
            .map(|(a, b, c)| {
                let dt = tau[*a] - tau[*b];
                c.iter()
                    .zip(&self.freqs)
                    .map(|(ck, &f)| ck * phasor(f, dt).conj())
                    .sum::<Complex64>()
                    .norm()
            })
            .sum()
    }

    pub fn evaluate(&self, candidates: &CandidateSet, exec: Execution) -> Vec<f64> {
        exec.map(candidates.positions(), |q| self.score(q))
    }
}

/// Argmax of the cross-power score; ties go to the first candidate.
pub fn baseline_estimate(obs: &ObservationSet, stations: &[Position], candidates: &CandidateSet) -> Result<Position> {
    let model = BaselineModel::new(obs, stations)?;
    let scores = model.evaluate(candidates, Execution::Sequential);
    let i = argmax_first(&scores).ok_or_else(|| Error::validation("no finite baseline score"))?;
    Ok(candidates.positions()[i])
}

/// Baseline over a refined grid.
pub fn baseline_grid_search(
    obs: &ObservationSet,
    stations: &[Position],
    spec: &GridSpec,
    exec: Execution,
) -> Result<SearchOutcome> {
    let model = BaselineModel::new(obs, stations)?;
    grid_search(spec, |cands| Ok(model.evaluate(cands, exec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{complex_gaussian, ChannelRealization, FrequencyGrid, Tap};
    use crate::scenario::{sample_scenario, GeometryConfig, Scenario};
    use crate::signal::{gen_white, synthesize_observations};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_tap(m: usize) -> Vec<ChannelRealization> {
        vec![
            ChannelRealization {
                taps: vec![Tap { delay_s: 0.0, gain: Complex64::new(1.0, 0.0) }],
            };
            m
        ]
    }

    /// Literal double sum over windows and bins, no precomputation.
    fn direct_score(obs: &ObservationSet, stations: &[Position], q: &Position) -> f64 {
        let m = stations.len();
        let mut total = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                let dt = toa(q, &stations[a]) - toa(q, &stations[b]);
                let mut s = Complex64::new(0.0, 0.0);
                for d in 0..obs.d {
                    for k in 0..obs.k() {
                        let f = obs.grid.freq(k);
                        let arg = 2.0 * std::f64::consts::PI * f * dt;
                        s += obs.y[a][k + obs.k() * d]
                            * obs.y[b][k + obs.k() * d].conj()
                            * Complex64::new(arg.cos(), arg.sin());
                    }
                }
                total += s.norm();
            }
        }
        total
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = FrequencyGrid::new(8, 40e6).unwrap();
        let y = (0..4).map(|_| (0..8 * 3).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect();
        let obs = ObservationSet { y, grid, d: 3, noise_variance: 1.0 };
        let stations = vec![
            Position::new(50.0, 0.0, 0.0),
            Position::new(0.0, 48.0, 0.0),
            Position::new(-52.0, 3.0, 0.0),
            Position::new(1.0, -47.0, 0.0),
        ];
        let model = BaselineModel::new(&obs, &stations).unwrap();
        for q in [Position::new(0.0, 0.0, 0.0), Position::new(7.0, -13.0, 0.0)] {
            let (a, b) = (model.score(&q), direct_score(&obs, &stations, &q));
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn noiseless_single_tap_recovers_grid_node() {
        let grid = FrequencyGrid::new(16, 40e6).unwrap();
        let cands = CandidateSet::grid_2d(Position::default(), 30.0, 2.0).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let geom = GeometryConfig { num_stations: 6, ..GeometryConfig::default() };
            let sampled = sample_scenario(&geom, &mut rng).unwrap();
            let e = sampled.emitter;
            let emitter = Position::new((e.x / 2.0).round() * 2.0, (e.y / 2.0).round() * 2.0, 0.0);
            let scenario = Scenario::new(emitter, sampled.stations).unwrap();
            let x = gen_white(16, 4, &mut rng).unwrap();
            let obs = synthesize_observations(&scenario, &single_tap(6), &x, &grid, 0.0, &mut rng).unwrap();
            let q_hat = baseline_estimate(&obs, &scenario.stations, &cands).unwrap();
            // Brute force: the estimate is the best node and the true node attains it.
            let model = BaselineModel::new(&obs, &scenario.stations).unwrap();
            let best = cands.positions().iter().map(|q| model.score(q)).fold(f64::MIN, f64::max);
            assert_eq!(model.score(&q_hat), best);
            assert_eq!(q_hat, emitter, "seed {seed}");
        }
    }

    #[test]
    fn two_stations_score_is_symmetric_across_the_baseline() {
        // Stations on the x axis: mirroring q through that axis keeps both
        // ranges, hence the TDOA, unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = FrequencyGrid::new(16, 40e6).unwrap();
        let stations = vec![Position::new(-50.0, 0.0, 0.0), Position::new(50.0, 0.0, 0.0)];
        let scenario = Scenario::new(Position::new(8.0, 11.0, 0.0), stations.clone()).unwrap();
        let x = gen_white(16, 2, &mut rng).unwrap();
        let obs = synthesize_observations(&scenario, &single_tap(2), &x, &grid, 0.1, &mut rng).unwrap();
        let model = BaselineModel::new(&obs, &stations).unwrap();
        for (px, py) in [(3.0, 4.0), (-20.0, 7.5), (8.0, 11.0), (0.0, 29.0)] {
            let a = model.score(&Position::new(px, py, 0.0));
            let b = model.score(&Position::new(px, -py, 0.0));
            assert!((a - b).abs() <= 1e-6 * a.max(1.0));
        }
    }

    #[test]
    fn rejects_single_station() {
        let grid = FrequencyGrid::new(4, 40e6).unwrap();
        let obs = ObservationSet {
            y: vec![vec![Complex64::new(1.0, 0.0); 4]],
            grid,
            d: 1,
            noise_variance: 1.0,
        };
        assert!(BaselineModel::new(&obs, &[Position::default()]).is_err());
    }
}
