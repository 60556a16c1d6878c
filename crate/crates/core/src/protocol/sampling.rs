//! Shot-by-shot Monte Carlo of the sensing sequence on state vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::channels::{damping_kraus, KrausChannel};
use crate::codes::{decode_povm, encode, transpose_recovery, CodeSpec, Outcome};
use crate::error::{invalid, Result};
use crate::hilbert::{C64, ZERO};

use super::engine::{ClassFringe, FringeDataset};
use super::{ExperimentConfig, ImperfectionModel, Strategy};

const CHUNK: u64 = 1 << 16;

/// Everything one trajectory needs, shared across threads.
struct Shooter {
    code: CodeSpec,
    qec: bool,
    rounds: usize,
    interval: f64,
    omega: f64,
    loss: KrausChannel,
    kick: Option<Normal<f64>>,
    imp: ImperfectionModel,
    err: [usize; 2],
    err_target: [usize; 2],
    pi_g: nalgebra::DMatrix<C64>,
}

impl Shooter {
    fn new(config: &ExperimentConfig, strategy: Strategy) -> Result<Self> {
        let dim = config.dim();
        let (code, qec, rounds, interval) = match strategy {
            Strategy::Tls => (
                CodeSpec::tls(std::f64::consts::FRAC_1_SQRT_2, 0.0, dim)?,
                false,
                1,
                config.t_int(),
            ),
            Strategy::NoQec => (config.code, false, 1, config.t_int()),
            Strategy::Qec | Strategy::QecQjt => (config.code, true, config.rounds, config.tau_int),
        };
        let (err, err_target) = if qec {
            let rec = transpose_recovery(&code, 1)?;
            let err = [code.m() - 1, code.n() - 1];
            (err, [rec.maps(err[0]), rec.maps(err[1])])
        } else {
            ([usize::MAX; 2], [usize::MAX; 2])
        };
        let variance = config.dephasing_rate * interval;
        let kick = if variance > 0.0 {
            Some(
                Normal::new(0.0, variance.sqrt())
                    .map_err(|e| invalid("dephasing_rate", e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            code,
            qec,
            rounds,
            interval,
            omega: config.omega,
            loss: damping_kraus(interval, config.t1, dim, config.k_max)?,
            kick,
            imp: config.imperfections,
            err,
            err_target,
            pi_g: decode_povm(&code, config.phi1)
                .element(Outcome::G)
                .elems()
                .clone(),
        })
    }

    fn interrogate<R: Rng>(&self, psi: &mut [C64], rng: &mut R) {
        let mut dphi = self.omega * self.interval;
        if let Some(kick) = &self.kick {
            dphi += kick.sample(rng);
        }
        for (k, a) in psi.iter_mut().enumerate() {
            *a *= C64::from_polar(1.0, -dphi * k as f64);
        }
        let dim = psi.len();
        let weights: Vec<f64> = (0..=self.loss.k_max())
            .map(|k| {
                let band = self.loss.band(k);
                (0..dim - k)
                    .map(|i| band[i] * band[i] * psi[i + k].norm_sqr())
                    .sum()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut order = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                order = k;
                break;
            }
            u -= w;
        }
        if order > 0 || self.loss.band(0).iter().any(|c| *c != 1.0) {
            let band = self.loss.band(order);
            for i in 0..dim {
                psi[i] = if i + order < dim {
                    psi[i + order] * band[i]
                } else {
                    ZERO
                };
            }
        }
        normalize(psi);
    }

    /// Correction pulse; returns the true ancilla outcome.
    fn pulse<R: Rng>(&self, psi: &mut [C64], rng: &mut R) -> Outcome {
        let p_err: f64 = self.err.iter().map(|&i| psi[i].norm_sqr()).sum();
        let outcome = if rng.random::<f64>() < p_err {
            Outcome::E
        } else {
            Outcome::G
        };
        match outcome {
            Outcome::G => {
                for &i in &self.err {
                    psi[i] = ZERO;
                }
            }
            Outcome::E => {
                let src = [psi[self.err[0]], psi[self.err[1]]];
                psi.iter_mut().for_each(|a| *a = ZERO);
                psi[self.err_target[0]] = src[0];
                psi[self.err_target[1]] = src[1];
            }
        }
        normalize(psi);
        if self.imp.eps_qec > 0.0 && rng.random::<f64>() < self.imp.eps_qec {
            psi.iter_mut().for_each(|a| *a = ZERO);
            let level = if rng.random::<bool>() {
                self.code.m()
            } else {
                self.code.n()
            };
            psi[level] = C64::new(1.0, 0.0);
        }
        outcome
    }

    fn flip<R: Rng>(&self, outcome: Outcome, rng: &mut R) -> Outcome {
        if self.imp.eps_readout > 0.0 && rng.random::<f64>() < self.imp.eps_readout {
            outcome.flipped()
        } else {
            outcome
        }
    }

    /// One shot: returns (recorded jump count, final recorded label).
    fn shot<R: Rng>(&self, initial: &[C64], rng: &mut R) -> (usize, Outcome) {
        let mut psi = initial.to_vec();
        let mut jumps = 0;
        if self.qec {
            let mut reset_failed = false;
            for _ in 0..self.rounds {
                self.interrogate(&mut psi, rng);
                let mut label = self.flip(self.pulse(&mut psi, rng), rng);
                if reset_failed {
                    label = label.flipped();
                }
                reset_failed = false;
                if label == Outcome::E {
                    jumps += 1;
                    reset_failed =
                        self.imp.eps_reset > 0.0 && rng.random::<f64>() < self.imp.eps_reset;
                }
            }
        } else {
            self.interrogate(&mut psi, rng);
        }
        let dim = psi.len();
        let mut p_g = 0.0;
        for b in 0..dim {
            if psi[b] == ZERO {
                continue;
            }
            for a in 0..dim {
                p_g += (psi[a].conj() * self.pi_g[(a, b)] * psi[b]).re;
            }
        }
        let label = if rng.random::<f64>() < p_g {
            Outcome::G
        } else {
            Outcome::E
        };
        (jumps, self.flip(label, rng))
    }
}

fn normalize(psi: &mut [C64]) {
    let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        psi.iter_mut().for_each(|a| *a /= n);
    }
}

/// Sampled fringes: `shots` trajectories at every φ₀ of the configured grid.
///
/// Frequencies are per-class joint frequencies, so they sum to one over
/// classes and labels. The result depends only on `seed`, not on the
/// number of worker threads.
pub fn sample_fringe(
    config: &ExperimentConfig,
    strategy: Strategy,
    shots: u64,
    seed: u64,
) -> Result<FringeDataset> {
    config.validate()?;
    if shots == 0 {
        return Err(invalid("shots", "must be positive"));
    }
    let shooter = Shooter::new(config, strategy)?;
    let n_classes = if shooter.qec { config.rounds + 1 } else { 1 };
    let chunks = shots.div_ceil(CHUNK);
    let points = config.phi0_grid.len();

    let jobs: Vec<(usize, u64)> = (0..points)
        .flat_map(|p| (0..chunks).map(move |c| (p, c)))
        .collect();
    let tallies: Vec<(usize, Vec<[u64; 2]>)> = jobs
        .par_iter()
        .map(|&(point, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((point as u64) << 32) | chunk);
            let initial = encode(&shooter.code.with_phi0(config.phi0_grid[point]))
                .amps()
                .as_slice()
                .to_vec();
            let n = CHUNK.min(shots - chunk * CHUNK);
            let mut counts = vec![[0u64; 2]; n_classes];
            for _ in 0..n {
                let (j, label) = shooter.shot(&initial, &mut rng);
                counts[j][label.index()] += 1;
            }
            (point, counts)
        })
        .collect();

    let mut totals = vec![vec![[0u64; 2]; n_classes]; points];
    for (point, counts) in tallies {
        for (acc, c) in totals[point].iter_mut().zip(counts) {
            acc[0] += c[0];
            acc[1] += c[1];
        }
    }
    let scale = 1.0 / shots as f64;
    let classes = (0..n_classes)
        .map(|j| ClassFringe {
            j,
            p_g: totals.iter().map(|t| t[j][0] as f64 * scale).collect(),
            p_e: totals.iter().map(|t| t[j][1] as f64 * scale).collect(),
        })
        .collect();
    Ok(FringeDataset {
        phi0: config.phi0_grid.clone(),
        classes,
        shots: Some(shots),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{evolve, uniform_phases};

    fn config() -> ExperimentConfig {
        let code = CodeSpec::balanced(1, 3, 0.0, 20).unwrap();
        let mut cfg = ExperimentConfig::new(code, 0.1 * 143e-6, 3);
        cfg.omega = 1.0e4;
        cfg.phi0_grid = uniform_phases(8);
        cfg
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = config();
        let a = sample_fringe(&cfg, Strategy::QecQjt, 5000, 7).unwrap();
        let b = sample_fringe(&cfg, Strategy::QecQjt, 5000, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_fringe(&cfg, Strategy::QecQjt, 5000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn frequencies_sum_to_one() {
        let cfg = config();
        let d = sample_fringe(&cfg, Strategy::Qec, 2000, 1).unwrap();
        let merged = d.merged();
        for (g, e) in merged.p_g.iter().zip(&merged.p_e) {
            assert!((g + e - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_exact_engine_within_sampling_error() {
        let mut cfg = config();
        cfg.imperfections = ImperfectionModel {
            eps_qec: 0.05,
            eps_readout: 0.03,
            eps_reset: 0.1,
        };
        cfg.dephasing_rate = 500.0;
        let shots = 40_000;
        for strategy in [Strategy::QecQjt, Strategy::NoQec, Strategy::Tls] {
            let sampled = sample_fringe(&cfg, strategy, shots, 3).unwrap();
            let exact = evolve(&cfg, strategy).unwrap().fringe(&cfg.phi0_grid);
            for (s, x) in sampled.classes.iter().zip(&exact.classes) {
                for i in 0..cfg.phi0_grid.len() {
                    for (ps, px) in [(s.p_g[i], x.p_g[i]), (s.p_e[i], x.p_e[i])] {
                        let sd = (px * (1.0 - px) / shots as f64).sqrt();
                        assert!(
                            (ps - px).abs() < 5.0 * sd + 1e-4,
                            "{strategy} j={} {ps} vs {px}",
                            s.j
                        );
                    }
                }
            }
        }
    }
}
