//! Maximizing the normalized Fisher rate Q over code amplitude and
//! correction schedule.

use rayon::prelude::*;

use crate::analysis::strategy_report;
use crate::codes::CodeSpec;
use crate::error::{invalid, Error, Result};
use crate::protocol::{ExperimentConfig, Strategy};

/// Search domain and fixed settings. For the uncorrected strategies M is
/// pinned to 1 and the τ bounds are stretched to cover the same total
/// interrogation range, [τ_min, M_max·τ_max].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    /// Code family (m, n), T1, overheads, imperfections, decoder phase.
    pub base: ExperimentConfig,
    pub strategy: Strategy,
    pub alpha_bounds: (f64, f64),
    pub tau_bounds: (f64, f64),
    pub max_rounds: usize,
    pub alpha_points: usize,
    pub tau_points: usize,
    pub max_evaluations: usize,
    /// Simplex size, in units of the normalized box, at which refinement stops.
    pub x_tolerance: f64,
}

impl OptimizationProblem {
    pub fn new(
        base: ExperimentConfig,
        strategy: Strategy,
        tau_bounds: (f64, f64),
        max_rounds: usize,
    ) -> Self {
        Self {
            base,
            strategy,
            alpha_bounds: (1e-3, 1.0 - 1e-3),
            tau_bounds,
            max_rounds,
            alpha_points: 17,
            tau_points: 16,
            max_evaluations: 400,
            x_tolerance: 1e-7,
        }
    }

    fn validate(&self) -> Result<()> {
        let (alo, ahi) = self.alpha_bounds;
        if !(0.0 < alo && alo < ahi && ahi < 1.0) {
            return Err(invalid(
                "alpha_bounds",
                format!("need 0 < lo < hi < 1, got ({alo}, {ahi})"),
            ));
        }
        let (tlo, thi) = self.tau_bounds;
        if !(tlo > 0.0 && tlo < thi && thi.is_finite()) {
            return Err(invalid(
                "tau_bounds",
                format!("need 0 < lo < hi, got ({tlo}, {thi})"),
            ));
        }
        if self.max_rounds == 0 {
            return Err(invalid("max_rounds", "must be at least 1"));
        }
        if self.alpha_points == 0 || self.tau_points < 2 {
            return Err(invalid(
                "grid",
                "need at least 1 alpha point and 2 tau points",
            ));
        }
        Ok(())
    }

    fn effective_tau_bounds(&self) -> (f64, f64) {
        if self.strategy.uses_qec() {
            self.tau_bounds
        } else {
            (
                self.tau_bounds.0,
                self.tau_bounds.1 * self.max_rounds as f64,
            )
        }
    }

    fn round_choices(&self) -> Vec<usize> {
        if self.strategy.uses_qec() {
            (1..=self.max_rounds).collect()
        } else {
            vec![1]
        }
    }

    /// Configuration evaluated at one parameter point.
    pub fn config_at(&self, p: &Params) -> Result<ExperimentConfig> {
        let mut cfg = self.base.clone();
        let code = &self.base.code;
        cfg.code = match self.strategy {
            Strategy::Tls => CodeSpec::tls(p.alpha, 0.0, code.dim())?,
            _ => CodeSpec::new(code.m(), code.n(), p.alpha, 0.0, code.dim())?,
        };
        cfg.tau_int = p.tau_int;
        cfg.rounds = p.rounds;
        Ok(cfg)
    }

    /// Q at one parameter point. Failures carry the parameters.
    pub fn objective(&self, p: &Params) -> Result<f64> {
        let eval = || -> Result<f64> {
            let cfg = self.config_at(p)?;
            // the reference strategy is the balanced probe; here α is free
            let strategy = if self.strategy == Strategy::Tls {
                Strategy::NoQec
            } else {
                self.strategy
            };
            Ok(strategy_report(&cfg, strategy, None)?.q)
        };
        eval().map_err(|e| Error::Evaluation {
            params: p.to_string(),
            source: Box::new(e),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub alpha: f64,
    pub tau_int: f64,
    pub rounds: usize,
}

impl Params {
    pub fn t_int(&self) -> f64 {
        self.tau_int * self.rounds as f64
    }
}

impl std::fmt::Display for Params {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "alpha={}, tau_int={} s, M={}",
            self.alpha, self.tau_int, self.rounds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub params: Params,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub strategy: Strategy,
    pub best: Params,
    pub best_q: f64,
    /// Best value seen on the coarse grid, before refinement.
    pub grid_best_q: f64,
    /// Every objective evaluation in order: grid first, then simplex.
    pub trace: Vec<Evaluation>,
    pub converged: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Coarse grid over (α, τ, M) followed by a bounded Nelder–Mead simplex on
/// (α, τ) at the best M. Fully deterministic.
pub fn optimize_q(problem: &OptimizationProblem) -> Result<OptimizationResult> {
    problem.validate()?;
    let (alo, ahi) = problem.alpha_bounds;
    let (tlo, thi) = problem.effective_tau_bounds();

    let alphas: Vec<f64> = (1..=problem.alpha_points)
        .map(|i| i as f64 / (problem.alpha_points + 1) as f64)
        .map(|a| a.clamp(alo, ahi))
        .collect();
    let taus = linspace(tlo, thi, problem.tau_points);
    let mut points = Vec::new();
    for &rounds in &problem.round_choices() {
        for &alpha in &alphas {
            for &tau_int in &taus {
                points.push(Params {
                    alpha,
                    tau_int,
                    rounds,
                });
            }
        }
    }
    let values: Vec<f64> = points
        .par_iter()
        .map(|p| problem.objective(p))
        .collect::<Result<_>>()?;
    let mut trace: Vec<Evaluation> = points
        .iter()
        .zip(&values)
        .map(|(&params, &q)| Evaluation { params, q })
        .collect();
    let grid_best = trace
        .iter()
        .copied()
        .reduce(|best, e| if e.q > best.q { e } else { best })
        .expect("grid is non-empty");

    // Refinement in box-normalized coordinates.
    let rounds = grid_best.params.rounds;
    let to_params = |x: [f64; 2]| Params {
        alpha: alo + (ahi - alo) * x[0].clamp(0.0, 1.0),
        tau_int: tlo + (thi - tlo) * x[1].clamp(0.0, 1.0),
        rounds,
    };
    let start = [
        (grid_best.params.alpha - alo) / (ahi - alo),
        (grid_best.params.tau_int - tlo) / (thi - tlo),
    ];
    let step = [
        1.0 / (problem.alpha_points + 1) as f64,
        1.0 / (problem.tau_points - 1) as f64,
    ];
    let mut f = |x: [f64; 2]| -> Result<f64> {
        let params = to_params(x);
        let q = problem.objective(&params)?;
        trace.push(Evaluation { params, q });
        Ok(-q)
    };
    let (x_best, neg_q, converged) = nelder_mead(
        &mut f,
        start,
        step,
        -grid_best.q,
        problem.max_evaluations,
        problem.x_tolerance,
    )?;

    let (best, best_q) = if -neg_q >= grid_best.q {
        (to_params(x_best), -neg_q)
    } else {
        (grid_best.params, grid_best.q)
    };
    Ok(OptimizationResult {
        strategy: problem.strategy,
        best,
        best_q,
        grid_best_q: grid_best.q,
        trace,
        converged,
    })
}

/// Bounded (clamped) Nelder–Mead minimization in two dimensions.
/// Returns (argmin, min, converged).
fn nelder_mead<F>(
    f: &mut F,
    start: [f64; 2],
    step: [f64; 2],
    f_start: f64,
    max_evals: usize,
    x_tol: f64,
) -> Result<([f64; 2], f64, bool)>
where
    F: FnMut([f64; 2]) -> Result<f64>,
{
    let clamp = |x: [f64; 2]| [x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)];
    let mut evals = 0;
    let mut eval = |x: [f64; 2], evals: &mut usize| -> Result<f64> {
        *evals += 1;
        f(x)
    };
    // Vertices stepping inward when the start sits on the upper bound.
    let vertex = |i: usize| {
        let mut x = start;
        x[i] = if start[i] + step[i] <= 1.0 {
            start[i] + step[i]
        } else {
            start[i] - step[i]
        };
        clamp(x)
    };
    let mut simplex = vec![(start, f_start)];
    for i in 0..2 {
        let x = vertex(i);
        simplex.push((x, eval(x, &mut evals)?));
    }
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| {
                (x[0] - simplex[0].0[0])
                    .abs()
                    .max((x[1] - simplex[0].0[1]).abs())
            })
            .fold(0.0, f64::max);
        if size < x_tol {
            converged = true;
            break;
        }
        let (best, worst) = (simplex[0], simplex[2]);
        let centroid = [
            (simplex[0].0[0] + simplex[1].0[0]) / 2.0,
            (simplex[0].0[1] + simplex[1].0[1]) / 2.0,
        ];
        let along = |t: f64| {
            clamp([
                centroid[0] + t * (worst.0[0] - centroid[0]),
                centroid[1] + t * (worst.0[1] - centroid[1]),
            ])
        };

        let xr = along(-1.0);
        let fr = eval(xr, &mut evals)?;
        if fr < best.1 {
            let xe = along(-2.0);
            let fe = eval(xe, &mut evals)?;
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-0.5);
                (x, eval(x, &mut evals)?)
            } else {
                let x = along(0.5);
                (x, eval(x, &mut evals)?)
            };
            if fc < worst.1.min(fr) {
                simplex[2] = (xc, fc);
            } else {
                for v in simplex.iter_mut().skip(1) {
                    let x = clamp([
                        best.0[0] + 0.5 * (v.0[0] - best.0[0]),
                        best.0[1] + 0.5 * (v.0[1] - best.0[1]),
                    ]);
                    *v = (x, eval(x, &mut evals)?);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok((simplex[0].0, simplex[0].1, converged))
}

/// Q(t_int) per strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct QSweep {
    pub t_int: Vec<f64>,
    pub curves: Vec<(Strategy, Vec<f64>)>,
}

/// Q over total interrogation times. Corrected strategies keep the
/// configured τ and need every t_int to be a whole number of rounds;
/// uncorrected ones interrogate in a single stretch.
pub fn sweep_q(
    config: &ExperimentConfig,
    t_int_grid: &[f64],
    strategies: &[Strategy],
) -> Result<QSweep> {
    let mut curves = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let q: Vec<f64> = t_int_grid
            .par_iter()
            .map(|&t| {
                let mut cfg = config.clone();
                if strategy.uses_qec() {
                    let m = (t / config.tau_int).round();
                    if m < 1.0 || (m * config.tau_int - t).abs() > 1e-9 * t {
                        return Err(invalid(
                            "t_int_grid",
                            format!("{t} s is not a whole number of rounds"),
                        ));
                    }
                    cfg.rounds = m as usize;
                } else {
                    cfg.tau_int = t;
                    cfg.rounds = 1;
                }
                strategy_report(&cfg, strategy, None)
                    .map(|r| r.q)
                    .map_err(|e| Error::Evaluation {
                        params: format!("{strategy}, t_int={t} s"),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<_>>()?;
        curves.push((strategy, q));
    }
    Ok(QSweep {
        t_int: t_int_grid.to_vec(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Overheads, DEFAULT_T1};

    fn base(m: usize, n: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            CodeSpec::balanced(m, n, 0.0, 20).unwrap(),
            0.1 * DEFAULT_T1,
            1,
        )
    }

    #[test]
    fn tls_optimum_is_balanced() {
        let mut problem = OptimizationProblem::new(
            base(0, 1),
            Strategy::Tls,
            (0.01 * DEFAULT_T1, 0.5 * DEFAULT_T1),
            4,
        );
        problem.tau_points = 6;
        let r = optimize_q(&problem).unwrap();
        assert!(
            (r.best.alpha - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3,
            "{}",
            r.best.alpha
        );
        assert!(r.best_q >= r.grid_best_q);
        assert!(r.trace.iter().all(|e| e.q <= r.best_q));
        assert!((problem.objective(&r.best).unwrap() - r.best_q).abs() <= 1e-12 * r.best_q);
    }

    #[test]
    fn deterministic() {
        let mut problem = OptimizationProblem::new(
            base(1, 3),
            Strategy::Qec,
            (0.02 * DEFAULT_T1, 0.3 * DEFAULT_T1),
            3,
        );
        problem.alpha_points = 5;
        problem.tau_points = 4;
        let a = optimize_q(&problem).unwrap();
        let b = optimize_q(&problem).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lossless_limit_prefers_most_rounds() {
        let mut cfg = base(1, 3);
        cfg.t1 = 1e6 * 0.1 * DEFAULT_T1;
        cfg.overheads = Overheads::zero();
        cfg.overheads.t_init = 10e-6;
        let mut problem = OptimizationProblem::new(
            cfg.clone(),
            Strategy::Qec,
            (0.01 * DEFAULT_T1, 0.1 * DEFAULT_T1),
            4,
        );
        problem.alpha_points = 3;
        problem.tau_points = 3;
        let r = optimize_q(&problem).unwrap();
        assert_eq!(r.best.rounds, 4);
        let grid: Vec<f64> = (1..=4).map(|m| m as f64 * 0.05 * DEFAULT_T1).collect();
        cfg.tau_int = 0.05 * DEFAULT_T1;
        let sweep = sweep_q(&cfg, &grid, &[Strategy::Qec]).unwrap();
        assert!(sweep.curves[0].1.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sweep_rejects_fractional_rounds() {
        let cfg = base(1, 3);
        assert!(sweep_q(&cfg, &[0.15 * DEFAULT_T1], &[Strategy::Qec]).is_err());
        assert!(sweep_q(&cfg, &[0.15 * DEFAULT_T1], &[Strategy::NoQec]).is_ok());
    }

    #[test]
    fn evaluation_errors_name_parameters() {
        let mut cfg = base(1, 3);
        cfg.t1 = -1.0;
        let problem = OptimizationProblem::new(cfg, Strategy::Qec, (1e-6, 1e-5), 1);
        match problem.objective(&Params {
            alpha: 0.5,
            tau_int: 1e-6,
            rounds: 1,
        }) {
            Err(Error::Evaluation { params, .. }) => assert!(params.contains("alpha=0.5")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
