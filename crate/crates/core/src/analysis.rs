//! Fringe fitting, Fisher information and sensitivity figures.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::codes::Outcome;
use crate::error::{invalid, Error, Result};
use crate::hilbert::DensityMatrix;
use crate::protocol::{
    evolve, ExperimentConfig, FinalState, FringeDataset, RadiometryCurves, Strategy,
};

/// Cross-Kerr coefficient of the reference device, rad/s per excitation.
pub const DEFAULT_CHI: f64 = 2.0 * PI * 15.3e3;

/// Eigenvalue pairs below this sum are excluded from the QFI sum.
pub const QFI_EIGEN_CUTOFF: f64 = 1e-12;

/// Relative disagreement between the two finite-difference steps that
/// marks a derivative estimate as unstable.
pub const QFI_STABILITY_TOLERANCE: f64 = 1e-4;
pub const SLOPE_STABILITY_TOLERANCE: f64 = 1e-3;

/// Least-squares sinusoid P(φ₀) = A + B cos(φ₀ + φ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    pub residual_rms: f64,
    /// One-sigma uncertainties from the residual-scaled covariance; zero
    /// when the grid has no spare degrees of freedom.
    pub sigma_a: f64,
    pub sigma_b: f64,
    pub sigma_phi: f64,
}

impl FringeFit {
    pub fn eval(&self, phi0: f64) -> f64 {
        self.a + self.b * (phi0 + self.phi).cos()
    }
}

fn spans_more_than_pi(phi0: &[f64]) -> bool {
    let mut wrapped: Vec<f64> = phi0.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
    wrapped.sort_by(f64::total_cmp);
    wrapped.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if wrapped.len() < 3 {
        return false;
    }
    let mut max_gap = wrapped[0] + 2.0 * PI - wrapped[wrapped.len() - 1];
    for w in wrapped.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    max_gap < PI
}

/// Closed-form linear least squares on {1, cos φ₀, sin φ₀}.
pub fn fit_fringe(phi0: &[f64], p: &[f64]) -> Result<FringeFit> {
    if phi0.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: phi0.len(),
            got: p.len(),
        });
    }
    if !spans_more_than_pi(phi0) {
        return Err(Error::DegenerateFit(
            "need at least 3 distinct phases spanning more than π".into(),
        ));
    }
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for (&x, &y) in phi0.iter().zip(p) {
        let row = Vector3::new(1.0, x.cos(), x.sin());
        xtx += row * row.transpose();
        xty += row * y;
    }
    let cov = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("normal equations are singular".into()))?;
    let c = cov * xty;
    let rss: f64 = phi0
        .iter()
        .zip(p)
        .map(|(&x, &y)| (y - c[0] - c[1] * x.cos() - c[2] * x.sin()).powi(2))
        .sum();
    let n = phi0.len();
    let residual_rms = (rss / n as f64).sqrt();
    let s2 = if n > 3 { rss / (n - 3) as f64 } else { 0.0 };
    let v = cov * s2;

    // c1 = B cos φ, c2 = −B sin φ
    let b = c[1].hypot(c[2]);
    let phi = if b > 0.0 { (-c[2]).atan2(c[1]) } else { 0.0 };
    let (sigma_b, sigma_phi) = if b > 0.0 {
        let var_b =
            (c[1] * c[1] * v[(1, 1)] + c[2] * c[2] * v[(2, 2)] + 2.0 * c[1] * c[2] * v[(1, 2)])
                / (b * b);
        let var_phi = (c[2] * c[2] * v[(1, 1)] + c[1] * c[1] * v[(2, 2)]
            - 2.0 * c[1] * c[2] * v[(1, 2)])
            / b.powi(4);
        (var_b.max(0.0).sqrt(), var_phi.max(0.0).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(FringeFit {
        a: c[0],
        b,
        phi,
        residual_rms,
        sigma_a: v[(0, 0)].max(0.0).sqrt(),
        sigma_b,
        sigma_phi,
    })
}

/// Fits of both outcome fringes of one jump class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassFit {
    pub j: usize,
    pub g: FringeFit,
    pub e: FringeFit,
}

impl ClassFit {
    pub fn outcome(&self, outcome: Outcome) -> &FringeFit {
        match outcome {
            Outcome::G => &self.g,
            Outcome::E => &self.e,
        }
    }
}

pub fn fit_classes(data: &FringeDataset) -> Result<Vec<ClassFit>> {
    data.classes
        .iter()
        .map(|c| {
            Ok(ClassFit {
                j: c.j,
                g: fit_fringe(&data.phi0, &c.p_g)?,
                e: fit_fringe(&data.phi0, &c.p_e)?,
            })
        })
        .collect()
}

pub fn fit_merged(data: &FringeDataset) -> Result<FringeFit> {
    fit_fringe(&data.phi0, &data.merged().p_g)
}

/// F = (n−m)² t² B² / (A(1−A)), the optimum over φ₀ of the binary-outcome
/// Fisher information about ω.
pub fn classical_fi(fit: &FringeFit, n_minus_m: usize, t_int: f64) -> Result<f64> {
    if !(fit.a > 0.0 && fit.a < 1.0) {
        return Err(Error::DegenerateBinomial(fit.a));
    }
    let g = n_minus_m as f64 * t_int;
    Ok(g * g * fit.b * fit.b / (fit.a * (1.0 - fit.a)))
}

/// Contrast below which an empty class is treated as carrying no signal.
const EMPTY_CLASS_CONTRAST: f64 = 1e-12;

/// Σ_j Σ_l B_{l,j}² (n−m)² t² / A_{l,j} over jump-resolved fits.
pub fn qjt_fi(fits: &[ClassFit], n_minus_m: usize, t_int: f64) -> Result<f64> {
    let weight: f64 = fits.iter().map(|c| c.g.a + c.e.a).sum();
    if (weight - 1.0).abs() > 2e-2 {
        return Err(invalid(
            "fits",
            format!("class offsets sum to {weight}, expected 1"),
        ));
    }
    let g = n_minus_m as f64 * t_int;
    let mut total = 0.0;
    for c in fits {
        for outcome in Outcome::BOTH {
            let f = c.outcome(outcome);
            if f.a <= 0.0 {
                if f.b > EMPTY_CLASS_CONTRAST {
                    return Err(Error::EmptyClassWithSignal {
                        j: c.j,
                        label: outcome.as_char(),
                        a: f.a,
                        b: f.b,
                    });
                }
                continue;
            }
            total += f.b * f.b / f.a;
        }
    }
    Ok(g * g * total)
}

/// Finite-difference QFI estimate with its stability diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QfiEstimate {
    /// Richardson combination of the δ and δ/2 estimates.
    pub f_q: f64,
    pub f_q_fine: f64,
    /// Estimate at step δ.
    pub f_q_coarse: f64,
    pub delta: f64,
    pub stable: bool,
}

fn qfi_from_derivative(blocks: &[DensityMatrix], derivs: &[DensityMatrix]) -> f64 {
    let mut total = 0.0;
    for (rho, d) in blocks.iter().zip(derivs) {
        let h = (rho.elems() + rho.elems().adjoint()).scale(0.5);
        let eig = h.symmetric_eigen();
        let u = &eig.eigenvectors;
        let d_eig = u.adjoint() * d.elems() * u;
        let lam = &eig.eigenvalues;
        for j in 0..lam.len() {
            for k in 0..lam.len() {
                let s = lam[j] + lam[k];
                if s > QFI_EIGEN_CUTOFF {
                    total += 2.0 * d_eig[(j, k)].norm_sqr() / s;
                }
            }
        }
    }
    total
}

fn central_difference<F>(family: &F, omega: f64, h: f64) -> Result<Vec<DensityMatrix>>
where
    F: Fn(f64) -> Result<Vec<DensityMatrix>>,
{
    let plus = family(omega + h)?;
    let minus = family(omega - h)?;
    plus.iter()
        .zip(&minus)
        .map(|(p, m)| {
            let d = (p.elems() - m.elems()).scale(0.5 / h);
            Ok(DensityMatrix::from_matrix_unchecked(d))
        })
        .collect()
}

/// QFI of a block-diagonal family ⊕_j ρ_j(ω); blocks may be unnormalized
/// as long as their traces sum to one. Classical records (jump counts)
/// enter this way.
pub fn true_qfi_blocks<F>(family: F, omega: f64, delta: f64) -> Result<QfiEstimate>
where
    F: Fn(f64) -> Result<Vec<DensityMatrix>>,
{
    if !(delta > 0.0) {
        return Err(invalid("delta", "finite-difference step must be positive"));
    }
    let blocks = family(omega)?;
    let coarse = qfi_from_derivative(&blocks, &central_difference(&family, omega, delta)?);
    let fine = qfi_from_derivative(&blocks, &central_difference(&family, omega, 0.5 * delta)?);
    let scale = fine.abs().max(coarse.abs());
    let stable = scale == 0.0 || (fine - coarse).abs() <= QFI_STABILITY_TOLERANCE * scale;
    Ok(QfiEstimate {
        f_q: (4.0 * fine - coarse) / 3.0,
        f_q_fine: fine,
        f_q_coarse: coarse,
        delta,
        stable,
    })
}

/// F_Q = 2 Σ |⟨j|∂_ω ρ|k⟩|² / (λ_j + λ_k) from symmetric differences.
pub fn true_qfi<F>(family: F, omega: f64, delta: f64) -> Result<QfiEstimate>
where
    F: Fn(f64) -> Result<DensityMatrix>,
{
    true_qfi_blocks(|w| Ok(vec![family(w)?]), omega, delta)
}

/// Normalized Fisher rate and the sensitivities it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub strategy: Strategy,
    pub f: f64,
    pub q: f64,
    /// rad·s⁻¹/√Hz
    pub sigma_omega: f64,
    /// 1/√Hz, present when χ is known.
    pub sigma_p: Option<f64>,
    pub t_tot: f64,
}

/// Q = F/t_tot, σ_ω = 1/√Q, σ_p = σ_ω/χ.
pub fn sensitivity_report(
    strategy: Strategy,
    f: f64,
    t_tot: f64,
    chi: Option<f64>,
) -> Result<SensitivityReport> {
    if !(f >= 0.0) {
        return Err(invalid("F", format!("must be non-negative, got {f}")));
    }
    if !(t_tot > 0.0) {
        return Err(invalid("t_tot", format!("must be positive, got {t_tot}")));
    }
    let q = f / t_tot;
    let sigma_omega = 1.0 / q.sqrt();
    Ok(SensitivityReport {
        strategy,
        f,
        q,
        sigma_omega,
        sigma_p: chi.map(|c| sigma_omega / c),
        t_tot,
    })
}

/// 20·log₁₀(σ_ref/σ).
pub fn enhancement_db(sigma_ref: f64, sigma: f64) -> f64 {
    20.0 * (sigma_ref / sigma).log10()
}

/// Fisher information of a decoded final state, fitted over `phi0_grid`.
/// The jump-resolved strategy uses the per-class formula; every other
/// strategy the merged one.
pub fn fisher_of(final_state: &FinalState, strategy: Strategy, phi0_grid: &[f64]) -> Result<f64> {
    let data = final_state.fringe(phi0_grid);
    let gap = final_state.code().gap();
    match strategy {
        Strategy::QecQjt => qjt_fi(&fit_classes(&data)?, gap, final_state.t_int),
        _ => classical_fi(&fit_merged(&data)?, gap, final_state.t_int),
    }
}

/// Runs the exact engine and reports Q for `strategy`.
pub fn strategy_report(
    config: &ExperimentConfig,
    strategy: Strategy,
    chi: Option<f64>,
) -> Result<SensitivityReport> {
    let fin = evolve(config, strategy)?;
    let f = fisher_of(&fin, strategy, &config.phi0_grid)?;
    sensitivity_report(strategy, f, fin.t_tot, chi)
}

/// How radiometry curves are read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiometryMode {
    /// Merged P_g with binomial noise.
    Merged,
    /// Jump-resolved joint probabilities.
    Qjt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiometryReport {
    /// Population at which slopes are taken.
    pub p: f64,
    /// Merged P_g there.
    pub p_g: f64,
    /// ∂P_g/∂p of the merged curve (Richardson-combined).
    pub slope: f64,
    pub sigma_p: f64,
    /// Two step sizes agreed within tolerance for every slope used.
    pub stable: bool,
}

/// Central differences at the third grid point with steps h and 2h.
/// Returns (Richardson slope, stable).
fn slope_at(values: &[f64], h: f64, c: usize) -> (f64, bool) {
    let s1 = (values[c + 1] - values[c - 1]) / (2.0 * h);
    let s2 = (values[c + 2] - values[c - 2]) / (4.0 * h);
    let scale = s1.abs().max(s2.abs());
    let stable = scale < 1e-300 || (s1 - s2).abs() <= SLOPE_STABILITY_TOLERANCE * scale;
    ((4.0 * s1 - s2) / 3.0, stable)
}

/// σ_p from P(p) curves on a uniform grid starting near zero.
///
/// Slopes are central differences around the third grid point, so a grid
/// 0, h, 2h, 3h, 4h gives the response near p = 2h. A zero slope yields
/// σ_p = ∞.
pub fn radiometry_sensitivity(
    curves: &RadiometryCurves,
    mode: RadiometryMode,
) -> Result<RadiometryReport> {
    let p = &curves.p;
    if p.len() < 5 {
        return Err(invalid(
            "p_grid",
            "need at least 5 points for two-step differences",
        ));
    }
    let h = p[1] - p[0];
    let uniform = (1..5).all(|i| ((p[i] - p[i - 1]) - h).abs() <= 1e-9 * h.abs().max(1e-300));
    if !(h > 0.0) || !uniform {
        return Err(invalid(
            "p_grid",
            "first five points must be uniformly spaced and increasing",
        ));
    }
    if !(curves.t_tot > 0.0) {
        return Err(invalid("t_tot", "must be positive"));
    }
    let c = 2;
    let merged = curves.merged();
    let (slope, mut stable) = slope_at(&merged.p_g, h, c);
    let p_g = merged.p_g[c];
    let sigma_p = match mode {
        RadiometryMode::Merged => {
            if slope == 0.0 {
                f64::INFINITY
            } else {
                (p_g * (1.0 - p_g)).sqrt() * curves.t_tot.sqrt() / slope.abs()
            }
        }
        RadiometryMode::Qjt => {
            let mut q = 0.0;
            for class in &curves.classes {
                for outcome in Outcome::BOTH {
                    let values = class.probabilities(outcome);
                    let (s, ok) = slope_at(values, h, c);
                    if values[c] > 0.0 {
                        stable &= ok;
                        q += s * s / values[c];
                    }
                }
            }
            q /= curves.t_tot;
            1.0 / q.sqrt()
        }
    };
    Ok(RadiometryReport {
        p: p[c],
        p_g,
        slope,
        sigma_p,
        stable,
    })
}
