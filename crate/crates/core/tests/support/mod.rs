//! Independent oracles for the integration and acceptance tests. Nothing
//! here calls into the channel or analysis code under test.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qecsense::codes::Outcome;
use qecsense::hilbert::DensityMatrix;
use qecsense::protocol::{evolve, ExperimentConfig, Strategy};

pub type Mat = DMatrix<Complex64>;

/// Tolerances pinned from the acceptance criteria.
pub mod tol {
    pub const LINDBLAD_TRACE_DISTANCE: f64 = 1e-6;
    pub const COMPLETENESS: f64 = 1e-8;
    pub const FIG1_STATE: f64 = 1e-12;
    pub const PHASE_PRESERVATION: f64 = 1e-12;
    pub const DEFORMATION: f64 = 1e-9;
    pub const FISHER_RELATIVE: f64 = 1e-6;
    pub const SLOPE_RATIO: f64 = 0.01;
    pub const STRATEGY_MARGIN: f64 = 0.05;
    pub const QJT_REFINEMENT: f64 = 1e-9;
    pub const ENHANCEMENT_DB: f64 = 0.05;
    pub const ACQUIRED_PHASE: f64 = 1e-12;
    pub const CALIBRATION_SOFT: f64 = 0.15;
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Lowering operator built directly from its matrix elements.
pub fn lowering(dim: usize) -> Mat {
    let mut a = Mat::zeros(dim, dim);
    for k in 1..dim {
        a[(k - 1, k)] = c((k as f64).sqrt());
    }
    a
}

/// Right-hand side of dρ/dt = −i[H, ρ] + Σ_L (L ρ L† − ½{L†L, ρ}).
fn lindblad_rhs(h: &Mat, jumps: &[Mat], rho: &Mat) -> Mat {
    let i = Complex64::new(0.0, 1.0);
    let mut d = (h * rho - rho * h) * (-i);
    for l in jumps {
        let ld = l.adjoint();
        let ldl = &ld * l;
        d += l * rho * &ld - (&ldl * rho + rho * &ldl) * c(0.5);
    }
    d
}

/// Fixed-step RK4 integration, returning the state at each requested time
/// (which must be increasing multiples of `step`).
pub fn lindblad_rk4(h: &Mat, jumps: &[Mat], rho0: &Mat, step: f64, times: &[f64]) -> Vec<Mat> {
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let steps = ((target - t) / step).round() as usize;
        for _ in 0..steps {
            let k1 = lindblad_rhs(h, jumps, &rho);
            let k2 = lindblad_rhs(h, jumps, &(&rho + &k1 * c(0.5 * step)));
            let k3 = lindblad_rhs(h, jumps, &(&rho + &k2 * c(0.5 * step)));
            let k4 = lindblad_rhs(h, jumps, &(&rho + &k3 * c(step)));
            rho += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(step / 6.0);
        }
        t += steps as f64 * step;
        out.push(rho.clone());
    }
    out
}

/// Amplitude damping at rate 1/T1 by direct integration.
pub fn damping_by_integration(rho0: &Mat, t1: f64, times: &[f64]) -> Vec<Mat> {
    let dim = rho0.nrows();
    let jump = lowering(dim) * c((1.0 / t1).sqrt());
    lindblad_rk4(&Mat::zeros(dim, dim), &[jump], rho0, t1 / 1000.0, times)
}

/// ½ Σ |eigenvalues of (ρ − σ)|.
pub fn trace_distance(a: &Mat, b: &Mat) -> f64 {
    let d = a - b;
    let herm = (&d + d.adjoint()) * c(0.5);
    0.5 * herm
        .symmetric_eigenvalues()
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
}

/// Random full-rank-ish density matrix G G† / Tr from a Ginibre matrix.
pub fn random_density(dim: usize, rank: usize, rng: &mut ChaCha8Rng) -> Mat {
    let g = Mat::from_fn(dim, rank, |_, _| {
        Complex64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        )
    });
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    rho / c(tr)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn to_density(m: &Mat) -> DensityMatrix {
    DensityMatrix::from_matrix(m.clone()).expect("valid density matrix")
}

/// Brute-force binary-outcome Fisher information Σ_l (∂_ω P_l)² / P_l on a
/// uniform φ₀ scan. ∂_ω is a Richardson-combined symmetric difference of
/// full engine runs at ω ± h, ω ± 2h. Returns (max, argmax φ₀).
pub fn scanned_fisher(
    config: &ExperimentConfig,
    strategy: Strategy,
    points: usize,
    h: f64,
) -> (f64, f64) {
    let w0 = config.omega;
    let finals: Vec<_> = [w0, w0 + h, w0 - h, w0 + 2.0 * h, w0 - 2.0 * h]
        .iter()
        .map(|&w| evolve(&config.with_omega(w), strategy).expect("engine runs"))
        .collect();
    let probs = |k: usize, phi0: f64| -> [f64; 2] {
        let fin = &finals[k];
        let mut p = [0.0; 2];
        for j in 0..fin.classes().len() {
            p[0] += fin.probability(j, Outcome::G, phi0);
            p[1] += fin.probability(j, Outcome::E, phi0);
        }
        p
    };
    (0..points)
        .map(|i| {
            let phi0 = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
            let p: Vec<[f64; 2]> = (0..5).map(|k| probs(k, phi0)).collect();
            let f: f64 = (0..2)
                .map(|l| {
                    let d1 = (p[1][l] - p[2][l]) / (2.0 * h);
                    let d2 = (p[3][l] - p[4][l]) / (4.0 * h);
                    let d = (4.0 * d1 - d2) / 3.0;
                    d * d / p[0][l]
                })
                .sum();
            (f, phi0)
        })
        .fold((f64::NEG_INFINITY, 0.0), |best, x| {
            if x.0 > best.0 {
                x
            } else {
                best
            }
        })
}

/// Criterion line in the acceptance output. Written through the stdout
/// handle rather than `println!` so it survives the harness's capture.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    line(&format!(
        "criterion {id:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    ));
}

pub fn line(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}
