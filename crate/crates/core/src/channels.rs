//! Photon-loss Kraus family, the sensing phase unitary and channel
//! application.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{annihilation, number, same_dim, DensityMatrix, FockOperator, C64, ZERO};

/// Largest completeness defect tolerated on the occupied subspace.
pub const COMPLETENESS_TOLERANCE: f64 = 1e-8;

/// Population below this level does not count as occupied.
const OCCUPATION_THRESHOLD: f64 = 1e-14;

/// Anything that maps density matrices to density matrices.
pub trait Channel {
    fn dim(&self) -> usize;

    /// Applies the map without any renormalization; linear in `rho`.
    fn apply_linear(&self, rho: &DensityMatrix) -> Result<DensityMatrix>;
}

/// Amplitude damping over an interval `t` for a mode with lifetime `t1`,
/// truncated to loss orders `0..=k_max`.
#[derive(Debug, Clone)]
pub struct KrausChannel {
    dim: usize,
    t: f64,
    t1: f64,
    k_max: usize,
    ops: Vec<FockOperator>,
    // band[k][i] = ⟨i|E_k|i+k⟩, the only nonzero entries of E_k
    band: Vec<Vec<f64>>,
}

impl KrausChannel {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn ops(&self) -> &[FockOperator] {
        &self.ops
    }

    pub fn op(&self, k: usize) -> &FockOperator {
        &self.ops[k]
    }

    /// Nonzero entries ⟨i|E_k|i+k⟩ of order `k`, indexed by i.
    pub(crate) fn band(&self, k: usize) -> &[f64] {
        &self.band[k]
    }

    /// max over n ≤ `occupied` of |Σ_k ⟨n|E_k†E_k|n⟩ − 1|.
    pub fn completeness_defect(&self, occupied: usize) -> f64 {
        (0..=occupied.min(self.dim - 1))
            .map(|n| {
                let s: f64 = (0..=self.k_max.min(n))
                    .map(|k| self.band[k][n - k].powi(2))
                    .sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Single Kraus branch `E_k ρ E_k†`, using the banded structure.
    pub fn apply_order(&self, rho: &DensityMatrix, k: usize) -> Result<DensityMatrix> {
        same_dim(self.dim, rho.dim())?;
        let mut out = DensityMatrix::zeros(self.dim);
        if k <= self.k_max {
            accumulate_band(&self.band[k], k, rho, &mut out);
        }
        Ok(out)
    }
}

fn accumulate_band(coef: &[f64], k: usize, rho: &DensityMatrix, out: &mut DensityMatrix) {
    let d = rho.dim();
    let src = rho.elems();
    let dst = out.elems_mut();
    for j in 0..d - k {
        let cj = coef[j];
        if cj == 0.0 {
            continue;
        }
        for i in 0..d - k {
            let ci = coef[i];
            if ci == 0.0 {
                continue;
            }
            let v = src[(i + k, j + k)];
            if v != ZERO {
                dst[(i, j)] += v * (ci * cj);
            }
        }
    }
}

impl Channel for KrausChannel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_linear(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        same_dim(self.dim, rho.dim())?;
        let mut out = DensityMatrix::zeros(self.dim);
        for (k, coef) in self.band.iter().enumerate() {
            accumulate_band(coef, k, rho, &mut out);
        }
        Ok(out)
    }
}

fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Closed-form loss family
/// E_k = (1−e^{−t/T1})^{k/2}/√k! · e^{−t a†a/(2T1)} · a^k.
///
/// `k_max = None` keeps every order that can act on the truncated space,
/// which makes the family exactly complete there.
pub fn damping_kraus(t: f64, t1: f64, dim: usize, k_max: Option<usize>) -> Result<KrausChannel> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(
            "t",
            format!("duration must be non-negative, got {t}"),
        ));
    }
    if !(t1 > 0.0) {
        return Err(invalid(
            "T1",
            format!("lifetime must be positive, got {t1}"),
        ));
    }
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let k_max = k_max.unwrap_or(dim - 1);
    if k_max >= dim {
        return Err(invalid("k_max", format!("{k_max} must be below dim {dim}")));
    }
    let x = t / t1;
    let loss_prob = -(-x).exp_m1();
    let mut band = Vec::with_capacity(k_max + 1);
    let mut ops = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let coef: Vec<f64> = (0..dim - k)
            .map(|i| {
                if k > 0 && loss_prob == 0.0 {
                    return 0.0;
                }
                // √(C(i+k, k)) · p^{k/2} · e^{−x i/2}, with a^k|i+k⟩ = √((i+k)!/i!)|i⟩
                let log_binom = ln_factorial(i + k) - ln_factorial(i) - ln_factorial(k);
                let log_p = if k == 0 {
                    0.0
                } else {
                    k as f64 * loss_prob.ln()
                };
                (0.5 * (log_binom + log_p) - 0.5 * x * i as f64).exp()
            })
            .collect();
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for (i, c) in coef.iter().enumerate() {
            m[(i, i + k)] = C64::new(*c, 0.0);
        }
        ops.push(FockOperator::from_matrix_unchecked(m));
        band.push(coef);
    }
    Ok(KrausChannel {
        dim,
        t,
        t1,
        k_max,
        ops,
        band,
    })
}

/// exp(−i ω t n̂).
#[derive(Debug, Clone)]
pub struct PhaseUnitary {
    omega: f64,
    t: f64,
    op: FockOperator,
}

impl PhaseUnitary {
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn op(&self) -> &FockOperator {
        &self.op
    }

    pub fn phase(&self, k: usize) -> C64 {
        self.op.get(k, k)
    }
}

pub fn phase_unitary(omega: f64, t: f64, dim: usize) -> Result<PhaseUnitary> {
    if !(t >= 0.0) {
        return Err(invalid(
            "t",
            format!("duration must be non-negative, got {t}"),
        ));
    }
    if !omega.is_finite() {
        return Err(invalid("omega", "must be finite"));
    }
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let op = FockOperator::diagonal((0..dim).map(|k| C64::from_polar(1.0, -omega * t * k as f64)))?;
    Ok(PhaseUnitary { omega, t, op })
}

impl Channel for PhaseUnitary {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_linear(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        same_dim(self.dim(), rho.dim())?;
        let mut out = rho.clone();
        let d = self.dim();
        let m = out.elems_mut();
        for j in 0..d {
            let pj = self.phase(j).conj();
            for i in 0..d {
                m[(i, j)] *= self.phase(i) * pj;
            }
        }
        Ok(out)
    }
}

/// Pure dephasing at rate `rate` over `t`: ρ_ij ← ρ_ij·e^{−rate·t·(i−j)²/2}.
#[derive(Debug, Clone)]
pub struct Dephasing {
    dim: usize,
    rate: f64,
    t: f64,
}

pub fn dephasing(rate: f64, t: f64, dim: usize) -> Result<Dephasing> {
    if !(rate >= 0.0) || !(t >= 0.0) {
        return Err(invalid(
            "dephasing",
            "rate and duration must be non-negative",
        ));
    }
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(Dephasing { dim, rate, t })
}

impl Channel for Dephasing {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_linear(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        same_dim(self.dim, rho.dim())?;
        let mut out = rho.clone();
        if self.rate == 0.0 || self.t == 0.0 {
            return Ok(out);
        }
        let m = out.elems_mut();
        for j in 0..self.dim {
            for i in 0..self.dim {
                let d = i as f64 - j as f64;
                m[(i, j)] *= (-0.5 * self.rate * self.t * d * d).exp();
            }
        }
        Ok(out)
    }
}

/// Σ_k E_k ρ E_k†, checked for truncation leaks and renormalized to the
/// input trace.
pub fn apply_channel<C: Channel + ?Sized>(rho: &DensityMatrix, ch: &C) -> Result<DensityMatrix> {
    let out = ch.apply_linear(rho)?;
    let tr_in = rho.trace();
    let tr_out = out.trace();
    if tr_in == 0.0 {
        return Ok(out);
    }
    let defect = ((tr_out - tr_in) / tr_in).abs();
    if defect >= COMPLETENESS_TOLERANCE {
        return Err(Error::TruncationLeak {
            defect,
            occupied: rho.occupied_max(OCCUPATION_THRESHOLD),
        });
    }
    Ok(out.scale(tr_in / tr_out))
}

/// Like [`apply_channel`] for a loss family, additionally checking the
/// family itself for completeness on the occupied subspace.
pub fn apply_damping(rho: &DensityMatrix, ch: &KrausChannel) -> Result<DensityMatrix> {
    let occupied = rho.occupied_max(OCCUPATION_THRESHOLD);
    let defect = ch.completeness_defect(occupied);
    if defect >= COMPLETENESS_TOLERANCE {
        return Err(Error::TruncationLeak { defect, occupied });
    }
    apply_channel(rho, ch)
}

/// Σ_k E_k ρ E_k† for an arbitrary list of operators, by dense products.
pub fn apply_kraus_dense(rho: &DensityMatrix, ops: &[FockOperator]) -> Result<DensityMatrix> {
    let mut acc = DensityMatrix::zeros(rho.dim());
    for op in ops {
        let term = rho.conjugate_by(op)?;
        acc.add_scaled(&term, 1.0);
    }
    Ok(acc)
}

/// Frobenius norms ‖[E_k, a†a]‖ for each loss order.
pub fn commutes_with_sensing_check(ch: &KrausChannel) -> Vec<f64> {
    let n = number(ch.dim).expect("channel dim is valid");
    ch.ops
        .iter()
        .map(|e| e.commutator(&n).expect("same dim").norm())
        .collect()
}

/// ‖[U, a†a]‖ for the sensing unitary.
pub fn phase_commutator_norm(u: &PhaseUnitary) -> f64 {
    let n = number(u.dim()).expect("unitary dim is valid");
    u.op.commutator(&n).expect("same dim").norm()
}

/// Bare single-photon jump a (no no-jump damping factor).
pub fn jump_operator(dim: usize) -> Result<FockOperator> {
    annihilation(dim)
}
