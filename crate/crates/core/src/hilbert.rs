//! Truncated Fock-space linear algebra for a single bosonic mode.
//!
//! States, operators and density matrices live on the basis |0⟩..|dim−1⟩.
//! All arithmetic is complex 64-bit.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Default Fock truncation for experiments with at most seven photons.
pub const DEFAULT_DIM: usize = 20;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(())
}

/// Pure state of the probe mode.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: DVector<C64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        check_dim(amps.len())?;
        Ok(Self {
            amps: DVector::from_vec(amps),
        })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn amp(&self, k: usize) -> C64 {
        self.amps[k]
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// Rescales to unit norm. A zero vector is rejected.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(invalid("state", "cannot normalize a zero vector"));
        }
        Ok(Self {
            amps: self.amps.unscale(n),
        })
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        same_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            elems: &self.amps * self.amps.adjoint(),
        }
    }

    /// Unnormalized result of `op |self⟩`.
    pub fn apply(&self, op: &FockOperator) -> Result<StateVector> {
        same_dim(op.dim(), self.dim())?;
        Ok(StateVector {
            amps: &op.elems * &self.amps,
        })
    }
}

/// Basis ket |k⟩ in a space of dimension `dim`.
pub fn fock_ket(k: usize, dim: usize) -> Result<StateVector> {
    check_dim(dim)?;
    if k >= dim {
        return Err(Error::IndexOutOfRange { index: k, dim });
    }
    let mut amps = DVector::from_element(dim, ZERO);
    amps[k] = ONE;
    Ok(StateVector { amps })
}

/// Mixed (or unnormalized, mid-computation) state of the probe mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elems: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(elems: DMatrix<C64>) -> Result<Self> {
        if elems.nrows() != elems.ncols() {
            return Err(Error::DimensionMismatch {
                expected: elems.nrows(),
                got: elems.ncols(),
            });
        }
        check_dim(elems.nrows())?;
        Ok(Self { elems })
    }

    pub(crate) fn from_matrix_unchecked(elems: DMatrix<C64>) -> Self {
        Self { elems }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            elems: DMatrix::from_element(dim, dim, ZERO),
        }
    }

    /// Maximally mixed state I/dim.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            elems: DMatrix::identity(dim, dim).unscale(dim as f64),
        })
    }

    pub fn dim(&self) -> usize {
        self.elems.nrows()
    }

    pub fn elems(&self) -> &DMatrix<C64> {
        &self.elems
    }

    pub(crate) fn elems_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.elems
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.elems
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.elems[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.elems.trace().re
    }

    pub fn population(&self, k: usize) -> f64 {
        self.elems[(k, k)].re
    }

    pub fn normalize(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 || !tr.is_finite() {
            return Err(invalid(
                "density matrix",
                format!("trace {tr} cannot be normalized"),
            ));
        }
        Ok(Self {
            elems: self.elems.unscale(tr),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            elems: self.elems.scale(s),
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &DensityMatrix, s: f64) {
        self.elems.zip_apply(&other.elems, |a, b| *a += b * s);
    }

    /// Largest deviation from Hermiticity over all entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.elems[(i, j)] - self.elems[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.elems + self.elems.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().iter().copied().collect()
    }

    /// Highest Fock level carrying population above `threshold`.
    pub fn occupied_max(&self, threshold: f64) -> usize {
        (0..self.dim())
            .rev()
            .find(|&k| self.population(k) > threshold)
            .unwrap_or(0)
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        same_dim(self.dim(), other.dim())?;
        let diff = &self.elems - &other.elems;
        let h = (&diff + diff.adjoint()).scale(0.5);
        Ok(0.5
            * h.symmetric_eigenvalues()
                .iter()
                .map(|l| l.abs())
                .sum::<f64>())
    }

    /// Conjugation `U ρ U†`.
    pub fn conjugate_by(&self, op: &FockOperator) -> Result<Self> {
        same_dim(op.dim(), self.dim())?;
        Ok(Self {
            elems: &op.elems * &self.elems * op.elems.adjoint(),
        })
    }
}

/// Dense operator on the truncated mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    elems: DMatrix<C64>,
}

impl FockOperator {
    pub fn from_matrix(elems: DMatrix<C64>) -> Result<Self> {
        if elems.nrows() != elems.ncols() {
            return Err(Error::DimensionMismatch {
                expected: elems.nrows(),
                got: elems.ncols(),
            });
        }
        check_dim(elems.nrows())?;
        Ok(Self { elems })
    }

    pub(crate) fn from_matrix_unchecked(elems: DMatrix<C64>) -> Self {
        Self { elems }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            elems: DMatrix::identity(dim, dim),
        })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            elems: DMatrix::from_element(dim, dim, ZERO),
        })
    }

    /// Diagonal operator with the given entries.
    pub fn diagonal(diag: impl IntoIterator<Item = C64>) -> Result<Self> {
        let v: Vec<C64> = diag.into_iter().collect();
        check_dim(v.len())?;
        Ok(Self {
            elems: DMatrix::from_diagonal(&DVector::from_vec(v)),
        })
    }

    pub fn dim(&self) -> usize {
        self.elems.nrows()
    }

    pub fn elems(&self) -> &DMatrix<C64> {
        &self.elems
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.elems[(i, j)]
    }

    pub fn adjoint(&self) -> Self {
        Self {
            elems: self.elems.adjoint(),
        }
    }

    pub fn mul(&self, rhs: &FockOperator) -> Result<Self> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            elems: &self.elems * &rhs.elems,
        })
    }

    pub fn commutator(&self, rhs: &FockOperator) -> Result<Self> {
        same_dim(self.dim(), rhs.dim())?;
        Ok(Self {
            elems: &self.elems * &rhs.elems - &rhs.elems * &self.elems,
        })
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.elems.norm()
    }

    /// Largest entrywise deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.elems.adjoint() * &self.elems;
        let d = self.dim();
        (&p - DMatrix::<C64>::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn same_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Annihilation operator: entries (k−1, k) = √k.
pub fn annihilation(dim: usize) -> Result<FockOperator> {
    check_dim(dim)?;
    let mut a = DMatrix::from_element(dim, dim, ZERO);
    for k in 1..dim {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    Ok(FockOperator { elems: a })
}

pub fn creation(dim: usize) -> Result<FockOperator> {
    Ok(annihilation(dim)?.adjoint())
}

/// n̂ = a†a, built directly as diag(0..dim−1).
pub fn number(dim: usize) -> Result<FockOperator> {
    FockOperator::diagonal((0..dim).map(|k| C64::new(k as f64, 0.0)))
}

/// Photon-number parity (−1)^n̂.
pub fn parity(dim: usize) -> Result<FockOperator> {
    FockOperator::diagonal((0..dim).map(|k| if k % 2 == 0 { ONE } else { -ONE }))
}

/// Tr(ρ·op).
pub fn expectation(rho: &DensityMatrix, op: &FockOperator) -> Result<C64> {
    same_dim(rho.dim(), op.dim())?;
    let d = rho.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += rho.elems[(i, k)] * op.elems[(k, i)];
        }
    }
    Ok(acc)
}

/// Displacement D(β) = exp(β a† − β* a) on the truncated space.
pub fn displacement(beta: C64, dim: usize) -> Result<FockOperator> {
    let a = annihilation(dim)?;
    let gen = a.elems.adjoint() * beta - &a.elems * beta.conj();
    Ok(FockOperator { elems: gen.exp() })
}

/// Matrix element ⟨row|D(γ)|col⟩ of the untruncated displacement operator.
fn displacement_element(row: usize, col: usize, gamma: C64) -> C64 {
    let x = gamma.norm_sqr();
    let (lo, hi) = if row >= col { (col, row) } else { (row, col) };
    let diff = hi - lo;
    // √(lo!/hi!) accumulated as a product to stay finite
    let mut ratio = 1.0f64;
    for k in (lo + 1)..=hi {
        ratio /= (k as f64).sqrt();
    }
    let lag = generalized_laguerre(lo, diff as f64, x);
    let prefactor = (-0.5 * x).exp() * ratio * lag;
    let power = if row >= col {
        gamma.powu(diff as u32)
    } else {
        (-gamma.conj()).powu(diff as u32)
    };
    power * prefactor
}

/// L_n^{(a)}(x) by the three-term recurrence.
pub(crate) fn generalized_laguerre(n: usize, a: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Wigner function samples plus a flag raised when ρ has population near
/// the truncation edge.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerSamples {
    pub values: Vec<f64>,
    pub truncation_warning: bool,
}

/// Population allowed in the top two Fock levels before warning.
pub const WIGNER_EDGE_TOLERANCE: f64 = 1e-6;

/// W(β) = (2/π) Tr[D(−β) ρ D(β) P] at each grid point.
///
/// Uses D(β) P D(−β) = D(2β) P and closed-form displacement matrix elements,
/// so the value carries no error from truncating D itself.
pub fn wigner(rho: &DensityMatrix, grid: &[C64]) -> Result<WignerSamples> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty phase-space grid"));
    }
    let d = rho.dim();
    let edge: f64 = (d.saturating_sub(2)..d).map(|k| rho.population(k)).sum();
    let support = rho.occupied_max(1e-15) + 1;
    let values = grid
        .iter()
        .map(|&beta| {
            let gamma = beta * 2.0;
            let mut acc = ZERO;
            for m in 0..support {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                for n in 0..support {
                    let r = rho.elems[(m, n)];
                    if r == ZERO {
                        continue;
                    }
                    acc += r * displacement_element(n, m, gamma) * sign;
                }
            }
            acc.re * 2.0 / std::f64::consts::PI
        })
        .collect();
    Ok(WignerSamples {
        values,
        truncation_warning: edge >= WIGNER_EDGE_TOLERANCE,
    })
}

/// Wigner function through a truncated matrix exponential; slower, only
/// trustworthy while the displaced state fits in `work_dim`.
pub fn wigner_via_expm(rho: &DensityMatrix, grid: &[C64], work_dim: usize) -> Result<Vec<f64>> {
    if work_dim < rho.dim() {
        return Err(invalid("work_dim", "must be at least the state dimension"));
    }
    let mut padded = DMatrix::from_element(work_dim, work_dim, ZERO);
    padded
        .view_mut((0, 0), (rho.dim(), rho.dim()))
        .copy_from(&rho.elems);
    let par = parity(work_dim)?;
    grid.iter()
        .map(|&beta| {
            let dp = displacement(beta, work_dim)?;
            let dm = dp.adjoint();
            let shifted = &dm.elems * &padded * &dp.elems;
            let w = (shifted * &par.elems).trace();
            Ok(w.re * 2.0 / std::f64::consts::PI)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn psi13() -> StateVector {
        let mut v = vec![ZERO; 8];
        v[1] = C64::new(FRAC_1_SQRT_2, 0.0);
        v[3] = C64::new(FRAC_1_SQRT_2, 0.0);
        StateVector::from_amplitudes(v).unwrap()
    }

    #[test]
    fn fock_ket_basics() {
        let k = fock_ket(0, 4).unwrap();
        assert_eq!(k.amp(0), ONE);
        assert!((1..4).all(|i| k.amp(i) == ZERO));
        let k = fock_ket(3, 8).unwrap();
        assert_eq!(k.amp(3), ONE);
        assert_eq!(k.norm(), 1.0);
        assert_eq!(
            fock_ket(5, 4),
            Err(Error::IndexOutOfRange { index: 5, dim: 4 })
        );
    }

    #[test]
    fn annihilation_elements() {
        let a = annihilation(3).unwrap();
        assert_eq!(a.get(0, 1), ONE);
        assert_eq!(a.get(1, 2), C64::new(2f64.sqrt(), 0.0));
        assert_eq!(a.get(0, 2), ZERO);
        assert!(annihilation(1).is_err());

        let lowered = fock_ket(1, 3).unwrap().apply(&a).unwrap();
        assert_eq!(lowered, fock_ket(0, 3).unwrap());

        let a8 = annihilation(8).unwrap();
        let n = a8.adjoint().mul(&a8).unwrap();
        let out = fock_ket(3, 8).unwrap().apply(&n).unwrap();
        for k in 0..8 {
            let want = if k == 3 { 3.0 } else { 0.0 };
            assert!((out.amp(k) - C64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn number_operator_spectrum_is_exact() {
        let a = annihilation(12).unwrap();
        let n = a.adjoint().mul(&a).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { i as f64 } else { 0.0 };
                assert!((n.get(i, j).re - want).abs() < 1e-13);
            }
        }
        let exact = number(12).unwrap();
        assert!((0..12).all(|k| exact.get(k, k).re == k as f64));
    }

    #[test]
    fn expectation_values() {
        let rho = fock_ket(2, 6).unwrap().to_density();
        assert_eq!(
            expectation(&rho, &number(6).unwrap()).unwrap(),
            C64::new(2.0, 0.0)
        );
        let mixed = DensityMatrix::maximally_mixed(6).unwrap();
        assert_eq!(
            expectation(&mixed, &annihilation(6).unwrap()).unwrap(),
            ZERO
        );
        let rho = psi13().to_density();
        let n = expectation(&rho, &number(8).unwrap()).unwrap();
        assert!((n.re - 2.0).abs() < 1e-14 && n.im.abs() < 1e-14);
        assert!(expectation(&rho, &number(5).unwrap()).is_err());
    }

    #[test]
    fn wigner_fock_values_at_origin() {
        let w0 = wigner(&fock_ket(0, 6).unwrap().to_density(), &[ZERO]).unwrap();
        assert!((w0.values[0] - 2.0 / PI).abs() < 1e-14);
        assert!(!w0.truncation_warning);
        let w1 = wigner(&fock_ket(1, 6).unwrap().to_density(), &[ZERO]).unwrap();
        assert!((w1.values[0] + 2.0 / PI).abs() < 1e-14);
        assert!(wigner(&fock_ket(1, 6).unwrap().to_density(), &[]).is_err());
    }

    #[test]
    fn wigner_vacuum_is_gaussian() {
        let rho = fock_ket(0, 4).unwrap().to_density();
        let pts = [C64::new(0.3, -0.2), C64::new(1.1, 0.4)];
        let w = wigner(&rho, &pts).unwrap();
        for (b, v) in pts.iter().zip(w.values) {
            let want = 2.0 / PI * (-2.0 * b.norm_sqr()).exp();
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn wigner_edge_population_warns() {
        let rho = fock_ket(5, 6).unwrap().to_density();
        assert!(wigner(&rho, &[ZERO]).unwrap().truncation_warning);
    }

    #[test]
    fn wigner_psi13_has_inversion_symmetry() {
        let rho = psi13().to_density();
        let mut grid = Vec::new();
        for i in -6..=6 {
            for j in -6..=6 {
                grid.push(C64::new(0.37 * i as f64, 0.29 * j as f64));
            }
        }
        let neg: Vec<C64> = grid.iter().map(|b| -b).collect();
        let w = wigner(&rho, &grid).unwrap().values;
        let wn = wigner(&rho, &neg).unwrap().values;
        for (x, y) in w.iter().zip(&wn) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_matrix_exponential() {
        let mut v = vec![ZERO; 10];
        v[1] = C64::new(0.6, 0.0);
        v[3] = C64::new(0.0, 0.8);
        let rho = StateVector::from_amplitudes(v).unwrap().to_density();
        let grid: Vec<C64> = (0..9)
            .map(|k| C64::from_polar(0.15 * k as f64, 0.7 * k as f64))
            .collect();
        let fast = wigner(&rho, &grid).unwrap().values;
        let slow = wigner_via_expm(&rho, &grid, 70).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn wigner_integrates_to_one() {
        let mut v = vec![ZERO; 20];
        v[1] = C64::new(FRAC_1_SQRT_2, 0.0);
        v[7] = C64::new(0.0, FRAC_1_SQRT_2);
        let rho = StateVector::from_amplitudes(v).unwrap().to_density();
        let h = 0.05;
        let mut grid = Vec::new();
        let steps = (5.0 / h) as i32;
        for i in -steps..=steps {
            for j in -steps..=steps {
                let b = C64::new(i as f64 * h, j as f64 * h);
                if b.norm() <= 5.0 {
                    grid.push(b);
                }
            }
        }
        let total: f64 = wigner(&rho, &grid).unwrap().values.iter().sum::<f64>() * h * h;
        assert!((total - 1.0).abs() < 1e-2, "integral {total}");
    }

    #[test]
    fn normalize_and_trace_distance() {
        let s = StateVector::from_amplitudes(vec![C64::new(3.0, 0.0), C64::new(0.0, 4.0)]).unwrap();
        let u = s.normalize().unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-15);
        let r = fock_ket(0, 2).unwrap().to_density();
        let q = fock_ket(1, 2).unwrap().to_density();
        assert!((r.trace_distance(&q).unwrap() - 1.0).abs() < 1e-14);
        let z = StateVector::from_amplitudes(vec![ZERO, ZERO]).unwrap();
        assert!(z.normalize().is_err());
    }

    #[test]
    fn displacement_is_unitary_and_moves_vacuum() {
        let d = displacement(C64::new(0.5, 0.2), 40).unwrap();
        assert!(d.unitarity_defect() < 1e-12);
        let coh = fock_ket(0, 40).unwrap().apply(&d).unwrap();
        let a = annihilation(40).unwrap();
        let mean = expectation(&coh.to_density(), &a).unwrap();
        assert!((mean - C64::new(0.5, 0.2)).norm() < 1e-10);
    }
}
