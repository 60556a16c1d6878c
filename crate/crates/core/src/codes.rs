//! Two-component Fock codes α|m⟩ + β e^{iφ₀}|n⟩, their loss recoveries
//! and the ancilla-assisted decoding measurement.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::hilbert::{expectation, DensityMatrix, FockOperator, StateVector, C64, ONE, ZERO};

/// Ancilla readout label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    G,
    E,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::G, Outcome::E];

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::G => Outcome::E,
            Outcome::E => Outcome::G,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Outcome::G => 'g',
            Outcome::E => 'e',
        }
    }

    pub fn index(self) -> usize {
        match self {
            Outcome::G => 0,
            Outcome::E => 1,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Code words |m⟩, |n⟩ with real amplitudes α, β = √(1−α²) and initial
/// phase φ₀, on a Fock space truncated at `dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeSpec {
    m: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    phi0: f64,
    dim: usize,
}

impl CodeSpec {
    pub fn new(m: usize, n: usize, alpha: f64, phi0: f64, dim: usize) -> Result<Self> {
        if m >= n {
            return Err(invalid("code", format!("need m < n, got ({m}, {n})")));
        }
        if n >= dim {
            return Err(invalid(
                "code",
                format!("upper level {n} does not fit in dim {dim}"),
            ));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !phi0.is_finite() {
            return Err(invalid("phi0", "must be finite"));
        }
        let beta = (1.0 - alpha * alpha).sqrt();
        Ok(Self {
            m,
            n,
            alpha,
            beta,
            phi0,
            dim,
        })
    }

    /// Equal-weight code (|m⟩ + e^{iφ₀}|n⟩)/√2.
    pub fn balanced(m: usize, n: usize, phi0: f64, dim: usize) -> Result<Self> {
        Self::new(m, n, std::f64::consts::FRAC_1_SQRT_2, phi0, dim)
    }

    /// Two lowest Fock levels, the no-enhancement reference probe.
    pub fn tls(alpha: f64, phi0: f64, dim: usize) -> Result<Self> {
        Self::new(0, 1, alpha, phi0, dim)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gap(&self) -> usize {
        self.n - self.m
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn with_phi0(&self, phi0: f64) -> Self {
        Self { phi0, ..*self }
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.m, self.n, alpha, self.phi0, self.dim)
    }

    /// Projector onto span{|m⟩, |n⟩}.
    pub fn projector(&self) -> FockOperator {
        let mut p = DMatrix::from_element(self.dim, self.dim, ZERO);
        p[(self.m, self.m)] = ONE;
        p[(self.n, self.n)] = ONE;
        FockOperator::from_matrix_unchecked(p)
    }

    /// (|m⟩⟨m| + |n⟩⟨n|)/2.
    pub fn mixed_code_state(&self) -> DensityMatrix {
        let mut p = DMatrix::from_element(self.dim, self.dim, ZERO);
        p[(self.m, self.m)] = C64::new(0.5, 0.0);
        p[(self.n, self.n)] = C64::new(0.5, 0.0);
        DensityMatrix::from_matrix_unchecked(p)
    }
}

/// α|m⟩ + β e^{iφ₀}|n⟩.
pub fn encode(code: &CodeSpec) -> StateVector {
    let mut amps = vec![ZERO; code.dim];
    amps[code.m] = C64::new(code.alpha, 0.0);
    amps[code.n] = C64::from_polar(code.beta, code.phi0);
    StateVector::from_amplitudes(amps).expect("code dim validated")
}

/// Permutation recovery for the `j`-photon loss error.
#[derive(Debug, Clone)]
pub struct RecoveryUnitary {
    j: usize,
    // target[src] = image of |src⟩
    target: Vec<usize>,
    op: FockOperator,
}

impl RecoveryUnitary {
    pub fn j(&self) -> usize {
        self.j
    }

    pub fn op(&self) -> &FockOperator {
        &self.op
    }

    /// Image of basis state |k⟩.
    pub fn maps(&self, k: usize) -> usize {
        self.target[k]
    }
}

/// Recovery R_j = |m⟩⟨m−j| + |n⟩⟨n−j| + R̃_j, completed to a permutation.
///
/// Basis states outside both the code and its `j`-loss image stay put; the
/// displaced code words are sent back into the vacated error levels in
/// ascending order.
pub fn transpose_recovery(code: &CodeSpec, j: usize) -> Result<RecoveryUnitary> {
    let (m, n, dim) = (code.m, code.n, code.dim);
    if j > m {
        return Err(Error::Uncorrectable { m, n, j });
    }
    if j > 0 && n - m == j {
        // the error image of |n⟩ is |m⟩ itself
        return Err(Error::Uncorrectable { m, n, j });
    }
    let sources = [m - j, n - j];
    let targets = [m, n];
    let mut target = vec![usize::MAX; dim];
    for (s, t) in sources.iter().zip(targets) {
        target[*s] = t;
    }
    for (k, slot) in target.iter_mut().enumerate() {
        if !sources.contains(&k) && !targets.contains(&k) {
            *slot = k;
        }
    }
    let free_src: Vec<usize> = targets
        .iter()
        .copied()
        .filter(|k| !sources.contains(k))
        .collect();
    let free_dst: Vec<usize> = sources
        .iter()
        .copied()
        .filter(|k| !targets.contains(k))
        .collect();
    for (s, t) in free_src.into_iter().zip(free_dst) {
        target[s] = t;
    }
    debug_assert!(target.iter().all(|&t| t < dim));
    let mut mat = DMatrix::from_element(dim, dim, ZERO);
    for (src, &dst) in target.iter().enumerate() {
        mat[(dst, src)] = ONE;
    }
    Ok(RecoveryUnitary {
        j,
        target,
        op: FockOperator::from_matrix_unchecked(mat),
    })
}

/// Two-outcome decoding measurement.
#[derive(Debug, Clone)]
pub struct DecodePovm {
    phi1: f64,
    pi_g: FockOperator,
    pi_e: FockOperator,
}

impl DecodePovm {
    pub fn phi1(&self) -> f64 {
        self.phi1
    }

    pub fn element(&self, outcome: Outcome) -> &FockOperator {
        match outcome {
            Outcome::G => &self.pi_g,
            Outcome::E => &self.pi_e,
        }
    }

    /// Tr(Π_l ρ); for unnormalized ρ this is the joint probability.
    pub fn probability(&self, rho: &DensityMatrix, outcome: Outcome) -> Result<f64> {
        Ok(expectation(rho, self.element(outcome))?.re)
    }
}

/// Π_g = |d⟩⟨d| + ½(I − P_code) with |d⟩ = (|m⟩ + e^{iφ₁}|n⟩)/√2, Π_e = I − Π_g.
///
/// A code-space state α|m⟩ + βe^{iθ}|n⟩ gives P_g = ½ + αβ cos(θ − φ₁);
/// anything outside the code splits evenly between the outcomes.
pub fn decode_povm(code: &CodeSpec, phi1: f64) -> DecodePovm {
    let dim = code.dim;
    let (m, n) = (code.m, code.n);
    let mut g = DMatrix::from_element(dim, dim, ZERO);
    for k in 0..dim {
        if k != m && k != n {
            g[(k, k)] = C64::new(0.5, 0.0);
        }
    }
    g[(m, m)] = C64::new(0.5, 0.0);
    g[(n, n)] = C64::new(0.5, 0.0);
    let c = C64::from_polar(0.5, phi1);
    g[(n, m)] = c;
    g[(m, n)] = c.conj();
    let e = DMatrix::identity(dim, dim) - &g;
    DecodePovm {
        phi1,
        pi_g: FockOperator::from_matrix_unchecked(g),
        pi_e: FockOperator::from_matrix_unchecked(e),
    }
}

/// Normalized code amplitudes after one QEC round, ignoring the
/// interrogation phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundAmplitudes {
    pub alpha: f64,
    pub beta: f64,
    pub phase: f64,
}

impl RoundAmplitudes {
    pub fn ratio(&self) -> f64 {
        self.beta / self.alpha
    }
}

/// Outcome g keeps (α, β e^{−(n−m)τ/2T1}); outcome e gives
/// (α, √(n/m) β e^{−(n−m)τ/2T1}). Both renormalized, phase untouched.
pub fn amplitudes_after_round(
    code: &CodeSpec,
    outcome: Outcome,
    tau: f64,
    t1: f64,
) -> Result<RoundAmplitudes> {
    if !(tau >= 0.0) || !(t1 > 0.0) {
        return Err(invalid("tau", "need tau >= 0 and T1 > 0"));
    }
    let decay = (-(code.gap() as f64) * tau / (2.0 * t1)).exp();
    let beta_raw = match outcome {
        Outcome::G => code.beta * decay,
        Outcome::E => {
            if code.m == 0 {
                return Err(Error::Uncorrectable {
                    m: code.m,
                    n: code.n,
                    j: 1,
                });
            }
            (code.n as f64 / code.m as f64).sqrt() * code.beta * decay
        }
    };
    let norm = (code.alpha * code.alpha + beta_raw * beta_raw).sqrt();
    Ok(RoundAmplitudes {
        alpha: code.alpha / norm,
        beta: beta_raw / norm,
        phase: code.phi0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::fock_ket;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    #[test]
    fn encode_examples() {
        let psi = encode(&CodeSpec::balanced(1, 3, FRAC_PI_2, 8).unwrap());
        assert!((psi.amp(1) - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((psi.amp(3) - C64::new(0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        let tls = encode(&CodeSpec::tls(FRAC_1_SQRT_2, 0.0, 4).unwrap());
        assert!(
            (tls.amp(0).re - FRAC_1_SQRT_2).abs() < 1e-15
                && (tls.amp(1).re - FRAC_1_SQRT_2).abs() < 1e-15
        );
        let c17 = encode(&CodeSpec::balanced(1, 7, 0.0, 20).unwrap());
        assert!((c17.amp(7).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((c17.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_codes_rejected() {
        assert!(CodeSpec::new(3, 1, 0.5, 0.0, 8).is_err());
        assert!(CodeSpec::new(1, 8, 0.5, 0.0, 8).is_err());
        assert!(CodeSpec::new(1, 3, 1.0, 0.0, 8).is_err());
        assert!(CodeSpec::new(1, 3, 0.0, 0.0, 8).is_err());
    }

    #[test]
    fn recovery_maps_error_words_home() {
        for n in [3, 5, 7] {
            let code = CodeSpec::balanced(1, n, 0.0, 20).unwrap();
            let r = transpose_recovery(&code, 1).unwrap();
            assert_eq!(r.maps(0), 1);
            assert_eq!(r.maps(n - 1), n);
            assert!(r.op().unitarity_defect() < 1e-12);
        }
        let code = CodeSpec::balanced(1, 3, 0.0, 6).unwrap();
        let r = transpose_recovery(&code, 1).unwrap();
        // swap-back completion, identity elsewhere
        assert_eq!((r.maps(1), r.maps(3), r.maps(4), r.maps(5)), (0, 2, 4, 5));
    }

    #[test]
    fn recovery_j0_is_identity() {
        let code = CodeSpec::balanced(2, 5, 0.0, 9).unwrap();
        let r = transpose_recovery(&code, 0).unwrap();
        assert!((r.op().elems() - DMatrix::<C64>::identity(9, 9)).norm() == 0.0);
    }

    #[test]
    fn recovery_rejects_uncorrectable_orders() {
        let code = CodeSpec::balanced(1, 3, 0.0, 8).unwrap();
        assert_eq!(
            transpose_recovery(&code, 2).unwrap_err(),
            Error::Uncorrectable { m: 1, n: 3, j: 2 }
        );
        let adjacent = CodeSpec::balanced(1, 2, 0.0, 8).unwrap();
        assert!(transpose_recovery(&adjacent, 1).is_err());
        let deep = CodeSpec::balanced(3, 8, 0.0, 12).unwrap();
        let r = transpose_recovery(&deep, 2).unwrap();
        assert_eq!((r.maps(1), r.maps(6)), (3, 8));
        assert!(r.op().unitarity_defect() < 1e-12);
    }

    #[test]
    fn fig1_recovery_restores_phase() {
        let dim = 6;
        let mut v = vec![ZERO; dim];
        v[0] = C64::new(0.5, 0.0);
        v[2] = C64::new(0.0, 3f64.sqrt() / 2.0);
        let err = StateVector::from_amplitudes(v).unwrap();
        let code = CodeSpec::balanced(1, 3, FRAC_PI_2, dim).unwrap();
        let back = err
            .apply(transpose_recovery(&code, 1).unwrap().op())
            .unwrap();
        assert!((back.amp(1) - C64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((back.amp(3) - C64::new(0.0, 3f64.sqrt() / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn povm_elements_are_complete_and_positive() {
        let code = CodeSpec::balanced(1, 5, 0.0, 10).unwrap();
        let p = decode_povm(&code, 0.3);
        let sum = p.element(Outcome::G).elems() + p.element(Outcome::E).elems();
        assert!((sum - DMatrix::<C64>::identity(10, 10)).norm() < 1e-12);
        for o in Outcome::BOTH {
            let rho = DensityMatrix::from_matrix(p.element(o).elems().clone()).unwrap();
            assert!(rho.eigenvalues().iter().all(|&l| l > -1e-12));
        }
    }

    #[test]
    fn povm_fringe_law() {
        let code = CodeSpec::new(1, 3, 0.6, 0.0, 8).unwrap();
        let own = encode(&CodeSpec::balanced(1, 3, 0.0, 8).unwrap()).to_density();
        let povm = decode_povm(&code, 0.0);
        assert!((povm.probability(&own, Outcome::G).unwrap() - 1.0).abs() < 1e-14);
        for (theta, phi1) in [(0.3, 0.0), (2.0, 0.7), (-1.1, PI)] {
            let rho = encode(&code.with_phi0(theta)).to_density();
            let p = decode_povm(&code, phi1)
                .probability(&rho, Outcome::G)
                .unwrap();
            let want = 0.5 + code.alpha() * code.beta() * (theta - phi1).cos();
            assert!((p - want).abs() < 1e-14);
        }
        let outside = fock_ket(4, 8).unwrap().to_density();
        assert!((povm.probability(&outside, Outcome::G).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn deformation_closed_form() {
        let code = CodeSpec::balanced(1, 3, 0.4, 8).unwrap();
        let same = amplitudes_after_round(&code, Outcome::G, 0.0, 1.0).unwrap();
        assert!(
            (same.alpha - code.alpha()).abs() < 1e-15 && (same.beta - code.beta()).abs() < 1e-15
        );
        let g = amplitudes_after_round(&code, Outcome::G, 0.1, 1.0).unwrap();
        assert!((g.ratio() - (-0.1f64).exp()).abs() < 1e-14);
        let e = amplitudes_after_round(&code, Outcome::E, 0.1, 1.0).unwrap();
        assert!((e.ratio() - 3f64.sqrt() * (-0.1f64).exp()).abs() < 1e-14);
        assert_eq!(e.phase, 0.4);
        assert!((e.alpha.hypot(e.beta) - 1.0).abs() < 1e-15);
        let tls = CodeSpec::tls(0.5, 0.0, 4).unwrap();
        assert!(amplitudes_after_round(&tls, Outcome::E, 0.1, 1.0).is_err());
    }
}
