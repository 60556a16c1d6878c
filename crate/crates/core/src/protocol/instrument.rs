use crate::channels::{
    damping_kraus, dephasing, phase_unitary, Channel, Dephasing, KrausChannel, PhaseUnitary,
};
use crate::codes::{transpose_recovery, CodeSpec, Outcome, RecoveryUnitary};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, ZERO};

use super::ImperfectionModel;

/// One interrogation interval followed by an autonomous correction pulse
/// and an ancilla readout.
///
/// The pulse acts as a fixed probe–ancilla unitary: a probe found in
/// |m−1⟩ or |n−1⟩ is moved to |m⟩ or |n⟩ while the ancilla flips to |e⟩;
/// every other Fock level is left alone with the ancilla in |g⟩. Losses of
/// two or more photons therefore pass through unrecovered and read as g
/// unless they happen to land on an error level.
#[derive(Debug, Clone)]
pub struct QecInstrument {
    code: CodeSpec,
    damping: KrausChannel,
    phase: PhaseUnitary,
    dephasing: Dephasing,
    recovery: RecoveryUnitary,
    imperfections: ImperfectionModel,
}

/// Builds the round instrument. `k_max = None` keeps every loss order.
pub fn qec_instrument(
    code: &CodeSpec,
    tau_int: f64,
    t1: f64,
    imperfections: ImperfectionModel,
) -> Result<QecInstrument> {
    QecInstrument::new(code, tau_int, t1, 0.0, imperfections, None, 0.0)
}

impl QecInstrument {
    pub fn new(
        code: &CodeSpec,
        tau_int: f64,
        t1: f64,
        omega: f64,
        imperfections: ImperfectionModel,
        k_max: Option<usize>,
        dephasing_rate: f64,
    ) -> Result<Self> {
        if code.m() == 0 {
            return Err(Error::Uncorrectable {
                m: code.m(),
                n: code.n(),
                j: 1,
            });
        }
        imperfections.validate()?;
        let dim = code.dim();
        Ok(Self {
            code: *code,
            damping: damping_kraus(tau_int, t1, dim, k_max)?,
            phase: phase_unitary(omega, tau_int, dim)?,
            dephasing: dephasing(dephasing_rate, tau_int, dim)?,
            recovery: transpose_recovery(code, 1)?,
            imperfections,
        })
    }

    pub fn code(&self) -> &CodeSpec {
        &self.code
    }

    pub fn imperfections(&self) -> &ImperfectionModel {
        &self.imperfections
    }

    pub fn damping(&self) -> &KrausChannel {
        &self.damping
    }

    fn error_levels(&self) -> [usize; 2] {
        [self.code.m() - 1, self.code.n() - 1]
    }

    /// Free evolution over the interval: phase, loss and dephasing.
    pub fn interrogate(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let rotated = self.phase.apply_linear(rho)?;
        let damped = self.damping.apply_linear(&rotated)?;
        self.dephasing.apply_linear(&damped)
    }

    /// Correction pulse on an already interrogated state, for the true
    /// ancilla outcome `outcome`, without classical imperfections.
    pub fn correct(&self, evolved: &DensityMatrix, outcome: Outcome) -> DensityMatrix {
        let err = self.error_levels();
        let dim = evolved.dim();
        let src = evolved.elems();
        let mut out = DensityMatrix::zeros(dim);
        let dst = out.elems_mut();
        match outcome {
            Outcome::G => {
                for j in 0..dim {
                    if err.contains(&j) {
                        continue;
                    }
                    for i in 0..dim {
                        if !err.contains(&i) {
                            dst[(i, j)] = src[(i, j)];
                        }
                    }
                }
            }
            Outcome::E => {
                for &a in &err {
                    for &b in &err {
                        let v = src[(a, b)];
                        if v != ZERO {
                            dst[(self.recovery.maps(a), self.recovery.maps(b))] = v;
                        }
                    }
                }
            }
        }
        out
    }

    /// Ideal outcome map M_l(ρ) = Σ_k K_l E_k ρ E_k† K_l†, unnormalized.
    pub fn ideal_branch(&self, rho: &DensityMatrix, outcome: Outcome) -> Result<DensityMatrix> {
        Ok(self.correct(&self.interrogate(rho)?, outcome))
    }

    /// Correction with the pulse-error mixture applied: with probability
    /// eps_qec the branch state is replaced by the mixed code state.
    pub fn faulty_correct(&self, evolved: &DensityMatrix, outcome: Outcome) -> DensityMatrix {
        let branch = self.correct(evolved, outcome);
        let eps = self.imperfections.eps_qec;
        if eps == 0.0 {
            return branch;
        }
        let weight = branch.trace();
        let mut out = branch.scale(1.0 - eps);
        out.add_scaled(&self.code.mixed_code_state(), eps * weight);
        out
    }

    /// Branch maps keyed by the recorded label, including pulse errors and
    /// readout flips but not reset failures (those depend on history).
    pub fn recorded_branches(&self, rho: &DensityMatrix) -> Result<[DensityMatrix; 2]> {
        let evolved = self.interrogate(rho)?;
        let g = self.faulty_correct(&evolved, Outcome::G);
        let e = self.faulty_correct(&evolved, Outcome::E);
        let flip = self.imperfections.eps_readout;
        if flip == 0.0 {
            return Ok([g, e]);
        }
        let mut rec_g = g.scale(1.0 - flip);
        rec_g.add_scaled(&e, flip);
        let mut rec_e = e.scale(1.0 - flip);
        rec_e.add_scaled(&g, flip);
        Ok([rec_g, rec_e])
    }
}
