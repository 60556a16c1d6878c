use rayon::prelude::*;

use crate::channels::{damping_kraus, dephasing, phase_unitary, Channel};
use crate::codes::{decode_povm, encode, CodeSpec, DecodePovm, Outcome};
use crate::error::{invalid, Error, Result};
use crate::hilbert::{DensityMatrix, C64};

use super::instrument::QecInstrument;
use super::{ExperimentConfig, Strategy};

/// Exact per-outcome-string branching is limited to this many rounds.
pub const MAX_EXACT_ROUNDS: usize = 16;

/// Jump-class aggregation grows linearly in M; this only bounds memory.
const MAX_AGGREGATED_ROUNDS: usize = 4096;

/// One recorded outcome string of the correction rounds.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub outcomes: Vec<Outcome>,
    /// Number of e labels in `outcomes`.
    pub j: usize,
    pub prob: f64,
    /// Probe state conditioned on this record (zero when `prob` is zero).
    pub rho_cond: DensityMatrix,
}

/// Joint probabilities P_{g,j}, P_{e,j} over a grid (of φ₀ or of p).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFringe {
    pub j: usize,
    pub p_g: Vec<f64>,
    pub p_e: Vec<f64>,
}

impl ClassFringe {
    pub fn probabilities(&self, outcome: Outcome) -> &[f64] {
        match outcome {
            Outcome::G => &self.p_g,
            Outcome::E => &self.p_e,
        }
    }
}

/// Decoded fringes resolved by jump count.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    pub phi0: Vec<f64>,
    pub classes: Vec<ClassFringe>,
    /// Set when the probabilities are sampled frequencies.
    pub shots: Option<u64>,
}

impl FringeDataset {
    /// Sum over jump classes; P_g + P_e = 1 at every point.
    pub fn merged(&self) -> ClassFringe {
        let len = self.phi0.len();
        let mut p_g = vec![0.0; len];
        let mut p_e = vec![0.0; len];
        for c in &self.classes {
            for i in 0..len {
                p_g[i] += c.p_g[i];
                p_e[i] += c.p_e[i];
            }
        }
        ClassFringe { j: 0, p_g, p_e }
    }
}

/// Unnormalized probe states at the end of the sequence, one per jump
/// class, ready for decoding. The sequence is run at φ₀ = 0; other initial
/// phases follow from the phase covariance of every step.
#[derive(Debug, Clone)]
pub struct FinalState {
    code: CodeSpec,
    classes: Vec<DensityMatrix>,
    povm: DecodePovm,
    eps_readout: f64,
    pub t_int: f64,
    pub t_tot: f64,
}

impl FinalState {
    pub fn code(&self) -> &CodeSpec {
        &self.code
    }

    pub fn classes(&self) -> &[DensityMatrix] {
        &self.classes
    }

    pub fn class_probability(&self, j: usize) -> f64 {
        self.classes[j].trace()
    }

    /// ρ^{(tot)} = Σ_j ρ_j.
    pub fn merged_state(&self) -> DensityMatrix {
        let mut acc = DensityMatrix::zeros(self.code.dim());
        for c in &self.classes {
            acc.add_scaled(c, 1.0);
        }
        acc
    }

    /// Probe state as it would be had the code been prepared with `phi0`.
    pub fn rotated(&self, j: usize, phi0: f64) -> DensityMatrix {
        let theta = phi0 / self.code.gap() as f64;
        let src = &self.classes[j];
        let dim = src.dim();
        let mut out = src.clone();
        let m = out.elems_mut();
        for b in 0..dim {
            for a in 0..dim {
                m[(a, b)] *= C64::from_polar(1.0, theta * (a as f64 - b as f64));
            }
        }
        out
    }

    /// Joint probability of class `j` and recorded final label `outcome`.
    pub fn probability(&self, j: usize, outcome: Outcome, phi0: f64) -> f64 {
        let rho = self.rotated(j, phi0);
        let pg = self.povm.probability(&rho, Outcome::G).expect("dims agree");
        let pe = self.povm.probability(&rho, Outcome::E).expect("dims agree");
        let eps = self.eps_readout;
        match outcome {
            Outcome::G => (1.0 - eps) * pg + eps * pe,
            Outcome::E => (1.0 - eps) * pe + eps * pg,
        }
    }

    pub fn fringe(&self, phi0: &[f64]) -> FringeDataset {
        let classes = (0..self.classes.len())
            .map(|j| ClassFringe {
                j,
                p_g: phi0
                    .iter()
                    .map(|&p| self.probability(j, Outcome::G, p))
                    .collect(),
                p_e: phi0
                    .iter()
                    .map(|&p| self.probability(j, Outcome::E, p))
                    .collect(),
            })
            .collect();
        FringeDataset {
            phi0: phi0.to_vec(),
            classes,
            shots: None,
        }
    }

    /// Initial phase at which the merged P_g has the steepest response to
    /// an acquired phase.
    pub fn slope_optimal_phi0(&self) -> f64 {
        let merged = self.merged_state();
        let coh = merged.get(self.code.m(), self.code.n());
        coh.arg() + self.povm.phi1() + std::f64::consts::FRAC_PI_2
    }
}

fn decode_for(config: &ExperimentConfig, code: &CodeSpec) -> DecodePovm {
    decode_povm(code, config.phi1)
}

fn tls_code(config: &ExperimentConfig) -> Result<CodeSpec> {
    CodeSpec::tls(std::f64::consts::FRAC_1_SQRT_2, 0.0, config.dim())
}

/// Plain Ramsey evolution for `t_int` without correction.
fn evolve_plain(config: &ExperimentConfig, code: &CodeSpec, t_int: f64) -> Result<FinalState> {
    let dim = code.dim();
    let rho0 = encode(&code.with_phi0(0.0)).to_density();
    let rotated = phase_unitary(config.omega, t_int, dim)?.apply_linear(&rho0)?;
    let damped = damping_kraus(t_int, config.t1, dim, config.k_max)?.apply_linear(&rotated)?;
    let final_state = dephasing(config.dephasing_rate, t_int, dim)?.apply_linear(&damped)?;
    Ok(FinalState {
        code: *code,
        classes: vec![final_state],
        povm: decode_for(config, code),
        eps_readout: config.imperfections.eps_readout,
        t_int,
        t_tot: config.t_tot_no_qec(t_int),
    })
}

fn instrument_for(config: &ExperimentConfig) -> Result<QecInstrument> {
    QecInstrument::new(
        &config.code,
        config.tau_int,
        config.t1,
        config.omega,
        config.imperfections,
        config.k_max,
        config.dephasing_rate,
    )
}

/// Adds `state` to the child slot for recorded label `label`, splitting
/// it between the "reset ok" and "reset failed" flags.
fn route(
    slots: &mut [Option<DensityMatrix>; 2],
    state: DensityMatrix,
    label: Outcome,
    eps_reset: f64,
) {
    let mut add = |flag: usize, s: &DensityMatrix, w: f64| match &mut slots[flag] {
        Some(acc) => acc.add_scaled(s, w),
        None => slots[flag] = Some(s.scale(w)),
    };
    if label == Outcome::E && eps_reset > 0.0 {
        add(0, &state, 1.0 - eps_reset);
        add(1, &state, eps_reset);
    } else {
        add(0, &state, 1.0);
    }
}

/// One round applied to a (flag-resolved) branch; returns the child slots
/// for recorded labels g and e.
fn step(
    inst: &QecInstrument,
    slots: &[Option<DensityMatrix>; 2],
) -> Result<[[Option<DensityMatrix>; 2]; 2]> {
    let eps_reset = inst.imperfections().eps_reset;
    let mut children: [[Option<DensityMatrix>; 2]; 2] = Default::default();
    for (flag, slot) in slots.iter().enumerate() {
        let Some(rho) = slot else { continue };
        let branches = inst.recorded_branches(rho)?;
        for (label, state) in Outcome::BOTH.into_iter().zip(branches) {
            let recorded = if flag == 1 { label.flipped() } else { label };
            route(&mut children[recorded.index()], state, recorded, eps_reset);
        }
    }
    Ok(children)
}

fn sum_slots(slots: &[Option<DensityMatrix>; 2], dim: usize) -> DensityMatrix {
    let mut acc = DensityMatrix::zeros(dim);
    for s in slots.iter().flatten() {
        acc.add_scaled(s, 1.0);
    }
    acc
}

/// Correction rounds with states aggregated by jump count j. Exact, and
/// linear in M rather than exponential.
fn evolve_rounds(config: &ExperimentConfig) -> Result<FinalState> {
    let rounds = config.rounds;
    if rounds > MAX_AGGREGATED_ROUNDS {
        return Err(Error::BranchExplosion {
            rounds,
            limit: MAX_AGGREGATED_ROUNDS,
        });
    }
    let inst = instrument_for(config)?;
    let dim = config.dim();
    let rho0 = encode(&config.code.with_phi0(0.0)).to_density();
    let mut classes: Vec<[Option<DensityMatrix>; 2]> = vec![[Some(rho0), None]];
    for _ in 0..rounds {
        let mut next: Vec<[Option<DensityMatrix>; 2]> = vec![Default::default(); classes.len() + 1];
        for (j, slots) in classes.iter().enumerate() {
            let [to_g, to_e] = step(&inst, slots)?;
            for (offset, child) in [(0, to_g), (1, to_e)] {
                for (flag, s) in child.into_iter().enumerate() {
                    if let Some(s) = s {
                        match &mut next[j + offset][flag] {
                            Some(acc) => acc.add_scaled(&s, 1.0),
                            none => *none = Some(s),
                        }
                    }
                }
            }
        }
        classes = next;
    }
    Ok(FinalState {
        code: config.code,
        classes: classes.iter().map(|s| sum_slots(s, dim)).collect(),
        povm: decode_for(config, &config.code),
        eps_readout: config.imperfections.eps_readout,
        t_int: config.t_int(),
        t_tot: config.t_tot_qec(),
    })
}

/// Final probe states for `strategy`, exact, at φ₀ = 0.
///
/// Plain strategies interrogate for the same total time M·τ as the
/// corrected ones; the reference strategy swaps the code for the
/// balanced two-lowest-level probe.
pub fn evolve(config: &ExperimentConfig, strategy: Strategy) -> Result<FinalState> {
    config.validate()?;
    match strategy {
        Strategy::Tls => evolve_plain(config, &tls_code(config)?, config.t_int()),
        Strategy::NoQec => evolve_plain(config, &config.code, config.t_int()),
        Strategy::Qec | Strategy::QecQjt => evolve_rounds(config),
    }
}

/// Ramsey sequence without correction: interrogate for M·τ, decode.
pub fn run_no_qec(config: &ExperimentConfig) -> Result<FringeDataset> {
    Ok(evolve(config, Strategy::NoQec)?.fringe(&config.phi0_grid))
}

/// Records and decoded fringes of a corrected sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub records: Vec<TrajectoryRecord>,
    pub fringe: FringeDataset,
    pub final_state: FinalState,
}

/// Exact branching over all 2^M recorded outcome strings.
pub fn run_qec_sequence(config: &ExperimentConfig) -> Result<SequenceRun> {
    config.validate()?;
    let rounds = config.rounds;
    if rounds > MAX_EXACT_ROUNDS {
        return Err(Error::BranchExplosion {
            rounds,
            limit: MAX_EXACT_ROUNDS,
        });
    }
    let inst = instrument_for(config)?;
    let dim = config.dim();
    let rho0 = encode(&config.code.with_phi0(0.0)).to_density();
    let mut branches: Vec<(Vec<Outcome>, [Option<DensityMatrix>; 2])> =
        vec![(Vec::new(), [Some(rho0), None])];
    for _ in 0..rounds {
        let mut next = Vec::with_capacity(branches.len() * 2);
        for (outcomes, slots) in &branches {
            let [to_g, to_e] = step(&inst, slots)?;
            for (label, child) in [(Outcome::G, to_g), (Outcome::E, to_e)] {
                let mut o = outcomes.clone();
                o.push(label);
                next.push((o, child));
            }
        }
        branches = next;
    }

    let mut classes = vec![DensityMatrix::zeros(dim); rounds + 1];
    let mut records = Vec::with_capacity(branches.len());
    for (outcomes, slots) in branches {
        let state = sum_slots(&slots, dim);
        let j = outcomes.iter().filter(|o| **o == Outcome::E).count();
        classes[j].add_scaled(&state, 1.0);
        let prob = state.trace();
        let rho_cond = if prob > 0.0 {
            state.normalize()?
        } else {
            state
        };
        records.push(TrajectoryRecord {
            outcomes,
            j,
            prob,
            rho_cond,
        });
    }
    let final_state = FinalState {
        code: config.code,
        classes,
        povm: decode_for(config, &config.code),
        eps_readout: config.imperfections.eps_readout,
        t_int: config.t_int(),
        t_tot: config.t_tot_qec(),
    };
    let fringe = final_state.fringe(&config.phi0_grid);
    Ok(SequenceRun {
        records,
        fringe,
        final_state,
    })
}

/// Decoded probabilities as functions of the receiver population p.
#[derive(Debug, Clone)]
pub struct RadiometryCurves {
    pub strategy: Strategy,
    pub code: CodeSpec,
    pub p: Vec<f64>,
    pub phi0: f64,
    pub chi: f64,
    pub t_int: f64,
    pub t_tot: f64,
    /// Per class, probabilities indexed like `p`.
    pub classes: Vec<ClassFringe>,
}

impl RadiometryCurves {
    pub fn merged(&self) -> ClassFringe {
        FringeDataset {
            phi0: self.p.clone(),
            classes: self.classes.clone(),
            shots: None,
        }
        .merged()
    }
}

/// Sweeps the receiver population: ω = χ·p, decoded at a fixed φ₀.
///
/// With `phi0 = None` the initial phase is chosen for maximal slope at
/// p = 0.
pub fn run_radiometry(
    config: &ExperimentConfig,
    strategy: Strategy,
    p_grid: &[f64],
    chi: f64,
    phi0: Option<f64>,
) -> Result<RadiometryCurves> {
    if !(chi > 0.0) {
        return Err(invalid("chi", format!("must be positive, got {chi}")));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(invalid("p_grid", format!("population {p} outside [0, 1]")));
    }
    let reference = evolve(&config.with_omega(0.0), strategy)?;
    let phi0 = phi0.unwrap_or_else(|| reference.slope_optimal_phi0());
    let finals: Vec<FinalState> = p_grid
        .par_iter()
        .map(|&p| evolve(&config.with_omega(chi * p), strategy))
        .collect::<Result<_>>()?;
    let n_classes = finals.first().map_or(0, |f| f.classes().len());
    let classes = (0..n_classes)
        .map(|j| ClassFringe {
            j,
            p_g: finals
                .iter()
                .map(|f| f.probability(j, Outcome::G, phi0))
                .collect(),
            p_e: finals
                .iter()
                .map(|f| f.probability(j, Outcome::E, phi0))
                .collect(),
        })
        .collect();
    Ok(RadiometryCurves {
        strategy,
        code: *reference.code(),
        p: p_grid.to_vec(),
        phi0,
        chi,
        t_int: reference.t_int,
        t_tot: reference.t_tot,
        classes,
    })
}
