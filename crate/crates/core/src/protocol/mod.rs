//! End-to-end sensing sequences: plain Ramsey interrogation, repeated
//! autonomous correction with recorded ancilla outcomes, and radiometry.

mod engine;
mod instrument;
mod sampling;

pub use engine::{
    evolve, run_no_qec, run_qec_sequence, run_radiometry, ClassFringe, FinalState, FringeDataset,
    RadiometryCurves, SequenceRun, TrajectoryRecord, MAX_EXACT_ROUNDS,
};
pub use instrument::{qec_instrument, QecInstrument};
pub use sampling::sample_fringe;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codes::CodeSpec;
use crate::error::{invalid, Error, Result};

/// Probe lifetime of the reference device, in seconds.
pub const DEFAULT_T1: f64 = 143e-6;

/// Fixed per-shot and per-round durations, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overheads {
    pub t_init: f64,
    pub t_encode: f64,
    pub t_qec_pulse: f64,
    pub t_readout: f64,
    pub t_reset: f64,
    pub t_decode: f64,
}

impl Default for Overheads {
    fn default() -> Self {
        Self {
            t_init: 200e-6,
            t_encode: 2e-6,
            t_qec_pulse: 2e-6,
            t_readout: 1e-6,
            t_reset: 0.1e-6,
            t_decode: 2e-6,
        }
    }
}

impl Overheads {
    pub fn zero() -> Self {
        Self {
            t_init: 0.0,
            t_encode: 0.0,
            t_qec_pulse: 0.0,
            t_readout: 0.0,
            t_reset: 0.0,
            t_decode: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.t_init,
            self.t_encode,
            self.t_qec_pulse,
            self.t_readout,
            self.t_reset,
            self.t_decode,
        ];
        if all.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(invalid(
                "overheads",
                "durations must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Classical error knobs. Each entry is a probability.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImperfectionModel {
    /// A correction round replaces the probe with the mixed code state.
    pub eps_qec: f64,
    /// Ancilla assignment error, for round readouts and the final readout.
    pub eps_readout: f64,
    /// The conditional reset fails, inverting the next round's label.
    pub eps_reset: f64,
}

impl ImperfectionModel {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn is_ideal(&self) -> bool {
        self.eps_qec == 0.0 && self.eps_readout == 0.0 && self.eps_reset == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_qec", self.eps_qec),
            ("eps_readout", self.eps_readout),
            ("eps_reset", self.eps_reset),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(
                    "imperfections",
                    format!("{name} = {v} is not a probability"),
                ));
            }
        }
        Ok(())
    }
}

/// Sensing strategy being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "TLS")]
    Tls,
    #[serde(rename = "NoQEC")]
    NoQec,
    #[serde(rename = "QEC")]
    Qec,
    #[serde(rename = "QEC+QJT")]
    QecQjt,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Tls,
        Strategy::NoQec,
        Strategy::Qec,
        Strategy::QecQjt,
    ];

    pub fn uses_qec(self) -> bool {
        matches!(self, Strategy::Qec | Strategy::QecQjt)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::Tls => "TLS",
            Strategy::NoQec => "NoQEC",
            Strategy::Qec => "QEC",
            Strategy::QecQjt => "QEC+QJT",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.tag() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown strategy `{s}`")))
    }
}

/// Everything needed to run one sensing sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub code: CodeSpec,
    pub t1: f64,
    /// Frequency shift under estimation, rad/s.
    pub omega: f64,
    /// Interrogation time per correction round, s.
    pub tau_int: f64,
    /// Number of correction rounds M.
    pub rounds: usize,
    pub overheads: Overheads,
    pub imperfections: ImperfectionModel,
    pub phi0_grid: Vec<f64>,
    /// Highest loss order kept; `None` keeps the complete family.
    pub k_max: Option<usize>,
    /// Pure dephasing rate of the probe, 1/s.
    pub dephasing_rate: f64,
    /// Readout phase of the decoder.
    pub phi1: f64,
}

/// `points` evenly spaced phases on [0, 2π).
pub fn uniform_phases(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / points as f64)
        .collect()
}

impl ExperimentConfig {
    pub fn new(code: CodeSpec, tau_int: f64, rounds: usize) -> Self {
        Self {
            code,
            t1: DEFAULT_T1,
            omega: 0.0,
            tau_int,
            rounds,
            overheads: Overheads::default(),
            imperfections: ImperfectionModel::ideal(),
            phi0_grid: uniform_phases(24),
            k_max: None,
            dephasing_rate: 0.0,
            phi1: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.code.dim()
    }

    /// Total interrogation time M·τ.
    pub fn t_int(&self) -> f64 {
        self.rounds as f64 * self.tau_int
    }

    /// Wall-clock time of one shot with correction rounds.
    pub fn t_tot_qec(&self) -> f64 {
        let o = &self.overheads;
        o.t_init
            + o.t_encode
            + self.rounds as f64 * (self.tau_int + o.t_qec_pulse + o.t_readout + o.t_reset)
            + o.t_decode
            + o.t_readout
    }

    /// Wall-clock time of one plain Ramsey shot with interrogation `t_int`.
    pub fn t_tot_no_qec(&self, t_int: f64) -> f64 {
        let o = &self.overheads;
        o.t_init + o.t_encode + t_int + o.t_decode + o.t_readout
    }

    pub fn t_tot(&self, strategy: Strategy) -> f64 {
        if strategy.uses_qec() {
            self.t_tot_qec()
        } else {
            self.t_tot_no_qec(self.t_int())
        }
    }

    pub fn with_omega(&self, omega: f64) -> Self {
        Self {
            omega,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0) || !self.t1.is_finite() {
            return Err(invalid("T1", format!("must be positive, got {}", self.t1)));
        }
        if !(self.tau_int >= 0.0) || !self.tau_int.is_finite() {
            return Err(invalid(
                "tau_int",
                format!("must be non-negative, got {}", self.tau_int),
            ));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "need at least one round"));
        }
        if !self.omega.is_finite() {
            return Err(invalid("omega", "must be finite"));
        }
        if !(self.dephasing_rate >= 0.0) {
            return Err(invalid("dephasing_rate", "must be non-negative"));
        }
        if let Some(k) = self.k_max {
            if k >= self.dim() {
                return Err(invalid(
                    "k_max",
                    format!("{k} must be below dim {}", self.dim()),
                ));
            }
        }
        self.overheads.validate()?;
        self.imperfections.validate()?;
        if self.t_tot_qec() <= 0.0 {
            return Err(invalid("overheads", "total shot time must be positive"));
        }
        Ok(())
    }
}
