//! Strict TOML run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::DEFAULT_CHI;
use crate::codes::CodeSpec;
use crate::error::{Error, Result};
use crate::hilbert::DEFAULT_DIM;
use crate::protocol::{
    uniform_phases, ExperimentConfig, ImperfectionModel, Overheads, Strategy, DEFAULT_T1,
    MAX_EXACT_ROUNDS,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    VirtualPhase,
    QecSweep,
    Radiometry,
    Optimize,
    Wigner,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::VirtualPhase => "virtual_phase",
            ExperimentKind::QecSweep => "qec_sweep",
            ExperimentKind::Radiometry => "radiometry",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Wigner => "wigner",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: OutputSpec,
    pub config: ConfigSpec,
    #[serde(default)]
    pub virtual_phase: Option<VirtualPhaseSpec>,
    #[serde(default)]
    pub qec_sweep: Option<SweepSpec>,
    #[serde(default)]
    pub radiometry: Option<RadiometrySpec>,
    #[serde(default)]
    pub optimize: Option<OptimizeSpec>,
    #[serde(default)]
    pub wigner: Option<WignerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Relative paths resolve against the manifest's directory.
    pub dir: PathBuf,
    pub results: String,
    pub summary: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            results: "results.csv".into(),
            summary: "summary.toml".into(),
        }
    }
}

/// Probe, device and sequence settings shared by every kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub m: usize,
    pub n: usize,
    /// Amplitude of |m⟩; balanced when omitted.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_t1")]
    pub t1: f64,
    #[serde(default)]
    pub omega: f64,
    pub tau_int: f64,
    #[serde(default = "one")]
    pub rounds: usize,
    #[serde(default = "default_phi0_points")]
    pub phi0_points: usize,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub dephasing_rate: f64,
    #[serde(default)]
    pub phi1: f64,
    #[serde(default = "default_chi")]
    pub chi: f64,
    #[serde(default)]
    pub overheads: Overheads,
    #[serde(default)]
    pub imperfections: ImperfectionModel,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}
fn default_t1() -> f64 {
    DEFAULT_T1
}
fn one() -> usize {
    1
}
fn default_phi0_points() -> usize {
    24
}
fn default_chi() -> f64 {
    DEFAULT_CHI
}
fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

impl ConfigSpec {
    pub fn code(&self, m: usize, n: usize) -> Result<CodeSpec> {
        match self.alpha {
            Some(a) => CodeSpec::new(m, n, a, 0.0, self.dim),
            None => CodeSpec::balanced(m, n, 0.0, self.dim),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        self.experiment_for(self.m, self.n)
    }

    /// Same settings with another code pair.
    pub fn experiment_for(&self, m: usize, n: usize) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.code(m, n)?, self.tau_int, self.rounds);
        cfg.t1 = self.t1;
        cfg.omega = self.omega;
        cfg.overheads = self.overheads;
        cfg.imperfections = self.imperfections;
        cfg.phi0_grid = uniform_phases(self.phi0_points);
        cfg.k_max = self.k_max;
        cfg.dephasing_rate = self.dephasing_rate;
        cfg.phi1 = self.phi1;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualPhaseSpec {
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    /// Round counts M to run; `config.rounds` when omitted.
    #[serde(default)]
    pub rounds: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    /// t_int = M·τ for each listed M.
    pub rounds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiometrySpec {
    /// (m, n) pairs; (0, 1) is run as the reference probe.
    pub codes: Vec<[usize; 2]>,
    #[serde(default = "qjt_only")]
    pub strategy: Strategy,
    /// Uniform population grid starting at zero.
    pub p_step: f64,
    #[serde(default = "default_p_points")]
    pub p_points: usize,
    /// Fixed decoder phase; slope-optimal when omitted.
    #[serde(default)]
    pub phi0: Option<f64>,
}

fn qjt_only() -> Strategy {
    Strategy::QecQjt
}
fn default_p_points() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSpec {
    pub strategy: Strategy,
    pub tau_bounds: [f64; 2],
    pub max_rounds: usize,
    #[serde(default)]
    pub alpha_points: Option<usize>,
    #[serde(default)]
    pub tau_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WignerSource {
    /// The encoded code word.
    Code,
    /// The code word after one bare photon jump, renormalized.
    Jump,
    /// The jump followed by the j = 1 recovery.
    Recovered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSpec {
    pub source: WignerSource,
    /// Initial relative phase of the code word.
    #[serde(default)]
    pub phi0: f64,
    pub re_range: [f64; 2],
    pub im_range: [f64; 2],
    pub points: usize,
}

fn manifest_error(msg: impl Into<String>) -> Error {
    Error::Manifest(msg.into())
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let manifest: RunManifest =
            toml::from_str(text).map_err(|e| manifest_error(e.to_string()))?;
        manifest.check()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Manifest(msg) => Error::Manifest(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn sections(&self) -> [(ExperimentKind, bool); 5] {
        [
            (ExperimentKind::VirtualPhase, self.virtual_phase.is_some()),
            (ExperimentKind::QecSweep, self.qec_sweep.is_some()),
            (ExperimentKind::Radiometry, self.radiometry.is_some()),
            (ExperimentKind::Optimize, self.optimize.is_some()),
            (ExperimentKind::Wigner, self.wigner.is_some()),
        ]
    }

    /// Schema and invariant checks that do not run any simulation.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(manifest_error(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for (kind, present) in self.sections() {
            if present && kind != self.kind {
                return Err(manifest_error(format!(
                    "section [{}] does not belong to kind `{}`",
                    kind.tag(),
                    self.kind.tag()
                )));
            }
        }
        if self.kind != ExperimentKind::VirtualPhase
            && self.sections().iter().all(|(k, p)| *k != self.kind || !p)
        {
            return Err(manifest_error(format!(
                "kind `{}` needs a [{}] section",
                self.kind.tag(),
                self.kind.tag()
            )));
        }
        self.config.experiment()?;
        if let Some(r) = &self.radiometry {
            if r.codes.is_empty() {
                return Err(manifest_error("radiometry.codes is empty"));
            }
            for [m, n] in &r.codes {
                self.config.experiment_for(*m, *n)?;
            }
            if !(r.p_step > 0.0) || r.p_points < 5 || r.p_step * (r.p_points - 1) as f64 > 1.0 {
                return Err(manifest_error(
                    "radiometry needs p_step > 0, p_points ≥ 5 and a grid inside [0, 1]",
                ));
            }
        }
        if let Some(s) = &self.qec_sweep {
            if s.rounds.is_empty() || s.rounds.contains(&0) {
                return Err(manifest_error(
                    "qec_sweep.rounds must list positive round counts",
                ));
            }
        }
        if let Some(v) = &self.virtual_phase {
            if v.rounds
                .as_ref()
                .is_some_and(|r| r.is_empty() || r.contains(&0))
            {
                return Err(manifest_error(
                    "virtual_phase.rounds must list positive round counts",
                ));
            }
        }
        if let Some(w) = &self.wigner {
            if w.points < 2 || !(w.re_range[0] < w.re_range[1]) || !(w.im_range[0] < w.im_range[1])
            {
                return Err(manifest_error(
                    "wigner needs points ≥ 2 and increasing ranges",
                ));
            }
            if w.source != WignerSource::Code && self.config.m == 0 {
                return Err(manifest_error(
                    "jump and recovered Wigner sources need m ≥ 1",
                ));
            }
        }
        Ok(())
    }

    /// Largest number of correction rounds any run of this manifest uses.
    pub fn max_rounds(&self) -> usize {
        match self.kind {
            ExperimentKind::VirtualPhase => self
                .virtual_phase
                .as_ref()
                .and_then(|v| v.rounds.as_ref())
                .and_then(|r| r.iter().copied().max())
                .unwrap_or(self.config.rounds),
            ExperimentKind::QecSweep => self
                .qec_sweep
                .as_ref()
                .map_or(0, |s| s.rounds.iter().copied().max().unwrap_or(0)),
            ExperimentKind::Radiometry => self.config.rounds,
            ExperimentKind::Optimize => self.optimize.as_ref().map_or(0, |o| o.max_rounds),
            ExperimentKind::Wigner => 0,
        }
    }

    /// Exact branching keeps one density matrix per outcome string, so the
    /// round count is capped unless shots are sampled.
    pub fn check_branching(&self, sampled: bool) -> Result<()> {
        let rounds = self.max_rounds();
        if !sampled && rounds > MAX_EXACT_ROUNDS {
            return Err(Error::BranchExplosion {
                rounds,
                limit: MAX_EXACT_ROUNDS,
            });
        }
        Ok(())
    }
}
