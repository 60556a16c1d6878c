//! Declarative experiment runner: `run` and `validate` on TOML manifests.

mod manifest;
mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use manifest::{
    ConfigSpec, ExperimentKind, OptimizeSpec, OutputSpec, RadiometrySpec, RunManifest, SweepSpec,
    VirtualPhaseSpec, WignerSource, WignerSpec, SCHEMA_VERSION,
};
pub use output::{num, ResultTable, Summary};

use output::Entry;

use crate::analysis::{
    classical_fi, enhancement_db, fit_classes, fit_merged, qjt_fi, radiometry_sensitivity,
    sensitivity_report, strategy_report, FringeFit, RadiometryMode, SensitivityReport,
};
use crate::channels::jump_operator;
use crate::codes::{encode, transpose_recovery, Outcome};
use crate::error::{Error, Result};
use crate::hilbert::{wigner, C64};
use crate::optimize::{optimize_q, OptimizationProblem};
use crate::protocol::{
    evolve, run_qec_sequence, run_radiometry, sample_fringe, ExperimentConfig, FringeDataset,
    Strategy,
};

#[derive(Debug, Parser)]
#[command(
    name = "qecsense",
    version,
    about = "Error-corrected bosonic sensing experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a manifest.
    Run {
        manifest: PathBuf,
        #[command(flatten)]
        options: RunOptions,
    },
    /// Check a manifest without running it.
    Validate { manifest: PathBuf },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunOptions {
    /// Overrides the manifest's output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Estimate fringes from this many sampled shots per grid point.
    #[arg(long)]
    pub sampled: Option<u64>,
    /// Seed for sampled mode; overrides the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Paths of the files a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub rows: usize,
}

/// Executes a parsed command, returning the text to print.
pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { manifest, options } => {
            if let Some(threads) = options.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .map_err(|e| Error::Manifest(format!("--threads: {e}")))?;
            }
            let a = run(&manifest, &options)?;
            Ok(format!(
                "wrote {} rows to {}\nsummary: {}",
                a.rows,
                a.results.display(),
                a.summary.display()
            ))
        }
        Command::Validate { manifest } => validate(&manifest),
    }
}

/// Parses and checks a manifest, reporting resolved timings.
pub fn validate(path: &Path) -> Result<String> {
    let manifest = RunManifest::load(path)?;
    manifest.check_branching(false)?;
    let cfg = manifest.config.experiment()?;
    let rounds = manifest.max_rounds();
    let mut lines = vec![
        "ok".to_string(),
        format!("kind = {}", manifest.kind.tag()),
        format!(
            "code = ({}, {}), alpha = {:.6}",
            cfg.code.m(),
            cfg.code.n(),
            cfg.code.alpha()
        ),
        format!("tau_int = {:.4e} s, rounds = {}", cfg.tau_int, cfg.rounds),
    ];
    for strategy in Strategy::ALL {
        lines.push(format!("t_tot[{strategy}] = {:.4e} s", cfg.t_tot(strategy)));
    }
    lines.push(format!(
        "max rounds = {rounds}, exact branches = 2^{rounds} = {}",
        1u64 << rounds
    ));
    Ok(lines.join("\n"))
}

/// Loads a manifest and runs it. Relative output paths resolve against
/// the manifest's directory.
pub fn run(path: &Path, options: &RunOptions) -> Result<RunArtifacts> {
    let manifest = RunManifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_manifest(&manifest, base, options)
}

pub fn run_manifest(
    manifest: &RunManifest,
    base_dir: &Path,
    options: &RunOptions,
) -> Result<RunArtifacts> {
    manifest.check()?;
    manifest.check_branching(options.sampled.is_some())?;
    if options.sampled.is_some() && manifest.kind != ExperimentKind::VirtualPhase {
        return Err(Error::Manifest(
            "--sampled applies to virtual_phase runs only".into(),
        ));
    }
    let dir = match &options.output_dir {
        Some(d) => d.clone(),
        None if manifest.output.dir.is_absolute() => manifest.output.dir.clone(),
        None => base_dir.join(&manifest.output.dir),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;

    let seed = options.seed.or(manifest.seed).unwrap_or(0);
    let mut summary = Summary::default();
    summary.set("schema_version", SCHEMA_VERSION as i64);
    summary.set("kind", manifest.kind.tag());
    summary.section("config", resolved_config(&manifest.config));
    if let Some(shots) = options.sampled {
        summary.set("sampled_shots", shots as i64);
        summary.set("seed", seed as i64);
    }

    let table = match manifest.kind {
        ExperimentKind::VirtualPhase => {
            virtual_phase(manifest, options.sampled.map(|s| (s, seed)), &mut summary)?
        }
        ExperimentKind::QecSweep => qec_sweep(manifest, &mut summary)?,
        ExperimentKind::Radiometry => radiometry(manifest, &mut summary)?,
        ExperimentKind::Optimize => optimize(manifest, &mut summary)?,
        ExperimentKind::Wigner => wigner_grid(manifest, &mut summary)?,
    };

    let results = dir.join(&manifest.output.results);
    let summary_path = dir.join(&manifest.output.summary);
    table.write(&results)?;
    summary.write(&summary_path)?;
    Ok(RunArtifacts {
        results,
        summary: summary_path,
        rows: table.len(),
    })
}

fn resolved_config(c: &ConfigSpec) -> toml::Table {
    let o = &c.overheads;
    let i = &c.imperfections;
    let alpha = c
        .code(c.m, c.n)
        .map(|code| code.alpha())
        .unwrap_or(f64::NAN);
    Entry::new()
        .with("m", c.m as i64)
        .with("n", c.n as i64)
        .with("alpha", alpha)
        .with("dim", c.dim as i64)
        .with("t1_s", c.t1)
        .with("omega_rad_per_s", c.omega)
        .with("tau_int_s", c.tau_int)
        .with("rounds", c.rounds as i64)
        .with("phi0_points", c.phi0_points as i64)
        .with("k_max", c.k_max.map_or(-1, |k| k as i64))
        .with("dephasing_rate_per_s", c.dephasing_rate)
        .with("phi1_rad", c.phi1)
        .with("chi_rad_per_s", c.chi)
        .with("t_init_s", o.t_init)
        .with("t_encode_s", o.t_encode)
        .with("t_qec_pulse_s", o.t_qec_pulse)
        .with("t_readout_s", o.t_readout)
        .with("t_reset_s", o.t_reset)
        .with("t_decode_s", o.t_decode)
        .with("eps_qec", i.eps_qec)
        .with("eps_readout", i.eps_readout)
        .with("eps_reset", i.eps_reset)
        .build()
}

fn fit_entry(fit: &FringeFit, report: &SensitivityReport) -> Entry {
    Entry::new()
        .with("A", fit.a)
        .with("A_err", fit.sigma_a)
        .with("B", fit.b)
        .with("B_err", fit.sigma_b)
        .with("phi_rad", fit.phi)
        .with("phi_err_rad", fit.sigma_phi)
        .with("residual_rms", fit.residual_rms)
        .with("F_s2", report.f)
        .with("Q_per_s", report.q)
        .with("sigma_omega", report.sigma_omega)
        .opt("sigma_p", report.sigma_p)
        .with("t_tot_s", report.t_tot)
}

fn dataset_for(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    sampled: Option<(u64, u64)>,
) -> Result<FringeDataset> {
    match sampled {
        Some((shots, seed)) => sample_fringe(cfg, strategy, shots, seed),
        None if strategy.uses_qec() => Ok(run_qec_sequence(cfg)?.fringe),
        None => Ok(evolve(cfg, strategy)?.fringe(&cfg.phi0_grid)),
    }
}

fn report_for(
    data: &FringeDataset,
    cfg: &ExperimentConfig,
    strategy: Strategy,
    chi: f64,
) -> Result<(FringeFit, SensitivityReport)> {
    let gap = if strategy == Strategy::Tls {
        1
    } else {
        cfg.code.gap()
    };
    let merged = fit_merged(data)?;
    let f = match strategy {
        Strategy::QecQjt => qjt_fi(&fit_classes(data)?, gap, cfg.t_int())?,
        _ => classical_fi(&merged, gap, cfg.t_int())?,
    };
    Ok((
        merged,
        sensitivity_report(strategy, f, cfg.t_tot(strategy), Some(chi))?,
    ))
}

fn virtual_phase(
    manifest: &RunManifest,
    sampled: Option<(u64, u64)>,
    summary: &mut Summary,
) -> Result<ResultTable> {
    let section = manifest.virtual_phase.clone().unwrap_or(VirtualPhaseSpec {
        strategies: Strategy::ALL.to_vec(),
        rounds: None,
    });
    let base = manifest.config.experiment()?;
    let rounds = section.rounds.clone().unwrap_or(vec![base.rounds]);
    let chi = manifest.config.chi;
    let mut table = ResultTable::new(&[
        "strategy",
        "rounds",
        "t_int_s",
        "phi0_rad",
        "j",
        "outcome",
        "probability",
    ]);

    for &m in &rounds {
        let mut cfg = base.clone();
        cfg.rounds = m;
        let tls_data = dataset_for(&cfg, Strategy::Tls, sampled)?;
        let (_, tls_report) = report_for(&tls_data, &cfg, Strategy::Tls, chi)?;
        for &strategy in &section.strategies {
            let at = |e: Error| Error::Evaluation {
                params: format!("{strategy}, M={m}"),
                source: Box::new(e),
            };
            let data = if strategy == Strategy::Tls {
                tls_data.clone()
            } else {
                dataset_for(&cfg, strategy, sampled).map_err(at)?
            };
            let (fit, report) = report_for(&data, &cfg, strategy, chi).map_err(at)?;
            for class in &data.classes {
                for outcome in Outcome::BOTH {
                    for (phi0, p) in data.phi0.iter().zip(class.probabilities(outcome)) {
                        table.push(vec![
                            strategy.tag().into(),
                            m.to_string(),
                            num(cfg.t_int()),
                            num(*phi0),
                            class.j.to_string(),
                            outcome.as_char().to_string(),
                            num(*p),
                        ]);
                    }
                }
            }
            let entry = fit_entry(&fit, &report)
                .with("strategy", strategy.tag())
                .with("rounds", m as i64)
                .with("t_int_s", cfg.t_int())
                .with(
                    "enhancement_db",
                    enhancement_db(tls_report.sigma_omega, report.sigma_omega),
                );
            summary.push_entry("runs", entry.build());
        }
    }
    Ok(table)
}

fn qec_sweep(manifest: &RunManifest, summary: &mut Summary) -> Result<ResultTable> {
    let section = manifest.qec_sweep.as_ref().expect("checked");
    let base = manifest.config.experiment()?;
    let chi = manifest.config.chi;
    let mut table = ResultTable::new(&[
        "strategy",
        "rounds",
        "t_int_s",
        "t_tot_s",
        "F_s2",
        "Q_per_s",
        "sigma_omega",
        "sigma_p",
    ]);
    for &strategy in &section.strategies {
        let reports: Vec<SensitivityReport> = section
            .rounds
            .par_iter()
            .map(|&m| {
                let mut cfg = base.clone();
                if strategy.uses_qec() {
                    cfg.rounds = m;
                } else {
                    cfg.tau_int = base.tau_int * m as f64;
                    cfg.rounds = 1;
                }
                strategy_report(&cfg, strategy, Some(chi)).map_err(|e| Error::Evaluation {
                    params: format!("{strategy}, M={m}"),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, (&m, r)) in section.rounds.iter().zip(&reports).enumerate() {
            table.push(vec![
                strategy.tag().into(),
                m.to_string(),
                num(m as f64 * base.tau_int),
                num(r.t_tot),
                num(r.f),
                num(r.q),
                num(r.sigma_omega),
                num(r.sigma_p.unwrap_or(f64::NAN)),
            ]);
            if r.q > reports[best].q {
                best = i;
            }
        }
        let r = &reports[best];
        let entry = Entry::new()
            .with("strategy", strategy.tag())
            .with("best_rounds", section.rounds[best] as i64)
            .with("best_t_int_s", section.rounds[best] as f64 * base.tau_int)
            .with("Q_per_s", r.q)
            .with("F_s2", r.f)
            .with("sigma_omega", r.sigma_omega)
            .opt("sigma_p", r.sigma_p);
        summary.push_entry("peaks", entry.build());
    }
    Ok(table)
}

/// Derivative of samples on a uniform grid: central inside, one-sided at
/// the ends.
fn gradient(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| match i {
            0 => (values[1] - values[0]) / h,
            _ if i == n - 1 => (values[n - 1] - values[n - 2]) / h,
            _ => (values[i + 1] - values[i - 1]) / (2.0 * h),
        })
        .collect()
}

fn radiometry(manifest: &RunManifest, summary: &mut Summary) -> Result<ResultTable> {
    let section = manifest.radiometry.as_ref().expect("checked");
    let chi = manifest.config.chi;
    let p_grid: Vec<f64> = (0..section.p_points)
        .map(|i| i as f64 * section.p_step)
        .collect();
    let mut table = ResultTable::new(&[
        "strategy",
        "m",
        "n",
        "p",
        "j",
        "P_g",
        "slope_per_p",
        "sigma_p",
    ]);

    let run_code = |m: usize, n: usize| -> Result<_> {
        let cfg = manifest.config.experiment_for(m, n)?;
        let strategy = if m == 0 {
            Strategy::NoQec
        } else {
            section.strategy
        };
        let curves = run_radiometry(&cfg, strategy, &p_grid, chi, section.phi0).map_err(|e| {
            Error::Evaluation {
                params: format!("code ({m}, {n})"),
                source: Box::new(e),
            }
        })?;
        let mode = if strategy == Strategy::QecQjt {
            RadiometryMode::Qjt
        } else {
            RadiometryMode::Merged
        };
        let report = radiometry_sensitivity(&curves, mode)?;
        Ok((strategy, curves, report))
    };
    let (_, _, reference) = run_code(0, 1)?;

    for &[m, n] in &section.codes {
        let (strategy, curves, report) = run_code(m, n)?;
        let merged = curves.merged();
        let mut columns: Vec<(String, &[f64])> = curves
            .classes
            .iter()
            .map(|c| (c.j.to_string(), c.p_g.as_slice()))
            .collect();
        columns.push(("merged".into(), merged.p_g.as_slice()));
        for (label, values) in columns {
            for ((p, pg), slope) in p_grid
                .iter()
                .zip(values)
                .zip(gradient(values, section.p_step))
            {
                table.push(vec![
                    strategy.tag().into(),
                    m.to_string(),
                    n.to_string(),
                    num(*p),
                    label.clone(),
                    num(*pg),
                    num(slope),
                    num(report.sigma_p),
                ]);
            }
        }
        let entry = Entry::new()
            .with("strategy", strategy.tag())
            .with("m", m as i64)
            .with("n", n as i64)
            .with("phi0_rad", curves.phi0)
            .with("p_eval", report.p)
            .with("P_g", report.p_g)
            .with("slope_per_p", report.slope)
            .with("sigma_p", report.sigma_p)
            .with("slope_stable", report.stable)
            .with("t_tot_s", curves.t_tot)
            .with(
                "enhancement_db",
                enhancement_db(reference.sigma_p, report.sigma_p),
            );
        summary.push_entry("codes", entry.build());
    }
    summary.set("sigma_p_reference", reference.sigma_p);
    Ok(table)
}

fn optimize(manifest: &RunManifest, summary: &mut Summary) -> Result<ResultTable> {
    let section = manifest.optimize.as_ref().expect("checked");
    let cfg = manifest.config.experiment()?;
    let mut problem = OptimizationProblem::new(
        cfg,
        section.strategy,
        (section.tau_bounds[0], section.tau_bounds[1]),
        section.max_rounds,
    );
    if let Some(a) = section.alpha_points {
        problem.alpha_points = a;
    }
    if let Some(t) = section.tau_points {
        problem.tau_points = t;
    }
    let result = optimize_q(&problem)?;
    let mut table = ResultTable::new(&[
        "index",
        "alpha",
        "tau_int_s",
        "rounds",
        "t_int_s",
        "Q_per_s",
    ]);
    for (i, e) in result.trace.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            num(e.params.alpha),
            num(e.params.tau_int),
            e.params.rounds.to_string(),
            num(e.params.t_int()),
            num(e.q),
        ]);
    }
    let sigma_omega = 1.0 / result.best_q.sqrt();
    let entry = Entry::new()
        .with("strategy", section.strategy.tag())
        .with("alpha", result.best.alpha)
        .with("tau_int_s", result.best.tau_int)
        .with("rounds", result.best.rounds as i64)
        .with("t_int_s", result.best.t_int())
        .with("Q_per_s", result.best_q)
        .with("grid_best_Q_per_s", result.grid_best_q)
        .with("sigma_omega", sigma_omega)
        .with("sigma_p", sigma_omega / manifest.config.chi)
        .with("converged", result.converged)
        .with("evaluations", result.trace.len() as i64);
    summary.section("best", entry.build());
    Ok(table)
}

fn wigner_grid(manifest: &RunManifest, summary: &mut Summary) -> Result<ResultTable> {
    let section = manifest.wigner.as_ref().expect("checked");
    let cfg = manifest.config.experiment()?;
    let code = cfg.code.with_phi0(section.phi0);
    let mut psi = encode(&code);
    if section.source != WignerSource::Code {
        psi = psi.apply(&jump_operator(code.dim())?)?.normalize()?;
    }
    if section.source == WignerSource::Recovered {
        psi = psi.apply(transpose_recovery(&code, 1)?.op())?;
    }
    let rho = psi.to_density();
    let axis = |r: [f64; 2]| -> Vec<f64> {
        (0..section.points)
            .map(|i| r[0] + (r[1] - r[0]) * i as f64 / (section.points - 1) as f64)
            .collect()
    };
    let (re, im) = (axis(section.re_range), axis(section.im_range));
    let grid: Vec<C64> = im
        .iter()
        .flat_map(|&y| re.iter().map(move |&x| C64::new(x, y)))
        .collect();
    let samples = wigner(&rho, &grid)?;
    let mut table = ResultTable::new(&["re_beta", "im_beta", "W"]);
    for (b, w) in grid.iter().zip(&samples.values) {
        table.push(vec![num(b.re), num(b.im), num(*w)]);
    }
    let cell = (re[1] - re[0]) * (im[1] - im[0]);
    let min = samples.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let entry = Entry::new()
        .with("W_min", min)
        .with("W_max", max)
        .with("integral", samples.values.iter().sum::<f64>() * cell)
        .with("truncation_warning", samples.truncation_warning);
    summary.section("wigner", entry.build());
    Ok(table)
}
