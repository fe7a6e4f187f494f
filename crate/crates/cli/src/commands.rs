use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use dspqsl::dsp::{coefficient_a, qsl_time, verify_dsp_conditions, DspReport, QslError};
use dspqsl::lindblad::{evolve_streaming, EvolveOptions};
use dspqsl::optimizer::{
    enumerate_permutations, lexicographic_select, optimal_permutation, pareto_front, score_permutation,
    PermutationReport, TIE_TOL,
};
use dspqsl::rydberg;

use crate::config::{RunConfig, Selection};
use crate::csv::{sci, CsvWriter};
use crate::{Exit, Failure, OrExit};

/// Residual tolerance for the dark-state conditions.
const DSP_TOL: f64 = 1e-12;
const QSL_UNDEFINED: &str = "QSL undefined (A = 0)";

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    let mut stdout = io::stdout().lock();
    stdout.write_all(text.as_bytes()).or_exit(Exit::Io)?;
    if let Some(path) = out {
        fs::write(path, text)
            .map_err(|e| anyhow!("writing {}: {e}", path.display()))
            .or_exit(Exit::Io)?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn warn_if_not_dark(cfg: &RunConfig) {
    let report = verify_dsp_conditions(&cfg.model, DSP_TOL);
    if !report.pass {
        eprintln!(
            "warning: target is not a dark eigenstate (eigen residual {:.3e}); speed-limit results do not apply",
            report.eigen_residual
        );
    }
}

fn speed_scale(cfg: &RunConfig) -> Result<f64, Failure> {
    coefficient_a(&cfg.model).map_err(|e| match e {
        QslError::VanishingSpeedScale => Failure::new(Exit::DarkState, anyhow!(QSL_UNDEFINED)),
        other => Failure::new(Exit::Config, other),
    })
}

#[derive(Serialize)]
struct ModelInfo {
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    basis: Option<Vec<&'static str>>,
    eigenvalues: Vec<f64>,
    /// One-based.
    target_index: usize,
    target_energy: f64,
    target_overlap: f64,
    a: Option<f64>,
    a_over_gamma: Option<f64>,
    dark_state: DspReport,
    warnings: Vec<String>,
}

pub fn model_info(cfg: &RunConfig, out: Option<&Path>) -> Result<(), Failure> {
    let model = &cfg.model;
    let dark_state = verify_dsp_conditions(model, DSP_TOL);
    let a = coefficient_a(model).ok();
    let mut warnings = Vec::new();
    if a.is_none() {
        eprintln!("warning: {QSL_UNDEFINED}");
        warnings.push(QSL_UNDEFINED.to_string());
    }
    let info = ModelInfo {
        dim: model.dim(),
        basis: (model.dim() == rydberg::DIM && cfg.gamma.is_some()).then(|| rydberg::BASIS_LABELS.to_vec()),
        eigenvalues: model.eigensystem().eigenvalues().to_vec(),
        target_index: model.target_index() + 1,
        target_energy: model.target_energy(),
        target_overlap: model.target_overlap(),
        a,
        a_over_gamma: a.zip(cfg.gamma).map(|(a, g)| a / g),
        warnings,
        dark_state,
    };
    emit(&to_json(&info), out)?;
    if !info.dark_state.pass {
        return Err(Failure::new(
            Exit::DarkState,
            anyhow!(
                "dark-state conditions violated: eigen residual {:.3e}, jump residuals {:?}, overlap {:.12}",
                info.dark_state.eigen_residual,
                info.dark_state.jump_residuals,
                info.dark_state.target_overlap
            ),
        ));
    }
    Ok(())
}

const TRAJECTORY_HEADER: [&str; 6] = ["t", "fidelity", "angle", "trace_dev", "min_eig", "max_coherence"];

struct RunSummary {
    t_qsl: Option<f64>,
    final_fidelity: f64,
    t99: Option<f64>,
}

fn write_trajectory<W: Write>(cfg: &RunConfig, sel: &Selection, sink: W) -> Result<RunSummary, Failure> {
    let rho0 = sel.permutation.arrange(&cfg.populations).to_density(cfg.model.eigensystem());
    let t_qsl = qsl_time(&cfg.model, &rho0).ok().map(|r| r.t_qsl);
    let opts = EvolveOptions::new(cfg.t_end, cfg.step).with_stride(cfg.stride);
    let mut csv = CsvWriter::new(sink, &TRAJECTORY_HEADER).or_exit(Exit::Io)?;
    let mut io_error = None;
    let mut final_fidelity = f64::NAN;
    let mut t99 = None;
    evolve_streaming(&cfg.model, &rho0, &opts, |rec| {
        final_fidelity = rec.fidelity;
        if t99.is_none() && rec.fidelity >= 0.99 {
            t99 = Some(rec.t);
        }
        if io_error.is_none() {
            let fields = [
                rec.t,
                rec.fidelity,
                rec.angle,
                rec.trace_deviation,
                rec.min_eigenvalue,
                rec.max_coherence,
            ];
            if let Err(e) = csv.row(&fields.map(sci)) {
                io_error = Some(e);
            }
        }
    })
    .map_err(|e| Failure::new(Exit::Integrator, anyhow!("permutation {}: {e}", sel.label)))?;
    if let Some(e) = io_error {
        return Err(Failure::new(Exit::Io, e));
    }
    csv.finish().or_exit(Exit::Io)?;
    Ok(RunSummary {
        t_qsl,
        final_fidelity,
        t99,
    })
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), Failure> {
    warn_if_not_dark(cfg);
    if !(cfg.step > 0.0 && cfg.step.is_finite() && cfg.t_end.is_finite() && cfg.t_end >= cfg.step) {
        return Err(Failure::new(
            Exit::Config,
            anyhow!("need 0 < step <= t_end (step {}, t_end {})", cfg.step, cfg.t_end),
        ));
    }
    let selections = cfg.selections();
    let results: Vec<(String, Result<RunSummary, Failure>)> = match out {
        None if selections.len() == 1 => {
            let stdout = BufWriter::new(io::stdout().lock());
            vec![(selections[0].label.clone(), write_trajectory(cfg, &selections[0], stdout))]
        }
        None => {
            return Err(Failure::new(
                Exit::Config,
                anyhow!("{} permutations requested; pass --out <directory>", selections.len()),
            ))
        }
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| anyhow!("creating {}: {e}", dir.display()))
                .or_exit(Exit::Io)?;
            selections
                .par_iter()
                .map(|sel| {
                    let path = dir.join(format!("trajectory_{}.csv", file_label(&sel.label)));
                    let run = File::create(&path)
                        .map_err(|e| anyhow!("creating {}: {e}", path.display()))
                        .or_exit(Exit::Io)
                        .and_then(|f| write_trajectory(cfg, sel, BufWriter::new(f)));
                    (sel.label.clone(), run)
                })
                .collect()
        }
    };
    for (label, result) in results {
        let s = result?;
        let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        eprintln!(
            "{label}: T_qsl = {}, t(F >= 0.99) = {}, final fidelity = {:.9}",
            fmt(s.t_qsl),
            fmt(s.t99),
            s.final_fidelity
        );
    }
    Ok(())
}

fn enumerate(cfg: &RunConfig) -> Result<Vec<PermutationReport>, Failure> {
    speed_scale(cfg)?;
    enumerate_permutations(&cfg.populations, &cfg.model, cfg.g).or_exit(Exit::Config)
}

const SWEEP_HEADER: [&str; 11] = [
    "id",
    "permutation",
    "arrangement",
    "lambda_target",
    "t_qsl",
    "t_qsl_gamma",
    "t_qsl2",
    "q",
    "delta_s",
    "w",
    "pareto",
];

pub fn sweep(cfg: &RunConfig, out: Option<&Path>) -> Result<(), Failure> {
    warn_if_not_dark(cfg);
    let reports = enumerate(cfg)?;
    let gamma = cfg.gamma.unwrap_or(f64::NAN);
    let mut csv = CsvWriter::new(Vec::new(), &SWEEP_HEADER).or_exit(Exit::Io)?;
    for (id, r) in reports.iter().enumerate() {
        let arrangement: Vec<String> = r.arrangement.iter().map(|&v| sci(v)).collect();
        csv.row(&[
            (id + 1).to_string(),
            r.permutation.to_string(),
            arrangement.join(";"),
            sci(r.lambda_target),
            sci(r.t_qsl),
            sci(r.t_qsl * gamma),
            sci(r.t_qsl_loose),
            sci(r.heat),
            sci(r.entropy),
            sci(r.objective),
            u8::from(r.pareto).to_string(),
        ])
        .or_exit(Exit::Io)?;
    }
    let bytes = csv.finish().or_exit(Exit::Io)?;
    match out {
        Some(path) => fs::write(path, &bytes)
            .map_err(|e| anyhow!("writing {}: {e}", path.display()))
            .or_exit(Exit::Io),
        None => io::stdout().lock().write_all(&bytes).or_exit(Exit::Io),
    }
}

#[derive(Serialize)]
struct Candidate {
    permutation: String,
    arrangement: Vec<f64>,
    lambda_target: f64,
    t_qsl: f64,
    t_qsl_gamma: Option<f64>,
    t_qsl2: f64,
    q: f64,
    w: f64,
}

impl Candidate {
    fn of(r: &PermutationReport, gamma: Option<f64>) -> Self {
        Self {
            permutation: r.permutation.to_string(),
            arrangement: r.arrangement.clone(),
            lambda_target: r.lambda_target,
            t_qsl: r.t_qsl,
            t_qsl_gamma: gamma.map(|g| r.t_qsl * g),
            t_qsl2: r.t_qsl_loose,
            q: r.heat,
            w: r.objective,
        }
    }
}

#[derive(Serialize)]
struct OptimizeReport {
    populations: Vec<f64>,
    /// One-based.
    target_index: usize,
    g: f64,
    evaluated: usize,
    analytic: Candidate,
    brute_force: Candidate,
    same_arrangement: bool,
    agreement: bool,
    delta_s: f64,
    pareto_front: Vec<Candidate>,
}

pub fn optimize(cfg: &RunConfig, out: Option<&Path>) -> Result<(), Failure> {
    warn_if_not_dark(cfg);
    let reports = enumerate(cfg)?;
    let winner = lexicographic_select(&reports).or_exit(Exit::Config)?;
    let analytic_perm = optimal_permutation(&cfg.populations, &cfg.model).or_exit(Exit::Config)?;
    let analytic = score_permutation(&cfg.populations, &cfg.model, &analytic_perm, cfg.g).or_exit(Exit::Config)?;
    let same_arrangement = analytic.arrangement == winner.arrangement;
    let agreement = same_arrangement
        || ((analytic.t_qsl - winner.t_qsl).abs() <= TIE_TOL && (analytic.heat - winner.heat).abs() <= TIE_TOL);
    let report = OptimizeReport {
        populations: cfg.populations.values().to_vec(),
        target_index: cfg.model.target_index() + 1,
        g: cfg.g,
        evaluated: reports.len(),
        analytic: Candidate::of(&analytic, cfg.gamma),
        brute_force: Candidate::of(winner, cfg.gamma),
        same_arrangement,
        agreement,
        delta_s: analytic.entropy,
        pareto_front: pareto_front(&reports).into_iter().map(|r| Candidate::of(r, cfg.gamma)).collect(),
    };
    emit(&to_json(&report), out)?;
    if !agreement {
        return Err(Failure::new(
            Exit::Disagreement,
            anyhow!(
                "analytic optimum {} disagrees with brute-force winner {}",
                analytic.permutation,
                winner.permutation
            ),
        ));
    }
    Ok(())
}
