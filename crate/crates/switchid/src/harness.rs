//! Experiment runner: presets, metric computation, CSV logging, report and
//! plot emission, trajectory file IO.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use switchid_core::hybrid::{Identifier, IdentifierConfig, LevelSummary, SampleRecord};
use switchid_core::localid::{LocalModel, StepSchedule};
use switchid_core::EstimatedHybridModel;

use crate::simulate::{
    self, active_mode, generate_trajectory, Sample, SwitchedSystemSpec, Trajectory,
};
use crate::{io_err, plots, Error, Result};

/// A system under test: a built-in preset by name or an inline description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Preset(String),
    Inline(SwitchedSystemSpec),
}

impl SystemRef {
    pub fn resolve(&self) -> Result<SwitchedSystemSpec> {
        match self {
            SystemRef::Preset(name) => simulate::preset(name)
                .ok_or_else(|| Error::Config(format!("unknown preset '{name}'"))),
            SystemRef::Inline(spec) => {
                spec.validate()?;
                Ok(spec.clone())
            }
        }
    }
}

/// How to build the noise-free evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalSet {
    /// Dense grid over the first feature coordinate, trailing 1 appended
    /// (input-output systems only).
    Grid { lo: f64, hi: f64, points: usize },
    /// Fresh noise-free trajectory of the given length.
    FreshTrajectory { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemRef,
    pub identifier: IdentifierConfig,
    /// Samples in the generated observation stream (replayed cyclically).
    pub n: usize,
    pub repeats: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval: EvalSet,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        self.system.resolve()?;
        self.identifier.validate().map_err(Error::Core)?;
        match self.eval {
            EvalSet::Grid { lo, hi, points } => {
                if !(lo < hi) || points < 2 {
                    return Err(Error::Config("grid eval needs lo < hi and >= 2 points".into()));
                }
            }
            EvalSet::FreshTrajectory { n } => {
                if n < 1 {
                    return Err(Error::Config("eval trajectory needs n >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Default full configuration for a named preset.
    pub fn preset(name: &str, seed: u64, output_dir: PathBuf) -> Result<Self> {
        let base = IdentifierConfig {
            alpha: StepSchedule::Harmonic { c: 0.01 },
            beta: StepSchedule::HarmonicLog { c: 0.9 },
            gamma: 0.8,
            seed,
            ..IdentifierConfig::default()
        };
        match name {
            "exp1" => Ok(Self {
                system: SystemRef::Preset("exp1".into()),
                identifier: IdentifierConfig {
                    lambda_max: 0.99,
                    lambda_min: 0.2,
                    // 900 fast steps per level leave the slowest cells (narrow
                    // far-field regions with ill-conditioned Gram matrices) far
                    // from their local least-squares fit; a 10x budget lets the
                    // duplicate parameter vectors collapse into one another
                    max_iters_per_level: 9000,
                    // restarting the stepsize counter at 900 pins alpha at 0.1,
                    // the largest value for which the error recursion contracts
                    // when |phi|^2 reaches 17 on this data
                    reset_alpha_to: Some(900),
                    init_theta: Some(vec![1.0, 1.0]),
                    k_max: 8,
                    eps_s: Some(2.0),
                    tol_conv: Some(1e-9),
                    ..base
                },
                n: 150,
                repeats: 1,
                seed,
                output_dir,
                eval: EvalSet::Grid { lo: -4.0, hi: 4.0, points: 801 },
            }),
            "exp2" => Ok(Self {
                system: SystemRef::Preset("exp2".into()),
                identifier: IdentifierConfig {
                    lambda_max: 0.99,
                    lambda_min: 0.1,
                    max_iters_per_level: 3000,
                    // state magnitudes reach |phi|^2 ~ 160 on this system, so
                    // the fast stepsize must stay below ~1/80 for the error
                    // recursion to contract; 19900 pins alpha at 0.005
                    reset_alpha_to: Some(19_900),
                    tol_conv: Some(1e-9),
                    init_theta: Some(vec![1.0; 6]),
                    k_max: 8,
                    ..base
                },
                n: 300,
                repeats: 1,
                seed,
                output_dir,
                eval: EvalSet::FreshTrajectory { n: 300 },
            }),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub s_hat: usize,
    pub k_final: usize,
    /// Per identified mode: inf-norm distance to its nearest true
    /// parameter matrix.
    pub param_errors: Vec<f64>,
    /// Per distinct true parameter matrix: inf-norm distance to its
    /// nearest identified mode (coverage of the true dynamics).
    pub coverage_errors: Vec<f64>,
    pub misclassification: f64,
    pub rmse_hard: f64,
    pub rmse_smooth: f64,
    pub wall_secs: f64,
    pub levels: Vec<LevelSummary>,
    pub rng_algorithm: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunReport>,
    /// Fraction of runs for each observed mode count.
    pub s_hat_counts: Vec<(usize, usize)>,
}

/// Result of a single identification run, before artifacts are written.
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<SampleRecord>,
    pub model: EstimatedHybridModel,
    pub identifier: Identifier,
}

/// One evaluation point: feature vector, true mode, noise-free output.
pub struct EvalPoint {
    pub phi: Vec<f64>,
    pub true_mode: usize,
    pub psi: Vec<f64>,
}

/// Build the noise-free evaluation set for a system.
pub fn build_eval_set(spec: &SwitchedSystemSpec, eval: &EvalSet, seed: u64) -> Result<Vec<EvalPoint>> {
    let points = match eval {
        EvalSet::Grid { lo, hi, points } => {
            let mut out = Vec::with_capacity(*points);
            for k in 0..*points {
                let r = lo + (hi - lo) * k as f64 / (*points - 1) as f64;
                let mut phi = vec![r];
                phi.resize(spec.d.saturating_sub(1), 0.0);
                phi.push(1.0);
                let true_mode = active_mode(spec, &phi).ok_or(Error::OutOfDomain { t: k as u64 })?;
                let psi = spec.modes[true_mode].apply(&phi);
                out.push(EvalPoint { phi, true_mode, psi });
            }
            out
        }
        EvalSet::FreshTrajectory { n } => {
            let clean = spec.clone().with_noise_std(0.0);
            let traj = generate_trajectory(&clean, *n, seed.wrapping_add(0x9e37), None)?;
            traj.samples
                .into_iter()
                .map(|s| EvalPoint { phi: s.phi, true_mode: s.true_mode, psi: s.psi })
                .collect()
        }
    };
    Ok(points)
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distinct true parameter matrices (flattened row-major), deduplicated.
pub fn distinct_true_thetas(spec: &SwitchedSystemSpec) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for m in &spec.modes {
        let flat = m.theta_flat();
        if !out.iter().any(|t| inf_norm_diff(t, &flat) < 1e-12) {
            out.push(flat);
        }
    }
    out
}

/// For each identified mode, the nearest true mode index (by squared
/// distance between flattened parameters).
pub fn match_to_true(modes: &[LocalModel], spec: &SwitchedSystemSpec) -> Vec<usize> {
    modes
        .iter()
        .map(|m| {
            let flat = m.rows().to_vec();
            (0..spec.modes.len())
                .min_by(|&i, &j| {
                    sq_dist(&flat, &spec.modes[i].theta_flat())
                        .partial_cmp(&sq_dist(&flat, &spec.modes[j].theta_flat()))
                        .unwrap()
                })
                .unwrap()
        })
        .collect()
}

/// Fraction of evaluation points where the model's mode (matched to true
/// modes by parameter proximity) disagrees with the true active mode.
/// Points whose matched parameters equal the active mode's parameters
/// count as correct even if the region index differs (duplicate dynamics).
pub fn evaluate_mode_accuracy(
    model: &EstimatedHybridModel,
    spec: &SwitchedSystemSpec,
    eval: &[EvalPoint],
) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".into()));
    }
    let matched = match_to_true(&model.modes, spec);
    let mut wrong = 0usize;
    for p in eval {
        let cell_mode = model.mode_of(&p.phi)?;
        let mapped = matched[cell_mode];
        let same = mapped == p.true_mode
            || inf_norm_diff(
                &spec.modes[mapped].theta_flat(),
                &spec.modes[p.true_mode].theta_flat(),
            ) < 1e-9;
        if !same {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / eval.len() as f64)
}

/// Run one identification on a freshly simulated stream; no files written.
pub fn run_single(
    spec: &SwitchedSystemSpec,
    identifier_cfg: &IdentifierConfig,
    n: usize,
    seed: u64,
    eval: &EvalSet,
) -> Result<RunOutput> {
    let start = Instant::now();
    let traj = generate_trajectory(spec, n, seed, None)?;
    let mut id = Identifier::new(IdentifierConfig { seed, ..identifier_cfg.clone() })?;
    let mut records = Vec::new();
    let mut source = traj
        .samples
        .iter()
        .cycle()
        .map(|s| (s.phi.clone(), s.psi.clone()));
    let levels = id.run_all_levels(&mut source, |rec| records.push(rec.clone()))?;
    let model = id.finalize()?;

    let eval_points = build_eval_set(spec, eval, seed)?;
    let misclassification = evaluate_mode_accuracy(&model, spec, &eval_points)?;

    let truths = distinct_true_thetas(spec);
    let param_errors: Vec<f64> = model
        .modes
        .iter()
        .map(|m| {
            truths
                .iter()
                .map(|t| inf_norm_diff(m.rows(), t))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let coverage_errors: Vec<f64> = truths
        .iter()
        .map(|t| {
            model
                .modes
                .iter()
                .map(|m| inf_norm_diff(m.rows(), t))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    let lambda_eval = identifier_cfg.lambda_min;
    let mut se_hard = 0.0;
    let mut se_smooth = 0.0;
    for p in &eval_points {
        let h = model.predict_hard(&p.phi)?;
        let s = model.predict_smooth(&p.phi, lambda_eval)?;
        se_hard += sq_dist(&h, &p.psi);
        se_smooth += sq_dist(&s, &p.psi);
    }
    let rmse_hard = (se_hard / eval_points.len() as f64).sqrt();
    let rmse_smooth = (se_smooth / eval_points.len() as f64).sqrt();

    // terminal snapshot row so the last logged state equals the report
    records.push(SampleRecord {
        t: id.total_samples(),
        lambda: id.lambda(),
        k: id.num_codevectors(),
        s_hat: id.num_modes(),
        winner: 0,
        err_norm: 0.0,
        max_shift: 0.0,
        thetas: id.mode_set().iter().map(|m| m.rows().to_vec()).collect(),
        phi_hats: id.codevectors().iter().map(|c| c.phi_hat.clone()).collect(),
    });

    let report = RunReport {
        seed,
        s_hat: model.num_modes(),
        k_final: model.num_cells(),
        param_errors,
        coverage_errors,
        misclassification,
        rmse_hard,
        rmse_smooth,
        wall_secs: start.elapsed().as_secs_f64(),
        levels,
        rng_algorithm: traj.rng_algorithm.clone(),
    };
    Ok(RunOutput { report, records, model, identifier: id })
}

/// Full experiment: `repeats` runs with consecutive seeds, artifacts
/// written under `output_dir` (per-sample CSVs, checkpoints, report.json,
/// SVG plots for the first run).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let spec = config.system.resolve()?;
    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;

    let seeds: Vec<u64> = (0..config.repeats as u64).map(|i| config.seed + i).collect();
    let mut outputs: Vec<RunOutput> = Vec::with_capacity(seeds.len());
    if seeds.len() == 1 {
        outputs.push(run_single(&spec, &config.identifier, config.n, seeds[0], &config.eval)?);
    } else {
        // independent seeds fan out across worker threads
        let results: Vec<Result<RunOutput>> = std::thread::scope(|scope| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    let spec = &spec;
                    let cfg = &config.identifier;
                    let eval = &config.eval;
                    let n = config.n;
                    scope.spawn(move || run_single(spec, cfg, n, seed, eval))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        for r in results {
            outputs.push(r?);
        }
    }

    for out in &outputs {
        let csv_path = config.output_dir.join(format!("samples_seed{}.csv", out.report.seed));
        write_sample_csv(&csv_path, &out.records)?;
        let ck_path = config
            .output_dir
            .join(format!("checkpoint_seed{}.json", out.report.seed));
        let text = serde_json::to_string_pretty(&out.identifier)
            .map_err(|source| Error::Json { path: ck_path.clone(), source })?;
        fs::write(&ck_path, text).map_err(io_err(&ck_path))?;
    }

    // plots for the first run
    let first = &outputs[0];
    let eval_points = build_eval_set(&spec, &config.eval, first.report.seed)?;
    emit_plots(&first.records, &first.model, &spec, &eval_points, &config.output_dir)?;

    let mut s_hat_counts: Vec<(usize, usize)> = Vec::new();
    for out in &outputs {
        match s_hat_counts.iter_mut().find(|(s, _)| *s == out.report.s_hat) {
            Some((_, c)) => *c += 1,
            None => s_hat_counts.push((out.report.s_hat, 1)),
        }
    }
    s_hat_counts.sort_unstable();

    let report = ExperimentReport {
        config: config.clone(),
        runs: outputs.iter().map(|o| o.report.clone()).collect(),
        s_hat_counts,
    };
    let report_path = config.output_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report)
        .map_err(|source| Error::Json { path: report_path.clone(), source })?;
    fs::write(&report_path, text).map_err(io_err(&report_path))?;
    Ok(report)
}

/// Per-sample CSV with fixed schema: `t,lambda,K,s_hat,winner,err_norm`
/// plus flattened mode parameters `theta<i>_<r>_<c>` and codevector
/// coordinates `phi<j>_<k>`; rows predating a mode or codevector leave its
/// fields empty.
pub fn write_sample_csv(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    let max_modes = records.iter().map(|r| r.thetas.len()).max().unwrap_or(0);
    let theta_len = records
        .iter()
        .flat_map(|r| r.thetas.iter())
        .map(|t| t.len())
        .max()
        .unwrap_or(0);
    let max_cvs = records.iter().map(|r| r.phi_hats.len()).max().unwrap_or(0);
    let dim = records
        .iter()
        .flat_map(|r| r.phi_hats.iter())
        .map(|p| p.len())
        .max()
        .unwrap_or(0);
    // theta is row-major m x d; d equals the codevector dimension, so the
    // row/col labels are recovered from the flat index
    let d = dim;
    let rows_per_theta = if d == 0 { 0 } else { theta_len / d };

    let mut header = String::from("t,lambda,K,s_hat,winner,err_norm");
    for i in 0..max_modes {
        for r in 0..rows_per_theta.max(1) {
            for c in 0..d {
                header.push_str(&format!(",theta{i}_{r}_{c}"));
            }
        }
    }
    for j in 0..max_cvs {
        for k in 0..d {
            header.push_str(&format!(",phi{j}_{k}"));
        }
    }
    writeln!(f, "{header}").map_err(io_err(path))?;

    for rec in records {
        let mut line = format!(
            "{},{},{},{},{},{}",
            rec.t, rec.lambda, rec.k, rec.s_hat, rec.winner, rec.err_norm
        );
        for i in 0..max_modes {
            for e in 0..theta_len {
                match rec.thetas.get(i).and_then(|t| t.get(e)) {
                    Some(v) => line.push_str(&format!(",{v}")),
                    None => line.push(','),
                }
            }
        }
        for j in 0..max_cvs {
            for k in 0..d {
                match rec.phi_hats.get(j).and_then(|p| p.get(k)) {
                    Some(v) => line.push_str(&format!(",{v}")),
                    None => line.push(','),
                }
            }
        }
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

/// Bifurcation, parameter-convergence, and prediction plots as SVG files.
pub fn emit_plots(
    records: &[SampleRecord],
    model: &EstimatedHybridModel,
    spec: &SwitchedSystemSpec,
    eval: &[EvalPoint],
    out_dir: &Path,
) -> Result<()> {
    // codevector coordinate to track: the input coordinate for state-space
    // systems, the leading regressor coordinate otherwise
    let coord = if spec.dt.is_some() { spec.d - 1 } else { 0 };

    let mut scatter = plots::Series::scatter("codevectors", "#1f77b4");
    for rec in records {
        for p in &rec.phi_hats {
            if let Some(v) = p.get(coord) {
                scatter.points.push((rec.t as f64, *v));
            }
        }
    }
    plots::write_chart(
        &out_dir.join("bifurcation.svg"),
        "Codevector locations per iteration",
        "iteration",
        &format!("codevector coordinate {coord}"),
        &[scatter],
        &[],
    )?;

    let palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let max_modes = records.iter().map(|r| r.thetas.len()).max().unwrap_or(0);
    let theta_len = records
        .iter()
        .flat_map(|r| r.thetas.iter().map(|t| t.len()))
        .max()
        .unwrap_or(0);
    let mut series = Vec::new();
    for i in 0..max_modes {
        for e in 0..theta_len {
            let mut s = plots::Series::line(
                format!("theta{i}[{e}]"),
                palette[(i * theta_len + e) % palette.len()],
            );
            for rec in records {
                if let Some(v) = rec.thetas.get(i).and_then(|t| t.get(e)) {
                    s.points.push((rec.t as f64, *v));
                }
            }
            series.push(s);
        }
    }
    let mut guides: Vec<f64> = Vec::new();
    for t in distinct_true_thetas(spec) {
        for v in t {
            if !guides.iter().any(|g| (g - v).abs() < 1e-12) {
                guides.push(v);
            }
        }
    }
    plots::write_chart(
        &out_dir.join("theta_convergence.svg"),
        "Parameter convergence (dashed: true values)",
        "iteration",
        "parameter entry",
        &series,
        &guides,
    )?;

    // prediction vs truth over the evaluation set, indexed by the grid
    // coordinate (input-output) or by time (state-space)
    let x_of = |idx: usize, p: &EvalPoint| if spec.dt.is_some() { idx as f64 } else { p.phi[0] };
    let mut truth = plots::Series::line("true", "#2ca02c");
    let mut pred = plots::Series::line("predicted", "#d62728");
    for (idx, p) in eval.iter().enumerate() {
        let x = x_of(idx, p);
        truth.points.push((x, p.psi[0]));
        if let Ok(h) = model.predict_hard(&p.phi) {
            pred.points.push((x, h[0]));
        }
    }
    plots::write_chart(
        &out_dir.join("prediction.svg"),
        "Prediction vs truth (first output coordinate)",
        if spec.dt.is_some() { "sample" } else { "feature coordinate 0" },
        "output",
        &[truth, pred],
        &[],
    )?;
    Ok(())
}

/// Trajectory CSV: `t,phi_0..phi_{d-1},psi_0..psi_{m-1}[,true_mode]`.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    let d = traj.samples.first().map(|s| s.phi.len()).unwrap_or(0);
    let m = traj.samples.first().map(|s| s.psi.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 0..d {
        header.push_str(&format!(",phi_{i}"));
    }
    for i in 0..m {
        header.push_str(&format!(",psi_{i}"));
    }
    header.push_str(",true_mode");
    writeln!(f, "{header}").map_err(io_err(path))?;
    for s in &traj.samples {
        let mut line = s.t.to_string();
        for v in s.phi.iter().chain(s.psi.iter()) {
            line.push_str(&format!(",{v}"));
        }
        line.push_str(&format!(",{}", s.true_mode));
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let d = cols.iter().filter(|c| c.starts_with("phi_")).count();
    let m = cols.iter().filter(|c| c.starts_with("psi_")).count();
    let has_mode = cols.last().map(|c| *c == "true_mode").unwrap_or(false);
    if cols.first() != Some(&"t") || d == 0 || m == 0 {
        return Err(Error::InvalidInput(format!(
            "{}: expected header t,phi_*,psi_*[,true_mode]",
            path.display()
        )));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = 1 + d + m + usize::from(has_mode);
        if fields.len() != expect {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                lineno + 2,
                expect,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| {
                Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 2))
            })
        };
        let t = fields[0]
            .parse::<u64>()
            .map_err(|e| Error::InvalidInput(format!("{}:{}: {e}", path.display(), lineno + 2)))?;
        let phi = fields[1..1 + d].iter().map(|s| parse(s)).collect::<Result<_>>()?;
        let psi = fields[1 + d..1 + d + m].iter().map(|s| parse(s)).collect::<Result<_>>()?;
        let true_mode = if has_mode {
            fields[1 + d + m].parse::<usize>().unwrap_or(0)
        } else {
            0
        };
        samples.push(Sample { t, phi, psi, true_mode });
    }
    Ok(Trajectory {
        samples,
        rng_algorithm: "recorded".into(),
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::exp1_spec;

    #[test]
    fn trajectory_csv_round_trip() {
        let traj = generate_trajectory(&exp1_spec(), 20, 5, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&path, &traj).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(traj.samples.len(), back.samples.len());
        for (a, b) in traj.samples.iter().zip(back.samples.iter()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.true_mode, b.true_mode);
            for (x, y) in a.phi.iter().zip(b.phi.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_model_has_zero_misclassification() {
        let spec = exp1_spec();
        let modes: Vec<LocalModel> = spec
            .modes
            .iter()
            .map(|m| LocalModel::from_rows(1, 2, m.theta_flat()).unwrap())
            .collect();
        let model = EstimatedHybridModel {
            modes,
            cells: vec![
                switchid_core::hybrid::Cell { phi_hat: vec![-2.5, 1.0], mode: 0 },
                switchid_core::hybrid::Cell { phi_hat: vec![0.5, 1.0], mode: 1 },
                switchid_core::hybrid::Cell { phi_hat: vec![3.5, 1.0], mode: 2 },
            ],
            divergence: switchid_core::Divergence::SquaredEuclidean,
        };
        let eval = build_eval_set(&spec, &EvalSet::Grid { lo: -4.0, hi: 4.0, points: 801 }, 0).unwrap();
        // Voronoi midpoints of these cells land exactly on the region
        // boundaries -1 and 2
        let rate = evaluate_mode_accuracy(&model, &spec, &eval).unwrap();
        assert_eq!(rate, 0.0);
    }

    #[test]
    fn single_mode_system_has_zero_misclassification() {
        let mut spec = exp1_spec();
        spec.modes.truncate(1);
        spec.modes[0].region = vec![
            crate::simulate::Halfspace { a: vec![1.0, 0.0], b: 4.0 },
            crate::simulate::Halfspace { a: vec![-1.0, 0.0], b: 4.0 },
        ];
        let model = EstimatedHybridModel {
            modes: vec![LocalModel::from_rows(1, 2, vec![1.0, 2.0]).unwrap()],
            cells: vec![switchid_core::hybrid::Cell { phi_hat: vec![0.0, 1.0], mode: 0 }],
            divergence: switchid_core::Divergence::SquaredEuclidean,
        };
        let eval = build_eval_set(&spec, &EvalSet::Grid { lo: -4.0, hi: 4.0, points: 101 }, 0).unwrap();
        assert_eq!(evaluate_mode_accuracy(&model, &spec, &eval).unwrap(), 0.0);
    }
}
