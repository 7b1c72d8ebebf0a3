//! Runs a validated [`ExperimentConfig`] and writes its outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use g2flow::exterior::basis_len;
use g2flow::fixtures::{phi_bar, scaled_frame_phi, FixtureSet};
use g2flow::flows::{volume_growth_indicator, FlowKind, Termination};
use g2flow::g2::torsion_trace;
use g2flow::npmodel::np_solve;
use g2flow::{
    coflow_rhs, integrate, linearize, norm, phi_of_psi, CoclosedState, Error, FlowConfig,
    FlowSystem, Form, G2Structure, LieAlgebra, Trajectory,
};

use crate::config::{
    resolve, AlgebraSource, Experiment, ExperimentConfig, Format, InitialSpec, Subspace,
};

/// Files, summary and halt cause of one sweep job.
type JobOutcome = (Vec<PathBuf>, Value, Option<String>);

/// Attempts at drawing a perturbation that stays positive.
const MAX_DRAWS: usize = 100;

/// How a run ended, for the exit status.
#[derive(Debug)]
pub enum RunError {
    /// Bad input discovered while setting up (exit as a validation failure).
    Setup(String),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Setup(s) | RunError::Io(s) => write!(f, "{s}"),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

fn setup(e: Error) -> RunError {
    RunError::Setup(e.to_string())
}

fn io(e: Error) -> RunError {
    RunError::Io(e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Value,
    /// Set when any integration stopped before `t_end`.
    pub halted: Option<String>,
}

/// Context shared by all experiments.
pub struct Runner<'a> {
    pub fixtures: &'a FixtureSet,
    /// Directory for resolving relative paths in the configuration.
    pub base_dir: PathBuf,
    pub jobs: usize,
}

impl Runner<'_> {
    pub fn run(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        std::fs::create_dir_all(&cfg.output.dir)?;
        let mut report = match cfg.experiment {
            Experiment::Np => run_np(cfg)?,
            Experiment::Ee2Family => self.run_family(cfg)?,
            Experiment::Ee1Static => self.run_static(cfg)?,
            Experiment::Sweep => self.run_sweep(cfg)?,
            Experiment::Linearize => self.run_linearize(cfg)?,
            Experiment::Ee2Flow | Experiment::Custom => self.run_flow(cfg)?,
        };
        let path = cfg
            .output
            .dir
            .join(format!("{}.summary.json", cfg.prefix()));
        let body = json!({
            "config": cfg,
            "summary": report.summary,
            "halted": report.halted,
        });
        write_json(&path, &body)?;
        report.files.push(path);
        Ok(report)
    }

    pub fn algebra(&self, cfg: &ExperimentConfig) -> Result<LieAlgebra, RunError> {
        match cfg.algebra.as_ref().expect("normalised config") {
            AlgebraSource::Fixture(name) => self.fixtures.algebra(name).map_err(setup),
            AlgebraSource::File(p) => {
                LieAlgebra::from_json_file(resolve(&self.base_dir, p)).map_err(setup)
            }
        }
    }

    /// The unperturbed flow variable with a seed `φ` for recovery.
    pub fn initial(&self, cfg: &ExperimentConfig) -> Result<(Form, Form), RunError> {
        let form = match cfg.initial.as_ref().expect("normalised config") {
            InitialSpec::Fixture(name) => self.fixtures.form(name).map_err(setup)?,
            InitialSpec::Frame(a) => {
                let a: [f64; 7] = a
                    .as_slice()
                    .try_into()
                    .map_err(|_| RunError::Setup("initial.frame must have 7 entries".into()))?;
                scaled_frame_phi(&a)
            }
            InitialSpec::Phi(c) => Form::from_coeffs(3, c.clone()).map_err(setup)?,
            InitialSpec::Psi(c) => Form::from_coeffs(4, c.clone()).map_err(setup)?,
        };
        let structure = match form.degree() {
            3 => G2Structure::from_phi(form).map_err(setup)?,
            4 => {
                let seed = phi_bar().scaled(form.max_abs().powf(0.75));
                phi_of_psi(&form, &seed).map_err(setup)?
            }
            d => {
                return Err(RunError::Setup(format!(
                    "initial data must be a 3- or 4-form, got degree {d}"
                )))
            }
        };
        let phi = structure.phi().clone();
        Ok(match cfg.flow.kind {
            FlowKind::ModifiedCoflow => (structure.psi().clone(), phi),
            FlowKind::LaplacianFlow => (phi.clone(), phi),
        })
    }

    fn run_flow(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        let alg = self.algebra(cfg)?;
        let (y0, seed) = self.initial(cfg)?;
        let (y, seed) = perturb(
            &alg,
            cfg.flow.kind,
            &y0,
            &seed,
            cfg.perturbation.magnitude,
            cfg.perturbation.seed,
            cfg.perturbation.subspace,
        )?;
        let traj = integrate(&alg, &cfg.flow, &y, &seed).map_err(setup)?;
        let files = write_trajectory(&traj, &cfg.output.dir, cfg.prefix(), cfg.output.format)?;
        Ok(RunReport {
            files,
            summary: trajectory_summary(&traj),
            halted: halt_message(&traj),
        })
    }

    fn run_static(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        let alg = self.algebra(cfg)?;
        let (y0, seed) = self.initial(cfg)?;
        if cfg.flow.kind != FlowKind::ModifiedCoflow {
            return Err(RunError::Setup(
                "ee1_static requires flow.flow_kind = modified_coflow".into(),
            ));
        }
        let sc = cfg.static_check;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.perturbation.seed);
        let mut norms = Vec::with_capacity(sc.samples);
        for _ in 0..sc.samples {
            let sub_seed = rng.gen();
            let (psi, phi) = perturb(
                &alg,
                FlowKind::ModifiedCoflow,
                &y0,
                &seed,
                sc.magnitude,
                sub_seed,
                Subspace::Coclosed,
            )?;
            let state = CoclosedState::new(psi, &phi).map_err(setup)?;
            let q = coflow_rhs(&alg, &state, cfg.flow.a).map_err(setup)?;
            norms.push(norm(state.metric(), &q));
        }
        let max = norms.iter().copied().fold(0.0, f64::max);
        let path = cfg.output.dir.join(format!("{}.samples.csv", cfg.prefix()));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "sample,rhs_norm")?;
        for (i, n) in norms.iter().enumerate() {
            writeln!(w, "{i},{n}")?;
        }
        w.flush()?;
        let mut files = vec![path];

        // The base point itself, integrated over the configured window.
        let (y, seed) = perturb(
            &alg,
            FlowKind::ModifiedCoflow,
            &y0,
            &seed,
            cfg.perturbation.magnitude,
            cfg.perturbation.seed,
            cfg.perturbation.subspace,
        )?;
        let traj = integrate(&alg, &cfg.flow, &y, &seed).map_err(setup)?;
        files.extend(write_trajectory(
            &traj,
            &cfg.output.dir,
            cfg.prefix(),
            cfg.output.format,
        )?);
        Ok(RunReport {
            files,
            summary: json!({
                "samples": sc.samples,
                "magnitude": sc.magnitude,
                "max_rhs_norm": max,
                "tol": sc.tol,
                "static": max <= sc.tol,
                "max_displacement": traj.max_displacement(),
                "trajectory": trajectory_summary(&traj),
            }),
            halted: halt_message(&traj),
        })
    }

    fn run_family(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        let alg = self.algebra(cfg)?;
        let fam = &cfg.family;
        let mut points: Vec<[f64; 7]> = fam
            .points
            .iter()
            .map(|p| p.as_slice().try_into().expect("validated length"))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.perturbation.seed);
        for _ in 0..fam.random {
            points.push(std::array::from_fn(|_| rng.gen_range(fam.low..fam.high)));
        }
        let path = cfg.output.dir.join(format!("{}.csv", cfg.prefix()));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(
            w,
            "c1,c2,c3,c4,c5,c6,c7,coeff_1357,frame_coeff,formula,off_1357,rhs_norm,trT,volume_growth"
        )?;
        let mut worst_frame: f64 = 0.0;
        let mut worst_literal: f64 = 0.0;
        let mut rows = Vec::new();
        for c in &points {
            let state = CoclosedState::from_phi(scaled_frame_phi(c)).map_err(setup)?;
            let q = coflow_rhs(&alg, &state, cfg.flow.a).map_err(setup)?;
            let lead = q.coeff(&[1, 3, 5, 7]);
            let off = (&q - &Form::monomial(lead, &[1, 3, 5, 7])).max_abs();
            let frame = lead / (c[0] * c[2] * c[4] * c[6]);
            let formula = displayed_coefficient(c);
            worst_frame = worst_frame.max((frame - formula).abs());
            worst_literal = worst_literal.max((lead - formula).abs());
            let tr_t = torsion_trace(&alg, &state).map_err(setup)?;
            let growth =
                volume_growth_indicator(&alg, &state.structure, cfg.flow.a).map_err(setup)?;
            let rhs_norm = norm(state.metric(), &q);
            let cells: Vec<String> = c
                .iter()
                .chain([lead, frame, formula, off, rhs_norm, tr_t, growth].iter())
                .map(|x| x.to_string())
                .collect();
            writeln!(w, "{}", cells.join(","))?;
            rows.push(
                json!({"c": c, "coeff_1357": lead, "frame_coeff": frame, "formula": formula}),
            );
        }
        w.flush()?;
        Ok(RunReport {
            files: vec![path],
            summary: json!({
                "points": rows.len(),
                "max_abs_frame_coeff_minus_formula": worst_frame,
                "max_abs_coeff_minus_formula": worst_literal,
                "rows": rows,
            }),
            halted: None,
        })
    }

    fn run_sweep(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        let alg = self.algebra(cfg)?;
        let (y0, seed) = self.initial(cfg)?;
        let mut grid = Vec::new();
        for &a in &cfg.sweep.a {
            for &m in &cfg.sweep.magnitude {
                for &s in &cfg.sweep.seeds {
                    grid.push((a, m, s));
                }
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| RunError::Io(e.to_string()))?;
        let results: Vec<Result<JobOutcome, RunError>> = pool.install(|| {
            grid.par_iter()
                .enumerate()
                .map(|(i, &(a, m, s))| {
                    let flow = FlowConfig { a, ..cfg.flow };
                    let (y, phi) =
                        perturb(&alg, flow.kind, &y0, &seed, m, s, cfg.perturbation.subspace)?;
                    let traj = integrate(&alg, &flow, &y, &phi).map_err(setup)?;
                    let tag = format!("{}_{i:03}", cfg.prefix());
                    let files = write_trajectory(&traj, &cfg.output.dir, &tag, cfg.output.format)?;
                    let mut summary = trajectory_summary(&traj);
                    summary["job"] = json!(i);
                    summary["A"] = json!(a);
                    summary["magnitude"] = json!(m);
                    summary["seed"] = json!(s);
                    Ok((files, summary, halt_message(&traj)))
                })
                .collect()
        });
        let mut files = Vec::new();
        let mut jobs = Vec::new();
        let mut halted = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            let (f, s, h) = r?;
            files.extend(f);
            jobs.push(s);
            if let Some(h) = h {
                halted.push(format!("job {i}: {h}"));
            }
        }
        Ok(RunReport {
            files,
            summary: json!({ "jobs": jobs }),
            halted: (!halted.is_empty()).then(|| halted.join("; ")),
        })
    }

    fn run_linearize(&self, cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
        let alg = self.algebra(cfg)?;
        let (y0, seed) = self.initial(cfg)?;
        let k = y0.degree();
        let dirs = subspace_basis(&alg, k, cfg.linearize.directions);
        let mut sys = FlowSystem::new(&alg, cfg.flow, &seed).map_err(setup)?;
        let report = linearize(
            &mut sys,
            &y0,
            &dirs,
            cfg.linearize.eps,
            cfg.linearize.static_tol,
        )
        .map_err(setup)?;
        let path = cfg
            .output
            .dir
            .join(format!("{}.spectrum.json", cfg.prefix()));
        write_json(&path, &report)?;
        Ok(RunReport {
            files: vec![path],
            summary: json!({
                "directions": report.directions.len(),
                "eigenvalues": report.eigenvalues,
                "asymmetry_norm": report.asymmetry_norm,
                "max_entry": report.max_entry(),
                "base_rhs_norm": report.base_rhs_norm,
            }),
            halted: None,
        })
    }
}

fn run_np(cfg: &ExperimentConfig) -> Result<RunReport, RunError> {
    let np = &cfg.np;
    let traj =
        np_solve(&np.params(), np.t_end.expect("normalised config"), np.dt).map_err(setup)?;
    let path = cfg.output.dir.join(format!("{}.csv", cfg.prefix()));
    let mut w = BufWriter::new(File::create(&path)?);
    traj.write_csv(&mut w).map_err(io)?;
    w.flush()?;
    let last = traj.last();
    Ok(RunReport {
        files: vec![path],
        summary: json!({
            "params": traj.params,
            "dt": traj.dt,
            "samples": traj.samples.len(),
            "t_final": last.t,
            "c_final": last.c,
            "vol_final": last.vol,
            "blow_down": traj.blow_down,
            "max_rel_error": traj.max_rel_error,
        }),
        halted: traj.blow_down.map(|t| format!("c collapsed at t = {t}")),
    })
}

/// `2(c₂c₄c₇ + c₂c₅c₆ − c₃c₄c₆)/(c₁²c₃c₅c₇)`.
pub fn displayed_coefficient(c: &[f64; 7]) -> f64 {
    let [c1, c2, c3, c4, c5, c6, c7] = *c;
    2.0 * (c2 * c4 * c7 + c2 * c5 * c6 - c3 * c4 * c6) / (c1 * c1 * c3 * c5 * c7)
}

pub fn subspace_basis(alg: &LieAlgebra, k: usize, sub: Subspace) -> Vec<Form> {
    match sub {
        Subspace::Coclosed => alg.closed_forms(k),
        Subspace::Exact => alg.exact_forms(k),
        Subspace::Full => (0..basis_len(k))
            .map(|i| {
                let mut c = vec![0.0; basis_len(k)];
                c[i] = 1.0;
                Form::from_coeffs(k, c).expect("basis length")
            })
            .collect(),
    }
}

/// Adds `Σ u_i b_i` with `u_i ~ U(−m, m)` over a basis of `sub`, redrawing
/// until the result is still a positive structure. Returns the perturbed
/// flow variable and its `φ`.
pub fn perturb(
    alg: &LieAlgebra,
    kind: FlowKind,
    y0: &Form,
    seed_phi: &Form,
    magnitude: f64,
    seed: u64,
    sub: Subspace,
) -> Result<(Form, Form), RunError> {
    if magnitude == 0.0 {
        return Ok((y0.clone(), seed_phi.clone()));
    }
    let basis = subspace_basis(alg, y0.degree(), sub);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MAX_DRAWS {
        let mut y = y0.clone();
        for b in &basis {
            y = y.axpy(rng.gen_range(-magnitude..magnitude), b);
        }
        let phi = match kind {
            FlowKind::ModifiedCoflow => {
                CoclosedState::new(y.clone(), seed_phi).map(|s| s.phi().clone())
            }
            FlowKind::LaplacianFlow => G2Structure::from_phi(y.clone()).map(|s| s.phi().clone()),
        };
        match phi {
            Ok(phi) => return Ok((y, phi)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(RunError::Setup(format!(
        "no positive perturbation of magnitude {magnitude} in {MAX_DRAWS} draws: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), RunError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| RunError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(
    traj: &Trajectory,
    dir: &Path,
    stem: &str,
    format: Format,
) -> Result<Vec<PathBuf>, RunError> {
    let mut files = Vec::new();
    if format.jsonl() {
        let p = dir.join(format!("{stem}.jsonl"));
        let mut w = BufWriter::new(File::create(&p)?);
        traj.write_jsonl(&mut w).map_err(io)?;
        w.flush()?;
        files.push(p);
    }
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        let mut w = BufWriter::new(File::create(&p)?);
        traj.write_csv(&mut w).map_err(io)?;
        w.flush()?;
        files.push(p);
    }
    Ok(files)
}

fn trajectory_summary(traj: &Trajectory) -> Value {
    let first = &traj.first().diagnostics;
    let last = &traj.last().diagnostics;
    json!({
        "termination": traj.termination,
        "t_final": traj.t_final,
        "steps": traj.steps,
        "rejected_steps": traj.rejected_steps,
        "rhs_evals": traj.rhs_evals,
        "records": traj.records.len(),
        "volume_initial": first.volume,
        "volume_final": last.volume,
        "closedness_final": last.closedness,
        "closedness_drift_rate": traj.closedness_drift_rate,
        "rhs_norm_final": last.rhs_norm,
        "dist_ref_final": last.dist_ref,
    })
}

fn halt_message(traj: &Trajectory) -> Option<String> {
    match &traj.termination {
        Termination::Completed => None,
        t => Some(format!(
            "{} at t = {}",
            serde_json::to_string(t).unwrap_or_default(),
            traj.t_final
        )),
    }
}
