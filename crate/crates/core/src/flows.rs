//! Laplacian flow and modified Laplacian coflow of left-invariant
//! G2-structures, their time integration and linearisation.
//!
//! The coflow evolves `ψ` by `∂ψ = Δ_ψ ψ + 2 d((A − tr T) φ)`; on invariant
//! data `tr T` is constant, so the second term is `2 (A − tr T) dφ`. The
//! Laplacian flow evolves `φ` by `∂φ = Δ_φ φ`. Both may carry the gauge term
//! `L_V ω` with `V^i = c₁ g^{pq} T^i_{pq} + c₂ g^{ki} T^j_{jk}` and
//! `T = ∇^φ − ∇⁰`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{contract, inner, norm, Form, Vector7, DIM};
use crate::g2::{full_torsion_of, phi_of_psi_with, torsion_trace_of, G2Structure, NewtonOptions};
use crate::liealg::{hodge_laplacian, Connection, LieAlgebra};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    LaplacianFlow,
    ModifiedCoflow,
}

/// Background connection `∇⁰` for the gauge term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    /// Levi-Civita connection of the initial structure's metric.
    Initial,
    /// Vanishing coefficients in the invariant frame.
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeTurck {
    pub enabled: bool,
    pub c1: f64,
    pub c2: f64,
    pub background: Background,
}

impl Default for DeTurck {
    fn default() -> Self {
        Self {
            enabled: false,
            c1: 0.0,
            c2: 0.0,
            background: Background::Initial,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Rkf45,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Fixed step for rk4, initial step for rkf45.
    pub dt: f64,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// rkf45 halts when the accepted step would drop below this.
    pub min_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 1e-3,
            t_end: 1.0,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            min_dt: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HaltConditions {
    /// Newton residual above which the state counts as lost.
    pub max_newton_residual: f64,
    /// `max |dψ|` (or `|dφ|`) above which the run stops.
    pub max_closedness: f64,
}

impl Default for HaltConditions {
    fn default() -> Self {
        Self {
            max_newton_residual: 1e-8,
            max_closedness: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(rename = "flow_kind")]
    pub kind: FlowKind,
    #[serde(rename = "A")]
    pub a: f64,
    pub deturck: DeTurck,
    pub integrator: IntegratorConfig,
    /// Time between recorded states; the first and last state are always kept.
    pub monitor_interval: f64,
    pub halt: HaltConditions,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kind: FlowKind::ModifiedCoflow,
            a: 0.0,
            deturck: DeTurck::default(),
            integrator: IntegratorConfig::default(),
            monitor_interval: 0.1,
            halt: HaltConditions::default(),
        }
    }
}

impl FlowConfig {
    /// All violated constraints, as `field: message` strings.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let it = &self.integrator;
        if !(it.dt > 0.0) || !it.dt.is_finite() {
            out.push("integrator.dt must be > 0".to_string());
        }
        if !(it.t_end > 0.0) || !it.t_end.is_finite() {
            out.push("integrator.t_end must be > 0".to_string());
        }
        if !(it.rel_tol > 0.0) {
            out.push("integrator.rel_tol must be > 0".to_string());
        }
        if !(it.abs_tol >= 0.0) {
            out.push("integrator.abs_tol must be >= 0".to_string());
        }
        if !(it.min_dt > 0.0) {
            out.push("integrator.min_dt must be > 0".to_string());
        }
        if !self.a.is_finite() {
            out.push("A must be finite".to_string());
        }
        if !self.deturck.c1.is_finite() || !self.deturck.c2.is_finite() {
            out.push("deturck.c1 and deturck.c2 must be finite".to_string());
        }
        if !(self.monitor_interval > 0.0) {
            out.push("monitor_interval must be > 0".to_string());
        }
        if !(self.halt.max_newton_residual > 0.0) {
            out.push("halt.max_newton_residual must be > 0".to_string());
        }
        if !(self.halt.max_closedness > 0.0) {
            out.push("halt.max_closedness must be > 0".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}

/// `Δ_ψ ψ + 2 (A − tr T) dφ` at a recovered state.
pub fn coflow_rhs(alg: &LieAlgebra, state: &crate::g2::CoclosedState, a: f64) -> Result<Form> {
    coflow_rhs_at(alg, &state.structure, &state.psi, a)
}

fn coflow_rhs_at(alg: &LieAlgebra, s: &G2Structure, psi: &Form, a: f64) -> Result<Form> {
    let tr = torsion_trace_of(alg, s)?;
    let mut out = hodge_laplacian(alg, s.metric(), psi)?;
    out += &alg.differential(s.phi())?.scaled(2.0 * (a - tr));
    Ok(out)
}

/// `Δ_φ φ`.
pub fn laplacian_flow_rhs(alg: &LieAlgebra, s: &G2Structure) -> Result<Form> {
    hodge_laplacian(alg, s.metric(), s.phi())
}

/// Gauge vector `V^i = c₁ g^{pq} T^i_{pq} + c₂ g^{ki} T^j_{jk}` for
/// `T = ∇^φ − ∇⁰`.
pub fn deturck_vector(
    alg: &LieAlgebra,
    s: &G2Structure,
    background: &Connection,
    c1: f64,
    c2: f64,
) -> Vector7 {
    let lc = alg.levi_civita(s.metric());
    // diff[p][q][i] = T^i_{pq}
    let diff = lc.difference(background);
    let inv = s.metric().inverse();
    let mut v = Vector7::zeros();
    for i in 0..DIM {
        let mut first = 0.0;
        let mut second = 0.0;
        for p in 0..DIM {
            for q in 0..DIM {
                first += inv[(p, q)] * diff[p][q][i];
            }
        }
        for k in 0..DIM {
            let trace_k: f64 = (0..DIM).map(|j| diff[j][k][j]).sum();
            second += inv[(k, i)] * trace_k;
        }
        v[i] = c1 * first + c2 * second;
    }
    v
}

/// `L_V ω = d(ι_V ω) + ι_V dω` with `V` from [`deturck_vector`].
pub fn deturck_term(
    alg: &LieAlgebra,
    s: &G2Structure,
    omega: &Form,
    background: &Connection,
    c1: f64,
    c2: f64,
) -> Result<Form> {
    let v = deturck_vector(alg, s, background, c1, c2);
    lie_derivative(alg, &v, omega)
}

pub fn lie_derivative(alg: &LieAlgebra, v: &Vector7, omega: &Form) -> Result<Form> {
    let k = omega.degree();
    let mut out = Form::zero(k);
    if k > 0 {
        out += &alg.differential(&contract(v, omega)?)?;
    }
    if k < DIM {
        out += &contract(v, &alg.differential(omega)?)?;
    }
    Ok(out)
}

/// Per-state monitored quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(rename = "trT")]
    pub tr_t: f64,
    pub volume: f64,
    pub closedness: f64,
    pub rhs_norm: f64,
    pub dist_ref: f64,
}

/// Right-hand side evaluator for one run. Holds the Newton seed, which is
/// updated after every successful recovery.
pub struct FlowSystem<'a> {
    alg: &'a LieAlgebra,
    config: FlowConfig,
    background: Connection,
    seed: Form,
    pub rhs_evals: usize,
    pub last_newton_residual: f64,
}

/// Result of one right-hand-side evaluation.
pub struct Evaluation {
    pub rhs: Form,
    pub structure: G2Structure,
    pub newton_residual: f64,
}

impl<'a> FlowSystem<'a> {
    /// `seed` is the 3-form used to start the first `ψ → φ` recovery (ignored
    /// for the Laplacian flow). The background connection for the gauge term
    /// is fixed from the seed's metric when `Background::Initial` is chosen.
    pub fn new(alg: &'a LieAlgebra, config: FlowConfig, seed: &Form) -> Result<Self> {
        config.validate()?;
        alg.require_unimodular()?;
        let background = match config.deturck.background {
            Background::Flat => Connection::flat(),
            Background::Initial => alg.levi_civita(G2Structure::from_phi(seed.clone())?.metric()),
        };
        Ok(Self {
            alg,
            config,
            background,
            seed: seed.clone(),
            rhs_evals: 0,
            last_newton_residual: 0.0,
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn algebra(&self) -> &LieAlgebra {
        self.alg
    }

    pub fn set_background(&mut self, background: Connection) {
        self.background = background;
    }

    pub fn structure_of(&mut self, y: &Form) -> Result<(G2Structure, f64)> {
        match self.config.kind {
            FlowKind::ModifiedCoflow => {
                let (s, (_, res)) = phi_of_psi_with(y, &self.seed, NewtonOptions::default())?;
                self.seed = s.phi().clone();
                Ok((s, res))
            }
            FlowKind::LaplacianFlow => Ok((G2Structure::from_phi(y.clone())?, 0.0)),
        }
    }

    pub fn evaluate(&mut self, y: &Form) -> Result<Evaluation> {
        self.rhs_evals += 1;
        let (s, newton_residual) = self.structure_of(y)?;
        self.last_newton_residual = newton_residual;
        let mut rhs = match self.config.kind {
            FlowKind::ModifiedCoflow => coflow_rhs_at(self.alg, &s, y, self.config.a)?,
            FlowKind::LaplacianFlow => laplacian_flow_rhs(self.alg, &s)?,
        };
        let dt = &self.config.deturck;
        if dt.enabled && (dt.c1 != 0.0 || dt.c2 != 0.0) {
            rhs += &deturck_term(self.alg, &s, y, &self.background, dt.c1, dt.c2)?;
        }
        Ok(Evaluation {
            rhs,
            structure: s,
            newton_residual,
        })
    }

    pub fn rhs(&mut self, y: &Form) -> Result<Form> {
        self.evaluate(y).map(|e| e.rhs)
    }

    pub fn diagnostics(
        &self,
        y: &Form,
        eval: &Evaluation,
        reference: &Form,
    ) -> Result<Diagnostics> {
        let s = &eval.structure;
        Ok(Diagnostics {
            tr_t: torsion_trace_of(self.alg, s)?,
            volume: s.volume(),
            closedness: self.alg.differential(y)?.max_abs(),
            rhs_norm: norm(s.metric(), &eval.rhs),
            dist_ref: (y - reference).coeff_norm(),
        })
    }
}

/// One recorded state.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    pub t: f64,
    pub form: Form,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct CoflowLine<'a> {
    t: f64,
    psi: &'a [f64],
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

#[derive(Serialize)]
struct LaplacianLine<'a> {
    t: f64,
    phi: &'a [f64],
    #[serde(flatten)]
    diagnostics: &'a Diagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    PositivityLost { message: String },
    NewtonFailure { iterations: usize, residual: f64 },
    NewtonResidual { residual: f64 },
    ClosednessDrift { closedness: f64 },
    StepUnderflow { dt: f64 },
    Numerical { message: String },
}

impl Termination {
    fn from_error(e: Error) -> Self {
        match e {
            Error::NotG2Form(message) => Termination::PositivityLost { message },
            Error::RecoveryFailed {
                iterations,
                residual,
            } => Termination::NewtonFailure {
                iterations,
                residual,
            },
            other => Termination::Numerical {
                message: other.to_string(),
            },
        }
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub records: Vec<FlowRecord>,
    pub termination: Termination,
    /// Time reached (equals `t_end` on completion).
    pub t_final: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub rhs_evals: usize,
    /// `(closedness(t_final) − closedness(0)) / t_final`.
    pub closedness_drift_rate: f64,
}

impl Trajectory {
    pub fn first(&self) -> &FlowRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &FlowRecord {
        self.records
            .last()
            .expect("trajectory has the initial record")
    }

    /// Largest coefficient displacement from the initial state.
    pub fn max_displacement(&self) -> f64 {
        let y0 = &self.records[0].form;
        self.records
            .iter()
            .map(|r| (&r.form - y0).max_abs())
            .fold(0.0, f64::max)
    }

    /// JSON-lines output, one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            let line = match self.kind {
                FlowKind::ModifiedCoflow => serde_json::to_string(&CoflowLine {
                    t: r.t,
                    psi: r.form.coeffs(),
                    diagnostics: &r.diagnostics,
                })?,
                FlowKind::LaplacianFlow => serde_json::to_string(&LaplacianLine {
                    t: r.t,
                    phi: r.form.coeffs(),
                    diagnostics: &r.diagnostics,
                })?,
            };
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// CSV mirror of the JSON-lines columns; the form is spread over
    /// `psi_0 … psi_34` (or `phi_*`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let name = match self.kind {
            FlowKind::ModifiedCoflow => "psi",
            FlowKind::LaplacianFlow => "phi",
        };
        let mut header = vec!["t".to_string()];
        header.extend((0..35).map(|i| format!("{name}_{i}")));
        header.extend(
            ["trT", "volume", "closedness", "rhs_norm", "dist_ref"]
                .iter()
                .map(|s| s.to_string()),
        );
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let d = &r.diagnostics;
            let mut row = vec![r.t.to_string()];
            row.extend(r.form.coeffs().iter().map(|c| c.to_string()));
            row.extend(
                [d.tr_t, d.volume, d.closedness, d.rhs_norm, d.dist_ref]
                    .iter()
                    .map(|c| c.to_string()),
            );
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

// Fehlberg 4(5) tableau.
const F_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [
        -8.0 / 27.0,
        2.0,
        -3544.0 / 2565.0,
        1859.0 / 4104.0,
        -11.0 / 40.0,
    ],
];
const F_B4: [f64; 6] = [
    25.0 / 216.0,
    0.0,
    1408.0 / 2565.0,
    2197.0 / 4104.0,
    -1.0 / 5.0,
    0.0,
];
const F_B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];

fn combine(y: &Form, h: f64, ks: &[Form], weights: &[f64]) -> Form {
    let mut out = y.clone();
    for (k, w) in ks.iter().zip(weights) {
        if *w != 0.0 {
            out = out.axpy(h * w, k);
        }
    }
    out
}

fn rk4_step(sys: &mut FlowSystem, y: &Form, k1: &Form, h: f64) -> Result<Form> {
    let k2 = sys.rhs(&y.axpy(0.5 * h, k1))?;
    let k3 = sys.rhs(&y.axpy(0.5 * h, &k2))?;
    let k4 = sys.rhs(&y.axpy(h, &k3))?;
    Ok(combine(
        y,
        h,
        &[k1.clone(), k2, k3, k4],
        &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    ))
}

/// Returns `(5th-order solution, error estimate)`.
fn rkf45_step(sys: &mut FlowSystem, y: &Form, k1: &Form, h: f64) -> Result<(Form, Form)> {
    let mut ks = vec![k1.clone()];
    for stage in 1..6 {
        let yi = combine(y, h, &ks, &F_A[stage][..stage]);
        ks.push(sys.rhs(&yi)?);
    }
    let y5 = combine(y, h, &ks, &F_B5);
    let y4 = combine(y, h, &ks, &F_B4);
    let err = &y5 - &y4;
    Ok((y5, err))
}

/// Integrates the configured flow from `initial` (`ψ₀` for the coflow, `φ₀`
/// for the Laplacian flow). `seed` starts the first `ψ → φ` recovery; pass
/// `φ₀` itself for the Laplacian flow.
///
/// Numerical failures along the way end the run early and are reported in
/// [`Trajectory::termination`]; only an invalid configuration or initial
/// state returns `Err`.
pub fn integrate(
    alg: &LieAlgebra,
    config: &FlowConfig,
    initial: &Form,
    seed: &Form,
) -> Result<Trajectory> {
    let expected = match config.kind {
        FlowKind::ModifiedCoflow => 4,
        FlowKind::LaplacianFlow => 3,
    };
    if initial.degree() != expected {
        return Err(Error::DegreeMismatch {
            expected,
            found: initial.degree(),
        });
    }
    let mut sys = FlowSystem::new(alg, *config, seed)?;
    let it = config.integrator;
    let reference = initial.clone();

    let mut y = initial.clone();
    let mut t = 0.0;
    let mut eval = sys.evaluate(&y)?;
    let d0 = sys.diagnostics(&y, &eval, &reference)?;
    let mut records = vec![FlowRecord {
        t,
        form: y.clone(),
        diagnostics: d0,
    }];
    let mut next_monitor = config.monitor_interval;
    let mut h = it.dt.min(it.t_end);
    let mut steps = 0;
    let mut rejected = 0;
    let mut termination = Termination::Completed;
    let time_eps = 1e-12 * it.t_end.max(1.0);

    while t < it.t_end - time_eps {
        let step_h = h.min(it.t_end - t);
        let attempt = match it.method {
            Method::Rk4 => rk4_step(&mut sys, &y, &eval.rhs, step_h).map(|y1| (y1, step_h, None)),
            Method::Rkf45 => rkf45_step(&mut sys, &y, &eval.rhs, step_h).map(|(y1, err)| {
                let scale = y.max_abs().max(y1.max_abs());
                let tol = it.abs_tol + it.rel_tol * scale;
                let ratio = err.max_abs() / tol;
                (y1, step_h, Some(ratio))
            }),
        };
        let (y1, used_h, ratio) = match attempt {
            Ok(v) => v,
            Err(e) => {
                termination = Termination::from_error(e);
                break;
            }
        };
        if let Some(ratio) = ratio {
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            if ratio > 1.0 {
                rejected += 1;
                h = used_h * factor;
                if h < it.min_dt {
                    termination = Termination::StepUnderflow { dt: h };
                    break;
                }
                continue;
            }
            h = used_h * factor;
        }
        t += used_h;
        steps += 1;
        y = y1;
        eval = match sys.evaluate(&y) {
            Ok(e) => e,
            Err(e) => {
                termination = Termination::from_error(e);
                break;
            }
        };
        let diag = sys.diagnostics(&y, &eval, &reference)?;
        let at_end = t >= it.t_end - time_eps;
        if at_end || t >= next_monitor - time_eps {
            records.push(FlowRecord {
                t,
                form: y.clone(),
                diagnostics: diag,
            });
            while next_monitor <= t + time_eps {
                next_monitor += config.monitor_interval;
            }
        }
        if eval.newton_residual > config.halt.max_newton_residual {
            termination = Termination::NewtonResidual {
                residual: eval.newton_residual,
            };
            break;
        }
        if diag.closedness > config.halt.max_closedness {
            termination = Termination::ClosednessDrift {
                closedness: diag.closedness,
            };
            break;
        }
        if it.method == Method::Rkf45 && h < it.min_dt && !at_end {
            termination = Termination::StepUnderflow { dt: h };
            break;
        }
    }
    // Keep the state the run stopped at, even between monitor times.
    if records.last().map(|r| r.t) != Some(t) {
        if let Ok(diag) = sys.diagnostics(&y, &eval, &reference) {
            records.push(FlowRecord {
                t,
                form: y.clone(),
                diagnostics: diag,
            });
        }
    }
    let c0 = records[0].diagnostics.closedness;
    let c1 = records.last().expect("non-empty").diagnostics.closedness;
    Ok(Trajectory {
        kind: config.kind,
        records,
        termination,
        t_final: t,
        steps,
        rejected_steps: rejected,
        rhs_evals: sys.rhs_evals,
        closedness_drift_rate: if t > 0.0 { (c1 - c0) / t } else { 0.0 },
    })
}

/// Linearisation of a flow at a (nearly) static point.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    /// `L²`-orthonormalised directions (coefficient vectors).
    pub directions: Vec<Vec<f64>>,
    /// `M_ij = ⟨u_i, DQ u_j⟩_{L²}` in the orthonormal basis (row-major).
    pub matrix: Vec<Vec<f64>>,
    /// Eigenvalues of `½ (M + Mᵀ)`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `‖M − Mᵀ‖_F / 2`.
    pub asymmetry_norm: f64,
    /// Norm of the right-hand side at the base point.
    pub base_rhs_norm: f64,
    pub eps: f64,
}

impl SpectrumReport {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.matrix.len();
        DMatrix::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    pub fn max_entry(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Central-difference linearisation of the system's right-hand side at
/// `base` along `directions`.
///
/// Directions are orthonormalised for the `L²` product of the base metric
/// (pointwise inner product times the constant volume density). The base
/// point must satisfy `|Q(base)| ≤ static_tol`.
pub fn linearize(
    sys: &mut FlowSystem,
    base: &Form,
    directions: &[Form],
    eps: f64,
    static_tol: f64,
) -> Result<SpectrumReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be > 0".into()));
    }
    if directions.is_empty() {
        return Err(Error::InvalidArgument("no directions given".into()));
    }
    let base_eval = sys.evaluate(base)?;
    let s = base_eval.structure;
    let base_rhs_norm = norm(s.metric(), &base_eval.rhs);
    if base_rhs_norm > static_tol {
        return Err(Error::NotStatic(base_rhs_norm));
    }
    let vol = s.volume();
    let l2 = |a: &Form, b: &Form| -> f64 { inner(s.metric(), a, b).expect("same degree") * vol };

    let mut basis: Vec<Form> = Vec::new();
    for d in directions {
        if d.degree() != base.degree() {
            return Err(Error::DegreeMismatch {
                expected: base.degree(),
                found: d.degree(),
            });
        }
        let n0 = l2(d, d).sqrt();
        let mut u = d.clone();
        for _ in 0..2 {
            for b in &basis {
                u = u.axpy(-l2(b, &u), b);
            }
        }
        let n = l2(&u, &u).sqrt();
        if !(n > 1e-10 * n0) {
            return Err(Error::InvalidArgument(
                "direction set is degenerate (linearly dependent)".into(),
            ));
        }
        basis.push(u.scaled(1.0 / n));
    }
    let m = basis.len();
    let mut cols = Vec::with_capacity(m);
    for u in &basis {
        let plus = sys.rhs(&base.axpy(eps, u))?;
        let minus = sys.rhs(&base.axpy(-eps, u))?;
        cols.push((&plus - &minus).scaled(0.5 / eps));
    }
    let mat = DMatrix::from_fn(m, m, |i, j| l2(&basis[i], &cols[j]));
    let sym = (&mat + mat.transpose()) * 0.5;
    let asymmetry_norm = (&mat - mat.transpose()).norm() * 0.5;
    let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    Ok(SpectrumReport {
        directions: basis.iter().map(|u| u.coeffs().to_vec()).collect(),
        matrix: (0..m)
            .map(|i| (0..m).map(|j| mat[(i, j)]).collect())
            .collect(),
        eigenvalues,
        asymmetry_norm,
        base_rhs_norm,
        eps,
    })
}

/// `|T|² + tr T (4A − 3 tr T)` at a structure.
pub fn volume_growth_indicator(alg: &LieAlgebra, s: &G2Structure, a: f64) -> Result<f64> {
    let t = full_torsion_of(alg, s)?;
    let tr = t.trace(s.metric());
    Ok(t.norm_squared(s.metric()) + tr * (4.0 * a - 3.0 * tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, phi_bar, psi_bar, scaled_frame_phi};
    use crate::g2::CoclosedState;

    fn coflow(a: f64) -> FlowConfig {
        FlowConfig {
            a,
            ..FlowConfig::default()
        }
    }

    #[test]
    fn ee1_standard_is_static() {
        let rhs = coflow_rhs(&fixtures::ee1(), &CoclosedState::standard(), 0.0).unwrap();
        assert!(rhs.max_abs() <= 1e-10);
    }

    #[test]
    fn ee2_standard_gives_two_e1357() {
        let rhs = coflow_rhs(&fixtures::ee2(), &CoclosedState::standard(), 0.0).unwrap();
        assert_eq!(rhs, Form::monomial(2.0, &[1, 3, 5, 7]));
    }

    #[test]
    fn coflow_rhs_is_affine_in_a() {
        let alg = fixtures::ee2();
        let state =
            CoclosedState::from_phi(scaled_frame_phi(&[1.1, 0.9, 1.2, 1.0, 0.8, 1.3, 0.95]))
                .unwrap();
        let r0 = coflow_rhs(&alg, &state, 0.0).unwrap();
        let r1 = coflow_rhs(&alg, &state, 0.7).unwrap();
        let dphi = alg.differential(state.phi()).unwrap();
        assert!((&(&r1 - &r0) - &dphi.scaled(1.4)).max_abs() < 1e-14);
    }

    #[test]
    fn laplacian_flow_rhs_torus_is_zero() {
        let rhs = laplacian_flow_rhs(&fixtures::abelian(), &G2Structure::standard()).unwrap();
        assert!(rhs.is_zero(0.0));
    }

    #[test]
    fn deturck_trivial_cases() {
        let alg = fixtures::ee2();
        let s =
            G2Structure::from_phi(scaled_frame_phi(&[1.1, 0.9, 1.2, 1.0, 0.8, 1.3, 0.95])).unwrap();
        let lc = alg.levi_civita(s.metric());
        assert!(deturck_term(&alg, &s, s.psi(), &lc, 1.0, 1.0)
            .unwrap()
            .is_zero(0.0));
        let flat = Connection::flat();
        assert!(deturck_term(&alg, &s, s.psi(), &flat, 0.0, 0.0)
            .unwrap()
            .is_zero(0.0));
    }

    #[test]
    fn deturck_vector_matches_koszul_traces() {
        // With g = id and ∇⁰ flat, Koszul gives Γ^i_{pp} = c^p_{ip} and
        // Γ^j_{jk} = c^j_{jk}, so V^i = c₁ Σ_p c^p_{ip} + c₂ Σ_j c^j_{ji}:
        // both are ± tr ad, which vanish on unimodular algebras.
        let flat = Connection::flat();
        let s = G2Structure::standard();
        for alg in [fixtures::ee1(), fixtures::ee2()] {
            let v = deturck_vector(&alg, &s, &flat, 1.0, 0.0);
            assert!(v.amax() < 1e-15);
            let v = deturck_vector(&alg, &s, &flat, 0.0, 1.0);
            assert!(v.amax() < 1e-15);
        }
        // Non-unimodular: de^1 = e^{12}, so [e_1, e_2] = −e_1, tr ad_{e_2} = 1.
        let mut d1 = vec![Form::zero(2); 7];
        d1[0] = Form::monomial(1.0, &[1, 2]);
        let alg = LieAlgebra::new("r2", d1).unwrap();
        let c = alg.structure_constants();
        let v = deturck_vector(&alg, &s, &flat, 1.0, 0.0);
        for i in 0..7 {
            let oracle: f64 = (0..7).map(|p| c[i][p][p]).sum();
            assert!((v[i] - oracle).abs() < 1e-15);
        }
        let v = deturck_vector(&alg, &s, &flat, 0.0, 1.0);
        for i in 0..7 {
            let oracle: f64 = (0..7).map(|j| c[j][i][j]).sum();
            assert!((v[i] - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn lie_derivative_of_closed_form_is_exact() {
        let alg = fixtures::ee2();
        let v = Vector7::from_fn(|i, _| (i as f64) - 3.0);
        let l = lie_derivative(&alg, &v, &psi_bar()).unwrap();
        assert!(alg.differential(&l).unwrap().is_zero(1e-14));
    }

    #[test]
    fn config_violations() {
        let mut c = FlowConfig::default();
        assert!(c.violations().is_empty());
        c.integrator.dt = -1.0;
        assert_eq!(
            c.violations(),
            vec!["integrator.dt must be > 0".to_string()]
        );
        c.a = f64::NAN;
        assert_eq!(c.violations().len(), 2);
    }

    #[test]
    fn integrate_rejects_bad_inputs() {
        let alg = fixtures::ee1();
        let cfg = coflow(0.0);
        assert!(integrate(&alg, &cfg, &phi_bar(), &phi_bar()).is_err());
        let mut d1 = vec![Form::zero(2); 7];
        d1[0] = Form::monomial(1.0, &[1, 2]);
        let r2 = LieAlgebra::new("r2", d1).unwrap();
        assert!(matches!(
            integrate(&r2, &cfg, &psi_bar(), &phi_bar()),
            Err(Error::NonUnimodular(_))
        ));
    }

    #[test]
    fn ee1_static_trajectory() {
        let cfg = FlowConfig {
            integrator: IntegratorConfig {
                t_end: 1.0,
                dt: 0.05,
                ..IntegratorConfig::default()
            },
            ..coflow(0.0)
        };
        let traj = integrate(&fixtures::ee1(), &cfg, &psi_bar(), &phi_bar()).unwrap();
        assert!(traj.termination.is_completed());
        assert_eq!(traj.records.len(), 11);
        assert!(traj.max_displacement() <= 1e-12);
        assert!(traj.records.iter().all(|r| r.diagnostics.rhs_norm <= 1e-10));
    }

    #[test]
    fn positivity_loss_is_reported_not_panicked() {
        // Laplacian flow on EE2 with a huge step leaves the positive cone.
        let cfg = FlowConfig {
            kind: FlowKind::LaplacianFlow,
            integrator: IntegratorConfig {
                dt: 50.0,
                t_end: 100.0,
                ..IntegratorConfig::default()
            },
            halt: HaltConditions {
                max_closedness: 1e9,
                ..HaltConditions::default()
            },
            ..FlowConfig::default()
        };
        let traj = integrate(&fixtures::ee2(), &cfg, &phi_bar(), &phi_bar()).unwrap();
        assert!(!traj.termination.is_completed(), "{:?}", traj.termination);
        assert!(traj.t_final < 100.0);
    }

    #[test]
    fn jsonl_and_csv_columns() {
        let cfg = FlowConfig {
            integrator: IntegratorConfig {
                t_end: 0.2,
                dt: 0.1,
                ..IntegratorConfig::default()
            },
            ..coflow(0.0)
        };
        let traj = integrate(&fixtures::ee1(), &cfg, &psi_bar(), &phi_bar()).unwrap();
        let mut buf = Vec::new();
        traj.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<&str> = first
            .as_object()
            .unwrap()
            .keys()
            .map(|s| s.as_str())
            .collect();
        for k in [
            "t",
            "psi",
            "trT",
            "volume",
            "closedness",
            "rhs_norm",
            "dist_ref",
        ] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(keys.len(), 7);
        assert_eq!(first["psi"].as_array().unwrap().len(), 35);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 1 + 35 + 5);
        assert_eq!(text.lines().count(), 1 + traj.records.len());
    }

    #[test]
    fn linearize_rejects_non_static_base() {
        let alg = fixtures::ee2();
        let mut sys = FlowSystem::new(&alg, coflow(0.0), &phi_bar()).unwrap();
        let dirs = vec![Form::monomial(1.0, &[1, 2, 3, 4])];
        assert!(matches!(
            linearize(&mut sys, &psi_bar(), &dirs, 1e-4, 1e-8),
            Err(Error::NotStatic(_))
        ));
    }

    #[test]
    fn linearize_rejects_degenerate_directions() {
        let alg = fixtures::ee1();
        let mut sys = FlowSystem::new(&alg, coflow(0.0), &phi_bar()).unwrap();
        let d = Form::monomial(1.0, &[1, 2, 3, 4]);
        let dirs = vec![d.clone(), d.scaled(2.0)];
        assert!(linearize(&mut sys, &psi_bar(), &dirs, 1e-4, 1e-8).is_err());
    }
}
