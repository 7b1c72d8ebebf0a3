//! Experiment configuration: JSON with a `schema_version`, normalised so that
//! every implicit value is written out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use g2flow::fixtures::FixtureSet;
use g2flow::flows::{FlowConfig, FlowKind};
use g2flow::npmodel::NpParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Ee1Static,
    Ee2Family,
    Ee2Flow,
    Np,
    Sweep,
    Linearize,
    Custom,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Ee1Static => "ee1_static",
            Experiment::Ee2Family => "ee2_family",
            Experiment::Ee2Flow => "ee2_flow",
            Experiment::Np => "np",
            Experiment::Sweep => "sweep",
            Experiment::Linearize => "linearize",
            Experiment::Custom => "custom",
        }
    }

    fn default_algebra(self) -> &'static str {
        match self {
            Experiment::Ee1Static => "ee1",
            _ => "ee2",
        }
    }
}

/// Where the Lie algebra comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgebraSource {
    Fixture(String),
    File(PathBuf),
}

/// Initial data. Forms of the wrong degree for the chosen flow are converted
/// (`φ ↦ *φ`, or `ψ ↦ φ` by Newton).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Fixture(String),
    /// The standard 3-form in the coframe `a_i e^i`.
    Frame(Vec<f64>),
    Phi(Vec<f64>),
    Psi(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    /// Closed forms of the flow variable's degree.
    Coclosed,
    /// Exact forms `d(Λ^{k−1})`.
    Exact,
    /// All invariant forms.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub magnitude: f64,
    pub seed: u64,
    pub subspace: Subspace,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            magnitude: 0.0,
            seed: 0,
            subspace: Subspace::Coclosed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Jsonl,
    Csv,
    Both,
}

impl Format {
    pub fn jsonl(self) -> bool {
        matches!(self, Format::Jsonl | Format::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// File name stem; empty means the experiment name.
    pub prefix: String,
    pub format: Format,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            prefix: String::new(),
            format: Format::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticCheck {
    pub samples: usize,
    pub magnitude: f64,
    pub tol: f64,
}

impl Default for StaticCheck {
    fn default() -> Self {
        Self {
            samples: 100,
            magnitude: 0.3,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySpec {
    /// Explicit `(c₁,…,c₇)` points.
    pub points: Vec<Vec<f64>>,
    /// Additional uniformly sampled points.
    pub random: usize,
    pub low: f64,
    pub high: f64,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            points: vec![vec![1.0; 7], vec![1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0]],
            random: 20,
            low: 0.5,
            high: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpSpec {
    pub tau0: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c0: f64,
    /// `None` means `0.8 · 4√c₀/(5τ₀²)` for `A = 0`, else `1`.
    pub t_end: Option<f64>,
    pub dt: f64,
}

impl Default for NpSpec {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            a: 0.0,
            c0: 1.0,
            t_end: None,
            dt: 1e-4,
        }
    }
}

impl NpSpec {
    pub fn params(&self) -> NpParams {
        NpParams {
            tau0: self.tau0,
            a: self.a,
            c0: self.c0,
        }
    }

    fn resolved_t_end(&self) -> f64 {
        self.t_end.unwrap_or_else(|| {
            if self.a == 0.0 && self.tau0 != 0.0 {
                // An invalid c0 is reported on its own; fall back to c0 = 1 here.
                let root = if self.c0 > 0.0 { self.c0.sqrt() } else { 1.0 };
                0.8 * root * self.params().blow_down_time()
            } else {
                1.0
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            a: vec![0.0, 0.5, 1.0],
            magnitude: vec![0.01, 0.05],
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearizeSpec {
    pub eps: f64,
    pub static_tol: f64,
    pub directions: Subspace,
}

impl Default for LinearizeSpec {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            static_tol: 1e-8,
            directions: Subspace::Exact,
        }
    }
}

/// A fully normalised experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub algebra: Option<AlgebraSource>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub static_check: StaticCheck,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default)]
    pub np: NpSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub linearize: LinearizeSpec,
}

impl ExperimentConfig {
    pub fn minimal(experiment: Experiment) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            algebra: None,
            initial: None,
            flow: FlowConfig::default(),
            perturbation: Perturbation::default(),
            output: OutputSpec::default(),
            static_check: StaticCheck::default(),
            family: FamilySpec::default(),
            np: NpSpec::default(),
            sweep: SweepSpec::default(),
            linearize: LinearizeSpec::default(),
        }
    }

    pub fn prefix(&self) -> &str {
        if self.output.prefix.is_empty() {
            self.experiment.name()
        } else {
            &self.output.prefix
        }
    }

    /// Fills every implicit value.
    pub fn normalized(mut self) -> Self {
        if self.algebra.is_none() {
            self.algebra = Some(AlgebraSource::Fixture(
                self.experiment.default_algebra().to_string(),
            ));
        }
        if self.initial.is_none() {
            self.initial = Some(InitialSpec::Fixture(
                match self.flow.kind {
                    FlowKind::ModifiedCoflow => "psi_bar",
                    FlowKind::LaplacianFlow => "phi_bar",
                }
                .to_string(),
            ));
        }
        if self.output.prefix.is_empty() {
            self.output.prefix = self.experiment.name().to_string();
        }
        if self.np.t_end.is_none() {
            self.np.t_end = Some(self.np.resolved_t_end());
        }
        self
    }

    /// Every violated constraint; empty when the configuration is usable.
    pub fn violations(&self, fixtures: &FixtureSet, base_dir: &Path) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            v.push(format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ));
        }
        match &self.algebra {
            Some(AlgebraSource::Fixture(name)) => {
                let names = fixtures.algebra_names();
                if !names.contains(name) {
                    v.push(format!(
                        "algebra.fixture: unknown fixture `{name}`; available: {}",
                        names.join(", ")
                    ));
                } else if let Ok(alg) = fixtures.algebra(name) {
                    let j = alg.jacobi_check();
                    if !j.holds {
                        v.push(format!(
                            "algebra.fixture: `{name}` violates d² = 0 (residual {:e})",
                            j.max_residual
                        ));
                    }
                }
            }
            Some(AlgebraSource::File(path)) => {
                let p = resolve(base_dir, path);
                match g2flow::LieAlgebra::from_json_file(&p) {
                    Err(e) => v.push(format!("algebra.file: {}: {e}", p.display())),
                    Ok(alg) => {
                        let j = alg.jacobi_check();
                        if !j.holds {
                            v.push(format!(
                                "algebra.file: {} violates d² = 0 (residual {:e})",
                                p.display(),
                                j.max_residual
                            ));
                        }
                    }
                }
            }
            None => {}
        }
        match &self.initial {
            Some(InitialSpec::Fixture(name)) => {
                let names = fixtures.form_names();
                if !names.contains(name) {
                    v.push(format!(
                        "initial.fixture: unknown fixture `{name}`; available: {}",
                        names.join(", ")
                    ));
                }
            }
            Some(InitialSpec::Frame(a)) => {
                if a.len() != 7 {
                    v.push(format!(
                        "initial.frame must have 7 entries, got {}",
                        a.len()
                    ));
                }
                if a.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    v.push("initial.frame entries must be > 0".into());
                }
            }
            Some(InitialSpec::Phi(c)) | Some(InitialSpec::Psi(c)) => {
                if c.len() != 35 {
                    v.push(format!(
                        "initial coefficient vector must have 35 entries, got {}",
                        c.len()
                    ));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    v.push("initial coefficients must be finite".into());
                }
            }
            None => {}
        }
        v.extend(
            self.flow
                .violations()
                .into_iter()
                .map(|s| format!("flow.{s}")),
        );
        let p = &self.perturbation;
        if !(p.magnitude >= 0.0) || !p.magnitude.is_finite() {
            v.push("perturbation.magnitude must be >= 0".into());
        }
        if self.output.dir.as_os_str().is_empty() {
            v.push("output.dir must not be empty".into());
        }
        match self.experiment {
            Experiment::Ee1Static => {
                let s = &self.static_check;
                if s.samples == 0 {
                    v.push("static_check.samples must be > 0".into());
                }
                if !(s.magnitude >= 0.0) {
                    v.push("static_check.magnitude must be >= 0".into());
                }
                if !(s.tol > 0.0) {
                    v.push("static_check.tol must be > 0".into());
                }
            }
            Experiment::Ee2Family => {
                let f = &self.family;
                for (i, pt) in f.points.iter().enumerate() {
                    if pt.len() != 7 || pt.iter().any(|x| !(*x > 0.0)) {
                        v.push(format!("family.points[{i}] must be 7 positive reals"));
                    }
                }
                if !(f.low > 0.0 && f.high > f.low) {
                    v.push("family.low must be > 0 and family.high > family.low".into());
                }
                if f.points.is_empty() && f.random == 0 {
                    v.push("family must contain at least one point".into());
                }
            }
            Experiment::Np => {
                let n = &self.np;
                if !n.tau0.is_finite() {
                    v.push("np.tau0 must be finite".into());
                }
                if !n.a.is_finite() {
                    v.push("np.A must be finite".into());
                }
                if !(n.c0 > 0.0) {
                    v.push("np.c0 must be > 0".into());
                }
                if !(n.dt > 0.0) {
                    v.push("np.dt must be > 0".into());
                }
                let t_end = n.resolved_t_end();
                if !(t_end > 0.0) {
                    v.push("np.t_end must be > 0".into());
                } else if n.a == 0.0 && n.tau0 != 0.0 {
                    let horizon = n.c0.sqrt() * n.params().blow_down_time();
                    if t_end >= horizon {
                        v.push(format!(
                            "np.t_end must be < {horizon} (blow-down time) for the A = 0 comparison"
                        ));
                    }
                }
            }
            Experiment::Sweep => {
                let s = &self.sweep;
                if s.a.is_empty() || s.magnitude.is_empty() || s.seeds.is_empty() {
                    v.push("sweep.A, sweep.magnitude and sweep.seeds must be non-empty".into());
                }
                if s.a.iter().any(|x| !x.is_finite()) {
                    v.push("sweep.A entries must be finite".into());
                }
                if s.magnitude.iter().any(|x| !(*x >= 0.0)) {
                    v.push("sweep.magnitude entries must be >= 0".into());
                }
            }
            Experiment::Linearize => {
                let l = &self.linearize;
                if !(l.eps > 0.0) {
                    v.push("linearize.eps must be > 0".into());
                }
                if !(l.static_tol > 0.0) {
                    v.push("linearize.static_tol must be > 0".into());
                }
            }
            Experiment::Ee2Flow | Experiment::Custom => {}
        }
        v
    }
}

pub(crate) fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Why a configuration was refused.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Unreadable file or malformed JSON (with line and column).
    Parse(String),
    Invalid(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(s) => write!(f, "{s}"),
            ConfigError::Invalid(v) => {
                for (i, s) in v.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{s}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Parse(format!("config: {e}")))
}

/// Validates `text` and returns the normalised configuration. Relative
/// paths inside the configuration are resolved against `base_dir`.
pub fn validate_config_str(
    text: &str,
    fixtures: &FixtureSet,
    base_dir: &Path,
) -> Result<ExperimentConfig, ConfigError> {
    let cfg = parse_config(text)?.normalized();
    let v = cfg.violations(fixtures, base_dir);
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

pub fn validate_config(
    path: &Path,
    fixtures: &FixtureSet,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    validate_config_str(&text, fixtures, base)
}
