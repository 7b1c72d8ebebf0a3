// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use g2flow::fixtures::FixtureSet;
use g2flow::{coflow_rhs, norm, CoclosedState};
use g2flow_cli::config::{Experiment, ExperimentConfig, Format};
use g2flow_cli::{exit, fixtures_from_env, validate_config, ConfigError, RunError, Runner};

/// Laplacian-type flows of G2-structures on 7-dimensional Lie algebras.
#[derive(Parser, Debug)]
#[command(name = "g2flow", version)]
struct Cli {
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Overrides `perturbation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a config and print it with every default filled in; without
    /// a config, run a quick self-check of the fixtures.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the experiment described by a config.
    Run { config: PathBuf },
    /// Run a sweep config (grid over A, perturbation size and seed).
    Sweep { config: PathBuf },
    /// Linearise the flow at the config's initial point.
    Linearize { config: PathBuf },
    /// Integrate the scalar nearly-parallel model.
    Np {
        #[arg(long, default_value_t = 1.0)]
        tau0: f64,
        #[arg(long = "A", default_value_t = 0.0, allow_negative_numbers = true)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fixtures = fixtures_from_env();
    ExitCode::from(dispatch(&cli, &fixtures) as u8)
}

fn dispatch(cli: &Cli, fixtures: &FixtureSet) -> i32 {
    match &cli.command {
        Command::Check { config: None } => self_check(fixtures),
        Command::Check { config: Some(p) } => match load(p, fixtures, cli, None) {
            Ok(cfg) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&cfg).expect("serialisable")
                );
                exit::OK
            }
            Err(code) => code,
        },
        Command::Run { config } => with_config(config, fixtures, cli, None),
        Command::Sweep { config } => with_config(config, fixtures, cli, Some(Experiment::Sweep)),
        Command::Linearize { config } => {
            with_config(config, fixtures, cli, Some(Experiment::Linearize))
        }
        Command::Np {
            tau0,
            a,
            c0,
            t_end,
            dt,
        } => {
            let mut cfg = ExperimentConfig::minimal(Experiment::Np);
            cfg.np.tau0 = *tau0;
            cfg.np.a = *a;
            cfg.np.c0 = *c0;
            cfg.np.t_end = *t_end;
            cfg.np.dt = *dt;
            apply_overrides(&mut cfg, cli);
            let cfg = cfg.normalized();
            let v = cfg.violations(fixtures, Path::new("."));
            if !v.is_empty() {
                report_violations(&ConfigError::Invalid(v));
                return exit::VALIDATION;
            }
            execute(&cfg, fixtures, cli, PathBuf::from("."))
        }
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) {
    if let Some(d) = &cli.output_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.perturbation.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
}

fn report_violations(e: &ConfigError) {
    eprintln!("invalid configuration:");
    for line in e.to_string().lines() {
        eprintln!("  - {line}");
    }
}

fn load(
    path: &Path,
    fixtures: &FixtureSet,
    cli: &Cli,
    expect: Option<Experiment>,
) -> Result<ExperimentConfig, i32> {
    let mut cfg = match validate_config(path, fixtures) {
        Ok(c) => c,
        Err(e) => {
            report_violations(&e);
            return Err(exit::VALIDATION);
        }
    };
    if let Some(x) = expect {
        if cfg.experiment != x {
            eprintln!(
                "invalid configuration:\n  - experiment must be `{}` for this command, got `{}`",
                x.name(),
                cfg.experiment.name()
            );
            return Err(exit::VALIDATION);
        }
    }
    apply_overrides(&mut cfg, cli);
    Ok(cfg)
}

fn with_config(path: &Path, fixtures: &FixtureSet, cli: &Cli, expect: Option<Experiment>) -> i32 {
    match load(path, fixtures, cli, expect) {
        Ok(cfg) => {
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            execute(&cfg, fixtures, cli, base)
        }
        Err(code) => code,
    }
}

fn execute(cfg: &ExperimentConfig, fixtures: &FixtureSet, cli: &Cli, base_dir: PathBuf) -> i32 {
    let runner = Runner {
        fixtures,
        base_dir,
        jobs: cli.jobs,
    };
    match runner.run(cfg) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            match report.halted {
                Some(h) => {
                    eprintln!("numerical halt: {h}");
                    exit::HALT
                }
                None => exit::OK,
            }
        }
        Err(RunError::Setup(e)) => {
            eprintln!("invalid configuration:\n  - {e}");
            exit::VALIDATION
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: {e}");
            exit::FAILURE
        }
    }
}

fn self_check(fixtures: &FixtureSet) -> i32 {
    let mut ok = true;
    for name in fixtures.algebra_names() {
        match fixtures.algebra(&name) {
            Ok(alg) => {
                let j = alg.jacobi_check();
                println!(
                    "algebra {name}: d² = 0 {} (residual {:e}), unimodular {}",
                    if j.holds { "holds" } else { "FAILS" },
                    j.max_residual,
                    alg.is_unimodular()
                );
            }
            Err(e) => {
                println!("algebra {name}: {e}");
                ok = false;
            }
        }
    }
    for name in fixtures.form_names() {
        match fixtures.form(&name) {
            Ok(f) => println!("form {name}: degree {}", f.degree()),
            Err(e) => {
                println!("form {name}: {e}");
                ok = false;
            }
        }
    }
    if let (Ok(alg), Ok(psi), Ok(phi)) = (
        fixtures.algebra("ee1"),
        fixtures.form("psi_bar"),
        fixtures.form("phi_bar"),
    ) {
        match CoclosedState::new(psi, &phi).and_then(|s| {
            let q = coflow_rhs(&alg, &s, 0.0)?;
            Ok(norm(s.metric(), &q))
        }) {
            Ok(n) => println!("ee1: |Q(psi_bar)| = {n:e}"),
            Err(e) => {
                println!("ee1: {e}");
                ok = false;
            }
        }
    }
    if ok {
        exit::OK
    } else {
        exit::FAILURE
    }
}
