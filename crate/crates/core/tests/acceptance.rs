#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so each criterion prints a single status
//! line with its timing; the process exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use g2flow::decomp::{
    decompose_variation, metric_variation, numeric_rank, project3, Projectors2, Projectors3,
};
use g2flow::exterior::{star, Form, Metric};
use g2flow::fixtures::{ee1, ee1_corrupted, ee2, phi_bar, psi_bar, scaled_frame_phi};
use g2flow::flows::{
    coflow_rhs, integrate, linearize, FlowConfig, FlowSystem, IntegratorConfig, Method,
};
use g2flow::g2::{metric_from_phi, phi_of_psi, torsion_trace, CoclosedState, G2Structure};
use g2flow::liealg::LieAlgebra;
use g2flow::npmodel::{np_exact_a0, np_rhs, np_solve, NpParams};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<E: std::fmt::Debug, T>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| format!("{e:?}"))
}

/// `base + Σ r_i f_i` over an orthonormal basis of closed 4-forms, with
/// `r_i` uniform in `[−m, m]`, kept only if `φ` can be recovered.
fn random_coclosed(
    alg: &LieAlgebra,
    base: &CoclosedState,
    m: f64,
    rng: &mut ChaCha8Rng,
) -> CoclosedState {
    let closed = alg.closed_forms(4);
    loop {
        let mut psi = base.psi.clone();
        for f in &closed {
            psi = psi.axpy(rng.gen_range(-m..m), f);
        }
        if let Ok(s) = CoclosedState::new(psi, base.phi()) {
            return s;
        }
    }
}

fn random_frame(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 7] {
    std::array::from_fn(|_| rng.gen_range(lo..hi))
}

fn rhs_norm(alg: &LieAlgebra, s: &CoclosedState, a: f64) -> Result<f64, String> {
    Ok(g2flow::norm(s.metric(), &ok(coflow_rhs(alg, s, a))?))
}

fn criterion_1() -> Check {
    let g = Metric::identity();
    let phi = phi_bar();
    let mut best = Duration::MAX;
    let mut out = Form::zero(4);
    for _ in 0..20 {
        let t = Instant::now();
        out = star(&g, &phi);
        best = best.min(t.elapsed());
    }
    ensure!(
        out == psi_bar(),
        "star(id, φ̄) = {:?}",
        out.terms().collect::<Vec<_>>()
    );
    ensure!(
        out.coeffs().iter().all(|c| c.fract() == 0.0),
        "non-integer coefficient"
    );
    ensure!(best < Duration::from_millis(1), "took {best:?}");
    Ok(format!("exact 7-term match in {best:?}"))
}

fn criterion_2() -> Check {
    let (g, vol) = ok(metric_from_phi(&phi_bar()))?;
    let err = (g.matrix() - nalgebra::SMatrix::<f64, 7, 7>::identity())
        .abs()
        .max();
    ensure!(err <= 1e-14, "|g − I| = {err:e}");
    let verr = (vol.coeffs()[0] - 1.0).abs();
    ensure!(
        vol.degree() == 7 && verr <= 1e-14,
        "vol = {:?}",
        vol.coeffs()
    );
    Ok(format!("|g − I| = {err:e}, |vol − e^1234567| = {verr:e}"))
}

fn criterion_3() -> Check {
    let alg = ee1();
    let base = CoclosedState::standard();
    let r0 = rhs_norm(&alg, &base, 0.0)?;
    ensure!(r0 <= 1e-10, "rhs_norm(ψ̄) = {r0:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_coclosed(&alg, &base, 0.3, &mut rng);
        ensure!(ok(s.closedness(&alg))? <= 1e-12, "sample not closed");
        worst = worst.max(rhs_norm(&alg, &s, 0.0)?);
    }
    ensure!(worst <= 1e-8, "worst sampled rhs_norm = {worst:e}");

    let cfg = FlowConfig {
        integrator: IntegratorConfig {
            method: Method::Rkf45,
            t_end: 10.0,
            ..IntegratorConfig::default()
        },
        monitor_interval: 1.0,
        ..FlowConfig::default()
    };
    let traj = ok(integrate(&alg, &cfg, &psi_bar(), &phi_bar()))?;
    ensure!(
        traj.termination.is_completed(),
        "run stopped: {:?}",
        traj.termination
    );
    let moved = traj.max_displacement();
    ensure!(moved <= 1e-8, "moved {moved:e}");
    let rk4 = FlowConfig {
        integrator: IntegratorConfig {
            method: Method::Rk4,
            dt: 1e-2,
            t_end: 10.0,
            ..IntegratorConfig::default()
        },
        ..cfg
    };
    let traj4 = ok(integrate(&alg, &rk4, &psi_bar(), &phi_bar()))?;
    let moved4 = traj4.max_displacement();
    ensure!(
        traj4.termination.is_completed() && moved4 <= 1e-8,
        "rk4 moved {moved4:e}"
    );
    Ok(format!(
        "|Q(ψ̄)| = {r0:e}, 100 samples max {worst:e}, t=10 displacement {moved:e} (rkf45) / {moved4:e} (rk4)"
    ))
}

/// `2(c₂c₄c₇ + c₂c₅c₆ − c₃c₄c₆)/(c₁²c₃c₅c₇)`.
fn ee2_displayed(c: &[f64; 7]) -> f64 {
    let [c1, c2, c3, c4, c5, c6, c7] = *c;
    2.0 * (c2 * c4 * c7 + c2 * c5 * c6 - c3 * c4 * c6) / (c1 * c1 * c3 * c5 * c7)
}

fn criterion_4() -> Check {
    let alg = ee2();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut literal_worst: f64 = 0.0;
    let mut frame_worst: f64 = 0.0;
    let mut leak_worst: f64 = 0.0;
    for _ in 0..40 {
        let c = random_frame(&mut rng, 0.5, 2.0);
        let s = ok(CoclosedState::from_phi(scaled_frame_phi(&c)))?;
        ensure!(
            ok(s.closedness(&alg))? <= 1e-12,
            "family member not coclosed"
        );
        let rhs = ok(coflow_rhs(&alg, &s, 0.0))?;
        let lead = rhs.coeff(&[1, 3, 5, 7]);
        let rest = &rhs - &Form::monomial(lead, &[1, 3, 5, 7]);
        let [c1, c2, c3, c4, c5, c6, c7] = c;
        let scale = 2.0 * (c2 * c4 * c7 + c2 * c5 * c6 + c3 * c4 * c6) / (c1 * c1 * c3 * c5 * c7);
        leak_worst = leak_worst.max(rest.max_abs() / lead.abs().max(1e-300));
        let displayed = ee2_displayed(&c);
        literal_worst = literal_worst.max((lead - displayed).abs() / scale);
        let frame = c1 * c3 * c5 * c7;
        frame_worst = frame_worst.max((lead / frame - displayed).abs() / scale);
    }
    ensure!(
        leak_worst <= 1e-10,
        "components off e^1357 up to {leak_worst:e}·leading"
    );
    let literal_matches = literal_worst <= 1e-8;
    ensure!(
        literal_matches || frame_worst <= 1e-8,
        "coefficient matches neither the displayed formula ({literal_worst:e}) nor its frame form ({frame_worst:e})"
    );

    // c = 1: the displayed expression gives 2 and so does the computation.
    let std_rhs = ok(coflow_rhs(&alg, &CoclosedState::standard(), 0.0))?;
    ensure!(
        std_rhs == Form::monomial(2.0, &[1, 3, 5, 7]),
        "Q(ψ̄) on EE2 = {:?}",
        std_rhs.terms().collect::<Vec<_>>()
    );

    // Zero set of the numerator: c₃ = c₂(c₄c₇ + c₅c₆)/(c₄c₆).
    let mut static_worst: f64 = 0.0;
    for _ in 0..20 {
        let mut c = random_frame(&mut rng, 0.5, 2.0);
        c[2] = c[1] * (c[3] * c[6] + c[4] * c[5]) / (c[3] * c[5]);
        let s = ok(CoclosedState::from_phi(scaled_frame_phi(&c)))?;
        static_worst = static_worst.max(rhs_norm(&alg, &s, 0.0)?);
    }
    ensure!(
        static_worst <= 1e-10,
        "zero-set points not static: {static_worst:e}"
    );
    // Off the zero set the flow is not static.
    let mut moving_min = f64::INFINITY;
    for _ in 0..20 {
        let c = random_frame(&mut rng, 0.5, 2.0);
        let n = ee2_displayed(&c).abs();
        if n > 1e-3 {
            let s = ok(CoclosedState::from_phi(scaled_frame_phi(&c)))?;
            moving_min = moving_min.min(rhs_norm(&alg, &s, 0.0)? / n);
        }
    }
    ensure!(moving_min > 1e-3, "a point off the zero set is static");

    // A static member of the family stays put under the flow.
    let c = [1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0];
    let s = ok(CoclosedState::from_phi(scaled_frame_phi(&c)))?;
    let cfg = FlowConfig {
        integrator: IntegratorConfig {
            method: Method::Rkf45,
            t_end: 1.0,
            ..IntegratorConfig::default()
        },
        ..FlowConfig::default()
    };
    let traj = ok(integrate(&alg, &cfg, &s.psi, s.phi()))?;
    ensure!(traj.max_displacement() <= 1e-8, "static member moved");

    let verdict = if literal_matches {
        "displayed formula matches".to_string()
    } else {
        format!(
            "displayed formula off (worst {literal_worst:.2e}); it equals the e^1357 coefficient divided by c1c3c5c7 (err {frame_worst:.1e}), i.e. the coefficient on f^1357 for f^i = c_i e^i"
        )
    };
    Ok(format!(
        "∝ e^1357 (leak {leak_worst:.1e}); {verdict}; Q(ψ̄) = 2e^1357 so ψ̄ is not static; numerator zero set static (max {static_worst:.1e})"
    ))
}

fn criterion_5() -> Check {
    let mut worst: f64 = 0.0;
    let mut slope_worst: f64 = 0.0;
    for tau0 in [0.5, 1.0, 2.0] {
        let p = NpParams {
            tau0,
            a: 0.0,
            c0: 1.0,
        };
        let t_end = 0.8 * p.blow_down_time();
        let traj = ok(np_solve(&p, t_end, 1e-4))?;
        ensure!(traj.blow_down.is_none(), "blow-down before 0.8·T");
        for s in &traj.samples {
            let e = np_exact_a0(s.t, tau0, 1.0);
            worst = worst.max(((s.c - e) / e).abs());
        }
        for w in traj.samples.windows(2) {
            ensure!(
                w[1].vol < w[0].vol,
                "volume not strictly decreasing at t = {}",
                w[1].t
            );
            let slope = (w[1].vol.ln() - w[0].vol.ln()) / (w[1].c.ln() - w[0].c.ln());
            slope_worst = slope_worst.max((slope - 1.75).abs());
        }
    }
    ensure!(worst <= 1e-6, "relative error {worst:e}");
    ensure!(slope_worst <= 1e-8, "log-slope off by {slope_worst:e}");
    // Volume law from the G2 machinery: vol(c ψ̄) = c^{7/4}.
    let mut g2_slope: f64 = 0.0;
    let cs = [0.2, 0.5, 1.0, 1.7, 3.0];
    let vols: Vec<f64> = cs
        .iter()
        .map(|c| phi_of_psi(&psi_bar().scaled(*c), &phi_bar()).map(|s| s.volume()))
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{e:?}"))?;
    for i in 1..cs.len() {
        let slope = (vols[i].ln() - vols[i - 1].ln()) / (cs[i].ln() - cs[i - 1].ln());
        g2_slope = g2_slope.max((slope - 1.75).abs());
    }
    ensure!(g2_slope <= 1e-8, "G2 volume slope off by {g2_slope:e}");
    Ok(format!(
        "max rel error {worst:.2e}, log-slope error {slope_worst:.1e} (scalar) / {g2_slope:.1e} (recovered φ)"
    ))
}

fn criterion_6() -> Check {
    let a = 1.0;
    let tau0 = 0.8;
    let mut summary = Vec::new();
    for mu in [0.9, 1.1] {
        let p = NpParams { tau0, a, c0: mu };
        let traj = ok(np_solve(&p, 3.0, 1e-3))?;
        let want = (mu - 1.0_f64).signum();
        for s in &traj.samples {
            ensure!(
                s.rhs.signum() == want && s.rhs != 0.0,
                "μ = {mu}: dc/dt = {} at t = {}",
                s.rhs,
                s.t
            );
        }
        summary.push(format!(
            "μ={mu}: c({:.2}) = {:.4}",
            traj.last().t,
            traj.last().c
        ));
    }
    // Instability: d/dc of the right-hand side at the stationary point.
    let p = NpParams { tau0, a, c0: 1.0 };
    let h = 1e-6;
    let slope = (ok(np_rhs(1.0 + h, &p))? - ok(np_rhs(1.0 - h, &p))?) / (2.0 * h);
    ensure!(slope > 0.0, "d rhs/dc at c = 1 is {slope}");
    Ok(format!("{}; d rhs/dc(1) = {slope:.4}", summary.join(", ")))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for alg in [ee1(), ee2()] {
        for _ in 0..5 {
            let base = ok(CoclosedState::from_phi(scaled_frame_phi(&random_frame(
                &mut rng, 0.7, 1.4,
            ))))?;
            let s = random_coclosed(&alg, &base, 0.1, &mut rng);
            let t0 = ok(torsion_trace(&alg, &s))?;
            ensure!(t0.abs() > 1e-6, "degenerate sample with tr T = {t0:e}");
            for c in [0.5, 2.0, 5.0] {
                let sc = ok(CoclosedState::new(s.psi.scaled(c), s.phi()))?;
                let tc = ok(torsion_trace(&alg, &sc))?;
                worst = worst.max((tc - c.powf(-0.25) * t0).abs() / t0.abs());
            }
            count += 1;
        }
    }
    ensure!(worst <= 1e-8, "relative error {worst:e}");
    Ok(format!(
        "{count} structures × 3 factors, max relative error {worst:.1e}"
    ))
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for alg in [ee1(), ee2()] {
        for _ in 0..10 {
            let base = ok(CoclosedState::from_phi(scaled_frame_phi(&random_frame(
                &mut rng, 0.7, 1.4,
            ))))?;
            let s = random_coclosed(&alg, &base, 0.2, &mut rng);
            let a = rng.gen_range(-2.0..2.0);
            let rhs = ok(coflow_rhs(&alg, &s, a))?;
            worst = worst.max(ok(alg.differential(&rhs))?.max_abs());
        }
    }
    ensure!(worst <= 1e-12, "|d Q| = {worst:e}");
    Ok(format!("20 random closed ψ, max |d Q(ψ)| = {worst:.1e}"))
}

fn criterion_9() -> Check {
    let g = Metric::identity();
    let mut parts = Vec::new();
    for alg in [ee1(), ee2()] {
        for k in 2..=4 {
            let r = ok(alg.green_identity_check(&g, k))?;
            ensure!(
                r.max_residual <= 1e-10,
                "{} k={k}: residual {:e}",
                alg.name(),
                r.max_residual
            );
            parts.push(format!("{}:{k}:{:.0e}", alg.name(), r.max_residual));
        }
    }
    Ok(format!(
        "ψ = d G d* ψ on Im d, residuals {}",
        parts.join(" ")
    ))
}

fn projector_defects(ps: &[&DMatrix<f64>], gram: &DMatrix<f64>) -> f64 {
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    let mut sum = DMatrix::zeros(n, n);
    for (i, p) in ps.iter().enumerate() {
        worst = worst.max((*p * *p - *p).amax());
        worst = worst.max((p.transpose() * gram - gram * *p).amax());
        for (j, q) in ps.iter().enumerate() {
            if i != j {
                worst = worst.max((*p * *q).amax());
            }
        }
        sum += *p;
    }
    worst.max((sum - DMatrix::identity(n, n)).amax())
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut defect: f64 = 0.0;
    for s in [
        G2Structure::standard(),
        ok(G2Structure::from_phi(scaled_frame_phi(&random_frame(
            &mut rng, 0.7, 1.4,
        ))))?,
    ] {
        let p2: &Projectors2 = s.projectors2();
        let p3: &Projectors3 = s.projectors3();
        let r2 = (numeric_rank(&p2.p7, 1e-10), numeric_rank(&p2.p14, 1e-10));
        let r3 = (
            numeric_rank(&p3.p1, 1e-10),
            numeric_rank(&p3.p7, 1e-10),
            numeric_rank(&p3.p27, 1e-10),
        );
        ensure!(r2 == (7, 14), "Λ² ranks {r2:?}");
        ensure!(r3 == (1, 7, 27), "Λ³ ranks {r3:?}");
        defect = defect.max(projector_defects(&[&p2.p7, &p2.p14], s.metric().gram(2)));
        defect = defect.max(projector_defects(
            &[&p3.p1, &p3.p7, &p3.p27],
            s.metric().gram(3),
        ));
        let (a1, _, _) = ok(project3(&s, s.phi()))?;
        defect = defect.max((&a1 - s.phi()).max_abs());
    }
    ensure!(defect <= 1e-12, "projector defect {defect:e}");

    // ġ = ½ (tr h) g − 2h against central differences of g(ψ + tσ).
    let state = ok(CoclosedState::from_phi(scaled_frame_phi(&random_frame(
        &mut rng, 0.8, 1.3,
    ))))?;
    let sigma = Form::from_coeffs(4, (0..35).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let parts = ok(decompose_variation(&state, &sigma))?;
    let predicted = metric_variation(state.metric(), &parts.h);
    let err = |t: f64| -> Result<f64, String> {
        let plus = ok(phi_of_psi(&state.psi.axpy(t, &sigma), state.phi()))?;
        let minus = ok(phi_of_psi(&state.psi.axpy(-t, &sigma), state.phi()))?;
        let fd = (plus.metric().matrix() - minus.metric().matrix()) / (2.0 * t);
        Ok((fd - predicted).abs().max())
    };
    let errs = [err(4e-3)?, err(2e-3)?, err(1e-3)?];
    let ratios = [errs[0] / errs[1], errs[1] / errs[2]];
    ensure!(
        ratios.iter().all(|r| (3.5..4.5).contains(r)),
        "step halving ratios {ratios:?} (errors {errs:?})"
    );
    Ok(format!(
        "ranks (7,14) and (1,7,27), projector defect {defect:.1e}; metric variation FD errors {:.1e} → {:.1e} → {:.1e} (ratios {:.2}, {:.2})",
        errs[0], errs[1], errs[2], ratios[0], ratios[1]
    ))
}

fn criterion_11() -> Check {
    let cfg = FlowConfig::default();
    let alg = ee1();
    let closed = alg.closed_forms(4);
    let mut sys = ok(FlowSystem::new(&alg, cfg, &phi_bar()))?;
    let mut mats = Vec::new();
    for eps in [1e-3, 5e-4] {
        let r = ok(linearize(&mut sys, &psi_bar(), &closed, eps, 1e-10))?;
        ensure!(
            r.max_entry() <= 1e-6,
            "EE1 entry {:e} at ε = {eps}",
            r.max_entry()
        );
        ensure!(
            r.asymmetry_norm <= 1e-6,
            "EE1 asymmetry {:e}",
            r.asymmetry_norm
        );
        mats.push(r);
    }
    let ee1_change = (mats[0].matrix() - mats[1].matrix()).amax();
    ensure!(ee1_change <= 1e-6, "EE1 ε-change {ee1_change:e}");

    // ε-refinement where the linearisation is not trivial: a static EE2 point.
    let alg = ee2();
    let phi0 = scaled_frame_phi(&[1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
    let s0 = ok(G2Structure::from_phi(phi0.clone()))?;
    let mut sys = ok(FlowSystem::new(&alg, cfg, &phi0))?;
    let dirs = alg.exact_forms(4);
    let reports: Vec<_> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|eps| linearize(&mut sys, s0.psi(), &dirs, *eps, 1e-10))
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{e:?}"))?;
    let d1 = (reports[0].matrix() - reports[1].matrix()).amax();
    let d2 = (reports[1].matrix() - reports[2].matrix()).amax();
    let ratio = d1 / d2;
    ensure!(
        (3.5..4.5).contains(&ratio),
        "ε-refinement ratio {ratio} ({d1:e}, {d2:e})"
    );
    let last = &reports[2];
    Ok(format!(
        "EE1: {} directions, max entry {:.1e}, asymmetry {:.1e}; EE2 static point: ε-halving ratio {ratio:.3}, eigenvalues [{:.4}, …, {:.4}], asymmetry {:.4}",
        closed.len(),
        mats[1].max_entry(),
        mats[1].asymmetry_norm,
        last.eigenvalues[0],
        last.eigenvalues[last.eigenvalues.len() - 1],
        last.asymmetry_norm
    ))
}

fn run_to_files(dir: &std::path::Path, tag: &str, seed: u64) -> Result<(Vec<u8>, Vec<u8>), String> {
    let alg = ee2();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_coclosed(&alg, &CoclosedState::standard(), 0.05, &mut rng);
    let cfg = FlowConfig {
        a: 0.5,
        integrator: IntegratorConfig {
            dt: 1e-3,
            t_end: 0.05,
            ..IntegratorConfig::default()
        },
        monitor_interval: 0.01,
        ..FlowConfig::default()
    };
    let traj = ok(integrate(&alg, &cfg, &s.psi, s.phi()))?;
    let jl = dir.join(format!("{tag}.jsonl"));
    let csv = dir.join(format!("{tag}.csv"));
    ok(traj.write_jsonl(ok(std::fs::File::create(&jl))?))?;
    ok(traj.write_csv(ok(std::fs::File::create(&csv))?))?;
    Ok((ok(std::fs::read(&jl))?, ok(std::fs::read(&csv))?))
}

fn criterion_12(started: Instant) -> Check {
    let ok1 = ee1().jacobi_check();
    let ok2 = ee2().jacobi_check();
    let bad = ee1_corrupted().jacobi_check();
    ensure!(ok1.holds && ok2.holds, "Jacobi fails on a valid fixture");
    ensure!(!bad.holds, "corrupted fixture passes Jacobi");

    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-repro");
    ok(std::fs::create_dir_all(&dir))?;
    let a = run_to_files(&dir, "a", 12)?;
    let b = run_to_files(&dir, "b", 12)?;
    let c = run_to_files(&dir, "c", 13)?;
    ensure!(a == b, "same seed gave different files");
    ensure!(a != c, "different seeds gave identical files");
    let elapsed = started.elapsed();
    ensure!(
        elapsed < Duration::from_secs(120),
        "acceptance run took {elapsed:?}"
    );
    Ok(format!(
        "Jacobi residual {:.0e}/{:.0e} valid, {:.0} corrupted; seeded runs bitwise identical ({} + {} bytes); suite so far {elapsed:.2?}",
        ok1.max_residual,
        ok2.max_residual,
        bad.max_residual,
        a.0.len(),
        a.1.len()
    ))
}

/// Number, name, time limit, check.
type Criterion = (u32, &'static str, Option<Duration>, Box<dyn Fn() -> Check>);

fn main() {
    let started = Instant::now();
    let criteria: Vec<Criterion> = vec![
        (
            1,
            "Hodge star of the standard 3-form",
            None,
            Box::new(criterion_1),
        ),
        (2, "metric calibration", None, Box::new(criterion_2)),
        (
            3,
            "EE1 static suite",
            Some(Duration::from_secs(10)),
            Box::new(criterion_3),
        ),
        (
            4,
            "EE2 coflow formula",
            Some(Duration::from_secs(5)),
            Box::new(criterion_4),
        ),
        (
            5,
            "nearly parallel exact solution",
            Some(Duration::from_secs(1)),
            Box::new(criterion_5),
        ),
        (
            6,
            "nearly parallel instability",
            Some(Duration::from_secs(1)),
            Box::new(criterion_6),
        ),
        (7, "torsion scaling law", None, Box::new(criterion_7)),
        (
            8,
            "exactness of the coflow right-hand side",
            None,
            Box::new(criterion_8),
        ),
        (9, "Green identity", None, Box::new(criterion_9)),
        (
            10,
            "decomposition ranks and projectors",
            None,
            Box::new(criterion_10),
        ),
        (11, "linearisation sanity", None, Box::new(criterion_11)),
        (
            12,
            "infrastructure",
            None,
            Box::new(move || criterion_12(started)),
        ),
    ];
    let mut failed = 0;
    for (id, name, limit, f) in &criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let elapsed = t.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > *l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(msg) => println!("PASS [{id:>2}] {name} ({elapsed:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name} ({elapsed:.2?}): {msg}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.2?}",
        criteria.len() - failed,
        started.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
