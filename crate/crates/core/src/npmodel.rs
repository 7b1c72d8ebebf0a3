//! Scalar reduction of the coflow for nearly parallel structures.
//!
//! Starting from `ψ₀` with `dφ₀ = τ₀ ψ₀`, the ansatz `ψ_t = c_t ψ₀` reduces
//! the modified coflow to
//! `dc/dt = c^{3/4} τ₀ (2A − (5/2) c^{−1/4} τ₀)`,
//! with `Vol_t = c_t^{7/4} Vol₀`. For `A = 0` the solution is
//! `c_t = (1 − (5/4) τ₀² t)²` up to the blow-down time `4 / (5 τ₀²)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c` at or below this counts as collapsed.
pub const BLOW_DOWN_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpParams {
    pub tau0: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub c0: f64,
}

impl NpParams {
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !self.tau0.is_finite() {
            v.push("tau0 must be finite");
        }
        if !self.a.is_finite() {
            v.push("A must be finite");
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            v.push("c0 must be > 0");
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    /// `τ₀ = 4A/5` makes `c = 1` stationary.
    pub fn stationary_tau0(a: f64) -> f64 {
        0.8 * a
    }

    /// `4 / (5 τ₀²)`; infinite for `τ₀ = 0`.
    pub fn blow_down_time(&self) -> f64 {
        4.0 / (5.0 * self.tau0 * self.tau0)
    }
}

pub fn np_rhs(c: f64, p: &NpParams) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be > 0, got {c}")));
    }
    Ok(c.powf(0.75) * p.tau0 * (2.0 * p.a - 2.5 * c.powf(-0.25) * p.tau0))
}

/// Closed form for `A = 0`: `c_t = (√c₀ − (5/4) τ₀² t)²`.
pub fn np_exact_a0(t: f64, tau0: f64, c0: f64) -> f64 {
    // √c satisfies d√c/dt = −(5/4) τ₀².
    let s = c0.sqrt() - 1.25 * tau0 * tau0 * t;
    s * s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpSample {
    pub t: f64,
    pub c: f64,
    /// `Vol_t / Vol₀ = (c_t / c₀)^{7/4}`.
    pub vol: f64,
    pub rhs: f64,
    /// Closed-form value when `A = 0`.
    pub exact: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NpTrajectory {
    pub params: NpParams,
    pub dt: f64,
    pub samples: Vec<NpSample>,
    /// Time at which `c` dropped to the blow-down threshold, if it did.
    pub blow_down: Option<f64>,
    /// Largest `|c − c_exact| / c_exact` over the run (`A = 0` only).
    pub max_rel_error: Option<f64>,
}

impl NpTrajectory {
    pub fn last(&self) -> &NpSample {
        self.samples
            .last()
            .expect("trajectory keeps the initial sample")
    }

    /// CSV with columns `t,c,vol,rhs`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,c,vol,rhs")?;
        for s in &self.samples {
            writeln!(w, "{},{},{},{}", s.t, s.c, s.vol, s.rhs)?;
        }
        Ok(())
    }
}

/// Classical rk4 with fixed step `dt` up to `t_end` (the last step is
/// shortened to land on `t_end`). Every step is sampled.
pub fn np_solve(p: &NpParams, t_end: f64, dt: f64) -> Result<NpTrajectory> {
    p.validate()?;
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(Error::InvalidArgument("dt and t_end must be > 0".into()));
    }
    let exact_for = |t: f64| (p.a == 0.0).then(|| np_exact_a0(t, p.tau0, p.c0));
    let vol = |c: f64| (c / p.c0).powf(1.75);
    let mut t = 0.0;
    let mut c = p.c0;
    let mut samples = vec![NpSample {
        t,
        c,
        vol: 1.0,
        rhs: np_rhs(c, p)?,
        exact: exact_for(0.0),
    }];
    let mut blow_down = None;
    // Tolerate rounding in t_end / dt so no sliver step is appended.
    let n = ((t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    for i in 0..n {
        let t_next = if i + 1 == n {
            t_end
        } else {
            (i + 1) as f64 * dt
        };
        let h = t_next - t;
        let step = (|| -> Result<f64> {
            let k1 = np_rhs(c, p)?;
            let k2 = np_rhs(c + 0.5 * h * k1, p)?;
            let k3 = np_rhs(c + 0.5 * h * k2, p)?;
            let k4 = np_rhs(c + h * k3, p)?;
            Ok(c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        })();
        let next = match step {
            Ok(v) if v > BLOW_DOWN_THRESHOLD => v,
            _ => {
                blow_down = Some(t + h);
                break;
            }
        };
        c = next;
        t = t_next;
        samples.push(NpSample {
            t,
            c,
            vol: vol(c),
            rhs: np_rhs(c, p)?,
            exact: exact_for(t),
        });
    }
    let max_rel_error = (p.a == 0.0).then(|| {
        samples
            .iter()
            .filter_map(|s| s.exact.map(|e| ((s.c - e) / e).abs()))
            .fold(0.0, f64::max)
    });
    Ok(NpTrajectory {
        params: *p,
        dt,
        samples,
        blow_down,
        max_rel_error,
    })
}
