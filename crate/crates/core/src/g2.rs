//! G2-structures on the 7-dimensional space: induced metric, the `φ ↔ ψ`
//! duality, torsion and the invariant Hodge Laplacian.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::decomp::{Projectors2, Projectors3};
use crate::error::{Error, Result};
use crate::exterior::{contract_basis, inner, star, wedge, Form, Matrix7, Metric, Vector7, DIM};
use crate::liealg::LieAlgebra;

/// `B_{ij}` with `(ι_{e_i}φ) ∧ (ι_{e_j}φ) ∧ φ = B_{ij} e^{1…7}`.
pub fn b_matrix(phi: &Form) -> Result<Matrix7> {
    if phi.degree() != 3 {
        return Err(Error::DegreeMismatch {
            expected: 3,
            found: phi.degree(),
        });
    }
    let contractions: Vec<Form> = (0..DIM)
        .map(|i| contract_basis(i, phi))
        .collect::<Result<_>>()?;
    let mut b = Matrix7::zeros();
    for i in 0..DIM {
        for j in i..DIM {
            let v = wedge(&wedge(&contractions[i], &contractions[j])?, phi)?.as_scalar();
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// Metric and volume form induced by a positive 3-form.
///
/// `g = B / 6 · (det B / 6⁷)^{−1/9}`, normalised so that the standard `φ̄`
/// induces the identity and `vol = e^{1…7}`. The orientation is fixed to
/// `e^{1…7}`; a 3-form that is only positive for the opposite orientation
/// (such as `−φ̄`) is rejected.
pub fn metric_from_phi(phi: &Form) -> Result<(Metric, Form)> {
    let b = b_matrix(phi)?;
    let det = b.determinant();
    if !(det > 0.0) {
        return Err(Error::NotG2Form(format!("det B = {det:e} is not positive")));
    }
    let g = b / 6.0 * (det / 6f64.powi(7)).powf(-1.0 / 9.0);
    let metric = Metric::new(g).map_err(|e| Error::NotG2Form(e.to_string()))?;
    let vol = metric.volume_form();
    Ok((metric, vol))
}

/// A positive 3-form together with its induced metric, volume and 4-form.
#[derive(Clone, Debug)]
pub struct G2Structure {
    phi: Form,
    metric: Metric,
    vol: Form,
    psi: Form,
    projectors2: OnceLock<Projectors2>,
    projectors3: OnceLock<Projectors3>,
}

impl G2Structure {
    pub fn from_phi(phi: Form) -> Result<Self> {
        let (metric, vol) = metric_from_phi(&phi)?;
        let psi = star(&metric, &phi);
        Ok(Self {
            phi,
            metric,
            vol,
            psi,
            projectors2: OnceLock::new(),
            projectors3: OnceLock::new(),
        })
    }

    pub fn standard() -> Self {
        Self::from_phi(crate::fixtures::phi_bar()).expect("φ̄ is positive")
    }

    pub fn phi(&self) -> &Form {
        &self.phi
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn vol(&self) -> &Form {
        &self.vol
    }

    /// `ψ = *_φ φ`.
    pub fn psi(&self) -> &Form {
        &self.psi
    }

    /// Volume density `√det g`.
    pub fn volume(&self) -> f64 {
        self.metric.sqrt_det()
    }

    pub fn star(&self, a: &Form) -> Form {
        star(&self.metric, a)
    }

    pub fn inner(&self, a: &Form, b: &Form) -> Result<f64> {
        inner(&self.metric, a, b)
    }

    pub fn projectors2(&self) -> &Projectors2 {
        self.projectors2.get_or_init(|| Projectors2::assemble(self))
    }

    pub fn projectors3(&self) -> &Projectors3 {
        self.projectors3.get_or_init(|| Projectors3::assemble(self))
    }
}

pub fn psi_of_phi(s: &G2Structure) -> Form {
    s.psi().clone()
}

/// Settings for recovering `φ` from `ψ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Absolute tolerance on `max |*_φ φ − ψ|`, scaled by `max(1, max |ψ|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// Solves `*_{g(φ)} φ = ψ` by Newton's method from `seed`.
///
/// The derivative of `φ ↦ *_φ φ` is `* ∘ (4/3 π₁ + π₇ − π₂₇)`, so each step
/// applies the exact inverse `(3/4 π₁ + π₇ − π₂₇) ∘ *` with projections taken
/// at the current iterate.
pub fn phi_of_psi(psi: &Form, seed: &Form) -> Result<G2Structure> {
    phi_of_psi_with(psi, seed, NewtonOptions::default()).map(|(s, _)| s)
}

/// As [`phi_of_psi`], also returning `(iterations, final residual)`.
pub fn phi_of_psi_with(
    psi: &Form,
    seed: &Form,
    opts: NewtonOptions,
) -> Result<(G2Structure, (usize, f64))> {
    if psi.degree() != 4 || seed.degree() != 3 {
        return Err(Error::InvalidArgument(
            "phi_of_psi needs a 4-form and a 3-form seed".into(),
        ));
    }
    let tol = opts.tol * psi.max_abs().max(1.0);
    let mut current =
        G2Structure::from_phi(seed.clone()).map_err(|e| Error::NotG2Form(format!("seed: {e}")))?;
    let mut residual_form = current.psi() - psi;
    let mut residual = residual_form.max_abs();
    for iter in 0..=opts.max_iter {
        if residual <= tol {
            return Ok((current, (iter, residual)));
        }
        if iter == opts.max_iter {
            break;
        }
        let step = newton_step(&current, &residual_form);
        // Halve the step while it leaves the positive cone or increases the
        // residual; a full step is accepted whenever it helps.
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial_phi = current.phi().axpy(-scale, &step);
            if let Ok(trial) = G2Structure::from_phi(trial_phi) {
                let r = trial.psi() - psi;
                let rn = r.max_abs();
                if rn < residual || rn <= tol {
                    accepted = Some((trial, r, rn));
                    break;
                }
            }
            scale *= 0.5;
        }
        match accepted {
            Some((s, r, rn)) => {
                current = s;
                residual_form = r;
                residual = rn;
            }
            None => {
                return Err(Error::RecoveryFailed {
                    iterations: iter,
                    residual,
                })
            }
        }
    }
    Err(Error::RecoveryFailed {
        iterations: opts.max_iter,
        residual,
    })
}

fn newton_step(s: &G2Structure, residual: &Form) -> Form {
    let dual = s.star(residual);
    let (a1, a7, a27) = crate::decomp::split3(s, &dual);
    let mut step = a1.scaled(0.75);
    step += &a7;
    step -= &a27;
    step
}

/// A closed-or-not 4-form `ψ` with its recovered G2-structure.
#[derive(Clone, Debug)]
pub struct CoclosedState {
    pub psi: Form,
    pub structure: G2Structure,
    /// `max |*_φ φ − ψ|` after recovery.
    pub residual: f64,
    pub iterations: usize,
}

impl CoclosedState {
    pub fn new(psi: Form, seed: &Form) -> Result<Self> {
        let (structure, (iterations, residual)) =
            phi_of_psi_with(&psi, seed, NewtonOptions::default())?;
        Ok(Self {
            psi,
            structure,
            residual,
            iterations,
        })
    }

    /// State built directly from a positive 3-form, `ψ = *φ`.
    pub fn from_phi(phi: Form) -> Result<Self> {
        let structure = G2Structure::from_phi(phi)?;
        Ok(Self {
            psi: structure.psi().clone(),
            structure,
            residual: 0.0,
            iterations: 0,
        })
    }

    pub fn standard() -> Self {
        Self::from_phi(crate::fixtures::phi_bar()).expect("φ̄ is positive")
    }

    pub fn phi(&self) -> &Form {
        self.structure.phi()
    }

    pub fn metric(&self) -> &Metric {
        self.structure.metric()
    }

    /// `max |dψ|`.
    pub fn closedness(&self, alg: &LieAlgebra) -> Result<f64> {
        Ok(alg.differential(&self.psi)?.max_abs())
    }
}

/// `tr T = ¼ *(dφ ∧ φ)` with `φ = *_ψ ψ`.
pub fn torsion_trace(alg: &LieAlgebra, state: &CoclosedState) -> Result<f64> {
    torsion_trace_of(alg, &state.structure)
}

pub fn torsion_trace_of(alg: &LieAlgebra, s: &G2Structure) -> Result<f64> {
    let dphi = alg.differential(s.phi())?;
    let top = wedge(&dphi, s.phi())?;
    Ok(0.25 * s.star(&top).as_scalar())
}

/// Full torsion `T(X, Y) = 1/24 g(∇_X φ, ι_Y ψ)`, with `g(·,·)` the full
/// tensor contraction. In terms of the form inner product this is
/// `¼ ⟨∇_X φ, ι_Y ψ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsionTensor {
    pub t: Matrix7,
}

/// Ratio between the full tensor contraction of two 3-forms and their form
/// inner product (`3!`).
pub const THREE_FORM_CONTRACTION: f64 = 6.0;

impl TorsionTensor {
    /// `g^{ij} T_{ij}`.
    pub fn trace(&self, g: &Metric) -> f64 {
        (g.inverse().component_mul(&self.t.transpose())).sum()
    }

    /// `|T|² = g^{ik} g^{jl} T_{ij} T_{kl}`.
    pub fn norm_squared(&self, g: &Metric) -> f64 {
        let inv = g.inverse();
        let raised = inv * self.t * inv;
        raised.component_mul(&self.t).sum()
    }
}

pub fn full_torsion(alg: &LieAlgebra, state: &CoclosedState) -> Result<TorsionTensor> {
    full_torsion_of(alg, &state.structure)
}

pub fn full_torsion_of(alg: &LieAlgebra, s: &G2Structure) -> Result<TorsionTensor> {
    let conn = alg.levi_civita(s.metric());
    let contracted_psi: Vec<Form> = (0..DIM)
        .map(|j| contract_basis(j, s.psi()))
        .collect::<Result<_>>()?;
    let mut t = Matrix7::zeros();
    for i in 0..DIM {
        let nabla_phi = conn.covariant_derivative(i, s.phi());
        for j in 0..DIM {
            t[(i, j)] = THREE_FORM_CONTRACTION / 24.0 * s.inner(&nabla_phi, &contracted_psi[j])?;
        }
    }
    Ok(TorsionTensor { t })
}

pub use crate::liealg::hodge_laplacian;

/// `v ↦ *(v♭ ∧ φ)` evaluated on the basis; columns span `Λ³₇`.
pub(crate) fn lambda37_basis(s: &G2Structure) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(35, DIM);
    for i in 0..DIM {
        let e = Form::basis_one_form(i);
        let col = s.star(&wedge(&e, s.phi()).expect("degree 4"));
        v.set_column(i, &col.to_dvector());
    }
    v
}

/// Vector dual to a 1-form under the structure's metric.
pub fn sharp(s: &G2Structure, a: &Form) -> Vector7 {
    s.metric().sharp(a)
}
