//! Left-invariant Cartan calculus on a 7-dimensional Lie algebra.
//!
//! Conventions: `dα(X, Y) = −α([X, Y])` for invariant 1-forms, so a structure
//! equation `de^k = Σ_{i<j} a^k_{ij} e^{ij}` corresponds to brackets
//! `[e_i, e_j] = −a^k_{ij} e_k`. For example `de^6 = e^{17}` means
//! `[e_1, e_7] = −e_6`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::{
    apply_derivation, basis_len, basis_masks, position, star, wedge_sign, Form, Matrix7, Metric,
    DIM,
};

const SPAN_TOL: f64 = 1e-10;

fn eigen_basis(m: &DMatrix<f64>, k: usize, keep: impl Fn(f64) -> bool) -> Vec<Form> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut out = Vec::new();
    for (i, ev) in eig.eigenvalues.iter().enumerate() {
        if keep(*ev) {
            let col: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            out.push(Form::from_coeffs(k, col).expect("length matches degree"));
        }
    }
    out
}

/// Structure constants `c[i][j][k]`: coefficient of `e_k` in `[e_i, e_j]`.
pub type StructureConstants = [[[f64; DIM]; DIM]; DIM];

/// Tolerance for `d² = 0` and unimodularity checks.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LieAlgebra {
    name: String,
    d1: Vec<Form>,
    /// `d_mats[k]` maps degree-`k` coefficients to degree-`k+1` coefficients.
    d_mats: Vec<DMatrix<f64>>,
}

impl LieAlgebra {
    /// Builds the algebra from `d e^i` for `i = 1..7` (seven 2-forms). Jacobi
    /// is not enforced here; use [`LieAlgebra::jacobi_check`].
    pub fn new(name: impl Into<String>, d1: Vec<Form>) -> Result<Self> {
        if d1.len() != DIM {
            return Err(Error::InvalidAlgebra(format!(
                "expected 7 differentials, got {}",
                d1.len()
            )));
        }
        if let Some(f) = d1.iter().find(|f| f.degree() != 2) {
            return Err(Error::InvalidAlgebra(format!(
                "differential of a 1-form must be a 2-form, got degree {}",
                f.degree()
            )));
        }
        let d_mats = (0..DIM).map(|k| assemble_d(&d1, k)).collect();
        Ok(Self {
            name: name.into(),
            d1,
            d_mats,
        })
    }

    pub fn abelian() -> Self {
        Self::new("abelian", vec![Form::zero(2); DIM]).expect("valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `d e^i` for a 0-based index.
    pub fn d_of_basis(&self, i: usize) -> &Form {
        &self.d1[i]
    }

    pub fn structure_constants(&self) -> StructureConstants {
        let mut c = [[[0.0; DIM]; DIM]; DIM];
        for (k, dk) in self.d1.iter().enumerate() {
            for (&m, &a) in basis_masks(2).iter().zip(dk.coeffs()) {
                let i = m.trailing_zeros() as usize;
                let j = (m & !(1 << i)).trailing_zeros() as usize;
                c[i][j][k] = -a;
                c[j][i][k] = a;
            }
        }
        c
    }

    /// Matrix of `d` from degree `k` to degree `k + 1` (`k ≤ 6`).
    pub fn d_matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.d_mats[k]
    }

    /// Exterior derivative of an invariant form (degree ≤ 6).
    pub fn differential(&self, a: &Form) -> Result<Form> {
        let k = a.degree();
        if k >= DIM {
            return Err(Error::DegreeOverflow(k, 1));
        }
        let out = &self.d_mats[k] * a.to_dvector();
        Form::from_coeffs(k + 1, out.as_slice().to_vec())
    }

    pub fn jacobi_check(&self) -> JacobiReport {
        let residuals: Vec<f64> = self
            .d1
            .iter()
            .map(|f| self.differential(f).expect("degree 2").max_abs())
            .collect();
        let max_residual = residuals.iter().copied().fold(0.0, f64::max);
        JacobiReport {
            holds: max_residual <= ALGEBRA_TOL,
            max_residual,
            residuals,
        }
    }

    /// `tr ad_{e_i}` for each basis vector.
    pub fn adjoint_traces(&self) -> [f64; DIM] {
        let c = self.structure_constants();
        let mut out = [0.0; DIM];
        for (i, t) in out.iter_mut().enumerate() {
            *t = (0..DIM).map(|k| c[i][k][k]).sum();
        }
        out
    }

    pub fn is_unimodular(&self) -> bool {
        self.adjoint_traces().iter().all(|t| t.abs() <= ALGEBRA_TOL)
    }

    pub fn require_unimodular(&self) -> Result<()> {
        if self.is_unimodular() {
            Ok(())
        } else {
            Err(Error::NonUnimodular(self.name.clone()))
        }
    }

    /// Codifferential `d* = (−1)^k * d *` on invariant `k`-forms; the sign
    /// table is checked against `L²`-adjointness in the tests.
    pub fn codifferential(&self, g: &Metric, a: &Form) -> Result<Form> {
        let k = a.degree();
        if k == 0 {
            return Err(Error::InvalidDegree(0));
        }
        self.require_unimodular()?;
        let inner = self.differential(&star(g, a))?;
        Ok(star(g, &inner).scaled(codifferential_sign(k)))
    }

    /// Levi-Civita connection of a constant metric on invariant vector fields
    /// (Koszul formula).
    pub fn levi_civita(&self, g: &Metric) -> Connection {
        let c = self.structure_constants();
        let gm = g.matrix();
        // bracket_g[i][j][l] = g([e_i, e_j], e_l)
        let mut bracket_g = [[[0.0; DIM]; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                for l in 0..DIM {
                    bracket_g[i][j][l] = (0..DIM).map(|k| c[i][j][k] * gm[(k, l)]).sum();
                }
            }
        }
        let inv = g.inverse();
        let mut gamma = [[[0.0; DIM]; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                // g(∇_i e_j, e_l)
                let mut low = [0.0; DIM];
                for (l, v) in low.iter_mut().enumerate() {
                    *v = 0.5 * (bracket_g[i][j][l] - bracket_g[j][l][i] + bracket_g[l][i][j]);
                }
                for k in 0..DIM {
                    gamma[i][j][k] = (0..DIM).map(|l| low[l] * inv[(l, k)]).sum();
                }
            }
        }
        Connection { gamma }
    }

    /// Checks `ψ = d G d* ψ` on `Im d ⊂ Λ^k`, with `G` the pseudo-inverse of
    /// the Hodge Laplacian on invariant `(k−1)`-forms.
    pub fn green_identity_check(&self, g: &Metric, k: usize) -> Result<GreenReport> {
        self.require_unimodular()?;
        if k == 0 || k > DIM {
            return Err(Error::InvalidDegree(k));
        }
        let green = self.green_matrix(g, k - 1)?;
        let svd = self.d_matrix(k - 1).clone().svd(true, false);
        let smax = svd.singular_values.max();
        let u = svd.u.expect("requested");
        let mut image_dim = 0;
        let mut max_residual: f64 = 0.0;
        for (col, s) in svd.singular_values.iter().enumerate() {
            if smax == 0.0 || *s <= GREEN_RCOND * smax {
                continue;
            }
            image_dim += 1;
            let psi = Form::from_coeffs(k, u.column(col).iter().copied().collect())?;
            let dstar = self.codifferential(g, &psi)?;
            let g_dstar = &green * dstar.to_dvector();
            let g_dstar = Form::from_coeffs(k - 1, g_dstar.as_slice().to_vec())?;
            let back = self.differential(&g_dstar)?;
            max_residual = max_residual.max((&psi - &back).max_abs());
        }
        Ok(GreenReport {
            degree: k,
            image_dim,
            max_residual,
            holds: max_residual <= 1e-10,
        })
    }

    /// Orthonormal (coefficient-wise) basis of the closed invariant `k`-forms.
    pub fn closed_forms(&self, k: usize) -> Vec<Form> {
        if k >= DIM {
            return vec![Form::top(1.0)];
        }
        let d = self.d_matrix(k);
        eigen_basis(&(d.transpose() * d), k, |ev| ev <= SPAN_TOL)
    }

    /// Orthonormal (coefficient-wise) basis of `d(Λ^{k−1})`.
    pub fn exact_forms(&self, k: usize) -> Vec<Form> {
        if k == 0 {
            return Vec::new();
        }
        let d = self.d_matrix(k - 1);
        eigen_basis(&(d * d.transpose()), k, |ev| ev > SPAN_TOL)
    }

    /// Green operator on invariant `k`-forms: the pseudo-inverse of `Δ`,
    /// taken in a Gram-orthonormal frame so that `ker Δ ⟂ Im Δ`.
    pub fn green_matrix(&self, g: &Metric, k: usize) -> Result<DMatrix<f64>> {
        let lap = self.laplacian_matrix(g, k)?;
        // Gram = Rᵀ R; in coordinates x̃ = R x the Laplacian is symmetric.
        let r = g
            .gram(k)
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("Gram matrix".into()))?
            .l()
            .transpose();
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Gram factor".into()))?;
        let sym = &r * &lap * &r_inv;
        let sym = (&sym + sym.transpose()) * 0.5;
        Ok(&r_inv * pseudo_inverse(&sym, GREEN_RCOND) * &r)
    }

    /// Matrix of `Δ = dd* + d*d` on invariant `k`-forms, built column by column
    /// from the operators.
    pub fn laplacian_matrix(&self, g: &Metric, k: usize) -> Result<DMatrix<f64>> {
        let n = basis_len(k);
        let mut out = DMatrix::zeros(n, n);
        for col in 0..n {
            let mut e = Form::zero(k);
            e.coeffs_mut()[col] = 1.0;
            let v = hodge_laplacian(self, g, &e)?;
            out.set_column(col, &v.to_dvector());
        }
        Ok(out)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let def: AlgebraFile = serde_json::from_str(s)?;
        def.into_algebra()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn to_file_format(&self) -> AlgebraFile {
        let d = self
            .d1
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_zero(0.0))
            .map(|(i, f)| OneFormDifferential {
                one_form: i + 1,
                terms: f
                    .terms()
                    .map(|(m, c)| Term {
                        idx: m.labels(),
                        coef: c,
                    })
                    .collect(),
            })
            .collect();
        AlgebraFile {
            dim: DIM,
            name: Some(self.name.clone()),
            d,
        }
    }
}

/// Singular values below this fraction of the largest count as kernel.
pub const GREEN_RCOND: f64 = 1e-10;

/// Sign in `d* = ± * d *` on degree-`k` forms in dimension 7.
pub fn codifferential_sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `Δ a = d d* a + d* d a`. Degree 0 and 7 drop the undefined half.
pub fn hodge_laplacian(alg: &LieAlgebra, g: &Metric, a: &Form) -> Result<Form> {
    alg.require_unimodular()?;
    let k = a.degree();
    let mut out = Form::zero(k);
    if k > 0 {
        out += &alg.differential(&alg.codifferential(g, a)?)?;
    }
    if k < DIM {
        out += &alg.codifferential(g, &alg.differential(a)?)?;
    }
    Ok(out)
}

fn pseudo_inverse(m: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let smax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        if smax == 0.0 || lam.abs() <= rcond * smax {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        out += (v * v.transpose()) / *lam;
    }
    out
}

fn assemble_d(d1: &[Form], k: usize) -> DMatrix<f64> {
    let rows = basis_len(k + 1);
    let cols = basis_len(k);
    let mut out = DMatrix::zeros(rows, cols);
    for (col, &mask) in basis_masks(k).iter().enumerate() {
        // d(e^{i1…ik}) = Σ_p (−1)^p e^{i1} ∧ … ∧ de^{ip} ∧ … ∧ e^{ik}
        let mut rest = mask;
        let mut p = 0;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let sign_p = if p % 2 == 0 { 1.0 } else { -1.0 };
            let left = mask & ((1u8 << i) - 1);
            let right = mask & !((1u8 << (i + 1)) - 1);
            for (&m2, &c) in basis_masks(2).iter().zip(d1[i].coeffs()) {
                if c == 0.0 || m2 & (left | right) != 0 {
                    continue;
                }
                let s = wedge_sign(left, m2) * wedge_sign(left | m2, right);
                out[(position(left | m2 | right), col)] += sign_p * s * c;
            }
            p += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobiReport {
    pub holds: bool,
    pub max_residual: f64,
    /// `max |d(d e^i)|` for each generator.
    pub residuals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenReport {
    pub degree: usize,
    pub image_dim: usize,
    pub max_residual: f64,
    pub holds: bool,
}

/// Affine connection on invariant vector fields: `gamma[i][j][k]` is the
/// coefficient of `e_k` in `∇_{e_i} e_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Connection {
    pub gamma: [[[f64; DIM]; DIM]; DIM],
}

impl Connection {
    /// The connection with vanishing coefficients in the invariant frame.
    pub fn flat() -> Self {
        Self {
            gamma: [[[0.0; DIM]; DIM]; DIM],
        }
    }

    /// `∇_{e_i}` acting on invariant forms.
    pub fn covariant_derivative(&self, i: usize, a: &Form) -> Form {
        // ∇_i e^k = −Σ_j Γ^k_{ij} e^j
        let m = Matrix7::from_fn(|k, j| -self.gamma[i][j][k]);
        apply_derivation(&m, a)
    }

    /// `max |Γ^k_{ij} − Γ^k_{ji} − c^k_{ij}|`.
    pub fn torsion_defect(&self, c: &StructureConstants) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    let t = self.gamma[i][j][k] - self.gamma[j][i][k] - c[i][j][k];
                    worst = worst.max(t.abs());
                }
            }
        }
        worst
    }

    /// `max |g(∇_i e_j, e_l) + g(e_j, ∇_i e_l)|` for a constant metric.
    pub fn metric_defect(&self, g: &Metric) -> f64 {
        let gm = g.matrix();
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                for l in 0..DIM {
                    let a: f64 = (0..DIM).map(|k| self.gamma[i][j][k] * gm[(k, l)]).sum();
                    let b: f64 = (0..DIM).map(|k| self.gamma[i][l][k] * gm[(j, k)]).sum();
                    worst = worst.max((a + b).abs());
                }
            }
        }
        worst
    }

    /// Difference tensor `(self − other)^k_{ij}`.
    pub fn difference(&self, other: &Connection) -> [[[f64; DIM]; DIM]; DIM] {
        let mut out = [[[0.0; DIM]; DIM]; DIM];
        for i in 0..DIM {
            for j in 0..DIM {
                for k in 0..DIM {
                    out[i][j][k] = self.gamma[i][j][k] - other.gamma[i][j][k];
                }
            }
        }
        out
    }
}

/// On-disk Lie algebra definition:
/// `{"dim":7, "name":"…", "d":[{"one_form":6,"terms":[{"idx":[1,7],"coef":1.0}]}]}`.
/// Generators not listed are closed.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub d: Vec<OneFormDifferential>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OneFormDifferential {
    pub one_form: usize,
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub idx: Vec<usize>,
    pub coef: f64,
}

impl AlgebraFile {
    pub fn into_algebra(self) -> Result<LieAlgebra> {
        if self.dim != DIM {
            return Err(Error::InvalidAlgebra(format!(
                "dim must be 7, got {}",
                self.dim
            )));
        }
        let mut d1 = vec![Form::zero(2); DIM];
        let mut seen = [false; DIM];
        for entry in &self.d {
            if !(1..=DIM).contains(&entry.one_form) {
                return Err(Error::InvalidAlgebra(format!(
                    "one_form index {} outside 1..=7",
                    entry.one_form
                )));
            }
            if std::mem::replace(&mut seen[entry.one_form - 1], true) {
                return Err(Error::InvalidAlgebra(format!(
                    "duplicate entry for one_form {}",
                    entry.one_form
                )));
            }
            for t in &entry.terms {
                if t.idx.len() != 2 || t.idx.iter().any(|i| !(1..=DIM).contains(i)) {
                    return Err(Error::InvalidAlgebra(format!(
                        "term index {:?} must be a pair of labels in 1..=7",
                        t.idx
                    )));
                }
                d1[entry.one_form - 1] += &Form::monomial(t.coef, &t.idx);
            }
        }
        LieAlgebra::new(self.name.unwrap_or_else(|| "unnamed".into()), d1)
    }
}
