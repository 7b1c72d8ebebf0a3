//! Type decomposition of 2-, 3- and 4-forms under a G2-structure, the map
//! `i_φ` from symmetric 2-tensors to 3-forms, and the splitting of a
//! 4-form variation into `(α, h)`.
//!
//! `i_φ` uses the weighted component convention
//! `i_φ(h) = 1/6 Σ_{r,s,k} h_r^l φ_{lsk} e^r ∧ e^s ∧ e^k`, i.e. its components
//! are the antisymmetrisation of `h_r^l φ_{lsk}`. With this weight
//! `i_φ(g) = φ` and a variation `ψ̇ = α ∧ φ + 3 *i_φ(h)` moves the metric by
//! `ġ = ½ (tr_g h) g − 2h`.

use nalgebra::{DMatrix, DVector, SMatrix};

use crate::error::{Error, Result};
use crate::exterior::{basis_masks, wedge, Form, Matrix7, Metric, DIM};
use crate::g2::{lambda37_basis, CoclosedState, G2Structure};

/// Symmetric 2-tensor with lower indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor(Matrix7);

impl SymTensor {
    pub fn new(h: Matrix7) -> Result<Self> {
        let asym = (h - h.transpose()).abs().max();
        if asym > 1e-12 * h.abs().max().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self((h + h.transpose()) * 0.5))
    }

    pub fn zero() -> Self {
        Self(Matrix7::zeros())
    }

    pub fn matrix(&self) -> &Matrix7 {
        &self.0
    }

    /// `tr_g h = g^{ij} h_{ij}`.
    pub fn trace(&self, g: &Metric) -> f64 {
        g.inverse().component_mul(&self.0).sum()
    }

    /// Coordinates in the basis `E_{ij} = e_i e_j + e_j e_i` (`i < j`) and
    /// `E_{ii} = e_i e_i`, ordered row by row over the upper triangle.
    pub fn to_coords(&self) -> [f64; 28] {
        let mut out = [0.0; 28];
        let mut p = 0;
        for i in 0..DIM {
            for j in i..DIM {
                out[p] = self.0[(i, j)];
                p += 1;
            }
        }
        out
    }

    pub fn from_coords(c: &[f64]) -> Self {
        assert_eq!(c.len(), 28);
        let mut m = Matrix7::zeros();
        let mut p = 0;
        for i in 0..DIM {
            for j in i..DIM {
                m[(i, j)] = c[p];
                m[(j, i)] = c[p];
                p += 1;
            }
        }
        Self(m)
    }
}

/// Metric variation produced by `h`: `½ (tr_g h) g − 2h`.
pub fn metric_variation(g: &Metric, h: &SymTensor) -> Matrix7 {
    g.matrix() * (0.5 * h.trace(g)) - h.matrix() * 2.0
}

/// `P = V (Vᵀ G V)^{-1} Vᵀ G`: the `G`-orthogonal projector onto span `V`.
fn projector(v: &DMatrix<f64>, gram: &DMatrix<f64>) -> DMatrix<f64> {
    let gv = gram * v;
    let normal = v.transpose() * &gv;
    let inv = normal
        .try_inverse()
        .expect("type-decomposition spanning set is linearly independent");
    v * inv * gv.transpose()
}

/// Projectors on 2-forms: `Λ²₇ = {*(β ∧ ψ)}` and `Λ²₁₄ = {a : a ∧ φ = −*a}`.
#[derive(Clone, Debug)]
pub struct Projectors2 {
    pub p7: DMatrix<f64>,
    pub p14: DMatrix<f64>,
}

impl Projectors2 {
    pub(crate) fn assemble(s: &G2Structure) -> Self {
        let mut v = DMatrix::zeros(21, DIM);
        for i in 0..DIM {
            let beta = Form::basis_one_form(i);
            let col = s.star(&wedge(&beta, s.psi()).expect("degree 5"));
            v.set_column(i, &col.to_dvector());
        }
        let p7 = projector(&v, s.metric().gram(2));
        let p14 = DMatrix::identity(21, 21) - &p7;
        Self { p7, p14 }
    }
}

/// Projectors on 3-forms onto `Λ³₁ = ⟨φ⟩`, `Λ³₇ = {*(β ∧ φ)}` and
/// `Λ³₂₇ = {a : a ∧ φ = a ∧ ψ = 0}`.
#[derive(Clone, Debug)]
pub struct Projectors3 {
    pub p1: DMatrix<f64>,
    pub p7: DMatrix<f64>,
    pub p27: DMatrix<f64>,
}

impl Projectors3 {
    pub(crate) fn assemble(s: &G2Structure) -> Self {
        let gram = s.metric().gram(3);
        let phi = DMatrix::from_column_slice(35, 1, s.phi().coeffs());
        let p1 = projector(&phi, gram);
        let p7 = projector(&lambda37_basis(s), gram);
        let p27 = DMatrix::identity(35, 35) - &p1 - &p7;
        Self { p1, p7, p27 }
    }
}

fn apply(p: &DMatrix<f64>, a: &Form) -> Form {
    let v = p * a.to_dvector();
    Form::from_coeffs(a.degree(), v.as_slice().to_vec()).expect("square projector")
}

fn require_degree(a: &Form, k: usize) -> Result<()> {
    if a.degree() == k {
        Ok(())
    } else {
        Err(Error::DegreeMismatch {
            expected: k,
            found: a.degree(),
        })
    }
}

/// `a = a7 + a14`.
pub fn project2(s: &G2Structure, a: &Form) -> Result<(Form, Form)> {
    require_degree(a, 2)?;
    let p = s.projectors2();
    Ok((apply(&p.p7, a), apply(&p.p14, a)))
}

/// `a = a1 + a7 + a27`.
pub fn project3(s: &G2Structure, a: &Form) -> Result<(Form, Form, Form)> {
    require_degree(a, 3)?;
    let p = s.projectors3();
    Ok((apply(&p.p1, a), apply(&p.p7, a), apply(&p.p27, a)))
}

/// 4-form types by Hodge duality: `a = *b1 + *b7 + *b27` with `b = *a`.
pub fn project4(s: &G2Structure, a: &Form) -> Result<(Form, Form, Form)> {
    require_degree(a, 4)?;
    let (b1, b7, b27) = project3(s, &s.star(a))?;
    Ok((s.star(&b1), s.star(&b7), s.star(&b27)))
}

/// Projection of a single 3-form without assembling the full projectors.
pub(crate) fn split3(s: &G2Structure, a: &Form) -> (Form, Form, Form) {
    let gram = s.metric().gram(3);
    let av = a.to_dvector();
    let phi = s.phi().to_dvector();
    let g_phi = gram * &phi;
    let a1 = &phi * (g_phi.dot(&av) / g_phi.dot(&phi));
    let v = lambda37_basis(s);
    let gv = gram * &v;
    let coeffs = (v.transpose() * &gv)
        .lu()
        .solve(&(gv.transpose() * &av))
        .expect("Λ³₇ basis is independent");
    let a7 = &v * coeffs;
    let a27 = &av - &a1 - &a7;
    let to_form = |x: DVector<f64>| Form::from_coeffs(3, x.as_slice().to_vec()).expect("35");
    (to_form(a1), to_form(a7), to_form(a27))
}

/// Fully antisymmetric components `φ_{abc}` of a 3-form.
fn antisymmetric_components(phi: &Form) -> [[[f64; DIM]; DIM]; DIM] {
    let mut t = [[[0.0; DIM]; DIM]; DIM];
    for (&m, &c) in basis_masks(3).iter().zip(phi.coeffs()) {
        if c == 0.0 {
            continue;
        }
        let idx: Vec<usize> = (0..DIM).filter(|i| m & (1 << i) != 0).collect();
        let (a, b, d) = (idx[0], idx[1], idx[2]);
        for (p, q, r, sign) in [
            (a, b, d, 1.0),
            (b, d, a, 1.0),
            (d, a, b, 1.0),
            (b, a, d, -1.0),
            (a, d, b, -1.0),
            (d, b, a, -1.0),
        ] {
            t[p][q][r] = sign * c;
        }
    }
    t
}

/// `i_φ(h)`, see the module documentation for the weight convention.
pub fn i_phi(s: &G2Structure, h: &SymTensor) -> Form {
    let phi = antisymmetric_components(s.phi());
    // h_r^l = h_{rm} g^{ml}
    let mixed = h.matrix() * s.metric().inverse();
    let contracted = |r: usize, a: usize, b: usize| -> f64 {
        (0..DIM).map(|l| mixed[(r, l)] * phi[l][a][b]).sum()
    };
    let mut out = Form::zero(3);
    for (slot, &m) in out.coeffs_mut().iter_mut().zip(basis_masks(3)) {
        let idx: Vec<usize> = (0..DIM).filter(|i| m & (1 << i) != 0).collect();
        let (r, s_, k) = (idx[0], idx[1], idx[2]);
        *slot = (contracted(r, s_, k) + contracted(s_, k, r) + contracted(k, r, s_)) / 3.0;
    }
    out
}

/// `i_φ(g) = κ₁ φ` for this convention.
pub const I_PHI_TRACE_CONSTANT: f64 = 1.0;

/// Coefficient of `*i_φ(h)` in the variation `ψ̇ = α ∧ φ + 3 *i_φ(h)`.
pub const VARIATION_FACTOR: f64 = 3.0;

/// `α ∧ φ + 3 *i_φ(h)`.
pub fn compose_variation(s: &G2Structure, alpha: &Form, h: &SymTensor) -> Result<Form> {
    require_degree(alpha, 1)?;
    let mut out = wedge(alpha, s.phi())?;
    out += &s.star(&i_phi(s, h)).scaled(VARIATION_FACTOR);
    Ok(out)
}

/// Matrix of `(α, h) ↦ α ∧ φ + 3 *i_φ(h)` in the coordinates
/// `(α_1..α_7, h coords)`.
fn variation_matrix(s: &G2Structure) -> SMatrix<f64, 35, 35> {
    let mut m = SMatrix::<f64, 35, 35>::zeros();
    for i in 0..DIM {
        let col =
            compose_variation(s, &Form::basis_one_form(i), &SymTensor::zero()).expect("degree 1");
        m.set_column(i, &SMatrix::<f64, 35, 1>::from_column_slice(col.coeffs()));
    }
    for p in 0..28 {
        let mut c = [0.0; 28];
        c[p] = 1.0;
        let col =
            compose_variation(s, &Form::zero(1), &SymTensor::from_coords(&c)).expect("degree 1");
        m.set_column(
            DIM + p,
            &SMatrix::<f64, 35, 1>::from_column_slice(col.coeffs()),
        );
    }
    m
}

#[derive(Clone, Debug)]
pub struct VariationParts {
    pub alpha: Form,
    pub h: SymTensor,
    pub reconstruction_residual: f64,
}

/// Solves `σ = α ∧ φ + 3 *i_φ(h)` for `(α, h)`.
pub fn decompose_variation(state: &CoclosedState, sigma: &Form) -> Result<VariationParts> {
    decompose_variation_at(&state.structure, sigma)
}

pub fn decompose_variation_at(s: &G2Structure, sigma: &Form) -> Result<VariationParts> {
    require_degree(sigma, 4)?;
    let m = variation_matrix(s);
    let rhs = SMatrix::<f64, 35, 1>::from_column_slice(sigma.coeffs());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("variation parametrisation (corrupted G2 state?)".into()))?;
    let alpha = Form::from_coeffs(1, x.as_slice()[..DIM].to_vec())?;
    let h = SymTensor::from_coords(&x.as_slice()[DIM..]);
    let back = compose_variation(s, &alpha, &h)?;
    Ok(VariationParts {
        reconstruction_residual: (&back - sigma).max_abs(),
        alpha,
        h,
    })
}

/// Numerical rank by singular values above `tol · σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    sv.iter().filter(|s| **s > tol * smax).count()
}
