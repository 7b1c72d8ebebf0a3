//! Exterior algebra over a fixed oriented 7-dimensional inner-product space.
//!
//! A basis monomial `e^{i1 i2 ... ik}` (labels `1..=7`, strictly increasing) is
//! stored as a 7-bit mask. Forms of degree `k` are dense coefficient vectors of
//! length `C(7, k)` in lexicographic order of their multi-indices.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::{LazyLock, OnceLock};

use nalgebra::{DMatrix, DVector, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of the underlying vector space.
pub const DIM: usize = 7;

/// Mask of the top-degree monomial `e^{1234567}`.
pub const TOP_MASK: u8 = 0b111_1111;

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Vector7 = SMatrix<f64, 7, 1>;

struct Tables {
    by_degree: [Vec<u8>; 8],
    position: [usize; 128],
}

static TABLES: LazyLock<Tables> = LazyLock::new(|| {
    let mut by_degree: [Vec<u8>; 8] = Default::default();
    // Lexicographic order on increasing tuples.
    fn rec(start: usize, left: usize, mask: u8, out: &mut Vec<u8>) {
        if left == 0 {
            out.push(mask);
            return;
        }
        for i in start..DIM {
            rec(i + 1, left - 1, mask | (1 << i), out);
        }
    }
    for (k, slot) in by_degree.iter_mut().enumerate() {
        rec(0, k, 0, slot);
    }
    let mut position = [0usize; 128];
    for list in &by_degree {
        for (p, &m) in list.iter().enumerate() {
            position[m as usize] = p;
        }
    }
    Tables {
        by_degree,
        position,
    }
});

/// Number of basis monomials of degree `k`, i.e. `C(7, k)`.
pub fn basis_len(k: usize) -> usize {
    TABLES.by_degree.get(k).map_or(0, Vec::len)
}

/// Masks of the degree-`k` basis in lexicographic order.
pub fn basis_masks(k: usize) -> &'static [u8] {
    &TABLES.by_degree[k]
}

/// Position of a mask within the basis of its own degree.
pub fn position(mask: u8) -> usize {
    TABLES.position[mask as usize]
}

/// Sign of `e^A ∧ e^B` relative to the sorted monomial `e^{A ∪ B}`, or `0` if
/// the masks overlap.
pub fn wedge_sign(a: u8, b: u8) -> f64 {
    if a & b != 0 {
        return 0.0;
    }
    // Count inversions: pairs (i in a, j in b) with i > j.
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        rest &= rest - 1;
        let above = if j >= 7 {
            0
        } else {
            a & !((1u8 << (j + 1)) - 1)
        };
        inversions += above.count_ones();
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Strictly increasing multi-index, stored as a bitmask over `e^1..e^7`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(u8);

impl MultiIndex {
    /// Builds from 1-based labels, which must be strictly increasing.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut mask = 0u8;
        let mut prev = 0usize;
        for &l in labels {
            if l <= prev || l > DIM {
                return Err(Error::InvalidMultiIndex(labels.to_vec()));
            }
            prev = l;
            mask |= 1 << (l - 1);
        }
        Ok(Self(mask))
    }

    pub fn from_mask(mask: u8) -> Self {
        Self(mask & TOP_MASK)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn degree(self) -> usize {
        self.0.count_ones() as usize
    }

    /// 1-based labels in increasing order.
    pub fn labels(self) -> Vec<usize> {
        (0..DIM)
            .filter(|i| self.0 & (1 << i) != 0)
            .map(|i| i + 1)
            .collect()
    }

    pub fn complement(self) -> Self {
        Self(!self.0 & TOP_MASK)
    }

    /// Lexicographic position within the basis of degree `self.degree()`.
    pub fn position(self) -> usize {
        position(self.0)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e^")?;
        for l in self.labels() {
            write!(f, "{l}")?;
        }
        if self.0 == 0 {
            write!(f, "∅")?;
        }
        Ok(())
    }
}

/// A homogeneous exterior form with dense coefficients.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Form {
    degree: usize,
    coeffs: Vec<f64>,
}

impl Form {
    pub fn zero(degree: usize) -> Self {
        assert!(degree <= DIM, "form degree {degree} exceeds 7");
        Self {
            degree,
            coeffs: vec![0.0; basis_len(degree)],
        }
    }

    pub fn scalar(c: f64) -> Self {
        Self {
            degree: 0,
            coeffs: vec![c],
        }
    }

    /// The Euclidean volume monomial `e^{1234567}` scaled by `c`.
    pub fn top(c: f64) -> Self {
        Self {
            degree: DIM,
            coeffs: vec![c],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > DIM {
            return Err(Error::InvalidDegree(degree));
        }
        if coeffs.len() != basis_len(degree) {
            return Err(Error::CoefficientLength {
                degree,
                expected: basis_len(degree),
                found: coeffs.len(),
            });
        }
        Ok(Self { degree, coeffs })
    }

    /// `c · e^{l1} ∧ … ∧ e^{lk}` from 1-based labels in any order; repeated
    /// labels give zero, unsorted labels pick up the permutation sign.
    pub fn monomial(c: f64, labels: &[usize]) -> Self {
        let mut out = Form::zero(labels.len().min(DIM));
        let mut mask = 0u8;
        let mut sign = 1.0;
        for &l in labels {
            assert!((1..=DIM).contains(&l), "label {l} outside 1..=7");
            let bit = 1u8 << (l - 1);
            if mask & bit != 0 {
                return Form::zero(labels.len());
            }
            sign *= wedge_sign(mask, bit);
            mask |= bit;
        }
        out.coeffs[position(mask)] = sign * c;
        out
    }

    /// Sum of monomials `Σ c · e^{labels}`, all of degree `degree`.
    pub fn from_terms(degree: usize, terms: &[(f64, &[usize])]) -> Self {
        let mut out = Form::zero(degree);
        for (c, labels) in terms {
            assert_eq!(labels.len(), degree, "term degree mismatch");
            out += &Form::monomial(*c, labels);
        }
        out
    }

    /// Basis 1-form `e^i` for a 0-based index.
    pub fn basis_one_form(i: usize) -> Self {
        let mut out = Form::zero(1);
        out.coeffs[i] = 1.0;
        out
    }

    pub fn from_vector(v: &Vector7) -> Self {
        Self {
            degree: 1,
            coeffs: v.iter().copied().collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coeffs)
    }

    /// Coefficient of a sorted monomial given by 1-based labels.
    pub fn coeff(&self, labels: &[usize]) -> f64 {
        let mi = MultiIndex::from_labels(labels).expect("labels must be strictly increasing");
        assert_eq!(mi.degree(), self.degree);
        self.coeffs[mi.position()]
    }

    pub fn coeff_at_mask(&self, mask: u8) -> f64 {
        self.coeffs[position(mask)]
    }

    /// Iterates `(monomial, coefficient)` over non-zero terms.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        basis_masks(self.degree)
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(m, c)| (MultiIndex(*m), *c))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Euclidean norm of the coefficient vector (the identity-metric norm).
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Form) -> Self {
        assert_eq!(self.degree, other.degree, "degree mismatch in axpy");
        Self {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn try_add(&self, other: &Form) -> Result<Self> {
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                found: other.degree,
            });
        }
        Ok(self.axpy(1.0, other))
    }

    /// The single coefficient of a degree-0 or degree-7 form.
    pub fn as_scalar(&self) -> f64 {
        assert_eq!(self.coeffs.len(), 1, "not a scalar or top-degree form");
        self.coeffs[0]
    }
}

impl fmt::Debug for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Form[{}](", self.degree)?;
        let mut first = true;
        for (m, c) in self.terms() {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{c:+}·{m:?}")?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, ")")
    }
}

impl AddAssign<&Form> for Form {
    fn add_assign(&mut self, rhs: &Form) {
        assert_eq!(
            self.degree, rhs.degree,
            "cannot add forms of different degree"
        );
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
    }
}

impl SubAssign<&Form> for Form {
    fn sub_assign(&mut self, rhs: &Form) {
        assert_eq!(
            self.degree, rhs.degree,
            "cannot subtract forms of different degree"
        );
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
    }
}

impl Add<&Form> for &Form {
    type Output = Form;
    fn add(self, rhs: &Form) -> Form {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&Form> for &Form {
    type Output = Form;
    fn sub(self, rhs: &Form) -> Form {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Add for Form {
    type Output = Form;
    fn add(mut self, rhs: Form) -> Form {
        self += &rhs;
        self
    }
}

impl Sub for Form {
    type Output = Form;
    fn sub(mut self, rhs: Form) -> Form {
        self -= &rhs;
        self
    }
}

impl Neg for &Form {
    type Output = Form;
    fn neg(self) -> Form {
        self.scaled(-1.0)
    }
}

impl Neg for Form {
    type Output = Form;
    fn neg(self) -> Form {
        self.scaled(-1.0)
    }
}

impl Mul<&Form> for f64 {
    type Output = Form;
    fn mul(self, rhs: &Form) -> Form {
        rhs.scaled(self)
    }
}

impl Mul<Form> for f64 {
    type Output = Form;
    fn mul(self, rhs: Form) -> Form {
        rhs.scaled(self)
    }
}

/// Exterior product. Fails when the total degree exceeds 7.
pub fn wedge(a: &Form, b: &Form) -> Result<Form> {
    let degree = a.degree + b.degree;
    if degree > DIM {
        return Err(Error::DegreeOverflow(a.degree, b.degree));
    }
    let mut out = Form::zero(degree);
    for (ma, ca) in basis_masks(a.degree).iter().zip(&a.coeffs) {
        if *ca == 0.0 {
            continue;
        }
        for (mb, cb) in basis_masks(b.degree).iter().zip(&b.coeffs) {
            if *cb == 0.0 || ma & mb != 0 {
                continue;
            }
            out.coeffs[position(ma | mb)] += wedge_sign(*ma, *mb) * ca * cb;
        }
    }
    Ok(out)
}

/// Interior product `ι_v a` with a vector given in the dual basis `e_1..e_7`.
pub fn contract(v: &Vector7, a: &Form) -> Result<Form> {
    if a.degree == 0 {
        return Err(Error::InvalidDegree(0));
    }
    let mut out = Form::zero(a.degree - 1);
    for (m, c) in basis_masks(a.degree).iter().zip(&a.coeffs) {
        if *c == 0.0 {
            continue;
        }
        let mut rest = *m;
        let mut p = 0;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if v[i] != 0.0 {
                let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                out.coeffs[position(m & !(1 << i))] += sign * v[i] * c;
            }
            p += 1;
        }
    }
    Ok(out)
}

/// `ι_{e_i} a` for a 0-based basis vector index.
pub fn contract_basis(i: usize, a: &Form) -> Result<Form> {
    let mut v = Vector7::zeros();
    v[i] = 1.0;
    contract(&v, a)
}

/// Derivation of the exterior algebra extending the linear map on 1-forms
/// `e^k ↦ Σ_j m[(k, j)] e^j`.
pub fn apply_derivation(m: &Matrix7, a: &Form) -> Form {
    let mut out = Form::zero(a.degree);
    for (mask, c) in basis_masks(a.degree).iter().zip(&a.coeffs) {
        if *c == 0.0 {
            continue;
        }
        let mut rest = *mask;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let without = mask & !(1 << k);
            // e^I = s · e^k ∧ e^{I∖k}; replace e^k by e^j.
            let s = wedge_sign(1 << k, without);
            for j in 0..DIM {
                let mkj = m[(k, j)];
                if mkj == 0.0 || without & (1 << j) != 0 {
                    continue;
                }
                let t = wedge_sign(1 << j, without);
                out.coeffs[position(without | (1 << j))] += s * t * mkj * c;
            }
        }
    }
    out
}

/// `det m[rows, cols]` by cofactor expansion along the first row. Division
/// free, so tiny or subnormal entries cannot overflow a pivot reciprocal.
fn minor_det(m: &Matrix7, rows: &[usize], cols: &[usize]) -> f64 {
    match rows.len() {
        0 => 1.0,
        1 => m[(rows[0], cols[0])],
        2 => {
            m[(rows[0], cols[0])] * m[(rows[1], cols[1])]
                - m[(rows[0], cols[1])] * m[(rows[1], cols[0])]
        }
        n => {
            let mut sub = [0usize; DIM];
            let mut total = 0.0;
            for j in 0..n {
                let a = m[(rows[0], cols[j])];
                if a == 0.0 {
                    continue;
                }
                let mut t = 0;
                for (c, &col) in cols.iter().enumerate() {
                    if c != j {
                        sub[t] = col;
                        t += 1;
                    }
                }
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * a * minor_det(m, &rows[1..], &sub[..n - 1]);
            }
            total
        }
    }
}

/// Riemannian metric on the 7-dimensional space with a fixed orientation.
#[derive(Clone)]
pub struct Metric {
    g: Matrix7,
    inv: Matrix7,
    sqrt_det: f64,
    orientation: f64,
    grams: [OnceLock<DMatrix<f64>>; 8],
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric")
            .field("g", &self.g)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl Metric {
    const SYMMETRY_TOL: f64 = 1e-12;

    /// Validates symmetry and positive definiteness (smallest eigenvalue > 0).
    pub fn new(g: Matrix7) -> Result<Self> {
        Self::with_orientation(g, 1)
    }

    pub fn with_orientation(g: Matrix7, orientation: i8) -> Result<Self> {
        let asym = (g - g.transpose()).abs().max();
        if asym > Self::SYMMETRY_TOL * g.abs().max().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let g = (g + g.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(g).eigenvalues.min();
        if !(min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite(min_eig));
        }
        let inv = g.try_inverse().ok_or(Error::NotPositiveDefinite(min_eig))?;
        let inv = (inv + inv.transpose()) * 0.5;
        Ok(Self {
            g,
            inv,
            sqrt_det: g.determinant().sqrt(),
            orientation: if orientation < 0 { -1.0 } else { 1.0 },
            grams: Default::default(),
        })
    }

    pub fn identity() -> Self {
        Self::new(Matrix7::identity()).expect("identity is positive definite")
    }

    pub fn diagonal(d: &[f64; 7]) -> Result<Self> {
        Self::new(Matrix7::from_diagonal(&Vector7::from_column_slice(d)))
    }

    pub fn matrix(&self) -> &Matrix7 {
        &self.g
    }

    pub fn inverse(&self) -> &Matrix7 {
        &self.inv
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// `√det g`, the coefficient of the volume form on `e^{1…7}`.
    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    pub fn volume_form(&self) -> Form {
        Form::top(self.orientation * self.sqrt_det)
    }

    /// Gram matrix of the induced inner product on degree-`k` monomials:
    /// `⟨e^I, e^J⟩ = det(g^{-1}[I, J])`.
    pub fn gram(&self, k: usize) -> &DMatrix<f64> {
        self.grams[k].get_or_init(|| {
            let masks = basis_masks(k);
            let n = masks.len();
            let idx: Vec<Vec<usize>> = masks
                .iter()
                .map(|m| (0..DIM).filter(|i| m & (1 << i) != 0).collect())
                .collect();
            let mut out = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v = minor_det(&self.inv, &idx[a], &idx[b]);
                    out[(a, b)] = v;
                    out[(b, a)] = v;
                }
            }
            out
        })
    }

    /// Inner product of two vectors (tangent vectors, `g_{ij}`).
    pub fn vec_inner(&self, x: &Vector7, y: &Vector7) -> f64 {
        (x.transpose() * self.g * y)[(0, 0)]
    }

    /// Raises the index of a 1-form.
    pub fn sharp(&self, a: &Form) -> Vector7 {
        assert_eq!(a.degree(), 1);
        self.inv * Vector7::from_column_slice(a.coeffs())
    }

    /// Lowers the index of a vector.
    pub fn flat(&self, v: &Vector7) -> Form {
        Form::from_vector(&(self.g * v))
    }
}

/// Inner product of equal-degree forms induced by `g`.
pub fn inner(g: &Metric, a: &Form, b: &Form) -> Result<f64> {
    if a.degree != b.degree {
        return Err(Error::DegreeMismatch {
            expected: a.degree,
            found: b.degree,
        });
    }
    let gram = g.gram(a.degree);
    let av = DVector::from_column_slice(&a.coeffs);
    let bv = DVector::from_column_slice(&b.coeffs);
    Ok(av.dot(&(gram * bv)))
}

pub fn norm(g: &Metric, a: &Form) -> f64 {
    inner(g, a, a).expect("same degree").max(0.0).sqrt()
}

/// Hodge star, characterised by `β ∧ *a = ⟨β, a⟩ vol_g`.
pub fn star(g: &Metric, a: &Form) -> Form {
    let k = a.degree;
    let gram = g.gram(k);
    let av = DVector::from_column_slice(&a.coeffs);
    let dual = gram * av;
    let scale = g.orientation * g.sqrt_det;
    let mut out = Form::zero(DIM - k);
    for (p, &m) in basis_masks(k).iter().enumerate() {
        let comp = !m & TOP_MASK;
        out.coeffs[position(comp)] += dual[p] * scale * wedge_sign(m, comp);
    }
    out
}
