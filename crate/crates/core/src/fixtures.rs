//! Built-in Lie algebras and forms.
//!
//! The JSON sources live in `crates/core/fixtures/` and are embedded at build
//! time; [`FixtureSet::from_dir`] reads the same files from another directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::Form;
use crate::liealg::{LieAlgebra, Term};

const EE1_JSON: &str = include_str!("../fixtures/ee1.json");
const EE2_JSON: &str = include_str!("../fixtures/ee2.json");
const EE1_CORRUPTED_JSON: &str = include_str!("../fixtures/ee1_corrupted.json");
const ABELIAN_JSON: &str = include_str!("../fixtures/abelian.json");
const PHI_BAR_JSON: &str = include_str!("../fixtures/phi_bar.json");
const PSI_BAR_JSON: &str = include_str!("../fixtures/psi_bar.json");

pub const ALGEBRA_NAMES: [&str; 4] = ["abelian", "ee1", "ee2", "ee1_corrupted"];
pub const FORM_NAMES: [&str; 2] = ["phi_bar", "psi_bar"];

/// Signs and monomials of the standard 3-form
/// `φ̄ = e^{123} + e^{145} + e^{167} + e^{246} − e^{257} − e^{347} − e^{356}`.
pub const STANDARD_TERMS: [(f64, [usize; 3]); 7] = [
    (1.0, [1, 2, 3]),
    (1.0, [1, 4, 5]),
    (1.0, [1, 6, 7]),
    (1.0, [2, 4, 6]),
    (-1.0, [2, 5, 7]),
    (-1.0, [3, 4, 7]),
    (-1.0, [3, 5, 6]),
];

/// On-disk form: `{"degree":3,"terms":[{"idx":[1,2,3],"coef":1}]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FormFile {
    pub degree: usize,
    pub terms: Vec<Term>,
}

impl FormFile {
    pub fn into_form(self) -> Result<Form> {
        if self.degree > 7 {
            return Err(Error::InvalidDegree(self.degree));
        }
        let mut out = Form::zero(self.degree);
        for t in &self.terms {
            if t.idx.len() != self.degree || t.idx.iter().any(|i| !(1..=7).contains(i)) {
                return Err(Error::Parse(format!(
                    "term {:?} does not match degree {}",
                    t.idx, self.degree
                )));
            }
            out += &Form::monomial(t.coef, &t.idx);
        }
        Ok(out)
    }

    pub fn from_form(f: &Form) -> Self {
        Self {
            degree: f.degree(),
            terms: f
                .terms()
                .map(|(m, c)| Term {
                    idx: m.labels(),
                    coef: c,
                })
                .collect(),
        }
    }
}

pub fn form_from_json_str(s: &str) -> Result<Form> {
    serde_json::from_str::<FormFile>(s)?.into_form()
}

fn builtin_algebra(json: &str) -> LieAlgebra {
    LieAlgebra::from_json_str(json).expect("embedded fixture is valid")
}

pub fn ee1() -> LieAlgebra {
    builtin_algebra(EE1_JSON)
}

pub fn ee2() -> LieAlgebra {
    builtin_algebra(EE2_JSON)
}

/// EE1 with the extra structure equation `de^5 = e^{26}`, which violates
/// `d² = 0`.
pub fn ee1_corrupted() -> LieAlgebra {
    builtin_algebra(EE1_CORRUPTED_JSON)
}

pub fn abelian() -> LieAlgebra {
    builtin_algebra(ABELIAN_JSON)
}

pub fn phi_bar() -> Form {
    form_from_json_str(PHI_BAR_JSON).expect("embedded fixture is valid")
}

pub fn psi_bar() -> Form {
    form_from_json_str(PSI_BAR_JSON).expect("embedded fixture is valid")
}

/// `Σ ± p_m e^{m}` over the seven standard monomials with the standard signs.
pub fn diagonal_phi(p: &[f64; 7]) -> Form {
    let mut out = Form::zero(3);
    for ((s, labels), pm) in STANDARD_TERMS.iter().zip(p) {
        out += &Form::monomial(s * pm, labels);
    }
    out
}

/// The two-parameter-per-monomial family `c_m² e^{m}` with standard signs.
pub fn squared_diagonal_phi(c: &[f64; 7]) -> Form {
    diagonal_phi(&c.map(|x| x * x))
}

/// `φ̄` written in the rescaled coframe `f^i = a_i e^i`.
pub fn scaled_frame_phi(a: &[f64; 7]) -> Form {
    let mut p = [0.0; 7];
    for (pm, (_, labels)) in p.iter_mut().zip(STANDARD_TERMS.iter()) {
        *pm = labels.iter().map(|l| a[l - 1]).product();
    }
    diagonal_phi(&p)
}

/// Fixture lookup: the embedded set, or a directory of `<name>.json` files
/// that replaces it entirely.
#[derive(Clone, Debug)]
pub struct FixtureSet {
    dir: Option<PathBuf>,
}

impl FixtureSet {
    pub fn builtin() -> Self {
        Self { dir: None }
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        Self {
            dir: Some(dir.as_ref().to_path_buf()),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Names that load as Lie algebras.
    pub fn algebra_names(&self) -> Vec<String> {
        match &self.dir {
            None => ALGEBRA_NAMES.iter().map(|s| s.to_string()).collect(),
            Some(_) => self
                .json_stems()
                .into_iter()
                .filter(|n| self.algebra(n).is_ok())
                .collect(),
        }
    }

    /// Names that load as forms.
    pub fn form_names(&self) -> Vec<String> {
        match &self.dir {
            None => FORM_NAMES.iter().map(|s| s.to_string()).collect(),
            Some(_) => self
                .json_stems()
                .into_iter()
                .filter(|n| self.form(n).is_ok())
                .collect(),
        }
    }

    fn json_stems(&self) -> Vec<String> {
        let Some(dir) = &self.dir else {
            return Vec::new();
        };
        let mut out: Vec<String> = std::fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(String::from))?
            })
            .collect();
        out.sort();
        out
    }

    pub fn algebra(&self, name: &str) -> Result<LieAlgebra> {
        match &self.dir {
            Some(dir) => LieAlgebra::from_json_file(dir.join(format!("{name}.json"))),
            None => match name {
                "abelian" => Ok(abelian()),
                "ee1" => Ok(ee1()),
                "ee2" => Ok(ee2()),
                "ee1_corrupted" => Ok(ee1_corrupted()),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown algebra fixture `{name}`; available: {}",
                    ALGEBRA_NAMES.join(", ")
                ))),
            },
        }
    }

    pub fn form(&self, name: &str) -> Result<Form> {
        match &self.dir {
            Some(dir) => {
                let text = std::fs::read_to_string(dir.join(format!("{name}.json")))?;
                form_from_json_str(&text)
            }
            None => match name {
                "phi_bar" => Ok(phi_bar()),
                "psi_bar" => Ok(psi_bar()),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown form fixture `{name}`; available: {}",
                    FORM_NAMES.join(", ")
                ))),
            },
        }
    }
}
