//! Left-invariant G2-structures on 7-dimensional Lie algebras and the
//! Laplacian-type flows acting on them.
//!
//! Forms are dense coefficient vectors over lexicographically ordered
//! monomials `e^{i₁…i_k}` (labels 1 to 7). A Lie algebra is given by the
//! differentials `de^i` of its dual basis.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Tensor loops index
// several arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decomp;
pub mod error;
pub mod exterior;
pub mod fixtures;
pub mod flows;
pub mod g2;
pub mod liealg;
pub mod npmodel;

pub use error::{Error, Result};
pub use exterior::{inner, norm, star, wedge, Form, Metric, MultiIndex};
pub use flows::{
    coflow_rhs, integrate, laplacian_flow_rhs, linearize, FlowConfig, FlowKind, FlowSystem,
    SpectrumReport, Termination, Trajectory,
};
pub use g2::{phi_of_psi, CoclosedState, G2Structure};
pub use liealg::{Connection, LieAlgebra};
pub use npmodel::{np_rhs, np_solve, NpParams};
