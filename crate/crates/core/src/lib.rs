//! Approximations of Wiener integrals against the Brownian sheet.
//!
//! Two kernel families drive the approximating integrals
//! `X_n(t) = ∫_{[0,t]} f(u) θ_n(u) du` on a box `[0, T] ⊂ R_+^d`:
//!
//! * [`donsker`]: `θ_n(t) = n^{d/2} Z_k` on lattice cells, with i.i.d.
//!   centered unit-variance innovations `Z_k`;
//! * [`kac_stroock`]: `θ_n(t) = n^{d/2} (∏ t_i)^{(d-1)/2} (-1)^{N_n(t)}`,
//!   driven by a `d`-parameter Poisson process of intensity `n`.
//!
//! Integrands are [`SimpleFunction`]s, so every `X_n` is computed exactly.
//! [`wiener`] samples the Gaussian limit and [`stats`] holds the
//! Monte Carlo checks that tie the two together. [`harness`] runs
//! configured experiment suites and writes CSV reports.

// `!(a < b)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod donsker;
pub mod error;
pub mod family;
pub mod geometry;
pub mod harness;
pub mod integrand;
pub mod kac_stroock;
pub mod parallel;
pub mod random;
pub mod stats;
pub mod wiener;

pub use error::{Error, Result};
pub use family::KernelFamily;
pub use geometry::{increment_points, meet, EvalGrid, MultiIndex, ParamPoint, Rect};
pub use integrand::{indicator_combo, lp_norm, restrict, ExponentQ, SimpleFunction};
pub use parallel::Workers;
pub use random::{
    count_points, sample_lattice_field, sample_poisson_sheet, InnovationLaw, LatticeField,
    PoissonSheet, StreamKey,
};
