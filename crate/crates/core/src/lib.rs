//! Barycentric contraction flows for finite cyclic group actions.
//!
//! The crate builds cyclic actions on three model manifolds (flat space, the
//! round unit sphere and the flat torus), computes orbit centers of mass, and
//! integrates the vector field pointing from a point to the barycenter of its
//! orbit. Around that flow it measures contraction, flow length, level-set
//! collars and limits on the fixed set, and it certifies the explicit flat-case
//! constant chain with outward-rounded interval arithmetic.
//!
//! Module map:
//!
//! - [`manifold`]: distance, exp/log maps, convexity radius.
//! - [`group_action`]: block rotations, bump-warp conjugation, orbits,
//!   bilipschitz estimates.
//! - [`barycenter`]: Karcher means, the flat variance identity, barycenter
//!   displacement ratios.
//! - [`flow`]: the barycentric vector field, its RK4 flow and the contraction
//!   and decay measurements built on it.
//! - [`collar`]: level sets of the flow length and the boundary extension.
//! - [`certify`]: interval enclosures of the constant chain.
//! - [`cli`]: scenario files, reports and the `bflow` front end.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod certify;
pub mod cli;
pub mod collar;
mod error;
pub mod flow;
pub mod group_action;
mod linalg;
pub mod manifold;
mod numfmt;
pub mod sampling;

pub use error::{Error, Result};
pub use manifold::{ManifoldKind, ModelManifold, Point, TangentVec};

/// Bilipschitz budget used throughout: the action is `(1 + EPSILON)`-bilipschitz.
pub const EPSILON: f64 = 1.0 / 4000.0;
/// Barycenter displacement constant of the flat lemma.
pub const R_BOUND: f64 = 1.0 / 40.0;
/// Flow time over which contraction is measured.
pub const TAU: f64 = 1.0 / 5.0;
/// Contraction factor over one `TAU`.
pub const K_PRIME: f64 = 999.0 / 1000.0;
