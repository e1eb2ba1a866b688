//! Outer approximation methods for variational inequalities over the
//! intersection of convex sets with the preimage of convex sets under a
//! linear map.
//!
//! The solver looks for `u ∈ S = C ∩ A⁻¹(Q)` with `<F(u), z - u> >= 0` for
//! every `z ∈ S`, where `C` and `Q` are finite intersections of simple sets.
//! Each step takes a gradient step with `F` and projects it onto a half-space
//! cut out by a cutter `T_k`, which combines the operators of `C` with a
//! Landweber transform of the operators of `Q`.
//!
//! ```
//! use std::sync::Arc;
//! use oam_core::{linalg::vector, ConvexSet, LinearMap, MonotoneMap, Problem, Solver,
//!                SolverOptions, Split, Variant};
//!
//! let problem = Problem::new(
//!     vec![ConvexSet::boxed(vector(&[-1.0, -1.0]), vector(&[0.0, 0.0]))?],
//!     Some(Split {
//!         map: Arc::new(LinearMap::from_diagonal(&[2.0, 1.0])?),
//!         q_sets: vec![ConvexSet::half_space(vector(&[1.0, 0.0]), 0.0)?],
//!     }),
//!     MonotoneMap::to_point(vector(&[1.0, -0.5]))?,
//! )?;
//! let out = Solver::new(problem, SolverOptions::with_variant(Variant::Product))?.solve(None)?;
//! assert!((out.u - vector(&[0.0, -0.5])).norm() < 1e-2);
//! # Ok::<(), oam_core::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod composition;
pub mod config;
pub mod error;
pub mod landweber;
pub mod linalg;
pub mod operators;
pub mod oracle;
pub mod par;
pub mod sets;
pub mod solver;
pub mod trace;

pub use composition::{BlockMode, ControlKind, RhoPolicy, Variant, VariantConfig};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use landweber::{Extrapolation, LandweberOp};
pub use linalg::{LinearMap, Matrix, Vector};
pub use operators::{CutterOp, ProxFn, SubgradFn};
pub use par::Execution;
pub use sets::{ConvexSet, HalfSpaceOrWhole};
pub use solver::{MonotoneMap, Problem, SolveOutput, Solver, SolverOptions, Split, TraceRecord};
