//! Numerical realization of the group of boundary-fixing diffeomorphisms of
//! a compact convex body `K` in `R^n`.
//!
//! The crate is organized around the objects that make the group computable:
//!
//! - [`geometry`]: the body `K` (balls and bounded H-polytopes) with exact
//!   membership and boundary distance;
//! - [`expr`]: a small expression DSL for specifying vector fields;
//! - [`fields`]: time-dependent vector fields vanishing on the boundary,
//!   with sampled Lipschitz certificates;
//! - [`contraction`]: quantitative Picard iteration and parameter-dependent
//!   fixed points with sensitivities;
//! - [`diffeo`]: group elements `id + gamma`, chart tests, composition and
//!   contraction-based inversion;
//! - [`jets`]: the truncated polynomial group under composition, jet
//!   extraction and boundary-order membership;
//! - [`evolution`]: the evolution operator of continuous field curves and
//!   the parametric flow map with finite-difference sensitivities;
//! - [`verify`]: the self-check suites exposed by the CLI.

pub mod contraction;
pub mod diffeo;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod jets;
pub mod linalg;
pub mod numdiff;
pub mod verify;

pub use contraction::{ContractionFamily, FlowResult, PicardProblem};
pub use diffeo::{ChartReport, Diffeo, InjectivityCertificate};
pub use error::{Error, Result};
pub use evolution::{EvolutionResult, ParametricFlowSpec, Trajectory};
pub use expr::ScalarExpr;
pub use fields::{BoundaryVanishingField, FieldDescriptor, LieAlgebraCurve, Weight};
pub use geometry::{BodyDescriptor, ConvexBody};
pub use jets::{JetDescriptor, JetPoly, TaylorJet};
