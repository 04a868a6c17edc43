//! Construction and validation of randomization defining contrast
//! subspaces (RDCSSs) for two-level factorial designs.
//!
//! The effects of a 2^p factorial are the points of PG(p-1, 2). Each stage
//! of randomization restriction (blocks, whole plots, sub-lots) confounds a
//! projective subspace of effects; stages with disjoint subspaces give
//! effect estimators that split into equal-variance groups.
//!
//! * [`field`]: GF(2^p) arithmetic over a table of primitive polynomials.
//! * [`projective`]: effects, subspaces, spans and intersections.
//! * [`spread`]: cyclic spreads, partial spreads, mixed-size families.
//! * [`collineation`]: relabelling a spread to meet stage requirements.
//! * [`existence`]: closed-form existence verdicts and bounds.
//! * [`model`]: incidence matrices, estimator variances, simulation.
//! * [`fraction`]: regular 2^(r-s) fractions built on a base design.
//! * [`construct`]: the end-to-end request pipeline used by the CLI.
//! * [`io`]: the versioned design document.

pub mod bits;
pub mod collineation;
pub mod construct;
pub mod error;
pub mod exec;
pub mod existence;
pub mod field;
pub mod fraction;
pub mod io;
pub mod model;
pub mod projective;
pub mod spread;

pub use error::{Error, Result};
pub use exec::Exec;
pub use projective::{parse_effect, Effect, Subspace};
