//! The user guide, compiled chapter by chapter from `book/src/` so that
//! every fenced Rust snippet in the rendered book runs as a doc-test of this
//! crate. One module per chapter keeps test failures attributable.
//!
//! Render the book with `mdbook build book`; the content here is identical
//! by construction.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/mesh-and-spaces.md")]
pub mod mesh_and_spaces {}

#[doc = include_str!("../../../book/src/operators.md")]
pub mod operators {}

#[doc = include_str!("../../../book/src/projections.md")]
pub mod projections {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/time-integrator.md")]
pub mod time_integrator {}

#[doc = include_str!("../../../book/src/convergence-studies.md")]
pub mod convergence_studies {}

#[doc = include_str!("../../../book/src/cli-reference.md")]
pub mod cli_reference {}
