//! Numerical verification engine for the geometry and covariant phase space
//! of two-dimensional worldsheets embedded in a background space.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`], [`linalg`], [`jet`]: small dense algebra and forward-mode jets.
//! * [`background`]: analytic ambient metrics and connections.
//! * [`worldsheet`]: analytic and gridded sheets, induced metric, quadrature.
//! * [`geometry`]: projectors, frames, connections and curvature of a sheet.
//! * [`dynamics`]: the area action, its equations of motion, a minimal-surface
//!   relaxation solver and the variation engine.
//! * [`symplectic`]: potentials, currents and phase-space forms.
//! * [`field_theory`]: gauge, linearized gravity and scalar-field fixtures.
//! * [`suite`]: configuration-driven verification suites and reports.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod background;
pub mod convergence;
pub mod dynamics;
pub mod error;
pub mod field_theory;
pub mod geometry;
pub mod grid;
pub mod jet;
pub mod linalg;
pub mod suite;
pub mod symplectic;
pub mod tensor;
pub mod tolerances;
pub mod worldsheet;

pub use error::{Error, Result};
