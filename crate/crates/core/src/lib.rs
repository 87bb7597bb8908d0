//! Data-driven hull shape optimization.
//!
//! The crate chains together the pieces of a surrogate-based optimization loop
//! for a ship hull:
//!
//! - [`mesh`]: triangle meshes, waterline clipping and hydrostatic volume.
//! - [`ffd`]: free-form deformation on a Bernstein lattice bound to a small
//!   parameter vector.
//! - [`synthfom`]: a synthetic transient full-order model producing snapshot
//!   series with a known spectrum.
//! - [`dmd`]: exact dynamic mode decomposition and regime-state extraction.
//! - [`pod`] and [`gpr`]: the reduced basis and the coefficient regressors.
//! - [`rom`]: the assembled surrogate, baselines and sensitivity studies.
//! - [`objective`] and [`ga`]: the volume-constrained resistance objective and
//!   the genetic optimizer that minimizes it.
//! - [`pipeline`]: configuration, snapshot databases and end-to-end runs.

pub mod dmd;
pub mod ffd;
pub mod ga;
pub mod gpr;
pub mod mesh;
pub mod objective;
pub mod pipeline;
pub mod pod;
pub mod rom;
pub mod synthfom;

mod spatial;

pub use nalgebra;
