//! Smooth Bloch frames over the Brillouin torus.
//!
//! Frames are built in gauge space: each grid point carries an `N×N` unitary
//! that expresses the frame in the local occupied eigenbasis, and everything is
//! driven by overlap matrices between neighboring points. The pipeline is
//! parallel transport along grid lines, followed by contraction of the
//! resulting obstruction loops and surfaces to the identity. The column
//! interpolation contraction works whenever the Chern numbers vanish, including
//! time-reversal-symmetric topological insulators where the logarithm fails.

// `!(x < tol)` style checks are deliberate: they treat NaN as failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod frames;
pub mod grid;
pub mod homotopy;
pub mod io;
pub mod matcore;
pub mod models;
pub mod tolerances;
pub mod transport;

pub use error::{ChernNumber, Error, Result};
pub use frames::{
    frame, frame_1d, frame_2d, frame_3d, FrameMeta, FrameOptions, GaugeFrame, Method,
};
pub use grid::{KGrid, Lattice};
pub use homotopy::{Homotopy, UnitaryField, WindingReport};
pub use matcore::{CMatrix, C64};
pub use models::{BlochModel, KaneMeleParams};
pub use tolerances::Tolerances;
pub use transport::{ModelProvider, OverlapProvider};
