//! Kernel herding and validation-design tools for Gaussian-process
//! models on the unit cube.

pub mod closed_form;
pub mod design;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod gp;
pub mod herding;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod measures;
pub mod testbed;

pub use design::Design;
pub use error::{Error, Result};
pub use kernel::{Kernel, MaternForm, Matern32};
pub use measures::{DiscreteMeasure, MuRepresentation};
