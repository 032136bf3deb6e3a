//! Joint estimation of surface spectral reflectances and projector primary
//! SPDs from RGB captures under projected illuminations.

pub mod basis;
pub mod colorimetry;
pub mod error;
pub mod forward;
pub mod io;
pub mod protocol;
pub mod scene;
pub mod solver;
pub mod spectrum;

pub use error::{Error, Result};
