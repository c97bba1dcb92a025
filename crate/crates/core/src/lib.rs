//! Mean-field and quantum dynamics of a three-mode spinor condensate.

pub mod chaos;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod ode;
pub mod quantum;
pub mod rng;
pub mod roots;
pub mod spectral;
pub mod twa;

mod dop853_tableau;

pub use error::{Error, Result};
