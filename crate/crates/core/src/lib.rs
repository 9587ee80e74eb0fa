pub mod error;
pub mod gait;
pub mod interval;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod linclusion;
pub mod normotope;
pub mod ode;
pub mod system;
pub mod verify;
pub mod walker;

pub use error::{Error, Result};
