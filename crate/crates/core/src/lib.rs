pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod oscillators;
pub mod controller;
pub mod terrain;
pub mod sim;
pub mod harness;

pub use error::{Error, IkPass, Result};
