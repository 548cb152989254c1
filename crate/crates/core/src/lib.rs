pub mod camera;
pub mod capture;
pub mod cli;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod gru;
pub mod packet;
pub mod switch;

pub use error::{Error, Result};
