pub mod adaptive;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod features;
pub mod io;
pub mod mdm;
pub mod session;
pub mod spd;

pub use error::{Error, Result};
