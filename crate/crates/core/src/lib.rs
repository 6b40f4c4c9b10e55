pub mod diffuser;
pub mod error;
pub mod fft;
pub mod grid;
pub mod io;
pub mod lab;
pub mod shaper;
pub mod spdc;
pub mod stats;

pub use error::{Error, Result};
