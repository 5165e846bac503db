pub mod correlators;
pub mod error;
pub mod estimation;
pub mod io;
pub mod linalg;
pub mod model;
pub mod reconstruction;
pub mod simulation;
pub mod tensor;

pub use error::{Error, Result};
