pub mod cli;
pub mod controlled;
pub mod error;
pub mod model;
pub mod sim;
pub mod spectral;
pub mod threshold;
pub mod uncontrolled;

pub use error::{Error, Result};
pub use model::{
    AccuracySpec, BoundMethod, BoundReport, ControlledSystem, Matrix, UncontrolledSystem,
};
