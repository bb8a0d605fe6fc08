pub mod dlqr;
pub mod error;
pub mod experiments;
pub mod footplace;
pub mod io;
pub mod lti;
pub mod model;
pub mod numerics;
pub mod timeproj;

pub use error::{Error, Result};
