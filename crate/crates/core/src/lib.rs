pub mod bench;
pub mod draft;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod sampling;
pub mod session;
pub mod transformer;
pub mod verify;

pub use error::{Error, Result};
