pub mod bounds;
pub mod coupling;
pub mod error;
pub mod loss;
pub mod lp;
pub mod mc;
pub mod model;
pub mod pv;
pub mod rng;
pub mod triggers;

pub use error::{Error, Result};
