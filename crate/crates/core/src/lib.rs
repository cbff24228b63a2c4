pub mod align;
pub mod embed;
pub mod env;
pub mod harness;
pub mod error;
mod optim;
pub mod policy;
pub mod transfer;

pub use error::{Error, Result};
