pub mod autodiff;
pub mod corpus;
pub mod data;
pub mod decoding;
pub mod dp;
mod error;
pub mod eval;
pub mod model;
pub mod nmt;
pub mod optim;
pub mod reconstructor;
pub mod training;
pub mod util;

pub use error::{Error, Result};
