pub mod baselines;
pub mod error;
pub mod link;
pub mod netmodel;
pub mod perfmodel;
pub mod sca;
pub mod solver;
pub mod two_timescale;

pub use error::{Error, Result};
