pub mod basis;
pub mod datasets;
pub mod error;
pub mod expansion;
pub mod joint_pce;
pub mod kle;
pub mod klpc;
pub mod lognormal_gsa;
pub mod metrics;
pub mod normal;
mod par;
pub mod regression;
pub mod rosenblatt;
pub mod synthetic;

pub use error::{Error, Result};
