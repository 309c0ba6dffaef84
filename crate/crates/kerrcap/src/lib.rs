pub mod channel_sim;
pub mod coefficients;
pub mod condpdf;
pub mod distribution;
pub mod envelope;
pub mod error;
pub mod exec;
pub mod information;
pub mod jtensors;
pub mod quad;
pub mod sampler;
pub mod specfun;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
