//! Decentralized stochastic gradient descent with quantized exchange and
//! deadline-based local computation, plus the DSGD, Q-DSGD and
//! asynchronous DSGD baselines, in simulated time.
//!
//! All randomness comes from [`rng::Streams`], so a run is fully determined
//! by its configuration and seed.

pub mod algorithms;
pub mod compute;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objectives;
pub mod quantize;
pub mod rng;
pub mod topology;
pub mod vecops;

pub use error::{Error, Result};
