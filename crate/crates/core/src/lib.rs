//! Budget-feasible crowd-sensing auctions: plaintext mechanisms, the
//! privacy-preserving verifiable protocols PVI-H and PVI-S built on them,
//! and a simulation harness that checks outcome equivalence, truthfulness,
//! payment verifiability, and overhead scaling.

pub mod bulletin;
pub mod crypto;
pub mod error;
pub mod harness;
pub mod mechanisms;
pub mod protocol;
pub mod secure_compute;
pub mod wire;

pub use error::{Error, Result};
