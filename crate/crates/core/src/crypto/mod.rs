pub mod blind_sig;
pub mod group;
pub mod opes;
pub mod ot;
pub mod paillier;
pub mod schnorr;
pub mod tlc;

pub use group::GroupParams;
pub use opes::EncodingTable;
pub use paillier::{PaillierCiphertext, PaillierKeypair};
pub use tlc::TlcService;
