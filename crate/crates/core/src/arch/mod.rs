//! Reference weight-space architectures.

pub mod dws;
pub mod nfn;
pub mod mpnn;
pub mod nft;
