pub mod augtree;
pub mod boundary;
pub mod chain;
pub mod energy;
pub mod error;
pub mod export;
pub mod ifs;
pub mod kernels;
pub mod metric;
pub mod par;
pub mod stats;
pub mod verify;
