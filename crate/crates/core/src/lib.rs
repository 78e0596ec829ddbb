//! Numerical laboratory for disordered pinning models built on heavy-tailed
//! renewal processes.
//!
//! The crate is organised bottom-up: [`kernels`] builds normalised
//! inter-arrival laws, [`renewal`] and [`homogeneous`] solve the pure model
//! exactly, [`disorder`] and [`quenched`] handle random environments, and
//! [`certificate`] turns fractional-moment bounds into delocalization
//! certificates that [`scan`] sweeps over the disorder strength.

pub mod bracket;
pub mod certificate;
pub mod disorder;
mod dp;
pub mod error;
pub mod homogeneous;
pub mod kernels;
pub mod quenched;
pub mod renewal;
pub mod rng;
pub mod scan;
pub mod stats;
mod tails;

pub use bracket::Bracket;
pub use error::{Error, Result};
