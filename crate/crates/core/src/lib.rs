//! Dagger compact categories at desk scale: finite relations and
//! finite-dimensional Hilbert spaces, chain colimits and the extended
//! duals functor, classical structures, and an E91 key-distribution
//! simulator built on top of them.

pub mod accessible;
pub mod category;
pub mod error;
pub mod fdhilb;
pub mod gen;
pub mod qkd;
pub mod rel;
pub mod suites;

pub use error::{Error, Result};
