//! Conformal Wasserstein distances between disk-type surfaces.
//!
//! Surfaces are flattened onto the Poincaré disk ([`flatten`]) and
//! represented by conformal densities there ([`density`]), compared locally through a Möbius-invariant neighborhood
//! dissimilarity ([`localcost`]) and globally through optimal transport
//! ([`transport`], [`quotient`]).

pub mod density;
pub mod error;
pub mod flatten;
pub mod hyperbolic;
pub mod localcost;
pub mod quotient;
pub mod transport;

pub use error::{Error, Result};
