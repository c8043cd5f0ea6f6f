//! Robust set reconciliation for point sets in metric spaces.
//!
//! Two parties, each holding `n` points of a discrete grid, exchange compact
//! sketches so that one of them ends up with a set close to the other's:
//! close in earth mover's distance after discarding `k` outliers
//! ([`emd`]), or such that every point of either side has a neighbor within
//! a far radius ([`gap`]). Building blocks are invertible Bloom lookup
//! tables ([`iblt`], [`riblt`]), locality sensitive hashing ([`hashing`]) and
//! an exact min-cost matching solver ([`matching`]).

pub mod emd;
pub mod error;
pub mod gap;
pub mod geometry;
pub mod harness;
pub mod hashing;
pub mod iblt;
pub mod io;
pub mod matching;
pub mod riblt;
pub mod transport;
pub mod wire;

pub use error::{DecodeFailure, ReconError, Result};
pub use geometry::{distance, emd as earth_movers_distance, emd_k, GridSpec, Norm, Point, PointSet};
pub use transport::{Direction, Transcript, Transport};
