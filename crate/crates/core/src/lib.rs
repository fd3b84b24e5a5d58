//! Finite-scale workbench for coarse geometry: metric spaces, covers,
//! partitions of unity, Hilbert-space witnesses, the constructions that
//! combine them, and coarse quasi-actions of finitely generated groups.

pub mod certificate;
pub mod construct;
pub mod cover;
pub mod error;
pub mod group;
pub mod partition;
pub mod scenario;
pub mod space;
pub mod witness;

pub use error::{Error, Result};
