//! Effective Hamiltonians for time-periodic quantum systems.
//!
//! Two independent constructions are provided: the Floquet-Magnus nested
//! commutator expansion ([`magnus`]) and the recursive integration-by-parts
//! construction ([`effective`]). Both operate on exact operator-valued
//! trigonometric polynomials ([`trigpoly`]). The [`propagate`] and
//! [`verify`] modules check the resulting truncations against reference
//! dynamics.

pub mod cli;
pub mod effective;
pub mod error;
pub mod expm;
pub mod logm;
pub mod magnus;
pub mod models;
pub mod operator;
pub mod propagate;
pub mod trigpoly;
pub mod verify;

pub use error::{Error, Result};
pub use magnus::{EffectiveSeries, SeriesKind};
pub use operator::{BlockPartition, Conjugation, Operator};
pub use trigpoly::{FourierOp, TermCaps, TrigPolyOp};
