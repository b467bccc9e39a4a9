//! Exact computations with rank-2 Breuil-Kisin modules carrying tame descent data.

pub mod bkmod;
pub mod cdm;
pub mod coeffring;
pub mod error;
pub mod quotient;
pub mod straighten;
pub mod tametype;

pub use error::{Error, Result};
