//! Coefficient algebras `F_{p^m}[eps]/(eps^k)` and truncated power series over them.

mod field;
mod ring;
mod series;

pub use field::FiniteField;
pub use ring::{CoeffElement, CoeffRing, RingSpec};
pub use series::{SeriesRepr, USeries, VSeries};

pub(crate) use field::is_prime;
