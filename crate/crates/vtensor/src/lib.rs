//! Exact verification of the P(z)- and Q(z)-tensor product formal calculus
//! on the rank-one Heisenberg vertex operator algebra.

pub mod error;
pub mod scalars;
pub mod fock;
pub mod series;
pub mod report;
pub mod maps;
pub mod dualact;
pub mod cli;

pub use error::{Error, Result};

/// Rational exponent of a formal variable or of `z`.
pub type Q = num_rational::Ratio<i64>;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Overview;
    #[doc = include_str!("../../../book/src/scalars.md")]
    pub struct Scalars;
    #[doc = include_str!("../../../book/src/series.md")]
    pub struct Series;
    #[doc = include_str!("../../../book/src/fock.md")]
    pub struct Fock;
    #[doc = include_str!("../../../book/src/maps.md")]
    pub struct Maps;
    #[doc = include_str!("../../../book/src/dualact.md")]
    pub struct DualActions;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
    #[doc = include_str!("../../../book/src/report-schema.md")]
    pub struct ReportSchema;
}
