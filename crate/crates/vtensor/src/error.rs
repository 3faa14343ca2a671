use thiserror::Error;

use crate::Q;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("e^(2 pi i {r}) is not an {m}-th root of unity")]
    RootNotRepresentable { r: Q, m: u32 },
    #[error("exponent {r} does not lie in (1/{n})Z")]
    DenominatorMismatch { r: Q, n: i64 },
    #[error("expected a nonzero single-term scalar")]
    NotMonomial,
    #[error("division by zero")]
    DivisionByZero,
    #[error("ill-defined product: coefficient at {at} needs infinitely many terms")]
    IllDefined { at: String },
    #[error("window too small: {0}")]
    Window(String),
    #[error("functional evaluated outside its domain: needed grade {needed}, available {available}")]
    DomainExhausted { needed: usize, available: usize },
    #[error("momentum mismatch: {0}")]
    Sector(String),
    #[error("nilpotency cap {cap} exceeded")]
    NilpotencyCap { cap: usize },
    #[error("unknown suite {0}")]
    UnknownSuite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
