use std::fmt;

/// Errors raised by the sample-size engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument violated its documented domain.
    InvalidArgument(String),
    /// A candidate point was evaluated against a different `(n, spec)` than
    /// the one it was enumerated for.
    InconsistentCandidate { expected_n: u64, found_n: u64 },
    /// The search exceeded the configured sample-size cap without passing.
    ResourceLimit { max_n: u64 },
    /// A coverage comparison against `delta` could not be decided in floating
    /// point and the exact fallback is out of reach for this `n`.
    IllConditioned { n: u64, p: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::InconsistentCandidate {
                expected_n,
                found_n,
            } => write!(
                f,
                "candidate was enumerated for n={found_n} (or another error spec) but evaluated at n={expected_n}"
            ),
            Error::ResourceLimit { max_n } => {
                write!(f, "no sample size up to {max_n} satisfies the requirement")
            }
            Error::IllConditioned { n, p } => write!(
                f,
                "coverage comparison at n={n}, p={p} is too close to call and exceeds the exact-arithmetic cap"
            ),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
