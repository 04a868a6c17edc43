use thiserror::Error;

/// Errors raised by construction and validation routines.
///
/// Infeasibility of a collineation search is not an error; see
/// [`crate::collineation::SearchOutcome`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("degree {0} out of table range (supported: 2..=24)")]
    DegreeOutOfRange(usize),

    #[error("polynomial {0:#x} is not primitive over GF(2)")]
    NotPrimitive(u64),

    #[error("polynomial {poly:#x} does not have degree {degree}")]
    BadPolynomial { poly: u64, degree: usize },

    #[error("empty effect word")]
    EmptyWord,

    #[error("unknown factor letter '{letter}' for {factors} factors")]
    UnknownLetter { letter: char, factors: usize },

    #[error("duplicate factor letter '{0}'")]
    DuplicateLetter(char),

    #[error("generators are not independent: {0} lies in the span of the others")]
    NotIndependent(String),

    #[error("effects live in different spaces ({0} vs {1} factors)")]
    DimensionMismatch(usize, usize),

    #[error("no full spread exists: t = {t} does not divide p = {p} (Andre's condition)")]
    NoFullSpread { p: usize, t: usize },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction invariant violated: {0}")]
    ConstructionInvariant(String),

    #[error("stage containment violated: {0}")]
    StageContainment(String),

    #[error("duplicate generator word {0}")]
    DuplicateGenerator(String),

    #[error("covariance matrix is singular")]
    SingularCovariance,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("search budget exhausted after {0} candidates without a decision")]
    BudgetExhausted(u64),

    #[error("malformed design document: {0}")]
    MalformedDesign(String),
}

pub type Result<T> = std::result::Result<T, Error>;
