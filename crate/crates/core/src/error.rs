use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument or model is outside the region where the operation is
    /// defined. `field` names the offending input.
    #[error("{field}: {reason}")]
    Domain { field: String, reason: String },

    #[error("{context}: no usable samples after {attempted} attempts")]
    InsufficientData { context: String, attempted: u64 },

    #[error("no root of {what}: {reason}")]
    NoRoot { what: String, reason: String },

    #[error("tail estimates do not plateau: max/min of x^beta * P(D > x) over the grid is {ratio:.3}")]
    NonPlateau { ratio: f64 },

    #[error("regeneration cycle did not return to the atom within {cap} steps")]
    RunawayCycle { cap: u64 },

    #[error("jump law is lattice (span {span}); the renewal limit needs a non-lattice law")]
    Lattice { span: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Domain {
        field: field.into(),
        reason: reason.into(),
    }
}
