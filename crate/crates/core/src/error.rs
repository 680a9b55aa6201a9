use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("abscissa {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("invalid breakpoints: {0}")]
    InvalidBreakpoints(&'static str),

    #[error("concavity violated at x = {x} (excess {excess:e})")]
    ConcavityViolation { x: f64, excess: f64 },

    #[error("non-concave foresighted objective at backlog {backlog}")]
    StructuralAssumption { backlog: f64 },

    #[error("invalid action: cannot send {sent} from backlog {backlog}")]
    InvalidAction { backlog: f64, sent: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("priority weights must be strictly decreasing and positive")]
    PriorityOrder,

    #[error("{0}")]
    Unsupported(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for violations of the structural assumptions (concavity and the
    /// like) as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::ConcavityViolation { .. } | Error::StructuralAssumption { .. })
    }
}
