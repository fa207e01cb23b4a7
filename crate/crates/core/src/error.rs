use std::fmt;

/// Constraints of the joint allocation / phase problem that a [`Strategy`](crate::system::Strategy)
/// can violate.
///
/// C3 (binary decision), C7 (occupation ratio) and C8 (unit-modulus reflection) are
/// enforced by the representation itself and therefore have no runtime variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// C1: every group id lies in `0..=L`.
    GroupRange,
    /// C2: one RIS group serves at most one pair.
    DistinctGroups,
    /// C4: the number of assisted pairs equals the announced group count.
    GroupCount,
    /// C5: group count does not exceed `L_max`.
    MaxGroups,
    /// C6: total power does not exceed `P_max`.
    PowerBudget,
    /// C9: every phase is finite and in `[0, 2π)`.
    PhaseRange,
    /// Shape requirements: vector lengths, `L | N`.
    Structure,
}

impl Constraint {
    pub fn label(self) -> &'static str {
        match self {
            Constraint::GroupRange => "C1",
            Constraint::DistinctGroups => "C2",
            Constraint::GroupCount => "C4",
            Constraint::MaxGroups => "C5",
            Constraint::PowerBudget => "C6",
            Constraint::PhaseRange => "C9",
            Constraint::Structure => "structure",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("infeasible strategy ({constraint}): {detail}")]
    Infeasible {
        constraint: Constraint,
        detail: String,
    },

    #[error("no allocation candidate satisfies the power budget")]
    NoFeasibleCandidate,

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged at epoch {epoch} (last finite loss {last_finite_loss:?} at epoch {last_finite_epoch:?})")]
    Divergence {
        epoch: usize,
        last_finite_epoch: Option<usize>,
        last_finite_loss: Option<f64>,
    },

    #[error("model format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn infeasible(constraint: Constraint, detail: impl Into<String>) -> Self {
        Error::Infeasible {
            constraint,
            detail: detail.into(),
        }
    }

    /// The constraint named by an infeasibility error, looking through frame wrappers.
    pub fn violated(&self) -> Option<Constraint> {
        match self {
            Error::Infeasible { constraint, .. } => Some(*constraint),
            Error::Frame { source, .. } => source.violated(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
