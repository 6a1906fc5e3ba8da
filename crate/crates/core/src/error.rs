use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The matrix handed to a zero-forcing step does not have full row rank.
    #[error("rank-deficient channel: {rows} rows but numerical rank {rank} (condition estimate {condition:.3e})")]
    RankDeficient {
        rows: usize,
        rank: usize,
        condition: f64,
    },

    #[error("degenerate channel: no eigenvalue above the rank tolerance")]
    DegenerateChannel,

    /// The per-user rate floors alone cost more than the power budget.
    #[error("QoS floors need {required:.6e} W but the budget is {budget:.6e} W")]
    QosInfeasible { required: f64, budget: f64 },

    #[error("association infeasible: {0}")]
    AssociationInfeasible(String),

    #[error("brute-force oracle limited to S <= {max_bs} and K <= {max_users}, got S = {bs}, K = {users}")]
    OracleTooLarge {
        bs: usize,
        users: usize,
        max_bs: usize,
        max_users: usize,
    },

    #[error("auction did not terminate within {0} iterations")]
    AuctionStalled(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0} is outside the scope of this simulator")]
    OutOfScope(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
