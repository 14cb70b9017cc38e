use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration value; `key` names the offending setting.
    #[error("configuration error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged: mean |Q| = {mean_abs_q:e} at episode {episode}")]
    Divergence { episode: usize, mean_abs_q: f64 },

    #[error("not enough data: have {have}, need {need}")]
    NotEnoughData { have: usize, need: usize },

    #[error("oracle refused: search space {size} exceeds limit {limit}")]
    OracleTooLarge { size: f64, limit: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("sweep cell (n_vehicles={n_vehicles}, policy={policy}, seed={seed}) failed: {source}")]
    Sweep {
        n_vehicles: usize,
        policy: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
