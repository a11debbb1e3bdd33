use thiserror::Error;

/// Engine-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("channel closed by peer")]
    ChannelClosed,

    #[error("deadlock suspected: both parties blocked on recv (stage {stage})")]
    Deadlock { stage: String },

    #[error("message shape mismatch in stage {stage}: expected {expected} bytes, got {got}")]
    MessageShape {
        stage: String,
        expected: usize,
        got: usize,
    },

    #[error("beaver triple {id} already consumed")]
    TripleReuse { id: u64 },

    #[error("shares belong to the same party ({0})")]
    PartyCollision(u8),

    #[error("mismatched shares: {0}")]
    ShareMismatch(String),

    #[error("duplicate primary key {key} in table {table}")]
    DuplicateKey { table: String, key: u64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config hash mismatch between parties (ours {ours:#018x}, peer {theirs:#018x})")]
    ConfigMismatch { ours: u64, theirs: u64 },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("join result has zero real rows; nothing to train on")]
    EmptyJoin,

    #[error("cuckoo placement failed; statistical bound exceeded")]
    CuckooOverflow,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("protocol error in stage {stage}: {msg}")]
    Protocol { stage: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
