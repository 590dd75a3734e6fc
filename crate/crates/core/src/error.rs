use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "aggregation shape mismatch: client {client} layer {layer} is {found_rows}x{found_cols}, \
         expected {expected_rows}x{expected_cols}"
    )]
    AggregationShape {
        client: usize,
        layer: usize,
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("aggregation shape mismatch: client {client} has {found} layers, expected {expected}")]
    LayerCount {
        client: usize,
        expected: usize,
        found: usize,
    },

    #[error("corrupt membership: layer {layer} row {row} points at cluster {label} of {clusters}")]
    CorruptMembership {
        layer: usize,
        row: usize,
        label: usize,
        clusters: usize,
    },

    #[error("encoding overflow: {0}")]
    EncodingOverflow(String),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("authentication failed")]
    AuthenticationFailed,

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("session key not established")]
    NotAttested,

    #[error("attestation failed: {0}")]
    AttestationFailed(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("round {round}: {source}")]
    Round { round: u32, source: Box<Error> },
}

impl Error {
    pub(crate) fn in_round(self, round: u32) -> Error {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }
}
