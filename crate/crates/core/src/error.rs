use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in this crate.
///
/// The variants map onto the process exit codes used by the command-line
/// front end: validation/domain/config/input problems exit with 2, protocol
/// aborts with 3, and crypto failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejected parameters or an impossible run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operand outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Key material problems: mismatched key fingerprints, undersized keys,
    /// failed key generation.
    #[error("key error: {0}")]
    Key(String),
    /// Malformed caller-supplied data (duplicate IDs, bad labels, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// Well-formed input that cannot be used (missing columns, unknown IDs).
    #[error("input error: {0}")]
    Input(String),
    /// A peer sent something that violates the protocol state machine.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The session was torn down deliberately, by us or by a peer.
    #[error("session aborted: {0}")]
    Abort(String),
    /// Failure in the byte transport underneath the protocol.
    #[error("transport error: {0}")]
    Transport(String),
    /// Bytes that do not parse as a protocol frame or message.
    #[error("wire format error: {0}")]
    Wire(String),
    /// Model or lookup-table files that cannot be read back.
    #[error("model file error: {0}")]
    Persist(String),
    /// A broken internal invariant; always a bug, never user error.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn key(msg: impl Into<String>) -> Self {
        Error::Key(msg.into())
    }
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }
    pub fn abort(msg: impl Into<String>) -> Self {
        Error::Abort(msg.into())
    }
    pub fn transport(msg: impl Into<String>) -> Self {
        Error::Transport(msg.into())
    }
    pub fn wire(msg: impl Into<String>) -> Self {
        Error::Wire(msg.into())
    }
    pub fn persist(msg: impl Into<String>) -> Self {
        Error::Persist(msg.into())
    }
    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }
}
