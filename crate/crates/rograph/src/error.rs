use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid name `{name}`: {reason}")]
    InvalidName { name: String, reason: String },
    #[error("type mismatch on `{name}`: registered as {registered}, requested {requested}")]
    TypeMismatch {
        name: String,
        registered: String,
        requested: &'static str,
    },
    #[error("a server is already registered on `{0}`")]
    ServerExists(String),
    #[error("no server available on `{0}`")]
    NoServer(String),
    #[error("call on `{0}` timed out")]
    Timeout(String),
    #[error("server on `{0}` panicked while handling the request")]
    ServerPanic(String),
    #[error("parameter `{0}` is not declared")]
    UndeclaredParameter(String),
    #[error("parameter `{name}` holds {held}, not {requested}")]
    ParameterType {
        name: String,
        held: &'static str,
        requested: &'static str,
    },
}
