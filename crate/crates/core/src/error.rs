use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transaction ({user}, {item}) was already applied")]
    DuplicateTransaction { user: String, item: String },

    #[error("tag {tag:?} is not used in profile {profile}")]
    UndefinedTag { profile: String, tag: String },

    #[error("item {item:?} is not in the profile of user {user:?}")]
    UnknownItem { user: String, item: String },

    #[error("user {user:?} has not tagged item {item:?}")]
    UnknownTagger { item: String, user: String },

    #[error("profile {0} not found")]
    MissingProfile(String),

    #[error("user {0:?} has no transactions")]
    NoTransactions(String),

    #[error("store format error: {0}")]
    StoreFormat(String),
}
