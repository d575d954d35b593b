use zcl_core::CodecError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("codec: {0}")]
    Codec(#[from] CodecError),
    #[error("transport: {0}")]
    Transport(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("parameter: {0}")]
    Param(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("rank {rank}, round {round}: {source}")]
    Collective {
        rank: usize,
        round: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_round(self, rank: usize, round: usize) -> Error {
        Error::Collective {
            rank,
            round,
            source: Box::new(self),
        }
    }
}
