//! Compressed collective communication over in-process loopback or TCP
//! transports, a multi-worker compression driver, and the supporting
//! benchmark harness (synthetic data, raw f32 IO, CSV reports, PGM
//! output). The codecs and error theory live in `zcl-core`.

pub mod cli;
pub mod collectives;
pub mod error;
pub mod parallel;
pub mod pgm;
pub mod rawio;
pub mod report;
pub mod synth;
pub mod transport;

pub use collectives::{
    binomial_depth, cprp2p_allgather, cprp2p_allreduce, cprp2p_bcast, plain_allgather,
    plain_allreduce, plain_bcast, plain_scatter, run_loopback_world, z_allgather, z_allreduce,
    z_allreduce_average, z_bcast, z_reduce_scatter, z_scatter, CollectiveConfig, OpCounters,
    ReduceKind,
};
pub use error::{Error, Result};
pub use parallel::compress_parallel;
pub use synth::{generate_field, generate_image, SyntheticKind, SyntheticSpec};
pub use transport::{
    connect_tcp, loopback_world, Communicator, HandleKind, HandleStatus, MessageHandle,
    TransportCounters,
};
