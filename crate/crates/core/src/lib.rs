pub mod config;
pub mod eavesdrop;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod postprocess;
pub mod protocol;
pub mod qstate;
pub mod rng;
pub mod source;
