//! Run configuration, execution and manifests behind the `tacsim` binary.

pub mod error;
pub mod manifest;
pub mod runs;
