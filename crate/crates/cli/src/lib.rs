//! Command line and HTTP front ends for the braidflow pipeline.

pub mod cmd;
pub mod server;
