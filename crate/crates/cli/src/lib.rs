//! Command-line front end and annotation service for `bwslex-core`.

pub mod server;
