//! File formats, the remote completion client, parallel drivers and the
//! `cascade` command line, on top of `cascade-core`.

pub mod app;
pub mod config;
pub mod formats;
pub mod parallel;
pub mod remote;
pub mod store;
