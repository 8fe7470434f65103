//! Files, reports and the command-line front end around `ncs-core`.

pub mod app;
pub mod config;
pub mod pipeline;
pub mod scenarios;
pub mod specfile;
pub mod summary;
pub mod traces;
