//! Command line and HTTP front end for the rtqa plan accreditation toolkit.

pub mod commands;
pub mod server;
