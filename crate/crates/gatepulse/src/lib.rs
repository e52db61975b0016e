//! Configuration, file output, scenario drivers and the verification suite
//! on top of `gatepulse-core`.

pub mod config;
pub mod io;
pub mod scenarios;
pub mod verify;
