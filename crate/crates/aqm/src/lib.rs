//! Files, experiments and the command line around [`aqm_core`].

pub mod config;
pub mod formats;
pub mod harness;
pub mod play;
pub mod protocol;
pub mod report;
