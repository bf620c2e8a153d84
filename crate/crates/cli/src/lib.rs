//! File formats, configuration, parallel runners, and the command line for
//! `semicomp-core`.

pub mod app;
pub mod config;
pub mod io;
pub mod model_file;
pub mod runner;

pub use semicomp_core as core;

/// Process exit status for a failed run.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<semicomp_core::Error>()) {
        Some(e) if !e.is_validation() => 3,
        _ => 2,
    }
}
