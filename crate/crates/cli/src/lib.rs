//! Command-line driver: experiment configs, named presets, and the
//! train / eval / gradcheck / analyze / reproduce subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod presets;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

/// Keeps freed heap memory mapped. Every training step allocates and frees
/// the same large buffers, and handing them back to the kernel each time
/// costs about a third of the run time.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 512 << 20);
    }
}
