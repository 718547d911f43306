//! Cost accounting and verification: multiply-add counts, activation memory,
//! timing sweeps and gradient checks.

pub mod bench;
pub mod flops;
pub mod gradcheck;
pub mod memory;

pub use bench::{bench_attention, linear_fit, BenchRow};
pub use flops::{count_flops, verify_flops, FlopsReport, FlopsVerification};
pub use gradcheck::{grad_check, grad_suite, GradCheckReport, GradModule};
pub use memory::{estimate_memory, measure_memory, MemEstimate};
