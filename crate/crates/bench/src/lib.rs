//! Criterion benchmarks of the core numerical kernels; see `benches/kernels.rs`.
