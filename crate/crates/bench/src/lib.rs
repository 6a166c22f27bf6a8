//! Benchmark-only crate; see `benches/closed_loop.rs`.
