//! Criterion benchmarks for the toolkit; run with `cargo bench -p glauber-bench`.
