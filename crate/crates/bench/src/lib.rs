//! Benchmarks live in `benches/`; run them with `cargo bench -p lp2dh-bench`.
