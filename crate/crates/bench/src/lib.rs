//! Criterion benchmarks for `halfline`; see `benches/`.
