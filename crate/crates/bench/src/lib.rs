//! Criterion benchmarks for the spectral engine; see `benches/`.
