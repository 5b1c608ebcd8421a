//! Criterion benchmarks for the echotrace engine; see `benches/`.
