//! Criterion benchmarks for the hot loops of `nalab-core`; see `benches/`.
