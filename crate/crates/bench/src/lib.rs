//! Criterion benchmarks for `cpm-core`; see `benches/`.
