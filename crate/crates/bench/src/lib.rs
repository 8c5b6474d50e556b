//! Criterion benchmarks for `looped-icl`; see `benches/`.
