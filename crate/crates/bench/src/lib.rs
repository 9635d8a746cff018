//! Criterion benchmarks for the decoders and the encoder; see `benches/`.
