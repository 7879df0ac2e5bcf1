//! Benchmarks for the jumpsde solvers live under `benches/`.
