//! Criterion benchmarks for the pareto-choice pipeline; see `benches/`.
