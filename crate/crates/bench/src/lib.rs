//! Criterion benchmarks for the simulator, the ridge solver and the exact
//! dynamic programs; see `benches/core.rs`.
