//! Holds the `acceptance` test target, which runs the end-to-end benchmarks,
//! calibration, oracle and invariant checks across both crates.
