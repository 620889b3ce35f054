//! Shared fixtures for the benchmarks in `benches/`.

use hierperc::{sample_mixed, MixedConfig, Params, SeedSpec};

pub fn params(alpha: f64, beta: f64) -> Params {
    Params::new(1, 2, alpha, beta).expect("valid parameters")
}

pub fn config(alpha: f64, beta: f64, n: u32) -> MixedConfig {
    sample_mixed(&params(alpha, beta), n, &SeedSpec::new(1)).expect("sample")
}
