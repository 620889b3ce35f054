use serde::Serialize;

use crate::lattice::Params;

/// Outcome of one verification: a statistic compared against a threshold.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub test: String,
    pub params: Params,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Test-specific numbers behind the statistic.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub detail: serde_json::Value,
}

impl CheckReport {
    pub fn new(test: &str, params: Params, statistic: f64, threshold: f64, pass: bool) -> Self {
        CheckReport {
            test: test.to_string(),
            params,
            statistic,
            threshold,
            pass,
            detail: serde_json::Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}
