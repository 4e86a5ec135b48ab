use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One failed check, with the sample point that witnessed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub message: String,
    pub witness: Vec<f64>,
    pub measured: f64,
    pub claimed: f64,
}

/// Outcome of a sampling audit. An empty violation list means no
/// counterexample was found at the sampled points; it is not a proof.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub samples: usize,
    pub notes: Vec<String>,
    pub measured: BTreeMap<String, f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>, samples: usize) -> Self {
        ValidationReport {
            subject: subject.into(),
            samples,
            notes: vec!["pass means: no violation found at the sampled points".to_string()],
            ..Default::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn record(&mut self, name: &str, value: f64) {
        let slot = self.measured.entry(name.to_string()).or_insert(f64::NEG_INFINITY);
        if value > *slot || value.is_nan() {
            *slot = value;
        }
    }

    pub(crate) fn violate(
        &mut self,
        check: &str,
        message: impl Into<String>,
        witness: Vec<f64>,
        measured: f64,
        claimed: f64,
    ) {
        self.violations.push(Violation {
            check: check.to_string(),
            message: message.into(),
            witness,
            measured,
            claimed,
        });
    }
}
