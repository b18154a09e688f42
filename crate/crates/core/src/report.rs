//! Structured pass/fail records for the numerical checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// SHA-256 of the canonical JSON of the inputs.
    pub inputs_digest: String,
    pub residuals: Vec<Residual>,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub info: BTreeMap<String, serde_json::Value>,
    pub verdict: Verdict,
    #[serde(default)]
    pub summary: String,
}

impl CheckReport {
    pub fn new(name: &str, inputs: &impl Serialize) -> Self {
        let bytes = serde_json::to_vec(inputs).unwrap_or_default();
        Self {
            name: name.to_string(),
            inputs_digest: hex::encode(Sha256::digest(&bytes)),
            residuals: Vec::new(),
            tolerances: BTreeMap::new(),
            info: BTreeMap::new(),
            verdict: Verdict::Pass,
            summary: String::new(),
        }
    }

    /// Records `value` against `tolerance`; NaN never passes.
    pub fn residual(&mut self, name: &str, value: f64, tolerance: f64) -> &mut Self {
        let pass = value <= tolerance;
        if !pass {
            self.verdict = Verdict::Fail;
        }
        self.residuals.push(Residual {
            name: name.to_string(),
            value,
            tolerance,
            pass,
        });
        self
    }

    /// Records a lower-bound requirement `value ≥ bound`.
    pub fn at_least(&mut self, name: &str, value: f64, bound: f64) -> &mut Self {
        // stored as bound − value ≤ 0
        self.residual(name, bound - value, 0.0)
    }

    pub fn tolerance(&mut self, name: &str, value: f64) -> &mut Self {
        self.tolerances.insert(name.to_string(), value);
        self
    }

    pub fn info(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.info.insert(
            name.to_string(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Recomputes the verdict and sets the summary line.
    pub fn finish_with(&mut self, pass_label: &str, fail_label: &str) -> &mut Self {
        self.verdict = if self.residuals.iter().all(|r| r.pass) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.summary = if self.passed() { pass_label } else { fail_label }.to_string();
        self
    }

    pub fn worst(&self) -> Option<&Residual> {
        self.residuals
            .iter()
            .filter(|r| !r.pass)
            .chain(self.residuals.iter())
            .next()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.residuals.iter().find(|r| r.name == name).map(|r| r.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_follows_residuals() {
        let mut r = CheckReport::new("t", &1);
        r.residual("a", 1e-9, 1e-6);
        r.finish_with("ok", "bad");
        assert!(r.passed());
        r.residual("b", f64::NAN, 1.0);
        r.finish_with("ok", "bad");
        assert!(!r.passed());
        assert_eq!(r.summary, "bad");
        assert_eq!(r.worst().unwrap().name, "b");
    }

    #[test]
    fn digest_is_stable() {
        let a = CheckReport::new("t", &serde_json::json!({"k": [1, 2]}));
        let b = CheckReport::new("t", &serde_json::json!({"k": [1, 2]}));
        assert_eq!(a.inputs_digest, b.inputs_digest);
        assert_eq!(a.inputs_digest.len(), 64);
    }
}
