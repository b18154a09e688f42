use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};

/// Gauge freedom of a toric potential.
///
/// Acting on a pair `(φ, u)` over `P`:
///
/// ```text
/// φ'(ρ) = φ(ρ − kv) + ⟨b, ρ − kv⟩ + c
/// u'(x) = u(x − b) + ⟨kv, x⟩ − c        on P + b
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeShift {
    #[serde(default)]
    pub c: f64,
    pub b: Vec<f64>,
    pub kv: Vec<i64>,
}

impl GaugeShift {
    pub fn identity(m: usize) -> Self {
        Self {
            c: 0.0,
            b: vec![0.0; m],
            kv: vec![0; m],
        }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self {
            c,
            ..Self::identity(m)
        }
    }

    pub fn translate(b: Vec<f64>) -> Self {
        let m = b.len();
        Self {
            b,
            ..Self::identity(m)
        }
    }

    pub fn lattice(kv: Vec<i64>) -> Self {
        let m = kv.len();
        Self {
            kv,
            ..Self::identity(m)
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        check_dim(m, self.b.len())?;
        check_dim(m, self.kv.len())?;
        if !self.c.is_finite() || self.b.iter().any(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidParameter(
                "gauge shift must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.c == 0.0 && self.b.iter().all(|&v| v == 0.0) && self.kv.iter().all(|&v| v == 0)
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &GaugeShift) -> GaugeShift {
        let cross: f64 = self
            .b
            .iter()
            .zip(&other.kv)
            .map(|(b, &k)| b * k as f64)
            .sum();
        GaugeShift {
            c: self.c + other.c + cross,
            b: self.b.iter().zip(&other.b).map(|(a, b)| a + b).collect(),
            kv: self.kv.iter().zip(&other.kv).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn inverse(&self) -> GaugeShift {
        let kb: f64 = self.kv.iter().zip(&self.b).map(|(&k, b)| k as f64 * b).sum();
        GaugeShift {
            c: kb - self.c,
            b: self.b.iter().map(|v| -v).collect(),
            kv: self.kv.iter().map(|v| -v).collect(),
        }
    }

    pub(crate) fn kv_f64(&self) -> Vec<f64> {
        self.kv.iter().map(|&v| v as f64).collect()
    }
}
