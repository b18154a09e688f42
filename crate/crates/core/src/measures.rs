//! Bergman measures `μ_k^x` on `P ∩ (1/k)Z^m` and operations on lattice measures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::{log_weights, NormingTable};
use crate::error::{check_dim, Error, Result};
use crate::logspace::{log_sum_exp, LogSumExp};
use crate::potentials::{dot, PotentialPair};
use crate::report::CheckReport;
use crate::tolerances::INTERIOR_MARGIN;

/// Normalization slack for log-weights.
const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability measure on `(1/k)Z^m`, stored as integer support `α` and log-weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeMeasure {
    level: u32,
    support: Vec<Vec<i64>>,
    logw: Vec<f64>,
}

impl LatticeMeasure {
    /// Requires the log-weights to be normalized to within `1e-12`.
    pub fn new(level: u32, support: Vec<Vec<i64>>, logw: Vec<f64>) -> Result<Self> {
        let mu = Self::from_unnormalized(level, support, logw.clone())?;
        let lse = log_sum_exp(logw);
        if lse.abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!(
                "weights are not normalized (log total {lse:e})"
            )));
        }
        Ok(mu)
    }

    /// Normalizes arbitrary finite-mass log-weights.
    pub fn from_unnormalized(level: u32, support: Vec<Vec<i64>>, logw: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != logw.len() {
            return Err(Error::InvalidParameter(
                "support and weights must be non-empty and aligned".into(),
            ));
        }
        let m = support[0].len();
        let mut seen = std::collections::HashSet::new();
        for a in &support {
            check_dim(m, a.len())?;
            if !seen.insert(a.clone()) {
                return Err(Error::InvalidParameter(format!("duplicate atom {a:?}")));
            }
        }
        let lse = log_sum_exp(logw.iter().copied());
        if !lse.is_finite() {
            return Err(Error::InvalidParameter("measure has no finite mass".into()));
        }
        Ok(Self {
            level,
            support,
            logw: logw.iter().map(|v| v - lse).collect(),
        })
    }

    /// `δ_0` at level 0, the unit for convolution.
    pub fn delta0(m: usize) -> Self {
        Self {
            level: 0,
            support: vec![vec![0; m]],
            logw: vec![0.0],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.logw
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logw.iter().map(|v| v.exp()).collect()
    }

    /// Atom locations `α/k` (`α` itself at level 0).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let k = self.level.max(1) as f64;
        self.support
            .iter()
            .map(|a| a.iter().map(|&v| v as f64 / k).collect())
            .collect()
    }

    pub fn probability_of(&self, alpha: &[i64]) -> f64 {
        self.support
            .iter()
            .position(|a| a == alpha)
            .map(|i| self.logw[i].exp())
            .unwrap_or(0.0)
    }

    /// Shannon entropy `−Σ p log p`.
    pub fn entropy(&self) -> f64 {
        -self
            .logw
            .iter()
            .filter(|v| v.is_finite())
            .map(|&v| v.exp() * v)
            .sum::<f64>()
    }

    /// Mean and covariance of the atom locations.
    pub fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.dim();
        let pts = self.points();
        let p = self.probabilities();
        let mut mean = vec![0.0; m];
        for (x, w) in pts.iter().zip(&p) {
            for i in 0..m {
                mean[i] += w * x[i];
            }
        }
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for (x, w) in pts.iter().zip(&p) {
            for i in 0..m {
                for j in 0..m {
                    cov[(i, j)] += w * (x[i] - mean[i]) * (x[j] - mean[j]);
                }
            }
        }
        (mean, cov)
    }

    /// Expectation of `f` over the atoms.
    pub fn expect<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.points()
            .iter()
            .zip(&self.logw)
            .map(|(x, lw)| f(x) * lw.exp())
            .sum()
    }

    /// Law of the sum of independent draws; levels add.
    pub fn convolve(&self, other: &LatticeMeasure) -> Result<LatticeMeasure> {
        check_dim(self.dim(), other.dim())?;
        let mut acc: BTreeMap<Vec<i64>, LogSumExp> = BTreeMap::new();
        for (a, wa) in self.support.iter().zip(&self.logw) {
            for (b, wb) in other.support.iter().zip(&other.logw) {
                let s: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                acc.entry(s).or_default().add(wa + wb);
            }
        }
        let (support, logw) = acc.into_iter().map(|(a, l)| (a, l.value())).unzip();
        LatticeMeasure::from_unnormalized(self.level + other.level, support, logw)
    }

    /// `μ^{*k}` by repeated convolution; `μ^{*0} = δ_0`.
    pub fn convolution_power(&self, k: u32) -> Result<LatticeMeasure> {
        let mut out = LatticeMeasure::delta0(self.dim());
        for _ in 0..k {
            out = out.convolve(self)?;
        }
        Ok(out)
    }

    /// Largest atomwise probability difference over the union of supports.
    pub fn max_abs_difference(&self, other: &LatticeMeasure) -> f64 {
        let mut all: BTreeMap<&Vec<i64>, (f64, f64)> = BTreeMap::new();
        for (a, w) in self.support.iter().zip(&self.logw) {
            all.entry(a).or_default().0 = w.exp();
        }
        for (a, w) in other.support.iter().zip(&other.logw) {
            all.entry(a).or_default().1 = w.exp();
        }
        all.values().fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
    }

    /// CSV with columns `alpha_1, …, alpha_m, weight`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 1..=self.dim() {
            let _ = write!(s, "alpha_{i},");
        }
        s.push_str("weight\n");
        for (a, lw) in self.support.iter().zip(&self.logw) {
            for v in a {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{:e}", lw.exp());
        }
        s
    }

    pub fn from_csv(text: &str, level: u32) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Serialization("empty CSV".into()))?;
        let m = header.split(',').count().saturating_sub(1);
        let mut support = Vec::new();
        let mut logw = Vec::new();
        for line in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != m + 1 {
                return Err(Error::Serialization(format!("bad CSV row `{line}`")));
            }
            let a = cols[..m]
                .iter()
                .map(|c| c.parse::<i64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Serialization(e.to_string()))?;
            let w: f64 = cols[m]
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::Serialization(e.to_string()))?;
            support.push(a);
            logw.push(w.ln());
        }
        Self::from_unnormalized(level, support, logw)
    }
}

/// `μ_k^x`: weights `P_{h^k}(α, z) / Π_{h^k}(z)` with `μ(z) = x`.
pub fn bergman_measure(pair: &PotentialPair, table: &NormingTable, x: &[f64]) -> Result<LatticeMeasure> {
    let lw = log_weights(pair, table, x)?;
    LatticeMeasure::from_unnormalized(table.level(), table.alphas().to_vec(), lw)
}

/// Bergman measure from the boundary-safe form of the weights; `x` may lie on
/// `∂P` for log-form potentials.
fn bergman_measure_closed(pair: &PotentialPair, table: &NormingTable, x: &[f64]) -> Result<LatticeMeasure> {
    let k = table.level();
    let lw = table
        .alphas()
        .iter()
        .zip(table.log_q())
        .map(|(a, lq)| {
            let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            Ok(pair.log_norming_integrand(&af, k, x)? - lq)
        })
        .collect::<Result<Vec<_>>>()?;
    LatticeMeasure::from_unnormalized(k, table.alphas().to_vec(), lw)
}

/// Checks `μ_k^x = (μ_1^x)^{*k}` atomwise for tables at levels `1..=K`.
pub fn convolution_power_check(
    pair: &PotentialPair,
    tables: &[NormingTable],
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<CheckReport> {
    let t1 = tables
        .iter()
        .find(|t| t.level() == 1)
        .ok_or_else(|| Error::InvalidParameter("a level-1 table is required".into()))?;
    let mut report = CheckReport::new(
        "convolution",
        &serde_json::json!({
            "manifold": pair.to_spec(),
            "levels": tables.iter().map(|t| t.level()).collect::<Vec<_>>(),
            "grid": grid,
            "tables": tables.iter().map(|t| t.to_data()).collect::<Vec<_>>(),
        }),
    );
    report.tolerance("convolution", tol);
    let base: Vec<LatticeMeasure> = grid
        .iter()
        .map(|x| bergman_measure(pair, t1, x))
        .collect::<Result<_>>()?;
    let devs: Vec<(u32, f64)> = tables
        .par_iter()
        .map(|t| {
            let mut worst = 0.0f64;
            for (x, mu1) in grid.iter().zip(&base) {
                let mk = bergman_measure(pair, t, x)?;
                let pw = mu1.convolution_power(t.level())?;
                worst = worst.max(mk.max_abs_difference(&pw));
            }
            Ok((t.level(), worst))
        })
        .collect::<Result<_>>()?;
    let mut overall = 0.0f64;
    for (k, d) in devs {
        report.residual(&format!("max_deviation_k{k}"), d, tol);
        overall = overall.max(d);
    }
    report.info("max_deviation", overall);
    report.finish_with("convolution sequence", "not a convolution sequence");
    Ok(report)
}

/// `I(x) = u(x) − ⟨x, ρ_0⟩ + φ(ρ_0)` with `∇φ(ρ_0) = x_0`.
#[derive(Debug, Clone)]
pub struct RateFunction {
    pair: PotentialPair,
    x0: Vec<f64>,
    rho0: Vec<f64>,
    phi0: f64,
}

pub fn rate_function(pair: &PotentialPair, x0: &[f64]) -> Result<RateFunction> {
    let rho0 = pair.inverse_moment_map(x0)?;
    let phi0 = pair.phi(&rho0)?;
    Ok(RateFunction {
        pair: pair.clone(),
        x0: x0.to_vec(),
        rho0,
        phi0,
    })
}

impl RateFunction {
    pub fn base_point(&self) -> &[f64] {
        &self.x0
    }

    /// Defined on the closed polytope for log-form potentials; faces other than
    /// the interior are otherwise out of domain.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if self.pair.polytope().min_facet_value(x)? < -1e-12 {
            return Err(Error::OutOfDomain(x.to_vec()));
        }
        let u = self.pair.u(x).map_err(|_| Error::OutOfDomain(x.to_vec()))?;
        Ok(u - dot(x, &self.rho0) + self.phi0)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .pair
            .grad_u(x)?
            .iter()
            .zip(&self.rho0)
            .map(|(g, r)| g - r)
            .collect())
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.pair.hess_u(x)
    }
}

/// `max_α |(1/k) log μ_k^{x0}(α) + I^{x0}(α/k)|` over interior `α` with `I ≤ 1`.
pub fn ldp_residual(pair: &PotentialPair, table: &NormingTable, x0: &[f64]) -> Result<f64> {
    let k = table.level();
    if k == 0 {
        return Err(Error::InvalidParameter("level must be positive".into()));
    }
    let kf = k as f64;
    let mu = bergman_measure(pair, table, x0)?;
    let rate = rate_function(pair, x0)?;
    let p = pair.polytope();
    let mut worst = 0.0f64;
    for (a, lw) in mu.support().iter().zip(mu.log_weights()) {
        let y: Vec<f64> = a.iter().map(|&v| v as f64 / kf).collect();
        if p.min_facet_value(&y)? < INTERIOR_MARGIN {
            continue;
        }
        let i = rate.value(&y)?;
        if i > 1.0 {
            continue;
        }
        worst = worst.max((lw / kf + i).abs());
    }
    Ok(worst)
}

/// `B_k f(x) = ∫ f dμ_k^x`.
pub fn bernstein<F: Fn(&[f64]) -> f64>(
    pair: &PotentialPair,
    table: &NormingTable,
    f: F,
    x: &[f64],
) -> Result<f64> {
    Ok(bergman_measure(pair, table, x)?.expect(f))
}

/// Transition matrix `P^{(N)}`: row `β` is `μ_N` at the state `x_β`, over the
/// lattice points of `NP` in table order. States may sit on `∂P` for
/// log-form potentials.
pub fn wright_fisher_matrix(
    pair: &PotentialPair,
    table: &NormingTable,
    states: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    states
        .iter()
        .map(|x| {
            let mu = if table.level() == 0 {
                LatticeMeasure::from_unnormalized(0, table.alphas().to_vec(), vec![0.0])?
            } else if pair.polytope().min_facet_value(x)? >= INTERIOR_MARGIN {
                bergman_measure(pair, table, x)?
            } else {
                bergman_measure_closed(pair, table, x)?
            };
            Ok(mu.probabilities())
        })
        .collect()
}

/// States `α/N` for every lattice point of `NP`.
pub fn lattice_states(table: &NormingTable) -> Vec<Vec<f64>> {
    let n = table.level().max(1) as f64;
    table
        .alphas()
        .iter()
        .map(|a| a.iter().map(|&v| v as f64 / n).collect())
        .collect()
}
