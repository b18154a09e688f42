//! Norming constants, density of states, Bergman weights and the lattice-path
//! partition function.
//!
//! Everything is kept in the log domain. With `ρ = ∇u(x)` the norming constant
//! of the monomial `z^α` at level `k` is
//!
//! ```text
//! Q_k(α) = ∫_P exp(⟨α, ρ⟩ − kφ(ρ)) dx = ∫_P exp(k(u(x) + ⟨α/k − x, ∇u(x)⟩)) dx
//! ```
//!
//! (the torus angles are integrated out, so no `(2π)^m` factor appears).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::logspace::{log_sum_exp, LogSumExp};
use crate::polytope::DelzantPolytope;
use crate::potentials::{dot, dot_i, log_det_spd, GaugeShift, PotentialKind, PotentialPair};
use crate::quadrature::{integrate_adaptive, AdaptiveOptions};
use crate::report::CheckReport;
use crate::tolerances::{INTERIOR_MARGIN, PARTITION_LEVEL_CAP, QUADRATURE_MAX_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMethod {
    Quadrature,
    ClosedFormOracle,
    /// Hand-built table used as test data.
    Fixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub alpha: Vec<i64>,
    #[serde(rename = "logQ")]
    pub log_q: f64,
}

/// Serialized norming table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormingTableData {
    pub k: u32,
    pub entries: Vec<TableEntry>,
    pub method: TableMethod,
    pub gauge: GaugeShift,
}

/// `log Q_k(α)` for every lattice point of `kP`, in lexicographic order.
#[derive(Debug, Clone)]
pub struct NormingTable {
    level: u32,
    polytope: DelzantPolytope,
    alphas: Vec<Vec<i64>>,
    log_q: Vec<f64>,
    method: TableMethod,
    gauge: GaugeShift,
    index: HashMap<Vec<i64>, usize>,
}

impl NormingTable {
    fn assemble(
        polytope: DelzantPolytope,
        level: u32,
        alphas: Vec<Vec<i64>>,
        log_q: Vec<f64>,
        method: TableMethod,
        gauge: GaugeShift,
    ) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::EmptyTable);
        }
        if let Some(i) = log_q.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite log Q at {:?}",
                alphas[i]
            )));
        }
        let index = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Ok(Self {
            level,
            polytope,
            alphas,
            log_q,
            method,
            gauge,
            index,
        })
    }

    /// Builds a table from explicit values on the lattice points of `kP`.
    pub fn from_values<F>(
        polytope: DelzantPolytope,
        k: u32,
        method: TableMethod,
        gauge: GaugeShift,
        f: F,
    ) -> Result<Self>
    where
        F: Fn(&[i64]) -> f64,
    {
        let alphas = polytope.lattice_points(k).points;
        let log_q = alphas.iter().map(|a| f(a)).collect();
        Self::assemble(polytope, k, alphas, log_q, method, gauge)
    }

    /// Norming constants by adaptive quadrature, in parallel over `α`.
    pub fn quadrature(pair: &PotentialPair, k: u32) -> Result<Self> {
        let alphas = pair.polytope().lattice_points(k).points;
        let log_q = alphas
            .par_iter()
            .map(|a| norming_constant(pair, k, a))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(
            pair.polytope().clone(),
            k,
            alphas,
            log_q,
            TableMethod::Quadrature,
            pair.gauge().clone(),
        )
    }

    /// Exact norming constants for the Fubini–Study and round-sphere pairs.
    pub fn closed_form(pair: &PotentialPair, k: u32) -> Result<Self> {
        let alphas = pair.polytope().lattice_points(k).points;
        let log_q = alphas
            .iter()
            .map(|a| closed_form_log_q(pair, k, a))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(
            pair.polytope().clone(),
            k,
            alphas,
            log_q,
            TableMethod::ClosedFormOracle,
            pair.gauge().clone(),
        )
    }

    /// Closed form where available, quadrature otherwise.
    pub fn best_available(pair: &PotentialPair, k: u32) -> Result<Self> {
        match pair.kind() {
            PotentialKind::FubiniStudy { .. } | PotentialKind::RoundSphere { .. } => {
                Self::closed_form(pair, k)
            }
            _ => Self::quadrature(pair, k),
        }
    }

    pub fn from_data(data: NormingTableData, polytope: DelzantPolytope) -> Result<Self> {
        data.gauge.validate(polytope.dim())?;
        let expected = polytope.lattice_points(data.k).points;
        let mut given: HashMap<Vec<i64>, f64> = HashMap::new();
        for e in &data.entries {
            check_dim(polytope.dim(), e.alpha.len())?;
            if given.insert(e.alpha.clone(), e.log_q).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate table entry {:?}",
                    e.alpha
                )));
            }
        }
        if given.len() != expected.len() {
            return Err(Error::InvalidParameter(format!(
                "table has {} entries, level {} needs {}",
                given.len(),
                data.k,
                expected.len()
            )));
        }
        let log_q = expected
            .iter()
            .map(|a| given.get(a).copied().ok_or_else(|| Error::MissingLatticePoint(a.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(polytope, data.k, expected, log_q, data.method, data.gauge)
    }

    pub fn to_data(&self) -> NormingTableData {
        NormingTableData {
            k: self.level,
            entries: self
                .alphas
                .iter()
                .zip(&self.log_q)
                .map(|(a, &q)| TableEntry {
                    alpha: a.clone(),
                    log_q: q,
                })
                .collect(),
            method: self.method,
            gauge: self.gauge.clone(),
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn polytope(&self) -> &DelzantPolytope {
        &self.polytope
    }

    pub fn alphas(&self) -> &[Vec<i64>] {
        &self.alphas
    }

    pub fn log_q(&self) -> &[f64] {
        &self.log_q
    }

    pub fn method(&self) -> TableMethod {
        self.method
    }

    pub fn gauge(&self) -> &GaugeShift {
        &self.gauge
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn get(&self, alpha: &[i64]) -> Result<f64> {
        self.index
            .get(alpha)
            .map(|&i| self.log_q[i])
            .ok_or_else(|| Error::MissingLatticePoint(alpha.to_vec()))
    }

    fn check_pair(&self, pair: &PotentialPair) -> Result<()> {
        check_dim(pair.dim(), self.polytope.dim())?;
        if &self.gauge != pair.gauge() {
            return Err(Error::GaugeMismatch);
        }
        Ok(())
    }
}

/// `log Q_k(α)` by adaptive quadrature over the fan of `P`.
pub fn norming_constant(pair: &PotentialPair, k: u32, alpha: &[i64]) -> Result<f64> {
    norming_constant_with(pair, k, alpha, &default_options(pair.dim()))
}

pub fn default_options(m: usize) -> AdaptiveOptions {
    AdaptiveOptions {
        max_depth: QUADRATURE_MAX_DEPTH * m.max(1),
        ..AdaptiveOptions::default()
    }
}

pub fn norming_constant_with(
    pair: &PotentialPair,
    k: u32,
    alpha: &[i64],
    opts: &AdaptiveOptions,
) -> Result<f64> {
    let p = pair.polytope();
    check_dim(p.dim(), alpha.len())?;
    if !p.contains_dilated_lattice_point(alpha, k) {
        return Err(Error::MissingLatticePoint(alpha.to_vec()));
    }
    let a: Vec<f64> = alpha.iter().map(|&v| v as f64).collect();
    // The exponent peaks at x = α/k; pull the sample slightly inside so that
    // every potential kind can evaluate it.
    let kf = k.max(1) as f64;
    let peak: Vec<f64> = a
        .iter()
        .zip(p.barycenter())
        .map(|(ai, c)| ai / kf + 1e-9 * (c - ai / kf))
        .collect();
    let mut shift = pair.log_norming_integrand(&a, k, &peak)?;
    for v in p.vertices().iter().chain(std::iter::once(&p.barycenter().to_vec())) {
        let inner: Vec<f64> = v
            .iter()
            .zip(p.barycenter())
            .map(|(vi, c)| vi + 1e-3 * (c - vi))
            .collect();
        shift = shift.max(pair.log_norming_integrand(&a, k, &inner)?);
    }
    let f = |x: &[f64]| -> Result<f64> { Ok((pair.log_norming_integrand(&a, k, x)? - shift).exp()) };
    let est = integrate_adaptive(&p.simplices(), &f, opts)?;
    if !(est.value > 0.0) {
        return Err(Error::QuadratureNonConvergence {
            estimate: est.value,
            error: est.error,
        });
    }
    Ok(shift + est.value.ln())
}

/// Exact `log Q_k(α)` for the Fubini–Study and round-sphere families in any gauge.
pub fn closed_form_log_q(pair: &PotentialPair, k: u32, alpha: &[i64]) -> Result<f64> {
    check_dim(pair.dim(), alpha.len())?;
    let g = pair.gauge();
    let kf = k as f64;
    let ap: Vec<f64> = alpha
        .iter()
        .zip(&g.b)
        .map(|(&a, b)| a as f64 - kf * b)
        .collect();
    let base = match pair.kind() {
        PotentialKind::FubiniStudy { m } => {
            let rest = kf - ap.iter().sum::<f64>();
            ap.iter().map(|&v| ln_gamma(v + 1.0)).sum::<f64>() + ln_gamma(rest + 1.0)
                - ln_gamma(kf + *m as f64 + 1.0)
        }
        PotentialKind::RoundSphere { r2 } => {
            let pa = 0.5 * (kf * r2 + ap[0]);
            let pb = 0.5 * (kf * r2 - ap[0]);
            let ln_beta = ln_gamma(pa + 1.0) + ln_gamma(pb + 1.0) - ln_gamma(pa + pb + 2.0);
            -kf * r2 * r2.ln() + (pa + pb + 1.0) * (2.0 * r2).ln() + ln_beta
        }
        _ => {
            return Err(Error::InvalidParameter(
                "no closed-form norming constants for this potential".into(),
            ))
        }
    };
    let kv: Vec<f64> = g.kv.iter().map(|&v| v as f64).collect();
    Ok(base + dot(&kv, &alpha.iter().map(|&v| v as f64).collect::<Vec<_>>()) - kf * g.c)
}

/// Leading Laplace term `log[(2π/k)^{m/2} det(∇²u(α/k))^{−1/2}] + k u(α/k)`.
pub fn norming_laplace(pair: &PotentialPair, k: u32, alpha: &[i64]) -> Result<f64> {
    check_dim(pair.dim(), alpha.len())?;
    let kf = k as f64;
    let x: Vec<f64> = alpha.iter().map(|&a| a as f64 / kf).collect();
    pair.polytope().require_interior(&x, INTERIOR_MARGIN)?;
    let m = pair.dim() as f64;
    Ok(0.5 * m * (2.0 * std::f64::consts::PI / kf).ln() - 0.5 * log_det_spd(&pair.hess_u(&x)?)?
        + kf * pair.u(&x)?)
}

/// Log-weights `⟨α, ρ_x⟩ − kφ(ρ_x) − log Q_k(α)` aligned with `table.alphas()`.
pub fn log_weights(pair: &PotentialPair, table: &NormingTable, x: &[f64]) -> Result<Vec<f64>> {
    table.check_pair(pair)?;
    let rho = pair.inverse_moment_map(x)?;
    log_weights_at_rho(pair, table, &rho)
}

pub(crate) fn log_weights_at_rho(
    pair: &PotentialPair,
    table: &NormingTable,
    rho: &[f64],
) -> Result<Vec<f64>> {
    let kphi = table.level as f64 * pair.phi(rho)?;
    Ok(table
        .alphas
        .iter()
        .zip(&table.log_q)
        .map(|(a, lq)| dot_i(a, rho) - kphi - lq)
        .collect())
}

/// `log Π_{h^k}` at the point with moment image `x`.
pub fn density_of_states(pair: &PotentialPair, table: &NormingTable, x: &[f64]) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(log_sum_exp(log_weights(pair, table, x)?))
}

/// `log P_{h^k}(α, z)` with `μ(z) = x`.
pub fn weight(pair: &PotentialPair, table: &NormingTable, alpha: &[i64], x: &[f64]) -> Result<f64> {
    table.check_pair(pair)?;
    let lq = table.get(alpha)?;
    let rho = pair.inverse_moment_map(x)?;
    Ok(dot_i(alpha, &rho) - table.level as f64 * pair.phi(&rho)? - lq)
}

/// `log 𝒫_j(α)` for all `j = 1..=k`: sums over compositions `β_1 + … + β_j = α`
/// of `Π 1/Q_1(β_i)`, by repeated exact convolution.
pub fn partition_tables(table1: &NormingTable, k: u32) -> Result<Vec<BTreeMap<Vec<i64>, f64>>> {
    if table1.level != 1 {
        return Err(Error::InvalidParameter(format!(
            "partition function needs a level-1 table, got level {}",
            table1.level
        )));
    }
    if k > PARTITION_LEVEL_CAP || table1.polytope.dim() > 2 {
        return Err(Error::LevelTooLarge {
            k,
            cap: PARTITION_LEVEL_CAP,
        });
    }
    let base: Vec<(Vec<i64>, f64)> = table1
        .alphas
        .iter()
        .zip(&table1.log_q)
        .map(|(a, q)| (a.clone(), -q))
        .collect();
    let mut out = Vec::with_capacity(k as usize);
    let mut cur: BTreeMap<Vec<i64>, f64> = base.iter().cloned().collect();
    out.push(cur.clone());
    for _ in 1..k {
        let mut next: BTreeMap<Vec<i64>, LogSumExp> = BTreeMap::new();
        for (a, va) in &cur {
            for (b, vb) in &base {
                let s: Vec<i64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                next.entry(s).or_default().add(va + vb);
            }
        }
        cur = next.into_iter().map(|(a, acc)| (a, acc.value())).collect();
        out.push(cur.clone());
    }
    Ok(out)
}

/// `log 𝒫_k(α)`.
pub fn partition_function(table1: &NormingTable, k: u32, alpha: &[i64]) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("level must be positive".into()));
    }
    let tabs = partition_tables(table1, k)?;
    tabs[k as usize - 1]
        .get(alpha)
        .copied()
        .ok_or_else(|| Error::MissingLatticePoint(alpha.to_vec()))
}

/// Relative variation `max/min − 1` of a family of log values.
pub fn log_spread(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo.is_finite() && hi.is_finite() {
        (hi - lo).exp_m1()
    } else {
        f64::NAN
    }
}

/// Balanced-metric diagnostics for tables at levels `1..=K`.
///
/// For each level reports the grid variation of `Π_k`, of `Π_k / Π_1^k`, and
/// the spread of `𝒫_k(α) Q_k(α)` over `α`. In the balanced case
/// `𝒫_k Q_k = Π_1^k / Π_k`, which is checked as well.
pub fn balanced_check(
    pair: &PotentialPair,
    tables: &[NormingTable],
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<CheckReport> {
    let levels: Vec<u32> = tables.iter().map(|t| t.level).collect();
    if tables.is_empty() || tables[0].level != 1 || levels.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidParameter(
            "balanced_check needs tables at consecutive levels 1..=K".into(),
        ));
    }
    for t in tables {
        t.check_pair(pair)?;
    }
    let k_max = *levels.last().unwrap();
    let partitions = partition_tables(&tables[0], k_max)?;

    let mut report = CheckReport::new(
        "balanced",
        &serde_json::json!({
            "manifold": pair.to_spec(),
            "levels": levels,
            "grid": grid,
            "tables": tables.iter().map(|t| t.to_data()).collect::<Vec<_>>(),
        }),
    );
    report.tolerance("balanced", tol);

    let log_pi: Vec<Vec<f64>> = tables
        .par_iter()
        .map(|t| {
            grid.iter()
                .map(|x| density_of_states(pair, t, x))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let pi1 = &log_pi[0];
    let m = pair.dim() as i32;
    let vol = pair.polytope().volume();
    let n1 = tables[0].len() as f64;
    let two_pi_m = (2.0 * std::f64::consts::PI).powi(m);
    for (t, lp) in tables.iter().zip(&log_pi) {
        let k = t.level;
        let kf = k as f64;
        let ratio: Vec<f64> = lp.iter().zip(pi1).map(|(a, b)| a - kf * b).collect();
        report.residual(&format!("dos_variation_k{k}"), log_spread(lp.iter().copied()), tol);
        report.residual(&format!("dos_ratio_variation_k{k}"), log_spread(ratio.iter().copied()), tol);

        let pq: Vec<f64> = t
            .alphas
            .iter()
            .zip(&t.log_q)
            .map(|(a, lq)| partitions[k as usize - 1].get(a).map(|p| p + lq).unwrap_or(f64::NAN))
            .collect();
        report.residual(&format!("pq_spread_k{k}"), log_spread(pq.iter().copied()), tol);
        let mean_pq = pq.iter().sum::<f64>() / pq.len() as f64;
        let mean_ratio = ratio.iter().sum::<f64>() / ratio.len().max(1) as f64;
        // 𝒫_k Q_k · Π_k / Π_1^k = 1
        report.residual(
            &format!("pq_dos_identity_k{k}"),
            (mean_pq + mean_ratio).exp_m1().abs(),
            tol,
        );
        let nk = t.len() as f64;
        report.info(
            &format!("k{k}"),
            serde_json::json!({
                "A_k": mean_ratio.exp(),
                "PQ": mean_pq.exp(),
                "A_k_from_counts": nk / vol * (vol / n1).powi(k as i32),
                "A_k_from_counts_2pi": nk / (two_pi_m * vol) * (two_pi_m * vol / n1).powi(k as i32),
            }),
        );
    }
    report.finish_with("balanced", "not balanced");
    Ok(report)
}

/// Level-1 Fubini–Study values at level 2, perturbed by `1 + 0.1 sin α`; the
/// resulting Bergman-sum potential is not balanced.
pub fn tampered_table() -> Result<NormingTable> {
    let fs = PotentialPair::fubini_study(1)?;
    let exact = NormingTable::closed_form(&fs, 2)?;
    NormingTable::from_values(
        DelzantPolytope::interval01(),
        2,
        TableMethod::Fixture,
        GaugeShift::identity(1),
        |a| exact.get(a).unwrap() + (0.1 * (a[0] as f64).sin()).ln_1p(),
    )
}

pub fn tampered_pair() -> Result<PotentialPair> {
    Ok(PotentialPair::bergman_sum(Arc::new(tampered_table()?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln_binom(k: u32, a: u32) -> f64 {
        ln_gamma(k as f64 + 1.0) - ln_gamma(a as f64 + 1.0) - ln_gamma((k - a) as f64 + 1.0)
    }

    #[test]
    fn fs_cp1_quadrature_ratios() {
        let p = PotentialPair::fubini_study(1).unwrap();
        for k in [1u32, 2, 5, 9] {
            let t = NormingTable::quadrature(&p, k).unwrap();
            let q0 = t.get(&[0]).unwrap();
            for a in 0..=k {
                let r = t.get(&[a as i64]).unwrap() - q0;
                assert!((r + ln_binom(k, a)).abs() < 1e-9, "k={k} a={a}");
            }
        }
    }

    #[test]
    fn closed_form_matches_quadrature_with_gauge() {
        let g = GaugeShift {
            c: 0.3,
            b: vec![-0.5],
            kv: vec![2],
        };
        for base in [PotentialPair::fubini_study(1).unwrap(), PotentialPair::round_sphere(1.0).unwrap()] {
            let p = base.apply_gauge(&g);
            for k in [2u32, 4] {
                let q = NormingTable::quadrature(&p, k).unwrap();
                let c = NormingTable::closed_form(&p, k).unwrap();
                assert_eq!(q.alphas(), c.alphas());
                for (a, b) in q.log_q().iter().zip(c.log_q()) {
                    assert!((a - b).abs() < 1e-7, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn partition_small_cases() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let t1 = NormingTable::closed_form(&p, 1).unwrap();
        let (q0, q1) = (t1.get(&[0]).unwrap(), t1.get(&[1]).unwrap());
        let p21 = partition_function(&t1, 2, &[1]).unwrap();
        assert!((p21 - (2f64.ln() - q0 - q1)).abs() < 1e-14);
        let p20 = partition_function(&t1, 2, &[0]).unwrap();
        assert!((p20 + 2.0 * q0).abs() < 1e-14);
        assert!(matches!(
            partition_function(&t1, 65, &[0]),
            Err(Error::LevelTooLarge { .. })
        ));
    }

    #[test]
    fn dos_is_flat_for_fs() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let t = NormingTable::closed_form(&p, 7).unwrap();
        for x in [0.1, 0.5, 0.93] {
            let v = density_of_states(&p, &t, &[x]).unwrap();
            assert!((v - 8f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_mismatch_is_reported() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let t = NormingTable::closed_form(&p, 2).unwrap();
        let shifted = p.apply_gauge(&GaugeShift::constant(1, 1.0));
        assert!(matches!(
            density_of_states(&shifted, &t, &[0.5]),
            Err(Error::GaugeMismatch)
        ));
    }

    #[test]
    fn table_json_round_trip() {
        let p = PotentialPair::fubini_study(2).unwrap();
        let t = NormingTable::closed_form(&p, 3).unwrap();
        let js = serde_json::to_string(&t.to_data()).unwrap();
        assert!(js.contains("\"logQ\""));
        let back: NormingTableData = serde_json::from_str(&js).unwrap();
        let t2 = NormingTable::from_data(back, p.polytope().clone()).unwrap();
        assert_eq!(t.log_q(), t2.log_q());
    }
}
