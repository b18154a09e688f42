//! Entropy asymptotics, maximal-entropy points, Kähler–Einstein diagnostics,
//! the Mabuchi functional and the Gaussian differential entropy.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bergman::{default_options, NormingTable};
use crate::error::{check_dim, Error, Result};
use crate::measures::bergman_measure;
use crate::polytope::SurfaceMeasure;
use crate::potentials::{dot, finite_difference_jacobian, log_det_spd, PotentialPair};
use crate::quadrature::{integrate_adaptive, integrate_graded, AdaptiveOptions, GradedOptions};
use crate::report::CheckReport;
use crate::tolerances::{FD_STEP, KAHLER_EINSTEIN};

/// `(m/2) log(2πek) − L(x)`.
pub fn asymptotic_entropy(pair: &PotentialPair, x: &[f64], k: u32) -> Result<f64> {
    let m = pair.dim() as f64;
    let l = pair.curvature_scalar_l(x)?;
    Ok(0.5 * m * (2.0 * std::f64::consts::PI * std::f64::consts::E * k as f64).ln() - l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub k: u32,
    pub h_exact: f64,
    pub h_asym: f64,
    pub diff: f64,
    /// `diff / diff_prev` against the previous row.
    pub ratio: Option<f64>,
}

/// Exact entropy of `μ_k^x` against the asymptotic formula, one row per table.
pub fn entropy_error_curve(
    pair: &PotentialPair,
    tables: &[NormingTable],
    x: &[f64],
) -> Result<Vec<EntropyRow>> {
    let mut rows = tables
        .par_iter()
        .map(|t| {
            let h_exact = bergman_measure(pair, t, x)?.entropy();
            let h_asym = asymptotic_entropy(pair, x, t.level())?;
            Ok(EntropyRow {
                k: t.level(),
                h_exact,
                h_asym,
                diff: h_exact - h_asym,
                ratio: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 1..rows.len() {
        rows[i].ratio = Some(rows[i].diff / rows[i - 1].diff);
    }
    Ok(rows)
}

/// `½ log((2πke)^m Π p_j) + (3(m+1) − 2 − Σ 1/p_j) / (12k)` for `p` of length `m+1`.
pub fn multinomial_refinement(p: &[f64], k: u32) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::DegenerateProbabilities("need at least two outcomes".into()));
    }
    if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateProbabilities(format!("{p:?} is not strictly positive")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::DegenerateProbabilities(format!("{p:?} sums to {total}")));
    }
    let m = (p.len() - 1) as f64;
    let kf = k as f64;
    let lead = 0.5
        * (m * (2.0 * std::f64::consts::PI * kf * std::f64::consts::E).ln()
            + p.iter().map(|v| v.ln()).sum::<f64>());
    let inv: f64 = p.iter().map(|v| 1.0 / v).sum();
    Ok(lead + (3.0 * (m + 1.0) - 2.0 - inv) / (12.0 * kf))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntropyPoint {
    pub x: Vec<f64>,
    pub l: f64,
    /// `∇²L ≻ 0` at the minimizer and at every Newton iterate.
    pub unique: bool,
    pub iterations: usize,
}

/// Minimizes `L` over the open polytope by damped Newton from the center of mass.
pub fn max_entropy_point(pair: &PotentialPair) -> Result<MaxEntropyPoint> {
    let l = |x: &[f64]| pair.curvature_scalar_l(x);
    let grad = |x: &[f64]| -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() {
            let h = FD_STEP * x[i].abs().max(1.0);
            let mut f = x.to_vec();
            let mut b = x.to_vec();
            f[i] += h;
            b[i] -= h;
            g[i] = (l(&f)? - l(&b)?) / (2.0 * h);
        }
        Ok(g)
    };
    let mut x = pair.polytope().center_of_mass();
    let mut lx = l(&x)?;
    let mut unique = true;
    let mut path = vec![x.clone()];
    for it in 0..100 {
        let g = grad(&x)?;
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let h = finite_difference_jacobian(&grad, &x, Some(1e-4))?;
        let pd = h.clone().cholesky();
        if pd.is_none() {
            unique = false;
        }
        // FD gradient noise is about ε·|L|/h ≈ 1e-11
        if gnorm < 1e-9 {
            return Ok(MaxEntropyPoint {
                x,
                l: lx,
                unique,
                iterations: it,
            });
        }
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
        let d: Vec<f64> = match pd {
            Some(c) => c.solve(&rhs).iter().copied().collect(),
            None => rhs.iter().copied().collect(),
        };
        let slope = dot(&g, &d);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Ok(lc) = l(&cand) {
                if lc <= lx + 1e-4 * t * slope + 1e-15 * lx.abs() {
                    x = cand;
                    lx = lc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        path.push(x.clone());
        let step = t * d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !moved || step < 1e-12 * (1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            return Ok(MaxEntropyPoint {
                x,
                l: lx,
                unique,
                iterations: it + 1,
            });
        }
    }
    Err(Error::OptimizerNonConvergence {
        iterations: 100,
        last: path.pop().unwrap_or_default(),
    })
}

/// Fitted constants of `−log det ∇²φ = aφ + ⟨b, ρ⟩ + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeFit {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
    /// Max absolute residual over the grid.
    pub residual: f64,
}

/// Least-squares fit of the Kähler–Einstein gauge equation on a `ρ`-grid;
/// `a` is fitted too unless given.
pub fn fit_ke_constants(pair: &PotentialPair, grid: &[Vec<f64>], a: Option<f64>) -> Result<KeFit> {
    let m = pair.dim();
    if grid.len() < m + 2 {
        return Err(Error::InvalidParameter("grid too small for the fit".into()));
    }
    let ncols = m + 1 + usize::from(a.is_none());
    let mut design = DMatrix::<f64>::zeros(grid.len(), ncols);
    let mut rhs = DVector::<f64>::zeros(grid.len());
    let mut phis = Vec::with_capacity(grid.len());
    let mut lhs = Vec::with_capacity(grid.len());
    for (i, rho) in grid.iter().enumerate() {
        check_dim(m, rho.len())?;
        let phi = pair.phi(rho)?;
        let y = -pair.log_det_hess_phi(rho)?;
        phis.push(phi);
        lhs.push(y);
        for j in 0..m {
            design[(i, j)] = rho[j];
        }
        design[(i, m)] = 1.0;
        match a {
            Some(av) => rhs[i] = y - av * phi,
            None => {
                design[(i, m + 1)] = phi;
                rhs[i] = y;
            }
        }
    }
    let sol = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let b: Vec<f64> = sol.iter().take(m).copied().collect();
    let c = sol[m];
    let a = a.unwrap_or_else(|| sol[m + 1]);
    let residual = grid
        .iter()
        .zip(phis.iter().zip(&lhs))
        .map(|(rho, (phi, y))| (y - a * phi - dot(&b, rho) - c).abs())
        .fold(0.0f64, f64::max);
    Ok(KeFit { a, b, c, residual })
}

/// Cube grid `[−r, r]^m` with `n` points per axis.
pub fn rho_grid(m: usize, r: f64, n: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..n)
        .map(|i| -r + 2.0 * r * i as f64 / (n - 1).max(1) as f64)
        .collect();
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Checks the Kähler–Einstein gauge equation for the given `a` and, when it
/// holds, locates the critical point `−b/a` against the maximal-entropy point
/// and the center of mass.
pub fn ke_center_check(pair: &PotentialPair, a: f64, grid: &[Vec<f64>], tol: f64) -> Result<CheckReport> {
    let fit = fit_ke_constants(pair, grid, Some(a))?;
    let mut report = CheckReport::new(
        "ke-center",
        &serde_json::json!({"manifold": pair.to_spec(), "a": a, "grid": grid}),
    );
    report.tolerance("kahler_einstein", KAHLER_EINSTEIN);
    report.tolerance("center", tol);
    report.info("fit", &fit);
    report.residual("ke_residual", fit.residual, KAHLER_EINSTEIN);
    if fit.residual > KAHLER_EINSTEIN {
        report.finish_with("", "not Kähler–Einstein within tolerance");
        return Ok(report);
    }
    // 2L(x) = ⟨ax + b, ∇u(x)⟩ − a u(x) + c
    let mut sym = 0.0f64;
    for rho in grid {
        let x = pair.moment_map(rho)?;
        if pair.polytope().min_facet_value(&x)? < 1e-4 {
            continue;
        }
        let gu = pair.grad_u(&x)?;
        let ax_b: Vec<f64> = x.iter().zip(&fit.b).map(|(xi, bi)| a * xi + bi).collect();
        let rhs = dot(&ax_b, &gu) - a * pair.u(&x)? + fit.c;
        let lhs = 2.0 * pair.curvature_scalar_l(&x)?;
        sym = sym.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    report.residual("symplectic_residual", sym, KAHLER_EINSTEIN);
    let crit: Vec<f64> = fit.b.iter().map(|b| -b / a).collect();
    let xstar = max_entropy_point(pair)?;
    let com = pair.polytope().center_of_mass();
    report.info("critical_point", &crit);
    report.info("max_entropy_point", &xstar.x);
    report.info("center_of_mass", &com);
    report.residual("critical_vs_max_entropy", dist(&crit, &xstar.x), tol);
    report.residual("max_entropy_vs_center_of_mass", dist(&xstar.x, &com), tol);
    report.finish_with(
        "Kähler–Einstein; maximal-entropy point at the center of mass",
        "Kähler–Einstein, but the critical point is off the center of mass",
    );
    Ok(report)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabuchiValue {
    pub a: f64,
    pub l_integral: f64,
    pub boundary_term: f64,
    pub u_integral: f64,
    pub value: f64,
}

/// `F_a(u) = ∫_P L dx + ∫_{∂P} u dσ − a ∫_P u dx`; `a` defaults to
/// `Vol(∂P, dσ) / Vol(P)`.
pub fn mabuchi_functional(
    pair: &PotentialPair,
    a: Option<f64>,
    measure: SurfaceMeasure,
) -> Result<MabuchiValue> {
    let p = pair.polytope();
    let a = a.unwrap_or_else(|| p.boundary_volume(measure) / p.volume());
    let opts = GradedOptions::default();
    let l_integral = integrate_graded(
        p.cells(),
        &|x: &[f64]| Ok(0.5 * log_det_spd(&pair.hess_u(x)?)?),
        &opts,
    )?;
    let u_integral = integrate_graded(p.cells(), &|x: &[f64]| pair.u(x), &opts)?;
    let boundary_term = p.boundary_integral(|x| pair.u(x).unwrap_or(f64::NAN), measure)?;
    Ok(MabuchiValue {
        a,
        l_integral,
        boundary_term,
        u_integral,
        value: l_integral + boundary_term - a * u_integral,
    })
}

/// `H(γ_k) = −Σ_α log Q_k(α)`.
pub fn gaussian_entropy(table: &NormingTable) -> f64 {
    -table.log_q().iter().sum::<f64>()
}

/// Central difference in `t` of `−Σ log Q_k` along `u_t = u − t η̄`, where
/// `η̄` is `η` minus its Lebesgue mean over `P`; to first order this is the
/// family `φ + t η∘μ`.
pub fn balanced_criticality<F>(pair: &PotentialPair, k: u32, eta: F, h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("step must be positive".into()));
    }
    let p = pair.polytope();
    let mean_opts = AdaptiveOptions {
        rtol: 1e-12,
        atol: 1e-15,
        ..AdaptiveOptions::default()
    };
    let mean = integrate_adaptive(&p.simplices(), &|x: &[f64]| Ok(eta(x)), &mean_opts)?.value / p.volume();
    let eta_c = |x: &[f64]| eta(x) - mean;
    let grad_eta = |x: &[f64]| -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let s = FD_STEP * x[i].abs().max(1.0);
                let mut f = x.to_vec();
                let mut b = x.to_vec();
                f[i] += s;
                b[i] -= s;
                (eta(&f) - eta(&b)) / (2.0 * s)
            })
            .collect()
    };
    let alphas = p.lattice_points(k).points;
    let kf = k as f64;
    let opts = default_options(pair.dim());
    let entropy_at = |t: f64| -> Result<f64> {
        let logs = alphas
            .par_iter()
            .map(|alpha| {
                let a: Vec<f64> = alpha.iter().map(|&v| v as f64).collect();
                let pert = |x: &[f64]| -> f64 {
                    let ge = grad_eta(x);
                    let lin: f64 = a
                        .iter()
                        .zip(x)
                        .zip(&ge)
                        .map(|((ai, xi), gi)| (ai / kf - xi) * gi)
                        .sum();
                    -t * kf * (eta_c(x) + lin)
                };
                let shift = pair.log_norming_integrand(&a, k, p.barycenter())?;
                let f = |x: &[f64]| -> Result<f64> {
                    Ok((pair.log_norming_integrand(&a, k, x)? + pert(x) - shift).exp())
                };
                let est = integrate_adaptive(&p.simplices(), &f, &opts)?;
                Ok(shift + est.value.ln())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(-logs.iter().sum::<f64>())
    };
    Ok((entropy_at(h)? - entropy_at(-h)?) / (2.0 * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fs_cp1_asymptotic_value() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let v = asymptotic_entropy(&p, &[0.5], 1024).unwrap();
        let expect = 0.5 * (512.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((v - expect).abs() < 1e-13);
    }

    #[test]
    fn symmetric_point_has_no_correction() {
        let k = 37;
        let v = multinomial_refinement(&[0.5, 0.5], k).unwrap();
        let lead = 0.5 * (2.0 * std::f64::consts::PI * k as f64 * std::f64::consts::E / 4.0).ln();
        assert!((v - lead).abs() < 1e-14);
        assert!(multinomial_refinement(&[0.0, 1.0], 3).is_err());
        assert!(multinomial_refinement(&[0.3, 0.3], 3).is_err());
    }

    #[test]
    fn max_entropy_fs_cp1() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let r = max_entropy_point(&p).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-9);
        assert!(r.unique);
    }

    #[test]
    fn gaussian_entropy_constant_shift() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let t = NormingTable::closed_form(&p, 4).unwrap();
        let c = 0.7;
        let ts = NormingTable::closed_form(&p.apply_gauge(&crate::GaugeShift::constant(1, c)), 4).unwrap();
        let d = gaussian_entropy(&ts) - gaussian_entropy(&t);
        assert!((d - 4.0 * c * 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_perturbation_has_zero_derivative() {
        let p = PotentialPair::fubini_study(1).unwrap();
        assert_eq!(balanced_criticality(&p, 3, |_| 0.0, 1e-3).unwrap(), 0.0);
    }
}
