use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;
use torentropy::asymptotics::{
    balanced_criticality, entropy_error_curve, fit_ke_constants, gaussian_entropy, ke_center_check,
    max_entropy_point, rho_grid,
};
use torentropy::bergman::balanced_check;
use torentropy::measures::{bernstein, convolution_power_check};
use torentropy::{CheckReport, NormingTable, PotentialPair};

use crate::config::{Format, RunConfig};
use crate::CliError;

fn tables(pair: &PotentialPair, ks: impl IntoIterator<Item = u32>) -> Result<Vec<NormingTable>, CliError> {
    ks.into_iter()
        .map(|k| NormingTable::best_available(pair, k).map_err(CliError::from))
        .collect()
}

fn inputs(cfg: &RunConfig, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "manifold": cfg.pair.to_spec(),
        "k": cfg.ks,
        "x": cfg.xs,
        "tolerances": cfg.tol,
        "extra": extra,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_report(cfg: &RunConfig, report: &CheckReport) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(report).map_err(|e| CliError::input(e.to_string()))?;
    body.push('\n');
    write_file(&cfg.out, &format!("{}.report.json", report.name), &body)
}

/// Rows as CSV or as a JSON array, by `--format`.
fn write_table<R: Serialize>(
    cfg: &RunConfig,
    stem: &str,
    header: &[&str],
    rows: &[R],
    csv_row: impl Fn(&R) -> Vec<String>,
) -> Result<String, CliError> {
    let (name, body) = match cfg.format {
        Format::Csv => {
            let mut s = header.join(",");
            s.push('\n');
            for r in rows {
                s.push_str(&csv_row(r).join(","));
                s.push('\n');
            }
            (format!("{stem}.csv"), s)
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(rows).map_err(|e| CliError::input(e.to_string()))?;
            s.push('\n');
            (format!("{stem}.json"), s)
        }
    };
    write_file(&cfg.out, &name, &body)?;
    Ok(name)
}

fn write_plot(cfg: &RunConfig, table: &str, script: &str) -> Result<(), CliError> {
    if cfg.plot && cfg.format == Format::Csv {
        let stem = table.trim_end_matches(".csv");
        let body = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600\nset output '{stem}.png'\n{script}\n"
        );
        write_file(&cfg.out, &format!("{stem}.gp"), &body.replace("@TABLE@", table))?;
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn x_cols(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

#[derive(Serialize)]
struct EntropyOut {
    x: Vec<f64>,
    k: u32,
    h_exact: f64,
    h_asym: f64,
    diff: f64,
    ratio: Option<f64>,
}

pub fn entropy_table(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let tabs = tables(&cfg.pair, cfg.ks.iter().copied())?;
    let curves = cfg
        .xs
        .par_iter()
        .map(|x| entropy_error_curve(&cfg.pair, &tabs, x))
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = CheckReport::new("entropy-table", &inputs(cfg, serde_json::Value::Null));
    report.tolerance("entropy_gap", cfg.tol.entropy_gap);
    report.tolerance("entropy_rate", cfg.tol.entropy_rate);
    let mut rows = Vec::new();
    for (i, (x, curve)) in cfg.xs.iter().zip(&curves).enumerate() {
        let diffs: Vec<f64> = curve.iter().map(|r| r.diff.abs()).collect();
        let violations = diffs.windows(2).filter(|w| !(w[1] < w[0])).count();
        report.residual(&format!("x{i}_monotonicity_violations"), violations as f64, 0.0);
        report.residual(&format!("x{i}_final_gap"), *diffs.last().unwrap(), cfg.tol.entropy_gap);
        for (w, r) in diffs.windows(2).zip(curve.iter().skip(1)) {
            report.residual(&format!("x{i}_rate_k{}", r.k), w[1] / w[0], cfg.tol.entropy_rate);
        }
        for r in curve {
            rows.push(EntropyOut {
                x: x.clone(),
                k: r.k,
                h_exact: r.h_exact,
                h_asym: r.h_asym,
                diff: r.diff,
                ratio: r.ratio,
            });
        }
    }
    let mut header: Vec<String> = x_cols(cfg.pair.dim());
    header.extend(["k", "H_exact", "H_asym", "diff", "ratio"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let name = write_table(cfg, "entropy-table", &header, &rows, |r| {
        let mut v: Vec<String> = r.x.iter().map(|&c| num(c)).collect();
        v.extend([
            r.k.to_string(),
            num(r.h_exact),
            num(r.h_asym),
            num(r.diff),
            r.ratio.map(num).unwrap_or_default(),
        ]);
        v
    })?;
    let m = cfg.pair.dim();
    write_plot(
        cfg,
        &name,
        &format!(
            "set logscale xy\nset xlabel 'k'\nset ylabel '|H_exact - H_asym|'\nplot '@TABLE@' using {}:(abs(${})) with linespoints",
            m + 1,
            m + 4
        ),
    )?;
    report.finish_with(
        "entropy gap decreasing within tolerance",
        "entropy gap gate failed",
    );
    Ok(report)
}

fn consecutive_tables(cfg: &RunConfig) -> Result<Vec<NormingTable>, CliError> {
    let k_max = *cfg.ks.last().unwrap();
    tables(&cfg.pair, 1..=k_max)
}

pub fn balanced(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let tabs = consecutive_tables(cfg)?;
    let mut report = balanced_check(&cfg.pair, &tabs, &cfg.xs, cfg.tol.balanced)?;
    report.name = "balanced".into();
    Ok(report)
}

pub fn convolution(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let tabs = consecutive_tables(cfg)?;
    Ok(convolution_power_check(&cfg.pair, &tabs, &cfg.xs, cfg.tol.convolution)?)
}

pub fn maxent(cfg: &RunConfig) -> Result<CheckReport, CliError> {
    let pair = &cfg.pair;
    let res = max_entropy_point(pair)?;
    let com = pair.polytope().center_of_mass();
    let bary = pair.polytope().barycenter().to_vec();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();

    let mut report = CheckReport::new("maxent", &inputs(cfg, serde_json::Value::Null));
    report.tolerance("center", cfg.tol.center);
    report.tolerance("kahler_einstein", cfg.tol.kahler_einstein);
    report.info("x_star", &res.x);
    report.info("l_star", res.l);
    report.info("unique", res.unique);
    report.info("iterations", res.iterations);
    report.info("center_of_mass", &com);
    report.info("distance_to_center_of_mass", dist(&res.x, &com));
    report.info("distance_to_barycenter", dist(&res.x, &bary));
    report.residual("not_unique", if res.unique { 0.0 } else { 1.0 }, 0.0);

    let grid = rho_grid(pair.dim(), 4.0, if pair.dim() == 1 { 33 } else { 17 });
    let fit = fit_ke_constants(pair, &grid, None)?;
    report.info("ke_fit", &fit);
    if fit.residual <= cfg.tol.kahler_einstein && fit.a > 0.0 {
        let ke = ke_center_check(pair, fit.a, &grid, cfg.tol.center)?;
        for r in &ke.residuals {
            report.residual(&format!("ke_{}", r.name), r.value, r.tolerance);
        }
        report.info("kahler_einstein", true);
    } else {
        report.info("kahler_einstein", false);
    }
    report.finish_with("unique maximal-entropy point", "maximal-entropy check failed");
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    /// f ≡ 1
    One,
    /// f(y) = y₁
    Linear,
    /// f(y) = |y|²
    Square,
    /// Gaussian bump centered at the barycenter, width² 0.05
    Bump,
}

impl TestFunction {
    fn eval(self, y: &[f64], center: &[f64]) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Linear => y[0],
            Self::Square => y.iter().map(|v| v * v).sum(),
            Self::Bump => (-y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 0.05).exp(),
        }
    }
}

#[derive(Serialize)]
struct BernsteinOut {
    x: Vec<f64>,
    k: u32,
    value: f64,
    error: f64,
    scaled_error: f64,
}

pub fn bernstein_cmd(cfg: &RunConfig, f: TestFunction) -> Result<CheckReport, CliError> {
    let pair = &cfg.pair;
    let center = pair.polytope().barycenter().to_vec();
    let tabs = tables(pair, cfg.ks.iter().copied())?;
    let mut rows = Vec::new();
    for x in &cfg.xs {
        let fx = f.eval(x, &center);
        for t in &tabs {
            let value = bernstein(pair, t, |y| f.eval(y, &center), x)?;
            let error = (value - fx).abs();
            rows.push(BernsteinOut {
                x: x.clone(),
                k: t.level(),
                value,
                error,
                scaled_error: t.level() as f64 * error,
            });
        }
    }
    let mut report = CheckReport::new("bernstein", &inputs(cfg, serde_json::json!({ "f": f })));
    // O(1/k): err(k') / err(k) ≤ 2·HALVING·k/k' on the two finest levels;
    // coarser pairs are pre-asymptotic and only reported
    const HALVING: f64 = 0.6;
    const EXACT: f64 = 1e-13;
    report.tolerance("halving_ratio", HALVING);
    report.tolerance("exact_floor", EXACT);
    let mut coarse = serde_json::Map::new();
    for (i, chunk) in rows.chunks(tabs.len()).enumerate() {
        let n = chunk.len();
        for (j, w) in chunk.windows(2).enumerate() {
            if w[1].error <= EXACT {
                continue;
            }
            let scale = 2.0 * w[0].k as f64 / w[1].k as f64;
            let ratio = w[1].error / w[0].error / scale;
            let name = format!("x{i}_k{}_halving_ratio", w[1].k);
            if j + 2 == n {
                report.residual(&name, ratio, HALVING);
            } else {
                coarse.insert(name, ratio.into());
            }
        }
    }
    if !coarse.is_empty() {
        report.info("coarse_halving_ratios", serde_json::Value::Object(coarse));
    }
    let mut header: Vec<String> = x_cols(pair.dim());
    header.extend(["k", "value", "error", "k_error"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let name = write_table(cfg, "bernstein", &header, &rows, |r| {
        let mut v: Vec<String> = r.x.iter().map(|&c| num(c)).collect();
        v.extend([r.k.to_string(), num(r.value), num(r.error), num(r.scaled_error)]);
        v
    })?;
    let m = pair.dim();
    write_plot(
        cfg,
        &name,
        &format!(
            "set logscale xy\nset xlabel 'k'\nset ylabel '|B_k f - f|'\nplot '@TABLE@' using {}:{} with linespoints",
            m + 1,
            m + 3
        ),
    )?;
    report.finish_with("O(1/k) Bernstein convergence", "Bernstein error exceeds the C/k bound");
    Ok(report)
}

#[derive(Serialize)]
struct GaussOut {
    k: u32,
    n_k: usize,
    entropy: f64,
    criticality: Option<f64>,
}

pub fn gauss_entropy(cfg: &RunConfig, criticality_step: Option<f64>) -> Result<CheckReport, CliError> {
    let pair = &cfg.pair;
    let tabs = tables(pair, cfg.ks.iter().copied())?;
    let center = pair.polytope().barycenter().to_vec();
    let eta = |x: &[f64]| x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let mut rows = Vec::new();
    for t in &tabs {
        let criticality = match criticality_step {
            Some(h) => Some(balanced_criticality(pair, t.level(), eta, h)?),
            None => None,
        };
        rows.push(GaussOut {
            k: t.level(),
            n_k: t.len(),
            entropy: gaussian_entropy(t),
            criticality,
        });
    }
    let mut report = CheckReport::new(
        "gauss-entropy",
        &inputs(cfg, serde_json::json!({ "criticality_step": criticality_step })),
    );
    let non_finite = rows.iter().filter(|r| !r.entropy.is_finite()).count();
    report.residual("non_finite_entropies", non_finite as f64, 0.0);
    report.info("entropies", rows.iter().map(|r| (r.k, r.entropy)).collect::<Vec<_>>());
    let name = write_table(cfg, "gauss-entropy", &["k", "N_k", "entropy", "criticality"], &rows, |r| {
        vec![
            r.k.to_string(),
            r.n_k.to_string(),
            num(r.entropy),
            r.criticality.map(num).unwrap_or_default(),
        ]
    })?;
    write_plot(
        cfg,
        &name,
        "set xlabel 'k'\nset ylabel '-sum log Q'\nplot '@TABLE@' using 1:3 with linespoints",
    )?;
    report.finish_with("Gaussian entropies computed", "non-finite Gaussian entropy");
    Ok(report)
}

pub fn emit(cfg: &RunConfig, report: &CheckReport) -> Result<String, CliError> {
    write_report(cfg, report)?;
    let mut line = String::new();
    let _ = write!(
        line,
        "{}: {} ({})",
        report.name,
        if report.passed() { "pass" } else { "fail" },
        report.summary
    );
    Ok(line)
}
