//! Run configuration: flags, optional JSON config file, defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use torentropy::tolerances;
use torentropy::{PotentialKind, PotentialPair};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Manifold: `builtin:NAME`, a path to a JSON manifold spec, or inline JSON.
    #[arg(long)]
    pub manifold: Option<String>,
    /// Levels: `16,64,256`, `1..6` or `16..4096*4`.
    #[arg(long)]
    pub k: Option<String>,
    /// Points: `0.5`, `0.2,0.3;0.4,0.1` (`;` between points) or `grid:N`.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Format of tabular artifacts.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON config file; its values override flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write a gnuplot script next to the tabular output.
    #[arg(long)]
    pub plot: bool,
    /// Density-of-states flatness tolerance [default: 1e-6]
    #[arg(long)]
    pub tol_balanced: Option<f64>,
    /// Atomwise convolution tolerance [default: 1e-10]
    #[arg(long)]
    pub tol_convolution: Option<f64>,
    /// Final-level |H_exact − H_asym| gate [default: 0.01]
    #[arg(long)]
    pub tol_entropy_gap: Option<f64>,
    /// Largest allowed diff(4k)/diff(k) [default: 0.7]
    #[arg(long)]
    pub tol_entropy_rate: Option<f64>,
    /// Distance gate for the maximal-entropy point [default: 1e-6]
    #[arg(long)]
    pub tol_center: Option<f64>,
    /// Kähler–Einstein residual tolerance [default: 1e-8]
    #[arg(long)]
    pub tol_ke: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    manifold: Option<serde_json::Value>,
    k: Option<KList>,
    x: Option<serde_json::Value>,
    out: Option<PathBuf>,
    format: Option<Format>,
    plot: Option<bool>,
    #[serde(default)]
    tolerances: FileTolerances,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum KList {
    List(Vec<u32>),
    Text(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTolerances {
    balanced: Option<f64>,
    convolution: Option<f64>,
    entropy_gap: Option<f64>,
    entropy_rate: Option<f64>,
    center: Option<f64>,
    kahler_einstein: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub balanced: f64,
    pub convolution: f64,
    pub entropy_gap: f64,
    pub entropy_rate: f64,
    pub center: f64,
    pub kahler_einstein: f64,
}

/// Per-command defaults.
pub struct Defaults {
    pub k: &'static str,
    pub x: &'static str,
    /// Levels used instead of `k` when the tables need multidimensional quadrature.
    pub k_quadrature: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pair: PotentialPair,
    pub ks: Vec<u32>,
    pub xs: Vec<Vec<f64>>,
    pub out: PathBuf,
    pub format: Format,
    pub plot: bool,
    pub tol: Tolerances,
}

fn has_closed_form(pair: &PotentialPair) -> bool {
    matches!(
        pair.kind(),
        PotentialKind::FubiniStudy { .. } | PotentialKind::RoundSphere { .. }
    )
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, defaults: &Defaults) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => {
                let text = read(p)?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::input(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };

        let manifold_text = match &file.manifold {
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(v) => Some(v.to_string()),
            None => args.manifold.clone(),
        };
        let pair = parse_manifold(manifold_text.as_deref().unwrap_or("builtin:fs-cp1"))?;

        let ks = match &file.k {
            Some(KList::List(v)) => normalize_ks(v.clone())?,
            Some(KList::Text(s)) => parse_k_list(s)?,
            None => {
                let fallback = match defaults.k_quadrature {
                    Some(q) if pair.dim() > 1 && !has_closed_form(&pair) => q,
                    _ => defaults.k,
                };
                parse_k_list(args.k.as_deref().unwrap_or(fallback))?
            }
        };

        let x_text = match &file.x {
            Some(serde_json::Value::String(s)) => Some(s.clone()),
            Some(v) => Some(points_from_json(v)?),
            None => args.x.clone(),
        };
        let xs = match x_text.as_deref() {
            Some(t) => parse_points(t, &pair)?,
            None if defaults.x.is_empty() => vec![pair.polytope().barycenter().to_vec()],
            None => parse_points(defaults.x, &pair)?,
        };

        let ft = &file.tolerances;
        let tol = Tolerances {
            balanced: ft.balanced.or(args.tol_balanced).unwrap_or(tolerances::BALANCED),
            convolution: ft.convolution.or(args.tol_convolution).unwrap_or(tolerances::CONVOLUTION),
            entropy_gap: ft.entropy_gap.or(args.tol_entropy_gap).unwrap_or(tolerances::ENTROPY_GAP),
            entropy_rate: ft.entropy_rate.or(args.tol_entropy_rate).unwrap_or(tolerances::ENTROPY_RATE),
            center: ft.center.or(args.tol_center).unwrap_or(1e-6),
            kahler_einstein: ft.kahler_einstein.or(args.tol_ke).unwrap_or(tolerances::KAHLER_EINSTEIN),
        };
        for (name, v) in [
            ("balanced", tol.balanced),
            ("convolution", tol.convolution),
            ("entropy-gap", tol.entropy_gap),
            ("entropy-rate", tol.entropy_rate),
            ("center", tol.center),
            ("ke", tol.kahler_einstein),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::input(format!("tolerance {name} must be positive, got {v}")));
            }
        }

        Ok(Self {
            pair,
            ks,
            xs,
            out: file.out.or_else(|| args.out.clone()).unwrap_or_else(|| PathBuf::from("torentropy-out")),
            format: file.format.or(args.format).unwrap_or(Format::Csv),
            plot: file.plot.unwrap_or(args.plot),
            tol,
        })
    }
}

fn read(p: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
}

/// `builtin:NAME`, a file path, or inline JSON.
pub fn parse_manifold(text: &str) -> Result<PotentialPair, CliError> {
    let t = text.trim();
    let body = if !t.starts_with('{') && !t.starts_with("builtin:") && Path::new(t).is_file() {
        read(Path::new(t))?
    } else {
        t.to_string()
    };
    PotentialPair::parse(&body).map_err(|e| CliError::input(format!("manifold: {e}")))
}

fn normalize_ks(mut ks: Vec<u32>) -> Result<Vec<u32>, CliError> {
    if ks.is_empty() {
        return Err(CliError::input("empty k-list".into()));
    }
    if ks.contains(&0) {
        return Err(CliError::input("k values must be positive".into()));
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

pub fn parse_k_list(text: &str) -> Result<Vec<u32>, CliError> {
    let bad = |s: &str| CliError::input(format!("bad k-list item `{s}`"));
    let mut ks = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, rest)) = item.split_once("..") {
            let (b, factor) = match rest.split_once('*') {
                Some((b, f)) => (b, Some(f)),
                None => (rest, None),
            };
            let a: u32 = a.trim().parse().map_err(|_| bad(item))?;
            let b: u32 = b.trim().parse().map_err(|_| bad(item))?;
            match factor {
                Some(f) => {
                    let f: u32 = f.trim().parse().map_err(|_| bad(item))?;
                    if f < 2 || a == 0 {
                        return Err(bad(item));
                    }
                    let mut k = a;
                    while k <= b {
                        ks.push(k);
                        k = k.checked_mul(f).ok_or_else(|| bad(item))?;
                    }
                }
                None => ks.extend(a..=b),
            }
        } else {
            ks.push(item.parse().map_err(|_| bad(item))?);
        }
    }
    normalize_ks(ks)
}

fn points_from_json(v: &serde_json::Value) -> Result<String, CliError> {
    let pts: Vec<serde_json::Value> = match v {
        serde_json::Value::Array(a) => a.clone(),
        _ => return Err(CliError::input("x must be a string or an array".into())),
    };
    let mut parts = Vec::new();
    for p in pts {
        match p {
            serde_json::Value::Number(n) => parts.push(n.to_string()),
            serde_json::Value::Array(c) => parts.push(
                c.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            _ => return Err(CliError::input("bad x entry in config".into())),
        }
    }
    Ok(parts.join(";"))
}

/// Parses points and requires each to be interior with the standard margin.
pub fn parse_points(text: &str, pair: &PotentialPair) -> Result<Vec<Vec<f64>>, CliError> {
    let m = pair.dim();
    let p = pair.polytope();
    let pts = if let Some(n) = text.trim().strip_prefix("grid:") {
        let n: usize = n.trim().parse().map_err(|_| CliError::input(format!("bad grid `{text}`")))?;
        if n == 0 {
            return Err(CliError::input("grid needs at least one point per axis".into()));
        }
        interior_grid(pair, n)
    } else {
        let mut pts = Vec::new();
        let sep = if m == 1 && !text.contains(';') { ',' } else { ';' };
        for chunk in text.split(sep).map(str::trim).filter(|s| !s.is_empty()) {
            let coords: Vec<f64> = chunk
                .split(if m == 1 { ';' } else { ',' })
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::input(format!("bad point `{chunk}`")))?;
            if coords.len() != m {
                return Err(CliError::input(format!("point `{chunk}` has {} coordinates, expected {m}", coords.len())));
            }
            pts.push(coords);
        }
        pts
    };
    if pts.is_empty() {
        return Err(CliError::input("empty x-list".into()));
    }
    for x in &pts {
        p.require_interior(x, tolerances::INTERIOR_MARGIN)
            .map_err(|e| CliError::input(format!("x-grid: {e}")))?;
    }
    Ok(pts)
}

/// `n` points per axis of the bounding box, spaced at `(i + ½)/n`, kept when interior.
fn interior_grid(pair: &PotentialPair, n: usize) -> Vec<Vec<f64>> {
    let p = pair.polytope();
    let m = pair.dim();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for v in p.vertices() {
        for i in 0..m {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    let mut out: Vec<Vec<f64>> = vec![vec![]];
    for i in 0..m {
        out = out
            .into_iter()
            .flat_map(|q| {
                let (l, h) = (lo[i], hi[i]);
                (0..n).map(move |j| {
                    let mut r = q.clone();
                    r.push(l + (h - l) * (j as f64 + 0.5) / n as f64);
                    r
                })
            })
            .collect();
    }
    out.retain(|x| p.min_facet_value(x).map(|v| v >= tolerances::INTERIOR_MARGIN).unwrap_or(false));
    out
}
