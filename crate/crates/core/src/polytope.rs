//! Delzant polytopes given by facet inequalities `⟨x, v_r⟩ − a_r ≥ 0`.
//!
//! Construction validates the Delzant conditions (primitive normals, simple
//! vertices whose normals form a lattice basis, boundedness) and builds a fan
//! triangulation from the vertex barycenter. Volume, center of mass and every
//! integral over `P` or `∂P` are computed on that fan.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::quadrature::{simplex_volume, ConeCell, SimplexRule};

const GEOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub normal: Vec<i64>,
    pub offset: f64,
}

/// Normalization of the surface measure on `∂P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceMeasure {
    /// Lebesgue measure on each facet divided by `|v_r|`.
    #[default]
    LatticeNormalized,
    /// Plain Euclidean surface measure.
    Euclidean,
}

/// Serialized form: `{"dimension": m, "facets": [{"normal": [..], "offset": a}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeSpec {
    pub dimension: usize,
    pub facets: Vec<Facet>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "PolytopeSpec", into = "PolytopeSpec")]
pub struct DelzantPolytope {
    dim: usize,
    facets: Vec<Facet>,
    exact_offsets: Vec<(BigInt, BigInt)>,
    vertices: Vec<Vec<f64>>,
    barycenter: Vec<f64>,
    cells: Vec<ConeCell>,
    /// Per facet, its own fan triangulation into (m−1)-simplices.
    facet_simplices: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<PolytopeSpec> for DelzantPolytope {
    type Error = Error;
    fn try_from(s: PolytopeSpec) -> Result<Self> {
        DelzantPolytope::new(s.dimension, s.facets)
    }
}

impl From<DelzantPolytope> for PolytopeSpec {
    fn from(p: DelzantPolytope) -> Self {
        PolytopeSpec {
            dimension: p.dim,
            facets: p.facets,
        }
    }
}

impl fmt::Debug for DelzantPolytope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelzantPolytope")
            .field("dim", &self.dim)
            .field("facets", &self.facets)
            .finish()
    }
}

impl PartialEq for DelzantPolytope {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.facets == other.facets
    }
}

/// Integer points of a dilate `kP̄`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePointSet {
    pub level: u32,
    pub points: Vec<Vec<i64>>,
}

impl LatticePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl DelzantPolytope {
    pub fn new(dim: usize, facets: Vec<Facet>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPolytope("dimension must be positive".into()));
        }
        if facets.len() <= dim {
            return Err(Error::InvalidPolytope(format!(
                "{} facets cannot bound a {dim}-dimensional polytope",
                facets.len()
            )));
        }
        for (r, f) in facets.iter().enumerate() {
            if f.normal.len() != dim {
                return Err(Error::InvalidPolytope(format!(
                    "facet {r} normal has length {}, expected {dim}",
                    f.normal.len()
                )));
            }
            if !f.offset.is_finite() {
                return Err(Error::InvalidPolytope(format!("facet {r} offset is not finite")));
            }
            let g = f
                .normal
                .iter()
                .fold(0i64, |acc, &c| acc.gcd(&c));
            if g != 1 {
                return Err(Error::InvalidPolytope(format!(
                    "facet {r} normal {:?} is not primitive",
                    f.normal
                )));
            }
        }
        let exact_offsets = facets
            .iter()
            .map(|f| {
                let q = BigRational::from_float(f.offset).expect("finite offset");
                (q.numer().clone(), q.denom().clone())
            })
            .collect();

        let mut poly = Self {
            dim,
            facets,
            exact_offsets,
            vertices: Vec::new(),
            barycenter: Vec::new(),
            cells: Vec::new(),
            facet_simplices: Vec::new(),
        };
        poly.vertices = poly.compute_vertices()?;
        poly.check_delzant_and_bounded()?;
        let n = poly.vertices.len() as f64;
        poly.barycenter = (0..dim)
            .map(|i| poly.vertices.iter().map(|v| v[i]).sum::<f64>() / n)
            .collect();
        poly.build_fan()?;
        if poly.volume() <= GEOM_TOL {
            return Err(Error::InvalidPolytope("polytope has empty interior".into()));
        }
        Ok(poly)
    }

    /// `[0, 1]`.
    pub fn interval01() -> Self {
        Self::new(
            1,
            vec![
                Facet { normal: vec![1], offset: 0.0 },
                Facet { normal: vec![-1], offset: -1.0 },
            ],
        )
        .expect("unit interval is Delzant")
    }

    /// `[−r², r²]`.
    pub fn interval_sym(r2: f64) -> Result<Self> {
        if !(r2 > 0.0 && r2.is_finite()) {
            return Err(Error::InvalidParameter(format!("r² must be positive, got {r2}")));
        }
        Self::new(
            1,
            vec![
                Facet { normal: vec![1], offset: -r2 },
                Facet { normal: vec![-1], offset: -r2 },
            ],
        )
    }

    /// Standard simplex `{x ≥ 0, Σ x_i ≤ 1}`.
    pub fn simplex(m: usize) -> Result<Self> {
        let mut facets: Vec<Facet> = (0..m)
            .map(|i| {
                let mut normal = vec![0; m];
                normal[i] = 1;
                Facet { normal, offset: 0.0 }
            })
            .collect();
        facets.push(Facet {
            normal: vec![-1; m],
            offset: -1.0,
        });
        Self::new(m, facets)
    }

    /// Parses `interval01`, `interval_sym(r2)` or `simplex(m)`.
    pub fn named(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "interval01" {
            return Ok(Self::interval01());
        }
        if let Some(arg) = call_arg(name, "interval_sym") {
            let r2 = arg
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad r² `{arg}`")))?;
            return Self::interval_sym(r2);
        }
        if let Some(arg) = call_arg(name, "simplex") {
            let m = arg
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad dimension `{arg}`")))?;
            return Self::simplex(m);
        }
        Err(Error::UnknownBuiltin(name.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    /// Average of the vertices; an interior point used as the fan apex.
    pub fn barycenter(&self) -> &[f64] {
        &self.barycenter
    }

    pub fn cells(&self) -> &[ConeCell] {
        &self.cells
    }

    pub fn simplices(&self) -> Vec<Vec<Vec<f64>>> {
        self.cells.iter().map(ConeCell::simplex).collect()
    }

    pub fn facet_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.facet_values_unchecked(x))
    }

    pub(crate) fn facet_values_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.facets
            .iter()
            .map(|f| {
                f.normal
                    .iter()
                    .zip(x)
                    .map(|(&v, &xi)| v as f64 * xi)
                    .sum::<f64>()
                    - f.offset
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.facet_values(x)?.iter().all(|&l| l >= 0.0))
    }

    /// Smallest facet value; negative outside `P̄`.
    pub fn min_facet_value(&self, x: &[f64]) -> Result<f64> {
        Ok(self
            .facet_values(x)?
            .into_iter()
            .fold(f64::INFINITY, f64::min))
    }

    /// Rejects points closer than `margin` to `∂P`.
    pub fn require_interior(&self, x: &[f64], margin: f64) -> Result<()> {
        let min = self.min_facet_value(x)?;
        if min < margin {
            Err(Error::BoundaryProximity {
                point: x.to_vec(),
                margin,
                min_facet_value: min,
            })
        } else {
            Ok(())
        }
    }

    /// Exact test `⟨α, v_r⟩ − k a_r ≥ 0` for all facets.
    pub fn contains_dilated_lattice_point(&self, alpha: &[i64], k: u32) -> bool {
        self.facets
            .iter()
            .zip(&self.exact_offsets)
            .all(|(f, (num, den))| {
                let dot: i128 = f
                    .normal
                    .iter()
                    .zip(alpha)
                    .map(|(&v, &a)| v as i128 * a as i128)
                    .sum();
                let lhs = BigInt::from(dot) * den;
                let rhs = BigInt::from(k) * num;
                !(lhs - rhs).is_negative()
            })
    }

    /// Integer points of `kP̄` in lexicographic order. Level 0 gives the
    /// single point at the origin.
    pub fn lattice_points(&self, k: u32) -> LatticePointSet {
        if k == 0 {
            return LatticePointSet {
                level: 0,
                points: vec![vec![0; self.dim]],
            };
        }
        let kf = k as f64;
        let lo: Vec<i64> = (0..self.dim)
            .map(|i| {
                let m = self.vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                (kf * m).floor() as i64 - 1
            })
            .collect();
        let hi: Vec<i64> = (0..self.dim)
            .map(|i| {
                let m = self
                    .vertices
                    .iter()
                    .map(|v| v[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                (kf * m).ceil() as i64 + 1
            })
            .collect();
        let mut points = Vec::new();
        let mut cur = lo.clone();
        loop {
            if self.contains_dilated_lattice_point(&cur, k) {
                points.push(cur.clone());
            }
            // odometer with the last coordinate fastest: lexicographic order
            let mut i = self.dim;
            loop {
                if i == 0 {
                    return LatticePointSet { level: k, points };
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] <= hi[i] {
                    break;
                }
                cur[i] = lo[i];
            }
        }
    }

    pub fn volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let mut vol = 0.0;
        for cell in &self.cells {
            let n = (self.dim + 1) as f64;
            for i in 0..self.dim {
                let c = (cell.apex[i] + cell.base.iter().map(|b| b[i]).sum::<f64>()) / n;
                acc[i] += cell.volume * c;
            }
            vol += cell.volume;
        }
        acc.iter().map(|a| a / vol).collect()
    }

    /// Same polytope translated by `b` (offsets shift by `⟨v_r, b⟩`).
    pub fn translated(&self, b: &[f64]) -> Result<Self> {
        check_dim(self.dim, b.len())?;
        let facets = self
            .facets
            .iter()
            .map(|f| Facet {
                normal: f.normal.clone(),
                offset: f.offset
                    + f.normal
                        .iter()
                        .zip(b)
                        .map(|(&v, &bi)| v as f64 * bi)
                        .sum::<f64>(),
            })
            .collect();
        Self::new(self.dim, facets)
    }

    /// `∫_{∂P} g dσ`, facet by facet.
    pub fn boundary_integral<F>(&self, g: F, measure: SurfaceMeasure) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        let rule = SimplexRule::collapsed(self.dim - 1, 16);
        let mut total = 0.0;
        for (r, simplices) in self.facet_simplices.iter().enumerate() {
            let scale = match measure {
                SurfaceMeasure::Euclidean => 1.0,
                SurfaceMeasure::LatticeNormalized => {
                    1.0 / (self.facets[r]
                        .normal
                        .iter()
                        .map(|&v| (v * v) as f64)
                        .sum::<f64>())
                    .sqrt()
                }
            };
            for s in simplices {
                let vol = simplex_volume(s);
                for (p, w) in rule.nodes_on(s) {
                    let v = g(&p);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteBoundarySample { facet: r, point: p });
                    }
                    total += scale * vol * w * v;
                }
            }
        }
        Ok(total)
    }

    /// `Vol(∂P, dσ)`.
    pub fn boundary_volume(&self, measure: SurfaceMeasure) -> f64 {
        self.boundary_integral(|_| 1.0, measure)
            .expect("constant integrand is finite")
    }

    fn compute_vertices(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.facets.len();
        let m = self.dim;
        let mut verts: Vec<Vec<f64>> = Vec::new();
        for combo in combinations(d, m) {
            let a = DMatrix::from_fn(m, m, |i, j| self.facets[combo[i]].normal[j] as f64);
            if a.determinant().abs() < 0.5 {
                continue;
            }
            let rhs = DVector::from_iterator(m, combo.iter().map(|&r| self.facets[r].offset));
            let Some(x) = a.lu().solve(&rhs) else { continue };
            let x: Vec<f64> = x.iter().copied().collect();
            if self
                .facet_values_unchecked(&x)
                .iter()
                .all(|&l| l >= -GEOM_TOL)
                && !verts
                    .iter()
                    .any(|v| v.iter().zip(&x).all(|(a, b)| (a - b).abs() < GEOM_TOL))
            {
                verts.push(x);
            }
        }
        if verts.is_empty() {
            return Err(Error::InvalidPolytope(
                "no vertices: polytope is empty, unbounded or degenerate".into(),
            ));
        }
        Ok(verts)
    }

    fn tight_facets(&self, x: &[f64]) -> Vec<usize> {
        self.facet_values_unchecked(x)
            .iter()
            .enumerate()
            .filter(|(_, l)| l.abs() <= GEOM_TOL)
            .map(|(r, _)| r)
            .collect()
    }

    fn check_delzant_and_bounded(&self) -> Result<()> {
        let m = self.dim;
        for v in &self.vertices {
            let tight = self.tight_facets(v);
            if tight.len() != m {
                return Err(Error::InvalidPolytope(format!(
                    "vertex {v:?} lies on {} facets (not simple)",
                    tight.len()
                )));
            }
            let n = DMatrix::from_fn(m, m, |i, j| self.facets[tight[i]].normal[j] as f64);
            let det = n.determinant().round();
            if det.abs() != 1.0 {
                return Err(Error::InvalidPolytope(format!(
                    "normals at vertex {v:?} do not form a lattice basis (det {det})"
                )));
            }
            // Edge directions: N d = e_j. An edge that never meets another
            // facet is a ray, so the polytope is unbounded.
            let inv = n.try_inverse().expect("unimodular");
            for j in 0..m {
                let dir = inv.column(j);
                let leaves = self.facets.iter().enumerate().any(|(r, f)| {
                    !tight.contains(&r)
                        && f.normal
                            .iter()
                            .zip(dir.iter())
                            .map(|(&a, &b)| a as f64 * b)
                            .sum::<f64>()
                            < -GEOM_TOL
                });
                if !leaves {
                    return Err(Error::InvalidPolytope(format!(
                        "unbounded: edge from vertex {v:?} is a ray"
                    )));
                }
            }
        }
        Ok(())
    }

    fn build_fan(&mut self) -> Result<()> {
        let all: Vec<usize> = (0..self.vertices.len()).collect();
        let mut facet_simplices = vec![Vec::new(); self.facets.len()];
        let mut cells = Vec::new();
        for (r, verts) in self.subfaces(&[], &all, self.dim) {
            let tris = self.triangulate_face(&[r], &verts, self.dim - 1);
            for base in &tris {
                let mut s = vec![self.barycenter.clone()];
                s.extend(base.iter().cloned());
                let volume = simplex_volume(&s);
                cells.push(ConeCell {
                    apex: self.barycenter.clone(),
                    base: base.clone(),
                    facet: r,
                    volume,
                });
            }
            facet_simplices[r] = tris;
        }
        if cells.is_empty() {
            return Err(Error::InvalidPolytope("triangulation is empty".into()));
        }
        self.cells = cells;
        self.facet_simplices = facet_simplices;
        Ok(())
    }

    /// Facets (codimension-one faces) of the face spanned by `verts`, each
    /// tagged by the polytope facet that cuts it out.
    fn subfaces(&self, tight: &[usize], verts: &[usize], d: usize) -> Vec<(usize, Vec<usize>)> {
        let mut out: Vec<(usize, Vec<usize>)> = Vec::new();
        for r in 0..self.facets.len() {
            if tight.contains(&r) {
                continue;
            }
            let on: Vec<usize> = verts
                .iter()
                .copied()
                .filter(|&v| self.facet_values_unchecked(&self.vertices[v])[r].abs() <= GEOM_TOL)
                .collect();
            if on.is_empty() || affine_rank(&on.iter().map(|&v| &self.vertices[v]).collect::<Vec<_>>()) + 1 != d {
                continue;
            }
            if !out.iter().any(|(_, w)| *w == on) {
                out.push((r, on));
            }
        }
        out
    }

    fn triangulate_face(&self, tight: &[usize], verts: &[usize], d: usize) -> Vec<Vec<Vec<f64>>> {
        if d == 0 {
            return vec![vec![self.vertices[verts[0]].clone()]];
        }
        let n = verts.len() as f64;
        let center: Vec<f64> = (0..self.dim)
            .map(|i| verts.iter().map(|&v| self.vertices[v][i]).sum::<f64>() / n)
            .collect();
        let mut out = Vec::new();
        for (r, sub) in self.subfaces(tight, verts, d) {
            let mut t = tight.to_vec();
            t.push(r);
            for s in self.triangulate_face(&t, &sub, d - 1) {
                let mut simplex = vec![center.clone()];
                simplex.extend(s);
                out.push(simplex);
            }
        }
        out
    }
}

fn affine_rank(points: &[&Vec<f64>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let n = points[0].len();
    let m = DMatrix::from_fn(points.len() - 1, n, |i, j| points[i + 1][j] - points[0][j]);
    m.svd(false, false)
        .singular_values
        .iter()
        .filter(|&&s| s > GEOM_TOL)
        .count()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

pub(crate) fn call_arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?
        .trim()
        .strip_prefix('(')?
        .strip_suffix(')')
        .map(str::trim)
}
