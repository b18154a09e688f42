//! Gauss–Legendre rules on simplices, an adaptive simplex integrator and a
//! boundary-graded rule for integrands with logarithmic singularities on the
//! polytope boundary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// d-dimensional volume of a simplex given by `d + 1` vertices in any ambient
/// dimension (Gram determinant).
pub fn simplex_volume(verts: &[Vec<f64>]) -> f64 {
    let d = verts.len() - 1;
    if d == 0 {
        return 1.0;
    }
    let n = verts[0].len();
    let e = DMatrix::from_fn(d, n, |i, j| verts[i + 1][j] - verts[0][j]);
    let gram = &e * e.transpose();
    let det = gram.determinant().max(0.0);
    det.sqrt() / factorial(d)
}

fn factorial(d: usize) -> f64 {
    (1..=d).map(|i| i as f64).product()
}

/// Collapsed (conical product) Gauss–Legendre rule on the reference
/// d-simplex, stored in barycentric coordinates with weights summing to one.
#[derive(Debug, Clone)]
pub struct SimplexRule {
    pub dim: usize,
    bary: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl SimplexRule {
    pub fn collapsed(dim: usize, n: usize) -> Self {
        if dim == 0 {
            return Self {
                dim,
                bary: vec![vec![1.0]],
                weights: vec![1.0],
            };
        }
        let (nodes, w) = gauss_legendre(n);
        let total = n.pow(dim as u32);
        let mut bary = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        let dfact = factorial(dim);
        for _ in 0..total {
            let mut lam = vec![0.0; dim + 1];
            let mut rest = 1.0;
            let mut wt = dfact;
            for (i, &ii) in idx.iter().enumerate() {
                let xi = nodes[ii];
                lam[i + 1] = rest * xi;
                wt *= w[ii] * (1.0 - xi).powi((dim - 1 - i) as i32);
                rest *= 1.0 - xi;
            }
            lam[0] = rest;
            bary.push(lam);
            weights.push(wt);
            for slot in idx.iter_mut().rev() {
                *slot += 1;
                if *slot < n {
                    break;
                }
                *slot = 0;
            }
        }
        Self { dim, bary, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Points and normalized weights mapped onto the simplex `verts`.
    pub fn nodes_on(&self, verts: &[Vec<f64>]) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        let n = verts[0].len();
        let verts = verts.to_vec();
        self.bary.iter().zip(&self.weights).map(move |(lam, &w)| {
            let mut p = vec![0.0; n];
            for (l, v) in lam.iter().zip(&verts) {
                for (pi, vi) in p.iter_mut().zip(v) {
                    *pi += l * vi;
                }
            }
            (p, w)
        })
    }

    pub fn integrate<F>(&self, verts: &[Vec<f64>], volume: f64, f: &F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let mut acc = 0.0;
        for (p, w) in self.nodes_on(verts) {
            acc += w * f(&p)?;
        }
        Ok(acc * volume)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Maximum number of successive bisections of any element.
    pub max_depth: usize,
    /// Nodes per direction of the high-order rule.
    pub order: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rtol: crate::tolerances::QUADRATURE_RTOL,
            atol: 0.0,
            max_depth: 12,
            order: 12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error: f64,
    pub elements: usize,
}

struct Element {
    verts: Vec<Vec<f64>>,
    depth: usize,
    value: f64,
    error: f64,
}

struct HeapEntry(f64, usize);

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(other.1.cmp(&self.1))
    }
}

/// Globally adaptive integration over a union of full-dimensional simplices.
///
/// Each element is estimated with a rule of `order` nodes per direction and a
/// companion rule with `order - 4` nodes; the element error is their
/// difference. The worst element is bisected along its longest edge until the
/// summed error meets `max(atol, rtol·|total|)`.
pub fn integrate_adaptive<F>(
    simplices: &[Vec<Vec<f64>>],
    f: &F,
    opts: &AdaptiveOptions,
) -> Result<QuadratureEstimate>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let dim = simplices
        .first()
        .map(|s| s.len() - 1)
        .ok_or_else(|| Error::InvalidParameter("no integration cells".into()))?;
    let high = SimplexRule::collapsed(dim, opts.order);
    let low = SimplexRule::collapsed(dim, opts.order.saturating_sub(4).max(2));

    let eval = |verts: Vec<Vec<f64>>, depth: usize| -> Result<Element> {
        let volume = simplex_volume(&verts);
        let value = high.integrate(&verts, volume, f)?;
        let coarse = low.integrate(&verts, volume, f)?;
        Ok(Element {
            verts,
            depth,
            value,
            error: (value - coarse).abs(),
        })
    };

    let mut elements: Vec<Element> = Vec::new();
    let mut heap = BinaryHeap::new();
    for s in simplices {
        let el = eval(s.clone(), 0)?;
        heap.push(HeapEntry(el.error, elements.len()));
        elements.push(el);
    }
    let mut alive = elements.len();
    let mut frozen_error = 0.0;
    const MAX_ELEMENTS: usize = 200_000;

    let (mut total, mut err) = totals(&elements);
    loop {
        let target = opts.atol.max(opts.rtol * total.abs());
        if err <= target {
            (total, err) = totals(&elements);
        }
        let target = opts.atol.max(opts.rtol * total.abs());
        if err <= target {
            return Ok(QuadratureEstimate {
                value: total,
                error: err,
                elements: alive,
            });
        }
        let Some(HeapEntry(_, idx)) = heap.pop() else {
            return Err(Error::QuadratureNonConvergence {
                estimate: total,
                error: err,
            });
        };
        if elements[idx].depth >= opts.max_depth || elements.len() > MAX_ELEMENTS {
            frozen_error += elements[idx].error;
            if frozen_error > target {
                return Err(Error::QuadratureNonConvergence {
                    estimate: total,
                    error: err,
                });
            }
            continue;
        }
        let parent = std::mem::replace(
            &mut elements[idx],
            Element {
                verts: Vec::new(),
                depth: 0,
                value: 0.0,
                error: 0.0,
            },
        );
        total -= parent.value;
        err -= parent.error;
        let (a, b) = bisect(&parent.verts);
        for child in [a, b] {
            let el = eval(child, parent.depth + 1)?;
            total += el.value;
            err += el.error;
            heap.push(HeapEntry(el.error, elements.len()));
            elements.push(el);
        }
        alive += 1;
    }
}

fn totals(elements: &[Element]) -> (f64, f64) {
    elements
        .iter()
        .fold((0.0, 0.0), |(v, e), el| (v + el.value, e + el.error))
}

fn bisect(verts: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut best = (0, 1, -1.0);
    for i in 0..verts.len() {
        for j in (i + 1)..verts.len() {
            let d: f64 = verts[i]
                .iter()
                .zip(&verts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (i, j, _) = best;
    let mid: Vec<f64> = verts[i]
        .iter()
        .zip(&verts[j])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut a = verts.to_vec();
    let mut b = verts.to_vec();
    a[i] = mid.clone();
    b[j] = mid;
    (a, b)
}

/// A cone over a boundary simplex: `apex` is interior, `base` spans a piece
/// of one facet. The polytope fan triangulation consists of such cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeCell {
    pub apex: Vec<f64>,
    pub base: Vec<Vec<f64>>,
    pub facet: usize,
    pub volume: f64,
}

impl ConeCell {
    pub fn simplex(&self) -> Vec<Vec<f64>> {
        let mut v = Vec::with_capacity(self.base.len() + 1);
        v.push(self.apex.clone());
        v.extend(self.base.iter().cloned());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradedOptions {
    pub radial_nodes: usize,
    pub base_nodes: usize,
    /// Grading exponent; the radial map is `s = 1 - (1 - σ)^p`.
    pub grading: i32,
}

impl Default for GradedOptions {
    fn default() -> Self {
        Self {
            radial_nodes: 48,
            base_nodes: 32,
            grading: 4,
        }
    }
}

/// Integrates `f` over cone cells with nodes graded towards the base, where
/// integrable logarithmic boundary singularities live.
pub fn integrate_graded<F>(cells: &[ConeCell], f: &F, opts: &GradedOptions) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let (sn, sw) = gauss_legendre(opts.radial_nodes);
    let p = opts.grading;
    let radial: Vec<(f64, f64)> = sn
        .iter()
        .zip(&sw)
        .map(|(&sig, &w)| {
            // t = 1 − s is the distance fraction from the base, kept exact
            let t = (1.0 - sig).powi(p);
            (t, w * p as f64 * (1.0 - sig).powi(p - 1))
        })
        .collect();
    let mut total = 0.0;
    for cell in cells {
        let m = cell.apex.len();
        let base_nodes = graded_base_nodes(&cell.base, opts.base_nodes, p);
        let mut acc = 0.0;
        for &(t, ws) in &radial {
            let jac = ws * (1.0 - t).powi(m as i32 - 1);
            for (q, wq) in &base_nodes {
                let x: Vec<f64> = cell
                    .apex
                    .iter()
                    .zip(q)
                    .map(|(a, b)| b + t * (a - b))
                    .collect();
                acc += jac * wq * f(&x)?;
            }
        }
        total += acc * m as f64 * cell.volume;
    }
    Ok(total)
}

/// Probability-normalized nodes on a base simplex. Segments get an endpoint
/// grading so that ridge singularities are resolved as well.
fn graded_base_nodes(base: &[Vec<f64>], n: usize, p: i32) -> Vec<(Vec<f64>, f64)> {
    match base.len() {
        1 => vec![(base[0].clone(), 1.0)],
        2 => {
            let (tn, tw) = gauss_legendre(n);
            tn.iter()
                .zip(&tw)
                .map(|(&t, &w)| {
                    let a = t.powi(p);
                    let b = (1.0 - t).powi(p);
                    let tau = a / (a + b);
                    let jac =
                        p as f64 * t.powi(p - 1) * (1.0 - t).powi(p - 1) / ((a + b) * (a + b));
                    let rest = b / (a + b);
                    let q: Vec<f64> = base[0]
                        .iter()
                        .zip(&base[1])
                        .map(|(u, v)| if tau <= 0.5 { u + tau * (v - u) } else { v + rest * (u - v) })
                        .collect();
                    (q, w * jac)
                })
                .collect()
        }
        _ => SimplexRule::collapsed(base.len() - 1, n.min(16))
            .nodes_on(base)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        // degree 19 is the limit for 10 nodes
        let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(19)).sum();
        assert!((approx - 1.0 / 20.0).abs() < 1e-15);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn simplex_rule_weights_sum_to_one() {
        for d in 1..=3 {
            let r = SimplexRule::collapsed(d, 6);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "d = {d}: {s}");
        }
    }

    #[test]
    fn triangle_monomial() {
        // ∫_T x^2 y dx dy over the unit triangle = 2! 1! / 5! = 1/60
        let r = SimplexRule::collapsed(2, 5);
        let verts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let v = r
            .integrate(&verts, 0.5, &|p: &[f64]| Ok(p[0] * p[0] * p[1]))
            .unwrap();
        assert!((v - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn embedded_segment_volume() {
        let v = simplex_volume(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((v - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn adaptive_resolves_a_sharp_peak() {
        let f = |p: &[f64]| Ok((-(p[0] - 0.3).powi(2) * 1e4).exp());
        let cells = vec![vec![vec![0.0], vec![1.0]]];
        let est = integrate_adaptive(&cells, &f, &AdaptiveOptions::default()).unwrap();
        let exact = (std::f64::consts::PI / 1e4).sqrt();
        assert!((est.value - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let f = |p: &[f64]| Ok(if p[0] < 0.3 { 1.0 } else { 0.0 });
        let cells = vec![vec![vec![0.0], vec![1.0]]];
        let opts = AdaptiveOptions {
            max_depth: 3,
            ..Default::default()
        };
        let r = integrate_adaptive(&cells, &f, &opts);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })), "{r:?}");
    }

    #[test]
    fn graded_rule_handles_log_singularity() {
        // ∫_0^1 -½ log(x(1-x)) dx = 1, split as two cones from 1/2.
        let cells = vec![
            ConeCell {
                apex: vec![0.5],
                base: vec![vec![0.0]],
                facet: 0,
                volume: 0.5,
            },
            ConeCell {
                apex: vec![0.5],
                base: vec![vec![1.0]],
                facet: 1,
                volume: 0.5,
            },
        ];
        let v = integrate_graded(
            &cells,
            &|x: &[f64]| Ok(-0.5 * (x[0] * (1.0 - x[0])).ln()),
            &GradedOptions::default(),
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }
}
