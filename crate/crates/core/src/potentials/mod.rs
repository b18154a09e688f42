//! Kähler potentials `φ(ρ)` on the open orbit and their symplectic duals `u(x)`.

mod gauge;
mod legendre;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use gauge::GaugeShift;
pub use legendre::{legendre_transform, solve_gradient_equation, ConvexFunction, LegendreDual};

use crate::bergman::{NormingTable, NormingTableData};
use crate::error::{check_dim, Error, Result};
use crate::logspace::{log_sum_exp, xlogx, xlogy};
use crate::polytope::{call_arg, DelzantPolytope, PolytopeSpec};
use crate::tolerances::{FD_STEP, INTERIOR_MARGIN};

#[derive(Debug, Clone)]
pub enum PotentialKind {
    /// `φ = log(1 + Σ e^{ρ_i})` on the unit simplex.
    FubiniStudy { m: usize },
    /// `φ = r² log cosh ρ` on `[−r², r²]`.
    RoundSphere { r2: f64 },
    /// `u = Σ ℓ_r log ℓ_r`; `φ` by numerical Legendre transform.
    Guillemin,
    /// `φ = (1/ℓ) log Σ_α e^{⟨α,ρ⟩} / Q(α)` built from a level-`ℓ` table.
    BergmanSum(Arc<NormingTable>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindTag {
    ClosedForm,
    BergmanSum,
    GuilleminCanonical,
}

impl PotentialKind {
    pub fn tag(&self) -> KindTag {
        match self {
            Self::FubiniStudy { .. } | Self::RoundSphere { .. } => KindTag::ClosedForm,
            Self::Guillemin => KindTag::GuilleminCanonical,
            Self::BergmanSum(_) => KindTag::BergmanSum,
        }
    }
}

/// A toric Kähler potential together with its Legendre dual, in a fixed gauge.
#[derive(Debug, Clone)]
pub struct PotentialPair {
    kind: PotentialKind,
    base: DelzantPolytope,
    polytope: DelzantPolytope,
    gauge: GaugeShift,
}

impl PotentialPair {
    fn ungauged(kind: PotentialKind, base: DelzantPolytope) -> Self {
        let gauge = GaugeShift::identity(base.dim());
        Self {
            kind,
            polytope: base.clone(),
            base,
            gauge,
        }
    }

    pub fn fubini_study(m: usize) -> Result<Self> {
        Ok(Self::ungauged(
            PotentialKind::FubiniStudy { m },
            DelzantPolytope::simplex(m)?,
        ))
    }

    pub fn round_sphere(r2: f64) -> Result<Self> {
        Ok(Self::ungauged(
            PotentialKind::RoundSphere { r2 },
            DelzantPolytope::interval_sym(r2)?,
        ))
    }

    pub fn guillemin(polytope: DelzantPolytope) -> Self {
        Self::ungauged(PotentialKind::Guillemin, polytope)
    }

    pub fn bergman_sum(table: Arc<NormingTable>) -> Self {
        let base = table.polytope().clone();
        Self::ungauged(PotentialKind::BergmanSum(table), base)
    }

    /// Looks up a builtin pair: `fs-cp1`, `fs-cpm(m)`, `round-sphere(r2)`,
    /// `guillemin(<polytope>)`, `tampered`, `ke-sphere`.
    pub fn builtin(name: &str) -> Result<Self> {
        let name = name.trim();
        let lower = name.to_ascii_lowercase();
        if lower == "fs-cp1" {
            return Self::fubini_study(1);
        }
        if lower == "tampered" {
            return crate::bergman::tampered_pair();
        }
        if lower == "ke-sphere" {
            return Ok(Self::round_sphere(2.0)?.apply_gauge(&GaugeShift::constant(1, -(2f64.ln()))));
        }
        if let Some(arg) = call_arg(&lower, "fs-cpm") {
            let m: usize = arg
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad dimension in `{name}`")))?;
            return Self::fubini_study(m);
        }
        if let Some(arg) = call_arg(&lower, "round-sphere") {
            let r2: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad r² in `{name}`")))?;
            return Self::round_sphere(r2);
        }
        if let Some(arg) = call_arg(name, "guillemin") {
            return Ok(Self::guillemin(DelzantPolytope::named(arg.trim())?));
        }
        Err(Error::UnknownBuiltin(name.to_string()))
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn polytope(&self) -> &DelzantPolytope {
        &self.polytope
    }

    pub fn gauge(&self) -> &GaugeShift {
        &self.gauge
    }

    /// Composes `g` after the current gauge; the polytope moves by `g.b`.
    pub fn apply_gauge(&self, g: &GaugeShift) -> Self {
        g.validate(self.dim()).expect("gauge dimension");
        let gauge = g.compose(&self.gauge);
        let polytope = self
            .base
            .translated(&gauge.b)
            .expect("translation preserves validity");
        Self {
            kind: self.kind.clone(),
            base: self.base.clone(),
            polytope,
            gauge,
        }
    }

    pub fn try_apply_gauge(&self, g: &GaugeShift) -> Result<Self> {
        g.validate(self.dim())?;
        Ok(self.apply_gauge(g))
    }

    /// `u = s Σ ℓ_r log ℓ_r + c0` on the base polytope, when the pair has that form.
    fn log_form(&self) -> Option<(f64, f64)> {
        match &self.kind {
            PotentialKind::FubiniStudy { .. } | PotentialKind::Guillemin => Some((1.0, 0.0)),
            PotentialKind::RoundSphere { r2 } => Some((0.5, -r2 * r2.ln())),
            PotentialKind::BergmanSum(_) => None,
        }
    }

    // ---- ungauged evaluations ----

    fn phi0(&self, s: &[f64]) -> Result<f64> {
        match &self.kind {
            PotentialKind::FubiniStudy { .. } => {
                Ok(log_sum_exp(std::iter::once(0.0).chain(s.iter().copied())))
            }
            PotentialKind::RoundSphere { r2 } => Ok(r2 * log_cosh(s[0])),
            PotentialKind::Guillemin => {
                let y = self.primal_point0(s)?;
                Ok(dot(&y, s) - self.u0(&y)?)
            }
            PotentialKind::BergmanSum(t) => Ok(bergman_lse(t, s) / t.level() as f64),
        }
    }

    fn grad_phi0(&self, s: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            PotentialKind::FubiniStudy { .. } => {
                let lse = log_sum_exp(std::iter::once(0.0).chain(s.iter().copied()));
                Ok(s.iter().map(|v| (v - lse).exp()).collect())
            }
            PotentialKind::RoundSphere { r2 } => Ok(vec![r2 * s[0].tanh()]),
            PotentialKind::Guillemin => self.primal_point0(s),
            PotentialKind::BergmanSum(t) => Ok(bergman_moments(t, s).0),
        }
    }

    fn hess_phi0(&self, s: &[f64]) -> Result<DMatrix<f64>> {
        match &self.kind {
            PotentialKind::FubiniStudy { .. } => {
                let p = self.grad_phi0(s)?;
                let n = p.len();
                Ok(DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        p[i] - p[i] * p[j]
                    } else {
                        -p[i] * p[j]
                    }
                }))
            }
            PotentialKind::RoundSphere { r2 } => {
                let e = (-2.0 * s[0].abs()).exp();
                Ok(DMatrix::from_element(1, 1, 4.0 * r2 * e / ((1.0 + e) * (1.0 + e))))
            }
            PotentialKind::Guillemin => {
                let y = self.primal_point0(s)?;
                invert(self.hess_u0(&y)?)
            }
            PotentialKind::BergmanSum(t) => Ok(bergman_moments(t, s).1),
        }
    }

    fn u0(&self, y: &[f64]) -> Result<f64> {
        match self.log_form() {
            Some((sc, c0)) => {
                let mut acc = 0.0;
                for l in self.base.facet_values_unchecked(y) {
                    let v = xlogx(l);
                    if v.is_nan() {
                        return Err(Error::OutOfDomain(y.to_vec()));
                    }
                    acc += v;
                }
                Ok(sc * acc + c0)
            }
            None => {
                let s = self.dual_point0(y)?;
                Ok(dot(y, &s) - self.phi0(&s)?)
            }
        }
    }

    fn grad_u0(&self, y: &[f64]) -> Result<Vec<f64>> {
        match self.log_form() {
            Some((sc, _)) => {
                let ls = self.base.facet_values_unchecked(y);
                if ls.iter().any(|&l| l <= 0.0) {
                    return Err(Error::OutOfDomain(y.to_vec()));
                }
                let mut g = vec![0.0; y.len()];
                for (f, l) in self.base.facets().iter().zip(ls) {
                    let w = sc * (l.ln() + 1.0);
                    for (gi, &v) in g.iter_mut().zip(&f.normal) {
                        *gi += w * v as f64;
                    }
                }
                Ok(g)
            }
            None => self.dual_point0(y),
        }
    }

    fn hess_u0(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        match self.log_form() {
            Some((sc, _)) => {
                let n = y.len();
                let ls = self.base.facet_values_unchecked(y);
                if ls.iter().any(|&l| l <= 0.0) {
                    return Err(Error::OutOfDomain(y.to_vec()));
                }
                let mut h = DMatrix::zeros(n, n);
                for (f, l) in self.base.facets().iter().zip(ls) {
                    for i in 0..n {
                        for j in 0..n {
                            h[(i, j)] += sc * (f.normal[i] * f.normal[j]) as f64 / l;
                        }
                    }
                }
                Ok(h)
            }
            None => {
                let s = self.dual_point0(y)?;
                invert(self.hess_phi0(&s)?)
            }
        }
    }

    /// `σ = ∇u0(y)` for pairs whose `u` is only known through `φ`.
    fn dual_point0(&self, y: &[f64]) -> Result<Vec<f64>> {
        if self.base.min_facet_value(y)? <= 0.0 {
            return Err(Error::OutOfDomain(y.to_vec()));
        }
        let f = Phi0 { pair: self };
        let start = guillemin_gradient(&self.base, y);
        solve_gradient_equation(&f, y, start)
    }

    /// `y = ∇φ0(σ)` for pairs whose `φ` is only known through `u`.
    fn primal_point0(&self, s: &[f64]) -> Result<Vec<f64>> {
        let f = U0 { pair: self };
        solve_gradient_equation(&f, s, self.base.barycenter().to_vec())
    }

    // ---- gauged evaluations ----

    fn to_base_rho(&self, rho: &[f64]) -> Vec<f64> {
        rho.iter().zip(&self.gauge.kv).map(|(r, &k)| r - k as f64).collect()
    }

    fn to_base_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.gauge.b).map(|(a, b)| a - b).collect()
    }

    pub fn phi(&self, rho: &[f64]) -> Result<f64> {
        check_dim(self.dim(), rho.len())?;
        let s = self.to_base_rho(rho);
        Ok(self.phi0(&s)? + dot(&self.gauge.b, &s) + self.gauge.c)
    }

    /// `x = ∇φ(ρ)`, a point of the open polytope.
    pub fn moment_map(&self, rho: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), rho.len())?;
        let s = self.to_base_rho(rho);
        Ok(self
            .grad_phi0(&s)?
            .iter()
            .zip(&self.gauge.b)
            .map(|(a, b)| a + b)
            .collect())
    }

    pub fn hess_phi(&self, rho: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), rho.len())?;
        self.hess_phi0(&self.to_base_rho(rho))
    }

    pub fn log_det_hess_phi(&self, rho: &[f64]) -> Result<f64> {
        log_det_spd(&self.hess_phi(rho)?)
    }

    /// Symplectic potential; finite on the closed polytope for log-form pairs.
    pub fn u(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.u0(&self.to_base_x(x))? + dot(&self.gauge.kv_f64(), x) - self.gauge.c)
    }

    pub fn grad_u(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self
            .grad_u0(&self.to_base_x(x))?
            .iter()
            .zip(&self.gauge.kv)
            .map(|(a, &k)| a + k as f64)
            .collect())
    }

    pub fn hess_u(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.len())?;
        self.hess_u0(&self.to_base_x(x))
    }

    /// `ρ` with `∇φ(ρ) = x`, i.e. `∇u(x)`.
    pub fn inverse_moment_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.polytope.require_interior(x, INTERIOR_MARGIN)?;
        self.grad_u(x)
    }

    /// `L(x) = ½ log det ∇²u(x)`.
    pub fn curvature_scalar_l(&self, x: &[f64]) -> Result<f64> {
        self.polytope.require_interior(x, INTERIOR_MARGIN)?;
        Ok(0.5 * log_det_spd(&self.hess_u(x)?)?)
    }

    /// `L(x)` from a central-difference Hessian of `∇u` with step `h`
    /// (default `FD_STEP · max(1, |x|)`).
    pub fn curvature_scalar_l_fd(&self, x: &[f64], h: Option<f64>) -> Result<f64> {
        self.polytope.require_interior(x, INTERIOR_MARGIN)?;
        let hess = finite_difference_jacobian(|p| self.grad_u(p), x, h)?;
        Ok(0.5 * log_det_spd(&hess)?)
    }

    /// `max_ρ |−log det ∇²φ(ρ) − aφ(ρ) − ⟨b, ρ⟩ − c|` over the grid.
    pub fn ke_gauge_residual(&self, a: f64, b: &[f64], c: f64, grid: &[Vec<f64>]) -> Result<f64> {
        check_dim(self.dim(), b.len())?;
        let mut worst = 0.0f64;
        for rho in grid {
            let r = -self.log_det_hess_phi(rho)? - a * self.phi(rho)? - dot(b, rho) - c;
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }

    /// Exponent of the moment-coordinate norming integrand,
    /// `k(u(x) + ⟨α/k − x, ∇u(x)⟩)`, evaluated so that it stays finite
    /// when `α/k` and `x` approach the same facet.
    pub fn log_norming_integrand(&self, alpha: &[f64], k: u32, x: &[f64]) -> Result<f64> {
        let kf = k as f64;
        let ap: Vec<f64> = alpha
            .iter()
            .zip(&self.gauge.b)
            .map(|(a, b)| a - kf * b)
            .collect();
        let y = self.to_base_x(x);
        let shift = dot(&self.gauge.kv_f64(), alpha) - kf * self.gauge.c;
        let base = match self.log_form() {
            Some((sc, c0)) => {
                let mut acc = 0.0;
                for (f, ly) in self.base.facets().iter().zip(self.base.facet_values_unchecked(&y)) {
                    let la = (dot_i(&f.normal, &ap) - kf * f.offset).max(0.0);
                    acc += xlogy(la, ly) + la - kf * ly;
                }
                sc * acc + kf * c0
            }
            None => {
                let s = self.dual_point0(&y)?;
                dot(&ap, &s) - kf * self.phi0(&s)?
            }
        };
        Ok(base + shift)
    }

    /// `φ` as a convex function of `ρ`.
    pub fn phi_function(&self) -> PhiFunction<'_> {
        PhiFunction { pair: self }
    }

    /// `u` as a convex function on the open polytope.
    pub fn u_function(&self) -> UFunction<'_> {
        UFunction { pair: self }
    }

    pub fn to_spec(&self) -> ManifoldSpec {
        let potential = match &self.kind {
            PotentialKind::FubiniStudy { m } => PotentialSpec::FubiniStudy { m: *m },
            PotentialKind::RoundSphere { r2 } => PotentialSpec::RoundSphere { r2: *r2 },
            PotentialKind::Guillemin => PotentialSpec::Guillemin {},
            PotentialKind::BergmanSum(t) => PotentialSpec::BergmanSum {
                table: t.to_data(),
            },
        };
        ManifoldSpec {
            polytope: Some(PolytopeRef::Inline(self.base.clone().into())),
            potential,
            gauge: if self.gauge.is_identity() {
                None
            } else {
                Some(self.gauge.clone())
            },
        }
    }

    pub fn from_spec(spec: &ManifoldSpec) -> Result<Self> {
        let polytope = match &spec.polytope {
            None => None,
            Some(PolytopeRef::Named(n)) => Some(DelzantPolytope::named(n)?),
            Some(PolytopeRef::Inline(p)) => Some(DelzantPolytope::try_from(p.clone())?),
        };
        let pair = match &spec.potential {
            PotentialSpec::FubiniStudy { m } => Self::fubini_study(*m)?,
            PotentialSpec::RoundSphere { r2 } => Self::round_sphere(*r2)?,
            PotentialSpec::Guillemin {} => Self::guillemin(polytope.clone().ok_or_else(|| {
                Error::InvalidParameter("guillemin potential needs a polytope".into())
            })?),
            PotentialSpec::BergmanSum { table } => {
                let p = polytope.clone().ok_or_else(|| {
                    Error::InvalidParameter("bergman-sum potential needs a polytope".into())
                })?;
                Self::bergman_sum(Arc::new(NormingTable::from_data(table.clone(), p)?))
            }
            PotentialSpec::Builtin { name } => Self::builtin(name)?,
        };
        if let (Some(p), false) = (&polytope, matches!(spec.potential, PotentialSpec::Builtin { .. })) {
            if p != &pair.base {
                return Err(Error::InvalidPolytope(
                    "polytope does not match the potential".into(),
                ));
            }
        }
        match &spec.gauge {
            Some(g) => pair.try_apply_gauge(g),
            None => Ok(pair),
        }
    }

    /// Parses either `builtin:NAME`, a bare builtin name, or a JSON manifold spec.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(name) = t.strip_prefix("builtin:") {
            return Self::builtin(name);
        }
        if t.starts_with('{') {
            let spec: ManifoldSpec =
                serde_json::from_str(t).map_err(|e| Error::Serialization(e.to_string()))?;
            return Self::from_spec(&spec);
        }
        Self::builtin(t)
    }
}

pub fn builtin_pair(name: &str) -> Result<PotentialPair> {
    PotentialPair::builtin(name)
}

/// JSON manifold description: polytope, potential kind with parameters, optional gauge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<PolytopeRef>,
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeShift>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeRef {
    Named(String),
    Inline(PolytopeSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum PotentialSpec {
    FubiniStudy { m: usize },
    RoundSphere { r2: f64 },
    Guillemin {},
    BergmanSum { table: NormingTableData },
    Builtin { name: String },
}

pub struct PhiFunction<'a> {
    pair: &'a PotentialPair,
}

impl ConvexFunction for PhiFunction<'_> {
    fn dim(&self) -> usize {
        self.pair.dim()
    }
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.pair.phi(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.pair.moment_map(p)
    }
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.pair.hess_phi(p)
    }
    fn initial_guess(&self, _y: &[f64]) -> Vec<f64> {
        self.pair.gauge.kv_f64()
    }
}

pub struct UFunction<'a> {
    pair: &'a PotentialPair,
}

impl ConvexFunction for UFunction<'_> {
    fn dim(&self) -> usize {
        self.pair.dim()
    }
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.pair.u(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.pair.grad_u(p)
    }
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.pair.hess_u(p)
    }
    fn in_domain(&self, p: &[f64]) -> bool {
        self.pair
            .polytope
            .min_facet_value(p)
            .map(|v| v > 0.0)
            .unwrap_or(false)
    }
    fn initial_guess(&self, _y: &[f64]) -> Vec<f64> {
        self.pair.polytope.barycenter().to_vec()
    }
}

struct Phi0<'a> {
    pair: &'a PotentialPair,
}

impl ConvexFunction for Phi0<'_> {
    fn dim(&self) -> usize {
        self.pair.dim()
    }
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.pair.phi0(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.pair.grad_phi0(p)
    }
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.pair.hess_phi0(p)
    }
}

struct U0<'a> {
    pair: &'a PotentialPair,
}

impl ConvexFunction for U0<'_> {
    fn dim(&self) -> usize {
        self.pair.dim()
    }
    fn value(&self, p: &[f64]) -> Result<f64> {
        self.pair.u0(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.pair.grad_u0(p)
    }
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        self.pair.hess_u0(p)
    }
    fn in_domain(&self, p: &[f64]) -> bool {
        self.pair
            .base
            .facet_values_unchecked(p)
            .iter()
            .all(|&l| l > 0.0)
    }
}

fn guillemin_gradient(p: &DelzantPolytope, y: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; y.len()];
    for (f, l) in p.facets().iter().zip(p.facet_values_unchecked(y)) {
        let w = l.max(1e-300).ln() + 1.0;
        for (gi, &v) in g.iter_mut().zip(&f.normal) {
            *gi += w * v as f64;
        }
    }
    g
}

fn bergman_lse(t: &NormingTable, s: &[f64]) -> f64 {
    log_sum_exp(
        t.alphas()
            .iter()
            .zip(t.log_q())
            .map(|(a, lq)| dot_i(a, s) - lq),
    )
}

/// Mean and covariance of `α/ℓ` under the softmax weights, scaled as `∇φ`, `∇²φ`.
fn bergman_moments(t: &NormingTable, s: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let n = s.len();
    let lse = bergman_lse(t, s);
    let lvl = t.level() as f64;
    let mut mean = vec![0.0; n];
    let mut second = DMatrix::<f64>::zeros(n, n);
    for (a, lq) in t.alphas().iter().zip(t.log_q()) {
        let w = (dot_i(a, s) - lq - lse).exp();
        for i in 0..n {
            mean[i] += w * a[i] as f64;
            for j in 0..n {
                second[(i, j)] += w * (a[i] * a[j]) as f64;
            }
        }
    }
    let cov = DMatrix::from_fn(n, n, |i, j| (second[(i, j)] - mean[i] * mean[j]) / lvl);
    (mean.iter().map(|v| v / lvl).collect(), cov)
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn dot_i(a: &[i64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, y)| x as f64 * y).sum()
}

fn invert(h: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.nrows() == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0 / h[(0, 0)]));
    }
    h.try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular Hessian".into()))
}

/// `log det` of a symmetric positive-definite matrix.
pub fn log_det_spd(h: &DMatrix<f64>) -> Result<f64> {
    if h.nrows() == 1 {
        let v = h[(0, 0)];
        return if v > 0.0 {
            Ok(v.ln())
        } else {
            Err(Error::InvalidParameter("Hessian is not positive definite".into()))
        };
    }
    let c = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("Hessian is not positive definite".into()))?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Central-difference Jacobian of `g` at `p`, symmetrized.
pub fn finite_difference_jacobian<G>(g: G, p: &[f64], h: Option<f64>) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = p.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = h.unwrap_or(FD_STEP * p[j].abs().max(1.0));
        let mut fwd = p.to_vec();
        let mut bwd = p.to_vec();
        fwd[j] += step;
        bwd[j] -= step;
        let gf = g(&fwd)?;
        let gb = g(&bwd)?;
        for i in 0..n {
            jac[(i, j)] = (gf[i] - gb[i]) / (2.0 * step);
        }
    }
    Ok((&jac + jac.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fs_cp1_closed_forms() {
        let p = PotentialPair::fubini_study(1).unwrap();
        assert!((p.u(&[0.5]).unwrap() + 2f64.ln()).abs() < 1e-15);
        assert!((p.moment_map(&[3f64.ln()]).unwrap()[0] - 0.75).abs() < 1e-15);
        assert!((p.inverse_moment_map(&[0.75]).unwrap()[0] - 3f64.ln()).abs() < 1e-14);
        assert!((p.curvature_scalar_l(&[0.5]).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!((p.u(&[0.0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn round_sphere_polytope_and_duality() {
        let p = PotentialPair::round_sphere(0.5).unwrap();
        assert_eq!(p.polytope().vertices(), &[vec![-0.5], vec![0.5]]);
        for rho in [-2.0, -0.3, 0.0, 1.1] {
            let x = p.moment_map(&[rho]).unwrap();
            let pairing = p.u(&x).unwrap() + p.phi(&[rho]).unwrap() - x[0] * rho;
            assert!(pairing.abs() < 1e-13, "{pairing}");
        }
    }

    #[test]
    fn guillemin_interval_is_fubini_study() {
        let g = PotentialPair::builtin("guillemin(interval01)").unwrap();
        let f = PotentialPair::fubini_study(1).unwrap();
        for rho in [-3.0, 0.0, 0.4, 2.5] {
            assert!((g.phi(&[rho]).unwrap() - f.phi(&[rho]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_rules() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let c = p.apply_gauge(&GaugeShift::constant(1, 1.0));
        assert!((c.u(&[0.5]).unwrap() + 2f64.ln() + 1.0).abs() < 1e-15);
        let b = p.apply_gauge(&GaugeShift::translate(vec![-0.5]));
        assert_eq!(b.polytope().vertices(), &[vec![-0.5], vec![0.5]]);
        let g = GaugeShift::lattice(vec![3]);
        let back = p.apply_gauge(&g).apply_gauge(&g.inverse());
        for rho in [-1.0, 0.2] {
            assert!((back.phi(&[rho]).unwrap() - p.phi(&[rho]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn ke_residual_fs_cp1() {
        let p = PotentialPair::fubini_study(1).unwrap();
        let grid: Vec<Vec<f64>> = (0..=16).map(|i| vec![-4.0 + 0.5 * i as f64]).collect();
        assert!(p.ke_gauge_residual(2.0, &[-1.0], 0.0, &grid).unwrap() < 1e-10);
        assert!(p.ke_gauge_residual(0.0, &[0.0], 0.0, &grid).unwrap() > 0.1);
        let ke = PotentialPair::builtin("ke-sphere").unwrap();
        assert!(ke.ke_gauge_residual(1.0, &[0.0], 0.0, &grid).unwrap() < 1e-12);
    }

    #[test]
    fn boundary_proximity_rejected() {
        let p = PotentialPair::fubini_study(1).unwrap();
        assert!(matches!(
            p.inverse_moment_map(&[1e-9]),
            Err(Error::BoundaryProximity { .. })
        ));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(
            PotentialPair::builtin("nope"),
            Err(Error::UnknownBuiltin(_))
        ));
        assert!(PotentialPair::builtin("round-sphere(-1)").is_err());
    }
}
