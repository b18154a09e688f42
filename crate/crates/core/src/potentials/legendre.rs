//! Numerical Legendre transforms of smooth strictly convex functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::polytope::DelzantPolytope;
use crate::tolerances::{NEWTON_CONDITION_LIMIT, NEWTON_GRADIENT, NEWTON_MAX_ITER};

/// A smooth strictly convex function with gradient and Hessian.
pub trait ConvexFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> Result<f64>;
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>>;

    /// Open effective domain; the Newton line search never leaves it.
    fn in_domain(&self, p: &[f64]) -> bool {
        p.iter().all(|v| v.is_finite())
    }

    /// Starting point for solving `∇f(p) = y`.
    fn initial_guess(&self, _y: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
}

impl<T: ConvexFunction + ?Sized> ConvexFunction for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, p: &[f64]) -> Result<f64> {
        (**self).value(p)
    }
    fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(p)
    }
    fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(p)
    }
    fn in_domain(&self, p: &[f64]) -> bool {
        (**self).in_domain(p)
    }
    fn initial_guess(&self, y: &[f64]) -> Vec<f64> {
        (**self).initial_guess(y)
    }
}

/// Solves `∇f(p) = y` by damped Newton on `F(p) = f(p) − ⟨y, p⟩`.
///
/// Steps are halved (bisection of the step length) until they stay in the
/// domain and satisfy the Armijo condition; the Hessian is damped when its
/// condition number exceeds the configured limit.
pub fn solve_gradient_equation<F: ConvexFunction + ?Sized>(
    f: &F,
    y: &[f64],
    start: Vec<f64>,
) -> Result<Vec<f64>> {
    let mut p = start;
    if !f.in_domain(&p) {
        return Err(Error::InvalidParameter(format!(
            "Newton start {p:?} outside the domain"
        )));
    }
    let objective = |p: &[f64]| -> Result<f64> {
        Ok(f.value(p)? - p.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
    };
    let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut fval = objective(&p)?;
    let mut residual = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let g: Vec<f64> = f
            .gradient(&p)?
            .iter()
            .zip(y)
            .map(|(a, b)| a - b)
            .collect();
        residual = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual == 0.0 {
            return Ok(p);
        }
        let h = f.hessian(&p)?;
        let d = newton_direction(&h, &g);
        let pnorm = 1.0 + p.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let dnorm = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !dnorm.is_finite() {
            break;
        }
        if pnorm > 1e7 {
            return Err(Error::OutsideGradientRange(y.to_vec()));
        }
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if f.in_domain(&cand) {
                let fc = objective(&cand)?;
                let slack = 1e-14 * (fval.abs() + 1.0);
                if fc <= fval + 1e-4 * t * slope + slack {
                    p = cand;
                    fval = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let step = t * dnorm;
        if step <= 1e-14 * pnorm && residual <= 1e-6 * scale {
            return Ok(p);
        }
        if !accepted {
            // Roundoff floor: the objective can no longer resolve the step.
            if dnorm <= 1e-8 * pnorm || residual <= NEWTON_GRADIENT * scale {
                return Ok(p);
            }
            break;
        }
        if residual <= NEWTON_GRADIENT * scale && step <= 1e-12 * pnorm {
            return Ok(p);
        }
    }
    if residual <= 1e-9 * scale {
        return Ok(p);
    }
    Err(Error::NewtonNonConvergence {
        query: y.to_vec(),
        last: p,
        residual,
    })
}

fn newton_direction(h: &DMatrix<f64>, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    if n == 1 {
        let h00 = h[(0, 0)];
        if h00 > 0.0 && h00.is_finite() {
            return vec![rhs[0] / h00];
        }
    }
    let eig = SymmetricEigen::new(h.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    let mut hh = h.clone();
    if !(lmin > 0.0) || lmax / lmin > NEWTON_CONDITION_LIMIT {
        let damp = lmax.max(1e-300) / NEWTON_CONDITION_LIMIT - lmin.min(0.0);
        for i in 0..n {
            hh[(i, i)] += damp;
        }
    }
    match hh.cholesky() {
        Some(c) => c.solve(&rhs).iter().copied().collect(),
        None => rhs.iter().copied().collect(),
    }
}

/// Numerical Legendre dual `f*(y) = sup_p ⟨y, p⟩ − f(p)`.
///
/// The maximizer solves `∇f(p) = y`; then `∇f*(y) = p` and
/// `∇²f*(y) = (∇²f(p))^{-1}`.
pub struct LegendreDual<F> {
    f: F,
    /// Closure of the gradient range of `f`, when known.
    range: Option<DelzantPolytope>,
}

pub fn legendre_transform<F: ConvexFunction>(f: F, range: Option<DelzantPolytope>) -> LegendreDual<F> {
    LegendreDual { f, range }
}

impl<F: ConvexFunction> LegendreDual<F> {
    pub fn maximizer(&self, y: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim(self.f.dim(), y.len())?;
        if let Some(r) = &self.range {
            if r.min_facet_value(y)? < 0.0 {
                return Err(Error::OutsideGradientRange(y.to_vec()));
            }
        }
        solve_gradient_equation(&self.f, y, self.f.initial_guess(y))
    }

    pub fn inner(&self) -> &F {
        &self.f
    }
}

impl<F: ConvexFunction> ConvexFunction for LegendreDual<F> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        let p = self.maximizer(y)?;
        Ok(y.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() - self.f.value(&p)?)
    }

    fn gradient(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.maximizer(y)
    }

    fn hessian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let p = self.maximizer(y)?;
        self.f
            .hessian(&p)?
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular Hessian in Legendre dual".into()))
    }

    fn in_domain(&self, y: &[f64]) -> bool {
        match &self.range {
            Some(r) => r
                .min_facet_value(y)
                .map(|v| v > 0.0)
                .unwrap_or(false),
            None => y.iter().all(|v| v.is_finite()),
        }
    }

    fn initial_guess(&self, _p: &[f64]) -> Vec<f64> {
        match &self.range {
            Some(r) => r.barycenter().to_vec(),
            None => vec![0.0; self.f.dim()],
        }
    }
}
