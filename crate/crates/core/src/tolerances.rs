//! Default numerical tolerances shared by the library, the CLI and the tests.

/// Interior margin in facet-value units; boundary-sensitive operations reject
/// points closer to ∂P than this.
pub const INTERIOR_MARGIN: f64 = 1e-6;

/// Relative tolerance of the adaptive norming-constant quadrature.
pub const QUADRATURE_RTOL: f64 = 1e-8;

/// Dyadic refinement depth of the norming-constant quadrature (per dimension).
pub const QUADRATURE_MAX_DEPTH: usize = 12;

/// Relative tolerance for the density-of-states flatness test.
pub const BALANCED: f64 = 1e-6;

/// Atomwise tolerance for `μ_k = (μ_1)^{*k}`.
pub const CONVOLUTION: f64 = 1e-10;

/// Newton solves for Legendre duals.
pub const NEWTON_GRADIENT: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 200;
/// Condition number above which the Newton Hessian is damped.
pub const NEWTON_CONDITION_LIMIT: f64 = 1e8;

/// Residual allowed in the Kähler–Einstein gauge equation.
pub const KAHLER_EINSTEIN: f64 = 1e-8;

/// Final-level |H_exact − H_asym| gate of the entropy table.
pub const ENTROPY_GAP: f64 = 0.01;

/// Ratio gate diff(4k)/diff(k) on a ×4 ladder.
pub const ENTROPY_RATE: f64 = 0.7;

/// Relative finite-difference step, `h = FD_STEP · max(1, |p|)`.
pub const FD_STEP: f64 = 1e-5;

/// Largest level for which partition functions are convolved exactly.
pub const PARTITION_LEVEL_CAP: u32 = 64;
