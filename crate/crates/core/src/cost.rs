//! Closed-form entropic transport costs between Gaussians.
//!
//! With `X` the SPD Riccati solution for `(S1, S2, eps)`, the cost of the
//! optimal coupling under the negative differential entropy regularizer is
//!
//! ```text
//! |m1 - m2|^2 + Tr S1 + Tr S2 - 2 Tr(S1 X) - (eps/2) log((2 pi e)^{2d} (eps/2)^d |S1 X|)
//! ```
//!
//! and at `eps = 0` it reduces to the squared Bures-Wasserstein distance.

use std::f64::consts::{E, PI};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::riccati::solve_riccati;
use crate::spd::{ensure_same_dim, Gaussian, SpdMatrix};

/// Three-term decomposition of a transport cost. `total` is always the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    /// `|m1 - m2|^2`, plus the reference-measure mean penalty for the relative cost.
    pub mean_term: f64,
    /// `Tr S1 + Tr S2 - 2 Tr(S1 X)`
    pub transport_term: f64,
    pub entropy_term: f64,
    pub eps: f64,
}

impl CostBreakdown {
    fn from_terms(mean_term: f64, transport_term: f64, entropy_term: f64, eps: f64) -> Self {
        Self {
            total: mean_term + transport_term + entropy_term,
            mean_term,
            transport_term,
            entropy_term,
            eps,
        }
    }
}

/// Variance scale of the reference measure `N(0, lambda I)` used by the
/// relative-entropy regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMeasure {
    lambda: f64,
}

impl ReferenceMeasure {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reference variance must be positive, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

struct CovarianceTerms {
    transport: f64,
    logdet_s1x: f64,
}

fn covariance_terms(s1: &SpdMatrix, s2: &SpdMatrix, eps: f64) -> Result<CovarianceTerms> {
    let x = solve_riccati(s1, s2, eps)?.x_eps;
    let tr_s1x = (s1.matrix() * x.matrix()).trace();
    Ok(CovarianceTerms {
        transport: s1.trace() + s2.trace() - 2.0 * tr_s1x,
        logdet_s1x: s1.logdet() + x.logdet(),
    })
}

fn check_eps(eps: f64, allow_zero: bool) -> Result<()> {
    let ok = eps.is_finite() && if allow_zero { eps >= 0.0 } else { eps > 0.0 };
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "eps must be {}, got {eps}",
            if allow_zero { "nonnegative" } else { "positive" }
        )));
    }
    Ok(())
}

/// Entropic transport cost under the negative differential entropy. `eps = 0`
/// gives the classical Bures-Wasserstein cost with a zero entropy term.
pub fn entropic_cost(p: &Gaussian, q: &Gaussian, eps: f64) -> Result<CostBreakdown> {
    ensure_same_dim(p.dim(), q.dim())?;
    check_eps(eps, true)?;
    let d = p.dim() as f64;
    let mean_term = (p.mean() - q.mean()).norm_squared();
    let terms = covariance_terms(p.cov(), q.cov(), eps)?;
    let entropy_term = if eps == 0.0 {
        0.0
    } else {
        -(eps / 2.0)
            * (2.0 * d * (2.0 * PI * E).ln() + d * (eps / 2.0).ln() + terms.logdet_s1x)
    };
    Ok(CostBreakdown::from_terms(
        mean_term,
        terms.transport,
        entropy_term,
        eps,
    ))
}

/// Cost with the regularizer `eps * KL(pi | N(0, lambda I) x N(0, lambda I))`.
/// The optimal coupling is the same as for [`entropic_cost`]; only the value moves.
pub fn relative_entropic_cost(
    p: &Gaussian,
    q: &Gaussian,
    eps: f64,
    reference: ReferenceMeasure,
) -> Result<CostBreakdown> {
    ensure_same_dim(p.dim(), q.dim())?;
    check_eps(eps, false)?;
    let d = p.dim() as f64;
    let lambda = reference.lambda();
    let mean_term = (p.mean() - q.mean()).norm_squared()
        + eps / (2.0 * lambda) * (p.mean().norm_squared() + q.mean().norm_squared());
    let terms = covariance_terms(p.cov(), q.cov(), eps)?;
    let traces = p.cov().trace() + q.cov().trace();
    let entropy_term = -(eps / 2.0)
        * (terms.logdet_s1x
            - traces / lambda
            - d * (2.0 * lambda.ln() - (eps / 2.0).ln() - 2.0));
    Ok(CostBreakdown::from_terms(
        mean_term,
        terms.transport,
        entropy_term,
        eps,
    ))
}

/// Lower bound on the entropic cost between any two measures with the given
/// first and second moments. Attained exactly by the Gaussians with those moments.
pub fn gelbrich_lower_bound(
    mean1: &DVector<f64>,
    cov1: &SpdMatrix,
    mean2: &DVector<f64>,
    cov2: &SpdMatrix,
    eps: f64,
) -> Result<f64> {
    check_eps(eps, false)?;
    let p = Gaussian::new(mean1.clone(), cov1.clone())?;
    let q = Gaussian::new(mean2.clone(), cov2.clone())?;
    Ok(entropic_cost(&p, &q, eps)?.total)
}

/// The minimizer of `q -> cost(p, q)`, which is `N(mu, S + (eps/2) I)`, and the
/// minimal value `-(eps/2) log|S| - (d eps/2) log(2 pi^2 e eps)`.
pub fn best_approximation(p: &Gaussian, eps: f64) -> Result<(Gaussian, f64)> {
    check_eps(eps, false)?;
    let d = p.dim() as f64;
    let best = Gaussian::new(p.mean().clone(), p.cov().shifted(eps / 2.0))?;
    let value = -(eps / 2.0) * p.cov().logdet() - d * eps / 2.0 * (2.0 * PI * PI * E * eps).ln();
    Ok((best, value))
}

/// One-dimensional cost between `N(0, var1)` and `N(0, var2)`.
pub fn cost_1d(var1: f64, var2: f64, eps: f64) -> Result<f64> {
    for (name, v) in [("var1", var1), ("var2", var2), ("eps", eps)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let quarter = eps / 4.0;
    let prod = var1 * var2;
    // var1 * X, the 1-D Riccati root times var1
    let s1x = prod / ((prod + quarter * quarter).sqrt() + quarter);
    let entropy = -(eps / 2.0) * ((2.0 * PI * E).powi(2) * (eps / 2.0) * s1x).ln();
    Ok(var1 + var2 - 2.0 * s1x + entropy)
}
