//! Entropic barycenters of Gaussian measures.
//!
//! The barycenter of `N(m_i, S_i)` with weights `w_i` is `N(sum w_i m_i, S0)`
//! where `S0` is the SPD fixed point of
//!
//! ```text
//! G(S) = sum_i w_i [ (S^{1/2} S_i S^{1/2} + (eps/4)^2 I)^{1/2} + (eps/4) I ].
//! ```

use nalgebra::{DMatrix, DVector};

use crate::cost::entropic_cost;
use crate::error::{Error, Result};
use crate::spd::{ensure_same_dim, Gaussian, SpdMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

/// Non-decreasing residual streak after which updates are damped.
const STALL_LIMIT: usize = 5;

#[derive(Debug, Clone)]
pub struct BarycenterProblem {
    components: Vec<Gaussian>,
    weights: Vec<f64>,
    eps: f64,
}

impl BarycenterProblem {
    pub fn new(components: Vec<Gaussian>, weights: Vec<f64>, eps: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("at least one component required".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} components but {} weights",
                components.len(),
                weights.len()
            )));
        }
        let d = components[0].dim();
        for c in &components {
            ensure_same_dim(d, c.dim())?;
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weights must be positive, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }
        Ok(Self {
            components,
            weights,
            eps,
        })
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// `sum w_i m_i`
    pub fn barycenter_mean(&self) -> DVector<f64> {
        self.components
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (c, w)| acc + c.mean() * *w)
    }

    /// `sum w_i S_i + (eps/2) I`, the default starting point.
    pub fn initial_guess(&self) -> SpdMatrix {
        let d = self.dim();
        let sum = self
            .components
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(d, d), |acc, (c, w)| acc + c.cov().matrix() * *w);
        SpdMatrix::from_symmetric_part(sum + DMatrix::identity(d, d) * (self.eps / 2.0))
            .expect("convex combination of SPD matrices is SPD")
    }

    /// Applies the fixed-point map once.
    pub fn fixed_point_map(&self, sigma: &SpdMatrix) -> Result<SpdMatrix> {
        ensure_same_dim(self.dim(), sigma.dim())?;
        let d = self.dim();
        let quarter = self.eps / 4.0;
        let root = sigma.sqrt();
        let mut acc = DMatrix::zeros(d, d);
        for (c, w) in self.components.iter().zip(&self.weights) {
            let inner = root.matrix() * c.cov().matrix() * root.matrix();
            let inner = SpdMatrix::from_symmetric_part(inner)?;
            let g = inner.map_spectrum(|s| (s + quarter * quarter).sqrt() + quarter);
            acc += g.matrix() * *w;
        }
        SpdMatrix::from_symmetric_part(acc)
    }
}

/// Eigenvalue range and residual of one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateRecord {
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct BarycenterSolution {
    pub barycenter: Gaussian,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Whether the solver switched to half-step updates.
    pub damped: bool,
    /// One record per visited iterate, starting with the initial point.
    pub trail: Vec<IterateRecord>,
}

/// `|| S^{-1/2} (G(S) - S) S^{-1/2} ||_F`, which equals the Frobenius norm of the
/// left-hand side of the stationarity equation minus the identity.
pub fn barycenter_residual(sigma: &SpdMatrix, problem: &BarycenterProblem) -> Result<f64> {
    let mapped = problem.fixed_point_map(sigma)?;
    Ok(residual_from_map(sigma, &mapped))
}

fn residual_from_map(sigma: &SpdMatrix, mapped: &SpdMatrix) -> f64 {
    let w = sigma.inv_sqrt();
    let lhs = w.matrix() * mapped.matrix() * w.matrix();
    (lhs - DMatrix::identity(sigma.dim(), sigma.dim())).norm()
}

pub fn solve_barycenter(
    problem: &BarycenterProblem,
    tol: f64,
    max_iter: usize,
) -> Result<BarycenterSolution> {
    solve_barycenter_from(problem, problem.initial_guess(), tol, max_iter)
}

/// Fixed-point iteration from an explicit starting covariance.
pub fn solve_barycenter_from(
    problem: &BarycenterProblem,
    init: SpdMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<BarycenterSolution> {
    ensure_same_dim(problem.dim(), init.dim())?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument(
            "tol must be positive and max_iter at least 1".into(),
        ));
    }
    let mut sigma = init;
    let mut trail = Vec::new();
    let mut damped = false;
    let mut stalls = 0;
    let mut best = f64::INFINITY;
    let mut iterations = 0;

    loop {
        let mapped = problem.fixed_point_map(&sigma)?;
        let residual = residual_from_map(&sigma, &mapped);
        trail.push(IterateRecord {
            residual,
            min_eigenvalue: sigma.min_eigenvalue(),
            max_eigenvalue: sigma.max_eigenvalue(),
        });
        if residual <= tol || iterations >= max_iter || !residual.is_finite() {
            let converged = residual <= tol;
            let barycenter = Gaussian::new(problem.barycenter_mean(), sigma)?;
            return Ok(BarycenterSolution {
                barycenter,
                residual,
                iterations,
                converged,
                damped,
                trail,
            });
        }
        if residual < best {
            best = residual;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls >= STALL_LIMIT {
                damped = true;
            }
        }
        sigma = if damped {
            SpdMatrix::from_symmetric_part((sigma.matrix() + mapped.matrix()) * 0.5)?
        } else {
            mapped
        };
        iterations += 1;
    }
}

/// `V(q) = sum_i w_i cost(P_i, q)`.
pub fn eval_objective(problem: &BarycenterProblem, q: &Gaussian) -> Result<f64> {
    ensure_same_dim(problem.dim(), q.dim())?;
    let mut total = 0.0;
    for (c, w) in problem.components.iter().zip(&problem.weights) {
        total += w * entropic_cost(c, q, problem.eps)?.total;
    }
    Ok(total)
}
