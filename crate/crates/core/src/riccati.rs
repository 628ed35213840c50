//! The entropic Riccati equation `X S1 X + (eps/2) X = S2` and the optimal
//! Gaussian coupling built from its SPD solution.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{ensure_same_dim, Gaussian, SpdMatrix};

/// SPD solution of `X S1 X + (eps/2) X = S2`, with its certified residual.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub x_eps: SpdMatrix,
    pub eps: f64,
    /// `||X S1 X + (eps/2) X - S2||_F`
    pub residual: f64,
}

/// Closed-form SPD solution
/// `X = S1^{-1/2} (S1^{1/2} S2 S1^{1/2} + (eps/4)^2 I)^{1/2} S1^{-1/2} - (eps/4) S1^{-1}`.
///
/// `eps = 0` is accepted and yields the classical optimal-map matrix
/// (`X S1 X = S2`).
pub fn solve_riccati(sigma1: &SpdMatrix, sigma2: &SpdMatrix, eps: f64) -> Result<RiccatiSolution> {
    ensure_same_dim(sigma1.dim(), sigma2.dim())?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eps must be finite and nonnegative, got {eps}"
        )));
    }
    let quarter = eps / 4.0;
    let half_root = sigma1.sqrt();
    let inv_half_root = sigma1.inv_sqrt();
    let ill = || Error::IllConditioned {
        cond_sigma1: sigma1.condition_number(),
        cond_sigma2: sigma2.condition_number(),
    };

    let inner = half_root.matrix() * sigma2.matrix() * half_root.matrix();
    let inner = SpdMatrix::from_symmetric_part(inner).map_err(|_| ill())?;
    // sqrt(s + q^2) - q, rewritten to avoid cancellation when q >> s
    let shifted_root = inner.map_spectrum(|s| s / ((s + quarter * quarter).sqrt() + quarter));
    let x = inv_half_root.matrix() * shifted_root.matrix() * inv_half_root.matrix();
    let x_eps = SpdMatrix::from_symmetric_part(x).map_err(|_| ill())?;

    let residual = riccati_residual(sigma1, sigma2, eps, x_eps.matrix());
    Ok(RiccatiSolution {
        x_eps,
        eps,
        residual,
    })
}

/// Solution `Y` of the exchanged equation `Y S2 Y + (eps/2) Y = S1`.
pub fn alt_riccati(sigma1: &SpdMatrix, sigma2: &SpdMatrix, eps: f64) -> Result<RiccatiSolution> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    solve_riccati(sigma2, sigma1, eps)
}

/// Frobenius norm of `X S1 X + (eps/2) X - S2` for an arbitrary candidate `X`.
pub fn riccati_residual(sigma1: &SpdMatrix, sigma2: &SpdMatrix, eps: f64, x: &DMatrix<f64>) -> f64 {
    (x * sigma1.matrix() * x + x * (eps / 2.0) - sigma2.matrix()).norm()
}

/// Quadratic form `x -> x^T M x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    pub matrix: DMatrix<f64>,
    pub constant: f64,
}

impl QuadraticPotential {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.matrix * x)[(0, 0)] + self.constant
    }
}

/// Optimal entropic coupling between two Gaussians: a Gaussian on `R^{2d}`.
///
/// The potentials `f0`, `g0` are expressed in centered coordinates
/// `x - mu1`, `y - mu2`; with them the plan density factorizes as
/// `exp((f0(x) + g0(y) - |x - y|^2) / eps)`.
#[derive(Debug, Clone)]
pub struct EntropicPlan {
    pub mean: DVector<f64>,
    pub sigma_eps: DMatrix<f64>,
    pub x_eps: SpdMatrix,
    pub eps: f64,
    pub f0: QuadraticPotential,
    pub g0: QuadraticPotential,
    pub riccati_residual: f64,
    sigma1: SpdMatrix,
    /// `log |sigma_eps|` from `det = (eps/2)^d det(S1 X)`
    log_det: f64,
}

impl EntropicPlan {
    pub fn dim(&self) -> usize {
        self.x_eps.dim()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Off-diagonal block `S1 X`.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        self.sigma1.matrix() * self.x_eps.matrix()
    }

    /// `[S1^{-1} + (2/eps) X, -(2/eps) I; -(2/eps) I, (2/eps) X^{-1}]`
    pub fn closed_form_inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let k = 2.0 / self.eps;
        let mut inv = DMatrix::zeros(2 * d, 2 * d);
        let top = self.sigma1.inv().matrix() + self.x_eps.matrix() * k;
        let bottom = self.x_eps.inv().matrix() * k;
        inv.view_mut((0, 0), (d, d)).copy_from(&top);
        inv.view_mut((d, d), (d, d)).copy_from(&bottom);
        for i in 0..d {
            inv[(i, d + i)] = -k;
            inv[(d + i, i)] = -k;
        }
        inv
    }

    /// Log-density of the plan at `(x, y)`.
    pub fn log_density(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = self.dim();
        let mut z = DVector::zeros(2 * d);
        z.rows_mut(0, d).copy_from(&(x - self.mean.rows(0, d)));
        z.rows_mut(d, d).copy_from(&(y - self.mean.rows(d, d)));
        let quad = (z.transpose() * self.closed_form_inverse() * &z)[(0, 0)];
        -0.5 * quad - d as f64 * (2.0 * PI).ln() - 0.5 * self.log_det
    }
}

/// Assembles the optimal coupling of `p` and `q` for `eps > 0`.
pub fn assemble_plan(p: &Gaussian, q: &Gaussian, eps: f64) -> Result<EntropicPlan> {
    ensure_same_dim(p.dim(), q.dim())?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "plan requires finite eps > 0, got {eps}"
        )));
    }
    let d = p.dim();
    let sigma1 = p.cov();
    let sigma2 = q.cov();
    let sol = solve_riccati(sigma1, sigma2, eps)?;
    let x = &sol.x_eps;

    let cross = sigma1.matrix() * x.matrix();
    let mut sigma_eps = DMatrix::zeros(2 * d, 2 * d);
    sigma_eps.view_mut((0, 0), (d, d)).copy_from(sigma1.matrix());
    sigma_eps.view_mut((0, d), (d, d)).copy_from(&cross);
    sigma_eps
        .view_mut((d, 0), (d, d))
        .copy_from(&cross.transpose());
    sigma_eps.view_mut((d, d), (d, d)).copy_from(sigma2.matrix());
    if Cholesky::new(sigma_eps.clone()).is_none() {
        return Err(Error::Internal(
            "assembled block covariance is not positive definite".into(),
        ));
    }

    let mut mean = DVector::zeros(2 * d);
    mean.rows_mut(0, d).copy_from(p.mean());
    mean.rows_mut(d, d).copy_from(q.mean());

    let log_det = d as f64 * (eps / 2.0).ln() + sigma1.logdet() + x.logdet();
    let id = DMatrix::<f64>::identity(d, d);
    let f0 = QuadraticPotential {
        matrix: &id - x.matrix() - sigma1.inv().matrix() * (eps / 2.0),
        constant: -(eps / 2.0) * (2.0 * d as f64 * (2.0 * PI).ln() + log_det),
    };
    let g0 = QuadraticPotential {
        matrix: &id - x.inv().matrix(),
        constant: 0.0,
    };

    Ok(EntropicPlan {
        mean,
        sigma_eps,
        x_eps: sol.x_eps.clone(),
        eps,
        f0,
        g0,
        riccati_residual: sol.residual,
        sigma1: sigma1.clone(),
        log_det,
    })
}
