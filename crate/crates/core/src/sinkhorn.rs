//! Discretized entropic transport, used as an independent check on the closed forms.
//!
//! Measures are discretized on cell-centered grids and the discrete problem
//! `min <c, pi> + eps * sum pi_ij log pi_ij` over couplings of the two weight
//! vectors is solved with log-domain Sinkhorn iterations. The discrete entropy
//! relates to the differential entropy of the continuous plan through the cell
//! volumes: `pi_ij ~ r(x_i, y_j) v_x v_y`, so subtracting `eps log(v_x v_y)`
//! from the discrete objective estimates the continuous cost.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spd::{ensure_same_dim, Gaussian};

pub const DEFAULT_POINTS_PER_AXIS: usize = 400;
pub const DEFAULT_EXTENT_STD: f64 = 6.0;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 20_000;

const MAX_GRID_POINTS: usize = 1_000_000;
const MAX_COST_ENTRIES: usize = 100_000_000;
const MAX_GRID_DIM: usize = 3;
const MIN_POINTS_PER_AXIS: usize = 8;
/// Sweeps between recorded objective values.
const TRACE_EVERY: usize = 10;

/// Weighted point cloud on a regular grid.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
    cell_volume: f64,
    captured_mass: f64,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<DVector<f64>>, weights: Vec<f64>, cell_volume: f64) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        for p in &points {
            ensure_same_dim(d, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        if !(cell_volume > 0.0) || !cell_volume.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cell volume must be positive, got {cell_volume}"
            )));
        }
        let mut order: Vec<&DVector<f64>> = points.iter().collect();
        order.sort_by(|a, b| lexicographic(a, b));
        if order.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("points must be pairwise distinct".into()));
        }
        Ok(Self {
            points,
            weights,
            cell_volume,
            captured_mass: 1.0,
        })
    }

    /// Equal weights on the cell centers of a regular grid over a box.
    pub fn uniform_box(lower: &[f64], upper: &[f64], points_per_axis: usize) -> Result<Self> {
        ensure_same_dim(lower.len(), upper.len())?;
        if lower.iter().zip(upper).any(|(l, u)| !(u > l)) {
            return Err(Error::InvalidArgument("box must have positive extent".into()));
        }
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| cell_centers(*l, *u, points_per_axis))
            .collect();
        let cell_volume = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| (u - l) / points_per_axis as f64)
            .product();
        let grid = grid_product(&axes, points_per_axis)?;
        let n = grid.len();
        let points = grid.into_iter().map(DVector::from_vec).collect();
        Self::new(points, vec![1.0 / n as f64; n], cell_volume)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Density mass on the grid before renormalization (`1` when not gridded from a density).
    pub fn captured_mass(&self) -> f64 {
        self.captured_mass
    }

    pub fn mean(&self) -> DVector<f64> {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(DVector::zeros(self.dim()), |acc, (p, w)| acc + p * *w)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        self.points
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, (p, w)| {
                let c = p - &m;
                acc + &c * c.transpose() * *w
            })
    }
}

fn lexicographic(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

fn cell_centers(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
}

fn grid_product(axes: &[Vec<f64>], points_per_axis: usize) -> Result<Vec<Vec<f64>>> {
    let d = axes.len();
    if d == 0 || d > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(format!(
            "grids support dimension 1..={MAX_GRID_DIM}, got {d}"
        )));
    }
    if points_per_axis < MIN_POINTS_PER_AXIS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_POINTS_PER_AXIS} points per axis, got {points_per_axis}"
        )));
    }
    let total = points_per_axis
        .checked_pow(d as u32)
        .filter(|t| *t <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            Error::Resource(format!(
                "{points_per_axis}^{d} grid points exceeds {MAX_GRID_POINTS}"
            ))
        })?;
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        out.push(idx.iter().zip(axes).map(|(i, a)| a[*i]).collect());
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < points_per_axis {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

/// Grid over `mean +- extent_std` standard deviations along each principal axis
/// of the covariance, weighted by the density at the cell centers.
pub fn discretize_gaussian(
    p: &Gaussian,
    points_per_axis: usize,
    extent_std: f64,
) -> Result<DiscreteMeasure> {
    if !(extent_std > 0.0) || !extent_std.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "extent must be positive, got {extent_std}"
        )));
    }
    let d = p.dim();
    let variances = p.cov().eigenvalues();
    let axes_dirs = p.cov().eigenvectors();
    let axes: Vec<Vec<f64>> = variances
        .iter()
        .map(|v| {
            let half = extent_std * v.sqrt();
            cell_centers(-half, half, points_per_axis)
        })
        .collect();
    let cell_volume: f64 = variances
        .iter()
        .map(|v| 2.0 * extent_std * v.sqrt() / points_per_axis as f64)
        .product();
    let grid = grid_product(&axes, points_per_axis)?;

    let log_norm = -0.5 * (d as f64 * (2.0 * PI).ln() + p.cov().logdet());
    let mut points = Vec::with_capacity(grid.len());
    let mut density = Vec::with_capacity(grid.len());
    for coords in grid {
        let maha: f64 = coords
            .iter()
            .zip(variances.iter())
            .map(|(t, v)| t * t / v)
            .sum();
        density.push((log_norm - 0.5 * maha).exp());
        let offset = axes_dirs * DVector::from_vec(coords);
        points.push(p.mean() + offset);
    }
    let total: f64 = density.iter().sum();
    let weights: Vec<f64> = density.iter().map(|w| w / total).collect();
    let mut measure = DiscreteMeasure::new(points, weights, cell_volume)?;
    measure.captured_mass = total * cell_volume;
    Ok(measure)
}

/// `c_ij = |x_i - y_j|^2`
pub fn squared_distance_cost(a: &DiscreteMeasure, b: &DiscreteMeasure) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        (&a.points[i] - &b.points[j]).norm_squared()
    })
}

/// Which entropy the discrete solver regularizes with. Both have the same minimizer
/// on a fixed pair of marginals; they differ in the potentials' normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `KL(pi | a x b)`, giving `pi_ij = a_i b_j exp((f_i + g_j - c_ij)/eps)`.
    RelativeToProduct,
    /// `sum pi log pi`, giving `pi_ij = exp((f_i + g_j - c_ij)/eps)`.
    Entropy,
}

#[derive(Debug, Clone, Copy)]
pub struct SinkhornOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub regularizer: Regularizer,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            regularizer: Regularizer::RelativeToProduct,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    pub plan: DMatrix<f64>,
    pub potentials_f: DVector<f64>,
    pub potentials_g: DVector<f64>,
    /// `<c, pi> + eps * sum pi log pi`
    pub discrete_objective: f64,
    /// `discrete_objective - eps * log(v_x v_y)`
    pub corrected_objective: f64,
    pub iterations: usize,
    /// L1 deviation of the row sums from the source weights; columns are exact.
    pub marginal_error: f64,
    pub converged: bool,
    /// Discrete objective every few sweeps; it climbs to the optimum from below.
    pub objective_trace: Vec<f64>,
    pub regularizer: Regularizer,
}

/// Streaming log-sum-exp.
#[derive(Clone, Copy)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    fn push(&mut self, v: f64) {
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

struct Problem<'a> {
    cost: &'a [f64],
    n: usize,
    m: usize,
    eps: f64,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    // kernel offsets: log weights for the KL form, zero for plain entropy
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Problem<'_> {
    fn row_update(&self, g: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.eps;
        for i in 0..self.n {
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            let mut acc = LogSumExp::new();
            for j in 0..self.m {
                acc.push(self.beta[j] + (g[j] - row[j]) * inv);
            }
            out[i] = self.eps * (self.log_a[i] - self.alpha[i] - acc.value());
        }
    }

    fn col_update(&self, f: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.eps;
        let mut acc = vec![LogSumExp::new(); self.m];
        for i in 0..self.n {
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            let shift = self.alpha[i] + f[i] * inv;
            for j in 0..self.m {
                acc[j].push(shift - row[j] * inv);
            }
        }
        for j in 0..self.m {
            out[j] = self.eps * (self.log_b[j] - self.beta[j] - acc[j].value());
        }
    }

    #[inline]
    fn log_plan(&self, f: &[f64], g: &[f64], i: usize, j: usize) -> f64 {
        self.alpha[i] + self.beta[j] + (f[i] + g[j] - self.cost[i * self.m + j]) / self.eps
    }

    fn objective(&self, f: &[f64], g: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for j in 0..self.m {
                let lp = self.log_plan(f, g, i, j);
                let p = lp.exp();
                if p > 0.0 {
                    total += p * (self.cost[i * self.m + j] + self.eps * lp);
                }
            }
        }
        total
    }

    /// `sum_i a_i |exp((f_i - f_next_i)/eps) - 1|`: row sums under `f` are `a_i exp((f_i - f_next_i)/eps)`.
    fn row_error(&self, f: &[f64], f_next: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| self.log_a[i].exp() * (((f[i] - f_next[i]) / self.eps).exp() - 1.0).abs())
            .sum()
    }
}

/// Log-domain Sinkhorn with the product-reference regularizer.
pub fn sinkhorn_solve(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    sinkhorn_solve_with(
        a,
        b,
        eps,
        &SinkhornOptions {
            tol,
            max_iter,
            regularizer: Regularizer::RelativeToProduct,
        },
    )
}

pub fn sinkhorn_solve_with(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    eps: f64,
    options: &SinkhornOptions,
) -> Result<SinkhornResult> {
    ensure_same_dim(a.dim(), b.dim())?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if !(options.tol > 0.0) || options.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "tol must be positive and max_iter at least 1".into(),
        ));
    }
    // zero-weight atoms carry no mass in any coupling; solve on the support only
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a.weights[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b.weights[j] > 0.0).collect();
    let (n, m) = (rows.len(), cols.len());
    if n.saturating_mul(m) > MAX_COST_ENTRIES {
        return Err(Error::Resource(format!(
            "{n}x{m} cost matrix exceeds {MAX_COST_ENTRIES} entries"
        )));
    }
    let mut cost = Vec::with_capacity(n * m);
    for &i in &rows {
        for &j in &cols {
            cost.push((&a.points[i] - &b.points[j]).norm_squared());
        }
    }
    let log_a: Vec<f64> = rows.iter().map(|&i| a.weights[i].ln()).collect();
    let log_b: Vec<f64> = cols.iter().map(|&j| b.weights[j].ln()).collect();
    let (alpha, beta) = match options.regularizer {
        Regularizer::RelativeToProduct => (log_a.clone(), log_b.clone()),
        Regularizer::Entropy => (vec![0.0; n], vec![0.0; m]),
    };
    let problem = Problem {
        cost: &cost,
        n,
        m,
        eps,
        log_a,
        log_b,
        alpha,
        beta,
    };

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut f_next = vec![0.0; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let marginal_error = loop {
        problem.row_update(&g, &mut f_next);
        if iterations > 0 {
            let err = problem.row_error(&f, &f_next);
            if err <= options.tol || iterations >= options.max_iter {
                break err;
            }
        }
        std::mem::swap(&mut f, &mut f_next);
        problem.col_update(&f, &mut g);
        iterations += 1;
        if iterations % TRACE_EVERY == 0 {
            trace.push(problem.objective(&f, &g));
        }
    };
    let converged = marginal_error <= options.tol;
    let discrete_objective = problem.objective(&f, &g);

    let inactive = match options.regularizer {
        Regularizer::RelativeToProduct => 0.0,
        Regularizer::Entropy => f64::NEG_INFINITY,
    };
    let mut potentials_f = DVector::from_element(a.len(), inactive);
    let mut potentials_g = DVector::from_element(b.len(), inactive);
    for (k, &i) in rows.iter().enumerate() {
        potentials_f[i] = f[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        potentials_g[j] = g[k];
    }
    let mut plan = DMatrix::zeros(a.len(), b.len());
    for (ki, &i) in rows.iter().enumerate() {
        for (kj, &j) in cols.iter().enumerate() {
            plan[(i, j)] = problem.log_plan(&f, &g, ki, kj).exp();
        }
    }

    Ok(SinkhornResult {
        plan,
        potentials_f,
        potentials_g,
        discrete_objective,
        corrected_objective: discrete_objective
            - eps * (a.cell_volume * b.cell_volume).ln(),
        iterations,
        marginal_error,
        converged,
        objective_trace: trace,
        regularizer: options.regularizer,
    })
}

/// Grid settings for the oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleSettings {
    pub points_per_axis: usize,
    pub extent_std: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            points_per_axis: DEFAULT_POINTS_PER_AXIS,
            extent_std: DEFAULT_EXTENT_STD,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Discretizes both Gaussians and runs the solver; the caller inspects convergence.
pub fn oracle_run(p: &Gaussian, q: &Gaussian, eps: f64, settings: &OracleSettings) -> Result<SinkhornResult> {
    ensure_same_dim(p.dim(), q.dim())?;
    let a = discretize_gaussian(p, settings.points_per_axis, settings.extent_std)?;
    let b = discretize_gaussian(q, settings.points_per_axis, settings.extent_std)?;
    sinkhorn_solve(&a, &b, eps, settings.tol, settings.max_iter)
}

/// Grid estimate of the continuous entropic cost between two Gaussians.
pub fn oracle_cost(
    p: &Gaussian,
    q: &Gaussian,
    eps: f64,
    points_per_axis: usize,
    extent_std: f64,
) -> Result<f64> {
    let settings = OracleSettings {
        points_per_axis,
        extent_std,
        ..OracleSettings::default()
    };
    let result = oracle_run(p, q, eps, &settings)?;
    if !result.converged {
        return Err(Error::NotConverged {
            what: "sinkhorn",
            iterations: result.iterations,
            residual: result.marginal_error,
        });
    }
    Ok(result.corrected_objective)
}
