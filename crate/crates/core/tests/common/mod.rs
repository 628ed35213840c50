#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use gauss_eot::{Gaussian, SpdMatrix};
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `M M^T / d + 0.5 I`
pub fn random_spd(rng: &mut StdRng, d: usize) -> SpdMatrix {
    let m = normal_matrix(rng, d, d);
    SpdMatrix::new(&m * m.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5).unwrap()
}

pub fn random_gaussian(rng: &mut StdRng, d: usize) -> Gaussian {
    let mean = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    Gaussian::new(mean, random_spd(rng, d)).unwrap()
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut StdRng, d: usize) -> DMatrix<f64> {
    normal_matrix(rng, d, d).qr().q()
}

/// SPD matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd_in_band(rng: &mut StdRng, d: usize, lo: f64, hi: f64) -> SpdMatrix {
    let q = random_orthogonal(rng, d);
    let diag = DVector::from_fn(d, |_, _| rng.gen_range(lo..hi));
    SpdMatrix::new(&q * DMatrix::from_diagonal(&diag) * q.transpose()).unwrap()
}

/// Symmetric perturbation with Frobenius norm `scale`.
pub fn symmetric_direction(rng: &mut StdRng, d: usize, scale: f64) -> DMatrix<f64> {
    let e = normal_matrix(rng, d, d);
    let s = (&e + e.transpose()) * 0.5;
    let n = s.norm();
    s * (scale / n)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

static COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Writes `contents` to a fresh file under the system temp directory.
pub fn temp_file(name: &str, contents: &str) -> PathBuf {
    let n = COUNTER.fetch_add(1, Ordering::SeqCst);
    let dir = std::env::temp_dir().join(format!("gauss-eot-{}-{n}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}
