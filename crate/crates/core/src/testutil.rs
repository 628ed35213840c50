use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::spd::{Gaussian, SpdMatrix};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// `M M^T / d + 0.5 I` with standard normal `M`.
pub fn random_spd(rng: &mut StdRng, d: usize) -> SpdMatrix {
    let m: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let a = &m * m.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
    SpdMatrix::new(a).unwrap()
}

pub fn random_gaussian(rng: &mut StdRng, d: usize) -> Gaussian {
    let mean: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    Gaussian::new(mean, random_spd(rng, d)).unwrap()
}
