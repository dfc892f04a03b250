//! Random fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{DenseTensor3, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let q = random_matrix(rng, rows, cols).qr().q();
    q.columns(0, cols).into_owned()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> DenseTensor3 {
    DenseTensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0))
}
