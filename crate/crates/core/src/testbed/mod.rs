//! Point-set and truth-function generators.

mod legendre;
mod polynomial;
mod rotation;
mod sobol;

pub use legendre::{legendre, MAX_LEGENDRE_DEGREE};
pub use polynomial::{build_index_set, eval_truth, LambdaSchedule, MultiIndex, PolynomialSpec, RandomPolynomial};
pub use rotation::{random_rotation, random_rotation_with, Matrix};
pub use sobol::{sobol_points, SobolStream, MAX_SOBOL_DIM};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::Design;

/// The generator used for every seeded random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `count` points drawn independently and uniformly in `[0, 1)^dim`.
pub fn uniform_points<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Design {
    let coords = (0..dim * count).map(|_| rng.random::<f64>()).collect();
    Design::from_flat(dim, coords).expect("dim > 0")
}
