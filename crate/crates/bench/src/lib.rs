//! Shared fixtures for the pipeline benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xrpipe_core::metrics::{tokenize, TokenSequence};

/// Report-scale token sequences with realistic overlap.
pub fn report_pair() -> (TokenSequence, TokenSequence) {
    let candidate = tokenize(
        "The heart size and mediastinal contours appear within normal limits. The lungs are \
         clear. There is no focal airspace opacity. No pleural effusion or pneumothorax is seen.",
    );
    let reference = tokenize(
        "The heart and mediastinum are unremarkable. The lungs are clear without infiltrate. \
         There is no effusion or pneumothorax.",
    );
    (candidate, reference)
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
