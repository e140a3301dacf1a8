//! Random-sampling lower bound on the largest RRMSE over the dictionary span.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use koopman_core::EdmdModel;

/// Largest RRMSE over `samples` random complex unit coefficient vectors.
///
/// Works on the Gram forms `EᵀE` and `D(Y)ᵀD(Y)` of the residual
/// `E = D(Y) − D(X)K_F`, so each sample costs `O(N_d²)`.
pub fn sampled_max_rrmse(model: &EdmdModel, samples: usize, seed: u64) -> f64 {
    let dy = model.dy().matrix();
    let residual = dy - model.dx().matrix() * model.kf();
    let a = to_complex(&(residual.transpose() * &residual));
    let b = to_complex(&(dy.transpose() * dy));
    let nd = model.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let v = DVector::from_fn(nd, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let v = &v / Complex64::new(v.norm(), 0.0);
        let num = v.dotc(&(&a * &v)).re;
        let den = v.dotc(&(&b * &v)).re;
        if den > 0.0 {
            best = best.max((num.max(0.0) / den).sqrt());
        }
    }
    best
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}
