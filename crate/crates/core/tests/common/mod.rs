#![allow(dead_code)]

use mfgda::games::{builtin_kernel, KernelParams};
use mfgda::{GridMeasure, KernelMatrix, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn separable_matrix(n: usize) -> KernelMatrix<f64> {
    let params = KernelParams { a: 1.0, b: 0.5, ..KernelParams::default() };
    let k = builtin_kernel::<f64>("separable", &params).unwrap();
    let g = TorusGrid::standard(1, n).unwrap();
    KernelMatrix::new(k.as_ref(), g, g).unwrap()
}

pub fn cos_diff_matrix(n: usize) -> KernelMatrix<f64> {
    let k = builtin_kernel::<f64>("cos_diff", &KernelParams::default()).unwrap();
    let g = TorusGrid::standard(1, n).unwrap();
    KernelMatrix::new(k.as_ref(), g, g).unwrap()
}

/// Smooth-ish random density: exponential of a few random Fourier modes plus cell noise.
pub fn random_measure(grid: TorusGrid<f64>, rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-1.5..1.5), rng.random_range(0.0..6.3), rng.random_range(1.0..4.0)))
        .collect();
    let pts = grid.points();
    let dim = grid.dim();
    let w = (0..grid.len())
        .map(|i| {
            let x = &pts[i * dim..(i + 1) * dim];
            let s: f64 = modes
                .iter()
                .map(|(a, ph, k)| a * (k.floor() * x.iter().sum::<f64>() + ph).cos())
                .sum();
            (s + 0.1 * rng.random::<f64>()).exp()
        })
        .collect();
    GridMeasure::from_weights(grid, w).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
