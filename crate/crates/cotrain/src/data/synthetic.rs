//! Synthetic 2-D datasets: interleaving moons and Gaussian blobs.
//!
//! Both generators min-max normalize features to `[0, 1]` per column, so
//! the adversarial epsilon has one interpretation everywhere and clipping
//! keeps perturbed points in-domain.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::PI;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Standard normal draw via Box-Muller.
fn gauss(rng: &mut StdRng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Raw (un-normalized) moon points: class 0 on the upper unit arc, class 1
/// on a lower arc shifted right by 1 and down by 0.5.
pub(crate) fn raw_moons(n: usize) -> (Vec<[f64; 2]>, Vec<usize>) {
    let outer = n - n / 2;
    let inner = n / 2;
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..outer {
        let t = if outer > 1 {
            PI * i as f64 / (outer - 1) as f64
        } else {
            0.0
        };
        points.push([t.cos(), t.sin()]);
        labels.push(0);
    }
    for i in 0..inner {
        let t = if inner > 1 {
            PI * i as f64 / (inner - 1) as f64
        } else {
            0.0
        };
        points.push([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    (points, labels)
}

/// Min-max normalizes each column to `[0, 1]`; constant columns map to 0.5.
fn normalize_columns(points: &mut [Vec<f64>]) {
    let dim = points[0].len();
    for c in 0..dim {
        let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
        let hi = points
            .iter()
            .map(|p| p[c])
            .fold(f64::NEG_INFINITY, f64::max);
        for p in points.iter_mut() {
            p[c] = if hi > lo {
                (p[c] - lo) / (hi - lo)
            } else {
                0.5
            };
        }
    }
}

/// Two interleaving half-circle classes with Gaussian jitter.
///
/// Linearly inseparable for `noise_sd = 0` yet separable by a small MLP,
/// which is exactly the regime where unlabeled data pays off.
pub fn two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config(format!("two_moons needs n >= 2, got {n}")));
    }
    if noise_sd < 0.0 {
        return Err(Error::Config(format!(
            "two_moons noise_sd must be >= 0, got {noise_sd}"
        )));
    }
    let (raw, labels) = raw_moons(n);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = raw
        .iter()
        .map(|p| {
            vec![
                p[0] + noise_sd * gauss(&mut rng),
                p[1] + noise_sd * gauss(&mut rng),
            ]
        })
        .collect();
    normalize_columns(&mut points);
    Dataset::new(
        Tensor::from_rows(&points)?,
        labels.into_iter().map(Some).collect(),
        2,
        (0.0, 1.0),
    )
}

/// `classes` isotropic unit-variance Gaussian clusters with centers spread
/// on a circle of radius `separation`.
pub fn gaussian_blobs(n: usize, classes: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "gaussian_blobs needs at least 2 classes, got {classes}"
        )));
    }
    if n < classes {
        return Err(Error::Config(format!(
            "gaussian_blobs needs n >= classes, got n={n}, classes={classes}"
        )));
    }
    if separation < 0.0 {
        return Err(Error::Config(format!(
            "gaussian_blobs separation must be >= 0, got {separation}"
        )));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        // Even split; earlier classes absorb the remainder.
        let quota = n / classes + usize::from(c < n % classes);
        let angle = 2.0 * PI * c as f64 / classes as f64;
        let (cx, cy) = (separation * angle.cos(), separation * angle.sin());
        for _ in 0..quota {
            points.push(vec![cx + gauss(&mut rng), cy + gauss(&mut rng)]);
            labels.push(Some(c));
        }
    }
    normalize_columns(&mut points);
    Dataset::new(Tensor::from_rows(&points)?, labels, classes, (0.0, 1.0))
}
