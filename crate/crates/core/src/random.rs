//! Scalar random variates and seeded streams.

use alloc::format;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Seedable stream used for every chain, fold, and replicate.
pub type ChainRng = ChaCha8Rng;

/// Independent stream for the `index`-th chain of a run seeded with `seed`.
pub fn chain_rng(seed: u64, index: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index))
}

/// Inverse-Gaussian draw with mean `mean` and shape `shape`.
///
/// Transformation with a uniform choice between the two roots. The smaller
/// root is evaluated in a cancellation-free form, which matters for the very
/// large means produced by near-zero residuals.
pub fn inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> Result<f64> {
    if !(mean > 0.0 && shape > 0.0) || mean.is_nan() || !shape.is_finite() {
        return Err(Error::Domain(format!(
            "inverse Gaussian needs positive mean and shape, got ({mean}, {shape})"
        )));
    }
    if mean.is_infinite() {
        // Limit law: Lévy with scale `shape`, i.e. shape / Z².
        let z: f64 = StandardNormal.sample(rng);
        return Ok(shape / (z * z));
    }
    let z: f64 = StandardNormal.sample(rng);
    let w = mean * z * z / shape;
    let small = mean / (1.0 + 0.5 * w + (w + 0.25 * w * w).sqrt());
    let u: f64 = rng.random();
    if u <= mean / (mean + small) {
        Ok(small)
    } else {
        Ok(mean * mean / small)
    }
}

/// Inverse-Gamma draw: `1 / Gamma(shape, rate = scale)`.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
        return Err(Error::Domain(format!(
            "inverse Gamma needs positive shape and scale, got ({shape}, {scale})"
        )));
    }
    let g = Gamma::new(shape, 1.0 / scale)
        .map_err(|_| Error::Domain(format!("invalid Gamma({shape}, {scale})")))?;
    Ok(1.0 / g.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn inverse_gaussian_unit_moments() {
        let mut rng = chain_rng(2024, 0);
        let xs: alloc::vec::Vec<f64> = (0..1_000_000)
            .map(|_| inverse_gaussian(&mut rng, 1.0, 1.0).unwrap())
            .collect();
        let (m, v) = moments(&xs);
        assert!((m - 1.0).abs() < 0.005, "mean {m}");
        assert!((v - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn inverse_gaussian_huge_mean_stays_positive() {
        let mut rng = chain_rng(1, 0);
        for _ in 0..10_000 {
            let x = inverse_gaussian(&mut rng, 1e15, 0.5).unwrap();
            assert!(x > 0.0 && x.is_finite());
        }
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = chain_rng(7, 0);
        let xs: alloc::vec::Vec<f64> = (0..100_000)
            .map(|_| inverse_gamma(&mut rng, 3.0, 2.0).unwrap())
            .collect();
        let (m, _) = moments(&xs);
        assert!((m - 1.0).abs() < 0.02, "mean {m}");
    }

    #[test]
    fn chain_streams_differ_by_index() {
        let a: u64 = chain_rng(5, 0).random();
        let b: u64 = chain_rng(5, 1).random();
        let c: u64 = chain_rng(6, 0).random();
        assert_ne!(a, b);
        assert_eq!(b, c);
    }
}
