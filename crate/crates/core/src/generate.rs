//! Seeded synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `n` points drawn uniformly from `[0, 1)^dim`.
pub fn uniform<T: Scalar>(n: usize, dim: usize, seed: u64) -> Result<Dataset<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n * dim).map(|_| T::lit(rng.random::<f64>())).collect();
    Dataset::from_flat(dim, coords)
}

/// `n` points around `clusters` centers drawn uniformly from `[0, 1)^dim`,
/// each coordinate offset by a normal deviate with standard deviation
/// `spread`. Points are assigned to centers round-robin.
pub fn gaussian_clusters<T: Scalar>(
    n: usize,
    dim: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if clusters == 0 {
        return Err(Error::usage("cluster count must be at least 1"));
    }
    let normal = Normal::new(0.0, spread).map_err(|e| Error::usage(format!("bad cluster spread: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..clusters * dim).map(|_| rng.random::<f64>()).collect();
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        let c = &centers[(i % clusters) * dim..(i % clusters + 1) * dim];
        for &x in c {
            coords.push(T::lit(x + normal.sample(&mut rng)));
        }
    }
    Dataset::from_flat(dim, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_seeded_and_in_range() {
        let a: Dataset = uniform(50, 3, 7).unwrap();
        let b: Dataset = uniform(50, 3, 7).unwrap();
        let c: Dataset = uniform(50, 3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.points().flatten().all(|&x| (0.0..1.0).contains(&x)));
        assert_eq!((a.len(), a.dim()), (50, 3));
    }

    #[test]
    fn clusters_have_requested_shape() {
        let d: Dataset<f32> = gaussian_clusters(40, 2, 4, 0.01, 1).unwrap();
        assert_eq!((d.len(), d.dim()), (40, 2));
        assert!(gaussian_clusters::<f64>(10, 2, 0, 0.1, 1).is_err());
    }
}
