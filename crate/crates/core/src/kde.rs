//! Approximate kernel density estimation with an absolute error bound.
//!
//! A node pair is approximated when the kernel can vary by less than
//! `epsilon / |S_r|` across it: every query descendant then receives
//! `|D_r| * K(d(p_q, C_r))` for the whole reference node, and the pair is
//! pruned. Each reference point contributes once per query point, exactly
//! or approximately, so the per-query error stays below `epsilon`.

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spacetree::{SpaceTree, TreeConfig};
use crate::traversal::{traverse, MergeRule, Score, TraversalKind, TraversalRule, TraversalStats, Visit};

/// A kernel that is non-increasing in distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel<T> {
    /// `exp(-d^2 / (2 h^2))`
    Gaussian { bandwidth: T },
    /// `max(0, 1 - d^2 / h^2)`
    Epanechnikov { bandwidth: T },
}

impl<T: Scalar> Kernel<T> {
    pub fn gaussian(bandwidth: T) -> Result<Self> {
        Self::check(bandwidth).map(|h| Kernel::Gaussian { bandwidth: h })
    }

    pub fn epanechnikov(bandwidth: T) -> Result<Self> {
        Self::check(bandwidth).map(|h| Kernel::Epanechnikov { bandwidth: h })
    }

    fn check(h: T) -> Result<T> {
        if h > T::zero() && h.is_finite() {
            Ok(h)
        } else {
            Err(Error::usage(format!("bandwidth must be a positive finite value, got {h}")))
        }
    }

    pub fn bandwidth(&self) -> T {
        match *self {
            Kernel::Gaussian { bandwidth } | Kernel::Epanechnikov { bandwidth } => bandwidth,
        }
    }

    #[inline]
    pub fn evaluate(&self, d: T) -> T {
        match *self {
            Kernel::Gaussian { bandwidth: h } => (-(d * d) / (T::lit(2.0) * h * h)).exp(),
            Kernel::Epanechnikov { bandwidth: h } => (T::one() - (d * d) / (h * h)).max(T::zero()),
        }
    }

    /// Integral of the kernel over `R^dim`, used to turn a kernel sum into
    /// a probability density.
    pub fn normalizer(&self, dim: usize) -> T {
        let h = self.bandwidth().as_f64();
        let d = dim as f64;
        let value = match self {
            Kernel::Gaussian { .. } => (2.0 * std::f64::consts::PI).powf(d / 2.0) * h.powf(d),
            Kernel::Epanechnikov { .. } => unit_ball_volume(dim) * h.powf(d) * 2.0 / (d + 2.0),
        };
        T::lit(value)
    }
}

/// Volume of the unit ball in `dim` dimensions, by the two-step recurrence.
fn unit_ball_volume(dim: usize) -> f64 {
    let mut v = [1.0, 2.0];
    if dim < 2 {
        return v[dim];
    }
    for n in 2..=dim {
        let next = 2.0 * std::f64::consts::PI / n as f64 * v[0];
        v = [v[1], next];
    }
    v[1]
}

impl<T: Scalar> std::fmt::Display for Kernel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Kernel::Gaussian { bandwidth } => write!(f, "gaussian(h={bandwidth})"),
            Kernel::Epanechnikov { bandwidth } => write!(f, "epanechnikov(h={bandwidth})"),
        }
    }
}

/// `K(d_min) - K(d_max)`: how much the kernel can vary across a node pair.
pub fn kernel_bound<T: Scalar>(kernel: &Kernel<T>, d_min: T, d_max: T) -> T {
    kernel.evaluate(d_min) - kernel.evaluate(d_max)
}

/// Base case and score for KDE; `densities` are unnormalized kernel sums.
#[derive(Clone, Debug)]
pub struct KdeRule<'d, T> {
    query: &'d Dataset<T>,
    reference: &'d Dataset<T>,
    kernel: Kernel<T>,
    threshold: T,
    densities: Vec<T>,
}

impl<'d, T: Scalar> KdeRule<'d, T> {
    pub fn new(query: &'d Dataset<T>, reference: &'d Dataset<T>, kernel: Kernel<T>, epsilon: T) -> Result<Self> {
        if epsilon.is_nan() || epsilon < T::zero() || !epsilon.is_finite() {
            return Err(Error::usage(format!("epsilon must be a finite value >= 0, got {epsilon}")));
        }
        let n = T::from_usize(reference.len()).expect("reference count fits the scalar type");
        Ok(KdeRule { query, reference, kernel, threshold: epsilon / n, densities: vec![T::zero(); query.len()] })
    }

    pub fn densities(&self) -> &[T] {
        &self.densities
    }

    pub fn into_densities(self) -> Vec<T> {
        self.densities
    }
}

impl<T: Scalar> TraversalRule<T> for KdeRule<'_, T> {
    #[inline]
    fn base_case(&mut self, query: usize, reference: usize) -> T {
        let d = euclidean(self.query.point(query), self.reference.point(reference));
        self.densities[query] = self.densities[query] + self.kernel.evaluate(d);
        d
    }

    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T> {
        let (d_min, d_max) = visit.distance_bounds();
        if kernel_bound(&self.kernel, d_min, d_max) >= self.threshold {
            return Score::Continue(d_min);
        }
        let reference = visit.reference_node();
        let count = reference.descendant_count();
        let center = reference.centroid();
        let held_by_query = visit.query_node().points();
        for &p in visit.query_tree.descendant_points(visit.query) {
            // Pairs already run at the parent pair are not approximated again.
            let done = if held_by_query.contains(&p) {
                reference.points().iter().filter(|&&r| visit.parent_ran(p, r)).count()
            } else {
                0
            };
            let weight = T::from_usize(count - done).expect("count fits the scalar type");
            let k = self.kernel.evaluate(euclidean(self.query.point(p), center));
            self.densities[p] = self.densities[p] + weight * k;
        }
        Score::Prune
    }
}

impl<T: Scalar> MergeRule<T> for KdeRule<'_, T> {
    fn absorb(&mut self, other: Self, query_points: &[usize]) {
        for &q in query_points {
            self.densities[q] = other.densities[q];
        }
    }
}

/// Parameters of a KDE run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KdeConfig<T> {
    pub kernel: Kernel<T>,
    /// Absolute error allowed per query; 0 forces exact sums.
    pub epsilon: T,
    pub tree: TreeConfig,
    pub traversal: TraversalKind,
    pub workers: usize,
}

impl<T: Scalar> KdeConfig<T> {
    pub fn new(kernel: Kernel<T>, epsilon: T) -> Self {
        KdeConfig { kernel, epsilon, tree: TreeConfig::default(), traversal: TraversalKind::DualDepthFirst, workers: 1 }
    }
}

/// Kernel sums `f_q` for every query point, each within `epsilon` of the
/// exact sum over the reference set.
pub fn kde<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    config: &KdeConfig<T>,
) -> Result<(Vec<T>, TraversalStats)> {
    if query.dim() != reference.dim() {
        return Err(Error::usage("query and reference dimensions differ"));
    }
    // Validate epsilon before building anything.
    KdeRule::new(query, reference, config.kernel, config.epsilon)?;
    let reference_tree = SpaceTree::build(reference, &config.tree)?;
    let query_tree = config.traversal.query_tree(query, &config.tree)?;
    let (rule, stats) = traverse(config.traversal, &query_tree, &reference_tree, config.workers, || {
        KdeRule::new(query, reference, config.kernel, config.epsilon).expect("epsilon validated above")
    })?;
    Ok((rule.into_densities(), stats))
}

/// Divides kernel sums by `|S_r|` times the kernel's integral.
pub fn normalize<T: Scalar>(densities: &mut [T], kernel: &Kernel<T>, dim: usize, references: usize) {
    let scale = kernel.normalizer(dim) * T::from_usize(references).expect("count fits the scalar type");
    for f in densities {
        *f = *f / scale;
    }
}
