//! Range search: every reference point within a closed distance interval of
//! each query point.

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spacetree::{SpaceTree, TreeConfig};
use crate::traversal::{traverse, MergeRule, Score, TraversalKind, TraversalRule, TraversalStats, Visit};

/// The closed interval `[delta1, delta2]`; `delta2` may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeSpec<T> {
    delta1: T,
    delta2: T,
}

impl<T: Scalar> RangeSpec<T> {
    pub fn new(delta1: T, delta2: T) -> Result<Self> {
        if delta1.is_nan() || delta1 < T::zero() || !delta1.is_finite() || delta2.is_nan() || delta2 < delta1 {
            return Err(Error::usage(format!("range must satisfy 0 <= min <= max, got [{delta1}, {delta2}]")));
        }
        Ok(RangeSpec { delta1, delta2 })
    }

    pub fn delta1(&self) -> T {
        self.delta1
    }

    pub fn delta2(&self) -> T {
        self.delta2
    }

    #[inline]
    pub fn contains(&self, d: T) -> bool {
        self.delta1 <= d && d <= self.delta2
    }
}

/// Per-query matches, in discovery order until [`RangeResults::sort`].
#[derive(Clone, Debug, PartialEq)]
pub struct RangeResults<T> {
    indices: Vec<Vec<usize>>,
    distances: Vec<Vec<T>>,
}

impl<T: Scalar> RangeResults<T> {
    pub fn new(queries: usize) -> Self {
        RangeResults { indices: vec![Vec::new(); queries], distances: vec![Vec::new(); queries] }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors(&self, query: usize) -> &[usize] {
        &self.indices[query]
    }

    pub fn distances(&self, query: usize) -> &[T] {
        &self.distances[query]
    }

    /// Total number of matches over all queries.
    pub fn total(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }

    /// Records a match unless `reference` is already listed for `query`.
    pub fn insert(&mut self, query: usize, reference: usize, d: T) -> bool {
        if self.indices[query].contains(&reference) {
            return false;
        }
        self.push(query, reference, d);
        true
    }

    #[inline]
    fn push(&mut self, query: usize, reference: usize, d: T) {
        self.indices[query].push(reference);
        self.distances[query].push(d);
    }

    /// Orders every query's matches by reference index.
    pub fn sort(&mut self) {
        for (idx, dist) in self.indices.iter_mut().zip(self.distances.iter_mut()) {
            let mut pairs: Vec<(usize, T)> = idx.iter().copied().zip(dist.iter().copied()).collect();
            pairs.sort_by_key(|p| p.0);
            *idx = pairs.iter().map(|p| p.0).collect();
            *dist = pairs.iter().map(|p| p.1).collect();
        }
    }
}

/// How node pairs are pruned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RangePrune {
    /// Prune only when the pair's distance interval misses the range.
    #[default]
    Overlap,
    /// Prune unless `delta1 <= d_min <= delta2`. Misses matches whenever a
    /// node pair's minimum distance falls below `delta1`, for instance when
    /// the nodes overlap; kept for comparison only.
    MinDistanceUnsafe,
}

/// Base case and score for range search.
#[derive(Clone, Debug)]
pub struct RangeRule<'d, T> {
    query: &'d Dataset<T>,
    reference: &'d Dataset<T>,
    spec: RangeSpec<T>,
    prune: RangePrune,
    results: RangeResults<T>,
}

impl<'d, T: Scalar> RangeRule<'d, T> {
    pub fn new(query: &'d Dataset<T>, reference: &'d Dataset<T>, spec: RangeSpec<T>, prune: RangePrune) -> Self {
        RangeRule { query, reference, spec, prune, results: RangeResults::new(query.len()) }
    }

    pub fn results(&self) -> &RangeResults<T> {
        &self.results
    }

    pub fn into_results(self) -> RangeResults<T> {
        self.results
    }
}

impl<T: Scalar> TraversalRule<T> for RangeRule<'_, T> {
    /// The traversal presents each pair at most once, so matches are
    /// appended without a duplicate scan.
    #[inline]
    fn base_case(&mut self, query: usize, reference: usize) -> T {
        let d = euclidean(self.query.point(query), self.reference.point(reference));
        if self.spec.contains(d) {
            self.results.push(query, reference, d);
        }
        d
    }

    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T> {
        let (d_min, d_max) = visit.distance_bounds();
        let keep = match self.prune {
            RangePrune::Overlap => d_max >= self.spec.delta1 && d_min <= self.spec.delta2,
            RangePrune::MinDistanceUnsafe => self.spec.contains(d_min),
        };
        if keep {
            Score::Continue(d_min)
        } else {
            Score::Prune
        }
    }
}

impl<T: Scalar> MergeRule<T> for RangeRule<'_, T> {
    fn absorb(&mut self, mut other: Self, query_points: &[usize]) {
        for &q in query_points {
            self.results.indices[q] = std::mem::take(&mut other.results.indices[q]);
            self.results.distances[q] = std::mem::take(&mut other.results.distances[q]);
        }
    }
}

/// Parameters of a range search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeConfig<T> {
    pub spec: RangeSpec<T>,
    pub tree: TreeConfig,
    pub traversal: TraversalKind,
    pub prune: RangePrune,
    pub workers: usize,
}

impl<T: Scalar> RangeConfig<T> {
    pub fn new(spec: RangeSpec<T>) -> Self {
        RangeConfig {
            spec,
            tree: TreeConfig::default(),
            traversal: TraversalKind::DualDepthFirst,
            prune: RangePrune::Overlap,
            workers: 1,
        }
    }
}

/// All reference points within the range of each query point, sorted by
/// reference index.
pub fn range_search<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    config: &RangeConfig<T>,
) -> Result<(RangeResults<T>, TraversalStats)> {
    if query.dim() != reference.dim() {
        return Err(Error::usage("query and reference dimensions differ"));
    }
    let reference_tree = SpaceTree::build(reference, &config.tree)?;
    let query_tree = config.traversal.query_tree(query, &config.tree)?;
    let (rule, stats) = traverse(config.traversal, &query_tree, &reference_tree, config.workers, || {
        RangeRule::new(query, reference, config.spec, config.prune)
    })?;
    let mut results = rule.into_results();
    results.sort();
    Ok((results, stats))
}
