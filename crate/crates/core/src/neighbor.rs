//! k-nearest and k-furthest neighbor search.
//!
//! Each query node keeps three cached bounds, refreshed whenever the node is
//! scored and never loosened:
//!
//! * `b1`: the worst k-th candidate distance over the node's descendants,
//!   from held points and the children's `b1` caches.
//! * `b2`: the best k-th candidate distance of any descendant, widened by
//!   the node's radii: `D_p[k] + rho + lambda` for held points and
//!   `b2(child) + 2 (lambda - lambda(child))` for children.
//! * `combined`: the minimum of the `b1`-style term (over children's
//!   combined caches), both `b2` terms, and the parent's combined cache.
//!
//! The child term of the combined bound reads the children's `b2` caches,
//! not their combined caches: a combined value may come from a `b1` term,
//! which only covers that child's own descendants and cannot be widened to
//! the parent's.
//!
//! Furthest mode mirrors all of this: lists sort descending, bounds swap
//! min and max, radii are subtracted and pruning tests `d_max`. Missing
//! list entries read as `+inf` (nearest) or `-inf` (furthest), so an
//! unfilled list accepts any candidate, including one at distance zero.

use std::cmp::Ordering;

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spacetree::{NodeId, SpaceTree, TreeConfig};
use crate::traversal::{traverse, MergeRule, Score, TraversalKind, TraversalRule, TraversalStats, Visit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NeighborMode {
    Nearest,
    Furthest,
}

impl NeighborMode {
    /// The distance an empty list slot reads as.
    pub fn missing<T: Scalar>(self) -> T {
        match self {
            NeighborMode::Nearest => T::infinity(),
            NeighborMode::Furthest => T::neg_infinity(),
        }
    }

    /// True when candidate `(d, i)` ranks strictly ahead of `(e, j)`: closer
    /// (or further) first, then lower index.
    #[inline]
    pub fn ranks_before<T: Scalar>(self, d: T, i: usize, e: T, j: usize) -> bool {
        let by_distance = match self {
            NeighborMode::Nearest => d.partial_cmp(&e),
            NeighborMode::Furthest => e.partial_cmp(&d),
        };
        match by_distance.unwrap_or(Ordering::Equal) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => i < j,
        }
    }
}

/// Which bound the score function prunes with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundMode {
    Combined,
    B1,
    B2,
}

impl BoundMode {
    pub const ALL: [BoundMode; 3] = [BoundMode::Combined, BoundMode::B1, BoundMode::B2];
}

impl std::str::FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(BoundMode::Combined),
            "b1" => Ok(BoundMode::B1),
            "b2" => Ok(BoundMode::B2),
            other => Err(Error::usage(format!("unknown bound mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for BoundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundMode::Combined => "combined",
            BoundMode::B1 => "b1",
            BoundMode::B2 => "b2",
        })
    }
}

/// Per-query candidate lists, sorted best first, at most `k` long.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborResults<T> {
    k: usize,
    mode: NeighborMode,
    indices: Vec<Vec<usize>>,
    distances: Vec<Vec<T>>,
}

impl<T: Scalar> NeighborResults<T> {
    pub fn new(queries: usize, k: usize, mode: NeighborMode) -> Self {
        NeighborResults { k, mode, indices: vec![Vec::new(); queries], distances: vec![Vec::new(); queries] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mode(&self) -> NeighborMode {
        self.mode
    }

    /// Number of query points.
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

    /// The k-th candidate distance, or the mode's missing value when the
    /// list is not full.
    #[inline]
    pub fn kth_distance(&self, query: usize) -> T {
        let d = &self.distances[query];
        if d.len() < self.k {
            self.mode.missing()
        } else {
            d[self.k - 1]
        }
    }

    /// Offers candidate `reference` at distance `d` to `query`'s list.
    /// Returns true if it was inserted.
    pub fn insert(&mut self, query: usize, reference: usize, d: T) -> bool {
        let mode = self.mode;
        let idx = &mut self.indices[query];
        let dist = &mut self.distances[query];
        if dist.len() == self.k {
            let last = self.k - 1;
            if !mode.ranks_before(d, reference, dist[last], idx[last]) {
                return false;
            }
        }
        if idx.contains(&reference) {
            return false;
        }
        let pos = (0..dist.len()).find(|&i| mode.ranks_before(d, reference, dist[i], idx[i])).unwrap_or(dist.len());
        idx.insert(pos, reference);
        dist.insert(pos, d);
        idx.truncate(self.k);
        dist.truncate(self.k);
        true
    }

    fn take_from(&mut self, other: &mut Self, query: usize) {
        self.indices[query] = std::mem::take(&mut other.indices[query]);
        self.distances[query] = std::mem::take(&mut other.distances[query]);
    }
}

/// The three bound values of one query node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeBounds<T> {
    pub b1: T,
    pub b2: T,
    pub combined: T,
}

impl<T: Scalar> NodeBounds<T> {
    pub fn select(&self, mode: BoundMode) -> T {
        match mode {
            BoundMode::Combined => self.combined,
            BoundMode::B1 => self.b1,
            BoundMode::B2 => self.b2,
        }
    }
}

/// Chooses one of two bound values.
type Pick<T> = fn(T, T) -> T;

/// Bounds of query node `id`, given each point's current k-th candidate
/// distance through `kth` and the nodes' previous `caches`. The result is
/// clamped so it never loosens the node's own cache.
///
/// The `b2` child term assumes that a child's descendants lie within
/// `lambda - lambda(child) + rho(child)` of the parent centroid, which
/// holds for kd-trees (leaf `rho` equals `lambda`) and for cover trees (the
/// covering distances along a path sum to at most the radius difference).
pub(crate) fn evaluate_bounds<T: Scalar>(
    tree: &SpaceTree<T>,
    id: NodeId,
    mode: NeighborMode,
    caches: &[NodeBounds<T>],
    kth: impl Fn(usize) -> T,
) -> NodeBounds<T> {
    let node = tree.node(id);
    let (lambda, rho) = (node.lambda(), node.rho());
    let two = T::lit(2.0);
    // `worse` picks the looser of two bounds, `better` the tighter.
    let (worse, better): (Pick<T>, Pick<T>) = match mode {
        NeighborMode::Nearest => (T::max, T::min),
        NeighborMode::Furthest => (T::min, T::max),
    };
    // Rounded outward by a few ulps so that floating-point error in the
    // triangle inequality cannot make the bound tighter than the truth.
    let slack = T::epsilon() * T::lit(8.0);
    let widen = |d: T, by: T| match mode {
        NeighborMode::Nearest => {
            let v = d + by;
            v + v.abs() * slack
        }
        NeighborMode::Furthest => {
            let v = d - by;
            v - v.abs() * slack
        }
    };
    let missing = mode.missing();

    let mut extreme: Option<T> = None;
    let mut b2 = missing;
    for &p in node.points() {
        let d = kth(p);
        extreme = Some(extreme.map_or(d, |e| worse(e, d)));
        b2 = better(b2, widen(d, rho + lambda));
    }
    let mut comb_extreme = extreme;
    for &c in node.children() {
        let cache = &caches[c];
        extreme = Some(extreme.map_or(cache.b1, |e| worse(e, cache.b1)));
        comb_extreme = Some(comb_extreme.map_or(cache.combined, |e| worse(e, cache.combined)));
        let child_lambda = tree.node(c).lambda();
        b2 = better(b2, widen(cache.b2, two * (lambda - child_lambda)));
    }
    let b1 = extreme.unwrap_or(missing);
    let mut combined = better(comb_extreme.unwrap_or(missing), b2);
    if let Some(parent) = node.parent() {
        combined = better(combined, caches[parent].combined);
    }

    let old = &caches[id];
    NodeBounds { b1: better(b1, old.b1), b2: better(b2, old.b2), combined: better(combined, old.combined) }
}

/// Base case and score for k-nearest or k-furthest neighbors.
#[derive(Clone, Debug)]
pub struct NeighborRule<'d, T> {
    query: &'d Dataset<T>,
    reference: &'d Dataset<T>,
    results: NeighborResults<T>,
    bound: BoundMode,
    exclude_self: bool,
    caches: Vec<NodeBounds<T>>,
}

impl<'d, T: Scalar> NeighborRule<'d, T> {
    /// `query_nodes` is the node count of the query tree the rule will be
    /// traversed with.
    pub fn new(
        query: &'d Dataset<T>,
        reference: &'d Dataset<T>,
        query_nodes: usize,
        k: usize,
        mode: NeighborMode,
        bound: BoundMode,
        exclude_self: bool,
    ) -> Self {
        let m = mode.missing();
        NeighborRule {
            query,
            reference,
            results: NeighborResults::new(query.len(), k, mode),
            bound,
            exclude_self,
            caches: vec![NodeBounds { b1: m, b2: m, combined: m }; query_nodes],
        }
    }

    pub fn results(&self) -> &NeighborResults<T> {
        &self.results
    }

    pub fn into_results(self) -> NeighborResults<T> {
        self.results
    }

    /// Cached bounds of query node `id` as of its last score.
    pub fn cached(&self, id: NodeId) -> NodeBounds<T> {
        self.caches[id]
    }

    /// Evaluates the bounds of query node `id` from the current candidate
    /// lists and caches, clamped by the node's previous cache. Does not
    /// store the result.
    pub fn bounds(&self, tree: &SpaceTree<T>, id: NodeId) -> NodeBounds<T> {
        evaluate_bounds(tree, id, self.results.mode, &self.caches, |p| self.results.kth_distance(p))
    }

    fn refresh(&mut self, tree: &SpaceTree<T>, id: NodeId) -> NodeBounds<T> {
        let b = self.bounds(tree, id);
        self.caches[id] = b;
        b
    }
}

impl<T: Scalar> TraversalRule<T> for NeighborRule<'_, T> {
    #[inline]
    fn base_case(&mut self, query: usize, reference: usize) -> T {
        if self.exclude_self && query == reference {
            return T::zero();
        }
        let d = euclidean(self.query.point(query), self.reference.point(reference));
        self.results.insert(query, reference, d);
        d
    }

    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T> {
        let bound = self.refresh(visit.query_tree, visit.query).select(self.bound);
        match self.results.mode {
            NeighborMode::Nearest => {
                let d_min = visit.min_distance();
                if d_min < bound {
                    Score::Continue(d_min)
                } else {
                    Score::Prune
                }
            }
            NeighborMode::Furthest => {
                let d_max = visit.max_distance();
                if d_max > bound {
                    Score::Continue(d_max)
                } else {
                    Score::Prune
                }
            }
        }
    }

    fn order_hint(&self, visit: &Visit<'_, T>) -> T {
        match self.results.mode {
            NeighborMode::Nearest => visit.min_distance(),
            NeighborMode::Furthest => -visit.max_distance(),
        }
    }
}

impl<T: Scalar> MergeRule<T> for NeighborRule<'_, T> {
    fn absorb(&mut self, mut other: Self, query_points: &[usize]) {
        for &q in query_points {
            self.results.take_from(&mut other.results, q);
        }
    }
}

/// Parameters of a neighbor search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub mode: NeighborMode,
    pub tree: TreeConfig,
    pub traversal: TraversalKind,
    pub bound: BoundMode,
    /// Skip the query point itself; requires query and reference to be the
    /// same dataset.
    pub exclude_self: bool,
    /// Threads for [`TraversalKind::DualDepthFirstParallel`].
    pub workers: usize,
}

impl KnnConfig {
    pub fn new(k: usize) -> Self {
        KnnConfig {
            k,
            mode: NeighborMode::Nearest,
            tree: TreeConfig::default(),
            traversal: TraversalKind::DualDepthFirst,
            bound: BoundMode::Combined,
            exclude_self: false,
            workers: 1,
        }
    }
}

/// Validates `k` against the reference size.
pub fn check_k(k: usize, references: usize, exclude_self: bool) -> Result<()> {
    let max = if exclude_self { references.saturating_sub(1) } else { references };
    if k == 0 || k > max {
        return Err(Error::usage(format!(
            "k must be in 1..={max} for {references} reference points{}, got {k}",
            if exclude_self { " excluding self" } else { "" }
        )));
    }
    Ok(())
}

pub(crate) fn check_exclude_self<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    exclude_self: bool,
) -> Result<()> {
    if exclude_self && query != reference {
        return Err(Error::usage("exclude-self needs the query and reference sets to be identical"));
    }
    Ok(())
}

/// Exact k nearest (or furthest) neighbors of every query point.
pub fn knn_search<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    config: &KnnConfig,
) -> Result<(NeighborResults<T>, TraversalStats)> {
    check_k(config.k, reference.len(), config.exclude_self)?;
    check_exclude_self(query, reference, config.exclude_self)?;
    if query.dim() != reference.dim() {
        return Err(Error::usage("query and reference dimensions differ"));
    }
    let reference_tree = SpaceTree::build(reference, &config.tree)?;
    let query_tree = config.traversal.query_tree(query, &config.tree)?;
    knn_with_trees(query, reference, &query_tree, &reference_tree, config)
}

/// [`knn_search`] over prebuilt trees; `query_tree` must suit `config.traversal`.
pub fn knn_with_trees<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    query_tree: &SpaceTree<T>,
    reference_tree: &SpaceTree<T>,
    config: &KnnConfig,
) -> Result<(NeighborResults<T>, TraversalStats)> {
    check_k(config.k, reference.len(), config.exclude_self)?;
    let (rule, stats) = traverse(config.traversal, query_tree, reference_tree, config.workers, || {
        NeighborRule::new(query, reference, query_tree.len(), config.k, config.mode, config.bound, config.exclude_self)
    })?;
    Ok((rule.into_results(), stats))
}
