//! Pruning traversals parameterized by a rule: a point-pair `base_case` and a
//! node-pair `score`.
//!
//! Every traversal visits each (query node, reference node) combination at
//! most once and never descends below a pruned combination. When exactly one
//! side of a pair has children, only that side is expanded; the childless
//! node is paired with each child of the other.
//!
//! Trees whose kind is not pairs-unique (cover trees) present the same point
//! pair at several node pairs along a self-child chain. Such a pair is run
//! only at the first node pair holding both points: a base case is skipped
//! when the pair it was expanded from already held both points.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spacetree::{NodeId, SpaceTree, TreeConfig, TreeNode};

/// Outcome of scoring a node pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score<T> {
    /// Skip the pair and everything beneath it.
    Prune,
    /// Expand the pair; the value is its priority (lower first).
    Continue(T),
}

impl<T> Score<T> {
    pub fn is_prune(&self) -> bool {
        matches!(self, Score::Prune)
    }
}

/// Work counters for one traversal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub base_cases: u64,
    pub scores: u64,
    pub prunes: u64,
}

impl TraversalStats {
    /// Pairs that were scored and then expanded.
    pub fn expanded(&self) -> u64 {
        self.scores - self.prunes
    }
}

impl std::ops::AddAssign for TraversalStats {
    fn add_assign(&mut self, other: Self) {
        self.base_cases += other.base_cases;
        self.scores += other.scores;
        self.prunes += other.prunes;
    }
}

impl std::fmt::Display for TraversalStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "base_cases={} scores={} prunes={}", self.base_cases, self.scores, self.prunes)
    }
}

/// The node pair handed to [`TraversalRule::score`].
#[derive(Clone, Copy)]
pub struct Visit<'t, T> {
    pub query_tree: &'t SpaceTree<T>,
    pub reference_tree: &'t SpaceTree<T>,
    pub query: NodeId,
    pub reference: NodeId,
    /// The pair this one was expanded from; `None` for the root pair.
    pub parent: Option<(NodeId, NodeId)>,
}

impl<'t, T: Scalar> Visit<'t, T> {
    #[inline]
    pub fn query_node(&self) -> &'t TreeNode<T> {
        self.query_tree.node(self.query)
    }

    #[inline]
    pub fn reference_node(&self) -> &'t TreeNode<T> {
        self.reference_tree.node(self.reference)
    }

    #[inline]
    pub fn min_distance(&self) -> T {
        self.query_node().region().lower(self.reference_node().region())
    }

    #[inline]
    pub fn max_distance(&self) -> T {
        self.query_node().region().upper(self.reference_node().region())
    }

    /// `(min_distance, max_distance)`.
    #[inline]
    pub fn distance_bounds(&self) -> (T, T) {
        self.query_node().region().bounds(self.reference_node().region())
    }

    /// True when the parent pair already ran the base case for `(q, r)`, so
    /// the traversal will not run it again here.
    #[inline]
    pub fn parent_ran(&self, q: usize, r: usize) -> bool {
        match self.parent {
            Some((pq, pr)) if !self.query_tree.kind().pairs_unique() => {
                self.query_tree.node(pq).holds(q) && self.reference_tree.node(pr).holds(r)
            }
            _ => false,
        }
    }
}

/// A dual-tree algorithm: its point-pair computation and its pruning rule.
pub trait TraversalRule<T: Scalar> {
    /// Processes one (query point, reference point) pair; returns their distance.
    fn base_case(&mut self, query: usize, reference: usize) -> T;

    /// Scores a node pair. May update rule state (KDE applies approximations
    /// here) before returning [`Score::Prune`].
    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T>;

    /// Ordering key used to visit sibling pairs, ascending. Defaults to the
    /// pair's minimum distance.
    fn order_hint(&self, visit: &Visit<'_, T>) -> T {
        visit.min_distance()
    }

    /// False for rules whose state is shared across query points (EMST),
    /// which makes them ineligible for the parallel traversal.
    fn query_partitionable(&self) -> bool {
        true
    }
}

/// A rule whose per-query results can be assembled from independent runs.
pub trait MergeRule<T: Scalar>: TraversalRule<T> + Send + Sized {
    /// Takes over `other`'s results for the listed query points.
    fn absorb(&mut self, other: Self, query_points: &[usize]);
}

fn check_trees<T: Scalar>(query: &SpaceTree<T>, reference: &SpaceTree<T>) -> Result<()> {
    if query.kind() != reference.kind() {
        return Err(Error::usage("query and reference trees must be of the same kind"));
    }
    if query.dim() != reference.dim() {
        return Err(Error::usage(format!(
            "query dimension {} differs from reference dimension {}",
            query.dim(),
            reference.dim()
        )));
    }
    if reference.is_point_forest() {
        return Err(Error::usage("reference must be a tree, not a point forest"));
    }
    Ok(())
}

/// Restriction of a traversal to one partition of the query tree.
struct Mask {
    root: NodeId,
    owned: Vec<bool>,
}

struct Engine<'t, 'r, T, R> {
    query: &'t SpaceTree<T>,
    reference: &'t SpaceTree<T>,
    rule: &'r mut R,
    stats: TraversalStats,
    dedup: bool,
    mask: Option<Mask>,
}

impl<'t, 'r, T: Scalar, R: TraversalRule<T>> Engine<'t, 'r, T, R> {
    fn new(query: &'t SpaceTree<T>, reference: &'t SpaceTree<T>, rule: &'r mut R) -> Self {
        Engine {
            query,
            reference,
            rule,
            stats: TraversalStats::default(),
            dedup: !query.kind().pairs_unique(),
            mask: None,
        }
    }

    fn visit(&self, q: NodeId, r: NodeId, parent: Option<(NodeId, NodeId)>) -> Visit<'t, T> {
        Visit { query_tree: self.query, reference_tree: self.reference, query: q, reference: r, parent }
    }

    fn query_allowed(&self, q: NodeId) -> bool {
        match &self.mask {
            None => true,
            Some(m) => self.query.is_ancestor_or_self(q, m.root) || self.query.is_ancestor_or_self(m.root, q),
        }
    }

    /// Scores the pair and runs its base cases. Returns false if it was pruned.
    fn score_and_run(&mut self, visit: &Visit<'t, T>) -> bool {
        self.stats.scores += 1;
        if self.rule.score(visit).is_prune() {
            self.stats.prunes += 1;
            return false;
        }
        let qn = self.query.node(visit.query);
        let rn = self.reference.node(visit.reference);
        for &a in qn.points() {
            if let Some(m) = &self.mask {
                if !m.owned[a] {
                    continue;
                }
            }
            for &b in rn.points() {
                if self.dedup && visit.parent_ran(a, b) {
                    continue;
                }
                self.stats.base_cases += 1;
                self.rule.base_case(a, b);
            }
        }
        true
    }

    /// Child combinations of an expanded pair, sorted by the rule's hint.
    fn children(&self, q: NodeId, r: NodeId) -> Vec<(NodeId, NodeId)> {
        let qn = self.query.node(q);
        let rn = self.reference.node(r);
        if qn.is_leaf() && rn.is_leaf() {
            return Vec::new();
        }
        let qs: Vec<NodeId> = if qn.is_leaf() {
            vec![q]
        } else {
            qn.children().iter().copied().filter(|&c| self.query_allowed(c)).collect()
        };
        let rs: &[NodeId] = if rn.is_leaf() { std::slice::from_ref(&r) } else { rn.children() };
        let mut pairs: Vec<(T, NodeId, NodeId)> = Vec::with_capacity(qs.len() * rs.len());
        for &cq in &qs {
            for &cr in rs {
                let hint = self.rule.order_hint(&self.visit(cq, cr, Some((q, r))));
                pairs.push((hint, cq, cr));
            }
        }
        if pairs.len() > 1 {
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        }
        pairs.into_iter().map(|(_, cq, cr)| (cq, cr)).collect()
    }

    fn depth_first(&mut self, q: NodeId, r: NodeId, parent: Option<(NodeId, NodeId)>) {
        let visit = self.visit(q, r, parent);
        if !self.score_and_run(&visit) {
            return;
        }
        for (cq, cr) in self.children(q, r) {
            self.depth_first(cq, cr, Some((q, r)));
        }
    }

    fn breadth_first(&mut self, q: NodeId, r: NodeId) {
        let mut frontier = VecDeque::new();
        frontier.push_back((q, r, None));
        while let Some((q, r, parent)) = frontier.pop_front() {
            let visit = self.visit(q, r, parent);
            if !self.score_and_run(&visit) {
                continue;
            }
            for (cq, cr) in self.children(q, r) {
                frontier.push_back((cq, cr, Some((q, r))));
            }
        }
    }
}

/// Depth-first pruning dual-tree traversal from the two roots.
pub fn dual_depth_first<T: Scalar, R: TraversalRule<T>>(
    query: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    rule: &mut R,
) -> Result<TraversalStats> {
    check_trees(query, reference)?;
    if query.is_point_forest() {
        return Err(Error::usage("dual traversal needs a query tree, not a point forest"));
    }
    let mut engine = Engine::new(query, reference, rule);
    engine.depth_first(query.root(), reference.root(), None);
    Ok(engine.stats)
}

/// Breadth-first pruning dual-tree traversal: node pairs are expanded in
/// FIFO order, with the same pruning semantics as the depth-first version.
pub fn dual_breadth_first<T: Scalar, R: TraversalRule<T>>(
    query: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    rule: &mut R,
) -> Result<TraversalStats> {
    check_trees(query, reference)?;
    if query.is_point_forest() {
        return Err(Error::usage("dual traversal needs a query tree, not a point forest"));
    }
    let mut engine = Engine::new(query, reference, rule);
    engine.breadth_first(query.root(), reference.root());
    Ok(engine.stats)
}

/// Depth-first single-tree traversal for one query point. `queries` must be
/// a [`SpaceTree::point_forest`]; node `point` of it is the lifted query.
pub fn single_tree<T: Scalar, R: TraversalRule<T>>(
    queries: &SpaceTree<T>,
    point: usize,
    reference: &SpaceTree<T>,
    rule: &mut R,
) -> Result<TraversalStats> {
    check_trees(queries, reference)?;
    if !queries.is_point_forest() {
        return Err(Error::usage("single-tree traversal expects the queries as a point forest"));
    }
    if point >= queries.len() {
        return Err(Error::usage(format!("query point {point} out of range")));
    }
    let mut engine = Engine::new(queries, reference, rule);
    engine.depth_first(point, reference.root(), None);
    Ok(engine.stats)
}

/// Single-tree traversals for every query point in turn.
pub fn single_tree_all<T: Scalar, R: TraversalRule<T>>(
    queries: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    rule: &mut R,
) -> Result<TraversalStats> {
    let mut stats = TraversalStats::default();
    for point in 0..queries.len() {
        stats += single_tree(queries, point, reference, rule)?;
    }
    Ok(stats)
}

/// Roots of the query-tree partition used by the parallel traversal: every
/// node at the smallest depth that yields at least `4 * workers` subtrees
/// (capped at the tree height), plus any shallower leaves.
pub fn partition_roots<T: Scalar>(tree: &SpaceTree<T>, workers: usize) -> Vec<NodeId> {
    let want = 4 * workers.max(1);
    let height = tree.height();
    let mut depth = 0;
    loop {
        let roots: Vec<NodeId> = tree
            .nodes()
            .iter()
            .filter(|n| n.depth() == depth || (n.depth() < depth && n.is_leaf()))
            .map(|n| n.id())
            .collect();
        if roots.len() >= want || depth >= height {
            return roots;
        }
        depth += 1;
    }
}

/// Parallel depth-first traversal. The query tree is split into disjoint
/// subtrees; each gets a fresh rule from `factory` and a traversal from the
/// roots restricted to that subtree and its ancestors, run on a pool of
/// `workers` threads. Results for each subtree's points are then absorbed
/// into one rule. With one worker this is the serial traversal.
pub fn dual_depth_first_parallel<T, R, F>(
    query: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    factory: F,
    workers: usize,
) -> Result<(R, TraversalStats)>
where
    T: Scalar,
    R: MergeRule<T>,
    F: Fn() -> R + Sync,
{
    check_trees(query, reference)?;
    if query.is_point_forest() {
        return Err(Error::usage("dual traversal needs a query tree, not a point forest"));
    }
    if workers == 0 {
        return Err(Error::usage("worker count must be at least 1"));
    }
    let mut merged = factory();
    if !merged.query_partitionable() {
        return Err(Error::usage("this rule shares state across query points and cannot run in parallel"));
    }
    if workers == 1 {
        let stats = dual_depth_first(query, reference, &mut merged)?;
        return Ok((merged, stats));
    }

    let roots = partition_roots(query, workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::usage(format!("cannot start worker pool: {e}")))?;
    let n_points = query.descendant_points(query.root()).iter().copied().max().map_or(0, |m| m + 1);
    let parts: Vec<(R, TraversalStats, NodeId)> = pool.install(|| {
        roots
            .par_iter()
            .map(|&root| {
                let mut owned = vec![false; n_points];
                for &p in query.descendant_points(root) {
                    owned[p] = true;
                }
                let mut rule = factory();
                let mut engine = Engine::new(query, reference, &mut rule);
                engine.mask = Some(Mask { root, owned });
                engine.depth_first(query.root(), reference.root(), None);
                let stats = engine.stats;
                (rule, stats, root)
            })
            .collect()
    });

    let mut stats = TraversalStats::default();
    for (rule, part_stats, root) in parts {
        merged.absorb(rule, query.descendant_points(root));
        stats += part_stats;
    }
    Ok((merged, stats))
}

/// Which traversal a search runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraversalKind {
    DualDepthFirst,
    DualBreadthFirst,
    /// One depth-first reference-tree descent per query point.
    Single,
    DualDepthFirstParallel,
}

impl TraversalKind {
    pub const ALL: [TraversalKind; 4] = [
        TraversalKind::DualDepthFirst,
        TraversalKind::DualBreadthFirst,
        TraversalKind::Single,
        TraversalKind::DualDepthFirstParallel,
    ];

    /// Builds the query-side structure this traversal walks: a tree, or a
    /// point forest for [`TraversalKind::Single`].
    pub fn query_tree<T: Scalar>(self, query: &Dataset<T>, config: &TreeConfig) -> Result<SpaceTree<T>> {
        match self {
            TraversalKind::Single => Ok(SpaceTree::point_forest(query, config.kind)),
            _ => SpaceTree::build(query, config),
        }
    }
}

impl std::str::FromStr for TraversalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual-dfs" => Ok(TraversalKind::DualDepthFirst),
            "dual-bfs" => Ok(TraversalKind::DualBreadthFirst),
            "single" => Ok(TraversalKind::Single),
            "dual-dfs-parallel" => Ok(TraversalKind::DualDepthFirstParallel),
            other => Err(Error::usage(format!("unknown traversal {other:?}"))),
        }
    }
}

impl std::fmt::Display for TraversalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TraversalKind::DualDepthFirst => "dual-dfs",
            TraversalKind::DualBreadthFirst => "dual-bfs",
            TraversalKind::Single => "single",
            TraversalKind::DualDepthFirstParallel => "dual-dfs-parallel",
        })
    }
}

/// Runs the traversal `kind` with a rule from `factory`. `query` must come
/// from [`TraversalKind::query_tree`] for the same kind.
pub fn traverse<T, R, F>(
    kind: TraversalKind,
    query: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    workers: usize,
    factory: F,
) -> Result<(R, TraversalStats)>
where
    T: Scalar,
    R: MergeRule<T>,
    F: Fn() -> R + Sync,
{
    match kind {
        TraversalKind::DualDepthFirstParallel => dual_depth_first_parallel(query, reference, factory, workers),
        _ => {
            let mut rule = factory();
            let stats = traverse_serial(kind, query, reference, &mut rule)?;
            Ok((rule, stats))
        }
    }
}

/// Runs a serial traversal. The parallel kind is rejected here since it
/// needs a rule factory.
pub fn traverse_serial<T: Scalar, R: TraversalRule<T>>(
    kind: TraversalKind,
    query: &SpaceTree<T>,
    reference: &SpaceTree<T>,
    rule: &mut R,
) -> Result<TraversalStats> {
    match kind {
        TraversalKind::DualDepthFirst => dual_depth_first(query, reference, rule),
        TraversalKind::DualBreadthFirst => dual_breadth_first(query, reference, rule),
        TraversalKind::Single => single_tree_all(query, reference, rule),
        TraversalKind::DualDepthFirstParallel => {
            Err(Error::usage("the parallel traversal is not available for this task"))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{HashMap, HashSet};

    use super::*;
    use crate::spacetree::{build_cover_tree, build_kd_tree, TreeKind};

    /// Records every scored node pair and base-case point pair.
    struct Recorder {
        prune: bool,
        scored: Vec<(NodeId, NodeId)>,
        pairs: Vec<(usize, usize)>,
    }

    impl Recorder {
        fn new(prune: bool) -> Self {
            Recorder { prune, scored: Vec::new(), pairs: Vec::new() }
        }
    }

    impl TraversalRule<f64> for Recorder {
        fn base_case(&mut self, q: usize, r: usize) -> f64 {
            self.pairs.push((q, r));
            0.0
        }

        fn score(&mut self, visit: &Visit<'_, f64>) -> Score<f64> {
            self.scored.push((visit.query, visit.reference));
            if self.prune {
                Score::Prune
            } else {
                Score::Continue(0.0)
            }
        }
    }

    fn grid(n: usize, offset: f64) -> Dataset {
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [(i % 7) as f64 + offset, (i / 7) as f64 * 0.5]).collect();
        Dataset::from_rows(&rows).unwrap()
    }

    fn full_cross(n: usize, m: usize) -> HashSet<(usize, usize)> {
        (0..n).flat_map(|q| (0..m).map(move |r| (q, r))).collect()
    }

    #[test]
    fn continue_everywhere_runs_every_pair_once() {
        let q = grid(23, 0.1);
        let r = grid(17, 0.0);
        for kind in [TreeKind::KdTree, TreeKind::CoverTree] {
            let (qt, rt) = match kind {
                TreeKind::KdTree => (build_kd_tree(&q, 3).unwrap(), build_kd_tree(&r, 2).unwrap()),
                TreeKind::CoverTree => (build_cover_tree(&q, 2.0).unwrap(), build_cover_tree(&r, 2.0).unwrap()),
            };
            for bfs in [false, true] {
                let mut rec = Recorder::new(false);
                let stats = if bfs {
                    dual_breadth_first(&qt, &rt, &mut rec).unwrap()
                } else {
                    dual_depth_first(&qt, &rt, &mut rec).unwrap()
                };
                assert_eq!(stats.base_cases, 23 * 17, "{kind:?} bfs={bfs}");
                let set: HashSet<_> = rec.pairs.iter().copied().collect();
                assert_eq!(set.len(), rec.pairs.len());
                assert_eq!(set, full_cross(23, 17));
                let scored: HashSet<_> = rec.scored.iter().copied().collect();
                assert_eq!(scored.len(), rec.scored.len(), "a node pair was scored twice");
                assert_eq!(stats.prunes, 0);
            }
        }
    }

    #[test]
    fn prune_everywhere_scores_once() {
        let data = grid(30, 0.0);
        let tree = build_kd_tree(&data, 4).unwrap();
        let mut rec = Recorder::new(true);
        let stats = dual_depth_first(&tree, &tree, &mut rec).unwrap();
        assert_eq!(stats, TraversalStats { base_cases: 0, scores: 1, prunes: 1 });
        let stats = dual_breadth_first(&tree, &tree, &mut Recorder::new(true)).unwrap();
        assert_eq!(stats.base_cases, 0);
    }

    #[test]
    fn single_tree_visits_each_reference_point() {
        let q = grid(5, 0.3);
        let r = grid(40, 0.0);
        for kind in [TreeKind::KdTree, TreeKind::CoverTree] {
            let rt = SpaceTree::build(&r, &crate::spacetree::TreeConfig::of_kind(kind)).unwrap();
            let forest = SpaceTree::point_forest(&q, kind);
            let mut rec = Recorder::new(false);
            let stats = single_tree(&forest, 2, &rt, &mut rec).unwrap();
            assert_eq!(stats.base_cases, 40);
            assert!(rec.pairs.iter().all(|&(qq, _)| qq == 2));
            let mut rec = Recorder::new(false);
            let stats = single_tree_all(&forest, &rt, &mut rec).unwrap();
            assert_eq!(stats.base_cases, 200);
        }
    }

    /// Prunes pairs whose ids hash to a fixed residue; checks that no pair
    /// beneath a pruned pair is scored.
    struct Sparse {
        pruned: HashSet<(NodeId, NodeId)>,
        parents: HashMap<(NodeId, NodeId), Option<(NodeId, NodeId)>>,
    }

    impl TraversalRule<f64> for Sparse {
        fn base_case(&mut self, _: usize, _: usize) -> f64 {
            0.0
        }

        fn score(&mut self, visit: &Visit<'_, f64>) -> Score<f64> {
            let key = (visit.query, visit.reference);
            assert!(self.parents.insert(key, visit.parent).is_none(), "pair {key:?} scored twice");
            if let Some(p) = visit.parent {
                assert!(!self.pruned.contains(&p), "descended below pruned pair {p:?}");
            }
            if (visit.query * 31 + visit.reference * 17).is_multiple_of(5) && visit.parent.is_some() {
                self.pruned.insert(key);
                Score::Prune
            } else {
                Score::Continue(visit.min_distance())
            }
        }
    }

    #[test]
    fn pruned_pairs_hide_their_descendants() {
        let data = grid(60, 0.0);
        for tree in [build_kd_tree(&data, 2).unwrap(), build_cover_tree(&data, 2.0).unwrap()] {
            let mut rule = Sparse { pruned: HashSet::new(), parents: HashMap::new() };
            let stats = dual_depth_first(&tree, &tree, &mut rule).unwrap();
            assert_eq!(stats.prunes as usize, rule.pruned.len());
            let mut rule = Sparse { pruned: HashSet::new(), parents: HashMap::new() };
            dual_breadth_first(&tree, &tree, &mut rule).unwrap();
        }
    }

    #[test]
    fn mixed_tree_kinds_are_rejected() {
        let data = grid(10, 0.0);
        let kd = build_kd_tree(&data, 2).unwrap();
        let cover = build_cover_tree(&data, 2.0).unwrap();
        assert!(matches!(dual_depth_first(&kd, &cover, &mut Recorder::new(false)), Err(Error::Usage(_))));
    }

    #[test]
    fn partitions_cover_the_query_points() {
        let data = grid(100, 0.0);
        for tree in [build_kd_tree(&data, 3).unwrap(), build_cover_tree(&data, 2.0).unwrap()] {
            let roots = partition_roots(&tree, 2);
            let mut all: Vec<usize> = roots.iter().flat_map(|&r| tree.descendant_points(r).to_vec()).collect();
            all.sort();
            assert_eq!(all, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn stats_render() {
        let s = TraversalStats { base_cases: 4, scores: 3, prunes: 1 };
        assert_eq!(s.to_string(), "base_cases=4 scores=3 prunes=1");
        assert_eq!(s.expanded(), 2);
    }
}
