//! Euclidean minimum spanning tree by dual-tree Borůvka.
//!
//! Each round finds, for every component of the current forest, its
//! shortest edge to another component using one traversal of the tree
//! against itself, then merges along those edges. Edges are totally ordered
//! by `(weight, u, v)` with `u < v`, so rounds never close a cycle and the
//! result equals Kruskal's under the same order.

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::neighbor::{evaluate_bounds, NeighborMode, NodeBounds};
use crate::scalar::Scalar;
use crate::spacetree::{SpaceTree, TreeConfig};
use crate::traversal::{traverse_serial, Score, TraversalKind, TraversalRule, TraversalStats, Visit};

/// An undirected edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge<T> {
    pub u: usize,
    pub v: usize,
    pub weight: T,
}

impl<T: Scalar> Edge<T> {
    pub fn new(a: usize, b: usize, weight: T) -> Self {
        Edge { u: a.min(b), v: a.max(b), weight }
    }

    /// The `(weight, u, v)` order shared with the Kruskal oracle.
    pub fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        self.weight
            .partial_cmp(&other.weight)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(self.u.cmp(&other.u))
            .then(self.v.cmp(&other.v))
    }
}

/// Union-find over point indices.
#[derive(Clone, Debug)]
pub struct ComponentForest {
    parent: Vec<usize>,
    size: Vec<usize>,
    components: usize,
}

impl ComponentForest {
    pub fn new(n: usize) -> Self {
        ComponentForest { parent: (0..n).collect(), size: vec![1; n], components: n }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    /// Joins the components of `a` and `b`; false if they were already one.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] || (self.size[ra] == self.size[rb] && rb < ra) {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Component id of every point.
    pub fn labels(&mut self) -> Vec<usize> {
        (0..self.parent.len()).map(|p| self.find(p)).collect()
    }
}

/// A component's best outgoing edge found so far in a round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<T> {
    pub component: usize,
    /// The component's endpoint.
    pub inside: usize,
    /// The endpoint in another component.
    pub outside: usize,
    pub distance: T,
}

/// Component tag of a node: `Some(c)` when every descendant point lies in
/// component `c`.
fn node_tags<T: Scalar>(tree: &SpaceTree<T>, labels: &[usize]) -> Vec<Option<usize>> {
    let mut tags: Vec<Option<usize>> = vec![None; tree.len()];
    for id in (0..tree.len()).rev() {
        let node = tree.node(id);
        let mut tag: Option<Option<usize>> = None;
        let mut fold = |t: Option<usize>| {
            tag = Some(match tag {
                None => t,
                Some(prev) if prev == t => prev,
                Some(_) => None,
            });
        };
        for &p in node.points() {
            fold(Some(labels[p]));
        }
        for &c in node.children() {
            fold(tags[c]);
        }
        tags[id] = tag.flatten();
    }
    tags
}

/// Base case and score for one Borůvka round.
pub struct BoruvkaRule<'d, T> {
    data: &'d Dataset<T>,
    labels: Vec<usize>,
    query_tags: Vec<Option<usize>>,
    reference_tags: Vec<Option<usize>>,
    best: Vec<Option<(T, usize, usize)>>,
    caches: Vec<NodeBounds<T>>,
}

impl<'d, T: Scalar> BoruvkaRule<'d, T> {
    pub fn new(
        data: &'d Dataset<T>,
        labels: Vec<usize>,
        query_tree: &SpaceTree<T>,
        reference_tree: &SpaceTree<T>,
    ) -> Self {
        let inf = T::infinity();
        BoruvkaRule {
            data,
            query_tags: node_tags(query_tree, &labels),
            reference_tags: node_tags(reference_tree, &labels),
            best: vec![None; data.len()],
            caches: vec![NodeBounds { b1: inf, b2: inf, combined: inf }; query_tree.len()],
            labels,
        }
    }

    /// `D(F)` for the component of `point`.
    #[inline]
    fn component_distance(&self, point: usize) -> T {
        self.best[self.labels[point]].map_or(T::infinity(), |b| b.0)
    }

    /// Candidates of every component that found one.
    pub fn candidates(&self) -> Vec<Candidate<T>> {
        self.best
            .iter()
            .enumerate()
            .filter_map(|(c, b)| b.map(|(d, inside, outside)| Candidate { component: c, inside, outside, distance: d }))
            .collect()
    }
}

impl<T: Scalar> TraversalRule<T> for BoruvkaRule<'_, T> {
    fn base_case(&mut self, query: usize, reference: usize) -> T {
        if query == reference {
            return T::zero();
        }
        let d = euclidean(self.data.point(query), self.data.point(reference));
        let c = self.labels[query];
        if c == self.labels[reference] {
            return d;
        }
        let key = (query.min(reference), query.max(reference));
        let better = match self.best[c] {
            None => true,
            Some((bd, bq, br)) => d < bd || (d == bd && key < (bq.min(br), bq.max(br))),
        };
        if better {
            self.best[c] = Some((d, query, reference));
        }
        d
    }

    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T> {
        let qt = self.query_tags[visit.query];
        if qt.is_some() && qt == self.reference_tags[visit.reference] {
            return Score::Prune;
        }
        let bounds = evaluate_bounds(visit.query_tree, visit.query, NeighborMode::Nearest, &self.caches, |p| {
            self.component_distance(p)
        });
        self.caches[visit.query] = bounds;
        let d_min = visit.min_distance();
        if d_min < bounds.combined {
            Score::Continue(d_min)
        } else {
            Score::Prune
        }
    }

    fn query_partitionable(&self) -> bool {
        false
    }
}

/// Parameters of an EMST computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmstConfig {
    pub tree: TreeConfig,
    /// Any serial traversal; the parallel traversal is rejected.
    pub traversal: TraversalKind,
}

impl Default for EmstConfig {
    fn default() -> Self {
        EmstConfig { tree: TreeConfig::default(), traversal: TraversalKind::DualDepthFirst }
    }
}

/// What one Borůvka round saw and did.
#[derive(Clone, Debug)]
pub struct RoundReport<T> {
    /// Component id of every point at the start of the round.
    pub labels: Vec<usize>,
    pub candidates: Vec<Candidate<T>>,
    pub edges_added: Vec<Edge<T>>,
    pub stats: TraversalStats,
}

/// Final EMST output.
#[derive(Clone, Debug)]
pub struct EmstResult<T> {
    /// Sorted by `(weight, u, v)`.
    pub edges: Vec<Edge<T>>,
    pub total_weight: T,
    pub rounds: usize,
    pub stats: TraversalStats,
}

/// Round-by-round Borůvka driver.
pub struct BoruvkaDriver<'d, T> {
    data: &'d Dataset<T>,
    traversal: TraversalKind,
    query_tree: SpaceTree<T>,
    reference_tree: SpaceTree<T>,
    forest: ComponentForest,
    edges: Vec<Edge<T>>,
    rounds: usize,
    stats: TraversalStats,
}

impl<'d, T: Scalar> BoruvkaDriver<'d, T> {
    pub fn new(data: &'d Dataset<T>, config: &EmstConfig) -> Result<Self> {
        if config.traversal == TraversalKind::DualDepthFirstParallel {
            return Err(Error::usage("EMST shares candidate state across query points and cannot run in parallel"));
        }
        let reference_tree = SpaceTree::build(data, &config.tree)?;
        let query_tree = match config.traversal {
            TraversalKind::Single => SpaceTree::point_forest(data, config.tree.kind),
            _ => reference_tree.clone(),
        };
        Ok(BoruvkaDriver {
            data,
            traversal: config.traversal,
            query_tree,
            reference_tree,
            forest: ComponentForest::new(data.len()),
            edges: Vec::new(),
            rounds: 0,
            stats: TraversalStats::default(),
        })
    }

    pub fn components(&self) -> usize {
        self.forest.components()
    }

    pub fn is_done(&self) -> bool {
        self.forest.components() <= 1
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Runs one round, or returns `None` once a single component remains.
    pub fn step(&mut self) -> Result<Option<RoundReport<T>>> {
        if self.is_done() {
            return Ok(None);
        }
        let labels = self.forest.labels();
        let mut rule = BoruvkaRule::new(self.data, labels.clone(), &self.query_tree, &self.reference_tree);
        let stats = traverse_serial(self.traversal, &self.query_tree, &self.reference_tree, &mut rule)?;
        let candidates = rule.candidates();

        let mut proposed: Vec<Edge<T>> =
            candidates.iter().map(|c| Edge::new(c.inside, c.outside, c.distance)).collect();
        proposed.sort_by(|a, b| a.cmp_key(b));
        proposed.dedup_by(|a, b| a.u == b.u && a.v == b.v);
        let mut added = Vec::new();
        for e in proposed {
            if self.forest.union(e.u, e.v) {
                added.push(e);
            }
        }
        if added.is_empty() {
            return Err(Error::usage("a Borůvka round found no edge between components"));
        }
        self.edges.extend(added.iter().copied());
        self.rounds += 1;
        self.stats += stats;
        Ok(Some(RoundReport { labels, candidates, edges_added: added, stats }))
    }

    pub fn finish(mut self) -> Result<EmstResult<T>> {
        while self.step()?.is_some() {}
        let mut edges = self.edges;
        edges.sort_by(|a, b| a.cmp_key(b));
        let total_weight = edges.iter().fold(T::zero(), |s, e| s + e.weight);
        Ok(EmstResult { edges, total_weight, rounds: self.rounds, stats: self.stats })
    }
}

/// The Euclidean minimum spanning tree of `data`.
pub fn emst<T: Scalar>(data: &Dataset<T>, config: &EmstConfig) -> Result<EmstResult<T>> {
    BoruvkaDriver::new(data, config)?.finish()
}
