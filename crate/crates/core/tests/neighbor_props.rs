mod common;

use dualtree::neighbor::{BoundMode, NeighborMode, NeighborRule, NodeBounds};
use dualtree::oracle::brute_knn;
use dualtree::spacetree::NodeId;
use dualtree::traversal::{traverse_serial, Score, TraversalRule, Visit};
use dualtree::{knn_search, Dataset, KnnConfig, NeighborResults, SpaceTree, TraversalKind, TreeConfig};
use proptest::prelude::*;

/// Wraps a neighbor rule and checks its cached bounds after every score.
struct Checked<'d> {
    inner: NeighborRule<'d, f64>,
    mode: NeighborMode,
    /// Final k-th distance of every query point, from brute force.
    truth: Vec<f64>,
    history: Vec<Option<NodeBounds<f64>>>,
    failures: Vec<String>,
}

/// `a` is at least as tight as `b` in the direction of the search.
fn tighter(mode: NeighborMode, a: f64, b: f64) -> bool {
    match mode {
        NeighborMode::Nearest => a <= b,
        NeighborMode::Furthest => a >= b,
    }
}

impl Checked<'_> {
    fn check(&mut self, tree: &SpaceTree, id: NodeId) {
        let now = self.inner.cached(id);
        let mode = self.mode;
        let mut failures = Vec::new();
        let mut fail = |what: String| failures.push(format!("node {id}: {what}"));
        if let Some(prev) = self.history[id] {
            for (name, a, b) in
                [("b1", now.b1, prev.b1), ("b2", now.b2, prev.b2), ("combined", now.combined, prev.combined)]
            {
                if !tighter(mode, a, b) {
                    fail(format!("{name} loosened from {b} to {a}"));
                }
            }
        }
        if !tighter(mode, now.combined, now.b1) || !tighter(mode, now.combined, now.b2) {
            fail(format!("combined {now:?} not dominated"));
        }
        let worst = tree
            .descendant_points(id)
            .iter()
            .map(|&p| self.truth[p])
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| if tighter(mode, a, d) { d } else { a })));
        if let Some(worst) = worst {
            for (name, b) in [("b1", now.b1), ("b2", now.b2), ("combined", now.combined)] {
                if tighter(mode, b, worst) && b != worst {
                    fail(format!("{name}={b} is tighter than the final k-th distance {worst}"));
                }
            }
        }
        if let Some(parent) = tree.node(id).parent() {
            if let Some(pb) = self.history[parent] {
                if tighter(mode, pb.b1, now.b1) && pb.b1 != now.b1 {
                    fail(format!("parent b1 {} tighter than child b1 {}", pb.b1, now.b1));
                }
            }
        }
        self.history[id] = Some(now);
        self.failures.extend(failures);
    }
}

impl TraversalRule<f64> for Checked<'_> {
    fn base_case(&mut self, query: usize, reference: usize) -> f64 {
        self.inner.base_case(query, reference)
    }

    fn score(&mut self, visit: &Visit<'_, f64>) -> Score<f64> {
        let s = self.inner.score(visit);
        self.check(visit.query_tree, visit.query);
        s
    }

    fn order_hint(&self, visit: &Visit<'_, f64>) -> f64 {
        self.inner.order_hint(visit)
    }
}

fn run_checked(
    q: &Dataset,
    r: &Dataset,
    tree: TreeConfig,
    traversal: TraversalKind,
    k: usize,
    mode: NeighborMode,
    bound: BoundMode,
) -> (NeighborResults<f64>, Vec<String>) {
    let oracle = brute_knn(q, r, k, mode, false).unwrap();
    let rtree = SpaceTree::build(r, &tree).unwrap();
    let qtree = traversal.query_tree(q, &tree).unwrap();
    let mut rule = Checked {
        inner: NeighborRule::new(q, r, qtree.len(), k, mode, bound, false),
        mode,
        truth: (0..q.len()).map(|i| oracle.kth_distance(i)).collect(),
        history: vec![None; qtree.len()],
        failures: Vec::new(),
    };
    traverse_serial(traversal, &qtree, &rtree, &mut rule).unwrap();
    (rule.inner.into_results(), rule.failures)
}

fn mode() -> impl Strategy<Value = NeighborMode> {
    prop_oneof![Just(NeighborMode::Nearest), Just(NeighborMode::Furthest)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bounds_are_sound_monotone_and_dominated(
        (q, r) in common::dataset_pair(64),
        tree in common::tree_config(),
        k in 1usize..4,
        mode in mode(),
    ) {
        let k = k.min(r.len());
        for traversal in [TraversalKind::DualDepthFirst, TraversalKind::DualBreadthFirst] {
            for bound in BoundMode::ALL {
                let (_, failures) = run_checked(&q, &r, tree, traversal, k, mode, bound);
                prop_assert!(failures.is_empty(), "{} {}: {:?}", traversal, bound, &failures[..failures.len().min(5)]);
            }
        }
    }

    #[test]
    fn distances_match_brute_force(
        (q, r) in common::dataset_pair(80),
        tree in common::tree_config(),
        k in 1usize..6,
        mode in mode(),
    ) {
        let k = k.min(r.len());
        let oracle = brute_knn(&q, &r, k, mode, false).unwrap();
        for traversal in TraversalKind::ALL {
            for bound in BoundMode::ALL {
                let config = KnnConfig { k, mode, tree, traversal, bound, exclude_self: false, workers: 2 };
                let (got, _) = knn_search(&q, &r, &config).unwrap();
                for i in 0..q.len() {
                    prop_assert_eq!(got.distances(i), oracle.distances(i));
                    // Equal distances may be returned in another order of identity.
                    for (&n, &d) in got.neighbors(i).iter().zip(got.distances(i)) {
                        prop_assert_eq!(d, dualtree::dataset::distance(q.point(i), r.point(n)).unwrap());
                    }
                }
            }
        }
    }
}
