mod common;

use std::collections::{HashMap, HashSet};

use dualtree::spacetree::NodeId;
use dualtree::traversal::{traverse_serial, Score, TraversalRule, Visit};
use dualtree::{knn_search, range_search, KnnConfig, RangeConfig, RangeSpec, Scalar, SpaceTree, TraversalKind};
use proptest::prelude::*;

type Pair = (NodeId, NodeId);

/// Records every scored pair and base case, pruning pairs by a seeded hash.
struct Recorder {
    seed: u64,
    prune_rate: u64,
    scored: HashMap<(NodeId, NodeId), bool>,
    /// Each scored pair with the pair it was expanded from.
    order: Vec<(Pair, Option<Pair>)>,
    base_cases: Vec<(usize, usize)>,
}

impl Recorder {
    fn new(seed: u64, prune_rate: u64) -> Self {
        Recorder { seed, prune_rate, scored: HashMap::new(), order: Vec::new(), base_cases: Vec::new() }
    }
}

impl<T: Scalar> TraversalRule<T> for Recorder {
    fn base_case(&mut self, query: usize, reference: usize) -> T {
        self.base_cases.push((query, reference));
        T::zero()
    }

    fn score(&mut self, visit: &Visit<'_, T>) -> Score<T> {
        let pair = (visit.query, visit.reference);
        let h = (pair.0 as u64 * 0x9E37_79B9 + pair.1 as u64 + self.seed).wrapping_mul(0xBF58_476D_1CE4_E5B9) >> 40;
        let prune = h % 100 < self.prune_rate;
        assert!(self.scored.insert(pair, prune).is_none(), "pair {pair:?} scored twice");
        self.order.push((pair, visit.parent));
        if prune {
            Score::Prune
        } else {
            Score::Continue(T::zero())
        }
    }
}

fn pair_tree(kind: TraversalKind, query: &dualtree::Dataset, config: &dualtree::TreeConfig) -> SpaceTree {
    kind.query_tree(query, config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pruned_pairs_are_never_expanded(
        (q, r) in common::dataset_pair(50),
        config in common::tree_config(),
        seed in any::<u64>(),
        rate in 0u64..60,
    ) {
        let rtree = SpaceTree::build(&r, &config).unwrap();
        for kind in [TraversalKind::DualDepthFirst, TraversalKind::DualBreadthFirst, TraversalKind::Single] {
            let qtree = pair_tree(kind, &q, &config);
            let mut rec = Recorder::new(seed, rate);
            let stats = traverse_serial(kind, &qtree, &rtree, &mut rec).unwrap();
            let mut seen = HashSet::new();
            for (pair, parent) in &rec.order {
                if let Some(parent) = parent {
                    prop_assert!(seen.contains(parent), "{:?} scored before its parent {:?}", pair, parent);
                    prop_assert!(!rec.scored[parent], "{:?} expanded from pruned {:?}", pair, parent);
                }
                seen.insert(*pair);
            }
            let prunes = rec.scored.values().filter(|&&p| p).count() as u64;
            prop_assert_eq!(stats.scores, rec.order.len() as u64);
            prop_assert_eq!(stats.prunes, prunes);
            prop_assert_eq!(stats.prunes + stats.expanded(), stats.scores);
            prop_assert_eq!(stats.base_cases, rec.base_cases.len() as u64);
            let unique: HashSet<_> = rec.base_cases.iter().collect();
            prop_assert_eq!(unique.len(), rec.base_cases.len(), "a point pair ran twice");
        }
    }

    #[test]
    fn no_pruning_visits_the_cross_product((q, r) in common::dataset_pair(40), config in common::tree_config()) {
        let rtree = SpaceTree::build(&r, &config).unwrap();
        for kind in [TraversalKind::DualDepthFirst, TraversalKind::DualBreadthFirst, TraversalKind::Single] {
            let qtree = pair_tree(kind, &q, &config);
            let mut rec = Recorder::new(0, 0);
            traverse_serial(kind, &qtree, &rtree, &mut rec).unwrap();
            let mut pairs = rec.base_cases.clone();
            pairs.sort_unstable();
            let expected: Vec<(usize, usize)> =
                (0..q.len()).flat_map(|a| (0..r.len()).map(move |b| (a, b))).collect();
            prop_assert_eq!(pairs, expected);
        }
    }

    #[test]
    fn depth_and_breadth_first_agree((q, r) in common::dataset_pair(60), config in common::tree_config(), k in 1usize..4) {
        let k = k.min(r.len());
        let mut dfs = KnnConfig::new(k);
        dfs.tree = config;
        let bfs = KnnConfig { traversal: TraversalKind::DualBreadthFirst, ..dfs };
        let (a, _) = knn_search(&q, &r, &dfs).unwrap();
        let (b, _) = knn_search(&q, &r, &bfs).unwrap();
        for i in 0..q.len() {
            prop_assert_eq!(a.distances(i), b.distances(i));
        }
        let mut dfs = RangeConfig::new(RangeSpec::new(0.1, 0.6).unwrap());
        dfs.tree = config;
        let bfs = RangeConfig { traversal: TraversalKind::DualBreadthFirst, ..dfs };
        prop_assert_eq!(range_search(&q, &r, &dfs).unwrap().0, range_search(&q, &r, &bfs).unwrap().0);
    }
}
