mod common;

use dualtree::dataset::distance;
use dualtree::kde::{kde, kernel_bound, KdeConfig, KdeRule, Kernel};
use dualtree::oracle::brute_kde;
use dualtree::traversal::{traverse_serial, Score, TraversalRule, Visit};
use dualtree::{Dataset, SpaceTree, TraversalKind};
use proptest::prelude::*;

/// Re-derives the error of every approximated pair from the points.
struct Audited<'d> {
    inner: KdeRule<'d, f64>,
    query: &'d Dataset,
    reference: &'d Dataset,
    kernel: Kernel<f64>,
    threshold: f64,
    failures: Vec<String>,
}

impl TraversalRule<f64> for Audited<'_> {
    fn base_case(&mut self, query: usize, reference: usize) -> f64 {
        self.inner.base_case(query, reference)
    }

    fn score(&mut self, visit: &Visit<'_, f64>) -> Score<f64> {
        let s = self.inner.score(visit);
        if s.is_prune() {
            let (lo, hi) = visit.distance_bounds();
            let bound = kernel_bound(&self.kernel, lo, hi);
            if bound >= self.threshold {
                self.failures.push(format!("approximated with bound {bound}"));
            }
            let center = visit.reference_node().centroid();
            for &p in visit.query_tree.descendant_points(visit.query) {
                let approx = self.kernel.evaluate(distance(self.query.point(p), center).unwrap());
                for &r in visit.reference_tree.descendant_points(visit.reference) {
                    let exact = self.kernel.evaluate(distance(self.query.point(p), self.reference.point(r)).unwrap());
                    if (exact - approx).abs() > bound + 1e-15 {
                        self.failures.push(format!("pair ({p}, {r}) off by {} > {bound}", (exact - approx).abs()));
                    }
                }
            }
        }
        s
    }
}

fn kernel() -> impl Strategy<Value = Kernel<f64>> {
    prop_oneof![
        (0.05..1.0f64).prop_map(|h| Kernel::gaussian(h).unwrap()),
        (0.05..1.0f64).prop_map(|h| Kernel::epanechnikov(h).unwrap())
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn error_stays_within_epsilon(
        (q, r) in common::dataset_pair(70),
        tree in common::tree_config(),
        kernel in kernel(),
        epsilon in prop_oneof![Just(0.1), Just(0.01), Just(0.001)],
    ) {
        let exact = brute_kde(&q, &r, &kernel).unwrap();
        for traversal in TraversalKind::ALL {
            let mut config = KdeConfig::new(kernel, epsilon);
            config.tree = tree;
            config.traversal = traversal;
            config.workers = 2;
            let (got, _) = kde(&q, &r, &config).unwrap();
            for (a, b) in got.iter().zip(&exact) {
                prop_assert!((a - b).abs() <= epsilon, "{} {}: {} vs {}", kernel, traversal, a, b);
            }
        }
    }

    #[test]
    fn every_approximation_is_within_its_bound(
        (q, r) in common::dataset_pair(40),
        tree in common::tree_config(),
        kernel in kernel(),
        epsilon in 0.0..1.0f64,
    ) {
        let rtree = SpaceTree::build(&r, &tree).unwrap();
        for traversal in [TraversalKind::DualDepthFirst, TraversalKind::DualBreadthFirst, TraversalKind::Single] {
            let qtree = traversal.query_tree(&q, &tree).unwrap();
            let mut rule = Audited {
                inner: KdeRule::new(&q, &r, kernel, epsilon).unwrap(),
                query: &q,
                reference: &r,
                kernel,
                threshold: epsilon / r.len() as f64,
                failures: Vec::new(),
            };
            traverse_serial(traversal, &qtree, &rtree, &mut rule).unwrap();
            prop_assert!(rule.failures.is_empty(), "{:?}", &rule.failures[..rule.failures.len().min(3)]);
        }
    }

    #[test]
    fn smaller_epsilon_never_does_less_work(
        (q, r) in common::dataset_pair(60),
        tree in common::tree_config(),
        kernel in kernel(),
        (a, b) in (0.0..1.0f64, 0.0..1.0f64),
    ) {
        let (small, large) = (a.min(b), a.max(b));
        let mut config = KdeConfig::new(kernel, small);
        config.tree = tree;
        let (_, fine) = kde(&q, &r, &config).unwrap();
        config.epsilon = large;
        let (_, coarse) = kde(&q, &r, &config).unwrap();
        prop_assert!(fine.base_cases >= coarse.base_cases);
    }

    #[test]
    fn kernels_do_not_increase_with_distance(kernel in kernel(), a in 0.0..5.0f64, b in 0.0..5.0f64) {
        let (near, far) = (a.min(b), a.max(b));
        prop_assert!(kernel.evaluate(near) >= kernel.evaluate(far));
    }
}
