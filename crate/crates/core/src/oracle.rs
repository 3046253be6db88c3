//! Brute-force reference implementations. They use no tree code and share
//! the tie rules of the tree searches, so identities as well as distances
//! can be compared.

use petgraph::unionfind::UnionFind;

use crate::dataset::{euclidean, Dataset};
use crate::emst::Edge;
use crate::error::{Error, Result};
use crate::kde::Kernel;
use crate::neighbor::{check_exclude_self, check_k, NeighborMode, NeighborResults};
use crate::range::{RangeResults, RangeSpec};
use crate::scalar::Scalar;

/// Exhaustive k nearest (or furthest) neighbors.
pub fn brute_knn<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    k: usize,
    mode: NeighborMode,
    exclude_self: bool,
) -> Result<NeighborResults<T>> {
    check_k(k, reference.len(), exclude_self)?;
    check_exclude_self(query, reference, exclude_self)?;
    check_dims(query, reference)?;
    let mut results = NeighborResults::new(query.len(), k, mode);
    let mut all: Vec<(T, usize)> = Vec::with_capacity(reference.len());
    for (q, qp) in query.points().enumerate() {
        all.clear();
        all.extend(
            reference
                .points()
                .enumerate()
                .filter(|&(r, _)| !(exclude_self && r == q))
                .map(|(r, rp)| (euclidean(qp, rp), r)),
        );
        all.sort_by(|a, b| {
            if mode.ranks_before(a.0, a.1, b.0, b.1) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        });
        for &(d, r) in all.iter().take(k) {
            results.insert(q, r, d);
        }
    }
    Ok(results)
}

/// Exhaustive closed-interval range search; matches sorted by reference index.
pub fn brute_range<T: Scalar>(
    query: &Dataset<T>,
    reference: &Dataset<T>,
    spec: &RangeSpec<T>,
) -> Result<RangeResults<T>> {
    check_dims(query, reference)?;
    let mut results = RangeResults::new(query.len());
    for (q, qp) in query.points().enumerate() {
        for (r, rp) in reference.points().enumerate() {
            let d = euclidean(qp, rp);
            if spec.contains(d) {
                results.insert(q, r, d);
            }
        }
    }
    Ok(results)
}

/// Kruskal over all `N (N - 1) / 2` implicit edges, ordered by `(weight, u, v)`.
pub fn kruskal_mst<T: Scalar>(data: &Dataset<T>) -> (Vec<Edge<T>>, T) {
    let n = data.len();
    let mut edges: Vec<Edge<T>> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for u in 0..n {
        for v in u + 1..n {
            edges.push(Edge::new(u, v, euclidean(data.point(u), data.point(v))));
        }
    }
    edges.sort_by(|a, b| a.cmp_key(b));
    let mut sets = UnionFind::<usize>::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        if sets.union(e.u, e.v) {
            tree.push(e);
            if tree.len() + 1 == n {
                break;
            }
        }
    }
    let total = tree.iter().fold(T::zero(), |s, e| s + e.weight);
    (tree, total)
}

/// Exact kernel sums `f_q = sum_r K(d(q, r))`.
pub fn brute_kde<T: Scalar>(query: &Dataset<T>, reference: &Dataset<T>, kernel: &Kernel<T>) -> Result<Vec<T>> {
    check_dims(query, reference)?;
    Ok(query
        .points()
        .map(|qp| reference.points().fold(T::zero(), |s, rp| s + kernel.evaluate(euclidean(qp, rp))))
        .collect())
}

fn check_dims<T: Scalar>(query: &Dataset<T>, reference: &Dataset<T>) -> Result<()> {
    if query.dim() != reference.dim() {
        return Err(Error::usage("query and reference dimensions differ"));
    }
    Ok(())
}
