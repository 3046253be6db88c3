//! Cover-tree construction.
//!
//! Points enter level by level from the top scale down. At scale `s` a point
//! becomes a new center when no existing center lies within `base^s`; its
//! parent is the center of scale `s + 1` it was assigned to, which is within
//! `base^(s+1)`. Every center keeps the list of same-level centers within
//! `R * base^s`, which is wide enough that all candidates for the next scale
//! are found through the lists of the assigned center.
//!
//! The explicit tree is compressed: a point gets one node per scale at which
//! it acquires children (its self-child chain), ending in a leaf at
//! [`LEAF_SCALE`]. Exact duplicates join their representative as extra
//! leaves at the lowest scale.

use std::cmp::Ordering;

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{RawNode, Region, SpaceTree, TreeKind, LEAF_SCALE};

/// Radius of a node at `scale`: the geometric-series bound `base^(s+1) / (base - 1)`
/// on descendant distances, `2^(s+1)` for base 2.
pub(crate) fn cover_radius<T: Scalar>(base: T, scale: i32) -> T {
    if scale == LEAF_SCALE {
        T::zero()
    } else {
        base.powi(scale.saturating_add(1)) / (base - T::one())
    }
}

pub(crate) fn scale_distance<T: Scalar>(base: T, scale: i32) -> T {
    if scale == LEAF_SCALE {
        T::zero()
    } else {
        base.powi(scale)
    }
}

/// Builds a cover tree with expansion `base` (> 1).
pub fn build_cover_tree<T: Scalar>(data: &Dataset<T>, base: T) -> Result<SpaceTree<T>> {
    if base.is_nan() || base <= T::one() || !base.is_finite() {
        return Err(Error::usage(format!("cover tree base must be a finite value > 1, got {base}")));
    }
    let n = data.len();

    // Group exact duplicates; the lowest index of each group represents it.
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&a, &b| lex_cmp(data.point(a), data.point(b)).then(a.cmp(&b)));
    let mut rep = vec![0usize; n];
    let mut duplicates: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && data.point(sorted[i]) == data.point(sorted[j]) {
            j += 1;
        }
        let head = sorted[i..j].iter().copied().min().expect("nonempty group");
        for &p in &sorted[i..j] {
            rep[p] = head;
            if p != head {
                duplicates[head].push(p);
            }
        }
        i = j;
    }
    let reps: Vec<usize> = (0..n).filter(|&p| rep[p] == p).collect();

    let root = 0usize;
    let dist = |a: usize, b: usize| euclidean(data.point(a), data.point(b));
    let max_d = reps.iter().map(|&p| dist(root, p)).fold(T::zero(), T::max);
    let mut scale = top_scale(base, max_d);

    let neighbor_factor = {
        let b = base;
        let two = T::lit(2.0);
        (two * b / (b - T::one())).max(two + T::one() / b)
    };

    // child_levels[p]: (scale, children introduced below p at scale - 1), in
    // decreasing scale order.
    let mut child_levels: Vec<Vec<(i32, Vec<usize>)>> = vec![Vec::new(); n];
    let mut centers = vec![root];
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    neighbors[root] = vec![root];
    let mut new_children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut tree_parent = vec![usize::MAX; n];
    let mut assigned = vec![root; n];
    let mut remaining: Vec<usize> = reps.iter().copied().filter(|&p| p != root).collect();
    let mut lowest_scale = scale;

    while !remaining.is_empty() {
        // Introduce centers at `level`; `centers` currently holds C_{level+1}.
        let level = scale - 1;
        let radius = base.powi(level);
        for &c in &centers {
            new_children[c].clear();
        }
        let mut next_remaining = Vec::with_capacity(remaining.len());
        let mut introduced = Vec::new();
        for &q in &remaining {
            let a = assigned[q];
            let mut best: Option<(T, usize)> = None;
            for &p in &neighbors[a] {
                for c in std::iter::once(p).chain(new_children[p].iter().copied()) {
                    let d = dist(q, c);
                    if d <= radius && best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                        best = Some((d, c));
                    }
                }
            }
            match best {
                Some((_, c)) => {
                    assigned[q] = c;
                    next_remaining.push(q);
                }
                None => {
                    new_children[a].push(q);
                    tree_parent[q] = a;
                    introduced.push(q);
                    assigned[q] = q;
                }
            }
        }

        for &c in &centers {
            if !new_children[c].is_empty() {
                child_levels[c].push((scale, new_children[c].clone()));
            }
        }

        // Neighbor lists for C_level.
        let reach = neighbor_factor * radius;
        let mut is_new = vec![false; n];
        for &c in &introduced {
            is_new[c] = true;
        }
        let mut next_centers = centers.clone();
        next_centers.extend(introduced.iter().copied());
        let mut next_neighbors: Vec<(usize, Vec<usize>)> = Vec::with_capacity(next_centers.len());
        for &c in &next_centers {
            let anchor = if is_new[c] { tree_parent[c] } else { c };
            let mut list = Vec::new();
            for &p in &neighbors[anchor] {
                for x in std::iter::once(p).chain(new_children[p].iter().copied()) {
                    if dist(c, x) <= reach {
                        list.push(x);
                    }
                }
            }
            next_neighbors.push((c, list));
        }
        for (c, list) in next_neighbors {
            neighbors[c] = list;
        }

        centers = next_centers;
        remaining = next_remaining;
        scale = level;
        lowest_scale = level;
    }

    // Duplicates attach below the lowest scale used.
    for &p in &reps {
        if !duplicates[p].is_empty() {
            match child_levels[p].last_mut() {
                Some((s, _)) if *s == lowest_scale => {}
                _ => child_levels[p].push((lowest_scale, Vec::new())),
            }
        }
    }

    let mut raw: Vec<RawNode<T>> = Vec::new();
    emit_chain(data, base, root, None, &child_levels, &duplicates, &mut raw);
    Ok(SpaceTree::from_raw(TreeKind::CoverTree, data.dim(), raw)?.with_cover_base(base))
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).expect("coordinates are finite") {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Smallest integer `s` with `base^s >= max_d` (0 when all points coincide).
fn top_scale<T: Scalar>(base: T, max_d: T) -> i32 {
    if max_d <= T::zero() {
        return 0;
    }
    let mut s = (max_d.ln() / base.ln()).ceil().to_i32().unwrap_or(0);
    while base.powi(s) < max_d {
        s += 1;
    }
    while base.powi(s - 1) >= max_d {
        s -= 1;
    }
    s
}

fn cover_node<T: Scalar>(data: &Dataset<T>, base: T, point: usize, scale: i32, parent: Option<usize>) -> RawNode<T> {
    let center = data.point(point).to_vec();
    let radius = cover_radius(base, scale);
    RawNode {
        parent,
        children: Vec::new(),
        points: vec![point],
        region: Region::Ball { center: center.clone(), radius, scale },
        centroid: center,
        lambda: radius,
        rho: T::zero(),
    }
}

/// Emits the self-child chain of `point` and, recursively, every subtree
/// hanging off it. Returns the id of the chain's top node.
fn emit_chain<T: Scalar>(
    data: &Dataset<T>,
    base: T,
    point: usize,
    parent: Option<usize>,
    child_levels: &[Vec<(i32, Vec<usize>)>],
    duplicates: &[Vec<usize>],
    raw: &mut Vec<RawNode<T>>,
) -> usize {
    let levels = &child_levels[point];
    let mut top = None;
    let mut above = parent;
    for (i, (scale, children)) in levels.iter().enumerate() {
        let id = raw.len();
        raw.push(cover_node(data, base, point, *scale, above));
        if let Some(a) = above.filter(|_| i > 0) {
            raw[a].children.push(id);
        }
        top.get_or_insert(id);
        for &c in children {
            let cid = emit_chain(data, base, c, Some(id), child_levels, duplicates, raw);
            raw[id].children.push(cid);
        }
        above = Some(id);
    }
    let leaf = raw.len();
    raw.push(cover_node(data, base, point, LEAF_SCALE, above));
    match top {
        None => leaf,
        Some(top) => {
            let last = above.expect("chain has at least one node");
            // Self-child first.
            raw[last].children.insert(0, leaf);
            for &d in &duplicates[point] {
                let did = raw.len();
                raw.push(cover_node(data, base, d, LEAF_SCALE, Some(last)));
                raw[last].children.push(did);
            }
            top
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spacetree::validate_tree;

    #[test]
    fn single_point_root_has_no_children() {
        let data = Dataset::from_rows(&[[3.0, 4.0]]).unwrap();
        let tree = build_cover_tree(&data, 2.0).unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.node(0).is_leaf());
        assert_eq!(tree.node(0).scale(), Some(LEAF_SCALE));
        assert!(validate_tree(&tree, &data).is_empty());
    }

    #[test]
    fn line_of_three() {
        let data = Dataset::from_rows(&[[0.0], [1.0], [10.0]]).unwrap();
        let tree = build_cover_tree(&data, 2.0).unwrap();
        let v = validate_tree(&tree, &data);
        assert!(v.is_empty(), "{v:?}");
        for p in 0..3 {
            assert!(tree.nodes().iter().any(|n| n.points() == [p]));
        }
        assert_eq!(tree.node(0).points(), &[0]);
        assert_eq!(tree.descendant_points(0).len(), 3);
    }

    #[test]
    fn duplicates_become_leaves() {
        let data = Dataset::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let tree = build_cover_tree(&data, 2.0).unwrap();
        let v = validate_tree(&tree, &data);
        assert!(v.is_empty(), "{v:?}");
        let mut all = tree.descendant_points(0).to_vec();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn all_identical_points() {
        let data = Dataset::from_rows(&[[2.0], [2.0], [2.0]]).unwrap();
        let tree = build_cover_tree(&data, 2.0).unwrap();
        let v = validate_tree(&tree, &data);
        assert!(v.is_empty(), "{v:?}");
        assert_eq!(tree.node(0).descendant_count(), 3);
    }

    #[test]
    fn radius_matches_scale() {
        assert_eq!(cover_radius(2.0f64, 2), 8.0);
        assert_eq!(cover_radius(2.0f64, -1), 1.0);
        assert_eq!(cover_radius(2.0f64, LEAF_SCALE), 0.0);
        assert_eq!(cover_radius(3.0f64, 0), 1.5);
    }

    #[test]
    fn other_bases_build_valid_trees() {
        let data =
            Dataset::from_rows(&[[0.0, 0.0], [0.3, 0.1], [5.0, 1.0], [2.0, 2.0], [2.1, 2.0], [-4.0, 0.5]]).unwrap();
        for base in [1.3, 2.0, 3.0] {
            let tree = build_cover_tree(&data, base).unwrap();
            let v = validate_tree(&tree, &data);
            assert!(v.is_empty(), "base {base}: {v:?}");
        }
        assert!(build_cover_tree(&data, 1.0).is_err());
    }

    #[test]
    fn top_scale_brackets_distance() {
        assert_eq!(top_scale(2.0f64, 10.0), 4);
        assert_eq!(top_scale(2.0f64, 8.0), 3);
        assert_eq!(top_scale(2.0f64, 0.3), -1);
        assert_eq!(top_scale(2.0f64, 0.0), 0);
    }
}
