//! Structural and geometric invariant checks for space trees.

use std::collections::BTreeSet;

use crate::dataset::{centroid_of, euclidean, Dataset};
use crate::scalar::Scalar;

use super::cover::{cover_radius, scale_distance};
use super::{NodeId, Region, SpaceTree, TreeKind, LEAF_SCALE};

/// Checks every invariant of `tree` over `data`. Returns one message per
/// violation; an empty list means the tree is valid.
pub fn validate_tree<T: Scalar>(tree: &SpaceTree<T>, data: &Dataset<T>) -> Vec<String> {
    let mut out = Vec::new();
    if tree.dim() != data.dim() {
        out.push(format!("tree dimension {} differs from dataset dimension {}", tree.dim(), data.dim()));
        return out;
    }
    if tree.is_point_forest() {
        check_forest(tree, data, &mut out);
        return out;
    }
    if !check_structure(tree, &mut out) {
        return out;
    }
    check_points(tree, data, &mut out);
    check_geometry(tree, data, &mut out);
    if tree.kind() == TreeKind::CoverTree {
        check_cover(tree, data, &mut out);
    }
    out
}

/// `a <= b` up to a few units of rounding in `b`'s magnitude.
fn approx_le<T: Scalar>(a: T, b: T) -> bool {
    let slack = T::epsilon() * T::lit(64.0);
    a <= b + (b.abs() + T::one()) * slack
}

fn check_forest<T: Scalar>(tree: &SpaceTree<T>, data: &Dataset<T>, out: &mut Vec<String>) {
    if tree.len() != data.len() {
        out.push(format!("point forest has {} nodes for {} points", tree.len(), data.len()));
        return;
    }
    for (i, n) in tree.nodes().iter().enumerate() {
        if n.points() != [i] || n.centroid() != data.point(i) {
            out.push(format!("forest node {i} does not hold exactly point {i}"));
        }
    }
}

/// Single root, parent/child agreement, acyclicity and reachability. Returns
/// false when the structure is too broken for further checks.
fn check_structure<T: Scalar>(tree: &SpaceTree<T>, out: &mut Vec<String>) -> bool {
    let n = tree.len();
    if n == 0 {
        out.push("tree has no nodes".into());
        return false;
    }
    let roots: Vec<NodeId> = (0..n).filter(|&i| tree.node(i).parent().is_none()).collect();
    if roots.len() != 1 {
        out.push(format!("expected exactly one root, found {}", roots.len()));
    }
    let start = out.len();
    for id in 0..n {
        let node = tree.node(id);
        for &c in node.children() {
            if c >= n {
                out.push(format!("node {id} lists nonexistent child {c}"));
            } else if tree.node(c).parent() != Some(id) {
                out.push(format!("node {id} lists child {c} whose parent is {:?}", tree.node(c).parent()));
            }
        }
        if let Some(p) = node.parent() {
            if p >= n || !tree.node(p).children().contains(&id) {
                out.push(format!("node {id} names parent {p} which does not list it"));
            }
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![tree.root()];
    let mut reached = 0;
    while let Some(id) = stack.pop() {
        if seen[id] {
            out.push(format!("node {id} reached twice: cycle or shared child"));
            continue;
        }
        seen[id] = true;
        reached += 1;
        stack.extend(tree.node(id).children().iter().copied().filter(|&c| c < n));
    }
    if reached != n {
        out.push(format!("{} nodes unreachable from the root", n - reached));
    }
    out.len() == start && roots.len() == 1
}

fn check_points<T: Scalar>(tree: &SpaceTree<T>, data: &Dataset<T>, out: &mut Vec<String>) {
    let mut held = vec![0usize; data.len()];
    for node in tree.nodes() {
        for &p in node.points() {
            if p >= data.len() {
                out.push(format!("node {} holds out-of-range point {p}", node.id()));
            } else {
                held[p] += 1;
            }
        }
    }
    for (p, &count) in held.iter().enumerate() {
        if count == 0 {
            out.push(format!("point {p} uncovered"));
        }
    }

    // Descendant lists: the union of held points over the subtree, each once.
    for id in 0..tree.len() {
        let mut expected = BTreeSet::new();
        for sub in id..tree.subtree_end(id) {
            expected.extend(tree.node(sub).points().iter().copied());
        }
        let listed: Vec<usize> = tree.descendant_points(id).to_vec();
        let listed_set: BTreeSet<usize> = listed.iter().copied().collect();
        if listed_set.len() != listed.len() || listed_set != expected {
            out.push(format!(
                "node {id} descendant list has {} entries, expected {} distinct points",
                listed.len(),
                expected.len()
            ));
        }
    }

    if tree.kind() == TreeKind::KdTree {
        for node in tree.nodes() {
            if !node.is_leaf() && !node.points().is_empty() {
                out.push(format!("kd node {} is internal but holds points", node.id()));
            }
        }
        for (p, &count) in held.iter().enumerate() {
            if count > 1 {
                out.push(format!("kd point {p} held by {count} leaves"));
            }
        }
    }
}

fn check_geometry<T: Scalar>(tree: &SpaceTree<T>, data: &Dataset<T>, out: &mut Vec<String>) {
    for node in tree.nodes() {
        let id = node.id();
        let region = node.region();
        match (tree.kind(), region) {
            (TreeKind::KdTree, Region::HyperRectangle { .. }) | (TreeKind::CoverTree, Region::Ball { .. }) => {}
            _ => out.push(format!("node {id} region kind does not match the tree kind")),
        }
        for &p in tree.descendant_points(id) {
            if !region_contains(region, data.point(p)) {
                out.push(format!("node {id} region excludes descendant point {p}"));
            }
        }
        if let Some(parent) = node.parent() {
            if !region_contains_region(tree.node(parent).region(), region) {
                out.push(format!("node {id} region escapes parent {parent}"));
            }
        }

        let furthest = tree
            .descendant_points(id)
            .iter()
            .map(|&p| euclidean(node.centroid(), data.point(p)))
            .fold(T::zero(), T::max);
        let furthest_held =
            node.points().iter().map(|&p| euclidean(node.centroid(), data.point(p))).fold(T::zero(), T::max);
        if !approx_le(furthest, node.lambda()) {
            out.push(format!("node {id} lambda {} below furthest descendant {furthest}", node.lambda()));
        }
        if !approx_le(furthest_held, node.rho()) {
            out.push(format!("node {id} rho {} below furthest held point {furthest_held}", node.rho()));
        }
        if node.rho() > node.lambda() {
            out.push(format!("node {id} rho {} exceeds lambda {}", node.rho(), node.lambda()));
        }

        match tree.kind() {
            TreeKind::KdTree => {
                if node.lambda() != furthest {
                    out.push(format!("kd node {id} lambda {} is not exact ({furthest})", node.lambda()));
                }
                if node.rho() != furthest_held {
                    out.push(format!("kd node {id} rho {} is not exact ({furthest_held})", node.rho()));
                }
                let mean = centroid_of(data, tree.descendant_points(id));
                let off = euclidean(&mean, node.centroid());
                let magnitude = mean.iter().fold(T::zero(), |m, c| m.max(c.abs()));
                let count = T::from_usize(tree.descendant_points(id).len() + 16).expect("count fits");
                if off > (magnitude + T::one()) * T::epsilon() * count {
                    out.push(format!("kd node {id} centroid is off the mean by {off}"));
                }
            }
            TreeKind::CoverTree => {
                if node.points().len() != 1 {
                    out.push(format!("cover node {id} holds {} points", node.points().len()));
                } else if node.centroid() != data.point(node.points()[0]) {
                    out.push(format!("cover node {id} centroid is not its point"));
                }
            }
        }
    }
}

fn region_contains<T: Scalar>(region: &Region<T>, p: &[T]) -> bool {
    match region {
        Region::HyperRectangle { min, max } => {
            p.iter().zip(min.iter().zip(max)).all(|(x, (lo, hi))| lo <= x && x <= hi)
        }
        Region::Ball { center, radius, .. } => approx_le(euclidean(center, p), *radius),
    }
}

fn region_contains_region<T: Scalar>(outer: &Region<T>, inner: &Region<T>) -> bool {
    match (outer, inner) {
        (Region::Ball { center, radius, .. }, Region::Ball { center: ic, radius: ir, .. }) => {
            approx_le(euclidean(center, ic) + *ir, *radius)
        }
        _ => outer.contains_region(inner),
    }
}

/// Scale structure, nesting, covering and separation.
fn check_cover<T: Scalar>(tree: &SpaceTree<T>, data: &Dataset<T>, out: &mut Vec<String>) {
    let base = tree.cover_base();
    let scale_of = |id: NodeId| tree.node(id).scale().unwrap_or(LEAF_SCALE);
    for node in tree.nodes() {
        let id = node.id();
        let s = scale_of(id);
        if node.is_leaf() != (s == LEAF_SCALE) {
            out.push(format!("cover node {id} leaf status disagrees with its scale"));
        }
        if let Region::Ball { radius, .. } = node.region() {
            if *radius != cover_radius(base, s) {
                out.push(format!("cover node {id} radius {radius} does not match its scale"));
            }
        }
        if node.points().len() != 1 {
            continue;
        }
        let point = node.points()[0];
        if !node.is_leaf() && !node.children().iter().any(|&c| tree.node(c).holds(point)) {
            out.push(format!("cover node {id} has no self-child"));
        }
        for &c in node.children() {
            let cs = scale_of(c);
            if cs >= s {
                out.push(format!("cover node {c} scale is not below its parent {id}"));
            }
            if let Some(&cp) = tree.node(c).points().first() {
                let d = euclidean(data.point(point), data.point(cp));
                if !approx_le(d, scale_distance(base, s)) {
                    out.push(format!("cover node {c} is {d} from parent {id}, beyond the covering distance"));
                }
            }
        }
    }

    // A point is a center at every scale up to the one where it was
    // introduced: one below the scale of the parent of its topmost node.
    let mut intro: Vec<Option<i32>> = vec![None; data.len()];
    for node in tree.nodes() {
        let Some(&p) = node.points().first() else { continue };
        let level = match node.parent() {
            None => i32::MAX,
            Some(parent) if tree.node(parent).holds(p) => continue,
            Some(parent) => scale_of(parent).saturating_sub(1),
        };
        intro[p] = Some(intro[p].map_or(level, |l| l.max(level)));
    }
    let centers: Vec<(usize, i32)> = intro.iter().enumerate().filter_map(|(p, l)| l.map(|l| (p, l))).collect();
    for (i, &(a, la)) in centers.iter().enumerate() {
        for &(b, lb) in &centers[i + 1..] {
            let d = euclidean(data.point(a), data.point(b));
            if d == T::zero() {
                continue;
            }
            let level = la.min(lb);
            if d <= base.powi(level) {
                out.push(format!("points {a} and {b} are {d} apart, violating separation at scale {level}"));
            }
        }
    }
}
