//! Space trees: an arena of nodes, each with held points, a convex region,
//! a centroid and the `lambda` (furthest descendant) / `rho` (furthest held
//! point) radii used by the pruning bounds.
//!
//! Two builders ship: [`build_kd_tree`] and [`build_cover_tree`]. Anything
//! else that can fill in a [`RawNode`] list (ball trees, octrees...) plugs into
//! the same traversals through [`SpaceTree::from_raw`].

mod cover;
mod kd;
mod validate;

use std::fmt::Write as _;
use std::ops::Range;

pub use cover::build_cover_tree;
pub use kd::{build_kd_tree, DEFAULT_LEAF_SIZE};
pub use validate::validate_tree;

use crate::dataset::{euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of a node in its tree's arena.
pub type NodeId = usize;

/// Scale used for cover-tree leaves, standing in for negative infinity.
pub const LEAF_SCALE: i32 = i32::MIN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeKind {
    KdTree,
    CoverTree,
}

impl TreeKind {
    /// True when no point is held by two nodes on one root-to-leaf path, so a
    /// dual traversal presents each point pair at most once.
    pub fn pairs_unique(self) -> bool {
        matches!(self, TreeKind::KdTree)
    }
}

impl std::str::FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kd" => Ok(TreeKind::KdTree),
            "cover" => Ok(TreeKind::CoverTree),
            other => Err(Error::usage(format!("unknown tree kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for TreeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeKind::KdTree => "kd",
            TreeKind::CoverTree => "cover",
        })
    }
}

/// The convex set a node covers.
#[derive(Clone, Debug, PartialEq)]
pub enum Region<T> {
    HyperRectangle { min: Vec<T>, max: Vec<T> },
    Ball { center: Vec<T>, radius: T, scale: i32 },
}

impl<T: Scalar> Region<T> {
    /// Lower bound on the distance between any point of `self` and any point of `other`.
    pub fn min_distance(&self, other: &Region<T>) -> Result<T> {
        self.min_max(other, false)
    }

    /// Upper bound on the distance between any point of `self` and any point of `other`.
    pub fn max_distance(&self, other: &Region<T>) -> Result<T> {
        self.min_max(other, true)
    }

    fn min_max(&self, other: &Region<T>, upper: bool) -> Result<T> {
        match (self, other) {
            (Region::HyperRectangle { min: amin, max: amax }, Region::HyperRectangle { min: bmin, max: bmax }) => {
                if amin.len() != bmin.len() {
                    return Err(Error::usage("regions of different dimension"));
                }
                Ok(if upper { rect_max(amin, amax, bmin, bmax) } else { rect_min(amin, amax, bmin, bmax) })
            }
            (Region::Ball { center: ac, radius: ar, .. }, Region::Ball { center: bc, radius: br, .. }) => {
                if ac.len() != bc.len() {
                    return Err(Error::usage("regions of different dimension"));
                }
                let (lo, hi) = ball_bounds(euclidean(ac, bc), *ar + *br);
                Ok(if upper { hi } else { lo })
            }
            _ => Err(Error::usage("cannot bound a hyperrectangle against a ball")),
        }
    }

    /// Both bounds at once; the region kinds must already be known to match.
    #[inline]
    pub(crate) fn bounds(&self, other: &Region<T>) -> (T, T) {
        match (self, other) {
            (Region::HyperRectangle { min: amin, max: amax }, Region::HyperRectangle { min: bmin, max: bmax }) => {
                (rect_min(amin, amax, bmin, bmax), rect_max(amin, amax, bmin, bmax))
            }
            (Region::Ball { center: ac, radius: ar, .. }, Region::Ball { center: bc, radius: br, .. }) => {
                ball_bounds(euclidean(ac, bc), *ar + *br)
            }
            _ => panic!("mixed region kinds reached a traversal"),
        }
    }

    #[inline]
    pub(crate) fn lower(&self, other: &Region<T>) -> T {
        match (self, other) {
            (Region::HyperRectangle { min: amin, max: amax }, Region::HyperRectangle { min: bmin, max: bmax }) => {
                rect_min(amin, amax, bmin, bmax)
            }
            (Region::Ball { center: ac, radius: ar, .. }, Region::Ball { center: bc, radius: br, .. }) => {
                ball_bounds(euclidean(ac, bc), *ar + *br).0
            }
            _ => panic!("mixed region kinds reached a traversal"),
        }
    }

    #[inline]
    pub(crate) fn upper(&self, other: &Region<T>) -> T {
        match (self, other) {
            (Region::HyperRectangle { min: amin, max: amax }, Region::HyperRectangle { min: bmin, max: bmax }) => {
                rect_max(amin, amax, bmin, bmax)
            }
            (Region::Ball { center: ac, radius: ar, .. }, Region::Ball { center: bc, radius: br, .. }) => {
                ball_bounds(euclidean(ac, bc), *ar + *br).1
            }
            _ => panic!("mixed region kinds reached a traversal"),
        }
    }

    pub fn contains_point(&self, p: &[T]) -> bool {
        match self {
            Region::HyperRectangle { min, max } => {
                p.iter().zip(min.iter().zip(max)).all(|(x, (lo, hi))| lo <= x && x <= hi)
            }
            Region::Ball { center, radius, .. } => euclidean(center, p) <= *radius,
        }
    }

    pub fn contains_region(&self, other: &Region<T>) -> bool {
        match (self, other) {
            (Region::HyperRectangle { min, max }, Region::HyperRectangle { min: omin, max: omax }) => {
                (0..min.len()).all(|i| min[i] <= omin[i] && omax[i] <= max[i])
            }
            (Region::Ball { center, radius, .. }, Region::Ball { center: oc, radius: or, .. }) => {
                euclidean(center, oc) + *or <= *radius
            }
            _ => false,
        }
    }

    fn describe(&self) -> String {
        match self {
            Region::HyperRectangle { min, max } => format!("rect{min:?}..{max:?}"),
            Region::Ball { center, radius, scale } => {
                let scale = if *scale == LEAF_SCALE { "-inf".to_string() } else { scale.to_string() };
                format!("ball(center={center:?}, radius={radius}, scale={scale})")
            }
        }
    }
}

/// Distance bounds between two balls whose centers are `d` apart. Rounded
/// outward by a few ulps unless both balls are single points, whose bounds
/// must equal the point distance exactly.
#[inline]
fn ball_bounds<T: Scalar>(d: T, radii: T) -> (T, T) {
    if radii == T::zero() {
        return (d, d);
    }
    let slack = T::epsilon() * T::lit(4.0);
    let lo = d - radii;
    let hi = d + radii;
    ((lo - lo.abs() * slack).max(T::zero()), hi + hi * slack)
}

fn rect_min<T: Scalar>(amin: &[T], amax: &[T], bmin: &[T], bmax: &[T]) -> T {
    let mut sum = T::zero();
    for i in 0..amin.len() {
        let gap = if bmin[i] > amax[i] {
            bmin[i] - amax[i]
        } else if amin[i] > bmax[i] {
            amin[i] - bmax[i]
        } else {
            T::zero()
        };
        sum = sum + gap * gap;
    }
    sum.sqrt()
}

fn rect_max<T: Scalar>(amin: &[T], amax: &[T], bmin: &[T], bmax: &[T]) -> T {
    let mut sum = T::zero();
    for i in 0..amin.len() {
        let span = (bmax[i] - amin[i]).max(amax[i] - bmin[i]);
        sum = sum + span * span;
    }
    sum.sqrt()
}

/// One vertex of a space tree.
#[derive(Clone, Debug)]
pub struct TreeNode<T> {
    id: NodeId,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    points: Vec<usize>,
    region: Region<T>,
    centroid: Vec<T>,
    lambda: T,
    rho: T,
    descendants: Range<usize>,
    subtree_end: NodeId,
    depth: usize,
}

impl<T: Scalar> TreeNode<T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Indices of the points held directly by this node.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn holds(&self, point: usize) -> bool {
        self.points.contains(&point)
    }

    pub fn region(&self) -> &Region<T> {
        &self.region
    }

    pub fn centroid(&self) -> &[T] {
        &self.centroid
    }

    /// Upper bound on the distance from the centroid to any descendant point.
    pub fn lambda(&self) -> T {
        self.lambda
    }

    /// Upper bound on the distance from the centroid to any held point.
    pub fn rho(&self) -> T {
        self.rho
    }

    /// Number of distinct points in the subtree.
    pub fn descendant_count(&self) -> usize {
        self.descendants.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Cover-tree scale, `None` for kd-tree nodes.
    pub fn scale(&self) -> Option<i32> {
        match self.region {
            Region::Ball { scale, .. } => Some(scale),
            Region::HyperRectangle { .. } => None,
        }
    }
}

/// Lower bound on the distance between descendant points of `a` and `b`.
pub fn min_distance<T: Scalar>(a: &TreeNode<T>, b: &TreeNode<T>) -> Result<T> {
    a.region.min_distance(&b.region)
}

/// Upper bound on the distance between descendant points of `a` and `b`.
pub fn max_distance<T: Scalar>(a: &TreeNode<T>, b: &TreeNode<T>) -> Result<T> {
    a.region.max_distance(&b.region)
}

pub fn node_lambda<T: Scalar>(n: &TreeNode<T>) -> T {
    n.lambda
}

pub fn node_rho<T: Scalar>(n: &TreeNode<T>) -> T {
    n.rho
}

/// Builder output before ids are normalised. Children reference indices in
/// the same raw list; exactly one node must have no parent.
#[derive(Clone, Debug)]
pub struct RawNode<T> {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub points: Vec<usize>,
    pub region: Region<T>,
    pub centroid: Vec<T>,
    pub lambda: T,
    pub rho: T,
}

/// Tree-building parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeConfig {
    pub kind: TreeKind,
    /// kd-tree only.
    pub leaf_size: usize,
    /// Cover-tree only.
    pub base: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { kind: TreeKind::KdTree, leaf_size: DEFAULT_LEAF_SIZE, base: 2.0 }
    }
}

impl TreeConfig {
    pub fn kd(leaf_size: usize) -> Self {
        TreeConfig { kind: TreeKind::KdTree, leaf_size, ..Default::default() }
    }

    pub fn cover() -> Self {
        TreeConfig { kind: TreeKind::CoverTree, ..Default::default() }
    }

    pub fn of_kind(kind: TreeKind) -> Self {
        TreeConfig { kind, ..Default::default() }
    }
}

/// An immutable space tree over one dataset. Node ids are a preorder
/// numbering, so the subtree of `n` is the id range `n..subtree_end(n)`.
#[derive(Clone, Debug)]
pub struct SpaceTree<T = f64> {
    kind: TreeKind,
    nodes: Vec<TreeNode<T>>,
    order: Vec<usize>,
    dim: usize,
    forest: bool,
    cover_base: T,
}

impl<T: Scalar> SpaceTree<T> {
    pub fn build(data: &Dataset<T>, config: &TreeConfig) -> Result<Self> {
        match config.kind {
            TreeKind::KdTree => build_kd_tree(data, config.leaf_size),
            TreeKind::CoverTree => build_cover_tree(data, T::lit(config.base)),
        }
    }

    /// Normalises builder output: renumbers nodes in preorder from the root,
    /// computes depths and lays out descendant points contiguously.
    ///
    /// A held point is listed at the deepest node holding it along a
    /// self-child chain, so each node's descendant range holds every point of
    /// its subtree exactly once.
    pub fn from_raw(kind: TreeKind, dim: usize, raw: Vec<RawNode<T>>) -> Result<Self> {
        let roots: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::usage(format!("tree must have exactly one root, found {}", roots.len())));
        }
        let mut new_id = vec![usize::MAX; raw.len()];
        let mut preorder = Vec::with_capacity(raw.len());
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            if new_id[i] != usize::MAX {
                return Err(Error::usage("node reachable twice: not a tree"));
            }
            new_id[i] = preorder.len();
            preorder.push(i);
            stack.extend(raw[i].children.iter().rev());
        }
        if preorder.len() != raw.len() {
            return Err(Error::usage("some nodes are unreachable from the root"));
        }

        let mut raw: Vec<Option<RawNode<T>>> = raw.into_iter().map(Some).collect();
        let mut nodes: Vec<TreeNode<T>> = Vec::with_capacity(preorder.len());
        for (id, &old) in preorder.iter().enumerate() {
            let r = raw[old].take().expect("each raw node visited once");
            let parent = r.parent.map(|p| new_id[p]);
            let depth = parent.map_or(0, |p| nodes[p].depth + 1);
            nodes.push(TreeNode {
                id,
                parent,
                children: r.children.iter().map(|&c| new_id[c]).collect(),
                points: r.points,
                region: r.region,
                centroid: r.centroid,
                lambda: r.lambda,
                rho: r.rho,
                descendants: 0..0,
                subtree_end: id + 1,
                depth,
            });
        }

        // Subtree extents: children follow their parent in preorder.
        for id in (0..nodes.len()).rev() {
            let end = nodes[id].children.iter().map(|&c| nodes[c].subtree_end).max().unwrap_or(id + 1);
            nodes[id].subtree_end = end;
        }

        let mut order = Vec::new();
        let mut start = vec![0usize; nodes.len()];
        for id in 0..nodes.len() {
            start[id] = order.len();
            let node = &nodes[id];
            for &p in &node.points {
                if !node.children.iter().any(|&c| nodes[c].points.contains(&p)) {
                    order.push(p);
                }
            }
            // The node's descendants end where the next non-descendant starts,
            // so fill the end lazily below.
        }
        for id in 0..nodes.len() {
            let end_id = nodes[id].subtree_end;
            let end = if end_id < nodes.len() { start[end_id] } else { order.len() };
            nodes[id].descendants = start[id]..end;
        }

        Ok(SpaceTree { kind, nodes, order, dim, forest: false, cover_base: T::lit(2.0) })
    }

    /// One degenerate leaf per point: zero-size region, `lambda = rho = 0`.
    /// Used to lift query points into nodes for single-tree traversals; node
    /// `i` holds point `i`. The nodes are not linked into a tree.
    pub fn point_forest(data: &Dataset<T>, kind: TreeKind) -> Self {
        let nodes = (0..data.len())
            .map(|i| {
                let p = data.point(i).to_vec();
                let region = match kind {
                    TreeKind::KdTree => Region::HyperRectangle { min: p.clone(), max: p.clone() },
                    TreeKind::CoverTree => Region::Ball { center: p.clone(), radius: T::zero(), scale: LEAF_SCALE },
                };
                TreeNode {
                    id: i,
                    parent: None,
                    children: Vec::new(),
                    points: vec![i],
                    region,
                    centroid: p,
                    lambda: T::zero(),
                    rho: T::zero(),
                    descendants: i..i + 1,
                    subtree_end: i + 1,
                    depth: 0,
                }
            })
            .collect();
        SpaceTree {
            kind,
            nodes,
            order: (0..data.len()).collect(),
            dim: data.dim(),
            forest: true,
            cover_base: T::lit(2.0),
        }
    }

    pub(crate) fn with_cover_base(mut self, base: T) -> Self {
        self.cover_base = base;
        self
    }

    /// Expansion base of a cover tree (2 unless built otherwise).
    pub fn cover_base(&self) -> T {
        self.cover_base
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True for [`SpaceTree::point_forest`] output.
    pub fn is_point_forest(&self) -> bool {
        self.forest
    }

    pub fn root(&self) -> NodeId {
        0
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &TreeNode<T> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every distinct point in the subtree of `id`, each once.
    #[inline]
    pub fn descendant_points(&self, id: NodeId) -> &[usize] {
        &self.order[self.nodes[id].descendants.clone()]
    }

    /// One past the last node id in the subtree of `id`.
    pub fn subtree_end(&self, id: NodeId) -> NodeId {
        self.nodes[id].subtree_end
    }

    pub fn is_ancestor_or_self(&self, ancestor: NodeId, id: NodeId) -> bool {
        ancestor <= id && id < self.nodes[ancestor].subtree_end
    }

    pub fn height(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Debug dump, one line per node. Not a stable format.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let _ = writeln!(
                out,
                "{} parent={} points={:?} region={} lambda={} rho={}",
                n.id,
                parent,
                n.points,
                n.region.describe(),
                n.lambda,
                n.rho
            );
        }
        out
    }

    /// Mutable access for fault-injection tests.
    #[cfg(test)]
    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut TreeNode<T> {
        &mut self.nodes[id]
    }
}
