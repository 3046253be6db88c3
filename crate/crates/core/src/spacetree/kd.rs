use crate::dataset::{centroid_of, euclidean, Dataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{RawNode, Region, SpaceTree, TreeKind};

pub const DEFAULT_LEAF_SIZE: usize = 20;

/// Builds a kd-tree holding points only in leaves of at most `leaf_size`
/// points.
///
/// Nodes split on their widest dimension at the midpoint of its range, points
/// with coordinate `< split` going left. When that leaves one side empty the
/// node splits at the median position instead. Regions are the tight bounding
/// boxes of the descendant points.
pub fn build_kd_tree<T: Scalar>(data: &Dataset<T>, leaf_size: usize) -> Result<SpaceTree<T>> {
    if leaf_size == 0 {
        return Err(Error::usage("leaf size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut raw = Vec::new();
    split(data, leaf_size, &mut order, None, &mut raw);
    SpaceTree::from_raw(TreeKind::KdTree, data.dim(), raw)
}

fn split<T: Scalar>(
    data: &Dataset<T>,
    leaf_size: usize,
    indices: &mut [usize],
    parent: Option<usize>,
    raw: &mut Vec<RawNode<T>>,
) -> usize {
    let dim = data.dim();
    let mut min = data.point(indices[0]).to_vec();
    let mut max = min.clone();
    for &i in indices.iter() {
        for (d, &c) in data.point(i).iter().enumerate() {
            if c < min[d] {
                min[d] = c;
            }
            if c > max[d] {
                max[d] = c;
            }
        }
    }
    let centroid = centroid_of(data, indices);
    let lambda = indices.iter().map(|&i| euclidean(&centroid, data.point(i))).fold(T::zero(), T::max);

    let id = raw.len();
    let is_leaf = indices.len() <= leaf_size;
    raw.push(RawNode {
        parent,
        children: Vec::new(),
        points: if is_leaf { indices.to_vec() } else { Vec::new() },
        region: Region::HyperRectangle { min: min.clone(), max: max.clone() },
        centroid,
        lambda,
        rho: if is_leaf { lambda } else { T::zero() },
    });
    if is_leaf {
        return id;
    }

    let mut axis = 0;
    for d in 1..dim {
        if max[d] - min[d] > max[axis] - min[axis] {
            axis = d;
        }
    }
    let mid = (min[axis] + max[axis]) / T::lit(2.0);
    let mut left = partition(indices, |i| data.point(i)[axis] < mid);
    if left == 0 || left == indices.len() {
        indices.sort_by(|&a, &b| {
            data.point(a)[axis].partial_cmp(&data.point(b)[axis]).expect("coordinates are finite").then(a.cmp(&b))
        });
        left = indices.len() / 2;
    }

    let (lo, hi) = indices.split_at_mut(left);
    let l = split(data, leaf_size, lo, Some(id), raw);
    let r = split(data, leaf_size, hi, Some(id), raw);
    raw[id].children = vec![l, r];
    id
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(indices: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = indices.iter().partition(|&&i| pred(i));
    let n = yes.len();
    for (slot, v) in indices.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    n
}
