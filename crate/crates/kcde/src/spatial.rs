//! kd-tree over the joint (x, y) space. For any node pair it provides tight
//! min/max Euclidean distances in the x-subspace and min/max absolute
//! differences in the y-coordinate, which bound both kernel factors of a
//! pairwise term at once.

use crate::dataset::StandardizedDataset;
use crate::error::{KcdeError, Result};

/// Tree node view. The bounding box spans `d + 1` joint coordinates with y
/// last, and is tight: each side touches at least one member point.
#[derive(Debug, Clone)]
pub struct KdNode {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Slot range `[start, end)` covered by this node.
    pub start: usize,
    pub end: usize,
    /// Child node ids, or `None` for a leaf.
    pub children: Option<(usize, usize)>,
}

impl KdNode {
    pub fn count(&self) -> usize {
        self.end - self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Minimum and maximum Euclidean distance between the x-projections (first
/// `dim_x` coordinates) of two bounding boxes.
pub fn node_dist_x(a: &KdNode, b: &KdNode, dim_x: usize) -> (f64, f64) {
    let mut min_sq = 0.0;
    let mut max_sq = 0.0;
    for k in 0..dim_x {
        let (lo, hi) = interval_abs_bounds(a.lo[k], a.hi[k], b.lo[k], b.hi[k]);
        min_sq += lo * lo;
        max_sq += hi * hi;
    }
    (min_sq.sqrt(), max_sq.sqrt())
}

/// Minimum and maximum absolute difference between the y-intervals (last
/// coordinate) of two bounding boxes.
pub fn node_dist_y(a: &KdNode, b: &KdNode) -> (f64, f64) {
    let k = a.lo.len() - 1;
    interval_abs_bounds(a.lo[k], a.hi[k], b.lo[k], b.hi[k])
}

#[inline(always)]
fn interval_abs_bounds(alo: f64, ahi: f64, blo: f64, bhi: f64) -> (f64, f64) {
    let gap = (alo - bhi).max(blo - ahi).max(0.0);
    let span = (ahi - blo).max(bhi - alo);
    (gap, span)
}

const NO_CHILD: u32 = u32::MAX;

/// kd-tree over the joint standardized coordinates of a dataset.
///
/// Points are reordered into contiguous per-leaf slot ranges;
/// `index_of_slot` maps a slot back to its dataset index. Split rule:
/// widest-spread joint dimension, median index. Node data is stored flat
/// (boxes in one contiguous array) so traversals stay cache friendly.
#[derive(Debug, Clone)]
pub struct JointKdTree {
    dim_x: usize,
    leaf_size: usize,
    /// Per node: lo coordinates then hi coordinates, stride `2 * (d + 1)`.
    boxes: Vec<f64>,
    starts: Vec<u32>,
    ends: Vec<u32>,
    /// Child ids, `NO_CHILD` sentinel for leaves.
    children: Vec<(u32, u32)>,
    slot_to_index: Vec<usize>,
    /// Slot-ordered copies of the standardized coordinates.
    xs: Vec<f64>,
    ys: Vec<f64>,
    max_nn_x: f64,
    max_nn_y: f64,
}

struct Builder<'a> {
    joint_dim: usize,
    leaf_size: usize,
    boxes: Vec<f64>,
    starts: Vec<u32>,
    ends: Vec<u32>,
    children: Vec<(u32, u32)>,
    data: &'a StandardizedDataset,
}

impl Builder<'_> {
    fn coord(&self, i: usize, k: usize) -> f64 {
        if k < self.joint_dim - 1 {
            self.data.x_row(i)[k]
        } else {
            self.data.y(i)
        }
    }

    fn build_range(&mut self, perm: &mut [usize], start: usize, end: usize) -> u32 {
        let jd = self.joint_dim;
        let mut lo = vec![f64::INFINITY; jd];
        let mut hi = vec![f64::NEG_INFINITY; jd];
        for &i in &perm[start..end] {
            for k in 0..jd {
                let v = self.coord(i, k);
                if v < lo[k] {
                    lo[k] = v;
                }
                if v > hi[k] {
                    hi[k] = v;
                }
            }
        }
        let id = self.starts.len() as u32;
        self.boxes.extend_from_slice(&lo);
        self.boxes.extend_from_slice(&hi);
        self.starts.push(start as u32);
        self.ends.push(end as u32);
        self.children.push((NO_CHILD, NO_CHILD));

        let count = end - start;
        if count > self.leaf_size {
            let mut split_dim = 0;
            let mut widest = f64::NEG_INFINITY;
            for k in 0..jd {
                let spread = hi[k] - lo[k];
                if spread > widest {
                    widest = spread;
                    split_dim = k;
                }
            }
            let mid = count / 2;
            perm[start..end].select_nth_unstable_by(mid, |&a, &b| {
                self.coord(a, split_dim)
                    .partial_cmp(&self.coord(b, split_dim))
                    .unwrap()
            });
            let lc = self.build_range(perm, start, start + mid);
            let rc = self.build_range(perm, start + mid, end);
            self.children[id as usize] = (lc, rc);
        }
        id
    }
}

impl JointKdTree {
    pub fn build(data: &StandardizedDataset, leaf_size: usize) -> Result<Self> {
        if leaf_size == 0 {
            return Err(KcdeError::InvalidParameter(
                "leaf size must be at least 1".into(),
            ));
        }
        let (n, d) = (data.n(), data.d());
        if n == 0 {
            return Err(KcdeError::EmptyDataset);
        }
        let mut perm: Vec<usize> = (0..n).collect();
        let mut builder = Builder {
            joint_dim: d + 1,
            leaf_size,
            boxes: Vec::new(),
            starts: Vec::new(),
            ends: Vec::new(),
            children: Vec::new(),
            data,
        };
        builder.build_range(&mut perm, 0, n);

        let mut xs = Vec::with_capacity(n * d);
        let mut ys = Vec::with_capacity(n);
        for &i in &perm {
            xs.extend_from_slice(data.x_row(i));
            ys.push(data.y(i));
        }
        let mut tree = Self {
            dim_x: d,
            leaf_size,
            boxes: builder.boxes,
            starts: builder.starts,
            ends: builder.ends,
            children: builder.children,
            slot_to_index: perm,
            xs,
            ys,
            max_nn_x: 0.0,
            max_nn_y: 0.0,
        };
        tree.max_nn_x = tree.compute_max_nn_x();
        tree.max_nn_y = compute_max_nn_y(&tree.ys);
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node_count(&self) -> usize {
        self.starts.len()
    }

    /// Materialized view of a node.
    pub fn node(&self, id: usize) -> KdNode {
        let jd = self.dim_x + 1;
        let b = &self.boxes[id * 2 * jd..(id + 1) * 2 * jd];
        KdNode {
            lo: b[..jd].to_vec(),
            hi: b[jd..].to_vec(),
            start: self.starts[id] as usize,
            end: self.ends[id] as usize,
            children: self.child_ids(id),
        }
    }

    pub fn len(&self) -> usize {
        self.slot_to_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slot_to_index.is_empty()
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Dataset indices of the points under a node.
    pub fn point_indices(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        let (start, end) = self.slot_range(id);
        self.slot_to_index[start..end].iter().copied()
    }

    pub fn dist_x_bounds(&self, a: usize, b: usize) -> (f64, f64) {
        let (min_sq, max_sq) = self.dist_x_sq_bounds(a, b);
        (min_sq.sqrt(), max_sq.sqrt())
    }

    pub fn dist_y_bounds(&self, a: usize, b: usize) -> (f64, f64) {
        let jd = self.dim_x + 1;
        let ba = self.box_slice(a);
        let bb = self.box_slice(b);
        interval_abs_bounds(ba[jd - 1], ba[2 * jd - 1], bb[jd - 1], bb[2 * jd - 1])
    }

    #[inline(always)]
    pub(crate) fn box_slice(&self, id: usize) -> &[f64] {
        let stride = 2 * (self.dim_x + 1);
        &self.boxes[id * stride..(id + 1) * stride]
    }

    pub(crate) fn dist_x_sq_bounds(&self, a: usize, b: usize) -> (f64, f64) {
        let jd = self.dim_x + 1;
        let ba = self.box_slice(a);
        let bb = self.box_slice(b);
        let mut min_sq = 0.0;
        let mut max_sq = 0.0;
        for k in 0..self.dim_x {
            let (lo, hi) = interval_abs_bounds(ba[k], ba[jd + k], bb[k], bb[jd + k]);
            min_sq += lo * lo;
            max_sq += hi * hi;
        }
        (min_sq, max_sq)
    }

    #[inline(always)]
    pub(crate) fn child_ids(&self, id: usize) -> Option<(usize, usize)> {
        let (lc, rc) = self.children[id];
        if lc == NO_CHILD {
            None
        } else {
            Some((lc as usize, rc as usize))
        }
    }

    #[inline(always)]
    pub(crate) fn slot_range(&self, id: usize) -> (usize, usize) {
        (self.starts[id] as usize, self.ends[id] as usize)
    }

    #[inline(always)]
    pub(crate) fn count_of(&self, id: usize) -> usize {
        (self.ends[id] - self.starts[id]) as usize
    }

    #[inline(always)]
    pub(crate) fn x_slots(&self) -> &[f64] {
        &self.xs
    }

    #[inline(always)]
    pub(crate) fn y_slots(&self) -> &[f64] {
        &self.ys
    }

    #[inline(always)]
    pub(crate) fn x_slot(&self, slot: usize) -> &[f64] {
        &self.xs[slot * self.dim_x..(slot + 1) * self.dim_x]
    }

    #[inline(always)]
    pub(crate) fn y_slot(&self, slot: usize) -> f64 {
        self.ys[slot]
    }

    pub(crate) fn slot_indices(&self) -> &[usize] {
        &self.slot_to_index
    }

    /// Largest nearest-neighbor distance in the x-subspace. Any x-bandwidth
    /// at or below this value leaves some point with no in-support neighbor.
    pub fn max_nn_x(&self) -> f64 {
        self.max_nn_x
    }

    /// Largest nearest-neighbor absolute difference in y.
    pub fn max_nn_y(&self) -> f64 {
        self.max_nn_y
    }

    fn compute_max_nn_x(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for slot in 0..self.len() {
            let mut best = f64::INFINITY;
            self.nn_x_recurse(self.root(), slot, &mut best);
            worst = worst.max(best);
        }
        worst.sqrt()
    }

    fn nn_x_recurse(&self, id: usize, slot: usize, best_sq: &mut f64) {
        let jd = self.dim_x + 1;
        let b = self.box_slice(id);
        let q = self.x_slot(slot);
        let mut gap_sq = 0.0;
        for k in 0..self.dim_x {
            let g = (b[k] - q[k]).max(q[k] - b[jd + k]).max(0.0);
            gap_sq += g * g;
        }
        if gap_sq >= *best_sq {
            return;
        }
        match self.child_ids(id) {
            None => {
                let (start, end) = self.slot_range(id);
                for s in start..end {
                    if s == slot {
                        continue;
                    }
                    let p = self.x_slot(s);
                    let mut dist_sq = 0.0;
                    for k in 0..self.dim_x {
                        let diff = p[k] - q[k];
                        dist_sq += diff * diff;
                    }
                    if dist_sq < *best_sq {
                        *best_sq = dist_sq;
                    }
                }
            }
            Some((lc, rc)) => {
                // Descend into the child containing the query slot first.
                if slot < self.ends[lc] as usize {
                    self.nn_x_recurse(lc, slot, best_sq);
                    self.nn_x_recurse(rc, slot, best_sq);
                } else {
                    self.nn_x_recurse(rc, slot, best_sq);
                    self.nn_x_recurse(lc, slot, best_sq);
                }
            }
        }
    }
}

fn compute_max_nn_y(ys: &[f64]) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    let mut sorted = ys.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut worst = 0.0f64;
    for i in 0..sorted.len() {
        let left = if i > 0 {
            sorted[i] - sorted[i - 1]
        } else {
            f64::INFINITY
        };
        let right = if i + 1 < sorted.len() {
            sorted[i + 1] - sorted[i]
        } else {
            f64::INFINITY
        };
        worst = worst.max(left.min(right));
    }
    worst
}
