//! Sparse multi-resolution cost field.
//!
//! Leaves are octree nodes over free space. Each leaf stores a single
//! predecessor vertex and the cost-to-come of that predecessor, so the cost
//! of any vertex `s` inside the leaf is `g_pred + |predecessor - s|`.
//!
//! All lengths in this module are in cell units (one unit per finest cell
//! edge); callers convert to meters with the map resolution.

use crate::geometry::{dist3, dist_to_box, farthest_to_box, Aabb, GridFrame, GridVertex, SubvolumeAddress};
use crate::map::{OccupancyOctree, FREE, MIXED};
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LeafState {
    /// No predecessor yet; the cost is treated as infinite.
    Unreached,
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostRecord {
    pub predecessor: GridVertex,
    pub g_pred: f64,
    pub state: LeafState,
    pub queue_version: u32,
    /// Whether the edge from the predecessor to the leaf center has been
    /// confirmed by a line-of-sight check.
    pub verified: bool,
    /// Cost of the leaf center, set when the leaf is closed.
    pub g_center: f64,
    /// Last candidate that lost a comparison against the current predecessor.
    pub rival: Option<(GridVertex, f64)>,
}

impl CostRecord {
    pub fn unreached() -> Self {
        Self {
            predecessor: GridVertex::default(),
            g_pred: f64::INFINITY,
            state: LeafState::Unreached,
            queue_version: 0,
            verified: false,
            g_center: f64::INFINITY,
            rival: None,
        }
    }

    pub fn is_reached(&self) -> bool {
        self.state != LeafState::Unreached
    }

    /// Cost of reaching `s` through the predecessor.
    pub fn g_at(&self, s: GridVertex) -> f64 {
        self.g_pred + self.predecessor.dist(s)
    }
}

#[derive(Clone, Debug)]
pub enum Node {
    Interior,
    Leaf(CostRecord),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// The first candidate is ε-better at every vertex.
    AllBetter,
    /// The first candidate is ε-better at no vertex (by a sound bound).
    NoneBetter,
    Mixed,
}

/// Outcome of comparing a candidate predecessor against the current one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    StrictlyBetter,
    NotBetter,
    Ambiguous,
}

/// Sound lower and upper bounds of
/// `D(s) = g_a + (1-ε)|s-a| - g_b - |s-b|` over the vertices of `bx`.
pub fn difference_bounds(a: GridVertex, g_a: f64, b: GridVertex, g_b: f64, bx: &Aabb, eps: f64) -> (f64, f64) {
    let (pa, pb) = (a.to_f64(), b.to_f64());
    let dg = g_a - g_b;
    let k = 1.0 - eps;
    if bx.min == bx.max {
        let s = bx.min.to_f64();
        let d = dg + k * dist3(s, pa) - dist3(s, pb);
        return (d, d);
    }
    let (na, fa) = (dist_to_box(pa, bx), farthest_to_box(pa, bx));
    let (nb, fb) = (dist_to_box(pb, bx), farthest_to_box(pb, bx));
    // interval bounds
    let mut upper = dg + k * fa - nb;
    let mut lower = dg + k * na - fb;
    // triangle inequality on |s-a| - |s-b|
    let ab = dist3(pa, pb);
    upper = upper.min(dg + ab - eps * na);
    lower = lower.max(dg - ab - eps * fa);
    // first-order expansion around the box center
    let lo = bx.min.to_f64();
    let hi = bx.max.to_f64();
    let c: [f64; 3] = std::array::from_fn(|i| 0.5 * (lo[i] + hi[i]));
    let h: [f64; 3] = std::array::from_fn(|i| 0.5 * (hi[i] - lo[i]));
    let r2 = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
    let (ca, cb) = (dist3(c, pa), dist3(c, pb));
    if ca > 0.0 && cb > 0.0 {
        let fc = dg + k * ca - cb;
        let lin: f64 = (0..3).map(|i| (k * (c[i] - pa[i]) / ca - (c[i] - pb[i]) / cb).abs() * h[i]).sum();
        upper = upper.min(fc + lin + k * r2 / (2.0 * ca));
        lower = lower.max(fc - lin - r2 / (2.0 * cb));
    }
    (lower, upper)
}

/// Classifies whether candidate `a` is ε-better than `b` over the box:
/// `g_a + |s-a| < g_b + |s-b| + ε|s-a|`.
pub fn suboptimality_bound(a: (GridVertex, f64), b: (GridVertex, f64), bx: &Aabb, eps: f64) -> Classification {
    let (lower, upper) = difference_bounds(a.0, a.1, b.0, b.1, bx, eps);
    if upper < 0.0 {
        Classification::AllBetter
    } else if lower >= 0.0 {
        Classification::NoneBetter
    } else {
        Classification::Mixed
    }
}

/// Decides whether `new` should replace `old` as the predecessor of a leaf.
pub fn compare_predecessors(new: (GridVertex, f64), old: (GridVertex, f64), bx: &Aabb, eps: f64) -> Comparison {
    if new.0 == old.0 {
        return if new.1 < old.1 { Comparison::StrictlyBetter } else { Comparison::NotBetter };
    }
    let keep = suboptimality_bound(old, new, bx, eps);
    if keep == Classification::AllBetter {
        return Comparison::NotBetter;
    }
    match suboptimality_bound(new, old, bx, eps) {
        Classification::AllBetter => Comparison::StrictlyBetter,
        Classification::NoneBetter => Comparison::NotBetter,
        Classification::Mixed if keep == Classification::NoneBetter => Comparison::StrictlyBetter,
        Classification::Mixed => Comparison::Ambiguous,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("{0} is not a leaf")]
    NotALeaf(SubvolumeAddress),
    #[error("cannot split finest leaf {0}")]
    Finest(SubvolumeAddress),
    #[error("cannot split closed leaf {0}")]
    Closed(SubvolumeAddress),
}

/// The cost field of one planning query.
#[derive(Clone, Debug)]
pub struct CostField {
    nodes: FxHashMap<SubvolumeAddress, Node>,
    initialized: FxHashSet<[i32; 3]>,
    block_height: u8,
    init_height: Option<u8>,
    seed_bounds: bool,
    leaves_created: usize,
}

impl CostField {
    /// `init_height` is the height of the leaves placed around obstacles, or
    /// None to use the occupancy leaves unchanged. With `seed_bounds`, the
    /// outside of the map counts as an obstacle for seeding.
    pub fn new(block_height: u8, init_height: Option<u8>, seed_bounds: bool) -> Self {
        Self {
            nodes: FxHashMap::default(),
            initialized: FxHashSet::default(),
            block_height,
            init_height,
            seed_bounds,
            leaves_created: 0,
        }
    }

    pub fn block_height(&self) -> u8 {
        self.block_height
    }

    /// Leaves created by block initialization so far.
    pub fn init_leaves(&self) -> usize {
        self.leaves_created
    }

    pub fn node(&self, addr: SubvolumeAddress) -> Option<&Node> {
        self.nodes.get(&addr)
    }

    pub fn leaf(&self, addr: SubvolumeAddress) -> Option<&CostRecord> {
        match self.nodes.get(&addr) {
            Some(Node::Leaf(r)) => Some(r),
            _ => None,
        }
    }

    pub fn leaf_mut(&mut self, addr: SubvolumeAddress) -> Option<&mut CostRecord> {
        match self.nodes.get_mut(&addr) {
            Some(Node::Leaf(r)) => {
                debug_assert!(r.state != LeafState::Closed, "closed record {addr} accessed mutably");
                Some(r)
            }
            _ => None,
        }
    }

    #[cfg(test)]
    pub(crate) fn leaf_mut_unchecked(&mut self, addr: SubvolumeAddress) -> Option<&mut CostRecord> {
        match self.nodes.get_mut(&addr) {
            Some(Node::Leaf(r)) => Some(r),
            _ => None,
        }
    }

    pub fn is_initialized(&self, block: [i32; 3]) -> bool {
        self.initialized.contains(&block)
    }

    /// Builds the leaves of a block the first time it is touched; returns the
    /// number of leaves created.
    pub fn initialize_block(&mut self, map: &OccupancyOctree, block: [i32; 3]) -> usize {
        if !self.initialized.insert(block) || !map.has_block(block) {
            return 0;
        }
        let before = self.leaves_created;
        let root = SubvolumeAddress::new(self.block_height, block[0], block[1], block[2]);
        self.build(map, root);
        self.leaves_created - before
    }

    fn build(&mut self, map: &OccupancyOctree, addr: SubvolumeAddress) {
        let refine = match map.node_code(addr) {
            FREE => self.needs_seeding(map, addr),
            MIXED => true,
            _ => return,
        };
        if refine {
            self.nodes.insert(addr, Node::Interior);
            for c in addr.children() {
                self.build(map, c);
            }
        } else {
            self.nodes.insert(addr, Node::Leaf(CostRecord::unreached()));
            self.leaves_created += 1;
        }
    }

    fn needs_seeding(&self, map: &OccupancyOctree, addr: SubvolumeAddress) -> bool {
        let Some(hi) = self.init_height else { return false };
        if addr.height <= hi {
            return false;
        }
        let mut shell = addr.aabb().dilate(1);
        if !self.seed_bounds {
            match shell.intersection(&map.bounds()) {
                Some(s) => shell = s,
                None => return false,
            }
        }
        map.any_non_free(&shell)
    }

    /// Initializes every block overlapping `region`.
    pub fn initialize(&mut self, map: &OccupancyOctree, region: &Aabb) -> usize {
        let bh = self.block_height;
        let lo = SubvolumeAddress::containing(region.min, bh);
        let hi = SubvolumeAddress::containing(region.max, bh);
        let mut n = 0;
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    n += self.initialize_block(map, [x, y, z]);
                }
            }
        }
        n
    }

    /// The leaf containing `v`, if any (the block must be initialized).
    pub fn leaf_containing(&self, v: GridVertex) -> Option<SubvolumeAddress> {
        let mut addr = SubvolumeAddress::containing(v, self.block_height);
        loop {
            match self.nodes.get(&addr)? {
                Node::Leaf(_) => return Some(addr),
                Node::Interior => {
                    if addr.height == 0 {
                        return None;
                    }
                    addr = SubvolumeAddress::containing(v, addr.height - 1);
                }
            }
        }
    }

    /// Leaves of initialized blocks that touch or overlap `bx`, in block then
    /// Morton order.
    pub fn adjacent_leaves(&self, bx: &Aabb) -> Vec<SubvolumeAddress> {
        let mut out = Vec::new();
        let bh = self.block_height;
        let r = bx.dilate(1);
        let lo = SubvolumeAddress::containing(r.min, bh);
        let hi = SubvolumeAddress::containing(r.max, bh);
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    self.collect_adjacent(SubvolumeAddress::new(bh, x, y, z), bx, &mut out);
                }
            }
        }
        out
    }

    fn collect_adjacent(&self, addr: SubvolumeAddress, bx: &Aabb, out: &mut Vec<SubvolumeAddress>) {
        match self.nodes.get(&addr) {
            None => {}
            Some(Node::Leaf(_)) => out.push(addr),
            Some(Node::Interior) => {
                for c in addr.children() {
                    if crate::geometry::are_adjacent(&c.aabb(), bx) {
                        self.collect_adjacent(c, bx, out);
                    }
                }
            }
        }
    }

    /// Replaces an open or unreached leaf by its eight children, which copy
    /// its predecessor and cost but start unverified.
    pub fn split(&mut self, addr: SubvolumeAddress) -> Result<[SubvolumeAddress; 8], SplitError> {
        let rec = match self.nodes.get(&addr) {
            Some(Node::Leaf(r)) => *r,
            _ => return Err(SplitError::NotALeaf(addr)),
        };
        if addr.height == 0 {
            return Err(SplitError::Finest(addr));
        }
        if rec.state == LeafState::Closed {
            return Err(SplitError::Closed(addr));
        }
        self.nodes.insert(addr, Node::Interior);
        let children = addr.children();
        for c in children {
            let mut r = rec;
            r.queue_version = 0;
            r.verified = false;
            self.nodes.insert(c, Node::Leaf(r));
        }
        Ok(children)
    }

    /// Splits the leaf containing `v` down to the finest resolution.
    pub fn isolate(&mut self, v: GridVertex) -> Option<SubvolumeAddress> {
        loop {
            let addr = self.leaf_containing(v)?;
            if addr.height == 0 {
                return Some(addr);
            }
            self.split(addr).ok()?;
        }
    }

    /// All leaves, sorted by address.
    pub fn leaves(&self) -> Vec<(SubvolumeAddress, CostRecord)> {
        let mut v: Vec<_> = self
            .nodes
            .iter()
            .filter_map(|(a, n)| match n {
                Node::Leaf(r) => Some((*a, *r)),
                Node::Interior => None,
            })
            .collect();
        v.sort_unstable_by_key(|(a, _)| *a);
        v
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Writes the leaf set as text, one leaf per line:
    /// `x y z height pred_x pred_y pred_z g_pred_m state`, where `x y z` is
    /// the address at the leaf's own height and `g_pred_m` is in meters.
    pub fn export_voxel_list(&self, frame: &GridFrame, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# resolution {}", frame.resolution)?;
        writeln!(out, "# origin {} {} {}", frame.origin.x, frame.origin.y, frame.origin.z)?;
        writeln!(out, "# x y z height pred_x pred_y pred_z g_pred_m state")?;
        for (a, r) in self.leaves() {
            let state = match r.state {
                LeafState::Unreached => "unreached",
                LeafState::Open => "open",
                LeafState::Closed => "closed",
            };
            let (p, g) = if r.is_reached() {
                (r.predecessor, r.g_pred * frame.resolution)
            } else {
                (GridVertex::default(), f64::INFINITY)
            };
            writeln!(out, "{} {} {} {} {} {} {} {} {}", a.x, a.y, a.z, a.height, p.x, p.y, p.z, g, state)?;
        }
        Ok(())
    }
}
