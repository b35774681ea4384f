//! Best-first search over the leaves of the multi-resolution cost field.
//!
//! Each popped leaf is closed, the cost of its center is fixed, and every
//! adjacent leaf is offered two candidate predecessors: the popped leaf's own
//! predecessor (if visible) and its center. Leaves for which neither the old
//! nor the new predecessor is good everywhere are split.

use super::{snap_query, PlanError, PlanResult, PlanStats, PlanStatus, QuerySpec};
use crate::cost_field::{compare_predecessors, Comparison, CostField, LeafState, Node};
use crate::geometry::{are_adjacent, are_face_adjacent, dist_to_box, Aabb, GridVertex, SubvolumeAddress};
use crate::map::OccupancyOctree;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::time::Instant;

type Entry = super::QueueEntry<SubvolumeAddress>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Tolerated relative suboptimality per cost-field comparison.
    pub epsilon: f64,
    /// Size of the leaves placed next to obstacles, in meters; None keeps the
    /// occupancy map's leaves.
    pub r_init: Option<f64>,
    /// Split leaves whose predecessor choice is ambiguous. When off, the
    /// comparison is decided at the leaf center.
    pub refine: bool,
    /// Assume visibility when updating and check it on expansion.
    pub lazy: bool,
    /// Longest segment accepted by a visibility check, in meters; None means
    /// 512 cells.
    pub los_max_dist: Option<f64>,
    /// Treat the outside of the map as an obstacle when placing leaves.
    pub seed_bounds: bool,
}

impl PlannerConfig {
    pub fn new(resolution: f64) -> Self {
        Self {
            epsilon: 1e-2,
            r_init: Some(resolution),
            refine: true,
            lazy: false,
            los_max_dist: None,
            seed_bounds: false,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_r_init(mut self, r_init: Option<f64>) -> Self {
        self.r_init = r_init;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn with_lazy(mut self, lazy: bool) -> Self {
        self.lazy = lazy;
        self
    }

    pub fn los_cap_cells(&self, resolution: f64) -> f64 {
        self.los_max_dist.map_or(512.0, |d| d / resolution)
    }

    /// Height of the seeded leaves for this map.
    pub fn init_height(&self, map: &OccupancyOctree) -> Result<Option<u8>, PlanError> {
        let Some(r) = self.r_init else { return Ok(None) };
        let ratio = r / map.resolution();
        let h = ratio.log2().round();
        if !(h >= 0.0 && (2f64.powi(h as i32) - ratio).abs() < 1e-6 * ratio) {
            return Err(PlanError::Config(format!(
                "r_init {r} m is not a power-of-two multiple of the resolution {} m",
                map.resolution()
            )));
        }
        if h as u8 > map.block_height() {
            return Err(PlanError::Config(format!("r_init {r} m exceeds the block size")));
        }
        Ok(Some(h as u8))
    }

    fn validate(&self, map: &OccupancyOctree) -> Result<Option<u8>, PlanError> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(PlanError::Config(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        if let Some(d) = self.los_max_dist {
            if !(d > 0.0) {
                return Err(PlanError::Config("los_max_dist must be positive".into()));
            }
        }
        self.init_height(map)
    }
}

/// Lower bound of `g_pred + |pred - s| + |s - goal|` over the vertices of
/// `bx` (cell units).
pub fn compute_f_score(pred: GridVertex, g_pred: f64, bx: &Aabb, goal: GridVertex) -> f64 {
    let (p, q) = (pred.to_f64(), goal.to_f64());
    g_pred + pred.dist(goal).max(dist_to_box(p, bx) + dist_to_box(q, bx))
}

fn corners(b: &Aabb) -> [GridVertex; 8] {
    std::array::from_fn(|i| {
        GridVertex::new(
            if i & 1 == 0 { b.min.x } else { b.max.x },
            if i & 2 == 0 { b.min.y } else { b.max.y },
            if i & 4 == 0 { b.min.z } else { b.max.z },
        )
    })
}

struct Expanded {
    addr: SubvolumeAddress,
    aabb: Aabb,
    pred: GridVertex,
    g_pred: f64,
    center: GridVertex,
    g_center: f64,
}

struct Search<'m> {
    map: &'m OccupancyOctree,
    eps: f64,
    refine: bool,
    lazy: bool,
    cap: f64,
    field: CostField,
    open: BinaryHeap<Entry>,
    goal: GridVertex,
    stats: PlanStats,
}

impl<'m> Search<'m> {
    fn los(&mut self, a: GridVertex, b: GridVertex) -> bool {
        self.stats.los_checks += 1;
        self.map.line_of_sight_vertices(a, b, self.cap)
    }

    fn push(&mut self, addr: SubvolumeAddress) {
        let goal = self.goal;
        let rec = self.field.leaf_mut(addr).expect("pushed node is a leaf");
        rec.state = LeafState::Open;
        rec.queue_version += 1;
        let bx = addr.aabb();
        let f = compute_f_score(rec.predecessor, rec.g_pred, &bx, goal);
        let g = rec.g_pred + dist_to_box(rec.predecessor.to_f64(), &bx);
        self.open.push(Entry { f, g, key: addr, version: rec.queue_version });
        self.stats.queue_pushes += 1;
    }

    fn ensure_block(&mut self, bc: [i32; 3]) {
        self.stats.init_leaves += self.field.initialize_block(self.map, bc) as u64;
    }

    fn ensure_region(&mut self, r: &Aabb) -> Vec<[i32; 3]> {
        let bh = self.field.block_height();
        let lo = SubvolumeAddress::containing(r.min, bh);
        let hi = SubvolumeAddress::containing(r.max, bh);
        let mut blocks = Vec::new();
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    self.ensure_block([x, y, z]);
                    blocks.push([x, y, z]);
                }
            }
        }
        blocks
    }

    /// Checks the edge from the predecessor to the leaf center, reconnecting
    /// through the best visible closed neighbor if it is blocked.
    fn verify(&mut self, addr: SubvolumeAddress) -> bool {
        let rec = *self.field.leaf(addr).unwrap();
        if rec.verified {
            return true;
        }
        let center = addr.center();
        if self.los(rec.predecessor, center) {
            self.field.leaf_mut(addr).unwrap().verified = true;
            return true;
        }
        let bx = addr.aabb();
        let mut cands: Vec<(f64, SubvolumeAddress, GridVertex, f64)> = Vec::new();
        for a in self.field.adjacent_leaves(&bx) {
            let Some(r) = self.field.leaf(a) else { continue };
            if r.state != LeafState::Closed || a == addr {
                continue;
            }
            let c = a.center();
            cands.push((r.g_center + c.dist(center), a, c, r.g_center));
        }
        cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for (_, _, c, g) in cands {
            if self.los(c, center) {
                let r = self.field.leaf_mut(addr).unwrap();
                r.predecessor = c;
                r.g_pred = g;
                r.verified = true;
                r.rival = None;
                return true;
            }
        }
        *self.field.leaf_mut(addr).unwrap() = crate::cost_field::CostRecord {
            queue_version: rec.queue_version,
            ..crate::cost_field::CostRecord::unreached()
        };
        false
    }

    fn expand(&mut self, addr: SubvolumeAddress) {
        let center = addr.center();
        let rec = {
            let r = self.field.leaf_mut(addr).unwrap();
            r.g_center = r.g_pred + r.predecessor.dist(center);
            r.state = LeafState::Closed;
            *r
        };
        self.stats.expansions += 1;
        let v = Expanded {
            addr,
            aabb: addr.aabb(),
            pred: rec.predecessor,
            g_pred: rec.g_pred,
            center,
            g_center: rec.g_center,
        };
        let bh = self.field.block_height();
        for bc in self.ensure_region(&v.aabb.dilate(1)) {
            self.update_subvolume(&v, SubvolumeAddress::new(bh, bc[0], bc[1], bc[2]));
        }
    }

    fn update_subvolume(&mut self, v: &Expanded, target: SubvolumeAddress) {
        let node = self.field.node(target).cloned();
        match node {
            None => return,
            Some(Node::Leaf(r)) => {
                if r.state == LeafState::Closed {
                    return;
                }
                match self.update_cost(v, target) {
                    Comparison::StrictlyBetter => {
                        self.push(target);
                        return;
                    }
                    Comparison::NotBetter => return,
                    Comparison::Ambiguous => {
                        let reached = r.is_reached();
                        let kids = self.field.split(target).expect("ambiguous leaf can be split");
                        self.stats.refinements += 1;
                        if reached {
                            for k in kids {
                                self.push(k);
                            }
                        }
                    }
                }
            }
            Some(Node::Interior) => {}
        }
        for child in target.children() {
            if child != v.addr && are_adjacent(&v.aabb, &child.aabb()) {
                self.update_subvolume(v, child);
            }
        }
    }

    fn update_cost(&mut self, v: &Expanded, t: SubvolumeAddress) -> Comparison {
        let rec = *self.field.leaf(t).unwrap();
        let tb = t.aabb();
        let tc = t.center();
        let (cand, cand_g, verified) = if self.lazy {
            (v.pred, v.g_pred, false)
        } else {
            if rec.is_reached() && rec.predecessor == v.pred && rec.verified {
                return Comparison::NotBetter;
            }
            let vis = self.los(v.pred, tc);
            // A visibility boundary crossing the leaf: its corners disagree
            // with its center.
            if self.refine && t.height > 0 && corners(&tb).into_iter().any(|c| self.los(v.pred, c) != vis) {
                return Comparison::Ambiguous;
            }
            if vis {
                (v.pred, v.g_pred, true)
            } else if self.los(v.center, tc) {
                (v.center, v.g_center, true)
            } else if self.refine && t.height > 0 && are_face_adjacent(&v.aabb, &tb) {
                return Comparison::Ambiguous;
            } else {
                return Comparison::NotBetter;
            }
        };
        if rec.is_reached() && rec.predecessor == cand {
            if verified {
                self.field.leaf_mut(t).unwrap().verified = true;
            }
            return Comparison::NotBetter;
        }
        let mut outcome = if rec.is_reached() {
            compare_predecessors((cand, cand_g), (rec.predecessor, rec.g_pred), &tb, self.eps)
        } else {
            Comparison::StrictlyBetter
        };
        if outcome == Comparison::Ambiguous && (!self.refine || t.height == 0) {
            outcome = if cand_g + cand.dist(tc) < rec.g_pred + rec.predecessor.dist(tc) {
                Comparison::StrictlyBetter
            } else {
                Comparison::NotBetter
            };
        }
        let r = self.field.leaf_mut(t).unwrap();
        match outcome {
            Comparison::StrictlyBetter => {
                r.rival = rec.is_reached().then_some((rec.predecessor, rec.g_pred));
                r.predecessor = cand;
                r.g_pred = cand_g;
                r.verified = verified;
            }
            Comparison::NotBetter => r.rival = Some((cand, cand_g)),
            Comparison::Ambiguous => {}
        }
        outcome
    }

    fn extract_path(&self, start: GridVertex, goal_leaf: SubvolumeAddress) -> Vec<GridVertex> {
        let mut path = vec![self.goal];
        let mut cur = self.field.leaf(goal_leaf).unwrap().predecessor;
        let limit = self.field.node_count() + 2;
        while cur != start {
            path.push(cur);
            assert!(path.len() <= limit, "predecessor chain does not reach the start");
            let leaf = self.field.leaf_containing(cur).expect("predecessor lies in a leaf");
            let rec = self.field.leaf(leaf).unwrap();
            assert_eq!(rec.state, LeafState::Closed, "predecessor {cur} is not a closed leaf center");
            cur = rec.predecessor;
        }
        path.push(start);
        path.reverse();
        path
    }
}

/// Plans with the hierarchical planner; the lazy variant is selected by
/// `cfg.lazy`.
pub fn plan(map: &OccupancyOctree, cfg: &PlannerConfig, query: &QuerySpec) -> Result<PlanResult, PlanError> {
    plan_with_field(map, cfg, query).map(|(r, _)| r)
}

/// [`plan`] with visibility checks deferred to expansion.
pub fn plan_lazy(map: &OccupancyOctree, cfg: &PlannerConfig, query: &QuerySpec) -> Result<PlanResult, PlanError> {
    plan(map, &cfg.with_lazy(true), query)
}

/// Plans and also returns the final cost field (None for blocked endpoints).
pub fn plan_with_field(
    map: &OccupancyOctree,
    cfg: &PlannerConfig,
    query: &QuerySpec,
) -> Result<(PlanResult, Option<CostField>), PlanError> {
    let t0 = Instant::now();
    let init_height = cfg.validate(map)?;
    let (start, goal) = match snap_query(map, query)? {
        Ok(sg) => sg,
        Err(status) => {
            let stats = PlanStats { wall_time: t0.elapsed().as_secs_f64(), ..Default::default() };
            return Ok((PlanResult::failed(status, stats), None));
        }
    };
    let mut s = Search {
        map,
        eps: cfg.epsilon,
        refine: cfg.refine,
        lazy: cfg.lazy,
        cap: cfg.los_cap_cells(map.resolution()),
        field: CostField::new(map.block_height(), init_height, cfg.seed_bounds),
        open: BinaryHeap::new(),
        goal,
        stats: PlanStats::default(),
    };
    s.ensure_region(&Aabb::cell(start));
    s.ensure_region(&Aabb::cell(goal));
    s.field.isolate(goal);
    let start_leaf = s.field.isolate(start).expect("start cell is free");
    {
        let r = s.field.leaf_mut(start_leaf).unwrap();
        r.predecessor = start;
        r.g_pred = 0.0;
        r.verified = true;
    }
    s.push(start_leaf);

    let mut found = None;
    while let Some(e) = s.open.pop() {
        let addr = e.key;
        match s.field.leaf(addr) {
            Some(r) if r.state == LeafState::Open && r.queue_version == e.version => {}
            _ => continue,
        }
        if !s.verify(addr) {
            continue;
        }
        let rec = s.field.leaf(addr).unwrap();
        let f = compute_f_score(rec.predecessor, rec.g_pred, &addr.aabb(), goal);
        if f > e.f + 1e-9 * f.max(1.0) {
            // the repaired predecessor is worse than the queued estimate
            s.push(addr);
            continue;
        }
        if addr.contains(goal) {
            debug_assert_eq!(addr.height, 0);
            let r = s.field.leaf_mut(addr).unwrap();
            r.g_center = r.g_at(goal);
            r.state = LeafState::Closed;
            s.stats.expansions += 1;
            found = Some(addr);
            break;
        }
        s.expand(addr);
    }
    let result = match found {
        Some(goal_leaf) => {
            let path = s.extract_path(start, goal_leaf);
            let mut stats = s.stats;
            stats.wall_time = t0.elapsed().as_secs_f64();
            PlanResult::found(map, &path, stats)
        }
        None => {
            let mut stats = s.stats;
            stats.wall_time = t0.elapsed().as_secs_f64();
            PlanResult::failed(PlanStatus::NoPathFound, stats)
        }
    };
    Ok((result, Some(s.field)))
}
