//! Fixed-resolution baselines: A*, Theta*, LazyTheta*, and A* over the
//! centers of the occupancy octree's free leaves.
//!
//! Grid planners move between cell centers of 26-connected neighbors. A move
//! is allowed only if every cell in its bounding box is free, which is exactly
//! the set of moves whose supercover is free.

use crate::geometry::{are_adjacent, Aabb, GridVertex, SubvolumeAddress};
use crate::map::{OccupancyOctree, FREE, MIXED};
use crate::planner::{snap_query, PlanError, PlanResult, PlanStats, PlanStatus, QuerySpec, QueueEntry};
use rustc_hash::FxHashMap;
use std::collections::BinaryHeap;
use std::time::Instant;

const DEFAULT_LOS_CELLS: f64 = 512.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexState {
    Open,
    Closed,
}

/// Per-vertex search record. `g` is in cell units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexRecord {
    pub g: f64,
    pub predecessor: GridVertex,
    pub state: VertexState,
}

/// Neighbor offsets in lexicographic order.
fn offsets() -> [GridVertex; 26] {
    let mut out = [GridVertex::default(); 26];
    let mut i = 0;
    for dx in -1..=1 {
        for dy in -1..=1 {
            for dz in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out[i] = GridVertex::new(dx, dy, dz);
                    i += 1;
                }
            }
        }
    }
    out
}

fn move_is_free(map: &OccupancyOctree, v: GridVertex, d: GridVertex) -> bool {
    let w = v + d;
    if !map.is_free(w) {
        return false;
    }
    let b = Aabb::new(v.cmin(w), v.cmax(w));
    let ok = b.cells().all(|c| c == v || c == w || map.is_free(c));
    ok
}

/// Octile distance in cell units.
fn octile(a: GridVertex, b: GridVertex) -> f64 {
    let mut d = [(a.x - b.x).abs() as f64, (a.y - b.y).abs() as f64, (a.z - b.z).abs() as f64];
    d.sort_by(|p, q| q.total_cmp(p));
    let s3 = 3f64.sqrt();
    let s2 = 2f64.sqrt();
    d[2] * s3 + (d[1] - d[2]) * s2 + (d[0] - d[1])
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    AStar,
    Theta,
    LazyTheta,
}

struct GridSearch<'m> {
    map: &'m OccupancyOctree,
    mode: Mode,
    cap: f64,
    goal: GridVertex,
    records: FxHashMap<GridVertex, VertexRecord>,
    open: BinaryHeap<QueueEntry<GridVertex>>,
    stats: PlanStats,
}

impl GridSearch<'_> {
    fn h(&self, v: GridVertex) -> f64 {
        match self.mode {
            Mode::AStar => octile(v, self.goal),
            _ => v.dist(self.goal),
        }
    }

    fn los(&mut self, a: GridVertex, b: GridVertex) -> bool {
        self.stats.los_checks += 1;
        self.map.line_of_sight_vertices(a, b, self.cap)
    }

    fn relax(&mut self, s: GridVertex, pred: GridVertex, g: f64) {
        let better = match self.records.get(&s) {
            None => true,
            Some(r) => r.state == VertexState::Open && g < r.g,
        };
        if better {
            self.records.insert(s, VertexRecord { g, predecessor: pred, state: VertexState::Open });
            self.open.push(QueueEntry { f: g + self.h(s), g, key: s, version: 0 });
            self.stats.queue_pushes += 1;
        }
    }

    /// LazyTheta* repair: reconnect `s` through the best closed neighbor.
    fn set_vertex(&mut self, s: GridVertex, offs: &[GridVertex; 26]) {
        let r = self.records[&s];
        if r.predecessor == s || self.los(r.predecessor, s) {
            return;
        }
        let mut best: Option<(f64, GridVertex)> = None;
        for &d in offs {
            let n = s + d;
            let Some(nr) = self.records.get(&n) else { continue };
            if nr.state != VertexState::Closed || !move_is_free(self.map, s, d) {
                continue;
            }
            let g = nr.g + n.dist(s);
            if best.is_none_or(|(bg, _)| g < bg) {
                best = Some((g, n));
            }
        }
        // The vertex was pushed from a closed neighbor, so one exists.
        let (g, n) = best.expect("lazy vertex has a closed neighbor");
        let r = self.records.get_mut(&s).unwrap();
        r.g = g;
        r.predecessor = n;
    }

    fn run(&mut self, start: GridVertex) -> Option<Vec<GridVertex>> {
        let offs = offsets();
        self.relax(start, start, 0.0);
        while let Some(e) = self.open.pop() {
            let s = e.key;
            let r = self.records[&s];
            if r.state == VertexState::Closed || e.g != r.g {
                continue;
            }
            if self.mode == Mode::LazyTheta {
                self.set_vertex(s, &offs);
            }
            let r = self.records[&s];
            self.records.get_mut(&s).unwrap().state = VertexState::Closed;
            self.stats.expansions += 1;
            if s == self.goal {
                return Some(self.extract(start));
            }
            for &d in &offs {
                let n = s + d;
                if matches!(self.records.get(&n), Some(nr) if nr.state == VertexState::Closed) {
                    continue;
                }
                if !move_is_free(self.map, s, d) {
                    continue;
                }
                let p = r.predecessor;
                match self.mode {
                    Mode::AStar => self.relax(n, s, r.g + s.dist(n)),
                    Mode::LazyTheta => {
                        let gp = self.records[&p].g;
                        self.relax(n, p, gp + p.dist(n));
                    }
                    Mode::Theta => {
                        if p != s && self.los(p, n) {
                            let gp = self.records[&p].g;
                            self.relax(n, p, gp + p.dist(n));
                        } else {
                            self.relax(n, s, r.g + s.dist(n));
                        }
                    }
                }
            }
        }
        None
    }

    fn extract(&self, start: GridVertex) -> Vec<GridVertex> {
        let mut path = vec![self.goal];
        let mut cur = self.goal;
        while cur != start {
            cur = self.records[&cur].predecessor;
            path.push(cur);
        }
        path.reverse();
        path
    }
}

fn run_grid(map: &OccupancyOctree, query: &QuerySpec, mode: Mode, los_max_dist: Option<f64>) -> PlanResult {
    let t0 = Instant::now();
    let finish = |mut stats: PlanStats, path: Option<Vec<GridVertex>>| {
        stats.wall_time = t0.elapsed().as_secs_f64();
        match path {
            Some(p) => PlanResult::found(map, &p, stats),
            None => PlanResult::failed(PlanStatus::NoPathFound, stats),
        }
    };
    let (start, goal) = match snapped(map, query) {
        Ok(sg) => sg,
        Err(status) => return blocked(status, t0),
    };
    let mut s = GridSearch {
        map,
        mode,
        cap: los_max_dist.map_or(DEFAULT_LOS_CELLS, |d| d / map.resolution()),
        goal,
        records: FxHashMap::default(),
        open: BinaryHeap::new(),
        stats: PlanStats::default(),
    };
    let path = s.run(start);
    finish(s.stats, path)
}

fn snapped(map: &OccupancyOctree, query: &QuerySpec) -> Result<(GridVertex, GridVertex), PlanStatus> {
    match snap_query(map, query) {
        Ok(r) => r,
        // Endpoints outside the map are reported as blocked.
        Err(PlanError::OutOfBounds { which: "start", .. }) => Err(PlanStatus::StartBlocked),
        Err(_) => Err(PlanStatus::GoalBlocked),
    }
}

fn blocked(status: PlanStatus, t0: Instant) -> PlanResult {
    PlanResult::failed(status, PlanStats { wall_time: t0.elapsed().as_secs_f64(), ..Default::default() })
}

/// Optimal 26-connected grid path, octile heuristic.
pub fn plan_astar(map: &OccupancyOctree, query: &QuerySpec) -> PlanResult {
    run_grid(map, query, Mode::AStar, None)
}

/// Theta*; `los_max_dist` in meters, None means 512 cells.
pub fn plan_theta(map: &OccupancyOctree, query: &QuerySpec, los_max_dist: Option<f64>) -> PlanResult {
    run_grid(map, query, Mode::Theta, los_max_dist)
}

/// Theta* with visibility assumed on update and checked on expansion.
pub fn plan_lazy_theta(map: &OccupancyOctree, query: &QuerySpec, los_max_dist: Option<f64>) -> PlanResult {
    run_grid(map, query, Mode::LazyTheta, los_max_dist)
}

/// A* over the free leaves of the occupancy octree, moving between leaf
/// centers. The leaves holding the start and goal are split down to single
/// cells. No shortcutting is applied to the result.
pub fn plan_octree_leaf_astar(map: &OccupancyOctree, query: &QuerySpec) -> PlanResult {
    let t0 = Instant::now();
    let (start, goal) = match snapped(map, query) {
        Ok(sg) => sg,
        Err(status) => return blocked(status, t0),
    };
    let forced = |a: SubvolumeAddress| a.height > 0 && (a.contains(start) || a.contains(goal));
    let node_is_leaf = |a: SubvolumeAddress| map.node_code(a) == FREE && !forced(a);
    let start_leaf = SubvolumeAddress::containing(start, 0);
    let goal_leaf = SubvolumeAddress::containing(goal, 0);

    let mut stats = PlanStats::default();
    let mut records: FxHashMap<SubvolumeAddress, (f64, SubvolumeAddress, bool)> = FxHashMap::default();
    let mut open = BinaryHeap::new();
    records.insert(start_leaf, (0.0, start_leaf, false));
    open.push(QueueEntry { f: start.dist(goal), g: 0.0, key: start_leaf, version: 0 });
    stats.queue_pushes += 1;
    let mut found = false;
    let mut neighbors = Vec::new();
    while let Some(e) = open.pop() {
        let a = e.key;
        let (g, _, closed) = records[&a];
        if closed || e.g != g {
            continue;
        }
        records.get_mut(&a).unwrap().2 = true;
        stats.expansions += 1;
        if a == goal_leaf {
            found = true;
            break;
        }
        neighbors.clear();
        collect_leaf_neighbors(map, &a.aabb(), &node_is_leaf, &mut neighbors);
        let c = a.center();
        for &n in &neighbors {
            if n == a || matches!(records.get(&n), Some(r) if r.2) {
                continue;
            }
            let nc = n.center();
            stats.los_checks += 1;
            if !map.line_of_sight_vertices(c, nc, f64::INFINITY) {
                continue;
            }
            let ng = g + c.dist(nc);
            if records.get(&n).is_none_or(|r| ng < r.0) {
                records.insert(n, (ng, a, false));
                open.push(QueueEntry { f: ng + nc.dist(goal), g: ng, key: n, version: 0 });
                stats.queue_pushes += 1;
            }
        }
    }
    if !found {
        stats.wall_time = t0.elapsed().as_secs_f64();
        return PlanResult::failed(PlanStatus::NoPathFound, stats);
    }
    let mut path = vec![goal];
    let mut cur = goal_leaf;
    while cur != start_leaf {
        cur = records[&cur].1;
        path.push(cur.center());
    }
    path.reverse();
    let mut r = PlanResult::found(map, &path, stats);
    r.stats.wall_time = t0.elapsed().as_secs_f64();
    r
}

fn collect_leaf_neighbors(
    map: &OccupancyOctree,
    bx: &Aabb,
    is_leaf: &impl Fn(SubvolumeAddress) -> bool,
    out: &mut Vec<SubvolumeAddress>,
) {
    let bh = map.block_height();
    let r = bx.dilate(1);
    let lo = SubvolumeAddress::containing(r.min, bh);
    let hi = SubvolumeAddress::containing(r.max, bh);
    for z in lo.z..=hi.z {
        for y in lo.y..=hi.y {
            for x in lo.x..=hi.x {
                descend(map, SubvolumeAddress::new(bh, x, y, z), bx, is_leaf, out);
            }
        }
    }
}

fn descend(
    map: &OccupancyOctree,
    a: SubvolumeAddress,
    bx: &Aabb,
    is_leaf: &impl Fn(SubvolumeAddress) -> bool,
    out: &mut Vec<SubvolumeAddress>,
) {
    if !are_adjacent(&a.aabb(), bx) {
        return;
    }
    if is_leaf(a) {
        out.push(a);
        return;
    }
    let code = map.node_code(a);
    if a.height > 0 && (code == MIXED || code == FREE) {
        for c in a.children() {
            descend(map, c, bx, is_leaf, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridFrame, WorldPoint};
    use crate::map::Occupancy;
    use proptest::prelude::*;

    fn unit_map(n: i32, bh: u8) -> OccupancyOctree {
        OccupancyOctree::new(GridFrame::new(WorldPoint::default(), 1.0), Aabb::from_dims(n, n, n), bh, Occupancy::Free)
    }

    fn q(map: &OccupancyOctree, a: [i32; 3], b: [i32; 3]) -> QuerySpec {
        QuerySpec { start: map.to_world(GridVertex::from_array(a)), goal: map.to_world(GridVertex::from_array(b)) }
    }

    /// Plain array-scan Dijkstra over the same move set.
    fn dijkstra(map: &OccupancyOctree, s: GridVertex, t: GridVertex) -> Option<f64> {
        let cells: Vec<GridVertex> = map.bounds().cells().collect();
        let index: FxHashMap<GridVertex, usize> = cells.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut dist = vec![f64::INFINITY; cells.len()];
        let mut done = vec![false; cells.len()];
        dist[index[&s]] = 0.0;
        loop {
            let i = (0..cells.len())
                .filter(|&i| !done[i] && dist[i].is_finite())
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
            done[i] = true;
            let v = cells[i];
            if v == t {
                return Some(dist[i]);
            }
            for off in offsets() {
                let w = v + off;
                if map.bounds().contains(w) && move_is_free(map, v, off) {
                    let j = index[&w];
                    dist[j] = dist[j].min(dist[i] + v.dist(w));
                }
            }
        }
    }

    #[test]
    fn astar_axis_and_diagonal() {
        let m = OccupancyOctree::new(
            GridFrame::new(WorldPoint::default(), 0.1),
            Aabb::from_dims(16, 16, 16),
            3,
            Occupancy::Free,
        );
        let r = plan_astar(&m, &q(&m, [1, 2, 3], [8, 2, 3]));
        assert!((r.length - 0.7).abs() < 1e-9);
        let r = plan_astar(&m, &q(&m, [1, 1, 1], [6, 6, 6]));
        assert!((r.length - 0.5 * 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn theta_empty_map_is_straight() {
        let m = unit_map(20, 3);
        let r = plan_theta(&m, &q(&m, [1, 2, 3], [17, 9, 14]), None);
        assert_eq!(r.waypoints.len(), 2);
        assert!((r.length - GridVertex::new(16, 7, 11).dist(GridVertex::splat(0))).abs() < 1e-9);
        let l = plan_lazy_theta(&m, &q(&m, [1, 2, 3], [17, 9, 14]), None);
        assert_eq!(l.waypoints, r.waypoints);
    }

    #[test]
    fn blocked_endpoints() {
        let mut m = unit_map(8, 3);
        m.set_cell(GridVertex::splat(1), Occupancy::Occupied);
        m.set_cell(GridVertex::splat(5), Occupancy::Unknown);
        assert_eq!(plan_astar(&m, &q(&m, [1, 1, 1], [3, 3, 3])).status, PlanStatus::StartBlocked);
        assert_eq!(plan_theta(&m, &q(&m, [3, 3, 3], [5, 5, 5]), None).status, PlanStatus::GoalBlocked);
        assert_eq!(plan_octree_leaf_astar(&m, &q(&m, [3, 3, 3], [5, 5, 5])).status, PlanStatus::GoalBlocked);
    }

    #[test]
    fn sealed_goal_has_no_path() {
        let mut m = unit_map(8, 3);
        for v in Aabb::new(GridVertex::splat(3), GridVertex::splat(5)).cells() {
            if v != GridVertex::splat(4) {
                m.set_cell(v, Occupancy::Occupied);
            }
        }
        let qq = q(&m, [0, 0, 0], [4, 4, 4]);
        assert_eq!(plan_astar(&m, &qq).status, PlanStatus::NoPathFound);
        assert_eq!(plan_theta(&m, &qq, None).status, PlanStatus::NoPathFound);
        assert_eq!(plan_lazy_theta(&m, &qq, None).status, PlanStatus::NoPathFound);
        assert_eq!(plan_octree_leaf_astar(&m, &qq).status, PlanStatus::NoPathFound);
    }

    #[test]
    fn octree_astar_goes_through_coarse_centers() {
        let m = unit_map(16, 3);
        let r = plan_octree_leaf_astar(&m, &q(&m, [0, 0, 0], [15, 15, 0]));
        assert!(r.success());
        assert!(r.length >= GridVertex::new(15, 15, 0).dist(GridVertex::splat(0)) - 1e-9);
    }

    #[test]
    fn octree_astar_uniform_matches_astar() {
        // Height-0 blocks leave only single-cell leaves.
        let mut m = unit_map(8, 0);
        for v in Aabb::new(GridVertex::new(3, 0, 0), GridVertex::new(4, 6, 7)).cells() {
            m.set_cell(v, Occupancy::Occupied);
        }
        let qq = q(&m, [0, 1, 2], [7, 2, 5]);
        let a = plan_astar(&m, &qq);
        let o = plan_octree_leaf_astar(&m, &qq);
        assert!((a.length - o.length).abs() < 1e-9, "{} {}", a.length, o.length);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn astar_matches_dijkstra(
            cells in prop::collection::vec((0..10i32, 0..10i32, 0..10i32), 0..250),
            s in (0..10i32, 0..10i32, 0..10i32),
            t in (0..10i32, 0..10i32, 0..10i32),
        ) {
            let mut m = unit_map(10, 2);
            let (s, t) = (GridVertex::new(s.0, s.1, s.2), GridVertex::new(t.0, t.1, t.2));
            for (x, y, z) in cells {
                let v = GridVertex::new(x, y, z);
                if v != s && v != t {
                    m.set_cell(v, Occupancy::Occupied);
                }
            }
            let qq = q(&m, s.to_array(), t.to_array());
            let a = plan_astar(&m, &qq);
            let th = plan_theta(&m, &qq, None);
            let lt = plan_lazy_theta(&m, &qq, None);
            let oc = plan_octree_leaf_astar(&m, &qq);
            match dijkstra(&m, s, t) {
                Some(d) => {
                    prop_assert!(a.success());
                    prop_assert!((a.length - d).abs() < 1e-9, "{} vs {}", a.length, d);
                    prop_assert!(th.length <= a.length + 1e-9);
                    prop_assert!(lt.success() && oc.success());
                    for w in th.waypoints.windows(2).chain(lt.waypoints.windows(2)).chain(oc.waypoints.windows(2)) {
                        prop_assert!(m.line_of_sight(w[0], w[1], f64::INFINITY));
                    }
                }
                None => {
                    prop_assert_eq!(a.status, PlanStatus::NoPathFound);
                    prop_assert_eq!(th.status, PlanStatus::NoPathFound);
                    prop_assert_eq!(lt.status, PlanStatus::NoPathFound);
                    prop_assert_eq!(oc.status, PlanStatus::NoPathFound);
                }
            }
        }
    }
}
