//! Supercover line-of-sight casting.
//!
//! Between two vertex centers the traversal is exact: crossing times along
//! each axis are `n / (2|d|)` for odd `n`, compared by cross-multiplication,
//! and when several axes cross at once every intermediate cell is visited.
//! The hierarchical variant jumps over uniform free octree nodes.

use super::{OccupancyOctree, FREE};
use crate::geometry::{dist3, GridVertex, WorldPoint};

/// True iff every cell in the supercover of the segment between the two
/// vertex centers is free.
pub(crate) fn supercover_clear(map: &OccupancyOctree, a: GridVertex, b: GridVertex, skip: bool) -> bool {
    let mut clear = true;
    supercover_walk(a, b, skip.then_some(map), |v| {
        if map.is_free(v) {
            true
        } else {
            clear = false;
            false
        }
    });
    clear
}

/// Visits the supercover cells of the segment between two vertex centers in
/// order until `visit` returns false. With a map given, runs of cells inside
/// uniform free nodes are skipped without being visited.
pub(crate) fn supercover_walk(
    a: GridVertex,
    b: GridVertex,
    map: Option<&OccupancyOctree>,
    mut visit: impl FnMut(GridVertex) -> bool,
) {
    let d = (b - a).to_array();
    let step: [i32; 3] = std::array::from_fn(|i| d[i].signum());
    let ad: [i64; 3] = std::array::from_fn(|i| d[i].unsigned_abs() as i64);
    let mut cur = a.to_array();
    // next crossing on axis i happens at time num[i] / (2 ad[i])
    let mut num = [1i64; 3];
    let mut left = ad;
    loop {
        if !visit(GridVertex::from_array(cur)) {
            return;
        }
        if left == [0, 0, 0] {
            return;
        }
        if let Some(m) = map {
            let (code, h) = m.uniform_node_at(GridVertex::from_array(cur));
            if code == FREE && h > 0 {
                match jump(cur, h, &step, &ad, &num, &left) {
                    None => return,
                    Some(k) => {
                        for i in 0..3 {
                            cur[i] += step[i] * k[i] as i32;
                            num[i] += 2 * k[i];
                            left[i] -= k[i];
                        }
                    }
                }
            }
        }
        // earliest next crossing
        let mut first: Option<usize> = None;
        for i in 0..3 {
            if left[i] == 0 {
                continue;
            }
            first = match first {
                Some(j) if num[i] * ad[j] >= num[j] * ad[i] => Some(j),
                _ => Some(i),
            };
        }
        let j = first.expect("some axis has crossings left");
        let mut mask = 0u8;
        for i in 0..3 {
            if left[i] > 0 && num[i] * ad[j] == num[j] * ad[i] {
                mask |= 1 << i;
            }
        }
        // cells touched at a simultaneous crossing: every proper subset of
        // the crossing axes advanced
        let mut sub = (mask.wrapping_sub(1)) & mask;
        while sub != 0 {
            let mut c = cur;
            for i in 0..3 {
                if sub & (1 << i) != 0 {
                    c[i] += step[i];
                }
            }
            if !visit(GridVertex::from_array(c)) {
                return;
            }
            sub = (sub - 1) & mask;
        }
        for i in 0..3 {
            if mask & (1 << i) != 0 {
                cur[i] += step[i];
                num[i] += 2;
                left[i] -= 1;
            }
        }
    }
}

/// Number of crossings per axis that happen strictly before the segment
/// leaves the cube of height `h` containing `cur`; None if the segment ends
/// inside it.
fn jump(cur: [i32; 3], h: u8, step: &[i32; 3], ad: &[i64; 3], num: &[i64; 3], left: &[i64; 3]) -> Option<[i64; 3]> {
    let mask = (1i32 << h) - 1;
    // exit time as a fraction en / (2 ed)
    let mut exit: Option<(i64, i64)> = None;
    for i in 0..3 {
        if left[i] == 0 {
            continue;
        }
        let off = cur[i] & mask;
        let k = if step[i] > 0 { (mask - off) as i64 } else { off as i64 };
        if k >= left[i] {
            continue;
        }
        let n = num[i] + 2 * k;
        exit = match exit {
            Some((en, ed)) if en * ad[i] <= n * ed => Some((en, ed)),
            _ => Some((n, ad[i])),
        };
    }
    let (en, ed) = exit?;
    let mut k = [0i64; 3];
    for i in 0..3 {
        if left[i] == 0 {
            continue;
        }
        let q = en * ad[i] - num[i] * ed;
        let c = if q <= 0 { 0 } else { (q + 2 * ed - 1) / (2 * ed) };
        k[i] = c.min(left[i]);
    }
    Some(k)
}

const TOL: f64 = 1e-9;

/// Visits every cell touched by the closed segment between two points given
/// in grid coordinates (cell `i` spans `[i, i+1)`), until `visit` returns
/// false. Points within `1e-9` of a cell boundary count as touching both
/// sides. Cells may be visited more than once.
pub fn supercover_world(a: [f64; 3], b: [f64; 3], mut visit: impl FnMut(GridVertex) -> bool) {
    let d: [f64; 3] = std::array::from_fn(|i| b[i] - a[i]);
    let mut times = vec![0.0, 1.0];
    for i in 0..3 {
        if d[i].abs() <= 1e-15 {
            continue;
        }
        let lo = a[i].min(b[i]).ceil() as i64;
        let hi = a[i].max(b[i]).floor() as i64;
        for k in lo..=hi {
            let t = (k as f64 - a[i]) / d[i];
            times.push(t.clamp(0.0, 1.0));
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    let at = |t: f64| -> [f64; 3] { std::array::from_fn(|i| a[i] + t * d[i]) };
    let mut probe = |p: [f64; 3]| -> bool {
        let r: [(i32, i32); 3] = std::array::from_fn(|i| {
            let n = p[i].round();
            if (p[i] - n).abs() <= TOL {
                (n as i32 - 1, n as i32)
            } else {
                let f = p[i].floor() as i32;
                (f, f)
            }
        });
        for z in r[2].0..=r[2].1 {
            for y in r[1].0..=r[1].1 {
                for x in r[0].0..=r[0].1 {
                    if !visit(GridVertex::new(x, y, z)) {
                        return false;
                    }
                }
            }
        }
        true
    };
    for w in 0..times.len() {
        if !probe(at(times[w])) {
            return;
        }
        if w + 1 < times.len() && !probe(at(0.5 * (times[w] + times[w + 1]))) {
            return;
        }
    }
}

pub(crate) fn line_of_sight_world(map: &OccupancyOctree, a: WorldPoint, b: WorldPoint, max_dist: f64) -> bool {
    if dist3(a.to_array(), b.to_array()) > max_dist {
        return false;
    }
    let f = map.frame();
    let mut clear = true;
    supercover_world(f.to_grid(a), f.to_grid(b), |v| {
        clear = map.is_free(v);
        clear
    });
    clear
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, GridFrame};
    use crate::map::tests::{arb_map, unit_map};
    use crate::map::Occupancy;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn int_cells(a: GridVertex, b: GridVertex) -> BTreeSet<GridVertex> {
        let mut s = BTreeSet::new();
        supercover_walk(a, b, None, |v| {
            s.insert(v);
            true
        });
        s
    }

    fn world_cells(a: GridVertex, b: GridVertex) -> BTreeSet<GridVertex> {
        let c = |v: GridVertex| [v.x as f64 + 0.5, v.y as f64 + 0.5, v.z as f64 + 0.5];
        let mut s = BTreeSet::new();
        supercover_world(c(a), c(b), |v| {
            s.insert(v);
            true
        });
        s
    }

    #[test]
    fn blocked_straight_line() {
        let frame = GridFrame::new(WorldPoint::default(), 0.1);
        let mut m = OccupancyOctree::new(frame, Aabb::from_dims(8, 8, 8), 3, Occupancy::Free);
        let (a, b) = (m.to_world(GridVertex::new(0, 0, 0)), m.to_world(GridVertex::new(2, 0, 0)));
        assert!(m.line_of_sight(a, b, 10.0));
        m.set_cell(GridVertex::new(1, 0, 0), Occupancy::Occupied);
        assert!(!m.line_of_sight(a, b, 10.0));
        assert!(!m.line_of_sight_vertices(GridVertex::new(0, 0, 0), GridVertex::new(2, 0, 0), 100.0));
    }

    #[test]
    fn corner_touching_cells_block() {
        let mut m = unit_map(4, 2);
        m.set_cell(GridVertex::new(1, 0, 0), Occupancy::Occupied);
        m.set_cell(GridVertex::new(0, 1, 0), Occupancy::Occupied);
        let (a, b) = (GridVertex::new(0, 0, 0), GridVertex::new(1, 1, 0));
        assert!(!m.line_of_sight(m.to_world(a), m.to_world(b), 10.0));
        assert!(!m.line_of_sight_vertices(a, b, 10.0));
        let mut m = unit_map(4, 2);
        m.set_cell(GridVertex::new(0, 1, 0), Occupancy::Occupied);
        assert!(!m.line_of_sight_vertices(a, b, 10.0));
    }

    #[test]
    fn diagonal_visits_all_corner_cells() {
        let cells = int_cells(GridVertex::splat(0), GridVertex::splat(1));
        // a space diagonal touches all 8 cells of the 2x2x2 cube
        assert_eq!(cells.len(), 8);
        let cells = int_cells(GridVertex::new(0, 0, 0), GridVertex::new(2, 1, 0));
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn cap_rejects_long_segments() {
        let m = unit_map(16, 2);
        let frame = *m.frame();
        let (a, b) = (GridVertex::new(0, 0, 0), GridVertex::new(15, 0, 0));
        assert!(m.line_of_sight_vertices(a, b, 15.0));
        assert!(!m.line_of_sight_vertices(a, b, 14.9));
        assert!(!m.line_of_sight(frame.to_world(a), frame.to_world(b), 14.9));
    }

    #[test]
    fn empty_map_sees_everything() {
        let m = unit_map(16, 3);
        for (a, b) in [([0, 0, 0], [15, 15, 15]), ([3, 14, 2], [12, 0, 9]), ([5, 5, 5], [5, 5, 5])] {
            assert!(m.line_of_sight_vertices(GridVertex::from_array(a), GridVertex::from_array(b), 100.0));
        }
    }

    fn arb_vertex(n: i32) -> impl Strategy<Value = GridVertex> {
        prop::array::uniform3(0..n).prop_map(GridVertex::from_array)
    }

    proptest! {
        #[test]
        fn integer_and_float_supercover_agree(a in arb_vertex(20), b in arb_vertex(20)) {
            prop_assert_eq!(int_cells(a, b), world_cells(a, b));
        }

        #[test]
        fn supercover_is_symmetric(a in arb_vertex(20), b in arb_vertex(20)) {
            prop_assert_eq!(int_cells(a, b), int_cells(b, a));
        }

        #[test]
        fn hierarchical_matches_flat(m in arb_map(16, 3), a in arb_vertex(16), b in arb_vertex(16)) {
            let flat = supercover_clear(&m, a, b, false);
            prop_assert_eq!(supercover_clear(&m, a, b, true), flat);
            prop_assert_eq!(supercover_clear(&m, b, a, true), flat);
        }

        #[test]
        fn world_los_symmetric(m in arb_map(12, 2), a in prop::array::uniform3(0.0f64..12.0), b in prop::array::uniform3(0.0f64..12.0)) {
            let (a, b) = (WorldPoint::from_array(a), WorldPoint::from_array(b));
            prop_assert_eq!(m.line_of_sight(a, b, 100.0), m.line_of_sight(b, a, 100.0));
        }

        #[test]
        fn sampling_blocked_implies_supercover_blocked(m in arb_map(12, 2), a in prop::array::uniform3(0.0f64..12.0), b in prop::array::uniform3(0.0f64..12.0)) {
            let (pa, pb) = (WorldPoint::from_array(a), WorldPoint::from_array(b));
            let len = dist3(a, b);
            let n = (len / (m.resolution() / 20.0)).ceil().max(1.0) as usize;
            let sampled_clear = (0..=n).all(|i| {
                let t = i as f64 / n as f64;
                let p = WorldPoint::from_array(std::array::from_fn(|k| a[k] + t * (b[k] - a[k])));
                m.is_free(m.to_vertex(p))
            });
            if !sampled_clear {
                prop_assert!(!m.line_of_sight(pa, pb, 100.0));
            }
        }
    }
}
