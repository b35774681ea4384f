//! Obstacle inflation through an exact squared Euclidean distance transform.

use super::{OccupancyOctree, FREE, OCCUPIED, UNKNOWN};

const FAR: f64 = 1e20;

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over one line.
fn edt_line(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let s = loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break s;
            }
        };
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance (in cells) from every cell to the nearest source cell.
pub(crate) fn squared_edt(dims: [usize; 3], source: &[bool]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut g: Vec<f64> = source.iter().map(|&s| if s { 0.0 } else { FAR }).collect();
    let n = nx.max(ny).max(nz);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    let idx = |x: usize, y: usize, zz: usize| (zz * ny + y) * nx + x;
    for axis in 0..3 {
        let len = dims[axis];
        let (o1, o2) = match axis {
            0 => (ny, nz),
            1 => (nx, nz),
            _ => (nx, ny),
        };
        for b in 0..o2 {
            for a in 0..o1 {
                let at = |i: usize| match axis {
                    0 => idx(i, a, b),
                    1 => idx(a, i, b),
                    _ => idx(a, b, i),
                };
                let mut any = false;
                for i in 0..len {
                    f[i] = g[at(i)];
                    any |= f[i] < FAR;
                }
                if !any {
                    continue;
                }
                edt_line(&f[..len], &mut out[..len], &mut v, &mut z);
                for i in 0..len {
                    g[at(i)] = out[i];
                }
            }
        }
    }
    g
}

pub(crate) fn inflate(map: &OccupancyOctree, radius: f64) -> OccupancyOctree {
    assert!(radius >= 0.0, "inflation radius must be non-negative");
    let mut codes = map.to_codes();
    let r = radius / map.resolution();
    if r > 0.0 {
        let d = map.bounds().dims();
        let dims = [d[0] as usize, d[1] as usize, d[2] as usize];
        let source: Vec<bool> = codes.iter().map(|&c| c == OCCUPIED || c == UNKNOWN).collect();
        let dist = squared_edt(dims, &source);
        let lim = r * r + 1e-9;
        for (c, d2) in codes.iter_mut().zip(dist) {
            if *c == FREE && d2 <= lim {
                *c = OCCUPIED;
            }
        }
    }
    OccupancyOctree::from_codes(*map.frame(), map.bounds(), map.block_height(), &codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridVertex;
    use crate::map::tests::{arb_map, unit_map};
    use crate::map::Occupancy;
    use proptest::prelude::*;

    fn single(n: i32, r: f64) -> OccupancyOctree {
        let mut m = unit_map(n, 3);
        m.set_cell(GridVertex::splat(n / 2), Occupancy::Occupied);
        m.inflate(r)
    }

    #[test]
    fn unit_radius_gives_face_neighbors() {
        let m = single(8, 1.0);
        assert_eq!(m.count(Occupancy::Occupied), 7);
    }

    #[test]
    fn zero_radius_is_identity() {
        let mut m = unit_map(8, 3);
        m.set_cell(GridVertex::new(1, 2, 3), Occupancy::Occupied);
        m.set_cell(GridVertex::new(5, 2, 3), Occupancy::Unknown);
        assert_eq!(m.inflate(0.0).to_dense(), m.to_dense());
    }

    #[test]
    fn sphere_of_radius_three_and_a_half() {
        let brute = (-4i32..=4)
            .flat_map(|x| (-4i32..=4).flat_map(move |y| (-4i32..=4).map(move |z| (x, y, z))))
            .filter(|&(x, y, z)| ((x * x + y * y + z * z) as f64).sqrt() <= 3.5)
            .count();
        assert_eq!(brute, 179);
        assert_eq!(single(16, 3.5).count(Occupancy::Occupied), 179);
    }

    #[test]
    fn unknown_stays_unknown() {
        let mut m = unit_map(8, 3);
        m.set_cell(GridVertex::splat(4), Occupancy::Unknown);
        let inf = m.inflate(1.0);
        assert_eq!(inf.get_cell(GridVertex::splat(4)), Occupancy::Unknown);
        assert_eq!(inf.get_cell(GridVertex::new(5, 4, 4)), Occupancy::Occupied);
    }

    proptest! {
        #[test]
        fn inflation_equals_brute_force_dilation(m in arb_map(10, 2), r in 0.0f64..3.2) {
            let inf = m.inflate(r);
            let sources: Vec<GridVertex> = m.bounds().cells().filter(|v| !m.is_free(*v)).collect();
            for v in m.bounds().cells() {
                let orig = m.get_cell(v);
                let near = sources.iter().any(|s| s.dist(v) <= r + 1e-12);
                let expect = if orig == Occupancy::Free && near { Occupancy::Occupied } else { orig };
                prop_assert_eq!(inf.get_cell(v), expect, "{}", v);
            }
        }

        #[test]
        fn inflation_is_monotone(m in arb_map(10, 2), r1 in 0.0f64..3.0, dr in 0.0f64..2.0) {
            let a = m.inflate(r1);
            let b = m.inflate(r1 + dr);
            for v in m.bounds().cells() {
                if !a.is_free(v) {
                    prop_assert!(!b.is_free(v));
                }
            }
        }
    }
}
