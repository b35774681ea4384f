//! Synthetic cluttered worlds.

use super::{OccupancyOctree, DEFAULT_BLOCK_HEIGHT, FREE, OCCUPIED};
use crate::geometry::{Aabb, GridFrame, GridVertex, WorldPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MIN_EXTENT: f64 = 0.5;
pub const MAX_EXTENT: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObstacleShape {
    Box {
        half_extents: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    /// Vertical (z-aligned) cylinder.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub shape: ObstacleShape,
    pub center: WorldPoint,
}

impl ObstacleSpec {
    pub fn contains(&self, p: WorldPoint) -> bool {
        let d = [p.x - self.center.x, p.y - self.center.y, p.z - self.center.z];
        match self.shape {
            ObstacleShape::Box { half_extents: h } => (0..3).all(|i| d[i].abs() <= h[i]),
            ObstacleShape::Sphere { radius } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius,
            ObstacleShape::Cylinder { radius, half_height } => {
                d[0] * d[0] + d[1] * d[1] <= radius * radius && d[2].abs() <= half_height
            }
        }
    }

    fn half_extents(&self) -> [f64; 3] {
        match self.shape {
            ObstacleShape::Box { half_extents } => half_extents,
            ObstacleShape::Sphere { radius } => [radius; 3],
            ObstacleShape::Cylinder { radius, half_height } => [radius, radius, half_height],
        }
    }

    /// Draws a shape uniformly from the three families. Extents (edge
    /// lengths, diameters and heights) are uniform in `[0.5, 4]` m.
    pub fn sample(rng: &mut impl Rng, volume_min: WorldPoint, volume_size: f64) -> Self {
        let kind = rng.gen_range(0..3u8);
        let center = WorldPoint::new(
            volume_min.x + rng.gen_range(0.0..volume_size),
            volume_min.y + rng.gen_range(0.0..volume_size),
            volume_min.z + rng.gen_range(0.0..volume_size),
        );
        let mut extent = || rng.gen_range(MIN_EXTENT..=MAX_EXTENT) / 2.0;
        let shape = match kind {
            0 => ObstacleShape::Box { half_extents: [extent(), extent(), extent()] },
            1 => ObstacleShape::Sphere { radius: extent() },
            _ => ObstacleShape::Cylinder { radius: extent(), half_height: extent() },
        };
        Self { shape, center }
    }
}

/// Marks every cell whose center lies inside one of the obstacles as occupied.
pub fn rasterize(map: &mut OccupancyOctree, obstacles: &[ObstacleSpec]) {
    let mut codes = map.to_codes();
    rasterize_codes(map.frame(), map.bounds(), &mut codes, obstacles);
    *map = OccupancyOctree::from_codes(*map.frame(), map.bounds(), map.block_height(), &codes);
}

fn rasterize_codes(frame: &GridFrame, bounds: Aabb, codes: &mut [u8], obstacles: &[ObstacleSpec]) {
    let d = bounds.dims();
    for ob in obstacles {
        let h = ob.half_extents();
        let lo = frame.to_vertex(WorldPoint::new(ob.center.x - h[0], ob.center.y - h[1], ob.center.z - h[2]));
        let hi = frame.to_vertex(WorldPoint::new(ob.center.x + h[0], ob.center.y + h[1], ob.center.z + h[2]));
        let Some(range) = bounds.intersection(&Aabb::new(lo.cmin(hi), hi.cmax(lo))) else {
            continue;
        };
        for v in range.cells() {
            if ob.contains(frame.to_world(v)) {
                let r = v - bounds.min;
                codes[((r.z as i64 * d[1] + r.y as i64) * d[0] + r.x as i64) as usize] = OCCUPIED;
            }
        }
    }
}

/// Obstacles drawn for a clutter map; deterministic per seed.
pub fn sample_obstacles(extent: f64, n_obstacles: usize, seed: u64) -> Vec<ObstacleSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_obstacles).map(|_| ObstacleSpec::sample(&mut rng, WorldPoint::default(), extent)).collect()
}

/// A cube of side `extent` meters with its minimum corner at the origin,
/// filled with `n_obstacles` random obstacles.
pub fn generate_clutter_map(extent: f64, resolution: f64, n_obstacles: usize, seed: u64) -> OccupancyOctree {
    let n = (extent / resolution).round();
    assert!(
        n >= 1.0 && (n * resolution - extent).abs() < 1e-6 * extent.max(1.0),
        "extent must be a multiple of the resolution"
    );
    let n = n as i32;
    let frame = GridFrame::new(WorldPoint::default(), resolution);
    let bounds = Aabb::new(GridVertex::splat(0), GridVertex::splat(n - 1));
    let mut codes = vec![FREE; bounds.volume() as usize];
    rasterize_codes(&frame, bounds, &mut codes, &sample_obstacles(extent, n_obstacles, seed));
    OccupancyOctree::from_codes(frame, bounds, DEFAULT_BLOCK_HEIGHT, &codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Occupancy;

    #[test]
    fn no_obstacles_is_empty() {
        let m = generate_clutter_map(6.4, 0.1, 0, 1);
        assert_eq!(m.count(Occupancy::Free), 64 * 64 * 64);
        assert_eq!(m.dense_block_count(), 0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_clutter_map(6.4, 0.1, 20, 9);
        let b = generate_clutter_map(6.4, 0.1, 20, 9);
        let c = generate_clutter_map(6.4, 0.1, 20, 10);
        assert_eq!(a.to_dense(), b.to_dense());
        assert_ne!(a.to_dense(), c.to_dense());
    }

    #[test]
    fn clutter_partition_and_fraction() {
        let m = generate_clutter_map(10.0, 0.1, 40, 3);
        let f = m.occupied_fraction();
        assert!(f > 0.0 && f < 1.0, "{f}");
        let vol: i64 = m.leaf_iter().map(|(a, _)| a.aabb().volume()).sum();
        assert_eq!(vol, m.bounds().volume());
    }

    #[test]
    fn sphere_rasterization_counts_centers() {
        let frame = GridFrame::new(WorldPoint::default(), 1.0);
        let mut m = OccupancyOctree::new(frame, Aabb::from_dims(9, 9, 9), 3, Occupancy::Free);
        let s = ObstacleSpec { shape: ObstacleShape::Sphere { radius: 1.0 }, center: WorldPoint::new(4.5, 4.5, 4.5) };
        rasterize(&mut m, &[s]);
        assert_eq!(m.count(Occupancy::Occupied), 7);
    }
}
