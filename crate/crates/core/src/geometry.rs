//! Grid coordinates, boxes and distance metrics shared by the maps and planners.
//!
//! Every finest-resolution cell is identified by a [`GridVertex`]; the vertex
//! sits at the cell's center. Internally the planners measure distances in
//! "vertex units" (one unit per cell edge) and only convert to meters at the
//! boundary through a [`GridFrame`].

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

/// Integer index of a finest-resolution cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridVertex {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl GridVertex {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: i32) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [i32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }

    /// Position in vertex units.
    pub fn to_f64(self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    pub fn cmin(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn cmax(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn all_le(self, o: Self) -> bool {
        self.x <= o.x && self.y <= o.y && self.z <= o.z
    }

    /// Euclidean distance in vertex units.
    pub fn dist(self, o: Self) -> f64 {
        dist3(self.to_f64(), o.to_f64())
    }
}

impl Add for GridVertex {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for GridVertex {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl fmt::Display for GridVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A point in continuous world coordinates, in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Euclidean distance between two world points.
pub fn euclidean(a: WorldPoint, b: WorldPoint) -> f64 {
    dist3(a.to_array(), b.to_array())
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Octile distance on a 26-connected grid with edge costs 1, √2 and √3 (scaled
/// by `resolution`).
pub fn octile3(a: GridVertex, b: GridVertex, resolution: f64) -> f64 {
    let mut d = [(a.x - b.x).abs(), (a.y - b.y).abs(), (a.z - b.z).abs()];
    d.sort_unstable_by(|p, q| q.cmp(p));
    let (d1, d2, d3) = (d[0] as f64, d[1] as f64, d[2] as f64);
    resolution * ((d1 - d2) + std::f64::consts::SQRT_2 * (d2 - d3) + 3f64.sqrt() * d3)
}

/// Placement of the finest grid in the world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub origin: WorldPoint,
    pub resolution: f64,
}

impl GridFrame {
    pub fn new(origin: WorldPoint, resolution: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self { origin, resolution }
    }

    /// World position of a vertex (the center of its cell).
    pub fn to_world(&self, v: GridVertex) -> WorldPoint {
        let r = self.resolution;
        WorldPoint::new(
            self.origin.x + (v.x as f64 + 0.5) * r,
            self.origin.y + (v.y as f64 + 0.5) * r,
            self.origin.z + (v.z as f64 + 0.5) * r,
        )
    }

    /// Index of the cell containing `p`.
    pub fn to_vertex(&self, p: WorldPoint) -> GridVertex {
        let g = self.to_grid(p);
        GridVertex::new(g[0].floor() as i32, g[1].floor() as i32, g[2].floor() as i32)
    }

    /// Continuous grid coordinates: cell `i` spans `[i, i + 1)` on each axis.
    pub fn to_grid(&self, p: WorldPoint) -> [f64; 3] {
        let r = self.resolution;
        [(p.x - self.origin.x) / r, (p.y - self.origin.y) / r, (p.z - self.origin.z) / r]
    }

    /// Vertex-unit coordinates of a world point (vertex `v` maps to `v`).
    pub fn to_vertex_units(&self, p: WorldPoint) -> [f64; 3] {
        let g = self.to_grid(p);
        [g[0] - 0.5, g[1] - 0.5, g[2] - 0.5]
    }
}

/// Inclusive axis-aligned box of finest cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Aabb {
    pub min: GridVertex,
    pub max: GridVertex,
}

impl Aabb {
    pub fn new(min: GridVertex, max: GridVertex) -> Self {
        assert!(min.all_le(max), "degenerate box {min} .. {max}");
        Self { min, max }
    }

    pub fn cell(v: GridVertex) -> Self {
        Self { min: v, max: v }
    }

    /// Box `[0, n-1]` on each axis.
    pub fn from_dims(nx: i32, ny: i32, nz: i32) -> Self {
        Self::new(GridVertex::splat(0), GridVertex::new(nx - 1, ny - 1, nz - 1))
    }

    pub fn dims(&self) -> [i64; 3] {
        [
            (self.max.x - self.min.x) as i64 + 1,
            (self.max.y - self.min.y) as i64 + 1,
            (self.max.z - self.min.z) as i64 + 1,
        ]
    }

    pub fn volume(&self) -> i64 {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn contains(&self, v: GridVertex) -> bool {
        self.min.all_le(v) && v.all_le(self.max)
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.min.all_le(o.min) && o.max.all_le(self.max)
    }

    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.all_le(o.max) && o.min.all_le(self.max)
    }

    pub fn intersection(&self, o: &Aabb) -> Option<Aabb> {
        self.intersects(o).then(|| Aabb { min: self.min.cmax(o.min), max: self.max.cmin(o.max) })
    }

    pub fn dilate(&self, r: i32) -> Aabb {
        Aabb { min: self.min - GridVertex::splat(r), max: self.max + GridVertex::splat(r) }
    }

    /// Iterates all cells, x fastest.
    pub fn cells(&self) -> impl Iterator<Item = GridVertex> + '_ {
        let (lo, hi) = (self.min, self.max);
        (lo.z..=hi.z)
            .flat_map(move |z| (lo.y..=hi.y).flat_map(move |y| (lo.x..=hi.x).map(move |x| GridVertex::new(x, y, z))))
    }
}

/// True iff the boxes overlap or touch by a face, edge or corner.
pub fn are_adjacent(a: &Aabb, b: &Aabb) -> bool {
    let sep = a.min.cmax(b.min) - a.max.cmin(b.max);
    sep.x <= 1 && sep.y <= 1 && sep.z <= 1
}

/// True iff the boxes are disjoint and share a face patch of positive area.
pub fn are_face_adjacent(a: &Aabb, b: &Aabb) -> bool {
    let sep = a.min.cmax(b.min) - a.max.cmin(b.max);
    let s = [sep.x, sep.y, sep.z];
    s.iter().filter(|&&v| v == 1).count() == 1 && s.iter().all(|&v| v <= 1)
}

/// Smallest distance from `p` to the hull of the box's vertex centers, all in
/// vertex units.
pub fn dist_to_box(p: [f64; 3], b: &Aabb) -> f64 {
    let lo = b.min.to_f64();
    let hi = b.max.to_f64();
    let mut s = 0.0;
    for i in 0..3 {
        let d = if p[i] < lo[i] {
            lo[i] - p[i]
        } else if p[i] > hi[i] {
            p[i] - hi[i]
        } else {
            0.0
        };
        s += d * d;
    }
    s.sqrt()
}

/// Largest distance from `p` to any vertex center of the box (vertex units).
pub fn farthest_to_box(p: [f64; 3], b: &Aabb) -> f64 {
    let lo = b.min.to_f64();
    let hi = b.max.to_f64();
    let mut s = 0.0;
    for i in 0..3 {
        let d = (p[i] - lo[i]).abs().max((p[i] - hi[i]).abs());
        s += d * d;
    }
    s.sqrt()
}

/// [`dist_to_box`] for a world point, in meters.
pub fn dist_point_box(p: WorldPoint, b: &Aabb, frame: &GridFrame) -> f64 {
    dist_to_box(frame.to_vertex_units(p), b) * frame.resolution
}

/// [`farthest_to_box`] for a world point, in meters.
pub fn farthest_dist_point_box(p: WorldPoint, b: &Aabb, frame: &GridFrame) -> f64 {
    farthest_to_box(frame.to_vertex_units(p), b) * frame.resolution
}

/// An octree node: a cube of `2^height` finest cells per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubvolumeAddress {
    pub height: u8,
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl SubvolumeAddress {
    pub const fn new(height: u8, x: i32, y: i32, z: i32) -> Self {
        Self { height, x, y, z }
    }

    /// The node of the given height that contains `v`.
    pub fn containing(v: GridVertex, height: u8) -> Self {
        Self::new(height, v.x >> height, v.y >> height, v.z >> height)
    }

    pub fn side(&self) -> i32 {
        1 << self.height
    }

    pub fn aabb(&self) -> Aabb {
        let h = self.height;
        let min = GridVertex::new(self.x << h, self.y << h, self.z << h);
        let s = (1 << h) - 1;
        Aabb { min, max: min + GridVertex::splat(s) }
    }

    /// The vertex that stands for the node when it acts as a predecessor:
    /// the cell whose minimum corner is the cube's geometric center.
    pub fn center(&self) -> GridVertex {
        let h = self.height;
        let half = if h == 0 { 0 } else { 1 << (h - 1) };
        GridVertex::new((self.x << h) + half, (self.y << h) + half, (self.z << h) + half)
    }

    pub fn contains(&self, v: GridVertex) -> bool {
        Self::containing(v, self.height) == *self
    }

    pub fn parent(&self) -> Self {
        Self::new(self.height + 1, self.x >> 1, self.y >> 1, self.z >> 1)
    }

    /// Child `i` in Morton order (bit 0 = x, bit 1 = y, bit 2 = z).
    pub fn child(&self, i: u8) -> Self {
        debug_assert!(self.height > 0 && i < 8);
        Self::new(
            self.height - 1,
            2 * self.x + (i & 1) as i32,
            2 * self.y + ((i >> 1) & 1) as i32,
            2 * self.z + ((i >> 2) & 1) as i32,
        )
    }

    pub fn children(&self) -> [Self; 8] {
        std::array::from_fn(|i| self.child(i as u8))
    }

    /// Ancestor at `height` (which must be at least the node's own height).
    pub fn ancestor(&self, height: u8) -> Self {
        let d = height - self.height;
        Self::new(height, self.x >> d, self.y >> d, self.z >> d)
    }
}

impl fmt::Display for SubvolumeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}:({}, {}, {})", self.height, self.x, self.y, self.z)
    }
}

pub fn aabb_of(address: SubvolumeAddress) -> Aabb {
    address.aabb()
}
