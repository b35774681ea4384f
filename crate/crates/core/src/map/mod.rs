//! Hashed-octree ternary occupancy map.
//!
//! The map is split into cubic blocks of `2^block_height` cells. A block is
//! either uniform (one value for every cell) or dense, in which case it keeps a
//! full pyramid: level 0 holds the cells and level `h` holds one code per
//! `2^h`-cube (the shared value, or [`MIXED`]). Cells of a boundary block that
//! fall outside the map bounds are stored as [`OUTSIDE`].

mod generate;
mod inflate;
mod io;
mod raycast;

pub use generate::{generate_clutter_map, rasterize, sample_obstacles, ObstacleShape, ObstacleSpec};
pub use io::{from_bytes, import_voxel_list, load, save, to_bytes, MapIoError};
pub use raycast::supercover_world;

use crate::geometry::{Aabb, GridFrame, GridVertex, SubvolumeAddress, WorldPoint};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BLOCK_HEIGHT: u8 = 6;

pub(crate) const FREE: u8 = 0;
pub(crate) const OCCUPIED: u8 = 1;
pub(crate) const UNKNOWN: u8 = 2;
pub(crate) const OUTSIDE: u8 = 3;
pub(crate) const MIXED: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Occupied,
    Unknown,
}

impl Occupancy {
    pub(crate) fn code(self) -> u8 {
        match self {
            Occupancy::Free => FREE,
            Occupancy::Occupied => OCCUPIED,
            Occupancy::Unknown => UNKNOWN,
        }
    }

    /// Outside cells read as occupied.
    pub(crate) fn from_code(c: u8) -> Occupancy {
        match c {
            FREE => Occupancy::Free,
            UNKNOWN => Occupancy::Unknown,
            _ => Occupancy::Occupied,
        }
    }

    pub fn is_free(self) -> bool {
        self == Occupancy::Free
    }
}

#[derive(Clone, Debug)]
enum Block {
    Uniform(u8),
    Dense(Box<Pyramid>),
}

#[derive(Clone, Debug)]
struct Pyramid {
    levels: Vec<Vec<u8>>,
}

impl Pyramid {
    fn filled(height: u8, code: u8) -> Self {
        let levels = (0..=height).map(|h| vec![code; 1usize << (3 * (height - h) as usize)]).collect();
        Self { levels }
    }

    fn from_cells(height: u8, cells: Vec<u8>) -> Self {
        let mut p = Self { levels: vec![cells] };
        for h in 1..=height {
            let side = 1usize << (height - h);
            let fine = &p.levels[(h - 1) as usize];
            let fs = side * 2;
            let mut lvl = vec![0u8; side * side * side];
            for z in 0..side {
                for y in 0..side {
                    for x in 0..side {
                        let base = ((2 * z) * fs + 2 * y) * fs + 2 * x;
                        let first = fine[base];
                        let mut c = first;
                        if first == MIXED {
                            c = MIXED;
                        } else {
                            'scan: for dz in 0..2 {
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        if fine[base + (dz * fs + dy) * fs + dx] != first {
                                            c = MIXED;
                                            break 'scan;
                                        }
                                    }
                                }
                            }
                        }
                        lvl[(z * side + y) * side + x] = c;
                    }
                }
            }
            p.levels.push(lvl);
        }
        p
    }

    fn root(&self) -> u8 {
        self.levels.last().unwrap()[0]
    }

    #[inline]
    fn get(&self, height: u8, block_height: u8, l: [i32; 3]) -> u8 {
        let s = 1usize << (block_height - height);
        self.levels[height as usize][(l[2] as usize * s + l[1] as usize) * s + l[0] as usize]
    }

    /// Writes a level-0 cell and propagates the change upwards.
    fn set(&mut self, block_height: u8, l: [i32; 3], code: u8) {
        let mut l = l;
        let s0 = 1usize << block_height;
        self.levels[0][(l[2] as usize * s0 + l[1] as usize) * s0 + l[0] as usize] = code;
        for h in 1..=block_height {
            let fs = 1usize << (block_height - h + 1);
            let base = [l[0] & !1, l[1] & !1, l[2] & !1];
            let fine = &self.levels[(h - 1) as usize];
            let first = fine[(base[2] as usize * fs + base[1] as usize) * fs + base[0] as usize];
            let mut c = first;
            for i in 1..8 {
                let (dx, dy, dz) = (i & 1, (i >> 1) & 1, (i >> 2) & 1);
                let idx = ((base[2] as usize + dz) * fs + base[1] as usize + dy) * fs + base[0] as usize + dx;
                if fine[idx] != first {
                    c = MIXED;
                    break;
                }
            }
            l = [l[0] >> 1, l[1] >> 1, l[2] >> 1];
            let s = fs / 2;
            let slot = &mut self.levels[h as usize][(l[2] as usize * s + l[1] as usize) * s + l[0] as usize];
            if *slot == c {
                break;
            }
            *slot = c;
        }
    }
}

/// Occupancy map over a bounded box of finest cells.
#[derive(Clone, Debug)]
pub struct OccupancyOctree {
    frame: GridFrame,
    bounds: Aabb,
    block_height: u8,
    blocks: FxHashMap<[i32; 3], Block>,
}

impl OccupancyOctree {
    /// A map whose in-bounds cells all hold `fill`.
    pub fn new(frame: GridFrame, bounds: Aabb, block_height: u8, fill: Occupancy) -> Self {
        assert!(block_height <= 10, "block height {block_height} too large");
        let mut map = Self { frame, bounds, block_height, blocks: FxHashMap::default() };
        let code = fill.code();
        for bc in map.block_range() {
            let block = if bounds.contains_box(&map.block_aabb(bc)) {
                Block::Uniform(code)
            } else {
                let cells = map.block_cells(bc, |_| code);
                Block::Dense(Box::new(Pyramid::from_cells(block_height, cells)))
            };
            map.blocks.insert(bc, block);
        }
        map
    }

    /// Builds a map from cell values listed over `bounds`, x fastest.
    pub fn from_dense(frame: GridFrame, bounds: Aabb, block_height: u8, cells: &[Occupancy]) -> Self {
        let codes: Vec<u8> = cells.iter().map(|c| c.code()).collect();
        Self::from_codes(frame, bounds, block_height, &codes)
    }

    pub(crate) fn from_codes(frame: GridFrame, bounds: Aabb, block_height: u8, codes: &[u8]) -> Self {
        assert_eq!(codes.len() as i64, bounds.volume(), "cell count does not match bounds");
        let mut map = Self { frame, bounds, block_height, blocks: FxHashMap::default() };
        let d = bounds.dims();
        for bc in map.block_range() {
            let cells = map.block_cells(bc, |v| {
                let r = v - bounds.min;
                codes[((r.z as i64 * d[1] + r.y as i64) * d[0] + r.x as i64) as usize]
            });
            map.blocks.insert(bc, Self::make_block(block_height, cells));
        }
        map
    }

    fn make_block(block_height: u8, cells: Vec<u8>) -> Block {
        let first = cells[0];
        if cells.iter().all(|&c| c == first) && first != OUTSIDE {
            Block::Uniform(first)
        } else {
            Block::Dense(Box::new(Pyramid::from_cells(block_height, cells)))
        }
    }

    /// Level-0 codes of a block, with `f` consulted for in-bounds cells only.
    fn block_cells(&self, bc: [i32; 3], f: impl Fn(GridVertex) -> u8) -> Vec<u8> {
        let b = self.block_aabb(bc);
        b.cells().map(|v| if self.bounds.contains(v) { f(v) } else { OUTSIDE }).collect()
    }

    fn block_range(&self) -> impl Iterator<Item = [i32; 3]> {
        let lo = SubvolumeAddress::containing(self.bounds.min, self.block_height);
        let hi = SubvolumeAddress::containing(self.bounds.max, self.block_height);
        (lo.z..=hi.z).flat_map(move |z| (lo.y..=hi.y).flat_map(move |y| (lo.x..=hi.x).map(move |x| [x, y, z])))
    }

    fn block_aabb(&self, bc: [i32; 3]) -> Aabb {
        SubvolumeAddress::new(self.block_height, bc[0], bc[1], bc[2]).aabb()
    }

    pub fn frame(&self) -> &GridFrame {
        &self.frame
    }

    pub fn resolution(&self) -> f64 {
        self.frame.resolution
    }

    pub fn origin(&self) -> WorldPoint {
        self.frame.origin
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn block_height(&self) -> u8 {
        self.block_height
    }

    pub fn to_world(&self, v: GridVertex) -> WorldPoint {
        self.frame.to_world(v)
    }

    pub fn to_vertex(&self, p: WorldPoint) -> GridVertex {
        self.frame.to_vertex(p)
    }

    /// Number of hashed blocks that are not uniform.
    pub fn dense_block_count(&self) -> usize {
        self.blocks.values().filter(|b| matches!(b, Block::Dense(_))).count()
    }

    #[inline]
    fn split_vertex(&self, v: GridVertex) -> ([i32; 3], [i32; 3]) {
        let b = self.block_height;
        let m = (1 << b) - 1;
        ([v.x >> b, v.y >> b, v.z >> b], [v.x & m, v.y & m, v.z & m])
    }

    /// Raw cell code; cells outside the bounds read as [`OUTSIDE`].
    #[inline]
    pub(crate) fn cell_code(&self, v: GridVertex) -> u8 {
        if !self.bounds.contains(v) {
            return OUTSIDE;
        }
        let (bc, l) = self.split_vertex(v);
        match &self.blocks[&bc] {
            Block::Uniform(c) => *c,
            Block::Dense(p) => p.get(0, self.block_height, l),
        }
    }

    pub fn get_cell(&self, v: GridVertex) -> Occupancy {
        Occupancy::from_code(self.cell_code(v))
    }

    #[inline]
    pub fn is_free(&self, v: GridVertex) -> bool {
        self.cell_code(v) == FREE
    }

    /// Writes one cell. Writes outside the bounds are ignored.
    pub fn set_cell(&mut self, v: GridVertex, occ: Occupancy) {
        if !self.bounds.contains(v) {
            return;
        }
        let code = occ.code();
        let bh = self.block_height;
        let (bc, l) = self.split_vertex(v);
        let block = self.blocks.get_mut(&bc).expect("in-bounds block exists");
        if let Block::Uniform(c) = *block {
            if c == code {
                return;
            }
            *block = Block::Dense(Box::new(Pyramid::filled(bh, c)));
        }
        let Block::Dense(p) = block else { unreachable!() };
        p.set(bh, l, code);
        let root = p.root();
        if root != MIXED && root != OUTSIDE {
            *block = Block::Uniform(root);
        }
    }

    /// Code of an octree node of height at most `block_height`: the shared
    /// value of its cells, or [`MIXED`].
    pub(crate) fn node_code(&self, addr: SubvolumeAddress) -> u8 {
        let bh = self.block_height;
        debug_assert!(addr.height <= bh);
        let root = addr.ancestor(bh);
        match self.blocks.get(&[root.x, root.y, root.z]) {
            None => OUTSIDE,
            Some(Block::Uniform(c)) => *c,
            Some(Block::Dense(p)) => {
                let m = (1 << (bh - addr.height)) - 1;
                p.get(addr.height, bh, [addr.x & m, addr.y & m, addr.z & m])
            }
        }
    }

    /// Value of a uniform node, if it is uniform and inside the bounds.
    pub fn node_occupancy(&self, addr: SubvolumeAddress) -> Option<Occupancy> {
        match self.node_code(addr) {
            MIXED | OUTSIDE => None,
            c => Some(Occupancy::from_code(c)),
        }
    }

    /// The largest uniform node containing `v`, as `(code, height)`.
    #[inline]
    pub(crate) fn uniform_node_at(&self, v: GridVertex) -> (u8, u8) {
        if !self.bounds.contains(v) {
            return (OUTSIDE, 0);
        }
        let bh = self.block_height;
        let (bc, l) = self.split_vertex(v);
        match &self.blocks[&bc] {
            Block::Uniform(c) => (*c, bh),
            Block::Dense(p) => {
                let c = p.get(0, bh, l);
                let mut h = 1;
                while h <= bh && p.get(h, bh, [l[0] >> h, l[1] >> h, l[2] >> h]) == c {
                    h += 1;
                }
                (c, h - 1)
            }
        }
    }

    /// True iff `q` contains a cell that is not free (cells outside the bounds
    /// count as not free).
    pub fn any_non_free(&self, q: &Aabb) -> bool {
        if !self.bounds.contains_box(q) {
            return true;
        }
        let bh = self.block_height;
        let lo = SubvolumeAddress::containing(q.min, bh);
        let hi = SubvolumeAddress::containing(q.max, bh);
        for z in lo.z..=hi.z {
            for y in lo.y..=hi.y {
                for x in lo.x..=hi.x {
                    let hit = match &self.blocks[&[x, y, z]] {
                        Block::Uniform(c) => *c != FREE,
                        Block::Dense(p) => Self::dense_any_non_free(p, bh, SubvolumeAddress::new(bh, x, y, z), q),
                    };
                    if hit {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn dense_any_non_free(p: &Pyramid, bh: u8, addr: SubvolumeAddress, q: &Aabb) -> bool {
        let m = (1 << (bh - addr.height)) - 1;
        match p.get(addr.height, bh, [addr.x & m, addr.y & m, addr.z & m]) {
            FREE => false,
            MIXED => addr.children().iter().any(|c| c.aabb().intersects(q) && Self::dense_any_non_free(p, bh, *c, q)),
            _ => true,
        }
    }

    /// Maximal uniform nodes partitioning the bounds, blocks in coordinate
    /// order and children in Morton order.
    pub fn leaf_iter(&self) -> LeafIter<'_> {
        let mut keys: Vec<[i32; 3]> = self.blocks.keys().copied().collect();
        keys.sort_unstable_by_key(|k| [k[2], k[1], k[0]]);
        keys.reverse();
        LeafIter { map: self, blocks: keys, stack: Vec::new() }
    }

    /// Cell values over the bounds, x fastest.
    pub fn to_dense(&self) -> Vec<Occupancy> {
        self.bounds.cells().map(|v| self.get_cell(v)).collect()
    }

    pub(crate) fn to_codes(&self) -> Vec<u8> {
        self.bounds.cells().map(|v| self.cell_code(v)).collect()
    }

    pub fn count(&self, occ: Occupancy) -> u64 {
        self.leaf_iter().filter(|(_, o)| *o == occ).map(|(a, _)| a.aabb().volume() as u64).sum()
    }

    /// Fraction of in-bounds cells that are not free.
    pub fn occupied_fraction(&self) -> f64 {
        1.0 - self.count(Occupancy::Free) as f64 / self.bounds.volume() as f64
    }

    pub fn inflate(&self, radius: f64) -> OccupancyOctree {
        inflate::inflate(self, radius)
    }

    /// Supercover line of sight between two world points; false when the
    /// points are further apart than `max_dist`.
    pub fn line_of_sight(&self, a: WorldPoint, b: WorldPoint, max_dist: f64) -> bool {
        raycast::line_of_sight_world(self, a, b, max_dist)
    }

    /// Supercover line of sight between two vertex centers; `max_cells` caps
    /// the segment length in cell units.
    pub fn line_of_sight_vertices(&self, a: GridVertex, b: GridVertex, max_cells: f64) -> bool {
        let d = b - a;
        let len2 = (d.x as f64).powi(2) + (d.y as f64).powi(2) + (d.z as f64).powi(2);
        if len2 > max_cells * max_cells {
            return false;
        }
        raycast::supercover_clear(self, a, b, true)
    }

    pub(crate) fn blocks_sorted(&self) -> Vec<([i32; 3], Vec<u8>)> {
        let mut keys: Vec<[i32; 3]> = self.blocks.keys().copied().collect();
        keys.sort_unstable_by_key(|k| [k[2], k[1], k[0]]);
        keys.into_iter()
            .map(|k| {
                let cells = match &self.blocks[&k] {
                    Block::Uniform(c) => vec![*c; 1usize << (3 * self.block_height as usize)],
                    Block::Dense(p) => p.levels[0].clone(),
                };
                (k, cells)
            })
            .collect()
    }

    pub(crate) fn from_blocks(
        frame: GridFrame,
        bounds: Aabb,
        block_height: u8,
        blocks: Vec<([i32; 3], Vec<u8>)>,
    ) -> Self {
        let mut map = Self { frame, bounds, block_height, blocks: FxHashMap::default() };
        for (k, cells) in blocks {
            map.blocks.insert(k, Self::make_block(block_height, cells));
        }
        map
    }

    pub(crate) fn has_block(&self, bc: [i32; 3]) -> bool {
        self.blocks.contains_key(&bc)
    }
}

pub struct LeafIter<'a> {
    map: &'a OccupancyOctree,
    blocks: Vec<[i32; 3]>,
    stack: Vec<SubvolumeAddress>,
}

impl Iterator for LeafIter<'_> {
    type Item = (SubvolumeAddress, Occupancy);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let addr = match self.stack.pop() {
                Some(a) => a,
                None => {
                    let b = self.blocks.pop()?;
                    SubvolumeAddress::new(self.map.block_height, b[0], b[1], b[2])
                }
            };
            match self.map.node_code(addr) {
                MIXED => self.stack.extend(addr.children().iter().rev()),
                OUTSIDE => {}
                c => return Some((addr, Occupancy::from_code(c))),
            }
        }
    }
}
