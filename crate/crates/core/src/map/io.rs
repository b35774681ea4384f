//! WVOX1 binary map files and voxel-list import.
//!
//! Layout (little-endian): magic `WVOX1`, `u32` version, `f64` resolution,
//! `3 x f64` origin, `3 x i32` bounds min, `3 x i32` bounds max, `u8` block
//! height, `u32` block count; then per block (sorted by z, y, x) its `3 x i32`
//! coordinate, a `u32` run count and `(u8 value, u32 length)` runs over the
//! block's cells in Morton order. Values are 0 free, 1 occupied, 2 unknown
//! and 3 for cells outside the bounds.

use super::{Occupancy, OccupancyOctree, OUTSIDE};
use crate::geometry::{Aabb, GridFrame, GridVertex, WorldPoint};
use std::io::{BufRead, BufReader};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 5] = b"WVOX1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MapIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("line {line}: {msg}")]
    VoxelList { line: usize, msg: String },
}

fn morton_offsets(height: u8) -> Vec<usize> {
    let side = 1usize << height;
    let n = side * side * side;
    (0..n)
        .map(|m| {
            let (mut x, mut y, mut z) = (0usize, 0usize, 0usize);
            for bit in 0..height as usize {
                x |= ((m >> (3 * bit)) & 1) << bit;
                y |= ((m >> (3 * bit + 1)) & 1) << bit;
                z |= ((m >> (3 * bit + 2)) & 1) << bit;
            }
            (z * side + y) * side + x
        })
        .collect()
}

/// Serializes a map to the WVOX1 byte layout.
pub fn to_bytes(map: &OccupancyOctree) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&map.resolution().to_le_bytes());
    for c in map.origin().to_array() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    let b = map.bounds();
    for c in b.min.to_array().into_iter().chain(b.max.to_array()) {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out.push(map.block_height());
    let blocks = map.blocks_sorted();
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    let order = morton_offsets(map.block_height());
    for (coord, cells) in blocks {
        for c in coord {
            out.extend_from_slice(&c.to_le_bytes());
        }
        let mut runs: Vec<(u8, u32)> = Vec::new();
        for &i in &order {
            match runs.last_mut() {
                Some((v, n)) if *v == cells[i] => *n += 1,
                _ => runs.push((cells[i], 1)),
            }
        }
        out.extend_from_slice(&(runs.len() as u32).to_le_bytes());
        for (v, n) in runs {
            out.push(v);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
    out
}

pub fn save(map: &OccupancyOctree, path: impl AsRef<Path>) -> Result<(), MapIoError> {
    std::fs::write(path, to_bytes(map))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|s| s[0])
    }
    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|s| u32::from_le_bytes(s.try_into().unwrap()))
    }
    fn i32(&mut self) -> Option<i32> {
        self.take(4).map(|s| i32::from_le_bytes(s.try_into().unwrap()))
    }
    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|s| f64::from_le_bytes(s.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<OccupancyOctree, MapIoError> {
    let header = |m: &str| MapIoError::MalformedHeader(m.to_string());
    let mut r = Reader { buf, pos: 0 };
    if r.take(5) != Some(MAGIC.as_slice()) {
        return Err(header("missing WVOX1 magic"));
    }
    let version = r.u32().ok_or_else(|| header("missing version"))?;
    if version != FORMAT_VERSION {
        return Err(MapIoError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let short = || header("header ends early");
    let resolution = r.f64().ok_or_else(short)?;
    let origin = [r.f64().ok_or_else(short)?, r.f64().ok_or_else(short)?, r.f64().ok_or_else(short)?];
    let mut bb = [0i32; 6];
    for c in bb.iter_mut() {
        *c = r.i32().ok_or_else(short)?;
    }
    let block_height = r.u8().ok_or_else(short)?;
    let count = r.u32().ok_or_else(short)? as usize;
    if !(resolution.is_finite() && resolution > 0.0) || origin.iter().any(|c| !c.is_finite()) {
        return Err(header("bad resolution or origin"));
    }
    let (min, max) = (GridVertex::new(bb[0], bb[1], bb[2]), GridVertex::new(bb[3], bb[4], bb[5]));
    if !min.all_le(max) || block_height > 10 {
        return Err(header("bad bounds or block height"));
    }
    let frame = GridFrame::new(WorldPoint::from_array(origin), resolution);
    let bounds = Aabb::new(min, max);
    let skeleton = OccupancyOctree::new(frame, bounds, block_height, Occupancy::Free);

    let order = morton_offsets(block_height);
    let n = order.len();
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let mut coord = [0i32; 3];
        for c in coord.iter_mut() {
            *c = r.i32().ok_or(MapIoError::TruncatedPayload)?;
        }
        if !skeleton.has_block(coord) {
            return Err(MapIoError::InvalidPayload(format!("block {coord:?} outside bounds")));
        }
        let runs = r.u32().ok_or(MapIoError::TruncatedPayload)?;
        let mut cells = vec![0u8; n];
        let mut at = 0usize;
        for _ in 0..runs {
            let v = r.u8().ok_or(MapIoError::TruncatedPayload)?;
            let len = r.u32().ok_or(MapIoError::TruncatedPayload)? as usize;
            if v > OUTSIDE || at + len > n {
                return Err(MapIoError::InvalidPayload(format!("bad run in block {coord:?}")));
            }
            for &i in &order[at..at + len] {
                cells[i] = v;
            }
            at += len;
        }
        if at != n {
            return Err(MapIoError::InvalidPayload(format!("block {coord:?} has {at} of {n} cells")));
        }
        blocks.push((coord, cells));
    }
    if r.pos != buf.len() {
        return Err(MapIoError::InvalidPayload("trailing bytes".into()));
    }
    if blocks.len() != skeleton.blocks.len() {
        return Err(MapIoError::InvalidPayload("missing blocks".into()));
    }
    Ok(OccupancyOctree::from_blocks(frame, bounds, block_height, blocks))
}

pub fn load(path: impl AsRef<Path>) -> Result<OccupancyOctree, MapIoError> {
    from_bytes(&std::fs::read(path)?)
}

/// Reads `x y z state` lines (state 0 free, 1 occupied, 2 unknown) into a
/// map that is free elsewhere. Blank lines and `#` comments are skipped.
pub fn import_voxel_list(
    path: impl AsRef<Path>,
    frame: GridFrame,
    bounds: Aabb,
    block_height: u8,
) -> Result<OccupancyOctree, MapIoError> {
    let mut map = OccupancyOctree::new(frame, bounds, block_height, Occupancy::Free);
    let file = BufReader::new(std::fs::File::open(path)?);
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| MapIoError::VoxelList { line: i + 1, msg };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let mut xyz = [0i32; 3];
        for k in 0..3 {
            xyz[k] = f[k].parse().map_err(|e| err(format!("{e}")))?;
        }
        let occ = match f[3] {
            "0" => Occupancy::Free,
            "1" => Occupancy::Occupied,
            "2" => Occupancy::Unknown,
            s => return Err(err(format!("unknown state {s:?}"))),
        };
        let v = GridVertex::from_array(xyz);
        if !bounds.contains(v) {
            return Err(err(format!("voxel {v} outside bounds")));
        }
        map.set_cell(v, occ);
    }
    Ok(map)
}
