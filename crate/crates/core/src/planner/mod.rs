//! Planner results, queries and the shared open-queue entry.

mod wavestar;

pub use wavestar::{compute_f_score, plan, plan_lazy, plan_with_field, PlannerConfig};

use crate::geometry::{euclidean, GridVertex, WorldPoint};
use crate::map::OccupancyOctree;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub start: WorldPoint,
    pub goal: WorldPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanStatus {
    PathFound,
    NoPathFound,
    StartBlocked,
    GoalBlocked,
}

impl PlanStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanStatus::PathFound => "PathFound",
            PlanStatus::NoPathFound => "NoPathFound",
            PlanStatus::StartBlocked => "StartBlocked",
            PlanStatus::GoalBlocked => "GoalBlocked",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub expansions: u64,
    pub los_checks: u64,
    pub refinements: u64,
    pub queue_pushes: u64,
    pub init_leaves: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    /// Start first, goal last; empty unless a path was found.
    pub waypoints: Vec<WorldPoint>,
    /// Meters.
    pub length: f64,
    pub stats: PlanStats,
}

impl PlanResult {
    pub fn failed(status: PlanStatus, stats: PlanStats) -> Self {
        Self { status, waypoints: Vec::new(), length: 0.0, stats }
    }

    pub fn found(map: &OccupancyOctree, vertices: &[GridVertex], stats: PlanStats) -> Self {
        let waypoints: Vec<WorldPoint> = vertices.iter().map(|v| map.to_world(*v)).collect();
        Self { status: PlanStatus::PathFound, length: path_length(&waypoints), waypoints, stats }
    }

    pub fn success(&self) -> bool {
        self.status == PlanStatus::PathFound
    }
}

pub fn path_length(waypoints: &[WorldPoint]) -> f64 {
    waypoints.windows(2).map(|w| euclidean(w[0], w[1])).sum()
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{which} point ({x}, {y}, {z}) lies outside the map")]
    OutOfBounds { which: &'static str, x: f64, y: f64, z: f64 },
    #[error("invalid planner configuration: {0}")]
    Config(String),
}

/// Snaps both endpoints to their cells; `Err(Ok(status))` reports a blocked
/// endpoint.
pub(crate) fn snap_query(
    map: &OccupancyOctree,
    q: &QuerySpec,
) -> Result<Result<(GridVertex, GridVertex), PlanStatus>, PlanError> {
    let snap = |p: WorldPoint, which| {
        let v = map.to_vertex(p);
        if map.bounds().contains(v) {
            Ok(v)
        } else {
            Err(PlanError::OutOfBounds { which, x: p.x, y: p.y, z: p.z })
        }
    };
    let s = snap(q.start, "start")?;
    let g = snap(q.goal, "goal")?;
    Ok(if !map.is_free(s) {
        Err(PlanStatus::StartBlocked)
    } else if !map.is_free(g) {
        Err(PlanStatus::GoalBlocked)
    } else {
        Ok((s, g))
    })
}

/// Open-queue entry: lowest `f` first, then highest `g`, then smallest key.
#[derive(Clone, Copy, Debug)]
pub(crate) struct QueueEntry<K> {
    pub f: f64,
    pub g: f64,
    pub key: K,
    pub version: u32,
}

impl<K: Ord> PartialEq for QueueEntry<K> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl<K: Ord> Eq for QueueEntry<K> {}

impl<K: Ord> PartialOrd for QueueEntry<K> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl<K: Ord> Ord for QueueEntry<K> {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.key.cmp(&self.key))
            .then(o.version.cmp(&self.version))
    }
}
