//! Benchmark suites: map and query generation, planner runs, path validation
//! and CSV output.
//!
//! A suite file is TOML:
//!
//! ```toml
//! inflation_radius = 0.0   # meters
//! queries_per_map = 20
//!
//! [[map]]
//! id = "clutter-16"
//! extent = 20.0            # cube side, meters
//! resolution = 0.1
//! obstacles = 16
//! seed = 7
//! # query_seed = 8         # defaults to `seed`
//! # file = "maps/x.wvox"   # load instead of generating
//!
//! [[planner]]
//! id = "ours"
//! kind = "wavestar"        # astar | theta | lazytheta | octree-astar | wavestar
//! epsilon = 0.01
//! # r_init = 0.1           # defaults to the map resolution
//! # initialize = true
//! # refine = true
//! # lazy = false
//! # los_max_dist = 51.2
//! ```

use crate::baselines::{plan_astar, plan_lazy_theta, plan_octree_leaf_astar, plan_theta};
use crate::geometry::{euclidean, GridVertex, WorldPoint};
use crate::map::{self, generate_clutter_map, supercover_world, MapIoError, Occupancy, OccupancyOctree};
use crate::planner::{self, PlanError, PlanResult, PlannerConfig, QuerySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CSV_HEADER: &str =
    "map_id,planner_id,query_id,seed,success,status,path_length_m,wall_time_s,expansions,los_checks,refinements,init_leaves";

/// Status recorded when a planner panics.
pub const PANIC_STATUS: &str = "Panicked";

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read suite file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed suite file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid suite: {0}")]
    Invalid(String),
    #[error("map {id}: {source}")]
    Map { id: String, source: MapIoError },
    #[error("map {0} has no free cells to sample queries from")]
    NoFreeCells(String),
    #[error("{planner} on {map} query {query}: {source}")]
    Planner { map: String, planner: String, query: usize, source: PlanError },
    #[error("{planner} on {map} query {query} returned an invalid path")]
    InvalidPath { map: String, planner: String, query: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub id: String,
    #[serde(default)]
    pub extent: Option<f64>,
    #[serde(default)]
    pub resolution: Option<f64>,
    #[serde(default)]
    pub obstacles: usize,
    pub seed: u64,
    #[serde(default)]
    pub query_seed: Option<u64>,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl MapSpec {
    pub fn clutter(id: impl Into<String>, extent: f64, resolution: f64, obstacles: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            extent: Some(extent),
            resolution: Some(resolution),
            obstacles,
            seed,
            query_seed: None,
            file: None,
        }
    }

    pub fn query_seed(&self) -> u64 {
        self.query_seed.unwrap_or(self.seed)
    }

    /// Loads or generates the raw (uninflated) map. Relative file paths are
    /// resolved against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<OccupancyOctree, SuiteError> {
        if let Some(f) = &self.file {
            let p = match base {
                Some(b) if f.is_relative() => b.join(f),
                _ => f.clone(),
            };
            return map::load(p).map_err(|source| SuiteError::Map { id: self.id.clone(), source });
        }
        match (self.extent, self.resolution) {
            (Some(e), Some(r)) if e > 0.0 && r > 0.0 && ((e / r).round() * r - e).abs() <= 1e-6 * e => {
                Ok(generate_clutter_map(e, r, self.obstacles, self.seed))
            }
            (Some(_), Some(_)) => Err(SuiteError::Invalid(format!(
                "map {}: extent must be a positive multiple of the resolution",
                self.id
            ))),
            _ => Err(SuiteError::Invalid(format!("map {} needs either file or extent and resolution", self.id))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlannerKind {
    #[serde(rename = "astar")]
    AStar,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "lazytheta")]
    LazyTheta,
    #[serde(rename = "octree-astar")]
    OctreeAStar,
    #[serde(rename = "wavestar")]
    Wavestar,
}

impl PlannerKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "astar" => Self::AStar,
            "theta" => Self::Theta,
            "lazytheta" => Self::LazyTheta,
            "octree-astar" => Self::OctreeAStar,
            "wavestar" => Self::Wavestar,
            _ => return None,
        })
    }
}

fn yes() -> bool {
    true
}

fn default_epsilon() -> f64 {
    1e-2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSpec {
    pub id: String,
    pub kind: PlannerKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Meters; None uses the map resolution.
    #[serde(default)]
    pub r_init: Option<f64>,
    #[serde(default = "yes")]
    pub initialize: bool,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub lazy: bool,
    #[serde(default)]
    pub los_max_dist: Option<f64>,
}

impl PlannerSpec {
    pub fn new(id: impl Into<String>, kind: PlannerKind) -> Self {
        Self {
            id: id.into(),
            kind,
            epsilon: default_epsilon(),
            r_init: None,
            initialize: true,
            refine: true,
            lazy: false,
            los_max_dist: None,
        }
    }

    pub fn wavestar(id: impl Into<String>, epsilon: f64) -> Self {
        Self { epsilon, ..Self::new(id, PlannerKind::Wavestar) }
    }

    /// Refinement and initialization off: the cost field keeps the occupancy
    /// map's leaves.
    pub fn match_map(id: impl Into<String>) -> Self {
        Self { initialize: false, refine: false, ..Self::new(id, PlannerKind::Wavestar) }
    }

    pub fn planner_config(&self, map: &OccupancyOctree) -> PlannerConfig {
        let r_init = self.initialize.then(|| self.r_init.unwrap_or(map.resolution()));
        PlannerConfig {
            epsilon: self.epsilon,
            r_init,
            refine: self.refine,
            lazy: self.lazy,
            los_max_dist: self.los_max_dist,
            seed_bounds: false,
        }
    }

    pub fn run(&self, map: &OccupancyOctree, q: &QuerySpec) -> Result<PlanResult, PlanError> {
        Ok(match self.kind {
            PlannerKind::AStar => plan_astar(map, q),
            PlannerKind::Theta => plan_theta(map, q, self.los_max_dist),
            PlannerKind::LazyTheta => plan_lazy_theta(map, q, self.los_max_dist),
            PlannerKind::OctreeAStar => plan_octree_leaf_astar(map, q),
            PlannerKind::Wavestar => planner::plan(map, &self.planner_config(map), q)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub inflation_radius: f64,
    pub queries_per_map: usize,
    #[serde(rename = "map", default)]
    pub maps: Vec<MapSpec>,
    #[serde(rename = "planner", default)]
    pub planners: Vec<PlannerSpec>,
}

impl SuiteConfig {
    pub fn from_toml(s: &str) -> Result<Self, SuiteError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SuiteError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn check(&self) -> Result<(), SuiteError> {
        if !(self.inflation_radius >= 0.0) {
            return Err(SuiteError::Invalid("inflation_radius must be non-negative".into()));
        }
        for (i, m) in self.maps.iter().enumerate() {
            if self.maps[..i].iter().any(|o| o.id == m.id) {
                return Err(SuiteError::Invalid(format!("duplicate map id {}", m.id)));
            }
        }
        for (i, p) in self.planners.iter().enumerate() {
            if self.planners[..i].iter().any(|o| o.id == p.id) {
                return Err(SuiteError::Invalid(format!("duplicate planner id {}", p.id)));
            }
        }
        Ok(())
    }

    /// Desk-scale synthetic suite: five 20 m maps at 10 cm with 0 to 32
    /// obstacles, compared across the baselines and the three wavestar
    /// variants.
    pub fn desk_scale(queries_per_map: usize) -> Self {
        let maps = [0, 8, 16, 24, 32]
            .iter()
            .enumerate()
            .map(|(i, &n)| MapSpec::clutter(format!("clutter-{n}"), 20.0, 0.1, n, 100 + i as u64))
            .collect();
        let planners = vec![
            PlannerSpec::new("astar", PlannerKind::AStar),
            PlannerSpec::new("theta", PlannerKind::Theta),
            PlannerSpec::new("lazytheta", PlannerKind::LazyTheta),
            PlannerSpec::wavestar("ours", 1e-2),
            PlannerSpec { lazy: true, ..PlannerSpec::wavestar("ours-lazy", 1e-2) },
            PlannerSpec { lazy: true, r_init: Some(0.4), ..PlannerSpec::wavestar("ours-fast", 1e-2) },
        ];
        Self { inflation_radius: 0.0, queries_per_map, maps, planners }
    }
}

/// A map ready for benchmarking: inflated, with its queries drawn.
#[derive(Clone, Debug)]
pub struct PreparedMap {
    pub id: String,
    pub seed: u64,
    pub map: OccupancyOctree,
    pub queries: Vec<QuerySpec>,
}

impl PreparedMap {
    pub fn new(id: impl Into<String>, map: OccupancyOctree, n_queries: usize, seed: u64) -> Result<Self, SuiteError> {
        let id = id.into();
        let queries = sample_queries(&map, n_queries, seed).ok_or_else(|| SuiteError::NoFreeCells(id.clone()))?;
        Ok(Self { id, seed, map, queries })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub map_id: String,
    pub planner_id: String,
    pub query_id: usize,
    pub seed: u64,
    pub success: bool,
    pub status: String,
    #[serde(rename = "path_length_m")]
    pub path_length: Option<f64>,
    #[serde(rename = "wall_time_s")]
    pub wall_time: f64,
    pub expansions: u64,
    pub los_checks: u64,
    pub refinements: u64,
    pub init_leaves: u64,
}

/// `n` start/goal pairs of uniformly drawn free cell centers. Reachability is
/// not checked. None when the map has no free cell.
pub fn sample_queries(map: &OccupancyOctree, n: usize, seed: u64) -> Option<Vec<QuerySpec>> {
    if map.count(Occupancy::Free) == 0 {
        return None;
    }
    let b = map.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut free_cell = || loop {
        let v = GridVertex::new(
            rng.gen_range(b.min.x..=b.max.x),
            rng.gen_range(b.min.y..=b.max.y),
            rng.gen_range(b.min.z..=b.max.z),
        );
        if map.is_free(v) {
            return map.to_world(v);
        }
    };
    Some((0..n).map(|_| QuerySpec { start: free_cell(), goal: free_cell() }).collect())
}

/// Independent check of a returned path: every segment must touch only free
/// cells, both when sampled every resolution/20 and under a supercover
/// traversal, and the ends must lie within half a cell diagonal of the
/// query.
pub fn validate_path(map: &OccupancyOctree, query: &QuerySpec, waypoints: &[WorldPoint]) -> bool {
    let (Some(first), Some(last)) = (waypoints.first(), waypoints.last()) else {
        return false;
    };
    let res = map.resolution();
    let tol = res * 3f64.sqrt() / 2.0 + 1e-9;
    if euclidean(*first, query.start) > tol || euclidean(*last, query.goal) > tol {
        return false;
    }
    let free = |v: GridVertex| map.bounds().contains(v) && map.is_free(v);
    if waypoints.len() == 1 {
        return free(map.to_vertex(*first));
    }
    waypoints.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        let steps = (euclidean(a, b) / (res / 20.0)).ceil().max(1.0) as usize;
        let sampled = (0..=steps).all(|i| {
            let t = i as f64 / steps as f64;
            let p = WorldPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z));
            free(map.to_vertex(p))
        });
        let mut covered = true;
        supercover_world(map.frame().to_grid(a), map.frame().to_grid(b), |v| {
            covered = free(v);
            covered
        });
        sampled && covered
    })
}

/// Builds every map of the suite: loaded or generated, inflated, queries
/// sampled.
pub fn prepare_maps(cfg: &SuiteConfig, base: Option<&Path>) -> Result<Vec<PreparedMap>, SuiteError> {
    cfg.maps
        .iter()
        .map(|m| {
            let raw = m.build(base)?;
            let map = if cfg.inflation_radius > 0.0 { raw.inflate(cfg.inflation_radius) } else { raw };
            PreparedMap::new(m.id.clone(), map, cfg.queries_per_map, m.query_seed())
        })
        .collect()
}

fn run_one(m: &PreparedMap, p: &PlannerSpec, qi: usize) -> Result<BenchRecord, SuiteError> {
    let q = &m.queries[qi];
    let outcome = catch_unwind(AssertUnwindSafe(|| p.run(&m.map, q)));
    let mut rec = BenchRecord {
        map_id: m.id.clone(),
        planner_id: p.id.clone(),
        query_id: qi,
        seed: m.seed,
        success: false,
        status: PANIC_STATUS.to_string(),
        path_length: None,
        wall_time: 0.0,
        expansions: 0,
        los_checks: 0,
        refinements: 0,
        init_leaves: 0,
    };
    let r = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(source)) => {
            return Err(SuiteError::Planner { map: m.id.clone(), planner: p.id.clone(), query: qi, source })
        }
        Err(_) => return Ok(rec),
    };
    if r.success() && !validate_path(&m.map, q, &r.waypoints) {
        return Err(SuiteError::InvalidPath { map: m.id.clone(), planner: p.id.clone(), query: qi });
    }
    rec.success = r.success();
    rec.status = r.status.as_str().to_string();
    rec.path_length = r.success().then_some(r.length);
    rec.wall_time = r.stats.wall_time;
    rec.expansions = r.stats.expansions;
    rec.los_checks = r.stats.los_checks;
    rec.refinements = r.stats.refinements;
    rec.init_leaves = r.stats.init_leaves;
    Ok(rec)
}

/// Runs every planner on every query of every map. Rows come out in
/// (map, planner, query) order whatever `jobs` is; `jobs` of 0 uses all
/// cores.
pub fn run_maps(maps: &[PreparedMap], planners: &[PlannerSpec], jobs: usize) -> Result<Vec<BenchRecord>, SuiteError> {
    let tasks: Vec<(usize, usize, usize)> = maps
        .iter()
        .enumerate()
        .flat_map(|(mi, m)| (0..planners.len()).flat_map(move |pi| (0..m.queries.len()).map(move |qi| (mi, pi, qi))))
        .collect();
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| SuiteError::Invalid(e.to_string()))?;
    pool.install(|| tasks.par_iter().map(|&(mi, pi, qi)| run_one(&maps[mi], &planners[pi], qi)).collect())
}

pub fn run_suite(cfg: &SuiteConfig, base: Option<&Path>, jobs: usize) -> Result<Vec<BenchRecord>, SuiteError> {
    cfg.check()?;
    let maps = prepare_maps(cfg, base)?;
    run_maps(&maps, &cfg.planners, jobs)
}

pub fn write_csv(records: &[BenchRecord], out: impl Write) -> Result<(), SuiteError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
