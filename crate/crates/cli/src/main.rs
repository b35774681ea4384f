use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wavestar::bench::{self, PlannerKind, PlannerSpec, SuiteConfig};
use wavestar::geometry::WorldPoint;
use wavestar::map::{self, Occupancy, OccupancyOctree};
use wavestar::planner::{self, PlanResult, PlanStatus, QuerySpec};

/// Any-angle path planning on multi-resolution occupancy maps.
///
/// Exit codes: 0 path found (or success), 1 error, 2 no path, 3 blocked
/// start or goal.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a cube map filled with random obstacles.
    GenMap {
        /// Cube side in meters.
        #[arg(long, default_value_t = 20.0)]
        extent: f64,
        /// Cell size in meters.
        #[arg(long, default_value_t = 0.1)]
        res: f64,
        #[arg(long, default_value_t = 0)]
        obstacles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dilate the occupied space of a map.
    Inflate {
        #[arg(long)]
        map: PathBuf,
        /// Meters.
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan one query and print the result as JSON.
    Plan {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        planner: PlannerArgs,
    },
    /// Run a benchmark suite and write one CSV row per query.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a plan produced by `plan` against a map.
    Validate {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        path: PathBuf,
        /// Inflation radius in meters; defaults to the one stored in the plan.
        #[arg(long)]
        inflate: Option<f64>,
    },
    /// Plan one query with wavestar and dump its final cost field leaves.
    ExportCostfield {
        #[command(flatten)]
        map: MapArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        planner: PlannerArgs,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct MapArgs {
    /// WVOX1 map file.
    #[arg(long)]
    map: PathBuf,
    /// Obstacle inflation radius in meters.
    #[arg(long, default_value_t = 0.0)]
    inflate: f64,
}

impl MapArgs {
    fn load(&self) -> Result<OccupancyOctree> {
        let m = map::load(&self.map).with_context(|| format!("loading {}", self.map.display()))?;
        Ok(if self.inflate > 0.0 { m.inflate(self.inflate) } else { m })
    }
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Start point `x,y,z` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    start: WorldPoint,
    /// Goal point `x,y,z` in meters.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    goal: WorldPoint,
}

#[derive(Args, Debug)]
struct PlannerArgs {
    /// astar, theta, lazytheta, octree-astar or wavestar.
    #[arg(long, default_value = "wavestar", value_parser = parse_kind)]
    planner: PlannerKind,
    /// Per-comparison suboptimality tolerance (wavestar).
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Size of the leaves seeded next to obstacles, in meters; defaults to
    /// the map resolution (wavestar).
    #[arg(long)]
    r_init: Option<f64>,
    /// Keep the occupancy map's leaves instead of seeding fine ones (wavestar).
    #[arg(long)]
    no_init: bool,
    /// Disable refinement of ambiguous leaves (wavestar).
    #[arg(long)]
    no_refine: bool,
    /// Defer visibility checks to expansion (wavestar).
    #[arg(long)]
    lazy: bool,
    /// Longest visibility check in meters; defaults to 512 cells.
    #[arg(long)]
    los_cap: Option<f64>,
}

impl PlannerArgs {
    fn spec(&self) -> PlannerSpec {
        PlannerSpec {
            id: String::new(),
            kind: self.planner,
            epsilon: self.epsilon,
            r_init: self.r_init,
            initialize: !self.no_init,
            refine: !self.no_refine,
            lazy: self.lazy,
            los_max_dist: self.los_cap,
        }
    }
}

fn parse_point(s: &str) -> Result<WorldPoint, String> {
    let v: Vec<f64> =
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(WorldPoint::new(x, y, z)),
        _ => Err("expected three finite numbers x,y,z".into()),
    }
}

fn parse_kind(s: &str) -> Result<PlannerKind, String> {
    PlannerKind::parse(s).ok_or_else(|| format!("unknown planner {s:?}"))
}

/// JSON written by `plan` and read by `validate`.
#[derive(Serialize, Deserialize)]
struct PlanOutput {
    planner: PlannerKind,
    inflation_radius: f64,
    query: QuerySpec,
    #[serde(flatten)]
    result: PlanResult,
}

fn status_code(s: PlanStatus) -> u8 {
    match s {
        PlanStatus::PathFound => 0,
        PlanStatus::NoPathFound => 2,
        PlanStatus::StartBlocked | PlanStatus::GoalBlocked => 3,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn run(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::GenMap { extent, res, obstacles, seed, out } => {
            let n = extent / res;
            if !(res > 0.0 && extent > 0.0 && (n.round() - n).abs() <= 1e-6 * n) {
                bail!("extent must be a positive multiple of the resolution");
            }
            let m = map::generate_clutter_map(extent, res, obstacles, seed);
            map::save(&m, &out).with_context(|| format!("writing {}", out.display()))?;
            let summary = serde_json::json!({
                "cells": m.bounds().volume(),
                "occupied": m.count(Occupancy::Occupied),
                "occupied_fraction": m.occupied_fraction(),
            });
            println!("{summary}");
        }
        Cmd::Inflate { map: input, radius, out } => {
            if !(radius >= 0.0) {
                bail!("radius must be non-negative");
            }
            let m = map::load(&input).with_context(|| format!("loading {}", input.display()))?;
            let inflated = m.inflate(radius);
            map::save(&inflated, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("{}", serde_json::json!({ "occupied_fraction": inflated.occupied_fraction() }));
        }
        Cmd::Plan { map, query, planner } => {
            let m = map.load()?;
            let q = QuerySpec { start: query.start, goal: query.goal };
            let result = planner.spec().run(&m, &q)?;
            let code = status_code(result.status);
            let out = PlanOutput { planner: planner.planner, inflation_radius: map.inflate, query: q, result };
            println!("{}", serde_json::to_string_pretty(&out)?);
            return Ok(code);
        }
        Cmd::Bench { suite, out, jobs } => {
            let cfg = SuiteConfig::load(&suite).with_context(|| format!("reading {}", suite.display()))?;
            let records = bench::run_suite(&cfg, suite.parent(), jobs)?;
            bench::write_csv(&records, output(out.as_deref())?)?;
            let ok = records.iter().filter(|r| r.success).count();
            eprintln!("{} rows, {} successful", records.len(), ok);
        }
        Cmd::Validate { map: map_path, path, inflate } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let plan: PlanOutput = serde_json::from_str(&text).context("malformed plan file")?;
            let m = map::load(&map_path).with_context(|| format!("loading {}", map_path.display()))?;
            let r = inflate.unwrap_or(plan.inflation_radius);
            let m = if r > 0.0 { m.inflate(r) } else { m };
            if !bench::validate_path(&m, &plan.query, &plan.result.waypoints) {
                eprintln!("path is invalid");
                return Ok(1);
            }
            eprintln!("path is valid");
        }
        Cmd::ExportCostfield { map, query, planner, out } => {
            if planner.planner != PlannerKind::Wavestar {
                bail!("export-costfield needs the wavestar planner");
            }
            let m = map.load()?;
            let q = QuerySpec { start: query.start, goal: query.goal };
            let (result, field) = planner::plan_with_field(&m, &planner.spec().planner_config(&m), &q)?;
            let Some(field) = field else {
                eprintln!("{}: no cost field", result.status.as_str());
                return Ok(status_code(result.status));
            };
            let mut w = output(out.as_deref())?;
            field.export_voxel_list(m.frame(), &mut w)?;
            w.flush()?;
            eprintln!("{}: {} leaves", result.status.as_str(), field.leaves().len());
            return Ok(status_code(result.status));
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
