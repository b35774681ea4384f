use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;
use wavestar::geometry::{Aabb, GridFrame, GridVertex, WorldPoint};
use wavestar::map::{self, Occupancy, OccupancyOctree};

fn wavestar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavestar")).args(args).output().expect("spawn")
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json on stdout")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 100^3 cells at 10 cm with a 2 m box in the middle.
fn box_map(dir: &TempDir) -> std::path::PathBuf {
    let mut m = OccupancyOctree::new(
        GridFrame::new(WorldPoint::default(), 0.1),
        Aabb::from_dims(100, 100, 100),
        6,
        Occupancy::Free,
    );
    for v in Aabb::new(GridVertex::splat(40), GridVertex::splat(59)).cells() {
        m.set_cell(v, Occupancy::Occupied);
    }
    let p = dir.path().join("box.wvox");
    map::save(&m, &p).unwrap();
    p
}

#[test]
fn gen_map_is_empty_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.wvox");
    let b = dir.path().join("b.wvox");
    for p in [&a, &b] {
        let o = wavestar(&[
            "gen-map",
            "--extent",
            "3.2",
            "--res",
            "0.1",
            "--obstacles",
            "0",
            "--seed",
            "1",
            "--out",
            path_str(p),
        ]);
        assert!(o.status.success());
        assert_eq!(json(&o)["occupied_fraction"], 0.0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = dir.path().join("c.wvox");
    let o = wavestar(&["gen-map", "--extent", "6.4", "--obstacles", "10", "--seed", "7", "--out", path_str(&c)]);
    assert!(o.status.success());
    let f = json(&o)["occupied_fraction"].as_f64().unwrap();
    assert!(f > 0.0 && f < 1.0);
}

#[test]
fn desk_map_loads_and_partitions() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("desk.wvox");
    let o = wavestar(&[
        "gen-map",
        "--extent",
        "20",
        "--res",
        "0.1",
        "--obstacles",
        "200",
        "--seed",
        "7",
        "--out",
        path_str(&p),
    ]);
    assert!(o.status.success());
    let m = map::load(&p).unwrap();
    let vol: i64 = m.leaf_iter().map(|(a, _)| a.aabb().intersection(&m.bounds()).map_or(0, |b| b.volume())).sum();
    assert_eq!(vol, m.bounds().volume());
}

#[test]
fn plan_exit_codes() {
    let dir = TempDir::new().unwrap();
    let m = box_map(&dir);
    let o = wavestar(&["plan", "--map", path_str(&m), "--start", "0.5,0.5,0.5", "--goal", "3,0.5,0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["status"], "PathFound");
    assert_eq!(v["waypoints"].as_array().unwrap().len(), 2);

    let o = wavestar(&["plan", "--map", path_str(&m), "--start", "0.5,0.5,0.5", "--goal", "5,5,5"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&o)["status"], "GoalBlocked");

    let o = wavestar(&["plan", "--map", path_str(&m), "--start", "0.5,0.5,0.5", "--goal", "50,5,5"]);
    assert_eq!(o.status.code(), Some(1));
    let o = wavestar(&["plan", "--map", path_str(&m), "--start", "0.5,0.5,0.5", "--goal", "1,1,1", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = wavestar(&["plan", "--map", "/nonexistent.wvox", "--start", "0,0,0", "--goal", "1,1,1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn no_path_exit_code() {
    let dir = TempDir::new().unwrap();
    let mut m = OccupancyOctree::new(
        GridFrame::new(WorldPoint::default(), 0.1),
        Aabb::from_dims(16, 16, 16),
        4,
        Occupancy::Free,
    );
    for v in Aabb::new(GridVertex::new(8, 0, 0), GridVertex::new(8, 15, 15)).cells() {
        m.set_cell(v, Occupancy::Occupied);
    }
    let p = dir.path().join("sealed.wvox");
    map::save(&m, &p).unwrap();
    for planner in ["astar", "theta", "lazytheta", "octree-astar", "wavestar"] {
        let o = wavestar(&[
            "plan",
            "--map",
            path_str(&p),
            "--planner",
            planner,
            "--start",
            "0.05,0.05,0.05",
            "--goal",
            "1.55,0.05,0.05",
        ]);
        assert_eq!(o.status.code(), Some(2), "{planner}");
        assert_eq!(json(&o)["status"], "NoPathFound");
    }
}

#[test]
fn wavestar_within_two_eps_of_theta() {
    let dir = TempDir::new().unwrap();
    let m = box_map(&dir);
    let len = |planner: &str| {
        let o = wavestar(&[
            "plan",
            "--map",
            path_str(&m),
            "--planner",
            planner,
            "--start",
            "3.05,4.55,5.05",
            "--goal",
            "7.55,5.35,4.85",
        ]);
        assert_eq!(o.status.code(), Some(0));
        json(&o)["length"].as_f64().unwrap()
    };
    let (w, t) = (len("wavestar"), len("theta"));
    assert!(w <= 1.02 * t, "{w} {t}");
}

#[test]
fn validate_plans() {
    let dir = TempDir::new().unwrap();
    let m = box_map(&dir);
    let o = wavestar(&["plan", "--map", path_str(&m), "--start", "3.05,4.55,5.05", "--goal", "7.55,5.35,4.85"]);
    let plan = dir.path().join("plan.json");
    std::fs::write(&plan, &o.stdout).unwrap();
    let o = wavestar(&["validate", "--map", path_str(&m), "--path", path_str(&plan)]);
    assert_eq!(o.status.code(), Some(0));

    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&plan).unwrap()).unwrap();
    let wps = v["waypoints"].as_array().unwrap().clone();
    v["waypoints"] = serde_json::json!([wps[0], wps[wps.len() - 1]]);
    std::fs::write(&plan, serde_json::to_vec(&v).unwrap()).unwrap();
    let o = wavestar(&["validate", "--map", path_str(&m), "--path", path_str(&plan)]);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(&plan, b"{").unwrap();
    let o = wavestar(&["validate", "--map", path_str(&m), "--path", path_str(&plan)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bench_row_count_and_determinism() {
    let dir = TempDir::new().unwrap();
    let suite = dir.path().join("suite.toml");
    std::fs::write(
        &suite,
        r#"
queries_per_map = 5
[[map]]
id = "a"
extent = 3.2
resolution = 0.1
obstacles = 4
seed = 1
[[map]]
id = "b"
extent = 3.2
resolution = 0.1
obstacles = 8
seed = 2
[[planner]]
id = "theta"
kind = "theta"
[[planner]]
id = "ours"
kind = "wavestar"
"#,
    )
    .unwrap();
    let run = |out: &Path, jobs: &str| {
        let o = wavestar(&["bench", "--suite", path_str(&suite), "--out", path_str(out), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(out).unwrap();
        text.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(7);
                f.join(",")
            })
            .collect::<Vec<_>>()
    };
    let a = run(&dir.path().join("a.csv"), "1");
    assert_eq!(a.len(), 21);
    assert_eq!(
        a[0],
        "map_id,planner_id,query_id,seed,success,status,path_length_m,expansions,los_checks,refinements,init_leaves"
    );
    assert_eq!(a, run(&dir.path().join("b.csv"), "2"));

    std::fs::write(&suite, "queries_per_map = [").unwrap();
    let o = wavestar(&["bench", "--suite", path_str(&suite)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_costfield_dump() {
    let dir = TempDir::new().unwrap();
    let m = box_map(&dir);
    let out = dir.path().join("field.txt");
    let o = wavestar(&[
        "export-costfield",
        "--map",
        path_str(&m),
        "--start",
        "3.05,4.55,5.05",
        "--goal",
        "7.55,5.35,4.85",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows.len() > 1);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 9));
}

#[test]
fn help_lists_defaults() {
    let o = wavestar(&["plan", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let h = String::from_utf8(o.stdout).unwrap();
    for flag in ["--epsilon", "--r-init", "--lazy", "--los-cap", "--inflate", "[default: 0.01]", "[default: wavestar]"]
    {
        assert!(h.contains(flag), "{flag}");
    }
}
