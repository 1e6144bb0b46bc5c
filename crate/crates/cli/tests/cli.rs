//! The `gridshield` binary: exit codes, file pipeline and reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridshield::caap::{self, partitioning_of_grid, CompactOptions};
use gridshield::models::{self, ParamOverrides};
use gridshield::synthesis::{synthesize, OutOfBoundsMode, SynthesisConfig};
use gridshield::{GridSpec, SamplePlan};
use gridshield_cli::{digest, ShieldFile, TreeFile};

const ENERGY_GRID: &str = "e[0,100]:25,v[-13,13]:26,loc";
const TANK_GRID: &str = "level[0,100]:21,phase";

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshield"))
        .args(args)
        .env("GRIDSHIELD_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_tank(dir: &Path) -> PathBuf {
    let out = path(dir, "tank.json");
    let r = run(&["synth", "--model", "water-tank", "--grid", TANK_GRID, "--safety", "InRange", "-o", s(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn file_pipeline_matches_in_memory_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let shield_path = path(dir.path(), "energy.json");
    let tree_path = path(dir.path(), "energy-tree.json");
    let r = run(&[
        "synth", "--model", "bouncing-ball-energy", "--grid", ENERGY_GRID, "--safety", "!Stop", "--n", "4", "--m", "1",
        "--oob", "auto", "--seed", "5", "-o", s(&shield_path),
    ]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("cells: 1300"));
    let r = run(&["compact", s(&shield_path), "-o", s(&tree_path), "--seed", "9", "--max-iters", "10", "--min-gain", "1"]);
    assert_eq!(code(&r), 0);
    assert!(stdout(&r).contains("iteration 1: 1300 regions"));

    let model = models::by_name("bouncing-ball-energy", &ParamOverrides::new()).unwrap();
    let grid = GridSpec::parse(ENERGY_GRID, model.descriptor()).unwrap();
    let config = SynthesisConfig {
        property: "!Stop".into(),
        plan: SamplePlan::new(4).unwrap(),
        repeats: 1,
        seed: 5,
        out_of_bounds: OutOfBoundsMode::Auto,
    };
    let shield = synthesize(model.as_ref(), &grid, &config).unwrap().shield;
    let (loaded, shield_digest) = ShieldFile::load(&shield_path).unwrap();
    assert_eq!(loaded.shield, shield);
    let opts = CompactOptions {
        seed: 9,
        ..CompactOptions::default()
    };
    let c = caap::compact(&partitioning_of_grid(&shield).unwrap(), &opts).unwrap();
    let (tree_file, _) = TreeFile::load(&tree_path).unwrap();
    assert_eq!(tree_file.tree, c.tree);
    let prov = tree_file.provenance.unwrap();
    assert_eq!(prov.source_digest, shield_digest);
    assert_eq!(prov.source_digest, digest(&std::fs::read(&shield_path).unwrap()));
    assert_eq!(prov.iterations, c.history);

    let info = run(&["info", s(&tree_path)]);
    assert_eq!(code(&info), 0);
    assert!(stdout(&info).contains(&shield_digest));
    assert!(stdout(&info).contains(&format!("regions: {}", c.tree.num_leaves())));

    // A tree can be compacted again.
    let again = path(dir.path(), "again.json");
    assert_eq!(code(&run(&["compact", s(&tree_path), "-o", s(&again)])), 0);
    assert!(TreeFile::load(&again).unwrap().0.tree.num_leaves() <= c.tree.num_leaves());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x.json");
    let o = s(&out);
    let synth = |extra: &[&str]| {
        let mut args = vec!["synth", "-o", o];
        args.extend_from_slice(extra);
        code(&run(&args))
    };
    let ball = ["--model", "bouncing-ball", "--safety", "!Stop"];
    let with = |rest: &[&'static str]| [&ball[..], rest].concat();
    // Leaving a small grid aborts synthesis in error mode.
    assert_eq!(synth(&with(&["--grid", "v[-13,13]:26,p[0,11]:11,loc", "--oob", "error"])), 3);
    assert_eq!(synth(&with(&["--grid", "v[-13,13:26"])), 2);
    assert_eq!(synth(&with(&["--grid", "v[-13,13]:26,q[0,11]:11,loc"])), 2);
    assert_eq!(synth(&with(&["--grid", "v[-13,13]:26,p[0,11]:11,loc", "--oob", "sometimes"])), 2);
    assert_eq!(synth(&["--model", "nope", "--safety", "x", "--grid", "v[0,1]:1"]), 2);
    assert_eq!(
        synth(&["--model", "bouncing-ball", "--safety", "Flying", "--grid", "v[-13,13]:26,p[0,11]:11,loc"]),
        2
    );
    assert_eq!(synth(&with(&["--grid", "v[-13,13]:26,p[0,11]:11,loc", "--n", "0"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let tank = synth_tank(dir.path());
    assert_eq!(code(&run(&["compact", s(&path(dir.path(), "missing.json")), "-o", o])), 1);
    let text = std::fs::read_to_string(&tank).unwrap();
    let corrupt = path(dir.path(), "corrupt.json");
    std::fs::write(&corrupt, text.replacen("\"cells\":[", "\"cells\":[99,", 1)).unwrap();
    let r = run(&["compact", s(&corrupt), "-o", o]);
    assert_eq!(code(&r), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("entry"));
    std::fs::write(&corrupt, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&run(&["info", s(&corrupt)])), 2);

    let tank_run = ["eval", "--model", "water-tank", "--shield", s(&tank), "--runs", "10"];
    assert_eq!(code(&run(&[&tank_run[..], &["--strategy", "fixed:nothing"]].concat())), 2);
    assert_eq!(code(&run(&[&tank_run[..], &["--property", "Dry"]].concat())), 2);
    assert_eq!(code(&run(&[&tank_run[..], &["--confidence", "1.5"]].concat())), 2);
    // A shield over another model's variables cannot be bound.
    assert_eq!(code(&run(&["eval", "--model", "random-walk", "--shield", s(&tank), "--runs", "10"])), 2);
    assert_eq!(code(&run(&["plot", s(&tank), "--x", "level", "--y", "phase", "--width", "0", "-o", o])), 2);
    assert_eq!(code(&run(&["plot", s(&tank), "--x", "level", "--y", "level", "-o", o])), 2);
}

#[test]
fn shielded_tank_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let tank = synth_tank(dir.path());
    let r = run(&["eval", "--model", "water-tank", "--shield", s(&tank), "--runs", "2000", "--horizon", "100", "--json"]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let stats: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(stats["violations"], 0);
    assert_eq!(stats["runs"], 2000);

    let r = run(&[
        "learn", "--model", "water-tank", "--shield", s(&tank), "--grid", TANK_GRID, "--episodes", "200", "--runs", "500",
        "--horizon", "100", "--json",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(summary["evaluation"]["violations"], 0);
    assert!(summary["evaluation"]["mean_cost"].as_f64().unwrap() > 0.0);
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let tank = synth_tank(dir.path());
    let csv = |name: &str, threads: &str| {
        let out = path(dir.path(), name);
        let r = run_env(
            &["simulate", "--model", "water-tank", "--shield", s(&tank), "--runs", "3", "--horizon", "20", "--seed", "4", "-o", s(&out)],
            threads,
        );
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read(out).unwrap()
    };
    let a = csv("a.csv", "1");
    assert_eq!(a, csv("b.csv", "3"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("run,time,level,phase,action,cost\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("2,")).count(), 21);

    let eval = |threads: &str| {
        let r = run_env(&["eval", "--model", "water-tank", "--shield", s(&tank), "--runs", "300", "--horizon", "30", "--json"], threads);
        assert_eq!(code(&r), 0);
        r.stdout
    };
    assert_eq!(eval("1"), eval("4"));

    let svg = |name: &str| {
        let out = path(dir.path(), name);
        let r = run(&["plot", s(&tank), "--x", "level", "--y", "phase", "-o", s(&out)]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read(out).unwrap()
    };
    let first = svg("a.svg");
    assert_eq!(first, svg("b.svg"));
    assert!(String::from_utf8(first).unwrap().starts_with("<svg"));

    // Identical synthesis inputs give byte-identical shield files, whatever
    // the thread count, apart from the recorded wall time.
    let shield = |name: &str, threads: &str| {
        let out = path(dir.path(), name);
        let r = run_env(&["synth", "--model", "random-walk", "--grid", "x[0,1.2]:40,t[0,1.2]:40", "--safety", "!Late", "--m", "2", "-o", s(&out)], threads);
        assert_eq!(code(&r), 0);
        ShieldFile::load(&out).unwrap().0.shield
    };
    assert_eq!(shield("w1.json", "1"), shield("w2.json", "4"));
}
