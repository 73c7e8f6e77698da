use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gridsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsim"))
        .current_dir(dir)
        .env_remove("GRIDSIM_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_map(path: &Path) -> Vec<(String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn small_gen(tmp: &TempDir, name: &str, seed: &str) -> Output {
    gridsim(
        tmp.path(),
        &[
            "gen", "--preset", "G7", "--user-group", "1", "--job-sets", "3", "--jobs-per-set", "2", "--arrival-horizon",
            "30", "--seed", seed, "-o", name,
        ],
    )
}

#[test]
fn gen_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_gen(&tmp, "a.json", "4")), 0);
    assert_eq!(code(&small_gen(&tmp, "b.json", "4")), 0);
    assert_eq!(code(&small_gen(&tmp, "c.json", "5")), 0);
    let read = |n: &str| fs::read(tmp.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
}

#[test]
fn preset_g7_draws_from_its_column() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&small_gen(&tmp, "s.json", "1")), 0);
    let s: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("s.json")).unwrap()).unwrap();
    let resources = s["resources"].as_array().unwrap();
    assert_eq!(resources.len(), 3);
    for r in resources {
        for m in r["machines"].as_array().unwrap() {
            let mtbf = m["mtbf"].as_f64().unwrap();
            assert!((15.0..=90.0).contains(&mtbf), "{mtbf}");
        }
    }
}

#[test]
fn bad_property_file_names_the_key() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("g.txt"), "number_of_resources = 2,\nbogus_key = 3\n").unwrap();
    let o = gridsim(tmp.path(), &["gen", "--grid", "g.txt", "--user-group", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bogus_key"), "{}", stderr(&o));

    let o = gridsim(tmp.path(), &["gen", "--preset", "G4", "--user-group", "1"]);
    assert_eq!(code(&o), 1);
    let o = gridsim(tmp.path(), &["run", "--scenario", "missing.json"]);
    assert_eq!(code(&o), 1);
    let o = gridsim(tmp.path(), &["run", "--no-such-flag"]);
    assert_eq!(code(&o), 1);
    let o = gridsim(tmp.path(), &["run", "--scenario", "x.json", "--sp", "-1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn run_writes_reports_and_flags_truncation() {
    let tmp = TempDir::new().unwrap();
    small_gen(&tmp, "s.json", "2");
    let o = gridsim(tmp.path(), &["run", "--scenario", "s.json", "--seed", "2", "-o", "out", "--sp", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["outcomes.csv", "loading.csv", "summary.csv", "report.json"] {
        assert!(tmp.path().join("out").join(f).exists(), "{f}");
    }
    let outcomes = fs::read_to_string(tmp.path().join("out/outcomes.csv")).unwrap();
    assert_eq!(outcomes.lines().count(), 1 + 10 * 3 * 2);

    let o = gridsim(tmp.path(), &["run", "--scenario", "s.json", "--max-ticks", "1", "-o", "short"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("max-ticks"));
    let summary = csv_map(&tmp.path().join("short/summary.csv"));
    assert!(summary.contains(&("truncated".into(), "true".into())));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gridsim"))
        .current_dir(tmp.path())
        .env("GRIDSIM_OUT_DIR", "envout")
        .args(["gen", "--preset", "G2", "--user-group", "2", "--job-sets", "1", "--jobs-per-set", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("envout/scenario.json").exists());

    let o = gridsim(tmp.path(), &["gen", "--preset", "G2", "--user-group", "2", "--job-sets", "1"]);
    assert_eq!(code(&o), 0);
    assert!(tmp.path().join("gridsim-out/scenario.json").exists());
}

#[test]
fn single_cell_sweep_matches_run() {
    let tmp = TempDir::new().unwrap();
    small_gen(&tmp, "s.json", "3");
    let o = gridsim(tmp.path(), &["run", "--scenario", "s.json", "--seed", "3", "--sp", "1.5", "-o", "run"]);
    assert_eq!(code(&o), 0);
    let o = gridsim(
        tmp.path(),
        &[
            "sweep", "--parameter", "sp", "--values", "1.5", "--seeds", "3", "--preset", "G7", "--user-group", "1",
            "--job-sets", "3", "--jobs-per-set", "2", "--arrival-horizon", "30", "-o", "sweep",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["sweep_summary.csv", "fig7_processed.csv", "fig8_assigned_cost.csv", "fig9_completion_time.csv"] {
        assert!(tmp.path().join("sweep").join(f).exists(), "{f}");
    }
    let run: Vec<_> = csv_map(&tmp.path().join("run/summary.csv"));
    let get = |k: &str| run.iter().find(|(m, _)| m == k).unwrap().1.parse::<f64>().unwrap();
    let text = fs::read_to_string(tmp.path().join("sweep/sweep_summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(lines.next().is_none());
    for k in ["processed", "failed", "removed", "assigned", "mean_assigned_cost", "mean_completion_time"] {
        let i = header.iter().position(|h| *h == k).unwrap();
        assert_eq!(row[i], get(k), "{k}");
    }
}

#[test]
fn sweep_rejects_bad_seeds_and_empty_values() {
    let tmp = TempDir::new().unwrap();
    let base = ["sweep", "--parameter", "fp", "--preset", "G2", "--user-group", "1"];
    let with = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        gridsim(tmp.path(), &a)
    };
    assert_eq!(code(&with(&["--values", "1", "--seeds", "5..2"])), 1);
    assert_eq!(code(&with(&["--values", "x"])), 1);
    assert_eq!(code(&with(&["--seeds", "1"])), 1);
}

#[test]
fn stats_reads_scenarios_and_reports() {
    let tmp = TempDir::new().unwrap();
    small_gen(&tmp, "s.json", "6");
    let o = gridsim(tmp.path(), &["stats", "s.json"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("resources,3\n"));
    assert!(out.contains("users,10\n"));
    assert!(out.contains("jobs,60\n"));

    gridsim(tmp.path(), &["run", "--scenario", "s.json", "-o", "out"]);
    let o = gridsim(tmp.path(), &["stats", "out"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("total_jobs,60\n"));

    let o = gridsim(tmp.path(), &["stats", "nowhere"]);
    assert_eq!(code(&o), 1);
}
