use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfinfluence::duplicates::DuplicateGroupMap;
use cfinfluence::influence::InfluenceMatrixOf;

const STEPS: &[&str] = &[
    "gen-data",
    "craft-dups",
    "gen-partitions",
    "sweep",
    "influence",
    "extract",
    "stats",
    "stability",
    "report",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cfinfluence"));
    for var in [
        "CFINF_CONFIG",
        "CFINF_SEED",
        "CFINF_WORKERS",
        "CFINF_TARGET",
        "CFINF_OUT",
        "CFINF_FORMAT",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(out: &Path, extra: &[&str], step: &str) -> Output {
    bin().arg("--out").arg(out).args(extra).arg(step).output().unwrap()
}

fn ok(out: &Path, extra: &[&str], step: &str) {
    let o = run(out, extra, step);
    assert!(
        o.status.success(),
        "{step} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn pipeline(out: &Path, extra: &[&str]) {
    for step in STEPS {
        ok(out, extra, step);
    }
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut m = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                m.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    m
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    fs::write(
        &p,
        "n_models = 128\ncorpus.n_records = 6\ncorpus.n_held_out = 2\ndups.groups = 2\ndups.n_dup = 3\nstability.m_values = 16, 64\n",
    )
    .unwrap();
    p
}

#[test]
fn reference_pipeline_produces_all_artifacts_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    pipeline(out, &[]);
    for f in [
        "corpus.txt",
        "held_out.txt",
        "dataset.txt",
        "groups.csv",
        "partitions.bin",
        "losses.bin",
        "losses.csv",
        "metrics.csv",
        "influence.bin",
        "influence.csv",
        "extraction.csv",
        "summary.csv",
        "group_summary.csv",
        "candidates.csv",
        "stability.csv",
        "report/heatmap.svg",
        "report/table1.csv",
        "report/table1.md",
        "report/stability.svg",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("losses.partial").exists());

    let before = snapshot(out);
    pipeline(out, &[]);
    assert_eq!(before, snapshot(out), "rerunning the pipeline changed an artifact");
}

#[test]
fn report_is_read_only_upstream() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = small_config(dir.path());
    let extra = ["--config", cfg.to_str().unwrap()];
    for step in &STEPS[..STEPS.len() - 1] {
        ok(out, &extra, step);
    }
    let before = snapshot(out);
    ok(out, &extra, "report");
    let after = snapshot(out);
    for (path, bytes) in &before {
        assert_eq!(after.get(path), Some(bytes), "{} changed", path.display());
    }
    assert!(after
        .keys()
        .filter(|p| !before.contains_key(*p))
        .all(|p| p.starts_with("report")));
}

#[test]
fn influence_before_sweep_names_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for step in ["gen-data", "craft-dups", "gen-partitions"] {
        ok(out, &[], step);
    }
    let o = run(out, &[], "influence");
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().last().unwrap();
    assert!(line.starts_with("error: kind=missing_artifact"), "{line}");
    assert!(line.ends_with("requires=sweep"), "{line}");

    let o = run(&out.join("nothing"), &[], "gen-partitions");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("requires=craft-dups"));
}

#[test]
fn ranked_plot_of_duplicate_target_leads_with_group_members() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for step in &STEPS[..5] {
        ok(out, &[], step);
    }
    let groups = DuplicateGroupMap::load(&out.join("groups.csv")).unwrap();
    let g = &groups.groups[0];
    let target = g.members[2];
    ok(out, &["--target", &target.to_string()], "report");
    let svg = fs::read_to_string(out.join(format!("report/ranked_{target}.svg"))).unwrap();
    let labels: Vec<&str> = svg
        .lines()
        .filter(|l| l.starts_with("<text") && l.contains("rotate(-90"))
        .map(|l| l.split('>').nth(1).unwrap().trim_end_matches("</text"))
        .collect();
    let top: HashSet<String> = labels[..groups.n_dup].iter().map(|s| s.to_string()).collect();
    let expected: HashSet<String> = g.members.iter().map(|id| format!("{id}*")).collect();
    assert_eq!(top, expected);
    assert!(labels[groups.n_dup..].iter().all(|l| !l.ends_with('*')));
}

fn red_intensity(fill: &str) -> Option<u32> {
    // Positive values go white -> red: red stays 0xff-ish while green drops.
    let r = u32::from_str_radix(&fill[1..3], 16).ok()?;
    let g = u32::from_str_radix(&fill[3..5], 16).ok()?;
    let b = u32::from_str_radix(&fill[5..7], 16).ok()?;
    (r >= b).then_some(255 - g)
}

#[test]
fn heatmap_bright_off_diagonal_cells_sit_on_group_members() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    for step in &STEPS[..5] {
        ok(out, &[], step);
    }
    ok(out, &[], "report");
    let groups = DuplicateGroupMap::load(&out.join("groups.csv")).unwrap();
    let inf = InfluenceMatrixOf::<f64>::load(&out.join("influence.bin")).unwrap();
    let n = inf.n();
    let svg = fs::read_to_string(out.join("report/heatmap.svg")).unwrap();
    // Cells are emitted row-major; diagonal cells carry their own class.
    let cells: Vec<(bool, String)> = svg
        .lines()
        .filter(|l| l.starts_with(r#"<rect class="cell""#) || l.starts_with(r#"<rect class="diag""#))
        .map(|l| {
            let fill = l.split("fill=\"").nth(1).unwrap()[..7].to_string();
            (l.contains(r#"class="diag""#), fill)
        })
        .collect();
    assert_eq!(cells.len(), n * n);
    for t in 0..n {
        assert!(cells[t * n + t].0);
        let Some(gi) = groups.group_of(t as u64) else { continue };
        let others: HashSet<usize> = groups.groups[gi]
            .members
            .iter()
            .map(|&m| m as usize)
            .filter(|&m| m != t)
            .collect();
        let mut ranked: Vec<(u32, usize)> = (0..n)
            .filter(|&i| i != t)
            .map(|i| (red_intensity(&cells[t * n + i].1).unwrap_or(0), i))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let top: HashSet<usize> = ranked[..others.len()].iter().map(|x| x.1).collect();
        assert_eq!(top, others, "row {t}");
        // Colour order agrees with value order among the bright cells.
        let weakest_member = others.iter().map(|&i| inf.get(t, i)).fold(f64::INFINITY, f64::min);
        let strongest_other = (0..n)
            .filter(|i| *i != t && !others.contains(i))
            .map(|i| inf.get(t, i))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(weakest_member > strongest_other);
    }
}

#[test]
fn oracle_and_json_format_on_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small_config(dir.path());
    let extra = ["--config", cfg.to_str().unwrap(), "--format", "json"];
    pipeline(&out, &extra);
    ok(&out, &extra, "oracle");
    for f in [
        "influence.json",
        "oracle.json",
        "summary.json",
        "group_summary.json",
        "stability.json",
        "extraction.json",
    ] {
        let text = fs::read_to_string(out.join(f)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert!(v.as_array().is_some_and(|a| !a.is_empty()), "{f}");
    }
    assert!(out.join("report/stability.svg").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(
        summary[0]["bleu"].is_number(),
        "BLEU joined from the JSON extraction table"
    );
}

#[test]
fn oracle_refuses_large_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &[], "gen-data");
    ok(out, &[], "craft-dups");
    let o = run(out, &[], "oracle");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: kind=invalid_argument"));
}

#[test]
fn interrupted_sweep_resumes_to_identical_losses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let extra = ["--config", cfg.to_str().unwrap()];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        for step in ["gen-data", "craft-dups", "gen-partitions"] {
            ok(out, &extra, step);
        }
    }
    ok(&a, &extra, "sweep");
    let o = bin()
        .arg("--out")
        .arg(&b)
        .args(extra)
        .args(["sweep", "--stop-after", "40"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("interrupted"));
    assert!(!b.join("losses.bin").exists());
    ok(&b, &["--config", cfg.to_str().unwrap(), "--workers", "3"], "sweep");
    assert_eq!(
        fs::read(a.join("losses.bin")).unwrap(),
        fs::read(b.join("losses.bin")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn environment_variables_mirror_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let cfg = small_config(dir.path());
    let o = bin()
        .env("CFINF_OUT", &out)
        .env("CFINF_CONFIG", &cfg)
        .env("CFINF_SEED", "7")
        .arg("gen-data")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let flag_out = dir.path().join("flag");
    ok(
        &flag_out,
        &["--config", cfg.to_str().unwrap(), "--seed", "7"],
        "gen-data",
    );
    assert_eq!(
        fs::read(out.join("corpus.txt")).unwrap(),
        fs::read(flag_out.join("corpus.txt")).unwrap()
    );
}

#[test]
fn vector_pipeline_plants_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vec");
    let cfg = dir.path().join("vec.cfg");
    fs::write(
        &cfg,
        "learner = linear_classifier\nclassifier.iterations = 40\nn_models = 64\ncorpus.n_records = 30\ndups.groups = 2\nstability.m_values = 16, 32\n",
    )
    .unwrap();
    let extra = ["--config", cfg.to_str().unwrap()];
    for step in STEPS.iter().filter(|s| **s != "extract") {
        ok(&out, &extra, step);
    }
    let groups = DuplicateGroupMap::load(&out.join("groups.csv")).unwrap();
    assert_eq!(groups.groups.len(), 2);
    let o = run(&out, &extra, "extract");
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("extraction needs a language model"));
}
