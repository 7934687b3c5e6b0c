use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn rgsgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgsgen")).args(args).output().expect("binary runs")
}

fn preset(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_graph(dir: &TempDir) -> PathBuf {
    let path = dir.path().join("graph.toml");
    std::fs::write(
        &path,
        "num_vertices = 7\nkinds = [\"p\", \"p\", \"p\", \"p\", \"p\", \"p\", \"p\"]\n\
         edges = [[0, 1], [1, 2], [2, 3], [1, 4], [1, 5], [2, 6]]\n",
    )
    .unwrap();
    path
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn compile_then_verify_passes() {
    let dir = TempDir::new().unwrap();
    let graph = write_graph(&dir);
    let out = dir.path().join("circuit.json");
    for alg in ["alg1", "alg2"] {
        let o = rgsgen(&["compile", "--graph", p(&graph), "--ne", "2", "--alg", alg, "--out", p(&out), "--force"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = rgsgen(&["verify", "--circuit", p(&out), "--graph", p(&graph)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("PASS"));
    }
}

#[test]
fn verify_rejects_a_mutated_circuit() {
    let dir = TempDir::new().unwrap();
    let graph = write_graph(&dir);
    let out = dir.path().join("circuit.json");
    let o = rgsgen(&["compile", "--graph", p(&graph), "--ne", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let gates = doc["circuit"]["gates"].as_array_mut().unwrap();
    let pos = gates.iter().rposition(|g| g["op"] == "CNOT_EP").expect("an emission");
    gates.remove(pos);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = rgsgen(&["verify", "--circuit", p(&bad), "--graph", p(&graph)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("FAIL"));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn depth_sweep_reports_rgs_depths() {
    let o = rgsgen(&["depth-sweep", "--m", "2", "--b", "3,2", "--ne", "3..12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 10);
    let depth = |ne: &str| rows.iter().find(|r| r[0] == ne).unwrap()[1].parse::<usize>().unwrap();
    assert!(depth("3").abs_diff(11) <= 1);
    assert_eq!(depth("12"), 5);
    assert!(stderr(&o).starts_with("# {"));
}

#[test]
fn empty_sweep_gives_header_only() {
    let o = rgsgen(&["depth-sweep", "--m", "2", "--b", "3,2", "--ne", "5..3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "n_e,depth,total_time_ns,status\n");
}

#[test]
fn zero_timing_gives_zero_ghz_times() {
    let o = rgsgen(&["ghz", "--m", "1..4", "--timing", &preset("zero_timing.cfg")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r[2] == "0"));
}

#[test]
fn ghz_reports_breakeven_with_preset_timing() {
    let o = rgsgen(&["ghz", "--m", "2..3", "--timing", &preset("paper_timing.cfg")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows[0][..4], ["2", "1", "105", "1"]);
    assert_eq!(rows[0][4], "12");
}

fn envelope(dir: &TempDir, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out = dir.path().join(name);
    let config = preset("paper_rgs.cfg");
    let mut args = vec!["envelope", "--config", &config, "--L", "100,300", "--repeaters", "0,5,50"];
    args.extend(["--trials", "3000", "--seed", "7", "--out", p(&out)]);
    args.extend_from_slice(extra);
    (rgsgen(&args), out)
}

#[test]
fn envelope_is_reproducible_across_runs_and_workers() {
    let dir = TempDir::new().unwrap();
    let (a, pa) = envelope(&dir, "a.csv", &[]);
    assert!(a.status.success(), "{}", stderr(&a));
    let (b, pb) = envelope(&dir, "b.csv", &[]);
    assert!(b.status.success());
    let (c, pc) = envelope(&dir, "c.csv", &["--workers", "3"]);
    assert!(c.status.success());
    let text = std::fs::read_to_string(&pa).unwrap();
    assert_eq!(text, std::fs::read_to_string(&pb).unwrap());
    assert_eq!(text, std::fs::read_to_string(&pc).unwrap());

    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[6].parse::<f64>().unwrap() > 0.0));

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config"]["chain"]["n_e"], 12);
    assert_eq!(meta["config"]["chain"]["timing"]["t_cnot_ee"], 180.0);
    assert!(meta["wall_clock_s"].is_number());
}

#[test]
fn existing_output_needs_force() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("ghz.csv");
    std::fs::write(&out, "keep").unwrap();
    let o = rgsgen(&["ghz", "--m", "2", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "keep");
    let o = rgsgen(&["ghz", "--m", "2", "--out", p(&out), "--force"]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("m,n,"));
}

#[test]
fn invalid_input_exits_with_one_line() {
    for args in [
        vec!["depth-sweep", "--m", "2", "--b", "0,2", "--ne", "3"],
        vec!["ghz", "--m", "x..4"],
        vec!["compile", "--graph", "/nonexistent.toml", "--ne", "1"],
        vec!["frobnicate"],
    ] {
        let o = rgsgen(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert_eq!(stderr(&o).lines().count(), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn rgs_info_counts_vertices() {
    let o = rgsgen(&["rgs-info", "--m", "2", "--b", "3,2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["summary"]["num_vertices"], 44);
    assert_eq!(v["summary"]["num_links"], 4);
}
