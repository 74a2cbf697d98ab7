use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use sar_bench::{execute, load_traces, render_report, BenchmarkPlan, REPORT_TSV, TRACE_DIR};
use sar_core::backend::ScriptedBackend;
use sar_core::orchestrator::ControllerMode;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sar-bench")).args(args).env_remove("SAR_LLM_API_KEY").output().unwrap()
}

fn trace_count(dir: &Path) -> usize {
    fs::read_dir(dir.join(TRACE_DIR)).map(|d| d.count()).unwrap_or(0)
}

/// Column `name` of the row labelled `group` in a report table.
fn cell(tsv: &str, group: &str, name: &str) -> f64 {
    let mut lines = tsv.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    let row = lines.find(|l| l.starts_with(&format!("{group}\t"))).unwrap();
    row.split('\t').nth(col).unwrap().parse().unwrap()
}

fn plan(scenes: &[&str], seeds: std::ops::Range<u64>) -> BenchmarkPlan {
    BenchmarkPlan {
        scenes: scenes.iter().map(|s| s.to_string()).collect(),
        seeds: seeds.collect(),
        agents: vec![2],
        modes: vec![ControllerMode::Llamar],
        horizon: 30,
        model: "gpt-4o".into(),
    }
}

#[test]
fn scripted_sweep_writes_traces_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = bench(&["run", "--scenes", "4", "--seeds", "0-4", "--agents", "2", "--mode", "llamar", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(trace_count(&out), 5);
    assert!(out.join(TRACE_DIR).join("4_llamar_2_3.jsonl").exists());
    let tsv = fs::read_to_string(out.join(REPORT_TSV)).unwrap();
    assert_eq!(cell(&tsv, "all", "SR"), 1.0);
    assert_eq!(cell(&tsv, "all", "episodes"), 5.0);
}

#[test]
fn replay_gives_identical_report_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rec");
    let o = bench(&["run", "--scenes", "1", "--seeds", "0-1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let o = bench(&["replay", "--in", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("replay identical"));
    assert_eq!(
        fs::read(out.join(REPORT_TSV)).unwrap(),
        fs::read(out.join("replayed").join(REPORT_TSV)).unwrap()
    );

    // The same plan through the replay backend, driven by `run`.
    let again = dir.path().join("again");
    let store = out.join("replay.jsonl");
    let o = bench(&[
        "run", "--scenes", "1", "--seeds", "0-1", "--backend", "replay", "--store", store.to_str().unwrap(),
        "--out", again.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(out.join(REPORT_TSV)).unwrap(), fs::read(again.join(REPORT_TSV)).unwrap());
}

#[test]
fn unreachable_backend_fails_without_traces() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("remote");
    let endpoint = format!("http://127.0.0.1:{port}/v1/chat/completions");
    let o = bench(&[
        "run", "--scenes", "4", "--seeds", "0", "--backend", "remote", "--endpoint", &endpoint, "--retry-delay-ms",
        "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert_eq!(trace_count(&out), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
}

#[test]
fn replay_backend_needs_a_store() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = bench(&["run", "--scenes", "4", "--backend", "replay", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn five_scenes_give_pooled_and_scene_rows() {
    let dir = tempfile::tempdir().unwrap();
    let summary = execute(&plan(&["1", "2", "3", "4", "5"], 0..5), &ScriptedBackend::new(), dir.path(), 5).unwrap();
    assert!(summary.complete());
    assert_eq!(summary.written.len(), 25);
    let report = summary.report.unwrap();
    assert_eq!(report.pooled.episodes, 25);
    assert_eq!(report.per_scene.len(), 5);
    assert!(report.per_scene.iter().all(|r| r.episodes == 5));
    assert_eq!(report.per_scene.iter().map(|r| r.successes).sum::<usize>(), report.pooled.successes);
    assert_eq!(fs::read_to_string(dir.path().join(REPORT_TSV)).unwrap().lines().count(), 7);

    // Re-rendering is a pure function of the traces.
    let again = render_report(dir.path()).unwrap();
    assert_eq!(again.report.to_tsv(), report.to_tsv());
}

#[test]
fn report_needs_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert!(render_report(dir.path()).is_err());
    let o = bench(&["report", "--in", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn truncated_trace_is_skipped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    execute(&plan(&["4"], 0..2), &ScriptedBackend::new(), dir.path(), 1).unwrap();
    let traces = dir.path().join(TRACE_DIR);
    let good = fs::read_to_string(traces.join("4_llamar_2_0.jsonl")).unwrap();
    let cut: String = good.lines().take(2).collect::<Vec<_>>().join("\n");
    fs::write(traces.join("4_llamar_2_7.jsonl"), cut).unwrap();

    let loaded = load_traces(dir.path()).unwrap();
    assert_eq!(loaded.traces.len(), 2);
    assert_eq!(loaded.skipped.len(), 1);
    let o = bench(&["report", "--in", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("skipped 1 input(s)") && text.contains("4_llamar_2_7.jsonl"), "{text}");
}

#[test]
fn schema_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    execute(&plan(&["4"], 0..1), &ScriptedBackend::new(), dir.path(), 1).unwrap();
    let path = dir.path().join(TRACE_DIR).join("4_llamar_2_0.jsonl");
    let text = fs::read_to_string(&path).unwrap().replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    fs::write(&path, text).unwrap();
    let err = render_report(dir.path()).err().unwrap();
    assert!(format!("{err:#}").contains("schema version 99"), "{err:#}");
}

#[test]
fn validate_scene_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        "scene_id = \"s\"\nn_agents = 1\nseed = 0\n[grid]\nrows = 5\ncols = 5\n\n[[deposits]]\nname = \"Deposit_1\"\nposition = [2, 2]\n",
    )
    .unwrap();
    let o = bench(&["validate-scene", "--config", good.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "scene_id = \"s\"\nn_agents = 1\nseed = 0\n[grid]\nrows = 5\ncols = 5\n\n[[deposits]]\nname = \"Deposit_1\"\nposition = [9, 2]\n",
    )
    .unwrap();
    let o = bench(&["validate-scene", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside the grid"));
}

#[test]
fn scene_files_take_seed_and_agent_count() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("open.toml");
    fs::write(
        &scene,
        concat!(
            "scene_id = \"open\"\nn_agents = 1\nseed = 0\n[grid]\nrows = 8\ncols = 8\n\n",
            "[[fires]]\nname = \"FireA_1\"\nclass = \"A\"\nsources = [[6, 6]]\nregion = [[6, 6], [6, 5]]\n\n",
            "[[reservoirs]]\nname = \"WaterReservoir_1\"\nsupply = \"water\"\nposition = [1, 6]\n\n",
            "[[deposits]]\nname = \"Deposit_1\"\nposition = [2, 2]\n"
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = bench(&[
        "run", "--scenes", scene.to_str().unwrap(), "--seeds", "3,4", "--agents", "2", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join(TRACE_DIR).join("open_llamar_2_3.jsonl").exists());
    assert!(out.join(TRACE_DIR).join("open_llamar_2_4.jsonl").exists());
}
