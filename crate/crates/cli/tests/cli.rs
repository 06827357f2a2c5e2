#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use occupancy::evaluate::EvaluationReport;
use occupancy::{InhomogeneousModel, TraceArchive};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Runs the binary inside `dir` so relative paths, and hence echoed
/// configs, are the same across runs.
fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_occupancy"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Asserts a single `error[code]: ...` line on stderr and a nonzero exit.
fn fails_with(out: &Output, code: &str) -> String {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with(&format!("error[{code}]: ")), "{stderr}");
    stderr
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn archive(dir: &Path, name: &str) -> TraceArchive {
    TraceArchive::from_json(&read(dir, name)).unwrap()
}

fn write_model(dir: &Path, name: &str, model: &InhomogeneousModel) {
    std::fs::write(dir.join(name), model.to_json()).unwrap();
}

#[test]
fn ingest_recognizes_both_layouts() {
    let tmp = TempDir::new().unwrap();
    let wide = fixture("wide_nine_zones.csv");
    ok(tmp.path(), &["ingest", "-i", wide.to_str().unwrap(), "--format", "wide-csv", "-o", "wide.json"]);
    let a = archive(tmp.path(), "wide.json");
    assert_eq!(a.zones().len(), 9);
    let diag = a.diagnostics.unwrap();
    assert_eq!(diag.zones.len(), 9);
    assert!(diag.zones.iter().all(|z| z.days == 10 && z.partial_days.is_empty()));

    let event = fixture("event_six_offices.csv");
    ok(tmp.path(), &["ingest", "-i", event.to_str().unwrap(), "--format", "event-csv", "-o", "event.json"]);
    let a = archive(tmp.path(), "event.json");
    assert_eq!(a.zones().len(), 6);
    assert_eq!(a.config["format"], "event-csv");
    assert_eq!(a.config["gap_threshold"], 1440);
}

#[test]
fn ingest_errors_carry_codes_and_context() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let err = fails_with(&run(tmp.path(), &["ingest", "-i", "empty.csv", "-o", "a.json"]), "EmptyInput");
    assert!(err.contains("empty.csv"), "{err}");
    assert!(!tmp.path().join("a.json").exists());

    std::fs::write(tmp.path().join("bad.csv"), "timestamp,zone,value\n2015-04-13 08:00,A,1\nyesterday,A,0\n").unwrap();
    let err = fails_with(&run(tmp.path(), &["ingest", "-i", "bad.csv", "-o", "a.json"]), "UnparseableTimestamp");
    assert!(err.contains("row 3"), "{err}");

    fails_with(&run(tmp.path(), &["ingest", "-i", "missing.csv", "-o", "a.json"]), "Io");
    fails_with(&run(tmp.path(), &["ingest", "-o", "a.json"]), "MissingSetting");
    fails_with(&run(tmp.path(), &["ingest", "--grid-step", "many"]), "Usage");
}

#[test]
fn train_builds_slot_models_and_rejects_too_many_states() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_model(d, "truth.json", &common::meeting_count_model());
    ok(d, &["generate", "-m", "truth.json", "--days", "40", "--seed", "3", "-o", "counts.json"]);
    ok(d, &["train", "-a", "counts.json", "--states", "6", "-o", "model.json"]);
    let model = InhomogeneousModel::from_json(&read(d, "model.json")).unwrap();
    assert_eq!(model.slots.len(), 48);
    assert_eq!(model.n_states(), 6);
    assert_eq!(model.metadata.config["states"], 6);

    ok(d, &["train", "-a", "counts.json", "--states", "8", "--max-count", "7", "-o", "wide.json"]);
    fails_with(&run(d, &["train", "-a", "counts.json", "--states", "8", "-o", "x.json"]), "TooFewCounts");
    fails_with(&run(d, &["train", "-a", "counts.json", "--zone", "lobby", "-o", "x.json"]), "UnknownZone");

    write_model(d, "presence.json", &common::office_presence_model());
    ok(d, &["generate", "-m", "presence.json", "--days", "20", "-o", "binary.json"]);
    ok(d, &["train", "-a", "binary.json", "--states", "2", "-o", "p.json"]);
    let model = InhomogeneousModel::from_json(&read(d, "p.json")).unwrap();
    assert_eq!(model.binning.bins(), vec![vec![0], vec![1]]);
}

#[test]
fn generate_is_deterministic_and_round_trips_through_ingest() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_model(d, "truth.json", &common::meeting_count_model());
    let args = ["generate", "-m", "truth.json", "--days", "250", "--seed", "42", "-o", "gen.json", "--csv", "gen.csv"];
    ok(d, &args);
    let first = (read(d, "gen.json"), read(d, "gen.csv"));
    ok(d, &args);
    assert_eq!(first, (read(d, "gen.json"), read(d, "gen.csv")));

    let generated = archive(d, "gen.json");
    assert_eq!(generated.traces.len(), 250);
    ok(d, &["ingest", "-i", "gen.csv", "-o", "back.json"]);
    assert_eq!(archive(d, "back.json").traces, generated.traces);

    ok(d, &["generate", "-m", "truth.json", "--days", "30", "--output-step", "15", "-o", "w.json", "--csv", "w.csv", "--format", "wide-csv"]);
    ok(d, &["ingest", "-i", "w.csv", "--format", "wide-csv", "--grid-step", "15", "-o", "wback.json"]);
    assert_eq!(archive(d, "wback.json").traces, archive(d, "w.json").traces);
}

#[test]
fn generate_rejects_broken_models() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let json = common::office_presence_model().to_json();
    std::fs::write(d.join("renamed.json"), json.replacen("\"holding_rate\"", "\"rates\"", 1)).unwrap();
    let err = fails_with(&run(d, &["generate", "-m", "renamed.json", "-o", "x.json"]), "SchemaError");
    assert!(err.contains("holding_rate"), "{err}");

    std::fs::write(d.join("future.json"), json.replacen("\"schema_version\": 1", "\"schema_version\": 7", 1)).unwrap();
    fails_with(&run(d, &["generate", "-m", "future.json", "-o", "x.json"]), "SchemaVersion");

    let mut unresolved = common::office_presence_model();
    unresolved.conflicts_resolved = false;
    write_model(d, "unresolved.json", &unresolved);
    fails_with(&run(d, &["generate", "-m", "unresolved.json", "-o", "x.json"]), "UnresolvedModel");
}

fn measured_and_predicted(d: &Path) {
    write_model(d, "truth.json", &common::office_presence_model());
    ok(d, &["generate", "-m", "truth.json", "--days", "60", "--seed", "1", "-o", "measured.json"]);
    ok(d, &["train", "-a", "measured.json", "-o", "model.json"]);
    ok(d, &["generate", "-m", "model.json", "--days", "60", "--seed", "2", "-o", "predicted.json"]);
}

#[test]
fn evaluating_an_ensemble_against_itself_is_clean() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    measured_and_predicted(d);
    ok(d, &["evaluate", "--measured", "measured.json", "--predicted", "measured.json", "--states", "2", "-o", "self.json", "--strict"]);
    let report: EvaluationReport = serde_json::from_str(&read(d, "self.json")).unwrap();
    assert!(report.timeseries_njsd.iter().all(|&v| v == 0.0));
    assert!(report.duration_njsd().iter().all(|v| *v == Some(0.0)));
    assert!(report.flags.is_empty());
}

#[test]
fn strict_mode_turns_flags_into_an_exit_code() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    measured_and_predicted(d);
    let base = ["evaluate", "--measured", "measured.json", "--predicted", "predicted.json", "--model", "model.json", "-o", "r.json"];
    ok(d, &[&base[..], &["--threshold", "0"]].concat());
    let out = run(d, &[&base[..], &["--threshold", "0", "--strict"]].concat());
    assert_eq!(out.status.code(), Some(2));
    fails_with(&out, "FlagsRaised");
    // The report is still written.
    let report: EvaluationReport = serde_json::from_str(&read(d, "r.json")).unwrap();
    assert!(!report.flags.is_empty());
    fails_with(&run(d, &[&base[..], &["--threshold=-1"]].concat()), "Config");
}

#[test]
fn evaluate_writes_a_tidy_csv() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    measured_and_predicted(d);
    ok(d, &["evaluate", "--measured", "measured.json", "--predicted", "predicted.json", "--model", "model.json", "-o", "r.json", "--csv", "r.csv"]);
    let csv = read(d, "r.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("minute,statistic,value"));
    assert_eq!(csv.lines().filter(|l| l.contains(",njsd,")).count(), 1440);
    assert!(csv.contains("duration_njsd_state_1"));
}

#[test]
fn artifacts_reproduce_from_their_embedded_config() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    measured_and_predicted(d);
    ok(d, &["evaluate", "--measured", "measured.json", "--predicted", "predicted.json", "--model", "model.json", "-o", "r.json", "--csv", "r.csv"]);
    let event = fixture("event_six_offices.csv");
    ok(d, &["ingest", "-i", event.to_str().unwrap(), "--gap-threshold", "none", "-o", "a.json"]);
    for name in ["a.json", "model.json", "predicted.json", "r.json"] {
        let before = read(d, name);
        let cmd = serde_json::from_str::<serde_json::Value>(&before).unwrap();
        let config = cmd.get("config").or_else(|| cmd["metadata"].get("config")).unwrap();
        let command = config["command"].as_str().unwrap().to_string();
        ok(d, &[&command, "--config", name]);
        assert_eq!(read(d, name), before, "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_model(d, "truth.json", &common::office_presence_model());
    std::fs::write(d.join("run.toml"), "model = \"truth.json\"\noutput = \"g.json\"\ndays = 7\nseed = 5\n").unwrap();
    ok(d, &["generate", "--config", "run.toml"]);
    let a = archive(d, "g.json");
    assert_eq!((a.traces.len(), &a.config["seed"]), (7, &serde_json::json!(5)));
    ok(d, &["generate", "--config", "run.toml", "--days", "3"]);
    let b = archive(d, "g.json");
    assert_eq!(b.traces.len(), 3);
    assert_eq!(b.traces[..], a.traces[..3]);

    std::fs::write(d.join("bad.toml"), "days = \"many\"\n").unwrap();
    fails_with(&run(d, &["generate", "--config", "bad.toml"]), "Config");
    std::fs::write(d.join("broken.toml"), "days = \n").unwrap();
    fails_with(&run(d, &["generate", "--config", "broken.toml"]), "Config");
}

/// Measured data from a known model, then the whole pipeline from CSV.
fn pipeline_recovers(truth: InhomogeneousModel, states: &str) -> serde_json::Value {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    write_model(d, "truth.json", &truth);
    ok(d, &["generate", "-m", "truth.json", "--days", "250", "--seed", "1000", "-o", "m.json", "--csv", "measured.csv"]);
    let out = ok(d, &["pipeline", "-i", "measured.csv", "--out-dir", "run", "--states", states, "--days", "250", "--seed", "2000", "--strict"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("PASS "), "{stdout}");
    let zone_dir = d.join("run/zones").join(&truth.zone_id);
    for f in ["model.json", "predicted.json", "report.json", "report.csv"] {
        assert!(zone_dir.join(f).exists(), "{f}");
    }
    serde_json::from_str(&read(d, "run/summary.json")).unwrap()
}

#[test]
fn pipeline_clears_every_flag_on_synthetic_presence_data() {
    let summary = pipeline_recovers(common::office_presence_model(), "2");
    assert_eq!(summary["passed"], true);
    assert!(summary["zones"][0]["max_timeseries_njsd"].as_f64().unwrap() <= 0.15);
}

#[test]
fn pipeline_clears_every_flag_on_synthetic_count_data() {
    let summary = pipeline_recovers(common::meeting_count_model(), "4");
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["zones"][0]["flags"], 0);
}

#[test]
fn pipeline_strict_fails_on_short_measurements() {
    let tmp = TempDir::new().unwrap();
    let event = fixture("event_six_offices.csv");
    let out = run(tmp.path(), &["pipeline", "-i", event.to_str().unwrap(), "--out-dir", "run", "--zone", "Office 3", "--days", "50", "--strict"]);
    assert_eq!(out.status.code(), Some(2));
    fails_with(&out, "FlagsRaised");
    let summary: serde_json::Value = serde_json::from_str(&read(tmp.path(), "run/summary.json")).unwrap();
    assert_eq!(summary["zones"].as_array().unwrap().len(), 1);
    assert_eq!(summary["zones"][0]["zone_id"], "Office 3");
}
