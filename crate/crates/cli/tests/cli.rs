use std::path::Path;
use std::process::{Command, Output};

fn pop(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pop"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pop(dir, args);
    assert!(
        out.status.success(),
        "`pop {}` failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// A four-probe synthetic world with fixtures for every mode.
fn world() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "synthetic",
            "--seeds",
            "5",
            "--n-train",
            "2",
            "--n-test",
            "2",
            "--export",
            "world",
        ],
    );
    dir
}

const PROBES: [&str; 4] = ["--probes", "world/probes.json", "--k-past", "16"];

fn mine(dir: &Path, extra: &[&str]) -> Output {
    let args: Vec<&str> = ["mine"]
        .iter()
        .chain(&PROBES)
        .chain(&["--fixtures", "world/fixtures", "--m-per-query", "6"])
        .chain(extra)
        .copied()
        .collect();
    pop(dir, &args)
}

fn stage(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let args: Vec<&str> = [cmd]
        .iter()
        .chain(&PROBES)
        .chain(&["--embeddings", "world/embeddings.csv"])
        .chain(extra)
        .copied()
        .collect();
    pop(dir, &args)
}

const SMALL_HEAD: [&str; 4] = ["--epochs", "10", "--hidden", "8"];

#[test]
fn mine_writes_one_manifest_entry_per_query() {
    let w = world();
    assert_eq!(code(&mine(w.path(), &[])), 0);
    let m = json(&w.path().join("out/mine/standard/manifest.json"));
    assert_eq!(m["queries"], 4 * 2 * 16);
    assert_eq!(m["records"], 4 * 2 * 16 * 6);
    let q = json(&w.path().join("out/mine/standard/probe-000/queries.json"));
    assert_eq!(q.as_array().unwrap().len(), 32);
    assert_eq!(q[0]["step_k"], 1);
    assert_eq!(q[0]["polarity"], "positive");
    assert_eq!(q[1]["polarity"], "negative");

    assert_eq!(code(&mine(w.path(), &["--mode", "no-expansion"])), 0);
    let m = json(&w.path().join("out/mine/no_expansion/manifest.json"));
    assert_eq!(m["queries"], 4 * 16);
}

#[test]
fn missing_fixtures_exit_with_missing_data_and_list_failures() {
    let w = world();
    let out = pop(
        w.path(),
        &[
            "mine",
            "--probes",
            "world/probes.json",
            "--k-past",
            "40",
            "--fixtures",
            "world/fixtures",
        ],
    );
    assert_eq!(code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("failed: probe `probe-000`"), "{stderr}");
    assert!(stderr.contains("no fixture"), "{stderr}");
}

#[test]
fn clean_is_deterministic_and_keep_noisy_prunes_nothing() {
    let w = world();
    ok(
        w.path(),
        &[
            "mine",
            "--probes",
            "world/probes.json",
            "--k-past",
            "16",
            "--fixtures",
            "world/fixtures",
            "--m-per-query",
            "6",
        ],
    );
    assert_eq!(code(&stage(w.path(), "clean", &SMALL_HEAD)), 0);
    let report = w.path().join("out/clean/standard/probe-001/report.json");
    let first = std::fs::read(&report).unwrap();
    assert_eq!(code(&stage(w.path(), "clean", &SMALL_HEAD)), 0);
    assert_eq!(first, std::fs::read(&report).unwrap());

    let keep: Vec<&str> = SMALL_HEAD.iter().chain(&["--keep-noisy"]).copied().collect();
    assert_eq!(code(&stage(w.path(), "clean", &keep)), 0);
    let r = json(&report);
    assert_eq!(r["keep_noisy"], true);
    assert_eq!(r["pruned_ids"].as_array().unwrap().len(), 0);
    assert_eq!(r["kept"], r["samples"]);
}

#[test]
fn signal_needs_the_clean_outputs() {
    let w = world();
    assert_eq!(code(&mine(w.path(), &[])), 0);
    let out = stage(w.path(), "signal", &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `pop clean` first"));

    // Raw variants read the mined records directly.
    assert_eq!(code(&stage(w.path(), "signal", &["--variant", "no-learning"])), 0);
    let csv = std::fs::read_to_string(w.path().join("out/signal/standard/no-learning/probe-002.csv")).unwrap();
    assert!(csv.starts_with("# variant=no-learning\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 17);

    assert_eq!(code(&stage(w.path(), "clean", &SMALL_HEAD)), 0);
    assert_eq!(code(&stage(w.path(), "signal", &["--variant", "pos-neg"])), 0);
    let csv = std::fs::read_to_string(w.path().join("out/signal/standard/pos-neg/probe-000.csv")).unwrap();
    assert!(csv.contains("week,value,value_neg\n"));
}

#[test]
fn incompatible_variant_and_mode_is_a_validation_error() {
    let w = world();
    let out = stage(w.path(), "signal", &["--mode", "no-expansion", "--variant", "pop"]);
    assert_eq!(code(&out), 2);
    let out = stage(w.path(), "clean", &["--mode", "no-expansion"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn synthesized_embeddings_are_saved_for_audit() {
    let w = world();
    assert_eq!(code(&mine(w.path(), &[])), 0);
    let args: Vec<&str> = ["--synth-embeddings", "3,8,6,1", "clean"]
        .iter()
        .chain(&PROBES)
        .chain(&SMALL_HEAD)
        .copied()
        .collect();
    ok(w.path(), &args);
    let table = std::fs::read_to_string(w.path().join("out/embeddings/standard.csv")).unwrap();
    assert!(table.starts_with("image_id,f0,"));
    assert!(table.lines().any(|l| l.starts_with("probe-000,")));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let w = world();
    std::fs::write(
        w.path().join("run.toml"),
        "probes = \"world/probes.json\"\nout_dir = \"from-config\"\n\n[expansion]\nk_past = 16\n\n[gateway]\nm_per_query = 3\nfixture_dir = \"world/fixtures\"\n",
    )
    .unwrap();
    ok(w.path(), &["--config", "run.toml", "mine"]);
    let m = json(&w.path().join("from-config/mine/standard/manifest.json"));
    assert_eq!(m["m_per_query"], 3);
    ok(
        w.path(),
        &[
            "--config",
            "run.toml",
            "--out-dir",
            "flag",
            "mine",
            "--m-per-query",
            "5",
        ],
    );
    let m = json(&w.path().join("flag/mine/standard/manifest.json"));
    assert_eq!(m["m_per_query"], 5);

    std::fs::write(w.path().join("bad.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(code(&pop(w.path(), &["--config", "bad.toml", "mine"])), 2);
}

#[test]
fn forecast_and_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("h.csv"), "index,value\n10,2\n11,4\n12,6\n").unwrap();
    let stdout = ok(
        d,
        &["forecast", "--series", "h.csv", "--method", "drift", "--horizon", "2"],
    );
    assert!(stdout.contains("drift"));
    assert_eq!(
        std::fs::read_to_string(d.join("out/forecast/h.drift.csv")).unwrap(),
        "index,value\n13,8\n14,10\n"
    );
    let side = json(&d.join("out/forecast/h.drift.json"));
    assert_eq!(side["result"]["values"][1], 10.0);

    std::fs::write(d.join("gt.csv"), "index,value\n13,10\n14,20\n15,30\n").unwrap();
    std::fs::write(d.join("pred.csv"), "index,value\n13,12\n14,18\n15,33\n").unwrap();
    let stdout = ok(d, &["evaluate", "--gt", "gt.csv", "--pred", "pred.csv"]);
    assert!(
        stdout.starts_with("wape,mae,mape,erp\n11.6666667,2.33333333,"),
        "{stdout}"
    );

    std::fs::write(d.join("late.csv"), "index,value\n14,12\n15,18\n16,33\n").unwrap();
    assert_eq!(code(&pop(d, &["evaluate", "--gt", "gt.csv", "--pred", "late.csv"])), 2);
}

#[test]
fn batch_rows_cover_every_series_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.csv"), "index,value\n0,1\n1,2\n2,3\n3,4\n4,5\n").unwrap();
    std::fs::write(
        d.join("batch.json"),
        r#"{"series":[{"id":"a","path":"a.csv"}],"methods":["mean","last","ar"],"horizon":1}"#,
    )
    .unwrap();
    ok(d, &["evaluate", "--manifest", "batch.json"]);
    let text = std::fs::read_to_string(d.join("out/evaluate/results.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "series_id,method,wape,mae,mape,erp,note");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("a,mean,"));
    // AR order selection needs more history; the row keeps the reason.
    assert!(lines[3].starts_with("a,ar,,,,,"), "{}", lines[3]);
}

#[test]
fn styles_write_factors_and_style_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("attrs.csv"),
        "attribute,i1,i2,i3\nfloral,1,0.9,0\nstriped,0,0.1,1\nlace,0.8,0.7,0.1\n",
    )
    .unwrap();
    std::fs::create_dir(d.join("pop")).unwrap();
    for (id, offset) in [("i1", 0.0), ("i2", 0.1), ("i3", 0.3)] {
        let mut csv = String::from("index,value\n");
        for w in 0..12 {
            csv.push_str(&format!("{},{}\n", 100 + w, offset + w as f64 * 0.05));
        }
        std::fs::write(d.join("pop").join(format!("{id}.csv")), csv).unwrap();
    }
    ok(
        d,
        &[
            "styles",
            "--attributes",
            "attrs.csv",
            "--k",
            "2",
            "--top-images",
            "2",
            "--pop-dir",
            "pop",
            "--weeks-per-year",
            "2",
        ],
    );
    let summary = json(&d.join("out/styles/summary.json"));
    assert_eq!(summary["k"], 2);
    assert_eq!(summary["styles"][0]["attributes"].as_array().unwrap().len(), 2);
    assert!(std::fs::read_to_string(d.join("out/styles/W.csv"))
        .unwrap()
        .starts_with("attribute,style_0,style_1\n"));
    let style = std::fs::read_to_string(d.join("out/styles/pop/style_0.csv")).unwrap();
    assert_eq!(style.lines().count(), 1 + 6);
    let table = std::fs::read_to_string(d.join("out/styles/forecast.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 6);
}

#[test]
fn bad_flags_and_missing_inputs_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&pop(
            d,
            &["forecast", "--series", "nope.csv", "--method", "mean", "--horizon", "1"]
        )),
        3
    );
    std::fs::write(d.join("h.csv"), "index,value\n0,1\n1,2\n").unwrap();
    assert_eq!(
        code(&pop(
            d,
            &["forecast", "--series", "h.csv", "--method", "bogus", "--horizon", "1"]
        )),
        2
    );
    assert_eq!(code(&pop(d, &["mine", "--probes", "missing.json"])), 2);
    assert_eq!(
        code(&pop(d, &["--synth-embeddings", "1,2", "forecast", "--series", "h.csv"])),
        2
    );
    assert_eq!(code(&pop(d, &["no-such-command"])), 2);
}

#[test]
fn exported_config_drives_every_stage() {
    let dir = world();
    let d = dir.path();
    for cmd in ["mine", "clean", "signal"] {
        ok(d, &["--config", "world/pop.toml", cmd]);
    }
    // Outputs land relative to the working directory, not the config.
    let series = d.join("out/signal/standard/pop/probe-000.csv");
    let text = std::fs::read_to_string(series).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 16);
}
