use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn emptywave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emptywave"))
        .args(args)
        .env_remove("EMPTYWAVE_SAMPLES")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows (header excluded) of a CSV with `#` provenance lines.
fn data_rows(text: &str) -> Vec<csv::StringRecord> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.records().map(|x| x.unwrap()).collect()
}

fn header(text: &str) -> Vec<String> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.headers().unwrap().iter().map(String::from).collect()
}

#[test]
fn run_writes_one_row_per_model_and_statistic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = emptywave(&[
        "run",
        "--experiment",
        "croca_full",
        "--model",
        "all",
        "--delta-theta",
        "0",
        "--delta-phi",
        "0",
        "--samples",
        "20000",
        "--seed",
        "42",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(header(&text), ["experiment", "model", "statistic", "value", "stderr"]);
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3 * 7);
    assert!(text.contains("# seed = 42"));
    assert!(text.contains("# samples = 20000"));
    let ci_p2 = rows
        .iter()
        .find(|r| &r[1] == "CI" && &r[2] == "P(2|3 only)")
        .unwrap();
    assert_eq!(&ci_p2[3], "1");
    // the empty-wave model is flagged on the tap-conditioned statistic
    assert!(text.contains("# divergence") && text.contains("P(2|3 only)"));
}

#[test]
fn hom_sweep_has_its_minimum_at_zero_delay() {
    let o = emptywave(&[
        "sweep", "--experiment", "hom", "--param", "tau", "--from", "-4", "--to", "4", "--steps", "65", "--model", "CI",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(header(&text).last().unwrap(), "tau");
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 65);
    let (imin, _) = rows
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(&rows[imin][5], "0");
    assert_eq!(imin, 32);
}

#[test]
fn laser_comparison_is_identical_across_models() {
    let o = emptywave(&["compare", "--experiment", "laser_calibration", "--alpha", "1.0", "--analytic"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(lines.len(), 4);
    for l in lines {
        let cols: Vec<&str> = l.split_whitespace().collect();
        // statistic name is two words: "mean nK"
        assert_eq!(&cols[2..5], ["0.25", "0.25", "0.25"], "{l}");
        assert_eq!(cols[5], "-");
    }
}

#[test]
fn dumped_config_reproduces_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let args = [
        "sweep",
        "--experiment",
        "appendix1",
        "--param",
        "delta_theta",
        "--from",
        "0",
        "--to",
        "6",
        "--steps",
        "5",
        "--samples",
        "3000",
        "--seed",
        "7",
    ];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", first.to_str().unwrap()]);
    assert!(emptywave(&with_out).status.success());

    let mut dump = args.to_vec();
    dump.push("--dump-config");
    let o = emptywave(&dump);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, o.stdout).unwrap();

    let second = dir.path().join("b.csv");
    let o = emptywave(&["sweep", "--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn malformed_config_names_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "experiment = \"mz\"\nseed = 1\n\n[params]\ndelta_psi = 0.3\n").unwrap();
    let o = emptywave(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("delta_psi") && e.contains("line 5"), "{e}");
    assert!(o.stdout.is_empty());
}

#[test]
fn validation_errors_exit_with_one() {
    for args in [
        &["run", "--experiment", "fig9"][..],
        &["run", "--experiment", "mz", "--delta-theta", "pi"],
        &["run", "--experiment", "mz", "--model", "Copenhagen"],
        &["run", "--experiment", "hom", "--sigma", "-1"],
        &["run", "--experiment", "hom", "--samples", "0"],
        &["sweep", "--experiment", "hom", "--param", "sigma", "--from", "0", "--to", "1", "--steps", "3"],
        &["run", "--bogus-flag"],
    ] {
        let o = emptywave(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn engine_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let o = emptywave(&["run", "--experiment", "laser_calibration", "--trajectories", t.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn environment_sets_the_default_sample_count() {
    let o = Command::new(env!("CARGO_BIN_EXE_emptywave"))
        .args(["run", "--experiment", "generator", "--model", "Bohm3ND"])
        .env("EMPTYWAVE_SAMPLES", "1234")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("# samples = 1234"));
    let o = Command::new(env!("CARGO_BIN_EXE_emptywave"))
        .args(["run", "--experiment", "generator", "--samples", "99", "--model", "CI"])
        .env("EMPTYWAVE_SAMPLES", "1234")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("# samples = 99"));
}

#[test]
fn json_output_parses() {
    let o = emptywave(&[
        "sweep", "--experiment", "mz", "--param", "delta_phi", "--from", "0", "--to", "6", "--steps", "9", "--model",
        "CI", "--format", "json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 18);
    assert_eq!(v["provenance"]["experiment"], "mz");
    assert!(v["rows"][0]["delta_phi"].is_number());
    assert!(!v["visibilities"].as_array().unwrap().is_empty());
}

#[test]
fn trajectories_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let o = emptywave(&[
        "run",
        "--experiment",
        "croca_full",
        "--model",
        "CI",
        "--trajectories",
        t.to_str().unwrap(),
        "--keep",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(Path::new(&t)).unwrap();
    assert!(text.starts_with("sample,time,photon,arm,position,detector"));
    let samples: std::collections::BTreeSet<&str> =
        text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(samples.len(), 3);
}

#[test]
fn list_names_every_experiment() {
    let o = emptywave(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for e in ["hom", "mz", "croca_full", "appendix1", "laser_calibration", "generator"] {
        assert!(text.lines().any(|l| l == e), "{e}");
    }
}
