use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_corrkit"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn corrkit")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["characterize", "--no-such-flag"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(run(&["characterize"], dir.path()).status.code(), Some(1));
    let missing = run(&["characterize", "--counts", "missing.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));

    std::fs::write(dir.path().join("seq.txt"), "0\n1\n").unwrap();
    std::fs::write(dir.path().join("clicks.txt"), "0,1,0\n0,0,0\n").unwrap();
    let unsorted = run(&["characterize", "--seq", "seq.txt", "--clicks", "clicks.txt", "--reps", "2"], dir.path());
    assert_eq!(unsorted.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unsorted.stderr).contains("line 2"));
}

#[test]
fn characterize_reproduces_signal_column() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["characterize", "--counts", fixture("bb84_s_column.csv").to_str().unwrap()], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# manifest: "));
    let rows = csv_rows(&text);
    assert_eq!(rows[0], ["pattern", "G", "T", "C", "R", "se", "low_confidence"]);
    let ss = rows.iter().find(|r| r[0] == "S-S").unwrap();
    let r: f64 = ss[4].parse().unwrap();
    assert!((r - 9101922.0 / 4.5495e10).abs() < 1e-9);
    let vs = rows.iter().find(|r| r[0] == "V-S").unwrap();
    assert!((vs[4].parse::<f64>().unwrap() - 448412.0 / 2.325e9).abs() < 1e-9);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("S: max"), "{stderr}");
}

#[test]
fn crosscycle_table_mode() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["crosscycle", "--table", fixture("mdi_tables.csv").to_str().unwrap(), "--nb", "160000", "--out", "cc.csv"],
        dir.path(),
    );
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("cc.csv")).unwrap());
    let rate = |p: &str| -> f64 { rows.iter().find(|r| r[0] == p).unwrap().last().unwrap().parse().unwrap() };
    let diff = rate("s-s") - rate("omega-s");
    assert!((diff - 1.2e-5).abs() < 0.1e-5, "{diff}");
}

#[test]
fn simulate_then_characterize_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = |tag: &str, threads: &str| {
        ok(
            &[
                "--threads", threads, "simulate", "bb84", "--length", "500", "--reps", "40", "--eta", "0.5", "--seed", "11",
                "--epsilon", "S-D1=0.05", "--seq-out", &format!("seq{tag}.txt"), "--clicks-out", &format!("clicks{tag}.txt"),
            ],
            d,
        );
    };
    sim("a", "1");
    sim("b", "4");
    let read = |f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read("seqa.txt"), read("seqb.txt"));
    assert_eq!(read("clicksa.txt"), read("clicksb.txt"));
    assert!(d.join("clicksa.txt.manifest.json").exists());

    for tag in ["a", "b"] {
        ok(
            &[
                "characterize", "--seq", &format!("seq{tag}.txt"), "--clicks", &format!("clicks{tag}.txt"), "--reps", "40",
                "--out", &format!("rates{tag}.csv"),
            ],
            d,
        );
    }
    // the manifest line names the input files, so compare the bodies
    let body = |f: &str| String::from_utf8(read(f)).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    assert_eq!(body("ratesa.csv"), body("ratesb.csv"));
}

#[test]
fn manifest_tracks_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(fixture("bb84_s_column.csv"), d.join("in.csv")).unwrap();
    let header = |d: &Path| {
        let out = ok(&["characterize", "--counts", "in.csv"], d);
        String::from_utf8(out.stdout).unwrap().lines().next().unwrap().to_string()
    };
    let first = header(d);
    assert_eq!(first, header(d));
    let mut text = std::fs::read_to_string(d.join("in.csv")).unwrap();
    text = text.replace("9101922", "9101923");
    std::fs::write(d.join("in.csv"), text).unwrap();
    assert_ne!(first, header(d));
}

#[test]
fn report_bars_has_four_groups() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["report", "bars", "--rates", fixture("bb84_full.csv").to_str().unwrap(), "--svg", "bars.svg", "--csv", "bars.csv"],
        dir.path(),
    );
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("bars.csv")).unwrap());
    let mut labels: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    labels.dedup();
    assert_eq!(labels, ["V", "D1", "D2", "S"]);
    let svg = std::fs::read_to_string(dir.path().join("bars.svg")).unwrap();
    assert_eq!(svg.matches("<rect x=").count(), 16);
}

#[test]
fn curve_writes_one_series_per_delta() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["curve", "--deltas", "0,0.63", "--max-km", "100", "--step", "10", "--out", "curve.csv", "--svg", "curve.svg"],
        dir.path(),
    );
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("curve.csv")).unwrap());
    assert_eq!(rows[0], ["distance_km", "delta=0", "delta=0.63"]);
    assert_eq!(rows.len(), 12);
    for r in &rows[1..] {
        let (a, b): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!(b <= a);
    }
    ok(&["report", "curve", "--input", "curve.csv", "--svg", "again.svg"], dir.path());
    let svg = std::fs::read_to_string(dir.path().join("again.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn security_reports_delta_for_block_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "security", "--rates", fixture("bb84_full.csv").to_str().unwrap(), "--split", "20", "--eta", "8.5965e-4",
            "--q", "0.022", "--tau", "5", "--out", "sec.json",
        ],
        d,
    );
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("sec.json")).unwrap()).unwrap();
    let delta = v["delta_max"].as_f64().unwrap();
    assert!(delta > 0.0 && delta.is_finite());
    assert_eq!(v["bounds"].as_array().unwrap().len(), 16);
    assert!(v["manifest"].as_str().unwrap().len() == 64);
}

#[test]
fn linearity_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["stats", "linearity", "--eta", "0.01"], dir.path());
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows[0], ["m", "P", "fit", "deviation"]);
    assert!(rows[1..].iter().all(|r| r[3].parse::<f64>().unwrap() < 0.006));
}
