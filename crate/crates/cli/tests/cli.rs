use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msgnn::image::{load_png, procedural_scene, save_png};
use msgnn::network::{Msgnn, MsgnnConfig};
use tempfile::TempDir;

fn msgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msgnn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = msgnn(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command and returns its single stderr line.
fn fails(args: &[&str]) -> String {
    let out = msgnn(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error:")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    lines[0].to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    fs::write(
        &path,
        "# small enough for a smoke run\nn=1\nm=1\nchannels=4\nk=2\ncrop=16\nbatch=2\nepochs=1\nmilestones=none\n",
    )
    .unwrap();
    path
}

/// Two 24x24 clean scenes and their rainy pairs.
fn dataset(dir: &Path) -> PathBuf {
    let clean = dir.join("clean");
    ok(&[
        "gen-clean",
        "--out-dir",
        p(&clean),
        "--count",
        "2",
        "--size",
        "24",
        "--seed",
        "3",
    ]);
    let data = dir.join("data");
    ok(&["synth", "--clean-dir", p(&clean), "--out-dir", p(&data), "--seed", "5"]);
    data
}

fn zero_tail_checkpoint(dir: &Path) -> PathBuf {
    let mut model = Msgnn::<f32>::new(MsgnnConfig {
        subnetworks: 1,
        blocks: 1,
        channels: 4,
        k: 2,
        ..Default::default()
    })
    .unwrap();
    model.zero_tail();
    let path = dir.join("zero.ckpt");
    model.save(&path).unwrap();
    path
}

#[test]
fn synth_writes_pairs_and_manifest_deterministically() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path());
    let manifest = fs::read_to_string(data.join("manifest.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = manifest.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], ["0000", "0.02", "10", "9", "0.8", "5"]);
    assert_eq!(rows[1][5], "6");
    for sub in ["rain", "norain"] {
        assert_eq!(fs::read_dir(data.join(sub)).unwrap().count(), 2);
    }

    let again = dir.path().join("again");
    ok(&[
        "synth",
        "--clean-dir",
        p(&dir.path().join("clean")),
        "--out-dir",
        p(&again),
        "--seed",
        "5",
    ]);
    for f in ["rain/0000.png", "rain/0001.png", "norain/0001.png", "manifest.tsv"] {
        assert_eq!(fs::read(data.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn faint_rain_quantizes_to_the_clean_image() {
    let dir = TempDir::new().unwrap();
    let clean = dir.path().join("clean");
    ok(&["gen-clean", "--out-dir", p(&clean), "--count", "2", "--size", "20"]);
    let out = dir.path().join("faint");
    ok(&[
        "synth",
        "--clean-dir",
        p(&clean),
        "--out-dir",
        p(&out),
        "--count",
        "3",
        "--intensity",
        "1e-6",
    ]);
    for name in ["0000", "0001", "0002"] {
        let r = load_png(out.join(format!("rain/{name}.png"))).unwrap();
        let c = load_png(out.join(format!("norain/{name}.png"))).unwrap();
        let worst = r
            .pixels()
            .iter()
            .zip(c.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(worst <= 1.0 / 255.0 + 1e-6, "{name}: {worst}");
    }
}

#[test]
fn synth_errors_carry_paths() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope");
    let line = fails(&["synth", "--clean-dir", p(&missing), "--out-dir", p(dir.path())]);
    assert!(
        line.starts_with("error:missing-file:") && line.contains("nope"),
        "{line}"
    );
    let line = fails(&[
        "synth",
        "--clean-dir",
        p(dir.path()),
        "--out-dir",
        p(dir.path()),
        "--density",
        "0.5",
    ]);
    assert!(line.starts_with("error:contract:"), "{line}");
}

#[test]
fn train_smoke_then_eval_and_derain() {
    let dir = TempDir::new().unwrap();
    let data = dataset(dir.path());
    let cfg = tiny_config(dir.path());
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(&run),
        "--seed",
        "1",
    ]);
    let metrics = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    let fields: Vec<&str> = metrics.trim().split('\t').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0], "1");
    let loss: f64 = fields[1].parse().unwrap();
    assert!((-1.0..=1.0).contains(&loss));
    let ckpt = run.join("checkpoint.ckpt");
    assert!(Msgnn::load(&ckpt).is_ok());
    assert!(fs::read_to_string(run.join("config.txt"))
        .unwrap()
        .contains("channels=4"));

    // A second fresh run must not append to the first one's logs.
    let line = fails(&["train", "--data", p(&data), "--config", p(&cfg), "--out", p(&run)]);
    assert!(line.starts_with("error:contract:"), "{line}");

    let report = dir.path().join("report/eval");
    let text = ok(&[
        "eval",
        "--data",
        p(&data),
        "--checkpoint",
        p(&ckpt),
        "--report",
        p(&report),
    ]);
    let csv = fs::read_to_string(report.with_extension("csv")).unwrap();
    assert_eq!(fs::read_to_string(report.with_extension("txt")).unwrap(), text);
    // Every CSV cell appears verbatim in the text table.
    for cell in csv.lines().skip(1).flat_map(|l| l.split(',')) {
        assert!(text.contains(cell), "{cell} missing from\n{text}");
    }
    assert!(csv.lines().last().unwrap().starts_with("mean,"));

    let img = data.join("rain/0001.png");
    let out = dir.path().join("out.png");
    let grid = dir.path().join("grid.png");
    let rain = dir.path().join("rain.png");
    let args = [
        "derain",
        "--input",
        p(&img),
        "--checkpoint",
        p(&ckpt),
        "--output",
        p(&out),
    ];
    ok(&[&args[..], &["--grid", p(&grid), "--residual", p(&rain)]].concat());
    let first = fs::read(&out).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(&out).unwrap(), "derain is not byte-identical on rerun");
    let (o, g) = (load_png(&out).unwrap(), load_png(&grid).unwrap());
    assert_eq!((o.height(), o.width()), (24, 24));
    assert_eq!((g.height(), g.width()), (24, 72));
    assert!(rain.exists());
}

#[test]
fn train_rejects_bad_configuration_before_compute() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "n=1\nlearning_rate=0.1\n").unwrap();
    // The dataset path does not exist; the config error must win.
    let missing = dir.path().join("no-data");
    let out = dir.path().join("run");
    let line = fails(&["train", "--data", p(&missing), "--config", p(&cfg), "--out", p(&out)]);
    assert!(
        line.starts_with("error:config:") && line.contains("learning_rate"),
        "{line}"
    );
    let line = fails(&["train", "--data", p(&missing), "--out", p(&out), "--set", "crop=18"]);
    assert!(line.starts_with("error:config:") && line.contains("crop"), "{line}");
    assert!(!out.join("metrics.tsv").exists());
}

#[test]
fn zero_tail_checkpoint_is_identity() {
    let dir = TempDir::new().unwrap();
    let ckpt = zero_tail_checkpoint(dir.path());
    let input = dir.path().join("in.png");
    save_png(&procedural_scene(19, 26, 4), &input).unwrap();
    let out = dir.path().join("out.png");
    ok(&[
        "derain",
        "--input",
        p(&input),
        "--checkpoint",
        p(&ckpt),
        "--output",
        p(&out),
    ]);
    let (a, b) = (load_png(&input).unwrap(), load_png(&out).unwrap());
    assert_eq!((b.height(), b.width()), (19, 26));
    let worst = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max);
    assert!(worst <= 1.0 / 255.0, "{worst}");
}

#[test]
fn eval_of_clean_against_itself_reports_inf() {
    let dir = TempDir::new().unwrap();
    let ckpt = zero_tail_checkpoint(dir.path());
    let data = dir.path().join("same");
    for (i, seed) in [11u64, 12].iter().enumerate() {
        let img = procedural_scene(20, 20, *seed);
        save_png(&img, data.join(format!("rain/{i}.png"))).unwrap();
        save_png(&img, data.join(format!("norain/{i}.png"))).unwrap();
    }
    let text = ok(&["eval", "--data", p(&data), "--checkpoint", p(&ckpt)]);
    let mean = text.lines().last().unwrap();
    let cells: Vec<&str> = mean.split_whitespace().collect();
    assert_eq!(cells, ["mean", "inf", "1.0000", "inf", "1.0000"]);
}

#[test]
fn checkpoint_config_mismatch_is_reported() {
    let dir = TempDir::new().unwrap();
    let ckpt = zero_tail_checkpoint(dir.path());
    let cfg = dir.path().join("other.cfg");
    fs::write(&cfg, "n=1\nm=1\nchannels=8\nk=2\n").unwrap();
    let input = dir.path().join("in.png");
    save_png(&procedural_scene(16, 16, 1), &input).unwrap();
    let out = dir.path().join("o.png");
    let line = fails(&[
        "derain",
        "--input",
        p(&input),
        "--checkpoint",
        p(&ckpt),
        "--output",
        p(&out),
        "--config",
        p(&cfg),
    ]);
    assert!(
        line.starts_with("error:checkpoint:") && line.contains("channels"),
        "{line}"
    );
    let line = fails(&[
        "derain",
        "--input",
        p(&input),
        "--checkpoint",
        p(&dir.path().join("x")),
        "--output",
        p(&out),
    ]);
    assert!(line.starts_with("error:missing-file:"), "{line}");
}

fn total(text: &str) -> usize {
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("total"));
    last.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn params_report() {
    let text = ok(&["params"]);
    let default = total(&text);
    assert!((1_000_000..=10_000_000).contains(&default), "{default}");
    let parts: usize = text
        .lines()
        .skip(2)
        .filter(|l| !l.starts_with("total"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(parts, default);
    assert!(total(&ok(&["params", "--set", "n=2"])) < default);
    assert!(total(&ok(&["params", "--set", "m=4"])) < default);
}

#[test]
fn usage_errors_are_single_line() {
    let line = fails(&["ablate", "--data", ".", "--axis", "width"]);
    assert!(line.starts_with("error:usage:") && line.contains("width"), "{line}");
    let line = fails(&["frobnicate"]);
    assert!(line.starts_with("error:usage:"), "{line}");
    assert!(msgnn(&["--help"]).status.success());
}

fn table_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn ablation_tables_have_one_row_per_value() {
    let dir = TempDir::new().unwrap();
    let clean = dir.path().join("clean");
    ok(&["gen-clean", "--out-dir", p(&clean), "--count", "5", "--size", "20"]);
    let data = dir.path().join("data");
    ok(&["synth", "--clean-dir", p(&clean), "--out-dir", p(&data)]);
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("abl");
    for (axis, values, labels) in [
        ("k", Some("3,5"), vec!["3", "5"]),
        ("exemplar", None, vec!["on", "off"]),
    ] {
        let mut args = vec![
            "ablate",
            "--data",
            p(&data),
            "--axis",
            axis,
            "--budget",
            "2",
            "--config",
            p(&cfg),
        ];
        args.extend(["--out", p(&out)]);
        if let Some(v) = values {
            args.extend(["--values", v]);
        }
        let text = ok(&args);
        let csv = fs::read_to_string(out.join(format!("{axis}.csv"))).unwrap();
        assert_eq!(fs::read_to_string(out.join(format!("{axis}.txt"))).unwrap(), text);
        let rows = table_rows(&csv);
        assert_eq!(rows.len(), labels.len() + 1, "{csv}");
        assert_eq!(rows[0][0], "rainy input");
        for (row, label) in rows[1..].iter().zip(&labels) {
            assert_eq!(&row[0], label);
            for cell in &row[2..] {
                assert!(cell.parse::<f64>().unwrap().is_finite(), "{csv}");
            }
        }
    }
    let line = fails(&["ablate", "--data", p(&data), "--axis", "components", "--values", "m3"]);
    assert!(line.starts_with("error:config:") && line.contains("ECA"), "{line}");
}
