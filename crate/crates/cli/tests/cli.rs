use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn cseg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cseg"))
        .args(args)
        .current_dir(dir)
        .env_remove("CSEG_SEED")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cseg(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Small enough to train in a few seconds.
const QUICK: &[&str] = &[
    "--set", "synth.count=6",
    "--set", "train.stage1.epochs=2",
    "--set", "train.stage2.epochs=2",
    "--set", "seed=4",
];

fn quick(args: &[&str]) -> Vec<String> {
    args.iter().chain(QUICK).map(|s| s.to_string()).collect()
}

fn ok_quick(dir: &Path, args: &[&str]) -> String {
    let v = quick(args);
    ok(dir, &v.iter().map(String::as_str).collect::<Vec<_>>())
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn pnm_dims(bytes: &[u8]) -> (usize, usize) {
    let text = String::from_utf8_lossy(&bytes[..20.min(bytes.len())]).into_owned();
    let f: Vec<usize> = text.split_whitespace().skip(1).take(2).map(|t| t.parse().unwrap()).collect();
    (f[1], f[0])
}

#[test]
fn synth_writes_a_split_dataset_reproducibly() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(d.path(), &["synth", "--set", "synth.count=10", "--set", "seed=2"]);
    }
    let ta = tree(a.path());
    assert_eq!(ta.keys().filter(|k| k.ends_with(".ppm")).count(), 10);
    assert_eq!(ta.keys().filter(|k| k.ends_with(".pgm")).count(), 10);
    let manifest = String::from_utf8(ta["data/manifest.tsv"].clone()).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.ends_with("\ttrain")).count(), 9);
    assert_eq!(manifest.lines().filter(|l| l.ends_with("\ttest")).count(), 1);
    assert_eq!(ta, tree(b.path()));
}

#[test]
fn synth_splits_348_images_314_to_34() {
    let d = tempfile::tempdir().unwrap();
    let out = ok(d.path(), &["synth", "--set", "synth.count=348"]);
    assert!(out.contains("314 train, 34 test"), "{out}");
}

#[test]
fn train_eval_infer_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok_quick(p, &["synth"]);
    ok_quick(p, &["train"]);
    let log = std::fs::read_to_string(p.join("out/train_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.contains(",train,")).count(), 2 * 2);
    assert_eq!(rows.iter().filter(|r| r.contains(",test,")).count(), 2);

    // the last logged test accuracy is the one eval reports
    let logged: f64 = rows.last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    let report = ok_quick(p, &["eval"]);
    let line = report.lines().find(|l| l.starts_with("fine accuracy:")).unwrap();
    let evaluated: f64 = line.split(':').nth(1).unwrap().trim().parse().unwrap();
    assert!((logged - evaluated).abs() < 1e-6, "{logged} vs {evaluated}");
    assert!((0.0..=1.0).contains(&evaluated));

    let metrics = std::fs::read_to_string(p.join("out/metrics.csv")).unwrap();
    for row in metrics.lines().skip(1) {
        let acc: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&acc), "{row}");
    }
    let roc = std::fs::read_to_string(p.join("out/roc.dat")).unwrap();
    let points: Vec<(f64, f64)> = roc
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            (v[0], v[1])
        })
        .collect();
    assert!(points.contains(&(1.0, 1.0)) && points.contains(&(0.0, 0.0)), "{points:?}");

    let image = "data/images/synth_0000.ppm";
    ok_quick(p, &["infer", image]);
    let first = tree(&p.join("out"));
    let mask = &first["synth_0000_mask.pgm"];
    assert_eq!(pnm_dims(mask), (120, 188));
    let header = mask.len() - 120 * 188;
    assert!(mask[header..].iter().all(|&v| v == 0 || v == 255));
    assert_eq!(pnm_dims(&first["synth_0000_coarse.pgm"]), (8, 12));
    assert_eq!(pnm_dims(&first["synth_0000_fine.pgm"]), (120, 188));
    assert_eq!(pnm_dims(&first["synth_0000_composite.ppm"]), (120, 188));
    ok_quick(p, &["infer", image]);
    assert_eq!(tree(&p.join("out")), first);
    assert!(!first.keys().any(|k| k.contains(".tmp")));

    let bench = ok_quick(p, &["bench", "--set", "bench.reps=20"]);
    assert!(bench.lines().nth(1).unwrap().starts_with("cascade,"));
    assert!(bench.trim_end().ends_with(",4"), "seed is echoed: {bench}");
}

#[test]
fn dumped_config_reproduces_training_exactly() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok_quick(p, &["synth"]);
    let dumped = ok_quick(p, &["dump-config", "--set", "paths.model=a.cseg"]);
    std::fs::write(p.join("run.conf"), dumped.replace("a.cseg", "b.cseg")).unwrap();
    ok_quick(p, &["train", "--set", "paths.model=a.cseg"]);
    ok(p, &["--config", "run.conf", "train"]);
    assert_eq!(std::fs::read(p.join("a.cseg")).unwrap(), std::fs::read(p.join("b.cseg")).unwrap());
}

#[test]
fn ablate_reports_four_variants_with_checks() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok_quick(p, &["synth"]);
    ok_quick(p, &["ablate", "--set", "bench.reps=20", "--set", "train.stage1.epochs=1", "--set", "train.stage2.epochs=1"]);
    let csv = std::fs::read_to_string(p.join("out/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].ends_with(",seed,check"));
    assert_eq!(lines.len(), 5);
    for (row, variant) in lines[1..].iter().zip(["cascade", "fullres-monolith", "no-image", "color-baseline"]) {
        assert!(row.starts_with(&format!("{variant},")), "{row}");
        assert!(row.ends_with(",4,reference") || row.ends_with(",4,pass") || row.ends_with(",4,fail"), "{row}");
    }
}

#[test]
fn help_lists_every_key_with_its_default() {
    let d = tempfile::tempdir().unwrap();
    let help = ok(d.path(), &["--help"]);
    let dumped = ok(d.path(), &["dump-config"]);
    for line in dumped.lines() {
        let (key, value) = line.split_once(" = ").unwrap();
        let entry = help.lines().find(|l| l.trim_start().starts_with(&format!("{key} "))).unwrap_or_else(|| panic!("{key}"));
        assert!(entry.ends_with(&format!("[default: {value}]")), "{entry}");
    }
    assert!(help.contains("CSEG_"));
}

#[test]
fn environment_overrides_config_file_and_set_overrides_both() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.conf"), "seed = 1 # file\n").unwrap();
    let run = |env: Option<&str>, set: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cseg"));
        cmd.current_dir(d.path()).args(["--config", "c.conf", "dump-config"]);
        if let Some(v) = env {
            cmd.env("CSEG_SEED", v);
        }
        if let Some(v) = set {
            cmd.args(["--set", v]);
        }
        let out = cmd.output().unwrap();
        String::from_utf8(out.stdout).unwrap().lines().find(|l| l.starts_with("seed = ")).unwrap().to_string()
    };
    assert_eq!(run(None, None), "seed = 1");
    assert_eq!(run(Some("2"), None), "seed = 2");
    assert_eq!(run(Some("2"), Some("seed=3")), "seed = 3");
}

#[test]
fn errors_are_one_line_and_leave_no_partial_output() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for args in [
        &["--set", "nope=1", "dump-config"][..],
        &["--set", "seed=x", "dump-config"],
        &["--set", "split.train_fraction=1.5", "dump-config"],
        &["train"],
        &["eval"],
        &["infer", "missing.ppm"],
    ] {
        let out = cseg(p, args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "), "{err}");
    }
    assert!(!p.join("model.cseg").exists());
    assert!(!p.join("out").exists() || tree(&p.join("out")).is_empty());
}
