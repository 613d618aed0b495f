use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ccb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccb")).args(args).output().expect("spawn ccb")
}

fn data(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(file)
        .to_string_lossy()
        .into_owned()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "ccb failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn prepare_german(out: &Path) {
    ok(ccb(&[
        "prepare",
        "--data",
        &data("german.csv"),
        "--schema",
        &data("german.schema"),
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]));
}

fn pipeline(out: &Path) {
    let o = out.to_str().unwrap();
    prepare_german(out);
    ok(ccb(&["train", "--out", o, "--lambda", "0,20", "--hidden", "8", "--steps", "3000", "--jobs", "2"]));
    ok(ccb(&["train", "--out", o, "--method", "lr"]));
    ok(ccb(&["report", "--out", o, "--criterion", "delta"]));
}

/// Every output file except the timestamp files, keyed by relative path.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if !path.to_string_lossy().ends_with("meta.json") && !path.ends_with("run-metadata.json") {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn german_manifest_split_sizes() {
    let dir = tempfile::tempdir().unwrap();
    prepare_german(dir.path());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    let len = |k: &str| manifest[k].as_array().unwrap().len();
    assert_eq!((len("train"), len("validation"), len("test")), (700, 150, 150));
    assert_eq!(manifest["seed"], 7);
}

#[test]
fn pipeline_is_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs between reruns", k.display());
    }
    for f in ["report/report.csv", "report/grid.csv", "report/submodel.csv", "report/curve.csv", "lr-s7/model.ckpt"] {
        assert!(sa.contains_key(Path::new(f)), "missing {f}");
    }
    let submodel = String::from_utf8(sa[Path::new("report/submodel.csv")].clone()).unwrap();
    assert_eq!(submodel.lines().count(), 5);
    let report = String::from_utf8(sa[Path::new("report/report.csv")].clone()).unwrap();
    assert!(report.starts_with("dataset,method,criterion,seed,split,k,n,acc,discr,consist,delta\n"));
    assert_eq!(report.lines().count(), 5);
}

#[test]
fn lambda_zero_rewards_are_binary() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    prepare_german(dir.path());
    ok(ccb(&["train", "--out", o, "--lambda", "0", "--hidden", "6", "--steps", "2000"]));
    let text = fs::read_to_string(dir.path().join("ccb-l0-h6-s7/rewards.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,sensitive,action,acc_reward,kl,reward,accumulated");
    let mut n = 0;
    for line in lines {
        let reward = line.split(',').nth(5).unwrap();
        assert!(reward == "0" || reward == "1", "reward {reward:?}");
        n += 1;
    }
    assert_eq!(n, 2000);
}

#[test]
fn missing_schema_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.schema");
    let out = ccb(&[
        "prepare",
        "--data",
        &data("german.csv"),
        "--schema",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(missing.to_str().unwrap()));
}

#[test]
fn invalid_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    prepare_german(dir.path());
    for bad in [&["--lambda", "-1"][..], &["--steps", "0"], &["--alpha", "0"], &["--hidden", "0"]] {
        let mut args = vec!["train", "--out", o];
        args.extend_from_slice(bad);
        let out = ccb(&args);
        assert_eq!(out.status.code(), Some(2), "{bad:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = ccb(&["report", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = ccb(&["train", "--out", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
