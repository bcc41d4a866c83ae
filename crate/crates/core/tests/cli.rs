//! Command-line behaviour of the `ae2` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ae2::data::files::read_embeddings;
use ae2::data::DatasetManifest;

fn ae2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ae2"))
        .args(args)
        .env_remove("AE2_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ae2(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen → train → embed on a tiny configuration; returns the temp dir.
fn tiny_run() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    std::fs::write(
        root.join("gen.cfg"),
        "# tiny\nseed = 5\ntrain_videos = 4  # per view\nval_videos = 2\ntest_videos = 3\nt_min = 12\nt_max = 16\n",
    )
    .unwrap();
    ok(&["gen", "--config", s(&root.join("gen.cfg")), "--out", s(&root.join("data"))]);
    ok(&[
        "train",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--out",
        s(&root.join("run")),
        "--epochs",
        "2",
        "--set",
        "hidden_dim=8",
        "--set",
        "frames_per_seq=8",
    ]);
    ok(&[
        "embed",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--checkpoint",
        s(&root.join("run/best.ckpt")),
        "--out",
        s(&root.join("emb")),
    ]);
    (dir, root)
}

#[test]
fn pipeline_outputs() {
    let (_dir, root) = tiny_run();
    let manifest = DatasetManifest::read(&root.join("data/manifest.txt")).unwrap();
    assert_eq!(manifest.entries.len(), 2 * (4 + 2 + 3));
    for f in ["best.ckpt", "last.ckpt", "train_log.csv"] {
        assert!(root.join("run").join(f).is_file(), "{f}");
    }
    let log = std::fs::read_to_string(root.join("run/train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2);

    for e in &manifest.entries {
        let emb = read_embeddings(&root.join("emb").join(format!("{}.ae2e", e.id))).unwrap();
        assert_eq!(emb.shape(), (e.frame_count, 128), "{}", e.id);
    }

    let text = ok(&[
        "eval",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--embeddings",
        s(&root.join("emb")),
        "--out",
        s(&root.join("metrics")),
        "--few-shot-repeats",
        "2",
    ]);
    for key in [
        "f1.regular=",
        "f1.ego2exo=",
        "f1.exo2ego=",
        "f1.few_shot.0.1=",
        "f1.few_shot.0.5=",
        "f1.few_shot.1=",
        "map@5.regular=",
        "map@10.ego2exo=",
        "map@15.exo2ego=",
        "progression.r2=",
        "progression_modified.r2=",
        "kendall.tau=",
    ] {
        assert!(text.lines().any(|l| l.starts_with(key)), "missing {key} in\n{text}");
    }
    let file = std::fs::read_to_string(root.join("metrics/metrics.txt")).unwrap();
    assert_eq!(file, text);
    let csv = std::fs::read_to_string(root.join("metrics/metrics.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("run,"));

    let dump = ok(&[
        "retrieve",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--embeddings",
        s(&root.join("emb")),
        "--k",
        "3",
        "--scope",
        "ego2exo",
    ]);
    let test_ego_frames: usize = manifest
        .entries
        .iter()
        .filter(|e| e.split == ae2::data::Split::Test && e.view == ae2::data::View::Ego)
        .map(|e| e.frame_count)
        .sum();
    assert_eq!(dump.lines().count(), 1 + 3 * test_ego_frames);
}

#[test]
fn embed_is_deterministic() {
    let (_dir, root) = tiny_run();
    let again = root.join("emb2");
    ok(&[
        "embed",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--checkpoint",
        s(&root.join("run/best.ckpt")),
        "--out",
        s(&again),
        "--split",
        "test",
    ]);
    let mut n = 0;
    for e in std::fs::read_dir(&again).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap();
        assert!(name.to_str().unwrap().contains("_test_"));
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(root.join("emb").join(name)).unwrap());
        n += 1;
    }
    assert_eq!(n, 6);
}

#[test]
fn align_csv_and_self_alignment() {
    let (_dir, root) = tiny_run();
    let a = root.join("emb/ego_test_000.ae2e");
    let b = root.join("emb/exo_test_001.ae2e");
    let csv = root.join("align.csv");
    let out = ok(&["align", s(&a), s(&b), "--csv", s(&csv)]);
    let m = read_embeddings(&a).unwrap().rows();
    let n = read_embeddings(&b).unwrap().rows();
    let path_line = out.lines().find(|l| l.starts_with("path=")).unwrap();
    let steps = path_line["path=".len()..].split(' ').count();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + m * n + steps);
    assert_eq!(text.lines().filter(|l| l.starts_with("cost,") && l.ends_with(",1")).count(), m);

    let out = ok(&["align", s(&a), s(&a)]);
    let path_line = out.lines().find(|l| l.starts_with("path=")).unwrap();
    let diag: Vec<String> = (0..m).map(|i| format!("{i}:{i}")).collect();
    assert_eq!(&path_line["path=".len()..], diag.join(" "));
    let sync = out.lines().find(|l| l.starts_with("sync_map=")).unwrap();
    let ident: Vec<String> = (0..m).map(|i| i.to_string()).collect();
    assert_eq!(&sync["sync_map=".len()..], ident.join(","));
}

#[test]
fn gen_refuses_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let args = ["gen", "--out", s(&out), "--set", "train_videos=2", "--set", "val_videos=1", "--set", "test_videos=1"];
    ok(&args);
    let again = ae2(&args);
    assert_eq!(again.status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    for bad in ["no_such_key=1", "t_min=50", "noise=abc"] {
        let r = ae2(&["gen", "--out", s(&out), "--set", bad]);
        assert_eq!(r.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(String::from_utf8_lossy(&r.stderr).contains("configuration error"));
    }
}

#[test]
fn corrupt_feature_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["gen", "--out", s(&data), "--set", "train_videos=2", "--set", "val_videos=1", "--set", "test_videos=1"]);
    let victim = data.join("features/ego_train_000.ae2f");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&victim, bytes).unwrap();
    let r = ae2(&[
        "train",
        "--manifest",
        s(&data.join("manifest.txt")),
        "--out",
        s(&dir.path().join("run")),
        "--epochs",
        "1",
    ]);
    assert_eq!(r.status.code(), Some(3));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("ego_train_000.ae2f") && err.contains("byte"), "{err}");
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.cfg"), "seed=1\ntrain_videos=2\nval_videos=1\ntest_videos=1\n").unwrap();
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| -> String {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ae2"));
        cmd.args(["gen", "--config", s(&dir.path().join("g.cfg")), "--out", s(&out)]);
        cmd.env_remove("AE2_SEED");
        if let Some(e) = env {
            cmd.env("AE2_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read_to_string(out.join("report.txt")).unwrap()
    };
    assert!(run("a", None, None).contains("seed=1\n"));
    assert!(run("b", Some("2"), None).contains("seed=2\n"));
    assert!(run("c", Some("2"), Some("3")).contains("seed=3\n"));
}

#[test]
fn unknown_scope_is_config_error() {
    let (_dir, root) = tiny_run();
    let r = ae2(&[
        "retrieve",
        "--manifest",
        s(&root.join("data/manifest.txt")),
        "--embeddings",
        s(&root.join("emb")),
        "--scope",
        "sideways",
    ]);
    assert_eq!(r.status.code(), Some(2));
}
