use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crashpipe::bank::{frame_key, EmbeddingBank, Section};
use crashpipe::classify::default_prompt_sets;
use crashpipe::metric::read_predictions_file;
use crashpipe::{ClipManifest, CollisionClass};

fn crashpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashpipe"))
        .args(args)
        .env("CRASHPIPE_LOG", "error")
        .output()
        .expect("run crashpipe")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_suite(dir: &Path, count: usize) -> PathBuf {
    let out = crashpipe(&["synth", "--out", s(dir), "--seed", "5", "--count", &count.to_string()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifests.txt")
}

#[test]
fn predict_is_identical_across_worker_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let list = synth_suite(&tmp.path().join("suite"), 3);
    let a = tmp.path().join("w1.csv");
    let b = tmp.path().join("w8.csv");
    for (workers, out) in [("1", &a), ("8", &b)] {
        let o = crashpipe(&["predict", "--no-classify", "--workers", workers, "--list", s(&list), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let rows = read_predictions_file(&a).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.class == CollisionClass::Single));

    let gt = tmp.path().join("suite/gt.csv");
    let report = tmp.path().join("report.csv");
    let json = tmp.path().join("report.json");
    let o = crashpipe(&["evaluate", "--predictions", s(&a), "--ground-truth", s(&gt), "--out", s(&report), "--json", s(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.starts_with("video_id,T,S,C,H\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("MEAN,"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["videos"].as_array().unwrap().len(), 3);
}

#[test]
fn failures_are_isolated_and_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let list = synth_suite(&tmp.path().join("suite"), 1);
    let good = tmp.path().join("suite").join(fs::read_to_string(&list).unwrap().trim());

    // a one-frame clip cannot be analysed
    let short_dir = tmp.path().join("short");
    fs::create_dir(&short_dir).unwrap();
    let first = ClipManifest::from_path(&good).unwrap().frame_files[0].clone();
    fs::copy(&first, short_dir.join("f0.pgm")).unwrap();
    let short = short_dir.join("manifest.json");
    fs::write(&short, r#"{"id": "short", "fps": 20, "frames": ["f0.pgm"]}"#).unwrap();

    let out = tmp.path().join("p.csv");
    let o = crashpipe(&["predict", "--no-classify", "--workers", "2", s(&short), s(&good), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("1 of 2 videos failed"), "{stderr}");
    assert!(stderr.contains("short"), "{stderr}");
    assert_eq!(read_predictions_file(&out).unwrap().len(), 1);
}

#[test]
fn usage_and_fatal_errors() {
    let o = crashpipe(&["predict", "--no-classify"]);
    assert_eq!(o.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let list = synth_suite(&tmp.path().join("suite"), 1);
    let missing = tmp.path().join("none.emb");
    let o = crashpipe(&["predict", "--list", s(&list), "--prompt-bank", s(&missing), "--frame-bank", s(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("embedding banks"));

    let o = crashpipe(&["predict", "--list", s(&list)]);
    assert_eq!(o.status.code(), Some(1));

    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"workers": 0}"#).unwrap();
    let o = crashpipe(&["--config", s(&cfg), "predict", "--no-classify", "--list", s(&list)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn two_pass_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let list = synth_suite(&tmp.path().join("suite"), 2);
    let requests = tmp.path().join("requests.json");
    let o = crashpipe(&["predict", "--list", s(&list), "--emit-frame-requests", s(&requests), "--out", s(&tmp.path().join("pass1.csv"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let req: serde_json::Value = serde_json::from_str(&fs::read_to_string(&requests).unwrap()).unwrap();
    let req = req.as_object().unwrap();
    assert_eq!(req.len(), 2);

    // one-hot embeddings stand in for an encoder
    let dim = CollisionClass::ALL.len();
    let one_hot = |k: usize| {
        let mut v = vec![0.0f32; dim];
        v[k] = 1.0;
        v
    };
    let mut prompts = EmbeddingBank::new(Section::Prompts, dim);
    for set in default_prompt_sets() {
        for p in set.prompts {
            prompts.insert(p, one_hot(set.class.index())).unwrap();
        }
    }
    let gt = read_predictions_file(&tmp.path().join("suite/gt.csv")).unwrap();
    let mut frames = EmbeddingBank::new(Section::Frames, dim);
    for g in &gt {
        let entry = &req[&g.video_id];
        assert!(Path::new(entry["manifest"].as_str().unwrap()).exists());
        let idx = entry["frames"].as_array().unwrap();
        assert_eq!(idx.len(), 8);
        for i in idx {
            frames.insert(frame_key(&g.video_id, i.as_u64().unwrap() as usize), one_hot(g.class.index())).unwrap();
        }
    }
    let pb = tmp.path().join("prompts.emb");
    let fb = tmp.path().join("frames.emb");
    prompts.save(&pb).unwrap();
    frames.save(&fb).unwrap();

    let o = crashpipe(&["predict", "--list", s(&list), "--prompt-bank", s(&pb), "--frame-bank", s(&fb)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = crashpipe::metric::read_predictions(&o.stdout[..]).unwrap();
    for (r, g) in rows.iter().zip(&gt) {
        assert_eq!(r.video_id, g.video_id);
        assert_eq!(r.class, g.class);
    }
}

#[test]
fn trace_writes_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let list = synth_suite(&tmp.path().join("suite"), 1);
    let manifest = tmp.path().join("suite").join(fs::read_to_string(&list).unwrap().trim());
    let out = tmp.path().join("trace");
    let o = crashpipe(&["trace", s(&manifest), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let gt = &read_predictions_file(&tmp.path().join("suite/gt.csv")).unwrap()[0];
    let fps = ClipManifest::from_path(&manifest).unwrap().fps;
    let truth = (gt.time_sec * fps).round() as i64;
    let mut rdr = csv::Reader::from_path(out.join("signal.csv")).unwrap();
    let z: Vec<(i64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[3].parse().unwrap())
        })
        .collect();
    let argmax = z.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert!((argmax - truth).abs() <= 2, "z peaks at {argmax}, collision at {truth}");

    let pgm = crashpipe::frame::read_pgm(&out.join("magnitude.pgm")).unwrap();
    let nonzero = pgm.data().iter().filter(|&&v| v > 0.0).count();
    assert!(nonzero as f64 <= 0.1 * pgm.data().len() as f64 + 1.0);
    let window: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("window.json")).unwrap()).unwrap();
    assert_eq!(window["spatial_window"].as_array().unwrap().len(), 2);
}
