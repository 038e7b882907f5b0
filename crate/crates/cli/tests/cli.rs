// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use minkproj_core::io::{encode_gmsk, encode_sparse, read_gmsk, read_sparse};
use minkproj_core::synthetic::jaccard;
use tempfile::TempDir;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Temp dir with copies of the shipped configs.
fn workspace() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    for e in fs::read_dir(configs_dir()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            fs::copy(&p, tmp.path().join(p.file_name().unwrap())).unwrap();
        }
    }
    tmp
}

fn minkproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minkproj")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = minkproj(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(dir: &Path) -> toml::Table {
    fs::read_to_string(dir.join("report.toml")).unwrap().parse().unwrap()
}

fn generate_blocky(ws: &Path) {
    ok(&["generate", "--config", s(&ws.join("generate_blocky.toml"))]);
}

#[test]
fn generate_is_deterministic_and_writes_a_sidecar() {
    let ws = workspace();
    let a = ws.path().join("a");
    let b = ws.path().join("b");
    let cfg = ws.path().join("generate_blocky.toml");
    ok(&["generate", "--config", s(&cfg), "--out-dir", s(&a)]);
    ok(&["generate", "--config", s(&cfg), "--out-dir", s(&b)]);
    for name in ["model.gmsk", "background.gmsk", "anomaly.gmsk", "mask.txt", "data.gmsk", "truth.toml"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let truth: toml::Table = fs::read_to_string(a.join("truth.toml")).unwrap().parse().unwrap();
    assert_eq!(truth["kind"].as_str(), Some("blocky-anomaly-2d"));
    let anomaly = read_gmsk(a.join("anomaly.gmsk")).unwrap();
    let n = anomaly.data().iter().filter(|&&x| x == -150.0).count();
    assert_eq!(truth["support_size"].as_integer(), Some(n as i64));
    assert!(a.join("pgm/model.pgm").is_file());

    ok(&["generate", "--config", s(&cfg), "--out-dir", s(&b), "--seed", "2"]);
    assert_ne!(fs::read(a.join("model.gmsk")).unwrap(), fs::read(b.join("model.gmsk")).unwrap());
}

#[test]
fn video_without_persons_has_empty_anomaly() {
    let ws = workspace();
    let cfg = ws.path().join("still.toml");
    fs::write(
        &cfg,
        "[generate]\nkind = \"lowrank-sparse-video\"\nparams = { nx = 8, ny = 6, nt = 10, clean_frames = 5, persons = 0 }\n",
    )
    .unwrap();
    let out = ws.path().join("still");
    ok(&["generate", "--config", s(&cfg), "--out-dir", s(&out)]);
    let a = read_gmsk(out.join("anomaly.gmsk")).unwrap();
    assert!(a.data().iter().all(|&x| x == 0.0));
    assert_eq!(read_gmsk(out.join("video.gmsk")).unwrap(), read_gmsk(out.join("background.gmsk")).unwrap());
}

#[test]
fn project_blocky_config_converges_and_is_feasible() {
    let ws = workspace();
    generate_blocky(ws.path());
    let out = ws.path().join("proj");
    let stdout = ok(&["project", "--config", s(&ws.path().join("blocky_project.toml")), "--out-dir", s(&out)]);
    assert!(stdout.starts_with("converged"), "{stdout}");
    let r = report(&out);
    let solve = r["solve"].as_table().unwrap();
    assert_eq!(solve["converged"].as_bool(), Some(true));
    assert!(solve["max_feasibility_distance"].as_float().unwrap() <= 1e-4);
    let labels: Vec<_> = solve["feasibility"].as_array().unwrap().iter().map(|d| d["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["D1", "E1", "F1", "F2"]);
    let u = read_gmsk(out.join("u.gmsk")).unwrap();
    let v = read_gmsk(out.join("v.gmsk")).unwrap();
    let w = read_gmsk(out.join("w.gmsk")).unwrap();
    for i in 0..w.len() {
        assert!((u.data()[i] + v.data()[i] - w.data()[i]).abs() < 1e-9);
    }
    let csv = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(csv.starts_with("iteration,max_primal,dual,cg_iterations,rho_changed\n"));
    assert_eq!(csv.lines().count(), 1 + solve["iterations"].as_integer().unwrap() as usize);
}

#[test]
fn datafit_and_spg_configs_run() {
    let ws = workspace();
    generate_blocky(ws.path());
    let out = ws.path().join("fit");
    ok(&["project-datafit", "--config", s(&ws.path().join("blocky_datafit.toml")), "--out-dir", s(&out)]);
    let r = report(&out);
    assert_eq!(r["solve"]["converged"].as_bool(), Some(true));
    let u = read_gmsk(out.join("u.gmsk")).unwrap();
    let truth = read_gmsk(ws.path().join("data/blocky/anomaly.gmsk")).unwrap();
    let pred: Vec<bool> = u.data().iter().map(|&x| x < -75.0).collect();
    let sup: Vec<bool> = truth.data().iter().map(|&x| x != 0.0).collect();
    assert!(jaccard(&pred, &sup) >= 0.9);
    let fit = r["solve"]["feasibility"].as_array().unwrap().iter().find(|d| d["label"].as_str() == Some("datafit")).unwrap();
    assert!(fit["distance"].as_float().unwrap() <= 1e-4);
    assert!(r["datafit_residual_norm"].as_float().unwrap() > 0.0);

    let out = ws.path().join("spg");
    ok(&["solve-spg", "--config", s(&ws.path().join("spg_blocky.toml")), "--out-dir", s(&out), "--max-iters", "5"]);
    let r = report(&out);
    assert_eq!(r["iterations"].as_integer(), Some(5));
    let hist = fs::read_to_string(out.join("spg_history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 6);
}

#[test]
fn sample_twice_gives_identical_outputs() {
    let ws = workspace();
    let cfg = ws.path().join("sample.toml");
    let a = ws.path().join("a");
    let b = ws.path().join("b");
    ok(&["sample", "--config", s(&cfg), "--seed", "7", "--out-dir", s(&a), "--threads", "2"]);
    ok(&["sample", "--config", s(&cfg), "--seed", "7", "--out-dir", s(&b), "--threads", "2"]);
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3 * 4 + 1);
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?}");
    }
    let r = report(&a);
    let samples = r["sample"].as_array().unwrap();
    assert_eq!(samples.len(), 3);
    for smp in samples {
        assert_eq!(smp["converged"].as_bool(), Some(true));
        assert!(smp["max_feasibility_distance"].as_float().unwrap() <= 1e-4);
    }
}

#[test]
fn written_files_read_back_bit_exactly() {
    let ws = workspace();
    generate_blocky(ws.path());
    let dir = ws.path().join("data/blocky");
    for name in ["model.gmsk", "data.gmsk"] {
        let bytes = fs::read(dir.join(name)).unwrap();
        assert_eq!(encode_gmsk(&read_gmsk(dir.join(name)).unwrap()), bytes);
    }
    let text = fs::read_to_string(dir.join("mask.txt")).unwrap();
    assert_eq!(encode_sparse(&read_sparse(dir.join("mask.txt")).unwrap()), text);
}

#[test]
fn check_reports_the_offending_set() {
    let ws = workspace();
    let bad = ws.path().join("bad.toml");
    fs::write(
        &bad,
        r#"
[grid]
dims = [4, 4]

[[set]]
label = "inverted"
target = "u"
constraint = { kind = "box", lower = 1.0, upper = -1.0 }

[[set]]
label = "vb"
target = "v"
constraint = { kind = "box", lower = 0.0, upper = 1.0 }
"#,
    )
    .unwrap();
    let out = minkproj(&["check", "--config", s(&bad)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("inverted"), "{err}");

    generate_blocky(ws.path());
    let good = ok(&["check", "--config", s(&ws.path().join("blocky_project.toml"))]);
    assert!(good.contains("p=1 q=1 r=2 s=5"), "{good}");
}

#[test]
fn config_errors_name_the_file_and_key() {
    let ws = workspace();
    let cfg = ws.path().join("typo.toml");
    fs::write(&cfg, "[grid]\ndims = [4, 4]\n[admm]\nmax_iter = 3\n").unwrap();
    let out = minkproj(&["check", "--config", s(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("typo.toml") && err.contains("max_iter"), "{err}");

    // data files are referenced but not generated yet
    let out = minkproj(&["project-datafit", "--config", s(&ws.path().join("blocky_datafit.toml"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("datafit.operator") && err.contains("does not exist"), "{err}");

    let cfg = ws.path().join("missing_set_file.toml");
    fs::write(
        &cfg,
        "[grid]\ndims = [4, 4]\n[[set]]\nlabel = \"E1\"\ntarget = \"v\"\nconstraint = { kind = \"fixed\", value = \"nope.gmsk\" }\n",
    )
    .unwrap();
    let err = String::from_utf8_lossy(&minkproj(&["check", "--config", s(&cfg)]).stderr).to_string();
    assert!(err.contains("set 'E1'"), "{err}");
}

#[test]
fn video_decompose_writes_components() {
    let ws = workspace();
    let gen = ws.path().join("gen.toml");
    fs::write(
        &gen,
        "seed = 2\n[generate]\nkind = \"lowrank-sparse-video\"\nparams = { nx = 16, ny = 12, nt = 16, clean_frames = 8, persons = 1, width = 2, height = 6 }\n",
    )
    .unwrap();
    let data = ws.path().join("v");
    ok(&["generate", "--config", s(&gen), "--out-dir", s(&data)]);
    let cfg = ws.path().join("dec.toml");
    fs::write(
        &cfg,
        "[input]\nmodel = \"v/video.gmsk\"\n[video]\ntraining_frames = 8\nsubspace_rel_tol = 0.05\nbudgets = { pixels = 12, vertical = 8, horizontal = 12 }\n",
    )
    .unwrap();
    let out = ws.path().join("dec");
    ok(&["video-decompose", "--config", s(&cfg), "--out-dir", s(&out), "--max-iters", "200"]);
    let video = read_gmsk(data.join("video.gmsk")).unwrap();
    let bg = read_gmsk(out.join("u.gmsk")).unwrap();
    let an = read_gmsk(out.join("v.gmsk")).unwrap();
    assert_eq!(bg.grid().dims(), video.grid().dims());
    assert_eq!(an.len(), video.len());
    assert!(report(&out)["solve"]["iterations"].as_integer().unwrap() <= 200);

    fs::write(&cfg, "[input]\nmodel = \"v/video.gmsk\"\n[[set]]\nlabel = \"x\"\ntarget = \"u\"\nconstraint = { kind = \"l2_ball\", radius = 1.0 }\n").unwrap();
    assert!(!minkproj(&["video-decompose", "--config", s(&cfg)]).status.success());
}
