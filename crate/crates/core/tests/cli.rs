use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bcwave(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcwave"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn small_config(dir: &Path) {
    fs::write(
        dir.join("config.json"),
        r#"{"n_t": 64, "epsilons": [1e-3, 1e-4], "seeds": 1, "alphas": [1e-1, 1e-2], "refine_levels": [32, 64, 128], "blago_pairs": 4}"#,
    )
    .unwrap();
}

#[test]
fn forward_then_invert() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = bcwave(
        &["forward", "--config", "config.json", "--out", "data", "--csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["ntd.bin", "ntd.csv", "profile.csv"] {
        assert!(dir.path().join("data").join(file).is_file(), "{file}");
    }
    let out = bcwave(
        &[
            "invert",
            "--config",
            "config.json",
            "--data",
            "data/ntd.bin",
            "--truth",
            "data/profile.csv",
            "--epsilon",
            "1e-4",
            "--out",
            "result",
            "--dump-stages",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sup error"));
    assert!(dir.path().join("result/c_tilde.csv").is_file());
    assert!(dir.path().join("result/stages/chi.csv").is_file());
}

#[test]
fn checks_pass_on_small_grids() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    for command in ["blago-check", "refine-check", "alpha-study"] {
        let out = bcwave(&[command, "--config", "config.json", "--out", "out"], dir.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{command}: {}",
            String::from_utf8_lossy(&out.stdout)
        );
    }
    assert!(dir.path().join("out/blago.csv").is_file());
    assert!(dir.path().join("out/refine.json").is_file());
    assert!(dir.path().join("out/alpha_study_timings.csv").is_file());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"T": 0.5}"#).unwrap();
    let out = bcwave(&["forward", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("typo.json"), r#"{"nt": 64}"#).unwrap();
    let out = bcwave(&["forward", "--config", "typo.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bcwave(&["invert", "--data", "missing.bin"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_with_the_same_seed_match() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let run = |seed: &str, out: &str| {
        bcwave(
            &["noise-study", "--config", "config.json", "--seed", seed, "--out", out],
            dir.path(),
        );
        fs::read_to_string(dir.path().join(out).join("noise_study.csv")).unwrap()
    };
    let a = run("1", "a");
    assert_eq!(a, run("1", "b"));
    assert!(a.starts_with("epsilon,seed,sup_error,envelope,status"));
}
