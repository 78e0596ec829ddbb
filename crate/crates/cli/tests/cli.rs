use pinlab::config::{self, parse};
use pinlab::run::{self, replay, Manifest};
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pinlab"))
}

fn law_block(alpha: f64) -> String {
    format!("[law]\nalpha = {alpha}\nl_kind = \"constant\"\nn_max = 2000\ntol = 1e-8\n")
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn law_info_reports_normalizer() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["law-info", "--alpha", "1", "--n-max", "1000"])
        .env("PINLAB_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = String::from_utf8(out.stdout).unwrap().trim().to_string();
    assert!(dir.starts_with(tmp.path().to_str().unwrap()));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(Path::new(&dir).join("result.json")).unwrap()).unwrap();
    // 1/ζ(2) = 6/π².
    let c = v["c_K"].as_f64().unwrap();
    assert!((c - 6.0 / std::f64::consts::PI.powi(2)).abs() < 1e-9);
    assert!((c - 0.607927).abs() < 1e-6);
    let lo = v["norm_bracket"]["lo"].as_f64().unwrap();
    let hi = v["norm_bracket"]["hi"].as_f64().unwrap();
    assert!(lo <= 1.0 && 1.0 <= hi);
}

#[test]
fn pure_solve_residual_within_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let src = format!("mode = \"pure-solve\"\noutput_dir = {:?}\n{}\n[params]\nh = 1e-3\n", tmp.path(), law_block(1.5));
    let cfg = run::load(&src).unwrap();
    let o = run::run(&cfg).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&fs::read(o.dir.join("result.json")).unwrap()).unwrap();
    let s = &v["solution"];
    assert!(s["residual"].as_f64().unwrap() < 1e-8);
    let (lo, hi) = (s["bracket"]["lo"].as_f64().unwrap(), s["bracket"]["hi"].as_f64().unwrap());
    assert!((hi - lo) / s["F"].as_f64().unwrap() <= 1e-7);
}

#[test]
fn manifest_lists_every_file_with_checksums() {
    let tmp = tempfile::tempdir().unwrap();
    let src = format!(
        "mode = \"pure-solve\"\noutput_dir = {:?}\n{}\n[params]\nh = 0.01\nn_check = 500\n",
        tmp.path(),
        law_block(1.5)
    );
    let o = run::run(&run::load(&src).unwrap()).unwrap();
    let m: Manifest = serde_json::from_str(&fs::read_to_string(o.dir.join("manifest.json")).unwrap()).unwrap();
    let mut on_disk: Vec<String> = fs::read_dir(&o.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let listed: Vec<String> = m.files.keys().cloned().collect();
    assert_eq!(on_disk, listed);
    assert!(listed.iter().any(|n| n.ends_with(".dat")) && listed.iter().any(|n| n.ends_with(".gp")));
    assert!(o.dir.file_name().unwrap().to_str().unwrap().starts_with("pure-solve-"));
    let r = replay(&o.dir, None).unwrap();
    assert!(r.ok(), "{r:?}");
}

#[test]
fn unknown_mode_and_empty_config_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.toml", &format!("mode = \"nope\"\n{}", law_block(1.5)));
    let out = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let empty = write(tmp.path(), "empty.toml", "");
    let out = bin().args(["run", "--config"]).arg(&empty).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing mode"));
    let out = bin().output().unwrap();
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn validate_subcommand_lists_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write(
        tmp.path(),
        "ok.toml",
        "mode = \"scan-shift\"\n[law]\nalpha = 0.5\nl_kind = \"log_power\"\nb = -2.0\nn_max = 2000\ntol = 1e-8\n[params]\ncase = \"half\"\nbetas = [1.0]\nepsilon = 0.5\neta = 2.0\n",
    );
    let out = bin().args(["validate", "--config"]).arg(&ok).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let src = fs::read_to_string(&ok).unwrap().replace("epsilon = 0.5", "epsilon = 1.5");
    let bad = write(tmp.path(), "bad.toml", &src);
    let out = bin().args(["validate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("line 11") && text.contains("0 < epsilon < eta - 1/2"), "{text}");
}

#[test]
fn resource_cap_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["certify", "--alpha", "1.5", "--n-max", "1000", "--beta", "0.1", "--construct", "gt_one", "--a", "1e-3", "--k-cap", "100"])
        .env("PINLAB_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resource cap"));
}

#[test]
fn stochastic_mode_without_seed_is_rejected() {
    let out = bin().args(["quenched-fe", "--alpha", "1.5", "--beta", "1", "--h", "0", "--n", "50"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs a seed"));
}

#[test]
fn worker_count_does_not_change_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let src = |w: usize, sub: &str| {
        format!(
            "mode = \"quenched-fe\"\nseed = 11\nreplicas = 24\nworkers = {w}\noutput_dir = {:?}\n{}\n[params]\nbeta = 0.7\nh = -0.2\nn = 300\ngamma = 0.8\nk = 40\n",
            tmp.path().join(sub),
            law_block(0.75)
        )
    };
    let one = run::run(&run::load(&src(1, "a")).unwrap()).unwrap();
    let eight = run::run(&run::load(&src(8, "b")).unwrap()).unwrap();
    assert_eq!(one.dir.file_name(), eight.dir.file_name());
    assert_eq!(one.manifest, eight.manifest);
    for name in one.manifest.files.keys() {
        assert_eq!(fs::read(one.dir.join(name)).unwrap(), fs::read(eight.dir.join(name)).unwrap(), "{name}");
    }
    let r = replay(&one.dir, Some(3)).unwrap();
    assert!(r.ok());
}

#[test]
fn canonical_config_round_trips() {
    let src = format!(
        "mode = \"certify\"\nseed = 3\n{}\n[params]\nbeta = 0.5\nh = -0.3\nk = 30\ngamma = 0.9\nbackend = \"mc\"\n",
        law_block(1.5)
    );
    let cfg = parse(&src).unwrap();
    let back = config::from_canonical(&cfg.canonical_json()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn scan_then_fit_from_records() {
    let tmp = tempfile::tempdir().unwrap();
    let src = format!(
        "mode = \"scan-shift\"\noutput_dir = {:?}\n[law]\nalpha = 1.5\nl_kind = \"constant\"\nn_max = 20000\ntol = 1e-8\n[params]\ncase = \"gt_one\"\nbetas = [0.6, 0.8, 1.0]\nk_cap = 5000\nmin_records = 3\n",
        tmp.path()
    );
    let o = run::run(&run::load(&src).unwrap()).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&fs::read(o.dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["certified"], 3);
    let slope = v["fit"]["slope"].as_f64().unwrap();
    let fit_src = format!(
        "mode = \"fit-exponent\"\noutput_dir = {:?}\n[law]\nalpha = 1.5\nl_kind = \"constant\"\nn_max = 1000\ntol = 1e-8\n[params]\nrecords = {:?}\ncase = \"gt_one\"\nmin_records = 3\n",
        tmp.path(),
        o.dir.join("records.json")
    );
    let f = run::run(&run::load(&fit_src).unwrap()).unwrap();
    let w: serde_json::Value = serde_json::from_slice(&fs::read(f.dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(w["fit"]["slope"].as_f64().unwrap(), slope);
}
