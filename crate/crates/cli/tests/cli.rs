use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_sagnac");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn sagnac(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = sagnac(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn write_config(dir: &Path, name: &str, base: &str, edits: &[(&str, &str)]) -> String {
    let mut text = fs::read_to_string(configs().join(base)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = config("measured.toml");
    for dir in [&a, &b] {
        run_ok(&["--config", &cfg, "--seed", "1", "--out", dir.to_str().unwrap(), "simulate"]);
    }
    let fa = files(&a);
    for pair in ["VV", "HH", "VH", "HV"] {
        assert!(a.join(format!("setting_0/histogram_{pair}.csv")).exists());
        assert!(a.join(format!("setting_0/histogram_{pair}.meta.json")).exists());
    }
    assert!(!a.join(".sagnac.lock").exists());
    assert_eq!(fa, files(&b));

    let manifest = json(&a.join("manifest.json"));
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 9);
    assert_eq!(manifest["config"]["sha256"].as_str().unwrap().len(), 64);
    assert!(!fs::read_to_string(a.join("manifest.json")).unwrap().contains("time"));

    run_ok(&["--config", &cfg, "--seed", "2", "--out", tmp.path().join("c").to_str().unwrap(), "simulate"]);
    assert_ne!(
        fs::read(a.join("setting_0/histogram_VV.csv")).unwrap(),
        fs::read(tmp.path().join("c/setting_0/histogram_VV.csv")).unwrap()
    );
}

#[test]
fn zero_rate_gives_empty_histograms() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "zero.toml",
        "ideal.toml",
        &[("pair_rate = 1.25e5", "pair_rate = 0.0")],
    );
    let out = tmp.path().join("out");
    run_ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "simulate"]);
    let csv = fs::read_to_string(out.join("setting_0/histogram_HH.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bin_start_ps,count"));
    assert!(lines.all(|l| l.ends_with(",0")));
    let summary = json(&out.join("summary.json"));
    assert!(summary[0]["windowed_counts"].is_null());
}

#[test]
fn malformed_config_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "ideal.toml",
        &[("pair_rate = 1.25e5", "pair_rate = 1.25e5\npair_flux = 3.0")],
    );
    let out = sagnac(&["--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pair_flux"));

    let bad_value = write_config(tmp.path(), "eff.toml", "ideal.toml", &[("efficiency = 1.0", "efficiency = 1.7")]);
    let out = sagnac(&["--config", &bad_value, "--out", tmp.path().join("p").to_str().unwrap(), "chsh"]);
    assert_eq!(out.status.code(), Some(2));

    let out = sagnac(&["--config", "/nonexistent.toml", "chsh"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fringes_recover_configured_visibility() {
    let tmp = tempfile::tempdir().unwrap();
    // Deadtime correlates the two detectors of a pair and lifts V slightly
    // above γ, so the high-count check uses deadtime-free detectors.
    let cfg = write_config(tmp.path(), "fringe.toml", "ideal.toml", &[("gamma = 1.0", "gamma = 0.973")]);
    let out = tmp.path().join("out");
    run_ok(&["--config", &cfg, "--out", out.to_str().unwrap(), "--svg", "fringes"]);
    let fits = json(&out.join("fringe_fits.json"));
    let fits = fits.as_array().unwrap();
    assert_eq!(fits.len(), 8);
    let mut phis = Vec::new();
    for f in fits {
        let v = f["visibility"].as_f64().unwrap();
        let s = f["visibility_sigma"].as_f64().unwrap();
        assert!((v - 0.973).abs() < 3.0 * s, "{f}");
        phis.push(f["phase_offset"].as_f64().unwrap());
    }
    let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    for family in phis.chunks(4) {
        // VV, HH, VH, HV
        assert!(wrap(family[1] - family[0]).abs() < 0.05);
        assert!((wrap(family[2] - family[0]).abs() - std::f64::consts::PI).abs() < 0.05);
        assert!((wrap(family[3] - family[0]).abs() - std::f64::consts::PI).abs() < 0.05);
    }
    let distinct: Vec<f64> = fits.iter().map(|f| f["phi_s"].as_f64().unwrap()).collect();
    assert_eq!(distinct[0], 0.0);
    assert_eq!(distinct[4], -std::f64::consts::FRAC_PI_2);
    assert!(out.join("fringes/family_0_VV.csv").exists());
    assert!(out.join("fringes/family_1.svg").exists());
}

#[test]
fn chsh_ideal_and_noisy() {
    let tmp = tempfile::tempdir().unwrap();
    let ideal = tmp.path().join("ideal");
    run_ok(&["--config", &config("ideal.toml"), "--out", ideal.to_str().unwrap(), "chsh"]);
    let r = json(&ideal.join("chsh.json"));
    let (s, sigma) = (r["raw"]["S"].as_f64().unwrap(), r["raw"]["S_sigma"].as_f64().unwrap());
    assert!((s - 2.0 * 2f64.sqrt()).abs() < 3.0 * sigma, "{s} ± {sigma}");

    let noisy = tmp.path().join("noisy");
    run_ok(&["--config", &config("noisy.toml"), "--out", noisy.to_str().unwrap(), "chsh"]);
    let r = json(&noisy.join("chsh.json"));
    let (raw, raw_sigma) = (r["raw"]["S"].as_f64().unwrap(), r["raw"]["S_sigma"].as_f64().unwrap());
    let net = r["net"]["S"].as_f64().unwrap();
    assert!((raw - 2.50).abs() < 3.0 * raw_sigma, "{raw} ± {raw_sigma}");
    assert!(net >= raw);
    assert_eq!(r["net"]["mode"], "net");
    assert_eq!(r["raw"]["correlations"].as_array().unwrap().len(), 4);
}

#[test]
fn dispersion_fit_and_measured_ruler() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("measured.toml");
    let analytic = tmp.path().join("analytic");
    run_ok(&["--config", &cfg, "--seed", "5", "--out", analytic.to_str().unwrap(), "dispersion-fit"]);
    let fit = json(&analytic.join("dispersion_fit.json"));
    let (d, s) = (fit["D"].as_f64().unwrap(), fit["D_sigma"].as_f64().unwrap());
    assert!((d - 16.79).abs() < 2.0 * s, "{d} ± {s}");

    let ruler_dir = tmp.path().join("ruler");
    run_ok(&["--config", &cfg, "--out", ruler_dir.to_str().unwrap(), "--svg", "ruler"]);
    assert!(ruler_dir.join("reference_curve.csv").exists());
    assert!(ruler_dir.join("ruler.svg").exists());
    let measured = write_config(
        tmp.path(),
        "measured.toml",
        "measured.toml",
        &[("noise_sigma = 0.02", "noise_sigma = 0.02\nruler_csv = \"ruler/ruler.csv\"")],
    );
    let imported = tmp.path().join("imported");
    run_ok(&["--config", &measured, "--seed", "5", "--out", imported.to_str().unwrap(), "dispersion-fit"]);
    assert_eq!(
        fs::read(analytic.join("dispersion_fit.json")).unwrap(),
        fs::read(imported.join("dispersion_fit.json")).unwrap()
    );
    let manifest = json(&imported.join("manifest.json"));
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn short_ruler_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scan_dir = tmp.path().join("scan");
    let cfg = config("measured.toml");
    run_ok(&["--config", &cfg, "--out", scan_dir.to_str().unwrap(), "dispersion-fit"]);
    let short = write_config(
        tmp.path(),
        "short.toml",
        "measured.toml",
        &[
            ("ruler_max_delay_ps = 40.0", "ruler_max_delay_ps = 4.0"),
            ("noise_sigma = 0.02", "noise_sigma = 0.02\nscan_csv = \"scan/length_scan.csv\""),
        ],
    );
    let out = sagnac(&["--config", &short, "--out", tmp.path().join("o").to_str().unwrap(), "dispersion-fit"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ruler too short"));
}

#[test]
fn performance_in_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_dir = tmp.path().join("csv");
    run_ok(&["--out", csv_dir.to_str().unwrap(), "performance"]);
    let text = fs::read_to_string(csv_dir.join("performance.csv")).unwrap();
    assert!(text.starts_with("quantity,value\nspectral_brightness,"));

    let json_dir = tmp.path().join("json");
    run_ok(&["--format", "json", "--out", json_dir.to_str().unwrap(), "performance"]);
    let r = json(&json_dir.join("performance.json"));
    let b = r["spectral_brightness"].as_f64().unwrap();
    assert!((b / 1.96e6 - 1.0).abs() < 0.05);
    assert!((r["pairs_per_coherence_time"].as_f64().unwrap() / 0.1 - 1.0).abs() < 0.05);
}

#[test]
fn locked_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(".sagnac.lock"), "123\n").unwrap();
    let out = sagnac(&["--out", tmp.path().to_str().unwrap(), "performance"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
}
