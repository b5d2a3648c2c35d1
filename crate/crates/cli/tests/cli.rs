use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn spsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spsim")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = spsim(args);
    assert!(
        out.status.success(),
        "spsim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails(args: &[&str]) -> String {
    let out = spsim(args);
    assert!(!out.status.success(), "spsim {args:?} should have failed");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sha256(path: &Path) -> String {
    spsim::output::sha256_hex(&std::fs::read(path).unwrap())
}

const SMALL_HBT: &str = "seed = 42\n[train]\nn_pulses = 200000\n[chain]\neta_setup = 0.2\n[analysis]\nmode = hbt\nirf = none\n";

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hbt.ini", SMALL_HBT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "hbt", "--config", &cfg, "--out", a.to_str().unwrap()]);
    ok(&["--threads", "3", "simulate", "hbt", "--config", &cfg, "--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(a.join("hbt.ptag")).unwrap(), std::fs::read(b.join("hbt.ptag")).unwrap());
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap()
    );
    let c = dir.path().join("c");
    ok(&["simulate", "hbt", "--config", &cfg, "--seed", "43", "--out", c.to_str().unwrap()]);
    assert_ne!(std::fs::read(a.join("hbt.ptag")).unwrap(), std::fs::read(c.join("hbt.ptag")).unwrap());
}

#[test]
fn hom_without_interferometer_section_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hom.ini", "seed = 1\n[train]\nn_pulses = 1000\n");
    let out = dir.path().join("out");
    let err = fails(&["simulate", "hom", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(err.contains("[mzi]"), "{err}");
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.ini", "seed = 1\n\n[emitter]\nt1_ns = 1.7\nlifetime = 3\n");
    let err = fails(&["simulate", "decay", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(err.contains("line 5") && err.contains("lifetime"), "{err}");
    let cfg = write(dir.path(), "bad2.ini", "[train]\nn_pulses = -3\n");
    let err = fails(&["simulate", "decay", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn manifest_echoes_resolved_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.ini", "[train]\nn_pulses = 1000\n");
    let out = dir.path().join("out");
    ok(&["simulate", "decay", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["train"]["rep_rate_khz"], 76_227.93);
    assert_eq!(m["config"]["emitter"]["t1_ns"], 1.725);
    assert_eq!(m["config"]["chain"]["eta_setup"], 0.0217);
    assert_eq!(m["outputs"][0]["file"], "decay.ptag");
    assert_eq!(m["outputs"][0]["sha256"], sha256(&out.join("decay.ptag")).as_str());
}

#[test]
fn budget_from_the_reference_recipe() {
    let dir = TempDir::new().unwrap();
    let recipe = ok(&["recipe", "fig3b"]).stdout;
    let cfg = write(dir.path(), "fig3b.ini", &String::from_utf8(recipe).unwrap());
    let out = dir.path().join("out");
    ok(&["analyze", "budget", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let r = json(&out.join("budget.json"));
    let total = r["total_efficiency_pct"].as_f64().unwrap();
    assert!((total - 2.17).abs() < 0.005, "{total}");
    let b = r["first_lens_brightness_pct"].as_f64().unwrap();
    assert!((b - 65.3).abs() < 0.5, "{b}");
}

#[test]
fn truncated_ptag_reports_the_offset() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hbt.ini", SMALL_HBT);
    let sim = dir.path().join("sim");
    ok(&["simulate", "hbt", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    let bytes = std::fs::read(sim.join("hbt.ptag")).unwrap();
    // Cut the file in the middle of the record that starts at byte 20 + 9·5.
    let cut = dir.path().join("cut.ptag");
    std::fs::write(&cut, &bytes[..20 + 9 * 5 + 4]).unwrap();
    let err = fails(&["analyze", "g2", "--input", cut.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(err.contains("byte 65"), "{err}");
}

#[test]
fn analysis_records_input_checksums_and_reruns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hbt.ini", SMALL_HBT);
    let sim = dir.path().join("sim");
    ok(&["simulate", "hbt", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    let input = sim.join("hbt.ptag");
    let res = dir.path().join("res");
    ok(&["analyze", "g2", "--config", &cfg, "--input", input.to_str().unwrap(), "--out", res.to_str().unwrap()]);
    let r = json(&res.join("g2.json"));
    assert_eq!(r["inputs"][0]["sha256"], sha256(&input).as_str());
    assert!(r["g2_zero"].as_f64().unwrap() < 0.3);
    let csv = std::fs::read_to_string(res.join("g2_histogram.csv")).unwrap();
    assert!(csv.starts_with("delay_ps,counts,fit\n"));

    for manifest in [sim.join("manifest.json"), res.join("manifest.json")] {
        let again = dir.path().join("again");
        ok(&["rerun", "--manifest", manifest.to_str().unwrap(), "--out", again.to_str().unwrap()]);
        std::fs::remove_dir_all(&again).unwrap();
    }

    let mut m = json(&sim.join("manifest.json"));
    m["outputs"][0]["sha256"] = Value::from("0".repeat(64));
    let forged = write(dir.path(), "forged.json", &m.to_string());
    let err = fails(&["rerun", "--manifest", &forged, "--out", dir.path().join("x").to_str().unwrap()]);
    assert!(err.contains("differs"), "{err}");
}

#[test]
fn cavity_report_and_unstable_geometry() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "cav.ini", "[cavity]\nlength_um = 5.5\nscan_start_um = 5\nscan_stop_um = 6\n");
    let out = dir.path().join("out");
    ok(&["cavity", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let r = json(&out.join("cavity.json"));
    let centre = r["stopband"]["center_nm"].as_f64().unwrap();
    assert!((centre - 755.0).abs() <= 15.0, "{centre}");
    assert!((r["longitudinal_spacing_mev"].as_f64().unwrap() - 112.7).abs() < 0.1);
    for f in ["dbr_reflectivity.csv", "modes.csv", "decay_rate.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let cfg = write(dir.path(), "unstable.ini", "[cavity]\nlength_um = 20\n");
    let err = fails(&["cavity", "--config", &cfg, "--out", dir.path().join("u").to_str().unwrap()]);
    assert!(err.to_lowercase().contains("unstable"), "{err}");
}

#[test]
fn csv_inputs_for_dop_and_linewidth() {
    let dir = TempDir::new().unwrap();
    let scan: String = (0..19)
        .map(|i| {
            let a = 10.0 * i as f64;
            let c = 5000.0 * (1.0 + 0.9 * (2.0 * (a - 20.0f64).to_radians()).cos());
            format!("{a},{c}\n")
        })
        .collect();
    let path = write(dir.path(), "scan.csv", &format!("angle_deg,counts\n{scan}"));
    let out = dir.path().join("dop");
    ok(&["analyze", "dop", "--input", &path, "--out", out.to_str().unwrap()]);
    let r = json(&out.join("dop.json"));
    assert!((r["rho"].as_f64().unwrap() - 0.9).abs() < 1e-6);

    let bad = write(dir.path(), "bad.csv", "angle_deg,counts\n0,1\n10,x\n");
    let err = fails(&["analyze", "dop", "--input", &bad, "--out", out.to_str().unwrap()]);
    assert!(err.contains("line 3"), "{err}");

    let sim = dir.path().join("spec");
    let cfg = write(dir.path(), "s.ini", "seed = 5\n[analysis]\nmode = spectrum\n");
    ok(&["simulate", "spectrum", "--config", &cfg, "--out", sim.to_str().unwrap()]);
    let res = dir.path().join("lw");
    ok(&["analyze", "linewidth", "--input", sim.join("spectrum.csv").to_str().unwrap(), "--out", res.to_str().unwrap()]);
    let fwhm = json(&res.join("linewidth.json"))["fwhm_uev"].as_f64().unwrap();
    assert!((fwhm / 200.0 - 1.0).abs() < 0.05, "{fwhm}");
}

#[test]
fn usage_errors_exit_nonzero() {
    fails(&["run"]);
    fails(&["run", "fig9z", "--out", "/tmp/never"]);
    fails(&["analyze", "hom", "--input", "/nonexistent.ptag", "--out", "/tmp/never"]);
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "hbt.ini", SMALL_HBT);
    let err = fails(&["simulate", "hbt", "--config", &cfg]);
    assert!(err.contains("--out"), "{err}");
}

#[test]
fn recipe_listing() {
    let names = String::from_utf8(ok(&["recipe"]).stdout).unwrap();
    let names: Vec<&str> = names.lines().collect();
    assert_eq!(names, ["fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c", "fig3d"]);
}
