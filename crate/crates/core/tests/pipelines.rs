use num_complex::Complex64;
use shortlab::config::parse_config;
use shortlab::output::verify_digests;
use shortlab::run::run;
use shortlab::theorem_lab::{prop12_windowed_orbit, random_choices, Prop12Params};

#[test]
fn prop12_bound_holds_when_hypothesis_does() {
    // |α|³ < |β| ≤ |α|²: both backward maps contract
    let pp = Prop12Params::new(Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.0), 3).unwrap();
    assert!((pp.analytic_bound() - 1.0 / 3.0).abs() < 1e-15);
    for i in 0..10 {
        let choices = random_choices(10_061, 3, &format!("prop12-{i}"));
        let o = prop12_windowed_orbit(&choices, &pp, 60, 10_000).unwrap();
        assert!(o.orbit_bound <= 2.0 * pp.analytic_bound(), "schedule {i}: {}", o.orbit_bound);
        assert!(o.max_consistency_gap < 1e-12);
    }
}

#[test]
fn manifest_digests_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[run]\ncommand = region-test\nout_dir = {}\n[params]\nrandom_schedules = 3\n",
        dir.path().display()
    );
    let out = run(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(out.exit_code, 0);
    assert!(out.manifest.outputs.contains_key("region_trace.csv"));
    let xi = out.manifest.summary["xi"].as_f64().unwrap();
    assert!((xi - 0.5625f64.powf(0.25)).abs() < 1e-15);
    assert!(verify_digests(dir.path(), &out.manifest).unwrap().is_empty());
    let on_disk = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert_eq!(on_disk, out.manifest.to_json().unwrap());
}

#[test]
fn violations_give_exit_code_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "[run]\ncommand = prop12\nout_dir = {}\n[params]\nsteps = 200\nschedules = 2\nbound_factor = 0.1\n",
        dir.path().display()
    );
    let out = run(&parse_config(&text).unwrap()).unwrap();
    assert_eq!(out.exit_code, 1);
    assert_eq!(out.manifest.violations["orbit_bound"], 2);
    assert!(dir.path().join("violations.csv").exists());
}

#[test]
fn hypothesis_violation_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("[run]\ncommand = prop12\nout_dir = {}\n[params]\nkdeg = 2\n", dir.path().display());
    assert!(matches!(run(&parse_config(&text).unwrap()), Err(shortlab::Error::HypothesisViolated(_))));
}

#[test]
fn manifest_config_reproduces_digests() {
    let first = tempfile::tempdir().unwrap();
    let text = format!(
        "[run]\ncommand = basin\nseed = 42\nout_dir = {}\n[sequence]\na = 0.4\n[grid]\nwidth = 16\nheight = 12\n",
        first.path().display()
    );
    let out = run(&parse_config(&text).unwrap()).unwrap();
    let json = std::fs::read_to_string(first.path().join("manifest.json")).unwrap();
    let m: shortlab::output::RunManifest = serde_json::from_str(&json).unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&shortlab::config::values_to_ini(&m.config)).unwrap();
    cfg.set_out_dir(second.path().to_str().unwrap());
    let again = run(&cfg).unwrap();
    assert_eq!(again.manifest.outputs, out.manifest.outputs);
    assert_eq!(again.manifest, out.manifest);
}
