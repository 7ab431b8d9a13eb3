//! Acceptance suite: one test per criterion, each printing a single
//! `PASS criterion N: ...` or `FAIL criterion N: ...` line before asserting.
//!
//! Run with `cargo test -p shortlab --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use shortlab::basin::{filtration_invariance_check, render_slice, sign_coherence, ClassifyParams, GridSpec};
use shortlab::boundary::{
    alpha0_for, alpha0_grid_check, disc_spiral, phi_alpha, phi_alpha_residual, sandwich_check, stagewise_construct,
    StagewiseParams,
};
use shortlab::config::{parse_config, Command};
use shortlab::maps::{scaling_conjugation_check, MapSequence, MapSpec};
use shortlab::potentials::{envelope_monotonicity_check, select_green_block, subaverage_suite};
use shortlab::theorem_lab::{
    disjoint_shorts, eta_growth_check, fb_inside_short, prop12_windowed_orbit, random_bounded_schedule,
    random_choices, region_test, variety_avoidance_check, DisjointFamily, Prop12Params, VarietySets,
};
use shortlab::FiltrationSpec;

const SEED: u64 = 20_240_601;

fn verdict(n: u32, ok: bool, msg: String) {
    println!("{} criterion {n}: {msg}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n}: {msg}");
}

#[test]
fn criterion_01_conjugation_identity() {
    let mut worst = 0f64;
    for a in [0.3, 0.5] {
        for n in 0..=10 {
            worst = worst.max(scaling_conjugation_check(a, n, 1000, SEED).unwrap());
        }
    }
    verdict(1, worst < 1e-12, format!("max relative error {worst:.3e} over a in {{0.3, 0.5}}, n <= 10, 1000 points"));
}

#[test]
fn criterion_02_filtration_invariance() {
    let a = 0.5;
    let s = MapSequence::power_tower(3, 2, a).unwrap();
    let f = FiltrationSpec::standard(3, 1.0 + a + 0.1).unwrap();
    let rep = filtration_invariance_check(&s, &f, 10_000, 20, SEED).unwrap();
    verdict(
        2,
        rep.violations == 0 && rep.orbit_violations == 0,
        format!(
            "{} samples, first-step violations {}, 20-step orbit violations {}",
            rep.samples, rep.violations, rep.orbit_violations
        ),
    );
}

#[test]
fn criterion_03_sign_coherence() {
    let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
    let p = ClassifyParams::for_tower(3, 0.5).unwrap();
    let r = render_slice(&s, &GridSpec::default_slice(3, 200), &p, true).unwrap();
    let c = sign_coherence(&r, 1e-3).unwrap();
    verdict(
        3,
        c.fraction() >= 0.995,
        format!("agreement {:.5} on {} compared pixels ({} undecided)", c.fraction(), c.compared, c.undecided),
    );
}

#[test]
fn criterion_04_envelope_monotonicity() {
    let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
    let rep = envelope_monotonicity_check(&s, 1000, 30, 2.0, 1e-12, SEED).unwrap();
    verdict(
        4,
        rep.violations == 0,
        format!("{} violations, largest increase {:.3e}", rep.violations, rep.worst_increase),
    );
}

#[test]
fn criterion_05_radial_graph() {
    let (eps, r) = (0.1, 5.0);
    let alpha = alpha0_for(eps, r).unwrap();
    let ws = disc_spiral(32, r);
    let mut max_res = 0f64;
    let mut exact = true;
    for a in 0..64 {
        let xi = Complex64::from_polar(1.0, std::f64::consts::TAU * a as f64 / 64.0);
        for w in &ws {
            let phi = phi_alpha(xi, *w, alpha).unwrap();
            max_res = max_res.max(phi_alpha_residual(xi, *w, alpha, phi));
            exact &= phi_alpha(xi, *w, 0.0).unwrap() == 1.0;
        }
    }
    let checks: Vec<_> =
        [alpha, alpha / 2.0, alpha / 10.0].iter().map(|&al| alpha0_grid_check(eps, r, al, 64, 32).unwrap()).collect();
    let sup = checks.iter().map(|c| c.sup_deviation).fold(0.0, f64::max);
    verdict(
        5,
        max_res < 1e-12 && exact && checks.iter().all(|c| c.passes),
        format!("max residual {max_res:.3e}, alpha=0 exact {exact}, sup|phi-1| {sup:.5} <= {eps} at alpha0 {alpha}"),
    );
}

#[test]
fn criterion_06_green_growth() {
    let spec = MapSpec::shift_like(3, 2, 2, Complex64::new(1.0, 0.0)).unwrap();
    let (block, reps) = select_green_block(&spec, 4.0, 5, 1000, SEED).unwrap();
    let chosen = reps.iter().find(|r| r.block == block).unwrap();
    let all: Vec<String> = reps.iter().map(|r| format!("block {}: {} violations", r.block, r.violations)).collect();
    verdict(
        6,
        chosen.violations == 0,
        format!("selected block {block}, worst log margin {:.3} ({})", chosen.worst_margin, all.join(", ")),
    );
}

#[test]
fn criterion_07_region_suite() {
    let (alpha, beta) = (Complex64::new(0.5, 0.0), Complex64::new(1.0 / 9.0, 0.0));
    let (r, m) = (4.0, 4);
    let mut failures = 0;
    let mut max_xi = 0f64;
    for i in 0..100 {
        let (p, q) = random_bounded_schedule(20, r, m, 8, SEED, i);
        let res = region_test(&p, &q, alpha, beta, r, m).unwrap();
        let ok = res.all_of_c2
            || res.xi.is_some_and(|xi| xi < 1.0 && res.case_trace.iter().all(|t| t.log_ratio <= xi.ln()));
        failures += usize::from(!ok);
        max_xi = max_xi.max(res.xi.unwrap_or(0.0));
    }
    let fast = region_test(&[3, 1, 2], &[0, 0, 0], alpha, beta, r, m).unwrap().all_of_c2;
    verdict(
        7,
        failures == 0 && fast,
        format!("{failures} of 100 schedules fail, max xi {max_xi:.6}, q=0 gives all of C^2: {fast}"),
    );
}

#[test]
fn criterion_08_prop12_orbit_bound() {
    let (alpha, beta) = (Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.0));
    let hypothesis = Prop12Params::new(alpha, beta, 2);
    // measured regardless, so the report shows how far the orbit gets
    let pp = Prop12Params::unchecked(alpha, beta, 2);
    let (depth, steps) = (60, 10_000);
    let limit = 2.0 * pp.analytic_bound();
    let mut worst = 0f64;
    let mut over = 0;
    for i in 0..10 {
        let choices = random_choices(steps + depth + 1, SEED, &format!("prop12-{i}"));
        let o = prop12_windowed_orbit(&choices, &pp, depth, steps).unwrap();
        worst = worst.max(o.orbit_bound);
        over += usize::from(o.orbit_bound > limit);
    }
    let hyp = match &hypothesis {
        Ok(_) => "hypothesis holds".to_string(),
        Err(e) => format!("hypothesis rejected ({e})"),
    };
    verdict(
        8,
        hypothesis.is_ok() && over == 0,
        format!("{hyp}; {over} of 10 schedules exceed 2B = {limit}, max |X_2,n| {worst:.4e}"),
    );
}

#[test]
fn criterion_09_disjoint_shorts() {
    let fam = DisjointFamily::new(3, 0.5, 3, 200).unwrap();
    let rep = disjoint_shorts(&fam, 100_000, SEED).unwrap();
    let frac = rep.undecided as f64 / rep.samples as f64;
    verdict(
        9,
        rep.double_memberships == 0 && frac < 0.01,
        format!(
            "{} double memberships, undecided fraction {frac:.5}, members per domain {:?}",
            rep.double_memberships, rep.members
        ),
    );
}

#[test]
fn criterion_10_variety_avoidance() {
    let r = 2.0;
    let vs = VarietySets::new(0.5 / r, r).unwrap();
    let f = FiltrationSpec::standard(3, r).unwrap();
    let base = MapSequence::power_tower(3, 2, 0.5).unwrap();
    let rep = variety_avoidance_check(&vs, &f, &base, 10_000, 1000, SEED).unwrap();
    verdict(
        10,
        rep.violations == 0 && rep.members_in_image == 0,
        format!(
            "{} of {} images outside V+, {} of {} basin members in the image",
            rep.violations, rep.samples, rep.members_in_image, rep.basin_members
        ),
    );
}

#[test]
fn criterion_11_fb_inclusion() {
    let rep = fb_inside_short(0.5, 3, 1000, SEED, 1e-6).unwrap();
    verdict(
        11,
        rep.violations == 0,
        format!(
            "{} violations, max psi - log a {:.4e}, {} unconverged, {} tries",
            rep.violations, rep.max_excess, rep.unconverged, rep.tries
        ),
    );
}

#[test]
fn criterion_12_eta_growth() {
    let s = MapSequence::shifted_tower(3, 0.5).unwrap();
    let rep = eta_growth_check(2.0, &s, 40).unwrap();
    verdict(
        12,
        rep.violations == 0,
        format!("{} of {} indices violate, min log margin {:.4}", rep.violations, rep.checked, rep.min_margin),
    );
}

#[test]
fn criterion_13_stagewise_sandwich() {
    let p = StagewiseParams::new(3, 5.0, 0.1, 6).unwrap();
    let res = stagewise_construct(&p).unwrap();
    let sw = sandwich_check(&res, 10_000, SEED).unwrap();
    verdict(
        13,
        sw.holds(),
        format!(
            "lower {} escaping of {} ({} beyond the stage-0 graph, {} undecided); upper {} of {} members \
             (max modulus {:.5}, {} undecided); drift {:.5} <= {:.5}",
            sw.lower_violations,
            sw.lower_samples,
            sw.lower_violations_beyond_stage0,
            sw.lower_undecided,
            sw.upper_violations,
            sw.upper_members,
            sw.max_member_modulus,
            sw.upper_undecided,
            sw.drift_total,
            sw.drift_bound
        ),
    );
}

#[test]
fn criterion_14_subaveraging() {
    let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
    let rep = subaverage_suite(&s, 50, 0.05, 64, 1.0, 1e-3, SEED).unwrap();
    verdict(
        14,
        rep.margins.len() == 50 && rep.min_margin >= -1e-6,
        format!(
            "min margin {:.3e} over {} centres ({} unconverged skipped, {} rejected)",
            rep.min_margin,
            rep.margins.len(),
            rep.unconverged,
            rep.rejected
        ),
    );
}

/// Small configurations exercising every pipeline.
fn pipeline_config(cmd: Command) -> String {
    let params = match cmd {
        Command::Basin => "[sequence]\na = 0.5\n[grid]\nwidth = 24\nheight = 20\n[params]\npsi = true\n",
        Command::Potential => {
            "[sequence]\na = 0.5\n[grid]\nwidth = 24\nheight = 20\n[params]\nsubaverage_points = 4\ncircle_samples = 16\n"
        }
        Command::Green => "[params]\nsamples = 100\n",
        Command::Filtration => "[sequence]\na = 0.5\n[params]\nsamples = 300\n",
        Command::RegionTest => "[params]\nrandom_schedules = 5\n",
        Command::Prop12 => "[params]\nsteps = 500\nschedules = 3\n",
        Command::Disjoint => "[params]\nsamples = 2000\n",
        Command::AvoidVariety => "[params]\nsamples = 500\nmembers = 50\n",
        Command::FbInclusion => "[params]\nsamples = 50\n",
        Command::EtaCheck => "",
        Command::Boundary => "[params]\nxi_samples = 16\nw_samples = 8\n",
        Command::Stagewise => "[params]\nstages = 2\nsamples = 300\n",
        Command::Levi => "[params]\nstages = 2\nsamples = 4\n",
    };
    format!("[run]\ncommand = {}\nseed = 11\n{params}", cmd.name())
}

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timing.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_15_determinism() {
    let mut differing = vec![];
    let mut files = 0;
    for cmd in Command::ALL {
        let cfg = parse_config(&pipeline_config(cmd)).unwrap();
        let mut runs = vec![];
        for threads in [1, 4] {
            let dir = tempfile::tempdir().unwrap();
            let mut c = cfg.clone();
            c.set_out_dir(dir.path().to_str().unwrap());
            c.set_threads(shortlab::config::Threads::Fixed(threads));
            shortlab::run::run(&c).unwrap_or_else(|e| panic!("{}: {e}", cmd.name()));
            runs.push(read_outputs(dir.path()));
        }
        files += runs[0].len();
        if runs[0] != runs[1] {
            differing.push(cmd.name());
        }
    }
    verdict(
        15,
        differing.is_empty(),
        format!("13 pipelines x 2 runs (1 and 4 threads), {files} files per run, differing: {differing:?}"),
    );
}
