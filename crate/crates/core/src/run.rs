//! Batch pipelines behind the command-line tool.
//!
//! [`run`] executes one configured command inside a dedicated thread pool,
//! writes its artifacts and a `manifest.json` with SHA-256 digests of every
//! other output, and returns the exit code: 0 when all checks hold, 1 when
//! some sampled check reported violations. Errors map to exit code 2 in
//! [`run_exit_code`].

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::basin::{capture_absorbing_check, filtration_invariance_check, render_slice, sign_coherence, ClassifyParams, GridSpec, OrbitClass, Raster};
use crate::boundary::{
    alpha0_grid_check, defining_function_checks, disc_spiral, phi_alpha, phi_alpha_range, phi_alpha_residual,
    sandwich_check, stagewise_construct, FaceGrid, GraphFunction, StagewiseParams, StagewiseResult,
};
use crate::config::{Command, RunConfig, Threads};
use crate::error::{Error, Result};
use crate::geometry::{ComplexVector, FiltrationSpec};
use crate::maps::{MapSequence, MapSpec};
use crate::output::{fmt_f64, pgm, ArtifactWriter, CsvTable, RunManifest};
use crate::potentials::{green_growth_check, select_green_block, subaverage_suite};
use crate::theorem_lab::{
    disjoint_shorts, eta_growth_check, fb_inside_short, prop12_windowed_orbit, random_bounded_schedule,
    random_choices, region_test, variety_avoidance_check, DisjointFamily, Prop12Params, RegionTestResult,
    VarietySets,
};

/// Largest `p` drawn for random region-test schedules.
const SCHEDULE_P_MAX: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: RunManifest,
}

struct Ctx {
    w: ArtifactWriter,
    summary: BTreeMap<String, Json>,
    violations: BTreeMap<String, u64>,
    details: CsvTable,
}

impl Ctx {
    fn note(&mut self, key: &str, v: impl Serialize) {
        let v = serde_json::to_value(v).unwrap_or(Json::Null);
        self.summary.insert(key.to_string(), v);
    }

    fn check(&mut self, name: &str, count: usize) {
        *self.violations.entry(name.to_string()).or_default() += count as u64;
    }

    fn detail(&mut self, name: &str, index: usize, detail: String) {
        self.details.push(vec![name.to_string(), index.to_string(), detail]);
    }

    fn total(&self) -> u64 {
        self.violations.values().sum()
    }
}

/// Runs the configured command; see the module docs for the exit codes.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let threads = match cfg.threads {
        Threads::Auto => 0,
        Threads::Fixed(n) => n,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let mut ctx = Ctx {
        w: ArtifactWriter::new(Path::new(&cfg.out_dir))?,
        summary: BTreeMap::new(),
        violations: BTreeMap::new(),
        details: CsvTable::new(&["check", "index", "detail"]),
    };
    pool.install(|| dispatch(cfg, &mut ctx))?;
    if ctx.total() > 0 {
        let csv = ctx.details.render();
        ctx.w.write("violations.csv", &csv)?;
    }
    let exit_code = if ctx.total() > 0 { 1 } else { 0 };
    let manifest = RunManifest {
        tool: "shortlab".into(),
        version: crate::VERSION.into(),
        command: cfg.command.name().into(),
        config: reproducible_config(cfg),
        outputs: ctx.w.digests().clone(),
        violations: ctx.violations.clone(),
        summary: ctx.summary.clone(),
        exit_code,
    };
    ctx.w.write_untracked("manifest.json", &manifest.to_json()?)?;
    let timing = json!({ "command": cfg.command.name(), "wall_seconds": start.elapsed().as_secs_f64() });
    ctx.w.write_untracked("timing.json", &format!("{timing:#}\n"))?;
    Ok(RunOutcome { exit_code, manifest })
}

/// Configuration minus the settings that only affect where and how fast a
/// run executes, so manifests compare across output directories and pools.
fn reproducible_config(cfg: &RunConfig) -> BTreeMap<String, BTreeMap<String, crate::config::Value>> {
    let mut v = cfg.values.clone();
    if let Some(r) = v.get_mut("run") {
        r.remove("out_dir");
        r.remove("threads");
    }
    v
}

/// [`run`] with errors reported on stderr and mapped to exit code 2.
pub fn run_exit_code(cfg: &RunConfig) -> i32 {
    match run(cfg) {
        Ok(o) => o.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    match cfg.command {
        Command::Basin => basin(cfg, ctx),
        Command::Potential => potential(cfg, ctx),
        Command::Green => green(cfg, ctx),
        Command::Filtration => filtration(cfg, ctx),
        Command::RegionTest => region(cfg, ctx),
        Command::Prop12 => prop12(cfg, ctx),
        Command::Disjoint => disjoint(cfg, ctx),
        Command::AvoidVariety => avoid_variety(cfg, ctx),
        Command::FbInclusion => fb_inclusion(cfg, ctx),
        Command::EtaCheck => eta_check(cfg, ctx),
        Command::Boundary => boundary(cfg, ctx),
        Command::Stagewise => stagewise(cfg, ctx),
        Command::Levi => levi(cfg, ctx),
    }
}

fn build_sequence(kind: &str, k: usize, d: u32, a: f64, n_max: usize) -> Result<MapSequence> {
    match kind {
        "power_tower" => MapSequence::power_tower(k, d, a)?.with_n_max(n_max),
        "shifted_tower" => MapSequence::shifted_tower(k, a)?.with_n_max(n_max),
        other => Err(Error::InvalidParameter(format!("unknown sequence kind {other}"))),
    }
}

fn sequence(cfg: &RunConfig) -> Result<MapSequence> {
    build_sequence(
        cfg.str("sequence", "kind"),
        cfg.usize("sequence", "k"),
        cfg.usize("sequence", "d") as u32,
        cfg.f64("sequence", "a"),
        cfg.usize("sequence", "n_max"),
    )
}

fn unit(k: usize, axis: usize) -> Result<ComplexVector> {
    if axis == 0 || axis > k {
        return Err(Error::InvalidParameter(format!("slice axis {axis} outside 1..={k}")));
    }
    let mut v = ComplexVector::zeros(k);
    v.entries[axis - 1] = Complex64::new(1.0, 0.0);
    Ok(v)
}

fn grid(cfg: &RunConfig) -> Result<GridSpec> {
    let k = cfg.usize("sequence", "k");
    let g = GridSpec {
        base: ComplexVector::zeros(k),
        dir_u: unit(k, cfg.usize("grid", "axis_u"))?,
        dir_v: unit(k, cfg.usize("grid", "axis_v"))?,
        width: cfg.usize("grid", "width"),
        height: cfg.usize("grid", "height"),
        u_min: cfg.f64("grid", "u_min"),
        u_max: cfg.f64("grid", "u_max"),
        v_min: cfg.f64("grid", "v_min"),
        v_max: cfg.f64("grid", "v_max"),
    };
    g.validate()?;
    Ok(g)
}

fn classify_params(cfg: &RunConfig) -> Result<ClassifyParams> {
    let k = cfg.usize("sequence", "k");
    let f = FiltrationSpec::standard(k, cfg.f64("params", "radius"))?;
    ClassifyParams::new(f, cfg.f64("params", "c_in"), cfg.usize("sequence", "n_max") + 1, cfg.f64("params", "margin"))
}

fn class_csv(r: &Raster) -> String {
    let mut t = CsvTable::new(&["row", "col", "u", "v", "class", "step", "axis", "psi", "psi_converged"]);
    for (row, cr) in r.classes.iter().enumerate() {
        for (col, c) in cr.iter().enumerate() {
            let (u, v) = r.grid.params(row, col);
            let (name, step, axis) = match c {
                OrbitClass::Attracted { step } => ("attracted", step.to_string(), String::new()),
                OrbitClass::Escaped { step, axis } => ("escaped", step.to_string(), axis.to_string()),
                OrbitClass::Undecided => ("undecided", String::new(), String::new()),
            };
            let (psi, conv) = match &r.psi {
                Some(p) => (fmt_f64(p[row][col].value), p[row][col].converged.to_string()),
                None => (String::new(), String::new()),
            };
            t.push(vec![row.to_string(), col.to_string(), fmt_f64(u), fmt_f64(v), name.into(), step, axis, psi, conv]);
        }
    }
    t.render()
}

fn class_pgm(r: &Raster) -> Result<String> {
    let px: Vec<u8> = r.classes.iter().flatten().map(|c| c.gray()).collect();
    pgm(r.grid.width, r.grid.height, &px)
}

fn note_counts(ctx: &mut Ctx, r: &Raster) {
    let (a, e, u) = r.counts();
    ctx.note("attracted", a);
    ctx.note("escaped", e);
    ctx.note("undecided", u);
}

fn basin(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let s = sequence(cfg)?;
    let g = grid(cfg)?;
    let p = classify_params(cfg)?;
    let r = render_slice(&s, &g, &p, cfg.bool("params", "psi"))?;
    ctx.w.write("basin.pgm", &class_pgm(&r)?)?;
    ctx.w.write("classes.csv", &class_csv(&r))?;
    note_counts(ctx, &r);
    let samples = 1000;
    let (attracted, bad) = capture_absorbing_check(&s, &p, samples, cfg.seed, p.radius())?;
    ctx.note("capture_samples", samples);
    ctx.note("capture_attracted", attracted);
    ctx.check("capture_absorbing", bad);
    Ok(())
}

fn potential(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let s = sequence(cfg)?;
    let g = grid(cfg)?;
    let p = classify_params(cfg)?;
    let r = render_slice(&s, &g, &p, true)?;
    let psi = r.psi.as_ref().expect("potential channel requested");
    let px: Vec<u8> = psi
        .iter()
        .flatten()
        .map(|e| (127.5 * (1.0 + e.value.tanh())).round().clamp(0.0, 255.0) as u8)
        .collect();
    ctx.w.write("potential.pgm", &pgm(g.width, g.height, &px)?)?;
    ctx.w.write("classes.csv", &class_csv(&r))?;
    note_counts(ctx, &r);
    let coh = sign_coherence(&r, p.margin)?;
    ctx.note("coherence", coh);
    ctx.note("coherence_fraction", coh.fraction());
    let min_coh = cfg.f64("params", "min_coherence");
    ctx.check("sign_coherence", (coh.fraction() < min_coh) as usize);
    if coh.fraction() < min_coh {
        ctx.detail("sign_coherence", 0, format!("fraction {} below {}", coh.fraction(), min_coh));
    }
    let suite = subaverage_suite(
        &s,
        cfg.usize("params", "subaverage_points"),
        cfg.f64("params", "subaverage_radius"),
        cfg.usize("params", "circle_samples"),
        cfg.f64("params", "interior_radius"),
        p.margin,
        cfg.seed,
    )?;
    let floor = cfg.f64("params", "subaverage_floor");
    let mut t = CsvTable::new(&["index", "margin"]);
    let mut bad = 0;
    for (i, m) in suite.margins.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*m)]);
        if *m < floor {
            bad += 1;
            ctx.detail("subaverage", i, format!("margin {m}"));
        }
    }
    ctx.w.write("subaverage.csv", &t.render())?;
    ctx.note("subaverage_min_margin", suite.min_margin);
    ctx.note("subaverage_rejected", suite.rejected);
    ctx.note("subaverage_unconverged", suite.unconverged);
    ctx.check("subaverage", bad);
    Ok(())
}

fn green(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let delta = Complex64::new(cfg.f64("params", "delta_re"), cfg.f64("params", "delta_im"));
    let spec = MapSpec::shift_like(
        cfg.usize("params", "k"),
        cfg.usize("params", "nu"),
        cfg.usize("params", "d") as u32,
        delta,
    )?;
    let (radius, levels, samples) =
        (cfg.f64("params", "radius"), cfg.usize("params", "levels"), cfg.usize("params", "samples"));
    let (block, reports) = match cfg.str("params", "block") {
        "auto" => select_green_block(&spec, radius, levels, samples, cfg.seed)?,
        b => {
            let b: usize = b.parse().map_err(|_| Error::InvalidParameter(format!("bad block {b}")))?;
            let r = green_growth_check(&spec, b, radius, levels, samples, cfg.seed)?;
            (b, vec![r])
        }
    };
    let mut t = CsvTable::new(&["block", "samples", "levels", "violations", "worst_margin"]);
    for r in &reports {
        t.push(vec![
            r.block.to_string(),
            r.samples.to_string(),
            r.levels.to_string(),
            r.violations.to_string(),
            fmt_f64(r.worst_margin),
        ]);
    }
    ctx.w.write("green_growth.csv", &t.render())?;
    let chosen = reports.iter().find(|r| r.block == block).expect("chosen block has a report");
    ctx.note("block", block);
    ctx.note("worst_margin", chosen.worst_margin);
    ctx.check("green_growth", chosen.violations);
    Ok(())
}

fn filtration(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let s = sequence(cfg)?;
    let f = FiltrationSpec::standard(cfg.usize("sequence", "k"), cfg.f64("params", "radius"))?;
    let rep = filtration_invariance_check(&s, &f, cfg.usize("params", "samples"), cfg.usize("params", "steps"), cfg.seed)?;
    ctx.w.write("filtration.json", &format!("{:#}\n", json!(rep)))?;
    ctx.note("report", &rep);
    ctx.check("first_step_invariance", rep.violations);
    ctx.check("orbit_invariance", rep.orbit_violations);
    Ok(())
}

fn region_row(t: &mut CsvTable, schedule: usize, r: &RegionTestResult) {
    for tr in &r.case_trace {
        t.push(vec![
            schedule.to_string(),
            tr.k.to_string(),
            tr.p.to_string(),
            tr.q.to_string(),
            tr.case.to_string(),
            fmt_f64(tr.log_ratio),
        ]);
    }
}

/// A schedule passes when it is the autonomous case or admits `ξ < 1`
/// dominating every recorded eigenvalue ratio.
fn region_ok(r: &RegionTestResult) -> bool {
    r.all_of_c2 || r.xi.is_some_and(|xi| xi < 1.0 && r.case_trace.iter().all(|t| t.log_ratio <= xi.ln()))
}

fn region(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let alpha = Complex64::new(cfg.f64("params", "alpha"), 0.0);
    let beta = Complex64::new(cfg.f64("params", "beta"), 0.0);
    let (r, m) = (cfg.f64("params", "r"), cfg.usize("params", "m") as u32);
    let len = cfg.usize("params", "length");
    let expand = |v: Vec<u32>| if v.len() == 1 { vec![v[0]; len] } else { v };
    let (p, q) = (expand(cfg.list("params", "p")), expand(cfg.list("params", "q")));
    let mut t = CsvTable::new(&["schedule", "k", "p", "q", "case", "log_ratio"]);
    let main = region_test(&p, &q, alpha, beta, r, m)?;
    region_row(&mut t, 0, &main);
    ctx.note("xi", main.xi);
    ctx.note("all_of_c2", main.all_of_c2);
    ctx.note("swapped", main.swapped);
    ctx.note("worst_k", main.worst_k);
    ctx.note("unswapped_failure", main.unswapped_failure);
    let mut bad = usize::from(!region_ok(&main));
    if bad > 0 {
        ctx.detail("region", 0, format!("configured schedule fails, worst index {:?}", main.worst_k));
    }
    let extra = cfg.usize("params", "random_schedules");
    let mut worst_xi = main.xi.unwrap_or(0.0);
    for i in 0..extra {
        let (ps, qs) = random_bounded_schedule(len, r, m, SCHEDULE_P_MAX, cfg.seed, i as u64);
        let res = region_test(&ps, &qs, alpha, beta, r, m)?;
        region_row(&mut t, i + 1, &res);
        worst_xi = worst_xi.max(res.xi.unwrap_or(0.0));
        if !region_ok(&res) {
            bad += 1;
            ctx.detail("region", i + 1, format!("random schedule fails, worst index {:?}", res.worst_k));
        }
    }
    ctx.w.write("region_trace.csv", &t.render())?;
    ctx.note("random_schedules", extra);
    ctx.note("max_xi", worst_xi);
    ctx.check("region", bad);
    Ok(())
}

fn prop12(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let pp = Prop12Params::new(
        Complex64::new(cfg.f64("params", "alpha"), 0.0),
        Complex64::new(cfg.f64("params", "beta"), 0.0),
        cfg.usize("params", "kdeg") as u32,
    )?;
    let (depth, steps) = (cfg.usize("params", "depth"), cfg.usize("params", "steps"));
    let limit = cfg.f64("params", "bound_factor") * pp.analytic_bound();
    let mut t = CsvTable::new(&["schedule", "z0_re", "z0_im", "orbit_bound", "consistency_gap"]);
    let mut bad = 0;
    let mut worst = 0f64;
    for i in 0..cfg.usize("params", "schedules") {
        let choices = random_choices(steps + depth + 1, cfg.seed, &format!("prop12-{i}"));
        let o = prop12_windowed_orbit(&choices, &pp, depth, steps)?;
        t.push(vec![
            i.to_string(),
            fmt_f64(o.z0.re),
            fmt_f64(o.z0.im),
            fmt_f64(o.orbit_bound),
            fmt_f64(o.max_consistency_gap),
        ]);
        worst = worst.max(o.orbit_bound);
        if o.orbit_bound > limit {
            bad += 1;
            ctx.detail("orbit_bound", i, format!("orbit bound {} exceeds {}", o.orbit_bound, limit));
        }
    }
    ctx.w.write("prop12_orbits.csv", &t.render())?;
    ctx.note("analytic_bound", pp.analytic_bound());
    ctx.note("max_orbit_bound", worst);
    ctx.check("orbit_bound", bad);
    Ok(())
}

fn disjoint(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let fam = DisjointFamily::new(
        cfg.usize("params", "k"),
        cfg.f64("params", "a"),
        cfg.usize("params", "dominant_axis"),
        cfg.usize("params", "n_max"),
    )?;
    let samples = cfg.usize("params", "samples");
    let rep = disjoint_shorts(&fam, samples, cfg.seed)?;
    ctx.w.write("disjoint.json", &format!("{:#}\n", json!(rep)))?;
    ctx.note("report", &rep);
    ctx.check("double_membership", rep.double_memberships);
    ctx.check("case_replay", rep.case_failures);
    let frac = rep.undecided as f64 / samples.max(1) as f64;
    let too_many = frac > cfg.f64("params", "max_undecided_fraction");
    if too_many {
        ctx.detail("undecided", 0, format!("undecided fraction {frac}"));
    }
    ctx.check("undecided", usize::from(too_many));
    Ok(())
}

fn avoid_variety(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let (k, a, r) = (cfg.usize("params", "k"), cfg.f64("params", "a"), cfg.f64("params", "radius"));
    let vs = VarietySets::new(cfg.f64("params", "eps_factor") / r, r)?;
    let f = FiltrationSpec::standard(k, r)?;
    let base = MapSequence::power_tower(k, 2, a)?;
    let rep = variety_avoidance_check(&vs, &f, &base, cfg.usize("params", "samples"), cfg.usize("params", "members"), cfg.seed)?;
    ctx.w.write("avoidance.json", &format!("{:#}\n", json!(rep)))?;
    ctx.note("epsilon", vs.epsilon);
    ctx.note("report", &rep);
    if let Some(z) = &rep.first_violation {
        ctx.detail("image_in_v_plus", 0, format!("{z:?}"));
    }
    ctx.check("image_in_v_plus", rep.violations);
    ctx.check("member_in_image", rep.members_in_image);
    Ok(())
}

fn fb_inclusion(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let rep = fb_inside_short(
        cfg.f64("params", "a"),
        cfg.usize("params", "k"),
        cfg.usize("params", "samples"),
        cfg.seed,
        cfg.f64("params", "tol"),
    )?;
    ctx.w.write("fb_inclusion.json", &format!("{:#}\n", json!(rep)))?;
    ctx.note("report", &rep);
    ctx.check("psi_above_log_a", rep.violations);
    ctx.check("unconverged", rep.unconverged);
    Ok(())
}

fn eta_check(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let s = build_sequence(cfg.str("params", "kind"), cfg.usize("params", "k"), 2, cfg.f64("params", "a"), 60)?;
    let rep = eta_growth_check(cfg.f64("params", "m"), &s, cfg.usize("params", "n_hi"))?;
    ctx.w.write("eta_growth.json", &format!("{:#}\n", json!(rep)))?;
    ctx.note("report", &rep);
    if let Some(n) = rep.first_violation {
        ctx.detail("eta_growth", n, "bound not strict".into());
    }
    ctx.check("eta_growth", rep.violations);
    Ok(())
}

fn boundary(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let (eps, r, alpha) = (cfg.f64("params", "eps"), cfg.f64("params", "r"), cfg.f64("params", "alpha"));
    let (n_xi, n_w) = (cfg.usize("params", "xi_samples"), cfg.usize("params", "w_samples"));
    let ws = disc_spiral(n_w, r);
    let mut t = CsvTable::new(&["xi_index", "w_re", "w_im", "phi", "residual"]);
    let mut max_res = 0f64;
    let mut bad = 0;
    for a in 0..n_xi {
        let xi = Complex64::from_polar(1.0, std::f64::consts::TAU * a as f64 / n_xi as f64);
        for w in &ws {
            let phi = phi_alpha(xi, *w, alpha)?;
            let res = phi_alpha_residual(xi, *w, alpha, phi);
            max_res = max_res.max(res);
            if res >= 1e-12 {
                bad += 1;
                ctx.detail("phi_residual", a, format!("w = {w}, residual {res}"));
            }
            t.push(vec![a.to_string(), fmt_f64(w.re), fmt_f64(w.im), fmt_f64(phi), fmt_f64(res)]);
        }
    }
    ctx.w.write("phi_grid.csv", &t.render())?;
    ctx.check("phi_residual", bad);
    ctx.note("max_residual", max_res);
    let chk = alpha0_grid_check(eps, r, alpha, n_xi.max(4), n_w.max(2))?;
    ctx.note("alpha0_check", &chk);
    ctx.check("alpha0_deviation", usize::from(!chk.passes));
    let (lo, hi) = phi_alpha_range(alpha, r, n_xi, n_w)?;
    ctx.note("phi_min", lo);
    ctx.note("phi_max", hi);
    // stage-0 graph of |z_2| over the face P_2(R) of C^3, for plotting
    let face = FaceGrid::new(3, 2, r, n_xi.max(16), 2)?;
    let mut values = Vec::with_capacity(face.node_count());
    let mut residuals = Vec::with_capacity(face.node_count());
    for node in 0..face.node_count() {
        let (a, ti) = face.split(node);
        let w = face.transverse(ti)[0];
        let phi = phi_alpha(face.xi(a), w, alpha)?;
        values.push(phi);
        residuals.push(phi_alpha_residual(face.xi(a), w, alpha, phi));
    }
    let mut g = GraphFunction::constant(&face, 1.0);
    g.values = values;
    g.residuals = residuals;
    g.continuity_modulus = f64::NAN;
    ctx.w.write("stage0_graph.csv", &g.to_csv())?;
    Ok(())
}

fn stagewise_params(cfg: &RunConfig) -> Result<StagewiseParams> {
    let mut p = StagewiseParams::new(
        cfg.usize("params", "k"),
        cfg.f64("params", "r"),
        cfg.f64("params", "eps"),
        cfg.usize("params", "stages"),
    )?;
    p.angular_samples = cfg.usize("params", "angular_samples");
    p.transverse_rings = cfg.usize("params", "transverse_rings");
    p.derivatives = cfg.bool("params", "derivatives");
    Ok(p)
}

fn construct(cfg: &RunConfig, ctx: &mut Ctx) -> Result<StagewiseResult> {
    let res = stagewise_construct(&stagewise_params(cfg)?)?;
    let mut t = CsvTable::new(&[
        "n",
        "log_alpha",
        "c_n",
        "c0_closeness",
        "c1_closeness",
        "level_gap",
        "budget",
        "halvings",
        "graph_min",
        "graph_max",
        "monotone_violations",
    ]);
    for s in &res.stages {
        eprintln!(
            "stage {}: ln alpha = {:.6}, c = {}, closeness = {:.3e} (budget {:.3e})",
            s.n, s.alpha_n.log_modulus, s.c_n, s.c0_closeness, s.budget
        );
        t.push(vec![
            s.n.to_string(),
            fmt_f64(s.alpha_n.log_modulus),
            fmt_f64(s.c_n),
            fmt_f64(s.c0_closeness),
            s.c1_closeness.map(fmt_f64).unwrap_or_default(),
            fmt_f64(s.level_gap),
            fmt_f64(s.budget),
            s.halvings.to_string(),
            fmt_f64(s.graph_min),
            fmt_f64(s.graph_max),
            s.monotone_violations.to_string(),
        ]);
    }
    ctx.w.write("stages.csv", &t.render())?;
    let mut budget_bad = 0;
    for s in &res.stages {
        if s.c0_closeness > s.budget {
            budget_bad += 1;
            ctx.detail("stage_budget", s.n, format!("closeness {} above {}", s.c0_closeness, s.budget));
        }
    }
    ctx.check("stage_budget", budget_bad);
    ctx.note("drift_total", res.drift_total());
    ctx.note("drift_bound", res.drift_bound());
    Ok(res)
}

fn stagewise(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let res = construct(cfg, ctx)?;
    if let Some(last) = res.stages.last() {
        for g in &last.graphs {
            ctx.w.write(&format!("graph_stage{}_face{}.csv", last.n, g.face.j), &g.to_csv())?;
        }
    }
    let sw = sandwich_check(&res, cfg.usize("params", "samples"), cfg.seed)?;
    ctx.w.write("sandwich.json", &format!("{:#}\n", json!(sw)))?;
    ctx.note("sandwich", &sw);
    ctx.check("lower_inclusion", sw.lower_violations);
    ctx.check("upper_inclusion", sw.upper_violations);
    ctx.check("undecided", sw.lower_undecided + sw.upper_undecided);
    ctx.check("drift", usize::from(sw.drift_total > sw.drift_bound));
    Ok(())
}

fn levi(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let res = construct(cfg, ctx)?;
    let stage = cfg.usize("params", "stage");
    let surf = res.surface(stage)?;
    let rep = defining_function_checks(&surf, cfg.usize("params", "samples"), cfg.seed)?;
    ctx.w.write("levi.csv", &rep.to_csv())?;
    let mut t = CsvTable::new(&["index", "wedge_min_singular_value"]);
    for (i, w) in rep.wedge_gram_min.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f64(*w)]);
    }
    ctx.w.write("wedge.csv", &t.render())?;
    ctx.note("stage", stage);
    ctx.note("min_gradient_norm", rep.min_gradient_norm());
    ctx.note("max_gradient_norm", rep.max_gradient_norm());
    ctx.note("min_levi", rep.min_levi());
    ctx.note("min_wedge", rep.min_wedge());
    ctx.note("skipped", rep.skipped);
    // ρ = |z_j| − r_j has |∂ρ| ≈ 1/2 near the cylinders; a vanishing
    // gradient or wedge means the face is not a transversal hypersurface.
    let degenerate = rep.samples.iter().filter(|s| s.gradient_norm < 0.25).count();
    ctx.check("degenerate_gradient", degenerate);
    let wedge_bad = rep.wedge_gram_min.iter().filter(|w| **w < 0.25).count();
    ctx.check("degenerate_wedge", wedge_bad);
    Ok(())
}
