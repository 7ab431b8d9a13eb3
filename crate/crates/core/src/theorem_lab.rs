//! Executable checks of the region condition for `H_{p,q} = F^p ∘ G^q`
//! sequences, the affine recursion behind two-map sequences, eta growth,
//! disjoint basins, variety avoidance and the scaled Fatou–Bieberbach
//! inclusion.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basin::{classify_point, default_radius, ClassifyParams, OrbitClass};
use crate::error::{Error, Result};
use crate::geometry::{classify_filtration, ComplexVector, FiltrationSpec, Region};
use crate::logscalar::LogScalar;
use crate::maps::{jacobian_origin, Generator, MapSequence, MapSpec};
use crate::potentials::psi_limit;
use crate::rng;

// ---------------------------------------------------------------------------
// bounded rewriting and the region condition

/// Splits `H_{p,q}` into factors with both exponents at most `m`, listed
/// outermost first: `H_{p,q} = H_{r,0} ∘ H_{m,0}^{N} ∘ H_{m,q}` with
/// `p − m = m·N + r`.
pub fn rewrite_bounded(p: u32, q: u32, m: u32) -> Result<Vec<(u32, u32)>> {
    if m == 0 {
        return Err(Error::InvalidParameter("M must be at least 1".into()));
    }
    if q > m {
        return Err(Error::HypothesisViolated(format!("q = {q} exceeds M = {m}")));
    }
    if p <= m {
        return Ok(vec![(p, q)]);
    }
    let rest = p - m;
    let (n, r) = (rest / m, rest % m);
    let mut out = Vec::with_capacity(n as usize + 2);
    if r > 0 {
        out.push((r, 0));
    }
    out.extend(std::iter::repeat_n((m, 0), n as usize));
    out.push((m, q));
    Ok(out)
}

/// `(ln|α^p β^q|, ln|α^q β^p|)`, the diagonal of `DH_{p,q}(0)` in log form.
pub fn hpq_log_eigen(p: u32, q: u32, alpha: Complex64, beta: Complex64) -> (f64, f64) {
    let (la, lb) = (alpha.norm().ln(), beta.norm().ln());
    (p as f64 * la + q as f64 * lb, q as f64 * la + p as f64 * lb)
}

/// Diagonal Jacobian product of a list of factors, via [`jacobian_origin`].
pub fn factor_jacobian(pairs: &[(u32, u32)], alpha: Complex64, beta: Complex64) -> Result<Vec<LogScalar>> {
    let (p, q): (Vec<u32>, Vec<u32>) = pairs.iter().copied().unzip();
    let n = pairs.len();
    let s = MapSequence::new(Generator::HQSchedule { alpha, beta, kdeg: 2, p, q }, n.saturating_sub(1))?;
    jacobian_origin(&s, n - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    /// Index into the original schedule.
    pub k: usize,
    pub p: u32,
    pub q: u32,
    /// 1 when `2p − q ≥ 0`, else 2.
    pub case: u8,
    /// `2 ln|λ₂| − ln|λ₁|`
    pub log_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTestResult {
    pub xi: Option<f64>,
    /// Every `q(k)` is zero: a single autonomous map, basin all of C².
    pub all_of_c2: bool,
    /// Schedule index attaining the largest ratio, or the first failing index.
    pub worst_k: Option<usize>,
    /// The roles of `p` and `q` were exchanged through the swap `τ`.
    pub swapped: bool,
    /// First index violating the hypotheses with `q` bounded, if any.
    pub unswapped_failure: Option<usize>,
    pub case_trace: Vec<TermRecord>,
    pub rewritten: Vec<(u32, u32)>,
}

fn slope(r: f64) -> f64 {
    2.0 + 3.0 / (r - 2.0)
}

/// First index where `q ≤ M`, `p ≥ 1`, `(2 + 3/(r−2))p − q ≥ 0` fails.
fn first_failure(p: &[u32], q: &[u32], r: f64, m: u32) -> Option<usize> {
    (0..p.len()).find(|&i| !(q[i] <= m && p[i] >= 1 && slope(r) * p[i] as f64 - q[i] as f64 >= 0.0))
}

pub fn region_test(
    p_seq: &[u32],
    q_seq: &[u32],
    alpha: Complex64,
    beta: Complex64,
    r: f64,
    m: u32,
) -> Result<RegionTestResult> {
    if p_seq.len() != q_seq.len() || p_seq.is_empty() {
        return Err(Error::InvalidParameter("p and q must have equal nonzero length".into()));
    }
    if !(r > 2.0) {
        return Err(Error::InvalidParameter("r must exceed 2".into()));
    }
    let (na, nb) = (alpha.norm(), beta.norm());
    if !(na > 0.0 && na < 1.0 && nb > 0.0 && nb < 1.0) {
        return Err(Error::InvalidParameter("alpha and beta must lie in the punctured unit disc".into()));
    }
    if !(r * na.ln() < nb.ln()) {
        return Err(Error::EigenvalueHypothesis(format!("|alpha|^{r} >= |beta|")));
    }
    let mut res = RegionTestResult {
        xi: None,
        all_of_c2: false,
        worst_k: None,
        swapped: false,
        unswapped_failure: None,
        case_trace: vec![],
        rewritten: vec![],
    };
    if q_seq.iter().all(|&q| q == 0) {
        res.all_of_c2 = true;
        return Ok(res);
    }
    let (p, q) = match first_failure(p_seq, q_seq, r, m) {
        None => (p_seq, q_seq),
        Some(k) => {
            res.unswapped_failure = Some(k);
            if first_failure(q_seq, p_seq, r, m).is_some() {
                res.worst_k = Some(k);
                return Ok(res);
            }
            // τ ∘ H_{p,q} ∘ τ has the eigenvalues of H_{q,p} in swapped order
            res.swapped = true;
            (q_seq, p_seq)
        }
    };
    let eta = (r * na.ln() - nb.ln()).exp();
    let xi = na.max(eta.powf(1.0 / r));
    let log_xi = xi.ln();
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for k in 0..p.len() {
        for (pp, qq) in rewrite_bounded(p[k], q[k], m)? {
            let (l1, l2) = hpq_log_eigen(pp, qq, alpha, beta);
            let log_ratio = 2.0 * l2 - l1;
            if log_ratio > worst.0 {
                worst = (log_ratio, k);
            }
            let case = if 2 * pp >= qq { 1 } else { 2 };
            res.case_trace.push(TermRecord { k, p: pp, q: qq, case, log_ratio });
            res.rewritten.push((pp, qq));
        }
    }
    res.worst_k = Some(worst.1);
    if worst.0 <= log_xi && xi < 1.0 {
        res.xi = Some(xi);
    }
    Ok(res)
}

/// Random schedule of `len` terms with `1 ≤ p ≤ p_max`, `q ≤ m` and
/// `(2 + 3/(r−2))p − q ≥ 0`.
pub fn random_bounded_schedule(len: usize, r: f64, m: u32, p_max: u32, seed: u64, index: u64) -> (Vec<u32>, Vec<u32>) {
    use rand::Rng;
    let mut g = rng::stream(seed, rng::tag("bounded_schedule"), index);
    let mut p = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    for _ in 0..len {
        let pi = g.random_range(1..=p_max.max(1));
        let cap = m.min((slope(r) * pi as f64).floor() as u32);
        p.push(pi);
        q.push(g.random_range(0..=cap));
    }
    (p, q)
}

// ---------------------------------------------------------------------------
// affine recursion for two-map sequences

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    F,
    G,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop12Params {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub kdeg: u32,
}

impl Prop12Params {
    /// Requires `|α|^kdeg < |β| ≤ |α|^(kdeg−1)`.
    pub fn new(alpha: Complex64, beta: Complex64, kdeg: u32) -> Result<Self> {
        let p = Prop12Params { alpha, beta, kdeg };
        if kdeg < 2 {
            return Err(Error::InvalidParameter("kdeg must be at least 2".into()));
        }
        if !(alpha.norm() > 0.0 && alpha.norm() < 1.0 && beta.norm() > 0.0) {
            return Err(Error::InvalidParameter("need 0 < |alpha| < 1 and beta != 0".into()));
        }
        let (la, lb) = (alpha.norm().ln(), beta.norm().ln());
        let k = kdeg as f64;
        if !(k * la < lb && lb <= (k - 1.0) * la + 1e-15) {
            return Err(Error::HypothesisViolated(format!(
                "need |alpha|^{kdeg} < |beta| <= |alpha|^{}",
                kdeg - 1
            )));
        }
        Ok(p)
    }

    /// Same parameters without the hypothesis check, for diagnostics.
    pub fn unchecked(alpha: Complex64, beta: Complex64, kdeg: u32) -> Self {
        Prop12Params { alpha, beta, kdeg }
    }

    pub fn forward(&self, c: Choice, x: Complex64) -> Complex64 {
        match c {
            Choice::F => self.beta / self.alpha.powu(self.kdeg) * x,
            Choice::G => x / self.alpha.powu(self.kdeg - 1) + 1.0,
        }
    }

    pub fn backward(&self, c: Choice, x: Complex64) -> Complex64 {
        match c {
            Choice::F => self.alpha.powu(self.kdeg) / self.beta * x,
            Choice::G => self.alpha.powu(self.kdeg - 1) * (x - 1.0),
        }
    }

    /// Lipschitz constant of the backward map.
    pub fn contraction(&self, c: Choice) -> f64 {
        match c {
            Choice::F => self.alpha.norm().powi(self.kdeg as i32) / self.beta.norm(),
            Choice::G => self.alpha.norm().powi(self.kdeg as i32 - 1),
        }
    }

    /// Radius `B = |α|^{k−1} / (1 − |α|^{k−1})` of the disc mapped into
    /// itself by both backward maps.
    pub fn analytic_bound(&self) -> f64 {
        let t = self.alpha.norm().powi(self.kdeg as i32 - 1);
        t / (1.0 - t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineOrbitResult {
    pub z0: Complex64,
    /// `max |X_{2,n}|` over the checked steps.
    pub orbit_bound: f64,
    pub steps_checked: usize,
    /// Largest `|A_{n+1}(X_n) − X_{n+1}|` between consecutive windows
    /// (zero for plain forward iteration).
    pub max_consistency_gap: f64,
}

/// Plain forward iteration `X_{2,n+1} = A_{n+1}(X_{2,n})`.
pub fn prop12_recursion(choices: &[Choice], pp: &Prop12Params, z0: Complex64, n: usize) -> Result<AffineOrbitResult> {
    if n > choices.len() {
        return Err(Error::InvalidParameter("not enough choices".into()));
    }
    let mut x = z0;
    let mut bound = x.norm();
    for &c in &choices[..n] {
        x = pp.forward(c, x);
        bound = bound.max(x.norm());
    }
    Ok(AffineOrbitResult { z0, orbit_bound: bound, steps_checked: n, max_consistency_gap: 0.0 })
}

/// `z0 = A_1^{-1} ∘ … ∘ A_depth^{-1}(anchor)` and the error bound
/// `Π Lip(A_j^{-1}) · (|anchor| + B)`.
pub fn prop12_find_z0(choices: &[Choice], pp: &Prop12Params, depth: usize, anchor: Complex64) -> Result<(Complex64, f64)> {
    window_value(choices, pp, 0, depth, anchor)
}

fn window_value(choices: &[Choice], pp: &Prop12Params, start: usize, depth: usize, anchor: Complex64) -> Result<(Complex64, f64)> {
    if start + depth > choices.len() {
        return Err(Error::InvalidParameter("not enough choices for the backward window".into()));
    }
    let mut x = anchor;
    let mut lip = 1.0;
    for &c in choices[start..start + depth].iter().rev() {
        x = pp.backward(c, x);
        lip *= pp.contraction(c);
    }
    Ok((x, lip * (anchor.norm() + pp.analytic_bound())))
}

/// Bounded orbit realised as `X_{2,n} = A_{n+1}^{-1} ∘ … ∘ A_{n+depth}^{-1}(0)`
/// for `n = 0..=n_steps`; forward iteration of the expanding maps would
/// amplify rounding by up to `|α|^{1−k}` per step.
pub fn prop12_windowed_orbit(choices: &[Choice], pp: &Prop12Params, depth: usize, n_steps: usize) -> Result<AffineOrbitResult> {
    let zero = Complex64::new(0.0, 0.0);
    let xs: Vec<Complex64> = (0..=n_steps)
        .into_par_iter()
        .map(|n| window_value(choices, pp, n, depth, zero).map(|v| v.0))
        .collect::<Result<_>>()?;
    let orbit_bound = xs.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let gap = xs
        .windows(2)
        .enumerate()
        .map(|(n, w)| (pp.forward(choices[n], w[0]) - w[1]).norm())
        .fold(0.0, f64::max);
    Ok(AffineOrbitResult { z0: xs[0], orbit_bound, steps_checked: n_steps, max_consistency_gap: gap })
}

pub fn random_choices(len: usize, seed: u64, label: &str) -> Vec<Choice> {
    use rand::Rng;
    let mut r = rng::stream(seed, rng::tag(label), 0);
    (0..len).map(|_| if r.random::<bool>() { Choice::F } else { Choice::G }).collect()
}

// ---------------------------------------------------------------------------
// eta growth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaGrowthReport {
    pub checked: usize,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// Smallest `d^n ln(M|η₀|) − ln|η_n|` seen.
    pub min_margin: f64,
}

/// Checks `|η_n| < (M|η₀|)^{d^n}` in log form for `n ≤ n_hi`.
pub fn eta_growth_check(m: f64, s: &MapSequence, n_hi: usize) -> Result<EtaGrowthReport> {
    let (Some(d), Some(e0)) = (s.degree(), s.eta(0)) else {
        return Err(Error::InvalidParameter("eta growth needs an eta schedule".into()));
    };
    if !(m > 0.0) {
        return Err(Error::InvalidParameter("M must be positive".into()));
    }
    let base = m.ln() + e0.log_modulus;
    if base >= 0.0 {
        return Err(Error::HypothesisViolated("M|eta_0| must be below 1".into()));
    }
    let mut rep = EtaGrowthReport { checked: 0, violations: 0, first_violation: None, min_margin: f64::INFINITY };
    for n in 0..=n_hi {
        let bound = (d as f64).powi(n as i32) * base;
        let margin = bound - s.eta(n).expect("eta schedule").log_modulus;
        rep.checked += 1;
        rep.min_margin = rep.min_margin.min(margin);
        if margin <= 0.0 {
            rep.violations += 1;
            rep.first_violation.get_or_insert(n);
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// disjoint basins

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointReport {
    pub domains: usize,
    pub samples: usize,
    pub members: Vec<usize>,
    pub double_memberships: usize,
    pub undecided: usize,
    /// Members whose Case 1 / Case 2 replay did not exclude every other domain.
    pub case_failures: usize,
    pub dominant_axis: usize,
}

/// The `k−1` translated, swapped copies of a base basin.
#[derive(Clone, Debug)]
pub struct DisjointFamily {
    pub base: MapSequence,
    pub params: ClassifyParams,
    /// Axis of the base basin's unbounded part after relabelling.
    pub dominant_axis: usize,
    /// Native axis holding the unbounded part of the base basin (`V⁻`).
    pub native_minus_axis: usize,
}

impl DisjointFamily {
    /// Power tower base with native `V⁻ = V_1`, relabelled so the unbounded
    /// part sits over `dominant_axis`.
    pub fn new(k: usize, a: f64, dominant_axis: usize, n_max: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidParameter("disjoint basins need k >= 3".into()));
        }
        if dominant_axis == 0 || dominant_axis > k {
            return Err(Error::InvalidParameter("dominant axis out of range".into()));
        }
        let base = MapSequence::power_tower(k, 2, a)?.with_n_max(n_max)?;
        let mut params = ClassifyParams::for_tower(k, a)?;
        params.n_max = n_max + 1;
        Ok(DisjointFamily { base, params, dominant_axis, native_minus_axis: 1 })
    }

    pub fn k(&self) -> usize {
        self.base.dim()
    }

    pub fn radius(&self) -> f64 {
        self.params.radius()
    }

    /// Native coordinates of a point of the relabelled base basin.
    fn to_native(&self, mut z: Vec<Complex64>) -> Vec<Complex64> {
        z.swap(self.dominant_axis - 1, self.native_minus_axis - 1);
        z
    }

    /// Classification of `z` for domain `i` (1-based, `1..k`): undo the
    /// translation by `3(i−1)R` in `z_k`, the swap `φ_i` and the relabelling.
    pub fn classify(&self, i: usize, z: &ComplexVector) -> Result<OrbitClass> {
        let k = self.k();
        let mut w = z.entries.clone();
        w[k - 1] -= Complex64::new(3.0 * (i as f64 - 1.0) * self.radius(), 0.0);
        w.swap(i - 1, k - 1);
        let native = ComplexVector { entries: self.to_native(w), overflowed: false };
        classify_point(&self.base, &native, &self.params)
    }

    /// Every attracted sample of the relabelled base lies in `V̄_R ∪ int(V_D)`.
    pub fn containment_check(&self, samples: usize, seed: u64) -> Result<()> {
        let k = self.k();
        let r = self.radius();
        let t = rng::tag("disjoint_containment");
        (0..samples).into_par_iter().try_for_each(|j| {
            let mut g = rng::stream(seed, t, j as u64);
            let z = rng::polydisc(&mut g, k, 4.0 * r);
            let native = ComplexVector { entries: self.to_native(z.entries.clone()), overflowed: false };
            if classify_point(&self.base, &native, &self.params)?.is_attracted() && !in_base_region(&z.entries, r, self.dominant_axis) {
                return Err(Error::ContainmentFailed(format!("{:?}", z.entries)));
            }
            Ok(())
        })
    }
}

/// `z ∈ V̄_R ∪ int(V_D)` with `V_D` the points where `|z_D|` is the strict max.
fn in_base_region(z: &[Complex64], r: f64, d: usize) -> bool {
    let m = z.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if m <= r {
        return true;
    }
    let zd = z[d - 1].norm();
    zd > r && z.iter().enumerate().all(|(i, x)| i == d - 1 || x.norm() < zd)
}

/// Replays the two-case argument for a member `z` of domain `a`: the shifted
/// point lies in `V̄_R` (Case 1) or in `int(V_a)` (Case 2), and in either
/// case no other domain's shifted point lies in `V̄_R ∪ int(V_b)`.
fn replay_cases(z: &[Complex64], a: usize, domains: usize, r: f64) -> bool {
    let k = z.len();
    let shifted = |i: usize| {
        let mut w = z.to_vec();
        w[k - 1] -= Complex64::new(3.0 * (i as f64 - 1.0) * r, 0.0);
        w
    };
    let own = shifted(a);
    if !in_base_region(&own, r, a) {
        return false;
    }
    (1..=domains).filter(|&b| b != a).all(|b| !in_base_region(&shifted(b), r, b))
}

/// Even indices: uniform in `Δ^k(0;8R)`. Odd indices: uniform in
/// `Δ^k(c_i;R)` around the centre `c_i = 3(i−1)R·e_k` of a domain, so the
/// bounded parts, which are a tiny fraction of the big polydisc, are hit.
fn disjoint_sample<G: rand::Rng>(g: &mut G, j: usize, k: usize, r: f64, domains: usize) -> ComplexVector {
    if j.is_multiple_of(2) {
        return rng::polydisc(g, k, 8.0 * r);
    }
    let i = 1 + (j / 2) % domains;
    let mut z = rng::polydisc(g, k, r);
    z.entries[k - 1] += Complex64::new(3.0 * (i as f64 - 1.0) * r, 0.0);
    z
}

pub fn disjoint_shorts(fam: &DisjointFamily, samples: usize, seed: u64) -> Result<DisjointReport> {
    let k = fam.k();
    let r = fam.radius();
    let domains = k - 1;
    fam.containment_check(samples.min(10_000), seed)?;
    let t = rng::tag("disjoint_shorts");
    let rows: Vec<(Vec<bool>, bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, t, j as u64);
            let z = disjoint_sample(&mut g, j, k, r, domains);
            let mut member = vec![false; domains];
            let mut undecided = false;
            let mut case_ok = true;
            for i in 1..=domains {
                match fam.classify(i, &z)? {
                    OrbitClass::Attracted { .. } => {
                        member[i - 1] = true;
                        // the copy lives where the swapped base region lives
                        case_ok &= replay_cases(&z.entries, i, domains, r);
                    }
                    OrbitClass::Undecided => undecided = true,
                    OrbitClass::Escaped { .. } => {}
                }
            }
            Ok((member, undecided, case_ok))
        })
        .collect::<Result<_>>()?;
    let mut members = vec![0usize; domains];
    for row in &rows {
        for (i, m) in row.0.iter().enumerate() {
            members[i] += *m as usize;
        }
    }
    Ok(DisjointReport {
        domains,
        samples,
        members,
        double_memberships: rows.iter().filter(|r| r.0.iter().filter(|m| **m).count() > 1).count(),
        undecided: rows.iter().filter(|r| r.1).count(),
        case_failures: rows.iter().filter(|r| !r.2).count(),
        dominant_axis: fam.dominant_axis,
    })
}

// ---------------------------------------------------------------------------
// variety avoidance

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarietySets {
    pub epsilon: f64,
    pub r: f64,
}

impl VarietySets {
    pub fn new(epsilon: f64, r: f64) -> Result<Self> {
        if !(r > 1.0) {
            return Err(Error::InvalidParameter("R must exceed 1".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0 / r) {
            return Err(Error::HypothesisViolated("epsilon must lie in (0, 1/R)".into()));
        }
        Ok(VarietySets { epsilon, r })
    }

    /// `𝒜_R`: adds `2R` to `z_2`.
    pub fn shift(&self, z: &ComplexVector) -> ComplexVector {
        let mut w = z.clone();
        w.entries[1] += Complex64::new(2.0 * self.r, 0.0);
        w
    }

    fn split(z: &[Complex64]) -> (f64, f64) {
        let zp = z[0].norm().max(z[1].norm());
        let zpp = z[2..].iter().map(|x| x.norm()).fold(0.0, f64::max);
        (zp, zpp)
    }

    pub fn in_a(&self, z: &ComplexVector) -> bool {
        Self::split(&z.entries).0 < self.epsilon
    }

    pub fn in_b(&self, z: &ComplexVector) -> bool {
        let (zp, zpp) = Self::split(&z.entries);
        zp < self.epsilon * zpp
    }

    /// Membership in `𝒜_R(A_ε ∪ B_ε)`.
    pub fn in_image(&self, z: &ComplexVector) -> bool {
        let mut w = z.clone();
        w.entries[1] -= Complex64::new(2.0 * self.r, 0.0);
        self.in_a(&w) || self.in_b(&w)
    }

    /// Half the samples from `A_ε` (with `z''` up to `4R`), half from `B_ε`
    /// with `‖z''‖` log-uniform over `[10^-3, 10^3]·R`.
    pub fn sample<G: rand::Rng>(&self, g: &mut G, k: usize, index: usize) -> ComplexVector {
        let mut z = ComplexVector::zeros(k);
        if index.is_multiple_of(2) {
            z.entries[0] = rng::disc(g, self.epsilon);
            z.entries[1] = rng::disc(g, self.epsilon);
            for e in &mut z.entries[2..] {
                *e = rng::disc(g, 4.0 * self.r);
            }
        } else {
            let scale = self.r * 10f64.powf(-3.0 + 6.0 * g.random::<f64>());
            for e in &mut z.entries[2..] {
                *e = rng::disc(g, scale);
            }
            let top = z.entries[2..].iter().map(|x| x.norm()).fold(0.0, f64::max);
            z.entries[0] = rng::disc(g, self.epsilon * top);
            z.entries[1] = rng::disc(g, self.epsilon * top);
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceReport {
    pub samples: usize,
    pub violations: usize,
    pub basin_members: usize,
    pub members_in_image: usize,
    pub first_violation: Option<Vec<Complex64>>,
}

/// Samples `A_ε ∪ B_ε`, applies `𝒜_R` and counts images outside `V⁺`; then
/// checks that attracted points of the base basin never lie in the image.
pub fn variety_avoidance_check(
    vs: &VarietySets,
    f: &FiltrationSpec,
    base: &MapSequence,
    samples: usize,
    members: usize,
    seed: u64,
) -> Result<AvoidanceReport> {
    let k = f.k;
    if k < 3 {
        return Err(Error::InvalidParameter("variety avoidance needs k >= 3".into()));
    }
    let t = rng::tag("variety_avoidance");
    let bad: Vec<Option<Vec<Complex64>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t, i as u64);
            let z = vs.sample(&mut g, k, i);
            let w = vs.shift(&z);
            Ok((classify_filtration(&w, f)?.region != Region::Plus).then_some(w.entries))
        })
        .collect::<Result<_>>()?;
    let params = ClassifyParams::new(f.clone(), 0.5, base.n_max + 1, 1e-3)?;
    let tm = rng::tag("variety_members");
    let hits: Vec<bool> = (0..members)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, tm, i as u64);
            for _ in 0..1_000_000 {
                let z = rng::polydisc(&mut g, k, 2.0 * f.r);
                if classify_point(base, &z, &params)?.is_attracted() {
                    return Ok(vs.in_image(&z));
                }
            }
            Err(Error::SamplerFailure("no basin member found".into()))
        })
        .collect::<Result<_>>()?;
    Ok(AvoidanceReport {
        samples,
        violations: bad.iter().flatten().count(),
        basin_members: members,
        members_in_image: hits.iter().filter(|h| **h).count(),
        first_violation: bad.into_iter().flatten().next(),
    })
}

/// Random search for a linear `L` with `L({z_1 = z_2 = 0}) ⊂ A_ε ∪ B_ε`,
/// checked on sampled points of the subspace.
pub fn search_l_epsilon(vs: &VarietySets, k: usize, tries: usize, seed: u64) -> Result<Option<MapSpec>> {
    use rand::Rng;
    let t = rng::tag("l_epsilon");
    for j in 0..tries {
        let mut g = rng::stream(seed, t, j as u64);
        let spread = g.random::<f64>();
        let matrix: Vec<Vec<Complex64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|c| {
                        let id = if i == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                        id + rng::disc(&mut g, spread)
                    })
                    .collect()
            })
            .collect();
        let Ok(l) = MapSpec::linear(matrix) else { continue };
        let ok = (0..200).all(|_| {
            let mut z = ComplexVector::zeros(k);
            for e in &mut z.entries[2..] {
                *e = rng::disc(&mut g, 10.0);
            }
            let w = ComplexVector::flagged(l.apply_generic(&z.entries));
            vs.in_a(&w) || vs.in_b(&w)
        });
        if ok {
            return Ok(Some(l));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// scaled Fatou–Bieberbach domain inside the basin

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbReport {
    pub a: f64,
    pub samples: usize,
    pub tries: usize,
    pub violations: usize,
    /// Scaled points with `ψ` equal to `log a` to rounding.
    pub boundary_cases: usize,
    pub unconverged: usize,
    /// Largest `ψ(a z) − log a` seen.
    pub max_excess: f64,
}

/// Attracted for the autonomous map `F_a`: the orbit enters `Δ^k(0; c)` with
/// `c = 0.25 < 1 − a` before escaping into `V⁺`.
pub fn autonomous_attracted(fa: &MapSpec, z: &ComplexVector, f: &FiltrationSpec, n_max: usize) -> Result<bool> {
    let mut w = z.entries.clone();
    for _ in 0..=n_max {
        let cur = ComplexVector { entries: w, overflowed: false };
        if !cur.is_finite() || classify_filtration(&cur, f)?.region == Region::Plus {
            return Ok(false);
        }
        if cur.entries.iter().all(|x| x.norm() < 0.25) {
            return Ok(true);
        }
        w = fa.apply_generic(&cur.entries);
    }
    Ok(false)
}

pub fn fb_inside_short(a: f64, k: usize, samples: usize, seed: u64, tol: f64) -> Result<FbReport> {
    if !(a > 0.0 && a < 0.75) {
        return Err(Error::InvalidParameter("a must lie in (0, 0.75) for the capture radius 0.25".into()));
    }
    let s = MapSequence::shifted_tower(k, a)?;
    let fa = MapSpec::eta_step(k, 2, LogScalar::from_real(a))?;
    let f = FiltrationSpec::standard(k, default_radius(a))?;
    let t = rng::tag("fb_inside_short");
    let la = a.ln();
    let rows: Vec<(usize, f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t, i as u64);
            for tries in 1..=1_000_000usize {
                let z = rng::polydisc(&mut g, k, 2.0 * f.r);
                if autonomous_attracted(&fa, &z, &f, 500)? {
                    let e = psi_limit(&s, &z.scale(Complex64::new(a, 0.0)), 1e-12, s.n_max)?;
                    return Ok((tries, e.value - la, e.converged));
                }
            }
            Err(Error::SamplerFailure("no attracted point for the autonomous map".into()))
        })
        .collect::<Result<_>>()?;
    Ok(FbReport {
        a,
        samples,
        tries: rows.iter().map(|r| r.0).sum(),
        violations: rows.iter().filter(|r| r.1 >= tol).count(),
        boundary_cases: rows.iter().filter(|r| r.1.abs() < 1e-12).count(),
        unconverged: rows.iter().filter(|r| !r.2).count(),
        max_excess: rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn rewrite_examples() {
        assert_eq!(rewrite_bounded(3, 1, 2).unwrap(), vec![(1, 0), (2, 1)]);
        assert_eq!(rewrite_bounded(2, 2, 2).unwrap(), vec![(2, 2)]);
        assert_eq!(rewrite_bounded(7, 1, 2).unwrap(), vec![(1, 0), (2, 0), (2, 0), (2, 1)]);
        assert!(matches!(rewrite_bounded(1, 3, 2), Err(Error::HypothesisViolated(_))));
    }

    #[test]
    fn rewrite_preserves_jacobian() {
        let (a, b) = (c(0.5), c(1.0 / 9.0));
        for (p, q, m) in [(3, 1, 2), (11, 4, 4), (9, 0, 3), (2, 2, 5)] {
            let parts = rewrite_bounded(p, q, m).unwrap();
            assert!(parts.iter().all(|&(x, y)| x <= m && y <= m));
            let j = factor_jacobian(&parts, a, b).unwrap();
            let (l1, l2) = hpq_log_eigen(p, q, a, b);
            assert!((j[0].log_modulus - l1).abs() < 1e-12);
            assert!((j[1].log_modulus - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn region_example_inside() {
        let r = region_test(&[1; 20], &[3; 20], c(0.5), c(1.0 / 9.0), 4.0, 4).unwrap();
        let xi = r.xi.unwrap();
        assert!((xi - 0.5625f64.powf(0.25)).abs() < 1e-15);
        assert!(!r.swapped);
        assert!(r.case_trace.iter().all(|t| t.case == 2 && t.log_ratio <= xi.ln()));
    }

    #[test]
    fn region_zero_q_fast_path() {
        let r = region_test(&[5, 1, 2], &[0, 0, 0], c(0.5), c(1.0 / 9.0), 4.0, 4).unwrap();
        assert!(r.all_of_c2);
    }

    #[test]
    fn region_outside_first_case_goes_through_swap() {
        let r = region_test(&[1; 5], &[4; 5], c(0.5), c(1.0 / 9.0), 4.0, 4).unwrap();
        assert_eq!(r.unswapped_failure, Some(0));
        assert!(r.swapped);
        assert!(r.xi.is_some());
        // neither hypothesis holds
        let r = region_test(&[1, 9], &[9, 1], c(0.5), c(1.0 / 9.0), 4.0, 4).unwrap();
        assert!(r.xi.is_none());
        assert_eq!(r.worst_k, Some(0));
    }

    #[test]
    fn region_eigen_hypothesis() {
        let e = region_test(&[1], &[1], c(0.5), c(0.01), 4.0, 4).unwrap_err();
        assert!(matches!(e, Error::EigenvalueHypothesis(_)));
    }

    fn pp() -> Prop12Params {
        Prop12Params::new(c(0.5), c(0.2), 3).unwrap()
    }

    #[test]
    fn prop12_hypothesis() {
        assert!(Prop12Params::new(c(0.5), c(0.2), 2).is_err());
        assert!(Prop12Params::new(c(0.5), c(0.2), 3).is_ok());
    }

    #[test]
    fn all_g_geometric_sum() {
        let p = pp();
        let n = 12;
        let r = prop12_recursion(&vec![Choice::G; n], &p, c(0.0), n).unwrap();
        let ratio: f64 = 1.0 / 0.25;
        let expect: f64 = (0..n).map(|j| ratio.powi(j as i32)).sum();
        assert!((r.orbit_bound - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn all_f_from_zero_stays_zero() {
        let r = prop12_recursion(&vec![Choice::F; 50], &pp(), c(0.0), 50).unwrap();
        assert_eq!(r.orbit_bound, 0.0);
        let (z0, _) = prop12_find_z0(&vec![Choice::F; 60], &pp(), 60, c(0.3)).unwrap();
        assert!(z0.norm() < 1e-12);
    }

    #[test]
    fn all_g_fixed_point() {
        let p = pp();
        let (z0, err) = prop12_find_z0(&vec![Choice::G; 80], &p, 80, c(0.0)).unwrap();
        let t = 0.25;
        assert!((z0 - c(t / (t - 1.0))).norm() <= err.max(1e-15));
    }

    #[test]
    fn depth_self_consistency() {
        let p = pp();
        let ch: Vec<Choice> = (0..100).map(|i| if i % 2 == 0 { Choice::F } else { Choice::G }).collect();
        let (a, ea) = prop12_find_z0(&ch, &p, 60, c(0.0)).unwrap();
        let (b, _) = prop12_find_z0(&ch, &p, 80, c(0.0)).unwrap();
        assert!((a - b).norm() <= ea);
    }

    #[test]
    fn windowed_orbit_bounded() {
        let p = pp();
        let ch = random_choices(2100, 5, "test_window");
        let r = prop12_windowed_orbit(&ch, &p, 60, 2000).unwrap();
        assert!(r.orbit_bound <= p.analytic_bound() * (1.0 + 1e-12));
        assert!(r.max_consistency_gap < 1e-12);
    }

    #[test]
    fn eta_growth_examples() {
        let s = MapSequence::shifted_tower(3, 0.5).unwrap();
        let r = eta_growth_check(2.0, &s, 40).unwrap();
        assert_eq!(r.violations, 0);
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        assert_eq!(eta_growth_check(1.5, &s, 40).unwrap().violations, 0);
        assert!(eta_growth_check(4.0, &s, 10).is_err());
        // |η_3| far above the bound
        let list: Vec<LogScalar> = [0.1, 0.01, 1e-4, 0.5].iter().map(|&x| LogScalar::from_real(x)).collect();
        let s = MapSequence::new(
            Generator::EtaSchedule { k: 3, d: 2, rule: crate::maps::EtaRule::Custom(list) },
            10,
        )
        .unwrap();
        let r = eta_growth_check(2.0, &s, 5).unwrap();
        assert_eq!(r.first_violation, Some(3));
        assert_eq!(r.violations, 3);
    }

    #[test]
    fn disjoint_small() {
        let fam = DisjointFamily::new(3, 0.5, 3, 200).unwrap();
        let rep = disjoint_shorts(&fam, 2000, 3).unwrap();
        assert_eq!(rep.double_memberships, 0);
        assert_eq!(rep.case_failures, 0);
        assert!(rep.members.iter().all(|&m| m > 0));
    }

    #[test]
    fn translated_origin_is_member() {
        let fam = DisjointFamily::new(3, 0.5, 3, 200).unwrap();
        for i in 1..=2 {
            let mut z = ComplexVector::zeros(3);
            z.entries[2] = c(3.0 * (i as f64 - 1.0) * fam.radius());
            assert!(fam.classify(i, &z).unwrap().is_attracted());
        }
    }

    #[test]
    fn translated_member_leaves_domain() {
        let fam = DisjointFamily::new(3, 0.5, 3, 200).unwrap();
        let z = ComplexVector::from_real(&[0.1, 0.2, 0.1]);
        assert!(fam.classify(1, &z).unwrap().is_attracted());
        let mut w = z.clone();
        w.entries[2] += c(3.0 * fam.radius());
        assert!(!fam.classify(1, &w).unwrap().is_attracted());
    }

    #[test]
    fn variety_cases() {
        let vs = VarietySets::new(0.25, 2.0).unwrap();
        let f = FiltrationSpec::standard(3, 2.0).unwrap();
        let z = vs.shift(&ComplexVector::from_real(&[0.0, 0.0, 7.0]));
        assert_eq!(classify_filtration(&z, &f).unwrap().region, Region::Plus);
        let z = vs.shift(&ComplexVector::from_real(&[0.9, 0.0, 4.0]));
        assert_eq!(classify_filtration(&z, &f).unwrap().region, Region::Plus);
        assert!(VarietySets::new(0.6, 2.0).is_err());
    }

    #[test]
    fn variety_small_run() {
        let vs = VarietySets::new(0.25, 2.0).unwrap();
        let f = FiltrationSpec::standard(3, 2.0).unwrap();
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        let r = variety_avoidance_check(&vs, &f, &s, 2000, 100, 1).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.members_in_image, 0);
    }

    #[test]
    fn l_epsilon_found_for_coordinate_plane() {
        let vs = VarietySets::new(0.25, 2.0).unwrap();
        assert!(search_l_epsilon(&vs, 3, 50, 2).unwrap().is_some());
    }

    #[test]
    fn fb_origin_is_boundary_case() {
        let s = MapSequence::shifted_tower(3, 0.5).unwrap();
        let e = psi_limit(&s, &ComplexVector::zeros(3), 1e-12, 60).unwrap();
        assert!((e.value - 0.5f64.ln()).abs() < 1e-12);
        let r = fb_inside_short(0.5, 3, 50, 4, 1e-6).unwrap();
        assert_eq!(r.violations, 0);
    }
}
