//! Potentials `ψ_n = d^{-n} log φ_n`, their envelopes, limits, and the
//! Green functions of shift-like maps.
//!
//! All orbit values are carried in log-polar form, so a potential at depth
//! 60 of a degree-2 sequence is as accurate as one at depth 5.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ComplexVector;
use crate::logscalar::{LogScalar, Scalar};
use crate::maps::{MapSequence, MapSpec};
use crate::rng;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const CONSECUTIVE_GAPS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialEstimate {
    pub value: f64,
    pub depth_used: usize,
    /// `|ψ_n − ψ_{n−1}|` at the last step.
    pub cauchy_gap: f64,
    pub converged: bool,
    /// `Φ_n` at the last step.
    pub envelope_value: f64,
}

fn eta_degree(s: &MapSequence) -> Result<u32> {
    match (s.degree(), s.eta(0)) {
        (Some(d), Some(_)) => Ok(d),
        _ => Err(Error::InvalidParameter("potentials need an eta schedule".into())),
    }
}

fn log_sup<T: Scalar>(z: &[T]) -> f64 {
    z.iter().map(|x| x.ln_abs()).fold(f64::NEG_INFINITY, f64::max)
}

fn to_log(z: &ComplexVector) -> Vec<LogScalar> {
    z.entries.iter().map(|&x| LogScalar::from_complex(x)).collect()
}

/// `ln φ_0(z), …, ln φ_n(z)` in one pass.
pub fn log_phi_sequence(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<Vec<f64>> {
    eta_degree(s)?;
    if z.k() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: z.k() });
    }
    if n > s.n_max {
        return Err(Error::InvalidParameter(format!("depth {n} exceeds n_max {}", s.n_max)));
    }
    let mut w = to_log(z);
    let mut out = Vec::with_capacity(n + 1);
    for j in 0..=n {
        w = s.step_generic(j, &w);
        let eta = s.eta(j).expect("eta schedule").log_modulus;
        out.push(log_sup(&w).max(eta));
    }
    Ok(out)
}

/// `φ_n(z) = max(‖F(n)(z)‖∞, |η_n|)` as a positive real in log form.
pub fn phi_n(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<LogScalar> {
    let l = log_phi_sequence(s, z, n)?;
    Ok(LogScalar::from_ln(l[n]))
}

/// `ψ_0(z), …, ψ_n(z)`.
pub fn psi_sequence(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<Vec<f64>> {
    let d = eta_degree(s)? as f64;
    let l = log_phi_sequence(s, z, n)?;
    Ok(l.iter().enumerate().map(|(j, v)| v / d.powi(j as i32)).collect())
}

/// `Σ_{j≥n} d^{-(j+1)} log 2 = log 2 / (d^n (d−1))`
pub fn envelope_tail(d: u32, n: usize) -> f64 {
    let d = d as f64;
    std::f64::consts::LN_2 / (d.powi(n as i32) * (d - 1.0))
}

pub fn psi_n(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<f64> {
    Ok(psi_sequence(s, z, n)?[n])
}

/// `Φ_n = ψ_n + log 2 / (d^n (d−1))`
pub fn psi_envelope(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<f64> {
    let d = eta_degree(s)?;
    Ok(psi_n(s, z, n)? + envelope_tail(d, n))
}

/// Iterates until three consecutive Cauchy gaps fall below `tol`, or `n_max`.
pub fn psi_limit(s: &MapSequence, z: &ComplexVector, tol: f64, n_max: usize) -> Result<PotentialEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let d = eta_degree(s)?;
    let n_max = n_max.min(s.n_max);
    if z.k() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: z.k() });
    }
    let df = d as f64;
    let mut w = to_log(z);
    let (mut prev, mut gap, mut streak) = (f64::NAN, f64::INFINITY, 0usize);
    for n in 0..=n_max {
        w = s.step_generic(n, &w);
        let eta = s.eta(n).expect("eta schedule").log_modulus;
        let psi = log_sup(&w).max(eta) / df.powi(n as i32);
        if n > 0 {
            gap = (psi - prev).abs();
            streak = if gap < tol { streak + 1 } else { 0 };
        }
        prev = psi;
        if streak >= CONSECUTIVE_GAPS || n == n_max {
            return Ok(PotentialEstimate {
                value: psi,
                depth_used: n,
                cauchy_gap: gap,
                converged: streak >= CONSECUTIVE_GAPS,
                envelope_value: psi + envelope_tail(d, n),
            });
        }
    }
    unreachable!("loop returns at n_max")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenParams {
    /// Number of map applications per level.
    pub block: usize,
    pub n_max: usize,
    pub tolerance: f64,
}

impl GreenParams {
    pub fn new(block: usize, n_max: usize, tolerance: f64) -> Result<Self> {
        if block == 0 {
            return Err(Error::InvalidParameter("block must be at least 1".into()));
        }
        if !(tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(GreenParams { block, n_max, tolerance })
    }
}

fn shift_params(s: &MapSpec) -> Result<(usize, usize, u32)> {
    match s {
        MapSpec::ShiftLike { k, nu, d, delta } => {
            if delta.norm() == 0.0 {
                return Err(Error::InvalidParameter("delta must be nonzero".into()));
            }
            Ok((*k, *nu, *d))
        }
        _ => Err(Error::InvalidParameter("Green functions need a shift-like map".into())),
    }
}

fn green_iterate(s: &MapSpec, z: &ComplexVector, gp: &GreenParams, inverse: bool) -> Result<PotentialEstimate> {
    let (k, _, d) = shift_params(s)?;
    if z.k() != k {
        return Err(Error::DimensionMismatch { expected: k, got: z.k() });
    }
    let df = d as f64;
    let mut w = to_log(z);
    let (mut prev, mut streak) = (log_sup(&w).max(0.0), 0usize);
    for n in 1..=gp.n_max.max(1) {
        for _ in 0..gp.block {
            w = if inverse { s.apply_inverse_generic(&w) } else { s.apply_generic(&w) };
        }
        let g = log_sup(&w).max(0.0) / df.powi(n as i32);
        let gap = (g - prev).abs();
        streak = if gap < gp.tolerance { streak + 1 } else { 0 };
        prev = g;
        if streak >= CONSECUTIVE_GAPS || n >= gp.n_max {
            return Ok(PotentialEstimate {
                value: g,
                depth_used: n,
                cauchy_gap: gap,
                converged: streak >= CONSECUTIVE_GAPS,
                envelope_value: g,
            });
        }
    }
    unreachable!("loop returns at n_max")
}

/// `G⁺(z) = lim d^{-n} log⁺ ‖S^{block·n}(z)‖∞`
pub fn green_plus(s: &MapSpec, z: &ComplexVector, gp: &GreenParams) -> Result<PotentialEstimate> {
    green_iterate(s, z, gp, false)
}

/// `G⁻(z) = lim d^{-n} log⁺ ‖S^{-block·n}(z)‖∞`; the usual block is `k − ν`.
pub fn green_minus(s: &MapSpec, z: &ComplexVector, gp: &GreenParams) -> Result<PotentialEstimate> {
    green_iterate(s, z, gp, true)
}

/// `G⁺` evaluated at a fixed depth without the convergence rule.
pub fn green_at_depth(s: &MapSpec, z: &ComplexVector, block: usize, n: usize) -> Result<f64> {
    let (_, _, d) = shift_params(s)?;
    let mut w = to_log(z);
    for _ in 0..block * n {
        w = s.apply_generic(&w);
    }
    Ok(log_sup(&w).max(0.0) / (d as f64).powi(n as i32))
}

/// Uniform-ish sample of `V⁺_R` for a shift-like map of type ν: the sup is
/// attained on an axis `i > k − ν` with modulus in `(R, 4R)`.
pub fn sample_v_plus<R: rand::Rng>(r: &mut R, k: usize, nu: usize, radius: f64) -> ComplexVector {
    let first = k - nu + 1;
    let axis = first + (r.random::<f64>() * nu as f64) as usize;
    let axis = axis.min(k);
    let top = rng::annulus(r, radius * (1.0 + 1e-9), 4.0 * radius);
    let m = top.norm();
    let mut entries: Vec<Complex64> = (0..k).map(|_| rng::disc(r, m)).collect();
    entries[axis - 1] = top;
    ComplexVector { entries, overflowed: false }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub block: usize,
    pub samples: usize,
    pub levels: usize,
    pub violations: usize,
    /// Smallest `ln‖S^{bn} z‖ − bound` seen (negative means violated).
    pub worst_margin: f64,
}

/// Checks `ln‖S^{b·n}(z)‖ ≥ (Σ_{i<n} d^i) ln(|δ|/2) + d^n ln‖z‖` for
/// `n = 1..=levels` on samples of `V⁺_R`.
pub fn green_growth_check(
    s: &MapSpec,
    block: usize,
    radius: f64,
    levels: usize,
    samples: usize,
    seed: u64,
) -> Result<GrowthReport> {
    let (k, nu, d) = shift_params(s)?;
    let MapSpec::ShiftLike { delta, .. } = s else { unreachable!() };
    if block == 0 {
        return Err(Error::InvalidParameter("block must be at least 1".into()));
    }
    let ld = (delta.norm() / 2.0).ln();
    let df = d as f64;
    let t = rng::tag("green_growth");
    let margins: Vec<(usize, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, t, i as u64);
            let z = sample_v_plus(&mut r, k, nu, radius);
            let l0 = z.sup_norm_unchecked().ln();
            let mut w = to_log(&z);
            let (mut bad, mut worst) = (0usize, f64::INFINITY);
            let mut geo = 0.0;
            for n in 1..=levels {
                for _ in 0..block {
                    w = s.apply_generic(&w);
                }
                geo += df.powi(n as i32 - 1);
                let bound = geo * ld + df.powi(n as i32) * l0;
                let m = log_sup(&w) - bound;
                worst = worst.min(m);
                if m < 0.0 {
                    bad += 1;
                }
            }
            (bad.min(1), worst)
        })
        .collect();
    Ok(GrowthReport {
        block,
        samples,
        levels,
        violations: margins.iter().map(|m| m.0).sum(),
        worst_margin: margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min),
    })
}

/// Runs the growth check for every block `1..=k−1` and returns the first
/// block without violations (or the one with fewest), plus all reports.
pub fn select_green_block(
    s: &MapSpec,
    radius: f64,
    levels: usize,
    samples: usize,
    seed: u64,
) -> Result<(usize, Vec<GrowthReport>)> {
    let (k, _, _) = shift_params(s)?;
    let reports: Vec<GrowthReport> =
        (1..k).map(|b| green_growth_check(s, b, radius, levels, samples, seed)).collect::<Result<_>>()?;
    let best = reports
        .iter()
        .min_by_key(|r| (r.violations, r.block))
        .map(|r| r.block)
        .expect("k >= 2 gives at least one block");
    Ok((best, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubaverageReport {
    pub center_value: f64,
    pub circle_mean: f64,
    /// `circle_mean − center_value`
    pub margin: f64,
}

/// Mean of `ψ` over `center + radius·e^{iθ}·direction` (m equally spaced θ)
/// minus `ψ(center)`. Plurisubharmonic potentials give a nonnegative margin.
pub fn subaverage_check<F>(
    eval: F,
    center: &ComplexVector,
    direction: &ComplexVector,
    radius: f64,
    m: usize,
) -> Result<SubaverageReport>
where
    F: Fn(&ComplexVector) -> Result<PotentialEstimate> + Sync,
{
    if m < 16 {
        return Err(Error::InvalidParameter("at least 16 circle samples are required".into()));
    }
    if center.k() != direction.k() {
        return Err(Error::DimensionMismatch { expected: center.k(), got: direction.k() });
    }
    let c = eval(center)?;
    if !c.converged {
        return Err(Error::InsufficientConvergence);
    }
    let vals: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / m as f64;
            let p = center.add(&direction.scale(Complex64::from_polar(radius, th)));
            let e = eval(&p)?;
            if e.converged {
                Ok(e.value)
            } else {
                Err(Error::InsufficientConvergence)
            }
        })
        .collect::<Result<_>>()?;
    let circle_mean = vals.iter().sum::<f64>() / m as f64;
    Ok(SubaverageReport { center_value: c.value, circle_mean, margin: circle_mean - c.value })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    pub n_hi: usize,
    /// Pairs `(z, n)` with `Φ_{n+1}(z) > Φ_n(z) + slack`.
    pub violations: usize,
    /// Largest `Φ_{n+1} − Φ_n` seen.
    pub worst_increase: f64,
}

/// `Φ_{n+1} ≤ Φ_n + slack` for `n < n_hi` at points uniform in `Δ^k(0; radius)`.
pub fn envelope_monotonicity_check(
    s: &MapSequence,
    samples: usize,
    n_hi: usize,
    radius: f64,
    slack: f64,
    seed: u64,
) -> Result<EnvelopeReport> {
    let d = eta_degree(s)?;
    let t = rng::tag("envelope_monotone");
    let rows: Vec<(usize, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t, i as u64);
            let z = rng::polydisc(&mut g, s.dim(), radius);
            let p = psi_sequence(s, &z, n_hi)?;
            let env: Vec<f64> = p.iter().enumerate().map(|(n, v)| v + envelope_tail(d, n)).collect();
            let mut bad = 0;
            let mut worst = f64::NEG_INFINITY;
            for w in env.windows(2) {
                let inc = w[1] - w[0];
                worst = worst.max(inc);
                if inc > slack {
                    bad += 1;
                }
            }
            Ok((bad, worst))
        })
        .collect::<Result<_>>()?;
    Ok(EnvelopeReport {
        samples,
        n_hi,
        violations: rows.iter().map(|r| r.0).sum(),
        worst_increase: rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubaverageSuite {
    pub points: usize,
    pub radius: f64,
    pub circle_samples: usize,
    /// Candidates rejected because `ψ` at the centre was not below `−margin`.
    pub rejected: usize,
    /// Centres whose circle needed more than `n_max` steps to converge.
    pub unconverged: usize,
    pub min_margin: f64,
    pub margins: Vec<f64>,
}

/// Circle subaveraging of `ψ` at `points` centres with `ψ(centre) < −margin`,
/// drawn from `Δ^k(0; sample_radius)`, in random unit directions.
pub fn subaverage_suite(
    s: &MapSequence,
    points: usize,
    radius: f64,
    m: usize,
    sample_radius: f64,
    margin: f64,
    seed: u64,
) -> Result<SubaverageSuite> {
    let k = s.dim();
    let t = rng::tag("subaverage_suite");
    let eval = |z: &ComplexVector| psi_limit(s, z, DEFAULT_TOL, 60);
    let mut margins = Vec::with_capacity(points);
    let (mut rejected, mut unconverged) = (0, 0);
    let mut idx = 0u64;
    while margins.len() < points {
        if idx > 1_000_000 {
            return Err(Error::SamplerFailure("no interior centres found".into()));
        }
        let mut g = rng::stream(seed, t, idx);
        idx += 1;
        let c = rng::polydisc(&mut g, k, sample_radius);
        let e = eval(&c)?;
        if !(e.converged && e.value < -margin) {
            rejected += 1;
            continue;
        }
        let mut dir = rng::polydisc(&mut g, k, 1.0);
        let n = dir.entries.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        dir = dir.scale(Complex64::new(1.0 / n, 0.0));
        match subaverage_check(eval, &c, &dir, radius, m) {
            Ok(r) => margins.push(r.margin),
            Err(Error::InsufficientConvergence) => unconverged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(SubaverageSuite {
        points,
        radius,
        circle_samples: m,
        rejected,
        unconverged,
        min_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tower() -> MapSequence {
        MapSequence::power_tower(3, 2, 0.5).unwrap()
    }

    #[test]
    fn phi_at_origin_is_eta() {
        let s = tower();
        for n in [0, 3, 10, 40] {
            let p = phi_n(&s, &ComplexVector::zeros(3), n).unwrap();
            assert_eq!(p.log_modulus, 2f64.powi(n as i32) * 0.5f64.ln());
        }
    }

    #[test]
    fn psi_on_preimage_of_origin_is_log_a() {
        let s = tower();
        let z = s.inverse_prefix(5, &ComplexVector::zeros(3)).unwrap();
        // the preimage of 0 under F(5) is 0 itself for this family
        for n in 5..=20 {
            let psi = psi_n(&s, &z, n).unwrap();
            assert!((psi - 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_closed_form() {
        assert!((envelope_tail(2, 3) - 0.086_643_397_569_993_2).abs() < 1e-16);
    }

    #[test]
    fn limit_at_origin() {
        let e = psi_limit(&tower(), &ComplexVector::zeros(3), DEFAULT_TOL, 60).unwrap();
        assert!(e.converged);
        assert!((e.value - 0.5f64.ln()).abs() < 1e-15);
        assert!(e.envelope_value >= e.value);
    }

    #[test]
    fn escaping_point_positive() {
        let z = ComplexVector::from_real(&[0.0, 0.0, 3.0]);
        let e = psi_limit(&tower(), &z, DEFAULT_TOL, 60).unwrap();
        assert!(e.converged && e.value > 0.0);
        let a = psi_n(&tower(), &z, 20).unwrap();
        let b = psi_n(&tower(), &z, 25).unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn log_phi_grows_like_power() {
        let z = ComplexVector::from_real(&[0.0, 0.0, 3.0]);
        let l = log_phi_sequence(&tower(), &z, 30).unwrap();
        // successive ratios approach d
        assert!((l[30] / l[29] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn envelope_decreases() {
        let s = tower();
        let z = ComplexVector::from_real(&[0.7, -0.4, 0.9]);
        let p = psi_sequence(&s, &z, 30).unwrap();
        for n in 0..30 {
            assert!(p[n + 1] + envelope_tail(2, n + 1) <= p[n] + envelope_tail(2, n) + 1e-12);
        }
    }

    fn shift() -> MapSpec {
        MapSpec::shift_like(3, 2, 2, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn green_of_origin_is_zero() {
        let gp = GreenParams::new(2, 60, 1e-9).unwrap();
        let g = green_plus(&shift(), &ComplexVector::zeros(3), &gp).unwrap();
        assert_eq!(g.value, 0.0);
        assert!(g.converged);
        let g = green_minus(&shift(), &ComplexVector::zeros(3), &gp).unwrap();
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn green_depth_stable() {
        let z = ComplexVector::from_real(&[0.0, 0.0, 10.0]);
        let a = green_at_depth(&shift(), &z, 2, 20).unwrap();
        let b = green_at_depth(&shift(), &z, 2, 30).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn green_bounded_below_on_v_plus() {
        let gp = GreenParams::new(2, 60, 1e-9).unwrap();
        let t = rng::tag("test_green_lower");
        for i in 0..50 {
            let mut r = rng::stream(1, t, i);
            let z = sample_v_plus(&mut r, 3, 2, 4.0);
            let g = green_plus(&shift(), &z, &gp).unwrap();
            assert!(g.value >= (0.5 * z.sup_norm_unchecked()).ln());
        }
    }

    #[test]
    fn affine_subaverage_is_zero() {
        let eval = |z: &ComplexVector| {
            Ok(PotentialEstimate {
                value: z.entries[0].re,
                depth_used: 0,
                cauchy_gap: 0.0,
                converged: true,
                envelope_value: z.entries[0].re,
            })
        };
        let c = ComplexVector::from_real(&[0.3, 0.1]);
        let d = ComplexVector::from_real(&[1.0, 0.5]);
        let r = subaverage_check(eval, &c, &d, 0.05, 64).unwrap();
        assert!(r.margin.abs() < 1e-15);
    }

    #[test]
    fn subaverage_rejects_unconverged() {
        let eval = |_: &ComplexVector| {
            Ok(PotentialEstimate { value: 0.0, depth_used: 1, cauchy_gap: 1.0, converged: false, envelope_value: 0.0 })
        };
        let c = ComplexVector::zeros(2);
        let r = subaverage_check(eval, &c, &c, 0.05, 16);
        assert_eq!(r, Err(Error::InsufficientConvergence));
    }
}
