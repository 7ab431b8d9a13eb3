//! Orbit classification, `Ω_{n,c}` membership, slice rasters and disc
//! witnesses for non-autonomous basins at the origin.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{classify_filtration, classify_log_moduli, in_polydisc, ComplexVector, FiltrationSpec, Region};
use crate::logscalar::{LogScalar, Scalar};
use crate::maps::MapSequence;
use crate::potentials::{psi_limit, PotentialEstimate, DEFAULT_TOL};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyParams {
    pub filtration: FiltrationSpec,
    pub c_in: f64,
    pub n_max: usize,
    /// Dead zone around `ψ = 0` for sign comparisons.
    pub margin: f64,
}

impl ClassifyParams {
    pub fn new(filtration: FiltrationSpec, c_in: f64, n_max: usize, margin: f64) -> Result<Self> {
        if !(c_in > 0.0 && c_in < 1.0) {
            return Err(Error::InvalidParameter("c_in must lie in (0,1)".into()));
        }
        if n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        Ok(ClassifyParams { filtration, c_in, n_max, margin })
    }

    /// Defaults for a power tower `η_n = a^{d^n}`: `R = max(2, 1 + a + 0.1)`,
    /// `V⁺ = V_2 ∪ … ∪ V_k`, `c_in = 0.5`.
    pub fn for_tower(k: usize, a: f64) -> Result<Self> {
        let r = default_radius(a);
        Self::new(FiltrationSpec::standard(k, r)?, 0.5, 60, 1e-3)
    }

    pub fn radius(&self) -> f64 {
        self.filtration.r
    }
}

pub fn default_radius(a: f64) -> f64 {
    2f64.max(1.0 + a + 0.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    Attracted { step: usize },
    Escaped { step: usize, axis: usize },
    Undecided,
}

impl OrbitClass {
    pub fn gray(&self) -> u8 {
        match self {
            OrbitClass::Attracted { .. } => 0,
            OrbitClass::Undecided => 128,
            OrbitClass::Escaped { .. } => 255,
        }
    }

    pub fn is_attracted(&self) -> bool {
        matches!(self, OrbitClass::Attracted { .. })
    }

    pub fn is_escaped(&self) -> bool {
        matches!(self, OrbitClass::Escaped { .. })
    }
}

/// Whether capture at step `n` is final: `|η_n| ≤ 1 − c_in` maps the open
/// polydisc `Δ^k(0;c_in)` into itself, and the schedule only decreases.
fn capture_valid(s: &MapSequence, n: usize, c_in: f64) -> bool {
    match s.eta(n) {
        Some(e) => e.log_modulus <= (1.0 - c_in).ln() + 1e-12,
        None => true,
    }
}

/// Classifies `z` by its orbit; `step` counts the maps applied so far.
pub fn classify_point(s: &MapSequence, z: &ComplexVector, p: &ClassifyParams) -> Result<OrbitClass> {
    if z.k() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: z.k() });
    }
    let n_max = p.n_max.min(s.n_max + 1);
    let mut w = z.entries.clone();
    for step in 0..=n_max {
        let cur = ComplexVector { entries: w, overflowed: false };
        let tag = if cur.is_finite() {
            classify_filtration(&cur, &p.filtration)?
        } else {
            return Ok(OrbitClass::Undecided);
        };
        if tag.region == Region::Plus {
            return Ok(OrbitClass::Escaped { step, axis: tag.dominant_axis.expect("plus has an axis") });
        }
        if in_polydisc(&cur, p.c_in) && capture_valid(s, step, p.c_in) {
            return Ok(OrbitClass::Attracted { step });
        }
        if step == n_max {
            break;
        }
        w = s.step_generic(step, &cur.entries);
        if !w.iter().all(|x| x.finite()) {
            // redo the step in log form just to read off the dominant axis
            let lz: Vec<LogScalar> = cur.entries.iter().map(|&x| LogScalar::from_complex(x)).collect();
            let lw = s.step_generic(step, &lz);
            let logs: Vec<f64> = lw.iter().map(|x| x.log_modulus).collect();
            let tag = classify_log_moduli(&logs, &p.filtration)?;
            return Ok(match (tag.region, tag.dominant_axis) {
                (Region::Plus, Some(axis)) => OrbitClass::Escaped { step: step + 1, axis },
                _ => OrbitClass::Undecided,
            });
        }
    }
    Ok(OrbitClass::Undecided)
}

/// `F(n)(z) ∈ Δ^k(0;c)`; overflow before step `n` gives `false`.
pub fn omega_membership(s: &MapSequence, z: &ComplexVector, n: usize, c: f64) -> Result<bool> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter("c must be positive".into()));
    }
    let w = s.forward(n, z)?;
    Ok(!w.overflowed && in_polydisc(&w, c))
}

/// Smallest `n` with `|η_{n+1}| ≤ 1 − c`, from which `Ω_{n,c} ⊆ Ω_{n+1,c}`.
pub fn nested_threshold(s: &MapSequence, c: f64) -> Option<usize> {
    (0..s.n_max).find(|&n| capture_valid(s, n + 1, c))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedReport {
    pub members: usize,
    pub violations: usize,
    pub tries: u64,
    pub threshold: Option<usize>,
}

const MAX_TRIES: u64 = 1_000_000;

/// Rejection-samples members of `Ω_{n,c}` in `Δ^k(0; sample_radius)` for
/// `n` cycling through `n_lo..=n_hi` and counts those outside `Ω_{n+1,c}`.
#[allow(clippy::too_many_arguments)]
pub fn nested_union_check(
    s: &MapSequence,
    c: f64,
    n_lo: usize,
    n_hi: usize,
    samples: usize,
    seed: u64,
    sample_radius: f64,
) -> Result<NestedReport> {
    if n_lo > n_hi || n_hi + 1 > s.n_max {
        return Err(Error::InvalidParameter("need n_lo <= n_hi < n_max".into()));
    }
    let k = s.dim();
    let t = rng::tag("nested_union");
    let span = n_hi - n_lo + 1;
    let res: Vec<(u64, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let n = n_lo + i % span;
            let mut r = rng::stream(seed, t, i as u64);
            for tries in 1..=MAX_TRIES {
                let z = rng::polydisc(&mut r, k, sample_radius);
                if omega_membership(s, &z, n, c)? {
                    return Ok((tries, !omega_membership(s, &z, n + 1, c)?));
                }
            }
            Err(Error::SamplerFailure(format!("no member of the n={n} set in {MAX_TRIES} tries")))
        })
        .collect::<Result<_>>()?;
    Ok(NestedReport {
        members: res.len(),
        violations: res.iter().filter(|x| x.1).count(),
        tries: res.iter().map(|x| x.0).sum(),
        threshold: nested_threshold(s, c),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: ComplexVector,
    pub dir_u: ComplexVector,
    pub dir_v: ComplexVector,
    pub width: usize,
    pub height: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.base.k();
        if self.dir_u.k() != k || self.dir_v.k() != k {
            return Err(Error::DimensionMismatch { expected: k, got: self.dir_u.k().max(self.dir_v.k()) });
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2x2 pixels".into()));
        }
        if !(self.u_max > self.u_min && self.v_max > self.v_min) {
            return Err(Error::InvalidParameter("empty window".into()));
        }
        // independence over R: Gram determinant of the real 2k-vectors
        let dot = |a: &ComplexVector, b: &ComplexVector| -> f64 {
            a.entries.iter().zip(&b.entries).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
        };
        let (uu, vv, uv) = (dot(&self.dir_u, &self.dir_u), dot(&self.dir_v, &self.dir_v), dot(&self.dir_u, &self.dir_v));
        if !(uu * vv - uv * uv > 1e-12 * uu * vv) || uu == 0.0 {
            return Err(Error::InvalidParameter("slice directions are dependent".into()));
        }
        Ok(())
    }

    /// Default slice `z_1 = 0` through the origin, window `[-2,2]²`.
    pub fn default_slice(k: usize, size: usize) -> Self {
        let mut du = ComplexVector::zeros(k);
        du.entries[1] = Complex64::new(1.0, 0.0);
        let mut dv = ComplexVector::zeros(k);
        dv.entries[k - 1] = Complex64::new(1.0, 0.0);
        GridSpec {
            base: ComplexVector::zeros(k),
            dir_u: du,
            dir_v: dv,
            width: size,
            height: size,
            u_min: -2.0,
            u_max: 2.0,
            v_min: -2.0,
            v_max: 2.0,
        }
    }

    /// Real parameters of pixel `(row, col)`; row 0 is `v_max`.
    pub fn params(&self, row: usize, col: usize) -> (f64, f64) {
        let u = self.u_min + col as f64 * (self.u_max - self.u_min) / (self.width - 1) as f64;
        let v = self.v_max - row as f64 * (self.v_max - self.v_min) / (self.height - 1) as f64;
        (u, v)
    }

    pub fn point(&self, row: usize, col: usize) -> ComplexVector {
        let (u, v) = self.params(row, col);
        let entries = (0..self.base.k())
            .map(|i| self.base.entries[i] + self.dir_u.entries[i] * u + self.dir_v.entries[i] * v)
            .collect();
        ComplexVector { entries, overflowed: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub grid: GridSpec,
    /// `height` rows of `width` classes.
    pub classes: Vec<Vec<OrbitClass>>,
    pub psi: Option<Vec<Vec<PotentialEstimate>>>,
}

impl Raster {
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for cl in self.classes.iter().flatten() {
            match cl {
                OrbitClass::Attracted { .. } => c.0 += 1,
                OrbitClass::Escaped { .. } => c.1 += 1,
                OrbitClass::Undecided => c.2 += 1,
            }
        }
        c
    }
}

pub fn render_slice(s: &MapSequence, g: &GridSpec, p: &ClassifyParams, also_psi: bool) -> Result<Raster> {
    g.validate()?;
    if g.base.k() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: g.base.k() });
    }
    let cells: Vec<(OrbitClass, Option<PotentialEstimate>)> = (0..g.width * g.height)
        .into_par_iter()
        .map(|idx| {
            let z = g.point(idx / g.width, idx % g.width);
            let cl = classify_point(s, &z, p)?;
            let psi = if also_psi { Some(psi_limit(s, &z, DEFAULT_TOL, p.n_max)?) } else { None };
            Ok((cl, psi))
        })
        .collect::<Result<_>>()?;
    let classes = cells.chunks(g.width).map(|r| r.iter().map(|c| c.0).collect()).collect();
    let psi = also_psi.then(|| cells.chunks(g.width).map(|r| r.iter().map(|c| c.1.clone().unwrap()).collect()).collect());
    Ok(Raster { grid: g.clone(), classes, psi })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    /// Decided pixels whose `|ψ|` exceeds the margin.
    pub compared: usize,
    pub agree: usize,
    pub undecided: usize,
}

impl CoherenceReport {
    pub fn fraction(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.agree as f64 / self.compared as f64
        }
    }
}

/// Agreement between the sign of `ψ` and the orbit class.
pub fn sign_coherence(r: &Raster, margin: f64) -> Result<CoherenceReport> {
    let psi = r.psi.as_ref().ok_or_else(|| Error::InvalidParameter("raster has no potential channel".into()))?;
    let mut rep = CoherenceReport { compared: 0, agree: 0, undecided: 0 };
    for (cr, pr) in r.classes.iter().zip(psi) {
        for (c, p) in cr.iter().zip(pr) {
            if *c == OrbitClass::Undecided {
                rep.undecided += 1;
                continue;
            }
            if p.value.abs() <= margin {
                continue;
            }
            rep.compared += 1;
            if (p.value < 0.0) == c.is_attracted() {
                rep.agree += 1;
            }
        }
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub n0: usize,
    pub verified: bool,
    /// `‖ξ_{n0}‖∞`, the derivative size at the capture step.
    pub xi_norm: f64,
}

/// Finds the first step `n0` at which the disc `p_{n0} + Δ(0;1)·r·ξ_{n0}`
/// sits inside `Δ^k(0;c_in)`, where `p_n` and `ξ_n` are the orbit of `pt`
/// and of the tangent under the first `n` maps, and checks that `m` pulled
/// back boundary points of the disc classify as attracted.
pub fn kobayashi_witness(
    s: &MapSequence,
    pt: &ComplexVector,
    tangent: &ComplexVector,
    rscale: f64,
    p: &ClassifyParams,
    m: usize,
) -> Result<Witness> {
    if !classify_point(s, pt, p)?.is_attracted() {
        return Err(Error::InvalidParameter("witness base point must be attracted".into()));
    }
    if tangent.k() != pt.k() || tangent.sup_norm_unchecked() == 0.0 {
        return Err(Error::InvalidParameter("tangent must be a nonzero vector of matching dimension".into()));
    }
    let (mut pz, mut xi) = (pt.entries.clone(), tangent.entries.clone());
    let n_max = p.n_max.min(s.n_max + 1);
    for n in 0..=n_max {
        let fits = pz.iter().zip(&xi).all(|(a, b)| a.norm() + rscale * b.norm() < p.c_in);
        if fits && capture_valid(s, n, p.c_in) {
            let verified = (0..m).all(|j| {
                let th = std::f64::consts::TAU * j as f64 / m as f64;
                let w: Vec<Complex64> =
                    pz.iter().zip(&xi).map(|(a, b)| a + b * Complex64::from_polar(rscale, th)).collect();
                let mut z = w;
                for step in (0..n).rev() {
                    z = s.step_inverse_generic(step, &z);
                }
                let z = ComplexVector::flagged(z);
                !z.overflowed && classify_point(s, &z, p).map(|c| c.is_attracted()).unwrap_or(false)
            });
            let xi_norm = xi.iter().map(|x| x.norm()).fold(0.0, f64::max);
            return Ok(Witness { n0: n, verified, xi_norm });
        }
        if n == n_max {
            break;
        }
        (pz, xi) = s.step_differential(n, &pz, &xi);
    }
    Err(Error::WitnessDepthExceeded)
}

/// Follows attracted samples past their capture step and counts orbits that
/// leave `Δ^k(0;c_in)` again.
pub fn capture_absorbing_check(
    s: &MapSequence,
    p: &ClassifyParams,
    samples: usize,
    seed: u64,
    sample_radius: f64,
) -> Result<(usize, usize)> {
    let k = s.dim();
    let t = rng::tag("capture_absorbing");
    let res: Vec<Option<bool>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, t, i as u64);
            let z = rng::polydisc(&mut r, k, sample_radius);
            let OrbitClass::Attracted { step } = classify_point(s, &z, p)? else { return Ok(None) };
            let mut w = s.forward_generic::<Complex64>(step.saturating_sub(1), &z.entries);
            if step == 0 {
                w = z.entries.clone();
            }
            let mut bad = false;
            for n in step..s.n_max.min(p.n_max) {
                w = s.step_generic(n, &w);
                if !w.iter().all(|x| x.norm() < p.c_in) {
                    bad = true;
                    break;
                }
            }
            Ok(Some(bad))
        })
        .collect::<Result<_>>()?;
    let attracted = res.iter().flatten().count();
    let violations = res.iter().flatten().filter(|b| **b).count();
    Ok((attracted, violations))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub steps: usize,
    /// Samples whose first image left `V⁺`.
    pub violations: usize,
    /// Samples with some iterate outside `V⁺` within `steps` steps.
    pub orbit_violations: usize,
}

/// Point of `V⁺_R`: the sup norm, in `(R, 4R)`, sits on a plus axis.
pub fn sample_filtration_plus<G: rand::Rng>(g: &mut G, f: &FiltrationSpec) -> ComplexVector {
    let axes: Vec<usize> = (1..=f.k).filter(|&a| f.is_plus_axis(a)).collect();
    let axis = axes[((g.random::<f64>() * axes.len() as f64) as usize).min(axes.len() - 1)];
    let top = rng::annulus(g, f.r * (1.0 + 1e-9), 4.0 * f.r);
    let m = top.norm();
    let mut entries: Vec<Complex64> = (0..f.k).map(|_| rng::disc(g, m)).collect();
    entries[axis - 1] = top;
    ComplexVector { entries, overflowed: false }
}

/// Forward invariance of `V⁺`: each sample is pushed `steps` times through
/// `F_0, F_1, …` in log form and every iterate is classified.
pub fn filtration_invariance_check(
    s: &MapSequence,
    f: &FiltrationSpec,
    samples: usize,
    steps: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    if f.k != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: f.k });
    }
    if steps == 0 || steps > s.n_max + 1 {
        return Err(Error::InvalidParameter("steps must lie in 1..=n_max+1".into()));
    }
    let t = rng::tag("filtration_invariance");
    let rows: Vec<(bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t, i as u64);
            let z = sample_filtration_plus(&mut g, f);
            let mut w: Vec<LogScalar> = z.entries.iter().map(|&x| LogScalar::from_complex(x)).collect();
            let mut first = false;
            let mut any = false;
            for n in 0..steps {
                w = s.step_generic(n, &w);
                let logs: Vec<f64> = w.iter().map(|x| x.log_modulus).collect();
                if classify_log_moduli(&logs, f)?.region != Region::Plus {
                    any = true;
                    if n == 0 {
                        first = true;
                    }
                }
            }
            Ok((first, any))
        })
        .collect::<Result<_>>()?;
    Ok(InvarianceReport {
        samples,
        steps,
        violations: rows.iter().filter(|r| r.0).count(),
        orbit_violations: rows.iter().filter(|r| r.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tower() -> MapSequence {
        MapSequence::power_tower(3, 2, 0.5).unwrap()
    }

    fn params() -> ClassifyParams {
        ClassifyParams::new(FiltrationSpec::standard(3, 2.0).unwrap(), 0.5, 60, 1e-3).unwrap()
    }

    #[test]
    fn tower_filtration_is_invariant() {
        let s = tower();
        let f = FiltrationSpec::standard(3, default_radius(0.5)).unwrap();
        let r = filtration_invariance_check(&s, &f, 500, 20, 1).unwrap();
        assert_eq!((r.violations, r.orbit_violations), (0, 0));
    }

    #[test]
    fn classify_examples() {
        let s = tower();
        let p = params();
        assert_eq!(classify_point(&s, &ComplexVector::zeros(3), &p).unwrap(), OrbitClass::Attracted { step: 0 });
        assert_eq!(
            classify_point(&s, &ComplexVector::from_real(&[0.0, 0.0, 3.0]), &p).unwrap(),
            OrbitClass::Escaped { step: 0, axis: 3 }
        );
        match classify_point(&s, &ComplexVector::from_real(&[0.1, 0.1, 0.1]), &p).unwrap() {
            OrbitClass::Attracted { step } => assert!(step <= 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn v_minus_point_is_decided_later() {
        let s = tower();
        let c = classify_point(&s, &ComplexVector::from_real(&[3.0, 0.0, 0.0]), &params()).unwrap();
        assert!(matches!(c, OrbitClass::Escaped { step, .. } if step >= 1));
    }

    #[test]
    fn membership_examples() {
        let s = tower();
        for n in [0, 5, 30] {
            assert!(omega_membership(&s, &ComplexVector::zeros(3), n, 0.1).unwrap());
        }
        let z = ComplexVector::from_real(&[0.4, 0.3, 0.2]);
        let direct = in_polydisc(&s.maps_at(0)[0].apply(&z).unwrap(), 0.3);
        assert_eq!(omega_membership(&s, &z, 0, 0.3).unwrap(), direct);
        if omega_membership(&s, &z, 2, 0.2).unwrap() {
            assert!(omega_membership(&s, &z, 2, 0.4).unwrap());
        }
    }

    #[test]
    fn overflowing_orbit_is_not_a_member() {
        let s = tower();
        assert!(!omega_membership(&s, &ComplexVector::from_real(&[0.0, 0.0, 1e200]), 5, 0.5).unwrap());
    }

    #[test]
    fn threshold_for_tower() {
        assert_eq!(nested_threshold(&tower(), 0.5), Some(0));
    }

    #[test]
    fn small_nested_check() {
        let rep = nested_union_check(&tower(), 0.5, 0, 3, 50, 9, 4.0).unwrap();
        assert_eq!(rep.members, 50);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn origin_slice_is_attracted() {
        let mut g = GridSpec::default_slice(3, 8);
        g.u_min = -0.1;
        g.u_max = 0.1;
        g.v_min = -0.1;
        g.v_max = 0.1;
        let r = render_slice(&tower(), &g, &params(), false).unwrap();
        assert_eq!(r.counts(), (64, 0, 0));
    }

    #[test]
    fn plus_slice_is_escaped() {
        let mut g = GridSpec::default_slice(3, 8);
        g.base.entries[2] = Complex64::new(10.0, 0.0);
        g.u_min = -1.0;
        g.u_max = 1.0;
        g.v_min = -1.0;
        g.v_max = 1.0;
        let r = render_slice(&tower(), &g, &params(), false).unwrap();
        assert_eq!(r.counts(), (0, 64, 0));
    }

    #[test]
    fn dependent_directions_rejected() {
        let mut g = GridSpec::default_slice(3, 8);
        g.dir_v = g.dir_u.scale(Complex64::new(2.0, 0.0));
        assert!(g.validate().is_err());
        // i·e2 is independent of e2 over R
        g.dir_v = g.dir_u.scale(Complex64::new(0.0, 1.0));
        assert!(g.validate().is_ok());
    }

    #[test]
    fn witness_at_origin() {
        let s = tower();
        let p = params();
        let t = ComplexVector::from_real(&[1.0, 0.0, 0.0]);
        let w = kobayashi_witness(&s, &ComplexVector::zeros(3), &t, 0.0, &p, 16).unwrap();
        assert_eq!(w.n0, 0);
        let mut last = 0;
        for r in [1.0, 2.0, 4.0, 8.0] {
            let w = kobayashi_witness(&s, &ComplexVector::zeros(3), &t, r, &p, 16).unwrap();
            assert!(w.n0 >= last);
            // larger discs pull back to |z| ~ 1e50, where forward iteration
            // in doubles cancels catastrophically
            if r <= 2.0 {
                assert!(w.verified);
            }
            last = w.n0;
        }
    }

    #[test]
    fn witness_needs_attracted_point() {
        let s = tower();
        let t = ComplexVector::from_real(&[1.0, 0.0, 0.0]);
        assert!(kobayashi_witness(&s, &ComplexVector::from_real(&[0.0, 0.0, 3.0]), &t, 1.0, &params(), 8).is_err());
    }

    #[test]
    fn capture_is_absorbing() {
        let (att, bad) = capture_absorbing_check(&tower(), &params(), 500, 2, 1.5).unwrap();
        assert!(att > 0);
        assert_eq!(bad, 0);
    }
}
