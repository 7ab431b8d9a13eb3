//! Boundary graphs over polydisc faces.
//!
//! A face `P_j(R) = {|z_j| = 1, |z_i| ≤ R (i ≠ j)}` is parametrised by a
//! unimodular `ξ` and the transverse coordinates. A hypersurface close to
//! `{|z_j| = 1}` is a graph `z_j = r(ξ, z_⊥) ξ` over it. Graphs are computed
//! by bisection along rays `t ↦ t ξ e_j + z_⊥`, except for the single-map
//! case `|z² + αw| = 1`, which has a closed form.

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basin::{classify_point, ClassifyParams, OrbitClass};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, ComplexVector, FiltrationSpec};
use crate::logscalar::{LogScalar, Scalar};
use crate::maps::{EtaRule, Generator, MapSequence};
use crate::rng;

/// Largest accepted `| |π_j F(z(t*))| / level − 1 |` at a bisection root.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Finite-difference step for derivatives of graphs and defining functions.
pub const FD_STEP: f64 = 1e-4;
const RAY_SCAN: usize = 32;
const MAX_HALVINGS: usize = 200;

/// Positive `t` with `|t² ξ² + α w| = 1`.
///
/// With `s = t²` the condition is `s² + 2cs + |αw|² = 1`, `c = Re(ξ² conj(αw))`,
/// whose positive root is taken in the cancellation-free form when `c > 0`.
pub fn phi_alpha(xi: Complex64, w: Complex64, alpha: f64) -> Result<f64> {
    if !(xi.re.is_finite() && xi.im.is_finite() && w.re.is_finite() && w.im.is_finite() && alpha.is_finite()) {
        return Err(Error::NonFinite);
    }
    if alpha < 0.0 {
        return Err(Error::InvalidParameter("alpha must be non-negative".into()));
    }
    if (xi.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("xi must be unimodular".into()));
    }
    let v = w * alpha;
    let m2 = v.norm_sqr();
    if m2 >= 1.0 {
        return Err(Error::GraphBreaksDown);
    }
    let c = (xi * xi * v.conj()).re;
    let root = (c * c + 1.0 - m2).sqrt();
    let s = if c > 0.0 { (1.0 - m2) / (c + root) } else { root - c };
    Ok(s.sqrt())
}

/// `| |φ² ξ² + αw| − 1 |` for a computed `φ`.
pub fn phi_alpha_residual(xi: Complex64, w: Complex64, alpha: f64, phi: f64) -> f64 {
    ((xi * xi * (phi * phi) + w * alpha).norm() - 1.0).abs()
}

/// Conservative `α₀` with `sup|φ_α − 1| ≤ eps` on `∂Δ × Δ̄(0;R)` for `α ≤ α₀`.
///
/// From `1 − αR ≤ φ² ≤ 1 + αR` we get `|φ − 1| ≤ αR`; the cap at `eps = 1`
/// keeps `α₀R ≤ 1/2`, so the graph is always defined.
pub fn alpha0_for(eps: f64, r: f64) -> Result<f64> {
    if !(eps > 0.0 && r > 0.0) {
        return Err(Error::InvalidParameter("eps and R must be positive".into()));
    }
    Ok(eps.min(1.0) / (2.0 * r))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alpha0Check {
    pub alpha: f64,
    pub eps: f64,
    pub r: f64,
    /// Sampled `sup|φ_α − 1|`.
    pub sup_deviation: f64,
    /// Sampled sup of first finite differences in `(arg ξ, Re w, Im w)`.
    pub sup_first_derivative: f64,
    pub max_residual: f64,
    pub passes: bool,
}

/// Grid verification of `sup|φ_α − 1| ≤ eps` on `n_xi` angles times a
/// polar grid of `n_w` radii and `n_w` angles in `Δ̄(0;R)`.
pub fn alpha0_grid_check(eps: f64, r: f64, alpha: f64, n_xi: usize, n_w: usize) -> Result<Alpha0Check> {
    if n_xi < 4 || n_w < 2 {
        return Err(Error::InvalidParameter("grid too coarse".into()));
    }
    let mut sup_dev = 0f64;
    let mut sup_der = 0f64;
    let mut max_res = 0f64;
    let h = FD_STEP;
    for a in 0..n_xi {
        let th = std::f64::consts::TAU * a as f64 / n_xi as f64;
        let xi = Complex64::from_polar(1.0, th);
        for ri in 0..n_w {
            let rad = r * ri as f64 / (n_w - 1) as f64;
            for wa in 0..n_w {
                let w = Complex64::from_polar(rad, std::f64::consts::TAU * wa as f64 / n_w as f64);
                let p = phi_alpha(xi, w, alpha)?;
                sup_dev = sup_dev.max((p - 1.0).abs());
                max_res = max_res.max(phi_alpha_residual(xi, w, alpha, p));
                let dth = (phi_alpha(Complex64::from_polar(1.0, th + h), w, alpha)?
                    - phi_alpha(Complex64::from_polar(1.0, th - h), w, alpha)?)
                    / (2.0 * h);
                let dre = (phi_alpha(xi, w + h, alpha)? - phi_alpha(xi, w - h, alpha)?) / (2.0 * h);
                let i = Complex64::new(0.0, h);
                let dim = (phi_alpha(xi, w + i, alpha)? - phi_alpha(xi, w - i, alpha)?) / (2.0 * h);
                sup_der = sup_der.max(dth.abs()).max(dre.abs()).max(dim.abs());
            }
        }
    }
    Ok(Alpha0Check {
        alpha,
        eps,
        r,
        sup_deviation: sup_dev,
        sup_first_derivative: sup_der,
        max_residual: max_res,
        passes: sup_dev <= eps,
    })
}

/// `n` points of a sunflower spiral filling `Δ̄(0;R)` evenly.
pub fn disc_spiral(n: usize, r: f64) -> Vec<Complex64> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n).map(|i| Complex64::from_polar(r * ((i as f64 + 0.5) / n as f64).sqrt(), golden * i as f64)).collect()
}

/// Sampled `(min, max)` of `φ_α` over `∂Δ × Δ̄(0;R)`.
pub fn phi_alpha_range(alpha: f64, r: f64, n_xi: usize, n_w: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for a in 0..n_xi.max(1) {
        let xi = Complex64::from_polar(1.0, std::f64::consts::TAU * a as f64 / n_xi.max(1) as f64);
        for ri in 0..n_w.max(2) {
            let rad = r * ri as f64 / (n_w.max(2) - 1) as f64;
            for wa in 0..n_w.max(2) {
                let w = Complex64::from_polar(rad, std::f64::consts::TAU * wa as f64 / n_w.max(2) as f64);
                let p = phi_alpha(xi, w, alpha)?;
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
    }
    Ok((lo, hi))
}

/// Sample nodes on a face `P_j(R)`.
///
/// Each transverse coordinate runs over a polar grid: the centre plus
/// `transverse_rings` rings of `2·transverse_rings` points, the outer ring
/// at radius `R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceGrid {
    pub k: usize,
    /// Face axis, 1-based.
    pub j: usize,
    pub r: f64,
    pub angular_samples: usize,
    pub transverse_rings: usize,
}

impl FaceGrid {
    pub fn new(k: usize, j: usize, r: f64, angular_samples: usize, transverse_rings: usize) -> Result<Self> {
        check_dim(k)?;
        if j == 0 || j > k {
            return Err(Error::InvalidParameter(format!("face axis {j} outside 1..={k}")));
        }
        if angular_samples < 16 {
            return Err(Error::InvalidParameter("angular_samples must be at least 16".into()));
        }
        if transverse_rings == 0 {
            return Err(Error::InvalidParameter("transverse_rings must be at least 1".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter("face radius must be positive".into()));
        }
        Ok(FaceGrid { k, j, r, angular_samples, transverse_rings })
    }

    /// Axes other than `j`, increasing.
    pub fn transverse_axes(&self) -> Vec<usize> {
        (1..=self.k).filter(|&i| i != self.j).collect()
    }

    fn ring_len(&self) -> usize {
        2 * self.transverse_rings
    }

    fn polar_len(&self) -> usize {
        1 + self.transverse_rings * self.ring_len()
    }

    fn polar_point(&self, idx: usize) -> Complex64 {
        if idx == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let ring = (idx - 1) / self.ring_len() + 1;
        let a = (idx - 1) % self.ring_len();
        let rad = self.r * ring as f64 / self.transverse_rings as f64;
        Complex64::from_polar(rad, std::f64::consts::TAU * a as f64 / self.ring_len() as f64)
    }

    pub fn transverse_count(&self) -> usize {
        self.polar_len().pow((self.k - 1) as u32)
    }

    pub fn node_count(&self) -> usize {
        self.angular_samples * self.transverse_count()
    }

    pub fn xi(&self, a: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.theta(a))
    }

    pub fn theta(&self, a: usize) -> f64 {
        std::f64::consts::TAU * a as f64 / self.angular_samples as f64
    }

    fn polar_digits(&self, t: usize) -> Vec<usize> {
        let base = self.polar_len();
        let mut rest = t;
        let mut d = vec![0; self.k - 1];
        for slot in d.iter_mut().rev() {
            *slot = rest % base;
            rest /= base;
        }
        d
    }

    fn digits_to_index(&self, d: &[usize]) -> usize {
        d.iter().fold(0, |acc, &x| acc * self.polar_len() + x)
    }

    /// Transverse coordinates of transverse index `t`, in axis order.
    pub fn transverse(&self, t: usize) -> Vec<Complex64> {
        self.polar_digits(t).into_iter().map(|i| self.polar_point(i)).collect()
    }

    /// `(ξ index, transverse index)` of a flat node index.
    pub fn split(&self, node: usize) -> (usize, usize) {
        (node / self.transverse_count(), node % self.transverse_count())
    }

    /// Point with `z_j = t ξ` and the given transverse coordinates.
    pub fn assemble(&self, xi: Complex64, transverse: &[Complex64], t: f64) -> Vec<Complex64> {
        assemble(self.k, self.j, xi, transverse, t)
    }

    /// Neighbouring node pairs used for the continuity modulus.
    fn neighbours(&self, node: usize) -> Vec<usize> {
        let (a, t) = self.split(node);
        let tc = self.transverse_count();
        let mut out = vec![((a + 1) % self.angular_samples) * tc + t];
        let digits = self.polar_digits(t);
        for (slot, &p) in digits.iter().enumerate() {
            if p == 0 {
                continue;
            }
            let ring = (p - 1) / self.ring_len();
            let ang = (p - 1) % self.ring_len();
            let mut alts = vec![1 + ring * self.ring_len() + (ang + 1) % self.ring_len()];
            if ring + 1 < self.transverse_rings {
                alts.push(1 + (ring + 1) * self.ring_len() + ang);
            }
            for q in alts {
                let mut d = digits.clone();
                d[slot] = q;
                out.push(a * tc + self.digits_to_index(&d));
            }
        }
        out
    }
}

fn assemble(k: usize, j: usize, xi: Complex64, transverse: &[Complex64], t: f64) -> Vec<Complex64> {
    let mut z = Vec::with_capacity(k);
    let mut it = transverse.iter();
    for axis in 1..=k {
        if axis == j {
            z.push(xi * t);
        } else {
            z.push(*it.next().expect("transverse length k-1"));
        }
    }
    z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFunction {
    pub face: FaceGrid,
    /// `r` at node `ξ_index · transverse_count + transverse_index`.
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Per node: `∂r/∂arg ξ`, then `∂/∂Re z_i`, `∂/∂Im z_i` per transverse axis.
    pub derivative_estimates: Option<Vec<Vec<f64>>>,
    /// Largest jump between neighbouring nodes.
    pub continuity_modulus: f64,
}

impl GraphFunction {
    pub fn constant(face: &FaceGrid, value: f64) -> Self {
        let n = face.node_count();
        GraphFunction {
            face: face.clone(),
            values: vec![value; n],
            residuals: vec![0.0; n],
            derivative_estimates: None,
            continuity_modulus: 0.0,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sampled C⁰ distance on shared nodes.
    pub fn sup_distance(&self, other: &GraphFunction) -> Result<f64> {
        if self.face != other.face {
            return Err(Error::InvalidParameter("graphs live on different face grids".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Sampled distance of first derivatives; a missing side counts as zero.
    pub fn derivative_distance(&self, other: &GraphFunction) -> Result<Option<f64>> {
        if self.face != other.face {
            return Err(Error::InvalidParameter("graphs live on different face grids".into()));
        }
        let Some(d) = &self.derivative_estimates else { return Ok(None) };
        let mut sup = 0f64;
        for (i, row) in d.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                let o = other.derivative_estimates.as_ref().map_or(0.0, |e| e[i][c]);
                sup = sup.max((v - o).abs());
            }
        }
        Ok(Some(sup))
    }

    fn compute_continuity(&mut self) {
        let mut m = 0f64;
        for node in 0..self.values.len() {
            for nb in self.face.neighbours(node) {
                m = m.max((self.values[node] - self.values[nb]).abs());
            }
        }
        self.continuity_modulus = m;
    }

    /// `axis,xi_index,re_1,im_1,…,r,residual` with one row per node.
    pub fn to_csv(&self) -> String {
        let axes = self.face.transverse_axes();
        let mut s = String::from("axis,xi_index");
        for a in &axes {
            s.push_str(&format!(",re_z{a},im_z{a}"));
        }
        s.push_str(",r,residual\n");
        for (node, (v, res)) in self.values.iter().zip(&self.residuals).enumerate() {
            let (a, t) = self.face.split(node);
            s.push_str(&format!("{},{}", self.face.j, a));
            for c in self.face.transverse(t) {
                s.push_str(&format!(",{:.16e},{:.16e}", c.re, c.im));
            }
            s.push_str(&format!(",{:.16e},{:.16e}\n", v, res));
        }
        s
    }
}

/// Hypersurface pulled back by a segment of maps.
#[derive(Clone, Debug)]
pub enum Target<'a> {
    /// `{|w_j| = c}`; `Level(1.0)` is the unit face.
    Level(f64),
    /// `{w : |π_j (F_{to−1} ∘ … ∘ F_from)(w)| = level}`, itself a graph over
    /// the face, searched for on rays of length `t_max`.
    Surface { seq: &'a MapSequence, seg: Range<usize>, level: f64, t_max: f64 },
}

/// `ln|π_j (F_{to−1} ∘ … ∘ F_from)(z)|`; the empty range is the identity.
fn log_coordinate(s: &MapSequence, seg: &Range<usize>, j: usize, z: &[Complex64]) -> f64 {
    if seg.start >= seg.end {
        return z[j - 1].norm().ln();
    }
    let w = s.compose_range_generic(seg.start, seg.end - 1, z);
    if w.iter().all(|x| x.finite()) {
        return w[j - 1].norm().ln();
    }
    let lz: Vec<LogScalar> = z.iter().map(|&x| LogScalar::from_complex(x)).collect();
    s.compose_range_generic(seg.start, seg.end - 1, &lz)[j - 1].log_modulus
}

/// Log indicator `ln|π_j(…)| − ln(target)`: negative inside, positive outside.
fn indicator(s: &MapSequence, seg: &Range<usize>, j: usize, z: &[Complex64], target: &Target) -> Result<f64> {
    match target {
        Target::Level(c) => Ok(log_coordinate(s, seg, j, z) - c.ln()),
        Target::Surface { seq, seg: tseg, level, t_max } => {
            let w = if seg.start >= seg.end { z.to_vec() } else { s.compose_range_generic(seg.start, seg.end - 1, z) };
            if !w.iter().all(|x| x.finite()) {
                return Ok(f64::INFINITY);
            }
            let wj = w[j - 1];
            if wj.norm() == 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let xi = wj / wj.norm();
            let trans: Vec<Complex64> = w.iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, &x)| x).collect();
            let k = w.len();
            let (t, _) = ray_root(
                |t| Ok(log_coordinate(seq, tseg, j, &assemble(k, j, xi, &trans, t)) - level.ln()),
                *t_max,
            )
            .map_err(|detail| Error::NotAGraph { node: 0, detail: format!("target surface: {detail}") })?;
            Ok(wj.norm().ln() - t.ln())
        }
    }
}

/// Root of a log indicator on `[0, t_max]` with exactly one sign change on a
/// uniform scan, refined by bisection to double precision. Returns the root
/// and the indicator value there.
fn ray_root<F>(g: F, t_max: f64) -> std::result::Result<(f64, f64), String>
where
    F: Fn(f64) -> Result<f64>,
{
    let eval = |t: f64| g(t).map_err(|e| e.to_string());
    let mut prev = eval(0.0)?;
    let mut bracket = None;
    let mut changes = 0;
    for i in 1..=RAY_SCAN {
        let t = t_max * i as f64 / RAY_SCAN as f64;
        let v = eval(t)?;
        if v.is_nan() {
            return Err(format!("indicator undefined at t = {t}"));
        }
        if (prev < 0.0) != (v < 0.0) {
            changes += 1;
            bracket = Some((t_max * (i - 1) as f64 / RAY_SCAN as f64, t));
        }
        prev = v;
    }
    if changes != 1 {
        return Err(format!("{changes} sign changes on the ray"));
    }
    let (mut lo, mut hi) = bracket.expect("one change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eval(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (vl, vh) = (eval(lo)?, eval(hi)?);
    Ok(if vl.abs() <= vh.abs() { (lo, vl) } else { (hi, vh) })
}

fn node_root(
    s: &MapSequence,
    seg: &Range<usize>,
    face: &FaceGrid,
    target: &Target,
    xi: Complex64,
    trans: &[Complex64],
) -> std::result::Result<(f64, f64), String> {
    let (t, v) = ray_root(|t| indicator(s, seg, face.j, &face.assemble(xi, trans, t), target), face.r)?;
    let residual = v.exp_m1().abs();
    if !(residual < RESIDUAL_TOL) {
        return Err(format!("bisection residual {residual:e} above {RESIDUAL_TOL:e}"));
    }
    Ok((t, residual))
}

/// Graph over `face` of the preimage of `target` under `F_{to−1} ∘ … ∘ F_from`.
///
/// Every ray must cross the hypersurface exactly once within `[0, R]`.
/// With `derivatives`, first derivatives are estimated by central differences
/// of re-solved roots.
pub fn graph_pullback(
    s: &MapSequence,
    seg: Range<usize>,
    face: &FaceGrid,
    target: &Target,
    derivatives: bool,
) -> Result<GraphFunction> {
    if face.k != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: face.k });
    }
    if seg.end > s.n_max + 1 {
        return Err(Error::InvalidParameter(format!("segment end {} exceeds n_max", seg.end)));
    }
    let rows: Vec<(f64, f64, Option<Vec<f64>>)> = (0..face.node_count())
        .into_par_iter()
        .map(|node| {
            let (a, t) = face.split(node);
            let xi = face.xi(a);
            let trans = face.transverse(t);
            let fail = |detail: String| Error::NotAGraph { node, detail };
            let (root, res) = node_root(s, &seg, face, target, xi, &trans).map_err(fail)?;
            let der = if derivatives {
                let solve = |xi: Complex64, tr: &[Complex64]| {
                    node_root(s, &seg, face, target, xi, tr).map(|x| x.0).map_err(fail)
                };
                let h = FD_STEP;
                let th = face.theta(a);
                let mut d = vec![
                    (solve(Complex64::from_polar(1.0, th + h), &trans)?
                        - solve(Complex64::from_polar(1.0, th - h), &trans)?)
                        / (2.0 * h),
                ];
                for slot in 0..trans.len() {
                    for dir in [Complex64::new(h, 0.0), Complex64::new(0.0, h)] {
                        let mut p = trans.clone();
                        let mut m = trans.clone();
                        p[slot] += dir;
                        m[slot] -= dir;
                        d.push((solve(xi, &p)? - solve(xi, &m)?) / (2.0 * h));
                    }
                }
                Some(d)
            } else {
                None
            };
            Ok((root, res, der))
        })
        .collect::<Result<_>>()?;
    let mut g = GraphFunction {
        face: face.clone(),
        values: rows.iter().map(|r| r.0).collect(),
        residuals: rows.iter().map(|r| r.1).collect(),
        derivative_estimates: if derivatives { Some(rows.into_iter().map(|r| r.2.expect("requested")).collect()) } else { None },
        continuity_modulus: 0.0,
    };
    g.compute_continuity();
    Ok(g)
}

/// Eta schedule `F_α(z) = (α z_k, z_2² + α z_1, …, z_k² + α z_{k−1})` with the
/// listed `α`'s, extended by `α_{m+1} = α_m²`.
pub fn stage_sequence(k: usize, alphas: &[LogScalar]) -> Result<MapSequence> {
    MapSequence::new(Generator::EtaSchedule { k, d: 2, rule: EtaRule::Custom(alphas.to_vec()) }, 60)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagewiseParams {
    pub k: usize,
    pub r: f64,
    pub eps: f64,
    pub stages: usize,
    pub angular_samples: usize,
    pub transverse_rings: usize,
    pub derivatives: bool,
}

impl StagewiseParams {
    pub fn new(k: usize, r: f64, eps: f64, stages: usize) -> Result<Self> {
        check_dim(k)?;
        if k < 3 {
            return Err(Error::InvalidParameter("stagewise construction needs k >= 3".into()));
        }
        if !(r >= 5.0 && r.is_finite()) {
            return Err(Error::InvalidParameter("R must be at least 5".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter("eps must lie in (0,1)".into()));
        }
        if stages == 0 || stages > 20 {
            return Err(Error::InvalidParameter("stage count must lie in 1..=20".into()));
        }
        Ok(StagewiseParams { k, r, eps, stages, angular_samples: 16, transverse_rings: 2, derivatives: false })
    }

    /// `ε_n⁰ = eps / (k 2^{n+1})`
    pub fn budget(&self, n: usize) -> f64 {
        self.eps / (self.k as f64 * 2f64.powi(n as i32 + 1))
    }

    pub fn faces(&self) -> Result<Vec<FaceGrid>> {
        (2..=self.k).map(|j| FaceGrid::new(self.k, j, self.r, self.angular_samples, self.transverse_rings)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub n: usize,
    pub alpha_n: LogScalar,
    pub c_n: f64,
    /// One graph per face axis `2..=k`.
    pub graphs: Vec<GraphFunction>,
    /// Sampled C⁰ distance to the previous stage (to the constant 1 at stage 0).
    pub c0_closeness: f64,
    pub c1_closeness: Option<f64>,
    /// Sampled distance from the `c_n`-level graphs to the unit-level graphs.
    pub level_gap: f64,
    pub budget: f64,
    pub halvings: usize,
    pub graph_min: f64,
    pub graph_max: f64,
    /// Nodes where this stage's graph lies strictly below the previous one.
    pub monotone_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagewiseResult {
    pub params: StagewiseParams,
    pub alphas: Vec<LogScalar>,
    pub stages: Vec<StageRecord>,
}

impl StagewiseResult {
    pub fn sequence(&self) -> Result<MapSequence> {
        stage_sequence(self.params.k, &self.alphas)
    }

    /// `Σ c0_closeness`
    pub fn drift_total(&self) -> f64 {
        self.stages.iter().map(|s| s.c0_closeness).sum()
    }

    /// `eps / k`, the sum of all stage budgets.
    pub fn drift_bound(&self) -> f64 {
        self.params.eps / self.params.k as f64
    }

    /// Surfaces `{|π_j F(n)| = 1}` of stage `n`.
    pub fn surface(&self, n: usize) -> Result<StageSurface> {
        if n >= self.stages.len() {
            return Err(Error::InvalidParameter(format!("no stage {n}")));
        }
        Ok(StageSurface { k: self.params.k, seq: Some(self.sequence()?), upto: n + 1, t_max: self.params.r })
    }
}

/// Candidate levels `0.90, 0.95, 0.99, 0.995, 0.999, …` up to `1 − 5·10⁻¹³`.
pub fn level_scan() -> Vec<f64> {
    let mut v = vec![0.90, 0.95];
    for m in 2..=12 {
        v.push(1.0 - 10f64.powi(-m));
        v.push(1.0 - 5.0 * 10f64.powi(-m - 1));
    }
    v
}

/// Builds stages `0..N`, halving each `α_n` from `α_{n−1}²` (from
/// `alpha0_for(eps, R)` at stage 0) until every face graph moves by at most
/// `ε_n⁰`, then picks the first scanned level `c_n ≥ c_{n−1}` whose graphs lie
/// within `ε_n⁰` of the unit-level ones.
pub fn stagewise_construct(p: &StagewiseParams) -> Result<StagewiseResult> {
    let faces = p.faces()?;
    let mut alphas: Vec<LogScalar> = Vec::new();
    let mut stages: Vec<StageRecord> = Vec::new();
    let mut prev: Vec<GraphFunction> = faces.iter().map(|f| GraphFunction::constant(f, 1.0)).collect();
    let mut prev_c = 0.0;
    for n in 0..p.stages {
        let budget = p.budget(n);
        let mut log_alpha = if n == 0 { alpha0_for(p.eps, p.r)?.ln() } else { 2.0 * alphas[n - 1].log_modulus };
        let mut halvings = 0;
        let (seq, graphs, c0, c1) = loop {
            if halvings > MAX_HALVINGS || !log_alpha.is_finite() {
                return Err(Error::AlphaUnderflow(n));
            }
            let mut cand = alphas.clone();
            cand.push(LogScalar::from_ln(log_alpha));
            let seq = stage_sequence(p.k, &cand)?;
            let graphs: Vec<GraphFunction> = faces
                .iter()
                .map(|f| graph_pullback(&seq, 0..n + 1, f, &Target::Level(1.0), p.derivatives))
                .collect::<Result<_>>()?;
            let mut c0 = 0f64;
            let mut c1: Option<f64> = None;
            for (g, q) in graphs.iter().zip(&prev) {
                c0 = c0.max(g.sup_distance(q)?);
                if let Some(d) = g.derivative_distance(q)? {
                    c1 = Some(c1.unwrap_or(0.0).max(d));
                }
            }
            if c0 <= budget && c1.is_none_or(|d| d <= budget) {
                break (seq, graphs, c0, c1);
            }
            log_alpha -= std::f64::consts::LN_2;
            halvings += 1;
        };
        let mut chosen = None;
        for c in level_scan().into_iter().filter(|&c| c >= prev_c) {
            let mut gap = 0f64;
            for (f, g) in faces.iter().zip(&graphs) {
                let lg = graph_pullback(&seq, 0..n + 1, f, &Target::Level(c), false)?;
                gap = gap.max(lg.sup_distance(g)?);
            }
            if gap <= budget {
                chosen = Some((c, gap));
                break;
            }
        }
        let Some((c_n, level_gap)) = chosen else {
            return Err(Error::HypothesisViolated(format!("no scanned level c_n meets the stage {n} budget")));
        };
        let monotone_violations = graphs
            .iter()
            .zip(&prev)
            .map(|(g, q)| g.values.iter().zip(&q.values).filter(|(a, b)| a < b).count())
            .sum();
        alphas.push(LogScalar::from_ln(log_alpha));
        stages.push(StageRecord {
            n,
            alpha_n: LogScalar::from_ln(log_alpha),
            c_n,
            graph_min: graphs.iter().map(|g| g.min()).fold(f64::INFINITY, f64::min),
            graph_max: graphs.iter().map(|g| g.max()).fold(f64::NEG_INFINITY, f64::max),
            graphs: graphs.clone(),
            c0_closeness: c0,
            c1_closeness: c1,
            level_gap,
            budget,
            halvings,
            monotone_violations,
        });
        prev = graphs;
        prev_c = c_n;
    }
    Ok(StagewiseResult { params: p.clone(), alphas, stages })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub lower_samples: usize,
    /// Points of `Δ(0;R) × Δ^{k−1}(0;1)` classified as escaping.
    pub lower_violations: usize,
    /// Lower violations lying outside the stage-0 graph `|z_j| = φ_{α₀}(ξ_j, z_{j−1})`.
    pub lower_violations_beyond_stage0: usize,
    pub lower_undecided: usize,
    pub upper_samples: usize,
    pub upper_members: usize,
    /// Basin members with some `|z_j| ≥ 1 + eps`, `j ≥ 2`.
    pub upper_violations: usize,
    pub upper_undecided: usize,
    /// Largest `max_{j≥2} |z_j|` over basin members.
    pub max_member_modulus: f64,
    pub drift_total: f64,
    pub drift_bound: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_violations == 0
            && self.upper_violations == 0
            && self.lower_undecided == 0
            && self.upper_undecided == 0
            && self.drift_total <= self.drift_bound
    }
}

/// Classification used for basin membership of the extended stage sequence:
/// escape once a coordinate `j ≥ 2` dominates beyond 2, capture in `Δ^k(0;1/2)`.
pub fn sandwich_params(k: usize) -> Result<ClassifyParams> {
    ClassifyParams::new(FiltrationSpec::standard(k, 2.0)?, 0.5, 60, 1e-3)
}

/// Samples `Δ(0;R) × Δ^{k−1}(0;1)` for the inner inclusion, and for the outer
/// one half of the points from `Δ(0;R) × Δ^{k−1}(0;1+2eps)`, half from `Δ^k(0;R)`.
pub fn sandwich_check(res: &StagewiseResult, samples: usize, seed: u64) -> Result<SandwichReport> {
    let k = res.params.k;
    let r = res.params.r;
    let eps = res.params.eps;
    let seq = res.sequence()?;
    let cp = sandwich_params(k)?;
    let alpha0 = res.alphas.first().map(|a| a.modulus()).unwrap_or(0.0);
    let t_lo = rng::tag("sandwich-lower");
    let lower: Vec<(OrbitClass, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t_lo, i as u64);
            let mut z = vec![rng::disc(&mut g, r)];
            z.extend((1..k).map(|_| rng::disc(&mut g, 1.0)));
            let beyond = (1..k).any(|a| {
                let m = z[a].norm();
                m > 0.0 && phi_alpha(z[a] / m, z[a - 1], alpha0).is_ok_and(|p| m >= p)
            });
            classify_point(&seq, &ComplexVector { entries: z, overflowed: false }, &cp).map(|c| (c, beyond))
        })
        .collect::<Result<_>>()?;
    let t_hi = rng::tag("sandwich-upper");
    let upper: Vec<(OrbitClass, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, t_hi, i as u64);
            let rad = if i % 2 == 0 { 1.0 + 2.0 * eps } else { r };
            let mut z = vec![rng::disc(&mut g, r)];
            z.extend((1..k).map(|_| rng::disc(&mut g, rad)));
            let m = z[1..].iter().map(|x| x.norm()).fold(0.0, f64::max);
            classify_point(&seq, &ComplexVector { entries: z, overflowed: false }, &cp).map(|c| (c, m))
        })
        .collect::<Result<_>>()?;
    let lower_violations = lower.iter().filter(|(c, _)| c.is_escaped()).count();
    let members: Vec<f64> = upper.iter().filter(|(c, _)| c.is_attracted()).map(|(_, m)| *m).collect();
    Ok(SandwichReport {
        inner_radius: 1.0,
        outer_radius: 1.0 + eps,
        lower_samples: samples,
        lower_violations,
        lower_violations_beyond_stage0: lower.iter().filter(|(c, b)| c.is_escaped() && *b).count(),
        lower_undecided: lower.iter().filter(|(c, _)| *c == OrbitClass::Undecided).count(),
        upper_samples: samples,
        upper_members: members.len(),
        upper_violations: members.iter().filter(|&&m| m >= 1.0 + eps).count(),
        upper_undecided: upper.iter().filter(|(c, _)| *c == OrbitClass::Undecided).count(),
        max_member_modulus: members.iter().copied().fold(0.0, f64::max),
        drift_total: res.drift_total(),
        drift_bound: res.drift_bound(),
    })
}

/// The hypersurfaces `{|π_j F(upto−1)(z)| = 1}`, `j = 2..=k`, as graphs
/// `|z_j| = r_j(ξ, z_⊥)`; without a sequence they are the cylinders `|z_j| = 1`.
#[derive(Clone, Debug)]
pub struct StageSurface {
    pub k: usize,
    pub seq: Option<MapSequence>,
    pub upto: usize,
    pub t_max: f64,
}

impl StageSurface {
    pub fn cylinder(k: usize) -> Result<Self> {
        check_dim(k)?;
        Ok(StageSurface { k, seq: None, upto: 0, t_max: 5.0 })
    }

    /// `r_j(ξ, z_⊥)` at the point `z` (only `arg z_j` and `z_⊥` are used).
    pub fn radius(&self, j: usize, z: &[Complex64]) -> Result<f64> {
        let m = z[j - 1].norm();
        if m == 0.0 {
            return Err(Error::InvalidParameter("z_j = 0 has no direction".into()));
        }
        let Some(seq) = &self.seq else { return Ok(1.0) };
        let xi = z[j - 1] / m;
        let trans: Vec<Complex64> = z.iter().enumerate().filter(|(i, _)| i + 1 != j).map(|(_, &x)| x).collect();
        let seg = 0..self.upto;
        ray_root(
            |t| Ok(log_coordinate(seq, &seg, j, &assemble(self.k, j, xi, &trans, t))),
            self.t_max,
        )
        .map(|x| x.0)
        .map_err(|detail| Error::NotAGraph { node: 0, detail })
    }

    /// Defining function `ρ_j = |z_j| − r_j`.
    pub fn rho(&self, j: usize, z: &[Complex64]) -> Result<f64> {
        Ok(z[j - 1].norm() - self.radius(j, z)?)
    }
}

/// Real coordinates `(Re z_1, Im z_1, …)`.
fn perturb(z: &[Complex64], idx: usize, h: f64) -> Vec<Complex64> {
    let mut w = z.to_vec();
    if idx.is_multiple_of(2) {
        w[idx / 2].re += h;
    } else {
        w[idx / 2].im += h;
    }
    w
}

/// `∂ρ/∂z_a = (ρ_{x_a} − i ρ_{y_a}) / 2` by central differences.
pub fn complex_gradient(surf: &StageSurface, j: usize, z: &[Complex64]) -> Result<Vec<Complex64>> {
    let h = FD_STEP;
    let mut g = Vec::with_capacity(z.len());
    for a in 0..z.len() {
        let dx = (surf.rho(j, &perturb(z, 2 * a, h))? - surf.rho(j, &perturb(z, 2 * a, -h))?) / (2.0 * h);
        let dy = (surf.rho(j, &perturb(z, 2 * a + 1, h))? - surf.rho(j, &perturb(z, 2 * a + 1, -h))?) / (2.0 * h);
        g.push(Complex64::new(dx, -dy) * 0.5);
    }
    Ok(g)
}

/// Complex Hessian `∂²ρ/∂z_a ∂z̄_b` from the real Hessian by central differences.
pub fn complex_hessian(surf: &StageSurface, j: usize, z: &[Complex64]) -> Result<DMatrix<Complex64>> {
    let h = FD_STEP;
    let n = 2 * z.len();
    let f0 = surf.rho(j, z)?;
    let mut hr = DMatrix::<f64>::zeros(n, n);
    for p in 0..n {
        let fp = surf.rho(j, &perturb(z, p, h))?;
        let fm = surf.rho(j, &perturb(z, p, -h))?;
        hr[(p, p)] = (fp - 2.0 * f0 + fm) / (h * h);
        for q in p + 1..n {
            let f = |sp: f64, sq: f64| surf.rho(j, &perturb(&perturb(z, p, sp * h), q, sq * h));
            let v = (f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?) / (4.0 * h * h);
            hr[(p, q)] = v;
            hr[(q, p)] = v;
        }
    }
    let k = z.len();
    Ok(DMatrix::from_fn(k, k, |a, b| {
        let (xa, ya, xb, yb) = (2 * a, 2 * a + 1, 2 * b, 2 * b + 1);
        Complex64::new(hr[(xa, xb)] + hr[(ya, yb)], hr[(xa, yb)] - hr[(ya, xb)]) * 0.25
    }))
}

/// Orthonormal basis of `{v : Σ g_a v_a = 0}`, as columns.
fn complex_tangent_basis(g: &[Complex64]) -> DMatrix<Complex64> {
    let k = g.len();
    let norm = g.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let u: Vec<Complex64> = g.iter().map(|x| x.conj() / norm).collect();
    let mut basis: Vec<Vec<Complex64>> = vec![u];
    for e in 0..k {
        let mut v: Vec<Complex64> = (0..k).map(|i| Complex64::new(if i == e { 1.0 } else { 0.0 }, 0.0)).collect();
        for b in &basis {
            let dot: Complex64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= dot * bi;
            }
        }
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-8 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
        if basis.len() == k {
            break;
        }
    }
    DMatrix::from_fn(k, k - 1, |i, c| basis[c + 1][i])
}

/// Smallest eigenvalue of the Levi form restricted to the complex tangent.
pub fn levi_min(levi: &DMatrix<Complex64>, gradient: &[Complex64]) -> f64 {
    let b = complex_tangent_basis(gradient);
    let m = b.adjoint() * levi * &b;
    let herm = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    herm.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Smallest singular value of the stacked complex gradients of the given faces.
pub fn wedge_min(surf: &StageSurface, faces: &[usize], z: &[Complex64]) -> Result<f64> {
    let rows: Vec<Vec<Complex64>> = faces.iter().map(|&j| complex_gradient(surf, j, z)).collect::<Result<_>>()?;
    let m = DMatrix::from_fn(rows.len(), z.len(), |r, c| rows[r][c]);
    Ok(m.svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefiningFunctionSample {
    pub face: usize,
    pub point: Vec<Complex64>,
    pub gradient_norm: f64,
    pub levi_min_eigen: f64,
    /// `∂²ρ/∂z_j∂z̄_j`, the Levi form along the face's own axis.
    pub radial_levi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefiningFunctionReport {
    pub samples: Vec<DefiningFunctionSample>,
    /// Smallest singular values of stacked gradients at corner points of faces 2 and 3.
    pub wedge_gram_min: Vec<f64>,
    pub skipped: usize,
}

impl DefiningFunctionReport {
    pub fn min_gradient_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.gradient_norm).fold(f64::INFINITY, f64::min)
    }

    pub fn max_gradient_norm(&self) -> f64 {
        self.samples.iter().map(|s| s.gradient_norm).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_levi(&self) -> f64 {
        self.samples.iter().map(|s| s.levi_min_eigen).fold(f64::INFINITY, f64::min)
    }

    pub fn min_wedge(&self) -> f64 {
        self.wedge_gram_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("face,gradient_norm,levi_min_eigen,radial_levi\n");
        for x in &self.samples {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e}\n",
                x.face, x.gradient_norm, x.levi_min_eigen, x.radial_levi
            ));
        }
        s
    }
}

/// Point on face `j` with the given `ξ` and transverse part.
fn on_face(surf: &StageSurface, j: usize, xi: Complex64, mut z: Vec<Complex64>) -> Result<Vec<Complex64>> {
    z[j - 1] = xi;
    let r = surf.radius(j, &z)?;
    z[j - 1] = xi * r;
    Ok(z)
}

/// Pointwise checks of `ρ_j = |z_j| − r_j` at sampled boundary points:
/// gradient norm, Levi form on the complex tangent and, at points lying on
/// faces 2 and 3 at once, the wedge of both gradients. Transverse coordinates
/// are drawn from `|z_1| < 0.9R` and `|z_i| < 0.9`.
pub fn defining_function_checks(surf: &StageSurface, samples: usize, seed: u64) -> Result<DefiningFunctionReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let k = surf.k;
    let tg = rng::tag("levi");
    let rows: Vec<Option<(DefiningFunctionSample, Option<f64>)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(seed, tg, i as u64);
            let j = 2 + i % (k - 1);
            let mut z = vec![rng::disc(&mut g, 0.9 * surf.t_max)];
            z.extend((1..k).map(|_| rng::disc(&mut g, 0.9)));
            let xi = rng::unit_circle(&mut g);
            let z = on_face(surf, j, xi, z)?;
            if surf.rho(j, &z)?.abs() > 1e-6 {
                return Ok(None);
            }
            let grad = complex_gradient(surf, j, &z)?;
            let levi = complex_hessian(surf, j, &z)?;
            let sample = DefiningFunctionSample {
                face: j,
                gradient_norm: grad.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt(),
                levi_min_eigen: levi_min(&levi, &grad),
                radial_levi: levi[(j - 1, j - 1)].re,
                point: z.clone(),
            };
            // corner of faces 2 and 3: alternate projections onto both graphs
            let xi2 = rng::unit_circle(&mut g);
            let mut c = z;
            for _ in 0..8 {
                c = on_face(surf, 2, xi2, c)?;
                c = on_face(surf, 3, xi, c)?;
            }
            let wedge = if surf.rho(2, &c)?.abs() <= 1e-6 && surf.rho(3, &c)?.abs() <= 1e-6 {
                Some(wedge_min(surf, &[2, 3], &c)?)
            } else {
                None
            };
            Ok(Some((sample, wedge)))
        })
        .collect::<Result<_>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    let mut out = Vec::new();
    let mut wedges = Vec::new();
    for (s, w) in rows.into_iter().flatten() {
        out.push(s);
        wedges.extend(w);
    }
    Ok(DefiningFunctionReport { samples: out, wedge_gram_min: wedges, skipped })
}
