//! Automorphism families, their inverses and composed orbits.
//!
//! Every formula is written once, generically over [`Scalar`], and can be
//! evaluated in plain `Complex64` or in overflow-free [`LogScalar`] form.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, sup_norm, ComplexVector};
use crate::logscalar::{LogScalar, Scalar};
use crate::rng;

/// Sup-norm above which orbits continue in log-polar form.
pub const OVERFLOW_SWITCH: f64 = 1e100;
pub const DEFAULT_N_MAX: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MapSpec {
    /// `(η z_k, z_2^d + η z_1, …, z_k^d + η z_{k-1})`
    EtaStep { k: usize, d: u32, eta: LogScalar },
    /// `(z_2, …, z_k, δ(z_{k-ν+1}^d − z_1))`
    ShiftLike { k: usize, nu: usize, d: u32, delta: Complex64 },
    /// `(α z_1 + z_2², β z_2)`
    HenonF { alpha: Complex64, beta: Complex64 },
    /// `(β z_1, α z_2 + z_1^kdeg)`
    HenonG { alpha: Complex64, beta: Complex64, kdeg: u32 },
    /// Exchanges the 1-based axes `i` and `j`.
    CoordinateSwap { k: usize, i: usize, j: usize },
    /// Adds `c` to the 1-based `axis`.
    AffineTranslate { k: usize, axis: usize, c: Complex64 },
    /// `l_C(z) = C z`
    Scaling { k: usize, c: LogScalar },
    /// Row-major `k × k` matrix.
    Linear { matrix: Vec<Vec<Complex64>> },
}

impl MapSpec {
    pub fn eta_step(k: usize, d: u32, eta: LogScalar) -> Result<Self> {
        check_dim(k)?;
        if d < 2 {
            return Err(Error::InvalidParameter("degree d must be at least 2".into()));
        }
        if eta.is_zero() {
            return Err(Error::InvalidParameter("eta must be nonzero".into()));
        }
        Ok(MapSpec::EtaStep { k, d, eta })
    }

    pub fn shift_like(k: usize, nu: usize, d: u32, delta: Complex64) -> Result<Self> {
        check_dim(k)?;
        if nu == 0 || nu >= k {
            return Err(Error::InvalidParameter(format!("type nu must lie in 1..={}", k - 1)));
        }
        if d < 2 {
            return Err(Error::InvalidParameter("degree d must be at least 2".into()));
        }
        if delta.norm() == 0.0 {
            return Err(Error::InvalidParameter("delta must be nonzero".into()));
        }
        Ok(MapSpec::ShiftLike { k, nu, d, delta })
    }

    pub fn linear(matrix: Vec<Vec<Complex64>>) -> Result<Self> {
        let k = matrix.len();
        check_dim(k)?;
        if matrix.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidParameter("matrix must be square".into()));
        }
        let m = MapSpec::Linear { matrix };
        if m.linear_inverse().is_none() {
            return Err(Error::InvalidParameter("matrix is singular".into()));
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            MapSpec::EtaStep { k, .. }
            | MapSpec::ShiftLike { k, .. }
            | MapSpec::CoordinateSwap { k, .. }
            | MapSpec::AffineTranslate { k, .. }
            | MapSpec::Scaling { k, .. } => *k,
            MapSpec::HenonF { .. } | MapSpec::HenonG { .. } => 2,
            MapSpec::Linear { matrix } => matrix.len(),
        }
    }

    /// Image of `z`, in any scalar representation.
    pub fn apply_generic<T: Scalar>(&self, z: &[T]) -> Vec<T> {
        match self {
            MapSpec::EtaStep { k, d, eta } => {
                let e = T::from_log(*eta);
                let mut out = Vec::with_capacity(*k);
                out.push(e * z[k - 1]);
                for i in 1..*k {
                    out.push(z[i].powu(*d) + e * z[i - 1]);
                }
                out
            }
            MapSpec::ShiftLike { k, nu, d, delta } => {
                let mut out: Vec<T> = z[1..].to_vec();
                out.push(T::from_c64(*delta) * (z[k - nu].powu(*d) - z[0]));
                out
            }
            MapSpec::HenonF { alpha, beta } => {
                vec![T::from_c64(*alpha) * z[0] + z[1].powu(2), T::from_c64(*beta) * z[1]]
            }
            MapSpec::HenonG { alpha, beta, kdeg } => {
                vec![T::from_c64(*beta) * z[0], T::from_c64(*alpha) * z[1] + z[0].powu(*kdeg)]
            }
            MapSpec::CoordinateSwap { i, j, .. } => {
                let mut out = z.to_vec();
                out.swap(i - 1, j - 1);
                out
            }
            MapSpec::AffineTranslate { axis, c, .. } => {
                let mut out = z.to_vec();
                out[axis - 1] = out[axis - 1] + T::from_c64(*c);
                out
            }
            MapSpec::Scaling { c, .. } => {
                let s = T::from_log(*c);
                z.iter().map(|&x| s * x).collect()
            }
            MapSpec::Linear { matrix } => mat_vec(matrix, z),
        }
    }

    /// Preimage of `w`, in any scalar representation.
    pub fn apply_inverse_generic<T: Scalar>(&self, w: &[T]) -> Vec<T> {
        match self {
            MapSpec::EtaStep { k, d, eta } => {
                let e = T::from_log(*eta);
                let mut z = vec![T::zero(); *k];
                z[k - 1] = w[0] / e;
                for i in (1..*k).rev() {
                    z[i - 1] = (w[i] - z[i].powu(*d)) / e;
                }
                z
            }
            MapSpec::ShiftLike { k, nu, d, delta } => {
                let mut z = vec![T::zero(); *k];
                z[1..].copy_from_slice(&w[..k - 1]);
                z[0] = z[k - nu].powu(*d) - w[k - 1] / T::from_c64(*delta);
                z
            }
            MapSpec::HenonF { alpha, beta } => {
                let z2 = w[1] / T::from_c64(*beta);
                vec![(w[0] - z2.powu(2)) / T::from_c64(*alpha), z2]
            }
            MapSpec::HenonG { alpha, beta, kdeg } => {
                let z1 = w[0] / T::from_c64(*beta);
                vec![z1, (w[1] - z1.powu(*kdeg)) / T::from_c64(*alpha)]
            }
            MapSpec::CoordinateSwap { .. } => self.apply_generic(w),
            MapSpec::AffineTranslate { axis, c, .. } => {
                let mut out = w.to_vec();
                out[axis - 1] = out[axis - 1] - T::from_c64(*c);
                out
            }
            MapSpec::Scaling { c, .. } => {
                let s = T::from_log(*c);
                w.iter().map(|&x| x / s).collect()
            }
            MapSpec::Linear { .. } => {
                let inv = self.linear_inverse().expect("validated invertible matrix");
                mat_vec(&inv, w)
            }
        }
    }

    pub fn apply(&self, z: &ComplexVector) -> Result<ComplexVector> {
        self.check(z)?;
        Ok(ComplexVector::flagged(self.apply_generic(&z.entries)))
    }

    pub fn apply_inverse(&self, w: &ComplexVector) -> Result<ComplexVector> {
        self.check(w)?;
        self.check_invertible()?;
        let z = ComplexVector::flagged(self.apply_inverse_generic(&w.entries));
        if z.overflowed {
            return Err(Error::InverseOutOfRange);
        }
        Ok(z)
    }

    fn check(&self, z: &ComplexVector) -> Result<()> {
        if z.k() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.k() });
        }
        Ok(())
    }

    fn check_invertible(&self) -> Result<()> {
        let bad = match self {
            MapSpec::EtaStep { eta, .. } => eta.is_zero(),
            MapSpec::ShiftLike { delta, .. } => delta.norm() == 0.0,
            MapSpec::HenonF { alpha, beta } | MapSpec::HenonG { alpha, beta, .. } => {
                alpha.norm() == 0.0 || beta.norm() == 0.0
            }
            MapSpec::Scaling { c, .. } => c.is_zero(),
            MapSpec::Linear { .. } => self.linear_inverse().is_none(),
            _ => false,
        };
        if bad {
            Err(Error::InverseOutOfRange)
        } else {
            Ok(())
        }
    }

    /// Derivative at `z` applied to the tangent vector `v`.
    pub fn differential(&self, z: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
        match self {
            MapSpec::EtaStep { k, d, eta } => {
                let e = eta.to_complex();
                let df = *d as f64;
                let mut out = vec![e * v[k - 1]];
                for i in 1..*k {
                    out.push(df * z[i].powu(d - 1) * v[i] + e * v[i - 1]);
                }
                out
            }
            MapSpec::ShiftLike { k, nu, d, delta } => {
                let mut out = v[1..].to_vec();
                let j = k - nu;
                out.push(delta * (*d as f64 * z[j].powu(d - 1) * v[j] - v[0]));
                out
            }
            MapSpec::HenonF { alpha, beta } => vec![alpha * v[0] + 2.0 * z[1] * v[1], beta * v[1]],
            MapSpec::HenonG { alpha, beta, kdeg } => {
                vec![beta * v[0], alpha * v[1] + *kdeg as f64 * z[0].powu(kdeg - 1) * v[0]]
            }
            MapSpec::CoordinateSwap { .. } => self.apply_generic(v),
            MapSpec::AffineTranslate { .. } => v.to_vec(),
            MapSpec::Scaling { c, .. } => {
                let s = c.to_complex();
                v.iter().map(|x| s * x).collect()
            }
            MapSpec::Linear { matrix } => mat_vec(matrix, v),
        }
    }

    /// Full Jacobian matrix at `z` (row i = derivatives of output i).
    pub fn jacobian_matrix(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        let k = self.dim();
        let mut cols = Vec::with_capacity(k);
        for j in 0..k {
            let mut e = vec![Complex64::new(0.0, 0.0); k];
            e[j] = Complex64::new(1.0, 0.0);
            cols.push(self.differential(z, &e));
        }
        (0..k).map(|i| (0..k).map(|j| cols[j][i]).collect()).collect()
    }

    /// Diagonal of the derivative at the origin, for maps fixing 0 with a
    /// diagonal linear part.
    pub fn diagonal_at_origin(&self) -> Result<Vec<LogScalar>> {
        match self {
            MapSpec::HenonF { alpha, beta } => {
                Ok(vec![LogScalar::from_complex(*alpha), LogScalar::from_complex(*beta)])
            }
            MapSpec::HenonG { alpha, beta, .. } => {
                Ok(vec![LogScalar::from_complex(*beta), LogScalar::from_complex(*alpha)])
            }
            MapSpec::Scaling { k, c } => Ok(vec![*c; *k]),
            MapSpec::Linear { matrix } => {
                let k = matrix.len();
                for i in 0..k {
                    for j in 0..k {
                        if i != j && matrix[i][j].norm() != 0.0 {
                            return Err(Error::NotDiagonalAtOrigin("non-diagonal matrix".into()));
                        }
                    }
                }
                Ok((0..k).map(|i| LogScalar::from_complex(matrix[i][i])).collect())
            }
            MapSpec::AffineTranslate { c, .. } if c.norm() == 0.0 => Ok(vec![LogScalar::ONE; self.dim()]),
            MapSpec::CoordinateSwap { i, j, .. } if i == j => Ok(vec![LogScalar::ONE; self.dim()]),
            other => Err(Error::NotDiagonalAtOrigin(other.name().to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::EtaStep { .. } => "eta_step",
            MapSpec::ShiftLike { .. } => "shift_like",
            MapSpec::HenonF { .. } => "henon_f",
            MapSpec::HenonG { .. } => "henon_g",
            MapSpec::CoordinateSwap { .. } => "swap",
            MapSpec::AffineTranslate { .. } => "translate",
            MapSpec::Scaling { .. } => "scaling",
            MapSpec::Linear { .. } => "linear",
        }
    }

    fn linear_inverse(&self) -> Option<Vec<Vec<Complex64>>> {
        let MapSpec::Linear { matrix } = self else { return None };
        let k = matrix.len();
        let m = nalgebra::DMatrix::from_fn(k, k, |i, j| matrix[i][j]);
        let inv = m.try_inverse()?;
        Some((0..k).map(|i| (0..k).map(|j| inv[(i, j)]).collect()).collect())
    }

    /// `‖A‖∞ ‖A⁻¹‖∞` for the `Linear` variant.
    pub fn condition_number(&self) -> Option<f64> {
        let MapSpec::Linear { matrix } = self else { return None };
        let inv = self.linear_inverse()?;
        let norm = |m: &Vec<Vec<Complex64>>| {
            m.iter().map(|r| r.iter().map(|x| x.norm()).sum::<f64>()).fold(0.0, f64::max)
        };
        Some(norm(matrix) * norm(&inv))
    }
}

fn mat_vec<T: Scalar>(m: &[Vec<Complex64>], z: &[T]) -> Vec<T> {
    m.iter()
        .map(|row| row.iter().zip(z).fold(T::zero(), |acc, (a, &x)| acc + T::from_c64(*a) * x))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EtaRule {
    /// `η_n = a^(d^n)`
    PowerTower(f64),
    /// `η_n = a^(2^n + 1)`, only for `d = 2`
    ShiftedTower(f64),
    /// Listed values; past the end `η_{n+1} = η_n^d`.
    Custom(Vec<LogScalar>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    ExplicitList(Vec<MapSpec>),
    EtaSchedule { k: usize, d: u32, rule: EtaRule },
    /// Step n is `H_{p(n),q(n)} = F^p ∘ G^q`.
    HQSchedule { alpha: Complex64, beta: Complex64, kdeg: u32, p: Vec<u32>, q: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSequence {
    pub generator: Generator,
    pub n_max: usize,
}

impl MapSequence {
    pub fn new(generator: Generator, n_max: usize) -> Result<Self> {
        match &generator {
            Generator::ExplicitList(maps) => {
                let Some(first) = maps.first() else {
                    return Err(Error::InvalidParameter("empty map list".into()));
                };
                if maps.iter().any(|m| m.dim() != first.dim()) {
                    return Err(Error::InvalidParameter("maps of different dimensions".into()));
                }
                if n_max >= maps.len() {
                    return Err(Error::InvalidParameter("n_max exceeds the explicit list".into()));
                }
            }
            Generator::EtaSchedule { k, d, rule } => {
                check_dim(*k)?;
                if *d < 2 {
                    return Err(Error::InvalidParameter("degree d must be at least 2".into()));
                }
                match rule {
                    EtaRule::PowerTower(a) => check_a(*a)?,
                    EtaRule::ShiftedTower(a) => {
                        check_a(*a)?;
                        if *d != 2 {
                            return Err(Error::InvalidParameter("shifted tower requires d = 2".into()));
                        }
                    }
                    EtaRule::Custom(list) => {
                        if list.is_empty() || list.iter().any(|e| e.is_zero()) {
                            return Err(Error::InvalidParameter("custom etas must be nonempty and nonzero".into()));
                        }
                    }
                }
            }
            Generator::HQSchedule { p, q, kdeg, .. } => {
                if p.len() != q.len() || p.is_empty() {
                    return Err(Error::InvalidParameter("p and q must have equal nonzero length".into()));
                }
                if *kdeg < 2 {
                    return Err(Error::InvalidParameter("kdeg must be at least 2".into()));
                }
                if n_max >= p.len() {
                    return Err(Error::InvalidParameter("n_max exceeds the schedule length".into()));
                }
            }
        }
        Ok(MapSequence { generator, n_max })
    }

    pub fn power_tower(k: usize, d: u32, a: f64) -> Result<Self> {
        Self::new(Generator::EtaSchedule { k, d, rule: EtaRule::PowerTower(a) }, DEFAULT_N_MAX)
    }

    pub fn shifted_tower(k: usize, a: f64) -> Result<Self> {
        Self::new(Generator::EtaSchedule { k, d: 2, rule: EtaRule::ShiftedTower(a) }, DEFAULT_N_MAX)
    }

    pub fn with_n_max(mut self, n_max: usize) -> Result<Self> {
        self.n_max = n_max;
        Self::new(self.generator, n_max)
    }

    pub fn dim(&self) -> usize {
        match &self.generator {
            Generator::ExplicitList(m) => m[0].dim(),
            Generator::EtaSchedule { k, .. } => *k,
            Generator::HQSchedule { .. } => 2,
        }
    }

    /// Degree used for the `d^{-n}` normalisation of potentials.
    pub fn degree(&self) -> Option<u32> {
        match &self.generator {
            Generator::EtaSchedule { d, .. } => Some(*d),
            _ => None,
        }
    }

    /// `η_n` of an eta schedule.
    pub fn eta(&self, n: usize) -> Option<LogScalar> {
        let Generator::EtaSchedule { d, rule, .. } = &self.generator else { return None };
        Some(match rule {
            EtaRule::PowerTower(a) => LogScalar::from_ln((*d as f64).powi(n as i32) * a.ln()),
            EtaRule::ShiftedTower(a) => {
                let l = a.ln();
                LogScalar::from_ln(2f64.powi(n as i32) * l + l)
            }
            EtaRule::Custom(list) => {
                if n < list.len() {
                    list[n]
                } else {
                    let last = list[list.len() - 1];
                    let extra = (n - list.len() + 1) as i32;
                    let f = (*d as f64).powi(extra);
                    LogScalar::new(last.log_modulus * f, last.phase * f)
                }
            }
        })
    }

    /// Maps making up step `n`, in order of application.
    pub fn maps_at(&self, n: usize) -> Vec<MapSpec> {
        match &self.generator {
            Generator::ExplicitList(m) => vec![m[n].clone()],
            Generator::EtaSchedule { k, d, .. } => {
                vec![MapSpec::EtaStep { k: *k, d: *d, eta: self.eta(n).expect("eta schedule") }]
            }
            Generator::HQSchedule { alpha, beta, kdeg, p, q } => {
                let g = MapSpec::HenonG { alpha: *alpha, beta: *beta, kdeg: *kdeg };
                let f = MapSpec::HenonF { alpha: *alpha, beta: *beta };
                let mut v = vec![g; q[n] as usize];
                v.extend(std::iter::repeat_n(f, p[n] as usize));
                v
            }
        }
    }

    pub fn step_generic<T: Scalar>(&self, n: usize, z: &[T]) -> Vec<T> {
        let mut cur = z.to_vec();
        for m in self.maps_at(n) {
            cur = m.apply_generic(&cur);
        }
        cur
    }

    pub fn step_inverse_generic<T: Scalar>(&self, n: usize, w: &[T]) -> Vec<T> {
        let mut cur = w.to_vec();
        for m in self.maps_at(n).iter().rev() {
            cur = m.apply_inverse_generic(&cur);
        }
        cur
    }

    pub fn step_differential(&self, n: usize, z: &[Complex64], v: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (mut p, mut t) = (z.to_vec(), v.to_vec());
        for m in self.maps_at(n) {
            t = m.differential(&p, &t);
            p = m.apply_generic(&p);
        }
        (p, t)
    }

    /// Applies `F_lo, …, F_hi` in that order (identity when `lo > hi`).
    pub fn compose_range_generic<T: Scalar>(&self, lo: usize, hi: usize, z: &[T]) -> Vec<T> {
        let mut cur = z.to_vec();
        for n in lo..=hi {
            if n < lo {
                break;
            }
            cur = self.step_generic(n, &cur);
        }
        cur
    }

    /// `F(n)(z) = F_n ∘ … ∘ F_0(z)`
    pub fn forward_generic<T: Scalar>(&self, n: usize, z: &[T]) -> Vec<T> {
        self.compose_range_generic(0, n, z)
    }

    /// `F(n)^{-1}(w)`
    pub fn inverse_prefix_generic<T: Scalar>(&self, n: usize, w: &[T]) -> Vec<T> {
        let mut cur = w.to_vec();
        for j in (0..=n).rev() {
            cur = self.step_inverse_generic(j, &cur);
        }
        cur
    }

    fn check_point(&self, z: &ComplexVector, n: usize) -> Result<()> {
        if z.k() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.k() });
        }
        if n > self.n_max {
            return Err(Error::InvalidParameter(format!("step {n} exceeds n_max {}", self.n_max)));
        }
        Ok(())
    }

    pub fn forward(&self, n: usize, z: &ComplexVector) -> Result<ComplexVector> {
        self.check_point(z, n)?;
        Ok(ComplexVector::flagged(self.forward_generic(n, &z.entries)))
    }

    pub fn inverse_prefix(&self, n: usize, w: &ComplexVector) -> Result<ComplexVector> {
        self.check_point(w, n)?;
        let z = ComplexVector::flagged(self.inverse_prefix_generic(n, &w.entries));
        if z.overflowed {
            return Err(Error::InverseOutOfRange);
        }
        Ok(z)
    }
}

fn check_a(a: f64) -> Result<()> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("a must lie in (0,1)".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    /// `z, F(0)(z), F(1)(z), …` while representable as doubles.
    pub points: Vec<ComplexVector>,
    /// Index of the first orbit entry not stored in `points`.
    pub overflow_at: Option<usize>,
    /// `ln ‖·‖∞` of every orbit entry, including those past the switch.
    pub log_norms: Vec<f64>,
}

fn log_sup<T: Scalar>(z: &[T]) -> f64 {
    z.iter().map(|x| x.ln_abs()).fold(f64::NEG_INFINITY, f64::max)
}

/// Orbit `z, F(0)(z), …, F(n)(z)`; continues in log-polar form past
/// [`OVERFLOW_SWITCH`].
pub fn orbit(s: &MapSequence, z: &ComplexVector, n: usize) -> Result<OrbitRecord> {
    s.check_point(z, n)?;
    let mut points = vec![z.clone()];
    let mut log_norms = vec![log_sup(&z.entries)];
    let mut overflow_at = None;
    let mut cur = z.entries.clone();
    let mut logcur: Option<Vec<LogScalar>> = None;
    for j in 0..=n {
        if let Some(lc) = logcur.as_mut() {
            *lc = s.step_generic(j, lc);
            log_norms.push(log_sup(lc));
            continue;
        }
        let next = s.step_generic(j, &cur);
        let finite = next.iter().all(|x| x.finite());
        let norm = next.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if finite && norm <= OVERFLOW_SWITCH {
            log_norms.push(norm.ln());
            points.push(ComplexVector::flagged(next.clone()));
            cur = next;
        } else {
            let lc: Vec<LogScalar> = cur.iter().map(|&x| LogScalar::from_complex(x)).collect();
            let lnext = s.step_generic(j, &lc);
            log_norms.push(log_sup(&lnext));
            overflow_at = Some(points.len());
            logcur = Some(lnext);
        }
    }
    Ok(OrbitRecord { points, overflow_at, log_norms })
}

/// The segment `F_n ∘ … ∘ F_{m+1}`, which equals `F(n) ∘ F(m)^{-1}`.
pub fn compose_segment(s: &MapSequence, m: usize, n: usize, z: &ComplexVector) -> Result<ComplexVector> {
    if m > n {
        return Err(Error::InvalidParameter("segment needs m <= n".into()));
    }
    s.check_point(z, n)?;
    Ok(ComplexVector::flagged(s.compose_range_generic(m + 1, n, &z.entries)))
}

/// Product of the diagonal derivatives at 0 of steps `0..=upto`.
pub fn jacobian_origin(s: &MapSequence, upto: usize) -> Result<Vec<LogScalar>> {
    if upto > s.n_max {
        return Err(Error::InvalidParameter(format!("step {upto} exceeds n_max {}", s.n_max)));
    }
    let mut acc = vec![LogScalar::ONE; s.dim()];
    for n in 0..=upto {
        for m in s.maps_at(n) {
            let diag = m.diagonal_at_origin()?;
            for (a, b) in acc.iter_mut().zip(diag) {
                *a = *a * b;
            }
        }
    }
    Ok(acc)
}

/// Max componentwise relative discrepancy between `F_{η_n}` with
/// `η_n = a^(2^n+1)` and `l_{a^(2^(n+1))} ∘ F_a ∘ l_{a^(-2^n)}` (k = 3, d = 2),
/// both evaluated in log-polar form.
pub fn scaling_conjugation_check(a: f64, n: u32, samples: usize, seed: u64) -> Result<f64> {
    check_a(a)?;
    if n > 40 {
        return Err(Error::InvalidParameter("n must be at most 40".into()));
    }
    let k = 3;
    let la = a.ln();
    let p = 2f64.powi(n as i32);
    let lhs_map = MapSpec::EtaStep { k, d: 2, eta: LogScalar::from_ln(p * la + la) };
    let fa = MapSpec::EtaStep { k, d: 2, eta: LogScalar::from_ln(la) };
    let inner = MapSpec::Scaling { k, c: LogScalar::from_ln(-p * la) };
    let outer = MapSpec::Scaling { k, c: LogScalar::from_ln(2.0 * p * la) };
    let t = rng::tag("scaling_conjugation");
    let errs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, t, i as u64);
            let z: Vec<LogScalar> =
                rng::polydisc(&mut r, k, 1.0).entries.iter().map(|&x| LogScalar::from_complex(x)).collect();
            let lhs = lhs_map.apply_generic(&z);
            let rhs = outer.apply_generic(&fa.apply_generic(&inner.apply_generic(&z)));
            relative_error_log(&lhs, &rhs)
        })
        .collect();
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Max over components of `|a_i − b_i| / |a_i|` (0 when both vanish).
pub fn relative_error_log(a: &[LogScalar], b: &[LogScalar]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x.is_zero() && y.is_zero() {
                0.0
            } else if x.is_zero() {
                f64::INFINITY
            } else {
                ((x - y).log_modulus - x.log_modulus).exp()
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub samples: usize,
    pub max_residual: f64,
    pub mean_residual: f64,
}

/// Evaluates the shift factorisation `F_n = S_{k-1} ∘ … ∘ S_1` with
/// `S_i(z) = (z_2, …, z_k, η z_1 + z_2^d)` for `i ≤ k-2` and
/// `S_{k-1}(z) = (η^k z_2, z_3, …, z_k, η z_1 + z_2^d)`, reading the shift as
/// keeping `k` coordinates. The residual is reported, not asserted.
pub fn shift_factorization_probe(f: &MapSpec, samples: usize, seed: u64) -> Result<FactorizationReport> {
    let MapSpec::EtaStep { k, d, eta } = f else {
        return Err(Error::InvalidParameter("probe needs an EtaStep map".into()));
    };
    let (k, d) = (*k, *d);
    let e = eta.to_complex();
    let ek = e.powu(k as u32);
    let shift = |z: &[Complex64], last_map: bool| -> Vec<Complex64> {
        let mut out: Vec<Complex64> = z[1..].to_vec();
        out.push(e * z[0] + z[1].powu(d));
        if last_map {
            out[0] = ek * z[1];
        }
        out
    };
    let t = rng::tag("shift_factorization");
    let res: Vec<f64> = (0..samples)
        .map(|i| {
            let mut r = rng::stream(seed, t, i as u64);
            let z = rng::polydisc(&mut r, k, 1.0).entries;
            let direct = f.apply_generic(&z);
            let mut w = z.clone();
            for i in 1..k {
                w = shift(&w, i == k - 1);
            }
            direct.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
        })
        .collect();
    let max_residual = res.iter().copied().fold(0.0, f64::max);
    let mean_residual = if res.is_empty() { 0.0 } else { res.iter().sum::<f64>() / res.len() as f64 };
    Ok(FactorizationReport { samples, max_residual, mean_residual })
}

/// Relative sup-norm distance `‖a − b‖∞ / max(‖b‖∞, tiny)`.
pub fn relative_distance(a: &ComplexVector, b: &ComplexVector) -> f64 {
    let diff = a.sub(b);
    let nb = sup_norm(b).unwrap_or(f64::INFINITY).max(f64::MIN_POSITIVE);
    diff.sup_norm_unchecked() / nb
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close_vec(a: &ComplexVector, b: &[f64], tol: f64) -> bool {
        a.entries.iter().zip(b).all(|(x, &y)| (x - c(y)).norm() <= tol)
    }

    fn eta_step(eta: f64) -> MapSpec {
        MapSpec::eta_step(3, 2, LogScalar::from_real(eta)).unwrap()
    }

    #[test]
    fn eta_step_forward_example() {
        let w = eta_step(0.1).apply(&ComplexVector::from_real(&[1.0, 2.0, 3.0])).unwrap();
        assert!(close_vec(&w, &[0.3, 4.1, 9.2], 1e-14));
    }

    #[test]
    fn eta_step_inverse_example() {
        let z = eta_step(0.1).apply_inverse(&ComplexVector::from_real(&[0.3, 4.1, 9.2])).unwrap();
        assert!(close_vec(&z, &[1.0, 2.0, 3.0], 1e-12));
    }

    #[test]
    fn henon_f_example() {
        let m = MapSpec::HenonF { alpha: c(0.5), beta: c(1.0 / 9.0) };
        let w = m.apply(&ComplexVector::from_real(&[1.0, 1.0])).unwrap();
        assert!(close_vec(&w, &[1.5, 1.0 / 9.0], 1e-15));
    }

    #[test]
    fn scaling_inverse_example() {
        let m = MapSpec::Scaling { k: 2, c: LogScalar::from_real(2.0) };
        let z = m.apply_inverse(&ComplexVector::from_real(&[2.0, 4.0])).unwrap();
        assert!(close_vec(&z, &[1.0, 2.0], 1e-15));
    }

    #[test]
    fn origin_is_fixed() {
        let maps = vec![
            eta_step(0.3),
            MapSpec::shift_like(4, 2, 3, Complex64::new(0.5, 0.5)).unwrap(),
            MapSpec::HenonF { alpha: c(0.5), beta: c(0.2) },
            MapSpec::HenonG { alpha: c(0.5), beta: c(0.2), kdeg: 3 },
        ];
        for m in maps {
            let z = ComplexVector::zeros(m.dim());
            assert_eq!(m.apply(&z).unwrap(), z);
        }
    }

    #[test]
    fn tiny_eta_inverse_is_out_of_range() {
        let m = MapSpec::EtaStep { k: 3, d: 2, eta: LogScalar::from_ln(-700.0) };
        let w = ComplexVector::from_real(&[1.0, 1.0, 1.0]);
        assert_eq!(m.apply_inverse(&w), Err(Error::InverseOutOfRange));
    }

    #[test]
    fn linear_condition_number() {
        let m = MapSpec::linear(vec![vec![c(2.0), c(0.0)], vec![c(0.0), c(0.5)]]).unwrap();
        assert!((m.condition_number().unwrap() - 4.0).abs() < 1e-12);
        assert!(MapSpec::linear(vec![vec![c(1.0), c(1.0)], vec![c(1.0), c(1.0)]]).is_err());
    }

    #[test]
    fn differential_matches_finite_difference() {
        let m = MapSpec::shift_like(3, 2, 2, Complex64::new(0.7, -0.2)).unwrap();
        let z = vec![Complex64::new(0.3, 0.1), Complex64::new(-0.4, 0.2), Complex64::new(0.1, 0.5)];
        let v = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.5, 0.5)];
        let h = 1e-6;
        let zp: Vec<_> = z.iter().zip(&v).map(|(a, b)| a + b * h).collect();
        let zm: Vec<_> = z.iter().zip(&v).map(|(a, b)| a - b * h).collect();
        let fd: Vec<_> =
            m.apply_generic(&zp).iter().zip(m.apply_generic(&zm)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let an = m.differential(&z, &v);
        for (a, b) in an.iter().zip(&fd) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn power_tower_orbit_of_zero() {
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        let o = orbit(&s, &ComplexVector::zeros(3), 10).unwrap();
        assert_eq!(o.points.len(), 12);
        assert!(o.points.iter().all(|p| p.entries.iter().all(|x| x.norm() == 0.0)));
    }

    #[test]
    fn small_orbit_decreases() {
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        let o = orbit(&s, &ComplexVector::from_real(&[0.1, 0.1, 0.1]), 10).unwrap();
        for w in o.log_norms[1..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn escaping_orbit_switches_to_log_form() {
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        let o = orbit(&s, &ComplexVector::from_real(&[0.0, 0.0, 3.0]), 40).unwrap();
        assert_eq!(o.log_norms.len(), 42);
        let cut = o.overflow_at.expect("must overflow");
        assert_eq!(o.points.len(), cut);
        // log ‖·‖ roughly doubles each step once large
        let n = o.log_norms.len();
        let ratio = o.log_norms[n - 1] / o.log_norms[n - 2];
        assert!((ratio - 2.0).abs() < 1e-9);
    }

    #[test]
    fn jacobian_of_single_h11() {
        let s = MapSequence::new(
            Generator::HQSchedule { alpha: c(0.5), beta: c(1.0 / 9.0), kdeg: 2, p: vec![1], q: vec![1] },
            0,
        )
        .unwrap();
        let j = jacobian_origin(&s, 0).unwrap();
        for e in j {
            assert!((e.to_complex() - c(1.0 / 18.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn jacobian_rejects_eta_step() {
        let s = MapSequence::power_tower(3, 2, 0.5).unwrap();
        assert!(matches!(jacobian_origin(&s, 0), Err(Error::NotDiagonalAtOrigin(_))));
        let m = eta_step(0.25);
        let jm = m.jacobian_matrix(&[c(0.0); 3]);
        assert_eq!(jm[0][2], c(0.25));
        assert_eq!(jm[1][0], c(0.25));
        assert_eq!(jm[1][1], c(0.0));
    }

    #[test]
    fn identity_jacobian() {
        let s = MapSequence::new(
            Generator::ExplicitList(vec![MapSpec::Scaling { k: 3, c: LogScalar::ONE }]),
            0,
        )
        .unwrap();
        assert!(jacobian_origin(&s, 0).unwrap().iter().all(|e| *e == LogScalar::ONE));
    }

    #[test]
    fn conjugation_hand_example() {
        // a = 0.5, n = 0, z = (1,1,1): both sides (0.25, 1.25, 1.25)
        let a: f64 = 0.5;
        let z: Vec<LogScalar> = vec![LogScalar::ONE; 3];
        let lhs = MapSpec::EtaStep { k: 3, d: 2, eta: LogScalar::from_real(a * a) }.apply_generic(&z);
        let fa = MapSpec::EtaStep { k: 3, d: 2, eta: LogScalar::from_real(a) };
        let inner = MapSpec::Scaling { k: 3, c: LogScalar::from_real(1.0 / a) };
        let outer = MapSpec::Scaling { k: 3, c: LogScalar::from_real(a * a) };
        let rhs = outer.apply_generic(&fa.apply_generic(&inner.apply_generic(&z)));
        let expect = [0.25, 1.25, 1.25];
        for i in 0..3 {
            assert!((lhs[i].to_complex() - c(expect[i])).norm() < 1e-15);
            assert!((rhs[i].to_complex() - c(expect[i])).norm() < 1e-15);
        }
    }

    #[test]
    fn conjugation_small_error() {
        assert!(scaling_conjugation_check(0.5, 3, 100, 1).unwrap() < 1e-12);
    }

    #[test]
    fn factorization_probe_is_deterministic_and_zero_at_origin() {
        let f = eta_step(0.1);
        let a = shift_factorization_probe(&f, 100, 3).unwrap();
        let b = shift_factorization_probe(&f, 100, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.max_residual > 0.0);
        assert_eq!(f.apply_generic(&[c(0.0); 3]), vec![c(0.0); 3]);
    }

    #[test]
    fn segment_identity_and_two_routes() {
        let s = MapSequence::power_tower(3, 2, 0.6).unwrap();
        let z = ComplexVector::from_real(&[0.2, -0.3, 0.4]);
        assert_eq!(compose_segment(&s, 2, 2, &z).unwrap(), z);
        // F_1 applied alone equals F(1) ∘ F(0)^{-1}
        let seg = compose_segment(&s, 0, 1, &z).unwrap();
        let via = s.forward(1, &s.inverse_prefix(0, &z).unwrap()).unwrap();
        assert!(relative_distance(&seg, &via) < 1e-9);
    }

    #[test]
    fn sequence_validation() {
        assert_eq!(
            MapSequence::power_tower(3, 2, 1.5).unwrap_err(),
            Error::InvalidParameter("a must lie in (0,1)".into())
        );
        assert!(MapSequence::new(Generator::EtaSchedule { k: 3, d: 3, rule: EtaRule::ShiftedTower(0.5) }, 10).is_err());
    }

    #[test]
    fn custom_rule_extends_by_powers() {
        let s = MapSequence::new(
            Generator::EtaSchedule { k: 3, d: 2, rule: EtaRule::Custom(vec![LogScalar::from_real(0.1)]) },
            10,
        )
        .unwrap();
        assert!((s.eta(2).unwrap().modulus() - 1e-4).abs() < 1e-18);
    }
}
