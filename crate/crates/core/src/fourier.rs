//! Harmonic analysis on the torus `T^d = (R/2πZ)^d`.
//!
//! Transforms are `ã(θ) = Σ_α a_α e^{iα·θ}` sampled on the uniform grid
//! `θ_k = 2πk/M`. The grid mean of a trigonometric polynomial is exact as
//! long as `M` exceeds its degree on every axis, which is the only
//! quadrature rule used here.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{convolution_power, convolve, drift, span_check, LatticePoint, LatticeSignal, SpanVerdict, WalkDistribution};
use crate::observables::SiteObservable;
use crate::rational::{self, Rational};

/// Values that can be placed on the grid.
pub trait GridValue {
    fn to_complex(&self) -> Complex64;
}

impl GridValue for f64 {
    fn to_complex(&self) -> Complex64 {
        Complex64::new(*self, 0.0)
    }
}

impl GridValue for Complex64 {
    fn to_complex(&self) -> Complex64 {
        *self
    }
}

impl GridValue for Rational {
    fn to_complex(&self) -> Complex64 {
        Complex64::new(rational::to_f64(self), 0.0)
    }
}

/// Samples over `θ ∈ (2π/M)·{0,…,M−1}^d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    points: usize,
    values: Vec<Complex64>,
}

impl TorusGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        let mut rest = idx;
        for i in (0..self.dim).rev() {
            out[i] = rest % self.points;
            rest /= self.points;
        }
        out
    }

    /// `θ` in `[0, 2π)^d`.
    pub fn theta(&self, idx: usize) -> Vec<f64> {
        self.index(idx)
            .into_iter()
            .map(|k| 2.0 * PI * k as f64 / self.points as f64)
            .collect()
    }

    /// `θ` in `(−π, π]^d`.
    pub fn theta_centered(&self, idx: usize) -> Vec<f64> {
        self.index(idx)
            .into_iter()
            .map(|k| centered_angle(k, self.points))
            .collect()
    }

    /// `M^{−d} Σ_grid v`, the normalized integral `∫ v dθ/(2π)^d`.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    pub fn mean_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() / self.values.len() as f64
    }

    pub fn mean_abs_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    /// `max |v(θ)|` over grid points other than `θ = 0`.
    pub fn max_abs_off_origin(&self) -> f64 {
        self.values.iter().skip(1).map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &TorusGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn centered_angle(k: usize, m: usize) -> f64 {
    let k = k as i64;
    let m = m as i64;
    let c = if 2 * k > m { k - m } else { k };
    2.0 * PI * c as f64 / m as f64
}

fn roots_of_unity(m: usize) -> Vec<Complex64> {
    (0..m)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / m as f64))
        .collect()
}

/// `ã(θ) = Σ_α a_α e^{iα·θ}` on the grid, by direct summation.
pub fn char_function<T: GridValue + crate::lattice::Coefficient>(a: &LatticeSignal<T>, points: usize) -> Result<TorusGrid> {
    if points < 3 {
        return Err(Error::InvalidParameter("grid needs at least 3 points per axis".into()));
    }
    let dim = a.dim();
    let total = points
        .checked_pow(dim as u32)
        .filter(|t| *t <= 1 << 28)
        .ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;
    let roots = roots_of_unity(points);
    let m = points as i64;
    let entries: Vec<(Vec<usize>, Complex64)> = a
        .iter()
        .map(|(alpha, v)| (alpha.0.iter().map(|c| c.rem_euclid(m) as usize).collect(), v.to_complex()))
        .collect();
    let values = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut k = vec![0usize; dim];
            let mut rest = idx;
            for i in (0..dim).rev() {
                k[i] = rest % points;
                rest /= points;
            }
            let mut acc = Complex64::zero();
            for (alpha, v) in &entries {
                let mut phase = 0usize;
                for i in 0..dim {
                    phase = (phase + alpha[i] * k[i]) % points;
                }
                acc += v * roots[phase];
            }
            acc
        })
        .collect();
    Ok(TorusGrid { dim, points, values })
}

/// `ã` at a single point.
pub fn char_at<T: GridValue>(a: &LatticeSignal<T>, theta: &[f64]) -> Complex64
where
    T: crate::lattice::Coefficient,
{
    a.iter()
        .map(|(alpha, v)| {
            let phase: f64 = alpha.0.iter().zip(theta).map(|(x, t)| *x as f64 * t).sum();
            v.to_complex() * Complex64::from_polar(1.0, phase)
        })
        .sum()
}

/// The uniform kernel `q^(r)` on `B_{0,r}`.
pub fn box_kernel(dim: usize, r: u64) -> LatticeSignal<Rational> {
    let w = Rational::one() / crate::observables::volume(dim, r);
    let region = crate::lattice::LatticeBox::cube(&LatticePoint::origin(dim), r as i64);
    LatticeSignal::from_entries(dim, region.points().map(|p| (p, w.clone()))).expect("cube points share dimension")
}

/// `q̃^(r)(θ) = Π_i sin((r+½)θ_i) / ((2r+1) sin(θ_i/2))`, summed directly
/// where `|sin(θ_i/2)| < 10⁻⁶`.
pub fn box_kernel_hat(r: u64, theta: &[f64]) -> f64 {
    theta.iter().map(|t| dirichlet(r, *t)).product()
}

fn dirichlet(r: u64, t: f64) -> f64 {
    let s = (t / 2.0).sin();
    let n = (2 * r + 1) as f64;
    if s.abs() < 1e-6 {
        let direct: f64 = (-(r as i64)..=r as i64).map(|a| (a as f64 * t).cos()).sum();
        direct / n
    } else {
        ((r as f64 + 0.5) * t).sin() / (n * s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParsevalPairing {
    /// `Σ_α conj(a_α) b_α`.
    pub lattice: Complex64,
    /// `M^{−d} Σ_grid conj(ã) b̃`.
    pub quadrature: Complex64,
}

impl ParsevalPairing {
    pub fn discrepancy(&self) -> f64 {
        (self.lattice - self.quadrature).norm()
    }
}

pub fn parseval_pairing<T: GridValue + crate::lattice::Coefficient>(
    a: &LatticeSignal<T>,
    b: &LatticeSignal<T>,
    points: usize,
) -> Result<ParsevalPairing> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let ra = a.support_radius();
    let rb = b.support_radius();
    let bandwidth = ra.iter().zip(&rb).map(|(x, y)| (x + y) as u64).max().unwrap_or(0);
    if points as u64 <= bandwidth {
        return Err(Error::Aliasing { points, bandwidth });
    }
    let lattice = a
        .iter()
        .filter_map(|(alpha, v)| b.get(alpha).map(|w| v.to_complex().conj() * w.to_complex()))
        .sum();
    let ga = char_function(a, points)?;
    let gb = char_function(b, points)?;
    let quadrature = ga
        .values
        .iter()
        .zip(&gb.values)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        / ga.values.len() as f64;
    Ok(ParsevalPairing { lattice, quadrature })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeriodicPairing {
    /// `Σ_β p^(n)_β f(α₀ + β)`, evaluated exactly and rounded.
    pub space: f64,
    /// `Σ_k c_k e^{−iα₀·θ_k} conj(p̃(θ_k))ⁿ` over the dual grid of the period cell.
    pub fourier: Complex64,
}

/// Both sides of the correlation identity for a periodic observable.
/// With `c_k = |cell|^{−1} Σ_c f(c) e^{ic·θ_k}` one has
/// `f(x) = Σ_k c_k e^{−ix·θ_k}`, which turns the lattice sum into a finite
/// sum over the frequencies `θ_k = 2πk/P`.
pub fn periodic_pairing(f: &SiteObservable, p: &WalkDistribution, n: u64, at: &LatticePoint) -> Result<PeriodicPairing> {
    let period = f
        .period()
        .ok_or_else(|| Error::InvalidObservable("periodic pairing needs a periodic observable".into()))?
        .to_vec();
    if p.dim() != f.dim() || at.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: p.dim(),
        });
    }
    let space = rational::to_f64(&crate::observables::evolve_site(f, p, n)?.value_at(at));
    let cell = crate::lattice::LatticeBox::new(vec![0; f.dim()], period.iter().map(|q| q - 1).collect())?;
    let size = cell.volume() as f64;
    let walk = p.as_f64_signal();
    let mut fourier = Complex64::zero();
    for k in cell.points() {
        let theta: Vec<f64> = k.0.iter().zip(&period).map(|(k, q)| 2.0 * PI * *k as f64 / *q as f64).collect();
        let ck: Complex64 = cell
            .points()
            .map(|c| {
                let phase: f64 = c.0.iter().zip(&theta).map(|(x, t)| *x as f64 * t).sum();
                f.value_f64(&c) * Complex64::from_polar(1.0, phase)
            })
            .sum::<Complex64>()
            / size;
        if ck.norm() == 0.0 {
            continue;
        }
        let shift: f64 = at.0.iter().zip(&theta).map(|(x, t)| *x as f64 * t).sum();
        let pt = char_at(&walk, &theta).conj();
        fourier += ck * Complex64::from_polar(1.0, -shift) * pt.powu(n as u32);
    }
    Ok(PeriodicPairing { space, fourier })
}

/// `Σ_α |a_α|`.
pub fn a_norm<T: GridValue + crate::lattice::Coefficient>(a: &LatticeSignal<T>) -> f64 {
    a.iter().map(|(_, v)| v.to_complex().norm()).sum()
}

/// `Σ_α |a_α|`, exact.
pub fn a_norm_exact(a: &LatticeSignal<Rational>) -> Rational {
    a.iter().map(|(_, v)| v.abs()).sum()
}

/// `|a₀| + Σ_i (Σ_α |α_i^ν̄ a_α|²)^{1/2}`.
pub fn h_norm<T: GridValue + crate::lattice::Coefficient>(a: &LatticeSignal<T>, nu_bar: u32) -> f64 {
    let origin = LatticePoint::origin(a.dim());
    let head = a.get(&origin).map_or(0.0, |v| v.to_complex().norm());
    let tail: f64 = (0..a.dim())
        .map(|i| {
            a.iter()
                .map(|(alpha, v)| (alpha.0[i] as f64).powi(nu_bar as i32).powi(2) * v.to_complex().norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    head + tail
}

pub fn nu(dim: usize) -> u32 {
    (dim as u32 / 2 + 1).max(2)
}

pub fn nu_bar(dim: usize) -> u32 {
    dim as u32 / 2 + 1
}

pub const NOWAK_TRUNCATION: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NowakConstant {
    pub dim: usize,
    pub nu_bar: u32,
    /// `2^d Σ_{k ≤ K} C(k+d−2, d−1) k^{−2ν̄}`.
    pub partial_sum: f64,
    /// Upper bound for the omitted terms `k > K`.
    pub tail_bound: f64,
    /// `max(1, (d−1)!·√(partial_sum + tail_bound))`.
    pub c_d: f64,
}

/// The Wiener-algebra constant. The number of `β ∈ Z^d` with
/// `0 < |β_{σ_1}| ≤ … ≤ |β_{σ_d}| = k` is `2^d C(k+d−2, d−1)`.
pub fn nowak_constant(dim: usize) -> Result<NowakConstant> {
    nowak_constant_truncated(dim, NOWAK_TRUNCATION)
}

pub fn nowak_constant_truncated(dim: usize, cutoff: u64) -> Result<NowakConstant> {
    if !(1..=4).contains(&dim) {
        return Err(Error::InvalidParameter(format!("Nowak constant is tabulated for d ≤ 4, got {dim}")));
    }
    let nb = nu_bar(dim);
    let d = dim as i32;
    let two_d = 2f64.powi(d);
    // smallest terms first
    let partial: f64 = (1..=cutoff)
        .rev()
        .map(|k| {
            let k = k as f64;
            binomial_f64(k + (d - 2) as f64, (d - 1) as u32) * k.powi(-2 * nb as i32)
        })
        .sum::<f64>()
        * two_d;
    let kk = cutoff as f64;
    let fact: f64 = (1..d).map(|i| i as f64).product();
    let growth = if d >= 2 { (1.0 + (d - 2) as f64 / kk).powi(d - 1) } else { 1.0 };
    let tail = two_d / fact * growth * kk.powi(d - 2 * nb as i32) / (2 * nb as i32 - d) as f64;
    let c_d = (fact * (partial + tail).sqrt()).max(1.0);
    Ok(NowakConstant {
        dim,
        nu_bar: nb,
        partial_sum: partial,
        tail_bound: tail,
        c_d,
    })
}

fn binomial_f64(n: f64, k: u32) -> f64 {
    (0..k).map(|i| (n - i as f64) / (i + 1) as f64).product()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NowakCheck {
    pub a_norm: f64,
    pub h_norm: f64,
    pub c_d: f64,
    pub holds: bool,
}

/// `‖a‖_{ℓ¹} ≤ C_d ‖a‖_{H^ν̄}`.
pub fn nowak_check<T: GridValue + crate::lattice::Coefficient>(a: &LatticeSignal<T>) -> Result<NowakCheck> {
    let c = nowak_constant(a.dim())?;
    let an = a_norm(a);
    let hn = h_norm(a, c.nu_bar);
    Ok(NowakCheck {
        a_norm: an,
        h_norm: hn,
        c_d: c.c_d,
        holds: an <= c.c_d * hn * (1.0 + 1e-12),
    })
}

/// Exponents and schedules of the decay argument.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierConfig {
    pub dim: usize,
    pub nu: u32,
    pub nu_bar: u32,
    pub epsilon: f64,
    /// `true` when `ε` only satisfies `0 < ε < 1/3`.
    pub exploratory: bool,
}

/// `min(1/3, 1/(2(5ν + 2 + d/2)))`, the exclusive upper limit for `ε`.
pub fn epsilon_limit(dim: usize) -> f64 {
    let nu = nu(dim) as f64;
    (1.0 / 3.0f64).min(1.0 / (2.0 * (5.0 * nu + 2.0 + dim as f64 / 2.0)))
}

impl FourierConfig {
    pub fn new(dim: usize, epsilon: f64) -> Result<Self> {
        let limit = epsilon_limit(dim);
        if !(epsilon > 0.0 && epsilon < limit) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, {limit}) for d = {dim}, got {epsilon}"
            )));
        }
        Ok(Self::unchecked(dim, epsilon, false))
    }

    /// Accepts any `0 < ε < 1/3`; results are marked exploratory.
    pub fn exploratory(dim: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0 / 3.0) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1/3), got {epsilon}")));
        }
        let strict = epsilon < epsilon_limit(dim);
        Ok(Self::unchecked(dim, epsilon, !strict))
    }

    fn unchecked(dim: usize, epsilon: f64, exploratory: bool) -> Self {
        FourierConfig {
            dim,
            nu: nu(dim),
            nu_bar: nu_bar(dim),
            epsilon,
            exploratory,
        }
    }

    /// `r_n = ⌈n^ε⌉`; values within `10⁻⁹` of an integer count as that integer.
    pub fn r_n(&self, n: u64) -> u64 {
        let x = (n.max(1) as f64).powf(self.epsilon);
        ((x - 1e-9).ceil() as u64).max(1)
    }

    /// Radius `n^{−(1−ε)/2}` of the ball `B_n`.
    pub fn ball_radius(&self, n: u64) -> f64 {
        (n as f64).powf(-(1.0 - self.epsilon) / 2.0)
    }
}

/// Smallest power of two above `2·bandwidth`, at least 8.
pub fn default_grid_points(bandwidth: u64) -> usize {
    ((2 * bandwidth + 1) as usize).next_power_of_two().max(8)
}

/// `α ↦ (iα_axis)^ν a_α`, whose transform is `∂^ν ã/∂θ_axis^ν`.
pub fn derivative_signal<T: GridValue + crate::lattice::Coefficient>(a: &LatticeSignal<T>, axis: usize, order: u32) -> LatticeSignal<Complex64> {
    let i_pow = Complex64::i().powu(order);
    LatticeSignal::from_entries(
        a.dim(),
        a.iter()
            .map(|(alpha, v)| (alpha.clone(), v.to_complex() * i_pow * (alpha.0[axis] as f64).powi(order as i32))),
    )
    .expect("same dimension")
}

/// Central finite difference of order `order` of `ã` along `axis`.
pub fn finite_difference_derivative<T: GridValue + crate::lattice::Coefficient>(
    a: &LatticeSignal<T>,
    axis: usize,
    order: u32,
    theta: &[f64],
    h: f64,
) -> Complex64 {
    let mut acc = Complex64::zero();
    for j in 0..=order {
        let binom = binomial_f64(order as f64, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut t = theta.to_vec();
        t[axis] += (order as f64 / 2.0 - j as f64) * h;
        acc += binom * char_at(a, &t);
    }
    acc / h.powi(order as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectNorms {
    pub n: u64,
    pub r_n: u64,
    /// `Σ|g_α|`, exact sum rounded once.
    pub a_norm: f64,
    /// `∫|g̃| dθ/(2π)^d` by grid quadrature.
    pub l1_grid: f64,
    /// `Σ_i (∫|∂_i^ν g̃|² dθ/(2π)^d)^{1/2}` by grid quadrature.
    pub sobolev: f64,
    /// `C_d·(l1_grid + sobolev)`.
    pub bound: f64,
    pub grid_points: usize,
    pub exploratory: bool,
}

impl DefectNorms {
    pub fn recorded(&self) -> f64 {
        self.l1_grid + self.sobolev
    }
}

/// `g^(n) = p^(n) − q^(r_n) ∗ p^(n)`, exact.
pub fn defect_signal(p: &WalkDistribution, n: u64, config: &FourierConfig) -> Result<LatticeSignal<Rational>> {
    if n == 0 {
        return Err(Error::InvalidParameter("defect signal needs n ≥ 1".into()));
    }
    let pn = convolution_power(p, n);
    let smoothed = convolve(&box_kernel(p.dim(), config.r_n(n)), &pn)?;
    pn.add_scaled(&smoothed, &-Rational::one())
}

/// Norms of `g^(n)` on a grid of `points` per axis. The grid must exceed
/// twice the support radius so the squared quadrature is exact.
pub fn defect_norms(p: &WalkDistribution, n: u64, config: &FourierConfig, points: usize) -> Result<(LatticeSignal<Rational>, DefectNorms)> {
    let g = defect_signal(p, n, config)?;
    let norms = signal_norms(&g, n, config.r_n(n), config, points)?;
    Ok((g, norms))
}

fn signal_norms(g: &LatticeSignal<Rational>, n: u64, r_n: u64, config: &FourierConfig, points: usize) -> Result<DefectNorms> {
    let radius = g.support_radius().into_iter().max().unwrap_or(0) as u64;
    if points as u64 <= 2 * radius {
        return Err(Error::Aliasing {
            points,
            bandwidth: 2 * radius,
        });
    }
    let c_d = nowak_constant(g.dim())?.c_d;
    let l1_grid = char_function(g, points)?.mean_abs();
    let mut sobolev = 0.0;
    for axis in 0..g.dim() {
        let grid = char_function(&derivative_signal(g, axis, config.nu), points)?;
        sobolev += grid.mean_abs_sq().sqrt();
    }
    Ok(DefectNorms {
        n,
        r_n,
        a_norm: rational::to_f64(&a_norm_exact(g)),
        l1_grid,
        sobolev,
        bound: c_d * (l1_grid + sobolev),
        grid_points: points,
        exploratory: config.exploratory,
    })
}

/// Drift multiplier data for `π̃_n(θ) = p̃(θ) e^{−iδ^(n)·θ/n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftRemoved {
    pub n: u64,
    /// Nearest lattice point to `n·v`, ties toward zero.
    pub delta: Vec<i64>,
    pub grid: TorusGrid,
    /// `|∂_i π̃_n(0)| = |v_i − δ_i/n|`, exact then rounded.
    pub gradient_at_zero: Vec<f64>,
}

pub fn drift_shift(p: &WalkDistribution, n: u64) -> Vec<i64> {
    let n_big = Rational::from_integer(BigInt::from(n));
    drift(p)
        .iter()
        .map(|v| {
            rational::round_ties_toward_zero(&(v * &n_big))
                .to_i64()
                .expect("shift fits in i64")
        })
        .collect()
}

/// The multiplier uses the representative `θ ∈ (−π, π]^d`, so `π̃_n` is
/// discontinuous across `θ_i = π` when `δ_i/n ∉ Z`.
pub fn drift_removed_char(p: &WalkDistribution, n: u64, points: usize) -> Result<DriftRemoved> {
    if n == 0 {
        return Err(Error::InvalidParameter("drift removal needs n ≥ 1".into()));
    }
    let delta = drift_shift(p, n);
    let base = char_function(&p.as_f64_signal(), points)?;
    let values = if delta.iter().all(|d| *d == 0) {
        base.values.clone()
    } else {
        base.values
            .par_iter()
            .enumerate()
            .map(|(idx, v)| {
                let theta = base.theta_centered(idx);
                let phase: f64 = delta.iter().zip(&theta).map(|(d, t)| *d as f64 * t).sum::<f64>() / n as f64;
                v * Complex64::from_polar(1.0, -phase)
            })
            .collect()
    };
    let n_big = Rational::from_integer(BigInt::from(n));
    let gradient_at_zero = drift(p)
        .iter()
        .zip(&delta)
        .map(|(v, d)| rational::to_f64(&(v - Rational::from_integer(BigInt::from(*d)) / &n_big).abs()))
        .collect();
    Ok(DriftRemoved {
        n,
        delta,
        grid: TorusGrid {
            dim: base.dim,
            points,
            values,
        },
        gradient_at_zero,
    })
}

/// Bernoulli numbers `B_0..=B_m` with `B_1 = −1/2`.
pub fn bernoulli_numbers(m: usize) -> Vec<Rational> {
    let mut b: Vec<Rational> = Vec::with_capacity(m + 1);
    for k in 0..=m {
        if k == 0 {
            b.push(Rational::one());
            continue;
        }
        let mut s = Rational::zero();
        let mut binom = BigInt::one();
        for (j, bj) in b.iter().enumerate().take(k) {
            s += bj * Rational::from_integer(binom.clone());
            binom = binom * BigInt::from(k + 1 - j) / BigInt::from(j + 1);
        }
        b.push(-s / Rational::from_integer(BigInt::from(k + 1)));
    }
    b
}

/// `Σ_{a=1}^{r} a^m` by Faulhaber's formula.
pub fn power_sum(m: u32, r: u64) -> Rational {
    let b = bernoulli_numbers(m as usize);
    let r = Rational::from_integer(BigInt::from(r));
    let mut total = Rational::zero();
    let mut binom = BigInt::one();
    for k in 0..=m as usize {
        let bk = if k == 1 { -b[1].clone() } else { b[k].clone() };
        total += bk * Rational::from_integer(binom.clone()) * num_traits::pow(r.clone(), m as usize + 1 - k);
        binom = binom * BigInt::from(m as usize + 1 - k) / BigInt::from(k + 1);
    }
    total / Rational::from_integer(BigInt::from(m + 1))
}

/// Taylor coefficient of `θ^{2j}` in the one-axis box kernel:
/// `ξ_j(r) = (−1)^j/((2j)!(2r+1)) Σ_{a=−r}^{r} a^{2j}`.
pub fn xi_coefficient(j: u32, r: u64) -> Rational {
    let sum = if j == 0 {
        Rational::from_integer(BigInt::from(2 * r + 1))
    } else {
        power_sum(2 * j, r) * Rational::from_integer(BigInt::from(2))
    };
    let fact: BigInt = (1..=2 * j as u64).map(BigInt::from).product();
    let sign = if j.is_multiple_of(2) { Rational::one() } else { -Rational::one() };
    sign * sum / Rational::from_integer(fact * BigInt::from(2 * r + 1))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpanWitness {
    /// A point `θ ≠ 0` with `|p̃(θ)| = 1`, in `(−π, π]^d`.
    pub theta: Vec<f64>,
    pub modulus: f64,
}

/// A torus point where `|p̃| = 1` for walks whose support differences do
/// not span `Z^d`: either a direction orthogonal to the span, or
/// `2π H^{−T} e_j` for the Hermite basis `H` when it has full rank.
pub fn span_witness(p: &WalkDistribution) -> Option<SpanWitness> {
    let SpanVerdict::Sublattice { basis } = span_check(p) else {
        return None;
    };
    let d = p.dim();
    let cols: Vec<Vec<Rational>> = basis
        .iter()
        .map(|b| b.0.iter().map(|x| Rational::from_integer(BigInt::from(*x))).collect())
        .collect();
    let theta: Vec<f64> = if cols.len() < d {
        let u = nullspace_vector(&cols, d);
        let scale = u.iter().map(|x| x.abs()).fold(0.0, f64::max);
        u.iter().map(|x| PI * x / scale).collect()
    } else {
        // H^T x = e_j with x non-integral for some j
        (0..d)
            .find_map(|j| {
                let x = solve_transpose(&cols, j);
                x.iter().any(|v| !v.is_integer()).then(|| {
                    x.iter()
                        .map(|v| {
                            let frac = v - v.floor();
                            let w = if frac > Rational::new(BigInt::one(), BigInt::from(2)) {
                                frac - Rational::one()
                            } else {
                                frac
                            };
                            2.0 * PI * rational::to_f64(&w)
                        })
                        .collect()
                })
            })
            .expect("a proper full-rank sublattice has a non-integral dual vector")
    };
    let modulus = char_at(&p.as_f64_signal(), &theta).norm();
    Some(SpanWitness { theta, modulus })
}

fn solve_transpose(cols: &[Vec<Rational>], j: usize) -> Vec<Rational> {
    // rows of H^T are the basis vectors
    let d = cols.len();
    let mut m: Vec<Vec<Rational>> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut row = c.clone();
            row.push(if i == j { Rational::one() } else { Rational::zero() });
            row
        })
        .collect();
    for col in 0..d {
        let piv = (col..d).find(|&r| !m[r][col].is_zero()).expect("full rank");
        m.swap(col, piv);
        let pv = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x /= &pv;
        }
        for r in 0..d {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pivot_row = m[col].clone();
                for (x, y) in m[r].iter_mut().zip(&pivot_row) {
                    *x -= &f * y;
                }
            }
        }
    }
    m.into_iter().map(|row| row[d].clone()).collect()
}

fn nullspace_vector(cols: &[Vec<Rational>], d: usize) -> Vec<f64> {
    // rows: basis vectors; find u with <b, u> = 0 for all b
    let mut m: Vec<Vec<Rational>> = cols.to_vec();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..d {
        let Some(piv) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, piv);
        let pv = m[row][col].clone();
        for x in m[row].iter_mut() {
            *x /= &pv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pivot_row = m[row].clone();
                for (x, y) in m[r].iter_mut().zip(&pivot_row) {
                    *x -= &f * y;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free = (0..d).find(|c| !pivots.contains(c)).expect("rank below d");
    let mut u = vec![Rational::zero(); d];
    u[free] = Rational::one();
    for (r, &pc) in pivots.iter().enumerate() {
        u[pc] = -m[r][free].clone();
    }
    u.iter().map(rational::to_f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterDecay {
    pub n: u64,
    pub ball_radius: f64,
    /// `max |p̃(θ)|ⁿ` over grid points outside `B_n`.
    pub max_outside: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalDerivative {
    pub n: u64,
    pub r_n: u64,
    /// `max_i max_{θ ∈ B_n} |∂_i^ν g̃^(n)(θ)|` for the drift-centered `g^(n)`.
    pub max_in_ball: f64,
    /// `r^{2ν} n^{(−2+2ε+ν(1+ε))/2}`.
    pub shape: f64,
    pub ratio: f64,
    /// Ratio above the ratio at the largest `n` in the list.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XiRow {
    pub r: u64,
    pub j: u32,
    pub value: String,
    pub value_f64: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalBoundsReport {
    pub full_lattice: bool,
    pub witness: Option<SpanWitness>,
    /// `min (1 − |p̃(θ)|)/|θ|²` over grid points `0 < |θ| ≤ curvature_radius`.
    pub c_hat: f64,
    pub curvature_radius: f64,
    pub outer: Vec<OuterDecay>,
    /// Least-squares `κ̂` for `−ln max_outside ≈ κ n^ε` through the origin.
    pub kappa_fit: f64,
    pub kappa_residuals: Vec<f64>,
    /// `min_n (−ln max_outside)/n^ε`.
    pub kappa_min: f64,
    pub xi: Vec<XiRow>,
    pub derivatives: Vec<LocalDerivative>,
    pub exploratory: bool,
}

pub const CURVATURE_RADIUS: f64 = 0.25;

pub fn local_bounds_report(p: &WalkDistribution, n_list: &[u64], config: &FourierConfig, points: usize) -> Result<LocalBoundsReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("n list is empty".into()));
    }
    let walk = char_function(&p.as_f64_signal(), points)?;
    let witness = span_witness(p);
    let radius_sq = |idx: usize| walk.theta_centered(idx).iter().map(|t| t * t).sum::<f64>();

    let c_hat = (1..walk.len())
        .filter_map(|idx| {
            let r2 = radius_sq(idx);
            (r2 <= CURVATURE_RADIUS * CURVATURE_RADIUS).then(|| (1.0 - walk.values[idx].norm()) / r2)
        })
        .fold(f64::INFINITY, f64::min);

    let outer: Vec<OuterDecay> = n_list
        .iter()
        .map(|&n| {
            let b = config.ball_radius(n);
            let max_outside = (1..walk.len())
                .filter(|&idx| radius_sq(idx) > b * b)
                .map(|idx| walk.values[idx].norm().powf(n as f64))
                .fold(0.0, f64::max);
            OuterDecay {
                n,
                ball_radius: b,
                max_outside,
            }
        })
        .collect();
    let xs: Vec<f64> = outer.iter().map(|o| (o.n as f64).powf(config.epsilon)).collect();
    let ys: Vec<f64> = outer.iter().map(|o| -o.max_outside.max(f64::MIN_POSITIVE).ln()).collect();
    let kappa_fit = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let kappa_residuals = xs.iter().zip(&ys).map(|(x, y)| y - kappa_fit * x).collect();
    let kappa_min = xs.iter().zip(&ys).map(|(x, y)| y / x).fold(f64::INFINITY, f64::min);

    let mut xi = Vec::new();
    let mut rs: Vec<u64> = n_list.iter().map(|&n| config.r_n(n)).collect();
    rs.sort_unstable();
    rs.dedup();
    for &r in &rs {
        for j in 1..=config.nu {
            let v = xi_coefficient(j, r);
            xi.push(XiRow {
                r,
                j,
                value: rational::format_rational(&v),
                value_f64: rational::to_f64(&v),
            });
        }
    }

    let mut derivatives = Vec::new();
    for &n in n_list {
        let r = config.r_n(n);
        let delta = LatticePoint(drift_shift(p, n));
        let centered = convolution_power(p, n).translate(&delta.neg());
        let g = centered.add_scaled(&convolve(&box_kernel(p.dim(), r), &centered)?, &-Rational::one())?;
        let b = config.ball_radius(n);
        let mut max_in_ball: f64 = 0.0;
        for axis in 0..p.dim() {
            let grid = char_function(&derivative_signal(&g, axis, config.nu), points)?;
            for idx in 0..grid.len() {
                if radius_sq(idx) <= b * b {
                    max_in_ball = max_in_ball.max(grid.values[idx].norm());
                }
            }
        }
        let nu = config.nu as f64;
        let eps = config.epsilon;
        let shape = (r as f64).powf(2.0 * nu) * (n as f64).powf((-2.0 + 2.0 * eps + nu * (1.0 + eps)) / 2.0);
        derivatives.push(LocalDerivative {
            n,
            r_n: r,
            max_in_ball,
            shape,
            ratio: max_in_ball / shape,
            flagged: false,
        });
    }
    if let Some(reference) = derivatives.iter().max_by_key(|d| d.n).map(|d| d.ratio) {
        for d in &mut derivatives {
            d.flagged = d.ratio > reference * (1.0 + 1e-12);
        }
    }

    Ok(LocalBoundsReport {
        full_lattice: witness.is_none(),
        witness,
        c_hat,
        curvature_radius: CURVATURE_RADIUS,
        outer,
        kappa_fit,
        kappa_residuals,
        kappa_min,
        xi,
        derivatives,
        exploratory: config.exploratory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::rational::{int, rat};

    fn pt(c: &[i64]) -> LatticePoint {
        LatticePoint(c.to_vec())
    }

    #[test]
    fn char_function_examples() {
        let delta = LatticeSignal::delta(2, 1.0f64);
        let g = char_function(&delta, 8).unwrap();
        assert!(g.values().iter().all(|v| (v - Complex64::one()).norm() < 1e-15));
        let walk = presets::third_walk().as_f64_signal();
        let g = char_function(&walk, 64).unwrap();
        for idx in 0..g.len() {
            let t = g.theta(idx)[0];
            assert!((g.values()[idx] - Complex64::new((1.0 + 2.0 * t.cos()) / 3.0, 0.0)).norm() < 1e-14);
        }
        assert!((g.values()[32].re + 1.0 / 3.0).abs() < 1e-15);
        for (_, w) in presets::all_walks() {
            assert!((char_function(&w.as_f64_signal(), 16).unwrap().values()[0] - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn box_kernel_matches_direct_sum() {
        assert_eq!(box_kernel_hat(3, &[0.0, 0.0]), 1.0);
        assert!((box_kernel_hat(1, &[PI]) + 1.0 / 3.0).abs() < 1e-15);
        for r in [1u64, 2, 7, 30] {
            let q = box_kernel(1, r);
            let grid = char_function(&q, 97).unwrap();
            for idx in 0..grid.len() {
                let t = grid.theta(idx);
                assert!((box_kernel_hat(r, &t) - grid.values()[idx].re).abs() < 1e-12, "r={r} θ={t:?}");
            }
        }
        // near-singular points of the closed form
        for t in [2.0 * PI - 1e-9, 1e-8, PI / 2.0] {
            let direct: f64 = (-2i64..=2).map(|a| (a as f64 * t).cos()).sum::<f64>() / 5.0;
            assert!((box_kernel_hat(2, &[t]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_examples() {
        let d = LatticeSignal::delta(1, 1.0f64);
        let pair = parseval_pairing(&d, &d, 4).unwrap();
        assert!((pair.lattice - 1.0).norm() < 1e-15 && pair.discrepancy() < 1e-14);
        let p = presets::third_walk().as_f64_signal();
        let pair = parseval_pairing(&p, &p, 8).unwrap();
        assert!((pair.lattice.re - 1.0 / 3.0).abs() < 1e-15);
        assert!(pair.discrepancy() < 1e-14);
        assert!(parseval_pairing(&p, &p, 2).is_err());
        let wide = LatticeSignal::spike(pt(&[5]), 1.0f64);
        assert!(matches!(parseval_pairing(&wide, &p, 6), Err(Error::Aliasing { bandwidth: 6, .. })));
    }

    #[test]
    fn periodic_pairing_matches() {
        let f = SiteObservable::periodic_from_fn(vec![3], |c| int(c[0] * c[0] - 2)).unwrap();
        for n in [0u64, 1, 5, 40, 64] {
            let pair = periodic_pairing(&f, &presets::drifted_1d(), n, &pt(&[4])).unwrap();
            assert!((pair.space - pair.fourier.re).abs() < 1e-10 && pair.fourier.im.abs() < 1e-10);
        }
    }

    #[test]
    fn norms_examples() {
        let d = LatticeSignal::delta(1, 1.0f64);
        assert_eq!((a_norm(&d), h_norm(&d, 1)), (1.0, 1.0));
        let s = LatticeSignal::spike(pt(&[2]), 1.0f64);
        assert_eq!((a_norm(&s), h_norm(&s, 1)), (1.0, 2.0));
        let shifted = s.translate(&pt(&[-7]));
        assert_eq!(a_norm(&shifted), a_norm(&s));
    }

    #[test]
    fn nowak_one_dimension() {
        let c = nowak_constant(1).unwrap();
        assert!((c.partial_sum - PI * PI / 3.0).abs() < 1e-5);
        assert!((c.c_d - PI / 3f64.sqrt()).abs() < 1e-3);
        assert!(nowak_check(&LatticeSignal::delta(3, 1.0f64)).unwrap().holds);
        assert!(nowak_constant(5).is_err());
    }

    #[test]
    fn nowak_sum_matches_enumeration() {
        // brute force over 0 < |b_1| ≤ … ≤ |b_d| ≤ L
        for dim in [2usize, 3] {
            let l = 30i64;
            let nb = nu_bar(dim) as i32;
            let mut brute = 0.0;
            let region = crate::lattice::LatticeBox::cube(&LatticePoint::origin(dim), l);
            for b in region.points() {
                let a: Vec<i64> = b.0.iter().map(|x| x.abs()).collect();
                if a[0] > 0 && a.windows(2).all(|w| w[0] <= w[1]) {
                    brute += (a[dim - 1] as f64).powi(-2 * nb);
                }
            }
            let c = nowak_constant_truncated(dim, l as u64).unwrap();
            assert!((brute - c.partial_sum).abs() < 1e-12 * brute.max(1.0));
        }
    }

    #[test]
    fn config_limits() {
        assert!((epsilon_limit(1) - 0.04).abs() < 1e-15);
        assert!(FourierConfig::new(1, 0.1).is_err());
        let c = FourierConfig::exploratory(1, 0.1).unwrap();
        assert!(c.exploratory);
        assert_eq!((c.nu, c.nu_bar), (2, 1));
        for n in [4u64, 16, 64, 256, 1024] {
            assert_eq!(c.r_n(n), 2);
        }
        assert_eq!(c.r_n(1), 1);
        assert!(!FourierConfig::new(1, 0.02).unwrap().exploratory);
        assert!(FourierConfig::exploratory(1, 0.4).is_err());
        assert_eq!((nu(3), nu_bar(3), nu(4), nu_bar(4)), (2, 2, 3, 3));
    }

    #[test]
    fn defect_signal_exact() {
        let cfg = FourierConfig::exploratory(1, 0.1).unwrap();
        let walk = presets::third_walk();
        let g = defect_signal(&walk, 4, &cfg).unwrap();
        assert_eq!(g.total(), int(0));
        // direct: p^(4) − (1/5)Σ_{|s|≤2} τ_s p^(4)
        let p4 = crate::lattice::convolution_power_naive(&walk, 4);
        let mut direct = Rational::zero();
        for a in -6..=6 {
            let here = p4.value_at(&pt(&[a]));
            let avg: Rational = (-2..=2).map(|s| p4.value_at(&pt(&[a - s]))).sum::<Rational>() / int(5);
            direct += (here - avg).abs();
        }
        assert_eq!(a_norm_exact(&g), direct);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let walk = presets::drifted_1d().as_f64_signal();
        let sq = crate::lattice::convolve(&walk, &walk).unwrap();
        let d2 = derivative_signal(&sq, 0, 2);
        for t in [0.3, 1.7, -2.2] {
            let exact = char_at(&d2, &[t]);
            let fd = finite_difference_derivative(&sq, 0, 2, &[t], 1e-4);
            assert!((exact - fd).norm() < 1e-6);
        }
    }

    #[test]
    fn drift_examples() {
        let d = drift_removed_char(&presets::drifted_1d(), 3, 16).unwrap();
        assert_eq!(d.delta, vec![1]);
        assert!(d.gradient_at_zero[0] <= 1.0 / 6.0 + 1e-12);
        let zero = drift_removed_char(&presets::third_walk(), 5, 16).unwrap();
        let base = char_function(&presets::third_walk().as_f64_signal(), 16).unwrap();
        assert_eq!(zero.grid, base);
        let step = WalkDistribution::new_allow_trivial(1, vec![(pt(&[1]), int(1))]).unwrap();
        for n in [1u64, 4] {
            let g = drift_removed_char(&step, n, 16).unwrap();
            assert!(g.grid.values().iter().all(|v| (v - 1.0).norm() < 1e-12));
        }
    }

    #[test]
    fn xi_closed_form() {
        for r in [1u64, 2, 5, 40] {
            assert_eq!(xi_coefficient(1, r), rat(-(r as i64) * (r as i64 + 1), 6));
            for j in 1..=4u32 {
                let direct: Rational = (-(r as i64)..=r as i64).map(|a| int(a).pow(2 * j as i32)).sum();
                let fact: i64 = (1..=2 * j as i64).product();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                assert_eq!(xi_coefficient(j, r), direct * int(sign) / int(fact * (2 * r as i64 + 1)));
            }
        }
        assert_eq!(xi_coefficient(0, 3), int(1));
    }

    #[test]
    fn span_witnesses() {
        let w = span_witness(&presets::reducible_1d()).unwrap();
        assert!((w.theta[0].abs() - PI).abs() < 1e-12);
        assert!((w.modulus - 1.0).abs() < 1e-12);
        assert!(span_witness(&presets::third_walk()).is_none());
        let flat = WalkDistribution::new(2, vec![(pt(&[0, 0]), rat(1, 2)), (pt(&[1, 0]), rat(1, 2))]).unwrap();
        let w = span_witness(&flat).unwrap();
        assert!(w.theta[0].abs() < 1e-12 && w.theta[1].abs() > 0.0 && (w.modulus - 1.0).abs() < 1e-12);
        let checker = WalkDistribution::new(
            2,
            vec![(pt(&[0, 0]), rat(1, 3)), (pt(&[1, 1]), rat(1, 3)), (pt(&[1, -1]), rat(1, 3))],
        )
        .unwrap();
        let w = span_witness(&checker).unwrap();
        assert!((w.modulus - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_report_third_walk() {
        let cfg = FourierConfig::exploratory(1, 0.1).unwrap();
        let rep = local_bounds_report(&presets::third_walk(), &[4, 16, 64], &cfg, 512).unwrap();
        assert!(rep.full_lattice);
        assert!((rep.c_hat - 1.0 / 3.0).abs() < 0.01);
        assert!(rep.outer.windows(2).all(|w| w[1].max_outside <= w[0].max_outside));
        assert!(rep.kappa_fit > 0.0);
        let rep = local_bounds_report(&presets::reducible_1d(), &[4], &cfg, 64).unwrap();
        assert!(!rep.full_lattice);
        assert!(rep.witness.is_some());
    }
}
