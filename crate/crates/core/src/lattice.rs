//! Finitely supported functions on `Z^d`: walk distributions, exact
//! convolution, moments, drift, the span (irreducibility) check and the
//! boundary defect of centered boxes.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// A point of `Z^d`. Ordering is lexicographic on coordinates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticePoint(pub Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Self {
        LatticePoint(coords)
    }

    pub fn origin(dim: usize) -> Self {
        LatticePoint(vec![0; dim])
    }

    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut c = vec![0; dim];
        c[axis] = 1;
        LatticePoint(c)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn add(&self, other: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &LatticePoint) -> LatticePoint {
        LatticePoint(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn neg(&self) -> LatticePoint {
        LatticePoint(self.0.iter().map(|a| -a).collect())
    }

    pub fn scale(&self, k: i64) -> LatticePoint {
        LatticePoint(self.0.iter().map(|a| a * k).collect())
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }

    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|a| a * a).sum()
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Axis-aligned box `{α : lo_i ≤ α_i ≤ hi_i}`; `B_{γ,r}` is the cube
/// of half-side `r` around `γ`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::InvalidParameter(format!(
                "empty box lo={lo:?} hi={hi:?}"
            )));
        }
        Ok(LatticeBox { lo, hi })
    }

    pub fn cube(center: &LatticePoint, r: i64) -> Self {
        LatticeBox {
            lo: center.0.iter().map(|c| c - r).collect(),
            hi: center.0.iter().map(|c| c + r).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis] + 1
    }

    pub fn volume(&self) -> u128 {
        (0..self.dim()).map(|i| self.side(i) as u128).product()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        p.0.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| l <= x && x <= h)
    }

    pub fn grow(&self, by: i64) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().map(|l| l - by).collect(),
            hi: self.hi.iter().map(|h| h + by).collect(),
        }
    }

    /// Row-major position of `p` (last axis fastest).
    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut idx = 0usize;
        for i in 0..self.dim() {
            idx = idx * self.side(i) as usize + (p.0[i] - self.lo[i]) as usize;
        }
        Some(idx)
    }

    pub fn point_at(&self, mut idx: usize) -> LatticePoint {
        let d = self.dim();
        let mut c = vec![0; d];
        for i in (0..d).rev() {
            let s = self.side(i) as usize;
            c[i] = self.lo[i] + (idx % s) as i64;
            idx /= s;
        }
        LatticePoint(c)
    }

    pub fn points(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        (0..self.volume() as usize).map(move |i| self.point_at(i))
    }

    pub fn intersect(&self, other: &LatticeBox) -> Option<LatticeBox> {
        let lo: Vec<i64> = self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect();
        let hi: Vec<i64> = self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            None
        } else {
            Some(LatticeBox { lo, hi })
        }
    }

    /// Smallest box containing both.
    pub fn hull(&self, other: &LatticeBox) -> LatticeBox {
        LatticeBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| *a.min(b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| *a.max(b)).collect(),
        }
    }
}

/// Arithmetic needed by convolution; implemented for the exact and the
/// floating coefficient types used across the crate.
pub trait Coefficient: Clone + Zero + PartialEq + fmt::Debug + Send + Sync {
    fn mul_ref(&self, other: &Self) -> Self;
    fn add_assign_ref(&mut self, other: &Self);
}

macro_rules! impl_coefficient {
    ($($t:ty),*) => {$(
        impl Coefficient for $t {
            fn mul_ref(&self, other: &Self) -> Self {
                self * other
            }
            fn add_assign_ref(&mut self, other: &Self) {
                *self += other;
            }
        }
    )*};
}

impl_coefficient!(f64, Complex64, BigInt, Rational);

/// Finitely supported function `Z^d → T`. Exact zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSignal<T> {
    dim: usize,
    entries: BTreeMap<LatticePoint, T>,
}

impl<T: Coefficient> LatticeSignal<T> {
    pub fn zero(dim: usize) -> Self {
        LatticeSignal {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn delta(dim: usize, one: T) -> Self {
        Self::spike(LatticePoint::origin(dim), one)
    }

    pub fn spike(at: LatticePoint, value: T) -> Self {
        let mut s = Self::zero(at.dim());
        s.insert(at, value);
        s
    }

    pub fn from_entries(
        dim: usize,
        entries: impl IntoIterator<Item = (LatticePoint, T)>,
    ) -> Result<Self> {
        let mut s = Self::zero(dim);
        for (p, v) in entries {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            s.accumulate(p, &v);
        }
        Ok(s)
    }

    fn insert(&mut self, p: LatticePoint, v: T) {
        if v.is_zero() {
            self.entries.remove(&p);
        } else {
            self.entries.insert(p, v);
        }
    }

    fn accumulate(&mut self, p: LatticePoint, v: &T) {
        let slot = self.entries.entry(p.clone()).or_insert_with(T::zero);
        slot.add_assign_ref(v);
        if slot.is_zero() {
            self.entries.remove(&p);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, p: &LatticePoint) -> Option<&T> {
        self.entries.get(p)
    }

    pub fn value_at(&self, p: &LatticePoint) -> T {
        self.entries.get(p).cloned().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, &T)> {
        self.entries.iter()
    }

    /// Per-axis `max |α_i|` over the support (zeros for the empty signal).
    pub fn support_radius(&self) -> Vec<i64> {
        let mut r = vec![0; self.dim];
        for p in self.entries.keys() {
            for (ri, c) in r.iter_mut().zip(&p.0) {
                *ri = (*ri).max(c.abs());
            }
        }
        r
    }

    pub fn bounding_box(&self) -> Option<LatticeBox> {
        let mut it = self.entries.keys();
        let first = it.next()?;
        let mut lo = first.0.clone();
        let mut hi = first.0.clone();
        for p in it {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p.0[i]);
                hi[i] = hi[i].max(p.0[i]);
            }
        }
        Some(LatticeBox { lo, hi })
    }

    pub fn total(&self) -> T {
        let mut acc = T::zero();
        for v in self.entries.values() {
            acc.add_assign_ref(v);
        }
        acc
    }

    pub fn map<U: Coefficient>(&self, f: impl Fn(&LatticePoint, &T) -> U) -> LatticeSignal<U> {
        let mut out = LatticeSignal::zero(self.dim);
        for (p, v) in &self.entries {
            out.insert(p.clone(), f(p, v));
        }
        out
    }

    pub fn translate(&self, by: &LatticePoint) -> LatticeSignal<T> {
        LatticeSignal {
            dim: self.dim,
            entries: self.entries.iter().map(|(p, v)| (p.add(by), v.clone())).collect(),
        }
    }

    pub fn scale(&self, k: &T) -> LatticeSignal<T> {
        self.map(|_, v| v.mul_ref(k))
    }

    /// `self + k·other`.
    pub fn add_scaled(&self, other: &LatticeSignal<T>, k: &T) -> Result<LatticeSignal<T>> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        for (p, v) in &other.entries {
            out.accumulate(p.clone(), &v.mul_ref(k));
        }
        Ok(out)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// `(a∗b)_α = Σ_β a_β b_{α−β}`.
pub fn convolve<T: Coefficient>(a: &LatticeSignal<T>, b: &LatticeSignal<T>) -> Result<LatticeSignal<T>> {
    check_dim(a.dim, b.dim)?;
    let dim = a.dim;
    let (Some(ba), Some(bb)) = (a.bounding_box(), b.bounding_box()) else {
        return Ok(LatticeSignal::zero(dim));
    };
    let out_box = LatticeBox {
        lo: ba.lo.iter().zip(&bb.lo).map(|(x, y)| x + y).collect(),
        hi: ba.hi.iter().zip(&bb.hi).map(|(x, y)| x + y).collect(),
    };
    let dense = out_box.volume();
    let pairs = (a.len() as u128) * (b.len() as u128);
    if dense <= 4 * pairs + 4096 {
        let mut buf = vec![T::zero(); dense as usize];
        for (pa, va) in &a.entries {
            for (pb, vb) in &b.entries {
                let idx = out_box.index_of(&pa.add(pb)).expect("sum lies in the output box");
                buf[idx].add_assign_ref(&va.mul_ref(vb));
            }
        }
        let mut out = LatticeSignal::zero(dim);
        for (i, v) in buf.into_iter().enumerate() {
            if !v.is_zero() {
                out.entries.insert(out_box.point_at(i), v);
            }
        }
        Ok(out)
    } else {
        let mut out = LatticeSignal::zero(dim);
        for (pa, va) in &a.entries {
            for (pb, vb) in &b.entries {
                out.accumulate(pa.add(pb), &va.mul_ref(vb));
            }
        }
        Ok(out)
    }
}

/// `a^{∗n}` by repeated squaring; `one` seeds the identity `δ₀`.
pub fn signal_power<T: Coefficient>(a: &LatticeSignal<T>, n: u64, one: T) -> LatticeSignal<T> {
    let mut result = LatticeSignal::delta(a.dim, one);
    let mut base = a.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve(&result, &base).expect("same dimension");
        }
        e >>= 1;
        if e > 0 {
            base = convolve(&base, &base).expect("same dimension");
        }
    }
    result
}

/// Finite-support probability vector on `Z^d` with exact weights.
///
/// The support is kept in lexicographic order, which fixes the
/// enumeration `j ↦ β^(j)` used by the baker map.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkDistribution {
    dim: usize,
    support: Vec<(LatticePoint, Rational)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkEntry {
    pub beta: Vec<i64>,
    #[serde(with = "crate::rational")]
    pub p: Rational,
}

/// JSON form: `{"dim": d, "support": [{"beta": [..], "p": "num/den"}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkSpec {
    pub dim: usize,
    pub support: Vec<WalkEntry>,
}

impl WalkDistribution {
    /// Validated constructor; requires at least two support points.
    pub fn new(dim: usize, support: Vec<(LatticePoint, Rational)>) -> Result<Self> {
        let w = Self::new_allow_trivial(dim, support)?;
        if w.len() < 2 {
            return Err(Error::InvalidDistribution(
                "support must contain at least two points".into(),
            ));
        }
        Ok(w)
    }

    /// Same checks as [`WalkDistribution::new`] but accepts a single
    /// support point. Useful for lattice-side computations only.
    pub fn new_allow_trivial(dim: usize, mut support: Vec<(LatticePoint, Rational)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be at least 1".into()));
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut total = Rational::zero();
        for (p, w) in &support {
            check_dim(dim, p.dim())?;
            if !w.is_positive() {
                return Err(Error::InvalidDistribution(format!(
                    "weight at {p} is {}, must be positive",
                    rational::format_rational(w)
                )));
            }
            total += w;
        }
        if !total.is_one() {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {}, not 1",
                rational::format_rational(&total)
            )));
        }
        support.sort_by(|a, b| a.0.cmp(&b.0));
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidDistribution("repeated support point".into()));
        }
        Ok(WalkDistribution { dim, support })
    }

    pub fn from_spec(spec: &WalkSpec) -> Result<Self> {
        Self::new(
            spec.dim,
            spec.support
                .iter()
                .map(|e| (LatticePoint(e.beta.clone()), e.p.clone()))
                .collect(),
        )
    }

    pub fn to_spec(&self) -> WalkSpec {
        WalkSpec {
            dim: self.dim,
            support: self
                .support
                .iter()
                .map(|(b, p)| WalkEntry {
                    beta: b.0.clone(),
                    p: p.clone(),
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Support size `N`.
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[(LatticePoint, Rational)] {
        &self.support
    }

    pub fn step(&self, j: usize) -> &LatticePoint {
        &self.support[j].0
    }

    pub fn weight(&self, j: usize) -> &Rational {
        &self.support[j].1
    }

    /// `λ = max p_β`.
    pub fn max_weight(&self) -> &Rational {
        self.support.iter().map(|(_, w)| w).max().expect("nonempty")
    }

    /// `max_β |β|_∞`.
    pub fn max_step(&self) -> i64 {
        self.support.iter().map(|(b, _)| b.sup_norm()).max().unwrap_or(0)
    }

    pub fn as_signal(&self) -> LatticeSignal<Rational> {
        LatticeSignal::from_entries(self.dim, self.support.iter().cloned()).expect("dims checked")
    }

    pub fn as_f64_signal(&self) -> LatticeSignal<f64> {
        self.as_signal().map(|_, v| rational::to_f64(v))
    }

    /// The same law translated by `γ` (every step shifted).
    pub fn translated(&self, by: &LatticePoint) -> WalkDistribution {
        let support = self.support.iter().map(|(b, w)| (b.add(by), w.clone())).collect();
        WalkDistribution::new_allow_trivial(self.dim, support).expect("translation keeps validity")
    }
}

/// `p^(n)`, exact. Weights are scaled to integers over their common
/// denominator so that the powers run in `BigInt`.
pub fn convolution_power(p: &WalkDistribution, n: u64) -> LatticeSignal<Rational> {
    let den = rational::lcm_denominators(p.support.iter().map(|(_, w)| w));
    let ints = LatticeSignal::from_entries(
        p.dim,
        p.support
            .iter()
            .map(|(b, w)| (b.clone(), (w * Rational::from_integer(den.clone())).to_integer())),
    )
    .expect("dims checked");
    let pow = signal_power(&ints, n, BigInt::one());
    let scale = num_traits::pow(den, n as usize);
    pow.map(|_, v| Rational::new(v.clone(), scale.clone()))
}

/// Naive iterated convolution; kept as an independent reference path.
pub fn convolution_power_naive(p: &WalkDistribution, n: u64) -> LatticeSignal<Rational> {
    let step = p.as_signal();
    let mut acc = LatticeSignal::delta(p.dim, Rational::one());
    for _ in 0..n {
        acc = convolve(&acc, &step).expect("same dimension");
    }
    acc
}

/// Drift `v = Σ β p_β`.
pub fn drift(p: &WalkDistribution) -> Vec<Rational> {
    let mut v = vec![Rational::zero(); p.dim];
    for (b, w) in &p.support {
        for (vi, bi) in v.iter_mut().zip(&b.0) {
            *vi += w * Rational::from_integer(BigInt::from(*bi));
        }
    }
    v
}

/// `Σ_β |β|^k p_β` with `|·|` Euclidean; even orders are summed exactly.
pub fn moment(p: &WalkDistribution, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("moment order must be positive".into()));
    }
    if k.is_multiple_of(2) {
        let mut acc = Rational::zero();
        for (b, w) in &p.support {
            let sq = BigInt::from(b.norm_sq());
            acc += w * Rational::from_integer(num_traits::pow(sq, (k / 2) as usize));
        }
        Ok(rational::to_f64(&acc))
    } else {
        Ok(p.support
            .iter()
            .map(|(b, w)| (b.norm_sq() as f64).sqrt().powi(k as i32) * rational::to_f64(w))
            .sum())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum SpanVerdict {
    FullLattice,
    /// Canonical (Hermite) basis of the proper sublattice.
    Sublattice { basis: Vec<LatticePoint> },
}

impl SpanVerdict {
    pub fn is_full(&self) -> bool {
        matches!(self, SpanVerdict::FullLattice)
    }
}

/// Column-style Hermite normal form of the integer matrix whose columns
/// are `cols` (each of length `rows`). Returns the nonzero columns: lower
/// echelon, positive pivots, entries left of each pivot reduced into
/// `[0, pivot)`. The result depends only on the lattice spanned.
pub fn hermite_basis(rows: usize, cols: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut m: Vec<Vec<i128>> = cols.iter().map(|c| c.iter().map(|&x| x as i128).collect()).collect();
    let ncols = m.len();
    let mut pivot_col = 0usize;
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    for row in 0..rows {
        if pivot_col >= ncols {
            break;
        }
        // Euclid on the columns pivot_col.. until a single nonzero remains in `row`.
        loop {
            let mut best: Option<usize> = None;
            for c in pivot_col..ncols {
                if m[c][row] != 0 && best.is_none_or(|b| m[c][row].abs() < m[b][row].abs()) {
                    best = Some(c);
                }
            }
            let Some(b) = best else { break };
            m.swap(pivot_col, b);
            let mut done = true;
            for c in pivot_col + 1..ncols {
                if m[c][row] != 0 {
                    let q = Integer::div_floor(&m[c][row], &m[pivot_col][row]);
                    for r in 0..rows {
                        m[c][r] -= q * m[pivot_col][r];
                    }
                    if m[c][row] != 0 {
                        done = false;
                    }
                }
            }
            if done {
                break;
            }
        }
        if m[pivot_col][row] == 0 {
            continue;
        }
        if m[pivot_col][row] < 0 {
            for r in 0..rows {
                m[pivot_col][r] = -m[pivot_col][r];
            }
        }
        let piv = m[pivot_col][row];
        for c in 0..pivot_col {
            let q = Integer::div_floor(&m[c][row], &piv);
            if q != 0 {
                for r in 0..rows {
                    m[c][r] -= q * m[pivot_col][r];
                }
            }
        }
        pivots.push((row, pivot_col));
        pivot_col += 1;
    }
    m.truncate(pivot_col);
    m.into_iter()
        .map(|c| c.into_iter().map(|x| x as i64).collect())
        .collect()
}

/// Differences `β^(j) − β^(base)` for every `j ≠ base`.
pub fn support_differences(p: &WalkDistribution, base: usize) -> Vec<Vec<i64>> {
    let b0 = p.step(base);
    (0..p.len())
        .filter(|&j| j != base)
        .map(|j| p.step(j).sub(b0).0)
        .collect()
}

/// Whether `span_Z{β^(j) − β^(j')}` is all of `Z^d`, using `j' = 0`.
pub fn span_check(p: &WalkDistribution) -> SpanVerdict {
    span_check_from(p, 0)
}

/// [`span_check`] with an explicit base index `j'`.
pub fn span_check_from(p: &WalkDistribution, base: usize) -> SpanVerdict {
    let basis = hermite_basis(p.dim, &support_differences(p, base));
    let full = basis.len() == p.dim && (0..p.dim).all(|i| basis[i][i] == 1);
    if full {
        SpanVerdict::FullLattice
    } else {
        SpanVerdict::Sublattice {
            basis: basis.into_iter().map(LatticePoint).collect(),
        }
    }
}

/// `μ(T V_r △ V_r)/μ(V_r)` for `V_r = B_{0,r} × [0,1)²`.
///
/// For each step `β` the number of sites of the box that leave it, which
/// equals the number of outside sites that enter it, is
/// `(2r+1)^d − Π_i max(0, 2r+1−|β_i|)`.
pub fn a1_defect(p: &WalkDistribution, r: u64) -> Result<Rational> {
    if r == 0 {
        return Err(Error::InvalidParameter("box radius must be at least 1".into()));
    }
    let side = BigInt::from(2 * r + 1);
    let vol = num_traits::pow(side.clone(), p.dim);
    let mut acc = Rational::zero();
    for (b, w) in &p.support {
        let inner: BigInt = b
            .0
            .iter()
            .map(|bi| {
                let s = (2 * r + 1) as i128 - bi.abs() as i128;
                BigInt::from(s.max(0))
            })
            .product();
        let leaving = &vol - inner;
        acc += w * Rational::from_integer(leaving * 2);
    }
    Ok(acc / Rational::from_integer(vol))
}

/// The constant `d·Σ_β p_β|β|_∞` bounding `r·a1_defect(p, r)`.
pub fn a1_bound_constant(p: &WalkDistribution) -> Rational {
    let s: Rational = p
        .support
        .iter()
        .map(|(b, w)| w * Rational::from_integer(BigInt::from(b.sup_norm())))
        .sum();
    s * Rational::from_integer(BigInt::from(p.dim))
}

pub fn weights_f64(p: &WalkDistribution) -> Vec<f64> {
    p.support.iter().map(|(_, w)| w.to_f64().unwrap_or(f64::NAN)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::rational::{int, rat};

    fn pt(c: &[i64]) -> LatticePoint {
        LatticePoint(c.to_vec())
    }

    fn walk(dim: usize, s: &[(&[i64], (i64, i64))]) -> WalkDistribution {
        WalkDistribution::new_allow_trivial(
            dim,
            s.iter().map(|(b, (n, d))| (pt(b), rat(*n, *d))).collect(),
        )
        .unwrap()
    }

    #[test]
    fn delta_is_identity() {
        let a = LatticeSignal::from_entries(1, [(pt(&[-2]), rat(1, 5)), (pt(&[3]), rat(-7, 2))]).unwrap();
        let d = LatticeSignal::delta(1, Rational::one());
        assert_eq!(convolve(&d, &a).unwrap(), a);
    }

    #[test]
    fn third_walk_square() {
        let p = presets::third_walk();
        let pp = convolve(&p.as_signal(), &p.as_signal()).unwrap();
        assert_eq!(pp.value_at(&pt(&[0])), rat(1, 3));
        assert_eq!(pp.value_at(&pt(&[2])), rat(1, 9));
        let p2 = convolution_power(&p, 2);
        assert_eq!(p2.value_at(&pt(&[1])), rat(2, 9));
        assert_eq!(p2.value_at(&pt(&[-2])), rat(1, 9));
    }

    #[test]
    fn mass_is_multiplicative() {
        let a = LatticeSignal::from_entries(2, [(pt(&[0, 1]), rat(1, 2)), (pt(&[4, -1]), rat(3, 2))]).unwrap();
        let b = LatticeSignal::from_entries(2, [(pt(&[1, 1]), rat(2, 3)), (pt(&[0, 0]), rat(1, 7))]).unwrap();
        let c = convolve(&a, &b).unwrap();
        assert_eq!(c.total(), a.total() * b.total());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = LatticeSignal::delta(1, Rational::one());
        let b = LatticeSignal::delta(2, Rational::one());
        assert!(matches!(convolve(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn power_edge_cases() {
        let p = presets::lazy_2d();
        assert_eq!(convolution_power(&p, 0), LatticeSignal::delta(2, Rational::one()));
        assert_eq!(convolution_power(&p, 1), p.as_signal());
    }

    #[test]
    fn sparse_convolution_falls_back_to_map() {
        let a = LatticeSignal::from_entries(1, [(pt(&[-100000]), int(1)), (pt(&[100000]), int(2))]).unwrap();
        let c = convolve(&a, &a).unwrap();
        assert_eq!(c.value_at(&pt(&[0])), int(4));
        assert_eq!(c.value_at(&pt(&[200000])), int(4));
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn drift_examples() {
        assert_eq!(drift(&presets::third_walk()), vec![int(0)]);
        assert_eq!(drift(&walk(1, &[(&[1], (1, 1))])), vec![int(1)]);
        assert_eq!(drift(&presets::drifted_1d()), vec![rat(1, 3)]);
    }

    #[test]
    fn moment_examples() {
        let p = walk(2, &[(&[0, 0], (1, 2)), (&[1, 0], (1, 2))]);
        assert!((moment(&p, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((moment(&presets::third_walk(), 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(moment(&presets::lazy_2d(), 7).unwrap().is_finite());
        assert!(moment(&p, 0).is_err());
    }

    #[test]
    fn span_examples() {
        let p = walk(2, &[(&[0, 0], (1, 3)), (&[1, 0], (1, 3)), (&[0, 1], (1, 3))]);
        assert_eq!(span_check(&p), SpanVerdict::FullLattice);
        assert_eq!(
            span_check(&presets::reducible_1d()),
            SpanVerdict::Sublattice { basis: vec![pt(&[2])] }
        );
        let q = walk(2, &[(&[0, 0], (1, 2)), (&[2, 2], (1, 4)), (&[1, 3], (1, 4))]);
        assert_eq!(span_check_from(&q, 0), span_check_from(&q, 1));
        assert_eq!(span_check_from(&q, 0), span_check_from(&q, 2));
        assert!(!span_check(&q).is_full());
    }

    #[test]
    fn hermite_basis_is_canonical() {
        let a = hermite_basis(2, &[vec![2, 0], vec![0, 3], vec![4, 3]]);
        let b = hermite_basis(2, &[vec![2, 3], vec![2, 0]]);
        assert_eq!(a, b);
        assert_eq!(hermite_basis(2, &[vec![1, 0], vec![1, 1]]), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(hermite_basis(2, &[vec![3, 6], vec![5, 10]]), vec![vec![1, 2]]);
    }

    #[test]
    fn a1_examples() {
        let still = walk(1, &[(&[0], (1, 1))]);
        assert_eq!(a1_defect(&still, 5).unwrap(), int(0));
        assert_eq!(a1_defect(&presets::third_walk(), 10).unwrap(), rat(4, 63));
        assert!(a1_defect(&still, 0).is_err());
    }

    /// Direct double sum over sites of an enlarged window.
    fn a1_brute(p: &WalkDistribution, r: i64) -> Rational {
        let inner = LatticeBox::cube(&LatticePoint::origin(p.dim()), r);
        let window = inner.grow(p.max_step() + 1);
        let mut acc = Rational::zero();
        for a in window.points() {
            for (b, w) in p.support() {
                let inside_now = inner.contains(&a);
                let inside_next = inner.contains(&a.add(b));
                if inside_now != inside_next {
                    acc += w;
                }
            }
        }
        acc / Rational::from_integer(BigInt::from(inner.volume() as u64))
    }

    #[test]
    fn a1_matches_brute_force() {
        for p in [presets::third_walk(), presets::drifted_1d(), presets::reducible_1d(), presets::lazy_2d()] {
            for r in [1, 2, 3, 7] {
                assert_eq!(a1_defect(&p, r as u64).unwrap(), a1_brute(&p, r));
            }
        }
        let odd = walk(2, &[(&[3, -1], (1, 2)), (&[0, 0], (1, 4)), (&[-1, 2], (1, 4))]);
        for r in [1, 2, 5] {
            assert_eq!(a1_defect(&odd, r as u64).unwrap(), a1_brute(&odd, r));
        }
    }

    #[test]
    fn walk_validation() {
        assert!(WalkDistribution::new(1, vec![(pt(&[0]), int(1))]).is_err());
        assert!(WalkDistribution::new(1, vec![(pt(&[0]), rat(1, 2)), (pt(&[1]), rat(1, 3))]).is_err());
        assert!(WalkDistribution::new(1, vec![(pt(&[0]), rat(3, 2)), (pt(&[1]), rat(-1, 2))]).is_err());
        assert!(WalkDistribution::new(1, vec![(pt(&[0]), rat(1, 2)), (pt(&[0]), rat(1, 2))]).is_err());
        assert!(WalkDistribution::new(2, vec![(pt(&[0]), rat(1, 2)), (pt(&[1]), rat(1, 2))]).is_err());
        let w = WalkDistribution::new(1, vec![(pt(&[1]), rat(1, 2)), (pt(&[-1]), rat(1, 2))]).unwrap();
        assert_eq!(w.step(0), &pt(&[-1]));
    }

    #[test]
    fn walk_json_round_trip() {
        let p = presets::drifted_1d();
        let js = serde_json::to_string(&p.to_spec()).unwrap();
        assert!(js.contains("\"p\":\"2/3\""));
        let back = WalkDistribution::from_spec(&serde_json::from_str(&js).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
