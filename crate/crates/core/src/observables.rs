//! Global and local observables.
//!
//! Site functions carry a tail model, and every computation goes through
//! one of two exact representations:
//!
//! * periodic: `f(α) = h(α mod P)` for a table `h` over the period cell;
//! * clamped: `f(α) = h(clamp(α))` with `clamp` projecting coordinatewise
//!   onto `[−K, K]`.
//!
//! Constant-outside-a-box and orthant-eventually-constant observables are
//! clamped observables, and the clamped class is closed under evolution by
//! a finite-support walk (the radius grows by the step range). Box sums
//! are evaluated by counting, per axis, how many box coordinates fall on
//! each table coordinate, so their cost does not depend on the box radius.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{convolution_power, LatticeBox, LatticePoint, LatticeSignal, WalkDistribution};
use crate::phase::{BakerMap, PhasePoint, Strip, DEFAULT_ITINERARY_BUDGET};
use crate::rational::{self, Rational, RationalText};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BoxFamily {
    /// All boxes `B_{γ,r}`.
    TranslationInvariant,
    /// Only boxes centered at the origin.
    CenteredOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TailModel {
    /// `table` is row-major over `[0, period_1) × … × [0, period_d)`.
    Periodic { period: Vec<i64>, table: Vec<Rational> },
    /// `table` is row-major over `region`; the value is `value` elsewhere.
    ConstantOutsideBox {
        value: Rational,
        region: LatticeBox,
        table: Vec<Rational>,
    },
    /// Outside `region` the value depends only on the orthant. Orthant
    /// index: bit `i` is set when `α_i ≥ 0`.
    OrthantEventuallyConstant {
        constants: Vec<Rational>,
        region: LatticeBox,
        table: Vec<Rational>,
    },
    /// `f(α) = table(clamp(α))`, table row-major over `[−radius, radius]^d`.
    Clamped { radius: i64, table: Vec<Rational> },
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Periodic { period: Vec<i64>, table: Vec<Rational> },
    Clamped { radius: i64, table: Vec<Rational> },
}

fn row_major(shape: &[i64], coords: impl Iterator<Item = i64>) -> usize {
    shape
        .iter()
        .zip(coords)
        .fold(0usize, |acc, (s, c)| acc * *s as usize + c as usize)
}

fn unravel(shape: &[i64], mut idx: usize) -> Vec<i64> {
    let mut out = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        let s = shape[i] as usize;
        out[i] = (idx % s) as i64;
        idx /= s;
    }
    out
}

fn count_residue(lo: i64, hi: i64, c: i64, period: i64) -> i64 {
    if lo > hi {
        return 0;
    }
    (hi - c).div_euclid(period) - (lo - 1 - c).div_euclid(period)
}

/// Coordinates `x` with `clamp_K(x) = κ`, as an inclusive interval.
fn clamp_preimage(kappa: i64, radius: i64) -> (i64, i64) {
    let lo = if kappa == -radius { i64::MIN / 4 } else { kappa };
    let hi = if kappa == radius { i64::MAX / 4 } else { kappa };
    (lo, hi)
}

fn periodic_sum(period: &[i64], table: &[Rational], lo: &[i64], hi: &[i64]) -> Rational {
    let counts: Vec<Vec<i64>> = period
        .iter()
        .enumerate()
        .map(|(i, &p)| (0..p).map(|c| count_residue(lo[i], hi[i], c, p)).collect())
        .collect();
    let mut acc = BigInt::zero();
    let mut den = BigInt::one();
    let mut terms = Rational::zero();
    for (idx, h) in table.iter().enumerate() {
        if h.is_zero() {
            continue;
        }
        let cell = unravel(period, idx);
        let mult: i128 = cell
            .iter()
            .enumerate()
            .map(|(i, c)| counts[i][*c as usize] as i128)
            .product();
        if mult == 0 {
            continue;
        }
        if h.denom() == &den {
            acc += h.numer() * BigInt::from(mult);
        } else {
            terms += Rational::new(acc.clone(), den.clone());
            acc = h.numer() * BigInt::from(mult);
            den = h.denom().clone();
        }
    }
    terms + Rational::new(acc, den)
}

impl Repr {
    fn table(&self) -> &[Rational] {
        match self {
            Repr::Periodic { table, .. } | Repr::Clamped { table, .. } => table,
        }
    }

    fn value(&self, alpha: &[i64]) -> &Rational {
        match self {
            Repr::Periodic { period, table } => {
                let idx = row_major(period, alpha.iter().zip(period).map(|(a, p)| a.rem_euclid(*p)));
                &table[idx]
            }
            Repr::Clamped { radius, table } => {
                let k = *radius;
                let shape = vec![2 * k + 1; alpha.len()];
                let idx = row_major(&shape, alpha.iter().map(|a| a.clamp(&-k, &k) + k));
                &table[idx]
            }
        }
    }

    fn clamped_to(&self, dim: usize, new_radius: i64) -> Repr {
        let Repr::Clamped { radius, .. } = self else {
            unreachable!("only clamped tables are re-tabulated")
        };
        debug_assert!(new_radius >= *radius);
        let shape = vec![2 * new_radius + 1; dim];
        let size: usize = shape.iter().product::<i64>() as usize;
        let table = (0..size)
            .map(|i| {
                let p: Vec<i64> = unravel(&shape, i).iter().map(|c| c - new_radius).collect();
                self.value(&p).clone()
            })
            .collect();
        Repr::Clamped {
            radius: new_radius,
            table,
        }
    }

    fn periodic_to(&self, new_period: &[i64]) -> Repr {
        let size: usize = new_period.iter().product::<i64>() as usize;
        let table = (0..size).map(|i| self.value(&unravel(new_period, i)).clone()).collect();
        Repr::Periodic {
            period: new_period.to_vec(),
            table,
        }
    }

    fn sum_over(&self, dim: usize, lo: &[i64], hi: &[i64]) -> Rational {
        match self {
            Repr::Periodic { period, table } => periodic_sum(period, table, lo, hi),
            Repr::Clamped { radius, table } => {
                let k = *radius;
                let shape = vec![2 * k + 1; dim];
                let counts: Vec<Vec<i64>> = (0..dim)
                    .map(|i| {
                        (-k..=k)
                            .map(|kappa| {
                                let (a, b) = clamp_preimage(kappa, k);
                                (hi[i].min(b) - lo[i].max(a) + 1).max(0)
                            })
                            .collect()
                    })
                    .collect();
                let mut total = Rational::zero();
                for (idx, h) in table.iter().enumerate() {
                    if h.is_zero() {
                        continue;
                    }
                    let cell = unravel(&shape, idx);
                    let mult: i128 = cell
                        .iter()
                        .enumerate()
                        .map(|(i, c)| counts[i][*c as usize] as i128)
                        .product();
                    if mult != 0 {
                        total += h * Rational::from_integer(BigInt::from(mult));
                    }
                }
                total
            }
        }
    }

    fn product(&self, other: &Repr, dim: usize) -> Option<Repr> {
        match (self, other) {
            (Repr::Periodic { period: a, .. }, Repr::Periodic { period: b, .. }) => {
                let joint: Vec<i64> = a.iter().zip(b).map(|(x, y)| x.lcm(y)).collect();
                let (Repr::Periodic { table: ta, .. }, Repr::Periodic { table: tb, .. }) =
                    (self.periodic_to(&joint), other.periodic_to(&joint))
                else {
                    unreachable!()
                };
                Some(Repr::Periodic {
                    period: joint,
                    table: ta.iter().zip(&tb).map(|(x, y)| x * y).collect(),
                })
            }
            (Repr::Clamped { radius: a, .. }, Repr::Clamped { radius: b, .. }) => {
                let k = *a.max(b);
                let (Repr::Clamped { table: ta, .. }, Repr::Clamped { table: tb, .. }) =
                    (self.clamped_to(dim, k), other.clamped_to(dim, k))
                else {
                    unreachable!()
                };
                Some(Repr::Clamped {
                    radius: k,
                    table: ta.iter().zip(&tb).map(|(x, y)| x * y).collect(),
                })
            }
            _ => None,
        }
    }

    /// `Σ_{α ∈ [lo, hi]} self(α)·other(α)`.
    fn product_sum(&self, other: &Repr, dim: usize, lo: &[i64], hi: &[i64]) -> Rational {
        if let Some(joint) = self.product(other, dim) {
            return joint.sum_over(dim, lo, hi);
        }
        let (per, clamped) = match (self, other) {
            (Repr::Periodic { .. }, Repr::Clamped { .. }) => (self, other),
            _ => (other, self),
        };
        let (Repr::Periodic { period, table: pt }, Repr::Clamped { radius, table: ct }) = (per, clamped) else {
            unreachable!()
        };
        let k = *radius;
        let shape = vec![2 * k + 1; dim];
        let mut total = Rational::zero();
        for (idx, h) in ct.iter().enumerate() {
            if h.is_zero() {
                continue;
            }
            let kappa: Vec<i64> = unravel(&shape, idx).iter().map(|c| c - k).collect();
            let mut sub_lo = Vec::with_capacity(dim);
            let mut sub_hi = Vec::with_capacity(dim);
            let mut empty = false;
            for i in 0..dim {
                let (a, b) = clamp_preimage(kappa[i], k);
                let (l, u) = (lo[i].max(a), hi[i].min(b));
                empty |= l > u;
                sub_lo.push(l);
                sub_hi.push(u);
            }
            if !empty {
                total += h * periodic_sum(period, pt, &sub_lo, &sub_hi);
            }
        }
        total
    }

    fn corners(&self, dim: usize) -> Vec<Rational> {
        match self {
            Repr::Periodic { .. } => Vec::new(),
            Repr::Clamped { radius, .. } => (0..1usize << dim)
                .map(|bits| {
                    let p: Vec<i64> = (0..dim)
                        .map(|i| if bits >> i & 1 == 1 { *radius } else { -*radius })
                        .collect();
                    self.value(&p).clone()
                })
                .collect(),
        }
    }

    /// `α ↦ Σ_β w_β self(α + β)`.
    /// Periodic evolution by a kernel already folded onto the period cell.
    fn evolve_folded(&self, folded: &[Rational]) -> Repr {
        let Repr::Periodic { period, table } = self else {
            unreachable!("folded kernels apply to periodic tables only")
        };
        let terms: Vec<(Vec<i64>, &Rational)> = folded
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_zero())
            .map(|(i, w)| (unravel(period, i), w))
            .collect();
        let new_table = (0..table.len())
            .map(|i| {
                let gamma = unravel(period, i);
                terms.iter().fold(Rational::zero(), |acc, (c, w)| {
                    let p: Vec<i64> = gamma.iter().zip(c).map(|(g, c)| g + c).collect();
                    acc + *w * self.value(&p)
                })
            })
            .collect();
        Repr::Periodic {
            period: period.clone(),
            table: new_table,
        }
    }

    fn evolve(&self, dim: usize, kernel: &LatticeSignal<Rational>) -> Repr {
        match self {
            Repr::Periodic { period, .. } => {
                let size: usize = period.iter().product::<i64>() as usize;
                let mut folded = vec![Rational::zero(); size];
                for (beta, w) in kernel.iter() {
                    folded[row_major(period, beta.0.iter().zip(period).map(|(b, p)| b.rem_euclid(*p)))] += w;
                }
                self.evolve_folded(&folded)
            }
            Repr::Clamped { radius, .. } => {
                let reach = kernel.support_radius().into_iter().max().unwrap_or(0);
                let k = radius + reach;
                let shape = vec![2 * k + 1; dim];
                let size: usize = shape.iter().product::<i64>() as usize;
                let new_table = (0..size)
                    .map(|i| {
                        let gamma: Vec<i64> = unravel(&shape, i).iter().map(|c| c - k).collect();
                        kernel.iter().fold(Rational::zero(), |acc, (beta, w)| {
                            let p: Vec<i64> = gamma.iter().zip(&beta.0).map(|(g, b)| g + b).collect();
                            acc + w * self.value(&p)
                        })
                    })
                    .collect();
                Repr::Clamped {
                    radius: k,
                    table: new_table,
                }
            }
        }
    }
}

/// A bounded site function `α ↦ f_α` with a declared tail model.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteObservable {
    dim: usize,
    model: TailModel,
    repr: Repr,
}

fn table_size(shape: &[i64]) -> Result<usize> {
    let mut n: usize = 1;
    for s in shape {
        if *s < 1 {
            return Err(Error::InvalidObservable("table axes must be positive".into()));
        }
        n = n
            .checked_mul(*s as usize)
            .filter(|n| *n <= 1 << 26)
            .ok_or_else(|| Error::InvalidObservable("table too large".into()))?;
    }
    Ok(n)
}

fn orthant_index(alpha: &[i64]) -> usize {
    alpha
        .iter()
        .enumerate()
        .map(|(i, a)| if *a >= 0 { 1usize << i } else { 0 })
        .sum()
}

impl SiteObservable {
    pub fn new(dim: usize, model: TailModel) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidObservable("dimension must be at least 1".into()));
        }
        let repr = match &model {
            TailModel::Periodic { period, table } => {
                if period.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: period.len(),
                    });
                }
                if table.len() != table_size(period)? {
                    return Err(Error::InvalidObservable("periodic table does not fill the period cell".into()));
                }
                Repr::Periodic {
                    period: period.clone(),
                    table: table.clone(),
                }
            }
            TailModel::ConstantOutsideBox { value, region, table } => {
                let value = value.clone();
                Self::clamped_from_region(dim, region, table, move |_| value.clone())?
            }
            TailModel::OrthantEventuallyConstant {
                constants,
                region,
                table,
            } => {
                if constants.len() != 1 << dim {
                    return Err(Error::InvalidObservable(format!(
                        "expected {} orthant constants, found {}",
                        1 << dim,
                        constants.len()
                    )));
                }
                let constants = constants.clone();
                Self::clamped_from_region(dim, region, table, move |a| constants[orthant_index(a)].clone())?
            }
            TailModel::Clamped { radius, table } => {
                if *radius < 0 || table.len() != table_size(&vec![2 * radius + 1; dim])? {
                    return Err(Error::InvalidObservable("clamped table does not fill [-K, K]^d".into()));
                }
                Repr::Clamped {
                    radius: *radius,
                    table: table.clone(),
                }
            }
        };
        Ok(SiteObservable { dim, model, repr })
    }

    fn clamped_from_region(
        dim: usize,
        region: &LatticeBox,
        table: &[Rational],
        outside: impl Fn(&[i64]) -> Rational,
    ) -> Result<Repr> {
        if region.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: region.dim(),
            });
        }
        let shape: Vec<i64> = (0..dim).map(|i| region.side(i)).collect();
        if table.len() != table_size(&shape)? {
            return Err(Error::InvalidObservable("box table does not fill its box".into()));
        }
        let radius = region
            .lo
            .iter()
            .chain(&region.hi)
            .map(|c| c.abs())
            .max()
            .unwrap_or(0)
            + 1;
        let full = vec![2 * radius + 1; dim];
        let size = table_size(&full)?;
        let values = (0..size)
            .map(|i| {
                let p = LatticePoint(unravel(&full, i).iter().map(|c| c - radius).collect());
                match region.index_of(&p) {
                    Some(j) => table[j].clone(),
                    None => outside(&p.0),
                }
            })
            .collect();
        Ok(Repr::Clamped { radius, table: values })
    }

    pub fn constant(dim: usize, value: Rational) -> Self {
        Self::new(
            dim,
            TailModel::Periodic {
                period: vec![1; dim],
                table: vec![value],
            },
        )
        .expect("constant observable")
    }

    /// `f(α) = h(α mod period)` for a rule `h` on the period cell.
    pub fn periodic_from_fn(period: Vec<i64>, h: impl Fn(&[i64]) -> Rational) -> Result<Self> {
        let size = table_size(&period)?;
        let table = (0..size).map(|i| h(&unravel(&period, i))).collect();
        Self::new(period.len(), TailModel::Periodic { period, table })
    }

    /// `(−1)^{α_1 + … + α_d}`.
    pub fn parity(dim: usize) -> Self {
        Self::periodic_from_fn(vec![2; dim], |c| {
            if c.iter().sum::<i64>() % 2 == 0 {
                Rational::one()
            } else {
                -Rational::one()
            }
        })
        .expect("parity observable")
    }

    /// Indicator of sites with all coordinates even.
    pub fn even_sites(dim: usize) -> Self {
        Self::periodic_from_fn(vec![2; dim], |c| {
            if c.iter().all(|x| x % 2 == 0) {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .expect("even-site observable")
    }

    /// `−1` for `α < 0`, `+1` for `α ≥ 0`, on `Z`.
    pub fn sign1d() -> Self {
        Self::new(
            1,
            TailModel::OrthantEventuallyConstant {
                constants: vec![-Rational::one(), Rational::one()],
                region: LatticeBox::new(vec![0], vec![0]).expect("unit box"),
                table: vec![Rational::one()],
            },
        )
        .expect("sign observable")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &TailModel {
        &self.model
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.repr, Repr::Periodic { .. })
    }

    /// Period vector for periodic observables.
    pub fn period(&self) -> Option<&[i64]> {
        match &self.repr {
            Repr::Periodic { period, .. } => Some(period),
            Repr::Clamped { .. } => None,
        }
    }

    pub fn value_at(&self, alpha: &LatticePoint) -> Rational {
        self.repr.value(&alpha.0).clone()
    }

    pub fn value_f64(&self, alpha: &LatticePoint) -> f64 {
        rational::to_f64(self.repr.value(&alpha.0))
    }

    /// `sup_α |f_α|`, exact.
    pub fn bound(&self) -> Rational {
        self.repr
            .table()
            .iter()
            .map(|v| v.abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// `sup_α |f_α − c|`, exact.
    pub fn sup_deviation(&self, c: &Rational) -> Rational {
        self.repr
            .table()
            .iter()
            .map(|v| (v - c).abs())
            .max()
            .unwrap_or_else(Rational::zero)
    }

    /// Every value the observable takes, with repetition.
    pub fn value_table(&self) -> &[Rational] {
        self.repr.table()
    }

    pub fn analytic_average(&self, family: BoxFamily) -> AverageValue {
        match &self.repr {
            Repr::Periodic { table, .. } => {
                AverageValue::Exact(table.iter().sum::<Rational>() / Rational::from_integer(BigInt::from(table.len())))
            }
            Repr::Clamped { .. } => {
                let corners = self.repr.corners(self.dim);
                match family {
                    BoxFamily::TranslationInvariant => {
                        if corners.iter().all(|c| *c == corners[0]) {
                            AverageValue::Exact(corners[0].clone())
                        } else {
                            AverageValue::NonConvergent
                        }
                    }
                    BoxFamily::CenteredOnly => AverageValue::Exact(
                        corners.iter().sum::<Rational>() / Rational::from_integer(BigInt::from(corners.len())),
                    ),
                }
            }
        }
    }

    /// `Σ_{α ∈ B} f_α`, exact.
    pub fn box_sum(&self, region: &LatticeBox) -> Rational {
        self.repr.sum_over(self.dim, &region.lo, &region.hi)
    }

    /// `Σ_{α ∈ B} f_α g_α`, exact.
    pub fn box_sum_product(&self, other: &SiteObservable, region: &LatticeBox) -> Result<Rational> {
        self.check_dim(other.dim)?;
        Ok(self.repr.product_sum(&other.repr, self.dim, &region.lo, &region.hi))
    }

    /// Pointwise product, when both factors share a representation.
    pub fn product(&self, other: &SiteObservable) -> Result<SiteObservable> {
        self.check_dim(other.dim)?;
        let joint = self.repr.product(&other.repr, self.dim).ok_or_else(|| {
            Error::InvalidObservable("product of a periodic and a clamped observable has no tail model".into())
        })?;
        let model = match &joint {
            Repr::Periodic { period, table } => TailModel::Periodic {
                period: period.clone(),
                table: table.clone(),
            },
            Repr::Clamped { radius, table } => TailModel::Clamped {
                radius: *radius,
                table: table.clone(),
            },
        };
        Ok(SiteObservable {
            dim: self.dim,
            model,
            repr: joint,
        })
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Values on a box as a lattice signal (zeros dropped).
    pub fn restrict(&self, region: &LatticeBox) -> LatticeSignal<Rational> {
        let entries: Vec<(LatticePoint, Rational)> = region
            .points()
            .filter_map(|p| {
                let v = self.value_at(&p);
                (!v.is_zero()).then_some((p, v))
            })
            .collect();
        LatticeSignal::from_entries(self.dim, entries).expect("consistent dimension")
    }

    fn with_evolved(&self, repr: Repr, reach: i64) -> SiteObservable {
        let model = match (&self.model, &repr) {
            (_, Repr::Periodic { period, table }) => TailModel::Periodic {
                period: period.clone(),
                table: table.clone(),
            },
            (TailModel::ConstantOutsideBox { value, region, .. }, _) => {
                let region = region.grow(reach);
                let table = region.points().map(|p| repr.value(&p.0).clone()).collect();
                TailModel::ConstantOutsideBox {
                    value: value.clone(),
                    region,
                    table,
                }
            }
            (TailModel::OrthantEventuallyConstant { constants, .. }, Repr::Clamped { radius, .. }) if self.dim == 1 => {
                let region = LatticeBox::new(vec![-radius + 1], vec![radius - 1]).expect("radius ≥ 1");
                let table = region.points().map(|p| repr.value(&p.0).clone()).collect();
                TailModel::OrthantEventuallyConstant {
                    constants: constants.clone(),
                    region,
                    table,
                }
            }
            (_, Repr::Clamped { radius, table }) => TailModel::Clamped {
                radius: *radius,
                table: table.clone(),
            },
        };
        SiteObservable {
            dim: self.dim,
            model,
            repr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value")]
pub enum AverageValue {
    #[serde(with = "rational")]
    Exact(Rational),
    NonConvergent,
}

impl AverageValue {
    pub fn exact(&self) -> Option<&Rational> {
        match self {
            AverageValue::Exact(v) => Some(v),
            AverageValue::NonConvergent => None,
        }
    }

    pub fn require(&self, what: &str) -> Result<Rational> {
        self.exact()
            .cloned()
            .ok_or_else(|| Error::NotAnalytic(format!("{what} has no infinite-volume average for this family")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AverageEstimate {
    pub value: AverageValue,
    /// At the largest radius: `max_γ |μ_V(F) − value|`, or the spread
    /// `max_γ μ_V(F) − min_γ μ_V(F)` when the value is `NonConvergent`.
    pub uniformity_defect: f64,
    pub radii_used: Vec<u64>,
    pub centers_used: usize,
}

/// `(2r+1)^{−d} Σ_{α ∈ B_{γ,r}} f_α`, exact.
pub fn box_average(f: &SiteObservable, center: &LatticePoint, r: u64) -> Result<Rational> {
    f.check_dim(center.dim())?;
    let region = LatticeBox::cube(center, r as i64);
    Ok(f.box_sum(&region) / volume(f.dim, r))
}

/// `(2r+1)^{−d} Σ_{α ∈ B_{γ,r}} f_α g_α`, exact.
pub fn box_average_product(f: &SiteObservable, g: &SiteObservable, center: &LatticePoint, r: u64) -> Result<Rational> {
    f.check_dim(center.dim())?;
    let region = LatticeBox::cube(center, r as i64);
    Ok(f.box_sum_product(g, &region)? / volume(f.dim, r))
}

pub fn volume(dim: usize, r: u64) -> Rational {
    Rational::from_integer(BigInt::from(2 * r + 1).pow(dim as u32))
}

/// Geometric grid `±2^k` along every direction in `{−1,0,1}^d` up to
/// `|γ|_∞ = 1000`, the origin, and `extra` uniform centers in `[−1000, 1000]^d`.
pub fn default_centers(dim: usize, extra: usize, seed: u64) -> Vec<LatticePoint> {
    let mut out = BTreeSet::new();
    out.insert(LatticePoint::origin(dim));
    let dirs = 3usize.pow(dim as u32);
    for dir in 0..dirs {
        let v: Vec<i64> = (0..dim).map(|i| (dir / 3usize.pow(i as u32) % 3) as i64 - 1).collect();
        if v.iter().all(|c| *c == 0) {
            continue;
        }
        let mut scale = 1i64;
        while scale <= 1000 {
            out.insert(LatticePoint(v.iter().map(|c| c * scale).collect()));
            scale *= 2;
        }
        out.insert(LatticePoint(v.iter().map(|c| c * 1000).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        out.insert(LatticePoint((0..dim).map(|_| rng.gen_range(-1000..=1000)).collect()));
    }
    out.into_iter().collect()
}

pub fn estimate_average(
    f: &SiteObservable,
    family: BoxFamily,
    radii: &[u64],
    centers: &[LatticePoint],
) -> Result<AverageEstimate> {
    let r = *radii
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidParameter("radius schedule is empty".into()))?;
    let origin = [LatticePoint::origin(f.dim)];
    let centers = match family {
        BoxFamily::CenteredOnly => &origin[..],
        BoxFamily::TranslationInvariant if centers.is_empty() => &origin[..],
        BoxFamily::TranslationInvariant => centers,
    };
    let averages = centers
        .iter()
        .map(|c| box_average(f, c, r).map(|v| rational::to_f64(&v)))
        .collect::<Result<Vec<f64>>>()?;
    let value = f.analytic_average(family);
    let uniformity_defect = match value.exact() {
        Some(v) => {
            let v = rational::to_f64(v);
            averages.iter().map(|a| (a - v).abs()).fold(0.0, f64::max)
        }
        None => {
            let hi = averages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = averages.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo
        }
    };
    Ok(AverageEstimate {
        value,
        uniformity_defect,
        radii_used: radii.to_vec(),
        centers_used: centers.len(),
    })
}

/// `α ↦ Σ_β p^(n)_β f_{α+β}`, the site reduction of `F∘Tⁿ`.
/// `p^(n)` folded onto the period cell, by square-and-multiply of the
/// cyclic convolution.
fn folded_power(p: &WalkDistribution, period: &[i64], n: u64) -> Vec<Rational> {
    let size: usize = period.iter().product::<i64>() as usize;
    let cyclic = |a: &[Rational], b: &[Rational]| {
        let mut out = vec![Rational::zero(); size];
        for (i, x) in a.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            let ci = unravel(period, i);
            for (j, y) in b.iter().enumerate().filter(|(_, y)| !y.is_zero()) {
                let cj = unravel(period, j);
                let k = row_major(period, ci.iter().zip(&cj).zip(period).map(|((u, v), q)| (u + v).rem_euclid(*q)));
                out[k] += x * y;
            }
        }
        out
    };
    let mut base = vec![Rational::zero(); size];
    for (beta, w) in p.support() {
        base[row_major(period, beta.0.iter().zip(period).map(|(b, q)| b.rem_euclid(*q)))] += w;
    }
    let mut result = vec![Rational::zero(); size];
    result[0] = Rational::one();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = cyclic(&result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = cyclic(&base, &base);
        }
    }
    result
}

pub fn evolve_site(f: &SiteObservable, p: &WalkDistribution, n: u64) -> Result<SiteObservable> {
    f.check_dim(p.dim())?;
    if n == 0 {
        return Ok(f.clone());
    }
    if let Repr::Periodic { period, .. } = &f.repr {
        let folded = folded_power(p, period, n);
        return Ok(f.with_evolved(f.repr.evolve_folded(&folded), 0));
    }
    let kernel = convolution_power(p, n);
    let reach = kernel.support_radius().into_iter().max().unwrap_or(0);
    Ok(f.with_evolved(f.repr.evolve(f.dim, &kernel), reach))
}

/// `|Av(evolve_site(f, p, n)) − Av(f)|`.
pub fn av_invariance_check(f: &SiteObservable, p: &WalkDistribution, n: u64, family: BoxFamily) -> Result<Rational> {
    let before = f.analytic_average(family).require("observable")?;
    let after = evolve_site(f, p, n)?.analytic_average(family).require("evolved observable")?;
    Ok((after - before).abs())
}

/// Fundamental cell of `S_α`: the `y₂` digits (`backward`) and the `y₁`
/// digits (`forward`) in the partition enumeration, first digit first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub site: LatticePoint,
    pub backward: Vec<usize>,
    pub forward: Vec<usize>,
}

/// A function constant on the cells of depth `(backward_depth,
/// forward_depth)`; cells not listed take the value `outside`.
#[derive(Clone, Debug, PartialEq)]
pub struct CellObservable {
    dim: usize,
    backward_depth: usize,
    forward_depth: usize,
    values: BTreeMap<CellKey, Rational>,
    outside: Rational,
}

impl CellObservable {
    pub fn new(
        dim: usize,
        backward_depth: usize,
        forward_depth: usize,
        values: BTreeMap<CellKey, Rational>,
        outside: Rational,
    ) -> Result<Self> {
        for key in values.keys() {
            if key.site.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: key.site.dim(),
                });
            }
            if key.backward.len() != backward_depth || key.forward.len() != forward_depth {
                return Err(Error::InvalidObservable(format!(
                    "cell at {} has words of lengths ({}, {}), expected ({backward_depth}, {forward_depth})",
                    key.site,
                    key.backward.len(),
                    key.forward.len()
                )));
            }
        }
        Ok(CellObservable {
            dim,
            backward_depth,
            forward_depth,
            values,
            outside,
        })
    }

    /// Indicator of `R_{α₀,k} = {α₀} × [q_k, q_{k+1}) × [0,1)`.
    pub fn rectangle_indicator(site: LatticePoint, k: usize) -> Self {
        let dim = site.dim();
        let mut values = BTreeMap::new();
        values.insert(
            CellKey {
                site,
                backward: vec![],
                forward: vec![k],
            },
            Rational::one(),
        );
        Self::new(dim, 0, 1, values, Rational::zero()).expect("well-formed cell")
    }

    /// A site function restricted to finitely many sites, as a depth-0 cell observable.
    pub fn from_sites(dim: usize, sites: impl IntoIterator<Item = (LatticePoint, Rational)>, outside: Rational) -> Result<Self> {
        let values = sites
            .into_iter()
            .map(|(site, v)| {
                (
                    CellKey {
                        site,
                        backward: vec![],
                        forward: vec![],
                    },
                    v,
                )
            })
            .collect();
        Self::new(dim, 0, 0, values, outside)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backward_depth(&self) -> usize {
        self.backward_depth
    }

    pub fn forward_depth(&self) -> usize {
        self.forward_depth
    }

    pub fn outside(&self) -> &Rational {
        &self.outside
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &Rational)> {
        self.values.iter()
    }

    pub fn value(&self, key: &CellKey) -> &Rational {
        self.values.get(key).unwrap_or(&self.outside)
    }

    pub fn bound(&self) -> Rational {
        self.values
            .values()
            .map(|v| v.abs())
            .chain(std::iter::once(self.outside.abs()))
            .max()
            .expect("nonempty")
    }

    fn check_symbols(&self, map: &BakerMap) -> Result<()> {
        if map.walk().dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: map.walk().dim(),
            });
        }
        let n = map.symbols();
        if self
            .values
            .keys()
            .any(|k| k.backward.iter().chain(&k.forward).any(|s| *s >= n))
        {
            return Err(Error::InvalidObservable(format!("cell word uses a symbol ≥ {n}")));
        }
        Ok(())
    }

    /// Value at a phase point.
    pub fn value_at_point(&self, x: &PhasePoint, map: &BakerMap) -> Rational {
        let key = CellKey {
            site: x.site.clone(),
            backward: digits(map, &x.y2, self.backward_depth),
            forward: digits(map, &x.y1, self.forward_depth),
        };
        self.value(&key).clone()
    }

    /// `∫ F(α, backward, ·) dy₁` over the forward cells.
    pub(crate) fn forward_integral(&self, site: &LatticePoint, backward: &[usize], map: &BakerMap) -> Rational {
        let mut total = Rational::zero();
        for_each_word(map.symbols(), self.forward_depth, |fw| {
            let key = CellKey {
                site: site.clone(),
                backward: backward.to_vec(),
                forward: fw.to_vec(),
            };
            total += map.table().word_interval(fw).1 * self.value(&key);
        });
        total
    }
}

/// First `depth` digits of `y` in the partition expansion.
pub fn digits(map: &BakerMap, y: &Rational, depth: usize) -> Vec<usize> {
    let mut y = y.clone();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        let k = map.table().cell_of(&y);
        y = (&y - map.table().cut(k)) / map.table().width(k);
        out.push(k);
    }
    out
}

pub(crate) fn for_each_word(symbols: usize, depth: usize, mut f: impl FnMut(&[usize])) {
    let mut word = vec![0usize; depth];
    loop {
        f(&word);
        let mut i = depth;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            word[i] += 1;
            if word[i] < symbols {
                break;
            }
            word[i] = 0;
        }
    }
}

/// `α ↦ μ((F∘T^{m_b})·1_{S_α})` with `m_b` the backward depth. For any
/// strip `Q` and `n ≥ m_b`, `μ((F∘Tⁿ)1_Q)` equals the depth-0 correlation
/// of the reduced observable at time `n − m_b`.
pub fn reduce_to_site(f: &CellObservable, map: &BakerMap) -> Result<SiteObservable> {
    reduce_to_site_with_budget(f, map, DEFAULT_ITINERARY_BUDGET)
}

pub fn reduce_to_site_with_budget(f: &CellObservable, map: &BakerMap, budget: u128) -> Result<SiteObservable> {
    f.check_symbols(map)?;
    let depth = (f.backward_depth + f.forward_depth) as u32;
    let required = crate::phase::itinerary_count(map.symbols(), depth);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let Some(hull) = f
        .values
        .keys()
        .map(|k| LatticeBox::cube(&k.site, 0))
        .reduce(|a, b| a.hull(&b))
    else {
        return Ok(SiteObservable::constant(f.dim, f.outside.clone()));
    };
    let mut paths: Vec<(LatticePoint, Rational, Vec<usize>)> = Vec::new();
    for_each_word(map.symbols(), f.backward_depth, |v| {
        let mut shift = LatticePoint::origin(f.dim);
        let mut weight = Rational::one();
        for &k in v {
            shift = shift.add(map.step_of(k));
            weight *= map.table().width(k);
        }
        paths.push((shift, weight, v.iter().rev().cloned().collect()));
    });
    let sites: BTreeSet<&LatticePoint> = f.values.keys().map(|k| &k.site).collect();
    let mut integrals: BTreeMap<(LatticePoint, Vec<usize>), Rational> = BTreeMap::new();
    for site in &sites {
        for (_, _, bw) in &paths {
            integrals.insert(((*site).clone(), bw.clone()), f.forward_integral(site, bw, map));
        }
    }
    let reach = map.walk().max_step() * f.backward_depth as i64;
    let region = hull.grow(reach);
    let table = region
        .points()
        .map(|alpha| {
            paths.iter().fold(Rational::zero(), |acc, (shift, w, bw)| {
                let target = alpha.add(shift);
                let v = integrals
                    .get(&(target, bw.clone()))
                    .cloned()
                    .unwrap_or_else(|| f.outside.clone());
                acc + w * v
            })
        })
        .collect();
    SiteObservable::new(
        f.dim,
        TailModel::ConstantOutsideBox {
            value: f.outside.clone(),
            region,
            table,
        },
    )
}

/// `g = Σ weight·1_strip` with pairwise disjoint strips.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalObservable {
    dim: usize,
    terms: Vec<(Strip, Rational)>,
}

impl LocalObservable {
    pub fn new(dim: usize, terms: Vec<(Strip, Rational)>) -> Result<Self> {
        for (s, _) in &terms {
            if s.site.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.site.dim(),
                });
            }
        }
        Ok(LocalObservable { dim, terms })
    }

    pub fn strip(strip: Strip) -> Self {
        LocalObservable {
            dim: strip.site.dim(),
            terms: vec![(strip, Rational::one())],
        }
    }

    pub fn unit_square(site: LatticePoint) -> Self {
        Self::strip(Strip::unit(site))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(Strip, Rational)] {
        &self.terms
    }

    /// `μ(g)`.
    pub fn integral(&self) -> Rational {
        self.terms.iter().map(|(s, w)| w * s.height()).sum()
    }

    /// `μ(|g|)`.
    pub fn mass(&self) -> Rational {
        self.terms.iter().map(|(s, w)| w.abs() * s.height()).sum()
    }
}

/// Observable declarations as they appear in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum ObservableSpec {
    /// Table keys are period-cell coordinates `"i"` or `"i,j,…"`; missing entries are 0.
    Periodic {
        period: Vec<i64>,
        table: BTreeMap<String, RationalText>,
    },
    /// Table keys are absolute site coordinates inside `box`; missing entries take `value`.
    #[serde(rename_all = "camelCase")]
    ConstantOutsideBox {
        value: RationalText,
        #[serde(rename = "box")]
        region: LatticeBox,
        #[serde(default)]
        table: BTreeMap<String, RationalText>,
    },
    /// Missing table entries take their orthant constant.
    Orthant {
        constants: Vec<RationalText>,
        #[serde(rename = "box")]
        region: LatticeBox,
        #[serde(default)]
        table: BTreeMap<String, RationalText>,
    },
    Clamped {
        radius: i64,
        table: BTreeMap<String, RationalText>,
    },
    Sign1d,
    Parity,
    EvenSites,
    Constant {
        value: RationalText,
    },
    #[serde(rename_all = "camelCase")]
    Cell {
        #[serde(default)]
        m: Option<usize>,
        #[serde(default)]
        backward_depth: Option<usize>,
        #[serde(default)]
        forward_depth: Option<usize>,
        #[serde(default = "zero_text")]
        outside: RationalText,
        values: Vec<CellEntry>,
    },
}

fn zero_text() -> RationalText {
    RationalText(Rational::zero())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub site: Vec<i64>,
    #[serde(default)]
    pub backward: Vec<usize>,
    #[serde(default)]
    pub forward: Vec<usize>,
    pub value: RationalText,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Site(SiteObservable),
    Cell(CellObservable),
}

impl Observable {
    /// The site observable, reducing cell observables first.
    pub fn to_site(&self, map: &BakerMap) -> Result<SiteObservable> {
        match self {
            Observable::Site(s) => Ok(s.clone()),
            Observable::Cell(c) => reduce_to_site(c, map),
        }
    }

    pub fn backward_depth(&self) -> usize {
        match self {
            Observable::Site(_) => 0,
            Observable::Cell(c) => c.backward_depth,
        }
    }
}

fn parse_key(key: &str, dim: usize) -> Result<Vec<i64>> {
    let coords = key
        .split(',')
        .map(|s| s.trim().parse::<i64>())
        .collect::<std::result::Result<Vec<i64>, _>>()
        .map_err(|_| Error::InvalidObservable(format!("bad table key {key:?}")))?;
    if coords.len() != dim {
        return Err(Error::InvalidObservable(format!(
            "table key {key:?} has {} coordinates, expected {dim}",
            coords.len()
        )));
    }
    Ok(coords)
}

fn fill_box(
    region: &LatticeBox,
    entries: &BTreeMap<String, RationalText>,
    default: impl Fn(&LatticePoint) -> Rational,
) -> Result<Vec<Rational>> {
    let mut table: Vec<Rational> = region.points().map(|p| default(&p)).collect();
    for (k, v) in entries {
        let p = LatticePoint(parse_key(k, region.dim())?);
        let idx = region
            .index_of(&p)
            .ok_or_else(|| Error::InvalidObservable(format!("table key {k:?} lies outside its box")))?;
        table[idx] = v.0.clone();
    }
    Ok(table)
}

impl ObservableSpec {
    pub fn build(&self, dim: usize) -> Result<Observable> {
        let site = |model| SiteObservable::new(dim, model).map(Observable::Site);
        match self {
            ObservableSpec::Periodic { period, table } => {
                let cell = LatticeBox::new(vec![0; dim], period.iter().map(|p| p - 1).collect())
                    .map_err(|_| Error::InvalidObservable("periods must be positive".into()))?;
                if period.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: period.len(),
                    });
                }
                site(TailModel::Periodic {
                    period: period.clone(),
                    table: fill_box(&cell, table, |_| Rational::zero())?,
                })
            }
            ObservableSpec::ConstantOutsideBox { value, region, table } => site(TailModel::ConstantOutsideBox {
                value: value.0.clone(),
                table: fill_box(region, table, |_| value.0.clone())?,
                region: region.clone(),
            }),
            ObservableSpec::Orthant {
                constants,
                region,
                table,
            } => {
                let constants: Vec<Rational> = constants.iter().map(|c| c.0.clone()).collect();
                if constants.len() != 1 << dim {
                    return Err(Error::InvalidObservable(format!("expected {} orthant constants", 1 << dim)));
                }
                site(TailModel::OrthantEventuallyConstant {
                    table: fill_box(region, table, |p| constants[orthant_index(&p.0)].clone())?,
                    constants,
                    region: region.clone(),
                })
            }
            ObservableSpec::Clamped { radius, table } => {
                if *radius < 0 {
                    return Err(Error::InvalidObservable("radius must be nonnegative".into()));
                }
                let cube = LatticeBox::cube(&LatticePoint::origin(dim), *radius);
                site(TailModel::Clamped {
                    radius: *radius,
                    table: fill_box(&cube, table, |_| Rational::zero())?,
                })
            }
            ObservableSpec::Sign1d => {
                if dim != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, found: dim });
                }
                Ok(Observable::Site(SiteObservable::sign1d()))
            }
            ObservableSpec::Parity => Ok(Observable::Site(SiteObservable::parity(dim))),
            ObservableSpec::EvenSites => Ok(Observable::Site(SiteObservable::even_sites(dim))),
            ObservableSpec::Constant { value } => Ok(Observable::Site(SiteObservable::constant(dim, value.0.clone()))),
            ObservableSpec::Cell {
                m,
                backward_depth,
                forward_depth,
                outside,
                values,
            } => {
                let bd = backward_depth.or(*m).unwrap_or(0);
                let fd = forward_depth.or(*m).unwrap_or(0);
                let mut map = BTreeMap::new();
                for e in values {
                    if e.site.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            found: e.site.len(),
                        });
                    }
                    map.insert(
                        CellKey {
                            site: LatticePoint(e.site.clone()),
                            backward: e.backward.clone(),
                            forward: e.forward.clone(),
                        },
                        e.value.0.clone(),
                    );
                }
                CellObservable::new(dim, bd, fd, map, outside.0.clone()).map(Observable::Cell)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::convolve;
    use crate::presets;
    use crate::rational::{int, rat};

    fn pt(c: &[i64]) -> LatticePoint {
        LatticePoint(c.to_vec())
    }

    fn brute_box_sum(f: &SiteObservable, region: &LatticeBox) -> Rational {
        region.points().map(|p| f.value_at(&p)).sum()
    }

    #[test]
    fn box_average_examples() {
        let c = SiteObservable::constant(2, rat(7, 3));
        assert_eq!(box_average(&c, &pt(&[4, -9]), 5).unwrap(), rat(7, 3));
        let parity = SiteObservable::parity(1);
        for r in [1, 2, 10, 1000] {
            let sign = if r % 2 == 0 { 1 } else { -1 };
            assert_eq!(box_average(&parity, &pt(&[0]), r).unwrap(), rat(sign, 2 * r as i64 + 1));
        }
        let two = SiteObservable::new(
            1,
            TailModel::Periodic {
                period: vec![2],
                table: vec![int(3), int(5)],
            },
        )
        .unwrap();
        let r = 500;
        let avg = box_average(&two, &pt(&[0]), r).unwrap();
        assert!((avg - int(4)).abs() <= rat(1, r as i64));
    }

    #[test]
    fn counted_sums_match_enumeration() {
        let sign = SiteObservable::sign1d();
        let bump = SiteObservable::new(
            2,
            TailModel::ConstantOutsideBox {
                value: int(2),
                region: LatticeBox::new(vec![-1, 0], vec![1, 2]).unwrap(),
                table: (0..9).map(|i| int(i - 4)).collect(),
            },
        )
        .unwrap();
        let per2 = SiteObservable::periodic_from_fn(vec![3, 2], |c| int(c[0] * 2 - c[1])).unwrap();
        for region in [
            LatticeBox::new(vec![-7, -3], vec![4, 5]).unwrap(),
            LatticeBox::new(vec![2, 2], vec![2, 9]).unwrap(),
        ] {
            assert_eq!(bump.box_sum(&region), brute_box_sum(&bump, &region));
            assert_eq!(per2.box_sum(&region), brute_box_sum(&per2, &region));
            let prod: Rational = region.points().map(|p| bump.value_at(&p) * per2.value_at(&p)).sum();
            assert_eq!(bump.box_sum_product(&per2, &region).unwrap(), prod);
            assert_eq!(per2.box_sum_product(&bump, &region).unwrap(), prod);
        }
        let line = LatticeBox::new(vec![-13], vec![6]).unwrap();
        assert_eq!(sign.box_sum(&line), brute_box_sum(&sign, &line));
        assert_eq!(sign.box_sum(&line), int(7 - 13));
    }

    #[test]
    fn box_average_is_kernel_convolution() {
        let f = SiteObservable::periodic_from_fn(vec![3], |c| int(c[0] * c[0] - 1)).unwrap();
        let r = 4;
        let kernel = LatticeSignal::from_entries(
            1,
            (-r..=r).map(|a| (pt(&[a]), rat(1, 2 * r + 1))),
        )
        .unwrap();
        let window = LatticeBox::new(vec![-20], vec![20]).unwrap();
        let conv = convolve(&f.restrict(&window), &kernel).unwrap();
        for g in -5..=5 {
            assert_eq!(box_average(&f, &pt(&[g]), r as u64).unwrap(), conv.value_at(&pt(&[g])));
        }
    }

    #[test]
    fn averages_by_model() {
        let bump = SiteObservable::new(
            1,
            TailModel::ConstantOutsideBox {
                value: int(2),
                region: LatticeBox::new(vec![-2], vec![3]).unwrap(),
                table: vec![int(9); 6],
            },
        )
        .unwrap();
        let centers = default_centers(1, 8, 3);
        let est = estimate_average(&bump, BoxFamily::TranslationInvariant, &[10, 100, 10_000], &centers).unwrap();
        assert_eq!(est.value, AverageValue::Exact(int(2)));
        assert!(est.uniformity_defect <= 7.0 * 6.0 / 20_001.0 + 1e-15);

        let sign = SiteObservable::sign1d();
        let centered = estimate_average(&sign, BoxFamily::CenteredOnly, &[100], &[]).unwrap();
        assert_eq!(centered.value, AverageValue::Exact(int(0)));
        let shifted = estimate_average(&sign, BoxFamily::TranslationInvariant, &[100], &[pt(&[1_000_000]), pt(&[-1_000_000])]).unwrap();
        assert_eq!(shifted.value, AverageValue::NonConvergent);
        assert_eq!(shifted.uniformity_defect, 2.0);
        assert!(estimate_average(&sign, BoxFamily::CenteredOnly, &[], &[]).is_err());
    }

    #[test]
    fn evolve_parity_eigenvalue() {
        let walk = presets::third_walk();
        let parity = SiteObservable::parity(1);
        for n in 0..6u64 {
            let e = evolve_site(&parity, &walk, n).unwrap();
            let lambda = rat(-1, 3).pow(n as i32);
            for a in -3..=3 {
                let sign = if a % 2 == 0 { int(1) } else { int(-1) };
                assert_eq!(e.value_at(&pt(&[a])), &lambda * sign);
            }
        }
        let c = SiteObservable::constant(1, rat(5, 2));
        assert_eq!(evolve_site(&c, &walk, 7).unwrap().value_at(&pt(&[100])), rat(5, 2));
    }

    #[test]
    fn evolution_matches_direct_convolution() {
        let walk = presets::lazy_2d();
        let bump = SiteObservable::new(
            2,
            TailModel::ConstantOutsideBox {
                value: int(1),
                region: LatticeBox::new(vec![0, -1], vec![2, 0]).unwrap(),
                table: (0..6).map(|i| rat(i, 2)).collect(),
            },
        )
        .unwrap();
        let n = 3;
        let e = evolve_site(&bump, &walk, n).unwrap();
        let kernel = convolution_power(&walk, n);
        for a in LatticeBox::cube(&pt(&[1, 0]), 6).points() {
            let direct: Rational = kernel.iter().map(|(b, w)| w * bump.value_at(&a.add(b))).sum();
            assert_eq!(e.value_at(&a), direct);
        }
        assert!(matches!(e.model(), TailModel::ConstantOutsideBox { region, .. } if region.lo == vec![-3, -4]));
    }

    #[test]
    fn evolution_is_a_semigroup() {
        let walk = presets::drifted_1d();
        let sign = SiteObservable::sign1d();
        let once = evolve_site(&sign, &walk, 5).unwrap();
        let twice = evolve_site(&evolve_site(&sign, &walk, 2).unwrap(), &walk, 3).unwrap();
        for a in -12..=12 {
            assert_eq!(once.value_at(&pt(&[a])), twice.value_at(&pt(&[a])));
        }
        assert!(matches!(once.model(), TailModel::OrthantEventuallyConstant { .. }));
        let lazy_sign = SiteObservable::new(
            2,
            TailModel::OrthantEventuallyConstant {
                constants: vec![int(-1), int(0), int(0), int(1)],
                region: LatticeBox::new(vec![0, 0], vec![0, 0]).unwrap(),
                table: vec![int(1)],
            },
        )
        .unwrap();
        let e = evolve_site(&lazy_sign, &presets::lazy_2d(), 2).unwrap();
        assert!(matches!(e.model(), TailModel::Clamped { radius: 3, .. }));
    }

    #[test]
    fn averages_are_invariant() {
        let walk = presets::third_walk();
        let fs = [
            SiteObservable::periodic_from_fn(vec![4], |c| int(c[0] * c[0])).unwrap(),
            SiteObservable::constant(1, int(3)),
            SiteObservable::new(
                1,
                TailModel::ConstantOutsideBox {
                    value: rat(1, 2),
                    region: LatticeBox::new(vec![-1], vec![1]).unwrap(),
                    table: vec![int(4), int(-4), int(9)],
                },
            )
            .unwrap(),
        ];
        for f in &fs {
            for n in 0..=10 {
                assert_eq!(av_invariance_check(f, &walk, n, BoxFamily::TranslationInvariant).unwrap(), int(0));
            }
        }
        assert!(av_invariance_check(&SiteObservable::sign1d(), &walk, 2, BoxFamily::TranslationInvariant).is_err());
    }

    #[test]
    fn sign_counterexample_box_product() {
        let walk = presets::third_walk();
        let sign = SiteObservable::sign1d();
        for n in [1u64, 4, 10] {
            let e = evolve_site(&sign, &walk, n).unwrap();
            for r in [10u64, 1000, 10_000] {
                let v = box_average_product(&e, &sign, &pt(&[0]), r).unwrap();
                assert!(v >= int(1) - rat(2 * n as i64, 2 * r as i64 + 1));
            }
        }
    }

    #[test]
    fn reduction_examples() {
        let walk = presets::drifted_1d();
        let map = BakerMap::new(&walk);
        let ind = CellObservable::rectangle_indicator(pt(&[2]), 1);
        let red = reduce_to_site(&ind, &map).unwrap();
        assert_eq!(red.value_at(&pt(&[2])), map.table().width(1).clone());
        assert_eq!(red.value_at(&pt(&[1])), int(0));

        let site_only = CellObservable::from_sites(1, [(pt(&[0]), int(3)), (pt(&[4]), int(-1))], int(1)).unwrap();
        let red = reduce_to_site(&site_only, &map).unwrap();
        for a in -3..8 {
            let expected = match a {
                0 => int(3),
                4 => int(-1),
                _ => int(1),
            };
            assert_eq!(red.value_at(&pt(&[a])), expected);
        }
        let constant = CellObservable::new(1, 2, 2, BTreeMap::new(), rat(2, 7)).unwrap();
        assert_eq!(reduce_to_site(&constant, &map).unwrap().value_at(&pt(&[9])), rat(2, 7));
    }

    #[test]
    fn reduction_is_bounded_and_linear() {
        let map = BakerMap::new(&presets::third_walk());
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        for (i, (bw, fw)) in [(0usize, 1usize), (2, 0), (1, 1)].into_iter().enumerate() {
            let key = CellKey {
                site: pt(&[i as i64 - 1]),
                backward: vec![bw],
                forward: vec![fw],
            };
            a.insert(key.clone(), int(i as i64 + 1));
            b.insert(key, rat(-1, i as i64 + 2));
        }
        let fa = CellObservable::new(1, 1, 1, a.clone(), int(0)).unwrap();
        let fb = CellObservable::new(1, 1, 1, b.clone(), int(0)).unwrap();
        let sum: BTreeMap<CellKey, Rational> = a.iter().map(|(k, v)| (k.clone(), v + &b[k])).collect();
        let fs = CellObservable::new(1, 1, 1, sum, int(0)).unwrap();
        let (ra, rb, rs) = (
            reduce_to_site(&fa, &map).unwrap(),
            reduce_to_site(&fb, &map).unwrap(),
            reduce_to_site(&fs, &map).unwrap(),
        );
        for x in -4..=4 {
            let p = pt(&[x]);
            assert_eq!(rs.value_at(&p), ra.value_at(&p) + rb.value_at(&p));
        }
        assert!(ra.bound() <= fa.bound());
    }

    #[test]
    fn cell_value_follows_digits() {
        let map = BakerMap::new(&presets::third_walk());
        let f = CellObservable::rectangle_indicator(pt(&[0]), 2);
        let inside = PhasePoint::new(pt(&[0]), rat(5, 6), rat(1, 2)).unwrap();
        let outside = PhasePoint::new(pt(&[0]), rat(1, 6), rat(1, 2)).unwrap();
        assert_eq!(f.value_at_point(&inside, &map), int(1));
        assert_eq!(f.value_at_point(&outside, &map), int(0));
    }

    #[test]
    fn specs_round_trip() {
        let json = r#"[
            {"kind":"periodic","period":[2],"table":{"0":"3","1":5}},
            {"kind":"constantOutsideBox","value":"2","box":{"lo":[-1],"hi":[1]},"table":{"0":"-1/2"}},
            {"kind":"sign1d"},
            {"kind":"cell","m":1,"values":[{"site":[0],"backward":[1],"forward":[0],"value":"1"}]}
        ]"#;
        let specs: Vec<ObservableSpec> = serde_json::from_str(json).unwrap();
        let built: Vec<Observable> = specs.iter().map(|s| s.build(1).unwrap()).collect();
        let Observable::Site(p) = &built[0] else { panic!() };
        assert_eq!(p.value_at(&pt(&[7])), int(5));
        let Observable::Site(c) = &built[1] else { panic!() };
        assert_eq!(c.value_at(&pt(&[0])), rat(-1, 2));
        assert_eq!(c.value_at(&pt(&[1])), int(2));
        assert_eq!(c.value_at(&pt(&[-40])), int(2));
        let Observable::Cell(cell) = &built[3] else { panic!() };
        assert_eq!(cell.backward_depth(), 1);
        let again: Vec<ObservableSpec> = serde_json::from_str(&serde_json::to_string(&specs).unwrap()).unwrap();
        assert_eq!(again, specs);
        assert!(serde_json::from_str::<ObservableSpec>(r#"{"kind":"periodic","period":[2],"table":{"5":"1"}}"#)
            .unwrap()
            .build(1)
            .is_err());
    }
}
