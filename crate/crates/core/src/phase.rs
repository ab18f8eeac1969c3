//! The baker-lattice map on `Z^d × [0,1)²`.
//!
//! Each unit square is cut into vertical rectangles `R_k = [q_{k−1}, q_k) × [0,1)`
//! of widths `p_{β^(k)}`. A point in `R_k` is stretched horizontally by
//! `1/p_k`, squeezed vertically by `p_k`, stacked at height `q_{k−1}` and
//! moved to the site `α + β^(k)`. Full-width horizontal strips therefore
//! split exactly into `N` thinner full-width strips per step; that
//! decomposition is the ground truth the correlation engine is checked
//! against.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lattice::{convolution_power, LatticePoint, LatticeSignal, WalkDistribution};
use crate::rational::{self, Rational};

pub const DEFAULT_ITINERARY_BUDGET: u128 = 10_000_000;

/// Exact phase point `(α; y₁, y₂)` with `0 ≤ y₁, y₂ < 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhasePoint {
    pub site: LatticePoint,
    pub y1: Rational,
    pub y2: Rational,
}

impl PhasePoint {
    pub fn new(site: LatticePoint, y1: Rational, y2: Rational) -> Result<Self> {
        let unit = |y: &Rational| *y < Rational::zero() || *y >= Rational::one();
        if unit(&y1) || unit(&y2) {
            return Err(Error::InvalidParameter(
                "phase coordinates must lie in [0, 1)".into(),
            ));
        }
        Ok(PhasePoint { site, y1, y2 })
    }
}

/// Binary64 phase point used by trajectory simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatPoint {
    pub site: Vec<i64>,
    pub y1: f64,
    pub y2: f64,
}

/// Cumulative cut points `0 = q₀ < q₁ < … < q_N = 1` in enumeration order.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTable {
    cumulative: Vec<Rational>,
    widths: Vec<Rational>,
    cumulative_f64: Vec<f64>,
    widths_f64: Vec<f64>,
}

impl PartitionTable {
    fn from_widths(widths: Vec<Rational>) -> Self {
        let mut cumulative = Vec::with_capacity(widths.len() + 1);
        let mut acc = Rational::zero();
        cumulative.push(acc.clone());
        for w in &widths {
            acc += w;
            cumulative.push(acc.clone());
        }
        PartitionTable {
            cumulative_f64: cumulative.iter().map(rational::to_f64).collect(),
            widths_f64: widths.iter().map(rational::to_f64).collect(),
            cumulative,
            widths,
        }
    }

    pub fn len(&self) -> usize {
        self.widths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.widths.is_empty()
    }

    /// `q_k` for `k = 0..=N`.
    pub fn cut(&self, k: usize) -> &Rational {
        &self.cumulative[k]
    }

    pub fn width(&self, k: usize) -> &Rational {
        &self.widths[k]
    }

    /// Index `k` (0-based) with `q_k ≤ y < q_{k+1}`.
    pub fn cell_of(&self, y: &Rational) -> usize {
        // cumulative[0] = 0 ≤ y always; find the last cut ≤ y.
        let pos = self.cumulative.partition_point(|q| q <= y);
        (pos - 1).min(self.len() - 1)
    }

    pub fn cell_of_f64(&self, y: f64) -> usize {
        let pos = self.cumulative_f64.partition_point(|q| *q <= y);
        pos.saturating_sub(1).min(self.len() - 1)
    }

    /// The subinterval of `[0,1)` of points whose successive digits are
    /// `word` (first digit outermost): returns `(start, width)`.
    pub fn word_interval(&self, word: &[usize]) -> (Rational, Rational) {
        let mut start = Rational::zero();
        let mut width = Rational::one();
        for &k in word {
            start += &width * &self.cumulative[k];
            width *= &self.widths[k];
        }
        (start, width)
    }
}

/// The map `T` for a walk together with a fixed enumeration of its support.
#[derive(Clone, Debug)]
pub struct BakerMap {
    walk: WalkDistribution,
    order: Vec<usize>,
    table: PartitionTable,
}

impl BakerMap {
    /// Lexicographic enumeration of the support.
    pub fn new(walk: &WalkDistribution) -> Self {
        Self::with_enumeration(walk, (0..walk.len()).collect()).expect("identity order")
    }

    /// `order[k]` is the support index placed in rectangle `R_{k+1}`.
    pub fn with_enumeration(walk: &WalkDistribution, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; walk.len()];
        if order.len() != walk.len() {
            return Err(Error::InvalidParameter("enumeration must list every support point".into()));
        }
        for &j in &order {
            if j >= walk.len() || seen[j] {
                return Err(Error::InvalidParameter("enumeration is not a permutation".into()));
            }
            seen[j] = true;
        }
        let table = PartitionTable::from_widths(order.iter().map(|&j| walk.weight(j).clone()).collect());
        Ok(BakerMap {
            walk: walk.clone(),
            order,
            table,
        })
    }

    pub fn walk(&self) -> &WalkDistribution {
        &self.walk
    }

    pub fn table(&self) -> &PartitionTable {
        &self.table
    }

    pub fn symbols(&self) -> usize {
        self.order.len()
    }

    /// Step `β` attached to rectangle `k` (0-based).
    pub fn step_of(&self, k: usize) -> &LatticePoint {
        self.walk.step(self.order[k])
    }

    pub fn step(&self, x: &PhasePoint) -> PhasePoint {
        let k = self.table.cell_of(&x.y1);
        let p = self.table.width(k);
        let q = self.table.cut(k);
        PhasePoint {
            site: x.site.add(self.step_of(k)),
            y1: (&x.y1 - q) / p,
            y2: p * &x.y2 + q,
        }
    }

    pub fn inverse_step(&self, x: &PhasePoint) -> PhasePoint {
        let k = self.table.cell_of(&x.y2);
        let p = self.table.width(k);
        let q = self.table.cut(k);
        PhasePoint {
            site: x.site.sub(self.step_of(k)),
            y1: p * &x.y1 + q,
            y2: (&x.y2 - q) / p,
        }
    }

    pub fn step_f64(&self, x: &FloatPoint) -> FloatPoint {
        let k = self.table.cell_of_f64(x.y1);
        let p = self.table.widths_f64[k];
        let q = self.table.cumulative_f64[k];
        let beta = self.step_of(k);
        let y1 = ((x.y1 - q) / p).clamp(0.0, 1.0 - f64::EPSILON / 2.0);
        let y2 = (p * x.y2 + q).clamp(0.0, 1.0 - f64::EPSILON / 2.0);
        FloatPoint {
            site: x.site.iter().zip(&beta.0).map(|(a, b)| a + b).collect(),
            y1,
            y2,
        }
    }

    /// Refinement of `Q` by the rectangles `R_k`, each piece mapped by one
    /// step. Widths of the pieces before mapping are the `p`'s.
    pub fn refine_strip(&self, strip: &Strip) -> Vec<(Rational, Strip)> {
        (0..self.symbols())
            .map(|k| {
                let p = self.table.width(k);
                let q = self.table.cut(k);
                (
                    p.clone(),
                    Strip {
                        site: strip.site.add(self.step_of(k)),
                        a: p * &strip.a + q,
                        b: p * &strip.b + q,
                    },
                )
            })
            .collect()
    }
}

/// Full-width strip `{α} × [0,1) × [a, b)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Strip {
    pub site: LatticePoint,
    pub a: Rational,
    pub b: Rational,
}

impl Strip {
    pub fn new(site: LatticePoint, a: Rational, b: Rational) -> Result<Self> {
        if a < Rational::zero() || b > Rational::one() || a >= b {
            return Err(Error::InvalidParameter(format!(
                "strip interval [{}, {}) must satisfy 0 ≤ a < b ≤ 1",
                rational::format_rational(&a),
                rational::format_rational(&b)
            )));
        }
        Ok(Strip { site, a, b })
    }

    /// The whole square `S_α`.
    pub fn unit(site: LatticePoint) -> Self {
        Strip {
            site,
            a: Rational::zero(),
            b: Rational::one(),
        }
    }

    pub fn height(&self) -> Rational {
        &self.b - &self.a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItineraryComponent {
    /// Rectangle indices `k` (0-based, enumeration order) visited, in time order.
    pub word: Vec<usize>,
    pub strip: Strip,
}

impl ItineraryComponent {
    pub fn height(&self) -> Rational {
        self.strip.height()
    }
}

/// Exact decomposition of `T^n Q` into `N^n` full-width strips.
#[derive(Clone, Debug, PartialEq)]
pub struct ItineraryPushforward {
    pub depth: u32,
    pub components: Vec<ItineraryComponent>,
}

impl ItineraryPushforward {
    pub fn total_height(&self) -> Rational {
        self.components.iter().map(|c| c.height()).sum()
    }

    /// Heights summed per site.
    pub fn site_masses(&self) -> BTreeMap<LatticePoint, Rational> {
        let mut out: BTreeMap<LatticePoint, Rational> = BTreeMap::new();
        for c in &self.components {
            *out.entry(c.strip.site.clone()).or_insert_with(Rational::zero) += c.height();
        }
        out
    }
}

pub fn itinerary_count(symbols: usize, n: u32) -> u128 {
    (symbols as u128).checked_pow(n).unwrap_or(u128::MAX)
}

pub fn push_strip(map: &BakerMap, strip: &Strip, n: u32, budget: u128) -> Result<ItineraryPushforward> {
    let required = itinerary_count(map.symbols(), n);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let mut layer = vec![ItineraryComponent {
        word: Vec::new(),
        strip: strip.clone(),
    }];
    for _ in 0..n {
        let mut next = Vec::with_capacity(layer.len() * map.symbols());
        for c in &layer {
            for (k, (_, piece)) in map.refine_strip(&c.strip).into_iter().enumerate() {
                let mut word = c.word.clone();
                word.push(k);
                next.push(ItineraryComponent { word, strip: piece });
            }
        }
        layer = next;
    }
    Ok(ItineraryPushforward {
        depth: n,
        components: layer,
    })
}

/// Empirical distribution of `ψ(Tⁿx)` for `x` uniform in `S₀`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteHistogram {
    pub steps: u32,
    pub samples: u64,
    pub seed: u64,
    pub counts: BTreeMap<LatticePoint, u64>,
}

impl SiteHistogram {
    pub fn mean_site(&self) -> Vec<f64> {
        let d = self.counts.keys().next().map_or(0, |p| p.dim());
        let mut m = vec![0.0; d];
        for (p, c) in &self.counts {
            for (mi, x) in m.iter_mut().zip(&p.0) {
                *mi += *x as f64 * *c as f64;
            }
        }
        m.iter().map(|v| v / self.samples as f64).collect()
    }
}

const SIM_CHUNK: u64 = 1 << 15;

/// Samples are split into fixed-size chunks; chunk `i` draws from the
/// ChaCha8 stream `i` of `seed`, so the result does not depend on the
/// thread count.
pub fn simulate_walk(map: &BakerMap, n: u32, samples: u64, seed: u64) -> Result<SiteHistogram> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let dim = map.walk().dim();
    let chunks = samples.div_ceil(SIM_CHUNK);
    let partial: Vec<BTreeMap<LatticePoint, u64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let count = SIM_CHUNK.min(samples - chunk * SIM_CHUNK);
            let mut local: BTreeMap<LatticePoint, u64> = BTreeMap::new();
            for _ in 0..count {
                let mut x = FloatPoint {
                    site: vec![0; dim],
                    y1: rng.gen::<f64>(),
                    y2: rng.gen::<f64>(),
                };
                for _ in 0..n {
                    x = map.step_f64(&x);
                }
                *local.entry(LatticePoint(x.site)).or_insert(0) += 1;
            }
            local
        })
        .collect();
    let mut counts = BTreeMap::new();
    for part in partial {
        for (k, v) in part {
            *counts.entry(k).or_insert(0) += v;
        }
    }
    Ok(SiteHistogram {
        steps: n,
        samples,
        seed,
        counts,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson test of a histogram against an exact law. Cells with expected
/// count below 5 are pooled; a count on a site of zero probability gives
/// `p_value = 0`.
pub fn chi_square(hist: &SiteHistogram, law: &LatticeSignal<Rational>) -> ChiSquareOutcome {
    let total = hist.samples as f64;
    if hist.counts.keys().any(|s| law.get(s).is_none()) {
        return ChiSquareOutcome {
            statistic: f64::INFINITY,
            degrees_of_freedom: law.len().saturating_sub(1),
            p_value: 0.0,
        };
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (site, prob) in law.iter() {
        let expected = rational::to_f64(prob) * total;
        let observed = *hist.counts.get(site).unwrap_or(&0) as f64;
        if expected < 5.0 {
            pooled_obs += observed;
            pooled_exp += expected;
        } else {
            stat += (observed - expected).powi(2) / expected;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        stat += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64)
        .map(|c| 1.0 - c.cdf(stat))
        .unwrap_or(f64::NAN);
    ChiSquareOutcome {
        statistic: stat,
        degrees_of_freedom: dof,
        p_value,
    }
}

/// Columns: one per site coordinate, then `count, empirical, exact`.
pub fn write_histogram_csv<W: std::io::Write>(
    out: W,
    hist: &SiteHistogram,
    walk: &WalkDistribution,
) -> Result<()> {
    let law = convolution_power(walk, hist.steps as u64);
    let mut sites: Vec<&LatticePoint> = law.iter().map(|(s, _)| s).collect();
    for s in hist.counts.keys() {
        if law.get(s).is_none() {
            sites.push(s);
        }
    }
    sites.sort();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=walk.dim()).map(|i| format!("site_{i}")).collect();
    header.extend(["count", "empirical", "exact"].map(String::from));
    w.write_record(&header)?;
    for s in sites {
        let count = *hist.counts.get(s).unwrap_or(&0);
        let mut row: Vec<String> = s.0.iter().map(|c| c.to_string()).collect();
        row.push(count.to_string());
        row.push((count as f64 / hist.samples as f64).to_string());
        row.push(rational::to_f64(&law.value_at(s)).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
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
    fn worked_step() {
        let map = BakerMap::new(&presets::third_walk());
        let x = PhasePoint::new(pt(&[0]), rat(1, 2), rat(1, 5)).unwrap();
        let y = map.step(&x);
        assert_eq!(y, PhasePoint::new(pt(&[0]), rat(1, 2), rat(2, 5)).unwrap());
        assert_eq!(map.inverse_step(&y), x);
    }

    #[test]
    fn left_boundary_belongs_to_the_right_cell() {
        let map = BakerMap::new(&presets::third_walk());
        let x = PhasePoint::new(pt(&[4]), rat(1, 3), rat(0, 1)).unwrap();
        let y = map.step(&x);
        assert_eq!(y.site, pt(&[4]));
        assert_eq!(y.y1, int(0));
        assert_eq!(y.y2, rat(1, 3));
    }

    #[test]
    fn inverse_moves_site_back() {
        let map = BakerMap::new(&presets::drifted_1d());
        let x = PhasePoint::new(pt(&[3]), rat(1, 7), rat(1, 2)).unwrap();
        let k = map.table().cell_of(&x.y2);
        assert_eq!(map.inverse_step(&x).site, x.site.sub(map.step_of(k)));
        assert_eq!(map.step(&map.inverse_step(&x)), x);
    }

    #[test]
    fn rejects_points_outside_the_square() {
        assert!(PhasePoint::new(pt(&[0]), int(1), int(0)).is_err());
        assert!(PhasePoint::new(pt(&[0]), rat(-1, 2), int(0)).is_err());
        assert!(Strip::new(pt(&[0]), rat(1, 2), rat(1, 2)).is_err());
    }

    #[test]
    fn push_examples() {
        let map = BakerMap::new(&presets::third_walk());
        let q = Strip::new(pt(&[0]), int(0), rat(1, 2)).unwrap();
        let zero = push_strip(&map, &q, 0, DEFAULT_ITINERARY_BUDGET).unwrap();
        assert_eq!(zero.components.len(), 1);
        assert_eq!(zero.components[0].strip, q);
        let one = push_strip(&map, &q, 1, DEFAULT_ITINERARY_BUDGET).unwrap();
        let sites: Vec<_> = one.components.iter().map(|c| c.strip.site.clone()).collect();
        assert_eq!(sites, vec![pt(&[-1]), pt(&[0]), pt(&[1])]);
        assert!(one.components.iter().all(|c| c.height() == rat(1, 6)));
        assert_eq!(push_strip(&map, &q, 5, DEFAULT_ITINERARY_BUDGET).unwrap().total_height(), rat(1, 2));
    }

    #[test]
    fn budget_is_enforced() {
        let map = BakerMap::new(&presets::lazy_2d());
        let q = Strip::unit(pt(&[0, 0]));
        let err = push_strip(&map, &q, 11, DEFAULT_ITINERARY_BUDGET).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { required: 48828125, .. }));
    }

    #[test]
    fn markov_refinement_widths() {
        let map = BakerMap::new(&presets::lazy_2d());
        let q = Strip::new(pt(&[1, -2]), rat(1, 4), rat(2, 3)).unwrap();
        let parts = map.refine_strip(&q);
        for (k, (w, piece)) in parts.iter().enumerate() {
            assert_eq!(w, map.table().width(k));
            assert_eq!(piece.height(), w * q.height());
        }
    }

    #[test]
    fn word_interval_matches_iterated_digits() {
        let map = BakerMap::new(&presets::drifted_1d());
        let (start, width) = map.table().word_interval(&[1, 0, 1]);
        assert_eq!(width, rat(2, 3) * rat(1, 3) * rat(2, 3));
        // the left end of the cell reproduces the digits under the expanding step
        let mut x = PhasePoint::new(pt(&[0]), start, int(0)).unwrap();
        for expected in [1, 0, 1] {
            assert_eq!(map.table().cell_of(&x.y1), expected);
            x = map.step(&x);
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let map = BakerMap::new(&presets::third_walk());
        let a = simulate_walk(&map, 3, 70_000, 7).unwrap();
        let b = simulate_walk(&map, 3, 70_000, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_walk(&map, 0, 10, 1).unwrap();
        assert_eq!(c.counts.get(&pt(&[0])), Some(&10));
        assert!(simulate_walk(&map, 1, 0, 1).is_err());
    }
}
