//! Correlation engine and mixing estimators.
//!
//! Space-side correlations use the identity
//! `μ((F∘Tⁿ)1_Q) = h·Σ_β p^(n)_β f_{α+β}` for a strip `Q` of height `h`
//! at site `α`. The itinerary oracle recomputes the same numbers from the
//! explicit decomposition of `TⁿQ`.

use std::io::Write;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, WalkDistribution, WalkSpec};
use crate::observables::{
    box_average, box_average_product, default_centers, evolve_site, for_each_word, AverageValue, BoxFamily, CellKey,
    CellObservable, LocalObservable, SiteObservable,
};
use crate::phase::{push_strip, BakerMap, Strip};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum MixingKind {
    M1,
    M2,
    M3,
    M4,
    M5,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesEntry {
    pub n: u64,
    pub r: Option<u64>,
    pub value: f64,
    /// Exact value as `"num/den"` when it is available.
    pub exact: Option<String>,
    pub target: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub walk: WalkSpec,
    pub observables: Vec<String>,
    pub family: Option<BoxFamily>,
    /// Depth offset `m`: values at `n` are depth-0 values at `n − 2m`.
    pub depth_offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub kind: MixingKind,
    pub target: f64,
    pub series: Vec<SeriesEntry>,
    /// `θ_n = m5_gap(n)` for the global observable, when defined.
    pub gap_series: Vec<(u64, f64)>,
    pub metadata: ReportMetadata,
}

fn entry(n: u64, r: Option<u64>, value: &Rational, target: &Rational) -> SeriesEntry {
    SeriesEntry {
        n,
        r,
        value: rational::to_f64(value),
        exact: Some(rational::format_rational(value)),
        target: rational::to_f64(target),
        deviation: rational::to_f64(&(value - target).abs()),
    }
}

fn translation_average(f: &SiteObservable) -> Result<Rational> {
    f.analytic_average(BoxFamily::TranslationInvariant).require("global observable")
}

/// `μ((F∘Tⁿ)g) = Σ weight·height·(evolve_site(f, p, n))(site)`.
pub fn correlate_global_local(f: &SiteObservable, g: &LocalObservable, p: &WalkDistribution, n: u64) -> Result<Rational> {
    if g.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: g.dim(),
        });
    }
    let evolved = evolve_site(f, p, n)?;
    Ok(g.terms()
        .iter()
        .map(|(s, w)| w * s.height() * evolved.value_at(&s.site))
        .sum())
}

/// Cell-observable correlation through the site reduction: the depth-0
/// correlation of the reduced observable at `n − m_b`.
pub fn correlate_cell_local(f: &CellObservable, g: &LocalObservable, map: &BakerMap, n: u64) -> Result<Rational> {
    let offset = f.backward_depth() as u64;
    if n < offset {
        return Err(Error::InvalidOffset { n, offset });
    }
    let reduced = crate::observables::reduce_to_site(f, map)?;
    correlate_global_local(&reduced, g, map.walk(), n - offset)
}

/// `sup_α |evolve_site(f, p, n)(α) − Av(f)|`, exact. With `depth = m > 0`
/// the value reported at `n` is the depth-0 gap at `n − 2m`.
pub fn m5_gap(f: &SiteObservable, p: &WalkDistribution, n: u64, depth: u64) -> Result<Rational> {
    let offset = 2 * depth;
    if n < offset {
        return Err(Error::InvalidOffset { n, offset });
    }
    let av = translation_average(f)?;
    Ok(evolve_site(f, p, n - offset)?.sup_deviation(&av))
}

pub fn m5_report(f: &SiteObservable, p: &WalkDistribution, n_list: &[u64], depth: u64, label: &str) -> Result<CorrelationReport> {
    let zero = Rational::zero();
    let mut series = Vec::with_capacity(n_list.len());
    let mut gaps = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let gap = m5_gap(f, p, n, depth)?;
        gaps.push((n, rational::to_f64(&gap)));
        series.push(entry(n, None, &gap, &zero));
    }
    Ok(CorrelationReport {
        kind: MixingKind::M5,
        target: 0.0,
        series,
        gap_series: gaps,
        metadata: ReportMetadata {
            walk: p.to_spec(),
            observables: vec![label.to_string()],
            family: Some(BoxFamily::TranslationInvariant),
            depth_offset: depth,
        },
    })
}

/// M4 series `μ((F∘Tⁿ)g)` against `Av(F)μ(g)`; M3 when `μ(g) = 0`.
pub fn m4_report(f: &SiteObservable, g: &LocalObservable, p: &WalkDistribution, n_list: &[u64], label: &str) -> Result<CorrelationReport> {
    let av = translation_average(f)?;
    let target = &av * g.integral();
    let mut series = Vec::new();
    let mut gaps = Vec::new();
    for &n in n_list {
        let v = correlate_global_local(f, g, p, n)?;
        series.push(entry(n, None, &v, &target));
        gaps.push((n, rational::to_f64(&m5_gap(f, p, n, 0)?)));
    }
    Ok(CorrelationReport {
        kind: if g.integral().is_zero() { MixingKind::M3 } else { MixingKind::M4 },
        target: rational::to_f64(&target),
        series,
        gap_series: gaps,
        metadata: ReportMetadata {
            walk: p.to_spec(),
            observables: vec![label.to_string(), "local".into()],
            family: None,
            depth_offset: 0,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct M2Entry {
    pub n: u64,
    pub r: u64,
    /// `μ_V((F∘Tⁿ)G)` on the box centered at the origin.
    pub value: f64,
    pub exact: String,
    pub target: f64,
    /// `max` over the family's centers of `|μ_V((F∘Tⁿ)G) − target|`.
    pub deviation: f64,
    pub centers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonScan {
    pub epsilon: f64,
    /// Smallest tabulated `M` with deviation `< ε` whenever `n ≥ M` and
    /// `μ(V) ≥ M`; `None` if no tabulated `M` works.
    pub m: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct M2Table {
    pub family: BoxFamily,
    pub target: f64,
    pub entries: Vec<M2Entry>,
    pub scan: Vec<EpsilonScan>,
}

/// Centers used for the sup over boxes: the origin for the centered
/// family, all residues of the joint period cell for periodic pairs
/// (where box averages are periodic in the center), sampled centers
/// otherwise.
pub fn m2_centers(f: &SiteObservable, g: &SiteObservable, family: BoxFamily, seed: u64) -> Vec<LatticePoint> {
    let dim = f.dim();
    match family {
        BoxFamily::CenteredOnly => vec![LatticePoint::origin(dim)],
        BoxFamily::TranslationInvariant => match (f.period(), g.period()) {
            (Some(a), Some(b)) => {
                let joint: Vec<i64> = a.iter().zip(b).map(|(x, y)| num_integer::lcm(*x, *y)).collect();
                let cell = crate::lattice::LatticeBox::new(vec![0; dim], joint.iter().map(|q| q - 1).collect())
                    .expect("positive periods");
                cell.points().collect()
            }
            _ => default_centers(dim, 16, seed),
        },
    }
}

pub const DEFAULT_EPSILONS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

#[allow(clippy::too_many_arguments)]
pub fn m2_table(
    f: &SiteObservable,
    g: &SiteObservable,
    p: &WalkDistribution,
    n_list: &[u64],
    r_list: &[u64],
    family: BoxFamily,
    epsilons: &[f64],
    seed: u64,
) -> Result<M2Table> {
    let target = f.analytic_average(family).require("F")? * g.analytic_average(family).require("G")?;
    let centers = m2_centers(f, g, family, seed);
    let origin = LatticePoint::origin(f.dim());
    let mut entries = Vec::new();
    for &n in n_list {
        let evolved = evolve_site(f, p, n)?;
        for &r in r_list {
            let value = box_average_product(&evolved, g, &origin, r)?;
            let mut deviation = Rational::zero();
            for c in &centers {
                let v = box_average_product(&evolved, g, c, r)?;
                deviation = deviation.max((v - &target).abs());
            }
            entries.push(M2Entry {
                n,
                r,
                value: rational::to_f64(&value),
                exact: rational::format_rational(&value),
                target: rational::to_f64(&target),
                deviation: rational::to_f64(&deviation),
                centers: centers.len(),
            });
        }
    }
    let dim = f.dim() as u32;
    let scan = epsilons
        .iter()
        .map(|&eps| EpsilonScan {
            epsilon: eps,
            m: epsilon_m(&entries, dim, eps),
        })
        .collect();
    Ok(M2Table {
        family,
        target: rational::to_f64(&target),
        entries,
        scan,
    })
}

fn epsilon_m(entries: &[M2Entry], dim: u32, eps: f64) -> Option<u128> {
    let vol = |r: u64| (2 * r as u128 + 1).pow(dim);
    let mut candidates: Vec<u128> = entries
        .iter()
        .flat_map(|e| [e.n as u128, vol(e.r)])
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    candidates.into_iter().find(|&m| {
        let covered: Vec<&M2Entry> = entries
            .iter()
            .filter(|e| e.n as u128 >= m && vol(e.r) >= m)
            .collect();
        !covered.is_empty() && covered.iter().all(|e| e.deviation < eps)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", content = "value")]
pub enum M1Limit {
    #[serde(with = "rational")]
    Value(Rational),
    NotComputable(String),
}

/// `Av((F∘Tⁿ)G)` for periodic `F`.
pub fn m1_limit(f: &SiteObservable, g: &SiteObservable, p: &WalkDistribution, n: u64) -> Result<M1Limit> {
    if !f.is_periodic() {
        return Ok(M1Limit::NotComputable("F must have a periodic tail model".into()));
    }
    let evolved = evolve_site(f, p, n)?;
    if g.is_periodic() {
        let prod = evolved.product(g)?;
        return Ok(match prod.analytic_average(BoxFamily::TranslationInvariant) {
            AverageValue::Exact(v) => M1Limit::Value(v),
            AverageValue::NonConvergent => M1Limit::NotComputable("product has no average".into()),
        });
    }
    Ok(match g.analytic_average(BoxFamily::TranslationInvariant) {
        AverageValue::Exact(c) if is_eventually_constant(g, &c) => {
            M1Limit::Value(c * translation_average(&evolved)?)
        }
        _ => M1Limit::NotComputable("G must be periodic or constant outside a box".into()),
    })
}

fn is_eventually_constant(g: &SiteObservable, c: &Rational) -> bool {
    match g.model() {
        crate::observables::TailModel::ConstantOutsideBox { value, .. } => value == c,
        _ => false,
    }
}

/// `μ((F∘Tⁿ)1_Q)` from the explicit decomposition of `TⁿQ`.
pub fn itinerary_oracle(f: &SiteObservable, q: &Strip, map: &BakerMap, n: u32, budget: u128) -> Result<Rational> {
    let push = push_strip(map, q, n, budget)?;
    Ok(push
        .components
        .iter()
        .map(|c| c.height() * f.value_at(&c.strip.site))
        .sum())
}

/// Cell version: each image strip is intersected with every backward cell
/// and `F` is integrated exactly over the forward cells.
pub fn itinerary_oracle_cell(f: &CellObservable, q: &Strip, map: &BakerMap, n: u32, budget: u128) -> Result<Rational> {
    let push = push_strip(map, q, n, budget)?;
    let mut total = Rational::zero();
    for comp in &push.components {
        let (a, b) = (&comp.strip.a, &comp.strip.b);
        for_each_word(map.symbols(), f.backward_depth(), |bw| {
            let (start, width) = map.table().word_interval(bw);
            let end = &start + &width;
            let lo = if a > &start { a.clone() } else { start };
            let hi = if b < &end { b.clone() } else { end };
            if lo >= hi {
                return;
            }
            let mut inner = Rational::zero();
            for_each_word(map.symbols(), f.forward_depth(), |fw| {
                let key = CellKey {
                    site: comp.strip.site.clone(),
                    backward: bw.to_vec(),
                    forward: fw.to_vec(),
                };
                inner += map.table().word_interval(fw).1 * f.value(&key);
            });
            total += (hi - lo) * inner;
        });
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum RateProfile {
    Fitted {
        /// `−slope` of `ln|v − target|` against `n`.
        exponential_rate: f64,
        /// `−slope` of `ln|v − target|` against `ln n`.
        polynomial_exponent: f64,
        points_used: usize,
        points_at_floor: usize,
    },
    Floor { points_at_floor: usize },
}

pub const NUMERIC_FLOOR: f64 = 1e-14;

pub fn rate_profile(series: &[(u64, f64)], target: f64) -> Result<RateProfile> {
    if series.len() < 4 {
        return Err(Error::DegenerateSeries(format!("need at least 4 points, got {}", series.len())));
    }
    let usable: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v)| (v - target).abs() >= NUMERIC_FLOOR)
        .map(|(n, v)| (*n as f64, (v - target).abs().ln()))
        .collect();
    let floor = series.len() - usable.len();
    if usable.len() < 2 {
        return Ok(RateProfile::Floor { points_at_floor: floor });
    }
    let exp_slope = slope(usable.iter().map(|(n, y)| (*n, *y)));
    let poly = usable.iter().filter(|(n, _)| *n > 0.0).map(|(n, y)| (n.ln(), *y));
    let poly_slope = slope(poly);
    Ok(RateProfile::Fitted {
        exponential_rate: -exp_slope,
        polynomial_exponent: -poly_slope,
        points_used: usable.len(),
        points_at_floor: floor,
    })
}

fn slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points.collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        f64::NAN
    } else {
        sxy / sxx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HierarchyRow {
    pub observable: usize,
    pub n: u64,
    pub m5_gap: f64,
    /// `|μ((F∘Tⁿ)g) − Av(F)μ(g)|` for `g = 1_{S_0}`.
    pub m4_deviation: f64,
    /// `|μ((F∘Tⁿ)g)|` for `g = 1_{S_0} − 1_{S_{e_1}}`.
    pub m3_deviation: f64,
    /// Both deviations within `m5_gap·μ(|g|)`.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub f: usize,
    pub g: usize,
    pub n: u64,
    pub r: u64,
    /// `|μ_V(G) − Av(G)|`.
    pub term1: f64,
    /// `|μ_V(F^n G) − μ(F^n g_V)/μ(V)|`; zero because `g_V = G·1_V`.
    pub term2: f64,
    /// `θ_n·μ_V(|G|)`.
    pub term3: f64,
    /// `term2 + term3 + |Av(F)|·term1`.
    pub bound: f64,
    /// `|μ_V(F^n G) − Av(F)Av(G)|`.
    pub measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub walk: WalkSpec,
    pub hierarchy: Vec<HierarchyRow>,
    pub rows: Vec<AuditRow>,
    pub all_consistent: bool,
    pub all_bounded: bool,
}

/// Audits `M5 ⇒ M4 ⇒ M3` on unit squares and the three-term `M5 ⇒ M2`
/// estimate with `g_j = G·1_{S_α}` on `V = B_{0,r} × [0,1)²`. Observables
/// without a translation-invariant average are skipped.
pub fn implication_audit(p: &WalkDistribution, suite: &[SiteObservable], n_list: &[u64], r_list: &[u64]) -> Result<AuditRecord> {
    let dim = p.dim();
    let origin = LatticePoint::origin(dim);
    let g4 = LocalObservable::unit_square(origin.clone());
    let g3 = LocalObservable::new(
        dim,
        vec![
            (Strip::unit(origin.clone()), Rational::from_integer(BigInt::from(1))),
            (Strip::unit(LatticePoint::unit(dim, 0)), Rational::from_integer(BigInt::from(-1))),
        ],
    )?;
    let mut hierarchy = Vec::new();
    let mut rows = Vec::new();
    let usable: Vec<(usize, &SiteObservable, Rational)> = suite
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.analytic_average(BoxFamily::TranslationInvariant).exact().map(|a| (i, f, a.clone())))
        .collect();
    for (i, f, av) in &usable {
        for &n in n_list {
            let gap = m5_gap(f, p, n, 0)?;
            let m4 = (correlate_global_local(f, &g4, p, n)? - av * g4.integral()).abs();
            let m3 = correlate_global_local(f, &g3, p, n)?.abs();
            hierarchy.push(HierarchyRow {
                observable: *i,
                n,
                m5_gap: rational::to_f64(&gap),
                m4_deviation: rational::to_f64(&m4),
                m3_deviation: rational::to_f64(&m3),
                consistent: m4 <= &gap * g4.mass() && m3 <= &gap * g3.mass(),
            });
        }
    }
    for (i, f, av_f) in &usable {
        for (j, g, av_g) in &usable {
            let abs_g = abs_observable(g)?;
            for &n in n_list {
                let gap = m5_gap(f, p, n, 0)?;
                let evolved = evolve_site(f, p, n)?;
                for &r in r_list {
                    let mu_g = box_average(g, &origin, r)?;
                    let mu_abs = box_average(&abs_g, &origin, r)?;
                    let mixed = box_average_product(&evolved, g, &origin, r)?;
                    let term1 = (&mu_g - av_g).abs();
                    let term3 = &gap * &mu_abs;
                    let bound = &term3 + av_f.abs() * &term1;
                    let measured = (&mixed - av_f * av_g).abs();
                    rows.push(AuditRow {
                        f: *i,
                        g: *j,
                        n,
                        r,
                        term1: rational::to_f64(&term1),
                        term2: 0.0,
                        term3: rational::to_f64(&term3),
                        bound: rational::to_f64(&bound),
                        measured: rational::to_f64(&measured),
                    });
                    debug_assert!(measured <= bound);
                }
            }
        }
    }
    Ok(AuditRecord {
        walk: p.to_spec(),
        all_consistent: hierarchy.iter().all(|h| h.consistent),
        all_bounded: rows.iter().all(|r| r.measured <= r.bound),
        hierarchy,
        rows,
    })
}

fn abs_observable(g: &SiteObservable) -> Result<SiteObservable> {
    use crate::observables::TailModel;
    let abs = |t: &[Rational]| t.iter().map(|v| v.abs()).collect::<Vec<_>>();
    let model = match g.model() {
        TailModel::Periodic { period, table } => TailModel::Periodic {
            period: period.clone(),
            table: abs(table),
        },
        TailModel::ConstantOutsideBox { value, region, table } => TailModel::ConstantOutsideBox {
            value: value.abs(),
            region: region.clone(),
            table: abs(table),
        },
        TailModel::OrthantEventuallyConstant {
            constants,
            region,
            table,
        } => TailModel::OrthantEventuallyConstant {
            constants: abs(constants),
            region: region.clone(),
            table: abs(table),
        },
        TailModel::Clamped { radius, table } => TailModel::Clamped {
            radius: *radius,
            table: abs(table),
        },
    };
    SiteObservable::new(g.dim(), model)
}

/// Columns `n, gap, target_zero`.
pub fn write_m5_csv<W: Write>(out: W, report: &CorrelationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "gap", "target_zero"])?;
    for e in &report.series {
        w.write_record([e.n.to_string(), e.value.to_string(), "0".to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `n, value, target, deviation`.
pub fn write_m4_csv<W: Write>(out: W, report: &CorrelationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "value", "target", "deviation"])?;
    for e in &report.series {
        w.write_record([e.n.to_string(), e.value.to_string(), e.target.to_string(), e.deviation.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `n, r, value, target, deviation`.
pub fn write_m2_csv<W: Write>(out: W, table: &M2Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "r", "value", "target", "deviation"])?;
    for e in &table.entries {
        w.write_record([
            e.n.to_string(),
            e.r.to_string(),
            e.value.to_string(),
            e.target.to_string(),
            e.deviation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `term1, term2, term3, bound, measured`.
pub fn write_audit_csv<W: Write>(out: W, record: &AuditRecord) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term1", "term2", "term3", "bound", "measured"])?;
    for r in &record.rows {
        w.write_record([
            r.term1.to_string(),
            r.term2.to_string(),
            r.term3.to_string(),
            r.bound.to_string(),
            r.measured.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
