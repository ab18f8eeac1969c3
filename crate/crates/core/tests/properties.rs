use std::collections::BTreeMap;

use num_complex::Complex64;
use num_traits::{Signed, Zero};
use proptest::prelude::*;

use rwmix::fourier::{
    a_norm, box_kernel, char_function, drift_removed_char, h_norm, nowak_constant, parseval_pairing, periodic_pairing,
};
use rwmix::lattice::{
    a1_bound_constant, a1_defect, convolution_power, convolve, drift, span_check, span_check_from, LatticeBox,
    LatticePoint, LatticeSignal, WalkDistribution,
};
use rwmix::mixing::{correlate_global_local, itinerary_oracle, m5_gap};
use rwmix::observables::{
    box_average, box_average_product, evolve_site, reduce_to_site, BoxFamily, CellKey, CellObservable, LocalObservable,
    SiteObservable,
};
use rwmix::phase::{itinerary_count, push_strip, BakerMap, PhasePoint, Strip};
use rwmix::presets;
use rwmix::rational::{int, rat, Rational};

fn walk_strategy(max_dim: usize) -> impl Strategy<Value = WalkDistribution> {
    (1..=max_dim)
        .prop_flat_map(|d| (Just(d), prop::collection::btree_set(prop::collection::vec(-2i64..=2, d), 2..=4)))
        .prop_flat_map(|(d, pts)| {
            let n = pts.len();
            (Just(d), Just(pts), prop::collection::vec(1i64..=6, n))
        })
        .prop_map(|(d, pts, w)| {
            let total: i64 = w.iter().sum();
            let support = pts.into_iter().zip(w).map(|(p, wi)| (LatticePoint(p), rat(wi, total))).collect();
            WalkDistribution::new(d, support).unwrap()
        })
}

/// Periodic observable with periods in `1..=3` and small rational values.
fn periodic_for(dim: usize) -> impl Strategy<Value = SiteObservable> {
    (prop::collection::vec(1i64..=3, dim), prop::collection::vec((-5i64..=5, 1i64..=4), 9)).prop_map(
        move |(period, vals)| {
            let q = period.clone();
            SiteObservable::periodic_from_fn(period, move |c| {
                let idx = c.iter().zip(&q).fold(0i64, |acc, (x, p)| acc * p + x) as usize;
                let (a, b) = vals[idx % vals.len()];
                rat(a, b)
            })
            .unwrap()
        },
    )
}

fn walk_and_periodic(max_dim: usize) -> impl Strategy<Value = (WalkDistribution, SiteObservable)> {
    walk_strategy(max_dim).prop_flat_map(|w| {
        let d = w.dim();
        (Just(w), periodic_for(d))
    })
}

fn unit_interval() -> impl Strategy<Value = Rational> {
    (0i64..=96, 97i64..=100).prop_map(|(a, b)| rat(a, b))
}

fn strip_for(dim: usize) -> impl Strategy<Value = Strip> {
    (prop::collection::vec(-3i64..=3, dim), unit_interval(), unit_interval())
        .prop_filter("nonempty", |(_, a, b)| a != b)
        .prop_map(|(site, a, b)| {
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            Strip::new(LatticePoint(site), a, b).unwrap()
        })
}

fn signal_f64(dim: usize) -> impl Strategy<Value = LatticeSignal<f64>> {
    prop::collection::vec((prop::collection::vec(-4i64..=4, dim), -1.0f64..1.0), 1..12)
        .prop_map(move |e| LatticeSignal::from_entries(dim, e.into_iter().map(|(p, v)| (LatticePoint(p), v))).unwrap())
}

fn any_signal() -> impl Strategy<Value = LatticeSignal<f64>> {
    (1usize..=2).prop_flat_map(signal_f64)
}

fn signal_pair() -> impl Strategy<Value = (LatticeSignal<f64>, LatticeSignal<f64>)> {
    (1usize..=2).prop_flat_map(|d| (signal_f64(d), signal_f64(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convolution_powers_are_probability_semigroup(p in walk_strategy(2), m in 0u64..=5, n in 0u64..=5) {
        let pm = convolution_power(&p, m);
        let pn = convolution_power(&p, n);
        prop_assert_eq!(pm.total(), int(1));
        prop_assert_eq!(convolution_power(&p, m + n), convolve(&pm, &pn).unwrap());
    }

    #[test]
    fn drift_is_linear_in_n(p in walk_strategy(2), n in 0u64..=10) {
        let pn = convolution_power(&p, n);
        let v = drift(&p);
        for i in 0..p.dim() {
            let mean: Rational = pn.iter().map(|(b, w)| w * int(b.0[i])).sum();
            prop_assert_eq!(mean, &v[i] * int(n as i64));
        }
    }

    #[test]
    fn span_verdict_ignores_translation_and_enumeration(p in walk_strategy(2), shift in prop::collection::vec(-5i64..=5, 2)) {
        let v = span_check(&p);
        let gamma = LatticePoint(shift[..p.dim()].to_vec());
        prop_assert_eq!(&span_check(&p.translated(&gamma)), &v);
        for base in 0..p.len() {
            prop_assert_eq!(&span_check_from(&p, base), &v);
        }
    }

    #[test]
    fn a1_defect_is_order_one_over_r(p in walk_strategy(2), r in 1u64..=2000) {
        let d = a1_defect(&p, r).unwrap();
        prop_assert!(d * int(r as i64) <= a1_bound_constant(&p));
    }

    #[test]
    fn push_strip_preserves_height_and_matches_law((p, q) in walk_strategy(2).prop_flat_map(|w| { let d = w.dim(); (Just(w), strip_for(d)) }), n in 0u32..=6) {
        prop_assume!(itinerary_count(p.len(), n) <= 5_000);
        let map = BakerMap::new(&p);
        let push = push_strip(&map, &q, n, 5_000).unwrap();
        prop_assert_eq!(push.total_height(), q.height());
        let law = convolution_power(&p, n as u64);
        for (site, mass) in push.site_masses() {
            prop_assert_eq!(mass / q.height(), law.value_at(&site.sub(&q.site)));
        }
    }

    #[test]
    fn step_round_trips(p in walk_strategy(2), y1 in unit_interval(), y2 in unit_interval(), k in 1usize..=5) {
        let map = BakerMap::new(&p);
        let x = PhasePoint::new(LatticePoint::origin(p.dim()), y1, y2).unwrap();
        let mut y = x.clone();
        for _ in 0..k { y = map.step(&y); }
        for _ in 0..k { y = map.inverse_step(&y); }
        prop_assert_eq!(y, x);
    }

    #[test]
    fn refinement_is_markov(p in walk_strategy(2), q in strip_for(1)) {
        let map = BakerMap::new(&p);
        let q = Strip::new(LatticePoint::origin(p.dim()), q.a, q.b).unwrap();
        for (k, (width, piece)) in map.refine_strip(&q).into_iter().enumerate() {
            prop_assert_eq!(piece.height() / q.height(), width.clone());
            prop_assert_eq!(&width, map.table().width(k));
        }
    }

    #[test]
    fn box_average_is_box_kernel_convolution(f in periodic_for(1), r in 0u64..=20, g in -30i64..=30) {
        let center = LatticePoint(vec![g]);
        let window = LatticeBox::cube(&center, r as i64);
        let restricted = LatticeSignal::from_entries(1, window.points().map(|a| { let v = f.value_at(&a); (a, v) })).unwrap();
        let smoothed = convolve(&box_kernel(1, r), &restricted).unwrap();
        prop_assert_eq!(box_average(&f, &center, r).unwrap(), smoothed.value_at(&center));
    }

    #[test]
    fn periodic_box_averages_converge_uniformly(f in periodic_for(2), r in 1u64..=1000, c in prop::collection::vec(-10_000i64..=10_000, 2)) {
        let mean = f.analytic_average(BoxFamily::TranslationInvariant).exact().unwrap().clone();
        let err = (box_average(&f, &LatticePoint(c), r).unwrap() - mean).abs();
        let periods: i64 = f.period().unwrap().iter().map(|q| q - 1).sum();
        prop_assert!(err <= int(2) * f.bound() * rat(periods, 2 * r as i64 + 1));
    }

    #[test]
    fn evolve_is_a_semigroup((p, f) in walk_and_periodic(2), m in 0u64..=4, n in 0u64..=4) {
        let direct = evolve_site(&f, &p, m + n).unwrap();
        let twice = evolve_site(&evolve_site(&f, &p, m).unwrap(), &p, n).unwrap();
        for a in LatticeBox::cube(&LatticePoint::origin(p.dim()), 4).points() {
            prop_assert_eq!(direct.value_at(&a), twice.value_at(&a));
        }
    }

    #[test]
    fn reduction_preserves_bounds(p in walk_strategy(1), vals in prop::collection::vec(-9i64..=9, 1..40), outside in -3i64..=3) {
        let map = BakerMap::new(&p);
        let n = p.len();
        let mut values = BTreeMap::new();
        for (i, v) in vals.iter().enumerate() {
            let key = CellKey { site: LatticePoint(vec![(i / (n * n)) as i64 - 2]), backward: vec![(i / n) % n], forward: vec![i % n] };
            values.insert(key, rat(*v, 4));
        }
        let f = CellObservable::new(1, 1, 1, values, int(outside)).unwrap();
        let reduced = reduce_to_site(&f, &map).unwrap();
        prop_assert!(reduced.bound() <= f.bound());
    }

    #[test]
    fn sign_counterexample_bound(p in walk_strategy(1), n in 0u64..=10, r in 1u64..=10_000) {
        let sign = SiteObservable::sign1d();
        let origin = LatticePoint::origin(1);
        let v = box_average_product(&evolve_site(&sign, &p, n).unwrap(), &sign, &origin, r).unwrap();
        let slack = rat(2 * n as i64 * p.max_step(), 2 * r as i64 + 1);
        prop_assert!(v >= int(1) - slack);
        prop_assert_eq!(sign.analytic_average(BoxFamily::CenteredOnly).exact().cloned(), Some(int(0)));
    }

    #[test]
    fn convolution_theorem((a, b) in signal_pair()) {
        let ga = char_function(&a, 16).unwrap();
        let gb = char_function(&b, 16).unwrap();
        let gc = char_function(&convolve(&a, &b).unwrap(), 16).unwrap();
        for i in 0..gc.len() {
            prop_assert!((gc.values()[i] - ga.values()[i] * gb.values()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn a_norm_ignores_translation_and_modulation(a in any_signal(), shift in prop::collection::vec(-7i64..=7, 2), phase in -3.0f64..3.0) {
        let d = a.dim();
        let gamma = LatticePoint(shift[..d].to_vec());
        let base = a_norm(&a);
        prop_assert!((a_norm(&a.translate(&gamma)) - base).abs() < 1e-12);
        let modulated = a.map(|p, v| Complex64::from_polar(*v, phase * p.0.iter().zip(&gamma.0).map(|(x, y)| (x * y) as f64).sum::<f64>()));
        prop_assert!((a_norm(&modulated) - base).abs() < 1e-12);
    }

    #[test]
    fn parseval_sides_agree((a, b) in signal_pair()) {
        let pair = parseval_pairing(&a, &b, 32).unwrap();
        prop_assert!(pair.discrepancy() < 1e-10);
    }

    #[test]
    fn nowak_inequality_holds(a in any_signal()) {
        let c = nowak_constant(a.dim()).unwrap();
        prop_assert!(a_norm(&a) <= c.c_d * h_norm(&a, c.nu_bar) * (1.0 + 1e-12));
    }

    #[test]
    fn oracle_matches_convolution_identity((p, f) in walk_and_periodic(2), q in strip_for(2), n in 0u32..=6) {
        prop_assume!(itinerary_count(p.len(), n) <= 100_000);
        let q = Strip::new(LatticePoint(q.site.0[..p.dim()].to_vec()), q.a, q.b).unwrap();
        let map = BakerMap::new(&p);
        let oracle = itinerary_oracle(&f, &q, &map, n, 100_000).unwrap();
        prop_assert_eq!(oracle, correlate_global_local(&f, &LocalObservable::strip(q), &p, n as u64).unwrap());
    }

    #[test]
    fn m5_gap_ignores_translation_and_strip_choice((p, f) in walk_and_periodic(2), shift in prop::collection::vec(-4i64..=4, 2), n in 0u64..=8, q in strip_for(2)) {
        let d = p.dim();
        let gamma = LatticePoint(shift[..d].to_vec());
        prop_assert_eq!(m5_gap(&f, &p, n, 0).unwrap(), m5_gap(&f, &p.translated(&gamma), n, 0).unwrap());
        let site = LatticePoint(q.site.0[..d].to_vec());
        let per_height = |s: Strip| correlate_global_local(&f, &LocalObservable::strip(s.clone()), &p, n).unwrap() / s.height();
        prop_assert_eq!(per_height(Strip::new(site.clone(), q.a.clone(), q.b.clone()).unwrap()), per_height(Strip::unit(site)));
    }

    #[test]
    fn space_and_fourier_pairings_agree((p, f) in walk_and_periodic(2), n in 0u64..=64, at in prop::collection::vec(-5i64..=5, 2)) {
        let pair = periodic_pairing(&f, &p, n, &LatticePoint(at[..p.dim()].to_vec())).unwrap();
        prop_assert!((pair.fourier.re - pair.space).abs() < 1e-10 && pair.fourier.im.abs() < 1e-10);
    }

    #[test]
    fn drift_removal_gradient(p in walk_strategy(2), n in 1u64..=200) {
        let d = drift_removed_char(&p, n, 8).unwrap();
        for g in &d.gradient_at_zero {
            prop_assert!(*g <= 0.5 / n as f64 + 1e-12);
        }
    }
}

#[test]
fn third_walk_gap_is_nonincreasing() {
    let walk = presets::third_walk();
    let parity = SiteObservable::parity(1);
    let gaps: Vec<Rational> = (0..=40).map(|n| m5_gap(&parity, &walk, n, 0).unwrap()).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(gaps[40], rat(1, 3).pow(40));
}

#[test]
fn modulus_below_one_iff_full_lattice() {
    for (name, walk) in presets::all_walks() {
        let grid = char_function(&walk.as_f64_signal(), 48).unwrap();
        let below = grid.max_abs_off_origin() < 1.0 - 1e-12;
        assert_eq!(below, span_check(&walk).is_full(), "{name}");
    }
}

#[test]
fn zero_mean_periodic_gaps_vanish_on_irreducible_presets() {
    for (name, walk) in presets::all_walks() {
        let d = walk.dim();
        let f = SiteObservable::periodic_from_fn(vec![2; d], |c| if c.iter().sum::<i64>() % 2 == 0 { int(1) } else { int(-1) }).unwrap();
        let g0 = m5_gap(&f, &walk, 0, 0).unwrap();
        let g = m5_gap(&f, &walk, 60, 0).unwrap();
        if span_check(&walk).is_full() {
            assert!(g < g0 * rat(1, 100), "{name}");
        } else {
            assert!(!g.is_zero() && g >= int(1), "{name}");
        }
    }
}
