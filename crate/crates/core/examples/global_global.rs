//! Global-global mixing: M2 tables with the ε-M scan, the M1 limit, and
//! the two ways it fails.

use rwmix::mixing::{m1_limit, m2_table, DEFAULT_EPSILONS};
use rwmix::observables::{BoxFamily, SiteObservable};
use rwmix::presets;
use rwmix::rational::int;

fn main() -> rwmix::Result<()> {
    let walk = presets::third_walk();
    let parity = SiteObservable::parity(1);
    let g = SiteObservable::periodic_from_fn(vec![3], |c| int(c[0]))?;
    let table = m2_table(&parity, &g, &walk, &[2, 10, 20], &[10, 1000], BoxFamily::TranslationInvariant, &DEFAULT_EPSILONS, 0)?;
    for e in &table.entries {
        println!("n = {:>2}, r = {:>4}: deviation {:.3e}", e.n, e.r, e.deviation);
    }
    for s in &table.scan {
        println!("epsilon {:e}: M = {:?}", s.epsilon, s.m);
    }

    // the sign observable on centered boxes stays correlated with itself
    let sign = SiteObservable::sign1d();
    let t = m2_table(&sign, &sign, &walk, &[10], &[10, 100, 10_000], BoxFamily::CenteredOnly, &[], 0)?;
    for e in &t.entries {
        println!("sign, r = {:>5}: {} (Av(F)^2 = 0)", e.r, e.value);
    }

    let even = SiteObservable::even_sites(1);
    println!("reducible walk, even sites: {:?}", m1_limit(&even, &even, &presets::reducible_1d(), 7)?);
    println!("third walk, parity:         {:?}", m1_limit(&parity, &parity, &walk, 7)?);
    Ok(())
}
