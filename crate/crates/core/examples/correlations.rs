//! Global-local correlations from the convolution identity, checked
//! against the itinerary oracle, for a site and a cell observable.

use std::collections::BTreeMap;

use rwmix::lattice::LatticePoint;
use rwmix::mixing::{correlate_cell_local, correlate_global_local, itinerary_oracle, itinerary_oracle_cell};
use rwmix::observables::{CellKey, CellObservable, LocalObservable, SiteObservable};
use rwmix::phase::{BakerMap, Strip, DEFAULT_ITINERARY_BUDGET};
use rwmix::presets;
use rwmix::rational::{format_rational, int, rat};

fn main() -> rwmix::Result<()> {
    let walk = presets::third_walk();
    let map = BakerMap::new(&walk);
    let f = SiteObservable::periodic_from_fn(vec![3], |c| int(c[0] * c[0] - 1))?;
    let q = Strip::new(LatticePoint(vec![2]), rat(1, 4), rat(2, 3))?;
    let g = LocalObservable::strip(q.clone());
    for n in 0..=6u32 {
        let fast = correlate_global_local(&f, &g, &walk, n as u64)?;
        let oracle = itinerary_oracle(&f, &q, &map, n, DEFAULT_ITINERARY_BUDGET)?;
        assert_eq!(fast, oracle);
        println!("n = {n}: {}", format_rational(&fast));
    }

    // depth-1 observable depending on the first digit of each coordinate
    let mut values = BTreeMap::new();
    for site in -2..=2 {
        for bw in 0..3 {
            for fw in 0..3 {
                let key = CellKey {
                    site: LatticePoint(vec![site]),
                    backward: vec![bw],
                    forward: vec![fw],
                };
                values.insert(key, rat((site + bw as i64 - fw as i64).rem_euclid(3), 2));
            }
        }
    }
    let cell = CellObservable::new(1, 1, 1, values, int(0))?;
    for n in 1..=4u32 {
        let reduced = correlate_cell_local(&cell, &g, &map, n as u64)?;
        let oracle = itinerary_oracle_cell(&cell, &q, &map, n, DEFAULT_ITINERARY_BUDGET)?;
        assert_eq!(reduced, oracle);
        println!("cell, n = {n}: {}", format_rational(&reduced));
    }
    Ok(())
}
