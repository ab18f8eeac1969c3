//! The baker lattice map: exact orbits, strip push-forward and a Monte
//! Carlo check of the walk law.

use rwmix::lattice::{convolution_power, LatticePoint};
use rwmix::phase::{chi_square, push_strip, simulate_walk, BakerMap, PhasePoint, Strip, DEFAULT_ITINERARY_BUDGET};
use rwmix::presets;
use rwmix::rational::{format_rational, rat};

fn main() -> rwmix::Result<()> {
    let walk = presets::drifted_1d();
    let map = BakerMap::new(&walk);

    let x = PhasePoint::new(LatticePoint(vec![0]), rat(1, 5), rat(2, 7))?;
    let mut y = x.clone();
    for _ in 0..4 {
        y = map.step(&y);
    }
    for _ in 0..4 {
        y = map.inverse_step(&y);
    }
    assert_eq!(x, y);
    println!("T^-4 T^4 x = x exactly");

    let q = Strip::new(LatticePoint(vec![0]), rat(1, 3), rat(1, 2))?;
    let push = push_strip(&map, &q, 5, DEFAULT_ITINERARY_BUDGET)?;
    println!(
        "T^5 of a strip of height {}: {} components, total height {}",
        format_rational(&q.height()),
        push.components.len(),
        format_rational(&push.total_height())
    );
    for (site, mass) in push.site_masses() {
        println!("  site {:>3}: {}", site.0[0], format_rational(&mass));
    }

    let hist = simulate_walk(&map, 4, 200_000, 7)?;
    let test = chi_square(&hist, &convolution_power(&walk, 4));
    println!(
        "chi-square vs p^(4): statistic {:.3}, dof {}, p-value {:.4}",
        test.statistic, test.degrees_of_freedom, test.p_value
    );
    Ok(())
}
