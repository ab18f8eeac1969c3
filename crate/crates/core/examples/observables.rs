//! Tail-modeled observables, exact box averages and the boundary defect.

use rwmix::lattice::{a1_bound_constant, a1_defect, LatticeBox, LatticePoint};
use rwmix::observables::{
    box_average, default_centers, estimate_average, evolve_site, BoxFamily, SiteObservable, TailModel,
};
use rwmix::presets;
use rwmix::rational::{format_rational, int, to_f64};

fn main() -> rwmix::Result<()> {
    let sign = SiteObservable::sign1d();
    let parity = SiteObservable::parity(1);
    let bump = SiteObservable::new(
        1,
        TailModel::ConstantOutsideBox {
            value: int(1),
            region: LatticeBox::new(vec![-1], vec![1])?,
            table: vec![int(4), int(-2), int(4)],
        },
    )?;
    let origin = LatticePoint::origin(1);
    for r in [1u64, 10, 10_000] {
        println!(
            "r = {r:>5}: parity {}, bump {}",
            format_rational(&box_average(&parity, &origin, r)?),
            format_rational(&box_average(&bump, &origin, r)?)
        );
    }

    let centers = default_centers(1, 8, 1);
    for family in [BoxFamily::TranslationInvariant, BoxFamily::CenteredOnly] {
        let est = estimate_average(&sign, family, &[10, 100, 1000], &centers)?;
        println!("sign, {family:?}: {:?}, defect {:.3}", est.value, est.uniformity_defect);
    }

    let evolved = evolve_site(&bump, &presets::third_walk(), 3)?;
    println!("bump after 3 steps at 0: {}", format_rational(&evolved.value_at(&origin)));

    let walk = presets::lazy_2d();
    for r in [10u64, 100, 1000] {
        let d = a1_defect(&walk, r)?;
        println!("lazy-2d A1 defect r = {r:>4}: r * defect = {:.5}", to_f64(&d) * r as f64);
    }
    println!("bound constant: {}", format_rational(&a1_bound_constant(&walk)));
    Ok(())
}
