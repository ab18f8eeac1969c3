//! M5 gaps and their fitted rates, plus the M4 and M3 series.

use rwmix::lattice::LatticePoint;
use rwmix::mixing::{m4_report, m5_report, rate_profile, write_m5_csv};
use rwmix::observables::{LocalObservable, SiteObservable};
use rwmix::phase::Strip;
use rwmix::presets;
use rwmix::rational::int;

fn main() -> rwmix::Result<()> {
    let parity = SiteObservable::parity(1);
    let n_list: Vec<u64> = (0..=12).collect();
    for (name, walk) in [("third-walk", presets::third_walk()), ("reducible-1d", presets::reducible_1d())] {
        let report = m5_report(&parity, &walk, &n_list, 0, "parity")?;
        println!("{name}: {:?}", rate_profile(&report.gap_series, 0.0)?);
        if name == "third-walk" {
            write_m5_csv(std::io::stdout(), &report)?;
        }
    }

    let walk = presets::lazy_2d();
    let f = SiteObservable::periodic_from_fn(vec![2, 2], |c| int(c[0] + 2 * c[1]))?;
    let m4 = m4_report(&f, &LocalObservable::unit_square(LatticePoint::origin(2)), &walk, &[0, 5, 10, 20], "F")?;
    let dipole = LocalObservable::new(
        2,
        vec![
            (Strip::unit(LatticePoint(vec![0, 0])), int(1)),
            (Strip::unit(LatticePoint(vec![1, 0])), int(-1)),
        ],
    )?;
    let m3 = m4_report(&f, &dipole, &walk, &[0, 5, 10, 20], "F")?;
    for (a, b) in m4.series.iter().zip(&m3.series) {
        println!("n = {:>2}: {:?} deviation {:.3e}, {:?} deviation {:.3e}", a.n, m4.kind, a.deviation, m3.kind, b.deviation);
    }
    Ok(())
}
