//! Numerical audit of M5 ⇒ M4 ⇒ M3 and of the three-term M5 ⇒ M2 bound.

use rwmix::mixing::{implication_audit, write_audit_csv};
use rwmix::observables::SiteObservable;
use rwmix::presets;
use rwmix::rational::int;

fn main() -> rwmix::Result<()> {
    let suite = vec![
        SiteObservable::parity(1),
        SiteObservable::constant(1, int(3)),
        SiteObservable::periodic_from_fn(vec![4], |c| int(c[0] % 2 + c[0] / 2))?,
    ];
    let record = implication_audit(&presets::third_walk(), &suite, &[1, 4, 16], &[5, 50])?;
    println!("hierarchy consistent: {}, bound dominates: {}", record.all_consistent, record.all_bounded);
    write_audit_csv(std::io::stdout(), &record)?;
    Ok(())
}
