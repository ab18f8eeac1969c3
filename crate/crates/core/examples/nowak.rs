//! The Wiener-algebra constant and the ℓ¹ ≤ C_d·H^ν̄ inequality.

use rwmix::fourier::{nowak_check, nowak_constant};
use rwmix::lattice::{LatticePoint, LatticeSignal};

fn main() -> rwmix::Result<()> {
    for d in 1..=3 {
        let c = nowak_constant(d)?;
        println!("d = {d}: nu_bar = {}, C_d = {:.6}", c.nu_bar, c.c_d);
    }
    println!("pi/sqrt(3) = {:.6}", std::f64::consts::PI / 3f64.sqrt());

    let a = LatticeSignal::from_entries(
        2,
        (-3..=3).flat_map(|i| (-3..=3).map(move |j| (LatticePoint(vec![i, j]), 1.0 / (1 + i * i + j * j) as f64))),
    )?;
    let check = nowak_check(&a)?;
    println!("{:?}", check);
    Ok(())
}
