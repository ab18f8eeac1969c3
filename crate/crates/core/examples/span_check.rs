//! Irreducibility of each bundled walk, with a torus witness when the
//! support differences miss part of the lattice.

use rwmix::fourier::{char_function, span_witness};
use rwmix::lattice::span_check;
use rwmix::presets;

fn main() -> rwmix::Result<()> {
    for (name, walk) in presets::all_walks() {
        let verdict = span_check(&walk);
        let grid = char_function(&walk.as_f64_signal(), 64)?;
        println!("{name:>13}: {}", serde_json::to_string(&verdict)?);
        println!("{:>13}  max |p~| off 0 on a 64-point grid: {:.6}", "", grid.max_abs_off_origin());
        if let Some(w) = span_witness(&walk) {
            println!("{:>13}  witness theta = {:?}, |p~(theta)| = {}", "", w.theta, w.modulus);
        }
    }
    Ok(())
}
