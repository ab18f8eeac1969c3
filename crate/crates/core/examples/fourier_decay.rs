//! Defect norms of the smoothed walk, the local bounds around θ = 0 and
//! the drift-removed characteristic function.

use rwmix::fourier::{defect_norms, drift_removed_char, local_bounds_report, FourierConfig};
use rwmix::presets;

fn main() -> rwmix::Result<()> {
    let walk = presets::third_walk();
    let cfg = FourierConfig::exploratory(1, 0.1)?;
    let n_list = [4u64, 16, 64, 256];
    println!("    n  r_n  l1_grid+sobolev     a_norm      bound");
    for &n in &n_list {
        let (_, d) = defect_norms(&walk, n, &cfg, 1024)?;
        println!("{:>5} {:>4} {:>16.6} {:>10.6} {:>10.6}", d.n, d.r_n, d.recorded(), d.a_norm, d.bound);
    }
    let local = local_bounds_report(&walk, &n_list, &cfg, 1024)?;
    println!("c_hat = {:.4}, kappa fit = {:.4}", local.c_hat, local.kappa_fit);

    let drifted = presets::drifted_1d();
    for n in [3u64, 10, 100] {
        let d = drift_removed_char(&drifted, n, 64)?;
        println!("n = {n:>3}: delta = {:?}, |d/dtheta at 0| = {:.2e}, 1/(2n) = {:.2e}", d.delta, d.gradient_at_zero[0], 0.5 / n as f64);
    }
    Ok(())
}
