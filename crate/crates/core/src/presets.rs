//! Bundled walks: `third-walk`, `drifted-1d`, `reducible-1d`, `lazy-2d`.

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, WalkDistribution};
use crate::rational::rat;

pub const PRESET_NAMES: [&str; 4] = ["third-walk", "drifted-1d", "reducible-1d", "lazy-2d"];

/// Steps −1, 0, +1 on `Z`, each with probability 1/3.
pub fn third_walk() -> WalkDistribution {
    WalkDistribution::new(
        1,
        vec![
            (LatticePoint(vec![-1]), rat(1, 3)),
            (LatticePoint(vec![0]), rat(1, 3)),
            (LatticePoint(vec![1]), rat(1, 3)),
        ],
    )
    .expect("valid preset")
}

/// `{+1: 2/3, −1: 1/3}`, drift 1/3.
pub fn drifted_1d() -> WalkDistribution {
    WalkDistribution::new(
        1,
        vec![(LatticePoint(vec![1]), rat(2, 3)), (LatticePoint(vec![-1]), rat(1, 3))],
    )
    .expect("valid preset")
}

/// `{0: 1/2, 2: 1/2}`; the differences only span `2Z`.
pub fn reducible_1d() -> WalkDistribution {
    WalkDistribution::new(
        1,
        vec![(LatticePoint(vec![0]), rat(1, 2)), (LatticePoint(vec![2]), rat(1, 2))],
    )
    .expect("valid preset")
}

/// Uniform on `{0, ±e₁, ±e₂}`.
pub fn lazy_2d() -> WalkDistribution {
    let mut s = vec![(LatticePoint::origin(2), rat(1, 5))];
    for axis in 0..2 {
        let e = LatticePoint::unit(2, axis);
        s.push((e.clone(), rat(1, 5)));
        s.push((e.neg(), rat(1, 5)));
    }
    WalkDistribution::new(2, s).expect("valid preset")
}

pub fn walk_preset(name: &str) -> Result<WalkDistribution> {
    match name {
        "third-walk" => Ok(third_walk()),
        "drifted-1d" => Ok(drifted_1d()),
        "reducible-1d" => Ok(reducible_1d()),
        "lazy-2d" => Ok(lazy_2d()),
        other => Err(Error::InvalidConfig(format!(
            "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
        ))),
    }
}

pub fn all_walks() -> Vec<(&'static str, WalkDistribution)> {
    PRESET_NAMES
        .iter()
        .map(|n| (*n, walk_preset(n).expect("bundled")))
        .collect()
}
