//! Reference LPs used by tests, benches and the command-line experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lp::LinearProgram;

/// Axis-aligned box `x1 ≤ 2, x2 ≤ 3` with cost `(1, 2)`.
pub fn lp_box() -> LinearProgram {
    LinearProgram::new(
        vec![1.0, 2.0],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![2.0, 3.0],
    )
    .expect("valid fixture")
}

/// Triangle `x1 + x2 ≤ 4` with cost `(1, 1)`.
pub fn lp_tri() -> LinearProgram {
    LinearProgram::new(vec![1.0, 1.0], vec![vec![1.0, 1.0]], vec![4.0]).expect("valid fixture")
}

/// Five variables, three constraints. The third row loads mostly on the last
/// three variables, the second mostly on the first.
pub fn lp_5d() -> LinearProgram {
    LinearProgram::new(
        vec![0.9, 0.4, 0.6, 0.7, 0.5],
        vec![
            vec![0.30, 0.40, 0.20, 0.10, 0.10],
            vec![0.60, 0.15, 0.10, 0.10, 0.05],
            vec![0.10, 0.10, 0.35, 0.30, 0.40],
        ],
        vec![1.20, 1.00, 1.44],
    )
    .expect("valid fixture")
}

/// Random LP with every entry of c, A and b strictly positive, so the
/// feasible set is a bounded polytope containing the origin.
pub fn random_positive_lp(n: usize, m: usize, seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let a = (0..m)
        .map(|_| (0..n).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let b = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    LinearProgram::new(c, a, b).expect("valid random LP")
}
