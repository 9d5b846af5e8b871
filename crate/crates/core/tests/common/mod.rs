//! Brute-force geometry oracles shared by the integration tests.
#![allow(dead_code)]

use lpx::lp::LinearProgram;

/// Determinant by cofactor expansion; fine for n ≤ 3.
pub fn det(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        n => (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(k, _)| *k != j)
                            .map(|(_, v)| *v)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * det(&minor)
            })
            .sum(),
    }
}

/// Cramer's rule over every n-subset of the hyperplanes `Aᵢx = bᵢ` and
/// `xⱼ = 0`, keeping feasible solutions.
pub fn vertex_oracle(lp: &LinearProgram) -> Vec<Vec<f64>> {
    let n = lp.n();
    let mut planes: Vec<(Vec<f64>, f64)> = lp
        .constraints()
        .iter()
        .cloned()
        .zip(lp.bounds().iter().copied())
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let total = planes.len();
    let mut found: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let chosen: Vec<&(Vec<f64>, f64)> = (0..total)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &planes[i])
            .collect();
        let a: Vec<Vec<f64>> = chosen.iter().map(|(row, _)| row.clone()).collect();
        let d = det(&a);
        if d.abs() < 1e-10 {
            continue;
        }
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let mut aj = a.clone();
                for (row, (_, rhs)) in aj.iter_mut().zip(&chosen) {
                    row[j] = *rhs;
                }
                det(&aj) / d
            })
            .collect();
        let feasible =
            x.iter().all(|v| *v >= -1e-9)
                && lp.constraints().iter().zip(lp.bounds()).all(|(row, b)| {
                    row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9
                });
        if feasible && !found.iter().any(|v| dist(v, &x) < 1e-7) {
            found.push(x);
        }
    }
    found
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn same_sets(got: &[Vec<f64>], want: &[Vec<f64>], tol: f64) -> bool {
    got.len() == want.len()
        && want.iter().all(|w| got.iter().any(|g| dist(g, w) <= tol))
        && got.iter().all(|g| want.iter().any(|w| dist(g, w) <= tol))
}

/// Nearest feasible point among a dense grid over `[0, hi]²`.
pub fn grid_projection_oracle(lp: &LinearProgram, x: &[f64], hi: f64, pitch: f64) -> Vec<f64> {
    let steps = (hi / pitch).round() as usize;
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..=steps {
        for j in 0..=steps {
            let p = vec![i as f64 * pitch, j as f64 * pitch];
            if lp.min_slack(&p).unwrap() >= -1e-12 {
                let d = dist(&p, x);
                if d < best.0 {
                    best = (d, p);
                }
            }
        }
    }
    best.1
}

/// Exact 2D projection: the nearest feasible candidate among `x` itself, its
/// orthogonal projections onto each single hyperplane, and the vertices.
pub fn active_set_projection(lp: &LinearProgram, x: &[f64]) -> Vec<f64> {
    let mut candidates = vec![x.to_vec()];
    let mut planes: Vec<(Vec<f64>, f64)> = lp
        .constraints()
        .iter()
        .cloned()
        .zip(lp.bounds().iter().copied())
        .collect();
    planes.push((vec![1.0, 0.0], 0.0));
    planes.push((vec![0.0, 1.0], 0.0));
    for (a, b) in &planes {
        let aa = a[0] * a[0] + a[1] * a[1];
        let t = (a[0] * x[0] + a[1] * x[1] - b) / aa;
        candidates.push(vec![x[0] - t * a[0], x[1] - t * a[1]]);
    }
    candidates.extend(vertex_oracle(lp));
    candidates
        .into_iter()
        .filter(|p| p.iter().all(|v| *v >= -1e-12) && lp.min_slack(p).unwrap() >= -1e-12)
        .min_by(|p, q| dist(p, x).total_cmp(&dist(q, x)))
        .unwrap()
}
