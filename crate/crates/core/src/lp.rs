//! Geometry of a fixed linear program `min cᵀx  s.t.  Ax ≤ b, x ≥ 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Tolerance on constraint slacks.
pub const FEAS_TOL: f64 = 1e-9;
/// Two vertices closer than this are the same vertex.
pub const VERTEX_DEDUP_TOL: f64 = 1e-7;
/// Convergence tolerance of the feasible-set projection.
pub const PROJ_TOL: f64 = 1e-8;
/// Sweep cap of the feasible-set projection.
pub const PROJ_MAX_SWEEPS: usize = 10_000;

const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

/// A linear program with fixed cost vector, constraint matrix and bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LpFile", into = "LpFile")]
pub struct LinearProgram {
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// On-disk layout of an LP file.
#[derive(Serialize, Deserialize)]
struct LpFile {
    n: usize,
    m: usize,
    c: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<LpFile> for LinearProgram {
    type Error = Error;

    fn try_from(f: LpFile) -> Result<Self> {
        let lp = LinearProgram::new(f.c, f.a, f.b)?;
        if lp.n() != f.n || lp.m() != f.m {
            return Err(Error::Format(format!(
                "declared n={}, m={} but arrays give n={}, m={}",
                f.n,
                f.m,
                lp.n(),
                lp.m()
            )));
        }
        Ok(lp)
    }
}

impl From<LinearProgram> for LpFile {
    fn from(lp: LinearProgram) -> Self {
        LpFile {
            n: lp.n(),
            m: lp.m(),
            c: lp.c,
            a: lp.a,
            b: lp.b,
        }
    }
}

impl LinearProgram {
    pub fn new(c: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::config("LP needs at least one variable"));
        }
        if a.is_empty() {
            return Err(Error::config("LP needs at least one constraint"));
        }
        check_dim(a.len(), b.len())?;
        for row in &a {
            check_dim(n, row.len())?;
        }
        let finite = c
            .iter()
            .chain(b.iter())
            .chain(a.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("LP coefficients".into()));
        }
        Ok(LinearProgram { c, a, b })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.c
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn bounds(&self) -> &[f64] {
        &self.b
    }

    /// True iff every entry of c, A and b is strictly positive.
    pub fn is_strictly_positive(&self) -> bool {
        self.c
            .iter()
            .chain(self.b.iter())
            .chain(self.a.iter().flatten())
            .all(|&v| v > 0.0)
    }

    /// True iff c and b are strictly positive and A is nonnegative: the
    /// setting the gain-penalty encoding needs (it only relies on the origin
    /// being feasible and on `cᵀx > 0` away from it).
    pub fn admits_gain_penalty(&self) -> bool {
        self.c.iter().chain(self.b.iter()).all(|&v| v > 0.0)
            && self.a.iter().flatten().all(|&v| v >= 0.0)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n(), x.len())?;
        Ok(linalg::dot(&self.c, x))
    }

    /// Per-row slacks `b − Ax`.
    pub fn slacks(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), x.len())?;
        Ok(self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| bi - linalg::dot(row, x))
            .collect())
    }

    /// Smallest slack over the constraint rows. Ignores `x ≥ 0`.
    pub fn min_slack(&self, x: &[f64]) -> Result<f64> {
        Ok(self.slacks(x)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// `Ax ≤ b` and `x ≥ 0`, both inclusive up to [`FEAS_TOL`].
    pub fn is_feasible(&self, x: &[f64]) -> Result<bool> {
        let slack = self.min_slack(x)?;
        Ok(slack >= -FEAS_TOL && x.iter().all(|&v| v >= -FEAS_TOL))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("LP serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// The `m + n` bounding hyperplanes as `(normal, offset)` with the
    /// feasible side `normal · x ≤ offset`: constraint rows first, then
    /// `−x_i ≤ 0` for each axis.
    fn halfspaces(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.n();
        let mut out: Vec<(Vec<f64>, f64)> =
            self.a.iter().cloned().zip(self.b.iter().copied()).collect();
        for i in 0..n {
            let mut normal = vec![0.0; n];
            normal[i] = -1.0;
            out.push((normal, 0.0));
        }
        out
    }

    /// Extreme points of `{Ax ≤ b, x ≥ 0}`, sorted lexicographically.
    ///
    /// Every choice of `n` hyperplanes out of the `m` constraint rows and the
    /// `n` coordinate planes is intersected; nonsingular intersections that
    /// are feasible are kept. The polytope must be bounded; this is not
    /// checked.
    pub fn enumerate_vertices(&self) -> Result<VertexSet> {
        let n = self.n();
        let planes = self.halfspaces();
        let mut vertices: Vec<Vec<f64>> = Vec::new();

        for subset in Combinations::new(planes.len(), n) {
            let a: Vec<Vec<f64>> = subset.iter().map(|&k| planes[k].0.clone()).collect();
            let rhs: Vec<f64> = subset.iter().map(|&k| planes[k].1).collect();
            let Some(mut x) = linalg::solve(a, rhs, SINGULAR_TOL) else {
                continue;
            };
            // Snap -0.0 and solver dust on active axes.
            for &k in &subset {
                if k >= self.m() {
                    x[k - self.m()] = 0.0;
                }
            }
            if !self.is_feasible(&x)? {
                continue;
            }
            if vertices
                .iter()
                .all(|v| linalg::distance(v, &x) > VERTEX_DEDUP_TOL)
            {
                vertices.push(x);
            }
        }

        if vertices.is_empty() {
            return Err(Error::NoVertices);
        }
        vertices.sort_by(|p, q| lex_cmp(p, q));
        let origin_included = vertices.iter().any(|v| v.iter().all(|&c| c == 0.0));
        Ok(VertexSet {
            vertices,
            origin_included,
        })
    }

    /// Euclidean projection onto the feasible set by Dykstra's alternating
    /// projections over the `m + n` halfspaces. Feasible points are returned
    /// unchanged.
    pub fn project_feasible(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), x.len())?;
        if self.is_feasible(x)? {
            return Ok(x.to_vec());
        }
        let planes = self.halfspaces();
        let norms_sq: Vec<f64> = planes.iter().map(|(a, _)| linalg::dot(a, a)).collect();
        let n = self.n();
        let mut point = x.to_vec();
        // Dykstra correction terms, one per halfspace.
        let mut corrections = vec![vec![0.0; n]; planes.len()];
        let mut y = vec![0.0; n];

        // The iterate alone can creep along a narrow corner while the
        // corrections are still far from settled, so both must stall.
        let mut residual = f64::INFINITY;
        for _ in 0..PROJ_MAX_SWEEPS {
            let mut change_sq = 0.0;
            for (k, (normal, offset)) in planes.iter().enumerate() {
                for i in 0..n {
                    y[i] = point[i] + corrections[k][i];
                }
                let excess = linalg::dot(normal, &y) - offset;
                let step = if excess > 0.0 && norms_sq[k] > 0.0 {
                    excess / norms_sq[k]
                } else {
                    0.0
                };
                for i in 0..n {
                    let projected = y[i] - step * normal[i];
                    let correction = y[i] - projected;
                    change_sq +=
                        (correction - corrections[k][i]).powi(2) + (projected - point[i]).powi(2);
                    corrections[k][i] = correction;
                    point[i] = projected;
                }
            }
            let violation = self.violation(&point);
            residual = change_sq.sqrt().max(violation);
            if change_sq.sqrt() <= PROJ_TOL * 1e-2 && violation <= FEAS_TOL {
                return Ok(point);
            }
        }
        Err(Error::ProjectionFailed {
            best: point,
            sweeps: PROJ_MAX_SWEEPS,
            residual,
        })
    }

    /// Largest violation of any constraint row or nonnegativity bound.
    fn violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| linalg::dot(row, x) - bi);
        let axes = x.iter().map(|&v| -v);
        rows.chain(axes).fold(0.0, f64::max)
    }

    /// Optimizes `cᵀx` over the vertices. Objective ties within a relative
    /// `1e-12` go to the lexicographically smallest vertex.
    pub fn solve_on_vertices(&self, direction: Direction) -> Result<(Vec<f64>, f64)> {
        let vertices = match self.enumerate_vertices() {
            Ok(v) => v,
            Err(Error::NoVertices) => {
                return Err(Error::NoSolution("feasible set has no vertices".into()))
            }
            Err(e) => return Err(e),
        };
        let sign = match direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let mut best: Option<(&Vec<f64>, f64)> = None;
        // Vertices are already in lexicographic order, so only strict
        // improvements replace the incumbent.
        for v in &vertices.vertices {
            let value = linalg::dot(&self.c, v);
            let improves = match best {
                None => true,
                Some((_, incumbent)) => {
                    sign * (value - incumbent) < -1e-12 * (1.0 + incumbent.abs())
                }
            };
            if improves {
                best = Some((v, value));
            }
        }
        let (v, value) = best.ok_or_else(|| Error::NoSolution("no vertices".into()))?;
        Ok((v.clone(), value))
    }
}

/// Vertices of a bounded polytope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSet {
    pub vertices: Vec<Vec<f64>>,
    pub origin_included: bool,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.vertices
            .iter()
            .any(|v| linalg::distance(v, x) <= VERTEX_DEDUP_TOL)
    }

    /// Per-dimension `(min, max)` over the vertices.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        let n = self.vertices.first().map_or(0, Vec::len);
        (0..n)
            .map(|i| {
                self.vertices
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v[i]), hi.max(v[i]))
                    })
            })
            .collect()
    }
}

pub(crate) fn lex_cmp(p: &[f64], q: &[f64]) -> std::cmp::Ordering {
    for (a, b) in p.iter().zip(q) {
        match a.total_cmp(b) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    p.len().cmp(&q.len())
}

/// k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{lp_box, lp_tri};

    #[test]
    fn feasibility_on_box() {
        let lp = lp_box();
        assert!(lp.is_feasible(&[1.0, 1.0]).unwrap());
        assert!(lp.is_feasible(&[2.0, 3.0]).unwrap());
        assert!(!lp.is_feasible(&[3.0, 1.0]).unwrap());
        assert!(!lp.is_feasible(&[1.0, -0.1]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let lp = lp_box();
        assert!(matches!(
            lp.is_feasible(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(lp.min_slack(&[1.0, 2.0, 3.0]).is_err());
        assert!(lp.project_feasible(&[1.0]).is_err());
    }

    #[test]
    fn min_slack_on_box() {
        let lp = lp_box();
        assert_eq!(lp.min_slack(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(lp.min_slack(&[2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(lp.min_slack(&[3.0, 4.0]).unwrap(), -1.0);
    }

    #[test]
    fn vertices_of_box_and_triangle() {
        let v = lp_box().enumerate_vertices().unwrap();
        assert_eq!(
            v.vertices,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 3.0],
                vec![2.0, 0.0],
                vec![2.0, 3.0]
            ]
        );
        assert!(v.origin_included);
        let v = lp_tri().enumerate_vertices().unwrap();
        assert_eq!(
            v.vertices,
            vec![vec![0.0, 0.0], vec![0.0, 4.0], vec![4.0, 0.0]]
        );
    }

    #[test]
    fn empty_polytope_has_no_vertices() {
        // x1 + x2 <= -1 with x >= 0 is empty.
        let lp = LinearProgram::new(vec![1.0, 1.0], vec![vec![1.0, 1.0]], vec![-1.0]).unwrap();
        assert!(matches!(lp.enumerate_vertices(), Err(Error::NoVertices)));
        assert!(matches!(
            lp.project_feasible(&[1.0, 1.0]),
            Err(Error::ProjectionFailed { .. })
        ));
        assert!(!lp.is_feasible(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn projection_examples() {
        let lp = lp_box();
        assert_eq!(lp.project_feasible(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
        let p = lp.project_feasible(&[3.0, 3.0]).unwrap();
        assert!(linalg::distance(&p, &[2.0, 3.0]) < 1e-8);
        let p = lp_tri().project_feasible(&[4.0, 4.0]).unwrap();
        assert!(linalg::distance(&p, &[2.0, 2.0]) < 1e-8);
        // Below the origin corner: clamp to (0, 0).
        let p = lp.project_feasible(&[-1.0, -2.0]).unwrap();
        assert!(linalg::norm(&p) < 1e-8);
    }

    #[test]
    fn vertex_optimization_and_ties() {
        let lp = lp_box();
        let (v, val) = lp.solve_on_vertices(Direction::Maximize).unwrap();
        assert_eq!((v, val), (vec![2.0, 3.0], 8.0));
        let (v, val) = lp.solve_on_vertices(Direction::Minimize).unwrap();
        assert_eq!((v, val), (vec![0.0, 0.0], 0.0));
        let (v, val) = lp_tri().solve_on_vertices(Direction::Maximize).unwrap();
        assert_eq!((v, val), (vec![0.0, 4.0], 4.0));
    }

    #[test]
    fn lp_file_round_trip_and_validation() {
        let lp = lp_box();
        let json = serde_json::to_string(&lp).unwrap();
        assert!(json.contains("\"A\""));
        let back: LinearProgram = serde_json::from_str(&json).unwrap();
        assert_eq!(back, lp);
        assert_eq!(back.digest(), lp.digest());
        let bad = r#"{"n":3,"m":1,"c":[1,1],"A":[[1,1]],"b":[1]}"#;
        assert!(serde_json::from_str::<LinearProgram>(bad).is_err());
    }

    #[test]
    fn combinations_count() {
        assert_eq!(Combinations::new(5, 2).count(), 10);
        assert_eq!(Combinations::new(6, 3).count(), 20);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }
}
