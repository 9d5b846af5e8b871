//! Scalar encodings of a fixed LP, used as regression targets.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, VertexSet, FEAS_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum EncodingKind {
    /// 1 where `Ax ≤ b`, else 0.
    Feasibility,
    /// `cᵀx` on feasible points, penalized gain of the nearest feasible point elsewhere.
    GainPenalty,
    /// `min(b − Ax)`.
    BoundaryDistance,
    /// `|min(b − Ax)|`.
    AbsBoundaryDistance,
    /// Distance to the nearest vertex not listed in `excluded_vertices`.
    VertexDistance {
        #[serde(default)]
        excluded_vertices: Vec<Vec<f64>>,
    },
}

impl EncodingKind {
    /// The five encodings, with the origin excluded from the vertex distance.
    pub fn all(n: usize) -> Vec<EncodingKind> {
        vec![
            EncodingKind::Feasibility,
            EncodingKind::GainPenalty,
            EncodingKind::BoundaryDistance,
            EncodingKind::AbsBoundaryDistance,
            EncodingKind::VertexDistance {
                excluded_vertices: vec![vec![0.0; n]],
            },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            EncodingKind::Feasibility => "feasibility",
            EncodingKind::GainPenalty => "gain_penalty",
            EncodingKind::BoundaryDistance => "boundary_distance",
            EncodingKind::AbsBoundaryDistance => "abs_boundary_distance",
            EncodingKind::VertexDistance { .. } => "vertex_distance",
        }
    }

    /// Parses a short name; `vertex_distance` excludes nothing, and
    /// `vertex_distance_no_origin` excludes the origin.
    pub fn parse(name: &str, n: usize) -> Result<EncodingKind> {
        Ok(match name {
            "feasibility" | "F" => EncodingKind::Feasibility,
            "gain_penalty" | "G" => EncodingKind::GainPenalty,
            "boundary_distance" | "B" => EncodingKind::BoundaryDistance,
            "abs_boundary_distance" | "A" => EncodingKind::AbsBoundaryDistance,
            "vertex_distance" => EncodingKind::VertexDistance {
                excluded_vertices: Vec::new(),
            },
            "vertex_distance_no_origin" | "V" => EncodingKind::VertexDistance {
                excluded_vertices: vec![vec![0.0; n]],
            },
            other => return Err(Error::config(format!("unknown encoding `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingEval {
    pub value: f64,
    pub kind: EncodingKind,
}

pub fn feasibility_enc(lp: &LinearProgram, x: &[f64]) -> Result<f64> {
    Ok(if lp.min_slack(x)? >= -FEAS_TOL {
        1.0
    } else {
        0.0
    })
}

pub fn gain_penalty_enc(lp: &LinearProgram, x: &[f64]) -> Result<f64> {
    if !lp.admits_gain_penalty() {
        return Err(Error::config(
            "gain-penalty encoding requires positive c and b and nonnegative A",
        ));
    }
    if lp.min_slack(x)? >= -FEAS_TOL {
        return lp.objective(x);
    }
    let nearest = lp.project_feasible(x)?;
    let scale = linalg::norm(&nearest);
    if scale == 0.0 {
        // cᵀx_f vanishes with x_f, so 0 is the continuous extension.
        return Ok(0.0);
    }
    let penalty = (linalg::distance(x, &nearest) / scale).min(1.0);
    Ok(lp.objective(&nearest)? * (1.0 - penalty))
}

pub fn boundary_dist_enc(lp: &LinearProgram, x: &[f64]) -> Result<f64> {
    lp.min_slack(x)
}

pub fn abs_boundary_dist_enc(lp: &LinearProgram, x: &[f64]) -> Result<f64> {
    Ok(lp.min_slack(x)?.abs())
}

/// Distance from `x` to the nearest of `vertices`.
pub fn vertex_dist_enc(vertices: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    let first = vertices
        .first()
        .ok_or_else(|| Error::config("every vertex is excluded"))?;
    check_dim(first.len(), x.len())?;
    Ok(vertices
        .iter()
        .map(|v| linalg::distance(v, x))
        .fold(f64::INFINITY, f64::min))
}

/// An encoding bound to one LP, with its vertex set resolved up front.
#[derive(Debug, Clone)]
pub struct Encoder {
    lp: LinearProgram,
    kind: EncodingKind,
    retained: Vec<Vec<f64>>,
}

impl Encoder {
    pub fn new(lp: &LinearProgram, kind: EncodingKind) -> Result<Self> {
        let mut retained = Vec::new();
        match &kind {
            EncodingKind::GainPenalty if !lp.admits_gain_penalty() => {
                return Err(Error::config(
                    "gain-penalty encoding requires positive c and b and nonnegative A",
                ));
            }
            EncodingKind::VertexDistance { excluded_vertices } => {
                let vertices: VertexSet = lp.enumerate_vertices()?;
                for ex in excluded_vertices {
                    check_dim(lp.n(), ex.len())?;
                    if !vertices.contains(ex) {
                        return Err(Error::config(format!(
                            "excluded point {ex:?} is not a vertex of the LP"
                        )));
                    }
                }
                retained = vertices
                    .vertices
                    .into_iter()
                    .filter(|v| {
                        !excluded_vertices
                            .iter()
                            .any(|ex| linalg::distance(ex, v) <= crate::lp::VERTEX_DEDUP_TOL)
                    })
                    .collect();
                if retained.is_empty() {
                    return Err(Error::config("every vertex is excluded"));
                }
            }
            _ => {}
        }
        Ok(Encoder {
            lp: lp.clone(),
            kind,
            retained,
        })
    }

    pub fn lp(&self) -> &LinearProgram {
        &self.lp
    }

    pub fn kind(&self) -> &EncodingKind {
        &self.kind
    }

    /// Vertices the vertex-distance encoding measures against.
    pub fn retained_vertices(&self) -> &[Vec<f64>] {
        &self.retained
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self.kind {
            EncodingKind::Feasibility => feasibility_enc(&self.lp, x),
            EncodingKind::GainPenalty => gain_penalty_enc(&self.lp, x),
            EncodingKind::BoundaryDistance => boundary_dist_enc(&self.lp, x),
            EncodingKind::AbsBoundaryDistance => abs_boundary_dist_enc(&self.lp, x),
            EncodingKind::VertexDistance { .. } => vertex_dist_enc(&self.retained, x),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<EncodingEval> {
        Ok(EncodingEval {
            value: self.eval(x)?,
            kind: self.kind.clone(),
        })
    }
}
