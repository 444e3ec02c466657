use nalgebra::DMatrix;

use super::{numerical_rank, thin_svd, ReprMatrix, RowMeta};
use crate::{Error, Result};

/// A d×d map applied on the right: `x ↦ x · matrix`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
    pub orthogonal: bool,
}

impl LinearMap {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// ‖MᵀM − I‖_F.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.matrix.ncols();
        (self.matrix.transpose() * &self.matrix - DMatrix::identity(d, d)).norm()
    }

    /// Maps every row of `x`, keeping its metadata.
    pub fn apply(&self, x: &ReprMatrix) -> Result<ReprMatrix> {
        if x.d() != self.matrix.nrows() {
            return Err(Error::Argument(format!(
                "map expects dimension {}, matrix has {}",
                self.matrix.nrows(),
                x.d()
            )));
        }
        let mapped = x.to_matrix() * &self.matrix;
        let values = mapped
            .row_iter()
            .flat_map(|r| r.iter().map(|&v| v as f32).collect::<Vec<_>>())
            .collect();
        let meta: Vec<RowMeta> = x.meta().to_vec();
        ReprMatrix::new(x.n(), self.matrix.ncols(), values, meta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    pub map: LinearMap,
    /// ‖xW − y‖_F.
    pub residual: f64,
    pub warnings: Vec<String>,
}

pub fn procrustes_align(x: &ReprMatrix, y: &ReprMatrix) -> Result<ProcrustesResult> {
    procrustes_align_matrix(&x.to_matrix(), &y.to_matrix())
}

/// Orthogonal W minimizing ‖xW − y‖_F: with xᵀy = UΣVᵀ, W = UVᵀ. Anchor
/// rows of `x` and `y` are paired by position. A rank-deficient xᵀy still
/// yields an orthogonal W, with a warning that it is not unique.
pub fn procrustes_align_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<ProcrustesResult> {
    if x.shape() != y.shape() {
        return Err(Error::Argument(format!(
            "anchor shapes differ: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let (n, d) = x.shape();
    if d == 0 {
        return Err(Error::Argument("anchors have no columns".into()));
    }
    let mut warnings = Vec::new();
    if n < d {
        warnings.push(format!(
            "{n} anchor rows for dimension {d}; the map is underdetermined"
        ));
    }
    let cross = x.transpose() * y;
    let svd = thin_svd(&cross);
    let rank = numerical_rank(&svd.s, (d, d));
    if rank < d {
        warnings.push(format!(
            "xᵀy has rank {rank} < {d}; the optimal map is not unique"
        ));
    }
    let w = &svd.u * &svd.v_t;
    let residual = (x * &w - y).norm();
    Ok(ProcrustesResult {
        map: LinearMap {
            matrix: w,
            orthogonal: true,
        },
        residual,
        warnings,
    })
}
