use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{center_columns, numerical_rank, thin_svd, ReprMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvccaConfig {
    /// Fraction τ in (0, 1] of total squared singular mass kept per side.
    pub variance_fraction: f64,
    /// Ridge added to each covariance before whitening, relative to that
    /// side's largest variance so results do not depend on overall scale.
    pub epsilon: f64,
}

impl Default for SvccaConfig {
    fn default() -> Self {
        SvccaConfig {
            variance_fraction: 0.99,
            epsilon: 1e-10,
        }
    }
}

impl SvccaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "variance fraction must lie in (0, 1], got {}",
                self.variance_fraction
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Argument(format!(
                "ridge epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvccaResult {
    /// Canonical correlations, descending, each in [0, 1].
    pub correlations: Vec<f64>,
    pub mean_correlation: f64,
    pub kept_dims: (usize, usize),
    pub warnings: Vec<String>,
}

pub fn svcca(x: &ReprMatrix, y: &ReprMatrix, cfg: SvccaConfig) -> Result<SvccaResult> {
    svcca_matrix(&x.to_matrix(), &y.to_matrix(), cfg)
}

// Whitened top singular directions of the centered data covering
// `fraction` of the squared singular mass. With reduced data A = U_k S_k the
// ridged covariance is diagonal, so whitening is U_k scaled by
// s_j / sqrt(s_j^2 + eps * s_1^2). None when the data has no variance.
fn reduce_whitened(centered: &DMatrix<f64>, fraction: f64, eps: f64) -> Option<DMatrix<f64>> {
    let svd = thin_svd(centered);
    let rank = numerical_rank(&svd.s, centered.shape());
    if rank == 0 {
        return None;
    }
    let mass: Vec<f64> = svd.s[..rank].iter().map(|s| s * s).collect();
    let total: f64 = mass.iter().sum();
    let mut acc = 0.0;
    let mut k = rank;
    for (i, m) in mass.iter().enumerate() {
        acc += m;
        if acc >= fraction * total {
            k = i + 1;
            break;
        }
    }
    let ridge = eps * mass[0];
    let scale: Vec<f64> = mass[..k].iter().map(|m| (m / (m + ridge)).sqrt()).collect();
    Some(DMatrix::from_fn(centered.nrows(), k, |i, j| {
        svd.u[(i, j)] * scale[j]
    }))
}

/// Singular vector CCA: center both sides, keep each side's top singular
/// directions covering τ of its squared singular mass, then compute the
/// canonical correlations of the reduced matrices as the singular values of
/// the whitened cross-covariance. Rows are paired by position.
pub fn svcca_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: SvccaConfig) -> Result<SvccaResult> {
    cfg.validate()?;
    let n = x.nrows();
    if n != y.nrows() {
        return Err(Error::Argument(format!(
            "SVCCA pairs rows by position; row counts differ: {n} vs {}",
            y.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::Argument(format!(
            "SVCCA needs at least 2 rows, found {n}"
        )));
    }
    let mut warnings = Vec::new();
    if n <= x.ncols().max(y.ncols()) {
        warnings.push(format!(
            "only {n} rows for dimensions {} and {}; correlations may be spuriously high",
            x.ncols(),
            y.ncols()
        ));
    }
    let (a, b) = match (
        reduce_whitened(&center_columns(x), cfg.variance_fraction, cfg.epsilon),
        reduce_whitened(&center_columns(y), cfg.variance_fraction, cfg.epsilon),
    ) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            warnings.push("a side has no variance; all correlations are 0".into());
            let kept = (a.map_or(0, |m| m.ncols()), b.map_or(0, |m| m.ncols()));
            return Ok(SvccaResult {
                correlations: vec![0.0; x.ncols().min(y.ncols())],
                mean_correlation: 0.0,
                kept_dims: kept,
                warnings,
            });
        }
    };
    let m = a.transpose() * &b;
    let mut correlations: Vec<f64> = thin_svd(&m)
        .s
        .into_iter()
        .map(|r| r.clamp(0.0, 1.0))
        .collect();
    correlations.sort_by(|p, q| q.total_cmp(p));
    let mean_correlation = correlations.iter().sum::<f64>() / correlations.len() as f64;
    Ok(SvccaResult {
        correlations,
        mean_correlation,
        kept_dims: (a.ncols(), b.ncols()),
        warnings,
    })
}
