use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{center_columns, numerical_rank, thin_svd, ReprMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub components: usize,
    /// n rows of `components` coordinates.
    pub coordinates: Vec<Vec<f64>>,
    /// One unit-norm loading vector of length d per component.
    pub loadings: Vec<Vec<f64>>,
    /// Sample variance along each component (divisor n - 1).
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn pca_project(x: &ReprMatrix, components: usize) -> Result<PcaResult> {
    pca_project_matrix(&x.to_matrix(), components)
}

/// Projects the column-centered rows onto the top `components` principal
/// directions. Each loading vector is signed so its largest-magnitude entry
/// (first on ties) is positive. Requests beyond the numerical rank are
/// reduced to the rank with a warning.
pub fn pca_project_matrix(x: &DMatrix<f64>, components: usize) -> Result<PcaResult> {
    let (n, d) = x.shape();
    if n < 2 {
        return Err(Error::Argument(format!(
            "PCA needs at least 2 rows, found {n}"
        )));
    }
    if components == 0 {
        return Err(Error::Argument("at least one component is required".into()));
    }
    let centered = center_columns(x);
    let svd = thin_svd(&centered);
    let rank = numerical_rank(&svd.s, (n, d));
    let mut warnings = Vec::new();
    let k = if components > rank {
        warnings.push(format!(
            "requested {components} components but the centered data has rank {rank}; using {rank}"
        ));
        rank
    } else {
        components
    };

    let mut loadings = Vec::with_capacity(k);
    let mut coords = DMatrix::zeros(n, k);
    for c in 0..k {
        let mut v: Vec<f64> = svd.v_t.row(c).iter().copied().collect();
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (j, x)| if x.abs() > v[best].abs() { j } else { best },
        );
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        v.iter_mut().for_each(|x| *x *= sign);
        for i in 0..n {
            coords[(i, c)] = sign * svd.u[(i, c)] * svd.s[c];
        }
        loadings.push(v);
    }

    let total: f64 = svd.s.iter().map(|s| s * s).sum();
    let explained_variance: Vec<f64> = svd.s[..k].iter().map(|s| s * s / (n - 1) as f64).collect();
    let explained_variance_ratio = svd.s[..k]
        .iter()
        .map(|s| if total > 0.0 { s * s / total } else { 0.0 })
        .collect();
    Ok(PcaResult {
        components: k,
        coordinates: coords
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        loadings,
        explained_variance,
        explained_variance_ratio,
        warnings,
    })
}
