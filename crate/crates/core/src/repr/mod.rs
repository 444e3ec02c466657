//! Analysis of exported token representations: answer-span cosine
//! similarity, PCA projection, SVCCA and orthogonal Procrustes alignment.
//!
//! Storage is single precision (the interchange format); all numerics run in
//! f64 on [`nalgebra::DMatrix`]. The `*_matrix` entry points take f64
//! matrices directly.

mod cosine;
mod format;
mod pca;
mod procrustes;
mod svcca;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use cosine::{answer_span_cosine, CosineReport, PairCosine, SkippedPair};
pub use format::{
    decode_repm, encode_repm, load_representations, read_metadata, sidecar_path,
    store_representations, write_metadata, REPM_MAGIC, REPM_VERSION,
};
pub use pca::{pca_project, pca_project_matrix, PcaResult};
pub use procrustes::{procrustes_align, procrustes_align_matrix, LinearMap, ProcrustesResult};
pub use svcca::{svcca, svcca_matrix, SvccaConfig, SvccaResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub example_id: String,
    pub token_index: usize,
    pub token_text: String,
    pub in_answer_span: bool,
    pub language: String,
}

/// `n` rows of `d` single-precision values with one metadata record per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprMatrix {
    n: usize,
    d: usize,
    values: Vec<f32>,
    meta: Vec<RowMeta>,
}

impl ReprMatrix {
    /// Validates `d > 0`, `values.len() == n * d`, `meta.len() == n` and
    /// finiteness.
    pub fn new(n: usize, d: usize, values: Vec<f32>, meta: Vec<RowMeta>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Format(
                "representation dimension must be positive".into(),
            ));
        }
        let expected = n
            .checked_mul(d)
            .ok_or_else(|| Error::Format(format!("{n} x {d} overflows")))?;
        if values.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} values for {n} x {d}, found {}",
                values.len()
            )));
        }
        if meta.len() != n {
            return Err(Error::Format(format!(
                "{} metadata rows for {n} representation rows",
                meta.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value at row {}, column {}",
                i / d,
                i % d
            )));
        }
        Ok(ReprMatrix { n, d, values, meta })
    }

    /// Builds a matrix from f64 rows (rounded to f32) with synthetic metadata.
    pub fn from_rows(rows: &[Vec<f64>], language: &str) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Format("ragged rows".into()));
        }
        let values = rows.iter().flatten().map(|&v| v as f32).collect();
        let meta = (0..rows.len())
            .map(|i| RowMeta {
                example_id: format!("row{i}"),
                token_index: 0,
                token_text: String::new(),
                in_answer_span: false,
                language: language.to_owned(),
            })
            .collect();
        ReprMatrix::new(rows.len(), d, values, meta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn meta(&self) -> &[RowMeta] {
        &self.meta
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.d, |i, j| {
            f64::from(self.values[i * self.d + j])
        })
    }

    /// Checks that `other` pairs with `self` row by row on
    /// (example_id, token_index).
    pub fn check_row_alignment(&self, other: &ReprMatrix) -> Result<()> {
        if self.n != other.n {
            return Err(Error::Argument(format!(
                "row counts differ: {} vs {}",
                self.n, other.n
            )));
        }
        for (i, (a, b)) in self.meta.iter().zip(&other.meta).enumerate() {
            if a.example_id != b.example_id || a.token_index != b.token_index {
                return Err(Error::Alignment {
                    location: format!("row {i}"),
                    message: format!(
                        "({}, {}) vs ({}, {})",
                        a.example_id, a.token_index, b.example_id, b.token_index
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Thin SVD with singular values in descending order (ties keep their
/// original order).
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = m.shape();
    let r = rows.min(cols);
    if r == 0 {
        return ThinSvd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v_t: DMatrix::zeros(0, cols),
        };
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    ThinSvd {
        u: DMatrix::from_fn(rows, r, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&k| s[k]).collect(),
        v_t: DMatrix::from_fn(r, cols, |i, j| v_t[(order[i], j)]),
    }
}

/// Number of singular values above the usual `max(m, n) * eps * s_max`
/// tolerance.
pub(crate) fn numerical_rank(s: &[f64], shape: (usize, usize)) -> usize {
    let Some(&max) = s.first() else { return 0 };
    let tol = shape.0.max(shape.1) as f64 * f64::EPSILON * max;
    s.iter().filter(|&&v| v > tol).count()
}

pub(crate) fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 {
        return m.clone();
    }
    let means: Vec<f64> = (0..cols)
        .map(|j| (0..rows).map(|i| m[(i, j)]).sum::<f64>() / rows as f64)
        .collect();
    DMatrix::from_fn(rows, cols, |i, j| m[(i, j)] - means[j])
}
