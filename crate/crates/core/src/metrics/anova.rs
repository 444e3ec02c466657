use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FStatistic {
    Finite(f64),
    /// Between-group variation with none within groups.
    Infinite,
    /// No variation at all (0/0).
    Undefined,
}

impl FStatistic {
    pub fn value(self) -> f64 {
        match self {
            FStatistic::Finite(f) => f,
            FStatistic::Infinite => f64::INFINITY,
            FStatistic::Undefined => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: FStatistic,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    pub group_means: Vec<f64>,
    /// Upper tail of the F distribution; `None` unless F is finite.
    pub p_value: Option<f64>,
}

// Mean anchored at the first value, exact when all values are equal.
fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = values.clone();
    let Some(anchor) = it.next() else { return 0.0 };
    let n = values.clone().count() as f64;
    anchor + values.map(|v| v - anchor).sum::<f64>() / n
}

/// One-way ANOVA: F = (SS_between / (k - 1)) / (SS_within / (N - k)).
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<AnovaResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::Argument("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::Argument("every group needs an observation".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= k {
        return Err(Error::Argument(format!(
            "{n} observations in {k} groups leave no within-group degrees of freedom"
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Argument("observations must be finite".into()));
    }

    let group_means: Vec<f64> = groups.iter().map(|g| mean(g.iter().copied())).collect();
    let grand = mean(groups.iter().flatten().copied());
    let ss_between: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&group_means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();

    let df_between = k - 1;
    let df_within = n - k;
    let f_statistic = if ss_within == 0.0 {
        if ss_between == 0.0 {
            FStatistic::Undefined
        } else {
            FStatistic::Infinite
        }
    } else {
        FStatistic::Finite((ss_between / df_between as f64) / (ss_within / df_within as f64))
    };
    let p_value = match f_statistic {
        FStatistic::Finite(f) => FisherSnedecor::new(df_between as f64, df_within as f64)
            .ok()
            .map(|dist| dist.sf(f)),
        _ => None,
    };
    Ok(AnovaResult {
        f_statistic,
        df_between,
        df_within,
        ss_between,
        ss_within,
        group_means,
        p_value,
    })
}
