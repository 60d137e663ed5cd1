//! Training-set imputation. Statistics are computed once on training rows and
//! reused verbatim on held-out rows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{is_one_hot, source_variable, FeatureMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("column `{0}` has no observed values")]
    AllMissingColumn(String),
    #[error("columns do not match the imputation statistics (expected `{expected}`, got `{got}`)")]
    ColumnMismatch { expected: String, got: String },
    #[error("expected {expected} columns, got {got}")]
    WidthMismatch { expected: usize, got: usize },
}

/// How a one-hot group is filled when its source value is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OneHotFill {
    /// Every level set to 0.
    Zero,
    /// The most frequent training level set to 1.
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ColumnFill {
    Median(f64),
    OneHot(f64),
}

impl ColumnFill {
    pub fn value(&self) -> f64 {
        match *self {
            ColumnFill::Median(v) | ColumnFill::OneHot(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputeStats {
    pub columns: Vec<String>,
    pub fills: Vec<ColumnFill>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

impl ImputeStats {
    pub fn fit(matrix: &FeatureMatrix, one_hot: OneHotFill) -> Result<Self, ImputeError> {
        let names = matrix.column_names();
        let mut fills = vec![ColumnFill::OneHot(0.0); names.len()];

        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (c, name) in names.iter().enumerate() {
            if is_one_hot(name) {
                groups.entry(source_variable(name)).or_default().push(c);
                continue;
            }
            let mut present: Vec<f64> = matrix.column(c).into_iter().filter(|v| !v.is_nan()).collect();
            let m = median(&mut present).ok_or_else(|| ImputeError::AllMissingColumn(name.clone()))?;
            fills[c] = ColumnFill::Median(m);
        }

        if one_hot == OneHotFill::Mode {
            for cols in groups.values() {
                let counts: Vec<usize> = cols
                    .iter()
                    .map(|&c| (0..matrix.n_rows()).filter(|&r| matrix.get(r, c) == Some(1.0)).count())
                    .collect();
                let best = counts.iter().copied().max().unwrap_or(0);
                if best == 0 {
                    continue;
                }
                // lowest column index wins ties
                let winner = counts.iter().position(|&k| k == best).unwrap();
                fills[cols[winner]] = ColumnFill::OneHot(1.0);
            }
        }
        Ok(Self {
            columns: names.to_vec(),
            fills,
        })
    }

    pub fn check_columns(&self, names: &[String]) -> Result<(), ImputeError> {
        if names.len() != self.columns.len() {
            return Err(ImputeError::WidthMismatch {
                expected: self.columns.len(),
                got: names.len(),
            });
        }
        for (want, got) in self.columns.iter().zip(names) {
            if want != got {
                return Err(ImputeError::ColumnMismatch {
                    expected: want.clone(),
                    got: got.clone(),
                });
            }
        }
        Ok(())
    }

    /// Complete copy of `matrix` with missing cells filled.
    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<DMatrix<f64>, ImputeError> {
        self.check_columns(matrix.column_names())?;
        Ok(DMatrix::from_fn(matrix.n_rows(), matrix.n_cols(), |r, c| {
            matrix.get(r, c).unwrap_or_else(|| self.fills[c].value())
        }))
    }

    /// Fills one row in place; `row` must follow the training column order.
    pub fn apply_row(&self, row: &mut [f64]) -> Result<(), ImputeError> {
        if row.len() != self.fills.len() {
            return Err(ImputeError::WidthMismatch {
                expected: self.fills.len(),
                got: row.len(),
            });
        }
        for (v, fill) in row.iter_mut().zip(&self.fills) {
            if v.is_nan() {
                *v = fill.value();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAN: f64 = f64::NAN;

    fn m(names: &[&str], rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::new(
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            names.iter().map(|s| s.to_string()).collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn median_fill() {
        let x = m(&["a"], &[&[1.0], &[NAN], &[3.0]]);
        let stats = ImputeStats::fit(&x, OneHotFill::Zero).unwrap();
        assert_eq!(stats.fills[0], ColumnFill::Median(2.0));
        let full = stats.apply(&x).unwrap();
        assert_eq!(full.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn stats_reused_on_held_out() {
        let train = m(&["a"], &[&[1.0], &[NAN], &[3.0]]);
        let stats = ImputeStats::fit(&train, OneHotFill::Zero).unwrap();
        let held = m(&["a"], &[&[NAN]]);
        assert_eq!(stats.apply(&held).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn all_missing_column() {
        let x = m(&["a"], &[&[NAN], &[NAN]]);
        assert_eq!(
            ImputeStats::fit(&x, OneHotFill::Zero),
            Err(ImputeError::AllMissingColumn("a".into()))
        );
    }

    #[test]
    fn one_hot_policies() {
        let x = m(
            &["site=bulbar", "site=limb"],
            &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0], &[NAN, NAN]],
        );
        let zero = ImputeStats::fit(&x, OneHotFill::Zero).unwrap().apply(&x).unwrap();
        assert_eq!((zero[(3, 0)], zero[(3, 1)]), (0.0, 0.0));
        let mode = ImputeStats::fit(&x, OneHotFill::Mode).unwrap().apply(&x).unwrap();
        assert_eq!((mode[(3, 0)], mode[(3, 1)]), (0.0, 1.0));
    }

    #[test]
    fn column_mismatch_rejected() {
        let x = m(&["a"], &[&[1.0]]);
        let stats = ImputeStats::fit(&x, OneHotFill::Zero).unwrap();
        let y = m(&["b"], &[&[1.0]]);
        assert!(matches!(stats.apply(&y), Err(ImputeError::ColumnMismatch { .. })));
    }
}
