//! Window statistics over longitudinal series, the subject × feature matrix,
//! and correlation pruning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Cohort, StaticValue};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot derive statistics from an empty series")]
    EmptySeries,
    #[error("window bounds out of order: [{low}, {high}]")]
    BadWindow { low: i64, high: i64 },
    #[error("correlation threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("coverage threshold {0} outside [0, 1]")]
    BadCoverage(f64),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("feature matrix: {0}")]
    Malformed(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Suffixes of the ten per-variable statistics, in column order.
pub const STAT_SUFFIXES: [&str; 10] = [
    "mean", "sd", "max", "min", "diff", "first", "last", "len", "minmax", "slope",
];

/// Inclusive day bounds relative to each subject's baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub low: i64,
    pub high: i64,
}

impl Window {
    pub fn new(low: i64, high: i64) -> Result<Self, FeatureError> {
        if low > high {
            return Err(FeatureError::BadWindow { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, day: i64) -> bool {
        self.low <= day && day <= self.high
    }
}

impl Default for Window {
    /// Days 0 through 92: three 31-day months.
    fn default() -> Self {
        Self { low: 0, high: 92 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindow {
    points: Vec<(i64, f64)>,
    window: Window,
}

impl SeriesWindow {
    pub fn points(&self) -> &[(i64, f64)] {
        &self.points
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Keeps the points inside `window`, sorted by day (stable for equal days).
pub fn window_filter(series: &[(i64, f64)], window: Window) -> SeriesWindow {
    let mut points: Vec<(i64, f64)> = series
        .iter()
        .copied()
        .filter(|&(d, _)| window.contains(d))
        .collect();
    points.sort_by_key(|&(d, _)| d);
    SeriesWindow { points, window }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedFeatures {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
    pub min: f64,
    pub diff: f64,
    pub first: f64,
    pub last: f64,
    pub len: usize,
    pub minmax: f64,
    pub slope: f64,
}

impl DerivedFeatures {
    /// Values in [`STAT_SUFFIXES`] order.
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.mean,
            self.sd,
            self.max,
            self.min,
            self.diff,
            self.first,
            self.last,
            self.len as f64,
            self.minmax,
            self.slope,
        ]
    }
}

/// The ten window statistics.
///
/// `slope` is the least-squares slope of value on day (per day). `minmax` is
/// the slope of the line through the minimum and the maximum, each placed at
/// the earliest day it occurs; it is negative when the maximum precedes the
/// minimum and zero when both fall on the same day. A single observation
/// gives zero `sd`, `diff`, `minmax` and `slope`.
pub fn derive(window: &SeriesWindow) -> Result<DerivedFeatures, FeatureError> {
    let pts = &window.points;
    let n = pts.len();
    if n == 0 {
        return Err(FeatureError::EmptySeries);
    }
    let nf = n as f64;

    let (mut min, mut max) = (pts[0].1, pts[0].1);
    let (mut day_min, mut day_max) = (pts[0].0, pts[0].0);
    for &(d, v) in &pts[1..] {
        if v < min {
            min = v;
            day_min = d;
        }
        if v > max {
            max = v;
            day_max = d;
        }
    }
    let mean = (pts.iter().map(|p| p.1).sum::<f64>() / nf).clamp(min, max);

    let sd = if n > 1 {
        let ss: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
        (ss / (nf - 1.0)).sqrt()
    } else {
        0.0
    };

    let day_mean = pts.iter().map(|p| p.0 as f64).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(d, v) in pts {
        let dx = d as f64 - day_mean;
        sxx += dx * dx;
        sxy += dx * (v - mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let minmax = if day_max != day_min {
        (max - min) / (day_max - day_min) as f64
    } else {
        0.0
    };

    Ok(DerivedFeatures {
        mean,
        sd,
        max,
        min,
        diff: max - min,
        first: pts[0].1,
        last: pts[n - 1].1,
        len: n,
        minmax,
        slope,
    })
}

/// Dense subjects × features table. Missing cells are stored as NaN; every
/// present cell is finite.
///
/// Column naming: `<variable>_<stat>` for window statistics, the raw name for
/// numeric statics, `<name>=<level>` for one-hot categorical levels.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    subject_ids: Vec<String>,
    column_names: Vec<String>,
    values: Vec<f64>,
}

impl PartialEq for FeatureMatrix {
    /// Missing cells compare equal to each other.
    fn eq(&self, other: &Self) -> bool {
        self.subject_ids == other.subject_ids
            && self.column_names == other.column_names
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl FeatureMatrix {
    /// `values` is row-major, `NaN` for missing.
    pub fn new(
        subject_ids: Vec<String>,
        column_names: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, FeatureError> {
        if values.len() != subject_ids.len() * column_names.len() {
            return Err(FeatureError::Malformed(format!(
                "{} values for {} rows × {} columns",
                values.len(),
                subject_ids.len(),
                column_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(FeatureError::DuplicateColumn(name.clone()));
            }
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(FeatureError::Malformed("infinite cell".into()));
        }
        Ok(Self {
            subject_ids,
            column_names,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Raw cell, NaN when missing.
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let v = self.raw(row, col);
        (!v.is_nan()).then_some(v)
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let p = self.n_cols();
        self.values[row * p + col] = value.unwrap_or(f64::NAN);
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.raw(r, col)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    pub fn coverage(&self, col: usize) -> f64 {
        if self.n_rows() == 0 {
            return 0.0;
        }
        let present = (0..self.n_rows()).filter(|&r| self.get(r, col).is_some()).count();
        present as f64 / self.n_rows() as f64
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            values.extend(cols.iter().map(|&c| self.raw(r, c)));
        }
        FeatureMatrix {
            subject_ids: self.subject_ids.clone(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            values,
        }
    }

    /// Columns by name; `Err(name)` for the first unknown one.
    pub fn select_named(&self, names: &[String]) -> Result<FeatureMatrix, String> {
        let cols = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| n.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.select_columns(&cols))
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
            column_names: self.column_names.clone(),
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["subject_id".to_string()];
        header.extend(self.column_names.iter().cloned());
        w.write_record(&header)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![self.subject_ids[r].clone()];
            rec.extend(
                self.row(r)
                    .iter()
                    .map(|v| if v.is_nan() { String::new() } else { v.to_string() }),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R) -> Result<FeatureMatrix, FeatureError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let header = reader.headers()?.clone();
        if header.get(0) != Some("subject_id") {
            return Err(FeatureError::Malformed(
                "first column must be `subject_id`".into(),
            ));
        }
        let column_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut subject_ids = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            subject_ids.push(record[0].to_string());
            for cell in record.iter().skip(1) {
                if cell.is_empty() {
                    values.push(f64::NAN);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        FeatureError::Malformed(format!("line {line}: bad cell `{cell}`"))
                    })?;
                    if !v.is_finite() {
                        return Err(FeatureError::Malformed(format!(
                            "line {line}: non-finite cell"
                        )));
                    }
                    values.push(v);
                }
            }
        }
        FeatureMatrix::new(subject_ids, column_names, values)
    }
}

/// Whether a column is one level of a one-hot categorical group.
pub fn is_one_hot(column: &str) -> bool {
    column.contains('=')
}

/// The source variable a column was generated from: the part before `=` for
/// one-hot levels, the part before a window-statistic suffix, else the name.
pub fn source_variable(column: &str) -> &str {
    if let Some((src, _)) = column.split_once('=') {
        return src;
    }
    for suffix in STAT_SUFFIXES {
        if let Some(prefix) = column
            .strip_suffix(suffix)
            .and_then(|p| p.strip_suffix('_'))
        {
            if !prefix.is_empty() {
                return prefix;
            }
        }
    }
    column
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildReport {
    /// Columns dropped for coverage below the threshold, with their coverage.
    pub coverage_dropped: Vec<(String, f64)>,
}

/// One row per cohort subject, in cohort order: ten window statistics per
/// longitudinal variable (variables sorted by name), then statics sorted by
/// name, categorical ones expanded one-hot over their sorted levels.
///
/// A static is treated as categorical when any subject holds a label for it;
/// numeric values of such a static become levels spelled as numbers.
pub fn build_matrix(
    cohort: &Cohort,
    window: Window,
    min_coverage: f64,
) -> Result<(FeatureMatrix, BuildReport), FeatureError> {
    if !(0.0..=1.0).contains(&min_coverage) {
        return Err(FeatureError::BadCoverage(min_coverage));
    }
    let n = cohort.len();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();

    for var in cohort.longitudinal_variables() {
        let mut stats: Vec<Vec<f64>> = vec![Vec::with_capacity(n); STAT_SUFFIXES.len()];
        for s in 0..n {
            let derived = cohort
                .longitudinal(s)
                .get(&var)
                .map(|series| window_filter(series, window))
                .filter(|w| !w.is_empty())
                .map(|w| derive(&w))
                .transpose()?;
            let cells = derived.map_or([f64::NAN; 10], |d| d.to_array());
            for (col, v) in stats.iter_mut().zip(cells) {
                col.push(v);
            }
        }
        for (suffix, col) in STAT_SUFFIXES.iter().zip(stats) {
            columns.push((format!("{var}_{suffix}"), col));
        }
    }

    for name in cohort.static_names() {
        let values: Vec<Option<&StaticValue>> =
            (0..n).map(|s| cohort.statics(s).get(&name)).collect();
        let categorical = values
            .iter()
            .any(|v| matches!(v, Some(StaticValue::Categorical(_))));
        if !categorical {
            let col = values
                .iter()
                .map(|v| v.and_then(StaticValue::as_numeric).unwrap_or(f64::NAN))
                .collect();
            columns.push((name, col));
            continue;
        }
        let labels: Vec<Option<String>> =
            values.iter().map(|v| v.map(ToString::to_string)).collect();
        let levels: BTreeSet<&String> = labels.iter().flatten().collect();
        for level in levels {
            let col = labels
                .iter()
                .map(|l| match l {
                    Some(l) if l == level => 1.0,
                    Some(_) => 0.0,
                    None => f64::NAN,
                })
                .collect();
            columns.push((format!("{name}={level}"), col));
        }
    }

    let mut report = BuildReport::default();
    let mut kept = Vec::with_capacity(columns.len());
    for (name, col) in columns {
        let present = col.iter().filter(|v| !v.is_nan()).count();
        let coverage = if n == 0 { 0.0 } else { present as f64 / n as f64 };
        if coverage < min_coverage {
            report.coverage_dropped.push((name, coverage));
        } else {
            kept.push((name, col));
        }
    }

    let mut values = Vec::with_capacity(n * kept.len());
    for r in 0..n {
        values.extend(kept.iter().map(|(_, col)| col[r]));
    }
    let matrix = FeatureMatrix::new(
        cohort.subjects().to_vec(),
        kept.into_iter().map(|(name, _)| name).collect(),
        values,
    )?;
    Ok((matrix, report))
}

/// Pearson correlation over rows where both cells are present. `None` when
/// fewer than two such rows exist or either side is constant on them.
pub fn pairwise_pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| !x.is_nan() && !y.is_nan())
        .map(|(&x, &y)| (x, y))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedDrop {
    pub dropped: String,
    pub culprit: String,
    pub rho: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneReport {
    pub correlated: Vec<CorrelatedDrop>,
    /// Columns with zero variance over their present cells.
    pub constant: Vec<String>,
}

impl PruneReport {
    pub fn is_empty(&self) -> bool {
        self.correlated.is_empty() && self.constant.is_empty()
    }
}

fn is_constant(col: &[f64]) -> bool {
    let mut present = col.iter().filter(|v| !v.is_nan());
    match present.next() {
        None => true,
        Some(first) => present.all(|v| v == first),
    }
}

/// Scans columns in matrix order and drops a column when its absolute
/// correlation with an already-kept column is strictly above `threshold`.
/// Constant columns are dropped first, regardless of the threshold.
pub fn prune_correlated(
    matrix: &FeatureMatrix,
    threshold: f64,
) -> Result<(FeatureMatrix, PruneReport), FeatureError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(FeatureError::BadThreshold(threshold));
    }
    let columns: Vec<Vec<f64>> = (0..matrix.n_cols()).map(|c| matrix.column(c)).collect();
    let names = matrix.column_names();
    let mut report = PruneReport::default();
    let mut kept: Vec<usize> = Vec::new();

    for (j, col) in columns.iter().enumerate() {
        if is_constant(col) {
            report.constant.push(names[j].clone());
            continue;
        }
        let culprit = kept.iter().find_map(|&i| {
            pairwise_pearson(&columns[i], col)
                .filter(|rho| rho.abs() > threshold)
                .map(|rho| (i, rho))
        });
        match culprit {
            Some((i, rho)) => report.correlated.push(CorrelatedDrop {
                dropped: names[j].clone(),
                culprit: names[i].clone(),
                rho,
            }),
            None => kept.push(j),
        }
    }
    Ok((matrix.select_columns(&kept), report))
}

/// Groups columns by [`source_variable`], preserving first-seen order.
pub fn column_groups(names: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        groups.entry(source_variable(n).to_string()).or_default().push(i);
    }
    groups
}
