//! Log transform, min-max rescaling and column summaries.
//!
//! The model matrix has 90 columns: the 45 plain features followed by their
//! `log10(x + 1)` versions, every column rescaled to `[0, 1]`. Scaling
//! parameters are fit on one set of rows (the training split) and then
//! applied unchanged to any other rows, clamped into `[0, 1]`.
//!
//! Quantiles use linear interpolation between order statistics: for `n`
//! sorted values and probability `p`, with `h = (n - 1) p`, the quantile is
//! `x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h])`.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::feature_names;

/// `log10(x + 1)`.
pub fn log_transform(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("log transform needs x >= 0, got {x}")));
    }
    Ok((x + 1.0).log10())
}

/// `(x - min) / (max - min)`; constant columns map to zeros.
pub fn minmax_rescale(column: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(column);
    let range = hi - lo;
    column
        .iter()
        .map(|&x| if range > 0.0 { (x - lo) / range } else { 0.0 })
        .collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for one value.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// `(q3 - q1) / median`, undefined when the median is 0.
    pub iqr_ratio: Option<f64>,
}

pub fn summarize_column(column: &[f64]) -> Result<ColumnSummary> {
    if column.is_empty() {
        return Err(Error::domain("cannot summarize an empty column"));
    }
    if let Some(i) = column.iter().position(|x| !x.is_finite()) {
        return Err(Error::data(format!("non-finite value at row {i}")));
    }
    let n = column.len();
    let mean = column.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut scratch = column.to_vec();
    let (min, max) = min_max(column);
    let q1 = interpolated_quantile(&mut scratch, 0.25);
    let median = interpolated_quantile(&mut scratch, 0.5);
    let q3 = interpolated_quantile(&mut scratch, 0.75);
    Ok(ColumnSummary {
        count: n,
        mean,
        std,
        min,
        q1,
        median,
        q3,
        max,
        iqr_ratio: (median > 0.0).then(|| (q3 - q1) / median),
    })
}

fn order_statistic(values: &mut [f64], k: usize) -> f64 {
    *values.select_nth_unstable_by(k, f64::total_cmp).1
}

fn interpolated_quantile(values: &mut [f64], p: f64) -> f64 {
    let h = (values.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let below = order_statistic(values, lo);
    if frac == 0.0 || lo + 1 >= values.len() {
        return below;
    }
    let above = order_statistic(values, lo + 1);
    below + frac * (above - below)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Plain,
    Log10p1,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub index: usize,
    pub name: String,
    /// Feature column this model column is derived from.
    pub source: usize,
    pub transform: Transform,
}

/// Order and provenance of model-matrix columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnManifest {
    pub columns: Vec<ColumnSpec>,
}

impl ColumnManifest {
    pub fn for_features(names: &[String]) -> Self {
        let plain = names.iter().enumerate().map(|(i, n)| (i, n.clone(), Transform::Plain));
        let logs = names
            .iter()
            .enumerate()
            .map(|(i, n)| (i, format!("log_{n}"), Transform::Log10p1));
        let columns = plain
            .chain(logs)
            .enumerate()
            .map(|(index, (source, name, transform))| ColumnSpec {
                index,
                name,
                source,
                transform,
            })
            .collect();
        ColumnManifest { columns }
    }

    pub fn standard() -> Self {
        Self::for_features(&feature_names())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// Expands `n x d` features into `n x 2d` plain + log columns (unscaled).
pub fn expand_features(features: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (n, d) = features.dim();
    let mut out = Array2::<f64>::zeros((n, 2 * d));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(features.axis_iter(Axis(0)).into_par_iter())
        .enumerate()
        .try_for_each(|(r, (mut dst, src))| -> Result<()> {
            for (c, &x) in src.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::data(format!("non-finite feature at row {r}, column {c}")));
                }
                dst[c] = x;
                dst[d + c] = log_transform(x)
                    .map_err(|_| Error::data(format!("negative feature at row {r}, column {c}")))?;
            }
            Ok(())
        })?;
    Ok(out)
}

/// Per-column min/max fit on a subset of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on the given rows, or on every row when `rows` is `None`.
    pub fn fit(matrix: ArrayView2<f64>, rows: Option<&[usize]>) -> Result<Self> {
        let d = matrix.ncols();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        let mut seen = 0usize;
        let mut visit = |row: ndarray::ArrayView1<f64>| {
            seen += 1;
            for (c, &x) in row.iter().enumerate() {
                mins[c] = mins[c].min(x);
                maxs[c] = maxs[c].max(x);
            }
        };
        match rows {
            Some(rows) => rows.iter().for_each(|&r| visit(matrix.row(r))),
            None => matrix.axis_iter(Axis(0)).for_each(visit),
        }
        if seen == 0 {
            return Err(Error::domain("cannot fit scaling on zero rows"));
        }
        Ok(MinMaxScaler { mins, maxs })
    }

    pub fn scale(&self, column: usize, x: f64) -> f64 {
        let range = self.maxs[column] - self.mins[column];
        if range > 0.0 {
            ((x - self.mins[column]) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn transform(&self, matrix: ArrayView2<f64>) -> Array2<f64> {
        let mut out = matrix.to_owned();
        out.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
            for (c, x) in row.iter_mut().enumerate() {
                *x = self.scale(c, *x);
            }
        });
        out
    }
}

/// Fit-then-apply preprocessing: feature expansion plus min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub manifest: ColumnManifest,
    pub scaler: MinMaxScaler,
}

impl Preprocessor {
    /// Fits scaling on `fit_rows` of the raw feature matrix (all rows when `None`).
    pub fn fit(features: ArrayView2<f64>, fit_rows: Option<&[usize]>) -> Result<Self> {
        if features.ncols() != crate::features::FEATURE_COUNT {
            return Err(Error::data(format!(
                "expected {} feature columns, got {}",
                crate::features::FEATURE_COUNT,
                features.ncols()
            )));
        }
        let (n, d) = features.dim();
        let rows: Vec<usize> = fit_rows.map_or_else(|| (0..n).collect(), <[usize]>::to_vec);
        let subset = features.select(Axis(0), &rows);
        let expanded = expand_features(subset.view())?;
        let scaler = MinMaxScaler::fit(expanded.view(), None)?;
        debug_assert_eq!(scaler.mins.len(), 2 * d);
        Ok(Preprocessor {
            manifest: ColumnManifest::standard(),
            scaler,
        })
    }

    /// Model-matrix rows for the given feature rows.
    pub fn apply_rows(&self, features: ArrayView2<f64>, rows: &[usize]) -> Result<Array2<f64>> {
        let subset = features.select(Axis(0), rows);
        Ok(self.scaler.transform(expand_features(subset.view())?.view()))
    }

    pub fn apply(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.scaler.transform(expand_features(features)?.view()))
    }
}

/// Plain + log columns, each rescaled over all rows.
pub fn assemble_model_matrix(features: ArrayView2<f64>) -> Result<(Array2<f64>, ColumnManifest)> {
    let expanded = expand_features(features)?;
    let scaler = MinMaxScaler::fit(expanded.view(), None)?;
    let names: Vec<String> = (0..features.ncols()).map(|i| format!("f{i}")).collect();
    let manifest = if features.ncols() == crate::features::FEATURE_COUNT {
        ColumnManifest::standard()
    } else {
        ColumnManifest::for_features(&names)
    };
    Ok((scaler.transform(expanded.view()), manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn log_examples() {
        assert_eq!(log_transform(0.0).unwrap(), 0.0);
        assert!((log_transform(999.0).unwrap() - 3.0).abs() < 1e-15);
        let v = log_transform(3838.0).unwrap();
        assert_eq!(format!("{v:.2}"), "3.58");
        assert!(log_transform(-1.0).is_err());
        assert!(log_transform(f64::NAN).is_err());
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(minmax_rescale(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_rescale(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(minmax_rescale(&[0.0, 3.0, 1.0]), vec![0.0, 1.0, 1.0 / 3.0]);
    }

    #[test]
    fn summary_examples() {
        let s = summarize_column(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.iqr_ratio, Some(2.0 / 3.0));
        assert_eq!(s.count, 5);

        let s = summarize_column(&[7.0]).unwrap();
        assert_eq!([s.min, s.q1, s.median, s.q3, s.max], [7.0; 5]);
        assert_eq!(s.std, 0.0);

        let s = summarize_column(&[0.0, 0.0, 0.0, 5.0]).unwrap();
        assert_eq!(s.iqr_ratio, None);
        assert!(summarize_column(&[]).is_err());
    }

    #[test]
    fn model_matrix_examples() {
        let (m, manifest) = assemble_model_matrix(Array2::<f64>::zeros((1, 45)).view()).unwrap();
        assert_eq!(m.dim(), (1, 90));
        assert!(m.iter().all(|&x| x == 0.0));
        assert_eq!(manifest.len(), 90);
        assert_eq!(manifest.columns[45].name, "log_calls_in_week_daylight");

        // T(99) = 2, so both columns rescale to [0, 1]
        let (m, _) = assemble_model_matrix(array![[0.0], [99.0]].view()).unwrap();
        assert_eq!(m, array![[0.0, 0.0], [1.0, 1.0]]);

        let err = assemble_model_matrix(array![[0.0], [f64::NAN]].view()).unwrap_err();
        assert!(err.to_string().contains("row 1, column 0"), "{err}");
    }

    #[test]
    fn preprocessor_fits_on_training_rows_only() {
        let mut features = Array2::<f64>::zeros((3, 45));
        features[[0, 0]] = 0.0;
        features[[1, 0]] = 10.0;
        features[[2, 0]] = 50.0;
        let pre = Preprocessor::fit(features.view(), Some(&[0, 1])).unwrap();
        let m = pre.apply(features.view()).unwrap();
        assert_eq!(m[[1, 0]], 1.0);
        // the held-out row exceeds the fitted range and is clamped
        assert_eq!(m[[2, 0]], 1.0);
        assert!(m.iter().all(|x| (0.0..=1.0).contains(x)));
        let rows = pre.apply_rows(features.view(), &[1]).unwrap();
        assert_eq!(rows.row(0), m.row(1));
    }
}
