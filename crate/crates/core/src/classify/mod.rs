//! Node-attribute classifiers over the model matrix.
//!
//! Gender uses a binary model whose positive class is category 1 (female);
//! age groups use a multinomial model. Every model keeps the list of
//! model-matrix columns it was trained on, so prediction takes the full
//! matrix and selects the columns itself.

mod design;
mod logistic;
mod multinomial;
mod svm;

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demographics::Task;
use crate::error::{Error, Result};
use crate::split::stratified_split;

pub use design::{Design, SolverOptions, Trace};
pub use logistic::{logistic_gradient, logistic_objective, logistic_smooth_loss, train_logistic_l1, BinaryFit};
pub use multinomial::{
    multinomial_gradient, multinomial_objective, multinomial_smooth_loss, train_multinomial_l1, MultinomialFit,
};
pub use svm::{svm_primal_objective, train_linear_svm, PlattScaling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    LogregL1,
    LinearSvmL1loss,
    MultinomialLogistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub c: f64,
    /// Number of columns kept by univariate selection; clamped to the
    /// matrix width.
    pub k: usize,
    pub train_fraction: f64,
    pub solver: SolverOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::LogregL1,
            c: 10.0,
            k: 100,
            train_fraction: 0.7,
            solver: SolverOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Gender => TrainConfig::default(),
            Task::Age => TrainConfig {
                algorithm: Algorithm::MultinomialLogistic,
                c: 1.0,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub format_version: u32,
    pub task: Task,
    pub algorithm: Algorithm,
    pub c: f64,
    /// Width of the model matrix this model expects.
    pub input_width: usize,
    /// Model-matrix columns used, ascending.
    pub columns: Vec<usize>,
    pub column_names: Vec<String>,
    pub classes: usize,
    /// One row for binary models (score of class 1), one per class otherwise.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub calibration: Option<PlattScaling>,
}

impl LinearModel {
    fn check_width(&self, matrix: &ArrayView2<f64>) -> Result<()> {
        if matrix.ncols() != self.input_width {
            return Err(Error::domain(format!(
                "model expects {} columns, matrix has {}",
                self.input_width,
                matrix.ncols()
            )));
        }
        Ok(())
    }

    /// Raw linear scores: one column for binary models, `classes` otherwise.
    pub fn decision_function(&self, matrix: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(&matrix)?;
        let n = matrix.nrows();
        let mut out = Array2::<f64>::zeros((n, self.weights.len()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(matrix.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut dst, src)| {
                for (k, (w, b)) in self.weights.iter().zip(&self.bias).enumerate() {
                    dst[k] = self.columns.iter().zip(w).map(|(&c, wj)| src[c] * wj).sum::<f64>() + b;
                }
            });
        Ok(out)
    }

    /// Per-row class probabilities, columns ordered by category index.
    pub fn predict_proba(&self, matrix: ArrayView2<f64>) -> Result<Array2<f64>> {
        let scores = self.decision_function(matrix)?;
        let n = scores.nrows();
        let mut out = Array2::<f64>::zeros((n, self.classes));
        if self.classes == 2 && self.weights.len() == 1 {
            for (i, s) in scores.column(0).iter().enumerate() {
                let p = match self.calibration {
                    Some(cal) => cal.probability(*s),
                    None => design::sigmoid(*s),
                };
                out[[i, 0]] = 1.0 - p;
                out[[i, 1]] = p;
            }
        } else {
            for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(scores.axis_iter(Axis(0))) {
                let m = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = src.iter().map(|s| (s - m).exp()).sum();
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = (s - m).exp() / total;
                }
            }
        }
        Ok(out)
    }

    pub fn nonzero_weights(&self) -> usize {
        self.weights.iter().flatten().filter(|&&w| w != 0.0).count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LinearModel = serde_json::from_str(&text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!("unsupported model version {}", model.format_version)));
        }
        Ok(model)
    }
}

/// Univariate ANOVA F-score of every column against the labels. Columns
/// that are constant within the given rows score 0; columns that perfectly
/// separate the classes score infinity.
pub fn anova_f_scores(matrix: ArrayView2<f64>, rows: &[usize], labels: &[usize]) -> Vec<f64> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let n = rows.len() as f64;
    let mut counts = vec![0.0; classes];
    labels.iter().for_each(|&y| counts[y] += 1.0);
    let present = counts.iter().filter(|&&c| c > 0.0).count() as f64;
    (0..matrix.ncols())
        .into_par_iter()
        .map(|c| {
            let col = matrix.column(c);
            let mut sums = vec![0.0; classes];
            for (&r, &y) in rows.iter().zip(labels) {
                sums[y] += col[r];
            }
            let grand = sums.iter().sum::<f64>() / n;
            let means: Vec<f64> = sums
                .iter()
                .zip(&counts)
                .map(|(s, &k)| if k > 0.0 { s / k } else { 0.0 })
                .collect();
            let ssb: f64 = means.iter().zip(&counts).map(|(m, k)| k * (m - grand).powi(2)).sum();
            let ssw: f64 = rows.iter().zip(labels).map(|(&r, &y)| (col[r] - means[y]).powi(2)).sum();
            let between = ssb / (present - 1.0);
            let within = ssw / (n - present);
            if ssb <= 1e-12 * (ssb + ssw).max(f64::MIN_POSITIVE) || !between.is_finite() {
                0.0
            } else if within <= 0.0 {
                f64::INFINITY
            } else {
                between / within
            }
        })
        .collect()
}

/// The `k` columns with the highest F-score (ties to the lower index),
/// returned in ascending column order.
pub fn select_top_k_features(matrix: ArrayView2<f64>, rows: &[usize], labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if k > matrix.ncols() {
        return Err(Error::domain(format!("k = {k} exceeds {} columns", matrix.ncols())));
    }
    let scores = anova_f_scores(matrix, rows, labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Trains on `rows` of the model matrix with category labels `labels`
/// (aligned with `rows`).
pub fn train(
    task: Task,
    classes: usize,
    config: &TrainConfig,
    matrix: ArrayView2<f64>,
    rows: &[usize],
    labels: &[usize],
    column_names: &[String],
) -> Result<LinearModel> {
    config.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::domain("one label per training row is required"));
    }
    let k = config.k.min(matrix.ncols());
    let columns = select_top_k_features(matrix, rows, labels, k)?;
    let x = Design::new(matrix, rows, &columns);
    let names = columns
        .iter()
        .map(|&c| column_names.get(c).cloned().unwrap_or_else(|| format!("col{c}")))
        .collect();
    let mut model = LinearModel {
        format_version: MODEL_FORMAT_VERSION,
        task,
        algorithm: config.algorithm,
        c: config.c,
        input_width: matrix.ncols(),
        columns,
        column_names: names,
        classes,
        weights: Vec::new(),
        bias: Vec::new(),
        calibration: None,
    };
    let binary_labels = || -> Result<Vec<f64>> {
        if classes != 2 {
            return Err(Error::Config(format!(
                "{:?} is a binary algorithm but the {task:?} task has {classes} categories",
                config.algorithm
            )));
        }
        Ok(labels.iter().map(|&y| if y == 1 { 1.0 } else { -1.0 }).collect())
    };
    match config.algorithm {
        Algorithm::LogregL1 => {
            let fit = train_logistic_l1(&x, &binary_labels()?, config.c, &config.solver)?;
            model.weights = vec![fit.weights];
            model.bias = vec![fit.bias];
        }
        Algorithm::LinearSvmL1loss => {
            let y = binary_labels()?;
            let fit = train_linear_svm(&x, &y, config.c, &config.solver)?;
            let scores = x.margins(&fit.weights, fit.bias);
            model.calibration = Some(PlattScaling::fit(&scores, &y)?);
            model.weights = vec![fit.weights];
            model.bias = vec![fit.bias];
        }
        Algorithm::MultinomialLogistic => {
            let fit = train_multinomial_l1(&x, labels, classes, config.c, &config.solver)?;
            model.weights = fit.weights;
            model.bias = fit.bias;
        }
    }
    Ok(model)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub c: f64,
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub rows: Vec<GridRow>,
    pub best: TrainConfig,
}

/// Exhaustive search over `cs x ks`. The given rows are split into an inner
/// fit/holdout pair with `base.train_fraction`; the best cell has the
/// highest holdout accuracy, ties going to smaller `k`, then smaller `C`.
pub fn grid_search(
    task: Task,
    classes: usize,
    base: &TrainConfig,
    cs: &[f64],
    ks: &[usize],
    matrix: ArrayView2<f64>,
    rows: &[usize],
    labels: &[usize],
) -> Result<GridReport> {
    if cs.is_empty() || ks.is_empty() {
        return Err(Error::Config("grid search needs at least one C and one k".into()));
    }
    let (fit_pos, hold_pos) = stratified_split(labels, base.train_fraction, base.solver.seed)?;
    let fit_rows: Vec<usize> = fit_pos.iter().map(|&i| rows[i]).collect();
    let fit_labels: Vec<usize> = fit_pos.iter().map(|&i| labels[i]).collect();
    let hold_rows: Vec<usize> = hold_pos.iter().map(|&i| rows[i]).collect();
    let hold = matrix.select(Axis(0), &hold_rows);
    let cells: Vec<(f64, usize)> = ks.iter().flat_map(|&k| cs.iter().map(move |&c| (c, k))).collect();
    let names: Vec<String> = Vec::new();
    let rows_out = cells
        .par_iter()
        .map(|&(c, k)| -> Result<GridRow> {
            let config = TrainConfig { c, k, ..base.clone() };
            let model = train(task, classes, &config, matrix, &fit_rows, &fit_labels, &names)?;
            let proba = model.predict_proba(hold.view())?;
            let correct = hold_pos
                .iter()
                .zip(proba.axis_iter(Axis(0)))
                .filter(|(&i, p)| argmax(p.as_slice().expect("standard layout")) == labels[i])
                .count();
            Ok(GridRow {
                c,
                k,
                accuracy: correct as f64 / hold_pos.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows_out
        .iter()
        .max_by(|a, b| {
            a.accuracy
                .total_cmp(&b.accuracy)
                .then(b.k.cmp(&a.k))
                .then(b.c.total_cmp(&a.c))
        })
        .expect("non-empty grid");
    Ok(GridReport {
        best: TrainConfig {
            c: best.c,
            k: best.k,
            ..base.clone()
        },
        rows: rows_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn planted(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut m = Array2::<f64>::zeros((n, 6));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = usize::from(rng.gen_bool(0.5));
            labels.push(y);
            for c in 0..6 {
                m[[i, c]] = rng.gen();
            }
            m[[i, 3]] = y as f64;
            m[[i, 5]] = 0.5;
        }
        (m, labels)
    }

    #[test]
    fn top_k_selection() {
        let (m, labels) = planted(200, 1);
        let rows: Vec<usize> = (0..200).collect();
        assert_eq!(select_top_k_features(m.view(), &rows, &labels, 1).unwrap(), vec![3]);
        assert_eq!(select_top_k_features(m.view(), &rows, &labels, 6).unwrap(), (0..6).collect::<Vec<_>>());
        let five = select_top_k_features(m.view(), &rows, &labels, 5).unwrap();
        assert!(!five.contains(&5));
        assert!(select_top_k_features(m.view(), &rows, &labels, 0).is_err());
        assert!(select_top_k_features(m.view(), &rows, &labels, 7).is_err());
    }

    #[test]
    fn probabilities_are_distributions() {
        let (m, labels) = planted(300, 2);
        let rows: Vec<usize> = (0..300).collect();
        for algorithm in [Algorithm::LogregL1, Algorithm::LinearSvmL1loss] {
            let config = TrainConfig {
                algorithm,
                c: 1.0,
                k: 3,
                ..Default::default()
            };
            let model = train(Task::Gender, 2, &config, m.view(), &rows, &labels, &[]).unwrap();
            let p = model.predict_proba(m.view()).unwrap();
            for row in p.axis_iter(Axis(0)) {
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
                assert!((row.sum() - 1.0).abs() < 1e-9);
            }
            assert!(model.predict_proba(m.slice(ndarray::s![.., ..5])).is_err());
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = LinearModel {
            format_version: MODEL_FORMAT_VERSION,
            task: Task::Age,
            algorithm: Algorithm::MultinomialLogistic,
            c: 1.0,
            input_width: 2,
            columns: vec![0, 1],
            column_names: vec![],
            classes: 4,
            weights: vec![vec![0.0; 2]; 4],
            bias: vec![0.0; 4],
            calibration: None,
        };
        let p = model.predict_proba(ndarray::array![[0.3, 0.9]].view()).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let binary = LinearModel {
            task: Task::Gender,
            algorithm: Algorithm::LogregL1,
            classes: 2,
            weights: vec![vec![0.0; 2]],
            bias: vec![0.0],
            ..model
        };
        let p = binary.predict_proba(ndarray::array![[0.3, 0.9]].view()).unwrap();
        assert_eq!(p.row(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn binary_probability_is_monotone_in_score() {
        let model = LinearModel {
            format_version: MODEL_FORMAT_VERSION,
            task: Task::Gender,
            algorithm: Algorithm::LogregL1,
            c: 1.0,
            input_width: 1,
            columns: vec![0],
            column_names: vec![],
            classes: 2,
            weights: vec![vec![2.0]],
            bias: vec![-1.0],
            calibration: None,
        };
        let m = Array2::from_shape_fn((50, 1), |(i, _)| i as f64 / 49.0);
        let p = model.predict_proba(m.view()).unwrap();
        assert!(p.column(1).windows(2).into_iter().all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_search_examples() {
        let (m, labels) = planted(400, 3);
        let rows: Vec<usize> = (0..400).collect();
        let base = TrainConfig::default();
        let single = grid_search(Task::Gender, 2, &base, &[3.0], &[2], m.view(), &rows, &labels).unwrap();
        assert_eq!((single.best.c, single.best.k), (3.0, 2));
        assert_eq!(single.rows.len(), 1);
        let report = grid_search(Task::Gender, 2, &base, &[0.1, 1.0], &[1, 3, 6], m.view(), &rows, &labels).unwrap();
        assert_eq!(report.rows.len(), 6);
        // k = 1 picks the planted column and already separates perfectly
        assert_eq!(report.best.k, 1);
        assert!(grid_search(Task::Gender, 2, &base, &[], &[1], m.view(), &rows, &labels).is_err());
    }

    #[test]
    fn model_round_trips_through_json() {
        let (m, labels) = planted(100, 4);
        let rows: Vec<usize> = (0..100).collect();
        let model = train(Task::Gender, 2, &TrainConfig::default(), m.view(), &rows, &labels, &[]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        assert_eq!(LinearModel::load(&path).unwrap(), model);
    }

    #[test]
    fn training_is_deterministic() {
        let (m, labels) = planted(300, 5);
        let rows: Vec<usize> = (0..300).collect();
        for algorithm in [Algorithm::LogregL1, Algorithm::LinearSvmL1loss] {
            let config = TrainConfig {
                algorithm,
                ..Default::default()
            };
            let a = train(Task::Gender, 2, &config, m.view(), &rows, &labels, &[]).unwrap();
            let b = train(Task::Gender, 2, &config, m.view(), &rows, &labels, &[]).unwrap();
            assert_eq!(a, b);
        }
    }
}
