use ndarray::ArrayView2;
use rayon::prelude::*;

/// Dense column-major copy of selected rows and columns, the layout the
/// coordinate-descent solvers sweep over.
#[derive(Debug, Clone)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(matrix: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &c in cols {
            let column = matrix.column(c);
            data.extend(rows.iter().map(|&r| column[r]));
        }
        Design {
            rows: rows.len(),
            cols: cols.len(),
            data,
        }
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        assert!(columns.iter().all(|c| c.len() == rows), "ragged columns");
        Design {
            rows,
            cols: columns.len(),
            data: columns.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    /// `X w + b` for every row.
    pub fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut z = vec![b; self.rows];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (zi, &x) in z.iter_mut().zip(self.column(j)) {
                    *zi += wj * x;
                }
            }
        }
        z
    }

    /// Copy with every column shifted to mean zero, plus the column means.
    ///
    /// With an unpenalized bias, an L1 problem on centered columns has the
    /// same optimum (`b = b_centered - w.mean`), and coordinate descent no
    /// longer fights the correlation between the bias and non-negative
    /// columns.
    pub fn centered(&self) -> (Design, Vec<f64>) {
        let means: Vec<f64> = (0..self.cols)
            .map(|j| self.column(j).iter().sum::<f64>() / self.rows.max(1) as f64)
            .collect();
        let mut data = self.data.clone();
        for (j, m) in means.iter().enumerate() {
            for v in &mut data[j * self.rows..(j + 1) * self.rows] {
                *v -= m;
            }
        }
        (
            Design {
                rows: self.rows,
                cols: self.cols,
                data,
            },
            means,
        )
    }

    /// Row-major copy of the data.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for j in 0..self.cols {
            for (i, &x) in self.column(j).iter().enumerate() {
                out[i * self.cols + j] = x;
            }
        }
        out
    }
}

/// Stopping and iteration limits shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    pub max_epochs: usize,
    /// Relative objective change between epochs below which a solver stops.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_epochs: 300,
            tol: 1e-8,
            seed: 0,
        }
    }
}

/// Objective value after every epoch, starting with the initial point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl Trace {
    pub fn is_non_increasing(&self) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
    }
}

/// Newton step for `|w + d| + g d + h d^2 / 2`, the one-coordinate L1
/// subproblem.
pub(crate) fn l1_newton_direction(w: f64, g: f64, h: f64) -> f64 {
    if g + 1.0 <= h * w {
        -(g + 1.0) / h
    } else if g - 1.0 >= h * w {
        -(g - 1.0) / h
    } else {
        -w
    }
}

pub(crate) const ARMIJO_SIGMA: f64 = 0.01;
pub(crate) const ARMIJO_STEPS: usize = 30;

const INNER_PASSES: usize = 2000;

/// Step for one linear block `(w, b)` from the model
/// `sum_i (g_i r_i + D_i r_i^2 / 2) + ||w + d||_1 - ||w||_1` with
/// `r = X d + db`, where `g` and `D` are per-row first and second
/// derivatives of the smooth loss.
pub(crate) struct BlockStep {
    pub dw: Vec<f64>,
    pub db: f64,
    /// `X dw + db`.
    pub r: Vec<f64>,
    /// Linear model change `g.r + ||w + d||_1 - ||w||_1`; negative unless
    /// `w` is already optimal for the model.
    pub descent: f64,
}

/// `[X 1]' diag(weights) [X 1]`, row-major `(p + 1) x (p + 1)`; index `p`
/// is the constant column.
pub(crate) fn weighted_gram(x: &Design, weights: &[f64]) -> Vec<f64> {
    let p = x.cols();
    let m = p + 1;
    let column = |j: usize| -> &[f64] {
        if j < p {
            x.column(j)
        } else {
            &[]
        }
    };
    // upper triangle, one row per column
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let weighted: Vec<f64> = if j < p {
                column(j).iter().zip(weights).map(|(v, d)| v * d).collect()
            } else {
                weights.to_vec()
            };
            (j..m)
                .map(|l| {
                    if l < p {
                        weighted.iter().zip(column(l)).map(|(a, v)| a * v).sum()
                    } else {
                        weighted.iter().sum()
                    }
                })
                .collect()
        })
        .collect();
    let mut gram = vec![0.0; m * m];
    for (j, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            gram[j * m + j + off] = v;
            gram[(j + off) * m + j] = v;
        }
    }
    gram
}

/// `[X 1]' v`.
pub(crate) fn design_transpose_times(x: &Design, v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = (0..x.cols())
        .map(|j| x.column(j).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    out.push(v.iter().sum());
    out
}

/// Cyclic coordinate descent on
/// `grad.delta + delta' H delta / 2 + sum_{j penalized} (|w_j + delta_j| - |w_j|)`
/// with a dense symmetric `H`. Returns `delta`.
pub(crate) fn l1_quadratic_cd(hess: &[f64], mut grad: Vec<f64>, w: &[f64], penalized: impl Fn(usize) -> bool) -> Vec<f64> {
    let dim = grad.len();
    let mut delta = vec![0.0; dim];
    for _ in 0..INNER_PASSES {
        let mut largest: f64 = 0.0;
        for j in 0..dim {
            let h = hess[j * dim + j] + 1e-12;
            let step = if penalized(j) {
                l1_newton_direction(w[j] + delta[j], grad[j], h)
            } else {
                -grad[j] / h
            };
            if step == 0.0 {
                continue;
            }
            delta[j] += step;
            for (gl, hl) in grad.iter_mut().zip(&hess[j * dim..(j + 1) * dim]) {
                *gl += step * hl;
            }
            largest = largest.max(step.abs());
        }
        let scale = 1.0 + w.iter().zip(&delta).fold(0.0f64, |acc, (a, b)| acc.max((a + b).abs()));
        if largest <= 1e-10 * scale {
            break;
        }
    }
    delta
}

/// Minimizes the block model by coordinate descent over the columns and
/// the unpenalized bias, on the weighted Gram matrix so that a coordinate
/// update costs O(p) rather than O(n).
pub(crate) fn l1_block_step(x: &Design, w: &[f64], g: &[f64], d: &[f64]) -> BlockStep {
    let p = x.cols();
    let hess = weighted_gram(x, d);
    let mut point = w.to_vec();
    point.push(0.0);
    let mut delta = l1_quadratic_cd(&hess, design_transpose_times(x, g), &point, |j| j < p);
    let db = delta[p];
    delta.truncate(p);
    let dw = delta;
    let r = x.margins(&dw, db);
    let l1_change: f64 = w.iter().zip(&dw).map(|(a, b)| (a + b).abs() - a.abs()).sum();
    let descent = g.iter().zip(&r).map(|(gi, ri)| gi * ri).sum::<f64>() + l1_change;
    BlockStep { dw, db, r, descent }
}

/// `log(1 + exp(x))` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
