//! L1-loss (hinge) linear SVM, `min 1/2 ||w||^2 + C sum_i max(0, 1 - y_i w.x_i)`,
//! solved by dual coordinate descent. The bias is folded in as a constant
//! feature of value 1, so it is regularized together with `w`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::design::{sigmoid, Design, SolverOptions, Trace};
use super::logistic::check_binary;
use super::BinaryFit;
use crate::error::{Error, Result};

/// Primal objective with the bias counted as a regularized coordinate.
pub fn svm_primal_objective(x: &Design, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let z = x.margins(w, b);
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    reg + c * z.iter().zip(y).map(|(zi, yi)| (1.0 - yi * zi).max(0.0)).sum::<f64>()
}

/// Stopping threshold on the spread of projected dual gradients.
const PG_TOL: f64 = 1e-5;

pub fn train_linear_svm(x: &Design, y: &[f64], c: f64, opts: &SolverOptions) -> Result<BinaryFit> {
    if x.rows() != y.len() {
        return Err(Error::domain("label count does not match design rows"));
    }
    check_binary(y, c)?;
    let (n, p) = (x.rows(), x.cols());
    let rows = x.to_row_major();
    let row = |i: usize| &rows[i * p..(i + 1) * p];
    // augmented squared norms (constant feature contributes 1)
    let qd: Vec<f64> = (0..n).map(|i| row(i).iter().map(|v| v * v).sum::<f64>() + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace = Trace::default();
    // dual objective 1/2 ||w||^2 - sum alpha, monitored for descent
    let dual = |w: &[f64], b: f64, alpha: &[f64]| {
        0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b) - alpha.iter().sum::<f64>()
    };
    trace.objective.push(dual(&w, b, &alpha));

    for _ in 0..opts.max_epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let xi = row(i);
            let margin = xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = y[i] * margin - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let delta = (alpha[i] - old) * y[i];
                for (wj, &v) in w.iter_mut().zip(xi) {
                    *wj += delta * v;
                }
                b += delta;
            }
        }
        trace.objective.push(dual(&w, b, &alpha));
        if pg_max - pg_min <= PG_TOL {
            trace.converged = true;
            break;
        }
    }
    if !w.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("SVM solver diverged"));
    }
    Ok(BinaryFit {
        weights: w,
        bias: b,
        trace,
    })
}

/// Logistic calibration `P(y = +1 | s) = 1 / (1 + exp(a s + b))` of decision
/// values, fit by Newton's method with backtracking on smoothed targets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn fit(scores: &[f64], y: &[f64]) -> Result<Self> {
        let pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
        let neg = y.len() as f64 - pos;
        if pos == 0.0 || neg == 0.0 {
            return Err(Error::data("calibration needs both classes"));
        }
        let hi = (pos + 1.0) / (pos + 2.0);
        let lo = 1.0 / (neg + 2.0);
        let t: Vec<f64> = y.iter().map(|&v| if v > 0.0 { hi } else { lo }).collect();
        let nll = |a: f64, b: f64| -> f64 {
            scores
                .iter()
                .zip(&t)
                .map(|(&s, &ti)| {
                    let f = a * s + b;
                    // -(t log p + (1 - t) log(1 - p)) with p = 1 / (1 + e^f)
                    if f >= 0.0 {
                        ti * f + (-f).exp().ln_1p()
                    } else {
                        (ti - 1.0) * f + f.exp().ln_1p()
                    }
                })
                .sum()
        };
        let mut a = 0.0;
        let mut b = ((neg + 1.0) / (pos + 1.0)).ln();
        let mut f = nll(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&s, &ti) in scores.iter().zip(&t) {
                let p = sigmoid(-(a * s + b));
                let d2 = p * (1.0 - p);
                h11 += s * s * d2;
                h22 += d2;
                h21 += s * d2;
                let d1 = ti - p;
                g1 += s * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-7 && g2.abs() < 1e-7 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            let mut moved = false;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = nll(na, nb);
                if nf < f + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    f = nf;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Ok(PlattScaling { a, b })
    }

    pub fn probability(&self, score: f64) -> f64 {
        sigmoid(-(self.a * score + self.b))
    }
}
