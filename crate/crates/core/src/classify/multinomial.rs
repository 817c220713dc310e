//! L1-regularized multinomial logistic regression,
//! `min sum_k ||w_k||_1 + C sum_i (logsumexp(z_i) - z_{i,y_i})` with
//! `z_{i,k} = w_k.x_i + b_k`. Same proximal Newton scheme as the binary
//! solver, with the quadratic model taken over all class blocks jointly.

use super::design::{
    design_transpose_times, l1_quadratic_cd, weighted_gram, Design, SolverOptions, Trace, ARMIJO_SIGMA, ARMIJO_STEPS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialFit {
    /// `classes x columns`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub trace: Trace,
}

fn logits(x: &Design, w: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut z = vec![0.0; x.rows() * k];
    for (class, (wk, &bk)) in w.iter().zip(b).enumerate() {
        for (i, m) in x.margins(wk, bk).into_iter().enumerate() {
            z[i * k + class] = m;
        }
    }
    z
}

fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `C sum_i (logsumexp(z_i) - z_{i,y_i})`.
pub fn multinomial_smooth_loss(x: &Design, labels: &[usize], w: &[Vec<f64>], b: &[f64], c: f64) -> f64 {
    let k = b.len();
    let z = logits(x, w, b);
    c * labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = &z[i * k..(i + 1) * k];
            logsumexp(row) - row[y]
        })
        .sum::<f64>()
}

pub fn multinomial_objective(x: &Design, labels: &[usize], w: &[Vec<f64>], b: &[f64], c: f64) -> f64 {
    w.iter().flatten().map(|v| v.abs()).sum::<f64>() + multinomial_smooth_loss(x, labels, w, b, c)
}

/// Gradient of the smooth term: `(d/dW, d/db)`.
pub fn multinomial_gradient(
    x: &Design,
    labels: &[usize],
    w: &[Vec<f64>],
    b: &[f64],
    c: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = b.len();
    let z = logits(x, w, b);
    let mut resid = vec![0.0; z.len()];
    for (i, &y) in labels.iter().enumerate() {
        let row = &z[i * k..(i + 1) * k];
        let lse = logsumexp(row);
        for class in 0..k {
            resid[i * k + class] = c * ((row[class] - lse).exp() - f64::from(u8::from(class == y)));
        }
    }
    let gw = (0..k)
        .map(|class| {
            (0..x.cols())
                .map(|j| {
                    x.column(j)
                        .iter()
                        .enumerate()
                        .map(|(i, v)| v * resid[i * k + class])
                        .sum()
                })
                .collect()
        })
        .collect();
    let gb = (0..k)
        .map(|class| (0..x.rows()).map(|i| resid[i * k + class]).sum())
        .collect();
    (gw, gb)
}

pub fn train_multinomial_l1(
    x: &Design,
    labels: &[usize],
    classes: usize,
    c: f64,
    opts: &SolverOptions,
) -> Result<MultinomialFit> {
    if x.rows() != labels.len() {
        return Err(Error::domain("label count does not match design rows"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("C must be positive, got {c}")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::domain(format!("label {bad} outside 0..{classes}")));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&y| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::data("training data contains a single class"));
    }

    let (centered, means) = x.centered();
    let x = &centered;
    let (n, p, k) = (x.rows(), x.cols(), classes);
    let mut w = vec![vec![0.0; p]; k];
    let mut b = vec![0.0; k];
    let mut trace = Trace::default();
    let mut obj = multinomial_objective(x, labels, &w, &b, c);
    trace.objective.push(obj);

    let m = p + 1;
    let dim = k * m;
    let mut z = logits(x, &w, &b);
    let mut prob = vec![0.0; n * k];
    for _ in 0..opts.max_epochs {
        // joint proximal Newton step over every class block
        for i in 0..n {
            let row = &z[i * k..(i + 1) * k];
            let lse = logsumexp(row);
            for class in 0..k {
                prob[i * k + class] = (row[class] - lse).exp();
            }
        }
        let mut grad = Vec::with_capacity(dim);
        for class in 0..k {
            let resid: Vec<f64> = (0..n)
                .map(|i| c * (prob[i * k + class] - f64::from(u8::from(labels[i] == class))))
                .collect();
            grad.extend(design_transpose_times(x, &resid));
        }
        // Hessian block (a, b) is [X 1]' diag(C p_a ([a = b] - p_b)) [X 1]
        let mut hess = vec![0.0; dim * dim];
        for a in 0..k {
            for bc in a..k {
                let weights: Vec<f64> = (0..n)
                    .map(|i| {
                        let pa = prob[i * k + a];
                        c * pa * (f64::from(u8::from(a == bc)) - prob[i * k + bc])
                    })
                    .collect();
                let block = weighted_gram(x, &weights);
                for r in 0..m {
                    for col in 0..m {
                        let v = block[r * m + col];
                        hess[(a * m + r) * dim + bc * m + col] = v;
                        hess[(bc * m + col) * dim + a * m + r] = v;
                    }
                }
            }
        }
        let point: Vec<f64> = w.iter().zip(&b).flat_map(|(wk, &bk)| wk.iter().copied().chain([bk])).collect();
        let delta = l1_quadratic_cd(&hess, grad.clone(), &point, |j| j % m != p);
        let l1_change: f64 = (0..dim)
            .filter(|j| j % m != p)
            .map(|j| (point[j] + delta[j]).abs() - point[j].abs())
            .sum();
        let descent = grad.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>() + l1_change;
        if !(descent < 0.0) {
            trace.converged = true;
            break;
        }
        let dirs: Vec<Vec<f64>> = (0..k).map(|class| x.margins(&delta[class * m..class * m + p], delta[class * m + p])).collect();
        let mut beta = 1.0;
        let mut accepted = false;
        for _ in 0..ARMIJO_STEPS {
            let penalty: f64 = (0..dim)
                .filter(|j| j % m != p)
                .map(|j| (point[j] + beta * delta[j]).abs())
                .sum();
            let mut trial = vec![0.0; k];
            let loss: f64 = (0..n)
                .map(|i| {
                    for class in 0..k {
                        trial[class] = z[i * k + class] + beta * dirs[class][i];
                    }
                    logsumexp(&trial) - trial[labels[i]]
                })
                .sum();
            if penalty + c * loss - obj <= ARMIJO_SIGMA * beta * descent {
                accepted = true;
                break;
            }
            beta *= 0.5;
        }
        if !accepted {
            trace.converged = true;
            break;
        }
        for class in 0..k {
            for (a, d) in w[class].iter_mut().zip(&delta[class * m..class * m + p]) {
                *a += beta * d;
            }
            b[class] += beta * delta[class * m + p];
        }
        z = logits(x, &w, &b);
        let next = multinomial_objective(x, labels, &w, &b, c);
        log::trace!("epoch objective {next}");
        trace.objective.push(next);
        let done = (obj - next).abs() <= opts.tol * obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        if done {
            trace.converged = true;
            break;
        }
    }
    log::debug!(
        "multinomial fit: {} epochs, objective {obj}, converged {}",
        trace.objective.len() - 1,
        trace.converged
    );
    if !w.iter().flatten().chain(&b).all(|v| v.is_finite()) {
        return Err(Error::numeric("multinomial regression diverged"));
    }
    let bias = w
        .iter()
        .zip(&b)
        .map(|(wk, bk)| bk - wk.iter().zip(&means).map(|(a, m)| a * m).sum::<f64>())
        .collect();
    Ok(MultinomialFit {
        weights: w,
        bias,
        trace,
    })
}
