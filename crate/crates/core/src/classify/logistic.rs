//! L1-regularized binary logistic regression,
//! `min ||w||_1 + C sum_i log(1 + exp(-y_i (w.x_i + b)))`, solved by
//! proximal Newton: each epoch minimizes a quadratic model of the loss plus
//! the L1 term by coordinate descent, then backtracks along that step. The
//! bias is an extra, unpenalized coordinate.

use super::design::{l1_block_step, sigmoid, softplus, Design, SolverOptions, Trace, ARMIJO_SIGMA, ARMIJO_STEPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trace: Trace,
}

/// `C sum_i log(1 + exp(-y_i z_i))`.
pub fn logistic_smooth_loss(x: &Design, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let z = x.margins(w, b);
    c * z.iter().zip(y).map(|(zi, yi)| softplus(-yi * zi)).sum::<f64>()
}

pub fn logistic_objective(x: &Design, y: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    w.iter().map(|v| v.abs()).sum::<f64>() + logistic_smooth_loss(x, y, w, b, c)
}

/// Gradient of the smooth term with respect to `w` and `b`.
pub fn logistic_gradient(x: &Design, y: &[f64], w: &[f64], b: f64, c: f64) -> (Vec<f64>, f64) {
    let z = x.margins(w, b);
    let r: Vec<f64> = z.iter().zip(y).map(|(zi, yi)| -yi * sigmoid(-yi * zi) * c).collect();
    let gw = (0..x.cols())
        .map(|j| x.column(j).iter().zip(&r).map(|(a, b)| a * b).sum())
        .collect();
    (gw, r.iter().sum())
}

pub(crate) fn check_binary(y: &[f64], c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("C must be positive, got {c}")));
    }
    if !y.iter().all(|&v| v == 1.0 || v == -1.0) {
        return Err(Error::domain("binary labels must be +1 or -1"));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::data("training data contains a single class"));
    }
    Ok(())
}

pub fn train_logistic_l1(x: &Design, y: &[f64], c: f64, opts: &SolverOptions) -> Result<BinaryFit> {
    if x.rows() != y.len() {
        return Err(Error::domain("label count does not match design rows"));
    }
    check_binary(y, c)?;
    let (centered, means) = x.centered();
    let x = &centered;
    let (n, p) = (x.rows(), x.cols());
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut z = vec![0.0; n];
    let mut trace = Trace::default();
    let mut obj = logistic_objective(x, y, &w, b, c);
    trace.objective.push(obj);
    let mut grad = vec![0.0; n];
    let mut curv = vec![0.0; n];

    for _ in 0..opts.max_epochs {
        for i in 0..n {
            let t = sigmoid(-y[i] * z[i]);
            grad[i] = -c * y[i] * t;
            curv[i] = c * t * (1.0 - t);
        }
        let step = l1_block_step(x, &w, &grad, &curv);
        if step.descent >= 0.0 {
            trace.converged = true;
            break;
        }
            let mut beta = 1.0;
        let mut accepted = false;
        for _ in 0..ARMIJO_STEPS {
            let trial_penalty: f64 = w.iter().zip(&step.dw).map(|(a, d)| (a + beta * d).abs()).sum();
            let trial_loss = c * (0..n).map(|i| softplus(-y[i] * (z[i] + beta * step.r[i]))).sum::<f64>();
            if trial_penalty + trial_loss - obj <= ARMIJO_SIGMA * beta * step.descent {
                accepted = true;
                break;
            }
            beta *= 0.5;
        }
        if !accepted {
            trace.converged = true;
            break;
        }
        for (a, d) in w.iter_mut().zip(&step.dw) {
            *a += beta * d;
        }
        b += beta * step.db;
        z = x.margins(&w, b);
        let next = logistic_objective(x, y, &w, b, c);
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
        "logistic fit: {} epochs, objective {obj}, converged {}",
        trace.objective.len() - 1,
        trace.converged
    );
    if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
        return Err(Error::numeric("logistic regression diverged"));
    }
    let bias = b - w.iter().zip(&means).map(|(a, m)| a * m).sum::<f64>();
    Ok(BinaryFit {
        weights: w,
        bias,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn toy(seed: u64, n: usize) -> (Design, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
        let y = (0..n)
            .map(|i| {
                let s = 3.0 * cols[0][i] - 2.0 * cols[1][i] - 0.4 + rng.gen_range(-0.8..0.8);
                if s > 0.0 { 1.0 } else { -1.0 }
            })
            .collect();
        (Design::from_columns(&cols), y)
    }

    #[test]
    fn separable_one_dimension() {
        let x = Design::from_columns(&[vec![0.0, 0.1, 0.2, 0.8, 0.9, 1.0]]);
        let y = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let fit = train_logistic_l1(&x, &y, 1000.0, &SolverOptions::default()).unwrap();
        let z = x.margins(&fit.weights, fit.bias);
        assert!(z.iter().zip(&y).all(|(z, y)| z * y > 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy(4, 50);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b = rng.gen_range(-1.0..1.0);
            let (gw, gb) = logistic_gradient(&x, &y, &w, b, 1.5);
            let eps = 1e-6;
            for j in 0..4 {
                let mut up = w.clone();
                let mut dn = w.clone();
                up[j] += eps;
                dn[j] -= eps;
                let fd = (logistic_smooth_loss(&x, &y, &up, b, 1.5) - logistic_smooth_loss(&x, &y, &dn, b, 1.5)) / (2.0 * eps);
                assert!((fd - gw[j]).abs() <= 1e-4 * gw[j].abs().max(1e-3), "{fd} vs {}", gw[j]);
            }
            let fd = (logistic_smooth_loss(&x, &y, &w, b + eps, 1.5) - logistic_smooth_loss(&x, &y, &w, b - eps, 1.5)) / (2.0 * eps);
            assert!((fd - gb).abs() <= 1e-4 * gb.abs().max(1e-3));
        }
    }

    #[test]
    fn objective_descends_and_converges() {
        let (x, y) = toy(1, 400);
        let fit = train_logistic_l1(&x, &y, 2.0, &SolverOptions::default()).unwrap();
        assert!(fit.trace.is_non_increasing());
        assert!(fit.trace.converged);
        let long = SolverOptions {
            max_epochs: 5000,
            tol: 1e-15,
            ..Default::default()
        };
        let reference = train_logistic_l1(&x, &y, 2.0, &long).unwrap();
        let a = *fit.trace.objective.last().unwrap();
        let b = *reference.trace.objective.last().unwrap();
        assert!((a - b).abs() <= 1e-6 * b, "{a} vs {b}");
        // L1 keeps exact zeros for the two noise columns at moderate C
        let sparse = train_logistic_l1(&x, &y, 0.05, &SolverOptions::default()).unwrap();
        assert!(sparse.weights.iter().any(|&w| w == 0.0));
    }

    #[test]
    fn vanishing_c_gives_prior() {
        let (x, y) = toy(2, 200);
        let fit = train_logistic_l1(&x, &y, 1e-6, &SolverOptions::default()).unwrap();
        assert!(fit.weights.iter().all(|&w| w == 0.0));
        let pos = y.iter().filter(|&&v| v > 0.0).count() as f64 / y.len() as f64;
        assert!((sigmoid(fit.bias) - pos).abs() < 1e-3);
    }

    #[test]
    fn single_class_rejected() {
        let x = Design::from_columns(&[vec![0.0, 1.0]]);
        assert!(train_logistic_l1(&x, &[1.0, 1.0], 1.0, &SolverOptions::default()).is_err());
        assert!(train_logistic_l1(&x, &[1.0, -1.0], 0.0, &SolverOptions::default()).is_err());
    }
}
