//! Reaction-diffusion label propagation.
//!
//! Every node carries an initial distribution `f_x` over `C` categories and a
//! current distribution `g_x`. One step replaces every row at once:
//!
//! `g_x <- (1 - lambda) f_x + lambda * mean_{y ~ x} g_y`
//!
//! Reads come from the previous buffer only, so the result does not depend
//! on visiting order. Nodes without neighbors keep `g_x = f_x`. The map is a
//! `lambda`-contraction in the sup norm, so the step-to-step residual decays
//! at least geometrically.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdr::SocialGraph;
use crate::error::{Error, Result};

/// Tolerance on row sums checked after every step.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    classes: usize,
    pub lambda: f64,
    pub iteration: usize,
    f: Vec<f64>,
    g: Vec<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

fn check_distribution(row: &[f64]) -> bool {
    row.iter().all(|&p| p >= 0.0 && p.is_finite()) && (row.iter().sum::<f64>() - 1.0).abs() <= ROW_SUM_TOLERANCE
}

impl LabelState {
    fn uniform(node_count: usize, classes: usize, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if classes == 0 {
            return Err(Error::domain("need at least one category"));
        }
        let f = vec![1.0 / classes as f64; node_count * classes];
        Ok(LabelState {
            classes,
            lambda,
            iteration: 0,
            g: f.clone(),
            f,
        })
    }

    fn set_one_hot(&mut self, node: u32, category: usize) -> Result<()> {
        if category >= self.classes {
            return Err(Error::domain(format!(
                "category {category} outside 0..{} for node {node}",
                self.classes
            )));
        }
        if node as usize >= self.node_count() {
            return Err(Error::domain(format!("labeled node {node} is not in the graph")));
        }
        let row = self.f_row_mut(node);
        row.fill(0.0);
        row[category] = 1.0;
        Ok(())
    }

    fn f_row_mut(&mut self, node: u32) -> &mut [f64] {
        let c = self.classes;
        &mut self.f[node as usize * c..(node as usize + 1) * c]
    }

    /// One-hot rows for the given training labels, uniform elsewhere.
    pub fn pure(node_count: usize, classes: usize, labels: &[(u32, usize)], lambda: f64) -> Result<Self> {
        let mut state = Self::uniform(node_count, classes, lambda)?;
        for &(node, category) in labels {
            state.set_one_hot(node, category)?;
        }
        state.g.copy_from_slice(&state.f);
        Ok(state)
    }

    /// One-hot rows for training labels, classifier rows for the nodes in
    /// `predicted` (unless labeled), uniform for everything else.
    pub fn combined(
        node_count: usize,
        classes: usize,
        labels: &[(u32, usize)],
        predicted: &[(u32, &[f64])],
        lambda: f64,
    ) -> Result<Self> {
        let mut state = Self::uniform(node_count, classes, lambda)?;
        for &(node, row) in predicted {
            if row.len() != classes || !check_distribution(row) {
                return Err(Error::numeric(format!("invalid probability row for node {node}: {row:?}")));
            }
            if node as usize >= node_count {
                return Err(Error::domain(format!("predicted node {node} is not in the graph")));
            }
            state.f_row_mut(node).copy_from_slice(row);
        }
        for &(node, category) in labels {
            state.set_one_hot(node, category)?;
        }
        state.g.copy_from_slice(&state.f);
        Ok(state)
    }

    pub fn node_count(&self) -> usize {
        self.f.len() / self.classes
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn f(&self, node: u32) -> &[f64] {
        let c = self.classes;
        &self.f[node as usize * c..(node as usize + 1) * c]
    }

    pub fn g(&self, node: u32) -> &[f64] {
        let c = self.classes;
        &self.g[node as usize * c..(node as usize + 1) * c]
    }

    pub fn g_matrix(&self) -> &[f64] {
        &self.g
    }

    /// Largest deviation of any row sum of `g` from 1.
    pub fn max_row_sum_error(&self) -> f64 {
        self.g
            .par_chunks(self.classes)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Sup-norm distance between the neighbor average of `g` and `g`
    /// itself, over nodes with neighbors. For a fresh state (`g = f`) the
    /// residual after `t` steps is at most `lambda^t` times this value.
    pub fn initial_defect(&self, graph: &SocialGraph) -> f64 {
        let c = self.classes;
        (0..self.node_count())
            .into_par_iter()
            .map(|x| {
                let nbrs = graph.neighbors(x as u32);
                if nbrs.is_empty() {
                    return 0.0;
                }
                let inv = 1.0 / nbrs.len() as f64;
                (0..c)
                    .map(|k| {
                        let avg: f64 = nbrs.iter().map(|&y| self.g[y as usize * c + k]).sum::<f64>() * inv;
                        (avg - self.g[x * c + k]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }
}

/// Step statistics: sup-norm change and the worst row-sum error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub iteration: usize,
    pub residual: f64,
    pub row_sum_error: f64,
}

/// One synchronous update. `weights`, if given, must align with
/// [`SocialGraph::adjacency`]; the neighbor mean becomes a weighted mean.
pub fn propagate_step(state: &mut LabelState, graph: &SocialGraph, weights: Option<&[f64]>) -> Result<StepReport> {
    let c = state.classes;
    let n = state.node_count();
    if graph.node_count() != n {
        return Err(Error::domain(format!(
            "state has {n} nodes but the graph has {}",
            graph.node_count()
        )));
    }
    if let Some(w) = weights {
        if w.len() != graph.adjacency().len() {
            return Err(Error::domain("edge weights do not align with the adjacency"));
        }
    }
    let lambda = state.lambda;
    let offsets = graph.offsets();
    let adjacency = graph.adjacency();
    let (f, g_prev) = (&state.f, &state.g);
    let mut next = vec![0.0; g_prev.len()];
    let (residual, row_err) = next
        .par_chunks_mut(c)
        .enumerate()
        .map(|(x, out)| {
            let range = offsets[x]..offsets[x + 1];
            let fx = &f[x * c..(x + 1) * c];
            let mut total_weight = 0.0;
            if !range.is_empty() {
                out.fill(0.0);
                for e in range {
                    let y = adjacency[e] as usize;
                    let w = weights.map_or(1.0, |w| w[e]);
                    total_weight += w;
                    for (o, &gy) in out.iter_mut().zip(&g_prev[y * c..(y + 1) * c]) {
                        *o += w * gy;
                    }
                }
            }
            if total_weight > 0.0 {
                for (o, &fk) in out.iter_mut().zip(fx) {
                    *o = (1.0 - lambda) * fk + lambda * (*o / total_weight);
                }
            } else {
                out.copy_from_slice(fx);
            }
            let old = &g_prev[x * c..(x + 1) * c];
            let change = out.iter().zip(old).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let err = (out.iter().sum::<f64>() - 1.0).abs();
            (change, err)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    state.g = next;
    state.iteration += 1;
    if row_err > ROW_SUM_TOLERANCE {
        return Err(Error::numeric(format!(
            "row sums drifted by {row_err:e} at iteration {}",
            state.iteration
        )));
    }
    Ok(StepReport {
        iteration: state.iteration,
        residual,
        row_sum_error: row_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    pub lambda: f64,
    pub initial_defect: f64,
    pub steps: Vec<StepReport>,
    pub converged: bool,
}

impl PropagationReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.steps.last().map(|s| s.residual)
    }

    pub fn write_residual_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("iteration,residual,row_sum_error\n");
        for s in &self.steps {
            text.push_str(&format!("{},{:e},{:e}\n", s.iteration, s.residual, s.row_sum_error));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Up to `max_iters` steps, stopping early once the residual drops below
/// `tol`.
pub fn propagate(
    state: &mut LabelState,
    graph: &SocialGraph,
    max_iters: usize,
    tol: f64,
    weights: Option<&[f64]>,
) -> Result<PropagationReport> {
    let mut report = PropagationReport {
        lambda: state.lambda,
        initial_defect: state.initial_defect(graph),
        steps: Vec::with_capacity(max_iters),
        converged: false,
    };
    for _ in 0..max_iters {
        let step = propagate_step(state, graph, weights)?;
        log::debug!("propagation step {} residual {:e}", step.iteration, step.residual);
        report.steps.push(step);
        if step.residual < tol {
            report.converged = true;
            break;
        }
    }
    Ok(report)
}

/// Most probable category per node (lowest index on ties) and its
/// probability.
pub fn argmax_predict(state: &LabelState) -> Vec<(usize, f64)> {
    state
        .g
        .par_chunks(state.classes)
        .map(|row| {
            let k = crate::classify::argmax(row);
            (k, row[k])
        })
        .collect()
}

const STATE_MAGIC: &[u8; 4] = b"DGLS";
const STATE_VERSION: u32 = 1;

impl LabelState {
    /// Binary checkpoint: magic, version, iteration, lambda, node count,
    /// class count, then `f` and `g` as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
        write(STATE_MAGIC)?;
        write(&STATE_VERSION.to_le_bytes())?;
        write(&(self.iteration as u64).to_le_bytes())?;
        write(&self.lambda.to_le_bytes())?;
        write(&(self.node_count() as u64).to_le_bytes())?;
        write(&(self.classes as u32).to_le_bytes())?;
        for v in self.f.iter().chain(&self.g) {
            write(&v.to_le_bytes())?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut read = |buf: &mut [u8]| r.read_exact(buf).map_err(|e| Error::io(path, e));
        let mut header = [0u8; 36];
        read(&mut header)?;
        if &header[0..4] != STATE_MAGIC {
            return Err(Error::data(format!("{} is not a label-state checkpoint", path.display())));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
        if version != STATE_VERSION {
            return Err(Error::data(format!("unsupported checkpoint version {version}")));
        }
        let iteration = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
        let lambda = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
        let nodes = u64::from_le_bytes(header[24..32].try_into().expect("8 bytes")) as usize;
        let classes = u32::from_le_bytes(header[32..36].try_into().expect("4 bytes")) as usize;
        let mut values = vec![0.0; 2 * nodes * classes];
        let mut buf = [0u8; 8];
        for v in &mut values {
            read(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        let g = values.split_off(nodes * classes);
        check_lambda(lambda)?;
        Ok(LabelState {
            classes,
            lambda,
            iteration,
            f: values,
            g,
        })
    }
}
