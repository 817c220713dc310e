//! Population pyramid scaling: collapse per-node category distributions into
//! hard labels whose per-category counts match fixed quotas.
//!
//! Every `(node, category, probability)` tuple is visited in order of
//! decreasing probability (ties: lower node, then lower category). A tuple
//! assigns its node when the node is still free and the category still has
//! room. The sweep ends once every quota is filled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHARE_TOLERANCE: f64 = 1e-6;
const ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaPlan {
    pub q: f64,
    /// Number of nodes to assign, `round(q * population)`.
    pub total: usize,
    pub quotas: Vec<usize>,
    pub shares: Vec<f64>,
}

/// Empirical category shares of a label list.
pub fn label_shares(labels: &[usize], classes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::data("no labels to derive a target distribution from"));
    }
    let mut counts = vec![0usize; classes];
    for &y in labels {
        *counts
            .get_mut(y)
            .ok_or_else(|| Error::domain(format!("label {y} outside 0..{classes}")))? += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / labels.len() as f64).collect())
}

/// Largest-remainder apportionment of `round(q * population)` assignments
/// over `shares`. Leftover units go to the largest fractional parts, ties to
/// the lower category.
pub fn compute_quotas(population: usize, q: f64, shares: &[f64]) -> Result<QuotaPlan> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("q must lie in (0, 1], got {q}")));
    }
    if shares.is_empty() || shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::domain("shares must be non-negative and finite"));
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > SHARE_TOLERANCE {
        return Err(Error::domain(format!("shares sum to {sum}, not 1")));
    }
    let total = (q * population as f64).round() as usize;
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = quotas.iter().sum();
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        quotas[k] += 1;
    }
    debug_assert_eq!(quotas.iter().sum::<usize>(), total);
    Ok(QuotaPlan {
        q,
        total,
        quotas,
        shares: shares.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub node: u32,
    pub category: usize,
    pub probability: f64,
}

/// Result of a sweep. `picks` is in assignment order, so the position of a
/// pick is its rank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub categories: Vec<Option<usize>>,
    pub picks: Vec<Pick>,
}

impl Assignment {
    pub fn counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for p in &self.picks {
            counts[p.category] += 1;
        }
        counts
    }

    pub fn get(&self, node: u32) -> Option<usize> {
        self.categories.get(node as usize).copied().flatten()
    }

    /// Writes `user_id,category,probability,assigned_rank`. With
    /// `include_unassigned`, free nodes follow with empty category, probability
    /// and rank.
    pub fn write_csv<W: Write>(
        &self,
        w: W,
        user_id: impl Fn(u32) -> String,
        category_names: &[String],
        include_unassigned: bool,
    ) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user_id", "category", "probability", "assigned_rank"])?;
        for (rank, p) in self.picks.iter().enumerate() {
            out.write_record([
                user_id(p.node),
                category_names[p.category].clone(),
                p.probability.to_string(),
                (rank + 1).to_string(),
            ])?;
        }
        if include_unassigned {
            for (node, c) in self.categories.iter().enumerate() {
                if c.is_none() {
                    out.write_record([user_id(node as u32), String::new(), String::new(), String::new()])?;
                }
            }
        }
        out.flush().map_err(|e| Error::io("<assignment csv>", e))?;
        Ok(())
    }
}

fn check_inputs(probs: &[f64], classes: usize, plan: &QuotaPlan) -> Result<usize> {
    if classes == 0 || probs.len() % classes != 0 {
        return Err(Error::domain("probability matrix width does not divide its length"));
    }
    if plan.quotas.len() != classes {
        return Err(Error::domain(format!(
            "plan has {} quotas for {classes} categories",
            plan.quotas.len()
        )));
    }
    let nodes = probs.len() / classes;
    let total: usize = plan.quotas.iter().sum();
    if total > nodes {
        return Err(Error::domain(format!("plan assigns {total} nodes but only {nodes} exist")));
    }
    for (i, row) in probs.chunks(classes).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::domain(format!("row {i} is not a probability vector")));
        }
    }
    Ok(nodes)
}

/// Greedy order: probability descending, then node, then category ascending.
fn sweep_order(a: &Pick, b: &Pick) -> Ordering {
    b.probability
        .total_cmp(&a.probability)
        .then(a.node.cmp(&b.node))
        .then(a.category.cmp(&b.category))
}

/// Materializes and sorts every tuple, then sweeps.
pub fn pps_assign(probs: &[f64], classes: usize, plan: &QuotaPlan) -> Result<Assignment> {
    let nodes = check_inputs(probs, classes, plan)?;
    let mut tuples: Vec<Pick> = probs
        .par_iter()
        .enumerate()
        .map(|(i, &p)| Pick {
            node: (i / classes) as u32,
            category: i % classes,
            probability: p,
        })
        .collect();
    // keys are unique, so an unstable sort is still deterministic
    tuples.par_sort_unstable_by(sweep_order);

    let mut out = Assignment {
        categories: vec![None; nodes],
        picks: Vec::with_capacity(plan.total),
    };
    let mut room = plan.quotas.clone();
    let mut open: usize = room.iter().sum();
    for t in tuples {
        if open == 0 {
            break;
        }
        let slot = &mut out.categories[t.node as usize];
        if slot.is_none() && room[t.category] > 0 {
            *slot = Some(t.category);
            room[t.category] -= 1;
            open -= 1;
            out.picks.push(t);
        }
    }
    Ok(out)
}

struct HeapEntry {
    pick: Pick,
    next: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // max-heap: the tuple that comes first in the sweep is the greatest
    fn cmp(&self, other: &Self) -> Ordering {
        sweep_order(&other.pick, &self.pick)
    }
}

/// Same result as [`pps_assign`] without materializing all tuples: a k-way
/// merge over per-node category lists. A node leaves the heap once assigned.
pub fn pps_assign_streaming(probs: &[f64], classes: usize, plan: &QuotaPlan) -> Result<Assignment> {
    let nodes = check_inputs(probs, classes, plan)?;
    let ranked = |node: usize| -> Vec<usize> {
        let row = &probs[node * classes..(node + 1) * classes];
        let mut cats: Vec<usize> = (0..classes).collect();
        cats.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        cats
    };
    let entry = |node: usize, cats: &[usize], next: usize| HeapEntry {
        pick: Pick {
            node: node as u32,
            category: cats[next],
            probability: probs[node * classes + cats[next]],
        },
        next,
    };
    let orders: Vec<Vec<usize>> = (0..nodes).into_par_iter().map(ranked).collect();
    let mut heap: BinaryHeap<HeapEntry> = (0..nodes).map(|n| entry(n, &orders[n], 0)).collect();

    let mut out = Assignment {
        categories: vec![None; nodes],
        picks: Vec::with_capacity(plan.total),
    };
    let mut room = plan.quotas.clone();
    let mut open: usize = room.iter().sum();
    while open > 0 {
        let Some(HeapEntry { pick, next }) = heap.pop() else {
            break;
        };
        let node = pick.node as usize;
        if room[pick.category] > 0 {
            out.categories[node] = Some(pick.category);
            room[pick.category] -= 1;
            open -= 1;
            out.picks.push(pick);
        } else if next + 1 < classes {
            heap.push(entry(node, &orders[node], next + 1));
        }
    }
    Ok(out)
}
