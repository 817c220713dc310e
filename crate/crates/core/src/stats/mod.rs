//! Exploratory statistics over features and the labeled part of the graph.

mod pca;
pub mod studentized;
mod tukey;

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cdr::{Event, EventKind, SocialGraph};
use crate::demographics::{AgeBounds, DemographicLabel, Gender};
use crate::error::{Error, Result};

pub use pca::{covariance, pca, PcaResult};
pub use studentized::{ptukey, qtukey};
pub use tukey::{tukey_hsd, TukeyHsdRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderMeanRow {
    pub variable: usize,
    pub mean_male: f64,
    pub mean_female: f64,
    /// Two-sided Welch t-test p-value for equal means.
    pub p_value: f64,
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided Welch test of equal means.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::domain("Welch test needs at least 2 values per sample"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::numeric(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// Per-gender means of every column, with Welch p-values.
pub fn gender_group_means(features: ArrayView2<f64>, genders: &[Gender]) -> Result<Vec<GenderMeanRow>> {
    if features.nrows() != genders.len() {
        return Err(Error::domain("one gender per feature row is required"));
    }
    let male: Vec<usize> = (0..genders.len()).filter(|&i| genders[i] == Gender::Male).collect();
    let female: Vec<usize> = (0..genders.len()).filter(|&i| genders[i] == Gender::Female).collect();
    if male.len() < 2 || female.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 users of each gender (male {}, female {})",
            male.len(),
            female.len()
        )));
    }
    (0..features.ncols())
        .map(|c| {
            let col = features.column(c);
            let m: Vec<f64> = male.iter().map(|&i| col[i]).collect();
            let f: Vec<f64> = female.iter().map(|&i| col[i]).collect();
            Ok(GenderMeanRow {
                variable: c,
                mean_male: mean_var(&m).0,
                mean_female: mean_var(&f).0,
                p_value: welch_p_value(&m, &f)?,
            })
        })
        .collect()
}

/// Conditional gender mix of calls: `p[g][g']` is the share of calls made by
/// gender `g` that go to gender `g'`. Rows with no calls are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenderMixMatrix {
    pub counts: [[u64; 2]; 2],
    pub p: [Option<[f64; 2]>; 2],
    /// Share of labeled callers that are male.
    pub p_male: Option<f64>,
}

impl GenderMixMatrix {
    pub fn get(&self, from: Gender, to: Gender) -> Option<f64> {
        self.p[from.index()].map(|row| row[to.index()])
    }
}

/// Builds the mix from call events whose both endpoints carry a label.
pub fn gender_mix(events: &[Event], labels: &[Option<DemographicLabel>]) -> GenderMixMatrix {
    let mut counts = [[0u64; 2]; 2];
    let label = |u: u32| labels.get(u as usize).copied().flatten();
    for e in events.iter().filter(|e| e.kind == EventKind::Call) {
        if let (Some(a), Some(b)) = (label(e.src), label(e.dst)) {
            counts[a.gender.index()][b.gender.index()] += 1;
        }
    }
    let p = counts.map(|row| {
        let total = row[0] + row[1];
        (total > 0).then(|| [row[0] as f64 / total as f64, row[1] as f64 / total as f64])
    });
    let males = labels.iter().flatten().filter(|l| l.gender == Gender::Male).count();
    let labeled = labels.iter().flatten().count();
    GenderMixMatrix {
        counts,
        p,
        p_male: (labeled > 0).then(|| males as f64 / labeled as f64),
    }
}

/// Symmetric counts of links between labeled users by age in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeLinkMatrix {
    pub min_age: u32,
    pub max_age: u32,
    counts: Vec<u64>,
}

impl AgeLinkMatrix {
    pub fn new(bounds: AgeBounds) -> Self {
        let side = (bounds.max - bounds.min + 1) as usize;
        AgeLinkMatrix {
            min_age: bounds.min,
            max_age: bounds.max,
            counts: vec![0; side * side],
        }
    }

    fn side(&self) -> usize {
        (self.max_age - self.min_age + 1) as usize
    }

    fn slot(&self, i: u32, j: u32) -> usize {
        (i - self.min_age) as usize * self.side() + (j - self.min_age) as usize
    }

    pub fn get(&self, i: u32, j: u32) -> u64 {
        if i < self.min_age || j < self.min_age || i > self.max_age || j > self.max_age {
            return 0;
        }
        self.counts[self.slot(i, j)]
    }

    fn add_link(&mut self, i: u32, j: u32) {
        let a = self.slot(i, j);
        let b = self.slot(j, i);
        self.counts[a] += 1;
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn ages(&self) -> std::ops::RangeInclusive<u32> {
        self.min_age..=self.max_age
    }

    /// Mean count inside the band `|i - j| <= width` against the mean outside
    /// it, over ages in `range`. `None` if either side is empty or the
    /// off-band mean is 0.
    pub fn band_ratio(&self, range: std::ops::RangeInclusive<u32>, width: u32) -> Option<f64> {
        let (mut band, mut nb, mut off, mut no) = (0u64, 0u64, 0u64, 0u64);
        for i in range.clone() {
            for j in range.clone() {
                if i.abs_diff(j) <= width {
                    band += self.get(i, j);
                    nb += 1;
                } else {
                    off += self.get(i, j);
                    no += 1;
                }
            }
        }
        if nb == 0 || no == 0 || off == 0 {
            return None;
        }
        Some((band as f64 / nb as f64) / (off as f64 / no as f64))
    }
}

fn labeled_edges<'a>(
    graph: &'a SocialGraph,
    labels: &'a [Option<DemographicLabel>],
) -> impl Iterator<Item = (u32, u32)> + 'a {
    let age = |u: u32| labels.get(u as usize).copied().flatten().map(|l| l.age);
    graph
        .edges()
        .filter_map(move |(x, y)| Some((age(x)?, age(y)?)))
}

/// Each labeled-labeled edge adds one to both `C[i][j]` and `C[j][i]`
/// (two to the diagonal when the ages agree).
pub fn age_link_matrix(
    graph: &SocialGraph,
    labels: &[Option<DemographicLabel>],
    bounds: AgeBounds,
) -> AgeLinkMatrix {
    let mut m = AgeLinkMatrix::new(bounds);
    for (i, j) in labeled_edges(graph, labels) {
        if bounds.contains(i) && bounds.contains(j) {
            m.add_link(i, j);
        }
    }
    m
}

/// Number of labeled-labeled edges per absolute age difference, each edge
/// counted once.
pub fn age_diff_histogram(graph: &SocialGraph, labels: &[Option<DemographicLabel>]) -> BTreeMap<u32, u64> {
    let mut hist = BTreeMap::new();
    for (i, j) in labeled_edges(graph, labels) {
        *hist.entry(i.abs_diff(j)).or_insert(0) += 1;
    }
    hist
}

/// Equal-width histogram of `values` over `[lo, hi]` with `bins` bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &x in values {
        if x >= lo && x <= hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
}
