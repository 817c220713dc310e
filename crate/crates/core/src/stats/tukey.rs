use serde::{Deserialize, Serialize};

use super::studentized::{ptukey, qtukey};
use crate::error::{Error, Result};

/// One pairwise comparison. `meandiff` is `mean(group2) - mean(group1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyHsdRow {
    pub group1: usize,
    pub group2: usize,
    pub meandiff: f64,
    pub p_adj: f64,
    pub lower: f64,
    pub upper: f64,
    pub reject: bool,
}

impl TukeyHsdRow {
    /// The same comparison seen from the other side.
    pub fn swapped(&self) -> Self {
        TukeyHsdRow {
            group1: self.group2,
            group2: self.group1,
            meandiff: -self.meandiff,
            p_adj: self.p_adj,
            lower: -self.upper,
            upper: -self.lower,
            reject: self.reject,
        }
    }
}

/// All-pairs Tukey-Kramer comparisons at familywise error rate `fwer`.
///
/// With zero within-group variance the intervals collapse to points, so any
/// nonzero mean difference is rejected.
pub fn tukey_hsd<S: AsRef<[f64]>>(groups: &[S], fwer: f64) -> Result<Vec<TukeyHsdRow>> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::domain("Tukey HSD needs at least two groups"));
    }
    if !(fwer > 0.0 && fwer < 1.0) {
        return Err(Error::domain(format!("fwer must lie in (0, 1), got {fwer}")));
    }
    let mut sizes = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut ss_within = 0.0;
    for (g, values) in groups.iter().enumerate() {
        let values = values.as_ref();
        if values.len() < 2 {
            return Err(Error::domain(format!(
                "group {g} has {} observations, Tukey HSD needs at least 2",
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::data(format!("group {g} contains a non-finite value")));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        ss_within += values.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        sizes.push(values.len() as f64);
        means.push(mean);
    }
    let total: f64 = sizes.iter().sum();
    let df = total - k as f64;
    let mse = ss_within / df;
    let crit = qtukey(1.0 - fwer, k, df)?;

    let mut rows = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let meandiff = means[j] - means[i];
            let se = (mse / 2.0 * (1.0 / sizes[i] + 1.0 / sizes[j])).sqrt();
            let margin = crit * se;
            let p_adj = if se > 0.0 {
                1.0 - ptukey(meandiff.abs() / se, k, df)?
            } else if meandiff == 0.0 {
                1.0
            } else {
                0.0
            };
            let (lower, upper) = (meandiff - margin, meandiff + margin);
            rows.push(TukeyHsdRow {
                group1: i,
                group2: j,
                meandiff,
                p_adj: p_adj.clamp(0.0, 1.0),
                lower,
                upper,
                reject: !(lower <= 0.0 && 0.0 <= upper),
            });
        }
    }
    Ok(rows)
}
