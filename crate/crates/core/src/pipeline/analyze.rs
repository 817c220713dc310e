//! Exploratory statistics over the ingested data. Reads every available
//! label; nothing here feeds the prediction stages.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_dataset, IdMatrix, PipelineConfig, Workspace, FEATURES};
use crate::demographics::{AgeBounds, AgeGroups, Gender};
use crate::error::{Error, Result};
use crate::features::{feature_index, feature_names, Family, Flow, TimeWindow};
use crate::preprocess::{assemble_model_matrix, summarize_column};
use crate::stats::{age_diff_histogram, age_link_matrix, gender_group_means, gender_mix, pca, tukey_hsd, GenderMixMatrix};

/// Headline numbers of the analysis; the tables go to CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub stamp: super::Stamp,
    pub clients: usize,
    pub labeled_clients: usize,
    pub pca_components_90: usize,
    pub pca_leading_fraction: Vec<f64>,
    pub gender_mix: GenderMixMatrix,
    pub tukey_variable: String,
    /// Mean link count within `band_width` years against outside it,
    /// over ages 18 to 80.
    pub age_band_ratio: Option<f64>,
    pub band_width: u32,
    pub age_diff_mode: Option<u32>,
}

fn save(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn analyze(cfg: &PipelineConfig, ws: &Workspace) -> Result<AnalysisSummary> {
    let ds = load_dataset(ws)?;
    let graph = ds.graph();
    let features = IdMatrix::load(&ws.require(FEATURES, "features")?)?;
    let names = feature_names();
    let labels = ds.sets.labels();

    let mut text = String::from("variable,count,mean,std,min,q1,median,q3,max,iqr_ratio\n");
    for (c, name) in names.iter().enumerate() {
        let col = features.values.column(c).to_vec();
        let s = summarize_column(&col)?;
        let ratio = s.iqr_ratio.map_or_else(String::new, |r| r.to_string());
        writeln!(text, "{name},{},{},{},{},{},{},{},{},{ratio}", s.count, s.mean, s.std, s.min, s.q1, s.median, s.q3, s.max).unwrap();
    }
    save(&ws.output("analysis/column_summary.csv")?, &text)?;

    let (matrix, manifest) = assemble_model_matrix(features.values.view())?;
    let p = pca(matrix.view())?;
    let mut text = String::from("component,eigenvalue,explained_variance_fraction\n");
    for (k, (e, f)) in p.eigenvalues.iter().zip(&p.explained_variance_fraction).enumerate() {
        writeln!(text, "{},{e},{f}", k + 1).unwrap();
    }
    save(&ws.output("analysis/pca.csv")?, &text)?;
    let mut text = String::from("column");
    let shown = p.components.ncols().min(10);
    for k in 0..shown {
        write!(text, ",pc{}", k + 1).unwrap();
    }
    text.push('\n');
    for (j, name) in manifest.names().iter().enumerate() {
        text.push_str(name);
        for k in 0..shown {
            write!(text, ",{}", p.components[[j, k]]).unwrap();
        }
        text.push('\n');
    }
    save(&ws.output("analysis/pca_loadings.csv")?, &text)?;

    // rows of labeled clients
    let labeled_rows: Vec<(usize, crate::demographics::DemographicLabel)> = features
        .ids
        .iter()
        .enumerate()
        .filter_map(|(row, &u)| labels[u as usize].map(|l| (row, l)))
        .collect();
    let rows: Vec<usize> = labeled_rows.iter().map(|r| r.0).collect();
    let genders: Vec<Gender> = labeled_rows.iter().map(|r| r.1.gender).collect();
    let labeled = features.values.select(ndarray::Axis(0), &rows);
    let mut text = String::from("variable,mean_male,mean_female,p_value\n");
    match gender_group_means(labeled.view(), &genders) {
        Ok(means) => {
            for m in means {
                writeln!(text, "{},{},{},{}", names[m.variable], m.mean_male, m.mean_female, m.p_value).unwrap();
            }
        }
        Err(e) => log::warn!("gender means skipped: {e}"),
    }
    save(&ws.output("analysis/gender_means.csv")?, &text)?;
    let mix = gender_mix(&ds.events, labels);
    super::write_json(&ws.output("analysis/gender_mix.json")?, &mix)?;

    let groups = AgeGroups::default();
    let column = feature_index(Family::CallSeconds, Flow::In, TimeWindow::Total);
    let tukey_variable = format!("log10({} + 1)", names[column]);
    let mut samples = vec![Vec::new(); groups.count()];
    for &(row, l) in &labeled_rows {
        samples[groups.group_of(l.age)].push((features.values[[row, column]] + 1.0).log10());
    }
    let mut text = String::from("group1,group2,meandiff,p_adj,lower,upper,reject\n");
    let group_names = groups.labels();
    match tukey_hsd(&samples, cfg.fwer) {
        Ok(rows) => {
            for r in rows {
                writeln!(
                    text,
                    "{},{},{},{},{},{},{}",
                    group_names[r.group1], group_names[r.group2], r.meandiff, r.p_adj, r.lower, r.upper, r.reject
                )
                .unwrap();
            }
        }
        Err(e) => log::warn!("Tukey HSD skipped: {e}"),
    }
    save(&ws.output("analysis/tukey.csv")?, &text)?;

    let bounds = AgeBounds::default();
    let links = age_link_matrix(&graph, labels, bounds);
    let mut text = String::from("age_i,age_j,links\n");
    for i in links.ages() {
        for j in links.ages() {
            let c = links.get(i, j);
            if c > 0 {
                writeln!(text, "{i},{j},{c}").unwrap();
            }
        }
    }
    save(&ws.output("analysis/age_links.csv")?, &text)?;
    let hist = age_diff_histogram(&graph, labels);
    let mut text = String::from("age_difference,links\n");
    for (d, c) in &hist {
        writeln!(text, "{d},{c}").unwrap();
    }
    save(&ws.output("analysis/age_diff.csv")?, &text)?;
    let mode = hist.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(d, _)| *d);

    let mut pyramid = std::collections::BTreeMap::<(u32, &str), u64>::new();
    for l in labels.iter().flatten() {
        *pyramid.entry((l.age, l.gender.token())).or_insert(0) += 1;
    }
    let mut text = String::from("age,gender,users\n");
    for ((age, g), n) in pyramid {
        writeln!(text, "{age},{g},{n}").unwrap();
    }
    save(&ws.output("analysis/age_pyramid.csv")?, &text)?;

    let summary = AnalysisSummary {
        stamp: cfg.stamp("analyze"),
        clients: features.ids.len(),
        labeled_clients: labeled_rows.len(),
        pca_components_90: p.components_for(0.9),
        pca_leading_fraction: p.explained_variance_fraction.iter().take(5).copied().collect(),
        gender_mix: mix,
        tukey_variable,
        age_band_ratio: links.band_ratio(18..=80, cfg.band_width),
        band_width: cfg.band_width,
        age_diff_mode: mode,
    };
    super::write_json(&ws.output("analysis/analysis.json")?, &summary)?;
    Ok(summary)
}
