//! Stage-by-stage pipeline over a work directory.
//!
//! ```text
//! ingest -> features -> preprocess -> [analyze | train | propagate] -> pps -> evaluate
//! ```
//!
//! Every stage reads its inputs from and writes its outputs to the work
//! directory, so each one can be rerun on its own. Validation labels are
//! written by `preprocess` into `<task>/validation_labels.csv` and read back
//! only by `evaluate`; every other stage sees training labels only.

pub mod analyze;
mod artifacts;
mod eval;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cdr::{parse_offset, read_events, write_events, Dataset, IngestStats, ObservationWindow, ParseOptions, SocialGraph};
use crate::classify::{self, grid_search, LinearModel, TrainConfig};
use crate::demographics::{AgeBounds, AgeGroups, Task};
use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::pps::{compute_quotas, label_shares, pps_assign};
use crate::preprocess::Preprocessor;
use crate::propagation::{propagate, LabelState};
use crate::split::stratified_subsample;

pub use artifacts::{read_json, read_users, write_json, write_users, IdMatrix, Stamp, Workspace};
pub use eval::{evaluate_accuracy, split_ground_truth, EvalReport, EvalRow, DENOMINATOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Method {
    /// Classifier probabilities only.
    #[serde(rename = "ml")]
    #[value(name = "ml")]
    Ml,
    /// Diffusion from one-hot training labels.
    #[serde(rename = "rdif")]
    #[value(name = "rdif")]
    Rdif,
    /// Diffusion initialized with classifier probabilities.
    #[serde(rename = "ml+rdif")]
    #[value(name = "ml+rdif")]
    MlRdif,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Rdif => "rdif",
            Method::MlRdif => "ml+rdif",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            Method::Ml => "ml",
            Method::Rdif => "rdif",
            Method::MlRdif => "ml_rdif",
        }
    }

    pub fn uses_model(self) -> bool {
        self != Method::Rdif
    }

    pub fn uses_graph(self) -> bool {
        self != Method::Ml
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub cs: Vec<f64>,
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the ground-truth split and of training subsamples.
    pub seed: u64,
    pub train_fraction: f64,
    pub qs: Vec<f64>,
    pub lambda: f64,
    pub iters: usize,
    /// Early-stop threshold on the propagation residual.
    pub tol: f64,
    /// Weight edges by interaction counts instead of 0/1.
    pub weighted: bool,
    /// Training rows beyond this are stratified-subsampled.
    pub max_train_rows: usize,
    #[serde(deserialize_with = "gender_train_config")]
    pub gender: TrainConfig,
    #[serde(deserialize_with = "age_train_config")]
    pub age: TrainConfig,
    pub grid: Option<GridConfig>,
    pub fwer: f64,
    pub band_width: u32,
    /// Also list unassigned nodes in assignment CSVs.
    pub include_unassigned: bool,
    pub timezone: String,
    /// Observation window; taken from the data's `manifest.json` or from the
    /// records when absent.
    pub window: Option<ObservationWindow>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            train_fraction: 0.7,
            qs: vec![1.0, 0.5, 0.25, 0.125],
            lambda: 0.5,
            iters: 30,
            tol: 1e-9,
            weighted: false,
            max_train_rows: 50_000,
            gender: TrainConfig::for_task(Task::Gender),
            age: TrainConfig::for_task(Task::Age),
            grid: None,
            fwer: 0.05,
            band_width: 2,
            include_unassigned: false,
            timezone: "+00:00".into(),
            window: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if let Some(q) = self.qs.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
            return Err(Error::Config(format!("q must lie in (0, 1], got {q}")));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.fwer > 0.0 && self.fwer < 1.0) {
            return Err(Error::Config("fwer must lie in (0, 1)".into()));
        }
        if self.max_train_rows < 2 {
            return Err(Error::Config("max_train_rows must be at least 2".into()));
        }
        parse_offset(&self.timezone).ok_or_else(|| Error::Config(format!("bad timezone {:?}", self.timezone)))?;
        self.gender.validate()?;
        self.age.validate()
    }

    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn train_config(&self, task: Task) -> &TrainConfig {
        match task {
            Task::Gender => &self.gender,
            Task::Age => &self.age,
        }
    }

    pub(crate) fn stamp(&self, stage: &str) -> Stamp {
        Stamp {
            stage: stage.into(),
            config_sha256: self.hash(),
            seed: self.seed,
        }
    }
}

fn overlay(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => overlay(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// A partial `[age]` or `[gender]` table only overrides the task's own
/// defaults, so `[age.solver]` alone keeps the multinomial model.
fn task_train_config<'de, D: serde::Deserializer<'de>>(d: D, task: Task) -> std::result::Result<TrainConfig, D::Error> {
    let patch = serde_json::Value::deserialize(d)?;
    let mut base = serde_json::to_value(TrainConfig::for_task(task)).map_err(serde::de::Error::custom)?;
    overlay(&mut base, patch);
    serde_json::from_value(base).map_err(serde::de::Error::custom)
}

fn gender_train_config<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    task_train_config(d, Task::Gender)
}

fn age_train_config<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    task_train_config(d, Task::Age)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub users: usize,
    pub clients: usize,
    pub labeled: usize,
    pub events: usize,
    pub window: ObservationWindow,
    pub stats: IngestStats,
}

const EVENTS: &str = "ingest/events.bin";
const USERS: &str = "ingest/users.csv";
const INGEST: &str = "ingest/ingest.json";
pub(crate) const FEATURES: &str = "features/features.bin";

fn task_path(task: Task, name: &str) -> PathBuf {
    Path::new(task.name()).join(name)
}

fn method_path(task: Task, method: Method, name: &str) -> PathBuf {
    Path::new(task.name()).join(method.dir()).join(name)
}

fn assignment_name(q: f64) -> String {
    format!("assign_q{q}.csv")
}

pub fn ingest(cfg: &PipelineConfig, data: &Path, ws: &Workspace) -> Result<IngestSummary> {
    cfg.validate()?;
    let manifest = data.join("manifest.json");
    let window = match cfg.window {
        Some(w) => Some(w),
        None if manifest.exists() => {
            let m: serde_json::Value = read_json(&manifest)?;
            m.get("window").map(|w| serde_json::from_value(w.clone())).transpose()?
        }
        None => None,
    };
    let options = ParseOptions {
        timezone: parse_offset(&cfg.timezone).expect("validated"),
        window,
    };
    let ds = Dataset::load_dir(data, options, AgeBounds::default())?;
    log::info!(
        "ingested {} calls and {} sms, {} rejected lines",
        ds.stats.accepted_calls,
        ds.stats.accepted_sms,
        ds.stats.rejected_total()
    );
    let events_path = ws.output(EVENTS)?;
    let file = File::create(&events_path).map_err(|e| Error::io(&events_path, e))?;
    write_events(file, &ds.events).map_err(|e| Error::io(&events_path, e))?;
    write_users(&ws.output(USERS)?, &ds.users, &ds.sets)?;
    let summary = IngestSummary {
        users: ds.users.len(),
        clients: ds.sets.client_count(),
        labeled: ds.sets.labeled().len(),
        events: ds.events.len(),
        window: ds.window,
        stats: ds.stats,
    };
    write_json(&ws.output(INGEST)?, &summary)?;
    ws.stamp("ingest/stamp.json", &cfg.stamp("ingest"))?;
    Ok(summary)
}

/// Rebuilds the ingested dataset from the work directory.
pub fn load_dataset(ws: &Workspace) -> Result<Dataset> {
    let summary: IngestSummary = read_json(&ws.require(INGEST, "ingest")?)?;
    let (users, sets) = read_users(&ws.require(USERS, "ingest")?)?;
    let events_path = ws.require(EVENTS, "ingest")?;
    let file = File::open(&events_path).map_err(|e| Error::io(&events_path, e))?;
    let events = read_events(BufReader::new(file))?;
    Ok(Dataset {
        users,
        sets,
        events,
        window: summary.window,
        stats: summary.stats,
    })
}

fn load_graph(ws: &Workspace, node_count: usize) -> Result<SocialGraph> {
    let path = ws.require(EVENTS, "ingest")?;
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let events = read_events(BufReader::new(file))?;
    Ok(SocialGraph::build(node_count, &events))
}

pub fn features(cfg: &PipelineConfig, ws: &Workspace) -> Result<()> {
    let ds = load_dataset(ws)?;
    let graph = ds.graph();
    let table = extract_features(&ds, &graph)?;
    log::info!("features for {} clients", table.users.len());
    IdMatrix {
        ids: table.users,
        values: table.values,
    }
    .save(&ws.output(FEATURES)?)?;
    ws.stamp("features/stamp.json", &cfg.stamp("features"))
}

/// `(user index, category)` pairs as `user_id,category` rows.
fn write_labels(path: &Path, ids: &[String], rows: &[(u32, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "category"])?;
    for &(u, c) in rows {
        w.write_record([ids[u as usize].as_str(), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_labels(path: &Path, lookup: &HashMap<&str, u32>) -> Result<Vec<(u32, usize)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let user = *lookup
            .get(&record[0])
            .ok_or_else(|| Error::data(format!("{}: unknown user {}", path.display(), &record[0])))?;
        let category = record[1]
            .parse()
            .map_err(|_| Error::data(format!("{}: bad category {:?}", path.display(), &record[1])))?;
        out.push((user, category));
    }
    Ok(out)
}

fn id_lookup(ids: &[String]) -> HashMap<&str, u32> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect()
}

fn row_lookup(ids: &[u32], node_count: usize) -> Vec<Option<usize>> {
    let mut lookup = vec![None; node_count];
    for (row, &u) in ids.iter().enumerate() {
        lookup[u as usize] = Some(row);
    }
    lookup
}

/// Splits the labeled users for `task`, fits scaling on the training rows
/// and writes the model matrix for every client.
pub fn preprocess(cfg: &PipelineConfig, ws: &Workspace, task: Task) -> Result<()> {
    let (users, sets) = read_users(&ws.require(USERS, "ingest")?)?;
    let features = IdMatrix::load(&ws.require(FEATURES, "features")?)?;
    let groups = AgeGroups::default();
    let labeled = sets.labeled();
    let categories: Vec<usize> = labeled.iter().map(|(_, l)| task.category_of(l, &groups)).collect();
    let (train_pos, val_pos) = split_ground_truth(&categories, cfg.train_fraction, cfg.seed)?;
    let pick = |pos: &[usize]| -> Vec<(u32, usize)> { pos.iter().map(|&i| (labeled[i].0, categories[i])).collect() };
    let (train, validation) = (pick(&train_pos), pick(&val_pos));
    write_labels(&ws.output(task_path(task, "train_labels.csv"))?, users.ids(), &train)?;
    write_labels(&ws.output(task_path(task, "validation_labels.csv"))?, users.ids(), &validation)?;

    let rows = row_lookup(&features.ids, users.len());
    let fit_rows = train
        .iter()
        .map(|&(u, _)| rows[u as usize].ok_or_else(|| Error::data(format!("labeled user {} has no features", users.id(u)))))
        .collect::<Result<Vec<_>>>()?;
    let pre = Preprocessor::fit(features.values.view(), Some(&fit_rows))?;
    let matrix = pre.apply(features.values.view())?;
    write_json(&ws.output(task_path(task, "preprocessor.json"))?, &pre)?;
    IdMatrix {
        ids: features.ids,
        values: matrix,
    }
    .save(&ws.output(task_path(task, "matrix.bin"))?)?;
    ws.stamp(task_path(task, "preprocess.stamp.json"), &cfg.stamp("preprocess"))
}

struct TrainingView {
    ids: Vec<String>,
    clients: Vec<u32>,
    train: Vec<(u32, usize)>,
}

fn training_view(ws: &Workspace, task: Task) -> Result<TrainingView> {
    let (users, sets) = read_users(&ws.require(USERS, "ingest")?)?;
    let ids = users.ids().to_vec();
    let train = read_labels(&ws.require(task_path(task, "train_labels.csv"), "preprocess")?, &id_lookup(&ids))?;
    Ok(TrainingView {
        clients: sets.clients(),
        ids,
        train,
    })
}

pub fn train(cfg: &PipelineConfig, ws: &Workspace, task: Task) -> Result<LinearModel> {
    let view = training_view(ws, task)?;
    let matrix = IdMatrix::load(&ws.require(task_path(task, "matrix.bin"), "preprocess")?)?;
    let rows = row_lookup(&matrix.ids, view.ids.len());
    let labels: Vec<usize> = view.train.iter().map(|t| t.1).collect();
    let keep = stratified_subsample(&labels, cfg.max_train_rows, cfg.seed);
    let train_rows: Vec<usize> = keep
        .iter()
        .map(|&i| rows[view.train[i].0 as usize].expect("training users have features"))
        .collect();
    let train_labels: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
    let classes = task.categories(&AgeGroups::default());
    let names = crate::preprocess::ColumnManifest::standard().names();
    let mut config = cfg.train_config(task).clone();
    config.solver.seed = cfg.seed;
    if let Some(grid) = &cfg.grid {
        let report = grid_search(
            task,
            classes,
            &config,
            &grid.cs,
            &grid.ks,
            matrix.values.view(),
            &train_rows,
            &train_labels,
        )?;
        let mut w = csv::Writer::from_path(ws.output(task_path(task, "grid.csv"))?)?;
        w.write_record(["c", "k", "accuracy"])?;
        for r in &report.rows {
            w.write_record([r.c.to_string(), r.k.to_string(), r.accuracy.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("grid.csv", e))?;
        config = report.best;
    }
    log::info!("training {task} model on {} rows", train_rows.len());
    let model = classify::train(task, classes, &config, matrix.values.view(), &train_rows, &train_labels, &names)?;
    model.save(&ws.output(task_path(task, "model.json"))?)?;
    ws.stamp(task_path(task, "train.stamp.json"), &cfg.stamp("train"))?;
    Ok(model)
}

/// Clients that are not training users: the nodes that receive predictions.
fn prediction_population(view: &TrainingView) -> Vec<u32> {
    let mut is_train = vec![false; view.ids.len()];
    for &(u, _) in &view.train {
        is_train[u as usize] = true;
    }
    view.clients.iter().copied().filter(|&u| !is_train[u as usize]).collect()
}

fn model_probabilities(ws: &Workspace, task: Task, population: &[u32], node_count: usize) -> Result<Array2<f64>> {
    let model = LinearModel::load(&ws.require(task_path(task, "model.json"), "train")?)?;
    let matrix = IdMatrix::load(&ws.require(task_path(task, "matrix.bin"), "preprocess")?)?;
    let rows = row_lookup(&matrix.ids, node_count);
    let picked = population
        .iter()
        .map(|&u| rows[u as usize].ok_or_else(|| Error::data(format!("client {u} has no model-matrix row"))))
        .collect::<Result<Vec<_>>>()?;
    let x = matrix.values.select(Axis(0), &picked);
    drop(matrix);
    model.predict_proba(x.view())
}

/// Produces the probability matrix over the prediction population for
/// `method`: classifier output, diffusion from training labels, or
/// diffusion seeded with classifier output.
pub fn propagate_stage(cfg: &PipelineConfig, ws: &Workspace, task: Task, method: Method) -> Result<()> {
    let view = training_view(ws, task)?;
    let node_count = view.ids.len();
    let population = prediction_population(&view);
    let classes = task.categories(&AgeGroups::default());
    let ml = if method.uses_model() {
        Some(model_probabilities(ws, task, &population, node_count)?)
    } else {
        None
    };
    let probs = if method.uses_graph() {
        let graph = load_graph(ws, node_count)?;
        let mut state = match &ml {
            None => LabelState::pure(node_count, classes, &view.train, cfg.lambda)?,
            Some(p) => {
                let rows: Vec<(u32, &[f64])> = population
                    .iter()
                    .zip(p.axis_iter(Axis(0)))
                    .map(|(&u, r)| (u, r.to_slice().expect("standard layout")))
                    .collect();
                LabelState::combined(node_count, classes, &view.train, &rows, cfg.lambda)?
            }
        };
        let weights = cfg.weighted.then(|| graph.interaction_weights());
        let report = propagate(&mut state, &graph, cfg.iters, cfg.tol, weights.as_deref())?;
        log::info!(
            "{} propagation steps, final residual {:e}",
            report.steps.len(),
            report.final_residual().unwrap_or(0.0)
        );
        report.write_residual_csv(&ws.output(method_path(task, method, "residuals.csv"))?)?;
        write_json(&ws.output(method_path(task, method, "propagation.json"))?, &report)?;
        state.save(&ws.output(method_path(task, method, "state.bin"))?)?;
        let mut out = Array2::zeros((population.len(), classes));
        for (mut row, &u) in out.axis_iter_mut(Axis(0)).zip(&population) {
            row.assign(&ndarray::ArrayView1::from(state.g(u)));
        }
        out
    } else {
        ml.expect("ml method has model output")
    };
    IdMatrix {
        ids: population,
        values: probs,
    }
    .save(&ws.output(method_path(task, method, "probs.bin"))?)?;
    ws.stamp(method_path(task, method, "propagate.stamp.json"), &cfg.stamp("propagate"))
}

/// Quota-constrained assignment for every requested `q`.
pub fn pps_stage(cfg: &PipelineConfig, ws: &Workspace, task: Task, method: Method, qs: &[f64]) -> Result<()> {
    let view = training_view(ws, task)?;
    let probs = IdMatrix::load(&ws.require(method_path(task, method, "probs.bin"), "propagate")?)?;
    let groups = AgeGroups::default();
    let classes = task.categories(&groups);
    let names = task.category_names(&groups);
    let labels: Vec<usize> = view.train.iter().map(|t| t.1).collect();
    let shares = label_shares(&labels, classes)?;
    let flat = probs.values.as_slice().expect("standard layout");
    for &q in qs {
        let plan = compute_quotas(probs.ids.len(), q, &shares)?;
        let assignment = pps_assign(flat, classes, &plan)?;
        let path = ws.output(method_path(task, method, &assignment_name(q)))?;
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        assignment.write_csv(
            BufWriter::new(file),
            |row| view.ids[probs.ids[row as usize] as usize].clone(),
            &names,
            cfg.include_unassigned,
        )?;
        write_json(
            &ws.output(method_path(task, method, &format!("plan_q{q}.json")))?,
            &plan,
        )?;
    }
    ws.stamp(method_path(task, method, "pps.stamp.json"), &cfg.stamp("pps"))
}

fn read_assignment(path: &Path, rows: &HashMap<&str, usize>, names: &[String], len: usize) -> Result<Vec<Option<usize>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = vec![None; len];
    for record in reader.records() {
        let record = record?;
        if record[1].is_empty() {
            continue;
        }
        let row = *rows
            .get(&record[0])
            .ok_or_else(|| Error::data(format!("{}: {} is not in the prediction population", path.display(), &record[0])))?;
        let cat = names
            .iter()
            .position(|n| n == &record[1])
            .ok_or_else(|| Error::data(format!("{}: unknown category {:?}", path.display(), &record[1])))?;
        out[row] = Some(cat);
    }
    Ok(out)
}

/// Scores the assignments against the held-out validation labels.
pub fn evaluate(cfg: &PipelineConfig, ws: &Workspace, task: Task, method: Method, qs: &[f64]) -> Result<EvalReport> {
    let (users, _) = read_users(&ws.require(USERS, "ingest")?)?;
    let ids = users.ids();
    let probs = IdMatrix::load(&ws.require(method_path(task, method, "probs.bin"), "propagate")?)?;
    let validation = read_labels(
        &ws.require(task_path(task, "validation_labels.csv"), "preprocess")?,
        &id_lookup(ids),
    )?;
    let groups = AgeGroups::default();
    let classes = task.categories(&groups);
    let names = task.category_names(&groups);
    let row_of: HashMap<&str, usize> = probs
        .ids
        .iter()
        .enumerate()
        .map(|(row, &u)| (ids[u as usize].as_str(), row))
        .collect();
    let pairs = validation
        .iter()
        .map(|&(u, c)| {
            row_of
                .get(ids[u as usize].as_str())
                .map(|&r| (r, c))
                .ok_or_else(|| Error::data(format!("validation user {} was not predicted", ids[u as usize])))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut validation_counts = vec![0; classes];
    for &(_, c) in &pairs {
        validation_counts[c] += 1;
    }
    let mut rows = Vec::with_capacity(qs.len());
    for &q in qs {
        let path = ws.require(method_path(task, method, &assignment_name(q)), "pps")?;
        let assigned = read_assignment(&path, &row_of, &names, probs.ids.len())?;
        rows.push(evaluate_accuracy(q, &assigned, &pairs, classes)?);
    }
    let report = EvalReport {
        stamp: cfg.stamp("evaluate"),
        task,
        method,
        categories: names,
        denominator: DENOMINATOR.into(),
        prediction_population: probs.ids.len(),
        validation_size: pairs.len(),
        validation_counts,
        rows,
    };
    write_json(&ws.output(method_path(task, method, "report.json"))?, &report)?;
    let mut csv_out = String::from("q,coverage,validation_assigned,correct,accuracy\n");
    for r in &report.rows {
        let acc = r.accuracy.map_or_else(|| "undefined".to_string(), |a| a.to_string());
        csv_out.push_str(&format!("{},{},{},{},{acc}\n", r.q, r.coverage, r.validation_assigned, r.correct));
    }
    let path = ws.output(method_path(task, method, "report.csv"))?;
    std::fs::write(&path, csv_out).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Runs the stages after ingest that a task and method need.
pub fn run_from_features(cfg: &PipelineConfig, ws: &Workspace, task: Task, method: Method, qs: &[f64]) -> Result<EvalReport> {
    preprocess(cfg, ws, task)?;
    if method.uses_model() {
        train(cfg, ws, task)?;
    }
    propagate_stage(cfg, ws, task, method)?;
    pps_stage(cfg, ws, task, method, qs)?;
    evaluate(cfg, ws, task, method, qs)
}

/// The whole chain from raw records in `data` to an evaluation report.
pub fn run(cfg: &PipelineConfig, data: &Path, ws: &Workspace, task: Task, method: Method, qs: &[f64]) -> Result<EvalReport> {
    ingest(cfg, data, ws)?;
    features(cfg, ws)?;
    run_from_features(cfg, ws, task, method, qs)
}

/// Writes a report summary to `w`, one line per q.
pub fn print_report<W: Write>(mut w: W, report: &EvalReport) -> std::io::Result<()> {
    writeln!(w, "task={} method={} population={} validation={}", report.task, report.method.name(), report.prediction_population, report.validation_size)?;
    for r in &report.rows {
        match r.accuracy {
            Some(a) => writeln!(w, "q={:<6} coverage={:.4} accuracy={:.4} ({}/{})", r.q, r.coverage, a, r.correct, r.validation_assigned)?,
            None => writeln!(w, "q={:<6} coverage={:.4} accuracy=undefined (no validation node assigned)", r.q, r.coverage)?,
        }
    }
    Ok(())
}
