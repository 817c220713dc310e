//! Synthetic operator data with planted gender and age homophily.
//!
//! Random-stream discipline: every draw comes from ChaCha8 keyed by the
//! configured seed. The population, edge and label stages each own one
//! stream; the events of edge `e` come from stream `EVENT_STREAM_BASE + e`,
//! so event generation is reproducible under any thread schedule.
//! Transcendental functions in sampling paths come from `libm`, not from the
//! platform math library.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cdr::{format_timestamp, from_epoch_seconds, Direction, Event, EventKind, ObservationWindow};
use crate::demographics::{AgeBounds, AgeGroups, Gender};
use crate::error::{Error, Result};
use crate::features::{classify_time_window, TimeWindow};

const POPULATION_STREAM: u64 = 0;
const EDGE_STREAM: u64 = 1;
const LABEL_STREAM: u64 = 2;
const EVENT_STREAM_BASE: u64 = 1 << 32;
const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeBand {
    pub min: u32,
    pub max: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationBump {
    pub offset: u32,
    pub weight: f64,
}

/// Per-gender event rates for one directed edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenderActivity {
    pub calls_per_day: f64,
    pub sms_per_day: f64,
    pub mean_call_seconds: f64,
    /// Relative intensity in week daylight, week night and weekend time.
    pub window_weights: [f64; 3],
}

/// Multipliers applied on top of [`GenderActivity`] for one age group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeActivity {
    pub call_factor: f64,
    pub sms_factor: f64,
    pub duration_factor: f64,
    pub window_factors: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Activity {
    pub male: GenderActivity,
    pub female: GenderActivity,
    /// One entry per age group, youngest first.
    pub age_groups: Vec<AgeActivity>,
    /// Log-scale standard deviation of the per-user activity multiplier.
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    /// `(male, female)`.
    pub gender_shares: [f64; 2],
    pub age_pyramid: Vec<AgeBand>,
    pub mean_degree: f64,
    /// Link counts decay with the age difference as `exp(-delta / scale)`.
    pub age_homophily_scale: f64,
    /// Mixed-gender pairs get affinity `1 - gender_mix_bias`.
    pub gender_mix_bias: f64,
    pub generation_bump: Option<GenerationBump>,
    pub client_fraction: f64,
    /// Fraction of operator clients with a published label.
    pub label_fraction: f64,
    pub start: NaiveDate,
    pub months: u32,
    pub activity: Activity,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let band = |min, max, weight| AgeBand { min, max, weight };
        let age = |call_factor, sms_factor, duration_factor, window_factors| AgeActivity {
            call_factor,
            sms_factor,
            duration_factor,
            window_factors,
        };
        SynthConfig {
            seed: 0,
            n_users: 10_000,
            gender_shares: [0.5683, 0.4317],
            age_pyramid: vec![
                band(14, 24, 0.27),
                band(25, 34, 0.26),
                band(35, 49, 0.28),
                band(50, 80, 0.19),
            ],
            mean_degree: 10.0,
            age_homophily_scale: 5.0,
            gender_mix_bias: 0.3,
            generation_bump: None,
            client_fraction: 1.0,
            label_fraction: 0.3,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            months: 3,
            activity: Activity {
                male: GenderActivity {
                    calls_per_day: 0.02,
                    sms_per_day: 0.008,
                    mean_call_seconds: 150.0,
                    window_weights: [1.0, 0.8, 0.9],
                },
                female: GenderActivity {
                    calls_per_day: 0.017,
                    sms_per_day: 0.012,
                    mean_call_seconds: 115.0,
                    window_weights: [1.0, 0.9, 1.0],
                },
                age_groups: vec![
                    age(0.85, 1.6, 0.85, [0.8, 1.4, 1.2]),
                    age(1.0, 1.15, 1.0, [1.0, 1.1, 1.0]),
                    age(1.1, 0.8, 1.1, [1.1, 0.9, 0.9]),
                    age(1.0, 0.5, 1.25, [1.2, 0.7, 0.9]),
                ],
                dispersion: 0.6,
            },
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }

    pub fn window(&self) -> ObservationWindow {
        ObservationWindow {
            start: self.start,
            months: self.months,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let close_to_one = |s: f64| (s - 1.0).abs() <= 1e-6;
        if self.n_users == 0 || self.n_users > u32::MAX as usize {
            return Err(config_error("n_users must be between 1 and 2^32 - 1"));
        }
        if self.gender_shares.iter().any(|s| !(0.0..=1.0).contains(s))
            || !close_to_one(self.gender_shares.iter().sum())
        {
            return Err(config_error("gender_shares must be a distribution"));
        }
        let bounds = AgeBounds::default();
        if self.age_pyramid.is_empty()
            || self.age_pyramid.iter().any(|b| {
                b.min > b.max || !bounds.contains(b.min) || !bounds.contains(b.max) || !(b.weight >= 0.0)
            })
            || !close_to_one(self.age_pyramid.iter().map(|b| b.weight).sum())
        {
            return Err(config_error(format!(
                "age_pyramid bands must lie in {}..={} with weights summing to 1",
                bounds.min, bounds.max
            )));
        }
        if !(self.mean_degree >= 0.0 && self.mean_degree.is_finite()) {
            return Err(config_error("mean_degree must be non-negative"));
        }
        if !(self.age_homophily_scale > 0.0) {
            return Err(config_error("age_homophily_scale must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gender_mix_bias) {
            return Err(config_error("gender_mix_bias must lie in [0, 1]"));
        }
        if let Some(b) = &self.generation_bump {
            if !(b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(config_error("generation_bump weight must be non-negative"));
            }
        }
        for (name, f) in [("client_fraction", self.client_fraction), ("label_fraction", self.label_fraction)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(config_error(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.months == 0 {
            return Err(config_error("months must be at least 1"));
        }
        let a = &self.activity;
        if a.age_groups.len() != AgeGroups::default().count() {
            return Err(config_error(format!(
                "activity.age_groups needs {} entries",
                AgeGroups::default().count()
            )));
        }
        let gender_ok = |g: &GenderActivity| {
            [g.calls_per_day, g.sms_per_day, g.mean_call_seconds]
                .iter()
                .chain(&g.window_weights)
                .all(|v| *v >= 0.0 && v.is_finite())
        };
        let age_ok = |g: &AgeActivity| {
            [g.call_factor, g.sms_factor, g.duration_factor]
                .iter()
                .chain(&g.window_factors)
                .all(|v| *v >= 0.0 && v.is_finite())
        };
        if !gender_ok(&a.male) || !gender_ok(&a.female) || !a.age_groups.iter().all(age_ok) {
            return Err(config_error("activity rates and factors must be non-negative"));
        }
        if !(a.dispersion >= 0.0 && a.dispersion.is_finite()) {
            return Err(config_error("activity.dispersion must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthUser {
    pub gender: Gender,
    pub age: u32,
    pub client: bool,
    pub labeled: bool,
    /// Mean-one multiplier on this user's outgoing rates.
    pub activity: f64,
}

pub fn user_id(index: u32) -> String {
    format!("u{index:07}")
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * std::f64::consts::PI * u2)
}

/// Knuth's multiplication method in chunks of mean at most 16.
fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    let mut left = mean;
    let mut n = 0;
    while left > 0.0 {
        let step = left.min(16.0);
        left -= step;
        let limit = libm::exp(-step);
        let mut p: f64 = rng.gen();
        while p > limit {
            n += 1;
            p *= rng.gen::<f64>();
        }
    }
    n
}

pub fn generate_population(cfg: &SynthConfig) -> Result<Vec<SynthUser>> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, POPULATION_STREAM);
    let ages: Vec<(u32, f64)> = cfg
        .age_pyramid
        .iter()
        .flat_map(|b| {
            let span = f64::from(b.max - b.min + 1);
            (b.min..=b.max).map(move |a| (a, b.weight / span))
        })
        .collect();
    let age_dist = WeightedAliasIndex::new(ages.iter().map(|a| a.1).collect())
        .map_err(|e| config_error(format!("age_pyramid: {e}")))?;
    let sigma = cfg.activity.dispersion;
    let mut users: Vec<SynthUser> = (0..cfg.n_users)
        .map(|_| {
            let gender = if rng.gen::<f64>() < cfg.gender_shares[0] {
                Gender::Male
            } else {
                Gender::Female
            };
            let age = ages[age_dist.sample(&mut rng)].0;
            let client = rng.gen::<f64>() < cfg.client_fraction;
            let activity = libm::exp(sigma * standard_normal(&mut rng) - sigma * sigma / 2.0);
            SynthUser {
                gender,
                age,
                client,
                labeled: false,
                activity,
            }
        })
        .collect();
    // exactly round(label_fraction * clients) labels, chosen uniformly
    let mut clients: Vec<usize> = (0..users.len()).filter(|&i| users[i].client).collect();
    let want = (cfg.label_fraction * clients.len() as f64).round() as usize;
    let mut rng = stream(cfg.seed, LABEL_STREAM);
    let (chosen, _) = rand::seq::SliceRandom::partial_shuffle(&mut clients[..], &mut rng, want);
    for &i in chosen.iter() {
        users[i].labeled = true;
    }
    Ok(users)
}

/// Pair affinity. The kernel is on the folded difference `|age_i - age_j|`:
/// a difference `d > 0` arises from two signed offsets, so those pairs carry
/// half weight and the link count per `d` decays as the kernel itself.
fn affinity(cfg: &SynthConfig, a: (u32, Gender), b: (u32, Gender)) -> f64 {
    let delta = f64::from(a.0.abs_diff(b.0));
    let scale = cfg.age_homophily_scale;
    let mut w = libm::exp(-delta / scale);
    if let Some(bump) = &cfg.generation_bump {
        w += bump.weight * libm::exp(-(delta - f64::from(bump.offset)).abs() / scale);
    }
    if delta > 0.0 {
        w *= 0.5;
    }
    if a.1 != b.1 {
        w *= 1.0 - cfg.gender_mix_bias;
    }
    w
}

/// Undirected edges `(x, y)` with `x < y`, sorted. Pairs are drawn from a
/// block model over `(age, gender)` cells until the target count of distinct
/// edges, `round(n * mean_degree / 2)`, is reached.
pub fn generate_edges(users: &[SynthUser], cfg: &SynthConfig) -> Result<Vec<(u32, u32)>> {
    let n = users.len();
    let max_edges = n * n.saturating_sub(1) / 2;
    let target = ((n as f64 * cfg.mean_degree / 2.0).round() as usize).min(max_edges);
    if target == 0 {
        return Ok(Vec::new());
    }
    let mut cells: Vec<((u32, Gender), Vec<u32>)> = Vec::new();
    {
        let mut keyed: Vec<((u32, Gender), u32)> = users
            .iter()
            .enumerate()
            .map(|(i, u)| ((u.age, u.gender), i as u32))
            .collect();
        keyed.sort_unstable();
        for (key, i) in keyed {
            match cells.last_mut() {
                Some((k, members)) if *k == key => members.push(i),
                _ => cells.push((key, vec![i])),
            }
        }
    }
    let mut pairs = Vec::new();
    let mut weights = Vec::new();
    for a in 0..cells.len() {
        for b in a..cells.len() {
            let (na, nb) = (cells[a].1.len() as f64, cells[b].1.len() as f64);
            let count = if a == b { na * (na - 1.0) / 2.0 } else { na * nb };
            let w = count * affinity(cfg, cells[a].0, cells[b].0);
            if w > 0.0 {
                pairs.push((a as u32, b as u32));
                weights.push(w);
            }
        }
    }
    let dist = WeightedAliasIndex::new(weights).map_err(|e| config_error(format!("edge weights: {e}")))?;
    let mut rng = stream(cfg.seed, EDGE_STREAM);
    let mut keys: Vec<u64> = Vec::with_capacity(target);
    for _ in 0..64 {
        let need = target - keys.len();
        if need == 0 {
            break;
        }
        keys.reserve(need);
        for _ in 0..need {
            let (a, b) = pairs[dist.sample(&mut rng)];
            let (ma, mb) = (&cells[a as usize].1, &cells[b as usize].1);
            let x = ma[rng.gen_range(0..ma.len() as u64) as usize];
            let mut y = mb[rng.gen_range(0..mb.len() as u64) as usize];
            while y == x {
                y = mb[rng.gen_range(0..mb.len() as u64) as usize];
            }
            let (lo, hi) = (x.min(y), x.max(y));
            keys.push((u64::from(lo) << 32) | u64::from(hi));
        }
        keys.par_sort_unstable();
        keys.dedup();
    }
    if keys.len() < target {
        return Err(Error::numeric(format!(
            "placed {} of {target} distinct edges; affinities too concentrated",
            keys.len()
        )));
    }
    Ok(keys.into_iter().map(|k| ((k >> 32) as u32, k as u32)).collect())
}

struct Rates {
    calls: f64,
    sms: f64,
    call_seconds: f64,
    window: [f64; 3],
}

fn rates(cfg: &SynthConfig, user: &SynthUser, groups: &AgeGroups, days: f64) -> Rates {
    let g = match user.gender {
        Gender::Male => &cfg.activity.male,
        Gender::Female => &cfg.activity.female,
    };
    let a = &cfg.activity.age_groups[groups.group_of(user.age)];
    let mut window = [0.0; 3];
    for (i, w) in window.iter_mut().enumerate() {
        *w = g.window_weights[i] * a.window_factors[i];
    }
    Rates {
        calls: g.calls_per_day * a.call_factor * user.activity * days,
        sms: g.sms_per_day * a.sms_factor * user.activity * days,
        call_seconds: g.mean_call_seconds * a.duration_factor,
        window,
    }
}

fn window_slot(w: TimeWindow) -> usize {
    match w {
        TimeWindow::WeekDaylight => 0,
        TimeWindow::WeekNight => 1,
        _ => 2,
    }
}

/// Uniform time in the observation window, thinned by per-window weights.
fn draw_time(rng: &mut ChaCha8Rng, start: i64, seconds: u64, weights: &[f64; 3]) -> i64 {
    let top = weights.iter().copied().fold(0.0, f64::max);
    loop {
        let t = start + rng.gen_range(0..seconds) as i64;
        let slot = window_slot(classify_time_window(from_epoch_seconds(t)));
        if rng.gen::<f64>() * top < weights[slot] {
            return t;
        }
    }
}

/// Poisson calls and messages in both directions of every edge, conditioned
/// on at least one event so that each planted edge is observable.
pub fn generate_cdr_events(users: &[SynthUser], edges: &[(u32, u32)], cfg: &SynthConfig) -> Vec<Event> {
    let window = cfg.window();
    let days = window.days() as f64;
    let start = crate::cdr::to_epoch_seconds(window.start.and_hms_opt(0, 0, 0).expect("midnight"));
    let seconds = window.days() as u64 * SECONDS_PER_DAY as u64;
    let groups = AgeGroups::default();
    let user_rates: Vec<Rates> = users.iter().map(|u| rates(cfg, u, &groups, days)).collect();

    let per_edge: Vec<Vec<Event>> = edges
        .par_iter()
        .enumerate()
        .map(|(id, &(x, y))| {
            let mut rng = stream(cfg.seed, EVENT_STREAM_BASE + id as u64);
            let directed = [(x, y), (y, x)];
            let total: f64 = directed
                .iter()
                .map(|&(s, _)| user_rates[s as usize].calls + user_rates[s as usize].sms)
                .sum();
            if total <= 0.0 {
                return Vec::new();
            }
            let counts = loop {
                let c: Vec<(u64, u64)> = directed
                    .iter()
                    .map(|&(s, _)| {
                        let r = &user_rates[s as usize];
                        (poisson(&mut rng, r.calls), poisson(&mut rng, r.sms))
                    })
                    .collect();
                if c.iter().any(|&(a, b)| a + b > 0) {
                    break c;
                }
            };
            let mut events = Vec::new();
            for (&(src, dst), &(calls, sms)) in directed.iter().zip(&counts) {
                let r = &user_rates[src as usize];
                let direction = if users[src as usize].client {
                    Direction::Outgoing
                } else {
                    Direction::Incoming
                };
                for _ in 0..calls {
                    let time = draw_time(&mut rng, start, seconds, &r.window);
                    let u: f64 = 1.0 - rng.gen::<f64>();
                    let duration = (-r.call_seconds * libm::log(u)).ceil().max(1.0) as u32;
                    events.push(Event { src, dst, time, duration, kind: EventKind::Call, direction });
                }
                for _ in 0..sms {
                    let time = draw_time(&mut rng, start, seconds, &r.window);
                    events.push(Event { src, dst, time, duration: 0, kind: EventKind::Sms, direction });
                }
            }
            events.sort_by_key(|e| (e.time, e.src, e.kind == EventKind::Sms));
            events
        })
        .collect();
    per_edge.concat()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub users: usize,
    pub clients: usize,
    pub labeled: usize,
    pub edges: usize,
    pub calls: usize,
    pub sms: usize,
    pub window: ObservationWindow,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub users: Vec<SynthUser>,
    pub edges: Vec<(u32, u32)>,
    pub events: Vec<Event>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    let users = generate_population(cfg)?;
    let edges = generate_edges(&users, cfg)?;
    let events = generate_cdr_events(&users, &edges, cfg);
    Ok(SynthData {
        config: cfg.clone(),
        users,
        edges,
        events,
    })
}

impl SynthData {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            seed: self.config.seed,
            config_sha256: self.config.hash(),
            users: self.users.len(),
            clients: self.users.iter().filter(|u| u.client).count(),
            labeled: self.users.iter().filter(|u| u.labeled).count(),
            edges: self.edges.len(),
            calls: self.events.iter().filter(|e| e.kind == EventKind::Call).count(),
            sms: self.events.iter().filter(|e| e.kind == EventKind::Sms).count(),
            window: self.config.window(),
        }
    }

    /// Writes `clients.txt`, `cdr.csv`, `sms.csv`, `ground_truth.csv`, the
    /// hidden `population.csv`, `synth.toml` and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let ids: Vec<String> = (0..self.users.len() as u32).map(user_id).collect();
        let create = |name: &str| -> Result<(BufWriter<File>, std::path::PathBuf)> {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
            Ok((BufWriter::with_capacity(1 << 20, f), path))
        };
        let write = |name: &str, body: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
            let (mut w, path) = create(name)?;
            body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
        };

        write("clients.txt", &|w| {
            writeln!(w, "user_id")?;
            for (u, id) in self.users.iter().zip(&ids) {
                if u.client {
                    writeln!(w, "{id}")?;
                }
            }
            Ok(())
        })?;
        write("ground_truth.csv", &|w| {
            writeln!(w, "user_id,gender,age_years")?;
            for (u, id) in self.users.iter().zip(&ids) {
                if u.labeled {
                    writeln!(w, "{id},{},{}", u.gender, u.age)?;
                }
            }
            Ok(())
        })?;
        write("population.csv", &|w| {
            writeln!(w, "user_id,gender,age_years,client,labeled")?;
            for (u, id) in self.users.iter().zip(&ids) {
                writeln!(w, "{id},{},{},{},{}", u.gender, u.age, u8::from(u.client), u8::from(u.labeled))?;
            }
            Ok(())
        })?;
        write("cdr.csv", &|w| {
            writeln!(w, "caller,callee,timestamp,duration,direction,tower")?;
            for e in self.events.iter().filter(|e| e.kind == EventKind::Call) {
                writeln!(
                    w,
                    "{},{},{},{},{},T{:03}",
                    ids[e.src as usize],
                    ids[e.dst as usize],
                    format_timestamp(from_epoch_seconds(e.time)),
                    e.duration,
                    e.direction.token(),
                    e.src % 997
                )?;
            }
            Ok(())
        })?;
        write("sms.csv", &|w| {
            writeln!(w, "sender,receiver,timestamp,direction")?;
            for e in self.events.iter().filter(|e| e.kind == EventKind::Sms) {
                writeln!(
                    w,
                    "{},{},{},{}",
                    ids[e.src as usize],
                    ids[e.dst as usize],
                    format_timestamp(from_epoch_seconds(e.time)),
                    e.direction.token()
                )?;
            }
            Ok(())
        })?;
        let config = self.config.to_toml();
        write("synth.toml", &|w| w.write_all(config.as_bytes()))?;
        let manifest = self.manifest();
        let json = serde_json::to_string_pretty(&manifest)?;
        write("manifest.json", &|w| writeln!(w, "{json}"))?;
        Ok(manifest)
    }
}
