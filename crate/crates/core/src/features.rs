//! The 45 per-user characterization variables.
//!
//! Layout of a [`FeatureVector`]:
//!
//! | columns | family                                         |
//! |---------|------------------------------------------------|
//! | 0..12   | number of calls, `{in,out,all} x {week_daylight, week_night, weekend, total}` |
//! | 12..24  | call seconds, same 12 cells                    |
//! | 24..36  | number of SMS, same 12 cells                   |
//! | 36..42  | contact days, `{call,sms} x {in,out,any}`      |
//! | 42..45  | degree, in-degree, out-degree                  |
//!
//! A call is attributed entirely to the window of its start time. Daylight
//! is Monday to Friday, `07:00:00 <= t < 19:00:00`.

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};
use ndarray::Array2;
use rayon::prelude::*;

use crate::cdr::{Dataset, Event, EventKind, ObservationWindow, SocialGraph};
use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 45;
pub const DEGREE: usize = 42;
pub const IN_DEGREE: usize = 43;
pub const OUT_DEGREE: usize = 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeWindow {
    WeekDaylight,
    WeekNight,
    Weekend,
    Total,
}

impl TimeWindow {
    pub const ALL: [TimeWindow; 4] = [
        TimeWindow::WeekDaylight,
        TimeWindow::WeekNight,
        TimeWindow::Weekend,
        TimeWindow::Total,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TimeWindow::WeekDaylight => "week_daylight",
            TimeWindow::WeekNight => "week_night",
            TimeWindow::Weekend => "weekend",
            TimeWindow::Total => "total",
        }
    }
}

/// Maps a timestamp to one of the three disjoint windows.
pub fn classify_time_window(ts: NaiveDateTime) -> TimeWindow {
    match ts.weekday() {
        Weekday::Sat | Weekday::Sun => TimeWindow::Weekend,
        _ if (7..19).contains(&ts.hour()) => TimeWindow::WeekDaylight,
        _ => TimeWindow::WeekNight,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Calls,
    CallSeconds,
    Sms,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Calls, Family::CallSeconds, Family::Sms];

    pub fn name(self) -> &'static str {
        match self {
            Family::Calls => "calls",
            Family::CallSeconds => "call_seconds",
            Family::Sms => "sms",
        }
    }
}

/// Direction of traffic relative to the user. For contact days `All` reads
/// as "any activity".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flow {
    In,
    Out,
    All,
}

impl Flow {
    pub const ALL: [Flow; 3] = [Flow::In, Flow::Out, Flow::All];

    pub fn name(self) -> &'static str {
        match self {
            Flow::In => "in",
            Flow::Out => "out",
            Flow::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Medium {
    Call,
    Sms,
}

pub fn feature_index(family: Family, flow: Flow, window: TimeWindow) -> usize {
    family as usize * 12 + flow as usize * 4 + window.slot()
}

pub fn contact_days_index(medium: Medium, flow: Flow) -> usize {
    36 + medium as usize * 3 + flow as usize
}

/// Column names in layout order.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for family in Family::ALL {
        for flow in Flow::ALL {
            for window in TimeWindow::ALL {
                names.push(format!("{}_{}_{}", family.name(), flow.name(), window.name()));
            }
        }
    }
    for medium in ["call", "sms"] {
        for flow in ["in", "out", "any"] {
            names.push(format!("contact_days_{medium}_{flow}"));
        }
    }
    names.extend(["degree", "in_degree", "out_degree"].map(String::from));
    names
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector([0.0; FEATURE_COUNT])
    }
}

impl FeatureVector {
    pub fn get(&self, family: Family, flow: Flow, window: TimeWindow) -> f64 {
        self.0[feature_index(family, flow, window)]
    }

    pub fn contact_days(&self, medium: Medium, flow: Flow) -> f64 {
        self.0[contact_days_index(medium, flow)]
    }

    pub fn degrees(&self) -> (f64, f64, f64) {
        (self.0[DEGREE], self.0[IN_DEGREE], self.0[OUT_DEGREE])
    }

    fn bump(&mut self, family: Family, flow: Flow, window: TimeWindow, amount: f64) {
        for f in [flow, Flow::All] {
            for w in [window, TimeWindow::Total] {
                self.0[feature_index(family, f, w)] += amount;
            }
        }
    }
}

/// Per-user lists of outgoing and incoming event indices.
#[derive(Debug, Clone)]
pub struct EventIndex {
    out_offsets: Vec<usize>,
    out_events: Vec<u32>,
    in_offsets: Vec<usize>,
    in_events: Vec<u32>,
}

impl EventIndex {
    pub fn build(node_count: usize, events: &[Event]) -> Self {
        let (out_offsets, out_events) = bucket(node_count, events, |e| e.src);
        let (in_offsets, in_events) = bucket(node_count, events, |e| e.dst);
        EventIndex {
            out_offsets,
            out_events,
            in_offsets,
            in_events,
        }
    }

    pub fn outgoing(&self, user: u32) -> &[u32] {
        let u = user as usize;
        &self.out_events[self.out_offsets[u]..self.out_offsets[u + 1]]
    }

    pub fn incoming(&self, user: u32) -> &[u32] {
        let u = user as usize;
        &self.in_events[self.in_offsets[u]..self.in_offsets[u + 1]]
    }
}

fn bucket(node_count: usize, events: &[Event], key: impl Fn(&Event) -> u32) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = vec![0usize; node_count + 1];
    for e in events {
        offsets[key(e) as usize + 1] += 1;
    }
    for i in 1..offsets.len() {
        offsets[i] += offsets[i - 1];
    }
    let mut cursor = offsets.clone();
    let mut items = vec![0u32; events.len()];
    for (i, e) in events.iter().enumerate() {
        let k = key(e) as usize;
        items[cursor[k]] = i as u32;
        cursor[k] += 1;
    }
    (offsets, items)
}

/// `(degree, in_degree, out_degree)`: distinct counterparties in either
/// direction, that contacted the user, and that the user contacted.
pub fn compute_degrees(user: u32, graph: &SocialGraph) -> (usize, usize, usize) {
    if user as usize >= graph.node_count() {
        return (0, 0, 0);
    }
    (
        graph.degree(user),
        graph.in_contacts(user).len(),
        graph.out_contacts(user).count(),
    )
}

struct DaySets {
    words: usize,
    bits: Vec<u64>,
}

impl DaySets {
    const CALL_IN: usize = 0;
    const CALL_OUT: usize = 1;
    const SMS_IN: usize = 2;
    const SMS_OUT: usize = 3;

    fn new(days: usize) -> Self {
        let words = days.div_ceil(64).max(1);
        DaySets {
            words,
            bits: vec![0; words * 4],
        }
    }

    fn mark(&mut self, set: usize, day: usize) {
        self.bits[set * self.words + day / 64] |= 1 << (day % 64);
    }

    fn count(&self, sets: &[usize]) -> f64 {
        (0..self.words)
            .map(|w| {
                sets.iter()
                    .fold(0u64, |acc, &s| acc | self.bits[s * self.words + w])
                    .count_ones()
            })
            .sum::<u32>() as f64
    }
}

/// Features of one operator client.
pub fn extract_user_features(
    user: u32,
    dataset: &Dataset,
    graph: &SocialGraph,
    index: &EventIndex,
) -> Result<FeatureVector> {
    if !dataset.sets.is_client(user) {
        return Err(Error::domain(format!(
            "user {} is not an operator client",
            dataset.users.id(user)
        )));
    }
    user_features(user, &dataset.events, dataset.window, graph, index)
}

fn user_features(
    user: u32,
    events: &[Event],
    window: ObservationWindow,
    graph: &SocialGraph,
    index: &EventIndex,
) -> Result<FeatureVector> {
    let mut fv = FeatureVector::default();
    let days = window.days();
    let mut day_sets = DaySets::new(days);

    let sides = [(index.outgoing(user), Flow::Out), (index.incoming(user), Flow::In)];
    for (event_ids, flow) in sides {
        for &i in event_ids {
            let e = &events[i as usize];
            let ts = crate::cdr::from_epoch_seconds(e.time);
            if !window.contains(ts) {
                return Err(Error::data(format!(
                    "event at {ts} lies outside the observation window"
                )));
            }
            let tw = classify_time_window(ts);
            let day = window.day_index(ts);
            match (e.kind, flow) {
                (EventKind::Call, _) => {
                    fv.bump(Family::Calls, flow, tw, 1.0);
                    fv.bump(Family::CallSeconds, flow, tw, f64::from(e.duration));
                    let set = if flow == Flow::Out { DaySets::CALL_OUT } else { DaySets::CALL_IN };
                    day_sets.mark(set, day);
                }
                (EventKind::Sms, _) => {
                    fv.bump(Family::Sms, flow, tw, 1.0);
                    let set = if flow == Flow::Out { DaySets::SMS_OUT } else { DaySets::SMS_IN };
                    day_sets.mark(set, day);
                }
            }
        }
    }

    fv.0[contact_days_index(Medium::Call, Flow::In)] = day_sets.count(&[DaySets::CALL_IN]);
    fv.0[contact_days_index(Medium::Call, Flow::Out)] = day_sets.count(&[DaySets::CALL_OUT]);
    fv.0[contact_days_index(Medium::Call, Flow::All)] =
        day_sets.count(&[DaySets::CALL_IN, DaySets::CALL_OUT]);
    fv.0[contact_days_index(Medium::Sms, Flow::In)] = day_sets.count(&[DaySets::SMS_IN]);
    fv.0[contact_days_index(Medium::Sms, Flow::Out)] = day_sets.count(&[DaySets::SMS_OUT]);
    fv.0[contact_days_index(Medium::Sms, Flow::All)] =
        day_sets.count(&[DaySets::SMS_IN, DaySets::SMS_OUT]);

    let (deg, indeg, outdeg) = compute_degrees(user, graph);
    fv.0[DEGREE] = deg as f64;
    fv.0[IN_DEGREE] = indeg as f64;
    fv.0[OUT_DEGREE] = outdeg as f64;
    Ok(fv)
}

/// Feature matrix over operator clients: row `r` belongs to `users[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub users: Vec<u32>,
    pub values: Array2<f64>,
}

impl FeatureTable {
    /// Row of each dense user index, `None` for users without features.
    pub fn row_lookup(&self, node_count: usize) -> Vec<Option<u32>> {
        let mut lookup = vec![None; node_count];
        for (row, &u) in self.users.iter().enumerate() {
            lookup[u as usize] = Some(row as u32);
        }
        lookup
    }
}

/// Features for every operator client, rows in ascending user order.
pub fn extract_features(dataset: &Dataset, graph: &SocialGraph) -> Result<FeatureTable> {
    let users = dataset.sets.clients();
    let index = EventIndex::build(dataset.users.len(), &dataset.events);
    let mut values = Array2::<f64>::zeros((users.len(), FEATURE_COUNT));
    values
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(FEATURE_COUNT)
        .zip(users.par_iter())
        .try_for_each(|(row, &u)| -> Result<()> {
            let fv = user_features(u, &dataset.events, dataset.window, graph, &index)?;
            row.copy_from_slice(&fv.0);
            Ok(())
        })?;
    Ok(FeatureTable { users, values })
}
