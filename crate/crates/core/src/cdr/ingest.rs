use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{Event, EventKind, SocialGraph};
use super::users::{GroundTruthStats, UserIndex, UserSets};
use super::{parse_cdr_line, to_epoch_seconds, ObservationWindow, ParseOptions, Record, RecordKind};
use crate::demographics::AgeBounds;
use crate::error::{Error, Result};

const MAX_ERROR_SAMPLES: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub clients: u64,
    pub accepted_calls: u64,
    pub accepted_sms: u64,
    pub total_call_seconds: u64,
    /// Rejected line counts keyed by reason.
    pub rejected: BTreeMap<String, u64>,
    /// First few rejections as `source:line: message`.
    pub samples: Vec<String>,
    pub ground_truth: GroundTruthStats,
}

impl IngestStats {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }
}

/// Streaming ingestion of client lists, record files and ground truth.
///
/// Bad lines are counted and skipped; they never abort the stream.
#[derive(Debug)]
pub struct Ingestor {
    options: ParseOptions,
    users: UserIndex,
    sets: UserSets,
    events: Vec<Event>,
    stats: IngestStats,
}

impl Ingestor {
    pub fn new(options: ParseOptions) -> Self {
        Ingestor {
            options,
            users: UserIndex::new(),
            sets: UserSets::new(),
            events: Vec::new(),
            stats: IngestStats::default(),
        }
    }

    pub fn load_clients<R: BufRead>(&mut self, reader: R) -> Result<()> {
        self.stats.clients += self.sets.load_clients(reader, &mut self.users)?;
        Ok(())
    }

    pub fn push_record(&mut self, record: Record) {
        let event = match record {
            Record::Call(r) => {
                self.stats.accepted_calls += 1;
                self.stats.total_call_seconds += u64::from(r.duration);
                Event {
                    src: self.users.intern(&r.caller),
                    dst: self.users.intern(&r.callee),
                    time: to_epoch_seconds(r.timestamp),
                    duration: r.duration,
                    kind: EventKind::Call,
                    direction: r.direction,
                }
            }
            Record::Sms(r) => {
                self.stats.accepted_sms += 1;
                Event {
                    src: self.users.intern(&r.sender),
                    dst: self.users.intern(&r.receiver),
                    time: to_epoch_seconds(r.timestamp),
                    duration: 0,
                    kind: EventKind::Sms,
                    direction: r.direction,
                }
            }
        };
        self.events.push(event);
    }

    /// Parses every line of `reader`. A first line that looks like a header
    /// (`caller,...` / `sender,...`) is skipped.
    pub fn ingest_lines<R: BufRead>(&mut self, reader: R, kind: RecordKind, source: &str) -> Result<()> {
        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if line_no == 0 && (line.starts_with("caller") || line.starts_with("sender")) {
                continue;
            }
            match parse_cdr_line(&line, kind, &self.options) {
                Ok(record) => self.push_record(record),
                Err(err) => {
                    *self.stats.rejected.entry(err.reason().to_string()).or_default() += 1;
                    if self.stats.samples.len() < MAX_ERROR_SAMPLES {
                        self.stats.samples.push(format!("{source}:{}: {err}", line_no + 1));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load_ground_truth<R: BufRead>(&mut self, reader: R, bounds: AgeBounds) -> Result<()> {
        self.sets.resize(self.users.len());
        let stats = self.sets.load_ground_truth(reader, &self.users, bounds)?;
        let gt = &mut self.stats.ground_truth;
        gt.accepted += stats.accepted;
        gt.unknown_gender += stats.unknown_gender;
        gt.bad_age += stats.bad_age;
        gt.malformed += stats.malformed;
        gt.subset_violations += stats.subset_violations;
        gt.duplicates += stats.duplicates;
        Ok(())
    }

    pub fn finish(mut self) -> Dataset {
        self.sets.resize(self.users.len());
        let window = self
            .options
            .window
            .unwrap_or_else(|| covering_window(&self.events));
        Dataset {
            users: self.users,
            sets: self.sets,
            events: self.events,
            window,
            stats: self.stats,
        }
    }
}

/// Smallest whole-month window starting on the first of a month that covers
/// every event.
fn covering_window(events: &[Event]) -> ObservationWindow {
    use chrono::Datelike;
    let (Some(min), Some(max)) = (
        events.iter().map(|e| e.time).min(),
        events.iter().map(|e| e.time).max(),
    ) else {
        return ObservationWindow::default();
    };
    let first = super::from_epoch_seconds(min).date();
    let start = first.with_day(1).expect("day 1 exists");
    let mut window = ObservationWindow { start, months: 1 };
    while !window.contains(super::from_epoch_seconds(max)) {
        window.months += 1;
    }
    window
}

/// Everything ingestion produces: interned users, set membership, the
/// accepted events and counters.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub users: UserIndex,
    pub sets: UserSets,
    pub events: Vec<Event>,
    pub window: ObservationWindow,
    pub stats: IngestStats,
}

impl Dataset {
    /// Reads `clients.txt`, `cdr.csv`, `sms.csv` and `ground_truth.csv` from
    /// `dir`. The record files are optional; the client list is required.
    pub fn load_dir(dir: &Path, options: ParseOptions, bounds: AgeBounds) -> Result<Dataset> {
        let open = |name: &str| -> Result<Option<BufReader<File>>> {
            let path = dir.join(name);
            match File::open(&path) {
                Ok(f) => Ok(Some(BufReader::with_capacity(1 << 20, f))),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(path, e)),
            }
        };
        let mut ingestor = Ingestor::new(options);
        let clients = open("clients.txt")?.ok_or_else(|| {
            Error::data(format!("{} has no clients.txt", dir.display()))
        })?;
        ingestor.load_clients(clients)?;
        if let Some(r) = open("cdr.csv")? {
            ingestor.ingest_lines(r, RecordKind::Call, "cdr.csv")?;
        }
        if let Some(r) = open("sms.csv")? {
            ingestor.ingest_lines(r, RecordKind::Sms, "sms.csv")?;
        }
        if let Some(r) = open("ground_truth.csv")? {
            ingestor.load_ground_truth(r, bounds)?;
        }
        Ok(ingestor.finish())
    }

    pub fn graph(&self) -> SocialGraph {
        SocialGraph::build(self.users.len(), &self.events)
    }
}

const EVENTS_MAGIC: &[u8; 4] = b"DGEV";
const EVENTS_VERSION: u32 = 1;
const EVENT_BYTES: usize = 22;

/// Writes events in the packed little-endian artifact format:
/// magic `DGEV`, version `u32`, count `u64`, then per event
/// `src u32, dst u32, time i64, duration u32, kind u8, direction u8`.
pub fn write_events<W: Write>(mut w: W, events: &[Event]) -> std::io::Result<()> {
    w.write_all(EVENTS_MAGIC)?;
    w.write_all(&EVENTS_VERSION.to_le_bytes())?;
    w.write_all(&(events.len() as u64).to_le_bytes())?;
    let mut w = BufWriter::new(w);
    for e in events {
        let mut buf = [0u8; EVENT_BYTES];
        buf[0..4].copy_from_slice(&e.src.to_le_bytes());
        buf[4..8].copy_from_slice(&e.dst.to_le_bytes());
        buf[8..16].copy_from_slice(&e.time.to_le_bytes());
        buf[16..20].copy_from_slice(&e.duration.to_le_bytes());
        buf[20] = u8::from(e.kind == EventKind::Sms);
        buf[21] = u8::from(e.direction == super::Direction::Outgoing);
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut r = BufReader::new(r);
    let io = |e| Error::io("<events>", e);
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(io)?;
    if &header[0..4] != EVENTS_MAGIC {
        return Err(Error::data("not an events file"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != EVENTS_VERSION {
        return Err(Error::data(format!("unsupported events version {version}")));
    }
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes")) as usize;
    let mut events = Vec::with_capacity(count);
    let mut buf = [0u8; EVENT_BYTES];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(io)?;
        events.push(Event {
            src: u32::from_le_bytes(buf[0..4].try_into().expect("4 bytes")),
            dst: u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")),
            time: i64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")),
            duration: u32::from_le_bytes(buf[16..20].try_into().expect("4 bytes")),
            kind: if buf[20] == 1 { EventKind::Sms } else { EventKind::Call },
            direction: if buf[21] == 1 {
                super::Direction::Outgoing
            } else {
                super::Direction::Incoming
            },
        });
    }
    Ok(events)
}
