//! Call/SMS detail records, user sets and the communication graph.
//!
//! Raw records carry opaque string ids. Ingestion interns every id into a
//! dense `u32` index; everything downstream of [`ingest`] works on those
//! indices and on the compact [`Event`] representation.

mod graph;
mod ingest;
mod users;

pub use graph::{Event, EventKind, PairAggregate, PairCounters, SocialGraph};
pub use ingest::{read_events, write_events, Dataset, IngestStats, Ingestor};
pub use users::{GroundTruthStats, UserIndex, UserSets};

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, Months, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Direction of a communication relative to the operator client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Incoming,
    Outgoing,
}

impl Direction {
    pub fn token(self) -> &'static str {
        match self {
            Direction::Incoming => "IN",
            Direction::Outgoing => "OUT",
        }
    }
}

impl FromStr for Direction {
    type Err = LineError;

    fn from_str(s: &str) -> Result<Self, LineError> {
        match s {
            "IN" | "in" => Ok(Direction::Incoming),
            "OUT" | "out" => Ok(Direction::Outgoing),
            other => Err(LineError::Direction(other.to_string())),
        }
    }
}

/// One voice call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdrRecord {
    pub caller: String,
    pub callee: String,
    pub timestamp: NaiveDateTime,
    pub duration: u32,
    pub direction: Direction,
    pub tower: Option<String>,
}

/// One text message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmsRecord {
    pub sender: String,
    pub receiver: String,
    pub timestamp: NaiveDateTime,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Record {
    Call(CdrRecord),
    Sms(SmsRecord),
}

impl Record {
    pub fn timestamp(&self) -> NaiveDateTime {
        match self {
            Record::Call(r) => r.timestamp,
            Record::Sms(r) => r.timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordKind {
    Call,
    Sms,
}

impl RecordKind {
    fn field_count(self) -> usize {
        match self {
            RecordKind::Call => 6,
            RecordKind::Sms => 4,
        }
    }
}

/// Why a single input line was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("empty user id")]
    EmptyId,
    #[error("caller and callee are the same user")]
    SelfContact,
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
    #[error("invalid duration {0:?}")]
    Duration(String),
    #[error("negative duration {0}")]
    NegativeDuration(i64),
    #[error("unknown direction {0:?}")]
    Direction(String),
    #[error("timestamp {0} outside the observation window")]
    OutsideWindow(NaiveDateTime),
}

impl LineError {
    /// Stable short name used as a counter key.
    pub fn reason(&self) -> &'static str {
        match self {
            LineError::FieldCount { .. } => "field_count",
            LineError::EmptyId => "empty_id",
            LineError::SelfContact => "self_contact",
            LineError::Timestamp(_) => "timestamp",
            LineError::Duration(_) => "duration",
            LineError::NegativeDuration(_) => "negative_duration",
            LineError::Direction(_) => "direction",
            LineError::OutsideWindow(_) => "outside_window",
        }
    }
}

/// The observation period: `months` calendar months starting at `start` 00:00.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start: NaiveDate,
    pub months: u32,
}

impl Default for ObservationWindow {
    fn default() -> Self {
        ObservationWindow {
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            months: 3,
        }
    }
}

impl ObservationWindow {
    pub fn end(&self) -> NaiveDate {
        self.start
            .checked_add_months(Months::new(self.months))
            .expect("window end representable")
    }

    pub fn days(&self) -> usize {
        (self.end() - self.start).num_days() as usize
    }

    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        let date = ts.date();
        date >= self.start && date < self.end()
    }

    /// Zero-based calendar day of `ts` within the window.
    pub fn day_index(&self, ts: NaiveDateTime) -> usize {
        (ts.date() - self.start).num_days() as usize
    }
}

/// Settings shared by every parsed line.
#[derive(Debug, Clone, Copy)]
pub struct ParseOptions {
    /// Zone that naive timestamps are assumed to be in, and that offset
    /// timestamps are converted to.
    pub timezone: FixedOffset,
    pub window: Option<ObservationWindow>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            timezone: FixedOffset::east_opt(0).expect("utc offset"),
            window: None,
        }
    }
}

/// Parses `+HH:MM` / `-HH:MM` / `Z` into a fixed offset.
pub fn parse_offset(s: &str) -> Option<FixedOffset> {
    let s = s.trim();
    if s == "Z" || s == "UTC" {
        return FixedOffset::east_opt(0);
    }
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let (h, m) = rest.split_once(':').unwrap_or((rest, "0"));
    let secs = h.parse::<i32>().ok()? * 3600 + m.parse::<i32>().ok()? * 60;
    FixedOffset::east_opt(sign * secs)
}

/// Parses an ISO 8601 timestamp into local time of `tz`.
///
/// Naive timestamps (`2021-03-02T08:30:00`, also with a space separator) are
/// taken to already be in `tz`; timestamps with an offset are converted.
pub fn parse_timestamp(s: &str, tz: FixedOffset) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Some(ts) = parse_naive_fast(s.as_bytes()) {
        return Some(ts);
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Some(ts.with_timezone(&tz).naive_local());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

fn parse_naive_fast(b: &[u8]) -> Option<NaiveDateTime> {
    if b.len() != 19 || b[4] != b'-' || b[7] != b'-' || !(b[10] == b'T' || b[10] == b' ') {
        return None;
    }
    if b[13] != b':' || b[16] != b':' {
        return None;
    }
    let num = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r].iter().try_fold(0u32, |acc, &c| {
            c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0'))
        })
    };
    let date = NaiveDate::from_ymd_opt(num(0..4)? as i32, num(5..7)?, num(8..10)?)?;
    date.and_hms_opt(num(11..13)?, num(14..16)?, num(17..19)?)
}

/// Parses one CSV line in the documented CDR or SMS layout.
pub fn parse_cdr_line(
    line: &str,
    kind: RecordKind,
    options: &ParseOptions,
) -> Result<Record, LineError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    let expected = kind.field_count();
    // The tower column is optional, so a trailing empty or missing tower is fine.
    let valid_count = fields.len() == expected || (kind == RecordKind::Call && fields.len() == 5);
    if !valid_count {
        return Err(LineError::FieldCount {
            expected,
            found: fields.len(),
        });
    }
    let from = fields[0].trim();
    let to = fields[1].trim();
    if from.is_empty() || to.is_empty() {
        return Err(LineError::EmptyId);
    }
    if from == to {
        return Err(LineError::SelfContact);
    }
    let timestamp = parse_timestamp(fields[2], options.timezone)
        .ok_or_else(|| LineError::Timestamp(fields[2].to_string()))?;
    if let Some(window) = options.window {
        if !window.contains(timestamp) {
            return Err(LineError::OutsideWindow(timestamp));
        }
    }
    match kind {
        RecordKind::Call => {
            let raw = fields[3].trim();
            let duration: i64 = raw
                .parse()
                .map_err(|_| LineError::Duration(raw.to_string()))?;
            if duration < 0 {
                return Err(LineError::NegativeDuration(duration));
            }
            let duration =
                u32::try_from(duration).map_err(|_| LineError::Duration(raw.to_string()))?;
            let direction = fields[4].trim().parse()?;
            let tower = fields
                .get(5)
                .map(|t| t.trim())
                .filter(|t| !t.is_empty())
                .map(str::to_string);
            Ok(Record::Call(CdrRecord {
                caller: from.to_string(),
                callee: to.to_string(),
                timestamp,
                duration,
                direction,
                tower,
            }))
        }
        RecordKind::Sms => Ok(Record::Sms(SmsRecord {
            sender: from.to_string(),
            receiver: to.to_string(),
            timestamp,
            direction: fields[3].trim().parse()?,
        })),
    }
}

/// Formats a timestamp the way the CSV layouts expect it.
pub fn format_timestamp(ts: NaiveDateTime) -> String {
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
        ts.year(),
        ts.month(),
        ts.day(),
        ts.hour(),
        ts.minute(),
        ts.second()
    )
}

pub(crate) fn to_epoch_seconds(ts: NaiveDateTime) -> i64 {
    ts.and_utc().timestamp()
}

pub(crate) fn from_epoch_seconds(secs: i64) -> NaiveDateTime {
    DateTime::from_timestamp(secs, 0)
        .expect("timestamp in range")
        .naive_utc()
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Call => "call",
            RecordKind::Sms => "sms",
        })
    }
}
