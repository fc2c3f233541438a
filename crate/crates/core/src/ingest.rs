//! Parsing of raw point-record streams and the user-level filters that do not
//! need land-use context: deduplication, boundary clipping, keyword
//! blocklist, relocation speed and residency span.

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{haversine, LatLon, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationSource {
    Gps,
    Geocoded,
}

/// One timestamped geo-located observation of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRecord {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub position: LatLon,
    pub text: Option<String>,
    pub source: LocationSource,
}

/// All records of one user in chronological order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTrack {
    pub user_id: String,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ResidencyMode {
    /// Last minus first timestamp must exceed the threshold.
    #[default]
    Span,
    /// Number of distinct UTC dates with records must exceed the threshold.
    ActiveDays,
}

pub const DEFAULT_BLOCKLIST: &[&str] = &["job", "jobs", "hiring", "recruiting", "traffic", "weather alert"];

#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Study-area boundary; `None` disables clipping.
    pub boundary: Option<Polygon>,
    /// Lowercase substrings; a record whose lowercased text contains any of
    /// them is removed.
    pub keyword_blocklist: Vec<String>,
    pub max_speed_mps: f64,
    pub min_residency_days: f64,
    pub residency_mode: ResidencyMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            boundary: None,
            keyword_blocklist: DEFAULT_BLOCKLIST.iter().map(|s| s.to_string()).collect(),
            max_speed_mps: 240.0,
            min_residency_days: 30.0,
            residency_mode: ResidencyMode::Span,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed_mps > 0.0) {
            return Err(Error::Config("max_speed_mps must be positive".into()));
        }
        if !(self.min_residency_days > 0.0) {
            return Err(Error::Config("min_residency_days must be positive".into()));
        }
        Ok(())
    }
}

/// Field a record column maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    UserId,
    Timestamp,
    Lat,
    Lon,
    Source,
    Text,
    Skip,
}

impl Column {
    fn parse(name: &str) -> Result<Self> {
        Ok(match name.trim() {
            "user_id" | "user" => Column::UserId,
            "timestamp" | "ts" => Column::Timestamp,
            "lat" => Column::Lat,
            "lon" => Column::Lon,
            "source" | "location_source" => Column::Source,
            "text" => Column::Text,
            "_" | "skip" => Column::Skip,
            other => return Err(Error::Schema(format!("unknown column name {other:?}"))),
        })
    }

    fn name(self) -> &'static str {
        match self {
            Column::UserId => "user_id",
            Column::Timestamp => "timestamp",
            Column::Lat => "lat",
            Column::Lon => "lon",
            Column::Source => "source",
            Column::Text => "text",
            Column::Skip => "_",
        }
    }
}

/// Column layout of a delimited record file. When `text` is the last column
/// it absorbs any further delimiters on the line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSchema {
    pub delimiter: char,
    pub columns: Vec<Column>,
}

impl Default for RecordSchema {
    fn default() -> Self {
        Self {
            delimiter: '\t',
            columns: vec![
                Column::UserId,
                Column::Timestamp,
                Column::Lat,
                Column::Lon,
                Column::Source,
                Column::Text,
            ],
        }
    }
}

impl RecordSchema {
    /// Parses a comma-separated list of column names, e.g.
    /// `user_id,timestamp,lat,lon,source,text`.
    pub fn parse(delimiter: char, columns: &str) -> Result<Self> {
        let columns = columns.split(',').map(Column::parse).collect::<Result<Vec<_>>>()?;
        let schema = Self { delimiter, columns };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        for required in [Column::UserId, Column::Timestamp, Column::Lat, Column::Lon] {
            match self.columns.iter().filter(|c| **c == required).count() {
                1 => {}
                0 => return Err(Error::Schema(format!("missing column {}", required.name()))),
                _ => return Err(Error::Schema(format!("duplicate column {}", required.name()))),
            }
        }
        Ok(())
    }

    pub fn header(&self) -> String {
        self.columns
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Formats a record according to this schema (inverse of parsing).
    pub fn format(&self, r: &PointRecord) -> String {
        let source = match r.source {
            LocationSource::Gps => "gps",
            LocationSource::Geocoded => "geocoded",
        };
        self.columns
            .iter()
            .map(|c| match c {
                Column::UserId => r.user_id.clone(),
                Column::Timestamp => r.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                Column::Lat => format!("{:.7}", r.position.lat),
                Column::Lon => format!("{:.7}", r.position.lon),
                Column::Source => source.to_string(),
                Column::Text => r.text.clone().unwrap_or_default(),
                Column::Skip => String::new(),
            })
            .collect::<Vec<_>>()
            .join(&self.delimiter.to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub lines: usize,
    pub blank: usize,
    pub parsed: usize,
    pub malformed: usize,
    pub bad_coord: usize,
    pub geocoded: usize,
}

enum LineOutcome {
    Record(PointRecord),
    Malformed,
    BadCoord,
    Geocoded,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .map(|t| t.and_utc())
}

fn parse_line(schema: &RecordSchema, line: &str) -> LineOutcome {
    let text_last = schema.columns.last() == Some(&Column::Text);
    let fields: Vec<&str> = if text_last {
        line.splitn(schema.columns.len(), schema.delimiter).collect()
    } else {
        line.split(schema.delimiter).collect()
    };
    // a trailing empty text column may be omitted
    let short_ok = text_last && fields.len() + 1 == schema.columns.len();
    if fields.len() != schema.columns.len() && !short_ok {
        return LineOutcome::Malformed;
    }

    let mut user_id = None;
    let mut timestamp = None;
    let mut lat = None;
    let mut lon = None;
    let mut text = None;
    let mut source = LocationSource::Gps;
    for (col, raw) in schema.columns.iter().zip(fields.iter()) {
        match col {
            Column::UserId => user_id = Some(raw.trim()),
            Column::Timestamp => match parse_timestamp(raw) {
                Some(t) => timestamp = Some(t),
                None => return LineOutcome::Malformed,
            },
            Column::Lat => match raw.trim().parse::<f64>() {
                Ok(v) => lat = Some(v),
                Err(_) => return LineOutcome::Malformed,
            },
            Column::Lon => match raw.trim().parse::<f64>() {
                Ok(v) => lon = Some(v),
                Err(_) => return LineOutcome::Malformed,
            },
            Column::Source => {
                source = match raw.trim().to_ascii_lowercase().as_str() {
                    "gps" => LocationSource::Gps,
                    "geocoded" => LocationSource::Geocoded,
                    _ => return LineOutcome::Malformed,
                }
            }
            Column::Text => {
                if !raw.is_empty() {
                    text = Some(raw.to_string());
                }
            }
            Column::Skip => {}
        }
    }
    let (Some(user_id), Some(timestamp), Some(lat), Some(lon)) = (user_id, timestamp, lat, lon) else {
        return LineOutcome::Malformed;
    };
    if user_id.is_empty() {
        return LineOutcome::Malformed;
    }
    let position = LatLon::new(lat, lon);
    if !position.is_valid() {
        return LineOutcome::BadCoord;
    }
    if source == LocationSource::Geocoded {
        return LineOutcome::Geocoded;
    }
    LineOutcome::Record(PointRecord {
        user_id: user_id.to_string(),
        timestamp,
        position,
        text,
        source,
    })
}

/// Parses newline-delimited records. Malformed lines, out-of-range
/// coordinates and geocoded locations are skipped and counted; only a read
/// failure aborts. Lines starting with `#` are treated as comments.
pub fn parse_records<R: BufRead>(reader: R, schema: &RecordSchema) -> Result<(Vec<PointRecord>, ParseReport)> {
    schema.validate()?;
    let mut report = ParseReport::default();
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        report.lines += 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            report.blank += 1;
            continue;
        }
        match parse_line(schema, trimmed) {
            LineOutcome::Record(r) => {
                report.parsed += 1;
                records.push(r);
            }
            LineOutcome::Malformed => report.malformed += 1,
            LineOutcome::BadCoord => report.bad_coord += 1,
            LineOutcome::Geocoded => report.geocoded += 1,
        }
    }
    Ok((records, report))
}

/// Replaces user identifiers with a salted SHA-256 digest prefix.
pub fn pseudonymize(user_id: &str, salt: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update([0u8]);
    h.update(user_id.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Removes exact duplicates (user, timestamp, lat, lon), records outside the
/// boundary and records matching the keyword blocklist. Order is preserved.
pub fn prefilter(records: Vec<PointRecord>, cfg: &FilterConfig) -> Vec<PointRecord> {
    let mut seen: HashSet<(String, i64, u64, u64)> = HashSet::with_capacity(records.len());
    records
        .into_iter()
        .filter(|r| {
            seen.insert((
                r.user_id.clone(),
                r.timestamp.timestamp(),
                r.position.lat.to_bits(),
                r.position.lon.to_bits(),
            ))
        })
        .filter(|r| cfg.boundary.as_ref().is_none_or(|b| b.contains(r.position)))
        .filter(|r| match &r.text {
            Some(text) => {
                let lower = text.to_lowercase();
                !cfg.keyword_blocklist.iter().any(|k| lower.contains(k.as_str()))
            }
            None => true,
        })
        .collect()
}

/// Groups records into per-user chronological tracks, sorted by user id.
/// Records with equal timestamps keep their input order.
pub fn group_tracks(records: Vec<PointRecord>) -> Vec<UserTrack> {
    let mut by_user: BTreeMap<String, Vec<PointRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    by_user
        .into_iter()
        .map(|(user_id, mut points)| {
            points.sort_by_key(|p| p.timestamp);
            UserTrack { user_id, points }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedDecision {
    Keep,
    /// Consecutive pair `(first, first + 1)` moved faster than allowed.
    Drop { first: usize, speed_mps: f64 },
}

impl SpeedDecision {
    pub fn keep(&self) -> bool {
        matches!(self, SpeedDecision::Keep)
    }
}

/// Drops the whole user when any consecutive pair implies a relocation speed
/// above `max_speed_mps`. Simultaneous records at different positions count
/// as infinitely fast.
pub fn speed_filter(track: &UserTrack, cfg: &FilterConfig) -> SpeedDecision {
    for (i, pair) in track.points.windows(2).enumerate() {
        let dt = (pair[1].timestamp - pair[0].timestamp).num_seconds() as f64;
        let dist = haversine(pair[0].position, pair[1].position);
        let speed = if dt > 0.0 {
            dist / dt
        } else if dist > 0.0 {
            f64::INFINITY
        } else {
            continue;
        };
        if speed > cfg.max_speed_mps {
            return SpeedDecision::Drop { first: i, speed_mps: speed };
        }
    }
    SpeedDecision::Keep
}

/// Keeps users observed for strictly more than `min_residency_days`.
pub fn residency_filter(track: &UserTrack, cfg: &FilterConfig) -> bool {
    let (Some(first), Some(last)) = (track.points.first(), track.points.last()) else {
        return false;
    };
    match cfg.residency_mode {
        ResidencyMode::Span => {
            let span = (last.timestamp - first.timestamp).num_seconds() as f64;
            span > cfg.min_residency_days * 86_400.0
        }
        ResidencyMode::ActiveDays => {
            let days: HashSet<_> = track.points.iter().map(|p| p.timestamp.date_naive()).collect();
            days.len() as f64 > cfg.min_residency_days
        }
    }
}
