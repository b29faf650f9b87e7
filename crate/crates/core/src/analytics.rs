//! Telemetry event log, survey capture and descriptive statistics over the
//! two 1-10 survey scales.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decimal::Decimal;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("event storage failure: {0}")]
    StorageFailure(String),
    #[error("rating distribution is empty")]
    EmptyDistribution,
    #[error("{field} rating {value} is outside 1..=10")]
    RatingOutOfRange { field: &'static str, value: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ScenarioViewed,
    HighlightAdded,
    HighlightRemoved,
    ProductViewed,
    AssessmentRecorded,
    ComparisonBuilt,
    AiQuestion,
    AiCleared,
    RecommendationSet,
    JustificationSubmitted,
    SessionFinalized,
    SurveySubmitted,
}

impl EventKind {
    pub const ALL: [EventKind; 12] = [
        EventKind::ScenarioViewed,
        EventKind::HighlightAdded,
        EventKind::HighlightRemoved,
        EventKind::ProductViewed,
        EventKind::AssessmentRecorded,
        EventKind::ComparisonBuilt,
        EventKind::AiQuestion,
        EventKind::AiCleared,
        EventKind::RecommendationSet,
        EventKind::JustificationSubmitted,
        EventKind::SessionFinalized,
        EventKind::SurveySubmitted,
    ];
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(at: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&at.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&text)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub seq: u64,
    /// Empty for events not bound to a session (survey submissions).
    pub session_id: String,
    #[serde(with = "rfc3339")]
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Map<String, Value>,
}

/// An event before the log assigns its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub session_id: String,
    pub at: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Map<String, Value>,
}

impl NewEvent {
    pub fn new(session_id: impl Into<String>, at: DateTime<Utc>, kind: EventKind, payload: Value) -> Self {
        let payload = match payload {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        NewEvent {
            session_id: session_id.into(),
            at,
            kind,
            payload,
        }
    }
}

/// Append-only event log, optionally backed by a JSON-lines file.
///
/// Every record is written and flushed before `append` returns.
#[derive(Debug)]
pub struct EventLog {
    records: Vec<EventRecord>,
    file: Option<(PathBuf, File)>,
}

fn storage(err: impl std::fmt::Display) -> AnalyticsError {
    AnalyticsError::StorageFailure(err.to_string())
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog {
            records: Vec::new(),
            file: None,
        }
    }

    /// Opens (or creates) a log file and reads back every record in it.
    ///
    /// A final line without a terminating newline is a torn write from an
    /// interrupted append; it is dropped if it does not parse.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AnalyticsError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(storage)?;
        let mut records: Vec<EventRecord> = Vec::new();
        let mut good_len: u64 = 0;
        let mut torn = false;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            loop {
                line.clear();
                let read = reader.read_line(&mut line).map_err(storage)?;
                if read == 0 {
                    break;
                }
                let complete = line.ends_with('\n');
                let text = line.trim_end_matches(['\n', '\r']);
                if text.trim().is_empty() {
                    good_len += read as u64;
                    continue;
                }
                // the writer emits record and newline together, so a line
                // without one was never acknowledged
                if !complete {
                    torn = true;
                    break;
                }
                let record = serde_json::from_str::<EventRecord>(text).map_err(|err| {
                    storage(format!(
                        "corrupt record after seq {}: {err}",
                        records.last().map_or(0, |r| r.seq)
                    ))
                })?;
                if let Some(last) = records.last() {
                    if record.seq <= last.seq {
                        return Err(storage(format!(
                            "sequence {} does not follow {} in {}",
                            record.seq,
                            last.seq,
                            path.display()
                        )));
                    }
                }
                records.push(record);
                good_len += read as u64;
            }
        }
        if torn {
            tracing::warn!(path = %path.display(), "dropping torn final event record");
            file.set_len(good_len).map_err(storage)?;
            file.seek(SeekFrom::End(0)).map_err(storage)?;
        }
        Ok(EventLog {
            records,
            file: Some((path, file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn last_seq(&self) -> u64 {
        self.records.last().map_or(0, |r| r.seq)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn append(&mut self, event: NewEvent) -> Result<EventRecord, AnalyticsError> {
        let mut records = self.append_all([event])?;
        Ok(records.pop().expect("one record appended"))
    }

    /// Appends a batch with a single write and flush.
    pub fn append_all(
        &mut self,
        events: impl IntoIterator<Item = NewEvent>,
    ) -> Result<Vec<EventRecord>, AnalyticsError> {
        let mut seq = self.last_seq();
        let records: Vec<EventRecord> = events
            .into_iter()
            .map(|event| {
                seq += 1;
                EventRecord {
                    seq,
                    session_id: event.session_id,
                    at: event.at,
                    kind: event.kind,
                    payload: event.payload,
                }
            })
            .collect();
        if let Some((_, file)) = self.file.as_mut() {
            let mut bytes = Vec::new();
            for record in &records {
                serde_json::to_writer(&mut bytes, record).map_err(storage)?;
                bytes.push(b'\n');
            }
            file.write_all(&bytes).map_err(storage)?;
            file.flush().map_err(storage)?;
            file.sync_data().map_err(storage)?;
        }
        self.records.extend(records.iter().cloned());
        Ok(records)
    }
}

/// Formats a timestamp the way the log stores it.
pub fn format_timestamp(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub participant_ref: String,
    pub usefulness: i64,
    pub ease: i64,
    #[serde(default)]
    pub feedback: Option<String>,
}

impl SurveyResponse {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        for (field, value) in [("usefulness", self.usefulness), ("ease", self.ease)] {
            if !(1..=10).contains(&value) {
                return Err(AnalyticsError::RatingOutOfRange { field, value });
            }
        }
        Ok(())
    }

    pub fn to_event(&self, at: DateTime<Utc>) -> NewEvent {
        NewEvent::new(
            "",
            at,
            EventKind::SurveySubmitted,
            serde_json::to_value(self).expect("survey serialization is infallible"),
        )
    }

    pub fn from_record(record: &EventRecord) -> Option<SurveyResponse> {
        (record.kind == EventKind::SurveySubmitted)
            .then(|| serde_json::from_value(Value::Object(record.payload.clone())).ok())
            .flatten()
    }
}

/// Counts per rating value 1..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RatingDistribution {
    counts: [u64; 10],
}

impl RatingDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from `(rating, count)` pairs; panics on ratings outside 1..=10.
    pub fn from_counts(pairs: &[(u8, u64)]) -> Self {
        let mut d = Self::new();
        for &(rating, count) in pairs {
            assert!((1..=10).contains(&rating), "rating {rating} outside 1..=10");
            d.counts[rating as usize - 1] += count;
        }
        d
    }

    pub fn count(&self, rating: u8) -> u64 {
        if (1..=10).contains(&rating) {
            self.counts[rating as usize - 1]
        } else {
            0
        }
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn record(&mut self, rating: u8) -> Result<(), AnalyticsError> {
        if !(1..=10).contains(&rating) {
            return Err(AnalyticsError::RatingOutOfRange {
                field: "rating",
                value: rating as i64,
            });
        }
        self.counts[rating as usize - 1] += 1;
        Ok(())
    }

    /// `(rating, count)` for every rating with a non-zero count.
    pub fn iter(&self) -> impl Iterator<Item = (u8, u64)> + '_ {
        (1..=10u8).map(|r| (r, self.count(r))).filter(|&(_, c)| c > 0)
    }

    fn non_empty(&self) -> Result<u64, AnalyticsError> {
        match self.n() {
            0 => Err(AnalyticsError::EmptyDistribution),
            n => Ok(n),
        }
    }

    /// The rating at 0-based position `index` of the sorted expansion.
    fn nth(&self, index: u64) -> u8 {
        let mut seen = 0;
        for rating in 1..=10u8 {
            seen += self.count(rating);
            if index < seen {
                return rating;
            }
        }
        unreachable!("index {index} beyond distribution size {}", self.n())
    }
}

impl Serialize for RatingDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            counts: BTreeMap<String, u64>,
            n: u64,
        }
        Wire {
            counts: (1..=10u8).map(|r| (r.to_string(), self.count(r))).collect(),
            n: self.n(),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DescriptiveStats {
    /// Half-up to 2 places.
    pub mean: Decimal,
    /// Middle value; mean of the two middles (1 place) for even counts.
    pub median: Decimal,
    pub modes: Vec<u8>,
    pub n: u64,
}

pub fn descriptive_stats(d: &RatingDistribution) -> Result<DescriptiveStats, AnalyticsError> {
    let n = d.non_empty()?;
    let total: u64 = d.iter().map(|(r, c)| r as u64 * c).sum();
    let mean = Decimal::ratio(total as i128, n as i128).round_half_up(2);
    let median = if n % 2 == 1 {
        Decimal::from_int(d.nth(n / 2) as i64)
    } else {
        let low = d.nth(n / 2 - 1) as i128;
        let high = d.nth(n / 2) as i128;
        Decimal::ratio(low + high, 2).round_half_up(1)
    };
    let top = d.iter().map(|(_, c)| c).max().unwrap_or(0);
    let modes = d.iter().filter(|&(_, c)| c == top).map(|(r, _)| r).collect();
    Ok(DescriptiveStats { mean, median, modes, n })
}

/// Share of each rating 1..=10 in percent, half-up to 1 place.
pub fn distribution_percentages(d: &RatingDistribution) -> Result<BTreeMap<u8, Decimal>, AnalyticsError> {
    let n = d.non_empty()?;
    Ok((1..=10u8).map(|r| (r, percent(d.count(r), n))).collect())
}

/// Combined share of the given rating values, half-up to 1 place.
pub fn band_share(d: &RatingDistribution, values: &BTreeSet<u8>) -> Result<Decimal, AnalyticsError> {
    let n = d.non_empty()?;
    let count = values.iter().map(|&r| d.count(r)).sum();
    Ok(percent(count, n))
}

fn percent(count: u64, n: u64) -> Decimal {
    Decimal::ratio(100 * count as i128, n as i128).round_half_up(1)
}

/// Survey responses in ingestion order, with running distributions.
#[derive(Debug, Clone, Default)]
pub struct SurveyStore {
    responses: Vec<SurveyResponse>,
    usefulness: RatingDistribution,
    ease: RatingDistribution,
}

impl SurveyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates and records one response. Feedback is kept verbatim.
    pub fn ingest(&mut self, response: SurveyResponse) -> Result<(), AnalyticsError> {
        response.validate()?;
        self.usefulness.record(response.usefulness as u8)?;
        self.ease.record(response.ease as u8)?;
        self.responses.push(response);
        Ok(())
    }

    pub fn responses(&self) -> &[SurveyResponse] {
        &self.responses
    }

    pub fn usefulness(&self) -> &RatingDistribution {
        &self.usefulness
    }

    pub fn ease(&self) -> &RatingDistribution {
        &self.ease
    }

    /// RFC 4180 CSV: `participant_ref,usefulness,ease,feedback`.
    pub fn export_csv(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        writer
            .write_record(["participant_ref", "usefulness", "ease", "feedback"])
            .expect("in-memory csv write");
        for r in &self.responses {
            writer
                .write_record([
                    r.participant_ref.as_str(),
                    &r.usefulness.to_string(),
                    &r.ease.to_string(),
                    r.feedback.as_deref().unwrap_or(""),
                ])
                .expect("in-memory csv write");
        }
        writer.into_inner().expect("in-memory csv flush")
    }

    /// Parses an export back into responses. An empty feedback cell reads as
    /// no feedback.
    pub fn parse_csv(bytes: &[u8]) -> Result<Vec<SurveyResponse>, AnalyticsError> {
        let mut reader = csv::Reader::from_reader(bytes);
        let mut out = Vec::new();
        for row in reader.records() {
            let row = row.map_err(storage)?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let rating = |i: usize, name: &'static str| {
                field(i)
                    .parse::<i64>()
                    .map_err(|_| AnalyticsError::RatingOutOfRange { field: name, value: -1 })
            };
            let response = SurveyResponse {
                participant_ref: field(0).to_string(),
                usefulness: rating(1, "usefulness")?,
                ease: rating(2, "ease")?,
                feedback: Some(field(3).to_string()).filter(|f| !f.is_empty()),
            };
            response.validate()?;
            out.push(response);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn d(s: &str) -> Decimal {
        s.parse().unwrap()
    }

    fn usefulness() -> RatingDistribution {
        RatingDistribution::from_counts(&[(10, 24), (9, 28), (8, 31), (7, 13), (6, 12), (5, 3), (4, 1), (3, 1)])
    }

    fn ease() -> RatingDistribution {
        RatingDistribution::from_counts(&[(10, 35), (9, 33), (8, 18), (7, 16), (6, 6), (5, 3), (4, 1), (2, 1)])
    }

    #[test]
    fn usefulness_stats() {
        let s = descriptive_stats(&usefulness()).unwrap();
        assert_eq!((s.mean, s.median, s.modes, s.n), (d("8.19"), d("8"), vec![8], 113));
    }

    #[test]
    fn ease_stats() {
        let s = descriptive_stats(&ease()).unwrap();
        assert_eq!((s.mean, s.median, s.modes, s.n), (d("8.50"), d("9"), vec![10], 113));
    }

    #[test]
    fn single_and_even_and_empty() {
        let s = descriptive_stats(&RatingDistribution::from_counts(&[(7, 1)])).unwrap();
        assert_eq!(
            (s.mean.to_fixed(2), s.median, s.modes),
            ("7.00".into(), d("7"), vec![7])
        );
        let s = descriptive_stats(&RatingDistribution::from_counts(&[(7, 1), (8, 1)])).unwrap();
        assert_eq!(s.median, d("7.5"));
        assert_eq!(s.modes, vec![7, 8]);
        assert_eq!(
            descriptive_stats(&RatingDistribution::new()),
            Err(AnalyticsError::EmptyDistribution)
        );
        assert_eq!(
            band_share(&RatingDistribution::new(), &BTreeSet::from([1])),
            Err(AnalyticsError::EmptyDistribution)
        );
    }

    #[test]
    fn percentages() {
        let p = distribution_percentages(&usefulness()).unwrap();
        assert_eq!((p[&10], p[&9], p[&8]), (d("21.2"), d("24.8"), d("27.4")));
        let p = distribution_percentages(&ease()).unwrap();
        assert_eq!(p[&10].to_fixed(1), "31.0");
        assert_eq!((p[&9], p[&8]), (d("29.2"), d("15.9")));
        let one = distribution_percentages(&RatingDistribution::from_counts(&[(5, 1)])).unwrap();
        assert_eq!(one[&5], d("100"));
        assert_eq!(one[&4], d("0"));
    }

    #[test]
    fn bands() {
        let top = BTreeSet::from([8, 9, 10]);
        assert_eq!(band_share(&usefulness(), &top).unwrap(), d("73.5"));
        assert_eq!(band_share(&ease(), &top).unwrap(), d("76.1"));
        assert_eq!(band_share(&ease(), &(1..=5).collect()).unwrap(), d("4.4"));
        assert_eq!(band_share(&ease(), &(1..=10).collect()).unwrap(), d("100"));
    }

    #[test]
    fn survey_ingest_and_export() {
        let mut store = SurveyStore::new();
        assert_eq!(
            String::from_utf8(store.export_csv()).unwrap(),
            "participant_ref,usefulness,ease,feedback\r\n"
        );
        store
            .ingest(SurveyResponse {
                participant_ref: "P001".into(),
                usefulness: 8,
                ease: 10,
                feedback: Some("loved the compare tool".into()),
            })
            .unwrap();
        assert_eq!(store.usefulness().count(8), 1);
        assert_eq!(store.ease().count(10), 1);
        let err = store
            .ingest(SurveyResponse {
                participant_ref: "P002".into(),
                usefulness: 11,
                ease: 5,
                feedback: None,
            })
            .unwrap_err();
        assert_eq!(
            err,
            AnalyticsError::RatingOutOfRange {
                field: "usefulness",
                value: 11
            }
        );
        assert_eq!(store.responses().len(), 1);
        store
            .ingest(SurveyResponse {
                participant_ref: "P003".into(),
                usefulness: 9,
                ease: 9,
                feedback: Some("quote \"this\", and\na newline".into()),
            })
            .unwrap();
        let csv = store.export_csv();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.contains("\"quote \"\"this\"\", and\na newline\""));
        let parsed = SurveyStore::parse_csv(&csv).unwrap();
        assert_eq!(parsed, store.responses());
        let mut again = SurveyStore::new();
        for r in parsed {
            again.ingest(r).unwrap();
        }
        assert_eq!(again.export_csv(), csv);
    }

    #[test]
    fn event_log_assigns_sequence() {
        let mut log = EventLog::in_memory();
        let at = Utc.with_ymd_and_hms(2025, 3, 1, 10, 0, 0).unwrap();
        let seqs: Vec<u64> = (0..3)
            .map(|_| {
                log.append(NewEvent::new("s1", at, EventKind::ProductViewed, Value::Null))
                    .unwrap()
                    .seq
            })
            .collect();
        assert_eq!(seqs, vec![1, 2, 3]);
    }

    #[test]
    fn file_log_round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let at = Utc.with_ymd_and_hms(2025, 3, 1, 10, 0, 0).unwrap() + chrono::Duration::nanoseconds(123_456_789);
        {
            let mut log = EventLog::open(&path).unwrap();
            log.append(NewEvent::new(
                "s1",
                at,
                EventKind::HighlightAdded,
                serde_json::json!({"start": 1}),
            ))
            .unwrap();
            log.append(NewEvent::new("s1", at, EventKind::AiCleared, Value::Null))
                .unwrap();
        }
        // simulate a crash halfway through a third append
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":3,"session_id":"s1","at":"2025-"#).unwrap();
        drop(f);

        let mut log = EventLog::open(&path).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.records()[0].at, at);
        assert_eq!(log.records()[0].payload["start"], 1);
        assert_eq!(
            log.append(NewEvent::new("s2", at, EventKind::ScenarioViewed, Value::Null))
                .unwrap()
                .seq,
            3
        );
        drop(log);
        let log = EventLog::open(&path).unwrap();
        assert_eq!(log.records().iter().map(|r| r.seq).collect::<Vec<_>>(), vec![1, 2, 3]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"at\":\"2025-03-01T10:00:00.123456789Z\""));
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(EventLog::open(&path), Err(AnalyticsError::StorageFailure(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dist() -> impl Strategy<Value = RatingDistribution> {
            proptest::collection::vec(0u64..40, 10).prop_filter_map("non-empty", |counts| {
                let pairs: Vec<(u8, u64)> = counts.iter().enumerate().map(|(i, &c)| (i as u8 + 1, c)).collect();
                let d = RatingDistribution::from_counts(&pairs);
                (d.n() > 0).then_some(d)
            })
        }

        proptest! {
            #[test]
            fn mean_rounding_bound(d in dist()) {
                let s = descriptive_stats(&d).unwrap();
                let exact: u64 = d.iter().map(|(r, c)| r as u64 * c).sum();
                let gap = s.mean * Decimal::from_int(s.n as i64) - Decimal::from_int(exact as i64);
                let gap = if gap.is_negative() { Decimal::ZERO - gap } else { gap };
                prop_assert!(gap <= Decimal::ratio(5 * s.n as i128, 1000));
            }

            #[test]
            fn modes_attain_max(d in dist()) {
                let s = descriptive_stats(&d).unwrap();
                let top = d.iter().map(|(_, c)| c).max().unwrap();
                prop_assert!(!s.modes.is_empty());
                prop_assert!(s.modes.iter().all(|&m| d.count(m) == top));
                let attaining = d.iter().filter(|&(_, c)| c == top).count();
                prop_assert_eq!(s.modes.len(), attaining);
                let lo = d.iter().next().unwrap().0 as i64;
                let hi = d.iter().last().unwrap().0 as i64;
                prop_assert!(s.median >= lo && s.median <= hi);
            }

            #[test]
            fn partition_shares_sum_near_100(d in dist(), cut1 in 1u8..10, cut2 in 1u8..10) {
                let (a, b) = (cut1.min(cut2), cut1.max(cut2));
                let bands: [BTreeSet<u8>; 3] = [
                    (1..=a).collect(),
                    (a + 1..=b).collect(),
                    (b + 1..=10).collect(),
                ];
                let total = bands.iter().fold(Decimal::ZERO, |acc, band| acc + band_share(&d, band).unwrap());
                let gap = total - Decimal::from_int(100);
                let gap = if gap.is_negative() { Decimal::ZERO - gap } else { gap };
                prop_assert!(gap <= d_str("0.2"));
            }
        }

        fn d_str(s: &str) -> Decimal {
            s.parse().unwrap()
        }
    }
}
