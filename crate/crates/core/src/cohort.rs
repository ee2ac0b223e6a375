//! Cohort construction: from raw dated events to labeled observation-window
//! sequences.
//!
//! A "month" is 30 days exactly; every window computation below is done in
//! days. All intervals are half-open `[start, end)`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days per month used throughout the window arithmetic.
pub const DAYS_PER_MONTH: i64 = 30;

/// One raw input record: a single event code observed for a patient on a day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    pub patient_id: String,
    pub date: NaiveDate,
    pub code: String,
}

/// All events of one patient on one day, deduplicated into a code set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub date: NaiveDate,
    pub codes: BTreeSet<String>,
}

/// A patient's full history: visits in strictly ascending date order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub visits: Vec<Visit>,
}

impl PatientRecord {
    /// Date of the first visit containing any of the given codes.
    fn first_visit_with(&self, codes: &BTreeSet<String>) -> Option<NaiveDate> {
        self.visits
            .iter()
            .find(|v| !v.codes.is_disjoint(codes))
            .map(|v| v.date)
    }

    fn last_visit_date(&self) -> NaiveDate {
        self.visits.last().expect("at least one visit").date
    }
}

/// Inclusion rules for cohort membership.
///
/// Positive patients need their first outcome at least `min_lead_months`
/// after the first index visit; their observation window is the
/// `observation_months` span ending `holdoff_months` before the first
/// outcome. Negative patients need at least
/// `observation + holdoff + monitor` months of outcome-free history after
/// the first index visit; their observation window is the first
/// `observation_months` after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub observation_months: u32,
    pub holdoff_months: u32,
    pub monitor_months: u32,
    pub min_lead_months: u32,
    pub index_codes: BTreeSet<String>,
    pub outcome_codes: BTreeSet<String>,
}

impl CohortSpec {
    pub fn new(index_codes: BTreeSet<String>, outcome_codes: BTreeSet<String>) -> Self {
        CohortSpec {
            observation_months: 12,
            holdoff_months: 6,
            monitor_months: 12,
            min_lead_months: 18,
            index_codes,
            outcome_codes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("observation_months", self.observation_months),
            ("holdoff_months", self.holdoff_months),
            ("monitor_months", self.monitor_months),
            ("min_lead_months", self.min_lead_months),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.min_lead_months != self.observation_months + self.holdoff_months {
            return Err(Error::InvalidConfig(format!(
                "min_lead_months ({}) must equal observation_months + holdoff_months ({})",
                self.min_lead_months,
                self.observation_months + self.holdoff_months
            )));
        }
        if self.index_codes.is_empty() {
            return Err(Error::InvalidConfig("index_codes must be non-empty".into()));
        }
        if self.outcome_codes.is_empty() {
            return Err(Error::InvalidConfig(
                "outcome_codes must be non-empty".into(),
            ));
        }
        Ok(())
    }

    fn observation_days(&self) -> i64 {
        self.observation_months as i64 * DAYS_PER_MONTH
    }
    fn holdoff_days(&self) -> i64 {
        self.holdoff_months as i64 * DAYS_PER_MONTH
    }
    fn monitor_days(&self) -> i64 {
        self.monitor_months as i64 * DAYS_PER_MONTH
    }
    fn min_lead_days(&self) -> i64 {
        self.min_lead_months as i64 * DAYS_PER_MONTH
    }
}

/// A patient restricted to their observation window, with the binary label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub patient_id: String,
    pub label: u8,
    pub observation_start: NaiveDate,
    pub observation_end: NaiveDate,
    pub visits: Vec<Visit>,
}

impl LabeledSequence {
    /// Observation span in days (`end - start`).
    pub fn span_days(&self) -> i64 {
        (self.observation_end - self.observation_start).num_days()
    }
}

/// Why patients dropped out of the cohort, plus the inclusion counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub positives: usize,
    pub negatives: usize,
    pub excluded_no_index: usize,
    pub excluded_outcome_before_index: usize,
    pub excluded_short_lead: usize,
    pub excluded_short_history: usize,
}

impl CohortSummary {
    pub fn excluded(&self) -> usize {
        self.excluded_no_index
            + self.excluded_outcome_before_index
            + self.excluded_short_lead
            + self.excluded_short_history
    }
}

/// Merge raw events into per-patient records: events sharing
/// `(patient_id, date)` become one visit with a deduplicated code set, and
/// visits are sorted by date.
pub fn group_into_visits(events: &[RawEvent]) -> Result<BTreeMap<String, PatientRecord>> {
    let mut by_patient: BTreeMap<String, BTreeMap<NaiveDate, BTreeSet<String>>> = BTreeMap::new();
    for (idx, ev) in events.iter().enumerate() {
        if ev.code.is_empty() {
            return Err(Error::Ingest {
                line: Some(idx + 1),
                msg: format!(
                    "empty event code for patient {:?} on {}",
                    ev.patient_id, ev.date
                ),
            });
        }
        if ev.patient_id.is_empty() {
            return Err(Error::Ingest {
                line: Some(idx + 1),
                msg: "empty patient_id".into(),
            });
        }
        by_patient
            .entry(ev.patient_id.clone())
            .or_default()
            .entry(ev.date)
            .or_default()
            .insert(ev.code.clone());
    }
    Ok(by_patient
        .into_iter()
        .map(|(patient_id, days)| {
            let visits = days
                .into_iter()
                .map(|(date, codes)| Visit { date, codes })
                .collect();
            (patient_id.clone(), PatientRecord { patient_id, visits })
        })
        .collect())
}

/// Apply the inclusion/exclusion rules and return labeled sequences (sorted
/// by patient id) together with the exclusion tally.
pub fn build_cohort(
    records: &BTreeMap<String, PatientRecord>,
    spec: &CohortSpec,
) -> Result<(Vec<LabeledSequence>, CohortSummary)> {
    spec.validate()?;
    let mut out = Vec::new();
    let mut summary = CohortSummary::default();

    for record in records.values() {
        let Some(first_index) = record.first_visit_with(&spec.index_codes) else {
            summary.excluded_no_index += 1;
            continue;
        };
        match record.first_visit_with(&spec.outcome_codes) {
            Some(first_outcome) => {
                if first_outcome <= first_index {
                    summary.excluded_outcome_before_index += 1;
                    continue;
                }
                let lead = (first_outcome - first_index).num_days();
                if lead < spec.min_lead_days() {
                    summary.excluded_short_lead += 1;
                    continue;
                }
                // Observation ends where the hold-off before the outcome begins.
                let end = first_outcome - chrono::Duration::days(spec.holdoff_days());
                let start = end - chrono::Duration::days(spec.observation_days());
                out.push(window_sequence(record, 1, start, end));
                summary.positives += 1;
            }
            None => {
                let history = (record.last_visit_date() - first_index).num_days();
                let required = spec.observation_days() + spec.holdoff_days() + spec.monitor_days();
                if history < required {
                    summary.excluded_short_history += 1;
                    continue;
                }
                let start = first_index;
                let end = start + chrono::Duration::days(spec.observation_days());
                out.push(window_sequence(record, 0, start, end));
                summary.negatives += 1;
            }
        }
    }
    Ok((out, summary))
}

fn window_sequence(
    record: &PatientRecord,
    label: u8,
    start: NaiveDate,
    end: NaiveDate,
) -> LabeledSequence {
    let visits = record
        .visits
        .iter()
        .filter(|v| v.date >= start && v.date < end)
        .cloned()
        .collect();
    LabeledSequence {
        patient_id: record.patient_id.clone(),
        label,
        observation_start: start,
        observation_end: end,
        visits,
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Read raw events from a file. `.csv` means delimited text with a header
/// row naming `patient_id`, `date`, `code`; anything else is treated as one
/// JSON object per line with the same fields. Dates are ISO-8601
/// `YYYY-MM-DD`.
pub fn read_events_file(path: &Path) -> Result<Vec<RawEvent>> {
    let file = std::fs::File::open(path)?;
    let is_csv = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    if is_csv {
        read_events_csv(file)
    } else {
        read_events_jsonl(file)
    }
}

pub fn read_events_csv<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest {
                line: Some(1),
                msg: format!("missing required column {name:?} in header"),
            })
    };
    let (pid_col, date_col, code_col) = (col("patient_id")?, col("date")?, col("code")?);
    let mut events = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("").trim().to_string();
        events.push(parse_event(
            field(pid_col),
            &field(date_col),
            field(code_col),
            line,
        )?);
    }
    Ok(events)
}

pub fn read_events_jsonl<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
    #[derive(Deserialize)]
    struct Line {
        patient_id: String,
        date: String,
        code: String,
    }
    let mut events = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&text).map_err(|e| Error::Ingest {
            line: Some(line_no),
            msg: format!("invalid JSON record: {e}"),
        })?;
        events.push(parse_event(
            parsed.patient_id,
            &parsed.date,
            parsed.code,
            line_no,
        )?);
    }
    Ok(events)
}

fn parse_event(patient_id: String, date: &str, code: String, line: usize) -> Result<RawEvent> {
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| Error::Ingest {
        line: Some(line),
        msg: format!("malformed date {date:?} (expected YYYY-MM-DD)"),
    })?;
    if code.is_empty() {
        return Err(Error::Ingest {
            line: Some(line),
            msg: "empty event code".into(),
        });
    }
    if patient_id.is_empty() {
        return Err(Error::Ingest {
            line: Some(line),
            msg: "empty patient_id".into(),
        });
    }
    Ok(RawEvent {
        patient_id,
        date,
        code,
    })
}

/// Read an optional `raw_code,group_code` mapping. A header row equal to
/// `raw_code,group_code` is skipped if present.
pub fn read_grouping_map<R: Read>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        let text = text.trim();
        if text.is_empty() || (line_no == 1 && text == "raw_code,group_code") {
            continue;
        }
        let mut parts = text.splitn(2, ',');
        let raw = parts.next().unwrap_or("").trim();
        let group = parts.next().unwrap_or("").trim();
        if raw.is_empty() || group.is_empty() {
            return Err(Error::Ingest {
                line: Some(line_no),
                msg: format!("grouping map line must be raw_code,group_code, got {text:?}"),
            });
        }
        map.insert(raw.to_string(), group.to_string());
    }
    Ok(map)
}

/// Replace event codes through the grouping map; unmapped codes pass through.
pub fn apply_grouping(events: &mut [RawEvent], map: &BTreeMap<String, String>) {
    for ev in events {
        if let Some(group) = map.get(&ev.code) {
            ev.code = group.clone();
        }
    }
}

/// Write labeled sequences as one JSON object per line.
pub fn write_sequences_jsonl<W: Write>(mut w: W, seqs: &[LabeledSequence]) -> Result<()> {
    for seq in seqs {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Read labeled sequences from the JSONL format written by
/// [`write_sequences_jsonl`].
pub fn read_sequences_jsonl<R: Read>(reader: R) -> Result<Vec<LabeledSequence>> {
    let mut seqs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let seq: LabeledSequence = serde_json::from_str(&text).map_err(|e| Error::Ingest {
            line: Some(i + 1),
            msg: format!("invalid labeled-sequence record: {e}"),
        })?;
        if seq.label > 1 {
            return Err(Error::Ingest {
                line: Some(i + 1),
                msg: format!("label must be 0 or 1, got {}", seq.label),
            });
        }
        seqs.push(seq);
    }
    Ok(seqs)
}
