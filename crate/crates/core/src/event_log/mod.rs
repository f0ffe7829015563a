//! Canonical event log: ingestion, segmentation, case filtering and the
//! CSV interchange format.

mod csv_io;
mod labels;
mod raw;
mod segment;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::Serialize;

pub use csv_io::{read_csv, write_csv, CSV_HEADER};
pub use labels::{parse_label, LabelSheet, ParsedLabel, SCAFFOLD_MARK};
pub use raw::{parse_raw_log, parse_timestamp, FormatProfile, RawTurn, Speaker};
pub use segment::{segment_prompts, SegmentMap};

use crate::error::{Error, Result};

/// One student utterance (or utterance segment).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub case_id: String,
    /// 0-based position within the case.
    pub seq: usize,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub action_code: Option<String>,
    /// Response to a system-initiated scaffolding question.
    pub system_initiated: bool,
    /// Acknowledgment / non-regulation utterance.
    pub non_srl: bool,
}

impl Event {
    /// Counts toward the minimum-length threshold.
    pub fn is_meaningful(&self) -> bool {
        !self.non_srl && !self.system_initiated
    }

    pub fn key(&self) -> String {
        format!("{}#{}", self.case_id, self.seq)
    }
}

/// Events grouped contiguously by case, in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates grouping and per-case ordering.
    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        let mut closed: HashMap<&str, ()> = HashMap::new();
        for pair in events.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.case_id == b.case_id {
                if b.seq <= a.seq {
                    return Err(Error::InvalidParameter(format!(
                        "case {:?}: seq {} follows {}",
                        a.case_id, b.seq, a.seq
                    )));
                }
                if b.timestamp < a.timestamp {
                    return Err(Error::InvalidParameter(format!(
                        "case {:?}: timestamp decreases at seq {}",
                        a.case_id, b.seq
                    )));
                }
            } else {
                closed.insert(&a.case_id, ());
                if closed.contains_key(b.case_id.as_str()) {
                    return Err(Error::InvalidParameter(format!(
                        "case {:?} is not contiguous",
                        b.case_id
                    )));
                }
            }
        }
        Ok(Self { events })
    }

    /// Builds a log from student turns.
    ///
    /// Chatbot turns are dropped. Within a case, turns are ordered by
    /// timestamp with input order breaking ties; `seq` is assigned afterwards.
    pub fn from_turns(turns: &[RawTurn]) -> Self {
        let mut order: Vec<&str> = Vec::new();
        let mut by_case: HashMap<&str, Vec<&RawTurn>> = HashMap::new();
        for t in turns.iter().filter(|t| t.speaker == Speaker::Student) {
            by_case
                .entry(&t.case_id)
                .or_insert_with(|| {
                    order.push(&t.case_id);
                    Vec::new()
                })
                .push(t);
        }
        let mut events = Vec::new();
        for case in order {
            let mut case_turns = by_case.remove(case).unwrap_or_default();
            case_turns.sort_by_key(|t| t.timestamp);
            events.extend(case_turns.into_iter().enumerate().map(|(seq, t)| Event {
                case_id: t.case_id.clone(),
                seq,
                timestamp: t.timestamp,
                text: t.text.clone(),
                action_code: None,
                system_initiated: false,
                non_srl: false,
            }));
        }
        Self { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Case ids in log order.
    pub fn cases(&self) -> Vec<&str> {
        self.traces().map(|t| t[0].case_id.as_str()).collect()
    }

    /// Contiguous per-case slices.
    pub fn traces(&self) -> impl Iterator<Item = &[Event]> {
        self.events.chunk_by(|a, b| a.case_id == b.case_id)
    }

    fn renumber(events: &mut [Event]) {
        for trace in events.chunk_by_mut(|a, b| a.case_id == b.case_id) {
            for (i, e) in trace.iter_mut().enumerate() {
                e.seq = i;
            }
        }
    }
}

/// What counts as one prompt for the minimum-length rule.
#[derive(Clone, Copy, Debug)]
pub enum CountBasis<'a> {
    /// Every meaningful event (post-segmentation).
    Events,
    /// Distinct source turns with at least one meaningful segment; needs the
    /// segmentation map used at ingest and a log whose seq values are unchanged since.
    Turns(&'a SegmentMap),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    /// case_id -> reason
    pub removed: BTreeMap<String, String>,
}

fn meaningful_count(trace: &[Event], basis: CountBasis<'_>) -> usize {
    match basis {
        CountBasis::Events => trace.iter().filter(|e| e.is_meaningful()).count(),
        CountBasis::Turns(map) => {
            let case = &trace[0].case_id;
            let mut count = 0;
            let mut pos = 0;
            let mut turn = 0;
            while pos < trace.len() {
                let n = map.segment_count(case, turn);
                let end = (pos + n).min(trace.len());
                if trace[pos..end].iter().any(Event::is_meaningful) {
                    count += 1;
                }
                pos = end;
                turn += 1;
            }
            count
        }
    }
}

/// Removes every case with fewer than `min_meaningful` meaningful prompts.
pub fn filter_short_cases(
    log: &EventLog,
    min_meaningful: usize,
    basis: CountBasis<'_>,
) -> (EventLog, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(log.len());
    for trace in log.traces() {
        let n = meaningful_count(trace, basis);
        if n < min_meaningful {
            report.removed.insert(
                trace[0].case_id.clone(),
                format!("{n} meaningful prompt(s) < {min_meaningful}"),
            );
        } else {
            kept.extend_from_slice(trace);
        }
    }
    (EventLog { events: kept }, report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FinalizeReport {
    pub input_events: usize,
    /// Events flagged non-SRL (whether or not also system-initiated).
    pub non_srl: usize,
    /// System-initiated events that are not also non-SRL.
    pub system_initiated: usize,
    pub output_events: usize,
    pub output_cases: usize,
}

/// Drops non-SRL and system-initiated events and renumbers `seq`.
///
/// Fails if any remaining event is unlabeled.
pub fn finalize_analysis_log(log: &EventLog) -> Result<(EventLog, FinalizeReport)> {
    let offenders: Vec<String> = log
        .events
        .iter()
        .filter(|e| !e.non_srl && e.action_code.as_deref().is_none_or(|c| c.trim().is_empty()))
        .map(Event::key)
        .collect();
    if !offenders.is_empty() {
        return Err(Error::AnnotationIncomplete { offenders });
    }
    let mut report = FinalizeReport {
        input_events: log.len(),
        ..Default::default()
    };
    let mut events: Vec<Event> = Vec::with_capacity(log.len());
    for e in &log.events {
        if e.non_srl {
            report.non_srl += 1;
        } else if e.system_initiated {
            report.system_initiated += 1;
        } else {
            events.push(e.clone());
        }
    }
    EventLog::renumber(&mut events);
    let out = EventLog { events };
    report.output_events = out.len();
    report.output_cases = out.cases().len();
    Ok((out, report))
}
