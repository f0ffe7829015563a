use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::EventLog;

/// Suffix marking a response to a system-initiated scaffolding prompt, e.g. `R.SL*`.
pub const SCAFFOLD_MARK: char = '*';

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedLabel {
    pub code: Option<String>,
    pub system_initiated: bool,
}

pub fn parse_label(raw: &str) -> ParsedLabel {
    let raw = raw.trim();
    let (code, system_initiated) = match raw.strip_suffix(SCAFFOLD_MARK) {
        Some(rest) => (rest.trim(), true),
        None => (raw, false),
    };
    ParsedLabel {
        code: (!code.is_empty()).then(|| code.to_string()),
        system_initiated,
    }
}

/// Annotator label file: `case_id,seq,action_code`, keyed by `(case_id, seq)`.
///
/// Repeated keys are kept, so double labels surface in validation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelSheet {
    labels: BTreeMap<(String, usize), Vec<String>>,
    order: Vec<(String, usize)>,
}

impl LabelSheet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, case_id: impl Into<String>, seq: usize, label: impl Into<String>) {
        let key = (case_id.into(), seq);
        let slot = self.labels.entry(key.clone()).or_default();
        if slot.is_empty() {
            self.order.push(key);
        }
        slot.push(label.into());
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[..3] != ["case_id", "seq", "action_code"] {
            return Err(Error::format(
                &name,
                "expected header case_id,seq,action_code",
            ));
        }
        let mut sheet = LabelSheet::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let seq = row[1]
                .trim()
                .parse()
                .map_err(|_| Error::format(&name, format!("line {}: invalid seq", i + 2)))?;
            sheet.push(&row[0], seq, &row[2]);
        }
        Ok(sheet)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, case_id: &str, seq: usize) -> Option<&[String]> {
        self.labels
            .get(&(case_id.to_string(), seq))
            .map(Vec::as_slice)
    }

    /// Keys in first-appearance order with their raw labels.
    pub fn iter(&self) -> impl Iterator<Item = (&(String, usize), &[String])> {
        self.order.iter().map(|k| (k, self.labels[k].as_slice()))
    }

    /// Copies labels onto matching events.
    ///
    /// The scaffolding mark sets `system_initiated`; a code for which
    /// `is_non_srl` holds sets `non_srl`. Several labels on one key are
    /// joined with `;` and left for validation to report. Keys absent from
    /// the log are an error.
    pub fn apply(&self, log: &EventLog, is_non_srl: impl Fn(&str) -> bool) -> Result<EventLog> {
        let mut used = 0usize;
        let mut events = log.events().to_vec();
        for e in &mut events {
            let Some(raw) = self.get(&e.case_id, e.seq) else {
                continue;
            };
            used += 1;
            let parsed: Vec<ParsedLabel> = raw.iter().map(|r| parse_label(r)).collect();
            let codes: Vec<String> = parsed.iter().filter_map(|p| p.code.clone()).collect();
            e.system_initiated = parsed.iter().any(|p| p.system_initiated);
            e.non_srl = codes.len() == 1 && is_non_srl(&codes[0]);
            e.action_code = (!codes.is_empty()).then(|| codes.join(";"));
        }
        if used != self.len() {
            let keys = self
                .order
                .iter()
                .filter(|(case, seq)| {
                    !log.events()
                        .iter()
                        .any(|e| &e.case_id == case && e.seq == *seq)
                })
                .map(|(c, s)| format!("{c}#{s}"))
                .collect();
            return Err(Error::UnmatchedKeys { keys });
        }
        EventLog::from_events(events)
    }
}
