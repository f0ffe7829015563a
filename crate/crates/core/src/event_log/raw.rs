//! Raw conversation export ingestion.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Student,
    Chatbot,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Student => "student",
            Speaker::Chatbot => "chatbot",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawTurn {
    pub case_id: String,
    pub timestamp: DateTime<Utc>,
    pub speaker: Speaker,
    pub text: String,
}

/// Maps the field names of a particular export onto [`RawTurn`].
///
/// Field names starting with `/` are JSON pointers into each record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FormatProfile {
    /// JSON pointer to the array of records; empty means the document root.
    pub records: String,
    pub case_id: String,
    pub timestamp: String,
    pub speaker: String,
    pub text: String,
    pub student_values: Vec<String>,
    pub chatbot_values: Vec<String>,
    /// chrono format string for naive timestamps (interpreted as UTC).
    /// When absent, RFC 3339 and a few common naive layouts are accepted.
    pub timestamp_format: Option<String>,
}

impl Default for FormatProfile {
    fn default() -> Self {
        Self {
            records: String::new(),
            case_id: "case_id".into(),
            timestamp: "timestamp".into(),
            speaker: "speaker".into(),
            text: "text".into(),
            student_values: vec!["student".into(), "user".into()],
            chatbot_values: vec!["chatbot".into(), "assistant".into(), "bot".into()],
            timestamp_format: None,
        }
    }
}

impl FormatProfile {
    /// Reads a TOML profile, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| Error::format(name, e))
        } else {
            toml::from_str(&text).map_err(|e| Error::format(name, e))
        }
    }

    fn speaker_of(&self, value: &str) -> Option<Speaker> {
        let v = value.trim();
        if self.student_values.iter().any(|s| s.eq_ignore_ascii_case(v)) {
            Some(Speaker::Student)
        } else if self.chatbot_values.iter().any(|s| s.eq_ignore_ascii_case(v)) {
            Some(Speaker::Chatbot)
        } else {
            None
        }
    }
}

fn field<'a>(record: &'a Value, name: &str) -> Option<&'a Value> {
    if name.starts_with('/') {
        record.pointer(name)
    } else {
        record.get(name)
    }
}

fn scalar_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses an ISO 8601 timestamp, truncated to whole seconds.
pub fn parse_timestamp(raw: &str, format: Option<&str>) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    let parsed = if let Some(fmt) = format {
        NaiveDateTime::parse_from_str(raw, fmt)
            .ok()
            .map(|n| Utc.from_utc_datetime(&n))
    } else {
        DateTime::parse_from_rfc3339(raw)
            .map(|d| d.with_timezone(&Utc))
            .ok()
            .or_else(|| {
                ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
                    .iter()
                    .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
                    .map(|n| Utc.from_utc_datetime(&n))
            })
    };
    parsed.map(|d| d.trunc_subsecs(0))
}

fn byte_offset(src: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in src.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(src.len());
        }
        offset += l.len() + 1;
    }
    src.len()
}

/// Parses a JSON export into turns, one per record, in input order.
pub fn parse_raw_log(bytes: &[u8], profile: &FormatProfile) -> Result<Vec<RawTurn>> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| Error::Json {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let records = if profile.records.is_empty() {
        Some(&doc)
    } else {
        doc.pointer(&profile.records)
    };
    let records = records.and_then(Value::as_array).ok_or_else(|| Error::Json {
        offset: 0,
        message: format!("expected an array of records at {:?}", profile.records),
    })?;

    records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let case_id = field(record, &profile.case_id)
                .and_then(scalar_string)
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| Error::Field {
                    case_id: format!("<record {i}>"),
                    field: profile.case_id.clone(),
                })?;
            let missing = |name: &str| Error::Field {
                case_id: case_id.clone(),
                field: name.to_string(),
            };
            let timestamp = field(record, &profile.timestamp)
                .and_then(|v| match v {
                    Value::Number(n) => n.as_i64().and_then(|s| Utc.timestamp_opt(s, 0).single()),
                    Value::String(s) => parse_timestamp(s, profile.timestamp_format.as_deref()),
                    _ => None,
                })
                .ok_or_else(|| missing(&profile.timestamp))?;
            let speaker = field(record, &profile.speaker)
                .and_then(Value::as_str)
                .and_then(|s| profile.speaker_of(s))
                .ok_or_else(|| missing(&profile.speaker))?;
            let text = field(record, &profile.text)
                .and_then(Value::as_str)
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(|| missing(&profile.text))?
                .to_string();
            Ok(RawTurn {
                case_id,
                timestamp,
                speaker,
                text,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> FormatProfile {
        FormatProfile {
            case_id: "id".into(),
            timestamp: "t".into(),
            speaker: "role".into(),
            ..FormatProfile::default()
        }
    }

    #[test]
    fn single_record_passthrough() {
        let doc = br#"[{"id":"c1","t":"2023-05-01T10:00:00Z","role":"student","text":"hi"}]"#;
        let turns = parse_raw_log(doc, &profile()).unwrap();
        assert_eq!(
            turns,
            vec![RawTurn {
                case_id: "c1".into(),
                timestamp: Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 0).unwrap(),
                speaker: Speaker::Student,
                text: "hi".into(),
            }]
        );
    }

    #[test]
    fn empty_array() {
        assert!(parse_raw_log(b"[]", &profile()).unwrap().is_empty());
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let doc = b"[\n  {\"id\": \"c1\",, }\n]";
        match parse_raw_log(doc, &profile()).unwrap_err() {
            Error::Json { offset, .. } => assert_eq!(doc[offset], b','),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_case_and_field() {
        let doc = br#"[{"id":"c9","t":"2023-05-01T10:00:00Z","role":"student"}]"#;
        match parse_raw_log(doc, &profile()).unwrap_err() {
            Error::Field { case_id, field } => {
                assert_eq!(case_id, "c9");
                assert_eq!(field, "text");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_records_and_pointer_fields() {
        let doc = br#"{"data":{"turns":[
            {"meta":{"session":17},"time":"2023-05-01 10:00:00.7","who":"assistant","msg":"What did you learn today?"},
            {"meta":{"session":17},"time":"2023-05-01 10:01:00","who":"user","msg":"Grammar."}]}}"#;
        let p = FormatProfile {
            records: "/data/turns".into(),
            case_id: "/meta/session".into(),
            timestamp: "time".into(),
            speaker: "who".into(),
            text: "msg".into(),
            ..FormatProfile::default()
        };
        let turns = parse_raw_log(doc, &p).unwrap();
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].case_id, "17");
        assert_eq!(turns[0].speaker, Speaker::Chatbot);
        assert_eq!(
            turns[0].timestamp,
            Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 0).unwrap()
        );
        assert_eq!(turns[1].speaker, Speaker::Student);
    }

    #[test]
    fn offsets_and_custom_timestamp_format() {
        let ts = parse_timestamp("2023-05-01T12:00:00+02:00", None).unwrap();
        assert_eq!(ts, Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 0).unwrap());
        let ts = parse_timestamp("01/05/2023 10:00", Some("%d/%m/%Y %H:%M")).unwrap();
        assert_eq!(ts, Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 0).unwrap());
        assert!(parse_timestamp("yesterday", None).is_none());
    }
}
