use std::io::{Read, Write};

use csv::{QuoteStyle, ReaderBuilder, Terminator, WriterBuilder};

use crate::error::{Error, Result};

use super::{parse_timestamp, Event, EventLog, Speaker};

pub const CSV_HEADER: [&str; 8] = [
    "case_id",
    "seq",
    "timestamp",
    "speaker",
    "text",
    "action_code",
    "system_initiated",
    "non_srl",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Writes the log as RFC 4180 CSV with LF line endings.
pub fn write_csv<W: Write>(log: &EventLog, out: W) -> Result<()> {
    let mut w = WriterBuilder::new()
        .quote_style(QuoteStyle::Necessary)
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for e in log.events() {
        let seq = e.seq.to_string();
        let ts = e.timestamp.format(TIMESTAMP_FORMAT).to_string();
        w.write_record([
            e.case_id.as_str(),
            seq.as_str(),
            ts.as_str(),
            Speaker::Student.as_str(),
            e.text.as_str(),
            e.action_code.as_deref().unwrap_or(""),
            bool_str(e.system_initiated),
            bool_str(e.non_srl),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads a log written by [`write_csv`]; `source` names the input in errors.
pub fn read_csv<R: Read>(input: R, source: &str) -> Result<EventLog> {
    let mut r = ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::format(
            source,
            format!("expected header {}, found {}", CSV_HEADER.join(","), header.join(",")),
        ));
    }
    let mut events = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |col: &str| Error::format(source, format!("line {line}: invalid {col}"));
        let speaker = &row[3];
        if speaker != Speaker::Student.as_str() {
            return Err(bad("speaker"));
        }
        let code = row[5].trim();
        events.push(Event {
            case_id: row[0].to_string(),
            seq: row[1].trim().parse().map_err(|_| bad("seq"))?,
            timestamp: parse_timestamp(&row[2], None).ok_or_else(|| bad("timestamp"))?,
            text: row[4].to_string(),
            action_code: (!code.is_empty()).then(|| code.to_string()),
            system_initiated: parse_bool(&row[6]).ok_or_else(|| bad("system_initiated"))?,
            non_srl: parse_bool(&row[7]).ok_or_else(|| bad("non_srl"))?,
        });
    }
    EventLog::from_events(events).map_err(|e| Error::format(source, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    #[test]
    fn golden_bytes() {
        let log = EventLog::from_events(vec![
            Event {
                case_id: "c1".into(),
                seq: 0,
                timestamp: Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 0).unwrap(),
                text: "Hello, \"bot\"\nline two".into(),
                action_code: Some("N/A".into()),
                system_initiated: false,
                non_srl: true,
            },
            Event {
                case_id: "c1".into(),
                seq: 1,
                timestamp: Utc.with_ymd_and_hms(2023, 5, 1, 10, 0, 5).unwrap(),
                text: "plain".into(),
                action_code: None,
                system_initiated: true,
                non_srl: false,
            },
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        let expected = "case_id,seq,timestamp,speaker,text,action_code,system_initiated,non_srl\n\
c1,0,2023-05-01T10:00:00Z,student,\"Hello, \"\"bot\"\"\nline two\",N/A,false,true\n\
c1,1,2023-05-01T10:00:05Z,student,plain,,true,false\n";
        assert_eq!(String::from_utf8(buf).unwrap(), expected);
    }

    #[test]
    fn header_mismatch_is_reported() {
        let err = read_csv("a,b\n1,2\n".as_bytes(), "x.csv").unwrap_err();
        assert_eq!(err.code(), "format");
    }

    fn arb_event_log() -> impl Strategy<Value = EventLog> {
        let text = "[ -~é\n\r\",]{1,30}";
        let code = proptest::option::of("[A-Z]\\.[A-Z]{2}(\\([A-Z]\\))?");
        proptest::collection::vec(
            proptest::collection::vec((text, code, any::<bool>(), any::<bool>(), 0u32..5), 1..6),
            0..4,
        )
        .prop_map(|cases| {
            let mut events = Vec::new();
            for (c, rows) in cases.into_iter().enumerate() {
                let mut ts = Utc.with_ymd_and_hms(2023, 5, 1, 9, 0, 0).unwrap();
                for (seq, (text, code, sys, non, gap)) in rows.into_iter().enumerate() {
                    ts += chrono::Duration::seconds(gap as i64);
                    events.push(Event {
                        case_id: format!("case,{c}"),
                        seq,
                        timestamp: ts,
                        text,
                        action_code: code,
                        system_initiated: sys,
                        non_srl: non,
                    });
                }
            }
            EventLog::from_events(events).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(log in arb_event_log()) {
            let mut buf = Vec::new();
            write_csv(&log, &mut buf).unwrap();
            let back = read_csv(buf.as_slice(), "mem").unwrap();
            prop_assert_eq!(back, log);
        }
    }
}
