use std::io::Cursor;

use proptest::prelude::*;
use srlflow::event_log::{filter_short_cases, finalize_analysis_log, read_csv, write_csv, CountBasis, EventLog};
use srlflow::mining::{directly_follows, level_activities, Level};
use srlflow::schema::Schema;
use srlflow::stats::{action_frequency_table, phase_frequency_table, StatsOptions};

fn csv_log(traces: &[Vec<&str>]) -> EventLog {
    let mut text = String::from("case_id,seq,timestamp,speaker,text,action_code,system_initiated,non_srl\n");
    for (c, trace) in traces.iter().enumerate() {
        for (i, code) in trace.iter().enumerate() {
            let flag = *code == "N/A";
            text.push_str(&format!(
                "c{c},{i},2024-01-01T00:{:02}:{:02}Z,student,prompt {i},{code},false,{flag}\n",
                i / 60,
                i % 60
            ));
        }
    }
    read_csv(Cursor::new(text), "<test>").unwrap()
}

fn arb_traces() -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec(proptest::collection::vec(0usize..16, 1..20), 1..12)
}

proptest! {
    #[test]
    fn macro_equals_mapped_micro(raw in arb_traces()) {
        let schema = Schema::builtin();
        let codes: Vec<&str> = schema.actions().iter().map(|a| a.code.as_str()).collect();
        let traces: Vec<Vec<&str>> = raw.iter().map(|t| t.iter().map(|&i| codes[i]).collect()).collect();
        let (log, _) = finalize_analysis_log(&csv_log(&traces)).unwrap();
        prop_assume!(!log.is_empty());
        let micro = directly_follows(&log, Level::Micro, &schema).unwrap();
        let macro_ = directly_follows(&log, Level::Macro, &schema).unwrap();
        let mapped = micro
            .map_activities(level_activities(&schema, Level::Macro), |c| {
                Ok(schema.macro_of(c)?.name().to_string())
            })
            .unwrap();
        prop_assert_eq!(&mapped, &macro_);
        prop_assert!(micro.is_conserved() && macro_.is_conserved());
        prop_assert_eq!(micro.cases() as usize, log.cases().len());

        // phase totals are the sums of their actions
        let opts = StatsOptions::default();
        let actions = action_frequency_table(&log, &schema, &opts).unwrap();
        let phases = phase_frequency_table(&log, &schema, &opts).unwrap();
        for (p, phase) in schema.phases().iter().zip(&phases) {
            let sum: u64 = schema
                .srl_actions()
                .zip(&actions)
                .filter(|(a, _)| a.phase.name() == p.name)
                .map(|(_, r)| r.n)
                .sum();
            prop_assert_eq!(sum, phase.n);
            prop_assert_eq!(phase.n, macro_.activity_freq()[macro_.index_of(&p.name).unwrap()]);
        }
    }

    #[test]
    fn csv_round_trip_and_filter_idempotence(raw in arb_traces(), min in 0usize..8) {
        let schema = Schema::builtin();
        let codes: Vec<&str> = schema.actions().iter().map(|a| a.code.as_str()).collect();
        let traces: Vec<Vec<&str>> = raw.iter().map(|t| t.iter().map(|&i| codes[i]).collect()).collect();
        let log = csv_log(&traces);
        let mut buf = Vec::new();
        write_csv(&log, &mut buf).unwrap();
        prop_assert_eq!(&read_csv(Cursor::new(buf), "<rt>").unwrap(), &log);

        let (once, _) = filter_short_cases(&log, min, CountBasis::Events);
        let (twice, report) = filter_short_cases(&once, min, CountBasis::Events);
        prop_assert_eq!(&once, &twice);
        prop_assert!(report.removed.is_empty());
    }
}

#[test]
fn empty_log_is_an_error() {
    let schema = Schema::builtin();
    assert_eq!(
        directly_follows(&EventLog::empty(), Level::Micro, &schema).unwrap_err().code(),
        "empty"
    );
}

#[test]
fn unfinalized_log_is_rejected() {
    let schema = Schema::builtin();
    let log = csv_log(&[vec!["F.SG", "N/A"]]);
    assert!(directly_follows(&log, Level::Macro, &schema).is_err());
}
