//! Pipeline steps shared by the individual subcommands and `run-all`, so
//! both paths produce the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use srlflow::agreement::{bootstrap_kappa_ci, cohen_kappa, confusion_map, join_label_sheets, BootstrapCI};
use srlflow::event_log::{
    filter_short_cases, finalize_analysis_log, parse_raw_log, segment_prompts, write_csv, CountBasis,
    EventLog, FinalizeReport, FormatProfile, LabelSheet, SegmentMap, Speaker,
};
use srlflow::mining::{directly_follows, discover, export_dot, export_matrix_csv, DetailSettings, Level, ProcessModel, TransitionMatrix};
use srlflow::schema::{load_schema, validate_labels, LabelReport, Schema, SchemaSource};
use srlflow::stats::{frequency_table, metacognitive_proportion, write_table_csv, StatsOptions, TableRow};
use srlflow::{Error, Result};

use crate::Format;

pub fn schema(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => load_schema(SchemaSource::Path(p), None),
        None => Ok(Schema::builtin()),
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_log(path: &Path) -> Result<EventLog> {
    let bytes = read_file(path)?;
    srlflow::event_log::read_csv(bytes.as_slice(), &path.display().to_string())
}

pub fn log_csv(log: &EventLog) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv(log, &mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable report");
    out.push(b'\n');
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Events,
    Turns,
}

pub struct IngestInput<'a> {
    pub input: &'a Path,
    pub profile: Option<&'a Path>,
    pub segments: Option<&'a Path>,
    pub labels: Option<&'a Path>,
    pub min_meaningful: usize,
    pub count_basis: Basis,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub raw_turns: usize,
    pub student_turns: usize,
    pub events: usize,
    pub labeled_events: usize,
    pub system_initiated: usize,
    pub non_srl: usize,
    pub cases_before_filter: usize,
    /// case_id -> reason
    pub removed_cases: BTreeMap<String, String>,
    pub cases: usize,
    pub events_after_filter: usize,
}

pub fn ingest(args: &IngestInput<'_>, schema: &Schema) -> Result<(EventLog, IngestReport)> {
    let profile = match args.profile {
        Some(p) => FormatProfile::load(p)?,
        None => FormatProfile::default(),
    };
    let turns = parse_raw_log(&read_file(args.input)?, &profile)?;
    let mut report = IngestReport {
        raw_turns: turns.len(),
        ..Default::default()
    };
    let students: Vec<_> = turns
        .into_iter()
        .filter(|t| t.speaker == Speaker::Student)
        .collect();
    report.student_turns = students.len();

    let segments = match args.segments {
        Some(p) => SegmentMap::load(p)?,
        None => SegmentMap::new(),
    };
    // order turns the way the log does so turn indices line up with segments
    let ordered = EventLog::from_turns(&students);
    let turns_in_order = ordered_turns(&students, &ordered);
    let segmented = segment_prompts(turns_in_order, &segments)?;
    let mut log = EventLog::from_turns(&segmented);

    if let Some(p) = args.labels {
        let sheet = LabelSheet::load(p)?;
        log = sheet.apply(&log, |c| schema.is_non_srl(c))?;
    }
    report.events = log.len();
    report.labeled_events = log.events().iter().filter(|e| e.action_code.is_some()).count();
    report.non_srl = log.events().iter().filter(|e| e.non_srl).count();
    report.system_initiated = log
        .events()
        .iter()
        .filter(|e| e.system_initiated && !e.non_srl)
        .count();
    report.cases_before_filter = log.cases().len();

    let basis = match args.count_basis {
        Basis::Events => CountBasis::Events,
        Basis::Turns => CountBasis::Turns(&segments),
    };
    let (kept, filter) = filter_short_cases(&log, args.min_meaningful, basis);
    report.removed_cases = filter.removed;
    report.cases = kept.cases().len();
    report.events_after_filter = kept.len();
    Ok((kept, report))
}

/// Student turns regrouped per case in timestamp order, matching `log`.
fn ordered_turns(
    students: &[srlflow::event_log::RawTurn],
    log: &EventLog,
) -> Vec<srlflow::event_log::RawTurn> {
    let mut by_case: BTreeMap<&str, Vec<&srlflow::event_log::RawTurn>> = BTreeMap::new();
    for t in students {
        by_case.entry(t.case_id.as_str()).or_default().push(t);
    }
    let mut out = Vec::with_capacity(students.len());
    for case in log.cases() {
        let mut turns = by_case.remove(case).unwrap_or_default();
        turns.sort_by_key(|t| t.timestamp);
        out.extend(turns.into_iter().cloned());
    }
    out
}

pub fn suggestions(log: &EventLog, schema: &Schema, format: Format) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Row<'a> {
        case_id: &'a str,
        seq: usize,
        text: &'a str,
        suggestion: String,
        score: f64,
        matched: String,
        alternatives: String,
    }
    let rows: Vec<Row<'_>> = log
        .events()
        .iter()
        .map(|e| {
            let s = schema.suggest_label(&e.text);
            let (suggestion, score, matched) = s.first().map_or((String::new(), 0.0, String::new()), |top| {
                (top.action_code.clone(), top.score, top.matched_patterns.join("|"))
            });
            let alternatives = s
                .iter()
                .skip(1)
                .map(|x| format!("{}:{}", x.action_code, x.score))
                .collect::<Vec<_>>()
                .join(";");
            Row {
                case_id: &e.case_id,
                seq: e.seq,
                text: &e.text,
                suggestion,
                score,
                matched,
                alternatives,
            }
        })
        .collect();
    match format {
        Format::Json => Ok(json_bytes(&rows)),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            for r in &rows {
                w.serialize(r)?;
            }
            if rows.is_empty() {
                w.write_record(["case_id", "seq", "text", "suggestion", "score", "matched", "alternatives"])?;
            }
            w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))
        }
    }
}

pub fn validation(log: &EventLog, schema: &Schema, format: Format) -> Result<(LabelReport, Vec<u8>)> {
    let report = validate_labels(log, schema);
    let bytes = match format {
        Format::Json => json_bytes(&report),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(["case_id", "seq", "kind", "detail"])?;
            for f in &report.findings {
                let (kind, detail) = match &f.kind {
                    srlflow::schema::FindingKind::Missing => ("missing", String::new()),
                    srlflow::schema::FindingKind::Unknown { code } => ("unknown", code.clone()),
                    srlflow::schema::FindingKind::Multiple { codes } => ("multiple", codes.join(";")),
                };
                w.write_record([f.case_id.as_str(), &f.seq.to_string(), kind, &detail])?;
            }
            w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?
        }
    };
    Ok((report, bytes))
}

#[derive(Clone, Debug, Serialize)]
pub struct AgreementReport {
    pub n_items: usize,
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub ci: BootstrapCI,
    pub labels: Vec<String>,
    pub confusion: BTreeMap<String, BTreeMap<String, u64>>,
}

pub fn agreement(a: &Path, b: &Path, replicates: usize, level: f64, seed: u64) -> Result<AgreementReport> {
    let pairs = join_label_sheets(&LabelSheet::load(a)?, &LabelSheet::load(b)?)?;
    let result = cohen_kappa(&pairs)?;
    let ci = bootstrap_kappa_ci(&pairs, replicates, level, seed)?;
    Ok(AgreementReport {
        n_items: result.n_items,
        kappa: result.kappa,
        p_observed: result.p_observed,
        p_expected: result.p_expected,
        confusion: confusion_map(&result),
        labels: result.labels,
        ci,
    })
}

pub fn agreement_bytes(report: &AgreementReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => Ok(json_bytes(report)),
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record([
                "n_items", "kappa", "p_observed", "p_expected", "ci_low", "ci_high", "level", "replicates", "seed",
            ])?;
            w.write_record([
                report.n_items.to_string(),
                report.kappa.to_string(),
                report.p_observed.to_string(),
                report.p_expected.to_string(),
                report.ci.low.to_string(),
                report.ci.high.to_string(),
                report.ci.level.to_string(),
                report.ci.replicates.to_string(),
                report.ci.seed.to_string(),
            ])?;
            w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))
        }
    }
}

/// Drops non-SRL and scaffolded events; every remaining label must be valid.
pub fn modeling_log(log: &EventLog, schema: &Schema) -> Result<(EventLog, FinalizeReport)> {
    let (out, report) = finalize_analysis_log(log)?;
    if let Some(bad) = out
        .events()
        .iter()
        .find(|e| !e.action_code.as_deref().is_some_and(|c| schema.contains(c)))
    {
        return Err(Error::UnknownCode(bad.action_code.clone().unwrap_or_default()));
    }
    Ok((out, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyReport {
    pub events: usize,
    pub learners: usize,
    pub sd_convention: String,
    pub metacognitive_pct: f64,
    pub cognitive_pct: f64,
    pub rows: Vec<TableRow>,
}

pub fn frequency(log: &EventLog, schema: &Schema, opts: &StatsOptions, sd_name: &str) -> Result<FrequencyReport> {
    let rows = frequency_table(log, schema, opts)?;
    let (meta, cog) = metacognitive_proportion(log, schema)?;
    let learners = {
        let mut l: Vec<&str> = log.cases().into_iter().map(|c| opts.learners.learner_of(c)).collect();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    Ok(FrequencyReport {
        events: log.len(),
        learners,
        sd_convention: sd_name.to_string(),
        metacognitive_pct: meta,
        cognitive_pct: cog,
        rows,
    })
}

pub fn frequency_bytes(report: &FrequencyReport, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => Ok(json_bytes(report)),
        Format::Csv => {
            let mut buf = Vec::new();
            write_table_csv(&report.rows, &mut buf)?;
            Ok(buf)
        }
    }
}

pub struct Mined {
    pub matrix: TransitionMatrix,
    pub model: ProcessModel,
}

pub fn mine(log: &EventLog, schema: &Schema, level: Level, settings: DetailSettings) -> Result<Mined> {
    let matrix = directly_follows(log, level, schema)?;
    let model = discover(&matrix, settings)?;
    Ok(Mined { matrix, model })
}

pub fn matrix_bytes(matrix: &TransitionMatrix, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => export_matrix_csv(matrix).into_bytes(),
        Format::Json => json_bytes(matrix),
    }
}

pub fn dot_bytes(model: &ProcessModel) -> Vec<u8> {
    export_dot(model).into_bytes()
}

pub fn report_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    json_bytes(value)
}
