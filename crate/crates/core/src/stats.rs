//! Frequency tables over actions and phases.
//!
//! Per-learner measures (min, max, mean, SD) are taken over every learner in
//! the log, including learners who never performed the action.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use csv::{QuoteStyle, Terminator, WriterBuilder};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::registry::Registry;
use crate::schema::{CogType, Schema};

/// Standard deviation convention over per-learner counts.
pub trait Dispersion: Send + Sync {
    fn sd(&self, values: &[u64]) -> f64;
}

struct SampleSd;
struct PopulationSd;

fn mean_and_ss(values: &[u64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<u64>() as f64 / n;
    let ss = values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>();
    (mean, ss)
}

impl Dispersion for SampleSd {
    fn sd(&self, values: &[u64]) -> f64 {
        if values.len() < 2 {
            return 0.0;
        }
        let (_, ss) = mean_and_ss(values);
        (ss / (values.len() - 1) as f64).sqrt()
    }
}

impl Dispersion for PopulationSd {
    fn sd(&self, values: &[u64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        let (_, ss) = mean_and_ss(values);
        (ss / values.len() as f64).sqrt()
    }
}

pub const DEFAULT_DISPERSION: &str = "sample";

/// `sample` (divisor n−1) and `population` (divisor n).
pub fn dispersions() -> &'static Registry<dyn Dispersion> {
    static REG: OnceLock<Registry<dyn Dispersion>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<dyn Dispersion> = Registry::new("sd convention");
        reg.register("sample", Arc::new(SampleSd));
        reg.register("population", Arc::new(PopulationSd));
        reg
    })
}

/// Optional case → learner mapping; unmapped cases are their own learner.
#[derive(Clone, Debug, Default)]
pub struct LearnerMap {
    map: HashMap<String, String>,
}

impl LearnerMap {
    pub fn insert(&mut self, case_id: impl Into<String>, learner: impl Into<String>) {
        self.map.insert(case_id.into(), learner.into());
    }

    pub fn learner_of<'a>(&'a self, case_id: &'a str) -> &'a str {
        self.map.get(case_id).map_or(case_id, String::as_str)
    }

    /// CSV with header `case_id,learner_id`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut out = LearnerMap::default();
        for row in reader.records() {
            let row = row?;
            if row.len() < 2 {
                return Err(Error::format(
                    path.display().to_string(),
                    "expected case_id,learner_id",
                ));
            }
            out.insert(&row[0], &row[1]);
        }
        Ok(out)
    }
}

#[derive(Clone)]
pub struct StatsOptions {
    pub dispersion: Arc<dyn Dispersion>,
    pub learners: LearnerMap,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            dispersion: dispersions()
                .get(DEFAULT_DISPERSION)
                .expect("default registered"),
            learners: LearnerMap::default(),
        }
    }
}

impl StatsOptions {
    pub fn with_dispersion(name: &str) -> Result<Self> {
        Ok(Self {
            dispersion: dispersions().get(name)?,
            ..Self::default()
        })
    }
}

/// One row of the frequency table (an action or a phase).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyStats {
    pub key: String,
    pub n: u64,
    pub pct: f64,
    pub cf: u64,
    pub cf_pct: f64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub sd: f64,
}

pub type ActionStats = FrequencyStats;
pub type PhaseStats = FrequencyStats;

/// Per-learner occurrence counts keyed by activity.
struct Counts {
    learners: Vec<String>,
    /// activity -> count per learner (indexed like `learners`)
    by_key: HashMap<String, Vec<u64>>,
    total: u64,
}

fn count_per_learner(
    log: &EventLog,
    key_of: impl Fn(&str) -> Result<String> + Sync,
    opts: &StatsOptions,
) -> Result<Counts> {
    if log.is_empty() {
        return Err(Error::Empty("frequency table"));
    }
    let traces: Vec<_> = log.traces().collect();
    let partials: Vec<(String, HashMap<String, u64>)> = traces
        .par_iter()
        .map(|trace| {
            let learner = opts.learners.learner_of(&trace[0].case_id).to_string();
            let mut counts = HashMap::new();
            for e in trace.iter() {
                let code = e
                    .action_code
                    .as_deref()
                    .ok_or_else(|| Error::AnnotationIncomplete {
                        offenders: vec![e.key()],
                    })?;
                *counts.entry(key_of(code)?).or_insert(0u64) += 1;
            }
            Ok((learner, counts))
        })
        .collect::<Result<_>>()?;

    let mut per_learner: BTreeMap<String, HashMap<String, u64>> = BTreeMap::new();
    for (learner, counts) in partials {
        let slot = per_learner.entry(learner).or_default();
        for (k, v) in counts {
            *slot.entry(k).or_insert(0) += v;
        }
    }
    let learners: Vec<String> = per_learner.keys().cloned().collect();
    let mut by_key: HashMap<String, Vec<u64>> = HashMap::new();
    for (i, counts) in per_learner.values().enumerate() {
        for (k, &v) in counts {
            by_key.entry(k.clone()).or_insert_with(|| vec![0; learners.len()])[i] = v;
        }
    }
    Ok(Counts {
        learners,
        by_key,
        total: log.len() as u64,
    })
}

fn row(key: &str, counts: &Counts, dispersion: &dyn Dispersion) -> FrequencyStats {
    let zeros = vec![0u64; counts.learners.len()];
    let per = counts.by_key.get(key).unwrap_or(&zeros);
    let n: u64 = per.iter().sum();
    let cf = per.iter().filter(|&&v| v > 0).count() as u64;
    let learners = per.len() as f64;
    FrequencyStats {
        key: key.to_string(),
        n,
        pct: 100.0 * n as f64 / counts.total as f64,
        cf,
        cf_pct: 100.0 * cf as f64 / learners,
        min: per.iter().copied().min().unwrap_or(0),
        max: per.iter().copied().max().unwrap_or(0),
        mean: n as f64 / learners,
        sd: dispersion.sd(per),
    }
}

fn srl_code<'a>(schema: &'a Schema, code: &str) -> Result<&'a crate::schema::ActionDef> {
    let action = schema
        .action(code)
        .ok_or_else(|| Error::UnknownCode(code.to_string()))?;
    if !action.phase.is_srl() {
        return Err(Error::InvalidParameter(format!(
            "non-SRL code {code:?} in a modeling log"
        )));
    }
    Ok(action)
}

/// One row per SRL action of the schema, in schema order, zero rows included.
pub fn action_frequency_table(
    log: &EventLog,
    schema: &Schema,
    opts: &StatsOptions,
) -> Result<Vec<ActionStats>> {
    let counts = count_per_learner(
        log,
        |c| srl_code(schema, c).map(|a| a.code.clone()),
        opts,
    )?;
    Ok(schema
        .srl_actions()
        .map(|a| row(&a.code, &counts, opts.dispersion.as_ref()))
        .collect())
}

/// One row per phase, in phase order.
pub fn phase_frequency_table(
    log: &EventLog,
    schema: &Schema,
    opts: &StatsOptions,
) -> Result<Vec<PhaseStats>> {
    let counts = count_per_learner(
        log,
        |c| srl_code(schema, c).map(|a| a.phase.name().to_string()),
        opts,
    )?;
    Ok(schema
        .phases()
        .iter()
        .map(|p| row(&p.name, &counts, opts.dispersion.as_ref()))
        .collect())
}

/// Percentages of metacognitive and cognitive events.
pub fn metacognitive_proportion(log: &EventLog, schema: &Schema) -> Result<(f64, f64)> {
    let (mut meta, mut cog) = (0u64, 0u64);
    for e in log.events() {
        let code = e.action_code.as_deref().unwrap_or("");
        let action = schema
            .action(code)
            .ok_or_else(|| Error::UnknownCode(code.to_string()))?;
        match action.cog_type {
            CogType::Metacognitive => meta += 1,
            CogType::Cognitive => cog += 1,
            CogType::NonSrl => {}
        }
    }
    let total = meta + cog;
    if total == 0 {
        return Err(Error::Empty("metacognitive_proportion"));
    }
    let meta_pct = 100.0 * meta as f64 / total as f64;
    Ok((meta_pct, 100.0 * cog as f64 / total as f64))
}

/// A row of the combined table: a phase total followed by its actions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub phase: String,
    pub action: String,
    pub code: String,
    pub is_phase_total: bool,
    pub stats: FrequencyStats,
}

pub fn frequency_table(
    log: &EventLog,
    schema: &Schema,
    opts: &StatsOptions,
) -> Result<Vec<TableRow>> {
    let phases = phase_frequency_table(log, schema, opts)?;
    let actions = action_frequency_table(log, schema, opts)?;
    let mut rows = Vec::with_capacity(phases.len() + actions.len());
    for (phase, stats) in schema.phases().iter().zip(phases) {
        rows.push(TableRow {
            phase: phase.name.clone(),
            action: "Phase Total".into(),
            code: String::new(),
            is_phase_total: true,
            stats,
        });
        for (def, stats) in schema.srl_actions().zip(&actions) {
            if def.phase.name() == phase.name {
                rows.push(TableRow {
                    phase: phase.name.clone(),
                    action: def.label.clone(),
                    code: def.code.clone(),
                    is_phase_total: false,
                    stats: stats.clone(),
                });
            }
        }
    }
    Ok(rows)
}

/// Half-up rounding to two decimals for display.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    // absorb representation error such as 2.345 -> 234.49999999999997
    let nudged = scaled + scaled.abs() * 1e-12;
    (nudged + 0.5).floor() / 100.0
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

pub const TABLE_HEADER: [&str; 11] = [
    "phase", "action", "code", "n", "pct", "cf", "cf_pct", "min", "max", "mean", "sd",
];

pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = WriterBuilder::new()
        .quote_style(QuoteStyle::Necessary)
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        let s = &r.stats;
        w.write_record([
            r.phase.clone(),
            r.action.clone(),
            r.code.clone(),
            s.n.to_string(),
            fmt2(s.pct),
            s.cf.to_string(),
            fmt2(s.cf_pct),
            s.min.to_string(),
            s.max.to_string(),
            fmt2(s.mean),
            fmt2(s.sd),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
