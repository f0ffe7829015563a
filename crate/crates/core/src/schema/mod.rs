//! The regulation taxonomy (phases and actions) and the prompt dictionary
//! used to propose labels for student utterances.

mod matcher;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use matcher::{matcher_kinds, normalize, Matcher, MatcherKind};

use crate::error::{Error, Result};
use crate::event_log::EventLog;

const BUILTIN: &str = include_str!("builtin.toml");

/// Name used for the non-regulation bucket.
pub const NON_SRL: &str = "NonSRL";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Phase {
    pub name: String,
    pub order: u32,
}

/// The macro-level bucket an action belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MacroPhase {
    Phase(Phase),
    NonSrl,
}

impl MacroPhase {
    pub fn name(&self) -> &str {
        match self {
            MacroPhase::Phase(p) => &p.name,
            MacroPhase::NonSrl => NON_SRL,
        }
    }

    pub fn is_srl(&self) -> bool {
        matches!(self, MacroPhase::Phase(_))
    }
}

impl fmt::Display for MacroPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CogType {
    Cognitive,
    Metacognitive,
    NonSrl,
}

impl FromStr for CogType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cognitive" => Ok(CogType::Cognitive),
            "metacognitive" => Ok(CogType::Metacognitive),
            "non_srl" | "nonsrl" => Ok(CogType::NonSrl),
            other => Err(Error::Schema(format!("unknown action type {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Theoretical,
    Heuristic,
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theoretical" => Ok(Origin::Theoretical),
            "heuristic" => Ok(Origin::Heuristic),
            other => Err(Error::Schema(format!("unknown action origin {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionDef {
    pub code: String,
    pub phase: MacroPhase,
    pub label: String,
    pub cog_type: CogType,
    pub origin: Origin,
    pub description: String,
}

#[derive(Clone, Debug)]
pub struct DictionaryEntry {
    pub kind: String,
    pub pattern: String,
    pub action_code: String,
    pub weight: f64,
    pub note: String,
    matcher: Arc<dyn Matcher>,
}

impl DictionaryEntry {
    pub fn matches(&self, normalized: &str) -> bool {
        self.matcher.is_match(normalized)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelSuggestion {
    pub action_code: String,
    pub score: f64,
    pub matched_patterns: Vec<String>,
}

/// Where to load a schema from.
#[derive(Clone, Debug)]
pub enum SchemaSource<'a> {
    Builtin,
    Path(&'a Path),
    /// Inline TOML document.
    Toml(&'a str),
    /// Inline JSON document.
    Json(&'a str),
}

#[derive(Clone, Debug)]
pub struct Schema {
    phases: Vec<Phase>,
    actions: Vec<ActionDef>,
    index: HashMap<String, usize>,
    dictionary: Vec<DictionaryEntry>,
}

// On-disk layout.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    strict: Option<bool>,
    #[serde(default, rename = "phase")]
    phases: Vec<PhaseSpec>,
    #[serde(default, rename = "action")]
    actions: Vec<ActionSpec>,
    #[serde(default, rename = "pattern")]
    patterns: Vec<PatternSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseSpec {
    name: String,
    order: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSpec {
    code: String,
    phase: Option<String>,
    label: String,
    #[serde(rename = "type")]
    cog_type: String,
    origin: String,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternSpec {
    kind: String,
    text: String,
    action: String,
    weight: Option<f64>,
    #[serde(default)]
    note: String,
}

fn is_non_srl_phase(name: &str) -> bool {
    matches!(
        name.to_ascii_lowercase().as_str(),
        "nonsrl" | "non-srl" | "non_srl" | "-"
    )
}

/// Loads and validates a schema.
///
/// `strict` overrides the file's own `strict` flag; the builtin schema is
/// strict by default. Strict mode requires the standard four phases with
/// fifteen regulation actions and exactly one non-regulation action.
pub fn load_schema(source: SchemaSource<'_>, strict: Option<bool>) -> Result<Schema> {
    let (origin, file): (String, SchemaFile) = match source {
        SchemaSource::Builtin => (
            "builtin".into(),
            toml::from_str(BUILTIN).map_err(|e| Error::format("builtin", e))?,
        ),
        SchemaSource::Toml(text) => (
            "inline".into(),
            toml::from_str(text).map_err(|e| Error::format("inline", e))?,
        ),
        SchemaSource::Json(text) => (
            "inline".into(),
            serde_json::from_str(text).map_err(|e| Error::format("inline", e))?,
        ),
        SchemaSource::Path(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let name = path.display().to_string();
            let is_json = path
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
            let file = if is_json {
                serde_json::from_str(&text).map_err(|e| Error::format(&name, e))?
            } else {
                toml::from_str(&text).map_err(|e| Error::format(&name, e))?
            };
            (name, file)
        }
    };
    let strict = strict.or(file.strict).unwrap_or(false);
    Schema::from_file(file, strict).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{origin}: {msg}")),
        other => other,
    })
}

impl Schema {
    pub fn builtin() -> Schema {
        load_schema(SchemaSource::Builtin, None).expect("builtin schema is valid")
    }

    fn from_file(file: SchemaFile, strict: bool) -> Result<Schema> {
        let mut phases: Vec<Phase> = Vec::new();
        if file.phases.is_empty() {
            for action in &file.actions {
                if let Some(name) = &action.phase {
                    if !is_non_srl_phase(name) && !phases.iter().any(|p| &p.name == name) {
                        let order = phases.len() as u32 + 1;
                        phases.push(Phase {
                            name: name.clone(),
                            order,
                        });
                    }
                }
            }
        } else {
            for (i, entry) in file.phases.iter().enumerate() {
                if phases.iter().any(|p| p.name == entry.name) {
                    return Err(Error::Schema(format!("duplicate phase {:?}", entry.name)));
                }
                phases.push(Phase {
                    name: entry.name.clone(),
                    order: entry.order.unwrap_or(i as u32 + 1),
                });
            }
            let mut orders: Vec<u32> = phases.iter().map(|p| p.order).collect();
            orders.sort_unstable();
            if orders != (1..=phases.len() as u32).collect::<Vec<_>>() {
                return Err(Error::Schema(format!(
                    "phase orders must be a permutation of 1..{}",
                    phases.len()
                )));
            }
            phases.sort_by_key(|p| p.order);
        }

        let mut actions = Vec::with_capacity(file.actions.len());
        let mut index = HashMap::new();
        for entry in file.actions {
            if entry.code.trim().is_empty() {
                return Err(Error::Schema("action with empty code".into()));
            }
            if index.contains_key(&entry.code) {
                return Err(Error::Schema(format!("duplicate code {:?}", entry.code)));
            }
            let phase_name = entry
                .phase
                .as_deref()
                .ok_or_else(|| Error::Schema(format!("action {:?}: missing phase", entry.code)))?;
            let phase = if is_non_srl_phase(phase_name) {
                MacroPhase::NonSrl
            } else {
                let p = phases.iter().find(|p| p.name == phase_name).ok_or_else(|| {
                    Error::Schema(format!(
                        "action {:?}: unknown phase {phase_name:?}",
                        entry.code
                    ))
                })?;
                MacroPhase::Phase(p.clone())
            };
            let cog_type: CogType = entry.cog_type.parse()?;
            match &phase {
                MacroPhase::Phase(p) => {
                    let initial = p.name.chars().next().unwrap_or('?').to_ascii_uppercase();
                    if !entry.code.starts_with(&format!("{initial}.")) {
                        return Err(Error::Schema(format!(
                            "action {:?}: code must start with \"{initial}.\" for phase {}",
                            entry.code, p.name
                        )));
                    }
                    if cog_type == CogType::NonSrl {
                        return Err(Error::Schema(format!(
                            "action {:?}: non_srl type outside the non-SRL phase",
                            entry.code
                        )));
                    }
                }
                MacroPhase::NonSrl => {
                    if cog_type != CogType::NonSrl {
                        return Err(Error::Schema(format!(
                            "action {:?}: non-SRL phase requires type non_srl",
                            entry.code
                        )));
                    }
                }
            }
            index.insert(entry.code.clone(), actions.len());
            actions.push(ActionDef {
                code: entry.code,
                phase,
                label: entry.label,
                cog_type,
                origin: entry.origin.parse()?,
                description: entry.description,
            });
        }
        if actions.is_empty() {
            return Err(Error::Schema("no actions declared".into()));
        }

        let mut dictionary = Vec::with_capacity(file.patterns.len());
        for entry in file.patterns {
            if !index.contains_key(&entry.action) {
                return Err(Error::Schema(format!(
                    "pattern {:?}: unknown action {:?}",
                    entry.text, entry.action
                )));
            }
            let weight = entry.weight.unwrap_or(1.0);
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::Schema(format!(
                    "pattern {:?}: weight must be positive",
                    entry.text
                )));
            }
            let matcher: Arc<dyn Matcher> =
                Arc::from(matcher_kinds().get(&entry.kind)?.compile(&entry.text)?);
            dictionary.push(DictionaryEntry {
                kind: entry.kind,
                pattern: entry.text,
                action_code: entry.action,
                weight,
                note: entry.note,
                matcher,
            });
        }

        let schema = Schema {
            phases,
            actions,
            index,
            dictionary,
        };
        if strict {
            schema.check_strict()?;
        }
        Ok(schema)
    }

    fn check_strict(&self) -> Result<()> {
        const PHASES: [&str; 4] = ["Forethought", "Monitoring", "Control", "Reflection"];
        let names: Vec<&str> = self.phases.iter().map(|p| p.name.as_str()).collect();
        if names != PHASES {
            return Err(Error::Schema(format!(
                "strict mode expects phases {PHASES:?}, found {names:?}"
            )));
        }
        let srl = self.srl_actions().count();
        let non_srl = self.actions.len() - srl;
        if srl != 15 || non_srl != 1 {
            return Err(Error::Schema(format!(
                "strict mode expects 15 SRL actions and 1 non-SRL action, found {srl} and {non_srl}"
            )));
        }
        Ok(())
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// All actions in declaration order.
    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn srl_actions(&self) -> impl Iterator<Item = &ActionDef> {
        self.actions.iter().filter(|a| a.phase.is_srl())
    }

    pub fn dictionary(&self) -> &[DictionaryEntry] {
        &self.dictionary
    }

    pub fn action(&self, code: &str) -> Option<&ActionDef> {
        self.index.get(code).map(|&i| &self.actions[i])
    }

    /// Position of `code` in declaration order.
    pub fn position(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn contains(&self, code: &str) -> bool {
        self.index.contains_key(code)
    }

    pub fn is_non_srl(&self, code: &str) -> bool {
        self.action(code)
            .is_some_and(|a| a.phase == MacroPhase::NonSrl)
    }

    /// Codes of the non-regulation actions (normally just the acknowledgment code).
    pub fn non_srl_codes(&self) -> Vec<&str> {
        self.actions
            .iter()
            .filter(|a| !a.phase.is_srl())
            .map(|a| a.code.as_str())
            .collect()
    }

    pub fn macro_of(&self, code: &str) -> Result<MacroPhase> {
        self.action(code)
            .map(|a| a.phase.clone())
            .ok_or_else(|| Error::UnknownCode(code.to_string()))
    }

    /// Ranked label proposals for `text`; an empty result means the utterance
    /// needs manual labeling.
    pub fn suggest_label(&self, text: &str) -> Vec<LabelSuggestion> {
        let normalized = normalize(text);
        let mut scores: BTreeMap<&str, (f64, Vec<String>)> = BTreeMap::new();
        for entry in &self.dictionary {
            if entry.matches(&normalized) {
                let slot = scores.entry(&entry.action_code).or_insert((0.0, Vec::new()));
                slot.0 += entry.weight;
                slot.1.push(format!("{}:{}", entry.kind, entry.pattern));
            }
        }
        let mut out: Vec<LabelSuggestion> = scores
            .into_iter()
            .filter(|(_, (score, _))| *score > 0.0)
            .map(|(code, (score, matched_patterns))| LabelSuggestion {
                action_code: code.to_string(),
                score,
                matched_patterns,
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.action_code.cmp(&b.action_code))
        });
        out
    }
}

pub fn macro_of(code: &str, schema: &Schema) -> Result<MacroPhase> {
    schema.macro_of(code)
}

pub fn suggest_label(text: &str, schema: &Schema) -> Vec<LabelSuggestion> {
    schema.suggest_label(text)
}

/// Separators that indicate more than one code in a single label cell.
pub const MULTI_LABEL_SEPARATORS: [char; 2] = [';', '|'];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FindingKind {
    Missing,
    Unknown { code: String },
    Multiple { codes: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelFinding {
    pub case_id: String,
    pub seq: usize,
    #[serde(flatten)]
    pub kind: FindingKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelReport {
    pub findings: Vec<LabelFinding>,
}

impl LabelReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Reports events whose label is missing, unknown, or holds more than one code.
///
/// Events flagged non-SRL may be unlabeled.
pub fn validate_labels(log: &EventLog, schema: &Schema) -> LabelReport {
    let mut findings = Vec::new();
    for event in log.events() {
        let finding = match event.action_code.as_deref().map(str::trim) {
            None | Some("") => (!event.non_srl).then_some(FindingKind::Missing),
            Some(raw) => {
                let codes: Vec<String> = raw
                    .split(MULTI_LABEL_SEPARATORS)
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect();
                if codes.len() > 1 {
                    Some(FindingKind::Multiple { codes })
                } else if !schema.contains(raw) {
                    Some(FindingKind::Unknown {
                        code: raw.to_string(),
                    })
                } else {
                    None
                }
            }
        };
        if let Some(kind) = finding {
            findings.push(LabelFinding {
                case_id: event.case_id.clone(),
                seq: event.seq,
                kind,
            });
        }
    }
    LabelReport { findings }
}
