//! Directly-follows matrices and frequency-filtered process models.
//!
//! Discovery keeps the most frequent activities, drops transitions below a
//! quantile of the positive edge counts, then re-adds the strongest dropped
//! edges until every node sits on a start-to-end path.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::agreement::percentile;
use crate::error::{Error, Result};
use crate::event_log::EventLog;
use crate::schema::{MacroPhase, Schema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Micro,
    Macro,
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Level::Micro),
            "macro" => Ok(Level::Macro),
            other => Err(Error::InvalidParameter(format!(
                "level must be micro or macro, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Micro => "micro",
            Level::Macro => "macro",
        })
    }
}

/// Square directly-follows count matrix with trace boundary counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionMatrix {
    activities: Vec<String>,
    /// row-major, `counts[from * n + to]`
    counts: Vec<u64>,
    start: Vec<u64>,
    end: Vec<u64>,
    freq: Vec<u64>,
}

impl TransitionMatrix {
    /// All-zero matrix over `activities`.
    pub fn new(activities: Vec<String>) -> Self {
        let n = activities.len();
        Self {
            activities,
            counts: vec![0; n * n],
            start: vec![0; n],
            end: vec![0; n],
            freq: vec![0; n],
        }
    }

    /// Counts traces given as activity indices.
    fn add_trace(&mut self, trace: &[usize]) {
        let (Some(&first), Some(&last)) = (trace.first(), trace.last()) else {
            return;
        };
        let n = self.activities.len();
        self.start[first] += 1;
        self.end[last] += 1;
        for &a in trace {
            self.freq[a] += 1;
        }
        for w in trace.windows(2) {
            self.counts[w[0] * n + w[1]] += 1;
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (dst, src) in [
            (&mut self.start, &other.start),
            (&mut self.end, &other.end),
            (&mut self.freq, &other.freq),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
        self
    }

    /// Builds a matrix from activity-name sequences, one per trace.
    pub fn from_sequences<S: AsRef<str> + Sync>(
        activities: Vec<String>,
        traces: &[Vec<S>],
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = activities
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let encoded: Vec<Vec<usize>> = traces
            .par_iter()
            .map(|t| {
                t.iter()
                    .map(|s| {
                        index
                            .get(s.as_ref())
                            .copied()
                            .ok_or_else(|| Error::UnknownCode(s.as_ref().to_string()))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_encoded(activities, &encoded))
    }

    fn from_encoded(activities: Vec<String>, traces: &[Vec<usize>]) -> Self {
        let empty = Self::new(activities);
        traces
            .par_iter()
            .fold(
                || empty.clone(),
                |mut m, t| {
                    m.add_trace(t);
                    m
                },
            )
            .reduce(|| empty.clone(), |a, b| a.merge(&b))
    }

    pub fn activities(&self) -> &[String] {
        &self.activities
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn index_of(&self, activity: &str) -> Option<usize> {
        self.activities.iter().position(|a| a == activity)
    }

    pub fn count(&self, from: usize, to: usize) -> u64 {
        self.counts[from * self.len() + to]
    }

    /// Count by activity name; 0 for unknown names.
    pub fn count_between(&self, from: &str, to: &str) -> u64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) => self.count(a, b),
            _ => 0,
        }
    }

    pub fn row(&self, from: usize) -> &[u64] {
        let n = self.len();
        &self.counts[from * n..(from + 1) * n]
    }

    pub fn start_counts(&self) -> &[u64] {
        &self.start
    }

    pub fn end_counts(&self) -> &[u64] {
        &self.end
    }

    pub fn activity_freq(&self) -> &[u64] {
        &self.freq
    }

    pub fn cases(&self) -> u64 {
        self.start.iter().sum()
    }

    pub fn total_transitions(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row and column sums agree with the boundary and frequency vectors.
    pub fn is_conserved(&self) -> bool {
        let n = self.len();
        let events: u64 = self.freq.iter().sum();
        (0..n).all(|a| {
            let row: u64 = self.row(a).iter().sum();
            let col: u64 = (0..n).map(|b| self.count(b, a)).sum();
            row + self.end[a] == self.freq[a] && col + self.start[a] == self.freq[a]
        }) && self.start.iter().sum::<u64>() == self.end.iter().sum::<u64>()
            && self.total_transitions() + self.cases() == events
    }

    /// Re-aggregates onto `targets` through `map` (e.g. action → phase).
    pub fn map_activities(
        &self,
        targets: Vec<String>,
        map: impl Fn(&str) -> Result<String>,
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = targets
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();
        let to: Vec<usize> = self
            .activities
            .iter()
            .map(|a| {
                let t = map(a)?;
                index
                    .get(t.as_str())
                    .copied()
                    .ok_or(Error::UnknownCode(t))
            })
            .collect::<Result<_>>()?;
        let mut out = Self::new(targets.clone());
        let m = targets.len();
        for (a, &ta) in to.iter().enumerate() {
            out.start[ta] += self.start[a];
            out.end[ta] += self.end[a];
            out.freq[ta] += self.freq[a];
            for (b, &tb) in to.iter().enumerate() {
                out.counts[ta * m + tb] += self.count(a, b);
            }
        }
        Ok(out)
    }
}

impl Serialize for TransitionMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct View<'a> {
            activities: &'a [String],
            counts: Vec<&'a [u64]>,
            start_counts: &'a [u64],
            end_counts: &'a [u64],
            activity_freq: &'a [u64],
        }
        View {
            activities: &self.activities,
            counts: (0..self.len()).map(|a| self.row(a)).collect(),
            start_counts: &self.start,
            end_counts: &self.end,
            activity_freq: &self.freq,
        }
        .serialize(s)
    }
}

/// Activity names at `level`: SRL codes in schema order, or phases in order.
pub fn level_activities(schema: &Schema, level: Level) -> Vec<String> {
    match level {
        Level::Micro => schema.srl_actions().map(|a| a.code.clone()).collect(),
        Level::Macro => schema.phases().iter().map(|p| p.name.clone()).collect(),
    }
}

fn activity_of(schema: &Schema, level: Level, code: &str) -> Result<String> {
    let action = schema
        .action(code)
        .ok_or_else(|| Error::UnknownCode(code.to_string()))?;
    match &action.phase {
        MacroPhase::NonSrl => Err(Error::InvalidParameter(format!(
            "non-SRL code {code:?} in a modeling log; finalize the log first"
        ))),
        MacroPhase::Phase(p) => Ok(match level {
            Level::Micro => action.code.clone(),
            Level::Macro => p.name.clone(),
        }),
    }
}

/// Counts adjacent same-case event pairs of a finalized log.
pub fn directly_follows(log: &EventLog, level: Level, schema: &Schema) -> Result<TransitionMatrix> {
    if log.is_empty() {
        return Err(Error::Empty("directly_follows"));
    }
    let activities = level_activities(schema, level);
    let index: HashMap<&str, usize> = activities
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();
    let traces: Vec<_> = log.traces().collect();
    let encoded: Vec<Vec<usize>> = traces
        .par_iter()
        .map(|t| {
            t.iter()
                .map(|e| {
                    let code = e.action_code.as_deref().ok_or_else(|| {
                        Error::AnnotationIncomplete {
                            offenders: vec![e.key()],
                        }
                    })?;
                    let name = activity_of(schema, level, code)?;
                    Ok(index[name.as_str()])
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(TransitionMatrix::from_encoded(activities, &encoded))
}

/// Fractions in `[0, 1]` of activities and paths to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetailSettings {
    pub activity_detail: f64,
    pub path_detail: f64,
}

impl DetailSettings {
    pub fn new(activity_detail: f64, path_detail: f64) -> Result<Self> {
        for (name, v) in [("activity_detail", activity_detail), ("path_detail", path_detail)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(Self {
            activity_detail,
            path_detail,
        })
    }
}

impl Default for DetailSettings {
    fn default() -> Self {
        Self {
            activity_detail: 1.0,
            path_detail: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub name: String,
    pub freq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryEdge {
    pub activity: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessModel {
    /// Matrix order.
    pub nodes: Vec<Node>,
    /// Sorted by `(from, to)`; includes repair edges.
    pub edges: Vec<Edge>,
    pub start_edges: Vec<BoundaryEdge>,
    pub end_edges: Vec<BoundaryEdge>,
    pub settings: DetailSettings,
    /// `(from, to)` of edges re-added for connectivity.
    pub repair_edges: BTreeSet<(String, String)>,
    /// Retained activities dropped because no start-to-end path through
    /// them survives the activity filter.
    pub detached: Vec<String>,
}

impl ProcessModel {
    pub fn is_repair(&self, edge: &Edge) -> bool {
        self.repair_edges
            .contains(&(edge.from.clone(), edge.to.clone()))
    }
}

fn reach(n: usize, seeds: &[bool], adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = seeds.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn ceil_count(fraction: f64, n: usize) -> usize {
    // tolerate float noise like 0.6 * 5 = 3.0000000000000004
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

pub fn discover(matrix: &TransitionMatrix, settings: DetailSettings) -> Result<ProcessModel> {
    let settings = DetailSettings::new(settings.activity_detail, settings.path_detail)?;
    let n = matrix.len();
    let acts = matrix.activities();
    let freq = matrix.activity_freq();

    let mut ranked: Vec<usize> = (0..n).filter(|&a| freq[a] > 0).collect();
    if ranked.is_empty() {
        return Err(Error::Empty("discover"));
    }
    ranked.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then_with(|| acts[a].cmp(&acts[b])));
    let keep_n = ceil_count(settings.activity_detail, ranked.len());
    let mut retained = vec![false; n];
    for &a in &ranked[..keep_n] {
        retained[a] = true;
    }

    // candidate edges between retained activities
    let mut kept = vec![false; n * n];
    let mut positive: Vec<f64> = Vec::new();
    for a in (0..n).filter(|&a| retained[a]) {
        for b in (0..n).filter(|&b| retained[b]) {
            let c = matrix.count(a, b);
            if c > 0 {
                positive.push(c as f64);
            }
        }
    }
    if !positive.is_empty() {
        positive.sort_by(f64::total_cmp);
        let threshold = percentile(&positive, 1.0 - settings.path_detail);
        for a in (0..n).filter(|&a| retained[a]) {
            for b in (0..n).filter(|&b| retained[b]) {
                let c = matrix.count(a, b);
                kept[a * n + b] = c > 0 && c as f64 >= threshold;
            }
        }
    }

    let is_start: Vec<bool> = (0..n)
        .map(|a| retained[a] && matrix.start_counts()[a] > 0)
        .collect();
    let is_end: Vec<bool> = (0..n)
        .map(|a| retained[a] && matrix.end_counts()[a] > 0)
        .collect();
    let adjacency = |kept: &[bool], reverse: bool| -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for a in 0..n {
            for b in 0..n {
                if kept[a * n + b] {
                    if reverse {
                        adj[b].push(a);
                    } else {
                        adj[a].push(b);
                    }
                }
            }
        }
        adj
    };

    let mut repairs = BTreeSet::new();
    // forward pass: connect unreachable nodes from the start side, then
    // backward pass: connect nodes that cannot reach an end
    for reverse in [false, true] {
        loop {
            let seeds = if reverse { &is_end } else { &is_start };
            let seen = reach(n, seeds, &adjacency(&kept, reverse));
            if (0..n).all(|a| !retained[a] || seen[a]) {
                break;
            }
            // strongest dropped edge crossing from the reached set outward
            let mut best: Option<(u64, usize, usize)> = None;
            for a in (0..n).filter(|&a| retained[a]) {
                for b in (0..n).filter(|&b| retained[b]) {
                    let (inside, outside) = if reverse { (b, a) } else { (a, b) };
                    let c = matrix.count(a, b);
                    if c == 0 || kept[a * n + b] || !seen[inside] || seen[outside] {
                        continue;
                    }
                    if best.is_none_or(|(bc, _, _)| c > bc) {
                        best = Some((c, a, b));
                    }
                }
            }
            let Some((_, a, b)) = best else { break };
            kept[a * n + b] = true;
            repairs.insert((acts[a].clone(), acts[b].clone()));
        }
    }

    let forward = reach(n, &is_start, &adjacency(&kept, false));
    let backward = reach(n, &is_end, &adjacency(&kept, true));
    let mut detached = Vec::new();
    for a in 0..n {
        if retained[a] && !(forward[a] && backward[a]) {
            retained[a] = false;
            detached.push(acts[a].clone());
        }
    }

    let nodes = (0..n)
        .filter(|&a| retained[a])
        .map(|a| Node {
            name: acts[a].clone(),
            freq: freq[a],
        })
        .collect();
    let mut edges: Vec<Edge> = Vec::new();
    for a in (0..n).filter(|&a| retained[a]) {
        for b in (0..n).filter(|&b| retained[b] && kept[a * n + b]) {
            edges.push(Edge {
                from: acts[a].clone(),
                to: acts[b].clone(),
                count: matrix.count(a, b),
            });
        }
    }
    edges.sort();
    repairs.retain(|(a, b)| edges.iter().any(|e| &e.from == a && &e.to == b));
    let boundary = |counts: &[u64]| -> Vec<BoundaryEdge> {
        (0..n)
            .filter(|&a| retained[a] && counts[a] > 0)
            .map(|a| BoundaryEdge {
                activity: acts[a].clone(),
                count: counts[a],
            })
            .collect()
    };
    Ok(ProcessModel {
        nodes,
        edges,
        start_edges: boundary(matrix.start_counts()),
        end_edges: boundary(matrix.end_counts()),
        settings,
        repair_edges: repairs,
        detached,
    })
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", escape(s))
}

/// Light gray for rare activities down to dark gray for the most frequent.
fn fill(freq: u64, max: u64) -> (String, &'static str) {
    let t = if max == 0 { 0.0 } else { freq as f64 / max as f64 };
    let v = (235.0 - t * (235.0 - 70.0)).round() as u8;
    let font = if v < 140 { "white" } else { "black" };
    (format!("#{v:02x}{v:02x}{v:02x}"), font)
}

fn penwidth(count: u64, max: u64) -> String {
    let w = if max == 0 {
        1.0
    } else {
        1.0 + 4.0 * count as f64 / max as f64
    };
    format!("{w:.2}")
}

const START: &str = "__start__";
const END: &str = "__end__";

/// Graphviz DOT text, byte-stable for a given model.
pub fn export_dot(model: &ProcessModel) -> String {
    let max_freq = model.nodes.iter().map(|n| n.freq).max().unwrap_or(0);
    let max_count = model
        .edges
        .iter()
        .map(|e| e.count)
        .chain(model.start_edges.iter().map(|e| e.count))
        .chain(model.end_edges.iter().map(|e| e.count))
        .max()
        .unwrap_or(0);

    let mut out = String::new();
    out.push_str("digraph process {\n");
    out.push_str("  rankdir=TB;\n");
    out.push_str("  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];\n");
    out.push_str("  edge [fontname=\"Helvetica\"];\n");
    let _ = writeln!(
        out,
        "  {} [label=\"start\", shape=circle, fillcolor=\"#2e8b57\", fontcolor=\"white\"];",
        quote(START)
    );
    let _ = writeln!(
        out,
        "  {} [label=\"end\", shape=doublecircle, fillcolor=\"#c0392b\", fontcolor=\"white\"];",
        quote(END)
    );

    let mut nodes: Vec<&Node> = model.nodes.iter().collect();
    nodes.sort_by(|a, b| a.name.cmp(&b.name));
    for node in nodes {
        let (color, font) = fill(node.freq, max_freq);
        let _ = writeln!(
            out,
            "  {} [label=\"{}\\n{}\", fillcolor=\"{color}\", fontcolor=\"{font}\"];",
            quote(&node.name),
            escape(&node.name),
            node.freq,
        );
    }

    let mut starts: Vec<&BoundaryEdge> = model.start_edges.iter().collect();
    starts.sort_by(|a, b| a.activity.cmp(&b.activity));
    for e in starts {
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\", penwidth={}, color=\"#2e8b57\"];",
            quote(START),
            quote(&e.activity),
            e.count,
            penwidth(e.count, max_count)
        );
    }
    for e in &model.edges {
        let style = if model.is_repair(e) { ", style=dashed" } else { "" };
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\", penwidth={}{style}];",
            quote(&e.from),
            quote(&e.to),
            e.count,
            penwidth(e.count, max_count)
        );
    }
    let mut ends: Vec<&BoundaryEdge> = model.end_edges.iter().collect();
    ends.sort_by(|a, b| a.activity.cmp(&b.activity));
    for e in ends {
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{}\", penwidth={}, color=\"#c0392b\"];",
            quote(&e.activity),
            quote(END),
            e.count,
            penwidth(e.count, max_count)
        );
    }
    out.push_str("}\n");
    out
}

/// Header `activity,N,<activities>`, one row per activity, then the
/// `__start__` and `__end__` rows (N = number of cases).
pub fn export_matrix_csv(matrix: &TransitionMatrix) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let header: Vec<&str> = ["activity", "N"]
        .into_iter()
        .chain(matrix.activities().iter().map(String::as_str))
        .collect();
    // writing to a Vec cannot fail
    w.write_record(&header).expect("in-memory write");
    if !matrix.is_empty() {
        for (a, name) in matrix.activities().iter().enumerate() {
            let rec: Vec<String> = [name.clone(), matrix.activity_freq()[a].to_string()]
                .into_iter()
                .chain(matrix.row(a).iter().map(u64::to_string))
                .collect();
            w.write_record(&rec).expect("in-memory write");
        }
        for (label, counts) in [(START, matrix.start_counts()), (END, matrix.end_counts())] {
            let rec: Vec<String> = [label.to_string(), matrix.cases().to_string()]
                .into_iter()
                .chain(counts.iter().map(u64::to_string))
                .collect();
            w.write_record(&rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn matrix(acts: &[&str], traces: &[&[&str]]) -> TransitionMatrix {
        let traces: Vec<Vec<&str>> = traces.iter().map(|t| t.to_vec()).collect();
        TransitionMatrix::from_sequences(names(acts), &traces).unwrap()
    }

    #[test]
    fn two_case_example() {
        // c1: A B A -> pairs AB, BA; c2: A A -> pair AA
        let m = matrix(&["A", "B"], &[&["A", "B", "A"], &["A", "A"]]);
        assert_eq!(m.count_between("A", "B"), 1);
        assert_eq!(m.count_between("B", "A"), 1);
        assert_eq!(m.count_between("A", "A"), 1);
        assert_eq!(m.count_between("B", "B"), 0);
        assert_eq!(m.start_counts(), &[2, 0]);
        assert_eq!(m.end_counts(), &[2, 0]);
        assert_eq!(m.activity_freq(), &[4, 1]);
        assert!(m.is_conserved());
        assert_eq!(
            export_matrix_csv(&m),
            "activity,N,A,B\nA,4,1,1\nB,1,1,0\n__start__,2,2,0\n__end__,2,2,0\n"
        );
    }

    #[test]
    fn empty_matrix_csv_is_header_only() {
        assert_eq!(export_matrix_csv(&TransitionMatrix::new(vec![])), "activity,N\n");
        assert!(discover(&TransitionMatrix::new(names(&["A"])), DetailSettings::default()).is_err());
    }

    #[test]
    fn full_detail_keeps_everything() {
        let m = matrix(&["A", "B", "C"], &[&["A", "B", "C"], &["A", "C"], &["B", "B"]]);
        let model = discover(&m, DetailSettings::default()).unwrap();
        assert_eq!(model.nodes.len(), 3);
        assert_eq!(model.edges.len(), 4);
        assert!(model.repair_edges.is_empty());
        assert!(model.detached.is_empty());
    }

    #[test]
    fn zero_path_detail_keeps_top_class_and_repairs() {
        // A->B 3, B->C 3, A->D 1, D->C 1; threshold = max = 3
        let m = matrix(
            &["A", "B", "C", "D"],
            &[&["A", "B", "C"], &["A", "B", "C"], &["A", "B", "C"], &["A", "D", "C"]],
        );
        let model = discover(&m, DetailSettings::new(1.0, 0.0).unwrap()).unwrap();
        let edges: Vec<(&str, &str, u64)> = model
            .edges
            .iter()
            .map(|e| (e.from.as_str(), e.to.as_str(), e.count))
            .collect();
        assert_eq!(edges, vec![("A", "B", 3), ("A", "D", 1), ("B", "C", 3), ("D", "C", 1)]);
        let repairs: Vec<_> = model.repair_edges.iter().cloned().collect();
        assert_eq!(repairs, vec![("A".into(), "D".into()), ("D".into(), "C".into())]);
    }

    #[test]
    fn activity_filter_detaches_orphans() {
        // keeping the top 2 of {A:3, B:2, C:1} leaves B reachable only via C
        let m = matrix(&["A", "B", "C"], &[&["A"], &["A"], &["A", "C", "B", "B"]]);
        let model = discover(&m, DetailSettings::new(0.6, 1.0).unwrap()).unwrap();
        assert_eq!(model.nodes, vec![Node { name: "A".into(), freq: 3 }]);
        assert_eq!(model.detached, vec!["B".to_string()]);
        assert!(model.edges.is_empty());
    }

    #[test]
    fn settings_validated() {
        assert!(DetailSettings::new(1.1, 0.5).is_err());
        assert!(DetailSettings::new(0.5, -0.1).is_err());
        assert_eq!("macro".parse::<Level>().unwrap(), Level::Macro);
        assert!("meso".parse::<Level>().is_err());
    }

    #[test]
    fn ceil_tolerates_float_noise() {
        assert_eq!(ceil_count(0.6, 5), 3);
        assert_eq!(ceil_count(0.61, 5), 4);
        assert_eq!(ceil_count(0.0, 5), 0);
        assert_eq!(ceil_count(1.0, 5), 5);
    }

    #[test]
    fn empty_model_dot() {
        let model = ProcessModel {
            nodes: vec![],
            edges: vec![],
            start_edges: vec![],
            end_edges: vec![],
            settings: DetailSettings::default(),
            repair_edges: BTreeSet::new(),
            detached: vec![],
        };
        let dot = export_dot(&model);
        assert!(dot.contains("\"__start__\" [label=\"start\""));
        assert!(dot.contains("\"__end__\" [label=\"end\""));
        assert!(!dot.contains("->"));
    }

    #[test]
    fn dot_labels_and_widths() {
        let m = matrix(&["A", "B"], &[&["A", "B"], &["A", "B"], &["A"]]);
        let dot = export_dot(&discover(&m, DetailSettings::default()).unwrap());
        assert!(dot.contains("\"A\" [label=\"A\\n3\", fillcolor=\"#464646\""));
        // max count 3 (start edge to A): 1 + 4*2/3
        assert!(dot.contains("\"A\" -> \"B\" [label=\"2\", penwidth=3.67];"));
        assert!(dot.contains("\"__start__\" -> \"A\" [label=\"3\", penwidth=5.00"));
    }

    fn pair_oracle(acts: &[String], traces: &[Vec<String>]) -> Vec<Vec<u64>> {
        let mut m = vec![vec![0u64; acts.len()]; acts.len()];
        for t in traces {
            for i in 1..t.len() {
                let a = acts.iter().position(|x| *x == t[i - 1]).unwrap();
                let b = acts.iter().position(|x| *x == t[i]).unwrap();
                m[a][b] += 1;
            }
        }
        m
    }

    fn arb_log() -> impl Strategy<Value = (Vec<String>, Vec<Vec<String>>)> {
        (1usize..=8).prop_flat_map(|k| {
            let acts: Vec<String> = (0..k).map(|i| format!("a{i}")).collect();
            let traces = proptest::collection::vec(
                proptest::collection::vec(0..k, 1..15),
                1..20,
            );
            (Just(acts), traces).prop_map(|(acts, traces)| {
                let t = traces
                    .into_iter()
                    .map(|t| t.into_iter().map(|i| acts[i].clone()).collect())
                    .collect();
                (acts, t)
            })
        })
    }

    proptest! {
        #[test]
        fn matches_pair_oracle((acts, traces) in arb_log()) {
            let m = TransitionMatrix::from_sequences(acts.clone(), &traces).unwrap();
            prop_assert!(m.is_conserved());
            let oracle = pair_oracle(&acts, &traces);
            for (a, row) in oracle.iter().enumerate() {
                prop_assert_eq!(m.row(a), row.as_slice());
            }
        }

        #[test]
        fn path_detail_is_monotone((acts, traces) in arb_log(), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let m = TransitionMatrix::from_sequences(acts, &traces).unwrap();
            let small = discover(&m, DetailSettings::new(1.0, lo).unwrap()).unwrap();
            let large = discover(&m, DetailSettings::new(1.0, hi).unwrap()).unwrap();
            for e in small.edges.iter().filter(|e| !small.is_repair(e)) {
                prop_assert!(large.edges.contains(e), "{:?} lost at {}", e, hi);
            }
        }

        #[test]
        fn model_invariants((acts, traces) in arb_log(), ad in 0.0f64..=1.0, pd in 0.0f64..=1.0) {
            let m = TransitionMatrix::from_sequences(acts, &traces).unwrap();
            let model = discover(&m, DetailSettings::new(ad, pd).unwrap()).unwrap();
            let names: BTreeSet<&str> = model.nodes.iter().map(|n| n.name.as_str()).collect();
            for e in &model.edges {
                prop_assert!(names.contains(e.from.as_str()) && names.contains(e.to.as_str()));
                prop_assert_eq!(e.count, m.count_between(&e.from, &e.to));
            }
            // every node on a start -> ... -> end path
            let mut fwd: BTreeSet<&str> = model.start_edges.iter().map(|e| e.activity.as_str()).collect();
            let mut bwd: BTreeSet<&str> = model.end_edges.iter().map(|e| e.activity.as_str()).collect();
            for _ in 0..names.len() {
                for e in &model.edges {
                    if fwd.contains(e.from.as_str()) { fwd.insert(&e.to); }
                    if bwd.contains(e.to.as_str()) { bwd.insert(&e.from); }
                }
            }
            for n in &names {
                prop_assert!(fwd.contains(n) && bwd.contains(n), "{} disconnected", n);
            }
            prop_assert_eq!(export_dot(&model), export_dot(&model.clone()));
        }
    }
}
