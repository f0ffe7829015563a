use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

use super::RawTurn;

/// Human-supplied split points: `(case_id, turn index) -> char offsets`.
///
/// The turn index counts the case's turns, 0-based, in the order they are
/// passed to [`segment_prompts`] (the CLI passes student turns only).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SegmentMap {
    splits: BTreeMap<(String, usize), Vec<usize>>,
}

impl SegmentMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, case_id: impl Into<String>, turn: usize, offsets: Vec<usize>) {
        self.splits.insert((case_id.into(), turn), offsets);
    }

    pub fn get(&self, case_id: &str, turn: usize) -> Option<&[usize]> {
        self.splits
            .get(&(case_id.to_string(), turn))
            .map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    /// Number of segments turn `turn` of `case_id` is split into.
    pub fn segment_count(&self, case_id: &str, turn: usize) -> usize {
        self.get(case_id, turn).map_or(1, |o| o.len() + 1)
    }

    /// Reads the sidecar CSV: header `case_id,turn_index,offsets`, offsets `;`-separated.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let mut reader = csv::Reader::from_path(path)?;
        let mut map = SegmentMap::new();
        for (line, row) in reader.records().enumerate() {
            let row = row?;
            let bad = |what: &str| Error::format(&name, format!("row {}: {what}", line + 2));
            let case_id = row.get(0).ok_or_else(|| bad("missing case_id"))?;
            let turn: usize = row
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("invalid turn_index"))?;
            let offsets = row
                .get(2)
                .ok_or_else(|| bad("missing offsets"))?
                .split(';')
                .map(|s| s.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("invalid offsets"))?;
            map.insert(case_id, turn, offsets);
        }
        Ok(map)
    }
}

/// Splits mapped turns at the given character offsets.
///
/// Segments inherit the original timestamp; unmapped turns pass through.
pub fn segment_prompts(turns: Vec<RawTurn>, boundaries: &SegmentMap) -> Result<Vec<RawTurn>> {
    if boundaries.is_empty() {
        return Ok(turns);
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut used = 0usize;
    let mut out = Vec::with_capacity(turns.len());
    for turn in turns {
        let idx = seen.entry(turn.case_id.clone()).or_insert(0);
        let turn_index = *idx;
        *idx += 1;
        let Some(offsets) = boundaries.get(&turn.case_id, turn_index) else {
            out.push(turn);
            continue;
        };
        used += 1;
        let err = |message: String| Error::Segmentation {
            case_id: turn.case_id.clone(),
            turn: turn_index,
            message,
        };
        // char offset -> byte offset, with the end of text appended
        let mut byte_at: Vec<usize> = turn.text.char_indices().map(|(b, _)| b).collect();
        let char_len = byte_at.len();
        byte_at.push(turn.text.len());
        let mut prev = 0usize;
        let mut cuts = Vec::with_capacity(offsets.len() + 1);
        for &off in offsets {
            if off == 0 || off >= char_len {
                return Err(err(format!(
                    "offset {off} out of range (text has {char_len} chars)"
                )));
            }
            if off <= prev {
                return Err(err("offsets must be strictly increasing".into()));
            }
            cuts.push(off);
            prev = off;
        }
        cuts.push(char_len);
        let mut start = 0;
        for cut in cuts {
            let piece = &turn.text[byte_at[start]..byte_at[cut]];
            if piece.trim().is_empty() {
                return Err(err(format!("segment ending at {cut} is blank")));
            }
            out.push(RawTurn {
                text: piece.to_string(),
                ..turn.clone()
            });
            start = cut;
        }
    }
    let total: usize = boundaries.splits.len();
    if used != total {
        let missing = boundaries
            .splits
            .keys()
            .find(|(case, turn)| seen.get(case).is_none_or(|&n| *turn >= n))
            .cloned()
            .unwrap_or_default();
        return Err(Error::Segmentation {
            case_id: missing.0,
            turn: missing.1,
            message: "no such turn".into(),
        });
    }
    Ok(out)
}
