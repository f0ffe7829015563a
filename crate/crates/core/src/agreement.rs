//! Inter-annotator agreement: Cohen's kappa with percentile bootstrap
//! confidence intervals.
//!
//! # Resampling RNG
//!
//! Replicate `r` draws from a ChaCha8 stream seeded with
//! `ChaCha8Rng::seed_from_u64(seed)` and switched to stream `r`
//! (`set_stream(r)`). A resample index is the high 64 bits of
//! `next_u64() * n`. Replicates therefore do not depend on each other and
//! can run in any order or in parallel with identical results. A resample
//! with degenerate marginals (expected agreement 1, observed below 1) is
//! redrawn from the same stream and counted in `redraws`. For two-annotator
//! nominal data expected agreement 1 forces observed agreement 1, so the
//! counter stays at zero unless the tally invariants are broken.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::event_log::{parse_label, LabelSheet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPair {
    pub case_id: String,
    pub seq: usize,
    pub label_a: String,
    pub label_b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgreementResult {
    pub kappa: f64,
    pub p_observed: f64,
    pub p_expected: f64,
    pub n_items: usize,
    /// Sorted label set indexing both axes of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[i][j]`: items labeled `labels[i]` by A and `labels[j]` by B.
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BootstrapCI {
    pub replicates: usize,
    pub level: f64,
    pub low: f64,
    pub high: f64,
    pub seed: u64,
    /// Resamples discarded for degenerate marginals and drawn again.
    pub redraws: u64,
}

/// Label pairs encoded as dense indices into a shared label table.
struct Encoded {
    k: usize,
    a: Vec<usize>,
    b: Vec<usize>,
}

impl Encoded {
    fn new(pairs: &[LabelPair]) -> (Vec<String>, Self) {
        let labels: Vec<String> = pairs
            .iter()
            .flat_map(|p| [p.label_a.clone(), p.label_b.clone()])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let idx = |l: &String| labels.binary_search(l).expect("label present");
        let a = pairs.iter().map(|p| idx(&p.label_a)).collect();
        let b = pairs.iter().map(|p| idx(&p.label_b)).collect();
        let k = labels.len();
        (labels, Encoded { k, a, b })
    }
}

/// Integer sufficient statistics: n, matches, and sum over labels of the
/// product of the two annotators' marginal counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Tally {
    n: u128,
    matches: u128,
    marginal_product: u128,
}

impl Tally {
    fn from_indices(k: usize, items: impl Iterator<Item = (usize, usize)>) -> Tally {
        let mut ca = vec![0u128; k];
        let mut cb = vec![0u128; k];
        let (mut n, mut matches) = (0u128, 0u128);
        for (a, b) in items {
            n += 1;
            ca[a] += 1;
            cb[b] += 1;
            if a == b {
                matches += 1;
            }
        }
        let marginal_product = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
        Tally {
            n,
            matches,
            marginal_product,
        }
    }

    fn p_observed(&self) -> f64 {
        self.matches as f64 / self.n as f64
    }

    fn p_expected(&self) -> f64 {
        self.marginal_product as f64 / (self.n * self.n) as f64
    }

    /// (n·matches − S) / (n² − S), one rounding step, symmetric in A and B.
    fn kappa(&self) -> Result<f64> {
        let nn = self.n * self.n;
        if self.marginal_product == nn {
            if self.matches == self.n {
                return Ok(1.0);
            }
            return Err(Error::DegenerateMarginals {
                p_observed: self.p_observed(),
            });
        }
        let num = (self.n * self.matches) as f64 - self.marginal_product as f64;
        let den = (nn - self.marginal_product) as f64;
        Ok(num / den)
    }
}

pub fn cohen_kappa(pairs: &[LabelPair]) -> Result<AgreementResult> {
    if pairs.is_empty() {
        return Err(Error::Empty("cohen_kappa"));
    }
    let (labels, enc) = Encoded::new(pairs);
    let tally = Tally::from_indices(enc.k, enc.a.iter().copied().zip(enc.b.iter().copied()));
    let mut confusion = vec![vec![0u64; enc.k]; enc.k];
    for (&a, &b) in enc.a.iter().zip(&enc.b) {
        confusion[a][b] += 1;
    }
    Ok(AgreementResult {
        kappa: tally.kappa()?,
        p_observed: tally.p_observed(),
        p_expected: tally.p_expected(),
        n_items: pairs.len(),
        labels,
        confusion,
    })
}

/// Index in `0..n` from one 64-bit draw (multiply-high).
#[inline]
pub fn draw_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Stream for replicate `replicate` under `seed`.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Attempts before a replicate gives up on finding a non-degenerate resample.
const MAX_REDRAWS_PER_REPLICATE: u64 = 100_000;

pub fn bootstrap_kappa_ci(
    pairs: &[LabelPair],
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapCI> {
    if pairs.is_empty() {
        return Err(Error::Empty("bootstrap_kappa_ci"));
    }
    if replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    // surfaces the degenerate-marginals error for the full sample
    cohen_kappa(pairs)?;
    let (_, enc) = Encoded::new(pairs);
    let n = pairs.len();

    let results: Vec<(f64, u64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let mut redraws = 0u64;
            loop {
                let idx: Vec<usize> = (0..n).map(|_| draw_index(&mut rng, n)).collect();
                let tally = Tally::from_indices(enc.k, idx.iter().map(|&i| (enc.a[i], enc.b[i])));
                match tally.kappa() {
                    Ok(k) => return Ok((k, redraws)),
                    Err(_) if redraws < MAX_REDRAWS_PER_REPLICATE => redraws += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect::<Result<_>>()?;

    let redraws = results.iter().map(|&(_, r)| r).sum();
    let mut kappas: Vec<f64> = results.into_iter().map(|(k, _)| k).collect();
    kappas.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCI {
        replicates,
        level,
        low: percentile(&kappas, alpha),
        high: percentile(&kappas, 1.0 - alpha),
        seed,
        redraws,
    })
}

/// Joins two annotators' sheets on `(case_id, seq)`.
///
/// Scaffolding marks are stripped so only the codes are compared. Keys
/// present in only one sheet, and keys labeled more than once, are errors.
pub fn join_label_sheets(a: &LabelSheet, b: &LabelSheet) -> Result<Vec<LabelPair>> {
    let single = |labels: &[String], key: &(String, usize)| -> Result<String> {
        match labels {
            [one] => Ok(parse_label(one).code.unwrap_or_default()),
            _ => Err(Error::InvalidParameter(format!(
                "{}#{} carries {} labels",
                key.0,
                key.1,
                labels.len()
            ))),
        }
    };
    let mut unmatched = Vec::new();
    let mut pairs = Vec::with_capacity(a.len());
    for (key, labels_a) in a.iter() {
        match b.get(&key.0, key.1) {
            Some(labels_b) => pairs.push(LabelPair {
                case_id: key.0.clone(),
                seq: key.1,
                label_a: single(labels_a, key)?,
                label_b: single(labels_b, key)?,
            }),
            None => unmatched.push(format!("{}#{}", key.0, key.1)),
        }
    }
    for (key, _) in b.iter() {
        if a.get(&key.0, key.1).is_none() {
            unmatched.push(format!("{}#{}", key.0, key.1));
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedKeys { keys: unmatched });
    }
    Ok(pairs)
}

/// Confusion matrix as nested maps, for reports.
pub fn confusion_map(result: &AgreementResult) -> BTreeMap<String, BTreeMap<String, u64>> {
    result
        .labels
        .iter()
        .enumerate()
        .map(|(i, la)| {
            let row = result
                .labels
                .iter()
                .enumerate()
                .filter(|&(j, _)| result.confusion[i][j] > 0)
                .map(|(j, lb)| (lb.clone(), result.confusion[i][j]))
                .collect();
            (la.clone(), row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn pairs(a: &[&str], b: &[&str]) -> Vec<LabelPair> {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| LabelPair {
                case_id: "c".into(),
                seq: i,
                label_a: x.to_string(),
                label_b: y.to_string(),
            })
            .collect()
    }

    #[test]
    fn perfect_agreement() {
        let r = cohen_kappa(&pairs(&["x", "x", "y", "y"], &["x", "x", "y", "y"])).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.p_observed, 1.0);
    }

    #[test]
    fn hand_evaluated_two_by_two() {
        // Po = 3/4; marginals A: x .5 y .5, B: x .25 y .75; Pe = .125 + .375 = .5
        // kappa = (.75 - .5) / (1 - .5) = .5
        let r = cohen_kappa(&pairs(&["x", "x", "y", "y"], &["x", "y", "y", "y"])).unwrap();
        assert_eq!(r.p_observed, 0.75);
        assert_eq!(r.p_expected, 0.5);
        assert_eq!(r.kappa, 0.5);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(r.labels, vec!["x", "y"]);
    }

    #[test]
    fn single_shared_label_is_perfect() {
        let r = cohen_kappa(&pairs(&["x", "x"], &["x", "x"])).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.p_expected, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(cohen_kappa(&[]).unwrap_err().code(), "empty");
        let p = pairs(&["x", "y"], &["x", "y"]);
        assert!(bootstrap_kappa_ci(&p, 0, 0.95, 1).is_err());
        assert!(bootstrap_kappa_ci(&p, 10, 1.5, 1).is_err());
    }

    #[test]
    fn degenerate_tally() {
        let t = Tally {
            n: 4,
            matches: 3,
            marginal_product: 16,
        };
        assert_eq!(t.kappa().unwrap_err().code(), "degenerate-marginals");
    }

    #[test]
    fn perfect_agreement_ci_is_one() {
        let p = pairs(&["x", "y", "z", "x"], &["x", "y", "z", "x"]);
        for seed in [0, 7, 12345] {
            let ci = bootstrap_kappa_ci(&p, 200, 0.95, seed).unwrap();
            assert_eq!((ci.low, ci.high), (1.0, 1.0));
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 1.0), 5.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let p = pairs(&["x", "x", "y", "y", "z"], &["x", "y", "y", "y", "z"]);
        let a = bootstrap_kappa_ci(&p, 300, 0.9, 42).unwrap();
        let b = bootstrap_kappa_ci(&p, 300, 0.9, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.low <= a.high);
    }

    #[test]
    fn join_requires_same_keys() {
        let mut a = LabelSheet::new();
        let mut b = LabelSheet::new();
        a.push("c", 0, "F.SG");
        a.push("c", 1, "R.SL*");
        b.push("c", 1, "R.SL");
        b.push("c", 2, "C.AI");
        match join_label_sheets(&a, &b).unwrap_err() {
            Error::UnmatchedKeys { keys } => assert_eq!(keys, vec!["c#0", "c#2"]),
            other => panic!("{other:?}"),
        }
        let mut b2 = LabelSheet::new();
        b2.push("c", 0, "F.DP");
        b2.push("c", 1, "R.SL");
        let joined = join_label_sheets(&a, &b2).unwrap();
        assert_eq!(joined[1].label_a, "R.SL");
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<LabelPair>> {
        proptest::collection::vec((0u8..4, 0u8..4), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (a, b))| LabelPair {
                    case_id: "c".into(),
                    seq: i,
                    label_a: format!("L{a}"),
                    label_b: format!("L{b}"),
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn symmetric_ranged_and_permutation_invariant(p in arb_pairs(), rot in 0usize..40) {
            let Ok(ab) = cohen_kappa(&p) else { return Ok(()); };
            let swapped: Vec<LabelPair> = p.iter().map(|x| LabelPair { label_a: x.label_b.clone(), label_b: x.label_a.clone(), ..x.clone() }).collect();
            let ba = cohen_kappa(&swapped).unwrap();
            prop_assert_eq!(ab.kappa, ba.kappa);
            prop_assert!((-1.0..=1.0).contains(&ab.kappa));
            prop_assert_eq!(ab.kappa == 1.0, ab.p_observed == 1.0);
            let mut rotated = p.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            prop_assert_eq!(cohen_kappa(&rotated).unwrap(), ab.clone());
            let total: u64 = ab.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, ab.n_items);
            if ab.p_expected < 1.0 {
                let direct = (ab.p_observed - ab.p_expected) / (1.0 - ab.p_expected);
                prop_assert!((direct - ab.kappa).abs() < 1e-12);
            }
        }
    }
}
