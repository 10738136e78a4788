use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::SegmentMeta;
use crate::recording::{SeizureType, NUM_CLASSES};

use super::EvalError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "seizure_wise_5")]
    SeizureWise5,
    #[serde(rename = "patient_wise_3")]
    PatientWise3,
}

impl Scheme {
    pub fn n_folds(self) -> usize {
        match self {
            Scheme::SeizureWise5 => 5,
            Scheme::PatientWise3 => 3,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::SeizureWise5 => "seizure_wise_5",
            Scheme::PatientWise3 => "patient_wise_3",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "seizure5" | "seizure_wise_5" | "seizure_wise" | "seizure" => Ok(Scheme::SeizureWise5),
            "patient3" | "patient_wise_3" | "patient_wise" | "patient" => Ok(Scheme::PatientWise3),
            _ => Err(format!("unknown scheme {s:?} (expected seizure5 or patient3)")),
        }
    }
}

/// One cross-validation round. `test` is the full fold; `test_eval` is what
/// gets scored (a subset when the test side is thinned).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub test: Vec<String>,
    pub test_eval: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test_patients: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldManifest {
    pub version: u32,
    pub scheme: Scheme,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

fn by_class(metas: &[SegmentMeta], idx: impl IntoIterator<Item = usize>) -> [Vec<usize>; NUM_CLASSES] {
    let mut out: [Vec<usize>; NUM_CLASSES] = Default::default();
    for i in idx {
        out[metas[i].label.index()].push(i);
    }
    out
}

/// Stratified hold-out of `fraction` of each class, keeping at least one
/// training segment per present class.
fn split_val(metas: &[SegmentMeta], idx: &[usize], fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut members in by_class(metas, idx.iter().copied()) {
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let n_val = ((members.len() as f64 * fraction).round() as usize).min(members.len() - 1);
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Stratified train/validation split of a whole set, as used inside each
/// cross-validation round.
pub fn stratified_split(metas: &[SegmentMeta], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..metas.len()).collect();
    split_val(metas, &all, fraction, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn ids(metas: &[SegmentMeta], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| metas[i].id()).collect()
}

fn build(
    metas: &[SegmentMeta],
    scheme: Scheme,
    seed: u64,
    val_fraction: f64,
    assignment: &[usize],
    rng: &mut ChaCha8Rng,
) -> FoldManifest {
    let k = scheme.n_folds();
    let folds = (0..k)
        .map(|f| {
            let test: Vec<usize> = (0..metas.len()).filter(|&i| assignment[i] == f).collect();
            let rest: Vec<usize> = (0..metas.len()).filter(|&i| assignment[i] != f).collect();
            let (train, val) = split_val(metas, &rest, val_fraction, rng);
            let test_eval = match scheme {
                Scheme::SeizureWise5 => test.clone(),
                Scheme::PatientWise3 => thin_test(metas, &test, &rest, seed ^ f as u64),
            };
            Fold {
                id: f,
                test_patients: test.iter().map(|&i| metas[i].patient_id.clone()).collect(),
                test: ids(metas, &test),
                test_eval: ids(metas, &test_eval),
                train: ids(metas, &train),
                val: ids(metas, &val),
            }
        })
        .collect();
    FoldManifest { version: MANIFEST_VERSION, scheme, seed, folds }
}

/// Five stratified folds: each class is shuffled and dealt round-robin,
/// continuing the deal position from one class to the next so fold sizes
/// stay within one of each other.
pub fn make_seizure_folds(metas: &[SegmentMeta], seed: u64, val_fraction: f64) -> Result<FoldManifest, EvalError> {
    let k = Scheme::SeizureWise5.n_folds();
    let groups = by_class(metas, 0..metas.len());
    for (c, g) in groups.iter().enumerate() {
        if g.len() < k {
            return Err(EvalError::TooFewSegments { class: SeizureType::ALL[c].code(), count: g.len(), needed: k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; metas.len()];
    let mut pos = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            assignment[i] = pos % k;
            pos += 1;
        }
    }
    Ok(build(metas, Scheme::SeizureWise5, seed, val_fraction, &assignment, &mut rng))
}

/// Three patient-disjoint folds. Patients are taken largest first (ties in
/// seeded random order) and each goes to the fold holding the fewest
/// segments of its majority class, then the fewest segments overall, then
/// the lowest index.
pub fn make_patient_folds(metas: &[SegmentMeta], seed: u64, val_fraction: f64) -> Result<FoldManifest, EvalError> {
    let k = Scheme::PatientWise3.n_folds();
    let mut per_patient: BTreeMap<&str, [usize; NUM_CLASSES]> = BTreeMap::new();
    for m in metas {
        per_patient.entry(m.patient_id.as_str()).or_default()[m.label.index()] += 1;
    }
    let majority = |c: &[usize; NUM_CLASSES]| (0..NUM_CLASSES).fold(0, |b, i| if c[i] > c[b] { i } else { b });
    let mut patients_of = [0usize; NUM_CLASSES];
    for c in per_patient.values() {
        patients_of[majority(c)] += 1;
    }
    for (c, &n) in patients_of.iter().enumerate() {
        if n < k {
            return Err(EvalError::InfeasibleSplit { class: SeizureType::ALL[c].code(), patients: n });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<(&str, [usize; NUM_CLASSES])> = per_patient.into_iter().collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|(_, c)| std::cmp::Reverse(c.iter().sum::<usize>()));
    let mut fold_counts = vec![[0usize; NUM_CLASSES]; k];
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, c) in &order {
        let m = majority(c);
        let f = (0..k).min_by_key(|&f| (fold_counts[f][m], fold_counts[f].iter().sum::<usize>(), f)).unwrap();
        for (acc, v) in fold_counts[f].iter_mut().zip(c) {
            *acc += v;
        }
        fold_of.insert(p, f);
    }
    let assignment: Vec<usize> = metas.iter().map(|m| fold_of[m.patient_id.as_str()]).collect();
    Ok(build(metas, Scheme::PatientWise3, seed, val_fraction, &assignment, &mut rng))
}

pub fn make_folds(
    scheme: Scheme,
    metas: &[SegmentMeta],
    seed: u64,
    val_fraction: f64,
) -> Result<FoldManifest, EvalError> {
    match scheme {
        Scheme::SeizureWise5 => make_seizure_folds(metas, seed, val_fraction),
        Scheme::PatientWise3 => make_patient_folds(metas, seed, val_fraction),
    }
}

/// Applies [`subsample_test`] class by class, with the training side
/// (train plus validation) as the reference count.
fn thin_test(metas: &[SegmentMeta], test: &[usize], train_side: &[usize], seed: u64) -> Vec<usize> {
    let train_counts = by_class(metas, train_side.iter().copied()).map(|g| g.len());
    let mut keep = Vec::new();
    for (c, group) in by_class(metas, test.iter().copied()).into_iter().enumerate() {
        let sub: Vec<SegmentMeta> = group.iter().map(|&i| metas[i].clone()).collect();
        keep.extend(subsample_test(&sub, train_counts[c], seed.wrapping_add(c as u64)).into_iter().map(|j| group[j]));
    }
    keep.sort_unstable();
    keep
}

/// Thins one class's test segments to `train_count` when they outnumber it
/// more than twofold. Each event is cut into start, middle and end thirds
/// by position; events are visited in seeded random order and, pass after
/// pass, each visited third contributes one random segment until the budget
/// is spent. Returns sorted indices into `test`.
pub fn subsample_test(test: &[SegmentMeta], train_count: usize, seed: u64) -> Vec<usize> {
    if test.len() <= 2 * train_count {
        return (0..test.len()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, m) in test.iter().enumerate() {
        events.entry(m.event_id()).or_default().push(i);
    }
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut event_list: Vec<Vec<usize>> = events.into_values().collect();
    event_list.shuffle(&mut rng);
    for mut ev in event_list {
        ev.sort_by_key(|&i| test[i].index_in_event);
        let n = ev.len();
        let mut thirds: [Vec<usize>; 3] = Default::default();
        for (rank, i) in ev.into_iter().enumerate() {
            thirds[rank * 3 / n].push(i);
        }
        for mut t in thirds {
            if !t.is_empty() {
                t.shuffle(&mut rng);
                buckets.push(t);
            }
        }
    }
    let mut keep = Vec::with_capacity(train_count);
    let mut depth = 0;
    while keep.len() < train_count {
        for b in &buckets {
            if keep.len() == train_count {
                break;
            }
            if let Some(&i) = b.get(depth) {
                keep.push(i);
            }
        }
        depth += 1;
    }
    keep.sort_unstable();
    keep
}
