use serde::{Deserialize, Serialize};

use crate::recording::{SeizureType, NUM_CLASSES};

use super::EvalError;

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(truths: &[usize], preds: &[usize]) -> Result<Self, EvalError> {
        if truths.len() != preds.len() {
            return Err(EvalError::LengthMismatch { truths: truths.len(), preds: preds.len() });
        }
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truths.iter().zip(preds) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(EvalError::InvalidClass(t.max(p)));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// Each row divided by its support; empty rows stay zero.
    pub fn row_normalized(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        let mut out = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (i, row) in self.counts.iter().enumerate() {
            let s = self.support(i);
            if s > 0 {
                for (j, &c) in row.iter().enumerate() {
                    out[i][j] = c as f64 / s as f64;
                }
            }
        }
        out
    }

    /// Header row of predicted classes, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in SeizureType::ALL {
            s.push(',');
            s.push_str(c.code());
        }
        s.push('\n');
        for (c, row) in SeizureType::ALL.iter().zip(&self.counts) {
            s.push_str(c.code());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassScore>,
    pub weighted_f1: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Per-class precision, recall and F1, averaged with support weights.
pub fn weighted_f1(cm: &ConfusionMatrix, fold: usize) -> Result<EvalReport, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class: Vec<ClassScore> = (0..NUM_CLASSES)
        .map(|i| {
            let tp = cm.counts[i][i];
            let precision = ratio(tp, cm.predicted(i));
            let recall = ratio(tp, cm.support(i));
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            let support = cm.support(i);
            ClassScore { precision, recall, f1, support, weight: ratio(support, total) }
        })
        .collect();
    let weighted = per_class.iter().map(|c| c.weight * c.f1).sum();
    Ok(EvalReport { fold, confusion: *cm, per_class, weighted_f1: weighted })
}

/// Index of the largest probability in each row; ties go to the lower class.
pub fn argmax_rows(probs: &[f64], k: usize) -> Vec<usize> {
    probs.chunks(k).map(|r| r.iter().enumerate().fold(0, |best, (i, &v)| if v > r[best] { i } else { best })).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counting() {
        let cm = ConfusionMatrix::from_pairs(&[0, 1, 2, 3, 4, 4], &[0, 1, 2, 3, 4, 4]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(cm.counts[i][j] > 0, i == j);
            }
        }
        assert_eq!(ConfusionMatrix::from_pairs(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(matches!(ConfusionMatrix::from_pairs(&[0], &[5]), Err(EvalError::InvalidClass(5))));
        assert!(ConfusionMatrix::from_pairs(&[0, 1], &[0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..5)).collect();
        let p: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..5)).collect();
        let cm = ConfusionMatrix::from_pairs(&t, &p).unwrap();
        assert_eq!(cm.total(), 1000);
        for c in 0..5 {
            assert_eq!(cm.support(c), t.iter().filter(|&&x| x == c).count() as u64);
            assert_eq!(cm.predicted(c), p.iter().filter(|&&x| x == c).count() as u64);
        }
    }

    #[test]
    fn hand_worked_three_class_example() {
        let cm = ConfusionMatrix::from_pairs(&[0, 0, 1, 1, 2], &[0, 1, 1, 1, 2]).unwrap();
        let r = weighted_f1(&cm, 0).unwrap();
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class[1].f1 - 0.8).abs() < 1e-15);
        assert_eq!(r.per_class[2].f1, 1.0);
        assert_eq!(r.per_class[3].weight, 0.0);
        let expected = 0.4 * (2.0 / 3.0) + 0.4 * 0.8 + 0.2;
        assert!((r.weighted_f1 - expected).abs() < 1e-15);
        assert!((r.weighted_f1 - 0.7867).abs() < 5e-5);
    }

    #[test]
    fn perfect_and_empty() {
        let cm = ConfusionMatrix::from_pairs(&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(weighted_f1(&cm, 0).unwrap().weighted_f1, 1.0);
        assert!(matches!(weighted_f1(&ConfusionMatrix::default(), 0), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn constant_classifier_on_balanced_classes() {
        let truths: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let cm = ConfusionMatrix::from_pairs(&truths, &[2; 100]).unwrap();
        let r = weighted_f1(&cm, 0).unwrap();
        assert!((r.weighted_f1 - 1.0 / 15.0).abs() < 1e-15);
        assert!(r.per_class.iter().all(|c| c.f1.is_finite()));
    }

    /// Brute force straight from per-class TP/FP/FN counting over a
    /// materialized list of (truth, prediction) pairs.
    #[test]
    fn agrees_with_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let mut pairs = Vec::new();
            for t in 0..5 {
                for p in 0..5 {
                    let n = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(0..20) };
                    pairs.extend(std::iter::repeat((t, p)).take(n));
                }
            }
            if pairs.is_empty() {
                continue;
            }
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let got = weighted_f1(&ConfusionMatrix::from_pairs(&t, &p).unwrap(), 0).unwrap().weighted_f1;
            let mut want = 0.0;
            for c in 0..5 {
                let tp = pairs.iter().filter(|&&(a, b)| a == c && b == c).count() as f64;
                let fp = pairs.iter().filter(|&&(a, b)| a != c && b == c).count() as f64;
                let fn_ = pairs.iter().filter(|&&(a, b)| a == c && b != c).count() as f64;
                let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
                want += f1 * (tp + fn_) / pairs.len() as f64;
            }
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let cm = ConfusionMatrix::from_pairs(&[0, 0, 3, 4, 4, 4], &[1, 0, 3, 3, 4, 2]).unwrap();
        let r = weighted_f1(&cm, 0).unwrap();
        assert!((r.per_class.iter().map(|c| c.weight).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_the_first_tie() {
        assert_eq!(argmax_rows(&[0.2, 0.2, 0.6, 0.5, 0.5, 0.0], 3), vec![2, 0]);
    }

    #[test]
    fn csv_and_normalization() {
        let cm = ConfusionMatrix::from_pairs(&[0, 0, 1], &[0, 1, 1]).unwrap();
        let csv = cm.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "true\\pred,cpz,spz,abz,tnz,tcz");
        assert_eq!(csv.lines().nth(1).unwrap(), "cpz,1,1,0,0,0");
        let n = cm.row_normalized();
        assert_eq!(n[0][0], 0.5);
        assert_eq!(n[4], [0.0; 5]);
    }
}
