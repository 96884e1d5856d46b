use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision threshold; a probability equal to it counts as PD.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Binary confusion counts with PD as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub fp: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, tn: u64, fp: u64) -> Self {
        ConfusionMatrix { tp, fn_, tn, fp }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.tn + self.fp
    }

    pub fn record(&mut self, predicted_pd: bool, label: u8) {
        match (predicted_pd, label == 1) {
            (true, true) => self.tp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
        }
    }

    /// The same counts with the class convention swapped.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fn_: self.fp,
            tn: self.tp,
            fp: self.fn_,
        }
    }

    pub fn metrics(&self) -> Result<MetricsReport> {
        metrics(self)
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(self, o: Self) -> Self {
        ConfusionMatrix {
            tp: self.tp + o.tp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
        }
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

pub fn confusion(probabilities: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    if probabilities.is_empty() {
        return Err(Error::Usage(
            "confusion matrix of an empty prediction set".into(),
        ));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} probabilities but {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in probabilities.iter().zip(labels) {
        if y > 1 {
            return Err(Error::Usage(format!("label {y} is not 0 or 1")));
        }
        cm.record(p >= threshold, y);
    }
    Ok(cm)
}

/// Percentages in `[0, 100]`. Ratios with an empty denominator are 0 and
/// their names are listed in `undefined`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_positive: f64,
    pub f1_negative: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub undefined: Vec<String>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Usage("metrics of an empty confusion matrix".into()));
    }
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let sensitivity = ratio("sensitivity", cm.tp, cm.tp + cm.fn_);
    let specificity = ratio("specificity", cm.tn, cm.tn + cm.fp);
    // F1 = 2TP / (2TP + FP + FN), which is 0/0 only when the class never occurs or is predicted
    let f1_positive = ratio("f1_positive", 2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_);
    let f1_negative = ratio("f1_negative", 2 * cm.tn, 2 * cm.tn + cm.fn_ + cm.fp);
    Ok(MetricsReport {
        confusion: *cm,
        accuracy: 100.0 * (cm.tp + cm.tn) as f64 / total as f64,
        macro_f1: (f1_positive + f1_negative) / 2.0,
        f1_positive,
        f1_negative,
        sensitivity,
        specificity,
        undefined,
    })
}

impl MetricsReport {
    /// `(name, value)` pairs in report order.
    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("accuracy", self.accuracy),
            ("macro_f1", self.macro_f1),
            ("f1_positive", self.f1_positive),
            ("f1_negative", self.f1_negative),
            ("sensitivity", self.sensitivity),
            ("specificity", self.specificity),
        ]
    }

    /// `key=value` lines with two-decimal percentages.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            out.push_str(&format!("{prefix}{k}={v:.2}\n"));
        }
        let c = &self.confusion;
        out.push_str(&format!(
            "{prefix}tp={}\n{prefix}fn={}\n{prefix}tn={}\n{prefix}fp={}\n",
            c.tp, c.fn_, c.tn, c.fp
        ));
        if !self.undefined.is_empty() {
            out.push_str(&format!("{prefix}undefined={}\n", self.undefined.join(",")));
        }
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "acc {:.2}  macro-F1 {:.2}  F1(PD) {:.2}  sens {:.2}  spec {:.2}",
            self.accuracy, self.macro_f1, self.f1_positive, self.sensitivity, self.specificity
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rendered(cm: ConfusionMatrix) -> [String; 4] {
        let m = metrics(&cm).unwrap();
        [m.accuracy, m.sensitivity, m.specificity, m.macro_f1].map(|v| format!("{v:.2}"))
    }

    #[test]
    fn reconstructed_table_rows() {
        assert_eq!(
            rendered(ConfusionMatrix::new(32, 14, 289, 49)),
            ["83.59", "69.57", "85.50", "70.28"]
        );
        assert_eq!(
            rendered(ConfusionMatrix::new(55, 5, 53, 7)),
            ["90.00", "91.67", "88.33", "90.00"]
        );
        // positive-class F1 of the first row is far from the reported column
        let m = metrics(&ConfusionMatrix::new(32, 14, 289, 49)).unwrap();
        assert!((m.f1_positive - 50.39).abs() < 0.01);
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[0.9, 0.1], &[1, 0], DEFAULT_THRESHOLD).unwrap(),
            ConfusionMatrix::new(1, 0, 1, 0)
        );
        assert_eq!(
            confusion(&[0.5], &[0], DEFAULT_THRESHOLD).unwrap(),
            ConfusionMatrix::new(0, 0, 0, 1)
        );
        assert!(matches!(confusion(&[], &[], 0.5), Err(Error::Usage(_))));
        assert!(matches!(
            confusion(&[0.2], &[1, 0], 0.5),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn confusion_matches_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let y: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let cm = confusion(&p, &y, 0.5).unwrap();
        let count = |pred: bool, label: u8| {
            p.iter()
                .zip(&y)
                .filter(|(pp, yy)| (**pp >= 0.5) == pred && **yy == label)
                .count() as u64
        };
        assert_eq!(
            cm,
            ConfusionMatrix::new(
                count(true, 1),
                count(false, 1),
                count(false, 0),
                count(true, 0)
            )
        );
    }

    #[test]
    fn extremes() {
        let perfect = metrics(&ConfusionMatrix::new(3, 0, 4, 0)).unwrap();
        for (_, v) in perfect.fields() {
            assert_eq!(v, 100.0);
        }
        let one = metrics(&ConfusionMatrix::new(1, 0, 0, 0)).unwrap();
        assert_eq!(one.accuracy, 100.0);
        assert_eq!(one.specificity, 0.0);
        assert!(one.undefined.contains(&"specificity".to_string()));
        assert!(one.undefined.contains(&"f1_negative".to_string()));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    /// Independent recomputation via precision and recall.
    fn oracle(tp: u64, fn_: u64, tn: u64, fp: u64) -> [f64; 4] {
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let f1 = |tp: f64, fp: f64, fn_: f64| {
            let precision = div(tp, tp + fp);
            let recall = div(tp, tp + fn_);
            div(2.0 * precision * recall, precision + recall)
        };
        let (tp, fn_, tn, fp) = (tp as f64, fn_ as f64, tn as f64, fp as f64);
        [
            100.0 * (tp + tn) / (tp + tn + fp + fn_),
            100.0 * div(tp, tp + fn_),
            100.0 * div(tn, tn + fp),
            50.0 * (f1(tp, fp, fn_) + f1(tn, fn_, fp)),
        ]
    }

    #[test]
    fn exhaustive_grid_agrees_with_oracle() {
        let n = 50u64;
        for tp in 0..=n {
            for fn_ in 0..=n {
                for tn in 0..=n {
                    for fp in 0..=n {
                        if tp + fn_ + tn + fp == 0 {
                            continue;
                        }
                        let m = metrics(&ConfusionMatrix::new(tp, fn_, tn, fp)).unwrap();
                        let o = oracle(tp, fn_, tn, fp);
                        let got = [m.accuracy, m.sensitivity, m.specificity, m.macro_f1];
                        for (g, e) in got.iter().zip(o) {
                            assert!((g - e).abs() < 1e-9, "{tp} {fn_} {tn} {fp}: {g} vs {e}");
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn balanced_accuracy_identity(tp in 0u64..60, tn in 0u64..60, pos in 1u64..60) {
            let tp = tp.min(pos);
            let tn = tn.min(pos);
            let m = metrics(&ConfusionMatrix::new(tp, pos - tp, tn, pos - tn)).unwrap();
            prop_assert!((m.accuracy - (m.sensitivity + m.specificity) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn class_swap_symmetry(tp in 0u64..40, fn_ in 0u64..40, tn in 0u64..40, fp in 0u64..40) {
            prop_assume!(tp + fn_ + tn + fp > 0);
            let cm = ConfusionMatrix::new(tp, fn_, tn, fp);
            let (a, b) = (metrics(&cm).unwrap(), metrics(&cm.swapped()).unwrap());
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-9);
            prop_assert_eq!(a.sensitivity, b.specificity);
            prop_assert_eq!(a.specificity, b.sensitivity);
            for (_, v) in a.fields() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }
    }
}
