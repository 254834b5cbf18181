//! Asymmetric mistake-severity metrics.
//!
//! Confusion counts are stored `counts[true][pred]`; confusion weights are
//! stored `entries[pred][true]`. Each sample with truth `t` and prediction `p`
//! is paired with `W[p][t]` unless [`IndexPairing::Literal`] is requested.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::hierarchy::Hierarchy;

/// Default under-diagnosis penalty.
pub const DEFAULT_PENALTY: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionWeightMatrix {
    pub level: usize,
    pub penalty: f64,
    /// `entries[pred][true] = 1 + |pred - true| + penalty * severe(pred, true)`
    pub entries: Vec<Vec<f64>>,
}

impl ConfusionWeightMatrix {
    pub fn num_classes(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, pred: usize, truth: usize) -> f64 {
        self.entries[pred][truth]
    }
}

pub fn build_confusion_weights(
    hierarchy: &Hierarchy,
    level: usize,
    penalty: f64,
) -> Result<ConfusionWeightMatrix> {
    if !(penalty >= 0.0) || !penalty.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "penalty must be >= 0, got {penalty}"
        )));
    }
    let n = hierarchy.num_classes(level)?;
    let mut entries = vec![vec![0.0; n]; n];
    for (pred, row) in entries.iter_mut().enumerate() {
        for (truth, e) in row.iter_mut().enumerate() {
            let severe = hierarchy.is_severe(level, pred, truth)?;
            *e = 1.0 + pred.abs_diff(truth) as f64 + if severe { penalty } else { 0.0 };
        }
    }
    Ok(ConfusionWeightMatrix {
        level,
        penalty,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub level: usize,
    /// `counts[true][pred]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(level: usize, num_classes: usize) -> Self {
        Self {
            level,
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(level: usize, counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(Self { level, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn accumulate(&mut self, truth: usize, pred: usize) -> Result<()> {
        let n = self.num_classes();
        for idx in [truth, pred] {
            if idx >= n {
                return Err(Error::ClassOutOfRange {
                    level: self.level,
                    index: idx,
                    classes: n,
                });
            }
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    /// Cellwise sum, for combining evaluation shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() || other.level != self.level {
            return Err(Error::Shape(
                "cannot merge confusion matrices of different shape".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn misclassified(&self) -> u64 {
        self.total() - self.correct()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.correct() as f64 / total as f64)
    }

    /// `true,pred,count` rows for non-zero cells, with header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true,pred,count\n");
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if c > 0 {
                    let _ = writeln!(s, "{t},{p},{c}");
                }
            }
        }
        s
    }

    pub fn from_csv(text: &str, level: usize, num_classes: usize) -> Result<Self> {
        let mut cm = Self::new(level, num_classes);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "true,pred,count" => {}
            other => {
                return Err(Error::Csv(format!(
                    "expected header 'true,pred,count', found {:?}",
                    other.unwrap_or("")
                )))
            }
        }
        for (lineno, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Csv(format!(
                    "line {}: expected 3 fields",
                    lineno + 2
                )));
            }
            let parse = |f: &str| {
                f.parse::<u64>()
                    .map_err(|e| Error::Csv(format!("line {}: {e}", lineno + 2)))
            };
            let (t, p, c) = (
                parse(fields[0])? as usize,
                parse(fields[1])? as usize,
                parse(fields[2])?,
            );
            if t >= num_classes || p >= num_classes {
                return Err(Error::ClassOutOfRange {
                    level,
                    index: t.max(p),
                    classes: num_classes,
                });
            }
            cm.counts[t][p] += c;
        }
        Ok(cm)
    }
}

/// How confusion counts are paired with confusion weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexPairing {
    /// Sample (true `t`, predicted `p`) uses `W[p][t]`.
    #[default]
    PredTrue,
    /// `counts[i][j]` uses `W[i][j]` verbatim. For audits only.
    Literal,
}

/// Factor applied to severe cells in [`expected_risk`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskFactor {
    /// `0.5` per severe cell.
    #[default]
    Half,
    /// `2` per severe cell.
    Double,
}

impl RiskFactor {
    pub fn value(self) -> f64 {
        match self {
            RiskFactor::Half => 0.5,
            RiskFactor::Double => 2.0,
        }
    }
}

/// Misclassification confidence; undefined when there are no mistakes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Asmc {
    Value(f64),
    Undefined,
}

impl Asmc {
    pub fn value(self) -> Option<f64> {
        match self {
            Asmc::Value(v) => Some(v),
            Asmc::Undefined => None,
        }
    }
}

impl Serialize for Asmc {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Asmc::Value(v) => s.serialize_f64(*v),
            Asmc::Undefined => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Asmc {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Asmc::Value(v)),
            Raw::Text(t) if t == "inf" => Ok(Asmc::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "unexpected asmc value {t:?}"
            ))),
        }
    }
}

fn check_shapes(cm: &ConfusionMatrix, w: &ConfusionWeightMatrix) -> Result<()> {
    if cm.num_classes() != w.num_classes() {
        return Err(Error::Shape(format!(
            "{}-class confusion matrix with {}-class weights",
            cm.num_classes(),
            w.num_classes()
        )));
    }
    Ok(())
}

fn paired_weight(
    w: &ConfusionWeightMatrix,
    truth: usize,
    pred: usize,
    pairing: IndexPairing,
) -> f64 {
    match pairing {
        IndexPairing::PredTrue => w.get(pred, truth),
        IndexPairing::Literal => w.entries[truth][pred],
    }
}

pub fn ascc(cm: &ConfusionMatrix, w: &ConfusionWeightMatrix) -> Result<f64> {
    ascc_with(cm, w, IndexPairing::PredTrue)
}

/// Mean over all samples of `1 / W`.
pub fn ascc_with(
    cm: &ConfusionMatrix,
    w: &ConfusionWeightMatrix,
    pairing: IndexPairing,
) -> Result<f64> {
    check_shapes(cm, w)?;
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no samples".into()));
    }
    let mut sum = 0.0;
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                sum += c as f64 / paired_weight(w, t, p, pairing);
            }
        }
    }
    Ok(sum / total as f64)
}

pub fn asmc(cm: &ConfusionMatrix, w: &ConfusionWeightMatrix) -> Result<Asmc> {
    asmc_with(cm, w, IndexPairing::PredTrue)
}

/// Mean over misclassified samples of `1 / (W - 1)`.
pub fn asmc_with(
    cm: &ConfusionMatrix,
    w: &ConfusionWeightMatrix,
    pairing: IndexPairing,
) -> Result<Asmc> {
    check_shapes(cm, w)?;
    let errors = cm.misclassified();
    if errors == 0 {
        return Ok(Asmc::Undefined);
    }
    let mut sum = 0.0;
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if t != p && c > 0 {
                sum += c as f64 / (paired_weight(w, t, p, pairing) - 1.0);
            }
        }
    }
    Ok(Asmc::Value(sum / errors as f64))
}

pub fn expected_risk(
    cm: &ConfusionMatrix,
    w: &ConfusionWeightMatrix,
    hierarchy: &Hierarchy,
    factor: RiskFactor,
) -> Result<f64> {
    expected_risk_with(cm, w, hierarchy, factor, IndexPairing::PredTrue)
}

/// `sum over all cells of factor^[severe] * S * W`, divided by the number of
/// misclassified samples. Diagonal cells contribute `S[i][i] * 1`.
pub fn expected_risk_with(
    cm: &ConfusionMatrix,
    w: &ConfusionWeightMatrix,
    hierarchy: &Hierarchy,
    factor: RiskFactor,
    pairing: IndexPairing,
) -> Result<f64> {
    check_shapes(cm, w)?;
    let errors = cm.misclassified();
    if errors == 0 {
        return Err(Error::NoMisclassifications);
    }
    let rel = hierarchy.priority(cm.level)?;
    let mut sum = 0.0;
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let severe = match pairing {
                IndexPairing::PredTrue => hierarchy.is_severe(cm.level, p, t)?,
                IndexPairing::Literal => rel.is_more_urgent(t, p),
            };
            let scale = if severe { factor.value() } else { 1.0 };
            sum += scale * c as f64 * paired_weight(w, t, p, pairing);
        }
    }
    Ok(sum / errors as f64)
}

/// Number of under-diagnosed samples.
pub fn severe_error_count(cm: &ConfusionMatrix, hierarchy: &Hierarchy) -> Result<u64> {
    let mut n = 0;
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 && hierarchy.is_severe(cm.level, p, t)? {
                n += c;
            }
        }
    }
    Ok(n)
}

/// Mean expected class (classes numbered from 1) of the predictive
/// distributions of samples of `class` that were misclassified.
pub fn expected_error_class(
    probs: &[Vec<f64>],
    true_labels: &[usize],
    predicted: &[usize],
    class: usize,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((p, &t), &y) in probs.iter().zip(true_labels).zip(predicted) {
        if t == class && y != class {
            sum += p
                .iter()
                .enumerate()
                .map(|(c, &pc)| (c + 1) as f64 * pc)
                .sum::<f64>();
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// One-vs-rest macro AUC from rank statistics (average ranks for ties).
/// Classes without both positives and negatives are skipped.
#[allow(clippy::needless_range_loop)]
pub fn macro_auc(scores: &[Vec<f64>], labels: &[usize]) -> Option<f64> {
    let n_classes = scores.first()?.len();
    let mut aucs = Vec::new();
    for c in 0..n_classes {
        let n_pos = labels.iter().filter(|&&y| y == c).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by(|&a, &b| scores[a][c].total_cmp(&scores[b][c]));
        let mut ranks = vec![0.0; labels.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && scores[order[j + 1]][c] == scores[order[i]][c] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &order[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        let rank_sum: f64 = labels
            .iter()
            .zip(&ranks)
            .filter(|(&y, _)| y == c)
            .map(|(_, r)| r)
            .sum();
        let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
        aucs.push(u / (n_pos * n_neg) as f64);
    }
    (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Options that change how the asymmetric metrics are scored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub penalty: f64,
    pub risk_factor: RiskFactor,
    pub pairing: IndexPairing,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            penalty: DEFAULT_PENALTY,
            risk_factor: RiskFactor::Half,
            pairing: IndexPairing::PredTrue,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub level: usize,
    pub samples: u64,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub ascc: f64,
    pub asmc: Asmc,
    pub expected_risk: Option<f64>,
    pub severe_error_count: u64,
    /// Per true class; `None` when the class has no misclassified samples.
    pub expected_error_class: Vec<Option<f64>>,
}

impl MetricReport {
    /// Report from counts alone; AUC and expected error classes need
    /// per-sample probabilities and are left empty.
    pub fn from_confusion(
        cm: &ConfusionMatrix,
        hierarchy: &Hierarchy,
        settings: &MetricSettings,
    ) -> Result<Self> {
        let w = build_confusion_weights(hierarchy, cm.level, settings.penalty)?;
        let accuracy = cm
            .accuracy()
            .ok_or_else(|| Error::Empty("confusion matrix has no samples".into()))?;
        let expected_risk =
            match expected_risk_with(cm, &w, hierarchy, settings.risk_factor, settings.pairing) {
                Ok(r) => Some(r),
                Err(Error::NoMisclassifications) => None,
                Err(e) => return Err(e),
            };
        Ok(Self {
            level: cm.level,
            samples: cm.total(),
            accuracy,
            auc: None,
            ascc: ascc_with(cm, &w, settings.pairing)?,
            asmc: asmc_with(cm, &w, settings.pairing)?,
            expected_risk,
            severe_error_count: severe_error_count(cm, hierarchy)?,
            expected_error_class: Vec::new(),
        })
    }

    /// `level,metric,value` rows (no header).
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "".to_string(), |x| x.to_string());
        let _ = writeln!(s, "{},accuracy,{}", self.level, self.accuracy);
        let _ = writeln!(s, "{},auc,{}", self.level, opt(self.auc));
        let _ = writeln!(s, "{},ascc,{}", self.level, self.ascc);
        let asmc = match self.asmc {
            Asmc::Value(v) => v.to_string(),
            Asmc::Undefined => "inf".into(),
        };
        let _ = writeln!(s, "{},asmc,{}", self.level, asmc);
        let _ = writeln!(
            s,
            "{},expected_risk,{}",
            self.level,
            opt(self.expected_risk)
        );
        let _ = writeln!(
            s,
            "{},severe_error_count,{}",
            self.level, self.severe_error_count
        );
        for (c, v) in self.expected_error_class.iter().enumerate() {
            let _ = writeln!(s, "{},expected_error_class_{c},{}", self.level, opt(*v));
        }
        s
    }
}
