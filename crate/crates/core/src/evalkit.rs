//! Evaluation metrics: accuracy, MAE, the multi-task training loss,
//! macro-F1 and confidence-weighted aggregation of patch predictions.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::contour::{hz_to_cents, ContourParams};
use crate::error::{Result, SpcError};

pub const PROB_SUM_TOLERANCE: f64 = 1e-6;
/// Floor applied to the label probability before the log.
pub const LOG_PROB_EPS: f64 = 1e-12;
pub const CLASSIFICATION_WEIGHT: f64 = 10.0;
pub const REGRESSION_WEIGHT: f64 = 0.1;

/// A probability vector over at least two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassProbs(Vec<f64>);

impl ClassProbs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(SpcError::domain(format!(
                "need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(SpcError::domain(format!("invalid probability {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(SpcError::domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ClassProbs(values))
    }

    /// Uniform distribution over `classes` classes.
    pub fn uniform(classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / classes as f64; classes])
    }

    /// Softmax of arbitrary finite scores.
    pub fn softmax(scores: &[f64]) -> Result<Self> {
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(SpcError::domain("softmax of non-finite scores"));
        }
        let exp: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let z: f64 = exp.iter().sum();
        Self::new(exp.into_iter().map(|e| e / z).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Top-1 minus top-2 probability.
    pub fn confidence(&self) -> f64 {
        let first = self.argmax();
        let second = self
            .0
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != first)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        self.0[first] - second
    }
}

impl TryFrom<Vec<f64>> for ClassProbs {
    type Error = SpcError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ClassProbs::new(v)
    }
}

impl From<ClassProbs> for Vec<f64> {
    fn from(p: ClassProbs) -> Self {
        p.0
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Ground truth for the four training heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskTargets {
    pub type_label: usize,
    pub f_b_cent: f64,
    pub delta_f: f64,
    pub f_m: f64,
}

impl MultiTaskTargets {
    pub fn from_params(p: &ContourParams) -> Result<Self> {
        Ok(MultiTaskTargets {
            type_label: p.kind.label(),
            f_b_cent: hz_to_cents(p.base_hz)?,
            delta_f: p.extent_cents,
            f_m: p.mod_hz,
        })
    }

    pub fn regression(&self) -> [f64; 3] {
        [self.f_b_cent, self.delta_f, self.f_m]
    }
}

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a == 0 || b == 0 {
        return Err(SpcError::domain("metric needs at least one sample"));
    }
    if a != b {
        return Err(SpcError::domain(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds.len(), targets.len())?;
    let total: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / preds.len() as f64)
}

fn label_nll(probs: &ClassProbs, label: usize) -> Result<f64> {
    let p = *probs.values().get(label).ok_or_else(|| {
        SpcError::domain(format!("label {label} out of range for {} classes", probs.classes()))
    })?;
    Ok(-p.max(LOG_PROB_EPS).ln())
}

/// Loss of one sample: weighted cross-entropy plus weighted absolute
/// errors of the three regression heads.
pub fn multitask_loss(
    probs: &ClassProbs,
    label: usize,
    reg_preds: [f64; 3],
    reg_targets: [f64; 3],
) -> Result<f64> {
    let ce = label_nll(probs, label)?;
    let l1: f64 = reg_preds.iter().zip(&reg_targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(CLASSIFICATION_WEIGHT * ce + REGRESSION_WEIGHT * l1)
}

/// Batch mean of [`multitask_loss`].
pub fn multitask_loss_batch(
    probs: &[ClassProbs],
    reg_preds: &[[f64; 3]],
    targets: &[MultiTaskTargets],
) -> Result<f64> {
    check_pair(probs.len(), targets.len())?;
    check_pair(reg_preds.len(), targets.len())?;
    let mut total = 0.0;
    for ((p, r), t) in probs.iter().zip(reg_preds).zip(targets) {
        total += multitask_loss(p, t.type_label, *r, t.regression())?;
    }
    Ok(total / targets.len() as f64)
}

/// Batch-mean categorical cross-entropy.
pub fn single_task_loss(probs: &[ClassProbs], labels: &[usize]) -> Result<f64> {
    check_pair(probs.len(), labels.len())?;
    let mut total = 0.0;
    for (p, &l) in probs.iter().zip(labels) {
        total += label_nll(p, l)?;
    }
    Ok(total / labels.len() as f64)
}

/// Counts with row = label, column = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        check_pair(preds.len(), labels.len())?;
        let mut counts = vec![vec![0u64; classes]; classes];
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= classes || l >= classes {
                return Err(SpcError::domain(format!(
                    "class index out of range (pred {p}, label {l}, classes {classes})"
                )));
            }
            counts[l][p] += 1;
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    /// One-vs-all F1 of class `c`, `None` when `c` has no labelled samples.
    pub fn f1(&self, c: usize) -> Option<f64> {
        let tp = self.counts[c][c];
        let fn_ = self.support(c) - tp;
        if tp + fn_ == 0 {
            return None;
        }
        let fp: u64 = (0..self.classes).map(|l| self.counts[l][c]).sum::<u64>() - tp;
        Some(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
    }

    /// Mean class-wise F1 over classes present in the labels.
    pub fn macro_f1(&self) -> f64 {
        let scores: Vec<f64> = (0..self.classes).filter_map(|c| self.f1(c)).collect();
        scores.iter().sum::<f64>() / scores.len() as f64
    }

    /// CSV with header `label,<class names>` and one row per label class.
    pub fn write_csv<W: Write>(&self, names: &[String], w: W) -> Result<()> {
        if names.len() != self.classes {
            return Err(SpcError::domain(format!(
                "{} class names for {} classes",
                names.len(),
                self.classes
            )));
        }
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["label".to_string()];
        header.extend(names.iter().cloned());
        out.write_record(&header)?;
        for (name, row) in names.iter().zip(&self.counts) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|c| c.to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| SpcError::io("<csv>", e))?;
        Ok(())
    }
}

/// Macro-averaged F1; classes with no labelled samples are left out.
pub fn macro_f1(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::new(preds, labels, classes)?.macro_f1())
}

/// Clip decision from patch probabilities, each patch weighted by its
/// top-1/top-2 margin. Returns the winning class and the weighted means.
pub fn confidence_aggregate(patches: &[ClassProbs]) -> Result<(usize, Vec<f64>)> {
    let first = patches
        .first()
        .ok_or_else(|| SpcError::domain("no patches to aggregate"))?;
    let classes = first.classes();
    let mut beta = vec![0.0; classes];
    for p in patches {
        if p.classes() != classes {
            return Err(SpcError::domain(format!(
                "patch has {} classes, expected {classes}",
                p.classes()
            )));
        }
        let alpha = p.confidence();
        for (b, v) in beta.iter_mut().zip(p.values()) {
            *b += alpha * v;
        }
    }
    let n = patches.len() as f64;
    beta.iter_mut().for_each(|b| *b /= n);
    Ok((argmax(&beta), beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: String,
    pub support: u64,
    pub f1: Option<f64>,
}

/// Classification summary: scalar metrics plus per-class scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub metrics: BTreeMap<String, f64>,
    pub per_class: Vec<ClassScore>,
    pub confusion: ConfusionMatrix,
}

impl ClassificationReport {
    pub fn new(preds: &[usize], labels: &[usize], names: &[String]) -> Result<Self> {
        let confusion = ConfusionMatrix::new(preds, labels, names.len())?;
        let mut metrics = BTreeMap::new();
        metrics.insert("accuracy".to_string(), accuracy(preds, labels)?);
        metrics.insert("macro_f1".to_string(), confusion.macro_f1());
        let per_class = names
            .iter()
            .enumerate()
            .map(|(c, name)| ClassScore {
                class: name.clone(),
                support: confusion.support(c),
                f1: confusion.f1(c),
            })
            .collect();
        Ok(ClassificationReport {
            metrics,
            per_class,
            confusion,
        })
    }
}

/// One multi-task loss case of the shared conformance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    pub probs: Vec<f64>,
    pub label: usize,
    pub reg_preds: [f64; 3],
    pub reg_targets: [f64; 3],
    pub loss: f64,
}

/// One aggregation case of the shared conformance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateVector {
    pub patches: Vec<Vec<f64>>,
    pub class: usize,
    pub pseudo_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceVectors {
    pub multitask_loss: Vec<LossVector>,
    pub confidence_aggregate: Vec<AggregateVector>,
}

fn random_probs<R: rand::Rng>(classes: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..classes).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / z).collect()
}

/// Fixed inputs and expected outputs for cross-implementation checks: the
/// hand-worked cases followed by seeded random ones.
pub fn conformance_vectors() -> Result<ConformanceVectors> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut cases: Vec<(Vec<f64>, usize, [f64; 3], [f64; 3])> = vec![
        (vec![0.0, 1.0], 1, [0.0; 3], [0.0; 3]),
        (vec![0.5, 0.5], 0, [0.0; 3], [0.0; 3]),
        (vec![1.0, 0.0], 0, [10.0, 20.0, 0.5], [0.0; 3]),
        (vec![1.0, 0.0], 1, [0.0; 3], [0.0; 3]),
    ];
    for _ in 0..16 {
        let classes = rng.gen_range(2..=7);
        let label = rng.gen_range(0..classes);
        let reg = |rng: &mut rand_chacha::ChaCha8Rng| [rng.gen_range(0.0..10_000.0), rng.gen_range(0.0..1200.0), rng.gen_range(0.0..100.0)];
        cases.push((random_probs(classes, &mut rng), label, reg(&mut rng), reg(&mut rng)));
    }
    let multitask_loss = cases
        .into_iter()
        .map(|(p, label, reg_preds, reg_targets)| {
            let loss = self::multitask_loss(&ClassProbs::new(p.clone())?, label, reg_preds, reg_targets)?;
            Ok(LossVector {
                probs: p,
                label,
                reg_preds,
                reg_targets,
                loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut batches = vec![
        vec![vec![0.2, 0.5, 0.3]],
        vec![vec![0.8, 0.1, 0.1], vec![0.2, 0.5, 0.3]],
        vec![vec![0.8, 0.1, 0.1], vec![0.2, 0.5, 0.3], vec![1.0 / 3.0; 3]],
        vec![vec![0.25, 0.25, 0.5], vec![0.5, 0.25, 0.25]],
    ];
    for _ in 0..16 {
        let classes = rng.gen_range(2..=7);
        let patches = rng.gen_range(1..=8);
        batches.push((0..patches).map(|_| random_probs(classes, &mut rng)).collect());
    }
    let confidence_aggregate = batches
        .into_iter()
        .map(|patches| {
            let probs = patches.iter().map(|p| ClassProbs::new(p.clone())).collect::<Result<Vec<_>>>()?;
            let (class, pseudo_probs) = self::confidence_aggregate(&probs)?;
            Ok(AggregateVector {
                patches,
                class,
                pseudo_probs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConformanceVectors {
        multitask_loss,
        confidence_aggregate,
    })
}
