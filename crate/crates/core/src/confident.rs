//! Confident learning for the binary fashionable/unfashionable labels:
//! per-class self-confidence thresholds, the thresholded confident joint,
//! off-diagonal pruning, and retraining on what survives.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::classifier::{train_head, HeadModel, Label, LabeledDataset, ProbabilityMatrix, TrainConfig};
use crate::error::{Error, Result};

/// Mean predicted probability of class `l` over the samples labeled `l`,
/// indexed by [`Label::index`].
pub fn self_confidence_thresholds(p: &ProbabilityMatrix, labels: &[Label]) -> Result<[f64; 2]> {
    check_lengths(p, labels)?;
    let mut t = [0.0; 2];
    for label in Label::ALL {
        let (sum, count) = labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == label)
            .fold((0.0, 0usize), |(s, c), (i, _)| (s + p.prob(i, label), c + 1));
        if count == 0 {
            return Err(Error::invalid(format!(
                "no samples labeled {label:?}; its threshold is undefined"
            )));
        }
        t[label.index()] = sum / count as f64;
    }
    Ok(t)
}

fn check_lengths(p: &ProbabilityMatrix, labels: &[Label]) -> Result<()> {
    if p.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows for {} labels",
            p.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Counts `C[h][l]` and the sample indices behind each cell.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfidentJoint {
    pub counts: [[usize; 2]; 2],
    pub members: [[Vec<usize>; 2]; 2],
}

impl ConfidentJoint {
    /// Samples sitting in any off-diagonal cell, ascending.
    pub fn off_diagonal(&self) -> BTreeSet<usize> {
        self.members[0][1].iter().chain(&self.members[1][0]).copied().collect()
    }

    pub fn trace(&self) -> usize {
        self.counts[0][0] + self.counts[1][1]
    }
}

/// Sample `i` labeled `h` joins cell `(h, l)` for every `l` with
/// `P[i, l] >= t_l`; it can therefore sit in zero, one or both cells of its row.
pub fn confident_joint(p: &ProbabilityMatrix, labels: &[Label], thresholds: [f64; 2]) -> Result<ConfidentJoint> {
    check_lengths(p, labels)?;
    let mut cj = ConfidentJoint::default();
    for (i, &noisy) in labels.iter().enumerate() {
        let h = noisy.index();
        for l in 0..2 {
            if p.rows[i][l] >= thresholds[l] {
                cj.counts[h][l] += 1;
                cj.members[h][l].push(i);
            }
        }
    }
    Ok(cj)
}

/// Audit record of one confident-learning pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentReport {
    /// `[t_fashionable, t_unfashionable]`.
    pub thresholds: [f64; 2],
    pub confident_joint: [[usize; 2]; 2],
    pub pruned_ids: BTreeSet<String>,
}

impl ConfidentReport {
    pub fn from_probs(ds: &LabeledDataset, p: &ProbabilityMatrix) -> Result<Self> {
        let labels = ds.labels();
        let thresholds = self_confidence_thresholds(p, &labels)?;
        let cj = confident_joint(p, &labels, thresholds)?;
        Ok(ConfidentReport {
            thresholds,
            confident_joint: cj.counts,
            pruned_ids: cj
                .off_diagonal()
                .into_iter()
                .map(|i| ds.samples[i].image_id.clone())
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// Surviving positive (`M'`) and negative (`M''`) counts at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepCounts {
    pub positive: usize,
    pub negative: usize,
}

pub fn step_counts(ds: &LabeledDataset) -> BTreeMap<usize, StepCounts> {
    let mut counts: BTreeMap<usize, StepCounts> = BTreeMap::new();
    for s in &ds.samples {
        let c = counts.entry(s.step_k).or_default();
        match s.label {
            Label::Fashionable => c.positive += 1,
            Label::Unfashionable => c.negative += 1,
        }
    }
    counts
}

/// Drops every sample named in `report.pruned_ids`.
pub fn prune(ds: &LabeledDataset, report: &ConfidentReport) -> Result<LabeledDataset> {
    let known: BTreeSet<&str> = ds.samples.iter().map(|s| s.image_id.as_str()).collect();
    if let Some(stray) = report.pruned_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::invalid(format!(
            "report prunes `{stray}`, which is not in the dataset"
        )));
    }
    let cleaned = LabeledDataset::new(
        ds.samples
            .iter()
            .filter(|s| !report.pruned_ids.contains(&s.image_id))
            .cloned()
            .collect(),
    )?;
    for label in Label::ALL {
        if cleaned.class_count(label) == 0 {
            return Err(Error::invalid(format!(
                "pruning removed every {label:?} sample; cannot retrain"
            )));
        }
    }
    Ok(cleaned)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub cleaned: LabeledDataset,
    pub model: HeadModel,
    pub step_counts: BTreeMap<usize, StepCounts>,
}

/// Prunes the report's off-diagonal samples and retrains the head on the rest.
pub fn prune_and_retrain(ds: &LabeledDataset, report: &ConfidentReport, cfg: &TrainConfig) -> Result<CleanOutcome> {
    let cleaned = prune(ds, report)?;
    let model = train_head(&cleaned, cfg)?;
    Ok(CleanOutcome {
        step_counts: step_counts(&cleaned),
        cleaned,
        model,
    })
}
