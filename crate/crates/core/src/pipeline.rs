//! Stage glue: records to a labelled dataset, the cleaning stage, and the
//! per-step image sets that feed signal forming.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{out_of_fold_probs, Label, LabeledDataset, Sample, TrainConfig};
use crate::confident::{prune_and_retrain, CleanOutcome, ConfidentReport};
use crate::embedding::EmbeddingStore;
use crate::error::{Error, Result};
use crate::expansion::{expand, ExpansionConfig, ExpansionMode, Polarity, QuerySpec};
use crate::gateway::{FetchReport, Gateway, ImageRecord, SearchBackend};
use crate::series::Probe;
use crate::signal::{form_signal, PopSeries, SignalVariant, StepImages};

/// Identifier of one retrieved image within one query. The same image can
/// come back for several queries, so the query key is part of the id.
pub fn sample_id(rec: &ImageRecord) -> String {
    format!("{}@{}", rec.image_id, rec.query_key)
}

/// Tagged records become labelled samples; untagged ones are skipped.
/// Within one query an image id is kept once, at its best rank.
pub fn build_dataset(records: &[ImageRecord], store: &EmbeddingStore) -> Result<LabeledDataset> {
    let mut seen = std::collections::BTreeSet::new();
    let mut samples = Vec::new();
    for rec in records {
        let label = match rec.polarity {
            Polarity::Positive => Label::Fashionable,
            Polarity::Negative => Label::Unfashionable,
            Polarity::Neutral => continue,
        };
        let id = sample_id(rec);
        if !seen.insert(id.clone()) {
            continue;
        }
        samples.push(Sample {
            image_id: id,
            embedding: store.lookup(&rec.image_id)?.to_vec(),
            label,
            step_k: rec.step_k,
        });
    }
    LabeledDataset::new(samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanConfig {
    pub train: TrainConfig,
    pub folds: usize,
    /// Train on every sample and skip pruning.
    pub keep_noisy: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        CleanConfig {
            train: TrainConfig::default(),
            folds: 5,
            keep_noisy: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanStage {
    /// Thresholds and confident joint are always computed; with
    /// `keep_noisy` the pruned set is left empty.
    pub report: ConfidentReport,
    pub keep_noisy: bool,
    pub outcome: CleanOutcome,
}

pub fn clean_dataset(ds: &LabeledDataset, cfg: &CleanConfig) -> Result<CleanStage> {
    let p = out_of_fold_probs(ds, cfg.folds, &cfg.train)?;
    let mut report = ConfidentReport::from_probs(ds, &p)?;
    if cfg.keep_noisy {
        report.pruned_ids.clear();
    }
    let outcome = prune_and_retrain(ds, &report, &cfg.train)?;
    Ok(CleanStage {
        report,
        keep_noisy: cfg.keep_noisy,
        outcome,
    })
}

fn check_step(step_k: usize, k_past: usize) -> Result<usize> {
    if step_k == 0 || step_k > k_past {
        return Err(Error::invalid(format!("step {step_k} outside 1..={k_past}")));
    }
    Ok(step_k - 1)
}

/// Fashionable samples become positives and unfashionable ones negatives,
/// grouped by step; `result[k - 1]` is step `k`.
pub fn steps_from_dataset(ds: &LabeledDataset, k_past: usize) -> Result<Vec<StepImages>> {
    let mut steps = vec![StepImages::default(); k_past];
    for s in &ds.samples {
        let step = &mut steps[check_step(s.step_k, k_past)?];
        match s.label {
            Label::Fashionable => step.positives.push(s.embedding.clone()),
            Label::Unfashionable => step.negatives.push(s.embedding.clone()),
        }
    }
    Ok(steps)
}

/// Raw embeddings of every record with the given polarity, as positives.
pub fn steps_from_records(
    records: &[ImageRecord],
    store: &EmbeddingStore,
    k_past: usize,
    polarity: Polarity,
) -> Result<Vec<StepImages>> {
    let mut steps = vec![StepImages::default(); k_past];
    let mut seen = std::collections::BTreeSet::new();
    for rec in records.iter().filter(|r| r.polarity == polarity) {
        if !seen.insert(sample_id(rec)) {
            continue;
        }
        steps[check_step(rec.step_k, k_past)?]
            .positives
            .push(store.lookup(&rec.image_id)?.to_vec());
    }
    Ok(steps)
}

/// Which variants each expansion mode can feed.
pub fn check_compatible(mode: ExpansionMode, variant: SignalVariant) -> Result<()> {
    let untagged = mode == ExpansionMode::NoExpansion;
    if untagged != (variant == SignalVariant::NoExpansion) {
        return Err(Error::invalid(format!(
            "signal variant `{variant}` cannot be formed from `{mode}` queries"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub expansion: ExpansionConfig,
    pub clean: CleanConfig,
    pub variant: SignalVariant,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            expansion: ExpansionConfig::default(),
            clean: CleanConfig::default(),
            variant: SignalVariant::Positive,
        }
    }
}

impl PipelineConfig {
    /// Standard POP, or the untagged variant for `no_expansion` mode.
    pub fn for_mode(mode: ExpansionMode) -> Self {
        let mut cfg = PipelineConfig::default();
        cfg.expansion.mode = mode;
        if mode == ExpansionMode::NoExpansion {
            cfg.variant = SignalVariant::NoExpansion;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.expansion.validate()?;
        check_compatible(self.expansion.mode, self.variant)
    }
}

/// Everything one probe run produced, stage by stage.
#[derive(Debug, Clone)]
pub struct ProbeRun {
    pub queries: Vec<QuerySpec>,
    pub fetch: FetchReport,
    pub clean: Option<CleanStage>,
    pub pop: PopSeries,
}

/// Forms the signal from fetched records, cleaning first when the variant
/// needs a trained head.
pub fn signal_from_records(
    probe: &Probe,
    probe_embedding: &[f64],
    records: &[ImageRecord],
    store: &EmbeddingStore,
    cfg: &PipelineConfig,
) -> Result<(Option<CleanStage>, PopSeries)> {
    cfg.validate()?;
    let k_past = cfg.expansion.k_past;
    let (clean, steps) = match cfg.variant {
        SignalVariant::NoExpansion => (None, steps_from_records(records, store, k_past, Polarity::Neutral)?),
        SignalVariant::NoLearning => (None, steps_from_records(records, store, k_past, Polarity::Positive)?),
        _ => {
            let ds = build_dataset(records, store)?;
            let stage = clean_dataset(&ds, &cfg.clean)?;
            let steps = steps_from_dataset(&stage.outcome.cleaned, k_past)?;
            (Some(stage), steps)
        }
    };
    let model = clean.as_ref().map(|c| &c.outcome.model);
    let pop = form_signal(
        &probe.image_id,
        probe.observation_week,
        probe_embedding,
        &steps,
        model,
        cfg.variant,
    )?;
    Ok((clean, pop))
}

/// expand, fetch, clean, form the signal. Any failed query aborts the run.
pub fn run_probe<B: SearchBackend>(
    probe: &Probe,
    store: &EmbeddingStore,
    gateway: &Gateway<B>,
    cfg: &PipelineConfig,
) -> Result<ProbeRun> {
    cfg.validate()?;
    let queries = expand(probe, &cfg.expansion)?;
    let fetch = gateway.fetch_all(&queries)?;
    if let Some(f) = fetch.failures.first() {
        let msg = format!(
            "{} of {} queries failed; first `{}`: {}",
            fetch.failures.len(),
            queries.len(),
            f.query_key,
            f.message
        );
        return Err(if f.missing_data {
            Error::MissingData(msg)
        } else {
            Error::invalid(msg)
        });
    }
    let records: Vec<ImageRecord> = fetch.records().cloned().collect();
    let probe_embedding = store.lookup(&probe.image_id)?;
    let (clean, pop) = signal_from_records(probe, probe_embedding, &records, store, cfg)?;
    Ok(ProbeRun {
        queries,
        fetch,
        clean,
        pop,
    })
}

/// Per-step record counts by polarity letter, for audit manifests.
pub fn record_counts(report: &FetchReport) -> BTreeMap<String, usize> {
    report.results.iter().map(|(k, v)| (k.clone(), v.len())).collect()
}
