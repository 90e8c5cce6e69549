use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use pop_core::classifier::Label;
use pop_core::expansion::ExpansionMode;
use pop_core::gateway::{FetchReport, ImageRecord};
use pop_core::pipeline::{build_dataset, clean_dataset, sample_id, CleanConfig};
use pop_core::Error;
use serde::{Deserialize, Serialize};

use super::{embedding_store, mode_dir};
use crate::config::{PipelineFlags, Settings};
use crate::io::{load_probes, read_stage_json, write_json};

#[derive(Debug, clap::Args)]
pub struct CleanArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Embedding table `image_id,f0,...`.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,

    /// Train on every sample without pruning.
    #[arg(long)]
    pub keep_noisy: bool,

    /// Training epochs of the head.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,

    /// L2 penalty on the weights.
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Hidden units of the head.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Cross-validation folds for out-of-sample probabilities.
    #[arg(long)]
    pub folds: Option<usize>,
}

/// One kept sample, as read back by the signal stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CleanedSample {
    pub sample_id: String,
    pub image_id: String,
    pub label: Label,
    pub step_k: usize,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    probe_id: &'a str,
    keep_noisy: bool,
    samples: usize,
    kept: usize,
    thresholds: [f64; 2],
    confident_joint: [[usize; 2]; 2],
    pruned_ids: &'a std::collections::BTreeSet<String>,
}

#[derive(Serialize)]
struct ProbeSummary {
    probe_id: String,
    samples: usize,
    pruned: usize,
    kept: usize,
}

#[derive(Serialize)]
struct CleanManifest<'a> {
    mode: String,
    config: &'a CleanConfig,
    probes: Vec<ProbeSummary>,
}

fn clean_config(settings: &Settings, args: &CleanArgs) -> Result<CleanConfig, Error> {
    let mut cfg = settings.run.clean.clone();
    cfg.train.seed = settings.seed;
    cfg.keep_noisy |= args.keep_noisy;
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.train.weight_decay = v;
    }
    if let Some(v) = args.hidden {
        cfg.train.hidden = v;
    }
    if let Some(v) = args.folds {
        cfg.folds = v;
    }
    if cfg.folds < 2 {
        return Err(Error::invalid("--folds must be at least 2"));
    }
    Ok(cfg)
}

/// Every probe's mined records, in manifest order.
pub fn load_records(
    settings: &Settings,
    mode: ExpansionMode,
    probes: &[(pop_core::series::Probe, String)],
) -> Result<Vec<Vec<ImageRecord>>, Error> {
    let root = mode_dir(settings, "mine", mode);
    probes
        .iter()
        .map(|(_, dir)| {
            let report: FetchReport = read_stage_json(&root.join(dir).join("records.json"), "mine")?;
            if !report.is_complete() {
                return Err(Error::MissingData(format!(
                    "mined records for `{dir}` have {} failed queries",
                    report.failures.len()
                )));
            }
            Ok(report.records().cloned().collect())
        })
        .collect()
}

pub fn run(settings: &Settings, args: &CleanArgs) -> anyhow::Result<()> {
    let expansion = args.pipeline.expansion(settings)?;
    if expansion.mode == ExpansionMode::NoExpansion {
        return Err(Error::invalid("untagged queries carry no labels to clean").into());
    }
    let cfg = clean_config(settings, args)?;
    let probes = load_probes(&args.pipeline.probes_path(settings)?)?;
    let records = load_records(settings, expansion.mode, &probes)?;
    let store = embedding_store(
        settings,
        args.embeddings.as_deref(),
        expansion.mode,
        &probes,
        records.iter().flatten(),
    )?;

    let root = mode_dir(settings, "clean", expansion.mode);
    let mut summaries = Vec::with_capacity(probes.len());
    for ((probe, dir), recs) in probes.iter().zip(&records) {
        let image_of: BTreeMap<String, &str> = recs.iter().map(|r| (sample_id(r), r.image_id.as_str())).collect();
        let ds = build_dataset(recs, &store)?;
        let stage = clean_dataset(&ds, &cfg).with_context(|| format!("cleaning probe `{}`", probe.image_id))?;
        let out = root.join(dir);
        let cleaned: Vec<CleanedSample> = stage
            .outcome
            .cleaned
            .samples
            .iter()
            .map(|s| CleanedSample {
                sample_id: s.image_id.clone(),
                image_id: image_of[&s.image_id].to_string(),
                label: s.label,
                step_k: s.step_k,
            })
            .collect();
        write_json(
            &out.join("report.json"),
            &ReportFile {
                probe_id: &probe.image_id,
                keep_noisy: stage.keep_noisy,
                samples: ds.len(),
                kept: cleaned.len(),
                thresholds: stage.report.thresholds,
                confident_joint: stage.report.confident_joint,
                pruned_ids: &stage.report.pruned_ids,
            },
        )?;
        write_json(&out.join("model.json"), &stage.outcome.model)?;
        write_json(&out.join("cleaned.json"), &cleaned)?;
        write_json(&out.join("step_counts.json"), &stage.outcome.step_counts)?;
        summaries.push(ProbeSummary {
            probe_id: probe.image_id.clone(),
            samples: ds.len(),
            pruned: stage.report.pruned_ids.len(),
            kept: cleaned.len(),
        });
    }
    let pruned: usize = summaries.iter().map(|s| s.pruned).sum();
    let samples: usize = summaries.iter().map(|s| s.samples).sum();
    write_json(
        &root.join("manifest.json"),
        &CleanManifest {
            mode: expansion.mode.to_string(),
            config: &cfg,
            probes: summaries,
        },
    )?;
    println!(
        "cleaned {} probes: pruned {pruned} of {samples} samples -> {}",
        probes.len(),
        root.display()
    );
    Ok(())
}
