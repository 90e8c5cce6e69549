use std::path::PathBuf;

use pop_core::classifier::{HeadModel, Label};
use pop_core::expansion::{ExpansionMode, Polarity};
use pop_core::pipeline::{check_compatible, steps_from_records};
use pop_core::signal::{form_signal, SignalVariant, StepImages};
use pop_core::Error;

use super::clean::{load_records, CleanedSample};
use super::{embedding_store, mode_dir};
use crate::config::{PipelineFlags, Settings};
use crate::io::{load_probes, read_stage_json, write_text};

#[derive(Debug, clap::Args)]
pub struct SignalArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// pop, negative, pos-neg, no-learning or no-expansion.
    #[arg(long)]
    pub variant: Option<String>,

    /// Use the queries shifted one `k_past` into the past.
    #[arg(long)]
    pub misaligned_past: bool,

    /// Embedding table `image_id,f0,...`.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
}

fn cleaned_steps(
    samples: &[CleanedSample],
    store: &pop_core::embedding::EmbeddingStore,
    k_past: usize,
) -> Result<Vec<StepImages>, Error> {
    let mut steps = vec![StepImages::default(); k_past];
    for s in samples {
        if s.step_k == 0 || s.step_k > k_past {
            return Err(Error::invalid(format!(
                "cleaned sample `{}` has step {} outside 1..={k_past}",
                s.sample_id, s.step_k
            )));
        }
        let e = store.lookup(&s.image_id)?.to_vec();
        match s.label {
            Label::Fashionable => steps[s.step_k - 1].positives.push(e),
            Label::Unfashionable => steps[s.step_k - 1].negatives.push(e),
        }
    }
    Ok(steps)
}

pub fn run(settings: &Settings, args: &SignalArgs) -> anyhow::Result<()> {
    let mut expansion = args.pipeline.expansion(settings)?;
    if args.misaligned_past {
        if args
            .pipeline
            .mode
            .as_deref()
            .is_some_and(|m| m.replace('-', "_") != "misaligned_past")
        {
            return Err(Error::invalid("--misaligned-past conflicts with --mode").into());
        }
        expansion.mode = ExpansionMode::MisalignedPast;
    }
    let variant: SignalVariant = match args.variant.as_ref().or(settings.run.signal.variant.as_ref()) {
        Some(v) => v.parse()?,
        None if expansion.mode == ExpansionMode::NoExpansion => SignalVariant::NoExpansion,
        None => SignalVariant::Positive,
    };
    check_compatible(expansion.mode, variant)?;

    let probes = load_probes(&args.pipeline.probes_path(settings)?)?;
    let records = load_records(settings, expansion.mode, &probes)?;
    let store = embedding_store(
        settings,
        args.embeddings.as_deref(),
        expansion.mode,
        &probes,
        records.iter().flatten(),
    )?;
    let k_past = expansion.k_past;
    let clean_root = mode_dir(settings, "clean", expansion.mode);
    let out_root = mode_dir(settings, "signal", expansion.mode).join(variant.as_str());

    for ((probe, dir), recs) in probes.iter().zip(&records) {
        let (steps, model) = match variant {
            SignalVariant::NoExpansion => (steps_from_records(recs, &store, k_past, Polarity::Neutral)?, None),
            SignalVariant::NoLearning => (steps_from_records(recs, &store, k_past, Polarity::Positive)?, None),
            _ => {
                let cleaned: Vec<CleanedSample> = read_stage_json(&clean_root.join(dir).join("cleaned.json"), "clean")?;
                let model: HeadModel = read_stage_json(&clean_root.join(dir).join("model.json"), "clean")?;
                if model.dim() != store.dim() {
                    return Err(Error::invalid(format!(
                        "head for `{dir}` expects {}-d embeddings, store has {}",
                        model.dim(),
                        store.dim()
                    ))
                    .into());
                }
                (cleaned_steps(&cleaned, &store, k_past)?, Some(model))
            }
        };
        let pop = form_signal(
            &probe.image_id,
            probe.observation_week,
            store.lookup(&probe.image_id)?,
            &steps,
            model.as_ref(),
            variant,
        )?;
        write_text(&out_root.join(format!("{dir}.csv")), &pop.to_csv_string())?;
    }
    println!("formed {} {variant} series -> {}", probes.len(), out_root.display());
    Ok(())
}
