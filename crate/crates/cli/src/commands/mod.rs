pub mod clean;
pub mod evaluate;
pub mod forecast;
pub mod mine;
pub mod signal;
pub mod styles;
pub mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pop_core::embedding::EmbeddingStore;
use pop_core::expansion::{ExpansionMode, Polarity};
use pop_core::gateway::ImageRecord;
use pop_core::series::Probe;
use pop_core::Error;

use crate::config::Settings;
use crate::{Cli, Command};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::resolve(&cli)?;
    match &cli.command {
        Command::Mine(args) => mine::run(&settings, args),
        Command::Clean(args) => clean::run(&settings, args),
        Command::Signal(args) => signal::run(&settings, args),
        Command::Forecast(args) => forecast::run(&settings, args),
        Command::Evaluate(args) => evaluate::run(&settings, args),
        Command::Styles(args) => styles::run(&settings, args),
        Command::Synthetic(args) => synthetic::run(&settings, args),
    }
}

pub fn mode_dir(settings: &Settings, stage: &str, mode: ExpansionMode) -> PathBuf {
    settings.out_dir.join(stage).join(mode.as_str())
}

/// Loads the embedding file, or generates one from `--synth-embeddings`.
///
/// Generated embeddings put probes and positive hits in class 0, negative
/// hits in class 1, and alternate untagged hits by rank. An image seen by
/// several queries takes the class of its first record. The generated table
/// is written under `embeddings/` for audit.
pub fn embedding_store<'a>(
    settings: &Settings,
    path: Option<&Path>,
    mode: ExpansionMode,
    probes: &[(Probe, String)],
    records: impl IntoIterator<Item = &'a ImageRecord>,
) -> Result<EmbeddingStore, Error> {
    if let Some(spec) = &settings.synth_embeddings {
        let mut class: BTreeMap<&str, usize> = BTreeMap::new();
        for (p, _) in probes {
            class.insert(&p.image_id, 0);
        }
        for rec in records {
            let c = match rec.polarity {
                Polarity::Positive => 0,
                Polarity::Negative => 1,
                Polarity::Neutral => (rec.rank % 2) as usize,
            };
            class.entry(&rec.image_id).or_insert(c);
        }
        let store = spec.generate(class)?;
        let audit = settings
            .out_dir
            .join("embeddings")
            .join(format!("{}.csv", mode.as_str()));
        crate::io::ensure_parent(&audit)?;
        store.save(&audit)?;
        return Ok(store);
    }
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| settings.run.embeddings.clone())
        .ok_or_else(|| Error::invalid("no embeddings; pass --embeddings or --synth-embeddings"))?;
    if !path.exists() {
        return Err(Error::invalid(format!(
            "embedding file {} does not exist",
            path.display()
        )));
    }
    EmbeddingStore::load(&path)
}
