//! The TOML run configuration and how command-line flags override it.
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use pop_core::embedding::SynthEmbeddingSpec;
use pop_core::expansion::ExpansionConfig;
use pop_core::gateway::GatewayConfig;
use pop_core::pipeline::CleanConfig;
use pop_core::synthetic::SyntheticConfig;
use pop_core::Error;
use serde::Deserialize;

use crate::io::read_text;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub probes: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub synth_embeddings: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub expansion: ExpansionConfig,
    pub gateway: GatewayConfig,
    pub clean: CleanConfig,
    pub signal: SignalSection,
    pub forecast: ForecastSection,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSection {
    pub variant: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub method: Option<String>,
    pub horizon: Option<usize>,
    pub methods: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = read_text(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.probes,
            &mut cfg.embeddings,
            &mut cfg.out_dir,
            &mut cfg.gateway.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.gateway.fixture_dir);
        Ok(cfg)
    }
}

/// Settings every command sees after merging the config file and flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub run: RunConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub synth_embeddings: Option<SynthEmbeddingSpec>,
}

impl Settings {
    pub fn resolve(cli: &crate::Cli) -> Result<Self, Error> {
        let run = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(run.seed).unwrap_or(0);
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| run.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let synth_embeddings = cli
            .synth_embeddings
            .as_deref()
            .or(run.synth_embeddings.as_deref())
            .map(str::parse)
            .transpose()?;
        if let Some(jobs) = cli.jobs.or(run.jobs) {
            if jobs == 0 {
                return Err(Error::invalid("--jobs must be at least 1"));
            }
            // A pool built earlier in the same process keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        }
        Ok(Settings {
            run,
            seed,
            out_dir,
            synth_embeddings,
        })
    }
}

/// Flags shared by every stage that walks the probe manifest.
#[derive(Debug, Clone, clap::Args)]
pub struct PipelineFlags {
    /// JSON array of `{image_id, tags, observation_week}`.
    #[arg(long, value_name = "PATH")]
    pub probes: Option<PathBuf>,

    /// Query expansion mode: standard, no-expansion or misaligned-past.
    #[arg(long)]
    pub mode: Option<String>,

    /// Number of past steps (the signal length).
    #[arg(long)]
    pub k_past: Option<usize>,

    /// Upload window of each query, in weeks.
    #[arg(long)]
    pub window: Option<usize>,

    /// Tag appended to fashionable queries.
    #[arg(long)]
    pub positive_tag: Option<String>,

    /// Tag appended to unfashionable queries.
    #[arg(long)]
    pub negative_tag: Option<String>,
}

impl PipelineFlags {
    pub fn expansion(&self, settings: &Settings) -> Result<ExpansionConfig, Error> {
        let mut cfg = settings.run.expansion.clone();
        if let Some(m) = &self.mode {
            cfg.mode = m.parse()?;
        }
        if let Some(k) = self.k_past {
            cfg.k_past = k;
        }
        if let Some(w) = self.window {
            cfg.window_w = w;
        }
        if let Some(t) = &self.positive_tag {
            cfg.positive_tag = t.clone();
        }
        if let Some(t) = &self.negative_tag {
            cfg.negative_tag = t.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probes_path(&self, settings: &Settings) -> Result<PathBuf, Error> {
        self.probes
            .clone()
            .or_else(|| settings.run.probes.clone())
            .ok_or_else(|| Error::invalid("no probe manifest; pass --probes or set `probes` in the config"))
    }
}
