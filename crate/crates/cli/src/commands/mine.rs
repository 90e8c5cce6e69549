use std::collections::BTreeMap;
use std::path::PathBuf;

use pop_core::expansion::expand;
use pop_core::gateway::{BackendKind, FetchFailure, Gateway, GatewayConfig};
use pop_core::pipeline::record_counts;
use pop_core::Error;
use serde::Serialize;

use super::mode_dir;
use crate::config::{PipelineFlags, Settings};
use crate::io::{load_probes, require_dir, write_json};

#[derive(Debug, clap::Args)]
pub struct MineArgs {
    #[command(flatten)]
    pub pipeline: PipelineFlags,

    /// Hits kept per query.
    #[arg(long)]
    pub m_per_query: Option<usize>,

    /// Directory of fixture responses.
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,

    /// Response cache directory.
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,

    /// Search backend: fixture or live.
    #[arg(long)]
    pub backend: Option<String>,
}

#[derive(Serialize)]
struct QueryEntry<'a> {
    key: String,
    text: String,
    #[serde(flatten)]
    spec: &'a pop_core::expansion::QuerySpec,
    records: usize,
}

#[derive(Serialize)]
struct ProbeSummary {
    probe_id: String,
    dir: String,
    queries: usize,
    records: usize,
    failures: usize,
    /// Records per `step:polarity`.
    counts: BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct MineManifest<'a> {
    mode: String,
    k_past: usize,
    window_w: usize,
    m_per_query: usize,
    queries: usize,
    records: usize,
    probes: Vec<ProbeSummary>,
    failures: &'a [(String, FetchFailure)],
}

fn gateway_config(settings: &Settings, args: &MineArgs) -> Result<GatewayConfig, Error> {
    let mut cfg = settings.run.gateway.clone();
    if let Some(m) = args.m_per_query {
        cfg.m_per_query = m;
    }
    if let Some(dir) = &args.fixtures {
        cfg.fixture_dir = dir.clone();
    }
    if let Some(dir) = &args.cache {
        cfg.cache_dir = Some(dir.clone());
    }
    if let Some(b) = &args.backend {
        cfg.backend = match b.as_str() {
            "fixture" => BackendKind::Fixture,
            "live" => BackendKind::Live,
            other => return Err(Error::invalid(format!("unknown backend `{other}`"))),
        };
    }
    cfg.validate()?;
    if cfg.backend == BackendKind::Fixture {
        require_dir(&cfg.fixture_dir, "fixture directory")?;
    }
    Ok(cfg)
}

pub fn run(settings: &Settings, args: &MineArgs) -> anyhow::Result<()> {
    let expansion = args.pipeline.expansion(settings)?;
    let gateway_cfg = gateway_config(settings, args)?;
    let probes = load_probes(&args.pipeline.probes_path(settings)?)?;
    let gateway = Gateway::from_config(&gateway_cfg)?;
    let root = mode_dir(settings, "mine", expansion.mode);

    let mut summaries = Vec::with_capacity(probes.len());
    let mut failures = Vec::new();
    for (probe, dir) in &probes {
        let specs = expand(probe, &expansion)?;
        let report = gateway.fetch_all(&specs)?;
        let entries: Vec<QueryEntry> = specs
            .iter()
            .map(|q| {
                let key = q.canonical_key();
                let records = report.results.get(&key).map_or(0, Vec::len);
                QueryEntry {
                    text: q.query_text(),
                    key,
                    spec: q,
                    records,
                }
            })
            .collect();
        write_json(&root.join(dir).join("queries.json"), &entries)?;
        write_json(&root.join(dir).join("records.json"), &report)?;
        summaries.push(ProbeSummary {
            probe_id: probe.image_id.clone(),
            dir: dir.clone(),
            queries: specs.len(),
            records: report.record_count(),
            failures: report.failures.len(),
            counts: record_counts(&report),
        });
        failures.extend(report.failures.into_iter().map(|f| (probe.image_id.clone(), f)));
    }
    let manifest = MineManifest {
        mode: expansion.mode.to_string(),
        k_past: expansion.k_past,
        window_w: expansion.window_w,
        m_per_query: gateway_cfg.m_per_query,
        queries: summaries.iter().map(|s| s.queries).sum(),
        records: summaries.iter().map(|s| s.records).sum(),
        probes: summaries,
        failures: &failures,
    };
    write_json(&root.join("manifest.json"), &manifest)?;
    println!(
        "mined {} probes: {} queries, {} records -> {}",
        manifest.probes.len(),
        manifest.queries,
        manifest.records,
        root.display()
    );
    if !failures.is_empty() {
        for (probe, f) in &failures {
            eprintln!("failed: probe `{probe}` query `{}`: {}", f.query_key, f.message);
        }
        let msg = format!("{} queries failed", failures.len());
        let err = if failures.iter().any(|(_, f)| f.missing_data) {
            Error::MissingData(msg)
        } else {
            Error::invalid(msg)
        };
        return Err(err.into());
    }
    Ok(())
}
