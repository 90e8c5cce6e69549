use std::path::PathBuf;

use pop_core::expansion::ExpansionMode;
use pop_core::synthetic::{run_experiment, SyntheticConfig, SyntheticReport, World};

use crate::config::Settings;
use crate::io::{write_json, write_text};

#[derive(Debug, clap::Args)]
pub struct SyntheticArgs {
    /// Seeds to run; defaults to the global seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,

    /// Pipeline modes to compare against the run without POP.
    #[arg(long, value_delimiter = ',', default_value = "standard,misaligned_past,no_expansion")]
    pub modes: Vec<String>,

    /// Write fixtures, probes, embeddings and sales of the first seed's world here.
    #[arg(long, value_name = "DIR")]
    pub export: Option<PathBuf>,

    /// Override the number of training products.
    #[arg(long)]
    pub n_train: Option<usize>,

    /// Override the number of test products.
    #[arg(long)]
    pub n_test: Option<usize>,
}

pub fn run(settings: &Settings, args: &SyntheticArgs) -> anyhow::Result<()> {
    let modes: Vec<ExpansionMode> = args.modes.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    let mut base: SyntheticConfig = settings.run.synthetic.clone();
    if let Some(n) = args.n_train {
        base.n_train = n;
    }
    if let Some(n) = args.n_test {
        base.n_test = n;
    }
    let seeds = if args.seeds.is_empty() {
        vec![settings.seed]
    } else {
        args.seeds.clone()
    };
    let config_for = |seed| SyntheticConfig { seed, ..base.clone() };

    if let Some(dir) = &args.export {
        let cfg = config_for(seeds[0]);
        cfg.validate()?;
        World::generate(&cfg)?.export(dir, &modes)?;
        write_text(&dir.join("pop.toml"), &world_config(&cfg))?;
        println!("exported seed {} world -> {}", cfg.seed, dir.display());
        return Ok(());
    }

    let mut reports: Vec<SyntheticReport> = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let r = run_experiment(&config_for(seed), &modes)?;
        let mut line = format!("seed {seed}: WAPE without POP {:.2}", r.wape_without_pop);
        for m in &r.modes {
            let gain = r.relative_gain(m.mode).unwrap_or(f64::NAN);
            line.push_str(&format!(", {} {:.2} (gain {:+.1}%)", m.mode, m.wape, 100.0 * gain));
        }
        println!("{line}");
        reports.push(r);
    }
    let out = settings.out_dir.join("synthetic").join("report.json");
    write_json(&out, &reports)?;
    println!("report -> {}", out.display());
    Ok(())
}

/// Run configuration matching an exported world, for `--config`.
fn world_config(cfg: &SyntheticConfig) -> String {
    format!(
        "probes = \"probes.json\"\n\
         embeddings = \"embeddings.csv\"\n\
         seed = {seed}\n\
         \n\
         [expansion]\n\
         k_past = {k}\n\
         window_w = {w}\n\
         \n\
         [gateway]\n\
         m_per_query = {m}\n\
         fixture_dir = \"fixtures\"\n\
         \n\
         [clean.train]\n\
         epochs = {epochs}\n\
         learning_rate = {lr:?}\n\
         weight_decay = {wd:?}\n\
         hidden = {hidden}\n",
        seed = cfg.seed,
        k = cfg.k_past,
        w = cfg.window_w,
        m = cfg.m_per_query,
        epochs = cfg.train.epochs,
        lr = cfg.train.learning_rate,
        wd = cfg.train.weight_decay,
        hidden = cfg.train.hidden,
    )
}
