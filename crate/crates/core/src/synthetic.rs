//! A seeded synthetic world for end-to-end experiments.
//!
//! A latent fashion trend `f(w)` (a unit vector in a small style subspace)
//! drifts week by week. Images retrieved for a fashionable query at week `w`
//! sit at `c_tag + a·f(w)`, unfashionable ones at `c_tag − a·f(w)`, and a
//! fraction of hits carry the wrong polarity. A product with style `v` sells
//! in proportion to `exp(γ·⟨v, f(t)⟩)` at its release week `t`, so the
//! recent past of the trend is informative about its sales.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::classifier::TrainConfig;
use crate::embedding::{random_unit, EmbeddingStore};
use crate::error::{Error, Result};
use crate::expansion::{expand, ExpansionMode, Polarity, QuerySpec};
use crate::forecast::{fit_exo_ridge, ExoExample};
use crate::gateway::{write_fixture, Gateway, Hit, SearchBackend};
use crate::metrics::{mae, wape};
use crate::pipeline::{run_probe, PipelineConfig};
use crate::series::{Probe, WeekIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub dim: usize,
    pub style_dim: usize,
    pub colors: Vec<String>,
    pub categories: Vec<String>,
    pub k_past: usize,
    pub window_w: usize,
    pub m_per_query: usize,
    /// Correlation time of the trend, in weeks.
    pub trend_tau: f64,
    /// Distance of fashionable and unfashionable images from the tag centroid.
    pub trend_strength: f64,
    pub image_noise: f64,
    pub flip_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub first_release: i64,
    pub last_release: i64,
    pub sales_weeks: usize,
    pub horizon: usize,
    pub sales_gain: f64,
    pub sales_noise: f64,
    pub ridge_lambda: f64,
    pub train: TrainConfig,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let words = |w: &[&str]| w.iter().map(|s| s.to_string()).collect();
        SyntheticConfig {
            seed: 0,
            dim: 16,
            style_dim: 3,
            colors: words(&["red", "blue", "black"]),
            categories: words(&["dress", "long sleeve", "skirt"]),
            k_past: 16,
            window_w: 4,
            m_per_query: 6,
            trend_tau: 30.0,
            trend_strength: 3.0,
            image_noise: 1.0,
            flip_rate: 0.1,
            n_train: 120,
            n_test: 60,
            first_release: 200,
            last_release: 600,
            sales_weeks: 12,
            horizon: 6,
            sales_gain: 1.0,
            sales_noise: 0.1,
            ridge_lambda: 30.0,
            train: TrainConfig {
                hidden: 32,
                ..TrainConfig::default()
            },
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synthetic config: {m}")));
        if self.dim < self.style_dim + 1 || self.style_dim == 0 {
            return bad("need 0 < style_dim < dim");
        }
        if self.colors.is_empty() || self.categories.is_empty() {
            return bad("need at least one color and one category");
        }
        if self.n_train < 2 || self.n_test == 0 {
            return bad("need at least 2 training and 1 test product");
        }
        if self.first_release > self.last_release || self.first_release < (2 * self.k_past + self.window_w) as i64 {
            return bad("release weeks must leave room for the misaligned past");
        }
        if self.horizon == 0 || self.horizon > self.sales_weeks {
            return bad("horizon must lie in 1..=sales_weeks");
        }
        if !(0.0..=0.5).contains(&self.flip_rate) {
            return bad("flip rate must lie in [0, 0.5]");
        }
        if !(self.trend_tau > 0.0) {
            return bad("trend_tau must be positive");
        }
        Ok(())
    }

    pub fn pipeline(&self, mode: ExpansionMode) -> PipelineConfig {
        let mut cfg = PipelineConfig::for_mode(mode);
        cfg.expansion.k_past = self.k_past;
        cfg.expansion.window_w = self.window_w;
        cfg.clean.train = TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub probe: Probe,
    pub color: usize,
    pub category: usize,
    pub style: Vec<f64>,
    pub embedding: Vec<f64>,
    pub sales: Vec<f64>,
    pub train: bool,
}

impl Product {
    /// One-hot color followed by one-hot category.
    pub fn static_features(&self, n_colors: usize, n_categories: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_colors + n_categories];
        v[self.color] = 1.0;
        v[n_colors + self.category] = 1.0;
        v
    }
}

pub struct World {
    pub cfg: SyntheticConfig,
    /// `dim × style_dim`, orthonormal columns.
    basis: Vec<Vec<f64>>,
    centroids: BTreeMap<(String, String), Vec<f64>>,
    /// Unit trend direction for weeks `0..trend.len()`.
    trend: Vec<Vec<f64>>,
    pub products: Vec<Product>,
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn orthonormal_basis(rng: &mut ChaCha8Rng, dim: usize, r: usize) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    while cols.len() < r {
        let mut v = random_unit(rng, dim);
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    cols
}

fn stable_seed(parts: &[&str]) -> u64 {
    let mut h = Sha1::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 20 bytes"))
}

impl World {
    pub fn generate(cfg: &SyntheticConfig) -> Result<World> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let basis = orthonormal_basis(&mut rng, cfg.dim, cfg.style_dim);

        let mut centroids = BTreeMap::new();
        for c in &cfg.colors {
            for k in &cfg.categories {
                let v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                centroids.insert((c.clone(), k.clone()), v);
            }
        }

        let weeks = (cfg.last_release + 1) as usize;
        let rho = (-1.0 / cfg.trend_tau).exp();
        let innov = (1.0 - rho * rho).sqrt();
        let mut g: Vec<f64> = (0..cfg.style_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut trend = Vec::with_capacity(weeks);
        for _ in 0..weeks {
            trend.push(unit(g.clone()));
            for x in g.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *x = rho * *x + innov * e;
            }
        }

        let color_mult: Vec<f64> = cfg.colors.iter().map(|_| rng.random_range(0.7..1.3)).collect();
        let cat_mult: Vec<f64> = cfg.categories.iter().map(|_| rng.random_range(0.7..1.3)).collect();
        let sales_noise = Normal::new(0.0, cfg.sales_noise).map_err(|e| Error::invalid(e.to_string()))?;
        let n = cfg.n_train + cfg.n_test;
        let mut products = Vec::with_capacity(n);
        for i in 0..n {
            let color = rng.random_range(0..cfg.colors.len());
            let category = rng.random_range(0..cfg.categories.len());
            let week = rng.random_range(cfg.first_release..=cfg.last_release);
            let style = random_unit(&mut rng, cfg.style_dim);
            let c = &centroids[&(cfg.colors[color].clone(), cfg.categories[category].clone())];
            let mut embedding = c.clone();
            for (j, s) in style.iter().enumerate() {
                for (e, b) in embedding.iter_mut().zip(&basis[j]) {
                    *e += cfg.trend_strength * s * b;
                }
            }
            for e in embedding.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *e += cfg.image_noise * z;
            }
            let fashion: f64 = style.iter().zip(&trend[week as usize]).map(|(a, b)| a * b).sum();
            let level = 10.0 * color_mult[color] * cat_mult[category] * (cfg.sales_gain * fashion).exp();
            let sales = (0..cfg.sales_weeks)
                .map(|h| {
                    let shape = (-(h as f64) / 8.0).exp() + 0.2;
                    (level * shape * (1.0 + sales_noise.sample(&mut rng))).max(0.0)
                })
                .collect();
            let probe = Probe::new(
                format!("probe-{i:03}"),
                [cfg.colors[color].as_str(), cfg.categories[category].as_str()],
                WeekIndex(week),
            )?;
            products.push(Product {
                probe,
                color,
                category,
                style,
                embedding,
                sales,
                train: i < cfg.n_train,
            });
        }
        Ok(World {
            cfg: cfg.clone(),
            basis,
            centroids,
            trend,
            products,
        })
    }

    pub fn trend_at(&self, week: i64) -> Result<&[f64]> {
        usize::try_from(week)
            .ok()
            .and_then(|w| self.trend.get(w))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("week {week} outside the simulated trend")))
    }

    /// Id of the hit at 0-based `rank` for a query key.
    pub fn image_id(&self, key: &str, rank: usize) -> String {
        let digest = stable_seed(&[&self.cfg.seed.to_string(), key]);
        format!("img-{digest:016x}-{rank:02}")
    }

    /// Embedding of a hit and whether its polarity disagrees with the query.
    pub fn image(&self, q: &QuerySpec, rank: usize) -> Result<(Vec<f64>, bool)> {
        let key = q.canonical_key();
        let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(&[&self.cfg.seed.to_string(), &key, &rank.to_string()]));
        let tokens = q.base_tokens();
        let tag = self
            .centroids
            .iter()
            .find(|((c, k), _)| tokens.contains(c) && tokens.contains(k))
            .map(|(_, v)| v)
            .ok_or_else(|| Error::invalid(format!("query `{key}` names no known color and category")))?;
        let week = rng.random_range(q.interval.start().0..=q.interval.end().0);
        let (sign, flipped) = match q.polarity {
            Polarity::Positive | Polarity::Negative => {
                let flip = rng.random::<f64>() < self.cfg.flip_rate;
                let base = if q.polarity == Polarity::Positive { 1.0 } else { -1.0 };
                (if flip { -base } else { base }, flip)
            }
            Polarity::Neutral => (if rng.random::<bool>() { 1.0 } else { -1.0 }, false),
        };
        let f = self.trend_at(week)?;
        let mut x = tag.clone();
        for (j, fj) in f.iter().enumerate() {
            for (e, b) in x.iter_mut().zip(&self.basis[j]) {
                *e += sign * self.cfg.trend_strength * fj * b;
            }
        }
        for e in x.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *e += self.cfg.image_noise * z;
        }
        Ok((x, flipped))
    }

    pub fn queries(&self, product: &Product, mode: ExpansionMode) -> Result<Vec<QuerySpec>> {
        expand(&product.probe, &self.cfg.pipeline(mode).expansion)
    }

    /// Probe embeddings plus every image any product's queries can return.
    pub fn store(&self, modes: &[ExpansionMode]) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::new(self.cfg.dim)?;
        for p in &self.products {
            store.insert(p.probe.image_id.clone(), p.embedding.clone())?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for mode in modes {
            for p in &self.products {
                for q in self.queries(p, *mode)? {
                    let key = q.canonical_key();
                    if !seen.insert(key.clone()) {
                        continue;
                    }
                    for rank in 0..self.cfg.m_per_query {
                        store.insert(self.image_id(&key, rank), self.image(&q, rank)?.0)?;
                    }
                }
            }
        }
        Ok(store)
    }

    /// Writes fixtures, probe manifest, embeddings and sales for the CLI.
    pub fn export(&self, dir: &Path, modes: &[ExpansionMode]) -> Result<()> {
        let fixtures = dir.join("fixtures");
        fs::create_dir_all(&fixtures).map_err(|e| Error::io(&fixtures, e))?;
        let backend = WorldBackend { world: self };
        let mut seen = std::collections::BTreeSet::new();
        for mode in modes {
            for p in &self.products {
                for q in self.queries(p, *mode)? {
                    if seen.insert(q.canonical_key()) {
                        write_fixture(&fixtures, &q, &backend.search(&q, self.cfg.m_per_query)?)?;
                    }
                }
            }
        }
        let probes: Vec<&Probe> = self.products.iter().map(|p| &p.probe).collect();
        let manifest = serde_json::to_string_pretty(&probes)? + "\n";
        let path = dir.join("probes.json");
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("embeddings.csv");
        self.store(modes)?.save(&path)?;

        let mut sales = String::from("probe_id,split");
        for h in 0..self.cfg.sales_weeks {
            sales.push_str(&format!(",w{h}"));
        }
        sales.push('\n');
        for p in &self.products {
            sales.push_str(&p.probe.image_id);
            sales.push_str(if p.train { ",train" } else { ",test" });
            for v in &p.sales {
                sales.push(',');
                sales.push_str(&crate::series::format_sig9(*v));
            }
            sales.push('\n');
        }
        let path = dir.join("sales.csv");
        fs::write(&path, sales).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

/// Serves hits straight from the world, without fixture files.
pub struct WorldBackend<'a> {
    pub world: &'a World,
}

impl SearchBackend for WorldBackend<'_> {
    fn search(&self, q: &QuerySpec, max_hits: usize) -> Result<Vec<Hit>> {
        let key = q.canonical_key();
        Ok((0..max_hits.min(self.world.cfg.m_per_query))
            .map(|rank| {
                let id = self.world.image_id(&key, rank);
                Hit {
                    source_url: format!("synthetic://{id}"),
                    image_id: id,
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: ExpansionMode,
    pub wape: f64,
    pub mae: f64,
    /// Share of flipped hits the cleaning stage removed, when it ran.
    pub flips_caught: Option<f64>,
    pub clean_pruned: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticReport {
    pub seed: u64,
    pub wape_without_pop: f64,
    pub mae_without_pop: f64,
    pub modes: Vec<ModeOutcome>,
}

impl SyntheticReport {
    pub fn mode(&self, mode: ExpansionMode) -> Option<&ModeOutcome> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    /// `(without − with) / without` for one mode.
    pub fn relative_gain(&self, mode: ExpansionMode) -> Option<f64> {
        self.mode(mode)
            .map(|m| (self.wape_without_pop - m.wape) / self.wape_without_pop)
    }
}

/// POP series for every product under one mode, in product order, along
/// with flip-recovery tallies `(flips caught, flips, clean pruned, clean)`.
pub fn mine_signals(world: &World, store: &EmbeddingStore, mode: ExpansionMode) -> Result<(Vec<Vec<f64>>, [usize; 4])> {
    let cfg = world.cfg.pipeline(mode);
    let gateway = Gateway::new(WorldBackend { world }, world.cfg.m_per_query, None)?;
    let runs: Vec<Result<(Vec<f64>, [usize; 4])>> = world
        .products
        .par_iter()
        .map(|p| {
            let run = run_probe(&p.probe, store, &gateway, &cfg)?;
            let mut tally = [0; 4];
            if let Some(clean) = &run.clean {
                for q in &run.queries {
                    let key = q.canonical_key();
                    for rank in 0..world.cfg.m_per_query {
                        let (_, flipped) = world.image(q, rank)?;
                        let id = format!("{}@{}", world.image_id(&key, rank), key);
                        let pruned = clean.report.pruned_ids.contains(&id);
                        let base = if flipped { 0 } else { 2 };
                        tally[base] += usize::from(pruned);
                        tally[base + 1] += 1;
                    }
                }
            }
            Ok((run.pop.series.into_values(), tally))
        })
        .collect();
    let mut signals = Vec::with_capacity(runs.len());
    let mut tally = [0; 4];
    for r in runs {
        let (s, t) = r?;
        signals.push(s);
        tally.iter_mut().zip(t).for_each(|(a, b)| *a += b);
    }
    Ok((signals, tally))
}

fn evaluate(world: &World, exogenous: Option<&[Vec<f64>]>) -> Result<(f64, f64)> {
    let cfg = &world.cfg;
    let (nc, nk) = (cfg.colors.len(), cfg.categories.len());
    let example = |i: usize| ExoExample {
        static_features: world.products[i].static_features(nc, nk),
        exogenous: exogenous.map(|e| e[i].clone()).unwrap_or_default(),
        target: world.products[i].sales[..cfg.horizon].to_vec(),
    };
    let train: Vec<ExoExample> = (0..world.products.len())
        .filter(|&i| world.products[i].train)
        .map(example)
        .collect();
    let model = fit_exo_ridge(&train, cfg.ridge_lambda)?;
    let (mut gt, mut pred) = (Vec::new(), Vec::new());
    for i in (0..world.products.len()).filter(|&i| !world.products[i].train) {
        let ex = example(i);
        pred.extend(model.predict(&ex.static_features, &ex.exogenous)?);
        gt.extend(ex.target);
    }
    Ok((wape(&gt, &pred)?, mae(&gt, &pred)?))
}

/// Ridge forecasts of the first `horizon` sales weeks with and without the
/// mined signal, for each requested mining mode.
pub fn run_experiment(cfg: &SyntheticConfig, modes: &[ExpansionMode]) -> Result<SyntheticReport> {
    let world = World::generate(cfg)?;
    let store = world.store(modes)?;
    let (wape_without_pop, mae_without_pop) = evaluate(&world, None)?;
    let mut outcomes = Vec::with_capacity(modes.len());
    for &mode in modes {
        let (signals, t) = mine_signals(&world, &store, mode)?;
        let (w, m) = evaluate(&world, Some(&signals))?;
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        outcomes.push(ModeOutcome {
            mode,
            wape: w,
            mae: m,
            flips_caught: ratio(t[0], t[1]),
            clean_pruned: ratio(t[2], t[3]),
        });
    }
    Ok(SyntheticReport {
        seed: cfg.seed,
        wape_without_pop,
        mae_without_pop,
        modes: outcomes,
    })
}
