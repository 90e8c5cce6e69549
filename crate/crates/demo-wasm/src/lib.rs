//! Browser bindings for a few POP operations.
//!
//! Every export takes plain values and returns a JSON string; errors come
//! back as a thrown string. The `*_json` functions hold the logic so they
//! can be tested natively.

use pop_core::expansion::{expand, ExpansionConfig, ExpansionMode};
use pop_core::forecast::{ForecastRequest, Method};
use pop_core::gateway::Gateway;
use pop_core::pipeline::{run_probe, PipelineConfig};
use pop_core::series::{Probe, WeekIndex};
use pop_core::signal::SignalVariant;
use pop_core::synthetic::{SyntheticConfig, World, WorldBackend};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn to_json<T: Serialize>(v: &T) -> Out {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct ScheduledQuery {
    key: String,
    text: String,
    polarity: String,
    step_k: usize,
    start: i64,
    end: i64,
}

pub fn query_schedule_json(tags: &str, week: i64, k_past: usize, window: usize, mode: &str) -> Out {
    let probe = Probe::new(
        "probe",
        tags.split(',').filter(|t| !t.trim().is_empty()),
        WeekIndex(week),
    )
    .map_err(|e| e.to_string())?;
    let cfg = ExpansionConfig {
        mode: mode.parse::<ExpansionMode>().map_err(|e| e.to_string())?,
        k_past,
        window_w: window,
        ..ExpansionConfig::default()
    };
    let queries = expand(&probe, &cfg).map_err(|e| e.to_string())?;
    let rows: Vec<ScheduledQuery> = queries
        .iter()
        .map(|q| ScheduledQuery {
            key: q.canonical_key(),
            text: q.query_text(),
            polarity: format!("{:?}", q.polarity).to_lowercase(),
            step_k: q.step_k,
            start: q.interval.start().0,
            end: q.interval.end().0,
        })
        .collect();
    to_json(&rows)
}

#[derive(Serialize)]
struct Curve {
    name: String,
    start: i64,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Curves {
    probe: String,
    tags: Vec<String>,
    observation_week: i64,
    curves: Vec<Curve>,
}

/// POP curves of one synthetic product under several mining setups, next
/// to the latent trend score the product's sales depend on.
pub fn pop_curves_json(seed: u64, product: usize) -> Out {
    let cfg = SyntheticConfig {
        seed,
        n_train: 3,
        n_test: 1,
        ..SyntheticConfig::default()
    };
    let world = World::generate(&cfg).map_err(|e| e.to_string())?;
    let p = world
        .products
        .get(product)
        .ok_or_else(|| format!("product must be below {}", world.products.len()))?;
    let modes = [
        ExpansionMode::Standard,
        ExpansionMode::NoExpansion,
        ExpansionMode::MisalignedPast,
    ];
    let store = world.store(&modes).map_err(|e| e.to_string())?;
    let gateway = Gateway::new(WorldBackend { world: &world }, cfg.m_per_query, None).map_err(|e| e.to_string())?;

    let setups = [
        ("pop", ExpansionMode::Standard, SignalVariant::Positive),
        ("no learning", ExpansionMode::Standard, SignalVariant::NoLearning),
        ("no expansion", ExpansionMode::NoExpansion, SignalVariant::NoExpansion),
        (
            "misaligned past",
            ExpansionMode::MisalignedPast,
            SignalVariant::Positive,
        ),
    ];
    let mut curves = Vec::with_capacity(setups.len() + 1);
    for (name, mode, variant) in setups {
        let mut pipe: PipelineConfig = cfg.pipeline(mode);
        pipe.variant = variant;
        let run = run_probe(&p.probe, &store, &gateway, &pipe).map_err(|e| format!("{name}: {e}"))?;
        // Plot the misaligned signal at the weeks its images come from.
        let shift = if mode == ExpansionMode::MisalignedPast {
            cfg.k_past as i64
        } else {
            0
        };
        curves.push(Curve {
            name: name.to_string(),
            start: run.pop.series.start() - shift,
            values: run.pop.series.values().to_vec(),
        });
    }

    let t = p.probe.observation_week.0;
    let start = t - 2 * cfg.k_past as i64;
    let latent = (start..t)
        .map(|w| {
            let f = world.trend_at(w)?;
            Ok(p.style.iter().zip(f).map(|(a, b)| a * b).sum())
        })
        .collect::<pop_core::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    curves.push(Curve {
        name: "latent trend".into(),
        start,
        values: latent,
    });

    to_json(&Curves {
        probe: p.probe.image_id.clone(),
        tags: p.probe.tags.clone(),
        observation_week: t,
        curves,
    })
}

#[derive(Serialize)]
struct ForecastOut {
    method: String,
    values: Vec<f64>,
    params: std::collections::BTreeMap<String, f64>,
}

pub fn forecast_json(history: &str, method: &str, horizon: usize, seed: u64) -> Out {
    let values = history
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    let method: Method = method.parse().map_err(|e: pop_core::Error| e.to_string())?;
    let req = ForecastRequest::new(values, horizon).map_err(|e| e.to_string())?;
    let res = method.forecast(&req, seed).map_err(|e| e.to_string())?;
    to_json(&ForecastOut {
        method: res.method,
        values: res.values,
        params: res.params,
    })
}

#[wasm_bindgen]
pub fn query_schedule(tags: &str, week: i64, k_past: usize, window: usize, mode: &str) -> Result<String, JsValue> {
    query_schedule_json(tags, week, k_past, window, mode).map_err(JsValue::from)
}

#[wasm_bindgen]
pub fn pop_curves(seed: u64, product: usize) -> Result<String, JsValue> {
    pop_curves_json(seed, product).map_err(JsValue::from)
}

#[wasm_bindgen]
pub fn forecast(history: &str, method: &str, horizon: usize, seed: u64) -> Result<String, JsValue> {
    forecast_json(history, method, horizon, seed).map_err(JsValue::from)
}
