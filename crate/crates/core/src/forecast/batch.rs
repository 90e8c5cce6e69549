//! Batch holdout evaluation: each listed series is split into history and
//! its last `horizon` values, every method forecasts the held-out part, and
//! the metrics land in one row per (series, method).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ForecastRequest, Method};
use crate::error::{Error, Result};
use crate::metrics::{MetricReport, DEFAULT_EPSILON};
use crate::series::{Granularity, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSeries {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    pub series: Vec<BatchSeries>,
    pub methods: Vec<String>,
    pub horizon: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub granularity: Granularity,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl BatchManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: BatchManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut m.series {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<Vec<Method>> {
        if self.series.is_empty() || self.methods.is_empty() {
            return Err(Error::invalid("batch manifest lists no series or no methods"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("batch horizon must be at least 1"));
        }
        self.methods.iter().map(|m| m.parse()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub series_id: String,
    pub method: String,
    /// `None` when the method could not produce a forecast.
    pub metrics: Option<MetricReport>,
    pub note: String,
}

/// Splits `series` into history and holdout and scores one method.
pub fn holdout_row(id: &str, series: &Series, method: Method, horizon: usize, epsilon: f64, seed: u64) -> BatchRow {
    let outcome = (|| {
        if series.len() <= horizon {
            return Err(Error::invalid(format!(
                "series has {} values, needs more than the horizon {horizon}",
                series.len()
            )));
        }
        let cut = series.len() - horizon;
        let req = ForecastRequest::new(series.values()[..cut].to_vec(), horizon)?;
        let fc = method.forecast(&req, seed)?;
        let report = MetricReport::evaluate(&series.values()[cut..], &fc.values, epsilon)?;
        Ok((report, fc.warnings.join("; ")))
    })();
    let (metrics, note) = match outcome {
        Ok((r, w)) => (Some(r), w),
        Err(e) => (None, e.to_string()),
    };
    BatchRow {
        series_id: id.to_string(),
        method: method.to_string(),
        metrics,
        note,
    }
}

/// Rows ordered by manifest series, then manifest method. Unreadable
/// series abort the batch; methods that fail on a series yield a row with
/// empty metrics and the reason in `note`.
pub fn evaluate_batch(manifest: &BatchManifest) -> Result<Vec<BatchRow>> {
    let methods = manifest.validate()?;
    let series: Vec<Series> = manifest
        .series
        .iter()
        .map(|s| Series::load(&s.path, manifest.granularity))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Method)> = (0..series.len())
        .flat_map(|i| methods.iter().map(move |m| (i, *m)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(i, m)| {
            holdout_row(
                &manifest.series[i].id,
                &series[i],
                m,
                manifest.horizon,
                manifest.epsilon,
                manifest.seed,
            )
        })
        .collect())
}

pub fn rows_to_csv(rows: &[BatchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["series_id", "method"];
    header.extend(MetricReport::CSV_HEADER);
    header.push("note");
    w.write_record(&header)?;
    for r in rows {
        let metrics = match &r.metrics {
            Some(m) => m.csv_fields(),
            None => Default::default(),
        };
        let mut rec = vec![r.series_id.clone(), r.method.clone()];
        rec.extend(metrics);
        rec.push(r.note.clone());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// `index,value` rows continuing the history's index.
pub fn forecast_series(history: &Series, values: Vec<f64>) -> Result<Series> {
    Series::new(history.end(), values, history.granularity())
}
