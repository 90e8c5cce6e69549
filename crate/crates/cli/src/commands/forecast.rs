use std::path::PathBuf;

use pop_core::forecast::{forecast_series, ForecastRequest, ForecastResult, Method};
use pop_core::series::{Granularity, Series};
use pop_core::Error;
use serde::Serialize;

use crate::config::Settings;
use crate::io::{sanitize_id, write_json, write_text};

#[derive(Debug, clap::Args)]
pub struct ForecastArgs {
    /// `index,value` or POP csv.
    #[arg(long, value_name = "PATH")]
    pub series: PathBuf,

    /// mean, last, drift, ses[:alpha], ar[:p] or arima[:p,d,q].
    #[arg(long)]
    pub method: Option<String>,

    /// Steps to forecast.
    #[arg(long)]
    pub horizon: Option<usize>,

    /// weekly or yearly.
    #[arg(long, default_value = "weekly")]
    pub granularity: String,

    /// Output csv; defaults to `forecast/<series>.<method>.csv` under the output root.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

pub fn parse_granularity(s: &str) -> Result<Granularity, Error> {
    match s {
        "weekly" => Ok(Granularity::Weekly),
        "yearly" => Ok(Granularity::Yearly),
        other => Err(Error::invalid(format!("unknown granularity `{other}`"))),
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    series: String,
    method: String,
    horizon: usize,
    seed: u64,
    result: &'a ForecastResult,
}

pub fn run(settings: &Settings, args: &ForecastArgs) -> anyhow::Result<()> {
    let method: Method = args
        .method
        .as_ref()
        .or(settings.run.forecast.method.as_ref())
        .ok_or_else(|| Error::invalid("no method; pass --method"))?
        .parse()?;
    let horizon = args
        .horizon
        .or(settings.run.forecast.horizon)
        .ok_or_else(|| Error::invalid("no horizon; pass --horizon"))?;
    let history = Series::load(&args.series, parse_granularity(&args.granularity)?)?;
    let result = method.forecast(&ForecastRequest::from_series(&history, horizon)?, settings.seed)?;
    let out = forecast_series(&history, result.values.clone())?;

    let csv = args.output.clone().unwrap_or_else(|| {
        let stem = args.series.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
        settings.out_dir.join("forecast").join(format!(
            "{}.{}.csv",
            sanitize_id(stem),
            sanitize_id(&method.to_string())
        ))
    });
    write_text(&csv, &out.to_csv_string())?;
    write_json(
        &csv.with_extension("json"),
        &Sidecar {
            series: args.series.display().to_string(),
            method: method.to_string(),
            horizon,
            seed: settings.seed,
            result: &result,
        },
    )?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    println!("{method}: {} values -> {}", out.len(), csv.display());
    Ok(())
}
