use std::path::PathBuf;

use pop_core::forecast::{evaluate_batch, rows_to_csv, BatchManifest};
use pop_core::metrics::{MetricReport, DEFAULT_EPSILON};
use pop_core::series::Series;
use pop_core::Error;

use super::forecast::parse_granularity;
use crate::config::Settings;
use crate::io::write_text;

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Batch holdout manifest (JSON).
    #[arg(long, value_name = "PATH", conflicts_with_all = ["gt", "pred"])]
    pub manifest: Option<PathBuf>,

    /// Ground-truth series.
    #[arg(long, value_name = "PATH", requires = "pred")]
    pub gt: Option<PathBuf>,

    /// Predicted series, aligned with the ground truth.
    #[arg(long, value_name = "PATH", requires = "gt")]
    pub pred: Option<PathBuf>,

    /// Tolerance of the edit distance, relative to the ground-truth peak.
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// weekly or yearly.
    #[arg(long, default_value = "weekly")]
    pub granularity: String,
}

pub fn run(settings: &Settings, args: &EvaluateArgs) -> anyhow::Result<()> {
    let root = settings.out_dir.join("evaluate");
    if let Some(path) = &args.manifest {
        let mut manifest = BatchManifest::load(path)?;
        if let Some(eps) = args.epsilon {
            manifest.epsilon = eps;
        }
        let rows = evaluate_batch(&manifest)?;
        let out = root.join("results.csv");
        write_text(&out, &rows_to_csv(&rows)?)?;
        let failed = rows.iter().filter(|r| r.metrics.is_none()).count();
        println!("{} rows ({failed} without metrics) -> {}", rows.len(), out.display());
        return Ok(());
    }
    let (Some(gt), Some(pred)) = (&args.gt, &args.pred) else {
        return Err(Error::invalid("pass --manifest, or --gt with --pred").into());
    };
    let g = parse_granularity(&args.granularity)?;
    let (gt, pred) = (Series::load(gt, g)?, Series::load(pred, g)?);
    if gt.start() != pred.start() {
        return Err(Error::invalid(format!(
            "series are not aligned: ground truth starts at {}, prediction at {}",
            gt.start(),
            pred.start()
        ))
        .into());
    }
    let report = MetricReport::evaluate(gt.values(), pred.values(), args.epsilon.unwrap_or(DEFAULT_EPSILON))?;
    let mut text = MetricReport::CSV_HEADER.join(",");
    text.push('\n');
    text.push_str(&report.csv_fields().join(","));
    text.push('\n');
    let out = root.join("metrics.csv");
    write_text(&out, &text)?;
    print!("{text}");
    Ok(())
}
