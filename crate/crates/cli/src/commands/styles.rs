use std::collections::BTreeMap;
use std::path::PathBuf;

use pop_core::forecast::{holdout_row, rows_to_csv, Method, STYLE_HORIZON};
use pop_core::metrics::DEFAULT_EPSILON;
use pop_core::nmf::{fit_nmf, AttributeMatrix, NmfConfig};
use pop_core::series::{Granularity, Series};
use pop_core::Error;

use crate::config::Settings;
use crate::io::{require_dir, sanitize_id, write_json, write_text};

#[derive(Debug, clap::Args)]
pub struct StylesArgs {
    /// Attribute confidences: `attribute,<image ids...>` rows.
    #[arg(long, value_name = "PATH")]
    pub attributes: PathBuf,

    /// Number of styles.
    #[arg(long)]
    pub k: usize,

    /// Attributes listed per style in the summary.
    #[arg(long, default_value_t = 2)]
    pub top_attributes: usize,

    /// Top images of each style, listed in the summary and behind its POP series.
    #[arg(long, default_value_t = 10)]
    pub top_images: usize,

    /// Directory of weekly per-image POP files named `<image id>.csv`.
    #[arg(long, value_name = "DIR")]
    pub pop_dir: Option<PathBuf>,

    /// Weeks summed into one yearly value.
    #[arg(long, default_value_t = 52)]
    pub weeks_per_year: usize,

    /// Forecasters scored on each style series.
    #[arg(long, value_delimiter = ',', default_value = "mean,last,drift,ar,arima,ses")]
    pub methods: Vec<String>,

    /// NMF iteration cap.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,

    /// Relative NMF loss change that stops the iteration.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

fn csv_of(write: impl FnOnce(&mut Vec<u8>) -> pop_core::Result<()>) -> pop_core::Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

pub fn run(settings: &Settings, args: &StylesArgs) -> anyhow::Result<()> {
    let methods: Vec<Method> = args.methods.iter().map(|m| m.parse()).collect::<Result<_, _>>()?;
    if !args.attributes.exists() {
        return Err(Error::invalid(format!("attribute matrix {} does not exist", args.attributes.display())).into());
    }
    let matrix = AttributeMatrix::load(&args.attributes)?;
    let cfg = NmfConfig {
        seed: settings.seed,
        max_iter: args.max_iter,
        tol: args.tol,
    };
    let model = fit_nmf(&matrix, args.k, &cfg)?;
    let root = settings.out_dir.join("styles");
    write_text(&root.join("W.csv"), &csv_of(|b| model.write_w_csv(b))?)?;
    write_text(&root.join("H.csv"), &csv_of(|b| model.write_h_csv(b))?)?;
    write_json(
        &root.join("summary.json"),
        &model.summary(args.top_attributes, args.top_images)?,
    )?;
    println!(
        "{} styles, reconstruction error {:.6} -> {}",
        model.k,
        model.reconstruction_error,
        root.display()
    );

    let Some(pop_dir) = &args.pop_dir else {
        return Ok(());
    };
    require_dir(pop_dir, "POP directory")?;
    let mut per_image = BTreeMap::new();
    let mut rows = Vec::new();
    for k in 0..model.k {
        for id in model.style_top_images(k, args.top_images)? {
            if per_image.contains_key(&id) {
                continue;
            }
            let path = pop_dir.join(format!("{}.csv", sanitize_id(&id)));
            if !path.exists() {
                return Err(Error::MissingData(format!(
                    "style {k} needs the POP series of `{id}` at {}",
                    path.display()
                ))
                .into());
            }
            per_image.insert(id, Series::load(&path, Granularity::Weekly)?);
        }
        let series = model.style_pop(k, &per_image, args.top_images, args.weeks_per_year)?;
        write_text(
            &root.join("pop").join(format!("style_{k}.csv")),
            &series.to_csv_string(),
        )?;
        let id = format!("style_{k}");
        rows.extend(
            methods
                .iter()
                .map(|m| holdout_row(&id, &series, *m, STYLE_HORIZON, DEFAULT_EPSILON, settings.seed)),
        );
    }
    write_text(&root.join("forecast.csv"), &rows_to_csv(&rows)?)?;
    println!("scored {} methods on {} style series", methods.len(), model.k);
    Ok(())
}
