//! Style extraction by non-negative matrix factorization of the
//! attribute-confidence matrix, `A ≈ W·H`, and style-level POP series.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{aggregate_yearly, average_series, format_sig9, min_max_normalize, Granularity, Series};

const DENOM_FLOOR: f64 = 1e-12;

/// Attribute confidences: one row per attribute, one column per image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix {
    pub values: Array2<f64>,
    pub attribute_names: Vec<String>,
    pub image_ids: Vec<String>,
}

impl AttributeMatrix {
    pub fn new(values: Array2<f64>, attribute_names: Vec<String>, image_ids: Vec<String>) -> Result<Self> {
        if values.nrows() != attribute_names.len() || values.ncols() != image_ids.len() {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but has {} attribute names and {} image ids",
                values.nrows(),
                values.ncols(),
                attribute_names.len(),
                image_ids.len()
            )));
        }
        check_nonnegative(&values)?;
        Ok(AttributeMatrix {
            values,
            attribute_names,
            image_ids,
        })
    }

    /// Header `attribute,<image ids..>`, then `name,v1,v2,..` per attribute.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let image_ids: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
        if image_ids.is_empty() {
            return Err(Error::invalid("attribute matrix has no image columns"));
        }
        let mut names = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            names.push(rec[0].to_string());
            for f in rec.iter().skip(1) {
                flat.push(
                    f.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("row {}: cannot parse `{f}`", row + 1)))?,
                );
            }
        }
        if names.is_empty() {
            return Err(Error::invalid("attribute matrix has no rows"));
        }
        let values = Array2::from_shape_vec((names.len(), image_ids.len()), flat)
            .map_err(|e| Error::invalid(format!("attribute matrix shape: {e}")))?;
        Self::new(values, names, image_ids)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

fn check_nonnegative(a: &Array2<f64>) -> Result<()> {
    if let Some(((r, c), v)) = a.indexed_iter().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid(format!(
            "entry ({r}, {c}) = {v} is not a finite non-negative value"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmfConfig {
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            seed: 0,
            max_iter: 200,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleModel {
    /// `attributes × k`.
    pub w: Array2<f64>,
    /// `k × images`.
    pub h: Array2<f64>,
    pub k: usize,
    /// `‖A − WH‖_F` at the end of fitting.
    pub reconstruction_error: f64,
    /// Squared Frobenius objective after initialization and each iteration.
    pub objective_history: Vec<f64>,
    pub attribute_names: Vec<String>,
    pub image_ids: Vec<String>,
}

fn objective(a: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let r = a - &w.dot(h);
    r.iter().map(|v| v * v).sum()
}

/// Lee–Seung multiplicative updates on `‖A − WH‖²_F`.
///
/// Stops after `max_iter` iterations or once the relative decrease of the
/// objective drops below `tol`.
pub fn fit_nmf(a: &AttributeMatrix, k: usize, cfg: &NmfConfig) -> Result<StyleModel> {
    let values = &a.values;
    check_nonnegative(values)?;
    let (m, n) = values.dim();
    if k == 0 || k > m.min(n) {
        return Err(Error::invalid(format!("style count {k} must lie in 1..={}", m.min(n))));
    }
    let mean = values.mean().unwrap_or(0.0);
    let scale = (mean / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Uniform on (0, 1].
    let mut draw = || scale * (1.0 - rng.random::<f64>());
    let mut w = Array2::from_shape_simple_fn((m, k), &mut draw);
    let mut h = Array2::from_shape_simple_fn((k, n), &mut draw);

    let mut history = vec![objective(values, &w, &h)];
    for _ in 0..cfg.max_iter {
        let prev = *history.last().unwrap();
        if prev == 0.0 {
            break;
        }
        let num_h = w.t().dot(values);
        let den_h = w.t().dot(&w).dot(&h);
        h.zip_mut_with(&(num_h / den_h.mapv(|d| d.max(DENOM_FLOOR))), |x, f| *x *= f);
        let num_w = values.dot(&h.t());
        let den_w = w.dot(&h.dot(&h.t()));
        w.zip_mut_with(&(num_w / den_w.mapv(|d| d.max(DENOM_FLOOR))), |x, f| *x *= f);

        let cur = objective(values, &w, &h);
        if !cur.is_finite() {
            return Err(Error::numeric("NMF objective became non-finite"));
        }
        history.push(cur);
        if (prev - cur) / prev < cfg.tol {
            break;
        }
    }
    Ok(StyleModel {
        reconstruction_error: history.last().unwrap().sqrt(),
        objective_history: history,
        w,
        h,
        k,
        attribute_names: a.attribute_names.clone(),
        image_ids: a.image_ids.clone(),
    })
}

/// Indices of the `top` largest entries, ties by ascending index.
fn top_indices(v: ArrayView1<f64>, top: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(top);
    idx
}

impl StyleModel {
    fn check_style(&self, k: usize) -> Result<()> {
        if k >= self.k {
            return Err(Error::invalid(format!("style {k} out of range (k = {})", self.k)));
        }
        Ok(())
    }

    pub fn relative_error(&self, a: &AttributeMatrix) -> f64 {
        let norm = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            self.reconstruction_error
        } else {
            self.reconstruction_error / norm
        }
    }

    /// Names of the `top` attributes with the largest `W[:, k]`.
    pub fn style_attributes(&self, k: usize, top: usize) -> Result<Vec<String>> {
        self.check_style(k)?;
        Ok(top_indices(self.w.column(k), top)
            .into_iter()
            .map(|i| self.attribute_names[i].clone())
            .collect())
    }

    /// Ids of the `top` images with the largest membership `H[k, :]`.
    pub fn style_top_images(&self, k: usize, top: usize) -> Result<Vec<String>> {
        self.check_style(k)?;
        Ok(top_indices(self.h.row(k), top)
            .into_iter()
            .map(|i| self.image_ids[i].clone())
            .collect())
    }

    pub fn write_w_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["attribute".to_string()];
        header.extend((0..self.k).map(|i| format!("style_{i}")));
        out.write_record(&header)?;
        for (r, name) in self.attribute_names.iter().enumerate() {
            let mut row = vec![name.clone()];
            row.extend(self.w.row(r).iter().map(|v| format_sig9(*v)));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<W csv>", e))?;
        Ok(())
    }

    pub fn write_h_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["style".to_string()];
        header.extend(self.image_ids.iter().cloned());
        out.write_record(&header)?;
        for k in 0..self.k {
            let mut row = vec![format!("style_{k}")];
            row.extend(self.h.row(k).iter().map(|v| format_sig9(*v)));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<H csv>", e))?;
        Ok(())
    }

    pub fn summary(&self, top_attributes: usize, top_images: usize) -> Result<StyleSummary> {
        Ok(StyleSummary {
            k: self.k,
            reconstruction_error: self.reconstruction_error,
            iterations: self.objective_history.len() - 1,
            styles: (0..self.k)
                .map(|k| {
                    Ok(StyleEntry {
                        style: k,
                        attributes: self.style_attributes(k, top_attributes)?,
                        images: self.style_top_images(k, top_images)?,
                    })
                })
                .collect::<Result<_>>()?,
        })
    }

    /// Averages the weekly POP series of the style's `top` images, takes
    /// yearly block means and min-max normalizes the result.
    pub fn style_pop(
        &self,
        k: usize,
        per_image: &BTreeMap<String, Series>,
        top: usize,
        weeks_per_year: usize,
    ) -> Result<Series> {
        style_pop(&self.style_top_images(k, top)?, per_image, weeks_per_year)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleEntry {
    pub style: usize,
    pub attributes: Vec<String>,
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleSummary {
    pub k: usize,
    pub reconstruction_error: f64,
    pub iterations: usize,
    pub styles: Vec<StyleEntry>,
}

pub fn style_pop(image_ids: &[String], per_image: &BTreeMap<String, Series>, weeks_per_year: usize) -> Result<Series> {
    let missing: Vec<&str> = image_ids
        .iter()
        .filter(|id| !per_image.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingData(format!(
            "no POP series for images: {}",
            missing.join(", ")
        )));
    }
    let series: Vec<Series> = image_ids.iter().map(|id| per_image[id].clone()).collect();
    if let Some(s) = series.iter().find(|s| s.granularity() != Granularity::Weekly) {
        return Err(Error::invalid(format!(
            "per-image series must be weekly, found {:?}",
            s.granularity()
        )));
    }
    let mean = average_series(&series)?;
    Ok(min_max_normalize(&aggregate_yearly(&mean, weeks_per_year)?))
}
