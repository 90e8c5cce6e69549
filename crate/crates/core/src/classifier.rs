//! Binary fashionable/unfashionable head trained over fixed embeddings:
//! one rectified hidden layer followed by a two-way softmax, fitted with
//! full-batch gradient descent and weight decay.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fashionable,
    Unfashionable,
}

impl Label {
    /// Column in probability matrices: fashionable = 0, unfashionable = 1.
    pub fn index(self) -> usize {
        match self {
            Label::Fashionable => 0,
            Label::Unfashionable => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Label::Fashionable
        } else {
            Label::Unfashionable
        }
    }

    pub const ALL: [Label; 2] = [Label::Fashionable, Label::Unfashionable];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub image_id: String,
    pub embedding: Vec<f64>,
    pub label: Label,
    pub step_k: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.embedding.len();
            if let Some(bad) = samples.iter().find(|s| s.embedding.len() != d) {
                return Err(Error::invalid(format!(
                    "sample `{}` has dimension {}, expected {d}",
                    bad.image_id,
                    bad.embedding.len()
                )));
            }
        }
        Ok(LabeledDataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.embedding.len())
    }

    pub fn class_count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    fn require_both_classes(&self) -> Result<()> {
        for label in Label::ALL {
            if self.class_count(label) == 0 {
                return Err(Error::invalid(format!(
                    "training data has no {label:?} samples; both classes are required"
                )));
            }
        }
        Ok(())
    }

    fn design(&self, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let d = self.dim();
        let mut x = Array2::zeros((idx.len(), d));
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            let s = &self.samples[i];
            x.row_mut(r).iter_mut().zip(&s.embedding).for_each(|(dst, v)| *dst = *v);
            y.push(s.label.index());
        }
        (x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            hidden: 128,
            seed: 0,
        }
    }
}

/// `d → h` rectified layer, then `h → 2` softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub hidden_weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub output_weights: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl HeadModel {
    /// He-scaled Gaussian hidden weights, `1/h`-scaled output weights, zero biases.
    pub fn init(dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        if dim == 0 || hidden == 0 {
            return Err(Error::invalid("head dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (2.0 / dim as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid std");
        let hidden_weights = Array2::from_shape_simple_fn((dim, hidden), || n1.sample(&mut rng));
        let output_weights = Array2::from_shape_simple_fn((hidden, 2), || n2.sample(&mut rng));
        Ok(HeadModel {
            hidden_weights,
            hidden_bias: Array1::zeros(hidden),
            output_weights,
            output_bias: Array1::zeros(2),
        })
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        HeadModel {
            hidden_weights: Array2::zeros((dim, hidden)),
            hidden_bias: Array1::zeros(hidden),
            output_weights: Array2::zeros((hidden, 2)),
            output_bias: Array1::zeros(2),
        }
    }

    pub fn dim(&self) -> usize {
        self.hidden_weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.hidden_weights.ncols()
    }

    fn hidden_pre(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.hidden_weights) + &self.hidden_bias
    }

    /// Row-wise class probabilities.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let a1 = self.hidden_pre(x).mapv(relu);
        let mut logits = a1.dot(&self.output_weights) + &self.output_bias;
        softmax_rows(&mut logits);
        logits
    }

    /// Hidden-layer activations for one embedding.
    pub fn features(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.dim() {
            return Err(Error::invalid(format!(
                "embedding has dimension {}, model expects {}",
                e.len(),
                self.dim()
            )));
        }
        let x = ndarray::ArrayView1::from(e);
        Ok((x.dot(&self.hidden_weights) + &self.hidden_bias).mapv(relu).to_vec())
    }

    /// Mean cross-entropy plus `weight_decay/2 · ‖W‖²` (biases not decayed),
    /// and its gradient laid out like the model.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[usize], weight_decay: f64) -> (f64, HeadModel) {
        let n = x.nrows() as f64;
        let z1 = self.hidden_pre(x);
        let a1 = z1.mapv(relu);
        let mut p = a1.dot(&self.output_weights) + &self.output_bias;
        softmax_rows(&mut p);

        let mut ce = 0.0;
        for (r, &cls) in y.iter().enumerate() {
            ce -= p[[r, cls]].max(f64::MIN_POSITIVE).ln();
        }
        let decay = 0.5
            * weight_decay
            * (self.hidden_weights.iter().map(|w| w * w).sum::<f64>()
                + self.output_weights.iter().map(|w| w * w).sum::<f64>());
        let loss = ce / n + decay;

        let mut dlogits = p;
        for (r, &cls) in y.iter().enumerate() {
            dlogits[[r, cls]] -= 1.0;
        }
        dlogits /= n;
        let g_out_w = a1.t().dot(&dlogits) + &self.output_weights * weight_decay;
        let g_out_b = dlogits.sum_axis(Axis(0));
        let mut dz1 = dlogits.dot(&self.output_weights.t());
        dz1.zip_mut_with(&z1, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
        let g_hid_w = x.t().dot(&dz1) + &self.hidden_weights * weight_decay;
        let g_hid_b = dz1.sum_axis(Axis(0));
        (
            loss,
            HeadModel {
                hidden_weights: g_hid_w,
                hidden_bias: g_hid_b,
                output_weights: g_out_w,
                output_bias: g_out_b,
            },
        )
    }

    pub fn param_count(&self) -> usize {
        self.hidden_weights.len() + self.hidden_bias.len() + self.output_weights.len() + self.output_bias.len()
    }

    /// Parameters flattened in field order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.hidden_weights
            .iter()
            .chain(&self.hidden_bias)
            .chain(&self.output_weights)
            .chain(&self.output_bias)
            .copied()
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut it = flat.iter();
        for dst in self
            .hidden_weights
            .iter_mut()
            .chain(self.hidden_bias.iter_mut())
            .chain(self.output_weights.iter_mut())
            .chain(self.output_bias.iter_mut())
        {
            *dst = *it.next().expect("length checked");
        }
    }

    fn step(&mut self, grad: &HeadModel, lr: f64) {
        self.hidden_weights.scaled_add(-lr, &grad.hidden_weights);
        self.hidden_bias.scaled_add(-lr, &grad.hidden_bias);
        self.output_weights.scaled_add(-lr, &grad.output_weights);
        self.output_bias.scaled_add(-lr, &grad.output_bias);
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn fit(x: ArrayView2<f64>, y: &[usize], cfg: &TrainConfig) -> Result<HeadModel> {
    let mut model = HeadModel::init(x.ncols(), cfg.hidden, cfg.seed)?;
    for _ in 0..cfg.epochs {
        let (loss, grad) = model.loss_and_gradient(x, y, cfg.weight_decay);
        if !loss.is_finite() {
            return Err(Error::numeric("training loss diverged"));
        }
        model.step(&grad, cfg.learning_rate);
    }
    if model.to_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("training produced non-finite parameters"));
    }
    Ok(model)
}

/// Trains the head on the full dataset. Deterministic given `cfg.seed`.
pub fn train_head(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<HeadModel> {
    ds.require_both_classes()?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let (x, y) = ds.design(&idx);
    fit(x.view(), &y, cfg)
}

/// Out-of-sample `N × 2` probabilities; row `i` comes from the fold model
/// whose training split excluded sample `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub rows: Vec<[f64; 2]>,
    pub fold_of: Vec<usize>,
}

impl ProbabilityMatrix {
    pub fn from_rows(rows: Vec<[f64; 2]>) -> Self {
        let n = rows.len();
        ProbabilityMatrix {
            rows,
            fold_of: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn prob(&self, i: usize, label: Label) -> f64 {
        self.rows[i][label.index()]
    }
}

/// Stratified assignment: each class is shuffled with `seed` and dealt
/// round-robin across folds, continuing the count from class to class.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut dealt = 0;
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = dealt % folds;
            dealt += 1;
        }
    }
    assignment
}

pub fn out_of_fold_probs(ds: &LabeledDataset, folds: usize, cfg: &TrainConfig) -> Result<ProbabilityMatrix> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    if ds.len() < folds {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {folds} folds",
            ds.len()
        )));
    }
    for label in Label::ALL {
        if ds.class_count(label) < 2 {
            return Err(Error::invalid(format!(
                "{label:?} needs at least 2 samples so every training split sees it"
            )));
        }
    }
    let fold_of = stratified_folds(&ds.labels(), folds, cfg.seed);
    let all: Vec<usize> = (0..ds.len()).collect();
    let (x, y) = ds.design(&all);

    let per_fold: Vec<Result<(Vec<usize>, Array2<f64>)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] != f).collect();
            let test: Vec<usize> = all.iter().copied().filter(|&i| fold_of[i] == f).collect();
            let xt = x.select(Axis(0), &train);
            let yt: Vec<usize> = train.iter().map(|&i| y[i]).collect();
            let fold_cfg = TrainConfig {
                seed: cfg.seed.wrapping_add(1 + f as u64),
                ..cfg.clone()
            };
            let model = fit(xt.view(), &yt, &fold_cfg)?;
            let probs = model.predict_proba(x.select(Axis(0), &test).view());
            Ok((test, probs))
        })
        .collect();

    let mut rows = vec![[0.0; 2]; ds.len()];
    for outcome in per_fold {
        let (test, probs) = outcome?;
        for (r, &i) in test.iter().enumerate() {
            let row = probs.slice(s![r, ..]);
            rows[i] = [row[0], row[1]];
        }
    }
    Ok(ProbabilityMatrix { rows, fold_of })
}
