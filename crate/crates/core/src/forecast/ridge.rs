use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForecastResult;
use crate::error::{Error, Result};

/// One training product: static features, an exogenous window (for example
/// the last weeks of a POP series) and the target curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExoExample {
    pub static_features: Vec<f64>,
    pub exogenous: Vec<f64>,
    pub target: Vec<f64>,
}

impl ExoExample {
    fn row(&self) -> Vec<f64> {
        self.static_features.iter().chain(&self.exogenous).copied().collect()
    }
}

/// Multi-output ridge regression on standardised inputs. The intercept is
/// the training mean of each output and is not penalised.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub lambda: f64,
    x_mean: Vec<f64>,
    x_scale: Vec<f64>,
    y_mean: Vec<f64>,
    /// `features × horizon`.
    coef: DMatrix<f64>,
    static_dim: usize,
    exo_dim: usize,
}

pub fn fit_exo_ridge(train: &[ExoExample], lambda: f64) -> Result<RidgeModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("ridge needs training examples"))?;
    let (sd, ed, h) = (first.static_features.len(), first.exogenous.len(), first.target.len());
    if h == 0 {
        return Err(Error::invalid("ridge targets are empty"));
    }
    for (i, ex) in train.iter().enumerate() {
        if ex.static_features.len() != sd || ex.exogenous.len() != ed || ex.target.len() != h {
            return Err(Error::invalid(format!(
                "training example {i} has inconsistent dimensions"
            )));
        }
    }
    let n = train.len();
    let p = sd + ed;
    let rows: Vec<Vec<f64>> = train.iter().map(ExoExample::row).collect();
    let mut x_mean = vec![0.0; p];
    let mut x_scale = vec![1.0; p];
    for j in 0..p {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let v = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n as f64;
        x_mean[j] = m;
        if v > 1e-24 {
            x_scale[j] = v.sqrt();
        }
    }
    let y_mean: Vec<f64> = (0..h)
        .map(|k| train.iter().map(|ex| ex.target[k]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, p, |i, j| (rows[i][j] - x_mean[j]) / x_scale[j]);
    let y = DMatrix::from_fn(n, h, |i, k| train[i].target[k] - y_mean[k]);
    let gram = x.transpose() * &x + DMatrix::identity(p, p) * lambda;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::numeric("ridge normal equations are singular; use a positive lambda"))?;
    let coef = chol.solve(&(x.transpose() * y));
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("ridge produced non-finite coefficients"));
    }
    Ok(RidgeModel {
        lambda,
        x_mean,
        x_scale,
        y_mean,
        coef,
        static_dim: sd,
        exo_dim: ed,
    })
}

impl RidgeModel {
    pub fn horizon(&self) -> usize {
        self.y_mean.len()
    }

    pub fn predict(&self, static_features: &[f64], exogenous: &[f64]) -> Result<Vec<f64>> {
        if static_features.len() != self.static_dim || exogenous.len() != self.exo_dim {
            return Err(Error::invalid(format!(
                "ridge expects {} static and {} exogenous features, got {} and {}",
                self.static_dim,
                self.exo_dim,
                static_features.len(),
                exogenous.len()
            )));
        }
        let z = DVector::from_iterator(
            self.x_mean.len(),
            static_features
                .iter()
                .chain(exogenous)
                .enumerate()
                .map(|(j, v)| (v - self.x_mean[j]) / self.x_scale[j]),
        );
        let out = self.coef.transpose() * z;
        Ok(out.iter().zip(&self.y_mean).map(|(a, m)| a + m).collect())
    }
}

pub fn exo_ridge_forecast(
    train: &[ExoExample],
    static_features: &[f64],
    exogenous: &[f64],
    lambda: f64,
) -> Result<ForecastResult> {
    let model = fit_exo_ridge(train, lambda)?;
    let values = model.predict(static_features, exogenous)?;
    Ok(ForecastResult::new("exo_ridge", values)?.param("lambda", lambda))
}
