use nalgebra::{DMatrix, DVector};

use super::{ForecastRequest, ForecastResult};
use crate::error::{Error, Result};

pub(crate) const DEFAULT_P_MAX: usize = 4;

/// Least-squares AR(p) fit on mean-centred data.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub p: usize,
    pub mean: f64,
    /// Intercept of the centred regression.
    pub intercept: f64,
    pub phi: Vec<f64>,
    pub sse: f64,
    pub n_eff: usize,
    pub aic: f64,
}

/// Householder QR, or a truncated SVD when the design is rank deficient
/// (for example the lag columns of a constant series).
pub(crate) fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = x.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().amax();
    if diag_max > 0.0 && r.diagonal().iter().all(|d| d.abs() > 1e-10 * diag_max) {
        let qty = qr.q().transpose() * y;
        if let Some(beta) = r.solve_upper_triangular(&qty) {
            return Ok(beta);
        }
    }
    x.clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| Error::numeric(format!("least squares failed: {e}")))
}

pub(crate) fn aic(sse: f64, n_eff: usize, k: usize) -> f64 {
    let n = n_eff as f64;
    n * (sse / n).max(1e-300).ln() + 2.0 * k as f64
}

/// Regresses `y(t)` on an intercept and `p` lags for `t = start .. n`.
/// `start >= p` lets several orders share one estimation sample.
pub fn fit_ar(y: &[f64], p: usize, start: usize) -> Result<ArFit> {
    let start = start.max(p);
    let n = y.len();
    if n < start + p + 2 {
        return Err(Error::invalid(format!(
            "AR({p}) needs at least {} observations, got {n}",
            start + p + 2
        )));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let rows = n - start;
    let x = DMatrix::from_fn(rows, p + 1, |r, j| if j == 0 { 1.0 } else { c[start + r - j] });
    let target = DVector::from_fn(rows, |r, _| c[start + r]);
    let beta = lstsq(&x, &target)?;
    let resid = &target - &x * &beta;
    let sse = resid.norm_squared();
    Ok(ArFit {
        p,
        mean,
        intercept: beta[0],
        phi: beta.iter().skip(1).copied().collect(),
        sse,
        n_eff: rows,
        aic: aic(sse, rows, p + 1),
    })
}

impl ArFit {
    pub fn forecast(&self, y: &[f64], horizon: usize) -> Vec<f64> {
        let mut c: Vec<f64> = y.iter().map(|v| v - self.mean).collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let n = c.len();
            let next = self.intercept
                + self
                    .phi
                    .iter()
                    .enumerate()
                    .map(|(i, phi)| phi * c[n - 1 - i])
                    .sum::<f64>();
            c.push(next);
            out.push(next + self.mean);
        }
        out
    }
}

/// AR(p) with OLS. Without an explicit order, `p` in `1..=p_max` is chosen
/// by AIC on the common sample starting at `p_max`.
pub fn ar_forecast(req: &ForecastRequest, p: Option<usize>, p_max: usize) -> Result<ForecastResult> {
    let y = &req.history;
    let fit = match p {
        Some(0) => return Err(Error::invalid("AR order must be at least 1")),
        Some(p) => fit_ar(y, p, p)?,
        None => {
            if y.len() < 2 * p_max + 2 {
                return Err(Error::invalid(format!(
                    "AR order selection up to {p_max} needs at least {} observations, got {}",
                    2 * p_max + 2,
                    y.len()
                )));
            }
            let mut best: Option<ArFit> = None;
            for p in 1..=p_max {
                let fit = fit_ar(y, p, p_max)?;
                if best.as_ref().is_none_or(|b| fit.aic < b.aic) {
                    best = Some(fit);
                }
            }
            // Refit the winner on its own full sample.
            let p = best.expect("p_max >= 1").p;
            fit_ar(y, p, p)?
        }
    };
    let mut out = ForecastResult::new("ar", fit.forecast(y, req.horizon))?
        .param("p", fit.p as f64)
        .param(
            "intercept",
            fit.mean * (1.0 - fit.phi.iter().sum::<f64>()) + fit.intercept,
        );
    for (i, phi) in fit.phi.iter().enumerate() {
        out = out.param(&format!("phi{}", i + 1), *phi);
    }
    Ok(out)
}
