//! ARIMA(p, d, q) for p, q in 0..=2 and d in 0..=1, fitted by conditional
//! sum of squares with a seeded coordinate search. Order selection scores
//! every candidate on a common sample.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ar::{aic, ar_forecast, fit_ar};
use super::{ForecastRequest, ForecastResult};
use crate::error::{Error, Result};

const MAX_P: usize = 2;
const MAX_Q: usize = 2;
const MAX_D: usize = 1;
/// Fits whose smallest characteristic root lies closer than this to the unit
/// circle count as non-stationary or non-invertible.
const ROOT_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Result<Self> {
        if p > MAX_P || d > MAX_D || q > MAX_Q {
            return Err(Error::invalid(format!(
                "ARIMA order ({p},{d},{q}) outside p<={MAX_P}, d<={MAX_D}, q<={MAX_Q}"
            )));
        }
        Ok(ArimaOrder { p, d, q })
    }

    fn has_mean(&self) -> bool {
        self.d == 0
    }

    fn param_count(&self) -> usize {
        self.p + self.q + usize::from(self.has_mean())
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.p, self.d, self.q)
    }
}

impl FromStr for ArimaOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("cannot parse ARIMA order `{s}`")))?;
        match parts[..] {
            [p, d, q] => ArimaOrder::new(p, d, q),
            _ => Err(Error::invalid(format!("ARIMA order `{s}` needs three integers"))),
        }
    }
}

/// Smallest root modulus of `1 − a1·z − a2·z²` (infinite when constant).
fn min_root_modulus(a: &[f64]) -> f64 {
    let a1 = a.first().copied().unwrap_or(0.0);
    let a2 = a.get(1).copied().unwrap_or(0.0);
    if a2 == 0.0 {
        return if a1 == 0.0 { f64::INFINITY } else { 1.0 / a1.abs() };
    }
    let disc = a1 * a1 + 4.0 * a2;
    if disc < 0.0 {
        return 1.0 / a2.abs().sqrt();
    }
    let s = disc.sqrt();
    let r1 = ((a1 + s) / (-2.0 * a2)).abs();
    let r2 = ((a1 - s) / (-2.0 * a2)).abs();
    r1.min(r2)
}

fn admissible(phi: &[f64], theta: &[f64], margin: f64) -> bool {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    min_root_modulus(phi) > 1.0 + margin && min_root_modulus(&neg) > 1.0 + margin
}

fn difference(y: &[f64], d: usize) -> Vec<f64> {
    let mut w = y.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

#[derive(Debug, Clone)]
struct Fit {
    order: ArimaOrder,
    mu: f64,
    phi: Vec<f64>,
    theta: Vec<f64>,
    css: f64,
    n_eff: usize,
    aic: f64,
}

/// Residuals `e(t)` for `t >= p` with pre-sample errors set to zero.
fn residuals(w: &[f64], mu: f64, phi: &[f64], theta: &[f64]) -> Vec<f64> {
    let p = phi.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let ar: f64 = phi.iter().enumerate().map(|(i, f)| f * (w[t - 1 - i] - mu)).sum();
        let ma: f64 = theta
            .iter()
            .enumerate()
            .filter(|(j, _)| t > *j)
            .map(|(j, th)| th * e[t - 1 - j])
            .sum();
        e[t] = (w[t] - mu) - ar - ma;
    }
    e
}

/// Sum of squared residuals over `t >= start` (`start >= p`).
fn css(w: &[f64], order: ArimaOrder, x: &[f64], start: usize) -> f64 {
    let (mu, phi, theta) = unpack(order, x);
    residuals(w, mu, phi, theta)[start..].iter().map(|e| e * e).sum()
}

/// Parameter layout: `[mu?, phi.., theta..]`.
fn unpack(order: ArimaOrder, x: &[f64]) -> (f64, &[f64], &[f64]) {
    let m = usize::from(order.has_mean());
    let mu = if m == 1 { x[0] } else { 0.0 };
    (mu, &x[m..m + order.p], &x[m + order.p..])
}

/// `start` lets candidate orders share one estimation sample.
fn fit(w: &[f64], order: ArimaOrder, start: usize, seed: u64) -> Result<Fit> {
    let start = start.max(order.p);
    let n_eff = w.len().saturating_sub(start);
    if n_eff < order.param_count() + 2 {
        return Err(Error::invalid(format!(
            "ARIMA({order}) needs more observations than the {} available after differencing",
            w.len()
        )));
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();

    // Seed: OLS AR coefficients shrunk into the stationary region, small
    // random MA coefficients.
    let mut phi0 = if order.p > 0 {
        fit_ar(w, order.p, order.p)
            .map(|f| f.phi)
            .unwrap_or_else(|_| vec![0.0; order.p])
    } else {
        Vec::new()
    };
    while min_root_modulus(&phi0) <= 1.0 + 10.0 * ROOT_MARGIN {
        phi0.iter_mut().for_each(|v| *v *= 0.9);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (order.p * 9 + order.d * 3 + order.q) as u64);
    let theta0: Vec<f64> = (0..order.q).map(|_| rng.random_range(-0.1..0.1)).collect();

    let mut x: Vec<f64> = Vec::new();
    let mut steps: Vec<f64> = Vec::new();
    if order.has_mean() {
        x.push(mean);
        steps.push(0.1 * sd + 1e-8);
    }
    x.extend(&phi0);
    x.extend(&theta0);
    steps.resize(x.len(), 0.1);

    let feasible = |x: &[f64]| {
        let (_, phi, theta) = unpack(order, x);
        admissible(phi, theta, 0.0)
    };
    let mut best = css(w, order, &x, start);
    let mut sweeps = 0;
    while !x.is_empty() && steps.iter().cloned().fold(0.0, f64::max) > 1e-9 && sweeps < 20_000 {
        sweeps += 1;
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] += dir * steps[i];
                if !feasible(&cand) {
                    continue;
                }
                let v = css(w, order, &cand, start);
                if v < best {
                    best = v;
                    x = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    let (mu, phi, theta) = unpack(order, &x);
    Ok(Fit {
        order,
        mu,
        phi: phi.to_vec(),
        theta: theta.to_vec(),
        css: best,
        n_eff,
        aic: aic(best, n_eff, order.param_count()),
    })
}

impl Fit {
    fn near_boundary(&self) -> bool {
        !admissible(&self.phi, &self.theta, ROOT_MARGIN)
    }

    fn forecast(&self, y: &[f64], horizon: usize) -> Vec<f64> {
        let mut w = difference(y, self.order.d);
        let mut e = residuals(&w, self.mu, &self.phi, &self.theta);
        let mut out = Vec::with_capacity(horizon);
        let mut level = *y.last().expect("non-empty");
        for _ in 0..horizon {
            let t = w.len();
            let ar: f64 = self
                .phi
                .iter()
                .enumerate()
                .map(|(i, f)| f * (w[t - 1 - i] - self.mu))
                .sum();
            let ma: f64 = self
                .theta
                .iter()
                .enumerate()
                .filter(|(j, _)| t > *j)
                .map(|(j, th)| th * e[t - 1 - j])
                .sum();
            let next = self.mu + ar + ma;
            w.push(next);
            e.push(0.0);
            if self.order.d == 1 {
                level += next;
                out.push(level);
            } else {
                out.push(next);
            }
        }
        out
    }
}

fn with_fit(fit: &Fit, values: Vec<f64>) -> Result<ForecastResult> {
    let mut r = ForecastResult::new("arima", values)?
        .param("p", fit.order.p as f64)
        .param("d", fit.order.d as f64)
        .param("q", fit.order.q as f64)
        .param("css", fit.css)
        .param("aic", fit.aic)
        .param("n_eff", fit.n_eff as f64);
    if fit.order.has_mean() {
        r = r.param("mu", fit.mu);
    }
    for (i, v) in fit.phi.iter().enumerate() {
        r = r.param(&format!("phi{}", i + 1), *v);
    }
    for (i, v) in fit.theta.iter().enumerate() {
        r = r.param(&format!("theta{}", i + 1), *v);
    }
    Ok(r)
}

/// Fits the requested order, or selects one by AIC among the orders whose
/// fit is admissible. An explicit order whose fit ends up explosive or
/// non-invertible is replaced by an AR model, with a warning.
pub fn arima_forecast(req: &ForecastRequest, order: Option<ArimaOrder>, seed: u64) -> Result<ForecastResult> {
    req.require_len(3, "ARIMA")?;
    let y = &req.history;
    match order {
        Some(order) => {
            let w = difference(y, order.d);
            let f = fit(&w, order, order.p, seed)?;
            if f.near_boundary() {
                return fallback(req, order);
            }
            with_fit(&f, f.forecast(y, req.horizon))
        }
        None => {
            let mut best: Option<Fit> = None;
            for d in 0..=MAX_D {
                let w = difference(y, d);
                // Every candidate is scored on residuals of the same
                // observations y(MAX_P + MAX_D ..).
                let start = MAX_P + MAX_D - d;
                for p in 0..=MAX_P {
                    for q in 0..=MAX_Q {
                        let Ok(f) = fit(&w, ArimaOrder { p, d, q }, start, seed) else {
                            continue;
                        };
                        if !f.css.is_finite() || f.near_boundary() {
                            continue;
                        }
                        if best.as_ref().is_none_or(|b| f.aic < b.aic) {
                            best = Some(f);
                        }
                    }
                }
            }
            let f = best.ok_or_else(|| Error::invalid("no ARIMA order could be fitted to this history"))?;
            with_fit(&f, f.forecast(y, req.horizon))
        }
    }
}

fn fallback(req: &ForecastRequest, order: ArimaOrder) -> Result<ForecastResult> {
    let n = req.history.len();
    let p = order.p.max(1).min(n.saturating_sub(2) / 2).max(1);
    let mut r = ar_forecast(req, Some(p), p)?;
    r.method = "arima".to_string();
    r.warnings.push(format!(
        "ARIMA({order}) fit was non-stationary or non-invertible; fell back to AR({p})"
    ));
    Ok(r)
}
