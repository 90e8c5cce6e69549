//! Statistical forecasters (Mean, Last, Drift, SES, AR, ARIMA) and a ridge
//! regressor over static features plus exogenous windows.

mod ar;
mod arima;
mod batch;
mod naive;
mod ridge;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

pub use ar::{ar_forecast, fit_ar, ArFit};
pub use arima::{arima_forecast, ArimaOrder};
pub use batch::{evaluate_batch, forecast_series, holdout_row, rows_to_csv, BatchManifest, BatchRow, BatchSeries};
pub use naive::{drift_forecast, last_forecast, mean_forecast, ses_forecast};
pub use ridge::{exo_ridge_forecast, fit_exo_ridge, ExoExample, RidgeModel};

/// Horizon used when evaluating sales curves.
pub const SALES_HORIZON: usize = 6;
/// Horizon used when evaluating yearly style popularity.
pub const STYLE_HORIZON: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub history: Vec<f64>,
    pub horizon: usize,
}

impl ForecastRequest {
    pub fn new(history: Vec<f64>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("forecast horizon must be at least 1"));
        }
        if history.is_empty() {
            return Err(Error::invalid("forecast history is empty"));
        }
        if history.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("forecast history has non-finite values"));
        }
        Ok(ForecastRequest { history, horizon })
    }

    pub fn from_series(s: &Series, horizon: usize) -> Result<Self> {
        Self::new(s.values().to_vec(), horizon)
    }

    pub(crate) fn require_len(&self, n: usize, method: &str) -> Result<()> {
        if self.history.len() < n {
            return Err(Error::invalid(format!(
                "{method} needs at least {n} observations, got {}",
                self.history.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub values: Vec<f64>,
    pub method: String,
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ForecastResult {
    pub(crate) fn new(method: &str, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("{method} produced non-finite forecasts")));
        }
        Ok(ForecastResult {
            values,
            method: method.to_string(),
            params: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub(crate) fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }
}

/// A statistical forecaster and its optional fixed settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mean,
    Last,
    Drift,
    Ses { alpha: Option<f64> },
    Ar { p: Option<usize> },
    Arima { order: Option<ArimaOrder> },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Last => "last",
            Method::Drift => "drift",
            Method::Ses { .. } => "ses",
            Method::Ar { .. } => "ar",
            Method::Arima { .. } => "arima",
        }
    }

    pub fn forecast(&self, req: &ForecastRequest, seed: u64) -> Result<ForecastResult> {
        match *self {
            Method::Mean => mean_forecast(req),
            Method::Last => last_forecast(req),
            Method::Drift => drift_forecast(req),
            Method::Ses { alpha } => ses_forecast(req, alpha),
            Method::Ar { p } => ar_forecast(req, p, ar::DEFAULT_P_MAX),
            Method::Arima { order } => arima_forecast(req, order, seed),
        }
    }

    pub fn all() -> [Method; 6] {
        [
            Method::Mean,
            Method::Last,
            Method::Drift,
            Method::Ses { alpha: None },
            Method::Ar { p: None },
            Method::Arima { order: None },
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Ses { alpha: Some(a) } => write!(f, "ses(alpha={a})"),
            Method::Ar { p: Some(p) } => write!(f, "ar({p})"),
            Method::Arima { order: Some(o) } => write!(f, "arima({},{},{})", o.p, o.d, o.q),
            m => f.write_str(m.name()),
        }
    }
}

/// `mean`, `last`, `drift`, `ses`, `ses:0.3`, `ar`, `ar:2`, `arima`, `arima:1,1,0`.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = || Error::invalid(format!("cannot parse forecaster `{s}`"));
        Ok(match (name.to_lowercase().as_str(), arg) {
            ("mean", None) => Method::Mean,
            ("last", None) => Method::Last,
            ("drift", None) => Method::Drift,
            ("ses", a) => Method::Ses {
                alpha: a.map(|a| a.parse().map_err(|_| bad())).transpose()?,
            },
            ("ar", a) => Method::Ar {
                p: a.map(|a| a.parse().map_err(|_| bad())).transpose()?,
            },
            ("arima", a) => Method::Arima {
                order: a.map(|a| a.parse()).transpose()?,
            },
            _ => return Err(bad()),
        })
    }
}
