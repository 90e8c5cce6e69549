use super::{ForecastRequest, ForecastResult};
use crate::error::{Error, Result};

pub fn mean_forecast(req: &ForecastRequest) -> Result<ForecastResult> {
    let mean = req.history.iter().sum::<f64>() / req.history.len() as f64;
    Ok(ForecastResult::new("mean", vec![mean; req.horizon])?.param("mean", mean))
}

pub fn last_forecast(req: &ForecastRequest) -> Result<ForecastResult> {
    let last = *req.history.last().expect("non-empty history");
    ForecastResult::new("last", vec![last; req.horizon])
}

/// `ŷ(n+h) = y(n) + h · (y(n) − y(1)) / (n − 1)`.
pub fn drift_forecast(req: &ForecastRequest) -> Result<ForecastResult> {
    req.require_len(2, "drift")?;
    let y = &req.history;
    let n = y.len();
    let last = y[n - 1];
    let slope = (last - y[0]) / (n - 1) as f64;
    let values = (1..=req.horizon).map(|h| last + h as f64 * slope).collect();
    Ok(ForecastResult::new("drift", values)?.param("slope", slope))
}

/// Final level and one-step-ahead squared error of the smoothing recursion.
fn ses_level(y: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = y[0];
    let mut sse = 0.0;
    for &obs in &y[1..] {
        sse += (obs - level).powi(2);
        level = alpha * obs + (1.0 - alpha) * level;
    }
    (level, sse)
}

/// Simple exponential smoothing with `l(1) = y(1)`. Without `alpha`, the
/// smoothing weight minimising one-step-ahead SSE on the grid
/// `0.01, 0.02, .., 1.00` is used (smallest on ties).
pub fn ses_forecast(req: &ForecastRequest, alpha: Option<f64>) -> Result<ForecastResult> {
    let alpha = match alpha {
        Some(a) if a > 0.0 && a <= 1.0 => a,
        Some(a) => return Err(Error::invalid(format!("SES alpha {a} outside (0, 1]"))),
        None => {
            let mut best = (f64::INFINITY, 1.0);
            for i in 1..=100 {
                let a = i as f64 / 100.0;
                let (_, sse) = ses_level(&req.history, a);
                if sse < best.0 {
                    best = (sse, a);
                }
            }
            best.1
        }
    };
    let (level, _) = ses_level(&req.history, alpha);
    Ok(ForecastResult::new("ses", vec![level; req.horizon])?.param("alpha", alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(y: &[f64], h: usize) -> ForecastRequest {
        ForecastRequest::new(y.to_vec(), h).unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_forecast(&req(&[2.0, 4.0, 6.0], 2)).unwrap().values, vec![4.0, 4.0]);
        assert_eq!(mean_forecast(&req(&[5.0], 3)).unwrap().values, vec![5.0; 3]);
        assert_eq!(mean_forecast(&req(&[1.0, 2.0, 3.0, 4.0], 1)).unwrap().values, vec![2.5]);
    }

    #[test]
    fn last_examples() {
        assert_eq!(last_forecast(&req(&[2.0, 4.0, 6.0], 2)).unwrap().values, vec![6.0, 6.0]);
        assert_eq!(last_forecast(&req(&[0.0], 1)).unwrap().values, vec![0.0]);
        let v = last_forecast(&req(&[3.0, -1.0, 7.5], 4)).unwrap().values;
        assert!(v.iter().all(|x| *x == 7.5));
    }

    #[test]
    fn drift_examples() {
        assert_eq!(
            drift_forecast(&req(&[2.0, 4.0, 6.0], 2)).unwrap().values,
            vec![8.0, 10.0]
        );
        assert_eq!(
            drift_forecast(&req(&[3.0, 3.0, 3.0], 3)).unwrap().values,
            last_forecast(&req(&[3.0, 3.0, 3.0], 3)).unwrap().values
        );
        assert_eq!(
            drift_forecast(&req(&[0.0, 1.0], 3)).unwrap().values,
            vec![2.0, 3.0, 4.0]
        );
        assert!(drift_forecast(&req(&[1.0], 1)).is_err());
    }

    #[test]
    fn ses_examples() {
        let y = [1.0, 5.0, 2.0, 8.0];
        assert_eq!(
            ses_forecast(&req(&y, 2), Some(1.0)).unwrap().values,
            last_forecast(&req(&y, 2)).unwrap().values
        );
        assert_eq!(ses_forecast(&req(&[2.0, 4.0], 1), Some(0.5)).unwrap().values, vec![3.0]);
        for a in [0.1, 0.5, 0.9] {
            assert_eq!(
                ses_forecast(&req(&[4.0; 6], 2), Some(a)).unwrap().values,
                vec![4.0, 4.0]
            );
        }
        assert_eq!(ses_forecast(&req(&[4.0; 6], 2), None).unwrap().values, vec![4.0, 4.0]);
        assert!(ses_forecast(&req(&y, 1), Some(0.0)).is_err());
    }

    #[test]
    fn ses_grid_picks_full_weight_for_a_random_walk_step() {
        // A single level shift is tracked best by alpha = 1.
        let r = ses_forecast(&req(&[0.0, 0.0, 10.0, 10.0, 10.0], 1), None).unwrap();
        assert_eq!(r.params["alpha"], 1.0);
    }
}
