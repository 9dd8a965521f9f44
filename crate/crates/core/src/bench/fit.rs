use crate::error::{invalid, Error, Result};
use crate::report::{IterateTrace, Metric, RateFit};

/// Smallest value kept before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;
/// Minimum number of records inside the fit window.
pub const MIN_POINTS: usize = 10;

/// Least-squares fit of `ln(metric)` against the iteration index over the
/// last `window` fraction of the trace. A negative slope means linear
/// convergence with per-step factor `exp(slope)`.
pub fn fit_linear_rate(trace: &IterateTrace, metric: Metric, window: f64) -> Result<RateFit> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(invalid(format!("window must lie in (0, 1], got {window}")));
    }
    let n = trace.len();
    let start = ((n as f64) * (1.0 - window)).floor() as usize;
    let tail = &trace.records[start.min(n)..];
    if tail.len() < MIN_POINTS {
        return Err(Error::TooFewPoints { needed: MIN_POINTS, got: tail.len() });
    }
    let mut clamped = false;
    let mut xs = Vec::with_capacity(tail.len());
    let mut ys = Vec::with_capacity(tail.len());
    for rec in tail {
        let v = rec.metric(metric).ok_or_else(|| invalid(format!("metric {metric} missing at iteration {}", rec.iter)))?;
        if v == 0.0 {
            return Err(Error::ConvergedBelowFloat { iter: rec.iter });
        }
        let v = if v < LOG_FLOOR {
            clamped = true;
            LOG_FLOOR
        } else {
            v
        };
        xs.push(rec.iter as f64);
        ys.push(v.ln());
    }
    let (slope, r_squared) = ols(&xs, &ys);
    Ok(RateFit { metric, slope, r_squared, window, points: xs.len(), clamped })
}

/// Slope and coefficient of determination; `None` when `y` is constant.
fn ols(xs: &[f64], ys: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return (0.0, None);
    }
    let slope = sxy / sxx;
    if syy == 0.0 {
        return (slope, None);
    }
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (my + slope * (x - mx));
            e * e
        })
        .sum();
    (slope, Some(1.0 - ss_res / syy))
}
