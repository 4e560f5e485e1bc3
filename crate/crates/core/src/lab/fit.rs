//! Power-law fits `v ≈ C |T* - t|^κ` on log-log axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 20;
pub const MIN_DECADES: f64 = 1.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RateFitResult {
    pub exponent: f64,
    pub constant: f64,
    pub r2: f64,
    /// `(max value, min value)` over the points used
    pub window: (f64, f64),
    pub points: usize,
    /// blow-up time the distances were measured from
    pub t_star: f64,
}

struct Line {
    slope: f64,
    intercept: f64,
    r2: f64,
    sse: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Line {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let sse = (syy - slope * sxy).max(0.0);
    Line { slope, intercept: my - slope * mx, r2: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 }, sse }
}

fn check_series(series: &[(f64, f64)], t_star: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if series.len() < MIN_POINTS {
        return Err(Error::InvalidArgument(format!("rate fit needs ≥ {MIN_POINTS} points, got {}", series.len())));
    }
    let mut xs = Vec::with_capacity(series.len());
    let mut ys = Vec::with_capacity(series.len());
    for &(t, v) in series {
        let d = (t_star - t).abs();
        if !(d > 0.0 && v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate fit needs |T* - t| > 0 and positive values (t = {t}, v = {v})")));
        }
        xs.push(d.ln());
        ys.push(v.ln());
    }
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let decades = (hi - lo) / std::f64::consts::LN_10;
    if decades < MIN_DECADES {
        return Err(Error::InvalidArgument(format!("rate fit spans {decades:.2} decades in |t|; need ≥ {MIN_DECADES}")));
    }
    Ok((xs, ys))
}

fn result(series: &[(f64, f64)], line: &Line, t_star: f64) -> RateFitResult {
    let vmax = series.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let vmin = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    RateFitResult {
        exponent: line.slope,
        constant: line.intercept.exp(),
        r2: line.r2,
        window: (vmax, vmin),
        points: series.len(),
        t_star,
    }
}

/// Least squares on `(ln|t|, ln v)`.
pub fn rate_fit(series: &[(f64, f64)]) -> Result<RateFitResult> {
    rate_fit_at(series, 0.0)
}

/// Least squares on `(ln|T* - t|, ln v)` for a given `T*`.
pub fn rate_fit_at(series: &[(f64, f64)], t_star: f64) -> Result<RateFitResult> {
    let (xs, ys) = check_series(series, t_star)?;
    Ok(result(series, &least_squares(&xs, &ys), t_star))
}

/// Like [`rate_fit_at`], with `T*` chosen to minimize the log-log residual.
///
/// `T*` is searched beyond the last sample, up to `max_shift` times the
/// sampled time span; the search variable is `ln(T* - t_last)`.
pub fn rate_fit_shifted(series: &[(f64, f64)], max_shift: f64) -> Result<RateFitResult> {
    if series.len() < MIN_POINTS {
        return rate_fit_at(series, 0.0);
    }
    let t_first = series.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_last = series.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let span = t_last - t_first;
    let sse = |z: f64| -> f64 {
        let ts = t_last + z.exp();
        let xs: Vec<f64> = series.iter().map(|p| (ts - p.0).ln()).collect();
        let ys: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
        least_squares(&xs, &ys).sse
    };
    // coarse scan, then golden section around the best cell
    let (za, zb) = ((span * 1e-6).ln(), (span * max_shift).ln());
    let m = 80;
    let grid: Vec<f64> = (0..=m).map(|i| za + (zb - za) * i as f64 / m as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&z| sse(z)).collect();
    let best = (0..=m).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(m)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (sse(c), sse(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sse(d);
        }
    }
    rate_fit_at(series, t_last + (0.5 * (a + b)).exp())
}

/// Prefactor with the exponent pinned: geometric mean of `v / |T* - t|^κ`.
pub fn pinned_constant(series: &[(f64, f64)], t_star: f64, exponent: f64) -> f64 {
    let n = series.len() as f64;
    (series.iter().map(|&(t, v)| v.ln() - exponent * (t_star - t).abs().ln()).sum::<f64>() / n).exp()
}
