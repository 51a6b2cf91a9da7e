//! Exponential-tail and linear fits.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weighting {
    /// Var(ln rate) = 1/counts, counts passed alongside the rates.
    Poisson,
    /// Equal weights, variance estimated from the residuals.
    Uniform,
    /// Relative weights passed in `counts`, variance scale estimated from
    /// the residuals.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    Absolute(f64, f64),
    /// [a·T1, b·T1], iterated from a fit over all data until T1 settles.
    Relative(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFit {
    /// Decay rate, 1/ns.
    pub gamma: f64,
    pub t1: f64,
    /// ln of the amplitude at τ = 0.
    pub log_amplitude: f64,
    /// Covariance of (ln amplitude, gamma).
    pub covariance: [[f64; 2]; 2],
    pub gamma_stderr: f64,
    pub t1_stderr: f64,
    pub window: (f64, f64),
    /// ln(rate) − model at each point used.
    pub residuals: Vec<f64>,
    pub points: usize,
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, [[f64; 2]; 2])> {
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-12 * sw * sxx.max(1e-300)) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let icpt = (sy - slope * sx) / sw;
    // inverse normal matrix of (intercept, slope)
    let cov = [[sxx / det, -sx / det], [-sx / det, sw / det]];
    Some((icpt, slope, cov))
}

fn fit_in(tau: &[f64], rate: &[f64], counts: Option<&[f64]>, weighting: Weighting, window: (f64, f64)) -> Result<ExpFit> {
    let (a, b) = window;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for i in 0..tau.len() {
        if tau[i] < a || tau[i] > b || !(rate[i] > 0.0) {
            continue;
        }
        let wi = match weighting {
            Weighting::Poisson | Weighting::Relative => counts.map_or(1.0, |c| c[i]),
            Weighting::Uniform => 1.0,
        };
        if wi > 0.0 {
            x.push(tau[i]);
            y.push(rate[i].ln());
            w.push(wi);
        }
    }
    if x.len() < 5 {
        return Err(Error::Fit(format!(
            "need at least 5 non-empty bins in window ({a}, {b}), have {}",
            x.len()
        )));
    }
    let (icpt, slope, mut cov) =
        weighted_line(&x, &y, &w).ok_or_else(|| Error::Fit("singular exponential fit".into()))?;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(x, y)| y - (icpt + slope * x)).collect();
    if weighting != Weighting::Poisson || counts.is_none() {
        let dof = (x.len() - 2) as f64;
        let s2 = residuals.iter().zip(&w).map(|(r, w)| w * r * r).sum::<f64>() / dof;
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v *= s2;
            }
        }
    }
    let gamma = -slope;
    if !(gamma > 0.0) {
        return Err(Error::Fit(format!("fitted rate {gamma:e} is not a decay")));
    }
    let gamma_stderr = cov[1][1].sqrt();
    Ok(ExpFit {
        gamma,
        t1: 1.0 / gamma,
        log_amplitude: icpt,
        covariance: [[cov[0][0], -cov[0][1]], [-cov[1][0], cov[1][1]]],
        gamma_stderr,
        t1_stderr: gamma_stderr / (gamma * gamma),
        window,
        residuals,
        points: x.len(),
    })
}

/// Weighted least squares of ln(rate) against τ over the window. `counts`
/// supplies Poisson weights; bins with zero rate are skipped.
pub fn fit_exponential_tail(
    tau: &[f64],
    rate: &[f64],
    counts: Option<&[f64]>,
    weighting: Weighting,
    window: FitWindow,
) -> Result<ExpFit> {
    if tau.len() != rate.len() || counts.is_some_and(|c| c.len() != tau.len()) {
        return Err(Error::Mismatch("fit inputs differ in length".into()));
    }
    match window {
        FitWindow::Absolute(a, b) => fit_in(tau, rate, counts, weighting, (a, b)),
        FitWindow::Relative(ra, rb) => {
            let lo = tau.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = tau.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut fit = fit_in(tau, rate, counts, weighting, (lo, hi))?;
            for _ in 0..50 {
                let w = (ra * fit.t1, rb * fit.t1);
                let next = fit_in(tau, rate, counts, weighting, w)?;
                let settled = (next.t1 - fit.t1).abs() <= 1e-9 * fit.t1;
                fit = next;
                if settled {
                    break;
                }
            }
            Ok(fit)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityFit {
    /// Slope of the fit y = slope·x through the origin.
    pub slope: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

/// Fit y = slope·x through the origin; R² against the mean of y.
pub fn linearity_scan(x: &[f64], y: &[f64]) -> Result<LinearityFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Fit("linearity scan needs at least two points".into()));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("all scan intensities are zero".into()));
    }
    let slope = x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|y| (y - mean).powi(2)).sum();
    let dof = (x.len() - 1) as f64;
    Ok(LinearityFit {
        slope,
        slope_stderr: (ss_res / dof / sxx).sqrt(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    })
}
