//! Monte Carlo checks that the null mean `μ(t; λ)` and the influence
//! function mean `E α(X)` vanish.

use super::CharacterizationSpec;
use crate::error::{Error, Result};
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_DIAGNOSTIC_REPS: usize = 100;

/// Levels of the measure at which `μ` is probed.
const GRID_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub spec_id: String,
    pub mu_max_abs: f64,
    /// Standard error at the grid point attaining `mu_max_abs`.
    pub mu_se: f64,
    pub alpha_mean: Vec<f64>,
    pub alpha_se: Vec<f64>,
    pub pass: bool,
    #[serde(skip)]
    pub mu_pass: bool,
    #[serde(skip)]
    pub alpha_pass: bool,
}

struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn mean_se(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Estimate `μ(t; λ)` on a grid of measure quantiles and `E α(X)` under the
/// canonical null, flagging any estimate further than `tol` standard errors
/// from zero.
pub fn check_conditions(
    spec: &CharacterizationSpec,
    reps: usize,
    seed: u64,
    tol: f64,
) -> Result<DiagnosticReport> {
    if reps < MIN_DIAGNOSTIC_REPS {
        return Err(Error::InsufficientReps {
            got: reps,
            min: MIN_DIAGNOSTIC_REPS,
        });
    }
    let params = spec.null_params();
    let lambda = &spec.null_gamma;
    let grid: Vec<f64> = GRID_LEVELS
        .iter()
        .map(|&u| spec.measure.quantile(u))
        .collect();
    let p = spec.estimator.dim;
    let width = grid.len() + p;

    // one row per replicate: g at each grid point, then α components
    let rows: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(seed, r);
            let xs = spec.null_family.draw(params, spec.m, &mut stream);
            let mut row = Vec::with_capacity(width);
            row.extend(grid.iter().map(|&t| spec.g(&xs, t, lambda)));
            row.extend(spec.estimator.influence(xs[0], lambda));
            row
        })
        .collect();

    let mut acc: Vec<Moments> = (0..width)
        .map(|_| Moments {
            sum: 0.0,
            sum_sq: 0.0,
        })
        .collect();
    for row in &rows {
        for (a, v) in acc.iter_mut().zip(row) {
            a.sum += v;
            a.sum_sq += v * v;
        }
    }
    let within = |mean: f64, se: f64| mean.abs() <= tol * se || mean == 0.0;

    let mut mu_max_abs = 0.0;
    let mut mu_se = 0.0;
    let mut mu_pass = true;
    for a in &acc[..grid.len()] {
        let (mean, se) = a.mean_se(reps);
        mu_pass &= within(mean, se);
        if mean.abs() >= mu_max_abs {
            mu_max_abs = mean.abs();
            mu_se = se;
        }
    }
    let mut alpha_mean = Vec::with_capacity(p);
    let mut alpha_se = Vec::with_capacity(p);
    let mut alpha_pass = true;
    for a in &acc[grid.len()..] {
        let (mean, se) = a.mean_se(reps);
        alpha_pass &= within(mean, se);
        alpha_mean.push(mean);
        alpha_se.push(se);
    }
    Ok(DiagnosticReport {
        spec_id: spec.id.to_string(),
        mu_max_abs,
        mu_se,
        alpha_mean,
        alpha_se,
        pass: mu_pass && alpha_pass,
        mu_pass,
        alpha_pass,
    })
}
