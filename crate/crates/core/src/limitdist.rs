//! Weighted χ² limit laws and Monte Carlo quantiles and p-values.
//!
//! V form: `c·(Σₖ υ*ₖ Zₖ² + shift)`. U form: `c·(Σₖ (υ*ₖ Zₖ² − υₖ) + shift)`.
//! The shift carries the trace mass not represented by sampled eigenvalues,
//! so the model mean equals `c·trace` (V) or `c·(trace* − trace)` (U).

use crate::error::{Error, Result};
use crate::model::builtin_spec;
use crate::rng;
use crate::spectral::Spectrum;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const MIN_PVALUE_DRAWS: usize = 10_000;
pub const DEFAULT_DRAWS: usize = 1_000_000;
/// Eigenvalues below this fraction of the trace are folded into the shift.
pub const TRUNCATION: f64 = 1e-7;
/// Draws per independent random stream.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitForm {
    V,
    U,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitModel {
    pub form: LimitForm,
    /// Weights multiplying `Zₖ²`.
    pub starred: Vec<f64>,
    /// Centering constants `υₖ` (U form only).
    pub plain: Vec<f64>,
    pub coefficient: f64,
    pub tail_shift: f64,
    /// Upper bound on the variance the ignored tail would have added.
    pub tail_variance_bound: f64,
}

fn usable(eigs: &[f64], trace: f64) -> Vec<f64> {
    let floor = TRUNCATION * trace.abs();
    eigs.iter()
        .map(|v| v.max(0.0))
        .filter(|&v| v > floor)
        .collect()
}

fn check_coefficient(s: &Spectrum) -> Result<()> {
    if let Ok(spec) = builtin_spec(&s.spec_id)
        && s.coefficient != spec.coefficient()
    {
        return Err(Error::CacheError(format!(
            "coefficient {} does not match {} for {}",
            s.coefficient,
            spec.coefficient(),
            s.spec_id
        )));
    }
    Ok(())
}

/// Tail variance bound `2 Σ_{k>K} υₖ² ≤ 2 υ_K · tail_mass`.
fn tail_variance(s: &Spectrum) -> f64 {
    let last = s.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    2.0 * last * s.tail_mass.max(0.0)
}

pub fn build_limit(
    star: &Spectrum,
    plain: Option<&Spectrum>,
    form: LimitForm,
) -> Result<LimitModel> {
    check_coefficient(star)?;
    let starred = usable(&star.eigenvalues, star.trace_estimate);
    let star_shift = star.trace_estimate - starred.iter().sum::<f64>();
    let c = star.coefficient;
    match form {
        LimitForm::V => Ok(LimitModel {
            form,
            starred,
            plain: Vec::new(),
            coefficient: c,
            tail_shift: star_shift,
            tail_variance_bound: c * c * tail_variance(star),
        }),
        LimitForm::U => {
            let plain_spec = plain.ok_or(Error::MissingSpectrum)?;
            check_coefficient(plain_spec)?;
            if plain_spec.coefficient != c {
                return Err(Error::Precondition(
                    "starred and plain spectra disagree on the coefficient".into(),
                ));
            }
            let plain = usable(&plain_spec.eigenvalues, plain_spec.trace_estimate);
            let plain_shift = plain_spec.trace_estimate - plain.iter().sum::<f64>();
            Ok(LimitModel {
                form,
                starred,
                plain,
                coefficient: c,
                tail_shift: star_shift - plain_shift,
                tail_variance_bound: c * c * tail_variance(star),
            })
        }
    }
}

impl LimitModel {
    /// V-form model with explicit weights and no tail.
    pub fn from_weights(weights: Vec<f64>, coefficient: f64) -> Self {
        Self {
            form: LimitForm::V,
            starred: weights,
            plain: Vec::new(),
            coefficient,
            tail_shift: 0.0,
            tail_variance_bound: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.starred.iter().sum();
        let p: f64 = self.plain.iter().sum();
        self.coefficient * (s - p + self.tail_shift)
    }

    fn offset(&self) -> f64 {
        self.tail_shift - self.plain.iter().sum::<f64>()
    }
}

/// `draws` i.i.d. realizations. Chunk `j` always uses stream `(seed, j)`,
/// so the output does not depend on the thread count.
pub fn sample_limit(model: &LimitModel, draws: usize, seed: u64) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(Error::Precondition("draws must be at least 1".into()));
    }
    let offset = model.offset();
    let c = model.coefficient;
    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|j| {
            let len = CHUNK.min(draws - j * CHUNK);
            let mut rng = rng::stream(seed, j as u64);
            (0..len)
                .map(|_| {
                    let s: f64 = model
                        .starred
                        .iter()
                        .map(|w| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            w * z * z
                        })
                        .sum();
                    c * (s + offset)
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValue {
    pub p: f64,
    pub mc_se: f64,
}

/// `p = (1 + #{draws ≥ observed}) / (draws + 1)` on a fixed draw set.
pub fn p_value_from_draws(sample: &[f64], observed: f64) -> PValue {
    let draws = sample.len();
    let count = sample.iter().filter(|&&v| v >= observed).count();
    let p = (1 + count) as f64 / (draws + 1) as f64;
    PValue {
        p,
        mc_se: (p * (1.0 - p) / draws as f64).sqrt(),
    }
}

pub fn p_value(model: &LimitModel, observed: f64, draws: usize, seed: u64) -> Result<PValue> {
    if draws < MIN_PVALUE_DRAWS {
        return Err(Error::InsufficientDraws {
            got: draws,
            min: MIN_PVALUE_DRAWS,
        });
    }
    Ok(p_value_from_draws(
        &sample_limit(model, draws, seed)?,
        observed,
    ))
}

fn check_level(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidQuantile(q));
    }
    Ok(())
}

/// Type-7 (linear interpolation) quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical quantiles at several levels from one draw set.
pub fn quantiles(model: &LimitModel, levels: &[f64], draws: usize, seed: u64) -> Result<Vec<f64>> {
    for &q in levels {
        check_level(q)?;
    }
    let s = sorted(sample_limit(model, draws, seed)?);
    Ok(levels.iter().map(|&q| quantile_sorted(&s, q)).collect())
}

pub fn quantile(model: &LimitModel, q: f64, draws: usize, seed: u64) -> Result<f64> {
    Ok(quantiles(model, &[q], draws, seed)?[0])
}

/// Monte Carlo standard error of the `q`-quantile of a sorted sample, from
/// the binomial variance of the level and a difference-quotient density.
pub fn quantile_se(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len() as f64;
    let d = 0.005f64.min(q / 2.0).min((1.0 - q) / 2.0);
    let slope = (quantile_sorted(sorted, q + d) - quantile_sorted(sorted, q - d)) / (2.0 * d);
    slope * (q * (1.0 - q) / n).sqrt()
}

/// Quantile table as CSV with columns `q,value`.
pub fn write_quantile_csv(out: impl Write, levels: &[f64], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io {
        path: "<stdout>".into(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(["q", "value"]).map_err(io)?;
    for (q, v) in levels.iter().zip(values) {
        w.write_record([q.to_string(), v.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<stdout>".into(),
        source: e,
    })?;
    Ok(())
}
