//! Desk-scale Monte Carlo studies of the limit theorems: null convergence
//! of `n·V_n(λ̂)`, the effect of estimation on the limit, size and power,
//! and convergence of `n·U_n(λ̂)`.

use crate::error::{Error, Result};
use crate::limitdist::{
    self, LimitForm, LimitModel, build_limit, quantile_se, quantile_sorted, sample_limit,
};
use crate::model::{CharacterizationSpec, Sample, builtin_spec};
use crate::rng::{self, derive_seed};
use crate::spectral::{self, KernelTag, Spectrum};
use crate::stat_engine::{estimate, scaled_statistic, ustat};
use rand::RngCore;
use rand_distr::{Distribution, Weibull};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const MIN_REPS: usize = 100;
pub const DEFAULT_LIMIT_DRAWS: usize = 100_000;
pub const TABLE_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

const TAG_REPLICATES: u64 = 1;
const TAG_LIMIT: u64 = 2;
const TAG_PLAIN: u64 = 3;

/// Data-generating distribution for power studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Alternative {
    /// The spec's own null family at the study's null parameters.
    Null,
    Weibull {
        shape: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub spec_id: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Size of the Monte Carlo sample from the limit law.
    pub draws: usize,
    /// Nyström nodes and kept eigenvalues for the limit.
    pub nodes: usize,
    pub keep: usize,
    pub alpha: f64,
    /// Null-family parameters; the canonical ones when absent.
    pub null_params: Option<Vec<f64>>,
    pub alternative: Option<Alternative>,
}

impl StudyConfig {
    pub fn new(spec_id: &str, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            spec_id: spec_id.to_string(),
            n,
            reps,
            seed,
            draws: DEFAULT_LIMIT_DRAWS,
            nodes: spectral::DEFAULT_NODES,
            keep: spectral::DEFAULT_KEEP,
            alpha: 0.05,
            null_params: None,
            alternative: None,
        }
    }

    fn validate(&self) -> Result<&'static CharacterizationSpec> {
        let spec = builtin_spec(&self.spec_id)?;
        if self.reps < MIN_REPS {
            return Err(Error::Precondition(format!(
                "reps must be at least {MIN_REPS}, got {}",
                self.reps
            )));
        }
        if self.n < 2 * spec.m {
            return Err(Error::Precondition(format!(
                "n must be at least {}, got {}",
                2 * spec.m,
                self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Precondition(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.draws == 0 {
            return Err(Error::Precondition("draws must be at least 1".into()));
        }
        Ok(spec)
    }

    fn params(&self, spec: &CharacterizationSpec) -> Vec<f64> {
        self.null_params
            .clone()
            .unwrap_or_else(|| spec.null_family.canonical.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub empirical: f64,
    pub limit: f64,
}

/// Deterministic description of how the study was run. Wall-clock time is
/// left out so that reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeInfo {
    pub version: String,
    pub limit_draws: usize,
    pub nodes: usize,
    pub keep: usize,
    pub trace_estimate: f64,
    pub tail_variance_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub mode: String,
    pub spec_id: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub statistics: Vec<f64>,
    pub ks_distance: Option<f64>,
    pub quantiles: Vec<QuantileRow>,
    pub empirical_mean: f64,
    pub empirical_mean_se: f64,
    pub limit_mean: f64,
    pub limit_mean_se: f64,
    /// `|empirical − limit|` in combined standard errors.
    pub mean_z: f64,
    /// Upper `alpha` quantile of the limit law.
    pub critical_value: f64,
    pub rejection_rate: Option<f64>,
    pub runtime: RuntimeInfo,
}

impl StudyReport {
    pub fn to_json(&self) -> String {
        // unwrap: plain numeric struct
        serde_json::to_string_pretty(self).unwrap()
    }

    /// One statistic per line under a `statistic` header.
    pub fn write_statistics_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io {
            path: "<statistics>".into(),
            source: std::io::Error::other(e.to_string()),
        };
        w.write_record(["statistic"]).map_err(io)?;
        for v in &self.statistics {
            w.write_record([v.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<statistics>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Two-sample Kolmogorov–Smirnov distance between sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

fn draw_alternative(
    alt: &Alternative,
    spec: &CharacterizationSpec,
    params: &[f64],
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    match alt {
        Alternative::Null => Ok(spec.null_family.draw(params, n, rng)),
        Alternative::Weibull { shape, scale } => {
            let d = Weibull::new(*scale, *shape)
                .map_err(|e| Error::Precondition(format!("invalid Weibull alternative: {e}")))?;
            Ok((0..n).map(|_| d.sample(rng)).collect())
        }
    }
}

/// Replicate statistics, one independent stream per replicate.
fn replicate(
    config: &StudyConfig,
    spec: &CharacterizationSpec,
    alt: &Alternative,
    stat: impl Fn(&Sample) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let params = config.params(spec);
    let base = derive_seed(config.seed, TAG_REPLICATES);
    (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(base, r);
            let sample = Sample::new(draw_alternative(alt, spec, &params, config.n, &mut stream)?)?;
            stat(&sample)
        })
        .collect()
}

struct Limit {
    model: LimitModel,
    sorted: Vec<f64>,
    trace: f64,
}

fn limit_for(config: &StudyConfig, spec: &CharacterizationSpec, form: LimitForm) -> Result<Limit> {
    let star = spectral::eigenvalues(
        &spectral::discretize(spec, &spec.null_gamma, KernelTag::Star, config.nodes)?,
        config.keep,
    )?;
    let plain: Option<Spectrum> = match form {
        LimitForm::V => None,
        LimitForm::U => Some(spectral::eigenvalues(
            &spectral::discretize(spec, &spec.null_gamma, KernelTag::Plain, config.nodes)?,
            config.keep,
        )?),
    };
    let model = build_limit(&star, plain.as_ref(), form)?;
    let sorted = limitdist::sorted(sample_limit(
        &model,
        config.draws,
        derive_seed(config.seed, TAG_LIMIT),
    )?);
    Ok(Limit {
        model,
        sorted,
        trace: star.trace_estimate,
    })
}

fn report(
    mode: &str,
    config: &StudyConfig,
    statistics: Vec<f64>,
    limit: &Limit,
    compare: bool,
    rejection: bool,
) -> StudyReport {
    let emp = limitdist::sorted(statistics.clone());
    let critical_value = quantile_sorted(&limit.sorted, 1.0 - config.alpha);
    let (empirical_mean, empirical_mean_se) = mean_se(&statistics);
    let (_, limit_mean_se) = mean_se(&limit.sorted);
    let limit_mean = limit.model.mean();
    let combined = (empirical_mean_se.powi(2) + limit_mean_se.powi(2)).sqrt();
    let rate =
        statistics.iter().filter(|&&s| s > critical_value).count() as f64 / statistics.len() as f64;
    StudyReport {
        mode: mode.to_string(),
        spec_id: config.spec_id.clone(),
        n: config.n,
        reps: config.reps,
        seed: config.seed,
        alpha: config.alpha,
        ks_distance: compare.then(|| ks_two_sample(&emp, &limit.sorted)),
        quantiles: TABLE_LEVELS
            .iter()
            .map(|&q| QuantileRow {
                level: q,
                empirical: quantile_sorted(&emp, q),
                limit: quantile_sorted(&limit.sorted, q),
            })
            .collect(),
        empirical_mean,
        empirical_mean_se,
        limit_mean,
        limit_mean_se,
        mean_z: if combined > 0.0 {
            (empirical_mean - limit_mean).abs() / combined
        } else {
            0.0
        },
        critical_value,
        rejection_rate: rejection.then_some(rate),
        statistics,
        runtime: RuntimeInfo {
            version: env!("CARGO_PKG_VERSION").to_string(),
            limit_draws: config.draws,
            nodes: config.nodes,
            keep: config.keep,
            trace_estimate: limit.trace,
            tail_variance_bound: limit.model.tail_variance_bound,
        },
    }
}

/// Empirical law of `n·V_n(λ̂)` under the null against the starred limit.
/// The rejection rate of the level-`alpha` test is reported as well.
pub fn null_convergence(config: &StudyConfig) -> Result<StudyReport> {
    let spec = config.validate()?;
    let stats = replicate(config, spec, &Alternative::Null, |s| {
        Ok(scaled_statistic(spec, s)?.scaled)
    })?;
    let limit = limit_for(config, spec, LimitForm::V)?;
    Ok(report("null", config, stats, &limit, true, true))
}

/// Rejection rate of the level-`alpha` test under `config.alternative`.
pub fn power_study(config: &StudyConfig) -> Result<StudyReport> {
    let spec = config.validate()?;
    let alt = config
        .alternative
        .clone()
        .ok_or_else(|| Error::Precondition("power study needs an alternative".into()))?;
    let stats = replicate(
        config,
        spec,
        &alt,
        |s| Ok(scaled_statistic(spec, s)?.scaled),
    )?;
    let limit = limit_for(config, spec, LimitForm::V)?;
    Ok(report(
        "power",
        config,
        stats,
        &limit,
        alt == Alternative::Null,
        true,
    ))
}

/// Empirical law of `n·U_n(λ̂)` against `c·Σ(υ*ₖZₖ² − υₖ)`.
pub fn ustat_convergence(config: &StudyConfig) -> Result<StudyReport> {
    let spec = config.validate()?;
    let stats = replicate(config, spec, &Alternative::Null, |s| {
        let est = estimate(spec, s)?;
        Ok(s.n() as f64 * ustat(spec, s, &est)?)
    })?;
    let limit = limit_for(config, spec, LimitForm::U)?;
    Ok(report("ustat", config, stats, &limit, true, false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub spec_id: String,
    pub draws: usize,
    pub q95_star: f64,
    pub q95_plain: f64,
    pub se_star: f64,
    pub se_plain: f64,
    /// `|q95_star − q95_plain|` in combined Monte Carlo standard errors.
    pub separation: f64,
}

/// Compare the 95% quantiles of the limits built from `φ₂*` and from `φ₂`.
pub fn estimation_effect(
    spec: &CharacterizationSpec,
    nodes: usize,
    keep: usize,
    draws: usize,
    seed: u64,
) -> Result<EffectReport> {
    if spec.has_zero_d1mu {
        return Err(Error::NoEffectExpected(format!(
            "{}: the mean derivative vanishes, so the estimated and known-parameter limits coincide",
            spec.id
        )));
    }
    if draws < 2 {
        return Err(Error::Precondition("draws must be at least 2".into()));
    }
    let pair = spectral::spectrum_pair(spec, &spec.null_gamma, nodes, keep)?;
    let q = 0.95;
    let star = limitdist::sorted(sample_limit(
        &build_limit(&pair.starred, None, LimitForm::V)?,
        draws,
        derive_seed(seed, TAG_LIMIT),
    )?);
    let plain = limitdist::sorted(sample_limit(
        &build_limit(&pair.plain, None, LimitForm::V)?,
        draws,
        derive_seed(seed, TAG_PLAIN),
    )?);
    let (q95_star, q95_plain) = (quantile_sorted(&star, q), quantile_sorted(&plain, q));
    let (se_star, se_plain) = (quantile_se(&star, q), quantile_se(&plain, q));
    Ok(EffectReport {
        spec_id: spec.id.to_string(),
        draws,
        q95_star,
        q95_plain,
        se_star,
        se_plain,
        separation: (q95_star - q95_plain).abs() / (se_star.powi(2) + se_plain.powi(2)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{polya, puri_rubin};

    fn small(spec: &str, n: usize, reps: usize) -> StudyConfig {
        let mut c = StudyConfig::new(spec, n, reps, 17);
        c.nodes = 200;
        c.keep = 50;
        c.draws = 20_000;
        c
    }

    #[test]
    fn ks_distance_basics() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(
            null_convergence(&small("puri-rubin", 50, 10)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            null_convergence(&small("nosuch", 50, 100)),
            Err(Error::UnknownSpec(_))
        ));
        assert!(matches!(
            null_convergence(&small("polya", 3, 100)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            power_study(&small("polya", 50, 100)),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            estimation_effect(puri_rubin(), 100, 10, 1000, 0),
            Err(Error::NoEffectExpected(_))
        ));
        assert!(matches!(
            ustat_convergence(&small("puri-rubin", 500, 100)),
            Err(Error::TooLargeForNaive(_))
        ));
    }

    #[test]
    fn null_study_is_reproducible_and_scale_free() {
        let c = small("puri-rubin", 60, 100);
        let a = null_convergence(&c).unwrap();
        let b = null_convergence(&c).unwrap();
        assert_eq!(a, b);
        let ks = a.ks_distance.unwrap();
        assert!((0.0..=1.0).contains(&ks));
        assert!((0.0..=1.0).contains(&a.rejection_rate.unwrap()));
        let mut scaled = c.clone();
        scaled.null_params = Some(vec![5.0]);
        let s = null_convergence(&scaled).unwrap();
        for (x, y) in a.statistics.iter().zip(&s.statistics) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        assert_eq!(pool.install(|| null_convergence(&c).unwrap()), a);
    }

    #[test]
    fn ustat_boundary_sample() {
        let r = ustat_convergence(&small("puri-rubin", 4, 100)).unwrap();
        assert_eq!(r.statistics.len(), 100);
        assert!(r.rejection_rate.is_none());
    }

    #[test]
    fn weibull_shape_one_is_the_null() {
        let mut c = small("puri-rubin", 40, 100);
        c.alternative = Some(Alternative::Weibull {
            shape: 1.0,
            scale: 1.0,
        });
        let w = power_study(&c).unwrap();
        c.alternative = Some(Alternative::Null);
        let e = power_study(&c).unwrap();
        // same law, different sampling algorithm: rates agree to MC noise
        assert!((w.rejection_rate.unwrap() - e.rejection_rate.unwrap()).abs() < 0.1);
    }

    #[test]
    fn weibull_shape_two_has_power() {
        let mut c = small("puri-rubin", 200, 100);
        c.alternative = Some(Alternative::Weibull {
            shape: 2.0,
            scale: 1.0,
        });
        let r = power_study(&c).unwrap();
        assert!(r.rejection_rate.unwrap() > 0.5, "{r:?}");
    }

    #[test]
    fn effect_separation_grows_with_draws() {
        let lo = estimation_effect(polya(), 200, 50, 1_000, 3).unwrap();
        let hi = estimation_effect(polya(), 200, 50, 200_000, 3).unwrap();
        assert!(hi.separation > lo.separation);
        assert!(hi.separation > 3.0);
        assert!(hi.q95_star < hi.q95_plain);
    }

    #[test]
    fn statistics_csv() {
        let r = ustat_convergence(&small("puri-rubin", 4, 100)).unwrap();
        let mut buf = Vec::new();
        r.write_statistics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert!(text.starts_with("statistic\n"));
    }
}
