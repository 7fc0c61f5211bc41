//! Evaluation of `V_n(λ̂)` and `U_n(λ̂)` from data.
//!
//! The V-statistic of the order-`2m` kernel equals the integrated square of
//! the V-empirical mean of `g`:
//!
//! ```text
//! V_n(λ̂) = ∫ G_n(t)² dM(t),   G_n(t) = n^{−m} Σ_{i₁..iₘ} g(X_{i₁}..X_{iₘ}, t; λ̂).
//! ```
//!
//! For indicator kernels `G_n` is a step function with integer numerator,
//! so the integral is evaluated exactly by one sort of the `nᵐ + n`
//! breakpoints and a sweep with the measure's tail mass. Other kernels fall
//! back to `G_n` sampled on quadrature nodes.

use crate::error::{Error, Result};
use crate::kernels::{KernelContext, symmetrized_kernel};
use crate::model::{CharacterizationSpec, MeasureSpec, QuadraturePlan, Sample, Standardization};
use serde::{Deserialize, Serialize};

/// Largest number of kernel evaluations `vstat_naive` accepts by default.
pub const NAIVE_GUARD: u64 = 100_000_000;
/// Largest sample size accepted by the U-statistic enumeration.
pub const USTAT_MAX_N: usize = 200;

/// Plug-in parameter estimate and the preprocessing it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub spec_id: String,
    /// Estimator applied to the raw sample.
    pub values: Vec<f64>,
    /// Kernel parameter used on the working (possibly studentized) data.
    pub gamma: Vec<f64>,
    /// Working data is `(x − location) / scale`.
    pub location: f64,
    pub scale: f64,
}

impl ParamEstimate {
    pub fn working(&self, sample: &Sample) -> Vec<f64> {
        sample
            .values()
            .iter()
            .map(|x| (x - self.location) / self.scale)
            .collect()
    }
}

pub fn estimate(spec: &CharacterizationSpec, sample: &Sample) -> Result<ParamEstimate> {
    let values = spec.estimator.estimate(sample.values())?;
    match spec.standardization {
        Standardization::None => Ok(ParamEstimate {
            spec_id: spec.id.to_string(),
            gamma: values.clone(),
            values,
            location: 0.0,
            scale: 1.0,
        }),
        Standardization::LocationScale => {
            let scale = sample.std_dev();
            if scale.is_nan() || scale <= 0.0 {
                return Err(Error::DegenerateSample);
            }
            let location = sample.mean();
            let working: Vec<f64> = sample
                .values()
                .iter()
                .map(|x| (x - location) / scale)
                .collect();
            let gamma = spec.estimator.estimate(&working)?;
            Ok(ParamEstimate {
                spec_id: spec.id.to_string(),
                values,
                gamma,
                location,
                scale,
            })
        }
    }
}

/// `t ↦ G_n(t)`.
#[derive(Debug, Clone)]
pub enum GMeanProcess {
    /// `G_n(t) = count_k / denom` for `t` in `(breakpoint_k, breakpoint_{k+1}]`,
    /// zero before the first breakpoint.
    Steps {
        breakpoints: Vec<f64>,
        counts: Vec<i64>,
        denom: f64,
    },
    /// `G_n` evaluated at quadrature nodes.
    Sampled {
        nodes: Vec<f64>,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
}

impl GMeanProcess {
    pub fn build(spec: &CharacterizationSpec, working: &[f64], gamma: &[f64]) -> Self {
        match (spec.step_form, spec.measure.plan()) {
            (Some(_), QuadraturePlan::BreakpointExact) => steps(spec, working, gamma),
            _ => sampled(spec, working, gamma),
        }
    }

    /// `G_n(t)`, taking the right-continuous convention at breakpoints.
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            GMeanProcess::Steps {
                breakpoints,
                counts,
                denom,
            } => {
                let k = breakpoints.partition_point(|&b| b < t);
                if k == 0 {
                    0.0
                } else {
                    counts[k - 1] as f64 / denom
                }
            }
            GMeanProcess::Sampled { nodes, values, .. } => {
                let k = nodes.partition_point(|&b| b < t).min(values.len() - 1);
                values[k]
            }
        }
    }

    /// `∫ G_n(t)² dM(t)`.
    pub fn integral_of_square(&self, measure: &MeasureSpec) -> f64 {
        match self {
            GMeanProcess::Steps {
                breakpoints,
                counts,
                denom,
            } => {
                let mut total = 0.0;
                let mut lower = breakpoints.first().map_or(0.0, |&b| measure.tail_mass(b));
                for (k, &count) in counts.iter().enumerate() {
                    let upper = match breakpoints.get(k + 1) {
                        Some(&b) => measure.tail_mass(b),
                        None => 0.0,
                    };
                    let c = count as f64;
                    total += c * c * (lower - upper);
                    lower = upper;
                }
                total / (denom * denom)
            }
            GMeanProcess::Sampled {
                weights, values, ..
            } => weights.iter().zip(values).map(|(w, v)| w * v * v).sum(),
        }
    }
}

/// Visit every index tuple in `0..n` of length `m`.
fn for_each_tuple(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; m];
    loop {
        f(&idx);
        let mut pos = m;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn steps(spec: &CharacterizationSpec, x: &[f64], gamma: &[f64]) -> GMeanProcess {
    let sf = spec.step_form.expect("step form");
    let n = x.len();
    let m = spec.m;
    let marginal_weight = -(n.pow(m as u32 - 1) as i64);
    let mut events: Vec<(f64, i64)> = Vec::with_capacity(n.pow(m as u32) / m.max(1) + 2 * n);
    if m == 2 {
        // the joint breakpoint is symmetric in its arguments
        for i in 0..n {
            events.push(((sf.joint)(&[x[i], x[i]], gamma), 1));
            for j in i + 1..n {
                events.push(((sf.joint)(&[x[i], x[j]], gamma), 2));
            }
        }
    } else {
        let mut args = vec![0.0; m];
        for_each_tuple(n, m, |idx| {
            for (a, &i) in args.iter_mut().zip(idx) {
                *a = x[i];
            }
            events.push(((sf.joint)(&args, gamma), 1));
        });
    }
    events.extend(
        x.iter()
            .map(|&xi| ((sf.marginal)(xi, gamma), marginal_weight)),
    );
    events.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut breakpoints = Vec::with_capacity(events.len());
    let mut counts = Vec::with_capacity(events.len());
    let mut running = 0i64;
    for (b, w) in events {
        running += w;
        if breakpoints.last() == Some(&b) {
            *counts.last_mut().expect("nonempty") = running;
        } else {
            breakpoints.push(b);
            counts.push(running);
        }
    }
    debug_assert_eq!(running, 0);
    GMeanProcess::Steps {
        breakpoints,
        counts,
        denom: (n as f64).powi(m as i32),
    }
}

fn sampled(spec: &CharacterizationSpec, x: &[f64], gamma: &[f64]) -> GMeanProcess {
    let ctx = KernelContext::new(spec, gamma);
    let nodes = ctx.nodes().to_vec();
    let weights = ctx.weights().to_vec();
    let mut values = vec![0.0; nodes.len()];
    let mut args = vec![0.0; spec.m];
    for_each_tuple(x.len(), spec.m, |idx| {
        for (a, &i) in args.iter_mut().zip(idx) {
            *a = x[i];
        }
        for (v, &t) in values.iter_mut().zip(&nodes) {
            *v += spec.g(&args, t, gamma);
        }
    });
    let denom = (x.len() as f64).powi(spec.m as i32);
    values.iter_mut().for_each(|v| *v /= denom);
    GMeanProcess::Sampled {
        nodes,
        weights,
        values,
    }
}

fn require_size(spec: &CharacterizationSpec, sample: &Sample) -> Result<()> {
    let min = 2 * spec.m;
    if sample.n() < min {
        return Err(Error::SampleTooSmall { n: sample.n(), min });
    }
    Ok(())
}

/// `V_n(λ̂)` by the integrated-square representation.
pub fn vstat(spec: &CharacterizationSpec, sample: &Sample, est: &ParamEstimate) -> Result<f64> {
    require_size(spec, sample)?;
    let working = est.working(sample);
    let process = GMeanProcess::build(spec, &working, &est.gamma);
    Ok(process.integral_of_square(&spec.measure))
}

/// `V_n(λ̂)` as the plain average of the symmetrized kernel over all
/// `n^{2m}` index tuples.
pub fn vstat_naive(
    spec: &CharacterizationSpec,
    sample: &Sample,
    est: &ParamEstimate,
) -> Result<f64> {
    vstat_naive_with_guard(spec, sample, est, NAIVE_GUARD)
}

pub fn vstat_naive_with_guard(
    spec: &CharacterizationSpec,
    sample: &Sample,
    est: &ParamEstimate,
    guard: u64,
) -> Result<f64> {
    require_size(spec, sample)?;
    let n = sample.n();
    let order = 2 * spec.m;
    let tuples = (n as u64).checked_pow(order as u32).unwrap_or(u64::MAX);
    if tuples > guard {
        return Err(Error::TooLargeForNaive(format!(
            "n^{order} = {tuples} kernel evaluations exceeds the guard {guard}"
        )));
    }
    let working = est.working(sample);
    let ctx = KernelContext::new(spec, &est.gamma);
    let mut args = vec![0.0; order];
    let mut total = 0.0;
    let mut failure = None;
    for_each_tuple(n, order, |idx| {
        for (a, &i) in args.iter_mut().zip(idx) {
            *a = working[i];
        }
        match symmetrized_kernel(&ctx, &args, &est.gamma) {
            Ok(v) => total += v,
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(total / tuples as f64)
}

/// Breakpoint lists of `g` for every unordered pair, used by the `m = 2`
/// U-statistic enumeration.
struct PairSteps {
    n: usize,
    steps: Vec<[(f64, f64); 3]>,
}

impl PairSteps {
    fn new(spec: &CharacterizationSpec, x: &[f64], gamma: &[f64]) -> Self {
        let sf = spec.step_form.expect("step form");
        let n = x.len();
        let mut steps = vec![[(0.0, 0.0); 3]; n * n];
        for i in 0..n {
            for j in 0..n {
                steps[i * n + j] = [
                    ((sf.joint)(&[x[i], x[j]], gamma), 1.0),
                    ((sf.marginal)(x[i], gamma), -0.5),
                    ((sf.marginal)(x[j], gamma), -0.5),
                ];
            }
        }
        Self { n, steps }
    }

    fn cross(&self, measure: &MeasureSpec, (a, b): (usize, usize), (c, d): (usize, usize)) -> f64 {
        let p = &self.steps[a * self.n + b];
        let q = &self.steps[c * self.n + d];
        let mut acc = 0.0;
        for &(u, cu) in p {
            for &(v, cv) in q {
                acc += cu * cv * measure.tail_mass(u.max(v));
            }
        }
        acc
    }
}

/// `U_n(λ̂)`: average of the symmetrized kernel over all strictly increasing
/// index tuples.
pub fn ustat(spec: &CharacterizationSpec, sample: &Sample, est: &ParamEstimate) -> Result<f64> {
    require_size(spec, sample)?;
    let n = sample.n();
    if n > USTAT_MAX_N {
        return Err(Error::TooLargeForNaive(format!(
            "U-statistic enumeration is limited to n <= {USTAT_MAX_N}, got {n}"
        )));
    }
    let working = est.working(sample);
    let order = 2 * spec.m;
    let fast = spec.m == 2
        && spec.step_form.is_some()
        && spec.measure.plan() == QuadraturePlan::BreakpointExact
        && spec.measure.has_pair_integral();

    let mut total = 0.0;
    let mut count = 0u64;
    if fast {
        let table = PairSteps::new(spec, &working, &est.gamma);
        let m = &spec.measure;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    for l in k + 1..n {
                        total += (table.cross(m, (i, j), (k, l))
                            + table.cross(m, (i, k), (j, l))
                            + table.cross(m, (i, l), (j, k)))
                            / 3.0;
                        count += 1;
                    }
                }
            }
        }
    } else {
        let ctx = KernelContext::new(spec, &est.gamma);
        let mut idx: Vec<usize> = (0..order).collect();
        let mut args = vec![0.0; order];
        loop {
            for (a, &i) in args.iter_mut().zip(&idx) {
                *a = working[i];
            }
            total += symmetrized_kernel(&ctx, &args, &est.gamma)?;
            count += 1;
            // next combination
            let mut pos = order;
            loop {
                if pos == 0 {
                    return Ok(total / count as f64);
                }
                pos -= 1;
                if idx[pos] < n - order + pos {
                    idx[pos] += 1;
                    for q in pos + 1..order {
                        idx[q] = idx[q - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    Ok(total / count as f64)
}

/// The statistic, its `n`-scaled version and the estimate behind it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledStatistic {
    pub statistic: f64,
    pub scaled: f64,
    pub estimate: ParamEstimate,
}

/// `n · V_n(λ̂)` with the estimate computed from the same sample.
pub fn scaled_statistic(spec: &CharacterizationSpec, sample: &Sample) -> Result<ScaledStatistic> {
    let estimate = estimate(spec, sample)?;
    let statistic = vstat(spec, sample, &estimate)?;
    Ok(ScaledStatistic {
        statistic,
        scaled: sample.n() as f64 * statistic,
        estimate,
    })
}
