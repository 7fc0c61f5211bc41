//! Domain types for equidistribution-characterization tests.
//!
//! A [`CharacterizationSpec`] bundles everything the rest of the crate needs
//! about one test: the kernel `g(x₁..x_m, t; γ)`, its null mean `μ(t; γ)`
//! and derivative `d₁μ`, the integrating measure `M`, the null family `F`,
//! and the plug-in estimator with its influence function `α`.
//!
//! Specs are code-level plug-ins built from plain function pointers, so
//! they are `Send + Sync` and cheap to share.

mod builtin;
mod data;
mod diagnostics;

pub use builtin::{BUILTIN_NAMES, builtin_spec, polya, puri_rubin, puri_rubin_closed_kernel};
pub use data::{load_sample, load_sample_path};
pub use diagnostics::{DiagnosticReport, check_conditions};

use crate::error::{Error, Result};
use crate::quadrature::integrate_interval;
use rand::RngCore;

/// How integrals against the measure are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraturePlan {
    /// Indicator kernels: integrate exactly between sorted breakpoints using
    /// the measure's closed-form tail mass.
    BreakpointExact,
    /// Fixed-node Gauss rule with `nodes` points in the measure's quantile
    /// coordinate.
    Gauss { nodes: usize },
}

pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// A probability measure `dM(t) = w(t) dt`.
#[derive(Debug, Clone)]
pub struct MeasureSpec {
    name: &'static str,
    support: (f64, f64),
    density: fn(f64) -> f64,
    cdf: fn(f64) -> f64,
    quantile: fn(f64) -> f64,
    pair_integral: Option<fn(f64, f64) -> f64>,
    plan: QuadraturePlan,
}

impl MeasureSpec {
    /// Build a measure, checking numerically that the density is
    /// nonnegative and integrates to one over its support.
    pub fn new(
        name: &'static str,
        support: (f64, f64),
        density: fn(f64) -> f64,
        cdf: fn(f64) -> f64,
        quantile: fn(f64) -> f64,
        pair_integral: Option<fn(f64, f64) -> f64>,
        plan: QuadraturePlan,
    ) -> Result<Self> {
        let total = integrate_interval(support.0, support.1, density);
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Precondition(format!(
                "measure {name} has total mass {total}, expected 1"
            )));
        }
        for k in 1..100 {
            let t = quantile(k as f64 / 100.0);
            if density(t) < 0.0 {
                return Err(Error::Precondition(format!(
                    "measure {name} has negative density at {t}"
                )));
            }
        }
        Ok(Self {
            name,
            support,
            density,
            cdf,
            quantile,
            pair_integral,
            plan,
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn density(&self, t: f64) -> f64 {
        (self.density)(t)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        (self.cdf)(t)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        (self.quantile)(u)
    }

    pub fn plan(&self) -> QuadraturePlan {
        self.plan
    }

    /// `∫ I{u<t} I{v<t} dM(t)` when a closed form is available.
    pub fn pair_integral(&self, u: f64, v: f64) -> Option<f64> {
        self.pair_integral.map(|f| f(u, v))
    }

    pub fn has_pair_integral(&self) -> bool {
        self.pair_integral.is_some()
    }

    /// Tail mass `M((b, ∞))`.
    pub fn tail_mass(&self, b: f64) -> f64 {
        match self.pair_integral {
            Some(f) => f(b, b),
            None => 1.0 - (self.cdf)(b),
        }
    }

    /// Same measure with a different quadrature plan.
    pub fn with_plan(mut self, plan: QuadraturePlan) -> Self {
        self.plan = plan;
        self
    }
}

/// Parametric null family `F(x; λ)`.
#[derive(Debug, Clone)]
pub struct NullFamily {
    pub name: &'static str,
    /// Canonical parameter value used for projections and simulation.
    pub canonical: Vec<f64>,
    sampler: fn(&[f64], usize, &mut dyn RngCore) -> Vec<f64>,
    cdf: fn(f64, &[f64]) -> f64,
    quantile: fn(f64, &[f64]) -> f64,
    density: fn(f64, &[f64]) -> f64,
}

impl NullFamily {
    pub fn new(
        name: &'static str,
        canonical: Vec<f64>,
        sampler: fn(&[f64], usize, &mut dyn RngCore) -> Vec<f64>,
        cdf: fn(f64, &[f64]) -> f64,
        quantile: fn(f64, &[f64]) -> f64,
        density: fn(f64, &[f64]) -> f64,
    ) -> Self {
        Self {
            name,
            canonical,
            sampler,
            cdf,
            quantile,
            density,
        }
    }

    pub fn draw(&self, params: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (self.sampler)(params, n, rng)
    }

    /// Draw a sample from a fresh stream keyed by `seed`.
    pub fn sample(&self, params: &[f64], n: usize, seed: u64) -> Result<Sample> {
        let mut rng = crate::rng::stream(seed, 0);
        Sample::new(self.draw(params, n, &mut rng))
    }

    pub fn cdf(&self, x: f64, params: &[f64]) -> f64 {
        (self.cdf)(x, params)
    }

    pub fn quantile(&self, u: f64, params: &[f64]) -> f64 {
        (self.quantile)(u, params)
    }

    pub fn density(&self, x: f64, params: &[f64]) -> f64 {
        (self.density)(x, params)
    }
}

/// Plug-in estimator with its influence function.
#[derive(Debug, Clone)]
pub struct EstimatorSpec {
    pub dim: usize,
    estimate: fn(&[f64]) -> Result<Vec<f64>>,
    influence: fn(f64, &[f64]) -> Vec<f64>,
    pub scale_equivariant: bool,
    pub location_equivariant: bool,
}

impl EstimatorSpec {
    pub fn new(
        dim: usize,
        estimate: fn(&[f64]) -> Result<Vec<f64>>,
        influence: fn(f64, &[f64]) -> Vec<f64>,
        scale_equivariant: bool,
        location_equivariant: bool,
    ) -> Self {
        Self {
            dim,
            estimate,
            influence,
            scale_equivariant,
            location_equivariant,
        }
    }

    pub fn estimate(&self, values: &[f64]) -> Result<Vec<f64>> {
        (self.estimate)(values)
    }

    /// `α(x; λ)`.
    pub fn influence(&self, x: f64, lambda: &[f64]) -> Vec<f64> {
        (self.influence)(x, lambda)
    }
}

/// Breakpoint form of an indicator-difference kernel:
/// `g(xs, t; γ) = I{t > joint(xs; γ)} − (1/m) Σᵣ I{t > marginal(xᵣ; γ)}`
/// up to the value at the breakpoints themselves.
#[derive(Debug, Clone, Copy)]
pub struct StepForm {
    pub joint: fn(&[f64], &[f64]) -> f64,
    pub marginal: fn(f64, &[f64]) -> f64,
}

/// Preprocessing applied to data before the kernel sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardization {
    /// Use the raw sample; the estimate enters the kernel as `γ`.
    None,
    /// Subtract the sample mean and divide by the sample standard deviation.
    LocationScale,
}

/// Closed-form second projection `(x, y, λ) ↦ φ₂(x, y; λ)`.
pub type Phi2Fn = fn(f64, f64, &[f64]) -> f64;

/// One equidistribution-characterization test.
#[derive(Debug, Clone)]
pub struct CharacterizationSpec {
    pub id: &'static str,
    /// Number of sample arguments of `g`.
    pub m: usize,
    g: fn(&[f64], f64, &[f64]) -> f64,
    mu: fn(f64, &[f64], &[f64]) -> f64,
    d1mu: fn(f64, &[f64]) -> Vec<f64>,
    g1: fn(f64, f64, &[f64]) -> f64,
    pub measure: MeasureSpec,
    pub null_family: NullFamily,
    pub estimator: EstimatorSpec,
    pub has_zero_d1mu: bool,
    /// Kernel parameter value matching `null_family.canonical`.
    pub null_gamma: Vec<f64>,
    pub standardization: Standardization,
    pub step_form: Option<StepForm>,
    phi2_closed: Option<Phi2Fn>,
}

/// Function table for [`CharacterizationSpec::new`].
pub struct SpecParts {
    pub id: &'static str,
    pub m: usize,
    pub g: fn(&[f64], f64, &[f64]) -> f64,
    pub mu: fn(f64, &[f64], &[f64]) -> f64,
    pub d1mu: fn(f64, &[f64]) -> Vec<f64>,
    pub g1: fn(f64, f64, &[f64]) -> f64,
    pub measure: MeasureSpec,
    pub null_family: NullFamily,
    pub estimator: EstimatorSpec,
    pub has_zero_d1mu: bool,
    pub null_gamma: Vec<f64>,
    pub standardization: Standardization,
    pub step_form: Option<StepForm>,
    pub phi2_closed: Option<Phi2Fn>,
}

impl CharacterizationSpec {
    pub fn new(p: SpecParts) -> Result<Self> {
        if p.m == 0 {
            return Err(Error::Precondition(
                "kernel arity m must be positive".into(),
            ));
        }
        if p.null_gamma.len() != p.estimator.dim {
            return Err(Error::Precondition(format!(
                "null parameter has {} components, estimator has {}",
                p.null_gamma.len(),
                p.estimator.dim
            )));
        }
        Ok(Self {
            id: p.id,
            m: p.m,
            g: p.g,
            mu: p.mu,
            d1mu: p.d1mu,
            g1: p.g1,
            measure: p.measure,
            null_family: p.null_family,
            estimator: p.estimator,
            has_zero_d1mu: p.has_zero_d1mu,
            null_gamma: p.null_gamma,
            standardization: p.standardization,
            step_form: p.step_form,
            phi2_closed: p.phi2_closed,
        })
    }

    /// `g(xs, t; γ)`; `xs` must have `m` entries.
    pub fn g(&self, xs: &[f64], t: f64, gamma: &[f64]) -> f64 {
        (self.g)(xs, t, gamma)
    }

    /// `μ(t; γ)` with data drawn from the null at kernel parameter `lambda`.
    pub fn mu(&self, t: f64, gamma: &[f64], lambda: &[f64]) -> f64 {
        (self.mu)(t, gamma, lambda)
    }

    /// `d₁μ(t; λ)`, a vector of length `estimator.dim`.
    pub fn d1mu(&self, t: f64, lambda: &[f64]) -> Vec<f64> {
        (self.d1mu)(t, lambda)
    }

    /// First projection `g₁(x, t; λ) = E g(x, X₂, …, X_m, t; λ)`.
    pub fn g1(&self, x: f64, t: f64, lambda: &[f64]) -> f64 {
        (self.g1)(x, t, lambda)
    }

    /// Where `g₁(x, ·; λ)` jumps, if the kernel has a step form.
    pub fn g1_jump(&self, x: f64, lambda: &[f64]) -> Option<f64> {
        self.step_form.map(|s| (s.marginal)(x, lambda))
    }

    pub fn phi2_closed(&self) -> Option<Phi2Fn> {
        self.phi2_closed
    }

    /// Canonical family parameters for simulation.
    pub fn null_params(&self) -> &[f64] {
        &self.null_family.canonical
    }

    /// `(2m choose 2)`, the weight in front of the χ² series.
    pub fn coefficient(&self) -> f64 {
        let m = self.m as f64;
        m * (2.0 * m - 1.0)
    }

    /// Same spec without the closed-form second projection, forcing the
    /// generic quadrature routes.
    pub fn without_closed_forms(mut self) -> Self {
        self.phi2_closed = None;
        self
    }
}

/// An observed univariate i.i.d. sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue { row: row + 1 });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    /// Sample standard deviation with the `n − 1` denominator; zero for `n = 1`.
    pub fn std_dev(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self.values.iter().map(|x| (x - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Apply `x ↦ a + b·x`.
    pub fn affine(&self, a: f64, b: f64) -> Result<Self> {
        Sample::new(self.values.iter().map(|x| a + b * x).collect())
    }
}
