//! Symmetrized kernels and their projections.
//!
//! For a spec with arity `m` the order-`2m` kernel is
//!
//! ```text
//! Φ(x₁..x₂ₘ; γ) = (1/(2m)!) Σ_π ∫ g(x_π(1..m), t; γ) g(x_π(m+1..2m), t; γ) dM(t)
//! ```
//!
//! The integrand only depends on how `{x₁..x₂ₘ}` is split into two `m`-sets,
//! so the permutation average is taken over the `C(2m−1, m−1)` splits that
//! keep `x₁` in the first half (3 splits instead of 24 for `m = 2`).
//!
//! The estimation-corrected kernel `Φ*` replaces each `g(A, t; λ)` with
//! `g(A, t; λ) + d₁μ(t; λ)ᵀ (1/m) Σ_{a∈A} α(a)`. Its second projection is the
//! Gram form
//!
//! ```text
//! φ₂*(x, y) = m/(2m−1) · ∫ h(x, t) h(y, t) dM(t),  h = g₁ + d₁μᵀ α / m.
//! ```

use crate::error::{Error, Result};
use crate::model::{CharacterizationSpec, DEFAULT_QUADRATURE_NODES, QuadraturePlan};
use crate::quadrature::{UnitRule, composite, grade_ends, unit_bounds};

/// Panels per smooth segment in piecewise integrals.
const SEGMENT_PANELS: usize = 8;
/// Geometric refinement levels at each end of the unit interval.
const END_GRADING: usize = 12;
/// Gauss–Legendre points per panel in piecewise integrals.
const PANEL_POINTS: usize = 16;

/// A spec bound to a parameter value together with a Gauss rule realized
/// from its measure.
#[derive(Debug, Clone)]
pub struct KernelContext<'a> {
    pub spec: &'a CharacterizationSpec,
    pub lambda: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panel_rule: UnitRule,
}

impl<'a> KernelContext<'a> {
    pub fn new(spec: &'a CharacterizationSpec, lambda: &[f64]) -> Self {
        let q = match spec.measure.plan() {
            QuadraturePlan::Gauss { nodes } => nodes,
            QuadraturePlan::BreakpointExact => DEFAULT_QUADRATURE_NODES,
        };
        let rule = UnitRule::gauss_legendre(q);
        let nodes = rule
            .nodes
            .iter()
            .map(|&u| spec.measure.quantile(u))
            .collect();
        Self {
            spec,
            lambda: lambda.to_vec(),
            nodes,
            weights: rule.weights,
            panel_rule: UnitRule::gauss_legendre(PANEL_POINTS),
        }
    }

    /// Context at the spec's canonical null parameter.
    pub fn at_null(spec: &'a CharacterizationSpec) -> Self {
        Self::new(spec, &spec.null_gamma)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn exact(&self) -> bool {
        self.spec.measure.plan() == QuadraturePlan::BreakpointExact
            && self.spec.step_form.is_some()
            && self.spec.measure.has_pair_integral()
    }

    /// `∫ f dM` with panel boundaries at the measure levels of `cuts`.
    /// Without cuts on a Gauss plan the context's fixed rule is used.
    pub fn integrate_with_cuts(&self, cuts: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        if cuts.is_empty() && matches!(self.spec.measure.plan(), QuadraturePlan::Gauss { .. }) {
            return self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(&t, &w)| w * f(t))
                .sum();
        }
        let levels: Vec<f64> = cuts.iter().map(|&t| self.spec.measure.cdf(t)).collect();
        let bounds = grade_ends(&unit_bounds(&levels, SEGMENT_PANELS), END_GRADING);
        let (us, ws) = composite(&bounds, &self.panel_rule);
        us.iter()
            .zip(&ws)
            .map(|(&u, &w)| w * f(self.spec.measure.quantile(u)))
            .sum()
    }
}

/// `2m²(2m−2)!/(2m)! = m/(2m−1)`; equals 2/3 for `m = 2`.
pub fn projection_prefactor(m: usize) -> f64 {
    let m = m as f64;
    m / (2.0 * m - 1.0)
}

/// The distinct ways to split `0..2m` into two halves of size `m`, with
/// index 0 always in the first half.
pub fn splits(m: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = 2 * m;
    let mut out = Vec::new();
    let mut first = vec![0usize];
    fn rec(
        m: usize,
        n: usize,
        next: usize,
        first: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, Vec<usize>)>,
    ) {
        if first.len() == m {
            let second = (0..n).filter(|i| !first.contains(i)).collect();
            out.push((first.clone(), second));
            return;
        }
        for i in next..n {
            first.push(i);
            rec(m, n, i + 1, first, out);
            first.pop();
        }
    }
    rec(m, n, 1, &mut first, &mut out);
    out
}

fn check_arity(spec: &CharacterizationSpec, xs: &[f64]) -> Result<()> {
    if xs.len() != 2 * spec.m {
        return Err(Error::ArityError {
            expected: 2 * spec.m,
            got: xs.len(),
        });
    }
    Ok(())
}

fn gather(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| xs[i]).collect()
}

/// Breakpoints and coefficients of `g(args, ·; γ)`.
fn steps(spec: &CharacterizationSpec, args: &[f64], gamma: &[f64]) -> Vec<(f64, f64)> {
    let sf = spec.step_form.expect("step form");
    let w = 1.0 / spec.m as f64;
    let mut out = Vec::with_capacity(args.len() + 1);
    out.push(((sf.joint)(args, gamma), 1.0));
    out.extend(args.iter().map(|&x| ((sf.marginal)(x, gamma), -w)));
    out
}

fn breakpoints(spec: &CharacterizationSpec, args: &[f64], gamma: &[f64]) -> Vec<f64> {
    match spec.step_form {
        Some(_) => steps(spec, args, gamma)
            .into_iter()
            .map(|(b, _)| b)
            .collect(),
        None => Vec::new(),
    }
}

/// `Φ(xs; γ)` for `xs` of length `2m`.
///
/// Uses the measure's closed pair integral over the kernel breakpoints when
/// available, otherwise quadrature.
pub fn symmetrized_kernel(ctx: &KernelContext, xs: &[f64], gamma: &[f64]) -> Result<f64> {
    check_arity(ctx.spec, xs)?;
    if !ctx.exact() {
        return symmetrized_kernel_quadrature(ctx, xs, gamma);
    }
    let measure = &ctx.spec.measure;
    let parts = splits(ctx.spec.m);
    let total: f64 = parts
        .iter()
        .map(|(a, b)| {
            let sa = steps(ctx.spec, &gather(xs, a), gamma);
            let sb = steps(ctx.spec, &gather(xs, b), gamma);
            let mut acc = 0.0;
            for &(u, cu) in &sa {
                for &(v, cv) in &sb {
                    acc += cu * cv * measure.pair_integral(u, v).expect("closed pair integral");
                }
            }
            acc
        })
        .sum();
    Ok(total / parts.len() as f64)
}

/// `Φ(xs; γ)` by direct quadrature of `g·g` against `M`, splitting at the
/// kernel breakpoints when they are known.
pub fn symmetrized_kernel_quadrature(
    ctx: &KernelContext,
    xs: &[f64],
    gamma: &[f64],
) -> Result<f64> {
    check_arity(ctx.spec, xs)?;
    let spec = ctx.spec;
    let parts = splits(spec.m);
    let total: f64 = parts
        .iter()
        .map(|(a, b)| {
            let (xa, xb) = (gather(xs, a), gather(xs, b));
            let mut cuts = breakpoints(spec, &xa, gamma);
            cuts.extend(breakpoints(spec, &xb, gamma));
            ctx.integrate_with_cuts(&cuts, |t| spec.g(&xa, t, gamma) * spec.g(&xb, t, gamma))
        })
        .sum();
    Ok(total / parts.len() as f64)
}

fn mean_influence(ctx: &KernelContext, args: &[f64]) -> Vec<f64> {
    let p = ctx.spec.estimator.dim;
    let mut acc = vec![0.0; p];
    for &x in args {
        for (a, v) in acc
            .iter_mut()
            .zip(ctx.spec.estimator.influence(x, &ctx.lambda))
        {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= args.len() as f64);
    acc
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Φ*(xs; λ)`: the kernel with the estimation correction `d₁μᵀ ᾱ` added
/// to each factor, at the context's true parameter.
pub fn starred_kernel(ctx: &KernelContext, xs: &[f64]) -> Result<f64> {
    check_arity(ctx.spec, xs)?;
    let spec = ctx.spec;
    if spec.has_zero_d1mu {
        return symmetrized_kernel(ctx, xs, &ctx.lambda);
    }
    let lambda = &ctx.lambda;
    let parts = splits(spec.m);
    let total: f64 = parts
        .iter()
        .map(|(a, b)| {
            let (xa, xb) = (gather(xs, a), gather(xs, b));
            let (ma, mb) = (mean_influence(ctx, &xa), mean_influence(ctx, &xb));
            let mut cuts = breakpoints(spec, &xa, lambda);
            cuts.extend(breakpoints(spec, &xb, lambda));
            ctx.integrate_with_cuts(&cuts, |t| {
                let d = spec.d1mu(t, lambda);
                (spec.g(&xa, t, lambda) + dot(&d, &ma)) * (spec.g(&xb, t, lambda) + dot(&d, &mb))
            })
        })
        .sum();
    Ok(total / parts.len() as f64)
}

/// `g₁(x, t; λ)`.
pub fn g1_eval(ctx: &KernelContext, x: f64, t: f64) -> f64 {
    ctx.spec.g1(x, t, &ctx.lambda)
}

/// `h(x, t) = g₁(x, t; λ) + d₁μ(t; λ)ᵀ α(x) / m`, or plain `g₁` when
/// `corrected` is false.
pub fn projection_factor(
    ctx: &KernelContext,
    x: f64,
    alpha: &[f64],
    t: f64,
    corrected: bool,
) -> f64 {
    let base = ctx.spec.g1(x, t, &ctx.lambda);
    if !corrected || ctx.spec.has_zero_d1mu {
        return base;
    }
    base + dot(&ctx.spec.d1mu(t, &ctx.lambda), alpha) / ctx.spec.m as f64
}

fn projection_by_quadrature(ctx: &KernelContext, x: f64, y: f64, corrected: bool) -> f64 {
    let spec = ctx.spec;
    let ax = spec.estimator.influence(x, &ctx.lambda);
    let ay = spec.estimator.influence(y, &ctx.lambda);
    let cuts: Vec<f64> = [spec.g1_jump(x, &ctx.lambda), spec.g1_jump(y, &ctx.lambda)]
        .into_iter()
        .flatten()
        .collect();
    let integral = ctx.integrate_with_cuts(&cuts, |t| {
        projection_factor(ctx, x, &ax, t, corrected) * projection_factor(ctx, y, &ay, t, corrected)
    });
    projection_prefactor(spec.m) * integral
}

/// `φ₂*(x, y; λ)`. Dispatches to the spec's closed form when the
/// correction vanishes and one is provided.
pub fn second_projection_star(ctx: &KernelContext, x: f64, y: f64) -> f64 {
    match ctx.spec.phi2_closed() {
        Some(f) if ctx.spec.has_zero_d1mu => f(x, y, &ctx.lambda),
        _ => projection_by_quadrature(ctx, x, y, true),
    }
}

/// `φ₂(x, y; λ)` of the uncorrected kernel.
pub fn second_projection(ctx: &KernelContext, x: f64, y: f64) -> f64 {
    match ctx.spec.phi2_closed() {
        Some(f) => f(x, y, &ctx.lambda),
        None => projection_by_quadrature(ctx, x, y, false),
    }
}
