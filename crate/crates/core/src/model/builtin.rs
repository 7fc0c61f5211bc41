//! Builtin characterizations.
//!
//! * `puri-rubin`: `|X₁ − X₂| =ᵈ X₁` characterizes the exponential scale
//!   family. Measure `dM(t) = e^{−t} dt`, estimator `λ̂ = 1/X̄`.
//! * `polya`: `(X₁ + X₂)/√2 =ᵈ X₁` characterizes the centered normal
//!   family. Measure `dM(s) = φ(s) ds`, estimator `θ̂ = X̄`, data studentized.

use super::{
    CharacterizationSpec, EstimatorSpec, MeasureSpec, NullFamily, QuadraturePlan, SpecParts,
    Standardization, StepForm,
};
use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
use rand::RngCore;
use rand_distr::{Distribution, Exp, Normal};
use std::f64::consts::SQRT_2;
use std::sync::OnceLock;

pub const BUILTIN_NAMES: [&str; 2] = ["puri-rubin", "polya"];

/// Look up a builtin spec by name.
pub fn builtin_spec(name: &str) -> Result<&'static CharacterizationSpec> {
    match name {
        "puri-rubin" => Ok(puri_rubin()),
        "polya" => Ok(polya()),
        other => Err(Error::UnknownSpec(other.to_string())),
    }
}

fn ind(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

// ---------------------------------------------------------------------------
// Puri–Rubin
// ---------------------------------------------------------------------------

pub fn puri_rubin() -> &'static CharacterizationSpec {
    static SPEC: OnceLock<CharacterizationSpec> = OnceLock::new();
    SPEC.get_or_init(|| {
        let measure = MeasureSpec::new(
            "exp(1)",
            (0.0, f64::INFINITY),
            |t| if t < 0.0 { 0.0 } else { (-t).exp() },
            |t| if t <= 0.0 { 0.0 } else { -(-t).exp_m1() },
            |u| -(-u).ln_1p(),
            Some(|u, v| (-(u.max(v).max(0.0))).exp()),
            QuadraturePlan::BreakpointExact,
        )
        .expect("exp(1) measure is normalized");
        let family = NullFamily::new(
            "exponential",
            vec![1.0],
            exp_sampler,
            |x, p| if x <= 0.0 { 0.0 } else { -(-p[0] * x).exp_m1() },
            |u, p| -(-u).ln_1p() / p[0],
            |x, p| {
                if x < 0.0 {
                    0.0
                } else {
                    p[0] * (-p[0] * x).exp()
                }
            },
        );
        let estimator = EstimatorSpec::new(
            1,
            pr_estimate,
            |x, l| vec![l[0] - l[0] * l[0] * x],
            true,
            false,
        );
        CharacterizationSpec::new(SpecParts {
            id: "puri-rubin",
            m: 2,
            g: pr_g,
            mu: pr_mu,
            d1mu: |_, _| vec![0.0],
            g1: pr_g1,
            measure,
            null_family: family,
            estimator,
            has_zero_d1mu: true,
            null_gamma: vec![1.0],
            standardization: Standardization::None,
            step_form: Some(StepForm {
                joint: |xs, g| g[0] * (xs[0] - xs[1]).abs(),
                marginal: |x, g| g[0] * x,
            }),
            phi2_closed: Some(pr_phi2),
        })
        .expect("puri-rubin spec is consistent")
    })
}

fn exp_sampler(p: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let d = Exp::new(p[0]).expect("positive rate");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn pr_estimate(xs: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = xs.iter().find(|x| **x <= 0.0) {
        return Err(Error::SupportError(format!(
            "puri-rubin requires positive data, found {bad}"
        )));
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    Ok(vec![1.0 / mean])
}

fn pr_g(xs: &[f64], t: f64, g: &[f64]) -> f64 {
    let (x1, x2, l) = (xs[0], xs[1], g[0]);
    ind(l * (x1 - x2).abs() < t) - 0.5 * ind(l * x1 < t) - 0.5 * ind(l * x2 < t)
}

/// `P(γ|X₁−X₂| < t) − P(γX₁ < t)` for `X ~ Exp(λ)`; both terms are the
/// same exponential cdf, so this is zero for every `γ`.
fn pr_mu(t: f64, gamma: &[f64], lambda: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let r = lambda[0] * t / gamma[0];
    let diff = -(-r).exp_m1();
    let single = -(-r).exp_m1();
    diff - single
}

/// `g₁(x, t; λ) = P(λ|x − X| < t) − ½ I{λx < t} − ½ P(λX < t)`.
fn pr_g1(x: f64, t: f64, lambda: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let y = lambda[0] * x;
    let near = (-(y - t).max(0.0)).exp() - (-(y + t)).exp();
    near - 0.5 * ind(y < t) + 0.5 * (-t).exp_m1()
}

/// Closed-form second projection at `λ = 1`, rescaled for general `λ`.
fn pr_phi2(s: f64, t: f64, lambda: &[f64]) -> f64 {
    let (s, t) = (lambda[0] * s, lambda[0] * t);
    let lo = s.min(t);
    let hi = s.max(t);
    1.0 / 18.0 + 0.5 * ((-2.0 * s - t).exp() + (-s - 2.0 * t).exp())
        - 0.25 * ((-2.0 * t).exp() + (-2.0 * s).exp())
        - 16.0 / 9.0 * (-s - t).exp()
        + (-lo).exp() * (2.0 - 3.0 * lo) / 9.0
        + (-hi).exp() * (19.0 - 6.0 * lo) / 18.0
}

/// Symmetrized four-argument kernel written as the average over all 24
/// orderings of `e^{−λ max(|x₁−x₂|,|x₃−x₄|)} − e^{−λ max(x₃,|x₁−x₂|)}
/// − e^{−λ max(x₁,|x₃−x₄|)} + e^{−λ max(x₁,x₃)}`.
pub fn puri_rubin_closed_kernel(xs: &[f64; 4], lambda: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let idx = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| idx[i] != idx[j]));
                    if !distinct {
                        continue;
                    }
                    let (x1, x2, x3, x4) = (xs[a], xs[b], xs[c], xs[d]);
                    let d12 = (x1 - x2).abs();
                    let d34 = (x3 - x4).abs();
                    total += (-lambda * d12.max(d34)).exp()
                        - (-lambda * x3.max(d12)).exp()
                        - (-lambda * x1.max(d34)).exp()
                        + (-lambda * x1.max(x3)).exp();
                    count += 1;
                }
            }
        }
    }
    total / count as f64
}

// ---------------------------------------------------------------------------
// Pólya
// ---------------------------------------------------------------------------

const SHIFT: f64 = SQRT_2 - 1.0;

pub fn polya() -> &'static CharacterizationSpec {
    static SPEC: OnceLock<CharacterizationSpec> = OnceLock::new();
    SPEC.get_or_init(|| {
        let measure = MeasureSpec::new(
            "normal(0,1)",
            (f64::NEG_INFINITY, f64::INFINITY),
            norm_pdf,
            norm_cdf,
            norm_quantile,
            Some(|u, v| norm_sf(u.max(v))),
            QuadraturePlan::BreakpointExact,
        )
        .expect("standard normal measure is normalized");
        let family = NullFamily::new(
            "normal",
            vec![0.0, 1.0],
            normal_sampler,
            |x, p| norm_cdf((x - p[0]) / p[1]),
            |u, p| p[0] + p[1] * norm_quantile(u),
            |x, p| norm_pdf((x - p[0]) / p[1]) / p[1],
        );
        let estimator = EstimatorSpec::new(1, polya_estimate, |x, l| vec![x - l[0]], true, true);
        CharacterizationSpec::new(SpecParts {
            id: "polya",
            m: 2,
            g: polya_g,
            mu: |s, g, l| norm_cdf(s + g[0] * SHIFT - SQRT_2 * l[0]) - norm_cdf(s - l[0]),
            d1mu: |s, l| vec![norm_pdf(s - l[0]) * SHIFT],
            g1: polya_g1,
            measure,
            null_family: family,
            estimator,
            has_zero_d1mu: false,
            null_gamma: vec![0.0],
            standardization: Standardization::LocationScale,
            step_form: Some(StepForm {
                joint: |xs, g| (xs[0] + xs[1]) / SQRT_2 - g[0] * SHIFT,
                marginal: |x, _| x,
            }),
            phi2_closed: None,
        })
        .expect("polya spec is consistent")
    })
}

fn normal_sampler(p: &[f64], n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let d = Normal::new(p[0], p[1]).expect("positive scale");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn polya_estimate(xs: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 || xs.iter().all(|x| *x == xs[0]) {
        return Err(Error::DegenerateSample);
    }
    Ok(vec![mean])
}

fn polya_g(xs: &[f64], s: f64, g: &[f64]) -> f64 {
    let (x1, x2) = (xs[0], xs[1]);
    ind((x1 + x2) / SQRT_2 <= s + g[0] * SHIFT) - 0.5 * ind(x1 <= s) - 0.5 * ind(x2 <= s)
}

/// `g₁(x, s; θ) = Φ(√2 s − x − θ(√2−1)) − ½ I{x ≤ s} − ½ Φ(s − θ)`.
fn polya_g1(x: f64, s: f64, lambda: &[f64]) -> f64 {
    let th = lambda[0];
    norm_cdf(SQRT_2 * s - x - th * SHIFT) - 0.5 * ind(x <= s) - 0.5 * norm_cdf(s - th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn lookup() {
        let pr = builtin_spec("puri-rubin").unwrap();
        assert_eq!((pr.m, pr.estimator.dim, pr.has_zero_d1mu), (2, 1, true));
        let po = builtin_spec("polya").unwrap();
        assert!(!po.has_zero_d1mu);
        assert!(matches!(
            builtin_spec("gamma-test"),
            Err(Error::UnknownSpec(_))
        ));
    }

    #[test]
    fn polya_d1mu_at_zero() {
        // φ(0)(√2 − 1)
        let expected = 0.398_942_280_401_432_7 * 0.414_213_562_373_095;
        let got = polya().d1mu(0.0, &[0.0])[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.165_247).abs() < 1e-6);
    }

    #[test]
    fn kernels_are_symmetric() {
        let mut rng = crate::rng::stream(11, 0);
        for spec in [puri_rubin(), polya()] {
            for _ in 0..100 {
                let a: f64 = rng.random_range(0.0..3.0);
                let b: f64 = rng.random_range(0.0..3.0);
                let t: f64 = rng.random_range(-1.0..4.0);
                let gm: f64 = rng.random_range(0.5..1.5);
                assert_eq!(spec.g(&[a, b], t, &[gm]), spec.g(&[b, a], t, &[gm]));
            }
        }
    }

    #[test]
    fn step_form_matches_kernel_off_breakpoints() {
        let mut rng = crate::rng::stream(12, 0);
        for spec in [puri_rubin(), polya()] {
            let sf = spec.step_form.unwrap();
            for _ in 0..200 {
                let xs = [rng.random_range(0.01..3.0), rng.random_range(0.01..3.0)];
                let t: f64 = rng.random_range(-1.0..5.0);
                let gm = [rng.random_range(0.5..1.5)];
                let v = ind(t > (sf.joint)(&xs, &gm))
                    - 0.5
                        * xs.iter()
                            .map(|x| ind(t > (sf.marginal)(*x, &gm)))
                            .sum::<f64>();
                assert_eq!(v, spec.g(&xs, t, &gm));
            }
        }
    }

    #[test]
    fn pair_integral_matches_numeric() {
        let m = &puri_rubin().measure;
        for &(u, v) in &[(0.0, 0.0), (0.3, 1.7), (2.5, 0.1), (4.0, 4.0)] {
            let exact = m.pair_integral(u, v).unwrap();
            let lo = f64::max(u, v);
            let numeric =
                crate::quadrature::integrate_interval(lo, f64::INFINITY, |t| m.density(t));
            assert!((exact - numeric).abs() < 1e-10, "{u} {v}");
            assert!((exact - (-lo).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn family_round_trip() {
        for spec in [puri_rubin(), polya()] {
            let f = &spec.null_family;
            for params in [
                f.canonical.clone(),
                if spec.id == "polya" {
                    vec![2.0, 3.0]
                } else {
                    vec![5.0]
                },
            ] {
                for k in 1..100 {
                    let u = k as f64 / 100.0;
                    let x = f.quantile(u, &params);
                    assert!((f.cdf(x, &params) - u).abs() < 1e-10);
                }
                let lo = if spec.id == "polya" {
                    f64::NEG_INFINITY
                } else {
                    0.0
                };
                let total = crate::quadrature::integrate_interval(lo, f64::INFINITY, |x| {
                    f.density(x, &params)
                });
                assert!((total - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn closed_second_projection_at_origin() {
        assert!((pr_phi2(0.0, 0.0, &[1.0]) - 1.0 / 18.0).abs() < 1e-15);
    }

    #[test]
    fn estimator_errors() {
        assert!(matches!(
            pr_estimate(&[1.0, -1.0, 2.0]),
            Err(Error::SupportError(_))
        ));
        assert!(matches!(
            polya_estimate(&[5.0, 5.0, 5.0]),
            Err(Error::DegenerateSample)
        ));
        assert_eq!(pr_estimate(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5]);
    }
}
