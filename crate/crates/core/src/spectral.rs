//! Nyström discretization of the second-projection operators and their
//! eigenvalues.
//!
//! The operator `q ↦ ∫ φ₂(·, y) q(y) dF(y)` is replaced by the matrix
//! `Bᵢⱼ = φ₂(xᵢ, xⱼ) / N` on the quantile midpoints `xⱼ = F⁻¹((j − ½)/N)`.
//! With equal weights the matrix is symmetric as built.

use crate::error::{Error, Result};
use crate::kernels::{
    KernelContext, projection_prefactor, second_projection, second_projection_star,
};
use crate::model::{CharacterizationSpec, builtin_spec};
use crate::quadrature::{UnitRule, composite, grade_ends, unit_bounds};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_NODES: usize = 16;
pub const DEFAULT_NODES: usize = 1000;
pub const DEFAULT_KEEP: usize = 100;

/// Gauss points per panel of the Gram-route `t` integral.
const GRAM_PANEL_POINTS: usize = 3;
const GRAM_END_GRADING: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelTag {
    /// Estimation-corrected `φ₂*`.
    Star,
    /// Uncorrected `φ₂`.
    Plain,
}

impl std::str::FromStr for KernelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star" => Ok(Self::Star),
            "plain" => Ok(Self::Plain),
            other => Err(Error::Precondition(format!(
                "kernel must be star or plain, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorDiscretization {
    pub spec_id: String,
    pub tag: KernelTag,
    pub coefficient: f64,
    pub nodes: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl OperatorDiscretization {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// `(1/N) Σⱼ φ₂(xⱼ, xⱼ)`, the quadrature of `E φ₂(X, X)`.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Quantile midpoints `F⁻¹((j − ½)/N)`.
pub fn midpoint_nodes(n: usize, quantile: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n)
        .map(|j| quantile((j as f64 + 0.5) / n as f64))
        .collect()
}

fn check_size(n: usize) -> Result<()> {
    if n < MIN_NODES {
        return Err(Error::TooCoarse { n, min: MIN_NODES });
    }
    Ok(())
}

/// Nyström matrix of an arbitrary symmetric kernel on quantile midpoints.
pub fn discretize_kernel(
    spec_id: &str,
    tag: KernelTag,
    coefficient: f64,
    n: usize,
    quantile: impl Fn(f64) -> f64,
    kernel: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<OperatorDiscretization> {
    check_size(n)?;
    let nodes = midpoint_nodes(n, quantile);
    let scale = 1.0 / n as f64;
    // upper triangle rows in parallel, mirrored afterwards
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| scale * kernel(nodes[i], nodes[j])).collect())
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            matrix[(i, i + off)] = v;
            matrix[(i + off, i)] = v;
        }
    }
    Ok(OperatorDiscretization {
        spec_id: spec_id.to_string(),
        tag,
        coefficient,
        nodes,
        matrix,
    })
}

/// Nyström matrix of `φ₂` or `φ₂*` for a spec at parameter `lambda`.
/// Closed-form projections are evaluated directly; otherwise the Gram
/// form is discretized.
pub fn discretize(
    spec: &CharacterizationSpec,
    lambda: &[f64],
    tag: KernelTag,
    n: usize,
) -> Result<OperatorDiscretization> {
    check_size(n)?;
    let closed = spec.phi2_closed().is_some() && (tag == KernelTag::Plain || spec.has_zero_d1mu);
    if !closed {
        return discretize_gram(spec, lambda, tag, n);
    }
    let ctx = KernelContext::new(spec, lambda);
    let params = spec.null_family.canonical.clone();
    let family = &spec.null_family;
    discretize_kernel(
        spec.id,
        tag,
        spec.coefficient(),
        n,
        |u| family.quantile(u, &params),
        |x, y| match tag {
            KernelTag::Star => second_projection_star(&ctx, x, y),
            KernelTag::Plain => second_projection(&ctx, x, y),
        },
    )
}

/// Gram route: `B = m/(2m−1) · H Hᵀ / N` with `Hᵢq = h(xᵢ, t_q) √w_q`,
/// where the `t` rule is composite Gauss–Legendre in the measure's level
/// coordinate with panel edges at every node's jump point.
pub fn discretize_gram(
    spec: &CharacterizationSpec,
    lambda: &[f64],
    tag: KernelTag,
    n: usize,
) -> Result<OperatorDiscretization> {
    check_size(n)?;
    let params = &spec.null_family.canonical;
    let nodes = midpoint_nodes(n, |u| spec.null_family.quantile(u, params));
    let levels: Vec<f64> = nodes
        .iter()
        .filter_map(|&x| spec.g1_jump(x, lambda))
        .map(|t| spec.measure.cdf(t))
        .collect();
    let panels = if levels.is_empty() { n } else { 1 };
    let bounds = grade_ends(&unit_bounds(&levels, panels), GRAM_END_GRADING);
    let (us, ws) = composite(&bounds, &UnitRule::gauss_legendre(GRAM_PANEL_POINTS));
    let ts: Vec<f64> = us.iter().map(|&u| spec.measure.quantile(u)).collect();
    let root_w: Vec<f64> = ws.iter().map(|w| w.sqrt()).collect();

    let corrected = tag == KernelTag::Star && !spec.has_zero_d1mu;
    let m = spec.m as f64;
    let d1: Vec<Vec<f64>> = if corrected {
        ts.iter().map(|&t| spec.d1mu(t, lambda)).collect()
    } else {
        Vec::new()
    };

    let q = ts.len();
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&x| {
            let alpha = spec.estimator.influence(x, lambda);
            (0..q)
                .map(|k| {
                    let mut h = spec.g1(x, ts[k], lambda);
                    if corrected {
                        h += d1[k].iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>() / m;
                    }
                    h * root_w[k]
                })
                .collect()
        })
        .collect();
    let h = DMatrix::from_fn(n, q, |i, k| rows[i][k]);
    let mut matrix = &h * h.transpose();
    matrix *= projection_prefactor(spec.m) / n as f64;
    // the product is symmetric up to rounding; make it exact
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(OperatorDiscretization {
        spec_id: spec.id.to_string(),
        tag,
        coefficient: spec.coefficient(),
        nodes,
        matrix,
    })
}

/// Leading eigenvalues of a discretized operator, with trace bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub spec_id: String,
    pub kernel_tag: KernelTag,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub coefficient: f64,
    pub eigenvalues: Vec<f64>,
    pub trace_estimate: f64,
    pub tail_mass: f64,
}

impl Spectrum {
    pub fn kept_sum(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn to_json(&self) -> String {
        // unwrap: plain numeric struct
        serde_json::to_string_pretty(self).unwrap()
    }

    /// Parse and validate a cached spectrum.
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Spectrum =
            serde_json::from_str(text).map_err(|e| Error::CacheError(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::CacheError(msg.to_string()));
        if self.eigenvalues.len() != self.k || self.k == 0 || self.k > self.n {
            return bad("eigenvalue count does not match K");
        }
        if !self.eigenvalues.iter().all(|v| v.is_finite())
            || !self.trace_estimate.is_finite()
            || !self.tail_mass.is_finite()
            || !self.coefficient.is_finite()
        {
            return bad("non-finite value");
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return bad("eigenvalues are not sorted descending");
        }
        if (self.trace_estimate - self.kept_sum() - self.tail_mass).abs()
            > 1e-9 * self.trace_estimate.abs().max(1.0)
        {
            return bad("tail_mass does not equal trace_estimate minus kept eigenvalues");
        }
        Ok(())
    }
}

/// Top `k` eigenvalues (signed, descending) of the discretization.
pub fn eigenvalues(disc: &OperatorDiscretization, k: usize) -> Result<Spectrum> {
    let n = disc.n();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "K must lie in 1..={n}, got {k}"
        )));
    }
    let eig = SymmetricEigen::try_new(disc.matrix.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigen-solver did not converge".into()))?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure(
            "eigen-solver produced non-finite values".into(),
        ));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(k);
    let trace_estimate = disc.trace();
    let kept: f64 = values.iter().sum();
    Ok(Spectrum {
        spec_id: disc.spec_id.clone(),
        kernel_tag: disc.tag,
        n,
        k,
        coefficient: disc.coefficient,
        eigenvalues: values,
        trace_estimate,
        tail_mass: trace_estimate - kept,
    })
}

#[derive(Debug, Clone)]
pub struct SpectrumPair {
    pub starred: Spectrum,
    pub plain: Spectrum,
}

pub fn spectrum_pair(
    spec: &CharacterizationSpec,
    lambda: &[f64],
    n: usize,
    k: usize,
) -> Result<SpectrumPair> {
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "K must lie in 1..={n}, got {k}"
        )));
    }
    let star = discretize(spec, lambda, KernelTag::Star, n)?;
    let plain = discretize(spec, lambda, KernelTag::Plain, n)?;
    Ok(SpectrumPair {
        starred: eigenvalues(&star, k)?,
        plain: eigenvalues(&plain, k)?,
    })
}

/// Spectrum of a builtin spec at its null parameter.
pub fn builtin_spectrum(name: &str, tag: KernelTag, n: usize, k: usize) -> Result<Spectrum> {
    let spec = builtin_spec(name)?;
    eigenvalues(&discretize(spec, &spec.null_gamma, tag, n)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{polya, puri_rubin};
    use crate::special::norm_quantile;
    use std::f64::consts::PI;

    fn bridge(n: usize) -> OperatorDiscretization {
        discretize_kernel(
            "bridge",
            KernelTag::Plain,
            1.0,
            n,
            |u| u,
            |x, y| x.min(y) - x * y,
        )
        .unwrap()
    }

    #[test]
    fn brownian_bridge_oracle() {
        let s = eigenvalues(&bridge(1000), 5).unwrap();
        for (k, v) in s.eigenvalues.iter().enumerate() {
            let exact = 1.0 / ((k + 1) as f64 * PI).powi(2);
            assert!((v - exact).abs() < 1e-4, "k={k}: {v} vs {exact}");
        }
        // trace of the bridge covariance is ∫ u(1−u) du = 1/6
        assert!((s.trace_estimate - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn rank_one_oracle() {
        let d = discretize_kernel(
            "rank1",
            KernelTag::Plain,
            1.0,
            1000,
            norm_quantile,
            |x, y| x * y,
        )
        .unwrap();
        let s = eigenvalues(&d, 5).unwrap();
        let node_rule: f64 = d.nodes.iter().map(|x| x * x).sum::<f64>() / 1000.0;
        assert!((s.eigenvalues[0] - node_rule).abs() < 1e-12);
        assert!((s.eigenvalues[0] - 1.0).abs() < 2e-3);
        assert!(s.eigenvalues[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn nodes_are_exponential_quantiles() {
        let d = discretize(puri_rubin(), &[1.0], KernelTag::Star, 16).unwrap();
        for (j, x) in d.nodes.iter().enumerate() {
            let u = (2 * j + 1) as f64 / 32.0;
            assert!((x + (1.0 - u).ln()).abs() < 1e-14);
        }
        assert!(d.nodes.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(d.matrix, d.matrix.transpose());
    }

    #[test]
    fn size_errors() {
        assert!(matches!(
            discretize(puri_rubin(), &[1.0], KernelTag::Star, 8),
            Err(Error::TooCoarse { n: 8, .. })
        ));
        let d = bridge(20);
        assert!(matches!(eigenvalues(&d, 21), Err(Error::Precondition(_))));
        assert!(matches!(eigenvalues(&d, 0), Err(Error::Precondition(_))));
        assert!(matches!(
            spectrum_pair(puri_rubin(), &[1.0], 20, 21),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn puri_rubin_spectrum_properties() {
        let pair = spectrum_pair(puri_rubin(), &[1.0], 1000, 100).unwrap();
        let s = &pair.starred;
        assert_eq!(s.eigenvalues.len(), 100);
        let top = s.eigenvalues[0];
        assert!(s.eigenvalues.iter().all(|&v| v >= -1e-8 * top.max(1.0)));
        assert!(s.kept_sum() <= s.trace_estimate + 1e-6);
        assert!((s.kept_sum() / s.trace_estimate - 1.0).abs() < 0.02);
        // E φ₂(X, X) = 1/54 from the closed form
        assert!((s.trace_estimate - 1.0 / 54.0).abs() < 1e-4);
        for (a, b) in s.eigenvalues.iter().zip(&pair.plain.eigenvalues) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn gram_route_matches_closed_form() {
        let spec = puri_rubin();
        let closed = discretize(spec, &[1.0], KernelTag::Star, 200).unwrap();
        let gram = discretize_gram(spec, &[1.0], KernelTag::Star, 200).unwrap();
        let diff = (&closed.matrix - &gram.matrix).amax();
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn polya_correction_changes_operator() {
        let spec = polya();
        let star = discretize(spec, &[0.0], KernelTag::Star, 1000).unwrap();
        let plain = discretize(spec, &[0.0], KernelTag::Plain, 1000).unwrap();
        // compare kernel values, i.e. the matrices without the 1/N weight
        let diff = (&star.matrix - &plain.matrix).amax() * 1000.0;
        assert!(diff > 1e-4, "{diff}");
        let s = eigenvalues(&star, 10).unwrap();
        assert!(
            s.eigenvalues
                .iter()
                .all(|&v| v >= -1e-8 * s.eigenvalues[0].max(1.0))
        );
    }

    #[test]
    fn nystrom_stability() {
        for spec in [puri_rubin(), polya()] {
            let a = eigenvalues(
                &discretize(spec, &spec.null_gamma, KernelTag::Star, 500).unwrap(),
                10,
            )
            .unwrap();
            let b = eigenvalues(
                &discretize(spec, &spec.null_gamma, KernelTag::Star, 1000).unwrap(),
                10,
            )
            .unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!((x - y).abs() / y.abs() < 1e-3, "{}: {x} vs {y}", spec.id);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = eigenvalues(&bridge(50), 5).unwrap();
        let text = s.to_json();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "K",
                "N",
                "coefficient",
                "eigenvalues",
                "kernel_tag",
                "spec_id",
                "tail_mass",
                "trace_estimate"
            ]
        );
        assert_eq!(Spectrum::from_json(&text).unwrap(), s);
        assert!(matches!(
            Spectrum::from_json(&text[..text.len() / 2]),
            Err(Error::CacheError(_))
        ));
    }
}
