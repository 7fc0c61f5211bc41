//! Gauss–Legendre rules on the unit interval and composite variants.
//!
//! Integrals against a probability measure M are taken in the measure's
//! own quantile coordinate: `∫ f(t) dM(t) = ∫₀¹ f(Q_M(u)) du`. Integrands
//! with jumps are handled by placing panel boundaries at `F_M(jump)`.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// A quadrature rule on `[0, 1]` whose weights sum to one.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn gauss_legendre(points: usize) -> Self {
        let points = NonZeroUsize::new(points.max(1)).expect("nonzero");
        let rule = GaussLegendre::new(points);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

/// Nodes and weights of `rule` replicated on every segment between
/// consecutive `bounds` (assumed sorted). Zero-length segments are skipped.
pub fn composite(bounds: &[f64], rule: &UnitRule) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(bounds.len() * rule.len());
    let mut weights = Vec::with_capacity(bounds.len() * rule.len());
    for pair in bounds.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            nodes.push(a + h * x);
            weights.push(w * h);
        }
    }
    (nodes, weights)
}

/// Sorted, deduplicated segment boundaries `0 = b₀ < … < 1`, with every
/// interior point of `cuts` in `(0, 1)` inserted and each piece further
/// split into `panels` equal panels.
pub fn unit_bounds(cuts: &[f64], panels: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = cuts
        .iter()
        .copied()
        .filter(|u| *u > 0.0 && *u < 1.0)
        .collect();
    pts.push(0.0);
    pts.push(1.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let panels = panels.max(1);
    let mut out = Vec::with_capacity(pts.len() * panels);
    for pair in pts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for k in 0..panels {
            out.push(a + (b - a) * k as f64 / panels as f64);
        }
    }
    out.push(1.0);
    out
}

/// Refine the first and last panels of `bounds` geometrically toward 0 and
/// 1, where integrands pulled back through an unbounded quantile function
/// stop being smooth.
pub fn grade_ends(bounds: &[f64], levels: usize) -> Vec<f64> {
    if bounds.len() < 3 || levels == 0 {
        return bounds.to_vec();
    }
    let (lo, hi) = (bounds[1], bounds[bounds.len() - 2]);
    let mut out = vec![0.0];
    for k in (1..=levels).rev() {
        out.push(lo * 0.25f64.powi(k as i32));
    }
    out.extend_from_slice(&bounds[1..bounds.len() - 1]);
    for k in 1..=levels {
        out.push(1.0 - (1.0 - hi) * 0.25f64.powi(k as i32));
    }
    out.push(1.0);
    out
}

/// Integrate a smooth `f` over an interval with possibly infinite
/// endpoints, mapping infinite ranges onto a finite one.
pub fn integrate_interval(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let rule = UnitRule::gauss_legendre(64);
    let panels = 64;
    let over = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        (0..panels)
            .map(|k| {
                let x0 = a + (b - a) * k as f64 / panels as f64;
                let x1 = a + (b - a) * (k + 1) as f64 / panels as f64;
                rule.integrate(x0, x1, g)
            })
            .sum()
    };
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => over(lo, hi, &f),
        // t = lo + s/(1-s)
        (true, false) => over(0.0, 1.0, &|s: f64| {
            let d = 1.0 - s;
            f(lo + s / d) / (d * d)
        }),
        (false, true) => over(0.0, 1.0, &|s: f64| {
            let d = 1.0 - s;
            f(hi - s / d) / (d * d)
        }),
        // t = s/(1-s²)
        (false, false) => over(-1.0, 1.0, &|s: f64| {
            let d = 1.0 - s * s;
            f(s / d) * (1.0 + s * s) / (d * d)
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_rule_weights_sum_to_one() {
        for k in [1, 3, 16, 256] {
            let r = UnitRule::gauss_legendre(k);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-13, "k={k} sum={s}");
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn polynomial_exactness() {
        let r = UnitRule::gauss_legendre(4);
        // degree 7 is exact for a 4-point rule
        let v = r.integrate(0.0, 2.0, |x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-11);
    }

    #[test]
    fn composite_covers_segments() {
        let r = UnitRule::gauss_legendre(3);
        let b = unit_bounds(&[0.25, 0.25, 0.7, 1.3], 2);
        assert_eq!(b.first(), Some(&0.0));
        assert_eq!(b.last(), Some(&1.0));
        let (x, w) = composite(&b, &r);
        assert_eq!(x.len(), 6 * 3);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        // a step at 0.7 is integrated exactly
        let v: f64 = x
            .iter()
            .zip(&w)
            .map(|(&u, &wt)| if u > 0.7 { wt } else { 0.0 })
            .sum();
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn graded_ends_integrate_log_singularity() {
        let b = grade_ends(&unit_bounds(&[], 8), 12);
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        let (x, w) = composite(&b, &UnitRule::gauss_legendre(16));
        let v: f64 = x.iter().zip(&w).map(|(&u, &wt)| wt * u.ln()).sum();
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn infinite_ranges() {
        let e = integrate_interval(0.0, f64::INFINITY, |t| (-t).exp());
        assert!((e - 1.0).abs() < 1e-12);
        let g = integrate_interval(f64::NEG_INFINITY, f64::INFINITY, crate::special::norm_pdf);
        assert!((g - 1.0).abs() < 1e-12);
        let h = integrate_interval(f64::NEG_INFINITY, 0.0, crate::special::norm_pdf);
        assert!((h - 0.5).abs() < 1e-12);
    }
}
