//! Product quadrature (Gauss-Legendre radial × uniform angular) over the
//! plane disk of radius `R` and over the whole sphere, in chart-0 coordinates.
//!
//! Radial variables are chosen so that `dm` is a constant multiple of the
//! product measure:
//!
//! * plane: `ρ = r²`, `dm = 2 dρ dϑ` on `[0, R²] × [0, 2π)`
//! * sphere: `s = r²/(1+r²)`, `dm = 2 ds dϑ` on `[0, 1] × [0, 2π)`
//!
//! With these, `z̄^a z^b e^{−φ}` becomes `ρ^n e^{−ρ/ħ}` on the plane and the
//! polynomial `s^n (1−s)^{k−n}` on the sphere, so the sphere rule is exact
//! once `2·n_radial > k + degree(f)`.

use std::f64::consts::{PI, TAU};

use crate::error::{check_positive, Error, Result};
use crate::geometry::{ChartId, ChartPoint};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * t * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (t * p1 - p0) / (t * t - 1.0))
}

/// Gauss-Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|wi| wi * h).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub point: ChartPoint,
    /// Weight of `dm` at this node.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadMeta {
    pub n_radial: usize,
    pub n_angular: usize,
    /// Plane disk radius; `None` for the sphere.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<QuadNode>,
    pub meta: QuadMeta,
}

impl QuadRule {
    pub fn integrate<F: FnMut(&ChartPoint) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(&n.point)).sum()
    }
}

fn check_counts(n_radial: usize, n_angular: usize) -> Result<()> {
    if n_radial == 0 || n_angular == 0 {
        return Err(Error::InvalidParameter {
            name: "n_radial/n_angular",
            reason: "quadrature node counts must be positive".into(),
        });
    }
    Ok(())
}

fn product_rule(radii: &[f64], wr: &[f64], n_angular: usize, meta: QuadMeta) -> QuadRule {
    let dth = TAU / n_angular as f64;
    let mut nodes = Vec::with_capacity(radii.len() * n_angular);
    for (&r, &w) in radii.iter().zip(wr) {
        for j in 0..n_angular {
            let th = dth * j as f64;
            nodes.push(QuadNode {
                point: ChartPoint::new(ChartId(0), r * th.cos(), r * th.sin()),
                weight: 2.0 * w * dth,
            });
        }
    }
    QuadRule { nodes, meta }
}

/// Product rule on the whole sphere, nodes in chart 0.
pub fn sphere_rule(n_radial: usize, n_angular: usize) -> Result<QuadRule> {
    check_counts(n_radial, n_angular)?;
    let (s, ws) = gauss_legendre_on(n_radial, 0.0, 1.0);
    let radii: Vec<f64> = s.iter().map(|s| (s / (1.0 - s)).sqrt()).collect();
    let meta = QuadMeta { n_radial, n_angular, cutoff: None };
    Ok(product_rule(&radii, &ws, n_angular, meta))
}

/// Product rule on the disk `|z| ≤ cutoff` of the plane.
pub fn plane_rule(n_radial: usize, n_angular: usize, cutoff: f64) -> Result<QuadRule> {
    check_counts(n_radial, n_angular)?;
    check_positive("cutoff_R", cutoff)?;
    let (rho, w) = gauss_legendre_on(n_radial, 0.0, cutoff * cutoff);
    let radii: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
    let meta = QuadMeta { n_radial, n_angular, cutoff: Some(cutoff) };
    Ok(product_rule(&radii, &w, n_angular, meta))
}

/// `Γ(n+1, x) / n! = e^{−x} Σ_{j≤n} x^j/j!`: the fraction of
/// `∫ |z|^{2n} e^{−|z|²/ħ} dm` lying outside `|z|² = x ħ`.
pub fn plane_tail_fraction(n: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=n {
        term *= x / j as f64;
        sum += term;
    }
    (-x).exp() * sum
}
