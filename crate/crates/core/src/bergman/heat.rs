//! Heat kernel of `DΔ` on the round sphere as a Legendre series.

use std::f64::consts::PI;

use crate::error::{check_positive, Error, Result};
use crate::geometry::{ChartPoint, KahlerModel, ModelKind};

const MAX_DEGREE: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatValue {
    pub value: f64,
    /// Bound on the omitted terms of the series.
    pub tail_bound: f64,
    pub terms: usize,
}

/// `p_{D,t}(x, y) = Σ_l (2l+1)/(4πr²) e^{−D l(l+1) t/r²} P_l(cos γ)` with
/// `γ = dist(x, y)/r`, summed until the remaining terms are below `tol`
/// relative to the leading term.
pub fn sphere_heat_series(model: &KahlerModel, d: f64, t: f64, x: &ChartPoint, y: &ChartPoint, tol: f64) -> Result<HeatValue> {
    if model.kind() != ModelKind::Sphere {
        return Err(Error::UnsupportedModel { op: "sphere_heat_series", model: model.kind().name() });
    }
    check_positive("D", d)?;
    check_positive("t", t)?;
    let r = model.sphere_radius();
    let c = model.distance(x, y)? / r;
    let cos_g = c.cos();
    let a = d * t / (r * r);
    let norm = 1.0 / (4.0 * PI * r * r);

    let mut sum = 0.0;
    let (mut p_prev, mut p) = (0.0, 1.0);
    for l in 0..MAX_DEGREE {
        let lf = l as f64;
        let w = (2.0 * lf + 1.0) * (-a * lf * (lf + 1.0)).exp();
        sum += w * p;
        // |P_l| ≤ 1, and the weights decay faster than geometrically once
        // past the maximum, so the next weight over (1 − ratio) bounds the tail.
        let ln = lf + 1.0;
        let w_next = (2.0 * ln + 1.0) * (-a * ln * (ln + 1.0)).exp();
        let ratio = w_next / w;
        if ratio < 1.0 {
            let tail = w_next / (1.0 - ratio);
            if tail <= tol {
                return Ok(HeatValue { value: norm * sum, tail_bound: norm * tail, terms: l + 1 });
            }
        }
        let p_next = ((2.0 * lf + 1.0) * cos_g * p - lf * p_prev) / ln;
        p_prev = p;
        p = p_next;
    }
    Err(Error::Precision { what: "sphere_heat_series", bound: f64::INFINITY, tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChartId;
    use crate::quadrature::sphere_rule;

    fn model() -> KahlerModel {
        KahlerModel::sphere(1).unwrap()
    }

    #[test]
    fn integrates_to_one() {
        let m = model();
        let x = ChartPoint::new(ChartId::SOUTH, 0.3, -0.2);
        let q = sphere_rule(60, 80).unwrap();
        for (d, t) in [(1.0, 0.05), (1.0, 0.3), (0.5, 2.0)] {
            let total = q.integrate(|y| sphere_heat_series(&m, d, t, &x, &m.canonical(y).unwrap(), 1e-15).unwrap().value);
            assert!((total - 1.0).abs() < 1e-8, "D={d}, t={t}: {total}");
        }
    }

    #[test]
    fn symmetric_and_equilibrating() {
        let m = model();
        let x = ChartPoint::new(ChartId::SOUTH, 0.3, -0.2);
        let y = ChartPoint::new(ChartId::NORTH, 0.1, 0.7);
        let a = sphere_heat_series(&m, 1.0, 0.2, &x, &y, 1e-15).unwrap().value;
        let b = sphere_heat_series(&m, 1.0, 0.2, &y, &x, 1e-15).unwrap().value;
        assert_eq!(a, b);
        let eq = sphere_heat_series(&m, 1.0, 10.0, &x, &y, 1e-15).unwrap().value;
        assert!((eq - 1.0 / (4.0 * PI)).abs() < 1e-10);
    }

    #[test]
    fn rejects_the_plane() {
        let p = KahlerModel::plane(1.0).unwrap();
        let o = ChartPoint::plane(0.0, 0.0);
        assert!(sphere_heat_series(&p, 1.0, 1.0, &o, &o, 1e-12).is_err());
    }
}
