//! Model Kähler base manifolds: the flat plane and the round sphere.
//!
//! Both models are complex one-dimensional. Points carry the chart they are
//! expressed in; the plane has the single global chart 0, the sphere has the
//! stereographic charts 0 ("south", projected from the south pole, `z = 0` at
//! the north pole) and 1 ("north", `w = 1/z`).
//!
//! The Riemannian metric is conformal, `g = λ(p)·I` in chart coordinates, and
//! is fixed by the prequantum pinning `λ = 4ħ·∂z∂z̄φ` where `φ` is the Kähler
//! potential of the line bundle. This gives `g = 4·I` on the plane for every
//! `ħ`, and the unit round sphere `4/(1+|z|²)²·I` with `ħ = 1/k`.

use nalgebra::{Matrix2, Vector3};
use num_complex::Complex64;

use crate::error::{check_positive, Error, Result};

/// Points on the sphere are moved to the other chart once `|z|` exceeds this.
/// Together with `1/CHART_SWITCH_RADIUS < 1` this gives the hysteresis band
/// `[1.0, 1.5]`.
pub const CHART_SWITCH_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChartId(pub u8);

impl ChartId {
    pub const PLANE: ChartId = ChartId(0);
    pub const SOUTH: ChartId = ChartId(0);
    pub const NORTH: ChartId = ChartId(1);

    pub fn other(self) -> ChartId {
        ChartId(1 - self.0.min(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub u: [f64; 2],
}

impl ChartPoint {
    pub fn new(chart: ChartId, u1: f64, u2: f64) -> Self {
        Self { chart, u: [u1, u2] }
    }

    pub fn plane(u1: f64, u2: f64) -> Self {
        Self::new(ChartId::PLANE, u1, u2)
    }

    pub fn from_z(chart: ChartId, z: Complex64) -> Self {
        Self::new(chart, z.re, z.im)
    }

    #[inline]
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.u[0], self.u[1])
    }

    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.u[0] * self.u[0] + self.u[1] * self.u[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Plane,
    Sphere,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Plane => "plane",
            ModelKind::Sphere => "sphere",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahlerModel {
    kind: ModelKind,
    hbar: f64,
    k: u32,
    /// Extra factor on the pinned metric. Always 1 except in diagnostics that
    /// deliberately break the prequantum relation.
    metric_scale: f64,
}

impl KahlerModel {
    pub fn plane(hbar: f64) -> Result<Self> {
        check_positive("hbar", hbar)?;
        Ok(Self {
            kind: ModelKind::Plane,
            hbar,
            k: 0,
            metric_scale: 1.0,
        })
    }

    pub fn sphere(k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "bundle level must be at least 1".into(),
            });
        }
        Ok(Self {
            kind: ModelKind::Sphere,
            hbar: 1.0 / k as f64,
            k,
            metric_scale: 1.0,
        })
    }

    /// Returns a copy whose metric is multiplied by `scale`. Such a model no
    /// longer satisfies the prequantum relation; useful to exercise the
    /// residual diagnostic.
    pub fn with_metric_scale(mut self, scale: f64) -> Result<Self> {
        check_positive("metric_scale", scale)?;
        self.metric_scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Bundle level of the sphere model; 0 for the plane.
    pub fn level(&self) -> u32 {
        self.k
    }

    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    /// Real dimension of the base.
    pub fn dim(&self) -> usize {
        2
    }

    /// Radius of the sphere as fixed by the pinning (the unit sphere).
    pub fn sphere_radius(&self) -> f64 {
        self.metric_scale.sqrt()
    }

    pub fn chart_count(&self) -> u8 {
        match self.kind {
            ModelKind::Plane => 1,
            ModelKind::Sphere => 2,
        }
    }

    pub fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.chart.0 < self.chart_count() && p.u[0].is_finite() && p.u[1].is_finite() {
            Ok(())
        } else {
            Err(Error::Domain {
                chart: p.chart,
                u1: p.u[0],
                u2: p.u[1],
            })
        }
    }

    /// Conformal factor `λ(p)` with `g = λ·I`.
    pub fn conformal_factor(&self, p: &ChartPoint) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.conformal_factor_unchecked(p))
    }

    #[inline]
    pub(crate) fn conformal_factor_unchecked(&self, p: &ChartPoint) -> f64 {
        match self.kind {
            ModelKind::Plane => 4.0 * self.metric_scale,
            ModelKind::Sphere => {
                let s = 1.0 + p.norm_sqr();
                4.0 * self.metric_scale / (s * s)
            }
        }
    }

    pub fn metric_at(&self, p: &ChartPoint) -> Result<Matrix2<f64>> {
        let l = self.conformal_factor(p)?;
        Ok(Matrix2::new(l, 0.0, 0.0, l))
    }

    /// Riemannian volume density `√det g` in chart coordinates.
    pub fn volume_density(&self, p: &ChartPoint) -> Result<f64> {
        // det(λI) = λ² for the conformal 2×2 metric
        self.conformal_factor(p)
    }

    pub fn chart_transition(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
        self.check_point(p)?;
        if target.0 >= self.chart_count() {
            return Err(Error::Domain {
                chart: target,
                u1: p.u[0],
                u2: p.u[1],
            });
        }
        if target == p.chart {
            return Ok(*p);
        }
        // Sphere: the holomorphic transition z' = 1/z in both directions.
        let z = p.z();
        if z.norm_sqr() == 0.0 {
            return Err(Error::Singularity { target });
        }
        Ok(ChartPoint::from_z(target, z.inv()))
    }

    /// Real Jacobian of the transition map at `p` (columns: images of ∂/∂u1, ∂/∂u2).
    pub fn transition_jacobian(&self, p: &ChartPoint, target: ChartId) -> Result<Matrix2<f64>> {
        self.check_point(p)?;
        if target == p.chart {
            return Ok(Matrix2::identity());
        }
        if self.kind == ModelKind::Plane {
            return Err(Error::Domain {
                chart: target,
                u1: p.u[0],
                u2: p.u[1],
            });
        }
        let z = p.z();
        if z.norm_sqr() == 0.0 {
            return Err(Error::Singularity { target });
        }
        let a = -(z * z).inv();
        Ok(Matrix2::new(a.re, -a.im, a.im, a.re))
    }

    /// Moves a sphere point into the other chart when it leaves the
    /// well-conditioned disk `|z| ≤ CHART_SWITCH_RADIUS`. Plane points are
    /// returned unchanged.
    pub fn rechart(&self, p: &ChartPoint) -> ChartPoint {
        match self.kind {
            ModelKind::Plane => *p,
            ModelKind::Sphere => {
                if p.norm_sqr() > CHART_SWITCH_RADIUS * CHART_SWITCH_RADIUS {
                    ChartPoint::from_z(p.chart.other(), p.z().inv())
                } else {
                    *p
                }
            }
        }
    }

    /// Chart representation with `|z| ≤ 1` (ties go to chart 0).
    pub fn canonical(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.check_point(p)?;
        match self.kind {
            ModelKind::Plane => Ok(*p),
            ModelKind::Sphere => {
                if p.norm_sqr() > 1.0 || (p.norm_sqr() == 1.0 && p.chart == ChartId::NORTH) {
                    self.chart_transition(p, p.chart.other())
                } else {
                    Ok(*p)
                }
            }
        }
    }

    /// Geodesic distance. Plane: Euclidean in the pinned metric; sphere:
    /// great-circle distance.
    pub fn distance(&self, a: &ChartPoint, b: &ChartPoint) -> Result<f64> {
        self.check_point(a)?;
        self.check_point(b)?;
        match self.kind {
            ModelKind::Plane => {
                let du = [a.u[0] - b.u[0], a.u[1] - b.u[1]];
                Ok(2.0 * self.metric_scale.sqrt() * du[0].hypot(du[1]))
            }
            ModelKind::Sphere => {
                let x = sphere_embed(a);
                let y = sphere_embed(b);
                let angle = x.cross(&y).norm().atan2(x.dot(&y));
                Ok(self.sphere_radius() * angle)
            }
        }
    }
}

/// Unit vector in R³ for a sphere chart point.
pub fn sphere_embed(p: &ChartPoint) -> Vector3<f64> {
    let r2 = p.norm_sqr();
    let s = 1.0 + r2;
    if p.chart == ChartId::SOUTH {
        Vector3::new(2.0 * p.u[0] / s, 2.0 * p.u[1] / s, (1.0 - r2) / s)
    } else {
        Vector3::new(2.0 * p.u[0] / s, -2.0 * p.u[1] / s, (r2 - 1.0) / s)
    }
}

/// Stereographic coordinates of a unit vector in the given chart. Returns
/// `None` at the chart's excluded pole.
pub fn sphere_project(x: &Vector3<f64>, chart: ChartId) -> Option<ChartPoint> {
    if chart == ChartId::SOUTH {
        let d = 1.0 + x.z;
        if d <= 0.0 {
            return None;
        }
        Some(ChartPoint::new(chart, x.x / d, x.y / d))
    } else {
        let d = 1.0 - x.z;
        if d <= 0.0 {
            return None;
        }
        Some(ChartPoint::new(chart, x.x / d, -x.y / d))
    }
}

/// `cos θ` of the polar angle (`θ = 0` at the north pole, chart-0 origin).
pub fn sphere_cos_theta(p: &ChartPoint) -> f64 {
    let r2 = p.norm_sqr();
    let c = (1.0 - r2) / (1.0 + r2);
    if p.chart == ChartId::SOUTH {
        c
    } else {
        -c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plane_metric_is_constant() {
        let m = KahlerModel::plane(1.0).unwrap();
        let g0 = m.metric_at(&ChartPoint::plane(0.0, 0.0)).unwrap();
        let g1 = m.metric_at(&ChartPoint::plane(3.0, -7.5)).unwrap();
        assert_eq!(g0, g1);
        assert_eq!(g0[(0, 1)], 0.0);
        assert!(g0[(0, 0)] > 0.0);
    }

    #[test]
    fn plane_metric_is_independent_of_hbar() {
        // The prequantum pinning scales the curvature and the relation by the
        // same 1/ħ, so the metric itself does not move with ħ.
        let p = ChartPoint::plane(0.4, 0.1);
        let g1 = KahlerModel::plane(1.0).unwrap().metric_at(&p).unwrap();
        let g2 = KahlerModel::plane(2.0).unwrap().metric_at(&p).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn transition_examples() {
        let m = KahlerModel::sphere(1).unwrap();
        let p = m
            .chart_transition(&ChartPoint::new(ChartId::SOUTH, 1.0, 0.0), ChartId::NORTH)
            .unwrap();
        assert_eq!(p.u, [1.0, 0.0]);
        assert_eq!(p.chart, ChartId::NORTH);
        let q = m
            .chart_transition(&ChartPoint::new(ChartId::SOUTH, 2.0, 0.0), ChartId::NORTH)
            .unwrap();
        assert_eq!(q.u, [0.5, 0.0]);
    }

    #[test]
    fn transition_at_excluded_point_fails() {
        let m = KahlerModel::sphere(2).unwrap();
        let err = m
            .chart_transition(&ChartPoint::new(ChartId::SOUTH, 0.0, 0.0), ChartId::NORTH)
            .unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
    }

    #[test]
    fn domain_errors() {
        let plane = KahlerModel::plane(1.0).unwrap();
        assert!(plane
            .metric_at(&ChartPoint::new(ChartId::NORTH, 0.0, 0.0))
            .is_err());
        assert!(plane
            .volume_density(&ChartPoint::plane(f64::NAN, 0.0))
            .is_err());
        assert!(KahlerModel::plane(0.0).is_err());
        assert!(KahlerModel::sphere(0).is_err());
    }

    #[test]
    fn embedding_round_trip_both_charts() {
        for chart in [ChartId::SOUTH, ChartId::NORTH] {
            let p = ChartPoint::new(chart, 0.3, -0.8);
            let x = sphere_embed(&p);
            assert!((x.norm() - 1.0).abs() < 1e-15);
            let q = sphere_project(&x, chart).unwrap();
            assert!((q.u[0] - p.u[0]).abs() < 1e-14 && (q.u[1] - p.u[1]).abs() < 1e-14);
        }
        // the two charts describe the same point under w = 1/z
        let m = KahlerModel::sphere(1).unwrap();
        let p = ChartPoint::new(ChartId::SOUTH, 0.7, 0.9);
        let q = m.chart_transition(&p, ChartId::NORTH).unwrap();
        assert!((sphere_embed(&p) - sphere_embed(&q)).norm() < 1e-15);
        assert!((sphere_cos_theta(&p) - sphere_cos_theta(&q)).abs() < 1e-15);
    }

    #[test]
    fn sphere_total_volume_matches_in_both_charts() {
        // ∫ λ du over the plane of each chart: substitute u = r e^{iα},
        // ∫ 4/(1+r²)² r dr dα = 4π. Midpoint rule in s = r²/(1+r²).
        let m = KahlerModel::sphere(3).unwrap();
        let n = 4000;
        for chart in [ChartId::SOUTH, ChartId::NORTH] {
            let mut total = 0.0;
            for i in 0..n {
                let s = (i as f64 + 0.5) / n as f64;
                let r = (s / (1.0 - s)).sqrt();
                let dens = m.volume_density(&ChartPoint::new(chart, r, 0.0)).unwrap();
                // r dr = ½ ds/(1-s)²
                total += dens * 0.5 / ((1.0 - s) * (1.0 - s)) / n as f64 * 2.0 * std::f64::consts::PI;
            }
            assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-6, "{total}");
        }
    }

    proptest! {
        #[test]
        fn metric_positive_and_density_is_root_det(u1 in -5.0f64..5.0, u2 in -5.0f64..5.0, chart in 0u8..2) {
            let m = KahlerModel::sphere(2).unwrap();
            let p = ChartPoint::new(ChartId(chart), u1, u2);
            let g = m.metric_at(&p).unwrap();
            prop_assert!(g[(0, 0)] > 0.0 && g.determinant() > 0.0);
            prop_assert_eq!(g, g.transpose());
            let d = m.volume_density(&p).unwrap();
            prop_assert!((d - g.determinant().sqrt()).abs() <= 1e-14 * d.max(1.0));
        }

        #[test]
        fn chart_covariance(u1 in 0.2f64..3.0, u2 in -3.0f64..3.0) {
            let m = KahlerModel::sphere(1).unwrap();
            let p = ChartPoint::new(ChartId::SOUTH, u1, u2);
            let q = m.chart_transition(&p, ChartId::NORTH).unwrap();
            let j = m.transition_jacobian(&p, ChartId::NORTH).unwrap();
            let pulled = j.transpose() * m.metric_at(&q).unwrap() * j;
            let g = m.metric_at(&p).unwrap();
            prop_assert!((pulled - g).norm() < 1e-10 * g.norm());
        }

        #[test]
        fn transition_round_trip(u1 in -4.0f64..4.0, u2 in 0.01f64..4.0) {
            let m = KahlerModel::sphere(1).unwrap();
            let p = ChartPoint::new(ChartId::SOUTH, u1, u2);
            let back = m.chart_transition(&m.chart_transition(&p, ChartId::NORTH).unwrap(), ChartId::SOUTH).unwrap();
            prop_assert!((back.u[0] - u1).abs() <= 1e-15 * u1.abs().max(1.0) * 4.0);
            prop_assert!((back.u[1] - u2).abs() <= 1e-15 * u2.abs().max(1.0) * 4.0);
        }

        #[test]
        fn sphere_distance_is_a_metric(a in prop::array::uniform2(-2.0f64..2.0),
                                       b in prop::array::uniform2(-2.0f64..2.0),
                                       c in prop::array::uniform2(-2.0f64..2.0)) {
            let m = KahlerModel::sphere(1).unwrap();
            let (pa, pb, pc) = (ChartPoint::new(ChartId::SOUTH, a[0], a[1]),
                                ChartPoint::new(ChartId::NORTH, b[0], b[1]),
                                ChartPoint::new(ChartId::SOUTH, c[0], c[1]));
            let dab = m.distance(&pa, &pb).unwrap();
            let dba = m.distance(&pb, &pa).unwrap();
            prop_assert!((dab - dba).abs() < 1e-10);
            let dbc = m.distance(&pb, &pc).unwrap();
            let dac = m.distance(&pa, &pc).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-10);
        }
    }
}
