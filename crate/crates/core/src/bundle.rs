//! The prequantum Hermitian line bundle over each model.
//!
//! Sections are written in the holomorphic frame `s` of each chart, with
//! `h(s, s) = e^{−φ}`. The compatible (Chern) connection then has the complex
//! coefficient `θ = −∂φ`, i.e. `∇(ψ s) = (dψ + θ ψ) s`, and curvature
//! `R = dθ = ∂∂̄φ`.
//!
//! | model  | chart | `φ`               |
//! |--------|-------|-------------------|
//! | plane  | 0     | `|z|²/ħ`          |
//! | sphere | 0, 1  | `k·log(1+|z|²)`   |
//!
//! On the sphere the frames are related by `s₁ = z^k s₀` (and symmetrically
//! `s₀ = w^k s₁`), so section coefficients transform as `ψ₁ = ψ₀ / z^k`.

use num_complex::Complex64;

use crate::error::Result;
use crate::geometry::{ChartId, ChartPoint, KahlerModel, ModelKind};

/// Coefficient of `dz` in the connection form `θ = −∂φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionCoefficient {
    pub dz: Complex64,
}

impl ConnectionCoefficient {
    /// `θ(X)` for a real tangent vector `X = (X¹, X²)`.
    #[inline]
    pub fn apply(&self, x: [f64; 2]) -> Complex64 {
        self.dz * Complex64::new(x[0], x[1])
    }

    /// Components of `Re θ` on `∂/∂u1`, `∂/∂u2`.
    pub fn real_part(&self) -> [f64; 2] {
        [self.dz.re, -self.dz.im]
    }

    /// Components of `Im θ` on `∂/∂u1`, `∂/∂u2`.
    pub fn imag_part(&self) -> [f64; 2] {
        [self.dz.im, self.dz.re]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleData {
    pub model: KahlerModel,
}

impl BundleData {
    pub fn new(model: KahlerModel) -> Self {
        Self { model }
    }

    /// Kähler potential / weight exponent `φ` in the chart of `p`.
    pub fn phi(&self, p: &ChartPoint) -> Result<f64> {
        self.model.check_point(p)?;
        Ok(self.phi_unchecked(p))
    }

    #[inline]
    pub(crate) fn phi_unchecked(&self, p: &ChartPoint) -> f64 {
        match self.model.kind() {
            ModelKind::Plane => p.norm_sqr() / self.model.hbar(),
            ModelKind::Sphere => self.model.level() as f64 * p.norm_sqr().ln_1p(),
        }
    }

    /// `∂φ/∂z`.
    #[inline]
    pub(crate) fn phi_z(&self, p: &ChartPoint) -> Complex64 {
        let zbar = p.z().conj();
        match self.model.kind() {
            ModelKind::Plane => zbar / self.model.hbar(),
            ModelKind::Sphere => zbar * (self.model.level() as f64 / (1.0 + p.norm_sqr())),
        }
    }

    /// `∂²φ/∂z∂z̄`, evaluated analytically.
    #[inline]
    pub(crate) fn phi_zzbar(&self, p: &ChartPoint) -> f64 {
        match self.model.kind() {
            ModelKind::Plane => 1.0 / self.model.hbar(),
            ModelKind::Sphere => {
                let s = 1.0 + p.norm_sqr();
                self.model.level() as f64 / (s * s)
            }
        }
    }

    /// Real gradient `(∂φ/∂u1, ∂φ/∂u2)`, written out independently of `∂φ`.
    pub fn phi_gradient(&self, p: &ChartPoint) -> Result<[f64; 2]> {
        self.model.check_point(p)?;
        let c = match self.model.kind() {
            ModelKind::Plane => 2.0 / self.model.hbar(),
            ModelKind::Sphere => 2.0 * self.model.level() as f64 / (1.0 + p.norm_sqr()),
        };
        Ok([c * p.u[0], c * p.u[1]])
    }

    /// Hermitian weight `h(s, s) = e^{−φ}` of the chart frame.
    pub fn weight_at(&self, p: &ChartPoint) -> Result<f64> {
        Ok((-self.phi(p)?).exp())
    }

    pub fn connection_at(&self, p: &ChartPoint) -> Result<ConnectionCoefficient> {
        self.model.check_point(p)?;
        Ok(self.connection_unchecked(p))
    }

    #[inline]
    pub(crate) fn connection_unchecked(&self, p: &ChartPoint) -> ConnectionCoefficient {
        ConnectionCoefficient { dz: -self.phi_z(p) }
    }

    /// Curvature `R(∂/∂u1, ∂/∂u2) = −2i ∂z∂z̄φ` (purely imaginary; the
    /// imaginary part is returned).
    pub fn curvature_12(&self, p: &ChartPoint) -> Result<f64> {
        self.model.check_point(p)?;
        Ok(-2.0 * self.phi_zzbar(p))
    }

    /// Weitzenböck term `ρ = R(Z̄, Z)` for the g-orthonormal antiholomorphic
    /// vector `Z̄ = (E + iJE)/√2`.
    pub fn rho_at(&self, p: &ChartPoint) -> Result<f64> {
        let lambda = self.model.conformal_factor(p)?;
        // R(Z̄, Z) = −i R(E, JE) and R(E, JE) = R(∂1, ∂2)/λ = −2i φ_zz̄/λ.
        Ok(-2.0 * self.phi_zzbar(p) / lambda)
    }

    /// The constant `ρ` of the pinned models, read at a reference point.
    pub fn rho(&self) -> f64 {
        let p = ChartPoint::new(ChartId(0), 0.0, 0.0);
        self.rho_at(&p).expect("origin lies in chart 0")
    }

    /// `|R(E, JE) − (i/ħ) ω(E, JE)|` for a g-orthonormal pair `E, JE`, with
    /// `ω = ½ g(·, J·)`. Zero exactly when the metric is prequantum-pinned.
    pub fn prequantum_residual(&self, p: &ChartPoint) -> Result<f64> {
        let lambda = self.model.conformal_factor(p)?;
        let r_e_je = -2.0 * self.phi_zzbar(p) / lambda; // imaginary part
        let omega_e_je = -0.5; // ½ g(E, J·JE) = −½ g(E, E)
        let rhs = omega_e_je / self.model.hbar(); // imaginary part of (i/ħ)ω
        Ok((r_e_je - rhs).abs())
    }

    /// Frame transition `τ` with `s_target = τ · s_source` at `p`. Section
    /// coefficients transform with `1/τ`; weights as
    /// `e^{−φ_target(p')} = |τ|² e^{−φ_source(p)}`.
    pub fn frame_transition(&self, p: &ChartPoint, target: ChartId) -> Result<Complex64> {
        // validates the point and the singular case
        self.model.chart_transition(p, target)?;
        if target == p.chart {
            return Ok(Complex64::new(1.0, 0.0));
        }
        Ok(p.z().powu(self.model.level()))
    }

    /// Re-expresses a section coefficient given at `p` in chart `target`.
    pub fn transform_coefficient(
        &self,
        p: &ChartPoint,
        coeff: Complex64,
        target: ChartId,
    ) -> Result<(ChartPoint, Complex64)> {
        let q = self.model.chart_transition(p, target)?;
        let tau = self.frame_transition(p, target)?;
        Ok((q, coeff / tau))
    }
}

/// Holomorphic section given by its chart-0 coefficient `Σ c_n z^n`.
///
/// On the sphere (level `k`, `n ≤ k`) the chart-1 coefficient is
/// `w^k ψ₀(1/w) = Σ c_n w^{k−n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySection {
    pub coeffs: Vec<Complex64>,
    level: Option<u32>,
}

impl PolySection {
    pub fn new(model: &KahlerModel, coeffs: Vec<Complex64>) -> Result<Self> {
        let level = match model.kind() {
            ModelKind::Plane => None,
            ModelKind::Sphere => {
                let k = model.level();
                if coeffs.len() > k as usize + 1 {
                    return Err(crate::error::Error::InvalidParameter {
                        name: "coeffs",
                        reason: format!("degree {} exceeds level {k}", coeffs.len() - 1),
                    });
                }
                Some(k)
            }
        };
        Ok(Self { coeffs, level })
    }

    pub fn monomial(model: &KahlerModel, n: usize) -> Result<Self> {
        let mut c = vec![Complex64::new(0.0, 0.0); n + 1];
        c[n] = Complex64::new(1.0, 0.0);
        Self::new(model, c)
    }

    /// Coefficient in the frame of `p.chart`.
    #[inline]
    pub fn coeff(&self, p: &ChartPoint) -> Complex64 {
        let z = p.z();
        match (self.level, p.chart) {
            (Some(k), ChartId(1)) => {
                // Horner in w over the reversed, zero-padded coefficient list.
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..=k as usize {
                    acc = acc * z + self.coeffs.get(n).copied().unwrap_or_default();
                }
                acc
            }
            _ => self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(hbar: f64) -> BundleData {
        BundleData::new(KahlerModel::plane(hbar).unwrap())
    }

    fn sphere(k: u32) -> BundleData {
        BundleData::new(KahlerModel::sphere(k).unwrap())
    }

    #[test]
    fn weight_examples() {
        assert_eq!(plane(1.0).weight_at(&ChartPoint::plane(0.0, 0.0)).unwrap(), 1.0);
        let w = sphere(2)
            .weight_at(&ChartPoint::new(ChartId::SOUTH, 1.0, 0.0))
            .unwrap();
        assert!((w - 0.25).abs() < 1e-15);
    }

    #[test]
    fn connection_examples() {
        let b = plane(1.0);
        assert_eq!(b.connection_at(&ChartPoint::plane(0.0, 0.0)).unwrap().dz, Complex64::new(0.0, 0.0));
        let t = b.connection_at(&ChartPoint::plane(1.0, 0.0)).unwrap();
        assert_eq!(t.dz, Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn rho_matches_prequantum_constant() {
        for hbar in [0.5, 1.0, 2.0] {
            let b = plane(hbar);
            for p in [ChartPoint::plane(0.0, 0.0), ChartPoint::plane(2.0, -1.0)] {
                assert!((b.rho_at(&p).unwrap() + 1.0 / (2.0 * hbar)).abs() < 1e-12);
            }
        }
        assert_eq!(plane(1.0).rho(), -0.5);
        assert_eq!(plane(2.0).rho(), -0.25);
    }

    #[test]
    fn sphere_rho_is_constant() {
        for k in [1u32, 2, 4] {
            let b = sphere(k);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..20 {
                for chart in [ChartId::SOUTH, ChartId::NORTH] {
                    let r = 0.1 * i as f64;
                    let p = ChartPoint::new(chart, r * 0.6, -r * 0.8);
                    let rho = b.rho_at(&p).unwrap();
                    lo = lo.min(rho);
                    hi = hi.max(rho);
                }
            }
            assert!(hi - lo < 1e-10);
            assert!((hi + k as f64 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_transition_examples() {
        let b = sphere(2);
        let t1 = b.frame_transition(&ChartPoint::new(ChartId::SOUTH, 1.0, 0.0), ChartId::NORTH).unwrap();
        assert_eq!(t1, Complex64::new(1.0, 0.0));
        let t2 = b.frame_transition(&ChartPoint::new(ChartId::SOUTH, 2.0, 0.0), ChartId::NORTH).unwrap();
        assert_eq!(t2, Complex64::new(4.0, 0.0));
    }

    #[test]
    fn weight_covariance_on_unit_ring() {
        let b = sphere(3);
        for i in 0..64 {
            let a = i as f64 * std::f64::consts::TAU / 64.0;
            let p = ChartPoint::new(ChartId::SOUTH, a.cos(), a.sin());
            let q = b.model.chart_transition(&p, ChartId::NORTH).unwrap();
            let tau = b.frame_transition(&p, ChartId::NORTH).unwrap();
            let lhs = b.weight_at(&q).unwrap();
            let rhs = b.weight_at(&p).unwrap() * tau.norm_sqr();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn mis_scaled_metric_breaks_the_pinning() {
        let m = KahlerModel::plane(1.0).unwrap().with_metric_scale(2.0).unwrap();
        let b = BundleData::new(m);
        let r = b.prequantum_residual(&ChartPoint::plane(0.3, 0.3)).unwrap();
        // R(E, JE) halves, (i/ħ)ω(E, JE) does not: |−¼ + ½| = ¼.
        assert!((r - 0.25).abs() < 1e-15);
        assert!((b.rho() + 0.25).abs() < 1e-15);
    }

    #[test]
    fn sphere_sections_transform_with_the_frame() {
        let b = sphere(3);
        let psi = PolySection::new(
            &b.model,
            vec![Complex64::new(1.0, 0.5), Complex64::new(-2.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.3, 0.0)],
        )
        .unwrap();
        let p = ChartPoint::new(ChartId::SOUTH, 0.8, -1.1);
        let (q, c1) = b.transform_coefficient(&p, psi.coeff(&p), ChartId::NORTH).unwrap();
        assert!((psi.coeff(&q) - c1).norm() < 1e-13);
        assert!(PolySection::monomial(&b.model, 4).is_err());
    }

    proptest! {
        #[test]
        fn compatibility_two_re_theta_is_minus_dphi(u1 in -3.0f64..3.0, u2 in -3.0f64..3.0, sph in any::<bool>(), chart in 0u8..2) {
            let b = if sph { sphere(2) } else { plane(0.7) };
            let p = ChartPoint::new(ChartId(if sph { chart } else { 0 }), u1, u2);
            let re = b.connection_at(&p).unwrap().real_part();
            let g = b.phi_gradient(&p).unwrap();
            prop_assert!((2.0 * re[0] + g[0]).abs() < 1e-13 * g[0].abs().max(1.0));
            prop_assert!((2.0 * re[1] + g[1]).abs() < 1e-13 * g[1].abs().max(1.0));
        }

        #[test]
        fn pinned_residual_vanishes(u1 in -3.0f64..3.0, u2 in -3.0f64..3.0, chart in 0u8..2, k in 1u32..5, hbar in 0.2f64..3.0) {
            let p = ChartPoint::new(ChartId(chart), u1, u2);
            prop_assert!(sphere(k).prequantum_residual(&p).unwrap() < 1e-12);
            let q = ChartPoint::plane(u1, u2);
            prop_assert!(plane(hbar).prequantum_residual(&q).unwrap() < 1e-12);
        }

        #[test]
        fn section_norm_is_chart_independent(u1 in 0.1f64..3.0, u2 in -3.0f64..3.0, re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let b = sphere(4);
            let p = ChartPoint::new(ChartId::SOUTH, u1, u2);
            let c = Complex64::new(re, im);
            let (q, c1) = b.transform_coefficient(&p, c, ChartId::NORTH).unwrap();
            let n0 = c.norm_sqr() * b.weight_at(&p).unwrap();
            let n1 = c1.norm_sqr() * b.weight_at(&q).unwrap();
            prop_assert!((n0 - n1).abs() <= 1e-10 * n0.max(1e-300));
            prop_assert!((b.rho_at(&p).unwrap() - b.rho_at(&q).unwrap()).abs() < 1e-10);
        }
    }
}
