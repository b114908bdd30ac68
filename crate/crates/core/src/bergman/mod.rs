//! Deterministic oracles: Gram matrices of monomial sections, orthonormal
//! bases, reproducing kernels, Toeplitz matrices and their semigroups.
//!
//! Kernels are sesqui-holomorphic coefficients in the frames of `x` and `y`:
//! `K(x,y) = Σ η_a(x) conj(η_a(y))`, so that
//! `ψ(x) = ∫ K(x,y) e^{−φ(y)} ψ(y) dm(y)`. The frame-free combination
//! `|K|² e^{−φ(x)−φ(y)}` is reported alongside.

pub mod heat;
pub mod magnetic;

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::bundle::{BundleData, PolySection};
use crate::error::{Error, Result};
use crate::geometry::{ChartId, ChartPoint, ModelKind};
use crate::quadrature::{plane_rule, plane_tail_fraction, sphere_rule, QuadMeta, QuadRule};
use crate::symbol::SymbolSpec;

/// Largest accepted relative quadrature tail.
pub const TAIL_TOL: f64 = 1e-10;

type CMatrix = DMatrix<Complex64>;

/// Quadrature settings; `None` fields fall back to model defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadratureSpec {
    pub n_radial: Option<usize>,
    pub n_angular: Option<usize>,
    /// Plane cutoff radius in units of `√ħ`.
    pub cutoff_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    pub bundle: BundleData,
    pub n: usize,
    pub quad: QuadratureSpec,
}

impl BasisSpec {
    pub fn new(bundle: BundleData, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter { name: "N", reason: "must be at least 1".into() });
        }
        if bundle.model.kind() == ModelKind::Sphere && n > bundle.model.level() as usize + 1 {
            return Err(Error::InvalidParameter {
                name: "N",
                reason: format!("the sphere at level {0} has only {0} + 1 sections", bundle.model.level()),
            });
        }
        Ok(Self { bundle, n, quad: QuadratureSpec::default() })
    }

    /// The full space of sections on the sphere.
    pub fn sphere_full(bundle: BundleData) -> Result<Self> {
        let n = bundle.model.level() as usize + 1;
        Self::new(bundle, n)
    }

    pub fn with_quadrature(mut self, quad: QuadratureSpec) -> Self {
        self.quad = quad;
        self
    }

    pub fn rule(&self) -> Result<QuadRule> {
        let n = self.n;
        match self.bundle.model.kind() {
            ModelKind::Sphere => {
                let k = self.bundle.model.level() as usize;
                sphere_rule(self.quad.n_radial.unwrap_or(k + 8), self.quad.n_angular.unwrap_or(2 * n + 8))
            }
            ModelKind::Plane => {
                let r = self.quad.cutoff_r.unwrap_or(8.0) * self.bundle.model.hbar().sqrt();
                plane_rule(self.quad.n_radial.unwrap_or(160), self.quad.n_angular.unwrap_or(2 * n + 16), r)
            }
        }
    }

    /// Relative weight lost outside the plane cutoff for `|z|^{2m}` moments.
    fn tail(&self, meta: &QuadMeta, max_power: usize) -> f64 {
        match meta.cutoff {
            None => 0.0,
            Some(r) => {
                let x = r * r / self.bundle.model.hbar();
                (0..=max_power).map(|m| plane_tail_fraction(m, x)).fold(0.0, f64::max)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: CMatrix,
    pub meta: QuadMeta,
    /// Relative tail bound of the plane cutoff (zero on the sphere).
    pub tail_bound: f64,
}

fn monomials(z: Complex64, n: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n);
    let mut p = Complex64::new(1.0, 0.0);
    for _ in 0..n {
        out.push(p);
        p *= z;
    }
    out
}

/// `M_kl = ∫ conj(z^k) w(z) z^l e^{−φ} dm` in chart 0.
fn weighted_moments<F: Fn(&ChartPoint) -> f64>(b: &BundleData, rule: &QuadRule, n: usize, w: F) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for node in &rule.nodes {
        let p = &node.point;
        let c = node.weight * w(p) * (-b.phi_unchecked(p)).exp();
        if c == 0.0 {
            continue;
        }
        let zs = monomials(p.z(), n);
        for k in 0..n {
            let a = zs[k].conj() * c;
            for l in 0..n {
                m[(k, l)] += a * zs[l];
            }
        }
    }
    m
}

pub fn gram_matrix(spec: &BasisSpec) -> Result<GramMatrix> {
    let rule = spec.rule()?;
    let tail_bound = spec.tail(&rule.meta, spec.n - 1);
    if tail_bound > TAIL_TOL {
        return Err(Error::Precision { what: "gram_matrix", bound: tail_bound, tol: TAIL_TOL });
    }
    let matrix = weighted_moments(&spec.bundle, &rule, spec.n, |_| 1.0);
    Ok(GramMatrix { matrix, meta: rule.meta, tail_bound })
}

/// Lower-triangular `L` with `L G Lᴴ = I`.
pub fn orthonormalize(g: &CMatrix) -> Result<CMatrix> {
    let n = g.nrows();
    let not_pd = || Error::Numeric { what: "orthonormalize", reason: "Gram matrix is not Hermitian positive definite".into() };
    if (g - g.adjoint()).norm() > 1e-12 * g.norm() {
        return Err(not_pd());
    }
    let c = Cholesky::new(g.clone()).ok_or_else(not_pd)?.l();
    // complex square roots never fail, so positivity is checked on the factor
    if c.diagonal().iter().any(|d| !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re) {
        return Err(not_pd());
    }
    c.solve_lower_triangular(&CMatrix::identity(n, n)).ok_or_else(|| Error::Numeric {
        what: "orthonormalize",
        reason: "singular Cholesky factor".into(),
    })
}

/// Orthonormal sections `η_a = Σ_b conj(L_ab) z^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    pub spec: BasisSpec,
    pub gram: GramMatrix,
    pub l: CMatrix,
    pub sections: Vec<PolySection>,
}

impl OrthonormalBasis {
    pub fn build(spec: BasisSpec) -> Result<Self> {
        let gram = gram_matrix(&spec)?;
        let l = orthonormalize(&gram.matrix)?;
        let n = spec.n;
        let sections = (0..n)
            .map(|a| PolySection::new(&spec.bundle.model, (0..=a).map(|b| l[(a, b)].conj()).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, gram, l, sections })
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn bundle(&self) -> &BundleData {
        &self.spec.bundle
    }

    /// `η_a` at `p`, in the frame of `p.chart`.
    pub fn eval(&self, p: &ChartPoint) -> Vec<Complex64> {
        self.sections.iter().map(|s| s.coeff(p)).collect()
    }
}

/// A kernel coefficient with its frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: Complex64,
    pub chart_x: ChartId,
    pub chart_y: ChartId,
    /// `|K|² e^{−φ(x)−φ(y)}`.
    pub gauge_invariant: f64,
    /// Bound on the omitted part of the series (zero when exact).
    pub tail_bound: f64,
}

impl KernelValue {
    fn new(b: &BundleData, value: Complex64, x: &ChartPoint, y: &ChartPoint, tail_bound: f64) -> Self {
        let gauge_invariant = value.norm_sqr() * (-b.phi_unchecked(x) - b.phi_unchecked(y)).exp();
        Self { value, chart_x: x.chart, chart_y: y.chart, gauge_invariant, tail_bound }
    }
}

/// Omitted part `Σ_{n≥N} w^n/n!` of the plane kernel series, relative to
/// `e^{w}`, for `w = |z_x||z_y|/ħ`.
fn plane_series_tail(n: usize, w: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    for j in 1..=n {
        term *= w / j as f64;
    }
    let mut sum = 0.0;
    let mut j = n;
    while term > 1e-300 && j < n + 10_000 {
        sum += term;
        j += 1;
        term *= w / j as f64;
        if term < 1e-20 * sum {
            break;
        }
    }
    sum * (-w).exp()
}

pub fn kernel_series(basis: &OrthonormalBasis, x: &ChartPoint, y: &ChartPoint) -> Result<KernelValue> {
    let b = basis.bundle();
    b.model.check_point(x)?;
    b.model.check_point(y)?;
    let ex = basis.eval(x);
    let ey = basis.eval(y);
    let value: Complex64 = ex.iter().zip(&ey).map(|(a, c)| a * c.conj()).sum();
    let tail_bound = match b.model.kind() {
        ModelKind::Sphere => 0.0,
        ModelKind::Plane => plane_series_tail(basis.len(), (x.norm_sqr() * y.norm_sqr()).sqrt() / b.model.hbar()),
    };
    if tail_bound > 1e-8 {
        return Err(Error::Precision { what: "kernel_series", bound: tail_bound, tol: 1e-8 });
    }
    Ok(KernelValue::new(b, value, x, y, tail_bound))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzMatrix {
    /// `t_f(η_a, η_c)` in the orthonormal basis.
    pub matrix: CMatrix,
    pub symbol: String,
    pub tail_bound: f64,
}

impl ToeplitzMatrix {
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// `e^{−tT}` through the Hermitian eigendecomposition.
    pub fn semigroup(&self, t: f64) -> CMatrix {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let v = &eig.eigenvectors;
        let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new((-t * l).exp(), 0.0)));
        v * d * v.adjoint()
    }
}

/// Toeplitz matrix of an arbitrary real weight `f` (evaluated in chart 0).
pub fn toeplitz_matrix_with<F: Fn(&ChartPoint) -> f64>(
    basis: &OrthonormalBasis,
    name: &str,
    extra_power: usize,
    f: F,
) -> Result<ToeplitzMatrix> {
    let rule = basis.spec.rule()?;
    let tail_bound = basis.spec.tail(&rule.meta, basis.len() - 1 + extra_power);
    if tail_bound > TAIL_TOL {
        return Err(Error::Precision { what: "toeplitz_matrix", bound: tail_bound, tol: TAIL_TOL });
    }
    let m = weighted_moments(basis.bundle(), &rule, basis.len(), f);
    let l = &basis.l;
    let mut t = l * m * l.adjoint();
    // symmetrize away rounding
    let th = t.adjoint();
    t = (t + th) * Complex64::new(0.5, 0.0);
    if t.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Precision { what: "toeplitz_matrix", bound: f64::INFINITY, tol: TAIL_TOL });
    }
    Ok(ToeplitzMatrix { matrix: t, symbol: name.to_string(), tail_bound })
}

pub fn toeplitz_matrix(f: &SymbolSpec, basis: &OrthonormalBasis) -> Result<ToeplitzMatrix> {
    f.check_model(&basis.bundle().model)?;
    let extra = match &f.kind {
        crate::symbol::SymbolKind::Abs2 => 1,
        crate::symbol::SymbolKind::Poly(terms) => terms.iter().map(|&(i, j, _)| (i + j).div_ceil(2) as usize).max().unwrap_or(0),
        _ => 0,
    };
    toeplitz_matrix_with(basis, &f.to_string(), extra, |p| f.eval(p))
}

/// Kernel of `e^{−tT_f}`: `Σ η_a(x) [e^{−tT}]_ac conj(η_c(y))`.
pub fn toeplitz_semigroup_kernel(
    t_f: &ToeplitzMatrix,
    basis: &OrthonormalBasis,
    t: f64,
    x: &ChartPoint,
    y: &ChartPoint,
) -> Result<KernelValue> {
    let b = basis.bundle();
    b.model.check_point(x)?;
    b.model.check_point(y)?;
    let e = t_f.semigroup(t);
    let ex = basis.eval(x);
    let ey = basis.eval(y);
    let mut value = Complex64::new(0.0, 0.0);
    for a in 0..basis.len() {
        for c in 0..basis.len() {
            value += ex[a] * e[(a, c)] * ey[c].conj();
        }
    }
    let tail_bound = kernel_series(basis, x, y)?.tail_bound;
    Ok(KernelValue::new(b, value, x, y, tail_bound))
}

/// `1/(4πħ)`: value of the plane reproducing kernel at the origin, as
/// implied by `G_00 = ∫ e^{−|z|²/ħ} dm = 4πħ` under the pinned metric.
pub fn plane_origin_kernel(hbar: f64) -> f64 {
    1.0 / (4.0 * PI * hbar)
}
