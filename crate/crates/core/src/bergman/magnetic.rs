//! Lattice reference for the finite-`D` kernel on the plane.
//!
//! The operator `H = D∇*∇ + Dρ + f` is discretized in the unitary frame
//! `e = e^{φ/2}s` on the square `[−L, L]²` with Dirichlet boundary. Covariant
//! second differences use fourth-order central stencils along each axis with
//! straight-line parallel transport on every link. The connection of the
//! unitary frame is `∇ = d − (i/ħ)(u1 du2 − u2 du1)`, so the link factor
//! carrying a value from `r'` to `r` is `exp(i(r'₁r₂ − r'₂r₁)/ħ)`.
//!
//! Matrix entries of `e^{−tH}` are obtained by Lanczos from a unit vector at
//! `y`, recording the component at `x` of every Lanczos vector, so memory stays
//! linear in the number of grid nodes. The grid spacing is halved until two
//! levels agree to the requested tolerance; the returned value is the
//! Richardson combination `(16v_h − v_{2h})/15`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::bundle::BundleData;
use crate::error::{check_positive, Error, Result};
use crate::geometry::{ChartPoint, ModelKind};
use crate::symbol::SymbolSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagneticOptions {
    /// Half-width of the box; default `5√ħ + max(|x|, |y|)`.
    pub box_l: Option<f64>,
    /// Intervals across `[−L, L]` on the coarsest level; default gives
    /// spacing `0.2√ħ`.
    pub grid_n: Option<usize>,
    /// Relative agreement required between successive levels.
    pub tol: f64,
    pub max_levels: usize,
    /// Relative tolerance of the Lanczos exponential.
    pub lanczos_tol: f64,
    /// Verify the box size by recomputing the coarsest level on a larger box.
    pub check_box: bool,
}

impl Default for MagneticOptions {
    fn default() -> Self {
        Self { box_l: None, grid_n: None, tol: 1e-4, max_levels: 5, lanczos_tol: 1e-12, check_box: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagneticValue {
    /// Kernel coefficient in the holomorphic frames of `x` and `y`.
    pub value: Complex64,
    /// The same kernel in the unitary frame.
    pub unitary: Complex64,
    /// `|value − finest level|`, an estimate of the remaining grid error.
    pub error_estimate: f64,
    /// `(h, unitary value)` per level.
    pub levels: Vec<(f64, Complex64)>,
    pub box_l: f64,
}

impl MagneticValue {
    pub fn gauge_invariant(&self) -> f64 {
        self.unitary.norm_sqr()
    }
}

struct Lattice {
    h: f64,
    m: i64,
    n: usize,
    hbar: f64,
    diag: Vec<f64>,
    c1: f64,
    c2: f64,
    /// `e^{i h u2/ħ}` per row: link from `r + h e1` to `r`.
    row_phase: Vec<Complex64>,
    /// `e^{−i h u1/ħ}` per column: link from `r + h e2` to `r`.
    col_phase: Vec<Complex64>,
}

impl Lattice {
    fn new(b: &BundleData, d: f64, f: &SymbolSpec, h: f64, l: f64) -> Self {
        let m = (l / h).round() as i64;
        let n = (2 * m + 1) as usize;
        let hbar = b.model.hbar();
        let lambda = b.model.conformal_factor_unchecked(&ChartPoint::plane(0.0, 0.0));
        let s = d / (lambda * h * h);
        let shift = d * b.rho();
        let coord = |i: usize| (i as i64 - m) as f64 * h;
        let mut diag = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                diag.push(s * 5.0 + shift + f.eval(&ChartPoint::plane(coord(i), coord(j))));
            }
        }
        Self {
            h,
            m,
            n,
            hbar,
            diag,
            c1: -s * 16.0 / 12.0,
            c2: s / 12.0,
            row_phase: (0..n).map(|j| Complex64::from_polar(1.0, h * coord(j) / hbar)).collect(),
            col_phase: (0..n).map(|i| Complex64::from_polar(1.0, -h * coord(i) / hbar)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.n * self.n
    }

    fn coord(&self, i: usize) -> f64 {
        (i as i64 - self.m) as f64 * self.h
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Grid indices of `u` if it is a node.
    fn node_of(&self, u: [f64; 2]) -> Option<(usize, usize)> {
        let fi = u[0] / self.h + self.m as f64;
        let fj = u[1] / self.h + self.m as f64;
        let (ri, rj) = (fi.round(), fj.round());
        if (fi - ri).abs() < 1e-9 && (fj - rj).abs() < 1e-9 && ri >= 0.0 && rj >= 0.0 && (ri as usize) < self.n && (rj as usize) < self.n {
            Some((ri as usize, rj as usize))
        } else {
            None
        }
    }

    fn gershgorin(&self) -> f64 {
        let max_diag = self.diag.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        max_diag + 4.0 * (self.c1.abs() + self.c2.abs())
    }

    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        for j in 0..n {
            let rp = self.row_phase[j];
            let rp2 = rp * rp;
            for i in 0..n {
                let k = j * n + i;
                let mut acc = v[k] * self.diag[k];
                let cp = self.col_phase[i];
                let cp2 = cp * cp;
                if i + 1 < n {
                    acc += v[k + 1] * rp * self.c1;
                }
                if i >= 1 {
                    acc += v[k - 1] * rp.conj() * self.c1;
                }
                if i + 2 < n {
                    acc += v[k + 2] * rp2 * self.c2;
                }
                if i >= 2 {
                    acc += v[k - 2] * rp2.conj() * self.c2;
                }
                if j + 1 < n {
                    acc += v[k + n] * cp * self.c1;
                }
                if j >= 1 {
                    acc += v[k - n] * cp.conj() * self.c1;
                }
                if j + 2 < n {
                    acc += v[k + 2 * n] * cp2 * self.c2;
                }
                if j >= 2 {
                    acc += v[k - 2 * n] * cp2.conj() * self.c2;
                }
                out[k] = acc;
            }
        }
    }

    fn dense(&self) -> DMatrix<Complex64> {
        let len = self.len();
        let mut m = DMatrix::zeros(len, len);
        let mut e = vec![Complex64::new(0.0, 0.0); len];
        let mut col = vec![Complex64::new(0.0, 0.0); len];
        for c in 0..len {
            e[c] = Complex64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for r in 0..len {
                m[(r, c)] = col[r];
            }
            e[c] = Complex64::new(0.0, 0.0);
        }
        m
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `⟨e_target, e^{−tH} e_start⟩` for each target index.
fn lanczos_exp(lat: &Lattice, t: f64, start: usize, targets: &[usize], tol: f64) -> Result<Vec<Complex64>> {
    let len = lat.len();
    let mut q = vec![Complex64::new(0.0, 0.0); len];
    let mut q_prev = vec![Complex64::new(0.0, 0.0); len];
    let mut w = vec![Complex64::new(0.0, 0.0); len];
    q[start] = Complex64::new(1.0, 0.0);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut comps: Vec<Vec<Complex64>> = Vec::new();
    let scale = lat.gershgorin();
    let first_check = ((t * scale).sqrt() as usize).max(12);
    let max_iter = 20 * first_check + 200;
    let mut last: Option<Vec<Complex64>> = None;

    for _ in 0..max_iter {
        comps.push(targets.iter().map(|&k| q[k]).collect());
        lat.apply(&q, &mut w);
        if let Some(&b) = beta.last() {
            for (wi, pi) in w.iter_mut().zip(&q_prev) {
                *wi -= pi * b;
            }
        }
        let a = dot(&q, &w).re;
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= qi * a;
        }
        let b = dot(&w, &w).re.sqrt();
        alpha.push(a);
        let breakdown = b <= 1e-13 * scale;
        let m = alpha.len();
        if breakdown || (m >= first_check && (m - first_check).is_multiple_of(16)) {
            let (est, size) = tridiagonal_exp_estimate(&alpha, &beta, t, &comps);
            if breakdown {
                return Ok(est);
            }
            if let Some(prev) = &last {
                // measured against ‖e^{−tH}e_start‖, which bounds every component
                let change = est.iter().zip(prev).fold(0.0f64, |s, (a, c)| s.max((a - c).norm()));
                if change <= tol * size {
                    return Ok(est);
                }
            }
            last = Some(est);
        }
        beta.push(b);
        std::mem::swap(&mut q_prev, &mut q);
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = wi / b;
        }
    }
    Err(Error::Numeric { what: "lanczos_exp", reason: format!("no convergence in {max_iter} iterations") })
}

/// Components of `Q e^{−tT} e₁` at the targets, and `‖e^{−tT} e₁‖`.
fn tridiagonal_exp_estimate(alpha: &[f64], beta: &[f64], t: f64, comps: &[Vec<Complex64>]) -> (Vec<Complex64>, f64) {
    let m = alpha.len();
    let mut tm = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        tm[(i, i)] = alpha[i];
        if i + 1 < m {
            tm[(i, i + 1)] = beta[i];
            tm[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(tm);
    let v = &eig.eigenvectors;
    let ex: Vec<f64> = eig.eigenvalues.iter().map(|l| (-t * l).exp()).collect();
    let y: Vec<f64> = (0..m).map(|j| (0..m).map(|k| v[(j, k)] * ex[k] * v[(0, k)]).sum()).collect();
    let width = comps[0].len();
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    ((0..width).map(|c| (0..m).map(|j| comps[j][c] * y[j]).sum()).collect(), norm)
}

/// 1-d cubic Lagrange stencil `(first index, weights)` around `u`.
fn stencil(lat: &Lattice, u: f64) -> Result<(usize, [f64; 4])> {
    let fu = u / lat.h + lat.m as f64;
    let i0 = fu.floor() as i64 - 1;
    if i0 < 0 || i0 + 3 >= lat.n as i64 {
        return Err(Error::InvalidParameter { name: "x/y", reason: "point too close to the lattice boundary".into() });
    }
    let s = fu - (i0 + 1) as f64; // in [0, 1)
    let xs = [-1.0, 0.0, 1.0, 2.0];
    let mut w = [0.0; 4];
    for a in 0..4 {
        let mut p = 1.0;
        for c in 0..4 {
            if c != a {
                p *= (s - xs[c]) / (xs[a] - xs[c]);
            }
        }
        w[a] = p;
    }
    Ok((i0 as usize, w))
}

/// Interpolation nodes of a point: grid index, weight, and the link phase
/// carrying a value from the node to the point.
fn support(lat: &Lattice, u: [f64; 2]) -> Result<Vec<(usize, f64, Complex64)>> {
    if let Some((i, j)) = lat.node_of(u) {
        return Ok(vec![(lat.index(i, j), 1.0, Complex64::new(1.0, 0.0))]);
    }
    let (i0, wx) = stencil(lat, u[0])?;
    let (j0, wy) = stencil(lat, u[1])?;
    let mut out = Vec::with_capacity(16);
    for (b, wyb) in wy.iter().enumerate() {
        for (a, wxa) in wx.iter().enumerate() {
            let (i, j) = (i0 + a, j0 + b);
            let r = [lat.coord(i), lat.coord(j)];
            let link = Complex64::from_polar(1.0, (r[0] * u[1] - r[1] * u[0]) / lat.hbar);
            out.push((lat.index(i, j), wxa * wyb, link));
        }
    }
    Ok(out)
}

/// Unitary-frame kernel `e^{−tH}(x, y)` on one lattice.
fn lattice_kernel(lat: &Lattice, t: f64, x: [f64; 2], y: [f64; 2], tol: f64) -> Result<Complex64> {
    let sx = support(lat, x)?;
    let sy = support(lat, y)?;
    let targets: Vec<usize> = sx.iter().map(|s| s.0).collect();
    let mut total = Complex64::new(0.0, 0.0);
    for &(kb, wb, link_b) in &sy {
        let col = lanczos_exp(lat, t, kb, &targets, tol)?;
        for (&(_, wa, link_a), v) in sx.iter().zip(&col) {
            // value at y carried to node b is conj(link_b)
            total += v * link_a * link_b.conj() * (wa * wb);
        }
    }
    let lambda = 4.0 * lat.h * lat.h;
    Ok(total / lambda)
}

fn plane_only(b: &BundleData, op: &'static str) -> Result<()> {
    if b.model.kind() != ModelKind::Plane {
        return Err(Error::UnsupportedModel { op, model: b.model.kind().name() });
    }
    Ok(())
}

/// Reference value of the finite-`D` kernel `e^{−t(D∇*∇ + Dρ + f)}(x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn magnetic_oracle_plane(
    b: &BundleData,
    d: f64,
    t: f64,
    x: &ChartPoint,
    y: &ChartPoint,
    f: &SymbolSpec,
    opts: &MagneticOptions,
) -> Result<MagneticValue> {
    plane_only(b, "magnetic_oracle_plane")?;
    f.check_model(&b.model)?;
    check_positive("D", d)?;
    check_positive("t", t)?;
    if b.model.metric_scale() != 1.0 {
        return Err(Error::InvalidParameter { name: "metric_scale", reason: "lattice oracle assumes the pinned metric".into() });
    }
    let sq = b.model.hbar().sqrt();
    let reach = x.norm_sqr().sqrt().max(y.norm_sqr().sqrt());
    let mut l = opts.box_l.unwrap_or(5.0 * sq + reach);
    let grid_n = opts.grid_n.unwrap_or_else(|| ((2.0 * l / (0.2 * sq)).ceil() as usize).max(4));
    let grid_n = grid_n + grid_n % 2;
    let h0 = 2.0 * l / grid_n as f64;
    // snap the box to the grid
    l = h0 * (grid_n / 2) as f64;

    if opts.check_box {
        let inner = lattice_kernel(&Lattice::new(b, d, f, h0, l), t, x.u, y.u, opts.lanczos_tol)?;
        let outer_l = l + h0 * (2.0 * sq / h0).ceil();
        let outer = lattice_kernel(&Lattice::new(b, d, f, h0, outer_l), t, x.u, y.u, opts.lanczos_tol)?;
        let bound = (outer - inner).norm();
        if bound > 0.1 * opts.tol * outer.norm().max(1e-300) {
            return Err(Error::Precision { what: "magnetic_oracle_plane (box)", bound: bound / outer.norm(), tol: 0.1 * opts.tol });
        }
    }

    let mut levels: Vec<(f64, Complex64)> = Vec::new();
    for k in 0..opts.max_levels.max(2) {
        let h = h0 / (1u64 << k) as f64;
        let v = lattice_kernel(&Lattice::new(b, d, f, h, l), t, x.u, y.u, opts.lanczos_tol)?;
        if let Some(&(_, prev)) = levels.last() {
            let diff = (v - prev).norm();
            levels.push((h, v));
            if diff <= opts.tol * v.norm() {
                let unitary = (v * 16.0 - prev) / 15.0;
                let phase = ((b.phi_unchecked(x) + b.phi_unchecked(y)) * 0.5).exp();
                return Ok(MagneticValue {
                    value: unitary * phase,
                    unitary,
                    error_estimate: (unitary - v).norm() * phase,
                    levels,
                    box_l: l,
                });
            }
        } else {
            levels.push((h, v));
        }
    }
    let (last, prev) = (levels[levels.len() - 1].1, levels[levels.len() - 2].1);
    Err(Error::Precision { what: "magnetic_oracle_plane (grid)", bound: (last - prev).norm() / last.norm(), tol: opts.tol })
}

/// `tr e^{−tH}` on a small lattice by full Hermitian eigendecomposition.
pub fn magnetic_grid_trace(b: &BundleData, d: f64, f: &SymbolSpec, h: f64, l: f64, ts: &[f64]) -> Result<Vec<f64>> {
    plane_only(b, "magnetic_grid_trace")?;
    f.check_model(&b.model)?;
    let lat = Lattice::new(b, d, f, h, l);
    if lat.len() > 4096 {
        return Err(Error::InvalidParameter { name: "grid", reason: format!("{} nodes is too many for a dense trace", lat.len()) });
    }
    let eig = SymmetricEigen::new(lat.dense());
    Ok(ts.iter().map(|&t| eig.eigenvalues.iter().map(|l| (-t * l).exp()).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bergman::plane_origin_kernel;
    use crate::geometry::KahlerModel;

    fn plane(hbar: f64) -> BundleData {
        BundleData::new(KahlerModel::plane(hbar).unwrap())
    }

    /// Closed form at the origin for `f = 0`.
    fn mehler_origin(hbar: f64, d: f64, t: f64) -> f64 {
        plane_origin_kernel(hbar) / (1.0 - (-t * d / hbar).exp())
    }

    #[test]
    fn lattice_operator_is_hermitian() {
        let lat = Lattice::new(&plane(1.0), 1.3, &SymbolSpec::abs2(), 0.3, 1.5);
        let m = lat.dense();
        assert!((&m - m.adjoint()).norm() < 1e-12 * m.norm());
    }

    #[test]
    fn lanczos_matches_dense_exponential() {
        let lat = Lattice::new(&plane(1.0), 1.0, &SymbolSpec::abs2(), 0.25, 2.0);
        let eig = SymmetricEigen::new(lat.dense());
        let v = &eig.eigenvectors;
        let (a, c) = (lat.index(3, 5), lat.index(8, 9));
        let exact: Complex64 = (0..lat.len()).map(|k| v[(a, k)] * (-0.4 * eig.eigenvalues[k]).exp() * v[(c, k)].conj()).sum();
        let got = lanczos_exp(&lat, 0.4, c, &[a], 1e-13).unwrap()[0];
        assert!((got - exact).norm() < 1e-11, "{got} vs {exact}");
    }

    #[test]
    fn origin_value_matches_closed_form() {
        let b = plane(1.0);
        let o = ChartPoint::plane(0.0, 0.0);
        let r = magnetic_oracle_plane(&b, 1.0, 0.5, &o, &o, &SymbolSpec::zero(), &MagneticOptions::default()).unwrap();
        let want = mehler_origin(1.0, 1.0, 0.5);
        assert!((r.value.re - want).abs() < 2e-5 * want, "{} vs {want}", r.value.re);
        assert!(r.value.im.abs() < 1e-10 * want);
    }

    #[test]
    fn hermitian_off_grid() {
        let b = plane(1.0);
        let x = ChartPoint::plane(0.31, -0.17);
        let y = ChartPoint::plane(-0.2, 0.45);
        let opts = MagneticOptions { max_levels: 2, tol: 1.0, check_box: false, ..Default::default() };
        let f = SymbolSpec::abs2();
        let a = magnetic_oracle_plane(&b, 2.0, 0.3, &x, &y, &f, &opts).unwrap();
        let c = magnetic_oracle_plane(&b, 2.0, 0.3, &y, &x, &f, &opts).unwrap();
        assert!((a.value - c.value.conj()).norm() < 1e-10 * a.value.norm());
    }

    #[test]
    fn large_d_approaches_reproducing_kernel_off_diagonal() {
        // The frame conventions of the lattice and of the holomorphic kernel
        // must agree away from the diagonal as well.
        let b = plane(1.0);
        let x = ChartPoint::plane(0.4, 0.0);
        let y = ChartPoint::plane(0.0, 0.4);
        let opts = MagneticOptions { max_levels: 3, tol: 1e-3, check_box: false, ..Default::default() };
        let r = magnetic_oracle_plane(&b, 16.0, 1.0, &x, &y, &SymbolSpec::zero(), &opts).unwrap();
        let want = Complex64::new(plane_origin_kernel(1.0), 0.0) * (x.z() * y.z().conj()).exp();
        assert!((r.value - want).norm() < 2e-3 * want.norm(), "{} vs {want}", r.value);
    }

    #[test]
    fn grid_trace_decreases_in_t() {
        let tr = magnetic_grid_trace(&plane(1.0), 1.0, &SymbolSpec::abs2(), 0.25, 2.0, &[0.1, 0.2, 0.4, 0.8]).unwrap();
        assert!(tr.windows(2).all(|w| w[1] < w[0]), "{tr:?}");
    }

    #[test]
    fn rejects_sphere() {
        let b = BundleData::new(KahlerModel::sphere(1).unwrap());
        let o = ChartPoint::plane(0.0, 0.0);
        assert!(magnetic_oracle_plane(&b, 1.0, 1.0, &o, &o, &SymbolSpec::zero(), &MagneticOptions::default()).is_err());
    }
}
