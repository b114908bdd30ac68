//! Finite-`D` Feynman-Kac estimators, the `D → ∞` extrapolation and Kato
//! class diagnostics.
//!
//! Pointwise kernels use the holomorphic-frame convention of
//! [`crate::bergman`]:
//!
//! `Q_D(t,x,y) = p_{D,t}(x,y) e^{−tDρ} E_{x,y}[e^{−∫f(B)} H^{-1}] e^{φ(y)}`
//!
//! where the expectation runs over Brownian bridges from `x` to `y` and
//! `H^{-1}` is the transport coefficient of [`crate::paths::transport_along`].
//! The constant `e^{−tDρ}` is applied analytically.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::bergman::OrthonormalBasis;
use crate::bundle::BundleData;
use crate::error::{check_positive, Error, Result};
use crate::geometry::{sphere_project, ChartId, ChartPoint, KahlerModel, ModelKind};
use crate::mc::{map_ordered, sample_paths};
use crate::paths::{
    check_rejections, plane_heat_kernel, sample_bridge_plane, sample_brownian, semigroup_apply, transport_along,
    McConfig, PathOptions, TimeGrid,
};
use crate::quadrature::{plane_rule, sphere_rule, QuadRule};
use crate::symbol::SymbolSpec;

/// Default diffusion ladder.
pub const DEFAULT_LADDER: [f64; 4] = [4.0, 8.0, 16.0, 32.0];

/// Relative size of the `O(1/D²)` model error assumed at the smallest `D`
/// of a ladder; see [`dk_extrapolate`].
pub const MODEL_ERROR_SCALE: f64 = 1e-2;

/// Monte Carlo estimate with its discretization metadata.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub stderr: f64,
    pub n_paths: u64,
    pub n_steps: usize,
    pub d: f64,
    pub t: f64,
    /// Frames of `x` and `y` for pointwise kernels.
    pub frames: Option<(ChartId, ChartId)>,
    pub rejected: u64,
}

impl Estimate {
    /// Standard error relative to `|value|`.
    pub fn rel_stderr(&self) -> f64 {
        self.stderr / self.value.norm()
    }
}

/// Streams of the `j`-th member of a family of independent estimates.
pub fn ladder_stream(mc: &McConfig, j: usize) -> McConfig {
    mc.with_offset(mc.stream_offset + ((j as u64) << 40))
}

fn check_time(t: f64) -> Result<()> {
    check_positive("t", t)
}

/// Feynman-Kac kernel `Q_D(t,x,y)` on the plane from exact bridges.
#[allow(clippy::too_many_arguments)]
pub fn finite_d_kernel(
    b: &BundleData,
    f: &SymbolSpec,
    d: f64,
    t: f64,
    x: ChartPoint,
    y: ChartPoint,
    mc: &McConfig,
) -> Result<Estimate> {
    if b.model.kind() != ModelKind::Plane {
        return Err(Error::UnsupportedModel { op: "finite_d_kernel", model: b.model.kind().name() });
    }
    f.check_model(&b.model)?;
    check_positive("D", d)?;
    check_time(t)?;
    let grid = TimeGrid::new(t, mc.n_steps)?;
    let opts = PathOptions { potential: Some(f), record: false };
    let tally = sample_paths(mc.n_paths, 1, |i, out| {
        let Ok(p) = sample_bridge_plane(b, x, y, d, grid, mc.seed_for(i), &opts) else {
            return false;
        };
        if !p.fk_log_weight.is_finite() {
            return false;
        }
        out[0] = transport_along(&p) * p.fk_log_weight.exp();
        true
    });
    check_rejections(tally.rejected, tally.total())?;
    let pre = plane_heat_kernel(&b.model, d, t, &x, &y)? * (-t * d * b.rho()).exp() * b.phi(&y)?.exp();
    let m = &tally.moments[0];
    Ok(Estimate {
        value: m.mean * pre,
        stderr: m.stderr() * pre,
        n_paths: tally.accepted(),
        n_steps: mc.n_steps,
        d,
        t,
        frames: Some((x.chart, y.chart)),
        rejected: tally.rejected,
    })
}

/// Outer quadrature for matrix elements: 10 × 20 nodes on the sphere, a
/// disk of radius `6√ħ` with 24 radial nodes on the plane.
pub fn outer_rule(basis: &OrthonormalBasis) -> Result<QuadRule> {
    let model = &basis.bundle().model;
    match model.kind() {
        ModelKind::Sphere => sphere_rule(10, 20),
        ModelKind::Plane => plane_rule(24, 2 * basis.len() + 8, 6.0 * model.hbar().sqrt()),
    }
}

/// Matrix `(η_a, e^{−tS_D} η_c)` of the finite-`D` semigroup.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub values: DMatrix<Complex64>,
    pub stderr: DMatrix<f64>,
    pub n_nodes: usize,
    /// Accepted paths per quadrature node, summed over nodes.
    pub n_paths: u64,
    pub n_steps: usize,
    pub d: f64,
    pub t: f64,
    pub rejected: u64,
}

impl MatrixEstimate {
    pub fn element(&self, a: usize, c: usize) -> Estimate {
        Estimate {
            value: self.values[(a, c)],
            stderr: self.stderr[(a, c)],
            n_paths: self.n_paths,
            n_steps: self.n_steps,
            d: self.d,
            t: self.t,
            frames: None,
            rejected: self.rejected,
        }
    }
}

/// Columns `cols` of the matrix, as `(values, variances)`. Node `j` draws
/// its paths from streams `j·n_paths ..`, so nodes are independent.
#[allow(clippy::too_many_arguments)]
fn matrix_columns(
    f: &SymbolSpec,
    d: f64,
    t: f64,
    basis: &OrthonormalBasis,
    rule: &QuadRule,
    mc: &McConfig,
    cols: &[usize],
) -> Result<MatrixEstimate> {
    let b = basis.bundle();
    f.check_model(&b.model)?;
    check_positive("D", d)?;
    check_time(t)?;
    let n = basis.len();
    if let Some(&c) = cols.iter().find(|&&c| c >= n) {
        return Err(Error::InvalidParameter { name: "b_idx", reason: format!("{c} is outside a basis of {n}") });
    }
    let sections: Vec<_> = cols.iter().map(|&c| basis.sections[c].clone()).collect();
    let shift = d * b.rho();
    let indexed: Vec<(usize, _)> = rule.nodes.iter().enumerate().collect();
    let per_node = map_ordered(&indexed, |&(j, node)| -> Result<_> {
        let x = b.model.canonical(&node.point)?;
        let node_mc = mc.with_offset(mc.stream_offset + j as u64 * mc.n_paths);
        let s = semigroup_apply(b, f, shift, d, t, &sections, x, &node_mc)?;
        let w = node.weight * (-b.phi(&x)?).exp();
        Ok((w, basis.eval(&x), s))
    });
    let mut values = DMatrix::from_element(n, cols.len(), Complex64::new(0.0, 0.0));
    let mut var = DMatrix::from_element(n, cols.len(), 0.0);
    let (mut n_paths, mut rejected) = (0, 0);
    for r in per_node {
        let (w, eta, s) = r?;
        n_paths += s.n_paths;
        rejected += s.rejected;
        for a in 0..n {
            let c_a = eta[a].conj() * w;
            for k in 0..cols.len() {
                values[(a, k)] += c_a * s.values[k];
                var[(a, k)] += (c_a.norm() * s.stderr[k]).powi(2);
            }
        }
    }
    Ok(MatrixEstimate {
        values,
        stderr: var.map(f64::sqrt),
        n_nodes: rule.nodes.len(),
        n_paths,
        n_steps: mc.n_steps,
        d,
        t,
        rejected,
    })
}

/// All matrix elements at once; every column shares the same paths.
pub fn finite_d_matrix(
    f: &SymbolSpec,
    d: f64,
    t: f64,
    basis: &OrthonormalBasis,
    rule: &QuadRule,
    mc: &McConfig,
) -> Result<MatrixEstimate> {
    let cols: Vec<usize> = (0..basis.len()).collect();
    matrix_columns(f, d, t, basis, rule, mc, &cols)
}

/// `(η_a, e^{−tS_D} η_b)` by outer quadrature over forward paths.
#[allow(clippy::too_many_arguments)]
pub fn finite_d_matrix_element(
    f: &SymbolSpec,
    d: f64,
    t: f64,
    a_idx: usize,
    b_idx: usize,
    basis: &OrthonormalBasis,
    rule: &QuadRule,
    mc: &McConfig,
) -> Result<Estimate> {
    if a_idx >= basis.len() {
        return Err(Error::InvalidParameter {
            name: "a_idx",
            reason: format!("{a_idx} is outside a basis of {}", basis.len()),
        });
    }
    Ok(matrix_columns(f, d, t, basis, rule, mc, &[b_idx])?.element(a_idx, 0))
}

/// One rung of a diffusion ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderPoint {
    pub d: f64,
    pub value: Complex64,
    pub stderr: f64,
}

impl From<&Estimate> for LadderPoint {
    fn from(e: &Estimate) -> Self {
        Self { d: e.d, value: e.value, stderr: e.stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DLadder {
    pub points: Vec<LadderPoint>,
    pub fit: Option<Extrapolation>,
}

impl DLadder {
    /// Checks that `D` is positive and strictly increasing and that every
    /// stderr is finite.
    pub fn new(points: Vec<LadderPoint>) -> Result<Self> {
        for p in &points {
            if !(p.d > 0.0 && p.d.is_finite()) {
                return Err(Error::Extrapolation(format!("D = {} is not a positive number", p.d)));
            }
            if !(p.stderr >= 0.0 && p.stderr.is_finite()) || !p.value.re.is_finite() || !p.value.im.is_finite() {
                return Err(Error::Extrapolation(format!("non-finite value or stderr at D = {}", p.d)));
            }
        }
        if points.windows(2).any(|w| w[1].d <= w[0].d) {
            return Err(Error::Extrapolation("D values must be strictly increasing".into()));
        }
        Ok(Self { points, fit: None })
    }

    pub fn ds(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.d).collect()
    }

    /// Fits and stores the extrapolation.
    pub fn fitted(mut self, target: Option<Complex64>) -> Result<Self> {
        self.fit = Some(dk_extrapolate(&self, target)?);
        Ok(self)
    }
}

/// Result of fitting `a + b/D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    /// `a`, the `D → ∞` limit.
    pub limit: Complex64,
    /// Combined uncertainty of `a` from the Monte Carlo errors and the
    /// assumed model error, inflated by `√(χ²/dof)` when that exceeds 1.
    pub stderr: f64,
    /// `b`.
    pub slope: Complex64,
    /// Largest `|y_i − a − b/D_i|`.
    pub residual: f64,
    pub chi2_per_dof: f64,
    /// False when the real parts step both up and down beyond their joint
    /// 3-stderr bands.
    pub monotone: bool,
    /// `|a − target|` when a target was supplied.
    pub target_deviation: Option<f64>,
    pub warnings: Vec<String>,
}

/// Weighted least-squares fit of `a + b/D` over at least three rungs.
///
/// Point `i` carries variance `σ_i² + s_i²`, where `σ_i` is its Monte Carlo
/// stderr and `s_i = MODEL_ERROR_SCALE·|y_i|·(D_min/D_i)²` stands for the
/// neglected `O(1/D²)` terms. Without `s_i` a noise-free ladder would be
/// fitted with equal weights, letting the least accurate small-`D` rungs
/// dominate.
pub fn dk_extrapolate(ladder: &DLadder, target: Option<Complex64>) -> Result<Extrapolation> {
    let pts = &ladder.points;
    let n = pts.len();
    if n < 3 {
        return Err(Error::Extrapolation(format!("need at least 3 D points, got {n}")));
    }
    let d_min = pts[0].d;
    let raw: Vec<f64> = pts
        .iter()
        .map(|p| p.stderr.powi(2) + (MODEL_ERROR_SCALE * p.value.norm() * (d_min / p.d).powi(2)).powi(2))
        .collect();
    let floor = raw.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = raw
        .iter()
        .map(|&v| if floor.is_infinite() { 1.0 } else { 1.0 / v.max(floor) })
        .collect();

    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut t0 = Complex64::new(0.0, 0.0);
    let mut t1 = Complex64::new(0.0, 0.0);
    for (p, &wi) in pts.iter().zip(&w) {
        let x = 1.0 / p.d;
        s0 += wi;
        s1 += wi * x;
        s2 += wi * x * x;
        t0 += p.value * wi;
        t1 += p.value * (wi * x);
    }
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-12 * s0 * s2) {
        return Err(Error::Extrapolation(format!("ill-conditioned fit (det = {det:e})")));
    }
    let a = (t0 * s2 - t1 * s1) / det;
    let slope = (t1 * s0 - t0 * s1) / det;

    let (mut chi_re, mut chi_im, mut residual) = (0.0f64, 0.0f64, 0.0f64);
    for (p, &wi) in pts.iter().zip(&w) {
        let r = p.value - a - slope / p.d;
        chi_re += wi * r.re * r.re;
        chi_im += wi * r.im * r.im;
        residual = residual.max(r.norm());
    }
    let chi2_per_dof = chi_re.max(chi_im) / (n - 2) as f64;
    let stderr = (s2 / det).sqrt() * chi2_per_dof.sqrt().max(1.0);

    let monotone = is_monotone(pts);
    let mut warnings = Vec::new();
    if !monotone {
        warnings.push("ladder is not monotone in D beyond its noise".to_string());
    }
    Ok(Extrapolation {
        limit: a,
        stderr,
        slope,
        residual,
        chi2_per_dof,
        monotone,
        target_deviation: target.map(|t| (a - t).norm()),
        warnings,
    })
}

fn joint_band(p: &LadderPoint, q: &LadderPoint) -> f64 {
    3.0 * p.stderr.hypot(q.stderr)
}

fn is_monotone(pts: &[LadderPoint]) -> bool {
    let mut up = false;
    let mut down = false;
    for w in pts.windows(2) {
        let step = w[1].value.re - w[0].value.re;
        let band = joint_band(&w[0], &w[1]);
        up |= step > band;
        down |= step < -band;
    }
    !(up && down)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// `(D_i, D_{i+1})` pairs where the diagonal kernel grew.
    pub violations: Vec<(f64, f64)>,
}

/// Diagonal kernels must not increase with `D`. In `strict` mode (noise-free
/// ladders) each rung must be strictly below the previous one; otherwise an
/// increase is tolerated within the joint 3-stderr band.
pub fn monotonicity_check(ladder: &DLadder, strict: bool) -> MonotonicityReport {
    let violations: Vec<(f64, f64)> = ladder
        .points
        .windows(2)
        .filter(|w| {
            let step = w[1].value.re - w[0].value.re;
            if strict {
                step >= 0.0
            } else {
                step > joint_band(&w[0], &w[1])
            }
        })
        .map(|w| (w[0].d, w[1].d))
        .collect();
    MonotonicityReport { pass: violations.is_empty(), violations }
}

/// Plane kernel ladder over `ds`, rung `j` drawing from [`ladder_stream`]
/// `j` with `steps(D)` time steps.
#[allow(clippy::too_many_arguments)]
pub fn kernel_ladder(
    b: &BundleData,
    f: &SymbolSpec,
    t: f64,
    x: ChartPoint,
    y: ChartPoint,
    ds: &[f64],
    mc: &McConfig,
    steps: impl Fn(f64) -> usize,
) -> Result<Vec<Estimate>> {
    ds.iter()
        .enumerate()
        .map(|(j, &d)| {
            let rung = McConfig { n_steps: steps(d), ..ladder_stream(mc, j) };
            finite_d_kernel(b, f, d, t, x, y, &rung)
        })
        .collect()
}

/// Matrix ladder over `ds`; see [`kernel_ladder`].
#[allow(clippy::too_many_arguments)]
pub fn matrix_ladder(
    f: &SymbolSpec,
    t: f64,
    basis: &OrthonormalBasis,
    rule: &QuadRule,
    ds: &[f64],
    mc: &McConfig,
    steps: impl Fn(f64) -> usize,
) -> Result<Vec<MatrixEstimate>> {
    ds.iter()
        .enumerate()
        .map(|(j, &d)| {
            let rung = McConfig { n_steps: steps(d), ..ladder_stream(mc, j) };
            finite_d_matrix(f, d, t, basis, rule, &rung)
        })
        .collect()
}

/// Probe set standing in for the supremum over `x`: rings of radius
/// `{0, 1.5, 3}·√ħ` with 8 angles on the plane, a 32-point Fibonacci
/// lattice on the sphere.
pub fn default_probes(model: &KahlerModel) -> Vec<ChartPoint> {
    match model.kind() {
        ModelKind::Plane => {
            let sq = model.hbar().sqrt();
            let mut out = vec![ChartPoint::plane(0.0, 0.0)];
            for r in [1.5 * sq, 3.0 * sq] {
                for j in 0..8 {
                    let a = std::f64::consts::TAU * j as f64 / 8.0;
                    out.push(ChartPoint::plane(r * a.cos(), r * a.sin()));
                }
            }
            out
        }
        ModelKind::Sphere => {
            let n = 32;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    let e = Vector3::new(r * a.cos(), r * a.sin(), z);
                    let chart = if z <= 0.0 { ChartId::SOUTH } else { ChartId::NORTH };
                    sphere_project(&e, chart).expect("probe lies in its hemisphere chart")
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    /// Largest per-probe mean of `∫₀ᵗ q(B_s) ds`.
    pub kappa: f64,
    pub stderr: f64,
    pub argmax: ChartPoint,
    /// `(x, mean, stderr)` for every probe.
    pub per_probe: Vec<(ChartPoint, f64, f64)>,
}

fn check_nonnegative(q: &SymbolSpec) -> Result<()> {
    if q.is_nonnegative() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "q", reason: format!("{q} is not known to be nonnegative") })
    }
}

/// Mean of `g(∫₀ᵗ q(B_s) ds)` from `x`, with the integral taken by the
/// trapezoid rule on the path nodes.
#[allow(clippy::too_many_arguments)]
fn path_integral_mean(
    b: &BundleData,
    q: &SymbolSpec,
    d: f64,
    t: f64,
    x: ChartPoint,
    mc: &McConfig,
    g: impl Fn(f64) -> f64 + Sync,
) -> Result<(f64, f64)> {
    let grid = TimeGrid::new(t, mc.n_steps)?;
    let opts = PathOptions { potential: Some(q), record: false };
    let tally = sample_paths(mc.n_paths, 1, |i, out| {
        let Ok(p) = sample_brownian(b, x, d, grid, mc.seed_for(i), &opts) else {
            return false;
        };
        let v = g(-p.fk_log_weight);
        out[0] = Complex64::new(v, 0.0);
        v.is_finite()
    });
    check_rejections(tally.rejected, tally.total())?;
    let m = &tally.moments[0];
    Ok((m.mean.re, m.stderr()))
}

/// `κ ≈ max_x E_x ∫₀ᵗ q(B_s) ds` over `probes`, for `q ≥ 0`.
pub fn kato_kappa(
    b: &BundleData,
    q: &SymbolSpec,
    d: f64,
    t: f64,
    probes: &[ChartPoint],
    mc: &McConfig,
) -> Result<KappaEstimate> {
    q.check_model(&b.model)?;
    check_nonnegative(q)?;
    check_time(t)?;
    if probes.is_empty() {
        return Err(Error::InvalidParameter { name: "probes", reason: "empty probe set".into() });
    }
    let mut per_probe = Vec::with_capacity(probes.len());
    for (j, &x) in probes.iter().enumerate() {
        let (m, s) = path_integral_mean(b, q, d, t, x, &ladder_stream(mc, j), |v| v)?;
        per_probe.push((x, m, s));
    }
    let &(argmax, kappa, stderr) = per_probe
        .iter()
        .max_by(|a, c| a.1.total_cmp(&c.1))
        .expect("probe set is not empty");
    Ok(KappaEstimate { kappa, stderr, argmax, per_probe })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KhasminskiiStatus {
    Pass,
    Fail,
    /// `κ ≥ 1`: the bound does not apply.
    HypothesisViolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KhasminskiiReport {
    /// Estimate of `E_x[e^{∫₀ᵗ q(B_s) ds}]`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub kappa: KappaEstimate,
    /// `1/(1−κ)`, absent when `κ ≥ 1`.
    pub bound: Option<f64>,
    pub status: KhasminskiiStatus,
}

/// Compares `E_x[e^{∫q}]` with `1/(1−κ)`; passes iff `lhs ≤ bound + 3·stderr`.
#[allow(clippy::too_many_arguments)]
pub fn khasminskii_check(
    b: &BundleData,
    q: &SymbolSpec,
    d: f64,
    t: f64,
    x: ChartPoint,
    probes: &[ChartPoint],
    mc: &McConfig,
) -> Result<KhasminskiiReport> {
    let kappa = kato_kappa(b, q, d, t, probes, mc)?;
    let (lhs, lhs_stderr) = path_integral_mean(b, q, d, t, x, &ladder_stream(mc, probes.len()), f64::exp)?;
    let (bound, status) = if kappa.kappa >= 1.0 {
        (None, KhasminskiiStatus::HypothesisViolated)
    } else {
        let bound = 1.0 / (1.0 - kappa.kappa);
        let pass = lhs <= bound + 3.0 * lhs_stderr;
        (Some(bound), if pass { KhasminskiiStatus::Pass } else { KhasminskiiStatus::Fail })
    };
    Ok(KhasminskiiReport { lhs, lhs_stderr, kappa, bound, status })
}
