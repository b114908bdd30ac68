//! Brownian motion and Brownian bridges on the models, with stochastic
//! horizontal transport in the holomorphic frame and Feynman-Kac weights.
//!
//! The diffusion has generator `DΔ`: each step adds a tangent Gaussian with
//! variance `2DΔt` along every g-orthonormal direction. On the plane this is
//! a straight step of coordinate variance `2DΔt/λ` (`λ` the conformal factor);
//! on the sphere the tangent vector is pushed through the great-circle
//! exponential map in `R³`.
//!
//! Transport back from `B_t` to `B_0` multiplies the frame `s(B_t)` by
//! `exp ∫θ`. Its modulus is set exactly to `e^{−(φ_end(B_t) − φ_start(B_0))/2}`,
//! and its phase is the midpoint sum of `Im θ(z_mid)·Δz` plus `arg τ` at
//! every chart switch. Chart switches happen at path nodes: when the next
//! point would leave the `|z| ≤ 1.5` window of the current chart, the frame is
//! changed at the current node and the increment is taken in the new chart.

use std::io::{self, Write};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bundle::{BundleData, PolySection};
use crate::error::{check_positive, Error, Result};
use crate::geometry::{
    sphere_embed, sphere_project, ChartId, ChartPoint, KahlerModel, ModelKind, CHART_SWITCH_RADIUS,
};
use crate::mc::{sample_paths, SeedSpec};
use crate::symbol::SymbolSpec;

/// Largest tolerated fraction of rejected paths.
pub const MAX_REJECTION_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        check_positive("t", t_end)?;
        if n_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_steps",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn refined(&self, factor: usize) -> Self {
        Self { t_end: self.t_end, n_steps: self.n_steps * factor.max(1) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathNode {
    pub point: ChartPoint,
    /// Accumulated Feynman-Kac log-weight up to this node.
    pub log_weight: f64,
    /// Accumulated transport phase up to this node.
    pub phase: f64,
}

/// A frame change performed at node `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub step: usize,
    pub from: ChartId,
    pub to: ChartId,
    pub tau: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub start: ChartPoint,
    pub end: ChartPoint,
    pub dt: f64,
    pub n_steps: usize,
    pub log_hol_phase: f64,
    /// `e^{−(φ_end(B_t) − φ_start(B_0))/2}`.
    pub hol_modulus: f64,
    /// `−∫ q(B_r) dr` by the trapezoid rule; zero when no potential was given.
    pub fk_log_weight: f64,
    pub crossings: Vec<Crossing>,
    /// All nodes, only kept when requested.
    pub nodes: Vec<PathNode>,
}

impl PathRecord {
    /// Writes `step,chart,u1,u2,log_weight,phase` rows for a recorded path.
    pub fn write_debug_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,chart,u1,u2,log_weight,phase")?;
        for (i, n) in self.nodes.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                n.point.chart.0, n.point.u[0], n.point.u[1], n.log_weight, n.phase
            )?;
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<ChartPoint> {
        self.nodes.iter().map(|n| n.point).collect()
    }

    /// Keeps every `factor`-th node of a recorded path and recomputes the
    /// functionals on the coarser grid. On the plane a bridge restricted to
    /// a sub-grid is again an exact bridge sample.
    pub fn coarsen(&self, b: &BundleData, q: Option<&SymbolSpec>, factor: usize) -> Result<PathRecord> {
        if self.nodes.is_empty() || factor == 0 || !self.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidParameter {
                name: "factor",
                reason: format!("cannot coarsen a path of {} steps by {factor}", self.n_steps),
            });
        }
        let pts: Vec<ChartPoint> = self.nodes.iter().step_by(factor).map(|n| n.point).collect();
        replay(b, q, &pts, self.dt * factor as f64, true)
    }
}

/// Options shared by the samplers.
#[derive(Debug, Clone, Copy, Default)]
pub struct PathOptions<'a> {
    /// Potential integrated into `fk_log_weight`.
    pub potential: Option<&'a SymbolSpec>,
    /// Keep every node in the record.
    pub record: bool,
}

struct Walk<'a> {
    bundle: &'a BundleData,
    q: Option<&'a SymbolSpec>,
    dt: f64,
    record: bool,
    step: usize,
    start: ChartPoint,
    cur: ChartPoint,
    q_cur: f64,
    phase: f64,
    log_w: f64,
    crossings: Vec<Crossing>,
    nodes: Vec<PathNode>,
}

impl<'a> Walk<'a> {
    fn new(bundle: &'a BundleData, opts: &PathOptions<'a>, dt: f64, start: ChartPoint, capacity: usize) -> Self {
        let q_cur = opts.potential.map_or(0.0, |q| q.eval(&start));
        let mut nodes = Vec::new();
        if opts.record {
            nodes.reserve(capacity + 1);
            nodes.push(PathNode { point: start, log_weight: 0.0, phase: 0.0 });
        }
        Self {
            bundle,
            q: opts.potential,
            dt,
            record: opts.record,
            step: 0,
            start,
            cur: start,
            q_cur,
            phase: 0.0,
            log_w: 0.0,
            crossings: Vec::new(),
            nodes,
        }
    }

    /// Changes the frame at the current node.
    fn switch_chart(&mut self, target: ChartId) -> Result<()> {
        let tau = self.bundle.frame_transition(&self.cur, target)?;
        self.phase += tau.arg();
        self.crossings.push(Crossing { step: self.step, from: self.cur.chart, to: target, tau });
        self.cur = self.bundle.model.chart_transition(&self.cur, target)?;
        Ok(())
    }

    /// Moves to `next`, which must be expressed in the current chart.
    #[inline]
    fn advance(&mut self, next: ChartPoint) {
        debug_assert_eq!(next.chart, self.cur.chart);
        let z0 = self.cur.z();
        let z1 = next.z();
        let mid = ChartPoint::from_z(next.chart, (z0 + z1) * 0.5);
        let theta = self.bundle.connection_unchecked(&mid);
        self.phase += (theta.dz * (z1 - z0)).im;
        if let Some(q) = self.q {
            let q_next = q.eval(&next);
            self.log_w -= 0.5 * (self.q_cur + q_next) * self.dt;
            self.q_cur = q_next;
        }
        self.cur = next;
        self.step += 1;
        if self.record {
            self.nodes.push(PathNode { point: next, log_weight: self.log_w, phase: self.phase });
        }
    }

    fn finish(self) -> PathRecord {
        let phi0 = self.bundle.phi_unchecked(&self.start);
        let phi1 = self.bundle.phi_unchecked(&self.cur);
        PathRecord {
            start: self.start,
            end: self.cur,
            dt: self.dt,
            n_steps: self.step,
            log_hol_phase: self.phase,
            hol_modulus: (-(phi1 - phi0) * 0.5).exp(),
            fk_log_weight: self.log_w,
            crossings: self.crossings,
            nodes: self.nodes,
        }
    }
}

/// Recomputes transport and Feynman-Kac functionals along a node sequence.
/// Consecutive nodes in different charts are joined by switching the frame
/// at the earlier node, as the samplers do.
pub fn replay(
    b: &BundleData,
    q: Option<&SymbolSpec>,
    points: &[ChartPoint],
    dt: f64,
    record: bool,
) -> Result<PathRecord> {
    let (&first, rest) = points.split_first().ok_or(Error::InvalidParameter {
        name: "points",
        reason: "empty path".into(),
    })?;
    b.model.check_point(&first)?;
    let opts = PathOptions { potential: q, record };
    let mut walk = Walk::new(b, &opts, dt, first, rest.len());
    for &p in rest {
        b.model.check_point(&p)?;
        if p.chart != walk.cur.chart {
            walk.switch_chart(p.chart)?;
        }
        walk.advance(p);
    }
    Ok(walk.finish())
}

/// Transport coefficient of `H^{-1}` along the path, in the start frame.
pub fn transport_along(path: &PathRecord) -> Complex64 {
    Complex64::from_polar(path.hol_modulus, path.log_hol_phase)
}

/// Trapezoid log-weight `−Σ ½(q(B_i) + q(B_{i+1}))Δt` along recorded nodes.
/// Returns `None` if `q` is not finite somewhere on the path.
pub fn fk_functional(q: &SymbolSpec, points: &[ChartPoint], dt: f64) -> Option<f64> {
    let vals: Vec<f64> = points.iter().map(|p| q.eval(p)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(-vals.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum::<f64>())
}

/// Standard deviation per coordinate per unit time on the plane.
fn plane_sigma(model: &KahlerModel, d: f64) -> f64 {
    let lambda = model.conformal_factor_unchecked(&ChartPoint::plane(0.0, 0.0));
    (2.0 * d / lambda).sqrt()
}

fn check_diffusion(d: f64) -> Result<()> {
    if d.is_finite() && d >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "D",
            reason: format!("must be finite and nonnegative, got {d}"),
        })
    }
}

/// Brownian motion with generator `DΔ` started at `x`.
pub fn sample_brownian(
    b: &BundleData,
    x: ChartPoint,
    d: f64,
    grid: TimeGrid,
    seed: SeedSpec,
    opts: &PathOptions,
) -> Result<PathRecord> {
    check_diffusion(d)?;
    b.model.check_point(&x)?;
    let mut rng = seed.rng();
    let dt = grid.dt();
    let n = grid.n_steps();
    match b.model.kind() {
        ModelKind::Plane => {
            let s = plane_sigma(&b.model, d) * dt.sqrt();
            let mut walk = Walk::new(b, opts, dt, x, n);
            let mut u = x.u;
            for _ in 0..n {
                let g1: f64 = rng.sample(StandardNormal);
                let g2: f64 = rng.sample(StandardNormal);
                u = [u[0] + s * g1, u[1] + s * g2];
                walk.advance(ChartPoint::plane(u[0], u[1]));
            }
            Ok(walk.finish())
        }
        ModelKind::Sphere => {
            let x = b.model.canonical(&x)?;
            let radius = b.model.sphere_radius();
            let s = (2.0 * d * dt).sqrt() / radius;
            let mut walk = Walk::new(b, opts, dt, x, n);
            let mut e = sphere_embed(&x);
            for _ in 0..n {
                let xi = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                e = great_circle_step(&e, &xi, s);
                sphere_node(&mut walk, &e)?;
            }
            Ok(walk.finish())
        }
    }
}

/// Exponential map of the tangent projection of `s·ξ` at the unit vector `e`.
#[inline]
fn great_circle_step(e: &Vector3<f64>, xi: &Vector3<f64>, s: f64) -> Vector3<f64> {
    let v = (xi - e * xi.dot(e)) * s;
    let a = v.norm();
    if a == 0.0 {
        return *e;
    }
    let next = e * a.cos() + v * (a.sin() / a);
    next / next.norm()
}

/// Appends the unit vector `e` to a sphere walk, switching frames first if
/// `e` lies outside the current chart window.
#[inline]
fn sphere_node(walk: &mut Walk, e: &Vector3<f64>) -> Result<()> {
    let chart = walk.cur.chart;
    match sphere_project(e, chart) {
        Some(p) if p.norm_sqr() <= CHART_SWITCH_RADIUS * CHART_SWITCH_RADIUS => walk.advance(p),
        _ => {
            let other = chart.other();
            walk.switch_chart(other)?;
            let p = sphere_project(e, other).expect("point lies in the window of the other chart");
            walk.advance(p);
        }
    }
    Ok(())
}

/// Exact Gaussian bridge from `x` to `y` on the plane, sampled sequentially.
pub fn sample_bridge_plane(
    b: &BundleData,
    x: ChartPoint,
    y: ChartPoint,
    d: f64,
    grid: TimeGrid,
    seed: SeedSpec,
    opts: &PathOptions,
) -> Result<PathRecord> {
    if b.model.kind() != ModelKind::Plane {
        return Err(Error::UnsupportedModel { op: "sample_bridge_plane", model: b.model.kind().name() });
    }
    check_diffusion(d)?;
    b.model.check_point(&x)?;
    b.model.check_point(&y)?;
    let mut rng = seed.rng();
    let dt = grid.dt();
    let n = grid.n_steps();
    let t = grid.t_end();
    let sigma = plane_sigma(&b.model, d);
    let mut walk = Walk::new(b, opts, dt, x, n);
    let mut u = x.u;
    for i in 0..n - 1 {
        let rem = t - i as f64 * dt;
        let f = dt / rem;
        let s = sigma * (dt * (rem - dt) / rem).sqrt();
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        u = [u[0] + (y.u[0] - u[0]) * f + s * g1, u[1] + (y.u[1] - u[1]) * f + s * g2];
        walk.advance(ChartPoint::plane(u[0], u[1]));
    }
    walk.advance(y);
    Ok(walk.finish())
}

/// Plane heat kernel of `DΔ` with respect to `m`.
pub fn plane_heat_kernel(model: &KahlerModel, d: f64, t: f64, x: &ChartPoint, y: &ChartPoint) -> Result<f64> {
    let dist = model.distance(x, y)?;
    Ok((-dist * dist / (4.0 * d * t)).exp() / (4.0 * std::f64::consts::PI * d * t))
}

/// Monte Carlo configuration shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_paths: u64,
    pub n_steps: usize,
    pub seed: u64,
    /// Offset added to every path index, so that independent estimates drawn
    /// from one master seed use disjoint streams.
    pub stream_offset: u64,
}

impl McConfig {
    pub fn new(n_paths: u64, n_steps: usize, seed: u64) -> Self {
        Self { n_paths, n_steps, seed, stream_offset: 0 }
    }

    pub fn with_offset(self, stream_offset: u64) -> Self {
        Self { stream_offset, ..self }
    }

    pub(crate) fn seed_for(&self, i: u64) -> SeedSpec {
        SeedSpec::new(self.seed, self.stream_offset + i)
    }
}

/// Monte Carlo values of `e^{−tS}ψ_j(x)` for several sections at one start
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupSample {
    pub values: Vec<Complex64>,
    pub stderr: Vec<f64>,
    pub n_paths: u64,
    pub rejected: u64,
}

pub(crate) fn check_rejections(rejected: u64, total: u64) -> Result<()> {
    if total > 0 && rejected as f64 > MAX_REJECTION_RATE * total as f64 {
        Err(Error::Rejection { rejected, total })
    } else {
        Ok(())
    }
}

/// `E_x[e^{−∫f(B)} e^{−t·shift} H^{-1}ψ(B_t)]` for each section `ψ`, the
/// coefficient being returned in the frame of `x`. The constant `shift`
/// (typically `Dρ`) is applied analytically.
#[allow(clippy::too_many_arguments)]
pub fn semigroup_apply(
    b: &BundleData,
    f: &SymbolSpec,
    shift: f64,
    d: f64,
    t: f64,
    sections: &[PolySection],
    x: ChartPoint,
    mc: &McConfig,
) -> Result<SemigroupSample> {
    f.check_model(&b.model)?;
    let grid = TimeGrid::new(t, mc.n_steps)?;
    let x = match b.model.kind() {
        ModelKind::Sphere => b.model.canonical(&x)?,
        ModelKind::Plane => x,
    };
    check_diffusion(d)?;
    let opts = PathOptions { potential: Some(f), record: false };
    let tally = sample_paths(mc.n_paths, sections.len(), |i, out| {
        let Ok(path) = sample_brownian(b, x, d, grid, mc.seed_for(i), &opts) else {
            return false;
        };
        if !path.fk_log_weight.is_finite() {
            return false;
        }
        let c = transport_along(&path) * path.fk_log_weight.exp();
        for (o, s) in out.iter_mut().zip(sections) {
            *o = c * s.coeff(&path.end);
        }
        true
    });
    check_rejections(tally.rejected, tally.total())?;
    let pre = (-t * shift).exp();
    Ok(SemigroupSample {
        values: tally.moments.iter().map(|m| m.mean * pre).collect(),
        stderr: tally.moments.iter().map(|m| m.stderr() * pre).collect(),
        n_paths: tally.accepted(),
        rejected: tally.rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::ComplexMoments;

    fn plane(hbar: f64) -> BundleData {
        BundleData::new(KahlerModel::plane(hbar).unwrap())
    }

    fn sphere(k: u32) -> BundleData {
        BundleData::new(KahlerModel::sphere(k).unwrap())
    }

    #[test]
    fn zero_diffusion_gives_constant_path() {
        let b = sphere(2);
        let x = ChartPoint::new(ChartId::SOUTH, 0.3, 0.4);
        let opts = PathOptions { potential: None, record: true };
        let p = sample_brownian(&b, x, 0.0, TimeGrid::new(1.0, 50).unwrap(), SeedSpec::new(1, 0), &opts).unwrap();
        assert!(p.nodes.iter().all(|n| (n.point.z() - x.z()).norm() < 1e-15));
        assert!((transport_along(&p) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let q = sample_brownian(&plane(1.0), x, 0.0, TimeGrid::new(1.0, 5).unwrap(), SeedSpec::new(1, 0), &opts)
            .unwrap();
        assert_eq!(transport_along(&q), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn unit_square_loop_phase_is_minus_twice_area_over_hbar() {
        // ω-area of the unit coordinate square is 2 (λ/2 per unit coordinate area).
        for hbar in [0.5, 1.0, 2.0] {
            let b = plane(hbar);
            let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]
                .map(|(a, c)| ChartPoint::plane(a, c));
            let r = replay(&b, None, &pts, 0.1, false).unwrap();
            assert!((r.log_hol_phase + 2.0 / hbar).abs() < 1e-14);
            assert!((r.hol_modulus - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn refined_loop_phase_matches_stokes() {
        let b = plane(1.0);
        let pts: Vec<ChartPoint> = (0..=1000)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 1000.0;
                ChartPoint::plane(1.0 + 0.5 * a.cos(), 0.5 * a.sin())
            })
            .collect();
        let r = replay(&b, None, &pts, 1e-3, false).unwrap();
        // polygon inscribed in the circle of radius 1/2
        let area = 0.5 * 1000.0 * 0.25 * (std::f64::consts::TAU / 1000.0).sin();
        assert!((r.log_hol_phase + 2.0 * area).abs() < 1e-10);
    }

    #[test]
    fn modulus_rule_is_exact() {
        let b = sphere(3);
        let opts = PathOptions { potential: None, record: false };
        for i in 0..50 {
            let x = ChartPoint::new(ChartId::SOUTH, 0.9, -0.2);
            let p = sample_brownian(&b, x, 2.0, TimeGrid::new(1.0, 200).unwrap(), SeedSpec::new(3, i), &opts).unwrap();
            // ‖H^{-1}s(B_t)‖_h = ‖s(B_t)‖_h
            let lhs = transport_along(&p).norm() * (-b.phi(&p.start).unwrap() / 2.0).exp();
            let rhs = (-b.phi(&p.end).unwrap() / 2.0).exp();
            assert!((lhs - rhs).abs() <= 1e-14 * rhs);
        }
    }

    #[test]
    fn sphere_paths_switch_charts_and_stay_in_window() {
        let b = sphere(2);
        let opts = PathOptions { potential: None, record: true };
        let x = ChartPoint::new(ChartId::SOUTH, 0.0, 0.0);
        let p = sample_brownian(&b, x, 1.0, TimeGrid::new(2.0, 2000).unwrap(), SeedSpec::new(5, 0), &opts).unwrap();
        assert!(!p.crossings.is_empty());
        assert!(p.nodes.iter().all(|n| n.point.norm_sqr() <= 1.5 * 1.5 + 1e-12));
        // replaying the node list reproduces the streamed functionals
        let r = replay(&b, None, &p.points(), p.dt, false).unwrap();
        assert_eq!(r.log_hol_phase, p.log_hol_phase);
        assert_eq!(r.hol_modulus, p.hol_modulus);
    }

    #[test]
    fn crossing_phase_is_gauge_consistent() {
        // The same geometric polyline walked in chart 0 only, or switching to
        // chart 1 midway, gives the same transport coefficient once both are
        // referred to the same end frame.
        let b = sphere(3);
        let pts0: Vec<ChartPoint> =
            (0..=400).map(|i| ChartPoint::new(ChartId::SOUTH, 0.2 + 0.003 * i as f64, 0.001 * i as f64)).collect();
        let a = replay(&b, None, &pts0, 0.01, false).unwrap();
        let mut pts1 = pts0.clone();
        for p in pts1.iter_mut().skip(300) {
            *p = b.model.chart_transition(p, ChartId::NORTH).unwrap();
        }
        let c = replay(&b, None, &pts1, 0.01, false).unwrap();
        assert_eq!(c.crossings.len(), 1);
        let end0 = *pts0.last().unwrap();
        let tau = b.frame_transition(&end0, ChartId::NORTH).unwrap();
        // coefficient in chart 1 frame: H^{-1}s₁ = τ H^{-1}s₀
        let lhs = transport_along(&c);
        let rhs = transport_along(&a) * tau;
        assert!((lhs - rhs).norm() < 1e-5 * rhs.norm(), "{lhs} vs {rhs}");
    }

    #[test]
    fn fk_functional_constant_and_zero() {
        let pts: Vec<ChartPoint> = (0..11).map(|i| ChartPoint::plane(i as f64, 0.0)).collect();
        assert_eq!(fk_functional(&SymbolSpec::zero(), &pts, 0.1), Some(0.0));
        let w = fk_functional(&SymbolSpec::constant(2.5), &pts, 0.1).unwrap();
        assert!((w + 2.5).abs() < 1e-14);
    }

    #[test]
    fn fk_functional_matches_refined_quadrature() {
        let pts: Vec<ChartPoint> = [(0.0, 0.0), (1.0, 0.5), (0.2, -0.7), (1.5, 1.5)]
            .map(|(a, c)| ChartPoint::plane(a, c))
            .to_vec();
        let dt = 0.25;
        // exact integral of |z|² along each linear segment
        let exact: f64 = pts
            .windows(2)
            .map(|w| {
                let (a, c) = (w[0].z(), w[1].z());
                let d = c - a;
                dt * (a.norm_sqr() + (a.conj() * d).re + d.norm_sqr() / 3.0)
            })
            .sum();
        let fine: Vec<ChartPoint> = pts
            .windows(2)
            .flat_map(|w| {
                (0..4000).map(move |j| {
                    let s = j as f64 / 4000.0;
                    ChartPoint::from_z(ChartId(0), w[0].z() * (1.0 - s) + w[1].z() * s)
                })
            })
            .chain(std::iter::once(pts[3]))
            .collect();
        let got = -fk_functional(&SymbolSpec::abs2(), &fine, dt / 4000.0).unwrap();
        // trapezoid error is O(h²); extrapolate two refinements
        let half: Vec<ChartPoint> = fine.iter().step_by(2).copied().collect();
        let got2 = -fk_functional(&SymbolSpec::abs2(), &half, dt / 2000.0).unwrap();
        let rich = (4.0 * got - got2) / 3.0;
        assert!((rich - exact).abs() < 1e-8);
    }

    #[test]
    fn bridge_hits_both_endpoints() {
        let b = plane(1.0);
        let x = ChartPoint::plane(0.3, -1.0);
        let y = ChartPoint::plane(2.0, 0.5);
        let opts = PathOptions { potential: None, record: true };
        let p = sample_bridge_plane(&b, x, y, 3.0, TimeGrid::new(1.0, 10).unwrap(), SeedSpec::new(0, 0), &opts).unwrap();
        assert_eq!(p.nodes[0].point, x);
        assert_eq!(p.nodes.last().unwrap().point, y);
        assert!(sample_bridge_plane(&sphere(1), x, y, 1.0, TimeGrid::new(1.0, 10).unwrap(), SeedSpec::new(0, 0), &opts)
            .is_err());
    }

    #[test]
    fn bridge_midpoint_statistics() {
        let b = plane(1.0);
        let d = 1.5;
        let x = ChartPoint::plane(0.0, 0.0);
        let y = ChartPoint::plane(2.0, 0.0);
        let opts = PathOptions { potential: None, record: true };
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let n = 100_000;
        let (mut m1, mut m2) = (ComplexMoments::default(), ComplexMoments::default());
        let mut sq = ComplexMoments::default();
        for i in 0..n {
            let p = sample_bridge_plane(&b, x, y, d, grid, SeedSpec::new(11, i), &opts).unwrap();
            let u = p.nodes[5].point.u;
            m1.push(Complex64::new(u[0], 0.0));
            m2.push(Complex64::new(u[1], 0.0));
            sq.push(Complex64::new((u[0] - 1.0).powi(2), 0.0));
        }
        assert!((m1.mean.re - 1.0).abs() < 3.0 * m1.stderr());
        assert!(m2.mean.re.abs() < 3.0 * m2.stderr());
        // per orthonormal direction: 2D·s(t−s)/t = 2D/4; u-coordinates scale by 1/λ = 1/4
        let want = 2.0 * d / 4.0 / 4.0;
        assert!((sq.mean.re - want).abs() < 3.0 * sq.stderr(), "{} vs {want}", sq.mean.re);
    }

    #[test]
    fn plane_brownian_variance() {
        let b = plane(1.0);
        let d = 0.7;
        let t = 0.6;
        let grid = TimeGrid::new(t, 6).unwrap();
        let opts = PathOptions::default();
        let mut m = ComplexMoments::default();
        for i in 0..100_000 {
            let p = sample_brownian(&b, ChartPoint::plane(0.0, 0.0), d, grid, SeedSpec::new(2, i), &opts).unwrap();
            // orthonormal coordinate X = 2u
            let x1 = 2.0 * p.end.u[0];
            m.push(Complex64::new(x1 * x1, 0.0));
        }
        assert!((m.mean.re - 2.0 * d * t).abs() < 3.0 * m.stderr());
    }

    #[test]
    fn sphere_mean_cosine_distance() {
        // E[cos dist(x, B_t)] = e^{−2Dt} on the unit sphere (first harmonic).
        let b = sphere(1);
        let d = 1.0;
        let t = 0.2;
        let grid = TimeGrid::new(t, 200).unwrap();
        let x = ChartPoint::new(ChartId::SOUTH, 0.4, 0.2);
        let ex = sphere_embed(&x);
        let opts = PathOptions::default();
        let mut m = ComplexMoments::default();
        for i in 0..20_000 {
            let p = sample_brownian(&b, x, d, grid, SeedSpec::new(4, i), &opts).unwrap();
            m.push(Complex64::new(sphere_embed(&p.end).dot(&ex), 0.0));
        }
        let want = (-2.0 * d * t).exp();
        assert!((m.mean.re - want).abs() < 3.0 * m.stderr(), "{} vs {want}", m.mean.re);
    }

    #[test]
    fn lowest_level_section_is_invariant() {
        // ψ = 1 lies in the lowest Landau level: e^{tDΔ}ψ = e^{−tD/(2ħ)}ψ, and
        // the Dρ shift undoes the decay.
        let b = plane(1.0);
        let d = 1.0;
        let t = 0.5;
        let psi = PolySection::monomial(&b.model, 0).unwrap();
        let x = ChartPoint::plane(0.3, 0.1);
        let mc = McConfig::new(40_000, 100, 8);
        let r = semigroup_apply(&b, &SymbolSpec::zero(), d * b.rho(), d, t, &[psi], x, &mc).unwrap();
        assert!((r.values[0] - Complex64::new(1.0, 0.0)).norm() < 3.0 * r.stderr[0], "{:?}", r);
    }

    #[test]
    fn constant_potential_factorizes_exactly() {
        let b = plane(1.0);
        let psi = [PolySection::monomial(&b.model, 1).unwrap()];
        let x = ChartPoint::plane(0.5, 0.0);
        let mc = McConfig::new(2_000, 40, 3);
        let f = SymbolSpec::abs2();
        let a = semigroup_apply(&b, &f, 0.0, 1.0, 0.5, &psi, x, &mc).unwrap();
        let c = semigroup_apply(&b, &f.plus(0.8), 0.0, 1.0, 0.5, &psi, x, &mc).unwrap();
        let want = a.values[0] * (-0.8f64 * 0.5).exp();
        assert!((c.values[0] - want).norm() < 1e-13 * want.norm());
    }

    #[test]
    fn debug_dump_has_one_row_per_node() {
        let b = sphere(1);
        let opts = PathOptions { potential: Some(&SymbolSpec::cos_theta()), record: true };
        let p = sample_brownian(&b, ChartPoint::new(ChartId::SOUTH, 0.0, 0.0), 1.0, TimeGrid::new(0.1, 7).unwrap(), SeedSpec::new(0, 1), &opts)
            .unwrap();
        let mut buf = Vec::new();
        p.write_debug_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("step,chart,u1,u2,log_weight,phase\n0,0,"));
    }
}
