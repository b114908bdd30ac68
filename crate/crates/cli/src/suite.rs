//! Acceptance suite: eight criteria, each reported as PASS or FAIL with the
//! numbers behind the verdict.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use num_complex::Complex64;

use bergmc_core::bergman::magnetic::{magnetic_oracle_plane, MagneticOptions};
use bergmc_core::bergman::{kernel_series, toeplitz_matrix, BasisSpec, OrthonormalBasis};
use bergmc_core::bundle::BundleData;
use bergmc_core::dk::{
    default_probes, dk_extrapolate, finite_d_kernel, finite_d_matrix, kato_kappa, kernel_ladder, khasminskii_check,
    matrix_ladder, monotonicity_check, outer_rule, DLadder, KhasminskiiStatus, LadderPoint,
};
use bergmc_core::geometry::{ChartId, ChartPoint, KahlerModel};
use bergmc_core::mc::{sample_paths, sample_paths_sequential, SeedSpec};
use bergmc_core::paths::{sample_bridge_plane, sample_brownian, transport_along, McConfig, PathOptions, TimeGrid};
use bergmc_core::symbol::SymbolSpec;
use bergmc_core::Result as CoreResult;

use crate::config::Profile;

/// Monte Carlo budgets of one suite run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub c4_paths: u64,
    pub c4_steps: usize,
    pub c5_paths: u64,
    pub c5_steps: usize,
    pub c6_paths_per_node: u64,
    pub c6_steps_per_d: f64,
    pub c7_paths: u64,
    pub c8_paths: u64,
}

impl Budget {
    /// `Full` is the acceptance budget; `Quick` keeps every tolerance but
    /// uses fewer paths.
    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Full => Self {
                c4_paths: 100_000,
                c4_steps: 500,
                c5_paths: 100_000,
                c5_steps: 1000,
                c6_paths_per_node: 10_000,
                c6_steps_per_d: 25.0,
                c7_paths: 10_000,
                c8_paths: 20_000,
            },
            Profile::Quick => Self {
                c4_paths: 20_000,
                c4_steps: 200,
                c5_paths: 10_000,
                c5_steps: 400,
                c6_paths_per_node: 300,
                c6_steps_per_d: 10.0,
                c7_paths: 2_000,
                c8_paths: 4_000,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
    pub wall: Duration,
}

impl CriterionResult {
    pub fn verdict_line(&self) -> String {
        format!(
            "criterion {}: {} ({}, {:.1} s)",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.title,
            self.wall.as_secs_f64()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub profile: Profile,
    pub seed: u64,
    pub results: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "bergmc validation report (profile {:?}, seed {:#x})", self.profile, self.seed);
        for r in &self.results {
            let _ = writeln!(s, "\n{}", r.verdict_line());
            for d in &r.details {
                let _ = writeln!(s, "  {d}");
            }
        }
        let passed = self.results.iter().filter(|r| r.pass).count();
        let _ = writeln!(s, "\n{passed}/{} criteria passed", self.results.len());
        s
    }
}

/// Outcome of one criterion body: a verdict and the lines explaining it.
struct Outcome {
    pass: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { pass: true, details: Vec::new() }
    }

    /// Records a named sub-check.
    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.details.push(format!("[{}] {line}", if ok { "ok" } else { "FAILED" }));
    }

    fn note(&mut self, line: String) {
        self.details.push(line);
    }
}

fn plane(hbar: f64) -> BundleData {
    BundleData::new(KahlerModel::plane(hbar).expect("valid hbar"))
}

fn sphere(k: u32) -> BundleData {
    BundleData::new(KahlerModel::sphere(k).expect("valid k"))
}

fn origin() -> ChartPoint {
    ChartPoint::plane(0.0, 0.0)
}

/// Data shared between criteria 5 and 8.
#[derive(Default)]
struct Shared {
    oracle_ladder: Option<DLadder>,
    mc_ladder: Option<DLadder>,
}

const LADDER_5: [f64; 4] = [4.0, 8.0, 16.0, 32.0];
const LADDER_6: [f64; 3] = [8.0, 16.0, 32.0];

/// Runs every criterion, calling `progress` after each one.
pub fn run_suite(profile: Profile, seed: u64, mut progress: impl FnMut(&CriterionResult)) -> SuiteReport {
    let budget = Budget::for_profile(profile);
    let mut shared = Shared::default();
    let mut results = Vec::new();
    let bodies: [(u8, &'static str); 8] = [
        (1, "convention pinning"),
        (2, "reproducing identity"),
        (3, "Toeplitz oracle spectra"),
        (4, "Feynman-Kac kernel vs lattice oracle"),
        (5, "D -> infinity limit, kernel form"),
        (6, "D -> infinity limit, sphere matrix elements"),
        (7, "Kato diagnostics"),
        (8, "structural invariants"),
    ];
    for (id, title) in bodies {
        let start = Instant::now();
        let out = match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(&budget, seed),
            5 => criterion_5(&budget, seed, &mut shared),
            6 => criterion_6(&budget, seed),
            7 => criterion_7(&budget, seed),
            _ => criterion_8(&budget, seed, &mut shared),
        };
        let (pass, details) = match out {
            Ok(o) => (o.pass, o.details),
            Err(e) => (false, vec![format!("[FAILED] error: {e}")]),
        };
        let r = CriterionResult { id, title, pass, details, wall: start.elapsed() };
        progress(&r);
        results.push(r);
    }
    SuiteReport { profile, seed, results }
}

fn probe_grid(chart: ChartId) -> Vec<ChartPoint> {
    let mut out = Vec::new();
    for i in 0..9 {
        for j in 0..9 {
            out.push(ChartPoint::new(chart, -2.0 + 0.5 * i as f64, -2.0 + 0.5 * j as f64));
        }
    }
    out
}

fn criterion_1() -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let mut cases: Vec<(String, BundleData, f64, Vec<ChartPoint>)> = Vec::new();
    for hbar in [0.5, 1.0, 2.0] {
        cases.push((format!("plane hbar={hbar}"), plane(hbar), -1.0 / (2.0 * hbar), probe_grid(ChartId::PLANE)));
    }
    for k in [1u32, 2, 4] {
        let mut pts = probe_grid(ChartId::SOUTH);
        pts.extend(probe_grid(ChartId::NORTH));
        // ρ = −d/(4ħ) with real dimension d = 2 and ħ = 1/k
        cases.push((format!("sphere k={k}"), sphere(k), -(k as f64) / 2.0, pts));
    }
    for (name, b, rho, pts) in cases {
        let mut res = 0.0f64;
        let mut drho = 0.0f64;
        for p in &pts {
            res = res.max(b.prequantum_residual(p)?);
            drho = drho.max((b.rho_at(p)? - rho).abs());
        }
        o.check(res < 1e-10 && drho < 1e-10, format!("{name}: residual {res:.1e}, |rho - {rho}| {drho:.1e} over {} probes", pts.len()));
    }
    Ok(o)
}

/// Largest reproducing residual of the truncated kernel over basis sections
/// and probes, integrating with `rule`.
fn reproducing_residual(basis: &OrthonormalBasis, rule: &bergmc_core::quadrature::QuadRule, xs: &[ChartPoint]) -> f64 {
    let b = basis.bundle();
    let nodes: Vec<(Vec<Complex64>, f64)> = rule
        .nodes
        .iter()
        .map(|n| (basis.eval(&n.point), n.weight * (-b.phi(&n.point).unwrap_or(f64::INFINITY)).exp()))
        .collect();
    let mut worst = 0.0f64;
    for x in xs {
        let ex = basis.eval(x);
        let mut acc = vec![Complex64::new(0.0, 0.0); basis.len()];
        for (ey, w) in &nodes {
            let k: Complex64 = ex.iter().zip(ey).map(|(p, q)| p * q.conj()).sum();
            for (a, e) in ey.iter().enumerate() {
                acc[a] += k * e * *w;
            }
        }
        for (got, want) in acc.iter().zip(&ex) {
            worst = worst.max((got - want).norm());
        }
    }
    worst
}

fn ten_probes(chart: ChartId) -> Vec<ChartPoint> {
    (0..10)
        .map(|i| {
            let a = 0.7 * i as f64;
            let r = 0.15 * i as f64;
            ChartPoint::new(chart, r * a.cos(), r * a.sin())
        })
        .collect()
}

fn criterion_2() -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let basis = OrthonormalBasis::build(BasisSpec::new(plane(1.0), 16)?)?;
    let rule = bergmc_core::quadrature::plane_rule(120, 40, 9.0)?;
    let r = reproducing_residual(&basis, &rule, &ten_probes(ChartId::PLANE));
    o.check(r < 1e-6, format!("plane N=16: residual {r:.2e} (independent 120x40 rule, R = 9)"));
    let basis = OrthonormalBasis::build(BasisSpec::sphere_full(sphere(2))?)?;
    let rule = bergmc_core::quadrature::sphere_rule(7, 9)?;
    for chart in [ChartId::SOUTH, ChartId::NORTH] {
        let r = reproducing_residual(&basis, &rule, &ten_probes(chart));
        o.check(r < 1e-6, format!("sphere k=2, probes in chart {}: residual {r:.2e}", chart.0));
    }
    Ok(o)
}

fn criterion_3() -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let n = 16;
    let basis = OrthonormalBasis::build(BasisSpec::new(plane(1.0), n)?)?;
    let ev = toeplitz_matrix(&SymbolSpec::abs2(), &basis)?.eigenvalues();
    let err = ev.iter().enumerate().map(|(i, l)| (l - (i + 1) as f64).abs()).fold(0.0, f64::max);
    o.check(err < 1e-8, format!("plane |z|^2, N={n}: max |lambda_i - i| = {err:.1e}"));
    let basis = OrthonormalBasis::build(BasisSpec::sphere_full(sphere(2))?)?;
    let ev = toeplitz_matrix(&SymbolSpec::cos_theta(), &basis)?.eigenvalues();
    let want = [-0.5, 0.0, 0.5];
    let err = ev.iter().zip(want).map(|(l, w)| (l - w).abs()).fold(0.0, f64::max);
    o.check(ev.len() == 3 && err < 1e-8, format!("sphere k=2 cos(theta): eigenvalues {ev:.3?}, max error {err:.1e}"));
    Ok(o)
}

fn criterion_4(budget: &Budget, seed: u64) -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let b = plane(1.0);
    let f = SymbolSpec::zero();
    let mc = McConfig::new(budget.c4_paths, budget.c4_steps, seed);
    let est = finite_d_kernel(&b, &f, 1.0, 0.5, origin(), origin(), &mc)?;
    let oracle = magnetic_oracle_plane(&b, 1.0, 0.5, &origin(), &origin(), &f, &MagneticOptions::default())?;
    let dev = (est.value - oracle.value).norm();
    o.note(format!(
        "MC {:.6} {:+.1e}i +- {:.2e} ({} paths x {} steps); lattice oracle {:.6} (error estimate {:.1e})",
        est.value.re, est.value.im, est.stderr, est.n_paths, est.n_steps, oracle.value.re, oracle.error_estimate
    ));
    o.check(dev <= 3.0 * est.stderr, format!("|MC - oracle| = {dev:.2e} <= 3 stderr = {:.2e}", 3.0 * est.stderr));
    o.check(est.rel_stderr() <= 0.01, format!("relative stderr {:.2e} <= 1e-2", est.rel_stderr()));
    Ok(o)
}

fn criterion_5(budget: &Budget, seed: u64, shared: &mut Shared) -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let b = plane(1.0);
    let f = SymbolSpec::zero();
    let basis = OrthonormalBasis::build(BasisSpec::new(b.clone(), 16)?)?;
    let target = kernel_series(&basis, &origin(), &origin())?.value;

    let mut oracle_pts = Vec::new();
    for d in LADDER_5 {
        let v = magnetic_oracle_plane(&b, d, 1.0, &origin(), &origin(), &f, &MagneticOptions::default())?;
        oracle_pts.push(LadderPoint { d, value: v.value, stderr: 0.0 });
    }
    let oracle = DLadder::new(oracle_pts)?.fitted(Some(target))?;
    let of = oracle.fit.as_ref().expect("fitted");
    let rel = of.target_deviation.unwrap_or(f64::INFINITY) / target.norm();
    o.note(format!(
        "oracle ladder {:?}",
        oracle.points.iter().map(|p| format!("D={}: {:.9}", p.d, p.value.re)).collect::<Vec<_>>()
    ));
    o.check(rel < 1e-3, format!("noise-free oracle ladder limit {:.8} vs K(0,0) = {:.8}: relative error {rel:.2e} < 1e-3", of.limit.re, target.re));

    let mc = McConfig::new(budget.c5_paths, budget.c5_steps, seed);
    let ests = kernel_ladder(&b, &f, 1.0, origin(), origin(), &LADDER_5, &mc, |_| budget.c5_steps)?;
    let ladder = DLadder::new(ests.iter().map(LadderPoint::from).collect())?.fitted(Some(target))?;
    for e in &ests {
        o.note(format!("D={}: {:.6} {:+.2e}i +- {:.2e} (relative {:.1e})", e.d, e.value.re, e.value.im, e.stderr, e.rel_stderr()));
    }
    let fit = ladder.fit.as_ref().expect("fitted");
    let dev = fit.target_deviation.unwrap_or(f64::INFINITY);
    let tol = (3.0 * fit.stderr).max(2.0 * of.residual);
    o.note(format!("oracle-ladder model residual {:.2e}; MC fit chi2/dof {:.2}", of.residual, fit.chi2_per_dof));
    o.check(
        dev <= tol,
        format!("MC limit {:.6} +- {:.2e} vs K(0,0): |dev| = {dev:.2e} <= max(3 stderr, 2 residual) = {tol:.2e}", fit.limit.re, fit.stderr),
    );
    if fit.stderr > 0.1 * target.norm() {
        o.note("note: the combined stderr exceeds 10% of the target; the largest D rungs carry almost no weight (e^{tD/2} prefactor)".into());
    }
    shared.oracle_ladder = Some(oracle);
    shared.mc_ladder = Some(ladder);
    Ok(o)
}

fn criterion_6(budget: &Budget, seed: u64) -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let basis = OrthonormalBasis::build(BasisSpec::sphere_full(sphere(2))?)?;
    let f = SymbolSpec::cos_theta();
    let want = toeplitz_matrix(&f, &basis)?.semigroup(1.0);
    let rule = outer_rule(&basis)?;
    let mc = McConfig::new(budget.c6_paths_per_node, 1, seed);
    let steps = |d: f64| ((budget.c6_steps_per_d * d).ceil() as usize).max(100);
    let rungs = matrix_ladder(&f, 1.0, &basis, &rule, &LADDER_6, &mc, steps)?;
    o.note(format!(
        "{} nodes x {} paths per element and D; steps {:?}",
        rule.nodes.len(),
        budget.c6_paths_per_node,
        LADDER_6.map(steps)
    ));
    let n = basis.len();
    let mut worst_z = 0.0f64;
    let mut sigmas = Vec::new();
    for a in 0..n {
        for c in 0..n {
            let pts = rungs.iter().map(|m| LadderPoint::from(&m.element(a, c))).collect();
            let fit = dk_extrapolate(&DLadder::new(pts)?, Some(want[(a, c)]))?;
            let dev = fit.target_deviation.unwrap_or(f64::INFINITY);
            worst_z = worst_z.max(dev / fit.stderr);
            sigmas.push(fit.stderr);
            o.check(
                dev <= 3.0 * fit.stderr,
                format!("({a},{c}): limit {:+.3e} +- {:.2e} vs oracle {:+.4}", fit.limit.re, fit.stderr, want[(a, c)].re),
            );
        }
    }
    for (m, d) in rungs.iter().zip(LADDER_6) {
        let s = m.stderr.iter().copied().fold(0.0, f64::max);
        o.note(format!("D={d}: largest element stderr {s:.2e}"));
    }
    sigmas.sort_by(f64::total_cmp);
    o.note(format!("largest |dev|/stderr {worst_z:.2}; median combined stderr {:.2e}", sigmas[sigmas.len() / 2]));
    if sigmas[0] > 1.0 {
        o.note(
            "note: every combined stderr exceeds the O(1) oracle entries; the e^{tDk/2} curvature prefactor makes this check noise-dominated at this budget"
                .into(),
        );
    }
    Ok(o)
}

fn criterion_7(budget: &Budget, seed: u64) -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let b = plane(1.0);
    let probes = default_probes(&b.model);
    let mc = McConfig::new(budget.c7_paths, 100, seed);
    let r = khasminskii_check(&b, &SymbolSpec::constant(0.5), 1.0, 1.0, origin(), &probes, &mc)?;
    let bound = r.bound.unwrap_or(f64::INFINITY);
    o.check(
        r.status == KhasminskiiStatus::Pass && (r.lhs - 0.5f64.exp()).abs() < 1e-12 && (bound - 2.0).abs() < 1e-12,
        format!("q = 0.5, t = 1: lhs {:.10} (e^0.5 = {:.10}) <= bound {bound:.6}", r.lhs, 0.5f64.exp()),
    );
    let mut prev: Option<(f64, f64, f64)> = None;
    for (j, t) in [0.1, 0.01, 0.001].into_iter().enumerate() {
        let k = kato_kappa(&b, &SymbolSpec::abs2(), 1.0, t, &probes, &McConfig::new(budget.c7_paths, 20, seed).with_offset((j as u64) << 48))?;
        let line = format!("q = |z|^2, t = {t}: kappa {:.5e} +- {:.1e}", k.kappa, k.stderr);
        match prev {
            Some((pt, pk, ps)) => o.check(k.kappa + 3.0 * k.stderr.hypot(ps) < pk, format!("{line} < kappa({pt}) beyond 3 joint stderr")),
            None => o.note(line),
        }
        prev = Some((t, k.kappa, k.stderr));
    }
    Ok(o)
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn bits(z: Complex64) -> (u64, u64) {
    (z.re.to_bits(), z.im.to_bits())
}

fn criterion_8(budget: &Budget, seed: u64, shared: &mut Shared) -> CoreResult<Outcome> {
    let mut o = Outcome::new();
    let b = plane(1.0);
    let s3 = sphere(3);
    let opts = PathOptions::default();

    // modulus rule
    let mut worst = 0.0f64;
    for (bundle, x) in [(&s3, ChartPoint::new(ChartId::SOUTH, 0.9, -0.2)), (&b, ChartPoint::plane(0.4, 0.3))] {
        for i in 0..200 {
            let p = sample_brownian(bundle, x, 2.0, TimeGrid::new(1.0, 200)?, SeedSpec::new(seed, i), &opts)?;
            let lhs = transport_along(&p).norm() * (-bundle.phi(&p.start)? / 2.0).exp();
            let rhs = (-bundle.phi(&p.end)? / 2.0).exp();
            worst = worst.max((lhs - rhs).abs() / rhs);
        }
    }
    o.check(worst < 1e-14, format!("holonomy modulus rule: max relative error {worst:.1e} over 400 paths"));

    // constant shift
    let x = ChartPoint::plane(0.3, 0.1);
    let y = ChartPoint::plane(-0.2, 0.4);
    let mc = McConfig::new(2_000, 50, seed);
    let k0 = finite_d_kernel(&b, &SymbolSpec::abs2(), 1.0, 0.5, x, y, &mc)?;
    let k1 = finite_d_kernel(&b, &SymbolSpec::abs2().plus(0.7), 1.0, 0.5, x, y, &mc)?;
    let rel_k = (k1.value - k0.value * (-0.35f64).exp()).norm() / k1.value.norm();
    let basis = OrthonormalBasis::build(BasisSpec::sphere_full(sphere(1))?)?;
    let rule = bergmc_core::quadrature::sphere_rule(3, 4)?;
    let mmc = McConfig::new(200, 20, seed);
    let m0 = finite_d_matrix(&SymbolSpec::cos_theta(), 2.0, 0.5, &basis, &rule, &mmc)?;
    let m1 = finite_d_matrix(&SymbolSpec::cos_theta().plus(0.7), 2.0, 0.5, &basis, &rule, &mmc)?;
    let rel_m = (&m1.values - &m0.values * Complex64::new((-0.35f64).exp(), 0.0)).norm() / m1.values.norm();
    o.check(
        rel_k < 1e-12 && rel_m < 1e-12,
        format!("constant shift c = 0.7: kernel {rel_k:.1e}, sphere matrix {rel_m:.1e} relative deviation from e^(-ct) factor"),
    );

    // determinism across worker counts
    let det_mc = McConfig::new(3_000, 40, seed);
    let run = || finite_d_kernel(&b, &SymbolSpec::abs2(), 2.0, 0.5, x, y, &det_mc).map(|e| (bits(e.value), e.stderr.to_bits()));
    let one = in_pool(1, run)?;
    let mut same = true;
    for n in [2, 4] {
        same &= in_pool(n, run)? == one;
    }
    let grid = TimeGrid::new(0.5, 40)?;
    let closure = |i: u64, out: &mut [Complex64]| {
        let Ok(p) = sample_bridge_plane(&b, x, y, 2.0, grid, SeedSpec::new(seed, i), &opts) else {
            return false;
        };
        out[0] = transport_along(&p);
        true
    };
    same &= in_pool(3, || sample_paths(3_000, 1, closure)) == sample_paths_sequential(3_000, 1, closure);
    let how = if cfg!(feature = "parallel") { "1/2/4 workers and the sequential driver" } else { "sequential build" };
    o.check(same, format!("bitwise determinism across {how}"));

    // Δt halving on coupled paths: one fine bridge, coarsened by 8, 4, 2, 1
    let q = SymbolSpec::abs2();
    let fine = TimeGrid::new(0.5, 64)?;
    let rec = PathOptions { potential: Some(&q), record: true };
    let tally = sample_paths(budget.c8_paths, 3, |i, out| {
        let Ok(p) = sample_bridge_plane(&b, x, y, 1.0, fine, SeedSpec::new(seed ^ 0xD7, i), &rec) else {
            return false;
        };
        let mut vals = [Complex64::new(0.0, 0.0); 4];
        for (v, factor) in vals.iter_mut().zip([8, 4, 2, 1]) {
            let Ok(c) = p.coarsen(&b, Some(&q), factor) else {
                return false;
            };
            *v = transport_along(&c) * c.fk_log_weight.exp();
        }
        for k in 0..3 {
            out[k] = vals[k] - vals[k + 1];
        }
        true
    });
    let diffs: Vec<(f64, f64)> = tally.moments.iter().map(|m| (m.mean.norm(), m.stderr())).collect();
    let mut ok = true;
    for w in diffs.windows(2) {
        ok &= w[1].0 < w[0].0 || w[1].0 <= 3.0 * w[1].1;
    }
    o.check(
        ok,
        format!(
            "dt-halving differences (8->4, 4->2, 2->1 steps of 1/128): {}",
            diffs.iter().map(|(m, s)| format!("{m:.2e} +- {s:.1e}")).collect::<Vec<_>>().join(", ")
        ),
    );

    // hermiticity and diagonal positivity
    let hmc = McConfig::new(budget.c8_paths, 100, seed);
    let kxy = finite_d_kernel(&b, &SymbolSpec::abs2(), 1.0, 0.5, x, y, &hmc)?;
    let kyx = finite_d_kernel(&b, &SymbolSpec::abs2(), 1.0, 0.5, y, x, &hmc.with_offset(1 << 40))?;
    let dev = (kxy.value - kyx.value.conj()).norm();
    let band = 3.0 * kxy.stderr.hypot(kyx.stderr);
    o.check(dev <= band, format!("hermiticity: |Q(x,y) - conj Q(y,x)| = {dev:.2e} <= {band:.2e}"));
    let kxx = finite_d_kernel(&b, &SymbolSpec::abs2(), 1.0, 0.5, x, x, &hmc.with_offset(2 << 40))?;
    o.check(
        kxx.value.re > 3.0 * kxx.stderr && kxx.value.im.abs() <= 3.0 * kxx.stderr,
        format!("diagonal positivity: Q(x,x) = {:.5} {:+.1e}i +- {:.1e}", kxx.value.re, kxx.value.im, kxx.stderr),
    );

    // D-monotonicity, reusing the ladders of criterion 5 when available
    let oracle = match shared.oracle_ladder.take() {
        Some(l) => l,
        None => {
            let mut pts = Vec::new();
            for d in LADDER_5 {
                let v = magnetic_oracle_plane(&b, d, 1.0, &origin(), &origin(), &SymbolSpec::zero(), &MagneticOptions::default())?;
                pts.push(LadderPoint { d, value: v.value, stderr: 0.0 });
            }
            DLadder::new(pts)?
        }
    };
    let mono = monotonicity_check(&oracle, true);
    o.check(mono.pass, format!("oracle diagonal kernels strictly decreasing in D (violations {:?})", mono.violations));
    let mc_ladder = match shared.mc_ladder.take() {
        Some(l) => l,
        None => {
            let mc = McConfig::new(budget.c5_paths, budget.c5_steps, seed);
            let e = kernel_ladder(&b, &SymbolSpec::zero(), 1.0, origin(), origin(), &LADDER_5, &mc, |_| budget.c5_steps)?;
            DLadder::new(e.iter().map(LadderPoint::from).collect())?
        }
    };
    let mono = monotonicity_check(&mc_ladder, false);
    o.check(mono.pass, format!("MC diagonal kernels non-increasing in D within 3 joint stderr (violations {:?})", mono.violations));
    Ok(o)
}
