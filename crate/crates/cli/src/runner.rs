//! Subcommand dispatch: each run loads a config, calls the estimators or
//! oracles, appends JSON-lines records and writes its artifacts under the
//! output directory (resolved relative to the config file).

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use thiserror::Error;

use bergmc_core::bergman::magnetic::magnetic_oracle_plane;
use bergmc_core::bergman::{
    kernel_series, toeplitz_matrix, toeplitz_semigroup_kernel, BasisSpec, OrthonormalBasis, ToeplitzMatrix,
};
use bergmc_core::dk::{
    default_probes, dk_extrapolate, finite_d_kernel, finite_d_matrix, kato_kappa, kernel_ladder, khasminskii_check,
    matrix_ladder, outer_rule, DLadder, Estimate, KhasminskiiStatus, LadderPoint,
};
use bergmc_core::geometry::{ChartPoint, ModelKind};
use bergmc_core::paths::{sample_bridge_plane, PathOptions, TimeGrid};

use crate::config::{ConfigError, RunConfig};
use crate::plot::{emit_plot_data, Artifact, PlotError};
use crate::store::{Record, ResultStore};
use crate::suite::run_suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Oracle,
    Kernel,
    Matelem,
    Extrap,
    Kato,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Oracle => "oracle",
            Command::Kernel => "kernel",
            Command::Matelem => "matelem",
            Command::Extrap => "extrap",
            Command::Kato => "kato",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Replace the configured seed by one drawn from the clock.
    pub fresh_seed: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] bergmc_core::Error),
    #[error("artifact error: {0}")]
    Plot(#[from] PlotError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    /// 2 for anything the user can fix in the config or on disk, 1 for
    /// numerical failures.
    pub fn exit_code(&self) -> u8 {
        use bergmc_core::Error as E;
        match self {
            RunError::Config(_) | RunError::Plot(_) | RunError::Io(_) => 2,
            RunError::Core(e) => match e {
                E::Domain { .. }
                | E::Singularity { .. }
                | E::InvalidParameter { .. }
                | E::UnsupportedModel { .. }
                | E::SymbolModelMismatch { .. } => 2,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// 0 on success, 1 when validation failed.
    pub exit: u8,
    pub messages: Vec<String>,
    pub artifacts: Vec<PathBuf>,
    pub seed: u64,
}

fn clock_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    // splitmix64 finalizer so that close clock readings give distant seeds
    let mut z = nanos ^ ((std::process::id() as u64) << 32);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Ctx {
    cfg: RunConfig,
    dir: PathBuf,
    store: ResultStore,
    hash: String,
    seed: u64,
    messages: Vec<String>,
    artifacts: Vec<PathBuf>,
}

impl Ctx {
    fn record(&self, kind: &str, d: Option<f64>, value: Complex64, stderr: f64) -> Record {
        Record {
            config_hash: self.hash.clone(),
            kind: kind.to_string(),
            model: self.cfg.model_name().to_string(),
            symbol: self.cfg.symbol.to_string(),
            d,
            t: self.cfg.mc.t,
            x: None,
            y: None,
            a: None,
            b: None,
            value_re: value.re,
            value_im: value.im,
            stderr,
            n_paths: 0,
            n_steps: 0,
            seed: self.seed,
            wall_ms: 0,
        }
    }

    fn estimate_record(&self, kind: &str, e: &Estimate, wall_ms: u64) -> Record {
        Record {
            n_paths: e.n_paths,
            n_steps: e.n_steps,
            wall_ms,
            ..self.record(kind, Some(e.d), e.value, e.stderr)
        }
    }

    fn with_points(&self, mut r: Record) -> Record {
        r.x = Some(self.cfg.mc.x.u);
        r.y = Some(self.cfg.mc.y.u);
        r
    }

    /// Saves `artifact` as `name.json` and its CSV as `name.csv`.
    fn artifact(&mut self, name: &str, artifact: &Artifact) -> Result<(), RunError> {
        let json = self.dir.join(format!("{name}.json"));
        let csv = self.dir.join(format!("{name}.csv"));
        artifact.save(&json)?;
        let summary = emit_plot_data(&json, &csv)?;
        for w in summary.warnings {
            self.messages.push(format!("warning: {w}"));
        }
        self.artifacts.push(json);
        self.artifacts.push(csv);
        Ok(())
    }

    fn basis(&self) -> Result<OrthonormalBasis, RunError> {
        let b = self.cfg.bundle.clone();
        let spec = match b.model.kind() {
            ModelKind::Sphere => match self.cfg.oracle.n {
                Some(n) => BasisSpec::new(b, n)?,
                None => BasisSpec::sphere_full(b)?,
            },
            ModelKind::Plane => BasisSpec::new(b, self.cfg.oracle.n.unwrap_or(16))?,
        };
        Ok(OrthonormalBasis::build(spec.with_quadrature(self.cfg.oracle.quad))?)
    }
}

fn ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Runs `cmd` on the config at `path`.
pub fn run(cmd: Command, path: &Path, opts: RunOptions) -> Result<RunOutcome, RunError> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dir = if cfg.out_dir.is_absolute() { cfg.out_dir.clone() } else { base.join(&cfg.out_dir) };
    let store = ResultStore::open(&dir)?;
    let seed = if opts.fresh_seed { clock_seed() } else { cfg.mc.seed };
    let mut ctx = Ctx { hash: cfg.hash(), cfg, dir, store, seed, messages: Vec::new(), artifacts: Vec::new() };
    ctx.cfg.mc.seed = seed;
    let exit = match cmd {
        Command::Oracle => oracle(&mut ctx)?,
        Command::Kernel => kernel(&mut ctx)?,
        Command::Matelem => matelem(&mut ctx)?,
        Command::Extrap => extrap(&mut ctx)?,
        Command::Kato => kato(&mut ctx)?,
        Command::Validate => validate(&mut ctx)?,
    };
    ctx.artifacts.insert(0, ctx.store.path().to_path_buf());
    Ok(RunOutcome { exit, messages: ctx.messages, artifacts: ctx.artifacts, seed })
}

fn semigroup_artifact(t_f: &ToeplitzMatrix, t: f64) -> Artifact {
    let e = t_f.semigroup(t);
    Artifact::matrix("toeplitz semigroup", e.nrows(), |a, b| (e[(a, b)], 0.0))
}

fn oracle(ctx: &mut Ctx) -> Result<u8, RunError> {
    let start = Instant::now();
    let basis = ctx.basis()?;
    let (x, y, t) = (ctx.cfg.mc.x, ctx.cfg.mc.y, ctx.cfg.mc.t);
    let model = basis.bundle().model;
    let (x, y) = (model.canonical(&x)?, model.canonical(&y)?);
    let k = kernel_series(&basis, &x, &y)?;
    let t_f = toeplitz_matrix(&ctx.cfg.symbol, &basis)?;
    let kt = toeplitz_semigroup_kernel(&t_f, &basis, t, &x, &y)?;
    let mut records = vec![
        ctx.with_points(ctx.record("reproducing_kernel", None, k.value, k.tail_bound)),
        ctx.with_points(ctx.record("semigroup_kernel", None, kt.value, kt.tail_bound)),
    ];
    ctx.messages.push(format!("K(x,y) = {:.10} {:+.3e}i", k.value.re, k.value.im));
    ctx.messages.push(format!("e^(-tT)(x,y) = {:.10} {:+.3e}i", kt.value.re, kt.value.im));
    let ev = t_f.eigenvalues();
    for (i, l) in ev.iter().enumerate() {
        let mut r = ctx.record("toeplitz_eigenvalue", None, Complex64::new(*l, 0.0), 0.0);
        r.a = Some(i);
        records.push(r);
    }
    ctx.messages.push(format!("Toeplitz eigenvalues: {ev:.10?}"));
    if model.kind() == ModelKind::Plane {
        let m = magnetic_oracle_plane(basis.bundle(), ctx.cfg.mc.d, t, &x, &y, &ctx.cfg.symbol, &ctx.cfg.oracle.magnetic_options())?;
        records.push(ctx.with_points(ctx.record("magnetic_oracle", Some(ctx.cfg.mc.d), m.value, m.error_estimate)));
        ctx.messages.push(format!("lattice Q_D(t,x,y) = {:.10} {:+.3e}i (error estimate {:.1e})", m.value.re, m.value.im, m.error_estimate));
    }
    let wall = ms(start);
    records.iter_mut().for_each(|r| r.wall_ms = wall);
    ctx.store.append(&records)?;
    ctx.artifact("oracle_semigroup", &semigroup_artifact(&t_f, t))?;
    Ok(0)
}

fn kernel(ctx: &mut Ctx) -> Result<u8, RunError> {
    let start = Instant::now();
    let c = &ctx.cfg;
    let mc = c.mc.mc_config();
    let e = finite_d_kernel(&c.bundle, &c.symbol, c.mc.d, c.mc.t, c.mc.x, c.mc.y, &mc)?;
    let r = ctx.with_points(ctx.estimate_record("kernel", &e, ms(start)));
    ctx.store.append(&[r])?;
    ctx.messages.push(format!(
        "Q_D(t,x,y) = {:.10} {:+.3e}i +- {:.3e} (D = {}, {} paths x {} steps)",
        e.value.re, e.value.im, e.stderr, e.d, e.n_paths, e.n_steps
    ));
    if ctx.cfg.debug_paths > 0 {
        let paths_dir = ctx.dir.join("paths");
        fs::create_dir_all(&paths_dir)?;
        let c = &ctx.cfg;
        let grid = TimeGrid::new(c.mc.t, mc.n_steps)?;
        let opts = PathOptions { potential: Some(&c.symbol), record: true };
        let mut written = Vec::new();
        for i in 0..(c.debug_paths as u64).min(mc.n_paths) {
            let seed = bergmc_core::mc::SeedSpec::new(mc.seed, mc.stream_offset + i);
            let p = sample_bridge_plane(&c.bundle, c.mc.x, c.mc.y, c.mc.d, grid, seed, &opts)?;
            let file = paths_dir.join(format!("path_{i}.csv"));
            p.write_debug_csv(io::BufWriter::new(fs::File::create(&file)?))?;
            written.push(file);
        }
        ctx.artifacts.extend(written);
    }
    Ok(0)
}

fn matelem(ctx: &mut Ctx) -> Result<u8, RunError> {
    let start = Instant::now();
    let basis = ctx.basis()?;
    let rule = outer_rule(&basis)?;
    let c = &ctx.cfg;
    let m = finite_d_matrix(&c.symbol, c.mc.d, c.mc.t, &basis, &rule, &c.mc.mc_config())?;
    let wall = ms(start);
    let n = basis.len();
    let mut records = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let mut r = ctx.estimate_record("matelem", &m.element(a, b), wall);
            r.a = Some(a);
            r.b = Some(b);
            records.push(r);
        }
    }
    ctx.store.append(&records)?;
    ctx.messages.push(format!("{n}x{n} matrix at D = {} from {} nodes", m.d, m.n_nodes));
    ctx.artifact("matelem", &Artifact::matrix("matrix elements", n, |a, b| (m.values[(a, b)], m.stderr[(a, b)])))?;
    Ok(0)
}

fn extrap(ctx: &mut Ctx) -> Result<u8, RunError> {
    let start = Instant::now();
    let basis = ctx.basis()?;
    let c = ctx.cfg.clone();
    let mc = c.mc.mc_config();
    let t_f = toeplitz_matrix(&c.symbol, &basis)?;
    match c.bundle.model.kind() {
        ModelKind::Plane => {
            let target = toeplitz_semigroup_kernel(&t_f, &basis, c.mc.t, &c.mc.x, &c.mc.y)?.value;
            let ests = kernel_ladder(&c.bundle, &c.symbol, c.mc.t, c.mc.x, c.mc.y, &c.mc.d_ladder, &mc, |d| c.mc.steps_for(d))?;
            let wall = ms(start);
            let mut records: Vec<Record> = ests.iter().map(|e| ctx.with_points(ctx.estimate_record("ladder_rung", e, wall))).collect();
            let ladder = DLadder::new(ests.iter().map(LadderPoint::from).collect())?;
            let mut oracle_pts = Vec::new();
            for &d in &c.mc.d_ladder {
                let v = magnetic_oracle_plane(&c.bundle, d, c.mc.t, &c.mc.x, &c.mc.y, &c.symbol, &c.oracle.magnetic_options())?;
                oracle_pts.push(LadderPoint { d, value: v.value, stderr: 0.0 });
            }
            let oracle = DLadder::new(oracle_pts)?;
            let (ladder, oracle) = if ladder.points.len() >= 3 {
                (ladder.fitted(Some(target))?, oracle.fitted(Some(target))?)
            } else {
                ctx.messages.push("warning: fewer than 3 D values, no extrapolation".into());
                (ladder, oracle)
            };
            if let (Some(f), Some(of)) = (&ladder.fit, &oracle.fit) {
                let mut r = ctx.with_points(ctx.record("extrapolated_kernel", None, f.limit, f.stderr));
                r.n_paths = ests.iter().map(|e| e.n_paths).sum();
                r.wall_ms = wall;
                records.push(r);
                ctx.messages.push(format!(
                    "limit {:.8} {:+.2e}i +- {:.2e}; e^(-tT)(x,y) = {:.8}; |dev| = {:.2e}; oracle-ladder limit {:.8} (residual {:.2e})",
                    f.limit.re,
                    f.limit.im,
                    f.stderr,
                    target.re,
                    f.target_deviation.unwrap_or(f64::NAN),
                    of.limit.re,
                    of.residual
                ));
                ctx.messages.extend(f.warnings.iter().map(|w| format!("warning: {w}")));
            }
            ctx.store.append(&records)?;
            ctx.artifact("ladder", &Artifact::ladder("Monte Carlo ladder", &ladder))?;
            ctx.artifact("ladder_oracle", &Artifact::ladder("lattice oracle ladder", &oracle))?;
        }
        ModelKind::Sphere => {
            let rule = outer_rule(&basis)?;
            let rungs = matrix_ladder(&c.symbol, c.mc.t, &basis, &rule, &c.mc.d_ladder, &mc, |d| c.mc.steps_for(d))?;
            let wall = ms(start);
            let want = t_f.semigroup(c.mc.t);
            let n = basis.len();
            let mut records = Vec::new();
            let mut limits = vec![(Complex64::new(0.0, 0.0), 0.0); n * n];
            for a in 0..n {
                for b in 0..n {
                    for m in &rungs {
                        let mut r = ctx.estimate_record("ladder_rung", &m.element(a, b), wall);
                        (r.a, r.b) = (Some(a), Some(b));
                        records.push(r);
                    }
                    if rungs.len() >= 3 {
                        let pts = rungs.iter().map(|m| LadderPoint::from(&m.element(a, b))).collect();
                        let fit = dk_extrapolate(&DLadder::new(pts)?, Some(want[(a, b)]))?;
                        let mut r = ctx.record("extrapolated_matelem", None, fit.limit, fit.stderr);
                        (r.a, r.b, r.wall_ms) = (Some(a), Some(b), wall);
                        records.push(r);
                        limits[a * n + b] = (fit.limit, fit.stderr);
                        ctx.messages.push(format!(
                            "({a},{b}): limit {:+.4e} +- {:.2e} vs oracle {:+.6}",
                            fit.limit.re,
                            fit.stderr,
                            want[(a, b)].re
                        ));
                    }
                }
            }
            ctx.store.append(&records)?;
            if rungs.len() >= 3 {
                ctx.artifact("extrap_matrix", &Artifact::matrix("extrapolated matrix", n, |a, b| limits[a * n + b]))?;
            } else {
                ctx.messages.push("warning: fewer than 3 D values, no extrapolation".into());
            }
        }
    }
    Ok(0)
}

fn kato(ctx: &mut Ctx) -> Result<u8, RunError> {
    let start = Instant::now();
    let c = ctx.cfg.clone();
    let probes = default_probes(&c.bundle.model);
    let mc = c.mc.mc_config();
    let x: ChartPoint = c.bundle.model.canonical(&c.mc.x)?;
    let k = kato_kappa(&c.bundle, &c.symbol, c.mc.d, c.mc.t, &probes, &mc)?;
    let h = khasminskii_check(&c.bundle, &c.symbol, c.mc.d, c.mc.t, x, &probes, &mc)?;
    let wall = ms(start);
    let mut rk = ctx.record("kato_kappa", Some(c.mc.d), Complex64::new(k.kappa, 0.0), k.stderr);
    rk.x = Some(k.argmax.u);
    let mut rh = ctx.record("khasminskii_lhs", Some(c.mc.d), Complex64::new(h.lhs, 0.0), h.lhs_stderr);
    rh.x = Some(x.u);
    for r in [&mut rk, &mut rh] {
        (r.n_paths, r.n_steps, r.wall_ms) = (mc.n_paths, mc.n_steps, wall);
    }
    ctx.store.append(&[rk, rh])?;
    ctx.messages.push(format!("kappa = {:.6e} +- {:.1e} (max over {} probes)", k.kappa, k.stderr, probes.len()));
    let verdict = match h.status {
        KhasminskiiStatus::Pass => "pass",
        KhasminskiiStatus::Fail => "FAIL",
        KhasminskiiStatus::HypothesisViolated => "hypothesis violated (kappa >= 1), bound not applicable",
    };
    ctx.messages.push(format!(
        "Khasminskii: E[e^(int q)] = {:.6} +- {:.1e}, bound {}: {verdict}",
        h.lhs,
        h.lhs_stderr,
        h.bound.map_or("none".to_string(), |b| format!("{b:.6}"))
    ));
    Ok(0)
}

fn validate(ctx: &mut Ctx) -> Result<u8, RunError> {
    let report = run_suite(ctx.cfg.profile, ctx.seed, |r| eprintln!("{}", r.verdict_line()));
    let text = report.render();
    let path = ctx.dir.join("validation_report.txt");
    fs::write(&path, &text)?;
    ctx.artifacts.push(path);
    ctx.messages.extend(report.results.iter().map(|r| r.verdict_line()));
    Ok(if report.all_pass() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg = RunError::Config(ConfigError::Missing("model.model"));
        assert_eq!(cfg.exit_code(), 2);
        let unsupported = RunError::Core(bergmc_core::Error::UnsupportedModel { op: "x", model: "sphere" });
        assert_eq!(unsupported.exit_code(), 2);
        let numeric = RunError::Core(bergmc_core::Error::Rejection { rejected: 5, total: 10 });
        assert_eq!(numeric.exit_code(), 1);
        assert_eq!(RunError::Plot(PlotError::Missing("a".into())).exit_code(), 2);
    }

    #[test]
    fn clock_seeds_differ() {
        let a = clock_seed();
        std::thread::sleep(std::time::Duration::from_millis(2));
        assert_ne!(a, clock_seed());
    }
}
