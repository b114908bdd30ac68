//! Run configuration: `[section]` headers, one `key = value` per line, `#`
//! comments. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use bergmc_core::bergman::magnetic::MagneticOptions;
use bergmc_core::bergman::QuadratureSpec;
use bergmc_core::bundle::BundleData;
use bergmc_core::dk::DEFAULT_LADDER;
use bergmc_core::geometry::{ChartPoint, KahlerModel, ModelKind};
use bergmc_core::mc::DEFAULT_SEED;
use bergmc_core::paths::McConfig;
use bergmc_core::symbol::SymbolSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("line {line}: duplicate key `{section}.{key}`")]
    Duplicate { line: usize, section: String, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("`{first}` conflicts with `{second}`: {reason}")]
    Conflict { first: String, second: String, reason: String },
}

type CResult<T> = std::result::Result<T, ConfigError>;

const SCHEMA: &[(&str, &[&str])] = &[
    ("model", &["model", "hbar", "k"]),
    ("symbol", &["name", "c", "coeffs"]),
    ("mc", &["D", "D_ladder", "t", "n_steps", "steps_per_D", "n_paths", "seed", "x", "y"]),
    ("oracle", &["N", "n_radial", "n_angular", "cutoff_R", "grid_L", "grid_n"]),
    ("output", &["dir", "debug_paths"]),
    ("validate", &["profile"]),
];

/// Key-value content of a config file, validated against the schema only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CResult<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line: line_no, reason: "unterminated section header".into() })?
                    .trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::UnknownSection(name.to_string()));
                }
                raw.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: line_no, reason: format!("expected `key = value`, got `{line}`") })?;
            let (key, value) = (key.trim(), value.trim());
            let section = current
                .clone()
                .ok_or_else(|| ConfigError::Syntax { line: line_no, reason: "key outside of any section".into() })?;
            let allowed = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey { section, key: key.to_string() });
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax { line: line_no, reason: format!("empty value for `{key}`") });
            }
            let entries = raw.sections.entry(section.clone()).or_default();
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: line_no, section, key: key.to_string() });
            }
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.to_string()).or_default().insert(key.to_string(), value.into());
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Canonical form: sections and keys in sorted order.
impl fmt::Display for RawConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (section, entries) in &self.sections {
            if !first {
                writeln!(f)?;
            }
            first = false;
            writeln!(f, "[{section}]")?;
            for (k, v) in entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSection {
    pub d: f64,
    pub d_ladder: Vec<f64>,
    pub t: f64,
    pub n_steps: usize,
    /// When set, a run at diffusion `D` uses `max(n_steps, ⌈steps_per_D·D·t⌉)` steps.
    pub steps_per_d: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub x: ChartPoint,
    pub y: ChartPoint,
}

impl McSection {
    pub fn steps_for(&self, d: f64) -> usize {
        match self.steps_per_d {
            Some(s) => self.n_steps.max((s * d * self.t).ceil() as usize),
            None => self.n_steps,
        }
    }

    pub fn mc_config(&self) -> McConfig {
        McConfig::new(self.n_paths, self.steps_for(self.d), self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub n: Option<usize>,
    pub quad: QuadratureSpec,
    pub grid_l: Option<f64>,
    pub grid_n: Option<usize>,
}

impl OracleSection {
    pub fn magnetic_options(&self) -> MagneticOptions {
        MagneticOptions { box_l: self.grid_l, grid_n: self.grid_n, ..MagneticOptions::default() }
    }
}

/// Typed, cross-validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub bundle: BundleData,
    pub symbol: SymbolSpec,
    pub mc: McSection,
    pub oracle: OracleSection,
    pub out_dir: PathBuf,
    pub debug_paths: usize,
    pub profile: Profile,
}

fn parse_num<T: std::str::FromStr>(raw: &RawConfig, section: &str, key: &'static str) -> CResult<Option<T>>
where
    T::Err: fmt::Display,
{
    raw.get(section, key)
        .map(|v| v.parse::<T>().map_err(|e| ConfigError::Invalid { key, reason: format!("`{v}`: {e}") }))
        .transpose()
}

fn parse_list(v: &str, key: &'static str) -> CResult<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| ConfigError::Invalid { key, reason: format!("`{s}`: {e}") }))
        .collect()
}

fn parse_point(raw: &RawConfig, key: &'static str) -> CResult<ChartPoint> {
    match raw.get("mc", key) {
        None => Ok(ChartPoint::plane(0.0, 0.0)),
        Some(v) => match parse_list(v, key)?.as_slice() {
            &[u1, u2] => Ok(ChartPoint::plane(u1, u2)),
            other => Err(ConfigError::Invalid { key, reason: format!("expected `u1, u2`, got {} numbers", other.len()) }),
        },
    }
}

/// `i:j:c` terms separated by `;`.
fn parse_coeffs(v: &str) -> CResult<Vec<(u32, u32, f64)>> {
    let bad = |s: &str| ConfigError::Invalid { key: "coeffs", reason: format!("expected `i:j:c`, got `{s}`") };
    v.split(';')
        .map(|term| {
            let parts: Vec<&str> = term.split(':').map(str::trim).collect();
            match parts.as_slice() {
                [i, j, c] => Ok((
                    i.parse().map_err(|_| bad(term))?,
                    j.parse().map_err(|_| bad(term))?,
                    c.parse().map_err(|_| bad(term))?,
                )),
                _ => Err(bad(term)),
            }
        })
        .collect()
}

fn require<T>(v: Option<T>, key: &'static str) -> CResult<T> {
    v.ok_or(ConfigError::Missing(key))
}

fn conflict(first: &str, second: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Conflict { first: first.to_string(), second: second.to_string(), reason: reason.into() }
}

impl RunConfig {
    pub fn load(path: &Path) -> CResult<Self> {
        Self::from_raw(RawConfig::load(path)?)
    }

    pub fn parse(text: &str) -> CResult<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: RawConfig) -> CResult<Self> {
        let model_name = require(raw.get("model", "model"), "model.model")?;
        let hbar: Option<f64> = parse_num(&raw, "model", "hbar")?;
        let k: Option<u32> = parse_num(&raw, "model", "k")?;
        let model = match model_name {
            "plane" => {
                if k.is_some() {
                    return Err(conflict("model.k", "model.model", "k only applies to model = sphere"));
                }
                KahlerModel::plane(require(hbar, "model.hbar")?)
                    .map_err(|e| ConfigError::Invalid { key: "hbar", reason: e.to_string() })?
            }
            "sphere" => {
                if hbar.is_some() {
                    return Err(conflict("model.hbar", "model.model", "on the sphere hbar = 1/k is set through k"));
                }
                KahlerModel::sphere(require(k, "model.k")?)
                    .map_err(|e| ConfigError::Invalid { key: "k", reason: e.to_string() })?
            }
            other => {
                return Err(ConfigError::Invalid { key: "model", reason: format!("expected plane or sphere, got `{other}`") })
            }
        };

        let name = require(raw.get("symbol", "name"), "symbol.name")?;
        let c: Option<f64> = parse_num(&raw, "symbol", "c")?;
        let coeffs = raw.get("symbol", "coeffs");
        if coeffs.is_some() && name != "poly" {
            return Err(conflict("symbol.coeffs", "symbol.name", "coeffs only apply to name = poly"));
        }
        let base = match name {
            "zero" => SymbolSpec::zero(),
            "const" => SymbolSpec::constant(require(c, "symbol.c")?),
            "abs2" => SymbolSpec::abs2(),
            "cos_theta" => SymbolSpec::cos_theta(),
            "poly" => SymbolSpec::poly(parse_coeffs(require(coeffs, "symbol.coeffs")?)?),
            other => {
                return Err(ConfigError::Invalid {
                    key: "name",
                    reason: format!("expected zero, const, abs2, cos_theta or poly, got `{other}`"),
                })
            }
        };
        // `c` is the constant itself for `const` and an offset otherwise
        let symbol = match (name, c) {
            ("const", _) | (_, None) => base,
            (_, Some(c)) => base.plus(c),
        };
        if symbol.check_model(&model).is_err() {
            return Err(conflict(
                &format!("symbol.name = {name}"),
                &format!("model.model = {model_name}"),
                "the symbol is not defined on this model",
            ));
        }

        let d_ladder = match raw.get("mc", "D_ladder") {
            Some(v) => parse_list(v, "D_ladder")?,
            None => DEFAULT_LADDER.to_vec(),
        };
        if d_ladder.iter().any(|d| !(*d > 0.0)) || d_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid { key: "D_ladder", reason: "must be positive and strictly increasing".into() });
        }
        let mc = McSection {
            d: parse_num(&raw, "mc", "D")?.unwrap_or(1.0),
            d_ladder,
            t: parse_num(&raw, "mc", "t")?.unwrap_or(1.0),
            n_steps: parse_num(&raw, "mc", "n_steps")?.unwrap_or(500),
            steps_per_d: parse_num(&raw, "mc", "steps_per_D")?,
            n_paths: parse_num(&raw, "mc", "n_paths")?.unwrap_or(100_000),
            seed: parse_num(&raw, "mc", "seed")?.unwrap_or(DEFAULT_SEED),
            x: parse_point(&raw, "x")?,
            y: parse_point(&raw, "y")?,
        };
        if !(mc.d > 0.0) {
            return Err(ConfigError::Invalid { key: "D", reason: "must be positive".into() });
        }
        if !(mc.t > 0.0) {
            return Err(ConfigError::Invalid { key: "t", reason: "must be positive".into() });
        }
        if mc.n_steps == 0 || mc.n_paths == 0 {
            return Err(ConfigError::Invalid { key: "n_steps", reason: "n_steps and n_paths must be positive".into() });
        }
        for (key, p) in [("x", &mc.x), ("y", &mc.y)] {
            model.check_point(p).map_err(|e| ConfigError::Invalid { key, reason: e.to_string() })?;
        }

        let oracle = OracleSection {
            n: parse_num(&raw, "oracle", "N")?,
            quad: QuadratureSpec {
                n_radial: parse_num(&raw, "oracle", "n_radial")?,
                n_angular: parse_num(&raw, "oracle", "n_angular")?,
                cutoff_r: parse_num(&raw, "oracle", "cutoff_R")?,
            },
            grid_l: parse_num(&raw, "oracle", "grid_L")?,
            grid_n: parse_num(&raw, "oracle", "grid_n")?,
        };
        if model.kind() == ModelKind::Sphere {
            for key in ["cutoff_R", "grid_L", "grid_n"] {
                if raw.get("oracle", key).is_some() {
                    return Err(conflict(&format!("oracle.{key}"), "model.model = sphere", "plane-only oracle setting"));
                }
            }
        }

        let profile = match raw.get("validate", "profile").unwrap_or("full") {
            "quick" => Profile::Quick,
            "full" => Profile::Full,
            other => {
                return Err(ConfigError::Invalid { key: "profile", reason: format!("expected quick or full, got `{other}`") })
            }
        };
        Ok(Self {
            bundle: BundleData::new(model),
            symbol,
            mc,
            oracle,
            out_dir: PathBuf::from(raw.get("output", "dir").unwrap_or("results")),
            debug_paths: parse_num(&raw, "output", "debug_paths")?.unwrap_or(0),
            profile,
            raw,
        })
    }

    pub fn hash(&self) -> String {
        self.raw.hash()
    }

    pub fn model_name(&self) -> &'static str {
        self.bundle.model.kind().name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BASIC: &str = "
        # plane defaults
        [model]
        model = plane
        hbar = 1.0

        [symbol]
        name = abs2

        [mc]
        D = 2
        t = 0.5
        x = 0.1, -0.2
    ";

    #[test]
    fn parses_a_basic_file() {
        let c = RunConfig::parse(BASIC).unwrap();
        assert_eq!(c.bundle.model.kind(), ModelKind::Plane);
        assert_eq!(c.symbol, SymbolSpec::abs2());
        assert_eq!(c.mc.d, 2.0);
        assert_eq!(c.mc.x, ChartPoint::plane(0.1, -0.2));
        assert_eq!(c.mc.d_ladder, DEFAULT_LADDER.to_vec());
        assert_eq!(c.mc.seed, DEFAULT_SEED);
        assert_eq!(c.profile, Profile::Full);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse(&format!("{BASIC}\nn_step = 3\n")).unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey { key, .. } if key == "n_step"));
        assert!(err.to_string().contains("n_step"));
        assert!(matches!(RawConfig::parse("[mcc]\n"), Err(ConfigError::UnknownSection(_))));
    }

    #[test]
    fn symbol_model_mismatch_names_both_keys() {
        let text = BASIC.replace("name = abs2", "name = cos_theta");
        let msg = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(msg.contains("symbol.name") && msg.contains("model.model"), "{msg}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert!(matches!(RawConfig::parse("[model]\nmodel plane\n"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(RawConfig::parse("model = plane\n"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RawConfig::parse("[model]\nk = 1\nk = 2\n"), Err(ConfigError::Duplicate { line: 3, .. })));
    }

    #[test]
    fn sphere_settings() {
        let text = "[model]\nmodel = sphere\nk = 2\n[symbol]\nname = cos_theta\nc = 0.5\n[mc]\nD_ladder = 8, 16, 32\nsteps_per_D = 25\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.symbol, SymbolSpec::cos_theta().plus(0.5));
        assert_eq!(c.mc.steps_for(32.0), 800);
        assert_eq!(c.mc.steps_for(8.0), 500);
        let bad = text.replace("k = 2", "k = 2\nhbar = 0.5");
        assert!(matches!(RunConfig::parse(&bad), Err(ConfigError::Conflict { .. })));
        let bad = text.replace("D_ladder = 8, 16, 32", "D_ladder = 8, 8");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn poly_coefficients() {
        let text = BASIC.replace("name = abs2", "name = poly\ncoeffs = 2:0:1.0; 0:2:1.5");
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.symbol, SymbolSpec::poly(vec![(2, 0, 1.0), (0, 2, 1.5)]));
        assert!(RunConfig::parse(&BASIC.replace("name = abs2", "name = poly\ncoeffs = 2:0")).is_err());
    }

    #[test]
    fn missing_keys() {
        assert!(matches!(RunConfig::parse("[symbol]\nname = zero\n"), Err(ConfigError::Missing("model.model"))));
        assert!(matches!(
            RunConfig::parse("[model]\nmodel = plane\n[symbol]\nname = zero\n"),
            Err(ConfigError::Missing("model.hbar"))
        ));
    }

    #[test]
    fn hash_ignores_layout_but_not_content() {
        let a = RawConfig::parse(BASIC).unwrap();
        let b = RawConfig::parse(&a.to_string()).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RawConfig::parse(&BASIC.replace("D = 2", "D = 3")).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    fn section_strategy() -> impl Strategy<Value = (String, BTreeMap<String, String>)> {
        prop::sample::select(SCHEMA.to_vec()).prop_flat_map(|(name, keys)| {
            let value = "[A-Za-z0-9_.]([A-Za-z0-9_.,:; -]{0,12}[A-Za-z0-9_.])?";
            prop::collection::btree_map(prop::sample::select(keys.to_vec()).prop_map(String::from), value, 0..keys.len())
                .prop_map(move |m| (name.to_string(), m))
        })
    }

    proptest! {
        #[test]
        fn round_trip_preserves_content(sections in prop::collection::vec(section_strategy(), 0..6)) {
            let raw = RawConfig { sections: sections.into_iter().collect() };
            let again = RawConfig::parse(&raw.to_string()).unwrap();
            prop_assert_eq!(&again, &raw);
            prop_assert_eq!(RawConfig::parse(&again.to_string()).unwrap(), again);
        }
    }
}
