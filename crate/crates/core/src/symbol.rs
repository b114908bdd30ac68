//! Built-in symbols `f` and the potentials `q = f + c` built from them.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{sphere_cos_theta, ChartPoint, KahlerModel, ModelKind};

#[derive(Debug, Clone, PartialEq)]
pub enum SymbolKind {
    Zero,
    /// `|z|²` on the plane.
    Abs2,
    /// Height function `cos θ` on the sphere.
    CosTheta,
    /// `Σ c·u1^i·u2^j` on the plane, terms given as `(i, j, c)`.
    Poly(Vec<(u32, u32, f64)>),
}

/// A symbol together with a constant offset, evaluated pointwise as
/// `kind(p) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSpec {
    pub kind: SymbolKind,
    pub offset: f64,
}

impl SymbolSpec {
    pub fn zero() -> Self {
        Self { kind: SymbolKind::Zero, offset: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Self { kind: SymbolKind::Zero, offset: c }
    }

    pub fn abs2() -> Self {
        Self { kind: SymbolKind::Abs2, offset: 0.0 }
    }

    pub fn cos_theta() -> Self {
        Self { kind: SymbolKind::CosTheta, offset: 0.0 }
    }

    pub fn poly(terms: Vec<(u32, u32, f64)>) -> Self {
        Self { kind: SymbolKind::Poly(terms), offset: 0.0 }
    }

    pub fn plus(&self, c: f64) -> Self {
        Self { kind: self.kind.clone(), offset: self.offset + c }
    }

    pub fn name(&self) -> &'static str {
        match (&self.kind, self.offset != 0.0) {
            (SymbolKind::Zero, false) => "zero",
            (SymbolKind::Zero, true) => "const",
            (SymbolKind::Abs2, _) => "abs2",
            (SymbolKind::CosTheta, _) => "cos_theta",
            (SymbolKind::Poly(_), _) => "poly",
        }
    }

    pub fn check_model(&self, model: &KahlerModel) -> Result<()> {
        let ok = match self.kind {
            SymbolKind::Zero => true,
            SymbolKind::Abs2 | SymbolKind::Poly(_) => model.kind() == ModelKind::Plane,
            SymbolKind::CosTheta => model.kind() == ModelKind::Sphere,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SymbolModelMismatch {
                symbol: self.name().to_string(),
                model: model.kind().name(),
            })
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, SymbolKind::Zero)
    }

    /// Whether the symbol is known to be `≥ 0` everywhere. Polynomials are
    /// never certified.
    pub fn is_nonnegative(&self) -> bool {
        match self.kind {
            SymbolKind::Zero | SymbolKind::Abs2 => self.offset >= 0.0,
            SymbolKind::CosTheta => self.offset >= 1.0,
            SymbolKind::Poly(_) => false,
        }
    }

    /// Evaluates at `p`; the model/symbol pairing must have been checked.
    #[inline]
    pub fn eval(&self, p: &ChartPoint) -> f64 {
        let v = match &self.kind {
            SymbolKind::Zero => 0.0,
            SymbolKind::Abs2 => p.norm_sqr(),
            SymbolKind::CosTheta => sphere_cos_theta(p),
            SymbolKind::Poly(terms) => terms
                .iter()
                .map(|&(i, j, c)| c * p.u[0].powi(i as i32) * p.u[1].powi(j as i32))
                .sum(),
        };
        v + self.offset
    }

    /// Kato metadata: `f⁺` locally Kato, `f⁻` Kato. Both hold for the bounded
    /// and the nonnegative builtins; for polynomials only `f⁺` is asserted.
    pub fn kato_flags(&self) -> KatoFlags {
        match self.kind {
            SymbolKind::Zero | SymbolKind::Abs2 | SymbolKind::CosTheta => KatoFlags {
                positive_part_locally_kato: true,
                negative_part_kato: true,
            },
            SymbolKind::Poly(_) => KatoFlags {
                positive_part_locally_kato: true,
                negative_part_kato: false,
            },
        }
    }
}

impl fmt::Display for SymbolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SymbolKind::Zero => return write!(f, "{}", self.offset),
            SymbolKind::Abs2 => write!(f, "|z|^2")?,
            SymbolKind::CosTheta => write!(f, "cos(theta)")?,
            SymbolKind::Poly(terms) => {
                for (n, (i, j, c)) in terms.iter().enumerate() {
                    if n > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{c}*u1^{i}*u2^{j}")?;
                }
            }
        }
        if !self.is_constant() && self.offset != 0.0 {
            write!(f, " + {}", self.offset)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KatoFlags {
    pub positive_part_locally_kato: bool,
    pub negative_part_kato: bool,
}
