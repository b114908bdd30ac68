use thiserror::Error;

use crate::geometry::ChartId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({u1}, {u2}) is outside the domain of chart {chart:?}")]
    Domain { chart: ChartId, u1: f64, u2: f64 },

    #[error("chart transition at the excluded point of chart {target:?}")]
    Singularity { target: ChartId },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation `{op}` is not supported on the {model} model")]
    UnsupportedModel { op: &'static str, model: &'static str },

    #[error("symbol `{symbol}` cannot be evaluated on the {model} model")]
    SymbolModelMismatch { symbol: String, model: &'static str },

    #[error("precision target missed in {what}: error bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    Precision { what: &'static str, bound: f64, tol: f64 },

    #[error("numerical failure in {what}: {reason}")]
    Numeric { what: &'static str, reason: String },

    #[error("sampler rejected {rejected} of {total} paths (limit 1%)")]
    Rejection { rejected: u64, total: u64 },

    #[error("extrapolation failed: {0}")]
    Extrapolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be a positive finite number, got {v}"),
        })
    }
}
