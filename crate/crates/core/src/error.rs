use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeraldError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("no herald: click probability is zero")]
    NoHerald,

    #[error("fit did not converge after {iterations} iterations: {reason}")]
    FitNonConvergence { iterations: usize, reason: String },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("infeasible: {reason}")]
    Infeasible { reason: String, best: Option<f64> },

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HeraldError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> HeraldError {
    HeraldError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(invalid(name, format!("{value} is outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(invalid(name, format!("{value} is not finite")));
    }
    Ok(())
}
