use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("{axis} = {n}: grid resolution must be even and at least 4")]
    Resolution { axis: &'static str, n: usize },
    #[error("{axis} = {length}: domain length must be positive and finite")]
    Length { axis: &'static str, length: f64 },
    #[error("field has {found} values, grid expects {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error("operands live on different grids")]
    Mismatch,
    #[error("shifted operator is singular at spectral index {index}")]
    Singular { index: usize },
    #[error("inverse transform left an imaginary residue of {residue:e}")]
    ImaginaryResidue { residue: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter {name} = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("a multi-term model needs at least one nonlinear term")]
    NoTerms,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step {step}: non-finite {what}")]
    Divergence { step: usize, what: &'static str },
    #[error("step {step}: scheme needs the previous time level; bootstrap first")]
    BootstrapRequired { step: usize },
    #[error("E0 + C0 = {value} must be positive (raise C0)")]
    EnergyShift { value: f64 },
    #[error("step {step}: SAV splitting denominator vanished")]
    SingularSplitting { step: usize },
    #[error("invalid scheme configuration: {0}")]
    Config(String),
    #[error("state does not match the scheme: {0}")]
    State(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl IntegratorError {
    pub fn is_divergence(&self) -> bool {
        matches!(self, IntegratorError::Divergence { .. })
    }
}
