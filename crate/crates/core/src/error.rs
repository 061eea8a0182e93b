use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (‖M + Mᵀ‖_F = {0:e})")]
    NonSkewInput(f64),
    #[error("vector is not unit norm (|y| = {0})")]
    NonUnitInput(f64),
    #[error("bearing is not unit norm (|y| = {0})")]
    NonUnitBearing(f64),
    #[error("matrix is not a rotation (orthonormality error {ortho:e}, det {det})")]
    NotRotation { ortho: f64, det: f64 },
    #[error("bearing undefined: body and target coincide (range {0:e} m)")]
    DegenerateRange(f64),
    #[error("Riccati matrix lost positive definiteness at step {step}")]
    NonPositiveP { step: usize },
    #[error("Γ is too close to singular for an SO(3) projection (σ_min = {0:e})")]
    SingularGamma(f64),
    #[error("trace does not cover [{t}, {s}] (available [{start}, {end}])")]
    InsufficientTrace { t: f64, s: f64, start: f64, end: f64 },
    #[error("bearing excitation matrix Λ_π is singular (λ_min = {lambda_min:e}, cond = {condition:e})")]
    SingularLambdaPi { lambda_min: f64, condition: f64 },
    #[error("leading block of the Gramian is not positive definite (λ_min = {0:e})")]
    LeadingBlockSingular(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
