//! Numerical tolerances shared across the crate.
//!
//! Every threshold used for invariant checks, degeneracy guards and
//! persistence-of-excitation verdicts lives here.

/// Maximum `‖M + Mᵀ‖_F` for a matrix to be accepted as skew-symmetric.
pub const SKEW: f64 = 1e-9;
/// Maximum `‖RᵀR − I‖_F` for a rotation matrix.
pub const ORTHONORMALITY: f64 = 1e-9;
/// Maximum `|det R − 1|` for a rotation matrix.
pub const DETERMINANT: f64 = 1e-9;
/// Maximum `| |y| − 1 |` for unit vectors (bearings, projector axes).
pub const UNIT_NORM: f64 = 1e-9;
/// Relative symmetry tolerance `‖M − Mᵀ‖_F ≤ SYMMETRY·‖M‖_F`.
pub const SYMMETRY: f64 = 1e-9;
/// Below this rotation-vector norm the exponential map uses its Taylor series.
pub const EXP_SERIES: f64 = 1e-8;
/// Persistence-of-excitation margin relative to the largest eigenvalue.
pub const PE_RELATIVE_MU: f64 = 1e-6;
/// Distance `|tr(RᵀR̂) + 1|` under which an attitude error is flagged as near the unstable set.
pub const UNSTABLE_PROXIMITY: f64 = 1e-3;
/// Smallest singular value below which projecting onto SO(3) is refused.
pub const GAMMA_SINGULAR: f64 = 1e-9;
/// Smallest eigenvalue accepted for the bearing excitation matrix before inversion.
pub const LAMBDA_PI_MIN: f64 = 1e-9;
/// Largest condition number accepted for the bearing excitation matrix.
pub const LAMBDA_PI_CONDITION: f64 = 1e12;
/// Minimum body-target separation for a bearing to be defined (m).
pub const MIN_RANGE: f64 = 1e-6;
