//! Complementary filter on SO(3) cascaded after the Riccati observer.
//!
//! The filter tracks the (generally non-orthogonal) estimate `Γ ≈ Rᵀ` with
//! `R̂̇ = −ω_T×R̂ + R̂Ω× + σ×R̂`, `σ = Σᵢ kᵢ (R̂eᵢ × Γᵀeᵢ)`, and stays on SO(3)
//! by construction. [`project_to_so3`] is the discontinuous alternative.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{exp_so3, Mat3, RotationMatrix, Vec3};
use crate::tolerances as tol;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeEstimate {
    pub r_hat: RotationMatrix,
    pub gains: [f64; 3],
}

impl AttitudeEstimate {
    pub fn new(r_hat: RotationMatrix) -> Self {
        Self { r_hat, gains: [1.0; 3] }
    }

    pub fn with_gains(r_hat: RotationMatrix, gains: [f64; 3]) -> Result<Self> {
        if gains.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::Config("complementary filter gains must be positive".into()));
        }
        Ok(Self { r_hat, gains })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumLabel {
    NearStable,
    NearUnstable,
    Transient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumClassification {
    pub label: EquilibriumLabel,
    /// `tr(RᵀR̂)`.
    pub trace: f64,
}

/// Locates the attitude error `RᵀR̂` relative to the identity (`tr = 3`) and the
/// unstable set `tr = −1`.
pub fn classify(r: &RotationMatrix, r_hat: &RotationMatrix) -> EquilibriumClassification {
    let trace = (r.transpose() * *r_hat).trace();
    let label = if (trace + 1.0).abs() < tol::UNSTABLE_PROXIMITY {
        EquilibriumLabel::NearUnstable
    } else if (3.0 - trace).abs() < tol::UNSTABLE_PROXIMITY {
        EquilibriumLabel::NearStable
    } else {
        EquilibriumLabel::Transient
    };
    EquilibriumClassification { label, trace }
}

/// `σ = Σᵢ kᵢ (R̂eᵢ × Γᵀeᵢ)`.
pub fn filter_innovation(r_hat: &RotationMatrix, gamma: &Mat3, k: &[f64; 3]) -> Vec3 {
    let rh = r_hat.matrix();
    (0..3).fold(Vec3::zeros(), |acc, i| {
        // Γᵀeᵢ is the i-th row of Γ
        let target = gamma.row(i).transpose();
        acc + rh.column(i).cross(&target) * k[i]
    })
}

/// One step of the filter, split as `R̂ ← exp((σ − ω_T)dt)·R̂·exp(Ω dt)`.
pub fn filter_step(est: &AttitudeEstimate, w_t: &Vec3, omega: &Vec3, gamma: &Mat3, dt: f64) -> AttitudeEstimate {
    debug_assert!(dt > 0.0);
    let sigma = filter_innovation(&est.r_hat, gamma, &est.gains);
    let left = exp_so3(&((sigma - w_t) * dt));
    let right = exp_so3(&(omega * dt));
    AttitudeEstimate {
        r_hat: left * est.r_hat * right,
        gains: est.gains,
    }
}

/// Nearest rotation in the Frobenius sense, with the determinant correction
/// applied to the smallest singular direction.
pub fn project_to_so3(gamma: &Mat3) -> Result<RotationMatrix> {
    let svd = SVD::new(*gamma, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::SingularGamma(0.0)),
    };
    let (imin, smin) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three singular values");
    if smin < tol::GAMMA_SINGULAR {
        return Err(Error::SingularGamma(smin));
    }
    let mut fix = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(imin, imin)] = -1.0;
    }
    Ok(RotationMatrix::from_matrix_unchecked(u * fix * v_t))
}
