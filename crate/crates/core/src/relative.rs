//! Relative body-target kinematics on SE₂(3).
//!
//! The relative state is `(R, ξ, ν)` with `R = Q_TᵀQ_B`,
//! `ξ = −Q_Bᵀ(p_T − p_B)` and `ν = −Q_Bᵀ(v_T − v_B)`. Its 5×5 embedding is
//! `X = X_B⁻¹X_T = [[Rᵀ, −ν, −ξ], [0, I₂]]`, used only for cross-checks.

use crate::lie::{exp_so3, hat, ExtendedPose, Mat3, Mat5, RotationMatrix, Vec3};
use crate::world::{ImuSample, RigidBodyState};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RelativeState {
    /// Relative attitude from the body frame to the target frame.
    pub r: RotationMatrix,
    pub xi: Vec3,
    pub nu: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeDerivative {
    pub r_dot: Mat3,
    pub xi_dot: Vec3,
    pub nu_dot: Vec3,
}

impl RelativeState {
    /// `X_B⁻¹X_T` read as a 5×5 matrix.
    pub fn to_embedding(&self) -> Mat5 {
        ExtendedPose::new(self.r.transpose(), -self.nu, -self.xi).to_matrix()
    }

    /// `R_z = Z R`.
    pub fn rz(&self, z: &AuxiliaryZ) -> RotationMatrix {
        z.0 * self.r
    }
}

pub fn pose_of(s: &RigidBodyState) -> ExtendedPose {
    ExtendedPose::new(s.q, s.v, s.p)
}

pub fn compose_relative(xb: &ExtendedPose, xt: &ExtendedPose) -> RelativeState {
    let qbt = xb.rot.transpose();
    RelativeState {
        r: xt.rot.transpose() * xb.rot,
        xi: -(qbt * (xt.p - xb.p)),
        nu: -(qbt * (xt.v - xb.v)),
    }
}

pub fn relative_of(body: &RigidBodyState, target: &RigidBodyState) -> RelativeState {
    compose_relative(&pose_of(body), &pose_of(target))
}

/// `ξ̇ = −Ω×ξ + ν`, `ν̇ = −Ω×ν + a_B − Rᵀa_T`, `Ṙ = −ω_T×R + RΩ×`.
pub fn relative_dynamics(s: &RelativeState, ub: &ImuSample, ut: &ImuSample) -> RelativeDerivative {
    let om = hat(&ub.w);
    let r = s.r.matrix();
    RelativeDerivative {
        r_dot: -hat(&ut.w) * r + r * om,
        xi_dot: -om * s.xi + s.nu,
        nu_dot: -om * s.nu + ub.a - r.transpose() * ut.a,
    }
}

/// One step of the relative dynamics from mid-step readings.
///
/// The attitude uses the exact split exponential and `(ξ, ν)` the explicit
/// midpoint rule.
pub fn integrate_relative(s: &RelativeState, ub: &ImuSample, ut: &ImuSample, dt: f64) -> RelativeState {
    let half = 0.5 * dt;
    let r_mid = exp_so3(&(-ut.w * half)) * s.r * exp_so3(&(ub.w * half));
    let k1 = relative_dynamics(s, ub, ut);
    let s_half = RelativeState {
        r: r_mid,
        xi: s.xi + k1.xi_dot * half,
        nu: s.nu + k1.nu_dot * half,
    };
    let k2 = relative_dynamics(&s_half, ub, ut);
    RelativeState {
        r: exp_so3(&(-ut.w * dt)) * s.r * exp_so3(&(ub.w * dt)),
        xi: s.xi + k2.xi_dot * dt,
        nu: s.nu + k2.nu_dot * dt,
    }
}

/// Auxiliary attitude with the target's rotational dynamics, `Ż = Z ω_T×`, `Z(0) = I`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AuxiliaryZ(pub RotationMatrix);

impl AuxiliaryZ {
    pub fn identity() -> Self {
        Self(RotationMatrix::identity())
    }

    pub fn matrix(&self) -> &Mat3 {
        self.0.matrix()
    }
}

pub fn propagate_z(z: &AuxiliaryZ, w_t: &Vec3, dt: f64) -> AuxiliaryZ {
    debug_assert!(dt > 0.0);
    AuxiliaryZ(z.0 * exp_so3(&(w_t * dt)))
}

/// `aᶻ_T = Z a_T`.
pub fn transformed_inputs(z: &AuxiliaryZ, a_t: &Vec3) -> Vec3 {
    z.0 * *a_t
}

/// Matrices of the left-invariant SE₂(3) kinematics `Ẋ = XU + GX + NX − XN`.
pub mod se23 {
    use super::*;

    /// `U = [[ω×, a, 0], [0, 0]]`.
    pub fn u_matrix(w: &Vec3, a: &Vec3) -> Mat5 {
        let mut m = Mat5::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(w));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(a);
        m
    }

    /// `G = [[0, g, 0], [0, 0]]` with `g` the gravity vector.
    pub fn g_matrix(gravity: &Vec3) -> Mat5 {
        let mut m = Mat5::zeros();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(gravity);
        m
    }

    /// Nilpotent coupling with `N₍₃,₄₎ = −1`.
    pub fn n_matrix() -> Mat5 {
        let mut m = Mat5::zeros();
        m[(3, 4)] = -1.0;
        m
    }
}
