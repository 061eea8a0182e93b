//! Deterministic Riccati observer in the ambient space ℝ¹⁵.
//!
//! The observer state is `(ξ̂, ν̂, γ_z)` where `γ_z ∈ ℝ⁹` estimates
//! `vec(R_zᵀ)` with `R_z = Z R`. Its error obeys the linear time-varying
//! system `ẋ = A(t)x − PCᵀDC x` with
//!
//! ```text
//! A(t) = Ā(t) ⊗ I₃ − I₅ ⊗ Ω×,   Ā = [[0, 1, 0], [0, 0, −aᶻ_Tᵀ], [0, 0, 0₃]]
//! ```
//!
//! and `C = [1, 0₁ₓ₄] ⊗ I₃` (position output) or `[1, 0₁ₓ₄] ⊗ π_y` (bearing
//! output). State and Riccati matrix are integrated jointly with classical
//! RK4 at the IMU rate.

use nalgebra::{Cholesky, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{hat, projector, unvec9, vec3x3, Mat15, Mat3, Mat3x15, Vec15, Vec3, Vec9};
use crate::relative::{propagate_z, transformed_inputs, AuxiliaryZ, RelativeState};
use crate::world::{ImuSample, MeasurementKind, MeasurementSample};

/// Output mode of the observer.
pub type OutputMode = MeasurementKind;

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverConfig {
    pub p0: Mat15,
    pub v: Mat15,
    pub d: Mat3,
    pub mode: OutputMode,
    pub dt: f64,
}

impl ObserverConfig {
    /// Isotropic gains `P₀ = p0·I`, `V = v·I`, `D = d·I`.
    pub fn isotropic(mode: OutputMode, p0: f64, v: f64, d: f64, dt: f64) -> Self {
        Self {
            p0: Mat15::identity() * p0,
            v: Mat15::identity() * v,
            d: Mat3::identity() * d,
            mode,
            dt,
        }
    }

    /// Ship-landing tuning: `P₀ = 3I`, `V = 0.001I`, `D = 20I`, `dt = 1e-3`.
    pub fn ship_landing(mode: OutputMode) -> Self {
        Self::isotropic(mode, 3.0, 1e-3, 20.0, 1e-3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config("observer dt must be positive".into()));
        }
        if !is_positive_definite(&self.p0) {
            return Err(Error::Config("P0 must be symmetric positive definite".into()));
        }
        if !is_positive_definite(&self.v) {
            return Err(Error::Config("V must be symmetric positive definite".into()));
        }
        if !is_positive_definite(&self.d) {
            return Err(Error::Config("D must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

fn is_positive_definite<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    crate::lie::asymmetry(m) <= crate::tolerances::SYMMETRY && Cholesky::new(*m).is_some()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObserverState {
    pub t: f64,
    pub xi_hat: Vec3,
    pub nu_hat: Vec3,
    pub gamma_z: Vec9,
    pub p: Mat15,
    pub z: AuxiliaryZ,
}

impl ObserverState {
    pub fn new(xi_hat: Vec3, nu_hat: Vec3, gamma_z: Vec9, p0: Mat15) -> Self {
        Self {
            t: 0.0,
            xi_hat,
            nu_hat,
            gamma_z,
            p: p0,
            z: AuxiliaryZ::identity(),
        }
    }

    /// Ship-landing initial estimates with `γ_z(0) = vec(I₃)`.
    pub fn ship_landing(cfg: &ObserverConfig) -> Self {
        Self::new(
            Vec3::new(1.0, -0.5, 0.8),
            Vec3::new(-0.5, 0.8, -0.3),
            vec3x3(&Mat3::identity()),
            cfg.p0,
        )
    }

    pub fn stacked(&self) -> Vec15 {
        let mut x = Vec15::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.xi_hat);
        x.fixed_rows_mut::<3>(3).copy_from(&self.nu_hat);
        x.fixed_rows_mut::<9>(6).copy_from(&self.gamma_z);
        x
    }

    fn unstack(&mut self, x: &Vec15) {
        self.xi_hat = x.fixed_rows::<3>(0).into_owned();
        self.nu_hat = x.fixed_rows::<3>(3).into_owned();
        self.gamma_z = x.fixed_rows::<9>(6).into_owned();
    }

    /// `Γ_z = unvec(γ_z)`, the estimate of `R_zᵀ`.
    pub fn gamma_z_matrix(&self) -> Mat3 {
        unvec9(&self.gamma_z)
    }
}

/// `Γ = Γ_z Z`, the (not necessarily orthogonal) estimate of `Rᵀ`.
pub fn gamma_to_gamma(state: &ObserverState) -> Mat3 {
    state.gamma_z_matrix() * state.z.matrix()
}

/// Error `(ξ − ξ̂, ν − ν̂, vec(R_zᵀ) − γ_z)` against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorVector(pub Vec15);

impl ErrorVector {
    pub fn new(state: &ObserverState, truth: &RelativeState) -> Self {
        let rz = truth.rz(&state.z);
        let mut x = Vec15::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&(truth.xi - state.xi_hat));
        x.fixed_rows_mut::<3>(3).copy_from(&(truth.nu - state.nu_hat));
        x.fixed_rows_mut::<9>(6)
            .copy_from(&(vec3x3(&rz.matrix().transpose()) - state.gamma_z));
        Self(x)
    }

    pub fn xi(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn nu(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn gamma(&self) -> Vec9 {
        self.0.fixed_rows::<9>(6).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// `A = Ā ⊗ I₃ − I₅ ⊗ Ω×`.
pub fn build_a(omega: &Vec3, a_tz: &Vec3) -> Mat15 {
    let mut a = Mat15::zeros();
    let om = hat(omega);
    for b in 0..5 {
        a.fixed_view_mut::<3, 3>(3 * b, 3 * b).copy_from(&(-om));
    }
    for i in 0..3 {
        a[(i, 3 + i)] += 1.0;
    }
    for j in 0..3 {
        for i in 0..3 {
            a[(3 + i, 6 + 3 * j + i)] = -a_tz[j];
        }
    }
    a
}

/// Output matrix `[1, 0₁ₓ₄] ⊗ I₃` or `[1, 0₁ₓ₄] ⊗ π_y`.
pub fn build_c(mode: OutputMode, bearing: Option<&Vec3>) -> Result<Mat3x15> {
    let block = match mode {
        OutputMode::Position => Mat3::identity(),
        OutputMode::Bearing => {
            let y = bearing.ok_or(Error::NonUnitBearing(0.0))?;
            projector(y).map_err(|_| Error::NonUnitBearing(y.norm()))?
        }
    };
    let mut c = Mat3x15::zeros();
    c.fixed_view_mut::<3, 3>(0, 0).copy_from(&block);
    Ok(c)
}

/// Output residual: `ξ_meas − ξ̂` for positions, `−π_y ξ̂` for bearings.
fn residual(xi_hat: &Vec3, c: &Mat3x15, m: &MeasurementSample) -> Vec3 {
    match m.kind {
        OutputMode::Position => m.value - xi_hat,
        OutputMode::Bearing => -(c.fixed_view::<3, 3>(0, 0) * xi_hat),
    }
}

/// Innovation `u = P Cᵀ D y`, stacked as `(σ_ξ, σ_ν, σ_γ)`.
pub fn innovation(state: &ObserverState, c: &Mat3x15, d: &Mat3, m: &MeasurementSample) -> Vec15 {
    let y = residual(&state.xi_hat, c, m);
    state.p * c.transpose() * (d * y)
}

/// `AP + PAᵀ − PCᵀDCP + V`.
pub fn riccati_rhs(p: &Mat15, a: &Mat15, c: &Mat3x15, d: &Mat3, v: &Mat15) -> Mat15 {
    let ap = a * p;
    let pct = p * c.transpose();
    ap + ap.transpose() - pct * d * pct.transpose() + v
}

fn checked_symmetric(p: Mat15, step: usize) -> Result<Mat15> {
    let p = crate::lie::symmetrize(&p);
    if p.iter().all(|x| x.is_finite()) && Cholesky::new(p).is_some() {
        Ok(p)
    } else {
        Err(Error::NonPositiveP { step })
    }
}

/// One RK4 step of the Riccati equation with constant `A`, `C`.
pub fn riccati_step(p: &Mat15, a: &Mat15, c: &Mat3x15, d: &Mat3, v: &Mat15, dt: f64) -> Result<Mat15> {
    let f = |p: &Mat15| riccati_rhs(p, a, c, d, v);
    let k1 = f(p);
    let k2 = f(&(p + k1 * (0.5 * dt)));
    let k3 = f(&(p + k2 * (0.5 * dt)));
    let k4 = f(&(p + k3 * dt));
    checked_symmetric(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), 0)
}

/// Sensor data at one RK4 node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputNode {
    pub body: ImuSample,
    pub target: ImuSample,
    /// `None` between measurements: the innovation is held at zero.
    pub measurement: Option<MeasurementSample>,
}

/// Sensor data at the start, middle and end of one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInputs {
    pub start: InputNode,
    pub mid: InputNode,
    pub end: InputNode,
}

impl StepInputs {
    /// Builds the midpoint by linear interpolation between two recorded nodes.
    /// Bearings are renormalized after interpolation.
    pub fn interpolated(start: InputNode, end: InputNode) -> Self {
        let lerp_imu = |a: &ImuSample, b: &ImuSample| ImuSample {
            a: (a.a + b.a) * 0.5,
            w: (a.w + b.w) * 0.5,
            t: 0.5 * (a.t + b.t),
        };
        let measurement = match (start.measurement, end.measurement) {
            (Some(a), Some(b)) => {
                let mut value = (a.value + b.value) * 0.5;
                if a.kind == OutputMode::Bearing {
                    value /= value.norm();
                }
                Some(MeasurementSample {
                    t: 0.5 * (a.t + b.t),
                    kind: a.kind,
                    value,
                })
            }
            _ => None,
        };
        let mid = InputNode {
            body: lerp_imu(&start.body, &end.body),
            target: lerp_imu(&start.target, &end.target),
            measurement,
        };
        Self { start, mid, end }
    }

    /// Withholds the measurement at every node of this step.
    pub fn without_measurement(mut self) -> Self {
        self.start.measurement = None;
        self.mid.measurement = None;
        self.end.measurement = None;
        self
    }
}

/// Time derivative of the stacked estimate and of `P` at one node.
fn observer_rhs(
    x: &Vec15,
    p: &Mat15,
    node: &InputNode,
    z: &AuxiliaryZ,
    cfg: &ObserverConfig,
) -> Result<(Vec15, Mat15)> {
    let a_tz = transformed_inputs(z, &node.target.a);
    let a = build_a(&node.body.w, &a_tz);
    // x̂̇ = A x̂ + [0; a_B; 0] + u
    let mut xdot = a * x;
    for i in 0..3 {
        xdot[3 + i] += node.body.a[i];
    }
    let pdot = match &node.measurement {
        Some(m) => {
            let c = build_c(cfg.mode, Some(&m.value))?;
            let xi_hat = x.fixed_rows::<3>(0).into_owned();
            let y = residual(&xi_hat, &c, m);
            xdot += p * c.transpose() * (cfg.d * y);
            riccati_rhs(p, &a, &c, &cfg.d, &cfg.v)
        }
        None => {
            let ap = a * p;
            ap + ap.transpose() + cfg.v
        }
    };
    Ok((xdot, pdot))
}

/// Advances the observer by `cfg.dt`.
///
/// `Z` is propagated with the mid-step target rate; `aᶻ_T = Z a_T` is formed
/// at each RK4 node. `step` is reported in [`Error::NonPositiveP`].
pub fn observer_step(
    state: &ObserverState,
    inputs: &StepInputs,
    cfg: &ObserverConfig,
    step: usize,
) -> Result<ObserverState> {
    let dt = cfg.dt;
    let w_t = inputs.mid.target.w;
    let z0 = state.z;
    let z_mid = propagate_z(&z0, &w_t, 0.5 * dt);
    let z1 = propagate_z(&z0, &w_t, dt);

    let x0 = state.stacked();
    let p0 = state.p;
    let (k1x, k1p) = observer_rhs(&x0, &p0, &inputs.start, &z0, cfg)?;
    let (k2x, k2p) = observer_rhs(
        &(x0 + k1x * (0.5 * dt)),
        &(p0 + k1p * (0.5 * dt)),
        &inputs.mid,
        &z_mid,
        cfg,
    )?;
    let (k3x, k3p) = observer_rhs(
        &(x0 + k2x * (0.5 * dt)),
        &(p0 + k2p * (0.5 * dt)),
        &inputs.mid,
        &z_mid,
        cfg,
    )?;
    let (k4x, k4p) = observer_rhs(&(x0 + k3x * dt), &(p0 + k3p * dt), &inputs.end, &z1, cfg)?;

    let x = x0 + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
    let p = checked_symmetric(p0 + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (dt / 6.0), step)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonPositiveP { step });
    }
    let mut next = ObserverState {
        t: state.t + dt,
        p,
        z: z1,
        ..state.clone()
    };
    next.unstack(&x);
    Ok(next)
}

/// Serializable isotropic tuning, as stored in run configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverTuning {
    pub p0: f64,
    pub v: f64,
    pub d: f64,
    pub xi_hat0: [f64; 3],
    pub nu_hat0: [f64; 3],
    /// Initial `Γ_z`, row-major.
    pub gamma_z0: [f64; 9],
    /// Use every `n`-th step's measurement; zero innovation in between.
    pub measurement_decimation: usize,
}

impl Default for ObserverTuning {
    fn default() -> Self {
        Self {
            p0: 3.0,
            v: 1e-3,
            d: 20.0,
            xi_hat0: [1.0, -0.5, 0.8],
            nu_hat0: [-0.5, 0.8, -0.3],
            gamma_z0: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            measurement_decimation: 1,
        }
    }
}

impl ObserverTuning {
    pub fn config(&self, mode: OutputMode, dt: f64) -> ObserverConfig {
        ObserverConfig::isotropic(mode, self.p0, self.v, self.d, dt)
    }

    pub fn initial_state(&self, cfg: &ObserverConfig) -> ObserverState {
        let g = Mat3::from_row_slice(&self.gamma_z0);
        ObserverState::new(Vec3::from(self.xi_hat0), Vec3::from(self.nu_hat0), vec3x3(&g), cfg.p0)
    }
}
