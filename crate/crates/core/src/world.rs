//! Ground-truth rigid-body kinematics, synthetic IMU readings and the
//! ship-landing scenario.
//!
//! Both bodies follow `ṗ = v`, `v̇ = Q a + g e₃`, `Q̇ = Q hat(ω)` where `a` is
//! the specific acceleration and `ω` the angular velocity read by the body's
//! IMU. The target orbits a circle while oscillating vertically; the body
//! hovers at a fixed point.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{exp_so3, RotationMatrix, Vec3};
use crate::tolerances as tol;

pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidBodyState {
    pub p: Vec3,
    pub v: Vec3,
    /// Body-to-inertial attitude.
    pub q: RotationMatrix,
}

/// One IMU reading: specific acceleration and angular velocity, both in the
/// sensor's own frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ImuSample {
    pub a: Vec3,
    pub w: Vec3,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    Position,
    Bearing,
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasurementKind::Position => f.write_str("position"),
            MeasurementKind::Bearing => f.write_str("bearing"),
        }
    }
}

impl FromStr for MeasurementKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "position" => Ok(MeasurementKind::Position),
            "bearing" => Ok(MeasurementKind::Bearing),
            other => Err(Error::Config(format!("unknown output mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSample {
    pub t: f64,
    pub kind: MeasurementKind,
    /// Relative position ξ (m) or unit bearing ξ/|ξ|.
    pub value: Vec3,
}

/// A stretch of the target trajectory with constant orbital and heave rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub t_start: f64,
    pub omega_orb: f64,
    pub omega_z: f64,
}

/// Ship-landing scenario: a target orbiting a circle while heaving, observed
/// from a hovering body.
///
/// The target phase angles `θ_orb = ∫ω_orb`, `θ_z = ∫ω_z` are accumulated
/// across the phase schedule, so a pause (zero rates) freezes the orbit and
/// the motion resumes tangentially with a continuous velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShipScenario {
    /// Orbit radius (m).
    pub radius: f64,
    /// Heave acceleration amplitude divided by `ω_z²` (m).
    pub z_amp: f64,
    /// Initial heave velocity divided by `ω_z` (m).
    pub z_vel_amp: f64,
    /// Body hover altitude (m).
    pub body_altitude: f64,
    pub g: f64,
    /// Rotation vector of a constant left translation applied to the whole
    /// inertial frame (positions, attitudes and gravity). IMU readings do not
    /// depend on it.
    pub frame_rotation: [f64; 3],
    pub phases: Vec<Phase>,
}

impl Default for ShipScenario {
    fn default() -> Self {
        Self {
            radius: 5.0,
            z_amp: 2.0,
            z_vel_amp: 0.5,
            body_altitude: 20.0,
            g: DEFAULT_GRAVITY,
            frame_rotation: [0.0; 3],
            phases: vec![Phase {
                t_start: 0.0,
                omega_orb: 0.4,
                omega_z: 2.0,
            }],
        }
    }
}

/// Accumulated phase state at a given instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub index: usize,
    pub theta_orb: f64,
    pub theta_z: f64,
    pub omega_orb: f64,
    pub omega_z: f64,
}

impl ShipScenario {
    /// Three-phase schedule: excited, paused on `[pause_start, pause_end)`, excited again.
    pub fn three_phase(pause_start: f64, pause_end: f64) -> Self {
        let excited = |t_start| Phase {
            t_start,
            omega_orb: 0.4,
            omega_z: 2.0,
        };
        Self {
            phases: vec![
                excited(0.0),
                Phase {
                    t_start: pause_start,
                    omega_orb: 0.0,
                    omega_z: 0.0,
                },
                excited(pause_end),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .phases
            .first()
            .ok_or_else(|| Error::Config("scenario needs at least one phase".into()))?;
        if first.t_start != 0.0 {
            return Err(Error::Config("first phase must start at t = 0".into()));
        }
        for w in self.phases.windows(2) {
            if w[1].t_start <= w[0].t_start {
                return Err(Error::Config("phase boundaries must be strictly increasing".into()));
            }
        }
        let finite = self
            .phases
            .iter()
            .all(|p| p.t_start.is_finite() && p.omega_orb.is_finite() && p.omega_z.is_finite());
        if !finite || !self.g.is_finite() || !self.radius.is_finite() {
            return Err(Error::Config("scenario parameters must be finite".into()));
        }
        Ok(())
    }

    /// Constant rotation applied to the inertial frame.
    pub fn frame(&self) -> RotationMatrix {
        exp_so3(&Vec3::from(self.frame_rotation))
    }

    /// Gravity vector `g e₃` expressed in the (possibly rotated) inertial frame.
    pub fn gravity(&self) -> Vec3 {
        self.frame() * Vec3::new(0.0, 0.0, self.g)
    }

    /// Index of the phase active at `t`.
    pub fn phase_index(&self, t: f64) -> usize {
        self.phases.iter().rposition(|p| p.t_start <= t).unwrap_or(0)
    }

    /// Phase boundaries `[t_start₁, t_start₂, …]` excluding the initial zero.
    pub fn boundaries(&self) -> Vec<f64> {
        self.phases.iter().skip(1).map(|p| p.t_start).collect()
    }

    pub fn phase_state(&self, t: f64) -> PhaseState {
        self.phase_state_in(t, self.phase_index(t))
    }

    /// Phase state at `t` with phase `index` active, which for the phase
    /// preceding a boundary gives the left-hand limit at that boundary.
    pub fn phase_state_in(&self, t: f64, index: usize) -> PhaseState {
        let mut theta_orb = 0.0;
        let mut theta_z = 0.0;
        for (i, p) in self.phases.iter().enumerate().take(index + 1) {
            let end = if i == index { t } else { self.phases[i + 1].t_start };
            let span = end - p.t_start;
            theta_orb += p.omega_orb * span;
            theta_z += p.omega_z * span;
        }
        let p = self.phases[index];
        PhaseState {
            index,
            theta_orb,
            theta_z,
            omega_orb: p.omega_orb,
            omega_z: p.omega_z,
        }
    }

    /// Inertial specific acceleration `Q_T a_T` of the target, before any frame rotation.
    fn target_specific_accel_local(&self, ps: &PhaseState) -> Vec3 {
        let r = self.radius * ps.omega_orb * ps.omega_orb;
        Vec3::new(
            -r * ps.theta_orb.cos(),
            -r * ps.theta_orb.sin(),
            -self.z_amp * ps.omega_z * ps.omega_z * ps.theta_z.sin() - self.g,
        )
    }

    /// True target attitude `Q_T(t)`.
    pub fn target_attitude(&self, t: f64) -> RotationMatrix {
        self.frame() * RotationMatrix::about_z(self.phase_state(t).theta_orb)
    }

    pub fn initial_target(&self) -> RigidBodyState {
        let f = self.frame();
        let p0 = self.phases[0];
        RigidBodyState {
            p: f * Vec3::new(self.radius, 0.0, 0.0),
            v: f * Vec3::new(0.0, self.radius * p0.omega_orb, self.z_vel_amp * p0.omega_z),
            q: f,
        }
    }

    pub fn initial_body(&self) -> RigidBodyState {
        let f = self.frame();
        RigidBodyState {
            p: f * Vec3::new(0.0, 0.0, self.body_altitude),
            v: Vec3::zeros(),
            q: f,
        }
    }

    /// Index of the phase that ends at a boundary within `tol` of `t`, if any.
    pub fn phase_ending_at(&self, t: f64, tol: f64) -> Option<usize> {
        self.phases.iter().skip(1).position(|p| (p.t_start - t).abs() <= tol)
    }
}

/// Target IMU reading at `t`.
pub fn ship_target_inputs(cfg: &ShipScenario, t: f64) -> ImuSample {
    ship_target_inputs_in(cfg, t, cfg.phase_index(t))
}

/// Target IMU reading at `t` with phase `index` active.
pub fn ship_target_inputs_in(cfg: &ShipScenario, t: f64, index: usize) -> ImuSample {
    let ps = cfg.phase_state_in(t, index);
    let local = RotationMatrix::about_z(ps.theta_orb);
    ImuSample {
        a: local.transpose() * cfg.target_specific_accel_local(&ps),
        w: Vec3::new(0.0, 0.0, ps.omega_orb),
        t,
    }
}

/// Body IMU reading at `t`: a motionless hover.
pub fn hover_body_inputs(cfg: &ShipScenario, t: f64) -> ImuSample {
    ImuSample {
        a: Vec3::new(0.0, 0.0, -cfg.g),
        w: Vec3::zeros(),
        t,
    }
}

/// One step of the rigid-body kinematics with gravity `g e₃`.
///
/// `u` is the reading at the middle of the step: the attitude advances by the
/// exact exponential, velocity by the midpoint rule and position by the
/// trapezoid rule on velocity.
pub fn integrate_rigid_body(s: &RigidBodyState, u: &ImuSample, g: f64, dt: f64) -> RigidBodyState {
    integrate_rigid_body_in(s, u, &Vec3::new(0.0, 0.0, g), dt)
}

/// [`integrate_rigid_body`] with an arbitrary gravity vector.
pub fn integrate_rigid_body_in(s: &RigidBodyState, u: &ImuSample, gravity: &Vec3, dt: f64) -> RigidBodyState {
    debug_assert!(dt > 0.0);
    let q_mid = s.q * exp_so3(&(u.w * (0.5 * dt)));
    let v = s.v + (q_mid * u.a + gravity) * dt;
    RigidBodyState {
        p: s.p + (s.v + v) * (0.5 * dt),
        v,
        q: s.q * exp_so3(&(u.w * dt)),
    }
}

/// Relative position `ξ = −Q_Bᵀ(p_T − p_B)` of the target origin in the body frame.
pub fn relative_position(body: &RigidBodyState, target: &RigidBodyState) -> Vec3 {
    -(body.q.transpose() * (target.p - body.p))
}

/// Position or bearing measurement with optional isotropic Gaussian noise.
///
/// Noise is drawn only when `noise_std > 0`, so noise-free runs never touch
/// the generator.
pub fn synthesize_measurement<R: Rng + ?Sized>(
    body: &RigidBodyState,
    target: &RigidBodyState,
    t: f64,
    kind: MeasurementKind,
    noise_std: f64,
    rng: &mut R,
) -> Result<MeasurementSample> {
    let xi = relative_position(body, target);
    let mut noisy = |v: Vec3| {
        if noise_std > 0.0 {
            let n: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
            v + Vec3::from(n) * noise_std
        } else {
            v
        }
    };
    let value = match kind {
        MeasurementKind::Position => noisy(xi),
        MeasurementKind::Bearing => {
            let range = xi.norm();
            if range <= tol::MIN_RANGE {
                return Err(Error::DegenerateRange(range));
            }
            let b = noisy(xi / range);
            b / b.norm()
        }
    };
    Ok(MeasurementSample { t, kind, value })
}

/// Ground truth of both bodies advanced on a fixed step.
#[derive(Clone, Debug)]
pub struct ScenarioTruth {
    pub t: f64,
    pub body: RigidBodyState,
    pub target: RigidBodyState,
}

impl ScenarioTruth {
    pub fn new(cfg: &ShipScenario) -> Self {
        Self {
            t: 0.0,
            body: cfg.initial_body(),
            target: cfg.initial_target(),
        }
    }

    pub fn advance(&mut self, cfg: &ShipScenario, dt: f64) {
        let mid = self.t + 0.5 * dt;
        let gravity = cfg.gravity();
        self.body = integrate_rigid_body_in(&self.body, &hover_body_inputs(cfg, mid), &gravity, dt);
        self.target = integrate_rigid_body_in(&self.target, &ship_target_inputs(cfg, mid), &gravity, dt);
        self.t += dt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn left_limit_at_phase_switch() {
        let cfg = ShipScenario::three_phase(3.927, 23.927);
        assert_eq!(cfg.phase_ending_at(3.927, 1e-9), Some(0));
        assert_eq!(cfg.phase_ending_at(23.927, 1e-9), Some(1));
        assert_eq!(cfg.phase_ending_at(3.9, 1e-9), None);
        let left = ship_target_inputs_in(&cfg, 3.927, 0).a;
        let below = ship_target_inputs(&cfg, 3.927 - 1e-9).a;
        let right = ship_target_inputs(&cfg, 3.927).a;
        assert!((left - below).norm() < 1e-6);
        assert!((left - right).norm() > 1.0);
    }

    /// Closed-form target trajectory for a single excited phase.
    fn closed_form_target(cfg: &ShipScenario, t: f64) -> (Vec3, Vec3) {
        let p = cfg.phases[0];
        let (wo, wz, r) = (p.omega_orb, p.omega_z, cfg.radius);
        let vz0 = cfg.z_vel_amp * wz;
        // ∫ −A ω² sin(ωs) ds = A ω (cos ωt − 1)
        let vz = vz0 + cfg.z_amp * wz * ((wz * t).cos() - 1.0);
        let pz = vz0 * t + cfg.z_amp * ((wz * t).sin() - wz * t);
        (
            Vec3::new(r * (wo * t).cos(), r * (wo * t).sin(), pz),
            Vec3::new(-r * wo * (wo * t).sin(), r * wo * (wo * t).cos(), vz),
        )
    }

    fn integrate_target(cfg: &ShipScenario, t_end: f64, dt: f64) -> RigidBodyState {
        let mut truth = ScenarioTruth::new(cfg);
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            truth.advance(cfg, dt);
        }
        truth.target
    }

    #[test]
    fn hover_is_stationary() {
        let s = RigidBodyState::default();
        let u = ImuSample {
            a: Vec3::new(0.0, 0.0, -9.81),
            ..Default::default()
        };
        for dt in [1e-3, 0.1, 2.0] {
            assert_eq!(integrate_rigid_body(&s, &u, 9.81, dt), s);
        }
    }

    #[test]
    fn constant_velocity_step() {
        let s = RigidBodyState {
            v: Vec3::x(),
            ..Default::default()
        };
        let u = ImuSample {
            a: -(s.q.transpose() * Vec3::new(0.0, 0.0, 9.81)),
            ..Default::default()
        };
        let next = integrate_rigid_body(&s, &u, 9.81, 1.0);
        assert!((next.p - Vec3::x()).norm() < 1e-15);
        assert!((next.v - Vec3::x()).norm() < 1e-15);
    }

    #[test]
    fn orbit_returns_to_start_with_consistent_heave() {
        // Heave velocity amplitude consistent with the acceleration amplitude:
        // the vertical motion is a pure sinusoid and one orbit closes.
        let cfg = ShipScenario {
            z_vel_amp: 2.0,
            ..ShipScenario::default()
        };
        let period = 2.0 * PI / 0.4;
        let dt = 1e-3;
        let n = (period / dt).round() as usize;
        let mut truth = ScenarioTruth::new(&cfg);
        for _ in 0..n - 1 {
            truth.advance(&cfg, dt);
        }
        let last = period - truth.t;
        truth.advance(&cfg, last);
        assert!((truth.target.p - Vec3::new(5.0, 0.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn integration_matches_closed_form() {
        for cfg in [
            ShipScenario::default(),
            ShipScenario {
                z_vel_amp: 2.0,
                ..ShipScenario::default()
            },
        ] {
            let t_end = 10.0;
            let target = integrate_target(&cfg, t_end, 1e-3);
            let (p, v) = closed_form_target(&cfg, t_end);
            assert!((target.p - p).norm() < 1e-5, "{}", (target.p - p).norm());
            assert!((target.v - v).norm() < 1e-5);
        }
    }

    #[test]
    fn target_inputs_at_zero() {
        let cfg = ShipScenario::default();
        let u = ship_target_inputs(&cfg, 0.0);
        let q = cfg.target_attitude(0.0);
        let inertial = q * u.a + Vec3::new(0.0, 0.0, cfg.g);
        assert!((inertial - Vec3::new(-0.8, 0.0, 0.0)).norm() < 1e-12);
        assert_eq!(u.w, Vec3::new(0.0, 0.0, 0.4));
        let v0 = cfg.initial_target().v;
        assert!((v0 - Vec3::new(0.0, 2.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn paused_phase_is_free_fall_compensated() {
        let cfg = ShipScenario {
            phases: vec![Phase {
                t_start: 0.0,
                omega_orb: 0.0,
                omega_z: 0.0,
            }],
            ..ShipScenario::default()
        };
        let u = ship_target_inputs(&cfg, 3.0);
        assert_eq!(u.w, Vec3::zeros());
        assert!((u.a - Vec3::new(0.0, 0.0, -cfg.g)).norm() < 1e-15);
    }

    #[test]
    fn body_inputs() {
        let cfg = ShipScenario::default();
        for t in [0.0, 1.0, 17.3] {
            let u = hover_body_inputs(&cfg, t);
            assert_eq!(u.w, Vec3::zeros());
            assert_eq!(u.a, Vec3::new(0.0, 0.0, -cfg.g));
        }
        let mut truth = ScenarioTruth::new(&cfg);
        for _ in 0..10_000 {
            truth.advance(&cfg, 1e-3);
        }
        assert!((truth.body.p - Vec3::new(0.0, 0.0, 20.0)).norm() < 1e-9);
    }

    #[test]
    fn velocity_continuous_across_pause() {
        let cfg = ShipScenario::three_phase(3.927, 23.927);
        let dt = 1e-3;
        let mut truth = ScenarioTruth::new(&cfg);
        let mut prev_v = truth.target.v;
        let mut max_jump: f64 = 0.0;
        for _ in 0..30_000 {
            truth.advance(&cfg, dt);
            max_jump = max_jump.max((truth.target.v - prev_v).norm());
            prev_v = truth.target.v;
        }
        // |v̇| ≤ 0.8 + 8 for this scenario
        assert!(max_jump <= 8.8 * dt + 1e-9);
        // paused orbit angle is frozen
        let a = cfg.phase_state(10.0);
        let b = cfg.phase_state(20.0);
        assert_eq!(a.theta_orb, b.theta_orb);
        assert_eq!(a.index, 1);
    }

    #[test]
    fn finite_differences_match_kinematics() {
        let cfg = ShipScenario::default();
        let dt = 1e-3;
        let mut truth = ScenarioTruth::new(&cfg);
        let mut states = vec![(truth.t, truth.target)];
        for _ in 0..2000 {
            truth.advance(&cfg, dt);
            states.push((truth.t, truth.target));
        }
        for k in 1..states.len() - 1 {
            let (t, s) = states[k];
            let dp = (states[k + 1].1.p - states[k - 1].1.p) / (2.0 * dt);
            assert!((dp - s.v).norm() < 1e-5);
            let dv = (states[k + 1].1.v - states[k - 1].1.v) / (2.0 * dt);
            let u = ship_target_inputs(&cfg, t);
            let acc = s.q * u.a + cfg.gravity();
            assert!((dv - acc).norm() < 1e-3);
        }
    }

    #[test]
    fn measurements() {
        let cfg = ShipScenario::default();
        let (b, t) = (cfg.initial_body(), cfg.initial_target());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = synthesize_measurement(&b, &t, 0.0, MeasurementKind::Position, 0.0, &mut rng).unwrap();
        assert!((m.value - Vec3::new(-5.0, 0.0, 20.0)).norm() < 1e-15);
        let m = synthesize_measurement(&b, &t, 0.0, MeasurementKind::Bearing, 0.0, &mut rng).unwrap();
        let expected = Vec3::new(-5.0, 0.0, 20.0) / 425f64.sqrt();
        assert!((m.value - expected).norm() < 1e-15);

        let same = RigidBodyState::default();
        let m = synthesize_measurement(&same, &same, 0.0, MeasurementKind::Position, 0.0, &mut rng).unwrap();
        assert_eq!(m.value, Vec3::zeros());
        assert!(matches!(
            synthesize_measurement(&same, &same, 0.0, MeasurementKind::Bearing, 0.0, &mut rng),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn noisy_measurements_are_seeded() {
        let cfg = ShipScenario::default();
        let (b, t) = (cfg.initial_body(), cfg.initial_target());
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5)
                .map(|_| {
                    synthesize_measurement(&b, &t, 0.0, MeasurementKind::Bearing, 0.01, &mut rng)
                        .unwrap()
                        .value
                })
                .collect::<Vec<_>>()
        };
        let (a, b2) = (draw(3), draw(3));
        assert_eq!(a, b2);
        assert!(a.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn frame_rotation_leaves_imu_unchanged() {
        let cfg = ShipScenario::default();
        let rotated = ShipScenario {
            frame_rotation: [0.3, -1.1, 0.7],
            ..ShipScenario::default()
        };
        for t in [0.0, 2.5, 9.0] {
            assert_eq!(ship_target_inputs(&cfg, t), ship_target_inputs(&rotated, t));
        }
        let (a, b) = (ScenarioTruth::new(&cfg), ScenarioTruth::new(&rotated));
        let xa = relative_position(&a.body, &a.target);
        let xb = relative_position(&b.body, &b.target);
        assert!((xa - xb).norm() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        let mut cfg = ShipScenario::three_phase(5.0, 2.0);
        assert!(cfg.validate().is_err());
        cfg.phases[0].t_start = 1.0;
        assert!(cfg.validate().is_err());
        assert!(ShipScenario::three_phase(3.927, 23.927).validate().is_ok());
    }
}
