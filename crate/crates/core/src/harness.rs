//! Scenario runner: ground truth, observer, complementary filter, telemetry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attitude::{filter_step, AttitudeEstimate};
use crate::error::{Error, Result};
use crate::lie::{exp_so3, Mat3, Vec3};
use crate::observability::{sweep_observability, SweepReport, SweepSettings, Trace};
use crate::parallel::Execution;
use crate::relative::{relative_of, transformed_inputs};
use crate::riccati::{gamma_to_gamma, observer_step, ErrorVector, InputNode, ObserverTuning, OutputMode, StepInputs};
use crate::world::{
    hover_body_inputs, ship_target_inputs, ship_target_inputs_in, synthesize_measurement, ScenarioTruth, ShipScenario,
};

/// Exact CSV column order of the per-step telemetry.
pub const CSV_HEADER: [&str; 11] = [
    "t",
    "xi_err_x",
    "xi_err_y",
    "xi_err_z",
    "nu_err_x",
    "nu_err_y",
    "nu_err_z",
    "gamma_err_norm",
    "att_err_rad",
    "gramian_lmin",
    "phase",
];

/// Slope magnitude of `log‖x̃‖` (1/s) below which a phase counts as a plateau.
pub const PLATEAU_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSettings {
    pub gains: [f64; 3],
    /// Rotation vector of the initial attitude estimate `R̂(0)`.
    pub r_hat0: [f64; 3],
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            gains: [1.0; 3],
            r_hat0: [0.0; 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: OutputMode,
    /// Simulated time span (s).
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Standard deviation of additive measurement noise (m, or unitless for bearings).
    pub noise_std: f64,
    /// Keep every `n`-th step in the telemetry.
    pub record_stride: usize,
    pub out_dir: Option<PathBuf>,
    pub scenario: ShipScenario,
    pub observer: ObserverTuning,
    pub filter: FilterSettings,
    pub sweep: SweepSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::ship_landing(OutputMode::Position)
    }
}

impl RunConfig {
    /// Three-phase ship-landing run; the pause interval depends on the output mode.
    pub fn ship_landing(mode: OutputMode) -> Self {
        let (pause_start, pause_end) = match mode {
            OutputMode::Position => (3.927, 23.927),
            OutputMode::Bearing => (19.635, 39.635),
        };
        Self {
            mode,
            duration: 60.0,
            dt: 1e-3,
            seed: 0,
            noise_std: 0.0,
            record_stride: 1,
            out_dir: None,
            scenario: ShipScenario::three_phase(pause_start, pause_end),
            observer: ObserverTuning::default(),
            filter: FilterSettings::default(),
            sweep: SweepSettings::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::Config("duration must be non-negative".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if self.record_stride == 0 || self.observer.measurement_decimation == 0 {
            return Err(Error::Config("strides must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        self.scenario.validate()?;
        if self.scenario.phases.iter().any(|p| p.t_start > self.duration) {
            return Err(Error::Config("phase boundaries must lie within [0, duration]".into()));
        }
        self.observer.config(self.mode, self.dt).validate()?;
        AttitudeEstimate::with_gains(Default::default(), self.filter.gains)?;
        self.sweep.validate()?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// One telemetry row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRecord {
    pub t: f64,
    pub xi_err: Vec3,
    pub nu_err: Vec3,
    pub gamma_err_norm: f64,
    pub att_err_rad: f64,
    pub gramian_lmin: Option<f64>,
    pub phase: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convergence {
    Converging,
    Plateau,
    Diverging,
}

impl Convergence {
    pub fn from_slope(slope: f64) -> Self {
        if slope < -PLATEAU_SLOPE {
            Convergence::Converging
        } else if slope > PLATEAU_SLOPE {
            Convergence::Diverging
        } else {
            Convergence::Plateau
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub error_start: f64,
    pub error_end: f64,
    pub gamma_error_start: f64,
    pub gamma_error_end: f64,
    /// Least-squares slope of `ln‖x̃‖` (1/s).
    pub slope_log_error: f64,
    /// Least-squares slope of `ln‖γ̃_z‖` (1/s).
    pub slope_log_gamma_error: f64,
    pub classification: Convergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: OutputMode,
    pub steps: usize,
    pub duration: f64,
    pub dt: f64,
    pub phase_boundaries: Vec<f64>,
    pub initial_error_norm: f64,
    pub final_error_norm: f64,
    pub final_attitude_error_rad: f64,
    pub phases: Vec<PhaseSummary>,
}

/// Observer and filter estimates at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    pub xi_hat: Vec3,
    pub nu_hat: Vec3,
    /// `Γ = Γ_z Z`, the unprojected estimate of `Rᵀ`.
    pub gamma: Mat3,
    pub r_hat: Mat3,
}

/// Everything produced by one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<RunRecord>,
    pub summary: RunSummary,
    /// `aᶻ_T` and inertial bearing `y₀ = Q_B y` on the step grid (including the final instant).
    pub a_tz: Trace<Vec3>,
    pub y0: Trace<Vec3>,
    pub sweep: Option<SweepReport>,
    /// `(t, ‖x̃‖, ‖γ̃_z‖)` at every step, including the final instant.
    pub error_history: Vec<(f64, f64, f64)>,
    /// Estimates at every step, including the final instant.
    pub estimates: Vec<EstimateSample>,
}

/// Least-squares slope of `y` against `t`.
pub fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let (st, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mt, my) = (st / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mt) * (p.1 - my), a.1 + (p.0 - mt) * (p.0 - mt))
    });
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn log_floor(x: f64) -> f64 {
    x.max(1e-300).ln()
}

fn summarize(cfg: &RunConfig, history: &[(f64, f64, f64)], final_att: f64) -> RunSummary {
    let steps = cfg.steps();
    let boundaries = cfg.scenario.boundaries();
    let mut phases = Vec::new();
    if steps > 0 {
        let starts: Vec<f64> = cfg.scenario.phases.iter().map(|p| p.t_start).collect();
        for (i, &t_start) in starts.iter().enumerate() {
            let t_end = starts.get(i + 1).copied().unwrap_or(cfg.duration).min(cfg.duration);
            let inside: Vec<&(f64, f64, f64)> = history
                .iter()
                .filter(|h| h.0 >= t_start - 1e-12 && h.0 <= t_end + 1e-12)
                .collect();
            let (Some(first), Some(last)) = (inside.first(), inside.last()) else {
                continue;
            };
            let err: Vec<(f64, f64)> = inside.iter().map(|h| (h.0, log_floor(h.1))).collect();
            let gam: Vec<(f64, f64)> = inside.iter().map(|h| (h.0, log_floor(h.2))).collect();
            let slope = fitted_slope(&err);
            phases.push(PhaseSummary {
                index: i,
                t_start,
                t_end,
                error_start: first.1,
                error_end: last.1,
                gamma_error_start: first.2,
                gamma_error_end: last.2,
                slope_log_error: slope,
                slope_log_gamma_error: fitted_slope(&gam),
                classification: Convergence::from_slope(slope),
            });
        }
    }
    RunSummary {
        mode: cfg.mode,
        steps,
        duration: cfg.duration,
        dt: cfg.dt,
        phase_boundaries: boundaries,
        initial_error_norm: history.first().map_or(0.0, |h| h.1),
        final_error_norm: history.last().map_or(0.0, |h| h.1),
        final_attitude_error_rad: final_att,
        phases,
    }
}

/// Runs the ship-landing scenario through the observer and the filter.
///
/// A numerical failure of the Riccati integration surfaces as
/// [`Error::NonPositiveP`] with the offending step index.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    run_scenario_with(cfg, Execution::default())
}

pub fn run_scenario_with(cfg: &RunConfig, exec: Execution) -> Result<RunOutput> {
    cfg.validate()?;
    let scenario = &cfg.scenario;
    let dt = cfg.dt;
    let steps = cfg.steps();
    let obs_cfg = cfg.observer.config(cfg.mode, dt);
    let mut obs = cfg.observer.initial_state(&obs_cfg);
    let mut est = AttitudeEstimate::with_gains(exp_so3(&Vec3::from(cfg.filter.r_hat0)), cfg.filter.gains)?;
    let mut truth = ScenarioTruth::new(scenario);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut records = Vec::with_capacity(steps / cfg.record_stride + 1);
    let mut history = Vec::with_capacity(steps + 1);
    let mut a_tz = Vec::with_capacity(steps + 1);
    let mut y0 = Vec::with_capacity(steps + 1);
    let mut estimates = Vec::with_capacity(steps + 1);
    let mut jumps = Vec::new();
    // Phase switches on the grid make the target acceleration jump at a node;
    // the step ending there sees the outgoing phase.
    let ending_phase = |t: f64| scenario.phase_ending_at(t, 1e-6 * dt);

    let node = |truth: &ScenarioTruth, t: f64, rng: &mut ChaCha8Rng| -> Result<InputNode> {
        Ok(InputNode {
            body: hover_body_inputs(scenario, t),
            target: ship_target_inputs(scenario, t),
            measurement: Some(synthesize_measurement(
                &truth.body,
                &truth.target,
                t,
                cfg.mode,
                cfg.noise_std,
                rng,
            )?),
        })
    };

    let mut start = node(&truth, 0.0, &mut rng)?;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let rel = relative_of(&truth.body, &truth.target);
        let err = ErrorVector::new(&obs, &rel);
        let gamma_err = err.gamma().norm();
        let att_err = rel.r.angle_to(&est.r_hat);
        history.push((t, err.norm(), gamma_err));
        estimates.push(EstimateSample {
            t,
            xi_hat: obs.xi_hat,
            nu_hat: obs.nu_hat,
            gamma: gamma_to_gamma(&obs),
            r_hat: *est.r_hat.matrix(),
        });
        if let Some(p) = ending_phase(t).filter(|_| k > 0) {
            jumps.push((k, transformed_inputs(&obs.z, &ship_target_inputs_in(scenario, t, p).a)));
        }
        a_tz.push(transformed_inputs(&obs.z, &ship_target_inputs(scenario, t).a));
        let xi = rel.xi;
        y0.push(truth.body.q * (xi / xi.norm().max(f64::MIN_POSITIVE)));
        if k == steps {
            break;
        }
        if k % cfg.record_stride == 0 {
            records.push(RunRecord {
                t,
                xi_err: err.xi(),
                nu_err: err.nu(),
                gamma_err_norm: gamma_err,
                att_err_rad: att_err,
                gramian_lmin: None,
                phase: scenario.phase_index(t),
            });
        }

        let mut mid_truth = truth.clone();
        mid_truth.advance(scenario, 0.5 * dt);
        let mut end_truth = mid_truth.clone();
        end_truth.advance(scenario, 0.5 * dt);
        let mid = node(&mid_truth, t + 0.5 * dt, &mut rng)?;
        let end = node(&end_truth, t + dt, &mut rng)?;
        let mut inputs = StepInputs { start, mid, end };
        if let Some(p) = ending_phase(t + dt) {
            inputs.end.target = ship_target_inputs_in(scenario, t + dt, p);
        }
        if k % cfg.observer.measurement_decimation != 0 {
            inputs = inputs.without_measurement();
        }

        let gamma = gamma_to_gamma(&obs);
        est = filter_step(&est, &mid.target.w, &mid.body.w, &gamma, dt);
        obs = observer_step(&obs, &inputs, &obs_cfg, k)?;
        truth = end_truth;
        start = end;
    }

    let final_att = {
        let rel = relative_of(&truth.body, &truth.target);
        rel.r.angle_to(&est.r_hat)
    };
    let a_tz = Trace::new(0.0, dt, a_tz).with_jumps(jumps)?;
    let y0 = Trace::new(0.0, dt, y0);
    let sweep = if cfg.sweep.enabled && steps > 0 {
        let report = sweep_observability(cfg.mode, &a_tz, Some(&y0), &cfg.sweep, scenario, exec)?;
        attach_gramian(&mut records, &report);
        Some(report)
    } else {
        None
    };
    Ok(RunOutput {
        records,
        summary: summarize(cfg, &history, final_att),
        a_tz,
        y0,
        sweep,
        error_history: history,
        estimates,
    })
}

/// Fills `gramian_lmin` with the most recent window that ends at or before each row.
fn attach_gramian(records: &mut [RunRecord], report: &SweepReport) {
    let mut j = 0;
    let mut current = None;
    for r in records.iter_mut() {
        while j < report.windows.len() && report.windows[j].t_end() <= r.t + 1e-9 {
            current = Some(report.windows[j].gramian_lambda_min);
            j += 1;
        }
        r.gramian_lmin = current;
    }
}

fn fmt9(x: f64) -> String {
    if x.is_finite() {
        let s = format!("{x:.9}");
        // avoid "-0.000000000"
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    } else {
        "nan".to_string()
    }
}

/// Writes the telemetry as CSV with nine decimals.
pub fn write_records_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let row = [
            fmt9(r.t),
            fmt9(r.xi_err.x),
            fmt9(r.xi_err.y),
            fmt9(r.xi_err.z),
            fmt9(r.nu_err.x),
            fmt9(r.nu_err.y),
            fmt9(r.nu_err.z),
            fmt9(r.gamma_err_norm),
            fmt9(r.att_err_rad),
            r.gramian_lmin.map_or_else(|| "nan".to_string(), |v| format!("{v:.9e}")),
            r.phase.to_string(),
        ];
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-window sweep report.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t_start",
        "t_end",
        "phase_start",
        "phase_end",
        "gramian_lmin",
        "gramian_lmax",
        "pe_accel_lmin",
        "pe_accel_pass",
        "pe_pi_lmin",
        "pe_pi_pass",
        "pe_schur_lmin",
        "pe_schur_pass",
    ])?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.9e}"));
    let flag = |v: Option<bool>| v.map_or_else(String::new, |b| (b as u8).to_string());
    for win in &report.windows {
        w.write_record(&[
            fmt9(win.t_start),
            fmt9(win.t_end()),
            win.phase_start.to_string(),
            win.phase_end.to_string(),
            format!("{:.9e}", win.gramian_lambda_min),
            format!("{:.9e}", win.gramian_lambda_max),
            opt(win.accel.as_ref().map(|v| v.lambda_min)),
            flag(win.accel.as_ref().map(|v| v.passed)),
            opt(win.pi.as_ref().map(|v| v.lambda_min)),
            flag(win.pi.as_ref().map(|v| v.passed)),
            opt(win.schur.as_ref().map(|v| v.lambda_min)),
            flag(win.schur.as_ref().map(|v| v.passed)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`export`].
#[derive(Clone, Debug)]
pub struct ExportedFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub trace: PathBuf,
    pub sweep: Option<PathBuf>,
}

/// Writes `records.csv`, `summary.json`, `trace.csv` and, when a sweep ran, `sweep.csv`.
pub fn export(output: &RunOutput, dir: &Path) -> Result<ExportedFiles> {
    fs::create_dir_all(dir)?;
    let records = dir.join("records.csv");
    write_records_csv(&output.records, fs::File::create(&records)?)?;
    let summary = dir.join("summary.json");
    let mut f = fs::File::create(&summary)?;
    serde_json::to_writer_pretty(&mut f, &output.summary)?;
    f.write_all(b"\n")?;
    let trace = dir.join("trace.csv");
    crate::observability::write_trace_csv(&output.a_tz, &output.y0, fs::File::create(&trace)?)?;
    let sweep = match &output.sweep {
        Some(report) => {
            let path = dir.join("sweep.csv");
            write_sweep_csv(report, fs::File::create(&path)?)?;
            Some(path)
        }
        None => None,
    };
    Ok(ExportedFiles {
        records,
        summary,
        trace,
        sweep,
    })
}
