//! Transition matrices, observability Gramians, persistence-of-excitation
//! tests and Schur-complement certificates for the observer error system.
//!
//! In the body-rotated coordinates `x̄ = (I₅ ⊗ Q_B)x` the error system reduces
//! to `Ā(t) ⊗ I₃`, whose transition matrix is known in closed form:
//!
//! ```text
//! Φ̄(s,t) = [[1, s−t, bᵀ], [0, 1, −∫ₜˢaᶻ_Tᵀ], [0, 0, I₃]],   b(s,t) = −∫ₜˢ∫ₜ^τ aᶻ_T = ∫ₜˢ(τ−s)aᶻ_T dτ
//! ```
//!
//! Every window integral uses composite Simpson weights on the trace grid,
//! applied separately to each smooth piece between recorded jumps. Window
//! endpoints are snapped to the nearest grid node.

use std::io::{Read, Write};
use std::ops::{Add, Mul};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, Matrix2, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{kron, projector, Mat15, Mat3, Mat5, Vec3};
use crate::parallel::Execution;
use crate::riccati::{build_a, OutputMode};
use crate::tolerances as tol;
use crate::world::ShipScenario;

pub type Mat3x9 = SMatrix<f64, 3, 9>;
pub type Mat3x6 = SMatrix<f64, 3, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Mat6x9 = SMatrix<f64, 6, 9>;
pub type Mat9 = SMatrix<f64, 9, 9>;

/// Uniformly sampled, piecewise-smooth signal `values[k] = x(t0 + k·h)`.
///
/// `jumps` lists the nodes where `x` is discontinuous together with the
/// left-hand limit `x(t_k⁻)`; `values[k]` holds the right-hand limit.
/// Quadrature and interpolation never straddle a jump.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace<T> {
    pub t0: f64,
    pub h: f64,
    pub values: Vec<T>,
    pub jumps: Vec<(usize, T)>,
}

impl<T: Copy> Trace<T> {
    pub fn new(t0: f64, h: f64, values: Vec<T>) -> Self {
        assert!(h > 0.0, "trace step must be positive");
        Self {
            t0,
            h,
            values,
            jumps: Vec::new(),
        }
    }

    /// Attaches jumps `(node, left-hand limit)`; nodes must be interior and increasing.
    pub fn with_jumps(mut self, jumps: Vec<(usize, T)>) -> Result<Self> {
        let interior = jumps.iter().all(|(k, _)| *k > 0 && *k < self.len());
        let increasing = jumps.windows(2).all(|w| w[0].0 < w[1].0);
        if !interior || !increasing {
            return Err(Error::Config("trace jumps must be increasing interior nodes".into()));
        }
        self.jumps = jumps;
        Ok(self)
    }

    /// Left-hand limit at node `k`: the recorded jump value, else `values[k]`.
    pub fn left_value(&self, k: usize) -> T {
        match self.jumps.binary_search_by_key(&k, |(n, _)| *n) {
            Ok(m) => self.jumps[m].1,
            Err(_) => self.values[k],
        }
    }

    /// Smooth pieces covering nodes `i..=j` as `(first node, samples)`; a
    /// piece ending at a jump ends with the left-hand limit.
    pub fn pieces(&self, i: usize, j: usize) -> Vec<(usize, Vec<T>)> {
        let mut out = Vec::new();
        let mut start = i;
        for &(k, left) in self.jumps.iter().filter(|(k, _)| *k > i && *k <= j) {
            let mut piece = self.values[start..k].to_vec();
            piece.push(left);
            out.push((start, piece));
            start = k;
        }
        if start < j || out.is_empty() {
            out.push((start, self.values[start..=j].to_vec()));
        }
        out
    }

    /// Samples `f` on `n + 1` nodes `t0, t0 + h, …, t0 + n·h`.
    pub fn sample(t0: f64, h: f64, n: usize, f: impl Fn(f64) -> T) -> Self {
        Self::new(t0, h, (0..=n).map(|k| f(t0 + k as f64 * h)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    /// Node indices `(i, j)` snapped to `[t, s]`.
    pub fn window(&self, t: f64, s: f64) -> Result<(usize, usize)> {
        let slack = 1e-9 * self.h;
        let insufficient = || Error::InsufficientTrace {
            t,
            s,
            start: self.t0,
            end: self.t_end(),
        };
        if self.is_empty() || !(s >= t) || t < self.t0 - slack || s > self.t_end() + slack {
            return Err(insufficient());
        }
        let i = ((t - self.t0) / self.h).round() as usize;
        let j = (((s - self.t0) / self.h).round() as usize).min(self.len() - 1);
        Ok((i.min(j), j))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(&T) -> U) -> Trace<U> {
        Trace {
            jumps: self.jumps.iter().map(|(k, v)| (*k, f(v))).collect(),
            ..Trace::new(self.t0, self.h, self.values.iter().map(&f).collect())
        }
    }
}

impl<T> Trace<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    /// Cubic Lagrange interpolation (linear for fewer than four nodes) within
    /// the smooth piece containing `t`, clamped to the trace span. At a jump
    /// node the right-hand value is returned.
    pub fn interpolate(&self, t: f64) -> T {
        let n = self.len();
        assert!(n > 0, "interpolating an empty trace");
        let u = ((t - self.t0) / self.h).clamp(0.0, (n - 1) as f64);
        let k0 = (u.floor() as usize).min(n - 1);
        let start = self.jumps.iter().rev().map(|(k, _)| *k).find(|k| *k <= k0).unwrap_or(0);
        let end = self.jumps.iter().map(|(k, _)| *k).find(|k| *k > k0).unwrap_or(n - 1);
        let at = |m: usize| if m == end { self.left_value(m) } else { self.values[m] };
        lagrange(end - start + 1, u - start as f64, |m| at(start + m))
    }
}

/// Interpolates `n` unit-spaced samples `f(0..n)` at `u ∈ [0, n−1]`.
fn lagrange<T>(n: usize, u: f64, f: impl Fn(usize) -> T) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    if n == 1 {
        return f(0);
    }
    if n < 4 {
        let k = (u.floor() as usize).min(n - 2);
        let x = u - k as f64;
        return f(k) * (1.0 - x) + f(k + 1) * x;
    }
    let k = (u.floor() as usize).clamp(1, n - 3);
    let x = u - k as f64;
    let w = [
        -x * (x - 1.0) * (x - 2.0) / 6.0,
        (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0,
        -(x + 1.0) * x * (x - 2.0) / 2.0,
        (x + 1.0) * x * (x - 1.0) / 6.0,
    ];
    f(k - 1) * w[0] + f(k) * w[1] + f(k + 1) * w[2] + f(k + 2) * w[3]
}

/// Composite quadrature weights for `n` intervals of width `h`: Simpson for
/// even `n`, Simpson followed by the 3/8 rule on the last three intervals for
/// odd `n ≥ 3`, trapezoid for `n = 1`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let even = if n.is_multiple_of(2) { n } else { n - 3 };
            for k in (0..even).step_by(2) {
                w[k] += h / 3.0;
                w[k + 1] += 4.0 * h / 3.0;
                w[k + 2] += h / 3.0;
            }
            if even < n {
                for (off, c) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
                    w[even + off] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

/// `∫ f` over the samples, using [`simpson_weights`]. Panics on an empty slice.
pub fn integrate<T>(values: &[T], h: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let w = simpson_weights(values.len() - 1, h);
    values
        .iter()
        .zip(&w)
        .fold(values[0] * 0.0, |acc, (v, &wk)| acc + *v * wk)
}

/// Running integral `F[k] = ∫_{x₀}^{x_k} f` with a fourth-order cubic rule per
/// interval (trapezoid when fewer than three intervals are available).
pub fn cumulative<T>(values: &[T], h: f64) -> Vec<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let Some(&first) = values.first() else {
        return Vec::new();
    };
    let n = values.len() - 1;
    let f = values;
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = first * 0.0;
    out.push(acc);
    let c = h / 24.0;
    for k in 0..n {
        let piece = if n < 3 {
            (f[k] + f[k + 1]) * (0.5 * h)
        } else if k == 0 {
            (f[0] * 9.0 + f[1] * 19.0 + f[2] * -5.0 + f[3]) * c
        } else if k == n - 1 {
            (f[n] * 9.0 + f[n - 1] * 19.0 + f[n - 2] * -5.0 + f[n - 3]) * c
        } else {
            (f[k - 1] * -1.0 + f[k] * 13.0 + f[k + 1] * 13.0 + f[k + 2] * -1.0) * c
        };
        acc = acc + piece;
        out.push(acc);
    }
    out
}

/// State transition matrix over `[t, s]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix<const N: usize> {
    pub phi: SMatrix<f64, N, N>,
    pub t: f64,
    pub s: f64,
}

/// Closed-form `Φ̄(s, t)` of the reduced system `Ā(t)`.
pub fn phi_bar_closed_form(a_tz: &Trace<Vec3>, t: f64, s: f64) -> Result<TransitionMatrix<5>> {
    let (i, j) = a_tz.window(t, s)?;
    let (tn, sn) = (a_tz.time(i), a_tz.time(j));
    let (mut first, mut second) = (Vec3::zeros(), Vec3::zeros());
    for (start, a) in a_tz.pieces(i, j) {
        if a.len() < 2 {
            continue;
        }
        first += integrate(&a, a_tz.h);
        let weighted: Vec<Vec3> = a
            .iter()
            .enumerate()
            .map(|(k, v)| v * (sn - a_tz.time(start + k)))
            .collect();
        second += integrate(&weighted, a_tz.h);
    }
    Ok(TransitionMatrix {
        phi: phi_bar_from(sn - tn, &-second, &first),
        t: tn,
        s: sn,
    })
}

fn phi_bar_from(span: f64, b: &Vec3, first: &Vec3) -> Mat5 {
    let mut phi = Mat5::identity();
    phi[(0, 1)] = span;
    for k in 0..3 {
        phi[(0, 2 + k)] = b[k];
        phi[(1, 2 + k)] = -first[k];
    }
    phi
}

/// `Φ(s, t)` of `dΦ/ds = A(s)Φ` by classical RK4 with `steps` equal steps.
pub fn phi_numeric<const N: usize>(
    a: impl Fn(f64) -> SMatrix<f64, N, N>,
    t: f64,
    s: f64,
    steps: usize,
) -> TransitionMatrix<N> {
    let phi = *phi_numeric_nodes(a, t, s, steps).last().expect("at least one node");
    TransitionMatrix { phi, t, s }
}

/// `Φ(t + k(s−t)/steps, t)` for `k = 0..=steps`.
pub fn phi_numeric_nodes<const N: usize>(
    a: impl Fn(f64) -> SMatrix<f64, N, N>,
    t: f64,
    s: f64,
    steps: usize,
) -> Vec<SMatrix<f64, N, N>> {
    let mut phi = SMatrix::<f64, N, N>::identity();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(phi);
    if steps == 0 {
        return out;
    }
    let h = (s - t) / steps as f64;
    for k in 0..steps {
        let tk = t + k as f64 * h;
        let (a0, am, a1) = (a(tk), a(tk + 0.5 * h), a(tk + h));
        let k1 = a0 * phi;
        let k2 = am * (phi + k1 * (0.5 * h));
        let k3 = am * (phi + k2 * (0.5 * h));
        let k4 = a1 * (phi + k3 * h);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(phi);
    }
    out
}

/// `A(s)` of the observer error system, driven by a recorded `aᶻ_T` trace and
/// a body rate `Ω(s)`.
pub fn error_system_a<'a>(a_tz: &'a Trace<Vec3>, omega: impl Fn(f64) -> Vec3 + 'a) -> impl Fn(f64) -> Mat15 + 'a {
    move |s| build_a(&omega(s), &a_tz.interpolate(s))
}

/// `Φ(s, t)` of the full 15-dimensional error system on the trace grid,
/// chained across the smooth pieces of the trace.
pub fn phi_numeric_on_trace(
    a_tz: &Trace<Vec3>,
    omega: impl Fn(f64) -> Vec3,
    t: f64,
    s: f64,
) -> Result<TransitionMatrix<15>> {
    let (i, j) = a_tz.window(t, s)?;
    let mut phi = Mat15::identity();
    for (start, a) in a_tz.pieces(i, j) {
        let steps = a.len() - 1;
        if steps == 0 {
            continue;
        }
        let piece = Trace::new(a_tz.time(start), a_tz.h, a);
        phi = phi_numeric(error_system_a(&piece, &omega), piece.t0, piece.t_end(), steps).phi * phi;
    }
    Ok(TransitionMatrix {
        phi,
        t: a_tz.time(i),
        s: a_tz.time(j),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ObservabilityVerdict {
    UniformlyObservable { mu: f64 },
    Degenerate,
}

/// Observability Gramian `W = (1/δ)∫ₜ^{t+δ} ΦᵀCᵀCΦ ds` with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct GramianWindow {
    pub w: DMatrix<f64>,
    pub t: f64,
    pub delta: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub verdict: ObservabilityVerdict,
}

impl GramianWindow {
    /// Symmetrizes `w` and classifies it against the relative margin.
    pub fn from_matrix(w: DMatrix<f64>, t: f64, delta: f64) -> Self {
        let w = (&w + w.transpose()) * 0.5;
        let (lambda_min, lambda_max) = spectrum(&w);
        let verdict = if excited(lambda_min, lambda_max) {
            ObservabilityVerdict::UniformlyObservable { mu: lambda_min }
        } else {
            ObservabilityVerdict::Degenerate
        };
        Self {
            w,
            t,
            delta,
            lambda_min,
            lambda_max,
            verdict,
        }
    }

    pub fn schur_certificate(&self, n: usize) -> Result<SchurCertificate> {
        schur_certificate(&self.w, n)
    }
}

fn excited(lambda_min: f64, lambda_max: f64) -> bool {
    lambda_max > 0.0 && lambda_min >= tol::PE_RELATIVE_MU * lambda_max
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn spectrum(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    (ev.min(), ev.max())
}

fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Gramian of `(A, C)` with `Φ` integrated numerically on `steps` intervals.
pub fn gramian_numeric<const N: usize, const M: usize>(
    a: impl Fn(f64) -> SMatrix<f64, N, N>,
    c: impl Fn(f64) -> SMatrix<f64, M, N>,
    t: f64,
    delta: f64,
    steps: usize,
) -> GramianWindow {
    assert!(delta > 0.0 && steps > 0);
    let h = delta / steps as f64;
    let phis = phi_numeric_nodes(a, t, t + delta, steps);
    let w = simpson_weights(steps, h);
    let mut acc = SMatrix::<f64, N, N>::zeros();
    for (k, (phi, wk)) in phis.iter().zip(&w).enumerate() {
        let cphi = c(t + k as f64 * h) * phi;
        acc += cphi.transpose() * cphi * *wk;
    }
    GramianWindow::from_matrix(to_dyn(&(acc / delta)), t, delta)
}

/// Samples of one window: offsets `s − t`, `aᶻ_T` and `b(s, t)` on grid
/// nodes. A jump node appears twice, closing one piece and opening the next.
struct WindowSamples {
    t: f64,
    delta: f64,
    h: f64,
    /// Trace node of each sample.
    nodes: Vec<usize>,
    offsets: Vec<f64>,
    a: Vec<Vec3>,
    b: Vec<Vec3>,
    weights: Vec<f64>,
}

impl WindowSamples {
    fn new(a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Config("window length must be positive".into()));
        }
        let (i, j) = a_tz.window(t, t + delta)?;
        if j == i {
            return Err(Error::InsufficientTrace {
                t,
                s: t + delta,
                start: a_tz.t0,
                end: a_tz.t_end(),
            });
        }
        let h = a_tz.h;
        let mut win = Self {
            t: a_tz.time(i),
            delta: (j - i) as f64 * h,
            h,
            nodes: Vec::new(),
            offsets: Vec::new(),
            a: Vec::new(),
            b: Vec::new(),
            weights: Vec::new(),
        };
        // Running ∫a and ∫∫a carried across pieces.
        let (mut v0, mut p0) = (Vec3::zeros(), Vec3::zeros());
        for (start, a) in a_tz.pieces(i, j) {
            let first: Vec<Vec3> = cumulative(&a, h).into_iter().map(|v| v + v0).collect();
            let second = cumulative(&first, h);
            for (m, (av, sv)) in a.iter().zip(&second).enumerate() {
                win.nodes.push(start + m);
                win.offsets.push((start + m - i) as f64 * h);
                win.a.push(*av);
                win.b.push(-(sv + p0));
            }
            win.weights.extend(simpson_weights(a.len() - 1, h));
            v0 = first[first.len() - 1];
            p0 += second[second.len() - 1];
        }
        Ok(win)
    }

    fn nodes(&self) -> impl Iterator<Item = (f64, &Vec3, &Vec3, f64)> {
        self.offsets
            .iter()
            .zip(&self.a)
            .zip(&self.b)
            .zip(&self.weights)
            .map(|(((o, a), b), w)| (*o, a, b, *w))
    }
}

/// Block pieces of the reduced position Gramian:
/// `δ·W̄ = [[Λ_δ, B], [Bᵀ, Λ_b]]` with `Λ_δ = ∫[1, s−t]ᵀ[1, s−t]`,
/// `B = ∫[1, s−t]ᵀbᵀ` and `Λ_b = ∫b bᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramianBlocks {
    pub delta: f64,
    pub lambda_delta: Matrix2<f64>,
    pub b: SMatrix<f64, 2, 3>,
    pub lambda_b: Mat3,
}

impl GramianBlocks {
    pub fn assemble(&self) -> Mat5 {
        let mut w = Mat5::zeros();
        w.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.lambda_delta);
        w.fixed_view_mut::<2, 3>(0, 2).copy_from(&self.b);
        w.fixed_view_mut::<3, 2>(2, 0).copy_from(&self.b.transpose());
        w.fixed_view_mut::<3, 3>(2, 2).copy_from(&self.lambda_b);
        w / self.delta
    }
}

/// `Λ_δ = [[δ, δ²/2], [δ²/2, δ³/3]]`.
pub fn lambda_delta(delta: f64) -> Matrix2<f64> {
    Matrix2::new(delta, delta * delta / 2.0, delta * delta / 2.0, delta.powi(3) / 3.0)
}

pub fn gramian_blocks(a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<GramianBlocks> {
    let win = WindowSamples::new(a_tz, t, delta)?;
    let mut b = SMatrix::<f64, 2, 3>::zeros();
    let mut lambda_b = Mat3::zeros();
    for (o, _, bv, w) in win.nodes() {
        b.set_row(0, &(b.row(0) + bv.transpose() * w));
        b.set_row(1, &(b.row(1) + bv.transpose() * (w * o)));
        lambda_b += bv * bv.transpose() * w;
    }
    Ok(GramianBlocks {
        delta: win.delta,
        lambda_delta: lambda_delta(win.delta),
        b,
        lambda_b,
    })
}

/// Reduced 5×5 position-output Gramian `W̄ = (1/δ)∫[1, s−t, bᵀ]ᵀ[1, s−t, bᵀ]`.
pub fn reduced_gramian(a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<GramianWindow> {
    let win = WindowSamples::new(a_tz, t, delta)?;
    let mut acc = Mat5::zeros();
    for (o, _, b, w) in win.nodes() {
        let h = nalgebra::Vector5::new(1.0, o, b.x, b.y, b.z);
        acc += h * h.transpose() * w;
    }
    Ok(GramianWindow::from_matrix(to_dyn(&(acc / win.delta)), win.t, win.delta))
}

/// `[I₃, (s−t)I₃]`.
fn g_matrix(offset: f64) -> Mat3x6 {
    let mut g = Mat3x6::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    g.fixed_view_mut::<3, 3>(0, 3).copy_from(&(Mat3::identity() * offset));
    g
}

/// `Λ_T = bᵀ ⊗ I₃`.
fn lambda_t_matrix(b: &Vec3) -> Mat3x9 {
    let mut l = Mat3x9::zeros();
    for k in 0..3 {
        l.fixed_view_mut::<3, 3>(0, 3 * k).copy_from(&(Mat3::identity() * b[k]));
    }
    l
}

fn checked_bearing(y: &Vec3) -> Result<Mat3> {
    projector(y).map_err(|_| Error::NonUnitBearing(y.norm()))
}

fn bearing_window(y0: &Trace<Vec3>, win: &WindowSamples) -> Result<Vec<Mat3>> {
    if (y0.h - win.h).abs() > 1e-12 * win.h {
        return Err(Error::Config(
            "bearing and acceleration traces use different grids".into(),
        ));
    }
    let (i, j) = y0.window(win.t, win.t + win.delta)?;
    let first = win.nodes[0];
    if j - i != win.nodes[win.nodes.len() - 1] - first {
        return Err(Error::InsufficientTrace {
            t: win.t,
            s: win.t + win.delta,
            start: y0.t0,
            end: y0.t_end(),
        });
    }
    win.nodes
        .iter()
        .map(|k| checked_bearing(&y0.values[i + k - first]))
        .collect()
}

/// Full 15×15 Gramian in the body-rotated coordinates, where the error system
/// is `Ā ⊗ I₃` and the output matrix is `[1, 0₁ₓ₄] ⊗ I₃` (position) or
/// `[1, 0₁ₓ₄] ⊗ π_{y₀}` (bearing, `y₀ = Q_B y`).
pub fn transformed_gramian(
    mode: OutputMode,
    a_tz: &Trace<Vec3>,
    y0: Option<&Trace<Vec3>>,
    t: f64,
    delta: f64,
) -> Result<GramianWindow> {
    match mode {
        OutputMode::Position => {
            let reduced = reduced_gramian(a_tz, t, delta)?;
            let w = kron(&reduced.w, &DMatrix::identity(3, 3));
            Ok(GramianWindow::from_matrix(w, reduced.t, reduced.delta))
        }
        OutputMode::Bearing => {
            let y0 = y0.ok_or_else(|| Error::Config("bearing Gramian needs a bearing trace".into()))?;
            let win = WindowSamples::new(a_tz, t, delta)?;
            let pis = bearing_window(y0, &win)?;
            let mut acc = Mat15::zeros();
            for ((o, _, b, w), pi) in win.nodes().zip(&pis) {
                let mut h = Mat3x15::zeros();
                h.fixed_view_mut::<3, 6>(0, 0).copy_from(&g_matrix(o));
                h.fixed_view_mut::<3, 9>(0, 6).copy_from(&lambda_t_matrix(b));
                acc += h.transpose() * pi * h * w;
            }
            Ok(GramianWindow::from_matrix(to_dyn(&(acc / win.delta)), win.t, win.delta))
        }
    }
}

type Mat3x15 = SMatrix<f64, 3, 15>;

/// Outcome of a persistence-of-excitation test on `(1/δ)∫(…)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PeVerdict {
    pub matrix: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `μ = 1e-6·λ_max`.
    pub threshold: f64,
    pub passed: bool,
}

impl PeVerdict {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let (lambda_min, lambda_max) = spectrum(&matrix);
        Self {
            matrix,
            lambda_min,
            lambda_max,
            threshold: tol::PE_RELATIVE_MU * lambda_max,
            passed: excited(lambda_min, lambda_max),
        }
    }
}

/// Excitation of the transformed target acceleration, `(1/δ)∫aᶻ_T aᶻ_Tᵀ`.
pub fn pe_accel_check(a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<PeVerdict> {
    let win = WindowSamples::new(a_tz, t, delta)?;
    let acc = win
        .nodes()
        .fold(Mat3::zeros(), |acc, (_, a, _, w)| acc + a * a.transpose() * w);
    Ok(PeVerdict::from_matrix(to_dyn(&(acc / win.delta))))
}

/// Matrices of the bearing excitation conditions, all window averages:
/// `Λ_π = (1/δ)∫GᵀπG`, `B = (1/δ)∫GᵀπΛ_T`, `ρ = Λ_π⁻¹B`,
/// `M(s) = π(Λ_T − Gρ)` with `G = [I₃, (s−t)I₃]`, `π = π_{y₀}(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BearingPeMatrices {
    pub t: f64,
    pub delta: f64,
    /// `Λ_T(s, t)` at each grid node of the window.
    pub lambda_t: Vec<Mat3x9>,
    pub lambda_pi: Mat6,
    pub b: Mat6x9,
    pub rho: Mat6x9,
    /// `M(s, t)` at each grid node of the window.
    pub m: Vec<Mat3x9>,
    /// `(1/δ)∫Λ_TᵀπΛ_T`.
    pub lambda_b: Mat9,
    /// `(1/δ)∫π`.
    pub pi_mean: Mat3,
    weights: Vec<f64>,
}

impl BearingPeMatrices {
    /// `(1/δ)∫MᵀM` by quadrature.
    pub fn m_gramian(&self) -> Mat9 {
        let acc = self
            .m
            .iter()
            .zip(&self.weights)
            .fold(Mat9::zeros(), |acc, (m, w)| acc + m.transpose() * m * *w);
        acc / self.delta
    }

    /// Schur complement `Λ_b − BᵀΛ_π⁻¹B` of the leading block of the bearing Gramian.
    pub fn schur_complement(&self) -> Mat9 {
        self.lambda_b - self.b.transpose() * self.rho
    }
}

struct BearingSums {
    win: WindowSamples,
    pis: Vec<Mat3>,
    lambda_pi: Mat6,
    b: Mat6x9,
    lambda_b: Mat9,
    pi_mean: Mat3,
}

fn bearing_sums(y0: &Trace<Vec3>, a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<BearingSums> {
    let win = WindowSamples::new(a_tz, t, delta)?;
    let pis = bearing_window(y0, &win)?;
    let (mut lambda_pi, mut b, mut lambda_b, mut pi_mean) =
        (Mat6::zeros(), Mat6x9::zeros(), Mat9::zeros(), Mat3::zeros());
    for ((o, _, bv, w), pi) in win.nodes().zip(&pis) {
        let g = g_matrix(o);
        let lt = lambda_t_matrix(bv);
        let gp = g.transpose() * pi;
        lambda_pi += gp * g * w;
        b += gp * lt * w;
        lambda_b += lt.transpose() * pi * lt * w;
        pi_mean += pi * w;
    }
    let d = win.delta;
    Ok(BearingSums {
        win,
        pis,
        lambda_pi: lambda_pi / d,
        b: b / d,
        lambda_b: lambda_b / d,
        pi_mean: pi_mean / d,
    })
}

fn invert_lambda_pi(lambda_pi: &Mat6) -> Result<Cholesky<f64, nalgebra::Const<6>>> {
    let (lmin, lmax) = spectrum(&to_dyn(lambda_pi));
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    let singular = || Error::SingularLambdaPi {
        lambda_min: lmin,
        condition,
    };
    if lmin < tol::LAMBDA_PI_MIN || condition > tol::LAMBDA_PI_CONDITION {
        return Err(singular());
    }
    Cholesky::new(*lambda_pi).ok_or_else(singular)
}

pub fn bearing_pe_matrices(y0: &Trace<Vec3>, a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<BearingPeMatrices> {
    let sums = bearing_sums(y0, a_tz, t, delta)?;
    let chol = invert_lambda_pi(&sums.lambda_pi)?;
    let rho = chol.solve(&sums.b);
    let lambda_t: Vec<Mat3x9> = sums.win.b.iter().map(lambda_t_matrix).collect();
    let m = lambda_t
        .iter()
        .zip(&sums.win.offsets)
        .zip(&sums.pis)
        .map(|((lt, o), pi)| pi * (lt - g_matrix(*o) * rho))
        .collect();
    Ok(BearingPeMatrices {
        t: sums.win.t,
        delta: sums.win.delta,
        lambda_t,
        lambda_pi: sums.lambda_pi,
        b: sums.b,
        rho,
        m,
        lambda_b: sums.lambda_b,
        pi_mean: sums.pi_mean,
        weights: sums.win.weights,
    })
}

/// Verdicts of the two bearing excitation conditions, plus the (non-gating)
/// alignment diagnostic `(1/δ)∫Λ_TᵀπΛ_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct BearingVerdicts {
    /// `(1/δ)∫π_{y₀}`.
    pub pi: PeVerdict,
    /// `(1/δ)∫MᵀM`; failed with a zero matrix when `Λ_π` cannot be inverted.
    pub schur: PeVerdict,
    pub alignment: PeVerdict,
    pub lambda_pi_singular: bool,
}

pub fn pe_bearing_check(y0: &Trace<Vec3>, a_tz: &Trace<Vec3>, t: f64, delta: f64) -> Result<BearingVerdicts> {
    let sums = bearing_sums(y0, a_tz, t, delta)?;
    let pi = PeVerdict::from_matrix(to_dyn(&sums.pi_mean));
    let alignment = PeVerdict::from_matrix(to_dyn(&sums.lambda_b));
    match bearing_pe_matrices(y0, a_tz, t, delta) {
        Ok(mats) => Ok(BearingVerdicts {
            pi,
            schur: PeVerdict::from_matrix(to_dyn(&mats.m_gramian())),
            alignment,
            lambda_pi_singular: false,
        }),
        Err(Error::SingularLambdaPi { .. }) => Ok(BearingVerdicts {
            pi,
            schur: PeVerdict::from_matrix(DMatrix::zeros(9, 9)),
            alignment,
            lambda_pi_singular: true,
        }),
        Err(e) => Err(e),
    }
}

/// Determinant-based lower bound on `λ_min(W)` from a block split.
#[derive(Clone, Debug, PartialEq)]
pub struct SchurCertificate {
    /// `W/W_E = W_G − W_Fᵀ W_E⁻¹ W_F`.
    pub schur: DMatrix<f64>,
    /// `min(λ_min(W_E), λ_min(W/W_E))`.
    pub mu: f64,
    /// `λ_max(W)`.
    pub mu_max: f64,
    /// `μ^{n+m} / μ_max^{n+m−1}` (zero when the complement is not positive).
    pub mu_star: f64,
    pub lambda_min: f64,
    pub holds: bool,
}

/// Certificate for the split `W = [[W_E, W_F], [W_Fᵀ, W_G]]` with `W_E` of size `n`.
pub fn schur_certificate(w: &DMatrix<f64>, n: usize) -> Result<SchurCertificate> {
    let dim = w.nrows();
    if w.ncols() != dim || n == 0 || n >= dim {
        return Err(Error::Config(format!(
            "invalid split {n} of a {}×{} matrix",
            dim,
            w.ncols()
        )));
    }
    let w = (w + w.transpose()) * 0.5;
    let m = dim - n;
    let we = w.view((0, 0), (n, n)).into_owned();
    let wf = w.view((0, n), (n, m)).into_owned();
    let wg = w.view((n, n), (m, m)).into_owned();
    let (le_min, _) = spectrum(&we);
    let chol = match Cholesky::new(we) {
        Some(c) if le_min > 0.0 => c,
        _ => return Err(Error::LeadingBlockSingular(le_min)),
    };
    let schur = &wg - wf.transpose() * chol.solve(&wf);
    let schur = (&schur + schur.transpose()) * 0.5;
    let (ls_min, _) = spectrum(&schur);
    let (lambda_min, mu_max) = spectrum(&w);
    let mu = le_min.min(ls_min);
    let mu_star = if mu > 0.0 {
        // μ^N/μ_max^{N−1} = μ·(μ/μ_max)^{N−1}, which avoids overflow
        mu * (mu / mu_max).powi(dim as i32 - 1)
    } else {
        0.0
    };
    let slack = 16.0 * f64::EPSILON * mu_max * dim as f64;
    Ok(SchurCertificate {
        schur,
        mu,
        mu_max,
        mu_star,
        lambda_min,
        holds: lambda_min >= mu_star * (1.0 - 1e-9) - slack,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub enabled: bool,
    /// Window length δ (s).
    pub delta: f64,
    /// Spacing between consecutive window starts (s).
    pub stride: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            delta: std::f64::consts::PI,
            stride: 0.25,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config("sweep delta must be positive".into()));
        }
        if !(self.stride > 0.0) || !self.stride.is_finite() {
            return Err(Error::Config("sweep stride must be positive".into()));
        }
        Ok(())
    }
}

/// Spectral diagnostics and excitation verdicts of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub t_start: f64,
    pub delta: f64,
    pub phase_start: usize,
    pub phase_end: usize,
    pub gramian_lambda_min: f64,
    pub gramian_lambda_max: f64,
    pub verdict: ObservabilityVerdict,
    pub accel: Option<PeVerdict>,
    pub pi: Option<PeVerdict>,
    pub schur: Option<PeVerdict>,
    pub alignment_lambda_min: Option<f64>,
}

impl WindowReport {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.delta
    }

    /// Whether `[t_start, t_end]` lies inside `[a, b]`.
    pub fn within(&self, a: f64, b: f64) -> bool {
        self.t_start >= a - 1e-9 && self.t_end() <= b + 1e-9
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub mode: OutputMode,
    pub windows: Vec<WindowReport>,
}

/// Start times of the sliding windows that fit inside the trace.
pub fn window_starts(trace_len: usize, t0: f64, h: f64, settings: &SweepSettings) -> Vec<f64> {
    let dn = ((settings.delta / h).round() as usize).max(1);
    let sn = ((settings.stride / h).round() as usize).max(1);
    if trace_len == 0 {
        return Vec::new();
    }
    (0..)
        .map(|k| k * sn)
        .take_while(|i| i + dn < trace_len)
        .map(|i| t0 + i as f64 * h)
        .collect()
}

/// Sliding-window observability sweep. Position mode reports the reduced
/// Gramian and the acceleration condition; bearing mode reports the full
/// transformed Gramian and all three conditions.
pub fn sweep_observability(
    mode: OutputMode,
    a_tz: &Trace<Vec3>,
    y0: Option<&Trace<Vec3>>,
    settings: &SweepSettings,
    scenario: &ShipScenario,
    exec: Execution,
) -> Result<SweepReport> {
    settings.validate()?;
    if mode == OutputMode::Bearing && y0.is_none() {
        return Err(Error::Config("bearing sweep needs a bearing trace".into()));
    }
    let delta = ((settings.delta / a_tz.h).round()).max(1.0) * a_tz.h;
    let starts = window_starts(a_tz.len(), a_tz.t0, a_tz.h, settings);
    let windows = exec.try_map(&starts, |&t| -> Result<WindowReport> {
        let gramian = match mode {
            OutputMode::Position => reduced_gramian(a_tz, t, delta)?,
            OutputMode::Bearing => transformed_gramian(mode, a_tz, y0, t, delta)?,
        };
        let accel = Some(pe_accel_check(a_tz, t, delta)?);
        let (pi, schur, alignment) = match (mode, y0) {
            (OutputMode::Bearing, Some(y0)) => {
                let v = pe_bearing_check(y0, a_tz, t, delta)?;
                (Some(v.pi), Some(v.schur), Some(v.alignment.lambda_min))
            }
            _ => (None, None, None),
        };
        Ok(WindowReport {
            t_start: gramian.t,
            delta: gramian.delta,
            phase_start: scenario.phase_index(gramian.t),
            phase_end: scenario.phase_index(gramian.t + gramian.delta - 1e-9),
            gramian_lambda_min: gramian.lambda_min,
            gramian_lambda_max: gramian.lambda_max,
            verdict: gramian.verdict,
            accel,
            pi,
            schur,
            alignment_lambda_min: alignment,
        })
    })?;
    Ok(SweepReport { mode, windows })
}

const TRACE_HEADER: [&str; 7] = ["t", "a_tz_x", "a_tz_y", "a_tz_z", "y0_x", "y0_y", "y0_z"];

/// Writes `aᶻ_T` and `y₀` traces sharing one grid, in round-trip precision.
pub fn write_trace_csv<W: Write>(a_tz: &Trace<Vec3>, y0: &Trace<Vec3>, out: W) -> Result<()> {
    if a_tz.len() != y0.len() || a_tz.t0 != y0.t0 || a_tz.h != y0.h {
        return Err(Error::Config("traces must share one grid".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    let row = |t: f64, a: &Vec3, y: &Vec3| [t, a.x, a.y, a.z, y.x, y.y, y.z].map(|v| format!("{v:e}"));
    let mut jumps = a_tz.jumps.iter().peekable();
    for (k, (a, y)) in a_tz.values.iter().zip(&y0.values).enumerate() {
        if let Some((_, left)) = jumps.next_if(|(n, _)| *n == k) {
            w.write_record(row(a_tz.time(k), left, y))?;
        }
        w.write_record(row(a_tz.time(k), a, y))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV. The `y0_*` columns are optional. A repeated time marks
/// a jump of `aᶻ_T`: the first of the two rows holds the left-hand limit.
pub fn read_trace_csv<R: Read>(input: R) -> Result<(Trace<Vec3>, Option<Trace<Vec3>>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| Error::Config(format!("trace CSV lacks column {name}")));
    let (ct, ca) = (need("t")?, [need("a_tz_x")?, need("a_tz_y")?, need("a_tz_z")?]);
    let cy = match (col("y0_x"), col("y0_y"), col("y0_z")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    let (mut ts, mut a, mut y, mut jumps) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Config(format!("trace CSV row {}: bad number in column {c}", line + 2)))
        };
        let t = num(ct)?;
        if ts.last() == Some(&t) {
            ts.pop();
            y.pop();
            jumps.push((ts.len(), a.pop().expect("row pushed")));
        }
        ts.push(t);
        a.push(Vec3::new(num(ca[0])?, num(ca[1])?, num(ca[2])?));
        if let Some(cy) = cy {
            y.push(Vec3::new(num(cy[0])?, num(cy[1])?, num(cy[2])?));
        }
    }
    if ts.len() < 2 {
        return Err(Error::Config("trace CSV needs at least two rows".into()));
    }
    let (t0, h) = (ts[0], ts[1] - ts[0]);
    if !(h > 0.0)
        || ts
            .iter()
            .enumerate()
            .any(|(k, t)| (t - (t0 + k as f64 * h)).abs() > 1e-6 * h)
    {
        return Err(Error::Config(
            "trace CSV must be uniformly sampled in increasing time".into(),
        ));
    }
    let y0 = cy.map(|_| Trace::new(t0, h, y));
    Ok((Trace::new(t0, h, a).with_jumps(jumps)?, y0))
}

pub fn load_trace_csv(path: &Path) -> Result<(Trace<Vec3>, Option<Trace<Vec3>>)> {
    read_trace_csv(std::fs::File::open(path)?)
}
