//! Time-dependent simulation of the spin-dependent optical dipole force
//! beyond the Lamb-Dicke regime: the drive Hamiltonian, a norm-preserving
//! split-step propagator, the experimental step sequence with spin echo,
//! amplitude calibration, duration sweeps, and the sideband Rabi-frequency
//! limit analysis.
//!
//! The drive on coin branch `s` is the traveling-wave potential
//! `amp_s · cos(η X̂ + φ − ω_R t)` with `X̂ = a + a†` and beat frequency
//! `ω_R = ω_z + δ`; all orders in `η` and all motional sidebands are kept.
//! States entering and leaving the public operations live in the frame
//! co-rotating at the trap frequency, where the walk positions are static.

use std::f64::consts::PI;

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coin::{apply_coin, pi_pulse, toss};
use crate::error::{Error, Result};
use crate::hilbert::{JointOperator, JointState, MotionalOperator, MotionalVector};
use crate::walk::{report_from_state, WalkReport};

/// Physical drive and trap parameters. Frequencies are angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Axial trap frequency ω_z.
    pub omega_z: f64,
    /// Drive detuning δ from the trap frequency.
    pub delta: f64,
    /// Lamb-Dicke parameter η = Δk·z₀.
    pub eta: f64,
    /// Potential amplitude U_H/ħ seen by the `H` branch; obtained from
    /// [`calibrate_step`], never hard-coded.
    pub drive_amp_h: f64,
    /// F_T / F_H.
    pub force_ratio: f64,
    /// Drive phase at t = 0.
    pub phase: f64,
    /// Rephasing period, 2π/δ when auto-derived.
    pub t_d: f64,
    /// Integrator step ceiling.
    pub dt: f64,
    pub n_max: usize,
    /// Relative length of each displacement pulse (the duration-sweep knob).
    pub duration_scale: f64,
}

impl DriveParams {
    /// Trap and drive values of the experiment: ω_z = 2π·2.1 MHz,
    /// δ = 2π·100 kHz, η = 0.31, F_T = −(3/2)F_H. The drive amplitude
    /// starts at zero and must be calibrated.
    pub fn experiment_defaults() -> Self {
        let omega_z = 2.0 * PI * 2.1e6;
        let delta = 2.0 * PI * 1.0e5;
        let trap_period = 2.0 * PI / omega_z;
        Self {
            omega_z,
            delta,
            eta: 0.31,
            drive_amp_h: 0.0,
            force_ratio: -1.5,
            phase: -PI / 2.0,
            t_d: 2.0 * PI / delta,
            dt: trap_period / 400.0,
            n_max: 128,
            duration_scale: 1.0,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    pub fn with_duration_scale(mut self, scale: f64) -> Self {
        self.duration_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 {
            return Err(Error::InvalidParams(format!("eta = {} must be > 0", self.eta)));
        }
        if self.delta == 0.0 {
            return Err(Error::InvalidParams("delta must be nonzero".into()));
        }
        if self.omega_z <= 0.0 {
            return Err(Error::InvalidParams(format!("omega_z = {} must be > 0", self.omega_z)));
        }
        if self.dt <= 0.0 || self.t_d <= 0.0 {
            return Err(Error::InvalidParams("dt and t_d must be > 0".into()));
        }
        if self.duration_scale < 0.0 {
            return Err(Error::InvalidParams("duration_scale must be ≥ 0".into()));
        }
        if self.n_max < 8 {
            return Err(Error::InvalidParams(format!("n_max = {} too small", self.n_max)));
        }
        Ok(())
    }

    fn amp_t(&self) -> f64 {
        self.force_ratio * self.drive_amp_h
    }
}

/// Sideband Rabi frequencies `Ω_{n,n+1}` for `0 ≤ n < len`: the exact
/// all-orders matrix-element form alongside the Lamb-Dicke approximation
/// `√(n+1)·η·Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiCurve {
    pub exact: Vec<f64>,
    pub lamb_dicke: Vec<f64>,
}

impl RabiCurve {
    /// Level with the largest coupling; beyond it transition rates decrease.
    pub fn peak_n(&self) -> usize {
        self.exact
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(n, _)| n)
            .unwrap_or(0)
    }

    /// First level where the coupling changes sign (state reflection).
    pub fn first_sign_change(&self) -> Option<usize> {
        let s0 = self.exact.first()?.signum();
        self.exact.iter().position(|v| v.signum() != s0 || *v == 0.0)
    }
}

/// Generalized Laguerre polynomials `L_n^{(1)}(x)` for `n = 0 .. len`.
fn laguerre_l1_sequence(x: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    out.push(1.0);
    if len == 1 {
        return out;
    }
    out.push(2.0 - x);
    for k in 1..len - 1 {
        let kf = k as f64;
        let next = ((2.0 * kf + 2.0 - x) * out[k] - (kf + 1.0) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Blue-sideband Rabi frequencies
/// `Ω_{n,n+1} = Ω e^{−η²/2} η L_n^{(1)}(η²)/√(n+1)` (exact form, signed) and
/// the Lamb-Dicke form `√(n+1) η Ω`.
pub fn sideband_rabi_curve(eta: f64, omega: f64, len: usize) -> Result<RabiCurve> {
    if eta <= 0.0 {
        return Err(Error::InvalidParams(format!("eta = {eta} must be > 0")));
    }
    let x = eta * eta;
    let lag = laguerre_l1_sequence(x, len);
    let damp = (-x / 2.0).exp();
    let exact = lag
        .iter()
        .enumerate()
        .map(|(n, l)| omega * damp * eta * l / ((n + 1) as f64).sqrt())
        .collect();
    let lamb_dicke = (0..len).map(|n| ((n + 1) as f64).sqrt() * eta * omega).collect();
    Ok(RabiCurve { exact, lamb_dicke })
}

/// Eigendecomposition of the quadrature operator `X = a + a†`, with the
/// trigonometric profiles of `ηX` cached. Depends only on `(eta, n_max)`, so
/// one basis serves every drive amplitude, detuning, and duration.
pub struct MotionBasis {
    pub n_max: usize,
    pub eta: f64,
    lambda: Vec<f64>,
    /// Eigenvector matrix V, row-major.
    v: Vec<f64>,
    /// Vᵀ, row-major.
    vt: Vec<f64>,
    cos_el: Vec<f64>,
    sin_el: Vec<f64>,
}

impl MotionBasis {
    pub fn new(eta: f64, n_max: usize) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::InvalidParams(format!("eta = {eta} must be > 0")));
        }
        let dim = n_max + 1;
        let mut x = Array2::<f64>::zeros((dim, dim));
        for n in 0..n_max {
            let root = ((n + 1) as f64).sqrt();
            x[[n + 1, n]] = root;
            x[[n, n + 1]] = root;
        }
        let (lambda, vecs) = x.eigh(UPLO::Lower)?;
        let mut v = vec![0.0; dim * dim];
        let mut vt = vec![0.0; dim * dim];
        for r in 0..dim {
            for c in 0..dim {
                v[r * dim + c] = vecs[[r, c]];
                vt[c * dim + r] = vecs[[r, c]];
            }
        }
        let cos_el = lambda.iter().map(|l| (eta * l).cos()).collect();
        let sin_el = lambda.iter().map(|l| (eta * l).sin()).collect();
        Ok(Self { n_max, eta, lambda: lambda.to_vec(), v, vt, cos_el, sin_el })
    }

    /// Dense `E = exp(i η X)`.
    pub fn exp_i_eta_x(&self) -> MotionalOperator {
        let dim = self.n_max + 1;
        let phases: Vec<C64> = self.lambda.iter().map(|l| C64::new(0.0, self.eta * l).exp()).collect();
        let mut entries = Array2::<C64>::zeros((dim, dim));
        for r in 0..dim {
            for c in 0..dim {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += self.v[r * dim + k] * phases[k] * self.v[c * dim + k];
                }
                entries[[r, c]] = acc;
            }
        }
        MotionalOperator { n_max: self.n_max, entries }
    }
}

const PAR_DIM: usize = 384;

/// `out = M · x` for a real row-major square matrix and a complex vector.
fn real_matvec(mat: &[f64], dim: usize, x: &[C64], out: &mut [C64]) {
    let row_dot = |r: usize| {
        let row = &mat[r * dim..(r + 1) * dim];
        let mut re = 0.0;
        let mut im = 0.0;
        for (m, xv) in row.iter().zip(x.iter()) {
            re += m * xv.re;
            im += m * xv.im;
        }
        C64::new(re, im)
    };
    if dim >= PAR_DIM {
        out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row_dot(r));
    } else {
        for (r, o) in out.iter_mut().enumerate() {
            *o = row_dot(r);
        }
    }
}

/// Multiplies `block[n]` by `e^{iθn}`, building the phase ladder iteratively.
fn rotor_mul(block: &mut [C64], theta: f64) {
    let step = C64::new(0.0, theta).exp();
    let mut phase = C64::new(1.0, 0.0);
    for a in block.iter_mut() {
        *a *= phase;
        phase *= step;
    }
}

fn rotor_array(dim: usize, theta: f64) -> Vec<C64> {
    let step = C64::new(0.0, theta).exp();
    let mut out = Vec::with_capacity(dim);
    let mut phase = C64::new(1.0, 0.0);
    for _ in 0..dim {
        out.push(phase);
        phase *= step;
    }
    out
}

fn mul_elementwise(block: &mut [C64], phases: &[C64]) {
    for (a, p) in block.iter_mut().zip(phases.iter()) {
        *a *= p;
    }
}

/// One potential kick `exp(−i · strength·τ · cos(ηX + Φ))`, applied in the
/// quadrature eigenbasis.
fn potential_kick(
    basis: &MotionBasis,
    strength_tau: f64,
    cos_phi: f64,
    sin_phi: f64,
    block: &mut [C64],
    scratch: &mut [C64],
) {
    let dim = basis.n_max + 1;
    real_matvec(&basis.vt, dim, block, scratch);
    for (k, a) in scratch.iter_mut().enumerate() {
        let level = basis.cos_el[k] * cos_phi - basis.sin_el[k] * sin_phi;
        *a *= C64::new(0.0, -strength_tau * level).exp();
    }
    real_matvec(&basis.v, dim, scratch, block);
}

// Fourth-order composition of the Strang splitting (kinetic–potential).
const YOSHIDA_W1: f64 = 1.351_207_191_959_657_7;
const YOSHIDA_W0: f64 = 1.0 - 2.0 * YOSHIDA_W1;

const NORM_DRIFT_BOUND: f64 = 1e-7;

/// Propagates a co-rotating-frame state from `t0` to `t1` under the drive,
/// building the quadrature basis on the fly. Use [`evolve_with_basis`] to
/// amortize the eigendecomposition across calls.
pub fn evolve(state: &JointState, t0: f64, t1: f64, p: &DriveParams) -> Result<JointState> {
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    evolve_with_basis(&basis, state, t0, t1, p)
}

/// Split-step propagation: exact free rotation interleaved with potential
/// kicks diagonal in the quadrature eigenbasis, composed to fourth order.
/// Every factor is unitary, so norm drift stays at rounding level.
pub fn evolve_with_basis(
    basis: &MotionBasis,
    state: &JointState,
    t0: f64,
    t1: f64,
    p: &DriveParams,
) -> Result<JointState> {
    p.validate()?;
    if basis.n_max != p.n_max || state.n_max != p.n_max {
        return Err(Error::DimensionMismatch { expected: p.n_max, got: state.n_max.min(basis.n_max) });
    }
    if t1 < t0 {
        return Err(Error::InvalidParams(format!("evolve: t1 = {t1} < t0 = {t0}")));
    }
    if t1 == t0 {
        return Ok(state.clone());
    }
    let dim = p.n_max + 1;
    let steps = ((t1 - t0) / p.dt).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let amp_h = p.drive_amp_h;
    let amp_t = p.amp_t();
    let omega_r = p.omega_z + p.delta;
    let norm_in = state.norm();

    let mut h_block = state.amp.row(0).to_vec();
    let mut t_block = state.amp.row(1).to_vec();
    // into the lab frame
    rotor_mul(&mut h_block, -p.omega_z * t0);
    rotor_mul(&mut t_block, -p.omega_z * t0);

    let kin1 = rotor_array(dim, -p.omega_z * YOSHIDA_W1 * h / 2.0);
    let kin0 = rotor_array(dim, -p.omega_z * YOSHIDA_W0 * h / 2.0);
    let mut scratch = vec![C64::new(0.0, 0.0); dim];
    let mut clock = t0;

    for _ in 0..steps {
        for (w, kin) in [(YOSHIDA_W1, &kin1), (YOSHIDA_W0, &kin0), (YOSHIDA_W1, &kin1)] {
            let tau = w * h;
            mul_elementwise(&mut h_block, kin);
            mul_elementwise(&mut t_block, kin);
            clock += tau / 2.0;
            if amp_h != 0.0 {
                let phi = p.phase - omega_r * clock;
                let (sin_phi, cos_phi) = phi.sin_cos();
                potential_kick(basis, amp_h * tau, cos_phi, sin_phi, &mut h_block, &mut scratch);
                potential_kick(basis, amp_t * tau, cos_phi, sin_phi, &mut t_block, &mut scratch);
            }
            mul_elementwise(&mut h_block, kin);
            mul_elementwise(&mut t_block, kin);
            clock += tau / 2.0;
        }
    }

    // back to the co-rotating frame
    rotor_mul(&mut h_block, p.omega_z * t1);
    rotor_mul(&mut t_block, p.omega_z * t1);

    let mut out = JointState::zeros(p.n_max);
    for (n, a) in h_block.into_iter().enumerate() {
        out.amp[[0, n]] = a;
    }
    for (n, a) in t_block.into_iter().enumerate() {
        out.amp[[1, n]] = a;
    }
    let drift = (out.norm() - norm_in).abs();
    if drift > NORM_DRIFT_BOUND {
        return Err(Error::NormDrift { drift, bound: NORM_DRIFT_BOUND });
    }
    Ok(out)
}

/// Interaction-picture drive Hamiltonian at time `t`:
///
/// ```text
/// H_I(t) = Σ_s (amp_s/2) |s⟩⟨s| ⊗ [e^{i(φ − ω_R t)} W(t) + h.c.],
/// W(t) = R†(t) · e^{iηX} · R(t),   R(t) = e^{−i ω_z t a†a},   ω_R = ω_z + δ
/// ```
///
/// This is the frame representation of the traveling-wave potential
/// integrated by [`evolve`]; it retains all orders in `η` (the coupling
/// inherits the generalized-Laguerre suppression at high `n`) and every
/// motional sideband.
pub fn drive_hamiltonian(t: f64, p: &DriveParams) -> Result<JointOperator> {
    p.validate()?;
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    let e = basis.exp_i_eta_x();
    let dim = p.n_max + 1;
    let phi = p.phase - (p.omega_z + p.delta) * t;
    let front = C64::new(0.0, phi).exp();
    let mut blocks = Vec::with_capacity(2);
    for amp in [p.drive_amp_h, p.amp_t()] {
        let mut entries = Array2::<C64>::zeros((dim, dim));
        for r in 0..dim {
            for c in 0..dim {
                // W(t)_{rc} = E_{rc} e^{iω_z t (r − c)}
                let w = e.entries[[r, c]] * C64::new(0.0, p.omega_z * t * (r as f64 - c as f64)).exp();
                let w_dag = e.entries[[c, r]].conj()
                    * C64::new(0.0, p.omega_z * t * (r as f64 - c as f64)).exp();
                entries[[r, c]] = 0.5 * amp * (front * w + front.conj() * w_dag);
            }
        }
        blocks.push(MotionalOperator { n_max: p.n_max, entries });
    }
    Ok(JointOperator::from_coin_blocks(&blocks[0], &blocks[1]))
}

/// One experimental walk step starting at `t0` on the continuous drive
/// clock: drive for `t_d/2 · duration_scale`, exchange the coin populations
/// with `R(π,0)`, drive again, and close with a second `R(π,0)`. The
/// π-pulses double as spin echos, which is what equalizes the step size of
/// the two branches despite `F_T = −(3/2) F_H`.
///
/// Returns the stepped state and the clock after the step.
pub fn experimental_step_at(
    basis: &MotionBasis,
    state: &JointState,
    p: &DriveParams,
    t0: f64,
) -> Result<(JointState, f64)> {
    let seg = p.t_d / 2.0 * p.duration_scale;
    let echo = pi_pulse();
    let mut s = evolve_with_basis(basis, state, t0, t0 + seg, p)?;
    s = apply_coin(&s, &echo);
    s = evolve_with_basis(basis, &s, t0 + seg, t0 + 2.0 * seg, p)?;
    s = apply_coin(&s, &echo);
    s.check_tail()?;
    Ok((s, t0 + 2.0 * seg))
}

/// [`experimental_step_at`] with the step's own clock starting at zero.
pub fn experimental_step(state: &JointState, p: &DriveParams) -> Result<JointState> {
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    Ok(experimental_step_at(&basis, state, p, 0.0)?.0)
}

fn nbar_after_coin_and_step(basis: &MotionBasis, p: &DriveParams) -> Result<f64> {
    let state = apply_coin(&JointState::ground(p.n_max), &toss());
    let (stepped, _) = experimental_step_at(basis, &state, p, 0.0)?;
    Ok(stepped.number_expectation())
}

const CALIBRATION_TOL: f64 = 1e-3;

/// Root-finds the drive amplitude so the mean phonon number after one full
/// coin-plus-step from `|T⟩ ⊗ |0⟩` equals `target_nbar`. Deterministic
/// bracketing bisection; the bracket opens around the Lamb-Dicke estimate
/// `amp ≈ Δ·δ/(η(1 − force_ratio))` with `Δ = √target`.
pub fn calibrate_step(p: &DriveParams, target_nbar: f64) -> Result<DriveParams> {
    p.validate()?;
    if target_nbar <= 0.0 {
        return Err(Error::InvalidParams(format!("target n̄ = {target_nbar} must be > 0")));
    }
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    let delta_step = target_nbar.sqrt();
    let amp_ld = delta_step * p.delta.abs() / (p.eta * (1.0 - p.force_ratio).abs());

    let eval = |amp: f64| -> Result<f64> {
        let mut q = p.clone();
        q.drive_amp_h = amp;
        Ok(nbar_after_coin_and_step(&basis, &q)? - target_nbar)
    };

    let mut lo = amp_ld / 4.0;
    let mut hi = amp_ld * 4.0;
    let mut f_lo = eval(lo)?;
    let mut f_hi = eval(hi)?;
    for _ in 0..4 {
        if f_lo.signum() != f_hi.signum() {
            break;
        }
        lo /= 2.0;
        hi *= 2.0;
        f_lo = eval(lo)?;
        f_hi = eval(hi)?;
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoBracket { target: target_nbar, lo, hi });
    }

    let mut mid = 0.5 * (lo + hi);
    let mut f_mid = eval(mid)?;
    for _ in 0..60 {
        if hi - lo < 1e-13 * amp_ld {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        mid = 0.5 * (lo + hi);
        f_mid = eval(mid)?;
    }
    if f_mid.abs() > CALIBRATION_TOL {
        return Err(Error::NoBracket { target: target_nbar, lo, hi });
    }
    let mut out = p.clone();
    out.drive_amp_h = mid;
    Ok(out)
}

/// Full-physics walk from `|T⟩ ⊗ |0⟩`: alternating `R(π/2, −π/2)` and
/// [`experimental_step_at`] on a continuous clock. Position weights in the
/// report use the readout estimator with grid spacing `√n̄(1)` measured from
/// the walk's own first step.
pub fn run_dynamics_walk(n_steps: usize, p: &DriveParams) -> Result<(JointState, WalkReport)> {
    run_dynamics_walk_from(JointState::ground(p.n_max), n_steps, p)
}

/// Same protocol from an arbitrary initial state.
pub fn run_dynamics_walk_from(
    initial: JointState,
    n_steps: usize,
    p: &DriveParams,
) -> Result<(JointState, WalkReport)> {
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    run_walk_with_basis(&basis, initial, n_steps, p)
}

fn run_walk_with_basis(
    basis: &MotionBasis,
    initial: JointState,
    n_steps: usize,
    p: &DriveParams,
) -> Result<(JointState, WalkReport)> {
    if p.drive_amp_h <= 0.0 {
        return Err(Error::InvalidParams(
            "run_dynamics_walk: drive_amp_h not calibrated (≤ 0)".into(),
        ));
    }
    let coin = toss();
    let mut state = initial;
    let mut t = 0.0;
    let mut nbar_first = None;
    for _ in 0..n_steps {
        state = apply_coin(&state, &coin);
        let (next, t_next) = experimental_step_at(basis, &state, p, t)?;
        state = next;
        t = t_next;
        nbar_first.get_or_insert_with(|| state.number_expectation());
    }
    let delta_est = C64::new(nbar_first.unwrap_or(1.0).max(1e-12).sqrt(), 0.0);
    let report = report_from_state(&state, n_steps, delta_est)?;
    Ok((state, report))
}

/// Runs the three-step walk at each relative pulse duration; deterministic
/// and parallel across scales, merged in input order.
pub fn duration_sweep(rel_scales: &[f64], p: &DriveParams) -> Result<Vec<(f64, f64, f64)>> {
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    rel_scales
        .par_iter()
        .map(|&scale| {
            let q = p.clone().with_duration_scale(scale);
            let (_, report) = run_walk_with_basis(&basis, JointState::ground(q.n_max), 3, &q)?;
            Ok((scale, report.p_h, report.p_t))
        })
        .collect()
}

/// Per-step record of the walk-depth study.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub n_bar: f64,
    /// Fidelity against the exact-displacement tier after this many steps.
    pub fidelity_cum: f64,
    /// Ratio of consecutive cumulative fidelities: the cost of this step.
    pub fidelity_step: f64,
    pub quad_var_min: f64,
    pub quad_var_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLimitStudy {
    pub records: Vec<StepRecord>,
    /// Step at which the truncation tail bound ended the study, if any.
    pub truncated_at: Option<usize>,
}

/// Walks until `max_steps` or truncation, comparing each step against the
/// ideal displacement walk of the same measured step size and tracking the
/// quadrature-variance squeezing of the dominant branch.
pub fn step_limit_study(p: &DriveParams, max_steps: usize) -> Result<StepLimitStudy> {
    if p.drive_amp_h <= 0.0 {
        return Err(Error::InvalidParams("step_limit_study: drive_amp_h not calibrated".into()));
    }
    let basis = MotionBasis::new(p.eta, p.n_max)?;
    let coin = toss();
    let mut state = JointState::ground(p.n_max);
    let mut ideal = JointState::ground(p.n_max);
    let mut ideal_op: Option<JointOperator> = None;
    let mut records = Vec::new();
    let mut truncated_at = None;
    let mut t = 0.0;
    let mut prev_fid = 1.0;

    for k in 1..=max_steps {
        state = apply_coin(&state, &coin);
        match experimental_step_at(&basis, &state, p, t) {
            Ok((next, t_next)) => {
                state = next;
                t = t_next;
            }
            Err(Error::Truncation { .. }) => {
                truncated_at = Some(k);
                break;
            }
            Err(e) => return Err(e),
        }
        if ideal_op.is_none() {
            let delta = C64::new(state.number_expectation().max(1e-12).sqrt(), 0.0);
            ideal_op = Some(crate::walk::conditional_step_operator(delta, p.n_max)?);
        }
        ideal = apply_coin(&ideal, &coin);
        ideal = ideal_op.as_ref().unwrap().apply(&ideal)?;

        let fid = crate::hilbert::fidelity(&state, &ideal)?;
        let (branch, weight_t) = state.branch(crate::hilbert::Coin::T);
        let (branch_h, _) = state.branch(crate::hilbert::Coin::H);
        let dominant = if weight_t >= 0.5 { branch } else { branch_h };
        let (v_min, v_max) = quadrature_variances(&dominant);
        records.push(StepRecord {
            step: k,
            n_bar: state.number_expectation(),
            fidelity_cum: fid,
            fidelity_step: fid / prev_fid,
            quad_var_min: v_min,
            quad_var_max: v_max,
        });
        prev_fid = fid;
    }
    Ok(StepLimitStudy { records, truncated_at })
}

/// Minimum and maximum variance of the rotated quadratures
/// `X_θ = (a e^{−iθ} + a† e^{iθ})/√2` over θ; both equal 1/2 for a coherent
/// state, and the minimum drops below 1/2 under squeezing.
pub fn quadrature_variances(v: &MotionalVector) -> (f64, f64) {
    let norm_sqr = v.norm_sqr();
    if norm_sqr <= 0.0 {
        return (0.5, 0.5);
    }
    let dim = v.amp.len();
    let mut a_mean = C64::new(0.0, 0.0);
    let mut a_sq = C64::new(0.0, 0.0);
    let mut n_mean = 0.0;
    for n in 0..dim {
        let c = v.amp[n];
        n_mean += n as f64 * c.norm_sqr();
        if n + 1 < dim {
            a_mean += c.conj() * v.amp[n + 1] * ((n + 1) as f64).sqrt();
        }
        if n + 2 < dim {
            a_sq += c.conj() * v.amp[n + 2] * (((n + 1) * (n + 2)) as f64).sqrt();
        }
    }
    a_mean /= norm_sqr;
    a_sq /= norm_sqr;
    n_mean /= norm_sqr;
    let n_fluct = n_mean - a_mean.norm_sqr();
    let da_sq = (a_sq - a_mean * a_mean).norm();
    ((0.5 + n_fluct - da_sq).max(0.0), 0.5 + n_fluct + da_sq)
}
