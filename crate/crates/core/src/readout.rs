//! Emulation of the experimental measurement chain: coin-branch transfer,
//! displace-back, blue-sideband flopping, population extraction, the
//! position-distribution estimator, and fluorescence shot noise.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use ndarray_linalg::SVD;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::dynamics::sideband_rabi_curve;
use crate::error::{Error, Result};
use crate::hilbert::{displace_in_place, Coin, JointState, MotionalVector};
use crate::nnls::nnls;
use crate::rng::stream_rng;

/// Blue-sideband flopping record: ideal `P_T(t)` per sampling time, plus an
/// optional shot-noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopTrace {
    pub times: Vec<f64>,
    pub p_t: Vec<f64>,
    /// Bright-outcome counts per point; present iff `shots_per_point > 0`.
    pub counts: Option<Vec<u64>>,
    pub shots_per_point: u64,
}

/// Estimated Fock populations with per-bin uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEstimate {
    pub p_n: Vec<f64>,
    pub sigma_n: Vec<f64>,
    pub residual: f64,
}

/// Transfers the population of the unwanted coin state out of the cycling
/// transition (modeled as an ideal branch selection): returns the
/// unnormalized motional component for `coin` and its weight.
pub fn branch_select(state: &JointState, coin: Coin) -> (MotionalVector, f64) {
    state.branch(coin)
}

/// Coherently displaces the motional state `i` grid units back toward the
/// origin: `D(−i·delta)·v`.
pub fn displace_back(v: &MotionalVector, i: i32, delta: C64) -> Result<MotionalVector> {
    let mut amp = v.amp.to_vec();
    displace_in_place(-delta * i as f64, &mut amp);
    let out = MotionalVector { n_max: v.n_max, amp: amp.into() };
    out.check_tail()?;
    Ok(out)
}

/// Simulates blue-sideband flopping `|T,n⟩ ↔ |H,n+1⟩` of a population
/// mixture:
///
/// ```text
/// P_T(t) = 1/2 + (1/2) Σ_n p_n cos(Ω_{n,n+1} t) e^{−decay·(n+1)^0.7·t}
/// ```
///
/// with the exact (all orders in η) sideband Rabi frequencies. When
/// `shots_per_point > 0` a binomial shot-noise realization is attached,
/// seeded per point so results are independent of evaluation order.
pub fn simulate_bsb_flopping(
    populations: &[f64],
    times: &[f64],
    eta: f64,
    omega: f64,
    decay_rate: f64,
    shots_per_point: u64,
    seed: u64,
) -> Result<FlopTrace> {
    if populations.is_empty() {
        return Err(Error::InvalidParams("simulate_bsb_flopping: empty populations".into()));
    }
    if times.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParams("simulate_bsb_flopping: negative time".into()));
    }
    let rabi = sideband_rabi_curve(eta, omega, populations.len())?;
    let p_t: Vec<f64> = times
        .iter()
        .map(|&t| {
            let sum: f64 = populations
                .iter()
                .enumerate()
                .map(|(n, &p)| {
                    let damp = (-decay_rate * ((n + 1) as f64).powf(0.7) * t).exp();
                    p * (rabi.exact[n] * t).cos() * damp
                })
                .sum();
            0.5 + 0.5 * sum
        })
        .collect();
    let counts = (shots_per_point > 0).then(|| {
        p_t.iter()
            .enumerate()
            .map(|(k, &p)| {
                let mut rng = stream_rng(seed, k as u64);
                Binomial::new(shots_per_point, p.clamp(0.0, 1.0))
                    .unwrap()
                    .sample(&mut rng)
            })
            .collect()
    });
    Ok(FlopTrace { times: times.to_vec(), p_t, counts, shots_per_point })
}

const BOOTSTRAP_RESAMPLES: usize = 100;
const BOOTSTRAP_SEED: u64 = 0xB007;
const CONDITION_BOUND: f64 = 1e8;

/// Recovers Fock populations from a flopping trace by nonnegative least
/// squares on the known-frequency cosine basis.
///
/// The counts, when present, define the fitted signal and a parametric
/// bootstrap supplies `sigma_n`; a noiseless trace is fit directly with
/// zero uncertainty.
pub fn extract_populations(
    trace: &FlopTrace,
    n_fit_max: usize,
    eta: f64,
    omega: f64,
) -> Result<PopulationEstimate> {
    extract_with_basis(trace, n_fit_max, eta, omega, FitBasis::Nnls)
}

/// Fit basis for [`extract_with_basis`]: the default nonnegative
/// least-squares fit, or a windowed discrete Fourier projection onto the
/// sideband frequencies (closer to the historical analysis, leakier since
/// the `Ω_{n,n+1}` are incommensurate).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitBasis {
    Nnls,
    FourierProjection,
}

pub fn extract_with_basis(
    trace: &FlopTrace,
    n_fit_max: usize,
    eta: f64,
    omega: f64,
    basis: FitBasis,
) -> Result<PopulationEstimate> {
    let m = trace.times.len();
    if m < 2 || n_fit_max == 0 {
        return Err(Error::InvalidParams("extract_populations: trace or basis too small".into()));
    }
    let rabi = sideband_rabi_curve(eta, omega, n_fit_max)?;
    let duration = trace.times[m - 1] - trace.times[0];
    if n_fit_max >= 2 {
        let split = (rabi.exact[0] - rabi.exact[1]).abs();
        let required = 2.0 * std::f64::consts::PI / split.max(f64::MIN_POSITIVE);
        if duration < required {
            return Err(Error::TraceTooShort { duration, required });
        }
    }

    let signal: Vec<f64> = match &trace.counts {
        Some(c) => c.iter().map(|&k| k as f64 / trace.shots_per_point as f64).collect(),
        None => trace.p_t.clone(),
    };
    let b: Array1<f64> = signal.iter().map(|&y| y - 0.5).collect();
    let a = design_matrix(&trace.times, &rabi.exact[..n_fit_max]);

    if let FitBasis::FourierProjection = basis {
        // windowed projection onto each cosine, normalized per column
        let hann: Vec<f64> = (0..m)
            .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (m - 1) as f64).cos())
            .collect();
        let mut p_n = vec![0.0; n_fit_max];
        for n in 0..n_fit_max {
            let num: f64 = (0..m).map(|k| hann[k] * a[[k, n]] * b[k]).sum();
            let den: f64 = (0..m).map(|k| hann[k] * a[[k, n]] * a[[k, n]]).sum();
            p_n[n] = (num / den).max(0.0);
        }
        let resid = {
            let model = a.dot(&Array1::from(p_n.clone()));
            (&b - &model).iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        return Ok(PopulationEstimate { p_n, sigma_n: vec![0.0; n_fit_max], residual: resid });
    }

    check_conditioning(&a)?;
    let (x, residual) = nnls(&a, &b)?;
    let p_n = x.to_vec();

    let sigma_n = match &trace.counts {
        None => vec![0.0; n_fit_max],
        Some(counts) => {
            let shots = trace.shots_per_point;
            let mut acc = vec![0.0f64; n_fit_max];
            let mut acc_sq = vec![0.0f64; n_fit_max];
            for r in 0..BOOTSTRAP_RESAMPLES {
                let resampled: Array1<f64> = counts
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| {
                        let p = (c as f64 / shots as f64).clamp(0.0, 1.0);
                        let mut rng =
                            stream_rng(BOOTSTRAP_SEED, (r * m + k) as u64);
                        Binomial::new(shots, p).unwrap().sample(&mut rng) as f64 / shots as f64
                            - 0.5
                    })
                    .collect();
                let (xr, _) = nnls(&a, &resampled)?;
                for n in 0..n_fit_max {
                    acc[n] += xr[n];
                    acc_sq[n] += xr[n] * xr[n];
                }
            }
            let inv = 1.0 / BOOTSTRAP_RESAMPLES as f64;
            (0..n_fit_max)
                .map(|n| {
                    let mean = acc[n] * inv;
                    (acc_sq[n] * inv - mean * mean).max(0.0).sqrt()
                })
                .collect()
        }
    };

    Ok(PopulationEstimate { p_n, sigma_n, residual })
}

fn design_matrix(times: &[f64], freqs: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((times.len(), freqs.len()), |(k, n)| {
        0.5 * (freqs[n] * times[k]).cos()
    })
}

fn check_conditioning(a: &Array2<f64>) -> Result<()> {
    let (_, sv, _) = a
        .svd(false, false)
        .map_err(|e| Error::Linalg(format!("conditioning check: {e}")))?;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > CONDITION_BOUND {
        return Err(Error::IllConditioned { cond });
    }
    Ok(())
}

/// Knobs for the position-distribution estimator.
#[derive(Debug, Clone)]
pub struct PositionReadout {
    pub mode: ReadoutMode,
    /// Highest Fock level used in the fits; derived from the grid extent
    /// when `None`.
    pub n_fit_max: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum ReadoutMode {
    /// Read Fock populations of each displaced state exactly.
    Exact,
    /// Run each displaced state through the sideband-flopping chain.
    Flopping {
        times: Vec<f64>,
        eta: f64,
        omega: f64,
        decay_rate: f64,
        shots_per_point: u64,
        seed: u64,
    },
}

impl PositionReadout {
    pub fn exact() -> Self {
        Self { mode: ReadoutMode::Exact, n_fit_max: None }
    }
}

/// Position-distribution estimator for one coin branch.
///
/// For each grid point `i`: select the branch, displace back `i` units, and
/// read the Fock populations (exactly or through the flopping chain). One
/// joint nonnegative least squares then fits all measured population
/// vectors to an incoherent mixture of coherent-state Poisson profiles on
/// the displaced grid; the mixture weights are the reported `P_{α_i}`.
///
/// Weights sum to the branch probability (up to residual-overlap error);
/// summing the `H` and `T` calls gives the full walker distribution.
pub fn position_distribution(
    state: &JointState,
    coin: Coin,
    delta: C64,
    grid: RangeInclusive<i32>,
    readout: &PositionReadout,
) -> Result<BTreeMap<i32, f64>> {
    let (branch, weight) = branch_select(state, coin);
    let grid: Vec<i32> = grid.collect();
    if grid.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if weight < 1e-14 {
        return Ok(grid.iter().map(|&i| (i, 0.0)).collect());
    }

    // Poisson means of every (grid shift, component) pair fix the fit range.
    let span = (grid[grid.len() - 1] - grid[0]) as f64;
    let max_mean = (span * delta.norm()).powi(2);
    let mut n_fit = readout
        .n_fit_max
        .unwrap_or((max_mean + 6.0 * max_mean.sqrt() + 10.0).ceil() as usize)
        .min(state.n_max + 1);
    if let ReadoutMode::Flopping { eta, omega, .. } = &readout.mode {
        // sideband spectroscopy cannot resolve levels past the Ω_{n,n+1}
        // reflection, where the cosine basis degenerates
        if let Some(zero) = sideband_rabi_curve(*eta, *omega, n_fit)?.first_sign_change() {
            n_fit = n_fit.min(zero.saturating_sub(2).max(2));
        }
    }

    // measured population vectors, one per grid point
    let mut measured: Vec<Vec<f64>> = Vec::with_capacity(grid.len());
    for &i in &grid {
        let displaced = displace_back(&branch, i, delta)?;
        let populations = match &readout.mode {
            ReadoutMode::Exact => {
                let mut p = displaced.populations();
                p.truncate(n_fit);
                p
            }
            ReadoutMode::Flopping { times, eta, omega, decay_rate, shots_per_point, seed } => {
                let normalized = displaced.normalized();
                let mut p = normalized.populations();
                p.truncate(n_fit);
                let trace = simulate_bsb_flopping(
                    &p,
                    times,
                    *eta,
                    *omega,
                    *decay_rate,
                    *shots_per_point,
                    seed.wrapping_add(i as u64),
                )?;
                let est = extract_populations(&trace, n_fit, *eta, *omega)?;
                let branch_weight = displaced.norm_sqr();
                est.p_n.iter().map(|&p| p * branch_weight).collect()
            }
        };
        measured.push(populations);
    }

    // joint fit: rows (grid point, Fock level), columns candidate positions
    let rows = grid.len() * n_fit;
    let cols = grid.len();
    let mut a = Array2::<f64>::zeros((rows, cols));
    let mut b = Array1::<f64>::zeros(rows);
    for (gi, &i) in grid.iter().enumerate() {
        for (gj, &j) in grid.iter().enumerate() {
            let mean = (delta * (j - i) as f64).norm_sqr();
            let profile = poisson_pmf(mean, n_fit);
            for (n, &p) in profile.iter().enumerate() {
                a[[gi * n_fit + n, gj]] = p;
            }
        }
        for n in 0..n_fit {
            b[gi * n_fit + n] = measured[gi].get(n).copied().unwrap_or(0.0);
        }
    }
    let (w, _) = nnls(&a, &b)?;
    Ok(grid.iter().enumerate().map(|(gj, &j)| (j, w[gj])).collect())
}

/// Naive projector estimator `|⟨α_i|ψ_branch⟩|²`; overestimates occupied
/// neighbors of the grid because the coherent positions are not orthogonal.
/// Exposed for comparison with the mixture fit.
pub fn naive_position_distribution(
    state: &JointState,
    coin: Coin,
    delta: C64,
    grid: RangeInclusive<i32>,
) -> Result<BTreeMap<i32, f64>> {
    let (branch, _) = branch_select(state, coin);
    let mut out = BTreeMap::new();
    for i in grid {
        let target = crate::hilbert::coherent_state(delta * i as f64, state.n_max)?;
        out.insert(i, target.overlap(&branch)?.norm_sqr());
    }
    Ok(out)
}

/// Mixture-fit estimator summed over both coin branches.
pub fn total_position_distribution(
    state: &JointState,
    delta: C64,
    grid: RangeInclusive<i32>,
    readout: &PositionReadout,
) -> Result<BTreeMap<i32, f64>> {
    let h = position_distribution(state, Coin::H, delta, grid.clone(), readout)?;
    let t = position_distribution(state, Coin::T, delta, grid, readout)?;
    Ok(h.iter().map(|(&i, &p)| (i, p + t[&i])).collect())
}

fn poisson_pmf(mean: f64, len: usize) -> Vec<f64> {
    let mut p = vec![0.0; len];
    if len == 0 {
        return p;
    }
    let mut v = (-mean).exp();
    for (n, slot) in p.iter_mut().enumerate() {
        *slot = v;
        v *= mean / (n + 1) as f64;
    }
    p
}

/// Outcome of a fluorescence detection run.
#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceEstimate {
    /// Photon-count histogram, indexed by count value.
    pub histogram: Vec<u64>,
    /// Counts at or above this value classify as bright (`|T⟩`).
    pub threshold: u64,
    pub p_hat: f64,
    /// Binomial standard error of `p_hat`.
    pub std_err: f64,
}

/// State-dependent fluorescence with Poisson photon statistics: each shot is
/// bright with probability `p_t`, counts are thresholded at the histogram
/// valley, and the bright fraction estimates `P_T`.
pub fn simulate_fluorescence(
    p_t: f64,
    shots: u64,
    window: f64,
    bright_rate: f64,
    dark_rate: f64,
    seed: u64,
) -> Result<FluorescenceEstimate> {
    if !(0.0..=1.0).contains(&p_t) {
        return Err(Error::InvalidParams(format!("simulate_fluorescence: p_t = {p_t}")));
    }
    if bright_rate < 0.0 || dark_rate < 0.0 || window < 0.0 || shots == 0 {
        return Err(Error::InvalidParams("simulate_fluorescence: negative rate or no shots".into()));
    }
    let bright_mean = bright_rate * window;
    let dark_mean = dark_rate * window;
    let mut histogram: Vec<u64> = Vec::new();
    let mut rng = stream_rng(seed, 0);
    for _ in 0..shots {
        let mean = if rng.gen_bool(p_t) { bright_mean } else { dark_mean };
        let counts = if mean > 0.0 { Poisson::new(mean).unwrap().sample(&mut rng) as usize } else { 0 };
        if counts >= histogram.len() {
            histogram.resize(counts + 1, 0);
        }
        histogram[counts] += 1;
    }
    let threshold = histogram_valley(&histogram, bright_mean);
    let bright: u64 = histogram.iter().skip(threshold as usize).sum();
    let p_hat = bright as f64 / shots as f64;
    let std_err = (p_hat * (1.0 - p_hat) / shots as f64).sqrt();
    Ok(FluorescenceEstimate { histogram, threshold, p_hat, std_err })
}

/// Deterministic valley threshold: the least-populated count value strictly
/// between the dark peak and the bright mean.
fn histogram_valley(histogram: &[u64], bright_mean: f64) -> u64 {
    let hi = (bright_mean.ceil() as usize).max(1).min(histogram.len().saturating_sub(1));
    let mut best_k = 1usize;
    let mut best = u64::MAX;
    for (k, &h) in histogram.iter().enumerate().take(hi + 1).skip(1) {
        if h < best {
            best = h;
            best_k = k;
        }
    }
    best_k as u64
}
