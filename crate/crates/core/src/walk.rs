//! Walk protocols on the ideal tiers: the exact discrete-line oracle, the
//! exact-displacement coherent-state walk, the impulsive-step variant, the
//! classical comparator, and spreading statistics.
//!
//! Step convention: `T` moves the walker to `i + 1`, `H` to `i − 1`. All
//! asymmetry signs in reports follow from this.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::coin::{apply_coin, toss};
use crate::error::{Error, Result};
use crate::hilbert::{
    displacement_operator, displace_in_place, Coin, JointOperator, JointState,
};
use crate::readout::{total_position_distribution, PositionReadout};

/// Default step magnitude: `Δ = √1.33`, so the mean phonon number after the
/// first step matches the calibration point `n̄(1) = 1.33`.
pub const DEFAULT_STEP_ALPHA: f64 = 1.1533;

/// Exact amplitudes of the ideal walk, indexed by integer position. Each
/// map entry holds the `(H, T)` amplitude pair at that position.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineWalkState {
    pub entries: BTreeMap<i32, [C64; 2]>,
}

impl LineWalkState {
    /// `|coin⟩ ⊗ |i⟩`.
    pub fn delta(coin: Coin, position: i32) -> Self {
        let mut entries = BTreeMap::new();
        let mut amp = [C64::new(0.0, 0.0); 2];
        amp[coin.index()] = C64::new(1.0, 0.0);
        entries.insert(position, amp);
        Self { entries }
    }

    /// Walker with coin `(c_H |H⟩ + c_T |T⟩)` at position `i`.
    pub fn with_coin(coin_amp: [C64; 2], position: i32) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(position, coin_amp);
        Self { entries }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries
            .values()
            .map(|a| a[0].norm_sqr() + a[1].norm_sqr())
            .sum()
    }

    pub fn amplitude(&self, coin: Coin, position: i32) -> C64 {
        self.entries
            .get(&position)
            .map(|a| a[coin.index()])
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    /// `(P_H, P_T)`.
    pub fn coin_probs(&self) -> (f64, f64) {
        let mut ph = 0.0;
        let mut pt = 0.0;
        for a in self.entries.values() {
            ph += a[0].norm_sqr();
            pt += a[1].norm_sqr();
        }
        (ph, pt)
    }

    /// Position distribution, summed over the coin.
    pub fn position_probs(&self) -> BTreeMap<i32, f64> {
        self.entries
            .iter()
            .map(|(&i, a)| (i, a[0].norm_sqr() + a[1].norm_sqr()))
            .collect()
    }
}

/// One coin-then-shift iteration of the line walk.
fn line_step(state: &LineWalkState, coin: &crate::hilbert::CoinOperator) -> LineWalkState {
    let m = &coin.entries;
    let mut next: BTreeMap<i32, [C64; 2]> = BTreeMap::new();
    for (&i, amp) in &state.entries {
        let h = m[0][0] * amp[0] + m[0][1] * amp[1];
        let t = m[1][0] * amp[0] + m[1][1] * amp[1];
        if h != C64::new(0.0, 0.0) {
            next.entry(i - 1).or_insert([C64::new(0.0, 0.0); 2])[0] += h;
        }
        if t != C64::new(0.0, 0.0) {
            next.entry(i + 1).or_insert([C64::new(0.0, 0.0); 2])[1] += t;
        }
    }
    LineWalkState { entries: next }
}

/// Runs the exact line walk: alternating coin and conditional shift,
/// `n_steps` times from `initial`.
pub fn line_walk(
    n_steps: usize,
    coin: &crate::hilbert::CoinOperator,
    initial: &LineWalkState,
) -> LineWalkState {
    let mut state = initial.clone();
    for _ in 0..n_steps {
        state = line_step(&state, coin);
    }
    state
}

/// Symmetric classical random walk: binomial distribution on the parity
/// lattice `{−N, −N+2, …, N}`.
pub fn classical_walk(n_steps: usize) -> BTreeMap<i32, f64> {
    let mut probs = BTreeMap::new();
    if n_steps == 0 {
        probs.insert(0, 1.0);
        return probs;
    }
    // binomial coefficients by the multiplicative recurrence
    let mut c = 1.0f64;
    let scale = 0.5f64.powi(n_steps as i32);
    for k in 0..=n_steps {
        let i = 2 * k as i32 - n_steps as i32;
        probs.insert(i, c * scale);
        c = c * (n_steps - k) as f64 / (k + 1) as f64;
    }
    probs
}

/// Conditional step operator `|T⟩⟨T| ⊗ D(+δ) + |H⟩⟨H| ⊗ D(−δ)`.
pub fn conditional_step_operator(delta: C64, n_max: usize) -> Result<JointOperator> {
    let d_minus = displacement_operator(-delta, n_max)?;
    let d_plus = displacement_operator(delta, n_max)?;
    Ok(JointOperator::from_coin_blocks(&d_minus, &d_plus))
}

/// Summary of a walk run on any tier.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkReport {
    pub step_count: usize,
    pub p_h: f64,
    pub p_t: f64,
    pub n_bar: f64,
    /// Position weights `P_{α_i}`, estimated by the readout chain for the
    /// Fock-space tiers and exact for the line oracle.
    pub position_probs: BTreeMap<i32, f64>,
}

/// Exact-displacement tier from `|T⟩ ⊗ |0⟩`: alternating `R(π/2, −π/2)` and
/// conditional displacement by `±delta`. Position weights in the report come
/// from the readout estimator on the grid `−N ..= N`.
pub fn run_phase_walk(n_steps: usize, delta: C64, n_max: usize) -> Result<(JointState, WalkReport)> {
    run_phase_walk_from(JointState::ground(n_max), n_steps, delta)
}

/// Same protocol from an arbitrary initial state.
pub fn run_phase_walk_from(
    initial: JointState,
    n_steps: usize,
    delta: C64,
) -> Result<(JointState, WalkReport)> {
    let n_max = initial.n_max;
    let step = conditional_step_operator(delta, n_max)?;
    let coin = toss();
    let mut state = initial;
    for _ in 0..n_steps {
        state = apply_coin(&state, &coin);
        state = step.apply(&state)?;
    }
    state.check_tail()?;
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NormDrift { drift: (norm - 1.0).abs(), bound: 1e-9 });
    }
    let report = report_from_state(&state, n_steps, delta)?;
    Ok((state, report))
}

/// Builds a [`WalkReport`] for a Fock-space walk state: coin trace, mean
/// phonon number, and readout-estimated position weights.
pub fn report_from_state(state: &JointState, n_steps: usize, delta: C64) -> Result<WalkReport> {
    let (p_h, p_t) = state.coin_probs();
    let n = n_steps as i32;
    let readout = PositionReadout::exact();
    let position_probs = total_position_distribution(state, delta, -n..=n, &readout)?;
    Ok(WalkReport {
        step_count: n_steps,
        p_h,
        p_t,
        n_bar: state.number_expectation(),
        position_probs,
    })
}

/// Impulsive-step walk: steps are instantaneous coin-conditioned
/// displacements of magnitude `|kick|`, all along the direction of `kick`.
/// Applies displacements matrix-free, so truncations large enough for
/// hundreds of steps stay tractable.
///
/// Position weights in the report are taken from the line oracle (the
/// displace-back readout grid is impractical at large step counts).
pub fn impulsive_walk(
    n_steps: usize,
    kick: C64,
    n_max: usize,
) -> Result<(JointState, WalkReport)> {
    impulsive_walk_directed(n_steps, kick, |_| 0.0, n_max)
}

/// Impulsive walk with a configurable phase-space direction per step: step
/// `k` displaces by `±kick · e^{i·step_phase(k)}`.
pub fn impulsive_walk_directed(
    n_steps: usize,
    kick: C64,
    step_phase: impl Fn(usize) -> f64,
    n_max: usize,
) -> Result<(JointState, WalkReport)> {
    let excursion = n_steps as f64 * kick.norm();
    let needed = (excursion * excursion + 6.0 * excursion + 10.0).ceil() as usize;
    if n_max < needed {
        return Err(Error::InvalidParams(format!(
            "impulsive_walk: n_max = {n_max} below {needed} needed for |kick| = {:.3}, N = {n_steps}",
            kick.norm()
        )));
    }
    let coin = toss();
    let mut state = JointState::ground(n_max);
    for k in 0..n_steps {
        state = apply_coin(&state, &coin);
        let dir = C64::new(0.0, step_phase(k)).exp();
        let v = kick * dir;
        let (mut h_block, mut t_block) = split_blocks(&state);
        displace_in_place(-v, &mut h_block);
        displace_in_place(v, &mut t_block);
        state = join_blocks(h_block, t_block, n_max);
    }
    state.check_tail()?;
    let (p_h, p_t) = state.coin_probs();
    let oracle = line_walk(n_steps, &coin, &LineWalkState::delta(Coin::T, 0));
    let report = WalkReport {
        step_count: n_steps,
        p_h,
        p_t,
        n_bar: state.number_expectation(),
        position_probs: oracle.position_probs(),
    };
    Ok((state, report))
}

fn split_blocks(state: &JointState) -> (Vec<C64>, Vec<C64>) {
    (state.amp.row(0).to_vec(), state.amp.row(1).to_vec())
}

fn join_blocks(h: Vec<C64>, t: Vec<C64>, n_max: usize) -> JointState {
    let mut state = JointState::zeros(n_max);
    for (n, a) in h.into_iter().enumerate() {
        state.amp[[0, n]] = a;
    }
    for (n, a) in t.into_iter().enumerate() {
        state.amp[[1, n]] = a;
    }
    state
}

/// First and second moments of a position distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadStats {
    pub mean: f64,
    pub variance: f64,
    pub std_dev: f64,
}

/// Moments of a (not necessarily normalized) position distribution.
pub fn spread_statistics(dist: &BTreeMap<i32, f64>) -> Result<SpreadStats> {
    let total: f64 = dist.values().sum();
    if dist.is_empty() || total <= 0.0 {
        return Err(Error::EmptyDistribution);
    }
    let mean = dist.iter().map(|(&i, &p)| i as f64 * p).sum::<f64>() / total;
    let second = dist.iter().map(|(&i, &p)| (i as f64).powi(2) * p).sum::<f64>() / total;
    let variance = second - mean * mean;
    Ok(SpreadStats { mean, variance, std_dev: variance.max(0.0).sqrt() })
}

/// Coin-symmetric initial condition `((|H⟩ + i|T⟩)/√2) ⊗ |0⟩`; with the
/// standard toss this spreads without drift, which is the cleanest setting
/// for ballistic-scaling measurements.
pub fn symmetric_initial() -> LineWalkState {
    let s = 1.0 / 2.0f64.sqrt();
    LineWalkState::with_coin([C64::new(s, 0.0), C64::new(0.0, s)], 0)
}

/// Gram-matrix oracle: coin-branch probability of a line-walk state realized
/// on the coherent grid `|i·delta⟩`, from closed-form overlaps alone. Used to
/// cross-check the phase walk without touching Fock space.
pub fn gram_branch_probability(state: &LineWalkState, coin: Coin, delta: C64) -> f64 {
    let amps: Vec<(i32, C64)> = state
        .entries
        .iter()
        .map(|(&i, a)| (i, a[coin.index()]))
        .filter(|(_, a)| a.norm_sqr() > 0.0)
        .collect();
    let mut prob = 0.0;
    for (j, cj) in &amps {
        for (k, ck) in &amps {
            let aj = delta * *j as f64;
            let ak = delta * *k as f64;
            let overlap = crate::hilbert::coherent_overlap_exact(aj, ak);
            prob += (cj.conj() * ck * overlap).re;
        }
    }
    prob
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, motional_fidelity};
    use approx::assert_abs_diff_eq;

    fn ideal_start() -> LineWalkState {
        LineWalkState::delta(Coin::T, 0)
    }

    #[test]
    fn zero_steps_is_identity() {
        let s = line_walk(0, &toss(), &ideal_start());
        assert_eq!(s, ideal_start());
    }

    #[test]
    fn three_step_amplitudes_match_ideal_pattern() {
        // Ψ3 ∝ |H⟩(|−3⟩ + |+1⟩) + |T⟩(−|−1⟩ − 2|+1⟩ + |+3⟩), weights 1/√8
        let s = line_walk(3, &toss(), &ideal_start());
        let w = 1.0 / 8.0f64.sqrt();
        let expect: &[(Coin, i32, f64)] = &[
            (Coin::H, -3, w),
            (Coin::H, 1, w),
            (Coin::T, -1, -w),
            (Coin::T, 1, -2.0 * w),
            (Coin::T, 3, w),
        ];
        for &(c, i, amp) in expect {
            assert!(
                (s.amplitude(c, i) - C64::new(amp, 0.0)).norm() < 1e-12,
                "amp({c}, {i}) = {}",
                s.amplitude(c, i)
            );
        }
        assert!(s.amplitude(Coin::H, -1).norm() < 1e-12);
        assert!(s.amplitude(Coin::H, 3).norm() < 1e-12);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_step_coin_and_position_probabilities() {
        let s = line_walk(3, &toss(), &ideal_start());
        let (ph, pt) = s.coin_probs();
        assert_abs_diff_eq!(pt, 6.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ph, 2.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pt / ph, 3.0, epsilon = 1e-9);
        let pos = s.position_probs();
        assert_abs_diff_eq!(pos[&-3], 1.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[&-1], 1.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[&1], 5.0 / 8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pos[&3], 1.0 / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetry_first_appears_at_step_three() {
        for n in [1usize, 2] {
            let s = line_walk(n, &toss(), &ideal_start());
            let (ph, _) = s.coin_probs();
            assert_abs_diff_eq!(ph, 0.5, epsilon = 1e-12);
        }
        let (ph3, _) = line_walk(3, &toss(), &ideal_start()).coin_probs();
        assert!((ph3 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn support_respects_parity_and_range() {
        for n in 1..=5usize {
            let s = line_walk(n, &toss(), &ideal_start());
            for &i in s.entries.keys() {
                assert!(i.unsigned_abs() as usize <= n);
                assert_eq!((i.rem_euclid(2)) as usize, n % 2);
            }
        }
    }

    #[test]
    fn classical_distributions() {
        let c1 = classical_walk(1);
        assert_abs_diff_eq!(c1[&-1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c1[&1], 0.5, epsilon = 1e-15);
        let c2 = classical_walk(2);
        assert_abs_diff_eq!(c2[&0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c2[&2], 0.25, epsilon = 1e-15);
        let c3 = classical_walk(3);
        assert_abs_diff_eq!(c3[&-3], 1.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c3[&-1], 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c3[&1], 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c3[&3], 1.0 / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn conditional_step_displaces_tails_branch() {
        let delta = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        let n_max = 64;
        let step = conditional_step_operator(delta, n_max).unwrap();
        let out = step.apply(&JointState::ground(n_max)).unwrap();
        let (vt, wt) = out.branch(Coin::T);
        assert!((wt - 1.0).abs() < 1e-10);
        let expect = coherent_state(delta, n_max).unwrap();
        assert!(motional_fidelity(&vt, &expect).unwrap() > 1.0 - 1e-10);

        // entangled first step from the coin superposition
        let sup = apply_coin(&JointState::ground(n_max), &toss());
        let entangled = step.apply(&sup).unwrap();
        let (vh, wh) = entangled.branch(Coin::H);
        let (vt2, wt2) = entangled.branch(Coin::T);
        assert!((wh - 0.5).abs() < 1e-9 && (wt2 - 0.5).abs() < 1e-9);
        let minus = coherent_state(-delta, n_max).unwrap();
        let plus = coherent_state(delta, n_max).unwrap();
        assert!(motional_fidelity(&vh.normalized(), &minus).unwrap() > 1.0 - 1e-9);
        assert!(motional_fidelity(&vt2.normalized(), &plus).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn phase_walk_matches_gram_oracle() {
        let delta = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        let (state, report) = run_phase_walk(3, delta, 128).unwrap();
        let oracle_state = line_walk(3, &toss(), &ideal_start());
        let pt_oracle = gram_branch_probability(&oracle_state, Coin::T, delta);
        // cross terms nearly cancel: P_T = 3/4 − e^{−8Δ²}/4
        let closed = 0.75 - (-8.0 * DEFAULT_STEP_ALPHA * DEFAULT_STEP_ALPHA).exp() / 4.0;
        assert!((pt_oracle - closed).abs() < 1e-12);
        assert!((report.p_t - pt_oracle).abs() < 1e-9);
        assert!((report.p_t - 0.750).abs() < 2e-4);
        assert!((state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn phase_walk_first_step_energy() {
        let delta = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        let (state, report) = run_phase_walk(1, delta, 64).unwrap();
        assert_abs_diff_eq!(state.number_expectation(), 1.330, epsilon = 1e-3);
        assert_abs_diff_eq!(report.n_bar, DEFAULT_STEP_ALPHA * DEFAULT_STEP_ALPHA, epsilon = 1e-9);
    }

    #[test]
    fn phase_walk_amplitudes_equal_line_walk_via_gram_projection() {
        // Project the Fock-space state onto the coherent grid and compare
        // with the line amplitudes; for collinear real displacements the
        // geometric phases vanish and agreement is exact.
        use ndarray::{Array1, Array2};
        use ndarray_linalg::Solve;

        let delta = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        let n_steps = 3;
        let (state, _) = run_phase_walk(n_steps, delta, 128).unwrap();
        let oracle = line_walk(n_steps, &toss(), &ideal_start());

        for coin in [Coin::H, Coin::T] {
            let (branch, _) = state.branch(coin);
            let grid: Vec<i32> = (-(n_steps as i32)..=n_steps as i32).collect();
            let dim = grid.len();
            let mut gram = Array2::<C64>::zeros((dim, dim));
            let mut proj = Array1::<C64>::zeros(dim);
            for (r, &j) in grid.iter().enumerate() {
                let alpha_j = delta * j as f64;
                for (c, &k) in grid.iter().enumerate() {
                    gram[[r, c]] =
                        crate::hilbert::coherent_overlap_exact(alpha_j, delta * k as f64);
                }
                let cs = coherent_state(alpha_j, state.n_max).unwrap();
                proj[r] = cs.overlap(&branch).unwrap();
            }
            let coeff = gram.solve(&proj).unwrap();
            for (c, &i) in grid.iter().enumerate() {
                let expect = oracle.amplitude(coin, i);
                assert!(
                    (coeff[c] - expect).norm() < 1e-7,
                    "coin {coin}, position {i}: {} vs {expect}",
                    coeff[c]
                );
            }
        }
    }

    #[test]
    fn coin_probabilities_agree_between_tiers_up_to_overlap_bound() {
        let delta = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        // nearest grid spacing Δ bounds any pairwise overlap
        let s_max = (-DEFAULT_STEP_ALPHA * DEFAULT_STEP_ALPHA / 2.0).exp();
        let bound = 5.0 * s_max * s_max;
        // within a branch, occupied sites differ by 2Δ; worst case is the
        // constructive H-branch pair at N = 2, deviation e^{−2Δ²}/2
        let sharp = (-2.0 * DEFAULT_STEP_ALPHA * DEFAULT_STEP_ALPHA).exp();
        for n in 1..=5usize {
            // truncation sized for the readout grid's displace-back reach
            let (_, report) = run_phase_walk(n, delta, 256).unwrap();
            let (ph, _) = line_walk(n, &toss(), &ideal_start()).coin_probs();
            let diff = (report.p_h - ph).abs();
            assert!(diff < bound, "N = {n}: {} vs {ph} (bound {bound:.2e})", report.p_h);
            assert!(diff <= sharp + 1e-9, "N = {n}: diff {diff:.4e} above e^(-2Δ²)");
        }
        // the N = 2 bias is exact coherent-walk physics, not error
        let (_, r2) = run_phase_walk(2, delta, 128).unwrap();  // N = 2 fits at 128
        assert_abs_diff_eq!(r2.p_h, 0.5 + sharp / 2.0, epsilon = 1e-6);
    }

    #[test]
    fn orthogonal_limit_recovers_line_distribution() {
        // Δ = 2.5 makes neighbor overlaps e^{−2Δ²} ≈ 4e-6: effectively the
        // orthogonal limit, while displace-back excursions still fit.
        let delta = C64::new(2.5, 0.0);
        let (_, report) = run_phase_walk(3, delta, 512).unwrap();
        let oracle = line_walk(3, &toss(), &ideal_start()).position_probs();
        for (&i, &p) in &report.position_probs {
            let expect = oracle.get(&i).copied().unwrap_or(0.0);
            assert!((p - expect).abs() < 1e-3, "position {i}: {p} vs {expect}");
        }
    }

    #[test]
    fn impulsive_collinear_equals_phase_walk() {
        let kick = C64::new(DEFAULT_STEP_ALPHA, 0.0);
        let n_max = 128;
        let (imp, _) = impulsive_walk(3, kick, n_max).unwrap();
        let (phase, _) = run_phase_walk(3, kick, n_max).unwrap();
        let diff: f64 = imp
            .amp
            .iter()
            .zip(phase.amp.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-9, "state difference {diff:.2e}");
    }

    #[test]
    fn impulsive_rejects_undersized_truncation() {
        let err = impulsive_walk(50, C64::new(DEFAULT_STEP_ALPHA, 0.0), 256).unwrap_err();
        assert!(matches!(err, Error::InvalidParams(_)));
    }

    #[test]
    fn spread_statistics_values() {
        let mut delta_dist = BTreeMap::new();
        delta_dist.insert(2, 1.0);
        let s = spread_statistics(&delta_dist).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean, 2.0);

        let c3 = spread_statistics(&classical_walk(3)).unwrap();
        assert_abs_diff_eq!(c3.variance, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c3.mean, 0.0, epsilon = 1e-12);

        // quantum N = 3 moments from the Fig.-4 ideal values:
        // mean = (−3 − 1 + 5 + 3)/8 = 1/2, ⟨i²⟩ = 3, variance = 3 − 1/4
        let q3 = spread_statistics(&line_walk(3, &toss(), &ideal_start()).position_probs()).unwrap();
        assert_abs_diff_eq!(q3.mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q3.variance, 2.75, epsilon = 1e-12);

        assert!(matches!(
            spread_statistics(&BTreeMap::new()),
            Err(Error::EmptyDistribution)
        ));
    }

    #[test]
    fn ballistic_versus_diffusive_spreading() {
        // slope of σ(N) for the oracle vs √N classically, N ∈ [10, 100]
        let coin = toss();
        let init = symmetric_initial();
        let mut ratio_at_100 = 0.0;
        let mut prev_sigma = 0.0;
        for n in (10..=100).step_by(10) {
            let q = spread_statistics(&line_walk(n, &coin, &init).position_probs()).unwrap();
            let c = spread_statistics(&classical_walk(n)).unwrap();
            assert!(q.std_dev > prev_sigma, "σ must grow with N");
            prev_sigma = q.std_dev;
            if n == 100 {
                ratio_at_100 = q.std_dev / c.std_dev;
            }
        }
        assert!(ratio_at_100 > 5.0, "σ_q/σ_c = {ratio_at_100:.2} at N = 100");

        // linear fit σ_q(N) ≈ a·N: ballistic slope is stable across N
        let slopes: Vec<f64> = (10..=100)
            .step_by(10)
            .map(|n| {
                let q = spread_statistics(&line_walk(n, &coin, &init).position_probs()).unwrap();
                q.std_dev / n as f64
            })
            .collect();
        let mean_slope = slopes.iter().sum::<f64>() / slopes.len() as f64;
        for s in &slopes {
            assert!((s - mean_slope).abs() < 0.05 * mean_slope + 0.02);
        }
    }
}
