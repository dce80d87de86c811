//! Truncated-Fock-space representation of a single motional mode and the
//! coin ⊗ motion joint space: states, coherent states, displacement
//! operators, overlaps, and expectation values.
//!
//! All operators are dense in the Fock basis. The displacement phase
//! convention is fixed crate-wide: `D(β) D(α) = exp(i Im(β α*)) D(α + β)`.

use ndarray::{Array1, Array2, s};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tail-probability bound accepted by downstream operations.
pub const TAIL_BOUND: f64 = 1e-6;

/// Unitarity defect bound, checked on the lower 90% of the basis.
pub const UNITARITY_BOUND: f64 = 1e-8;

/// Internal-state (coin) label. Basis convention: `|H⟩ = (1,0)ᵀ`,
/// `|T⟩ = (0,1)ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coin {
    H = 0,
    T = 1,
}

impl Coin {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Coin {
        match self {
            Coin::H => Coin::T,
            Coin::T => Coin::H,
        }
    }
}

impl std::fmt::Display for Coin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coin::H => write!(f, "H"),
            Coin::T => write!(f, "T"),
        }
    }
}

/// State of the motional mode alone: `amp[n]` is the amplitude on `|n⟩`,
/// `0 ≤ n ≤ n_max`. Sub-normalized vectors are allowed (branch selections).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionalVector {
    pub n_max: usize,
    pub amp: Array1<C64>,
}

impl MotionalVector {
    pub fn zeros(n_max: usize) -> Self {
        Self { n_max, amp: Array1::zeros(n_max + 1) }
    }

    /// The Fock state `|n⟩`.
    pub fn fock(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max, "fock index {n} above n_max {n_max}");
        let mut v = Self::zeros(n_max);
        v.amp[n] = C64::new(1.0, 0.0);
        v
    }

    pub fn vacuum(n_max: usize) -> Self {
        Self::fock(0, n_max)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Fock populations `|amp[n]|²` (not renormalized).
    pub fn populations(&self) -> Vec<f64> {
        self.amp.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probability in the top `fraction` of retained Fock levels.
    pub fn tail_probability(&self, fraction: f64) -> f64 {
        let dim = self.amp.len();
        let cut = ((1.0 - fraction) * dim as f64).floor() as usize;
        self.amp.slice(s![cut..]).iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rejects states whose truncation tail exceeds [`TAIL_BOUND`].
    pub fn check_tail(&self) -> Result<()> {
        let tail = self.tail_probability(0.1);
        if tail > TAIL_BOUND {
            return Err(Error::Truncation { tail, bound: TAIL_BOUND, n_max: self.n_max });
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.n_max != other.n_max {
            return Err(Error::DimensionMismatch { expected: self.n_max, got: other.n_max });
        }
        Ok(self.amp.iter().zip(other.amp.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// Mean phonon number of the normalized state: `Σ n |amp[n]|² / Σ |amp[n]|²`.
    pub fn number_expectation(&self) -> f64 {
        let norm_sqr = self.norm_sqr();
        if norm_sqr == 0.0 {
            return 0.0;
        }
        self.amp
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum::<f64>()
            / norm_sqr
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self { n_max: self.n_max, amp: self.amp.mapv(|a| a / n) }
    }
}

/// Joint state of coin ⊗ motion. Row 0 of `amp` is the `|H⟩` motional
/// component, row 1 the `|T⟩` component.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub n_max: usize,
    pub amp: Array2<C64>,
}

impl JointState {
    pub fn zeros(n_max: usize) -> Self {
        Self { n_max, amp: Array2::zeros((2, n_max + 1)) }
    }

    /// The walk's initial state `|T⟩ ⊗ |0⟩`.
    pub fn ground(n_max: usize) -> Self {
        Self::from_product(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], &MotionalVector::vacuum(n_max))
    }

    /// `|T⟩ ⊗ |n⟩`, for thermal-ensemble initial conditions.
    pub fn tails_fock(n: usize, n_max: usize) -> Self {
        Self::from_product(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], &MotionalVector::fock(n, n_max))
    }

    /// Product state `(c_H |H⟩ + c_T |T⟩) ⊗ |v⟩`.
    pub fn from_product(coin_amp: &[C64; 2], v: &MotionalVector) -> Self {
        let mut amp = Array2::zeros((2, v.n_max + 1));
        for (c, mut row) in coin_amp.iter().zip(amp.rows_mut()) {
            row.assign(&v.amp.mapv(|a| a * c));
        }
        Self { n_max: v.n_max, amp }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self|other⟩`, summed over coin and motion.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.n_max != other.n_max {
            return Err(Error::DimensionMismatch { expected: self.n_max, got: other.n_max });
        }
        Ok(self.amp.iter().zip(other.amp.iter()).map(|(a, b)| a.conj() * b).sum())
    }

    /// `(P_H, P_T)` of the (normalized) coin.
    pub fn coin_probs(&self) -> (f64, f64) {
        let ph: f64 = self.amp.row(0).iter().map(|a| a.norm_sqr()).sum();
        let pt: f64 = self.amp.row(1).iter().map(|a| a.norm_sqr()).sum();
        let norm = ph + pt;
        (ph / norm, pt / norm)
    }

    /// Unnormalized motional component for one coin outcome, with its weight.
    pub fn branch(&self, coin: Coin) -> (MotionalVector, f64) {
        let amp = self.amp.row(coin.index()).to_owned();
        let weight = amp.iter().map(|a| a.norm_sqr()).sum::<f64>() / self.norm_sqr();
        (MotionalVector { n_max: self.n_max, amp }, weight)
    }

    /// Mean phonon number, summed over both coin components.
    pub fn number_expectation(&self) -> f64 {
        let norm_sqr = self.norm_sqr();
        if norm_sqr == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for row in self.amp.rows() {
            for (n, a) in row.iter().enumerate() {
                acc += n as f64 * a.norm_sqr();
            }
        }
        acc / norm_sqr
    }

    pub fn tail_probability(&self, fraction: f64) -> f64 {
        let dim = self.amp.ncols();
        let cut = ((1.0 - fraction) * dim as f64).floor() as usize;
        self.amp.slice(s![.., cut..]).iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn check_tail(&self) -> Result<()> {
        let tail = self.tail_probability(0.1);
        if tail > TAIL_BOUND {
            return Err(Error::Truncation { tail, bound: TAIL_BOUND, n_max: self.n_max });
        }
        Ok(())
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { n_max: self.n_max, amp: self.amp.mapv(|a| a * c) }
    }
}

/// Dense operator on the motional mode.
#[derive(Debug, Clone)]
pub struct MotionalOperator {
    pub n_max: usize,
    pub entries: Array2<C64>,
}

impl MotionalOperator {
    pub fn identity(n_max: usize) -> Self {
        Self { n_max, entries: Array2::eye(n_max + 1) }
    }

    pub fn apply(&self, v: &MotionalVector) -> Result<MotionalVector> {
        if v.n_max != self.n_max {
            return Err(Error::DimensionMismatch { expected: self.n_max, got: v.n_max });
        }
        Ok(MotionalVector { n_max: self.n_max, amp: self.entries.dot(&v.amp) })
    }

    /// `max |（U†U − I)_{jk}|` over the lower `fraction` of the basis; the
    /// truncation edge is excluded from unitarity checks.
    pub fn unitarity_defect(&self, fraction: f64) -> f64 {
        let prod = self.entries.t().mapv(|a| a.conj()).dot(&self.entries);
        let cut = ((fraction * (self.n_max + 1) as f64).ceil() as usize).min(self.n_max + 1);
        let mut defect = 0.0f64;
        for j in 0..cut {
            for k in 0..cut {
                let expect = if j == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                defect = defect.max((prod[[j, k]] - expect).norm());
            }
        }
        defect
    }
}

/// Dense operator on coin ⊗ motion, stored with joint index
/// `c · (n_max + 1) + n`.
#[derive(Debug, Clone)]
pub struct JointOperator {
    pub n_max: usize,
    pub entries: Array2<C64>,
}

impl JointOperator {
    /// Block-diagonal operator `|H⟩⟨H| ⊗ op_h + |T⟩⟨T| ⊗ op_t`.
    pub fn from_coin_blocks(op_h: &MotionalOperator, op_t: &MotionalOperator) -> Self {
        assert_eq!(op_h.n_max, op_t.n_max);
        let dim = op_h.n_max + 1;
        let mut entries = Array2::zeros((2 * dim, 2 * dim));
        entries.slice_mut(s![..dim, ..dim]).assign(&op_h.entries);
        entries.slice_mut(s![dim.., dim..]).assign(&op_t.entries);
        Self { n_max: op_h.n_max, entries }
    }

    pub fn apply(&self, state: &JointState) -> Result<JointState> {
        if state.n_max != self.n_max {
            return Err(Error::DimensionMismatch { expected: self.n_max, got: state.n_max });
        }
        let dim = self.n_max + 1;
        let flat: Array1<C64> = state
            .amp
            .rows()
            .into_iter()
            .flat_map(|r| r.to_vec())
            .collect();
        let out = self.entries.dot(&flat);
        let mut amp = Array2::zeros((2, dim));
        amp.row_mut(0).assign(&out.slice(s![..dim]));
        amp.row_mut(1).assign(&out.slice(s![dim..]));
        Ok(JointState { n_max: self.n_max, amp })
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let dim = self.entries.nrows();
        for j in 0..dim {
            for k in j..dim {
                if (self.entries[[j, k]] - self.entries[[k, j]].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// 2×2 coin operator in the `(H, T)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinOperator {
    pub entries: [[C64; 2]; 2],
}

impl CoinOperator {
    pub fn identity() -> Self {
        Self {
            entries: [
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            ],
        }
    }

    /// `max |(C†C − I)_{jk}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let c = &self.entries;
        let mut defect = 0.0f64;
        for j in 0..2 {
            for k in 0..2 {
                let mut prod = C64::new(0.0, 0.0);
                for l in 0..2 {
                    prod += c[l][j].conj() * c[l][k];
                }
                let expect = if j == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                defect = defect.max((prod - expect).norm());
            }
        }
        defect
    }
}

/// Coherent state `|α⟩`: `amp[n] = exp(−|α|²/2) αⁿ/√(n!)`, evaluated by the
/// ratio recurrence `amp[n+1] = amp[n] · α/√(n+1)` so no factorial is ever
/// formed explicitly.
pub fn coherent_state(alpha: C64, n_max: usize) -> Result<MotionalVector> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidParams("coherent_state: non-finite alpha".into()));
    }
    let mut amp = Array1::zeros(n_max + 1);
    let mut a = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..=n_max {
        amp[n] = a;
        a *= alpha / ((n + 1) as f64).sqrt();
    }
    let v = MotionalVector { n_max, amp };
    // Exact Poisson tail of the discarded levels.
    let tail = (1.0 - v.norm_sqr()).max(0.0);
    if tail > TAIL_BOUND {
        return Err(Error::Truncation { tail, bound: TAIL_BOUND, n_max });
    }
    Ok(v)
}

/// Displacement operator `D(α) = exp(α a† − α* a)`, built by
/// eigendecomposition of the Hermitian generator `i(α a† − α* a)`.
pub fn displacement_operator(alpha: C64, n_max: usize) -> Result<MotionalOperator> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidParams("displacement_operator: non-finite alpha".into()));
    }
    let dim = n_max + 1;
    let i = C64::new(0.0, 1.0);
    // G = i(α a† − α* a); G_{n+1,n} = i α √(n+1), G_{n,n+1} = −i α* √(n+1).
    let mut gen = Array2::<C64>::zeros((dim, dim));
    for n in 0..n_max {
        let root = ((n + 1) as f64).sqrt();
        gen[[n + 1, n]] = i * alpha * root;
        gen[[n, n + 1]] = -i * alpha.conj() * root;
    }
    let (vals, vecs) = gen.eigh(UPLO::Lower)?;
    // The backend diagonalizes the conjugate of a row-major Hermitian
    // input, so the true eigenvectors are the conjugated columns.
    let vecs = vecs.mapv(|a| a.conj());
    // D = exp(−i G_diag) rotated back: V e^{−iλ} V†.
    let phases: Array1<C64> = vals.mapv(|l| (-i * l).exp());
    let scaled = &vecs * &phases; // columns scaled by e^{−iλ}
    let entries = scaled.dot(&vecs.t().mapv(|a| a.conj()));
    let op = MotionalOperator { n_max, entries };
    let defect = op.unitarity_defect(0.9);
    if defect > UNITARITY_BOUND {
        return Err(Error::UnitarityDefect { defect, bound: UNITARITY_BOUND, n_max });
    }
    Ok(op)
}

/// Applies `D(α)` to `amp` in place without forming the dense matrix:
/// scaled Taylor expansion of the generator action, `O(len)` per term.
/// Intended for large truncations where the dense operator is impractical.
pub fn displace_in_place(alpha: C64, amp: &mut [C64]) {
    let dim = amp.len();
    if dim == 0 || alpha == C64::new(0.0, 0.0) {
        return;
    }
    // ‖α a† − α* a‖₂ ≤ 2|α|√dim; substeps keep each Taylor argument ≤ ~0.5.
    let bound = 2.0 * alpha.norm() * (dim as f64).sqrt();
    let substeps = (2.0 * bound).ceil().max(1.0) as usize;
    let sub_alpha = alpha / substeps as f64;

    let scale: f64 = amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let mut term = vec![C64::new(0.0, 0.0); dim];
    let mut next = vec![C64::new(0.0, 0.0); dim];
    for _ in 0..substeps {
        term.copy_from_slice(amp);
        for k in 1..=40usize {
            // next = (α a† − α* a) · term / k
            let inv_k = 1.0 / k as f64;
            next[0] = -sub_alpha.conj() * term[1] * inv_k;
            for m in 1..dim - 1 {
                next[m] = (sub_alpha * (m as f64).sqrt() * term[m - 1]
                    - sub_alpha.conj() * ((m + 1) as f64).sqrt() * term[m + 1])
                    * inv_k;
            }
            next[dim - 1] = sub_alpha * ((dim - 1) as f64).sqrt() * term[dim - 2] * inv_k;
            std::mem::swap(&mut term, &mut next);
            let mut tnorm = 0.0f64;
            for (a, t) in amp.iter_mut().zip(term.iter()) {
                *a += t;
                tnorm += t.norm_sqr();
            }
            if tnorm.sqrt() < 1e-16 * scale {
                break;
            }
        }
    }
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &JointState, b: &JointState) -> Result<f64> {
    Ok(a.overlap(b)?.norm_sqr())
}

/// `|⟨a|b⟩|²` for motional states.
pub fn motional_fidelity(a: &MotionalVector, b: &MotionalVector) -> Result<f64> {
    Ok(a.overlap(b)?.norm_sqr())
}

/// Closed-form coherent overlap `⟨α|β⟩ = exp(−(|α|²+|β|²)/2 + α* β)`.
/// Used as an independent oracle against the Fock-basis inner product.
pub fn coherent_overlap_exact(alpha: C64, beta: C64) -> C64 {
    ((-(alpha.norm_sqr() + beta.norm_sqr()) / 2.0) + alpha.conj() * beta).exp()
}

/// Applies the lowering operator `a` to a motional vector.
pub fn lowering_apply(v: &MotionalVector) -> MotionalVector {
    let mut amp = Array1::zeros(v.n_max + 1);
    for n in 1..=v.n_max {
        amp[n - 1] = v.amp[n] * (n as f64).sqrt();
    }
    MotionalVector { n_max: v.n_max, amp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    const STEP_ALPHA: f64 = 1.1533;

    #[test]
    fn vacuum_is_trivial() {
        let v = coherent_state(C64::new(0.0, 0.0), 32).unwrap();
        assert_eq!(v.amp[0], C64::new(1.0, 0.0));
        assert!(v.amp.iter().skip(1).all(|a| a.norm() == 0.0));
    }

    #[test]
    fn ground_state_overlap_matches_closed_form() {
        // |⟨0|α⟩| = e^{−|α|²/2}; direct summation is the production path,
        // the closed form is the oracle.
        let alpha = C64::new(STEP_ALPHA, 0.0);
        let v = coherent_state(alpha, 64).unwrap();
        let vac = MotionalVector::vacuum(64);
        let got = vac.overlap(&v).unwrap().norm();
        let expect = (-alpha.norm_sqr() / 2.0).exp();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        assert_abs_diff_eq!(got, 0.5143, epsilon = 5e-4);
    }

    #[test]
    fn coherent_number_expectation_is_poisson_mean() {
        let v = coherent_state(C64::new(STEP_ALPHA, 0.0), 64).unwrap();
        let expect = STEP_ALPHA * STEP_ALPHA; // 1.3301: fixes the step size
        assert!((v.number_expectation() - expect).abs() / expect < 1e-6);
        assert_abs_diff_eq!(v.number_expectation(), 1.330, epsilon = 1e-3);
    }

    #[test]
    fn coherent_truncation_rejected_when_too_small() {
        let err = coherent_state(C64::new(3.0, 0.0), 12).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn displacement_of_zero_is_identity() {
        let d = displacement_operator(C64::new(0.0, 0.0), 24).unwrap();
        let eye = Array2::<C64>::eye(25);
        let diff = (&d.entries - &eye).iter().map(|a| a.norm()).fold(0.0f64, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn displacement_generates_coherent_state() {
        let alpha = C64::new(STEP_ALPHA, 0.0);
        let d = displacement_operator(alpha, 64).unwrap();
        let got = d.apply(&MotionalVector::vacuum(64)).unwrap();
        let expect = coherent_state(alpha, 64).unwrap();
        for (g, e) in got.amp.iter().zip(expect.amp.iter()) {
            assert!((g - e).norm() < 1e-8);
        }
    }

    #[test]
    fn displacement_inverse_composes_to_identity() {
        let alpha = C64::new(STEP_ALPHA, 0.4);
        let d = displacement_operator(alpha, 48).unwrap();
        let dinv = displacement_operator(-alpha, 48).unwrap();
        let prod = dinv.entries.dot(&d.entries);
        let cut = (0.9f64 * 49.0).ceil() as usize;
        for j in 0..cut {
            for k in 0..cut {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((prod[[j, k]] - expect).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn displacement_composition_phase() {
        // D(β)D(α) = e^{i Im(β α*)} D(α+β), probed on the vacuum for 20
        // seeded pairs.
        let mut rng = crate::rng::stream_rng(0x5eed, 1);
        for _ in 0..20 {
            let alpha = C64::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let beta = C64::new(rng.gen_range(-1.2..1.2), rng.gen_range(-1.2..1.2));
            let n_max = 96;
            let da = displacement_operator(alpha, n_max).unwrap();
            let db = displacement_operator(beta, n_max).unwrap();
            let lhs = db.apply(&da.apply(&MotionalVector::vacuum(n_max)).unwrap()).unwrap();
            let rhs = coherent_state(alpha + beta, n_max).unwrap();
            let got = rhs.overlap(&lhs).unwrap();
            let expect = (C64::new(0.0, 1.0) * (beta * alpha.conj()).im).exp();
            assert!((got - expect).norm() < 1e-7, "phase mismatch: {got} vs {expect}");
        }
    }

    #[test]
    fn displacement_preserves_norm_of_random_states() {
        let mut rng = crate::rng::stream_rng(0x5eed, 2);
        let n_max = 64;
        let d = displacement_operator(C64::new(0.7, -0.3), n_max).unwrap();
        for _ in 0..5 {
            let amp: Array1<C64> = (0..=n_max)
                .map(|n| {
                    // keep support far from the truncation edge
                    let w = (-(n as f64) / 6.0).exp();
                    C64::new(rng.gen_range(-1.0..1.0) * w, rng.gen_range(-1.0..1.0) * w)
                })
                .collect();
            let norm = amp.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let v = MotionalVector { n_max, amp: amp.mapv(|a| a / norm) };
            let w = d.apply(&v).unwrap();
            assert!((w.norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn coherent_state_is_lowering_eigenvector() {
        for &(re, im) in &[(0.5, 0.0), (1.5, 1.0), (2.0, -2.2), (3.0, 0.0)] {
            let alpha = C64::new(re, im);
            let n_max = (alpha.norm_sqr() + 6.0 * alpha.norm() + 12.0).ceil() as usize;
            let v = coherent_state(alpha, n_max).unwrap();
            let lowered = lowering_apply(&v);
            let diff: f64 = lowered
                .amp
                .iter()
                .zip(v.amp.iter())
                .map(|(l, a)| (l - alpha * a).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(diff < 1e-6, "a|α⟩ ≠ α|α⟩ for α = {alpha}: residual {diff:.2e}");
        }
    }

    #[test]
    fn overlap_of_opposite_coherent_states() {
        let alpha = C64::new(STEP_ALPHA, 0.0);
        let a = coherent_state(alpha, 64).unwrap();
        let b = coherent_state(-alpha, 64).unwrap();
        let got = a.overlap(&b).unwrap();
        let expect = coherent_overlap_exact(alpha, -alpha);
        assert!((got - expect).norm() < 1e-10);
        assert_abs_diff_eq!(got.re, 0.0699, epsilon = 1e-4);
    }

    #[test]
    fn overlap_trivia() {
        let a = coherent_state(C64::new(0.9, 0.3), 48).unwrap();
        assert!((a.overlap(&a).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-9);
        let f0 = MotionalVector::fock(0, 8);
        let f1 = MotionalVector::fock(1, 8);
        assert_eq!(f0.overlap(&f1).unwrap(), C64::new(0.0, 0.0));
        let short = MotionalVector::vacuum(4);
        assert!(f0.overlap(&short).is_err());
    }

    #[test]
    fn fidelity_of_coherent_states_matches_closed_form() {
        let alpha = C64::new(0.8, 0.0);
        let beta = C64::new(-0.4, 0.6);
        let a = JointState::from_product(
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            &coherent_state(alpha, 48).unwrap(),
        );
        let b = JointState::from_product(
            &[C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            &coherent_state(beta, 48).unwrap(),
        );
        let got = fidelity(&a, &b).unwrap();
        let expect = (-(alpha - beta).norm_sqr()).exp();
        assert!((got - expect).abs() < 1e-9);
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let orth = JointState::from_product(
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            &coherent_state(alpha, 48).unwrap(),
        );
        assert!(fidelity(&a, &orth).unwrap() < 1e-15);
    }

    #[test]
    fn reported_scalars_stable_under_truncation_doubling() {
        let alpha = C64::new(STEP_ALPHA, 0.2);
        let lo = coherent_state(alpha, 64).unwrap();
        let hi = coherent_state(alpha, 128).unwrap();
        assert!((lo.norm() - hi.norm()).abs() < 1e-6);
        assert!((lo.number_expectation() - hi.number_expectation()).abs() < 1e-6);
        let beta = C64::new(-0.5, 0.1);
        let lo_b = coherent_state(beta, 64).unwrap();
        let hi_b = coherent_state(beta, 128).unwrap();
        let o_lo = lo.overlap(&lo_b).unwrap();
        let o_hi = hi.overlap(&hi_b).unwrap();
        assert!((o_lo - o_hi).norm() < 1e-6);
    }

    #[test]
    fn displace_in_place_matches_dense_operator() {
        let alpha = C64::new(0.9, -0.5);
        let n_max = 96;
        let d = displacement_operator(alpha, n_max).unwrap();
        let start = coherent_state(C64::new(-0.6, 0.2), n_max).unwrap();
        let dense = d.apply(&start).unwrap();
        let mut amp: Vec<C64> = start.amp.to_vec();
        displace_in_place(alpha, &mut amp);
        for (got, expect) in amp.iter().zip(dense.amp.iter()) {
            assert!((got - expect).norm() < 1e-9);
        }
    }

    #[test]
    fn branch_selection_weights() {
        let v = coherent_state(C64::new(0.7, 0.0), 32).unwrap();
        let s = JointState::from_product(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], &v);
        let (vt, wt) = s.branch(Coin::T);
        assert!((wt - 1.0).abs() < 1e-12);
        assert!((vt.norm() - 1.0).abs() < 1e-12);
        let (vh, wh) = s.branch(Coin::H);
        assert!(wh < 1e-15);
        assert!(vh.norm() < 1e-15);
    }
}
