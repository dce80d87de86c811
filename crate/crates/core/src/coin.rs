//! SU(2) rotations of the internal-state qubit and their action on joint
//! states.

use num_complex::Complex64 as C64;

use crate::hilbert::{CoinOperator, JointState};

/// Coin rotation in the `(H, T)` basis:
///
/// ```text
/// R(θ, φ) = [[cos(θ/2),            −i e^{−iφ} sin(θ/2)],
///            [−i e^{+iφ} sin(θ/2),  cos(θ/2)          ]]
/// ```
///
/// `θ` is set by the rf-pulse duration, `φ` by its phase.
pub fn rotation(theta: f64, phi: f64) -> CoinOperator {
    let c = C64::new((theta / 2.0).cos(), 0.0);
    let s = (theta / 2.0).sin();
    let i = C64::new(0.0, 1.0);
    let off_upper = -i * (-i * phi).exp() * s;
    let off_lower = -i * (i * phi).exp() * s;
    CoinOperator { entries: [[c, off_upper], [off_lower, c]] }
}

/// The coin toss used by every walk protocol, `R(π/2, −π/2)`.
pub fn toss() -> CoinOperator {
    rotation(std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2)
}

/// Population-exchange pulse `R(π, 0)`.
pub fn pi_pulse() -> CoinOperator {
    rotation(std::f64::consts::PI, 0.0)
}

/// `(C ⊗ I_motion) |state⟩`. Global phases are kept.
pub fn apply_coin(state: &JointState, c: &CoinOperator) -> JointState {
    let mut out = JointState::zeros(state.n_max);
    let m = &c.entries;
    for n in 0..=state.n_max {
        let h = state.amp[[0, n]];
        let t = state.amp[[1, n]];
        out.amp[[0, n]] = m[0][0] * h + m[0][1] * t;
        out.amp[[1, n]] = m[1][0] * h + m[1][1] * t;
    }
    out
}
