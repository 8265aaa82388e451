//! Closed-form no-jump evolution of `|S,S>_z` under `Λ Sx² - iΓ Sx²`.
//!
//! In the X basis the evolution is diagonal, so every quantity here is a
//! direct sum over `m` (and, for the QFI, over `m, k, l`). Times are handled
//! internally as the dimensionless `τ = Λt`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CVector, RMatrix, I};
use crate::spin_algebra::{top_column_closed_form, wigner_small_d, Basis, SpinQuantum, SpinState};

/// Ratio at which the `Γ/Λ → ∞` limits are evaluated. `e^{-π·1e3}` underflows
/// to zero, so the limit comes out exact without a special case.
pub const ASYMPTOTE_RATIO: f64 = 1e3;

/// Twisting rate `Λ` and collective decay rate `Γ`, both in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistParams {
    pub lambda: f64,
    pub gamma: f64,
    /// `Γ/Λ`.
    pub ratio: f64,
}

impl TwistParams {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("twisting rate must be positive, got {lambda}")));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("decay rate must be non-negative, got {gamma}")));
        }
        Ok(Self { lambda, gamma, ratio: gamma / lambda })
    }

    /// Unit twisting rate with `Γ = ratio`, for work in `Λt` units.
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        Self::new(1.0, ratio)
    }
}

/// Evolution time, either physical or scaled by the twisting rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Time {
    Seconds(f64),
    LambdaT(f64),
}

impl Time {
    /// `Λt` for the given parameters.
    pub fn scaled(self, p: &TwistParams) -> Result<f64> {
        let tau = match self {
            Time::Seconds(t) => p.lambda * t,
            Time::LambdaT(tau) => tau,
        };
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::invalid(format!("time must be non-negative, got {tau}")));
        }
        Ok(tau)
    }
}

/// `e^{i m² τ}` with `m²τ` reduced modulo `2π` first to keep the phase exact
/// for large `m`.
fn twist_phase(m: i64, tau: f64) -> Complex64 {
    let m2 = (m * m) as f64;
    Complex64::from_polar(1.0, (m2 * tau).rem_euclid(2.0 * PI))
}

/// X-basis amplitudes `D_{m,S} e^{iΛm²t} e^{-Γm²t}` before normalization.
pub fn nojump_state_unnormalized(spin: SpinQuantum, p: &TwistParams, t: Time) -> Result<SpinState> {
    let tau = t.scaled(p)?;
    let top = top_column_closed_form(spin);
    let amps = CVector::from_iterator(
        spin.dim(),
        spin.m_values().zip(&top).map(|(m, &d)| {
            let m2 = (m * m) as f64;
            twist_phase(m, tau) * (d * (-p.ratio * m2 * tau).exp())
        }),
    );
    SpinState::new(spin, Basis::X, amps)
}

/// Normalized no-jump state at time `t`, in the X basis.
pub fn nojump_state(spin: SpinQuantum, p: &TwistParams, t: Time) -> Result<SpinState> {
    nojump_state_unnormalized(spin, p, t)?.normalized()
}

/// Probability that no jump has occurred by time `t`:
/// `Σ_m e^{-2Γm²t} D²_{m,S}`.
pub fn nojump_probability(spin: SpinQuantum, p: &TwistParams, t: Time) -> Result<f64> {
    let tau = t.scaled(p)?;
    Ok(weighted_top_sum(spin, 2.0 * p.ratio * tau))
}

/// `Σ_m e^{-a m²} D²_{m,S}`.
fn weighted_top_sum(spin: SpinQuantum, a: f64) -> f64 {
    let top = top_column_closed_form(spin);
    spin.m_values().zip(&top).map(|(m, &d)| (-a * (m * m) as f64).exp() * d * d).sum()
}

/// `i^n` by table lookup on `n mod 4`.
fn i_power(n: i64) -> Complex64 {
    match n.rem_euclid(4) {
        0 => c(1.0),
        1 => I,
        2 => c(-1.0),
        _ => -I,
    }
}

/// Cached matrices for sweeping the cat-state figures of merit over `Γ/Λ` at
/// fixed spin.
#[derive(Debug, Clone)]
pub struct CatCurve {
    spin: SpinQuantum,
    top: Vec<f64>,
    /// `Σ_l D_{m,l} D_{k,l} l^p` for `p = 1, 2`.
    moment: [RMatrix; 2],
}

impl CatCurve {
    pub fn new(spin: SpinQuantum) -> Self {
        let d = wigner_small_d(spin, -FRAC_PI_2);
        let ls: Vec<f64> = spin.m_values().map(|l| l as f64).collect();
        let weighted = |p: i32| {
            let mut scaled = d.clone();
            for (col, &l) in ls.iter().enumerate() {
                scaled.column_mut(col).scale_mut(l.powi(p));
            }
            &scaled * d.transpose()
        };
        Self { spin, top: top_column_closed_form(spin), moment: [weighted(1), weighted(2)] }
    }

    pub fn spin(&self) -> SpinQuantum {
        self.spin
    }

    /// Fidelity with the cat state at `Λt = π/2`.
    pub fn fidelity(&self, ratio: f64) -> Result<f64> {
        cat_fidelity(self.spin, ratio)
    }

    /// QFI with respect to `Sz` at `Λt = π/2`. Both moments carry the damping
    /// `e^{-(πΓ/2Λ)(m²+k²)}` of the no-jump amplitudes.
    pub fn qfi(&self, ratio: f64) -> Result<f64> {
        check_ratio(ratio)?;
        self.qfi_with_exponents(ratio, 0.5 * PI * ratio, 0.5 * PI * ratio)
    }

    /// QFI sum with independent damping exponents on the second and first
    /// moments. Only the equal-exponent case is a QFI; other choices exist to
    /// compare against alternative readings of the closed form.
    pub fn qfi_with_exponents(&self, ratio: f64, second: f64, first: f64) -> Result<f64> {
        check_ratio(ratio)?;
        let norm = weighted_top_sum(self.spin, PI * ratio);
        let second_moment = self.moment_sum(1, second).re / norm;
        let first_moment = self.moment_sum(0, first) / norm;
        Ok((4.0 * (second_moment - first_moment.norm_sqr())).max(0.0))
    }

    /// `Σ_{m,k} D_{m,S} D_{k,S} e^{-a(m²+k²)} i^{k²-m²} M[m,k]`.
    fn moment_sum(&self, which: usize, a: f64) -> Complex64 {
        let m = &self.moment[which];
        let ms: Vec<i64> = self.spin.m_values().collect();
        let w: Vec<f64> = ms.iter().zip(&self.top).map(|(&mv, &d)| d * (-a * (mv * mv) as f64).exp()).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &mi) in ms.iter().enumerate() {
            if w[i] == 0.0 {
                continue;
            }
            for (k, &mk) in ms.iter().enumerate() {
                if w[k] == 0.0 {
                    continue;
                }
                acc += i_power(mk * mk - mi * mi) * (w[i] * w[k] * m[(i, k)]);
            }
        }
        acc
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::invalid(format!("decay ratio must be non-negative, got {ratio}")));
    }
    Ok(())
}

/// Cat-state fidelity at `Λt = π/2` for decay ratio `Γ/Λ`.
pub fn cat_fidelity(spin: SpinQuantum, ratio: f64) -> Result<f64> {
    check_ratio(ratio)?;
    let r = PI * ratio;
    let num = weighted_top_sum(spin, 0.5 * r);
    let den = weighted_top_sum(spin, r);
    Ok((num * num / den).clamp(0.0, 1.0))
}

/// QFI with respect to `Sz` at `Λt = π/2` for decay ratio `Γ/Λ`.
pub fn cat_qfi(spin: SpinQuantum, ratio: f64) -> Result<f64> {
    CatCurve::new(spin).qfi(ratio)
}

/// Evaluates a ratio-dependent quantity in the `Γ/Λ → ∞` limit.
pub fn asymptote<T>(f: impl FnOnce(f64) -> T) -> T {
    f(ASYMPTOTE_RATIO)
}

/// Probability of landing in `|S,0>_x` when the first jump never comes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dicke0Probability {
    /// `C(2S,S)/4^S`.
    pub exact: f64,
    /// `1/√(πS)`.
    pub stirling: f64,
}

pub fn dicke0_probability(spin: SpinQuantum) -> Dicke0Probability {
    let s = spin.value();
    // C(2S,S)/4^S = Π_{k=1}^{S} (2k-1)/(2k)
    let exact = (1..=s as u64).fold(1.0, |acc, k| acc * (2 * k - 1) as f64 / (2 * k) as f64);
    Dicke0Probability { exact, stirling: 1.0 / (PI * s as f64).sqrt() }
}

/// The unnormalized state at `Λt = π/2` written as two damped branches,
/// `(1+i)/2 Σ D_{m,S} e^{-r m²}|m>_x + (-1)^S (1-i)/2 Σ D_{m,-S} e^{-r m²}|m>_x`
/// with `r = πΓ/(2Λ)`. Built independently of [`nojump_state`].
pub fn two_branch_state(spin: SpinQuantum, ratio: f64) -> Result<SpinState> {
    check_ratio(ratio)?;
    let d = wigner_small_d(spin, -FRAC_PI_2);
    let last = spin.dim() - 1;
    let s = spin.s();
    let parity = if s % 2 == 0 { 1.0 } else { -1.0 };
    let r = 0.5 * PI * ratio;
    let amps = CVector::from_iterator(
        spin.dim(),
        spin.m_values().enumerate().map(|(i, m)| {
            let damp = (-r * (m * m) as f64).exp();
            (Complex64::new(0.5, 0.5) * d[(i, 0)] + Complex64::new(0.5, -0.5) * (parity * d[(i, last)])) * damp
        }),
    );
    SpinState::new(spin, Basis::X, amps)
}
