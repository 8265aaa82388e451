//! Mapping of trapped-ion and cavity-QED parameters onto the effective Dicke
//! model and the twisting/decay rates. All inputs are angular frequencies
//! (rad/s); use [`hz`] to convert from ordinary frequencies.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master_equation::ModelParams;
use crate::nojump_analytic::{cat_fidelity, cat_qfi};
use crate::spin_algebra::SpinQuantum;

/// Largest `η√(2n̄+1)` still treated as inside the Lamb-Dicke regime.
pub const LAMB_DICKE_LIMIT: f64 = 0.3;
/// Dephasing budget `ε/Λ` for a cat fidelity above 0.9 in the ion setup.
pub const ION_DEPHASING_BUDGET: f64 = 0.02;

pub fn hz(f: f64) -> f64 {
    TAU * f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonParams {
    /// Trap frequency `ν`.
    pub nu: f64,
    /// Transition frequency `ω_TS`.
    pub omega_ts: f64,
    /// Rabi frequency `Ω` of both lasers.
    pub rabi: f64,
    /// Lamb-Dicke parameter `η`.
    pub eta: f64,
    /// Offset `δ`; the lasers sit at `ω± = ω_TS ± ν ∓ δ`.
    pub delta: f64,
    /// Number of ions (even).
    pub ions: u32,
    pub nbar: f64,
    /// Optional dephasing rate `ε`.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl IonParams {
    pub fn spin(&self) -> Result<SpinQuantum> {
        if self.ions % 2 != 0 {
            return Err(Error::invalid(format!("ion count must be even, got {}", self.ions)));
        }
        SpinQuantum::new(self.ions / 2)
    }

    /// Laser frequencies `(ω₊, ω₋)`.
    pub fn laser_frequencies(&self) -> (f64, f64) {
        (self.omega_ts + self.nu - self.delta, self.omega_ts - self.nu + self.delta)
    }

    pub fn lamb_dicke_factor(&self) -> f64 {
        self.eta * (2.0 * self.nbar + 1.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IonMapping {
    pub model: ModelParams,
    /// `λ = √(2S) Ω η / 2`.
    pub coupling: f64,
    /// `Λ = Ω²η²/δ`.
    pub twist_rate: f64,
    /// Phonon damping is neglected.
    pub decay_rate: f64,
    pub lamb_dicke_valid: bool,
}

pub fn ion_to_dicke(p: &IonParams) -> Result<IonMapping> {
    if !(p.delta > 0.0) || !p.delta.is_finite() {
        return Err(Error::invalid(format!("offset delta must be positive, got {}", p.delta)));
    }
    for (name, v) in [("nu", p.nu), ("rabi", p.rabi), ("eta", p.eta), ("nbar", p.nbar)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
        }
    }
    let spin = p.spin()?;
    let s = spin.s() as f64;
    let coupling = (2.0 * s).sqrt() * p.rabi * p.eta / 2.0;
    // offsets δ₊ = -δ, δ₋ = δ: ω = (δ₋ - δ₊)/2, ω₀ = -(δ₊ + δ₋)/2
    let (offset_plus, offset_minus) = (-p.delta, p.delta);
    let model = ModelParams {
        omega: 0.5 * (offset_minus - offset_plus),
        omega0: -0.5 * (offset_plus + offset_minus),
        lambda_plus: coupling,
        lambda_minus: coupling,
        kappa: 0.0,
        nbar: p.nbar,
    };
    Ok(IonMapping {
        model,
        coupling,
        twist_rate: p.rabi * p.rabi * p.eta * p.eta / p.delta,
        decay_rate: 0.0,
        lamb_dicke_valid: p.lamb_dicke_factor() < LAMB_DICKE_LIMIT,
    })
}

/// Whether the cavity drive is tuned for twisting (`ω ≠ 0`) or for dissipative
/// preparation of `|S,0>_x` (`ω = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CavityMode {
    #[default]
    Twisting,
    Dissipative,
}

/// Spin-1 Raman scheme in a cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Single-atom coupling `g`.
    pub g: f64,
    pub rabi_plus: f64,
    pub rabi_minus: f64,
    /// Excited-state detuning `Δ`.
    pub detuning: f64,
    pub omega_cavity: f64,
    pub laser_plus: f64,
    pub laser_minus: f64,
    /// Zeeman splitting `ω_z`.
    pub omega_zeeman: f64,
    pub kappa: f64,
    /// Atomic linewidth `γ`.
    pub gamma: f64,
    pub spin: u32,
    #[serde(default)]
    pub mode: CavityMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityMapping {
    pub model: ModelParams,
    /// `ω` including the `Sg²/(3Δ)` shift.
    pub omega_shifted: f64,
    /// `ω` without the shift.
    pub omega_bare: f64,
    /// `Λ = (g²/72ω)(Ω²/Δ²)` with the shifted `ω` (zero in dissipative mode).
    pub twist_rate: f64,
    /// Same with the bare `ω`.
    pub twist_rate_bare: f64,
    /// `(κ/ω)Λ` when twisting, `(g²/72κ)(Ω²/Δ²)` when dissipative.
    pub decay_rate: f64,
    /// `γ_eff = (γ/12)(Ω²/Δ²)`.
    pub gamma_eff: f64,
    /// `C = 2g²/(κγ)`.
    pub cooperativity: f64,
    /// `γ_eff/Λ = 6γω/g²` (zero when not twisting).
    pub gamma_eff_over_lambda: f64,
    /// `γ_eff/Γ`; equals `12/C` in dissipative mode.
    pub gamma_eff_over_gamma: f64,
}

/// `Ω²` for the twisting formulas, `Ω₊Ω₋`.
fn rabi_squared(p: &CavityParams) -> f64 {
    p.rabi_plus * p.rabi_minus
}

pub fn cavity_to_dicke(p: &CavityParams) -> Result<CavityMapping> {
    if p.detuning == 0.0 || !p.detuning.is_finite() {
        return Err(Error::invalid("excited-state detuning must be non-zero"));
    }
    for (name, v) in [("g", p.g), ("kappa", p.kappa), ("gamma", p.gamma)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let spin = SpinQuantum::new(p.spin)?;
    let s = spin.s() as f64;
    let delta = p.detuning;
    let omega_bare = p.omega_cavity - 0.5 * (p.laser_minus + p.laser_plus);
    let omega_shifted = omega_bare + s * p.g * p.g / (3.0 * delta);
    let omega0 = p.omega_zeeman - 0.5 * (p.laser_minus - p.laser_plus) + (p.rabi_minus.powi(2) - p.rabi_plus.powi(2)) / (24.0 * delta);
    let lambda = |rabi: f64| s.sqrt() * p.g * rabi / (12.0 * delta);
    let model = ModelParams {
        omega: omega_shifted,
        omega0,
        lambda_plus: lambda(p.rabi_plus),
        lambda_minus: lambda(p.rabi_minus),
        kappa: p.kappa,
        nbar: 0.0,
    };
    let drive = rabi_squared(p) / (delta * delta);
    let gamma_eff = p.gamma / 12.0 * drive;
    let cooperativity = 2.0 * p.g * p.g / (p.kappa * p.gamma);
    let g2 = p.g * p.g;

    let (twist_rate, twist_rate_bare, decay_rate) = match p.mode {
        CavityMode::Twisting => {
            if omega_shifted == 0.0 {
                return Err(Error::invalid("twisting mode needs a non-zero effective cavity detuning omega"));
            }
            let twist = g2 / (72.0 * omega_shifted) * drive;
            let bare = if omega_bare != 0.0 { g2 / (72.0 * omega_bare) * drive } else { f64::NAN };
            (twist, bare, p.kappa / omega_shifted * twist)
        }
        CavityMode::Dissipative => (0.0, 0.0, g2 / (72.0 * p.kappa) * drive),
    };
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    Ok(CavityMapping {
        model,
        omega_shifted,
        omega_bare,
        twist_rate,
        twist_rate_bare,
        decay_rate,
        gamma_eff,
        cooperativity,
        gamma_eff_over_lambda: if p.mode == CavityMode::Twisting { ratio(gamma_eff, twist_rate) } else { 0.0 },
        gamma_eff_over_gamma: ratio(gamma_eff, decay_rate),
    })
}

/// Cooperativity needed for `γ_eff/Λ = target` at a given `κ/ω`.
pub fn required_cooperativity(kappa_over_omega: f64, target_gamma_eff_over_lambda: f64) -> Result<f64> {
    if !(kappa_over_omega > 0.0) || !(target_gamma_eff_over_lambda > 0.0) {
        return Err(Error::invalid("kappa/omega and the target ratio must be positive"));
    }
    Ok(12.0 / kappa_over_omega / target_gamma_eff_over_lambda)
}

/// `γ_eff/Γ = 12/C` for dissipative preparation.
pub fn dissipative_emission_ratio(cooperativity: f64) -> Result<f64> {
    if !(cooperativity > 0.0) {
        return Err(Error::invalid("cooperativity must be positive"));
    }
    Ok(12.0 / cooperativity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "framework", rename_all = "lowercase")]
pub enum Framework {
    Ion(IonParams),
    Cavity(CavityParams),
}

/// Flat summary of a parameter set. Fields that do not apply are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub framework: &'static str,
    pub spin: u32,
    pub coupling: f64,
    pub twist_rate: f64,
    pub decay_rate: f64,
    /// `γ_eff` (cavity) or `ε` (ion, when given).
    pub local_rate: Option<f64>,
    pub gamma_over_lambda: f64,
    pub local_over_lambda: Option<f64>,
    pub dispersive_valid: bool,
    pub lamb_dicke_factor: Option<f64>,
    pub lamb_dicke_valid: Option<bool>,
    pub max_dephasing_ratio: Option<f64>,
    /// `1/ε` at the dephasing budget, seconds.
    pub min_coherence_time: Option<f64>,
    pub dephasing_within_budget: Option<bool>,
    pub cooperativity: Option<f64>,
    pub omega_shifted: Option<f64>,
    pub omega_bare: Option<f64>,
    pub twist_rate_bare: Option<f64>,
    pub gamma_eff_over_gamma: Option<f64>,
    /// Only the spin-1 coefficients are implemented; the extra `Sz a†a` term
    /// of the spin-1/2 scheme is not included.
    pub spin_half_term_omitted: Option<bool>,
    pub predicted_cat_fidelity: Option<f64>,
    /// `F_Q/4S²` at `Λt = π/2` under no-jump evolution.
    pub predicted_qfi_fraction: Option<f64>,
}

fn predictions(spin: SpinQuantum, twist: f64, decay: f64) -> Result<(Option<f64>, Option<f64>)> {
    if twist <= 0.0 {
        return Ok((None, None));
    }
    let ratio = decay / twist;
    let s = spin.s() as f64;
    Ok((Some(cat_fidelity(spin, ratio)?), Some(cat_qfi(spin, ratio)? / (4.0 * s * s))))
}

pub fn feasibility_report(framework: &Framework) -> Result<FeasibilityReport> {
    let zero_ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    match framework {
        Framework::Ion(p) => {
            let map = ion_to_dicke(p)?;
            let spin = p.spin()?;
            let (fid, qfi) = predictions(spin, map.twist_rate, map.decay_rate)?;
            let budget_time = if map.twist_rate > 0.0 { Some(1.0 / (ION_DEPHASING_BUDGET * map.twist_rate)) } else { None };
            Ok(FeasibilityReport {
                framework: "ion",
                spin: spin.value(),
                coupling: map.coupling,
                twist_rate: map.twist_rate,
                decay_rate: map.decay_rate,
                local_rate: p.epsilon,
                gamma_over_lambda: zero_ratio(map.decay_rate, map.twist_rate),
                local_over_lambda: p.epsilon.map(|e| zero_ratio(e, map.twist_rate)),
                dispersive_valid: map.model.dispersive_valid(),
                lamb_dicke_factor: Some(p.lamb_dicke_factor()),
                lamb_dicke_valid: Some(map.lamb_dicke_valid),
                max_dephasing_ratio: Some(ION_DEPHASING_BUDGET),
                min_coherence_time: budget_time,
                dephasing_within_budget: p.epsilon.map(|e| e <= ION_DEPHASING_BUDGET * map.twist_rate),
                cooperativity: None,
                omega_shifted: None,
                omega_bare: None,
                twist_rate_bare: None,
                gamma_eff_over_gamma: None,
                spin_half_term_omitted: None,
                predicted_cat_fidelity: fid,
                predicted_qfi_fraction: qfi,
            })
        }
        Framework::Cavity(p) => {
            let map = cavity_to_dicke(p)?;
            let spin = SpinQuantum::new(p.spin)?;
            let (fid, qfi) = predictions(spin, map.twist_rate, map.decay_rate)?;
            Ok(FeasibilityReport {
                framework: "cavity",
                spin: spin.value(),
                coupling: map.model.lambda_plus.max(map.model.lambda_minus),
                twist_rate: map.twist_rate,
                decay_rate: map.decay_rate,
                local_rate: Some(map.gamma_eff),
                gamma_over_lambda: zero_ratio(map.decay_rate, map.twist_rate),
                local_over_lambda: Some(map.gamma_eff_over_lambda),
                dispersive_valid: map.model.dispersive_valid(),
                lamb_dicke_factor: None,
                lamb_dicke_valid: None,
                max_dephasing_ratio: None,
                min_coherence_time: None,
                dephasing_within_budget: None,
                cooperativity: Some(map.cooperativity),
                omega_shifted: Some(map.omega_shifted),
                omega_bare: Some(map.omega_bare),
                twist_rate_bare: Some(map.twist_rate_bare),
                gamma_eff_over_gamma: Some(map.gamma_eff_over_gamma),
                spin_half_term_omitted: Some(true),
                predicted_cat_fidelity: fid,
                predicted_qfi_fraction: qfi,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn reference_ions() -> IonParams {
        IonParams {
            nu: hz(3e6),
            omega_ts: hz(411.042e12),
            rabi: hz(300e3),
            eta: 0.05,
            delta: hz(300e3),
            ions: 20,
            nbar: 0.0,
            epsilon: None,
        }
    }

    #[test]
    fn reference_ion_numbers() {
        let map = ion_to_dicke(&reference_ions()).unwrap();
        assert!((map.coupling / TAU - 34e3).abs() <= 1e3, "{}", map.coupling / TAU);
        assert_relative_eq!(map.twist_rate / TAU, 750.0, max_relative = 1e-12);
        assert_eq!(map.model.omega0, 0.0);
        assert_relative_eq!(map.model.omega, hz(300e3));
        // the generic Dicke-model reduction gives the same twisting rate
        let spin = reference_ions().spin().unwrap();
        assert_relative_eq!(map.model.twist_rate(spin), map.twist_rate, max_relative = 1e-12);
        assert!(map.lamb_dicke_valid);
    }

    #[test]
    fn ion_edge_cases() {
        let mut p = reference_ions();
        p.rabi = 0.0;
        let map = ion_to_dicke(&p).unwrap();
        assert_eq!((map.coupling, map.twist_rate), (0.0, 0.0));
        p.delta = 0.0;
        assert!(ion_to_dicke(&p).is_err());
        p.delta = -1.0;
        assert!(ion_to_dicke(&p).is_err());
        let mut odd = reference_ions();
        odd.ions = 21;
        assert!(ion_to_dicke(&odd).is_err());
        let mut hot = reference_ions();
        hot.nbar = 20.0;
        assert!(!ion_to_dicke(&hot).unwrap().lamb_dicke_valid);
    }

    #[test]
    fn cooperativity_identities() {
        assert_eq!(required_cooperativity(0.1, 1e-3).unwrap(), 120_000.0);
        assert_eq!(dissipative_emission_ratio(300.0).unwrap(), 0.04);
        assert!(required_cooperativity(0.0, 1e-3).is_err());
    }

    fn cavity(omega_target: f64, kappa: f64) -> CavityParams {
        CavityParams {
            g: hz(1e6),
            rabi_plus: hz(50e6),
            rabi_minus: hz(50e6),
            detuning: hz(-2e9),
            omega_cavity: omega_target,
            laser_plus: 0.0,
            laser_minus: 0.0,
            omega_zeeman: 0.0,
            kappa,
            gamma: hz(3e6),
            spin: 10,
            mode: CavityMode::Twisting,
        }
    }

    #[test]
    fn cavity_zero_drive_and_errors() {
        let mut p = cavity(hz(1e5), hz(1e4));
        p.rabi_plus = 0.0;
        p.rabi_minus = 0.0;
        let map = cavity_to_dicke(&p).unwrap();
        assert_eq!((map.twist_rate, map.decay_rate, map.gamma_eff), (0.0, 0.0, 0.0));
        let report = feasibility_report(&Framework::Cavity(p)).unwrap();
        assert_eq!((report.twist_rate, report.decay_rate, report.gamma_over_lambda), (0.0, 0.0, 0.0));
        assert_eq!(report.local_over_lambda, Some(0.0));
        assert!(report.predicted_cat_fidelity.is_none());

        let mut bad = cavity(hz(1e5), hz(1e4));
        bad.detuning = 0.0;
        assert!(cavity_to_dicke(&bad).is_err());
        // cavity frequency cancelling the dispersive shift leaves ω = 0
        let mut flat = cavity(0.0, hz(1e4));
        flat.omega_cavity = -(10.0 * flat.g * flat.g / (3.0 * flat.detuning));
        assert!(cavity_to_dicke(&flat).is_err());
        flat.mode = CavityMode::Dissipative;
        let map = cavity_to_dicke(&flat).unwrap();
        assert_eq!(map.twist_rate, 0.0);
        assert_relative_eq!(map.gamma_eff_over_gamma, 12.0 / map.cooperativity, max_relative = 1e-12);
    }

    #[test]
    fn twist_rate_matches_generic_reduction() {
        for ratio in [1e-3, 1e-2, 0.1] {
            let omega = hz(2e5);
            let p = cavity(omega, ratio * omega);
            let map = cavity_to_dicke(&p).unwrap();
            let spin = SpinQuantum::new(p.spin).unwrap();
            let generic = map.model.twist_rate(spin);
            let k2 = (p.kappa / map.omega_shifted).powi(2);
            assert_relative_eq!(generic, map.twist_rate / (1.0 + k2), max_relative = 1e-12);
            assert!((generic / map.twist_rate - 1.0).abs() <= k2 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn ion_report_flags_dephasing_budget() {
        let mut p = reference_ions();
        p.epsilon = Some(0.01 * hz(750.0));
        let r = feasibility_report(&Framework::Ion(p)).unwrap();
        assert_eq!(r.max_dephasing_ratio, Some(0.02));
        let t = r.min_coherence_time.unwrap();
        assert!((10e-3..12e-3).contains(&t), "{t}");
        assert_eq!(r.dephasing_within_budget, Some(true));
        assert_relative_eq!(r.local_over_lambda.unwrap(), 0.01, max_relative = 1e-12);
        assert_eq!(r.predicted_cat_fidelity, Some(1.0));
    }

    #[test]
    fn cavity_report_predicts_from_ratio() {
        let omega = hz(2e5);
        let p = cavity(omega, 0.1 * omega);
        let r = feasibility_report(&Framework::Cavity(p)).unwrap();
        let ratio = p.kappa / r.omega_shifted.unwrap();
        let spin = SpinQuantum::new(10).unwrap();
        assert_relative_eq!(r.gamma_over_lambda, ratio, max_relative = 1e-12);
        assert_relative_eq!(r.predicted_cat_fidelity.unwrap(), cat_fidelity(spin, ratio).unwrap(), max_relative = 1e-12);
        assert_eq!(r.spin_half_term_omitted, Some(true));
    }

    proptest! {
        #[test]
        fn emission_ratio_three_ways(
            g in 1e4f64..1e8, kappa in 1e3f64..1e7, gamma in 1e3f64..1e8,
            rabi in 1e5f64..1e9, detuning in 1e8f64..1e11, omega in 1e4f64..1e8,
        ) {
            let mut p = cavity(0.0, kappa);
            p.g = g;
            p.gamma = gamma;
            p.rabi_plus = rabi;
            p.rabi_minus = rabi;
            p.detuning = detuning;
            p.omega_cavity = omega - 10.0 * g * g / (3.0 * detuning);
            let map = cavity_to_dicke(&p).unwrap();
            let w = map.omega_shifted;
            let direct = map.gamma_eff_over_lambda;
            let via_linewidth = 6.0 * gamma * w / (g * g);
            let via_cooperativity = 12.0 / map.cooperativity * (w / kappa);
            prop_assert!((direct / via_linewidth - 1.0).abs() < 1e-10);
            prop_assert!((direct / via_cooperativity - 1.0).abs() < 1e-10);
        }

        #[test]
        fn ion_offsets_cancel_the_spin_splitting(
            nu in 1e5f64..1e8, ts in 1e14f64..1e16, delta in 1e3f64..1e7, rabi in 0.0f64..1e7,
        ) {
            let p = IonParams { nu, omega_ts: ts, rabi, eta: 0.05, delta, ions: 10, nbar: 0.0, epsilon: None };
            let map = ion_to_dicke(&p).unwrap();
            prop_assert_eq!(map.model.omega0, 0.0);
            prop_assert_eq!(map.model.omega, delta);
        }
    }
}
