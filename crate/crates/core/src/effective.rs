//! Reduced plasmon–coupler models obtained by Schrieffer–Wolff elimination of
//! the coupler, the first-order parametric strength derived from them, and a
//! rule-based taxonomy of drive-activated transitions.
//!
//! All strengths are in GHz. Coupling magnitudes are reported unsigned; the
//! parametric strength keeps the sign of `∂ω_c/∂Φ`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::composite::{CompositeParams, Label};
use crate::error::{invalid, Error, Result};
use crate::spectra::{
    coupler_flux_derivative, diagonalize_fluxonium, transmon_oscillator_params, SpectralData, TransmonParams,
    DEFAULT_DERIVATIVE_STEP,
};

/// Matrix elements below this are treated as selection-rule zeros.
pub const FORBIDDEN_ELEMENT: f64 = 1e-12;
/// `|Δ| < DISPERSIVE_RATIO · g` marks a breakdown of the dispersive expansion.
pub const DISPERSIVE_RATIO: f64 = 10.0;
/// Amplitudes above this are outside the first-order expansion.
pub const LARGE_AMPLITUDE: f64 = 0.1;

/// One plasmon transition per fluxonium: `j → l` in Q0 and `r → t` in Q1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlasmonModeSelection {
    pub q0_pair: (usize, usize),
    pub q1_pair: (usize, usize),
}

impl PlasmonModeSelection {
    /// The `1 → 2` plasmon modes that carry the bSWAP interaction.
    pub fn plasmon_12() -> Self {
        Self { q0_pair: (1, 2), q1_pair: (1, 2) }
    }

    /// The qubit transitions `0 → 1`.
    pub fn qubit_01() -> Self {
        Self { q0_pair: (0, 1), q1_pair: (0, 1) }
    }

    pub fn validate(&self, n0: usize, n1: usize) -> Result<()> {
        let (j, l) = self.q0_pair;
        let (r, t) = self.q1_pair;
        if !(j < l && l < n0) {
            return Err(invalid("q0_pair", format!("need j < l < {n0}, got ({j}, {l})")));
        }
        if !(r < t && t < n1) {
            return Err(invalid("q1_pair", format!("need r < t < {n1}, got ({r}, {t})")));
        }
        Ok(())
    }

    fn highest_level(&self) -> usize {
        self.q0_pair.1.max(self.q1_pair.1)
    }
}

/// Plasmon–coupler and direct plasmon–plasmon strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCouplings {
    pub g_pc0: f64,
    pub g_pc1: f64,
    pub g_p01: f64,
    /// Plasmon frequencies `ω_p,0`, `ω_p,1` of the selected transitions.
    pub omega_p: [f64; 2],
    /// Human-readable notes on vanishing matrix elements.
    pub forbidden: Vec<String>,
}

pub fn plasmon_coupler_strengths(
    q0: &SpectralData,
    q1: &SpectralData,
    coupler_n01: f64,
    sel: PlasmonModeSelection,
    j_c0: f64,
    j_c1: f64,
    j_01: f64,
) -> Result<EffectiveCouplings> {
    sel.validate(q0.n_levels, q1.n_levels)?;
    let (j, l) = sel.q0_pair;
    let (r, t) = sel.q1_pair;
    let n0 = q0.n_abs(j, l);
    let n1 = q1.n_abs(r, t);
    let mut forbidden = Vec::new();
    for (name, v) in [("Q0", n0), ("Q1", n1), ("coupler", coupler_n01.abs())] {
        if v < FORBIDDEN_ELEMENT {
            let note = format!("{name} charge matrix element {v:.1e} is selection-rule forbidden");
            warn!("{note}");
            forbidden.push(note);
        }
    }
    let c = coupler_n01.abs();
    Ok(EffectiveCouplings {
        g_pc0: (j_c0 * n0 * c).abs(),
        g_pc1: (j_c1 * n1 * c).abs(),
        g_p01: (j_01 * n0 * n1).abs(),
        omega_p: [q0.transition(j, l), q1.transition(r, t)],
        forbidden,
    })
}

/// Coupler-mediated static plasmon–plasmon coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticCoupling {
    pub g_p: f64,
    /// `Δ_p,k = ω_p,k − ω_c`.
    pub deltas: [f64; 2],
    /// `S_p,k = ω_p,k + ω_c`.
    pub sums: [f64; 2],
    pub dispersive_violation: bool,
}

/// `g_p = g_p01 + (g_pc0 g_pc1 / 2) Σ_k (1/Δ_k − 1/S_k)`.
pub fn static_plasmon_coupling(ec: &EffectiveCouplings, omega_p: [f64; 2], omega_c: f64) -> Result<StaticCoupling> {
    let deltas = omega_p.map(|w| w - omega_c);
    let sums = omega_p.map(|w| w + omega_c);
    if deltas.iter().chain(&sums).any(|&d| d == 0.0) {
        return Err(invalid("omega_c", "exactly resonant with a plasmon mode"));
    }
    let g = [ec.g_pc0, ec.g_pc1];
    let dispersive_violation = deltas.iter().zip(&g).any(|(d, g)| d.abs() < DISPERSIVE_RATIO * g);
    if dispersive_violation {
        warn!("plasmon–coupler detuning {deltas:?} not dispersive for strengths {g:?}");
    }
    let bracket: f64 = deltas.iter().zip(&sums).map(|(d, s)| 1.0 / d - 1.0 / s).sum();
    Ok(StaticCoupling { g_p: ec.g_p01 + 0.5 * ec.g_pc0 * ec.g_pc1 * bracket, deltas, sums, dispersive_violation })
}

/// Second-order dispersive shifts `(δω_p0, δω_p1, δω_c)`: `+g_k²/Δ_k` on each
/// plasmon and `−Σ g_k²/Δ_k` on the coupler.
pub fn swt_dressed_shifts(ec: &EffectiveCouplings, omega_p: [f64; 2], omega_c: f64) -> (f64, f64, f64) {
    let g = [ec.g_pc0, ec.g_pc1];
    let shift: [f64; 2] = std::array::from_fn(|k| {
        let d = omega_p[k] - omega_c;
        if d.abs() < DISPERSIVE_RATIO * g[k] {
            warn!("mode {k}: detuning {d} GHz not dispersive for g = {} GHz", g[k]);
        }
        if g[k] == 0.0 { 0.0 } else { g[k] * g[k] / d }
    });
    (shift[0], shift[1], -(shift[0] + shift[1]))
}

/// Which plasmon frequencies entered a parametric estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencySource {
    Bare,
    Dressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricCoupling {
    pub g_eff: f64,
    pub drive_amp: f64,
    /// `∂ω_c/∂Φ` at the static bias, GHz per Φ₀.
    pub derivative: f64,
    /// `ω_p,0 + ω_p,1`, the bSWAP resonance.
    pub resonance_sum: f64,
    /// `ω_p,0 − ω_p,1`, the SWAP resonance.
    pub resonance_diff: f64,
    pub couplings: EffectiveCouplings,
    pub frequencies: FrequencySource,
    /// Set when the derivative vanishes (symmetry point) and `g_eff` is zero.
    pub zero_derivative: bool,
    pub large_amplitude: bool,
}

/// First-order parametric strength
/// `g_eff = δ_Φ (g_pc0 g_pc1 / 4) ∂ω_c/∂Φ Σ_k (1/Δ_k² + 1/S_k²)`.
///
/// The coupler enters through its oscillator approximation at `flux_s`
/// (`ω_c` and `⟨1|n_c|0⟩ = n_zpf`), as in the composite model. Plasmon
/// frequencies are bare unless `dressed` supplies `[ω_p,0, ω_p,1]`.
pub fn parametric_strength(
    params: &CompositeParams,
    sel: PlasmonModeSelection,
    flux_s: f64,
    delta: f64,
    dressed: Option<[f64; 2]>,
) -> Result<ParametricCoupling> {
    params.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid("drive_amp", format!("must be finite and non-negative, got {delta}")));
    }
    let levels = (sel.highest_level() + 1).max(2);
    let basis = params.fluxonium_basis.max(4 * levels);
    let q0 = diagonalize_fluxonium(&params.q0, basis, levels)?;
    let q1 = diagonalize_fluxonium(&params.q1, basis, levels)?;
    let osc = transmon_oscillator_params(&params.coupler, flux_s)?;
    let couplings = plasmon_coupler_strengths(&q0, &q1, osc.n_zpf, sel, params.j_c0, params.j_c1, params.j_01)?;
    let omega_p = dressed.unwrap_or(couplings.omega_p);
    let derivative = match coupler_flux_derivative(&params.coupler, flux_s, DEFAULT_DERIVATIVE_STEP) {
        Ok(d) => d,
        Err(Error::Precision { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    let zero_derivative = derivative.abs() < 1e-9;
    let large_amplitude = delta > LARGE_AMPLITUDE;
    if large_amplitude {
        warn!("drive amplitude {delta} is outside the first-order regime");
    }
    let bracket: f64 = omega_p
        .iter()
        .map(|w| {
            let d = w - osc.omega_c;
            let s = w + osc.omega_c;
            1.0 / (d * d) + 1.0 / (s * s)
        })
        .sum();
    let g_eff =
        if zero_derivative { 0.0 } else { delta * 0.25 * couplings.g_pc0 * couplings.g_pc1 * derivative * bracket };
    Ok(ParametricCoupling {
        g_eff,
        drive_amp: delta,
        derivative: if zero_derivative { 0.0 } else { derivative },
        resonance_sum: omega_p[0] + omega_p[1],
        resonance_diff: omega_p[0] - omega_p[1],
        couplings,
        frequencies: if dressed.is_some() { FrequencySource::Dressed } else { FrequencySource::Bare },
        zero_derivative,
        large_amplitude,
    })
}

/// Coupler flux-modulation drive terms for a symmetric SQUID.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingCoefficients {
    /// Coefficient of `(a + a†)`; identically zero for a symmetric SQUID.
    pub one_photon_rate: f64,
    /// Coefficient of `(a a + a† a†)` on each rotating component, GHz.
    pub two_photon_rate: f64,
    /// `ω_01 + ω_12` of the coupler, where `|0⟩ → |2⟩` is two-photon resonant
    /// at half this drive frequency.
    pub two_photon_resonance: f64,
}

/// Linear-in-`δ_Φ` part of the modulated potential,
/// `−E_J sin(φ_s/2) φ_d φ̂²/4` with `φ_d = 2π δ_Φ cos ω_p t` and
/// `φ̂² → φ_zpf² (a a + a† a†)`, split into its two rotating halves.
pub fn squeezing_coefficients(c: &TransmonParams, flux_s: f64, delta: f64) -> Result<SqueezingCoefficients> {
    let osc = transmon_oscillator_params(c, flux_s)?;
    let phi_s = 2.0 * std::f64::consts::PI * flux_s;
    let half_amplitude = std::f64::consts::PI * delta;
    let two_photon_rate = -c.e_j_max * (phi_s / 2.0).sin() * half_amplitude / 4.0 * osc.phi_zpf.powi(2);
    Ok(SqueezingCoefficients {
        one_photon_rate: 0.0,
        two_photon_rate,
        two_photon_resonance: 2.0 * osc.omega_c + osc.alpha_c,
    })
}

/// Categories of drive-activated transitions out of a bare state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionCategory {
    BswapPlasmon,
    SidebandCoupler,
    CouplerSqueezing,
    CrossDriving,
    Other,
}

/// Rule-based classification of `from → to` in `(q0, coupler, q1)` labels.
pub fn classify_transition(from: Label, to: Label) -> TransitionCategory {
    let d = |k: usize| to[k] as i64 - from[k] as i64;
    let (d0, dc, d1) = (d(0), d(1), d(2));
    let non_computational = |k: usize| from[k].max(to[k]) >= 2;
    if d0 > 0 && d1 > 0 && dc == 0 {
        TransitionCategory::BswapPlasmon
    } else if dc > 0 && ((d0 > 0 && d1 == 0) || (d1 > 0 && d0 == 0)) {
        TransitionCategory::SidebandCoupler
    } else if dc.abs() == 2 && d0 == 0 && d1 == 0 {
        TransitionCategory::CouplerSqueezing
    } else if dc == 0 && ((d0 != 0 && d1 == 0 && non_computational(0)) || (d1 != 0 && d0 == 0 && non_computational(2))) {
        TransitionCategory::CrossDriving
    } else {
        TransitionCategory::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn couplings(g0: f64, g1: f64, g01: f64) -> EffectiveCouplings {
        EffectiveCouplings { g_pc0: g0, g_pc1: g1, g_p01: g01, omega_p: [0.0; 2], forbidden: vec![] }
    }

    #[test]
    fn toy_static_coupling() {
        let s = static_plasmon_coupling(&couplings(0.1, 0.1, 0.0), [5.0, 5.0], 7.0).unwrap();
        assert!((s.g_p + 0.005_833_333_333_333_333).abs() < 1e-15);
        assert!(!s.dispersive_violation);
    }

    #[test]
    fn vanishing_coupler_leaves_direct_term() {
        let s = static_plasmon_coupling(&couplings(0.0, 0.0, 0.031), [5.6, 5.3], 7.6).unwrap();
        assert_eq!(s.g_p, 0.031);
    }

    #[test]
    fn shifts_match_two_level_diagonalization() {
        let (g, wp, wc) = (0.05, 8.0, 7.0);
        let (s0, _, sc) = swt_dressed_shifts(&couplings(g, 0.0, 0.0), [wp, 6.0], wc);
        assert!((s0 - 0.0025).abs() < 1e-15);
        assert!((sc + 0.0025).abs() < 1e-15);
        let m = DMatrix::from_row_slice(2, 2, &[wp, g, g, wc]);
        let e = m.symmetric_eigenvalues();
        let upper = e.max();
        assert!((upper - (wp + s0)).abs() < 2.0 * g.powi(4) / (wp - wc).powi(3));
    }

    #[test]
    fn zero_coupling_gives_zero_shift() {
        assert_eq!(swt_dressed_shifts(&couplings(0.0, 0.0, 0.0), [5.0, 5.0], 5.0), (0.0, 0.0, -0.0));
    }

    #[test]
    fn squeezing_is_odd_in_flux() {
        let c = TransmonParams::new(0.32, 55.0, 0.0);
        assert_eq!(squeezing_coefficients(&c, 0.0, 0.045).unwrap().two_photon_rate, 0.0);
        let p = squeezing_coefficients(&c, 0.35, 0.045).unwrap();
        let m = squeezing_coefficients(&c, -0.35, 0.045).unwrap();
        assert!(p.two_photon_rate < 0.0);
        assert!((p.two_photon_rate + m.two_photon_rate).abs() < 1e-15);
        assert_eq!(p.one_photon_rate, 0.0);
    }

    #[test]
    fn taxonomy_examples() {
        use TransitionCategory::*;
        assert_eq!(classify_transition([1, 0, 1], [2, 0, 2]), BswapPlasmon);
        assert_eq!(classify_transition([0, 0, 1], [0, 1, 4]), SidebandCoupler);
        assert_eq!(classify_transition([0, 0, 0], [0, 2, 0]), CouplerSqueezing);
        assert_eq!(classify_transition([0, 0, 0], [0, 0, 4]), CrossDriving);
        assert_eq!(classify_transition([0, 0, 0], [0, 0, 1]), Other);
    }

    #[test]
    fn selection_bounds() {
        assert!(PlasmonModeSelection { q0_pair: (2, 1), q1_pair: (1, 2) }.validate(5, 5).is_err());
        assert!(PlasmonModeSelection { q0_pair: (1, 5), q1_pair: (1, 2) }.validate(5, 5).is_err());
        assert!(PlasmonModeSelection::plasmon_12().validate(5, 5).is_ok());
    }
}
