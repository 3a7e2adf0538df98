//! CZ gate on the parametrically activated `|11⟩ ↔ |22⟩` transition.
//!
//! A full Rabi cycle of the pair returns the population to `|11⟩` with a
//! sign flip. The drive frequency and amplitude are tuned so that cycle ends
//! with the pulse, and the residual error is graded by the state-averaged
//! fidelity after removing single-qubit Z rotations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::composite::{CompositeSystem, Label, LabeledSpectrum};
use crate::dynamics::{Simulation, TruncatedPropagator, COMPUTATIONAL, DEFAULT_DT};
use crate::error::{invalid, Error, Result};
use crate::floquet::{extract_transition, TransitionFit};
use crate::linalg::C64;
use crate::optim::{minimize, SimplexOptions};
use crate::pulse::{BiasRamp, ParametricPulse};

/// Transition pair driven by the gate, as bare labels.
pub const GATE_PAIR: (Label, Label) = ([1, 0, 1], [2, 0, 2]);
/// Diagonal magnitude below which single-qubit phases are not trusted.
pub const PHASE_RELIABILITY: f64 = 1e-3;
/// Best objective above which an optimization counts as failed.
pub const STAGNATION_LIMIT: f64 = 1e-2;
/// Populations below this are left out of channel reports.
pub const CHANNEL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    /// The coupler idles at `flux_idle` and is pulsed to `flux_interaction` for the gate.
    DynamicBias,
    /// The coupler stays at `flux_idle`, which is also the interaction point.
    StaticBias,
}

/// Box constraints for the drive search. Missing entries default around the seed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchBounds {
    pub drive_freq: Option<(f64, f64)>,
    pub drive_amp: Option<(f64, f64)>,
    pub flux: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub mode: BiasMode,
    pub flux_idle: f64,
    /// Ignored in static mode.
    pub flux_interaction: f64,
    #[serde(default = "default_bias_ramp")]
    pub bias_ramp: f64,
    #[serde(default = "default_drive_ramp")]
    pub drive_ramp: f64,
    pub gate_time: f64,
    #[serde(default)]
    pub bounds: SearchBounds,
    /// Also optimize the interaction flux (the static flux in static mode).
    #[serde(default)]
    pub optimize_bias: bool,
    /// Amplitude of the Floquet calibration used to seed the search.
    #[serde(default = "default_reference_amp")]
    pub reference_amp: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_budget")]
    pub max_evaluations: usize,
    /// Objective below which the seed run is kept without restarts.
    #[serde(default = "default_accept")]
    pub accept_objective: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_bias_ramp() -> f64 {
    3.0
}
fn default_drive_ramp() -> f64 {
    5.0
}
fn default_reference_amp() -> f64 {
    0.03
}
fn default_restarts() -> usize {
    3
}
fn default_budget() -> usize {
    400
}
fn default_accept() -> f64 {
    1e-4
}
fn default_dt() -> f64 {
    DEFAULT_DT
}

impl GateConfig {
    pub fn dynamic(flux_idle: f64, flux_interaction: f64, gate_time: f64) -> Self {
        Self {
            mode: BiasMode::DynamicBias,
            flux_idle,
            flux_interaction,
            bias_ramp: default_bias_ramp(),
            drive_ramp: default_drive_ramp(),
            gate_time,
            bounds: SearchBounds::default(),
            optimize_bias: false,
            reference_amp: default_reference_amp(),
            restarts: default_restarts(),
            max_evaluations: default_budget(),
            accept_objective: default_accept(),
            dt: DEFAULT_DT,
        }
    }

    pub fn static_bias(flux: f64, gate_time: f64) -> Self {
        Self { mode: BiasMode::StaticBias, flux_interaction: flux, ..Self::dynamic(flux, flux, gate_time) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == BiasMode::DynamicBias && self.flux_idle == self.flux_interaction {
            return Err(invalid("flux_interaction", "dynamic bias needs distinct idle and interaction flux"));
        }
        if !(self.drive_ramp >= 0.0 && 2.0 * self.drive_ramp < self.gate_time) {
            return Err(invalid("drive_ramp", format!("need 0 <= 2·ramp < gate_time, got {} / {}", self.drive_ramp, self.gate_time)));
        }
        if self.mode == BiasMode::DynamicBias && !(self.bias_ramp > 0.0 && 2.0 * self.bias_ramp <= self.gate_time) {
            return Err(invalid("bias_ramp", format!("need 0 < 2·ramp <= gate_time, got {}", self.bias_ramp)));
        }
        if !(self.reference_amp > 0.0) {
            return Err(invalid("reference_amp", "must be positive"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(())
    }

    /// Flux at which the bSWAP pair is driven.
    pub fn interaction_flux(&self) -> f64 {
        match self.mode {
            BiasMode::DynamicBias => self.flux_interaction,
            BiasMode::StaticBias => self.flux_idle,
        }
    }

    /// Flux that defines the dressed measurement frame.
    pub fn frame_flux(&self, interaction: f64) -> f64 {
        match self.mode {
            BiasMode::DynamicBias => self.flux_idle,
            BiasMode::StaticBias => interaction,
        }
    }

    /// Drive pulse and optional bias ramp for one parameter point.
    pub fn schedule(&self, drive_freq: f64, drive_amp: f64, interaction: f64) -> (ParametricPulse, Option<BiasRamp>) {
        let pulse = ParametricPulse {
            flux_static: interaction,
            drive_amp,
            drive_freq,
            drive_phase: 0.0,
            ramp_time: self.drive_ramp,
            gate_time: self.gate_time,
        };
        let ramp = match self.mode {
            BiasMode::DynamicBias => Some(BiasRamp::new(self.flux_idle, interaction, self.bias_ramp)),
            BiasMode::StaticBias => None,
        };
        (pulse, ramp)
    }
}

/// Final population of a non-computational state from one computational input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub from: Label,
    pub to: Label,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub fidelity: f64,
    pub error: f64,
    /// Average leakage `1 − Tr(U†U)/4`.
    pub leakage: f64,
    /// In `[0, 2π)`.
    pub conditional_phase: f64,
    /// Z angles removed from `(q0, q1)`.
    pub single_qubit_phases: [f64; 2],
    /// Some computational diagonal element fell below [`PHASE_RELIABILITY`].
    pub phase_unreliable: bool,
    pub channels: Vec<Channel>,
}

impl GateMetrics {
    /// `leakage + (Δφ)²/π²`, with `Δφ` the conditional-phase error wrapped to `(−π, π]`.
    pub fn objective(&self) -> f64 {
        let d = wrap(self.conditional_phase - PI);
        self.leakage + d * d / (PI * PI)
    }
}

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Metrics of a 4×4 computational block ordered `|00⟩, |01⟩, |10⟩, |11⟩`
/// (`q0` most significant).
///
/// Single-qubit Z rotations are removed in closed form by zeroing the phases
/// of `U_01,01` and `U_10,10` relative to `U_00,00`; the fidelity is then
/// `[Tr(U†U) + |Tr(U_cz† U)|²] / 20`.
pub fn gate_metrics(u: &DMatrix<C64>) -> Result<GateMetrics> {
    if u.nrows() != 4 || u.ncols() != 4 {
        return Err(Error::Dimension { expected: 4, got: u.nrows() });
    }
    let d: [C64; 4] = std::array::from_fn(|k| u[(k, k)]);
    let phase_unreliable = d.iter().any(|v| v.norm() < PHASE_RELIABILITY);
    let theta_q1 = (d[1] / d[0]).arg();
    let theta_q0 = (d[2] / d[0]).arg();
    let z = [0.0, theta_q1, theta_q0, theta_q0 + theta_q1];
    let norm_sq: f64 = u.iter().map(|v| v.norm_sqr()).sum();
    let cz = [1.0, 1.0, 1.0, -1.0];
    let overlap: C64 = (0..4).map(|k| d[k] * C64::from_polar(1.0, -z[k]) * cz[k]).sum();
    let fidelity = ((norm_sq + overlap.norm_sqr()) / 20.0).clamp(0.0, 1.0);
    let conditional_phase = (d[0] * d[3] / (d[1] * d[2])).arg().rem_euclid(2.0 * PI);
    Ok(GateMetrics {
        fidelity,
        error: 1.0 - fidelity,
        leakage: (1.0 - norm_sq / 4.0).clamp(0.0, 1.0),
        conditional_phase,
        single_qubit_phases: [theta_q0, theta_q1],
        phase_unreliable,
        channels: Vec::new(),
    })
}

fn with_channels(tp: &TruncatedPropagator) -> Result<GateMetrics> {
    let mut m = gate_metrics(&tp.u)?;
    for (j, &from) in COMPUTATIONAL.iter().enumerate() {
        for (d, &to) in tp.labels.iter().enumerate() {
            let p = tp.final_populations[(d, j)];
            if !COMPUTATIONAL.contains(&to) && p > 0.0 {
                m.channels.push(Channel { from, to, population: p });
            }
        }
    }
    Ok(m)
}

/// Non-computational channels above [`CHANNEL_FLOOR`], largest first.
pub fn leakage_channels(metrics: &GateMetrics, top_k: usize) -> Vec<Channel> {
    let mut c: Vec<Channel> = metrics.channels.iter().filter(|c| c.population > CHANNEL_FLOOR).copied().collect();
    c.sort_by(|a, b| b.population.total_cmp(&a.population));
    c.truncate(top_k);
    c
}

/// Runs one gate schedule and grades it.
pub struct GateLab<'a> {
    pub system: &'a CompositeSystem,
    pub config: GateConfig,
    frame: LabeledSpectrum,
}

impl<'a> GateLab<'a> {
    pub fn new(system: &'a CompositeSystem, config: GateConfig) -> Result<Self> {
        config.validate()?;
        let frame = system.labeled_spectrum(config.frame_flux(config.interaction_flux()))?;
        Ok(Self { system, config, frame })
    }

    /// Metrics at `(ω_p, δ_Φ)` with the configured interaction flux.
    pub fn evaluate(&self, drive_freq: f64, drive_amp: f64) -> Result<GateMetrics> {
        self.evaluate_at(drive_freq, drive_amp, self.config.interaction_flux())
    }

    pub fn evaluate_at(&self, drive_freq: f64, drive_amp: f64, interaction: f64) -> Result<GateMetrics> {
        let sim = Simulation::new(self.system, self.config.dt)?;
        let (pulse, ramp) = self.config.schedule(drive_freq, drive_amp, interaction);
        let moved_frame = self.config.mode == BiasMode::StaticBias && interaction != self.config.interaction_flux();
        let tp = if moved_frame {
            sim.propagate_computational_unitary(&pulse, ramp.as_ref())?
        } else {
            sim.computational_unitary_in_frame(&self.frame, &pulse, ramp.as_ref())?
        };
        with_channels(&tp)
    }
}

/// Builds the schedule for `(ω_p, δ_Φ)`, propagates and grades it.
pub fn evaluate_gate(system: &CompositeSystem, config: &GateConfig, drive_freq: f64, drive_amp: f64) -> Result<GateMetrics> {
    GateLab::new(system, *config)?.evaluate(drive_freq, drive_amp)
}

/// Floquet calibration of the gate pair at one interaction flux: the
/// transition at a reference amplitude plus the undriven dressed frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriveCalibration {
    pub flux: f64,
    pub reference_amp: f64,
    pub omega_undriven: f64,
    pub omega_reference: f64,
    pub strength_reference: f64,
}

impl DriveCalibration {
    /// Strength taken linear in `δ_Φ`, the drive-induced shift quadratic.
    pub fn seed_for(&self, gate_time: f64, drive_ramp: f64) -> (f64, f64) {
        // a full |11⟩ → |22⟩ → |11⟩ cycle takes 1/(2g) at constant drive;
        // the cosine ramps count half their length
        let effective = (gate_time - drive_ramp).max(1e-3);
        let amp = self.reference_amp * (1.0 / (2.0 * effective)) / self.strength_reference;
        let r = amp / self.reference_amp;
        (self.omega_undriven + (self.omega_reference - self.omega_undriven) * r * r, amp)
    }
}

pub fn calibrate_drive(system: &CompositeSystem, config: &GateConfig, flux: f64) -> Result<DriveCalibration> {
    let frame = system.labeled_spectrum(flux)?;
    let omega_undriven = frame.energy(GATE_PAIR.1)? - frame.energy(GATE_PAIR.0)?;
    let fit: TransitionFit = extract_transition(
        system,
        flux,
        config.reference_amp,
        GATE_PAIR,
        (omega_undriven - 0.08, omega_undriven + 0.02),
        21,
        config.dt,
    )?;
    Ok(DriveCalibration {
        flux,
        reference_amp: config.reference_amp,
        omega_undriven,
        omega_reference: fit.omega_res,
        strength_reference: fit.strength,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimum {
    pub gate_time: f64,
    pub drive_freq: f64,
    pub drive_amp: f64,
    pub flux_interaction: f64,
    pub objective: f64,
    pub metrics: GateMetrics,
    pub seed: [f64; 2],
    pub seed_objective: f64,
    /// Every evaluation as `[ω_p, δ_Φ, Φ_interaction, objective]`.
    pub trace: Vec<[f64; 4]>,
}

/// Optimizes `(ω_p, δ_Φ)` (and the interaction flux when enabled) for gate
/// length `gate_time`, seeding from a Floquet calibration.
pub fn optimize_cz(system: &CompositeSystem, config: &GateConfig, gate_time: f64) -> Result<Optimum> {
    let cfg = GateConfig { gate_time, ..*config };
    cfg.validate()?;
    let cal = calibrate_drive(system, &cfg, cfg.interaction_flux())?;
    optimize_with_calibration(system, &cfg, &cal)
}

pub fn optimize_with_calibration(system: &CompositeSystem, config: &GateConfig, cal: &DriveCalibration) -> Result<Optimum> {
    let lab = GateLab::new(system, *config)?;
    let (f0, a0) = cal.seed_for(config.gate_time, config.drive_ramp);
    let phi0 = config.interaction_flux();
    let b = config.bounds;
    let mut seed = vec![f0, a0];
    let mut bounds = vec![
        b.drive_freq.unwrap_or((f0 - 0.02, f0 + 0.02)),
        b.drive_amp.unwrap_or((0.6 * a0, 1.4 * a0)),
    ];
    if config.optimize_bias {
        seed.push(phi0);
        bounds.push(b.flux.unwrap_or((phi0 - 0.01, phi0 + 0.01)));
    }
    let objective = |x: &[f64]| -> f64 {
        let phi = x.get(2).copied().unwrap_or(phi0);
        lab.evaluate_at(x[0], x[1], phi).map(|m| m.objective()).unwrap_or(f64::INFINITY)
    };
    let seed_objective = objective(&seed);
    let opts = SimplexOptions {
        max_evaluations: config.max_evaluations,
        restarts: config.restarts,
        accept: config.accept_objective,
        ..Default::default()
    };
    let found = minimize(objective, &seed, &bounds, &opts)?;
    let trace: Vec<[f64; 4]> =
        found.trace.iter().map(|(x, v)| [x[0], x[1], x.get(2).copied().unwrap_or(phi0), *v]).collect();
    if !(found.value <= STAGNATION_LIMIT) {
        return Err(Error::Stagnation { objective: found.value, evaluations: found.evaluations, trace });
    }
    let phi = found.x.get(2).copied().unwrap_or(phi0);
    let metrics = lab.evaluate_at(found.x[0], found.x[1], phi)?;
    Ok(Optimum {
        gate_time: config.gate_time,
        drive_freq: found.x[0],
        drive_amp: found.x[1],
        flux_interaction: phi,
        objective: found.value,
        metrics,
        seed: [f0, a0],
        seed_objective,
        trace,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub gate_time: f64,
    pub drive_ramp: f64,
    pub result: std::result::Result<Optimum, String>,
}

/// Optimized gate at every `(t_g, ramp)` pair; failed points are recorded and
/// the sweep continues. Points run in parallel.
pub fn error_vs_length(
    system: &CompositeSystem,
    config: &GateConfig,
    gate_times: &[f64],
    drive_ramps: &[f64],
) -> Result<Vec<SweepPoint>> {
    let points: Vec<(f64, f64)> =
        drive_ramps.iter().flat_map(|&r| gate_times.iter().map(move |&t| (t, r))).collect();
    for &(t, r) in &points {
        if t < 2.0 * r + 10.0 {
            return Err(invalid("gate_times", format!("t_g = {t} is below 2·ramp + 10 for ramp {r}")));
        }
    }
    config.validate()?;
    let cal = calibrate_drive(system, config, config.interaction_flux())?;
    Ok(crate::par::map(&points, |&(gate_time, drive_ramp)| {
        let cfg = GateConfig { gate_time, drive_ramp, ..*config };
        let result = optimize_with_calibration(system, &cfg, &cal).map_err(|e| e.to_string());
        SweepPoint { gate_time, drive_ramp, result }
    }))
}

/// Coherence of the non-computational `|22⟩` state, in μs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTimes {
    pub t1_22: f64,
    pub tphi_22: f64,
}

impl CoherenceTimes {
    pub fn new(t1_22: f64, tphi_22: f64) -> Result<Self> {
        if !(t1_22 > 0.0 && tphi_22 > 0.0) {
            return Err(invalid("coherence", "times must be positive"));
        }
        Ok(Self { t1_22, tphi_22 })
    }
}

/// White-noise relaxation and dephasing error of the gate transition;
/// `gate_time` in ns, coherence in μs.
pub fn incoherent_error(gate_time: f64, times: CoherenceTimes) -> f64 {
    let t = gate_time * 1e-3;
    3.0 / 32.0 * t / times.t1_22 + 13.0 / 80.0 * t / times.tphi_22
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: [C64; 4]) -> DMatrix<C64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&v))
    }

    fn one(phase: f64) -> C64 {
        C64::from_polar(1.0, phase)
    }

    #[test]
    fn ideal_cz_and_identity() {
        let m = gate_metrics(&diag([one(0.0), one(0.0), one(0.0), one(PI)])).unwrap();
        assert!((m.fidelity - 1.0).abs() < 1e-15 && m.leakage.abs() < 1e-15);
        assert!((m.conditional_phase - PI).abs() < 1e-12);
        let m = gate_metrics(&DMatrix::identity(4, 4)).unwrap();
        assert!((m.fidelity - 0.4).abs() < 1e-15);
        assert!(m.conditional_phase.abs() < 1e-12);
    }

    #[test]
    fn local_phases_removed() {
        let (a, b, g) = (0.7, -1.9, 2.3);
        let u = diag([one(g), one(g + a), one(g + b), one(g + a + b + PI)]);
        let m = gate_metrics(&u).unwrap();
        assert!((m.fidelity - 1.0).abs() < 1e-12);
        assert!((m.single_qubit_phases[0] - b).abs() < 1e-12);
        assert!((m.single_qubit_phases[1] - a).abs() < 1e-12);
    }

    #[test]
    fn scaled_column_leakage() {
        let l: f64 = 0.02;
        let u = diag([one(0.0), one(0.0), one(0.0), one(PI) * (1.0 - l).sqrt()]);
        let m = gate_metrics(&u).unwrap();
        assert!((m.leakage - l / 4.0).abs() < 1e-15);
        // Tr(U†U) = 4 − ℓ, |Tr(U_cz†U)|² = (3 + √(1−ℓ))²
        let expect = (4.0 - l + (3.0 + (1.0 - l).sqrt()).powi(2)) / 20.0;
        assert!((m.fidelity - expect).abs() < 1e-15);
    }

    #[test]
    fn tiny_diagonal_flagged() {
        let u = diag([one(0.0), C64::new(1e-4, 0.0), one(0.0), one(PI)]);
        assert!(gate_metrics(&u).unwrap().phase_unreliable);
        assert!(gate_metrics(&DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn objective_wraps_phase() {
        let m = |cp: f64| GateMetrics {
            fidelity: 1.0,
            error: 0.0,
            leakage: 0.0,
            conditional_phase: cp,
            single_qubit_phases: [0.0; 2],
            phase_unreliable: false,
            channels: vec![],
        };
        assert!(m(PI).objective() < 1e-30);
        assert!((m(0.0).objective() - 1.0).abs() < 1e-15);
        assert!((m(1.9 * PI).objective() - m(0.1 * PI).objective()).abs() < 1e-12);
    }

    #[test]
    fn incoherent_error_formula() {
        let c = CoherenceTimes::new(5.0, 5.0).unwrap();
        assert!((incoherent_error(100.0, c) - 5.125e-3).abs() < 1e-17);
        assert_eq!(incoherent_error(0.0, c), 0.0);
        let c = CoherenceTimes::new(f64::INFINITY, 5.0).unwrap();
        assert!((incoherent_error(100.0, c) - 13.0 / 80.0 * 0.02).abs() < 1e-17);
        assert!(CoherenceTimes::new(0.0, 1.0).is_err());
    }

    #[test]
    fn config_invariants() {
        assert!(GateConfig::dynamic(0.0, 0.0, 60.0).validate().is_err());
        assert!(GateConfig::dynamic(0.0, 0.35, 60.0).validate().is_ok());
        assert!(GateConfig::static_bias(0.3, 60.0).validate().is_ok());
        assert!(GateConfig::static_bias(0.3, 9.0).validate().is_err());
        let c = GateConfig::static_bias(0.3, 60.0);
        assert_eq!(c.interaction_flux(), 0.3);
        assert!(c.schedule(10.8, 0.05, 0.3).1.is_none());
    }

    #[test]
    fn channel_ranking() {
        let c = |p: f64, to: Label| Channel { from: [1, 0, 1], to, population: p };
        let m = GateMetrics {
            fidelity: 1.0,
            error: 0.0,
            leakage: 0.0,
            conditional_phase: PI,
            single_qubit_phases: [0.0; 2],
            phase_unreliable: false,
            channels: vec![c(1e-12, [2, 1, 1]), c(3e-3, [1, 2, 1]), c(1e-4, [1, 1, 2])],
        };
        let r = leakage_channels(&m, 5);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].to, [1, 2, 1]);
        assert_eq!(leakage_channels(&m, 1).len(), 1);
    }
}
