//! Coupler flux waveforms: static (optionally ramped) bias plus a single-tone
//! drive under a flat-top cosine envelope.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Coupler flux split into its slow bias and the total including any drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSample {
    pub bias: f64,
    pub total: f64,
}

impl FluxSample {
    pub fn fixed(flux: f64) -> Self {
        Self { bias: flux, total: flux }
    }
}

/// Single-tone parametric drive. Frequencies in GHz, times in ns, fluxes in Φ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricPulse {
    pub flux_static: f64,
    pub drive_amp: f64,
    pub drive_freq: f64,
    #[serde(default)]
    pub drive_phase: f64,
    pub ramp_time: f64,
    pub gate_time: f64,
}

impl ParametricPulse {
    /// Drive with no envelope ramps.
    pub fn square(flux_static: f64, drive_amp: f64, drive_freq: f64, gate_time: f64) -> Self {
        Self { flux_static, drive_amp, drive_freq, drive_phase: 0.0, ramp_time: 0.0, gate_time }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drive_amp >= 0.0) {
            return Err(invalid("drive_amp", format!("must be non-negative, got {}", self.drive_amp)));
        }
        if !(self.ramp_time >= 0.0 && 2.0 * self.ramp_time <= self.gate_time + 1e-12) {
            return Err(invalid(
                "ramp_time",
                format!("need 0 <= 2·ramp_time <= gate_time, got ramp {} gate {}", self.ramp_time, self.gate_time),
            ));
        }
        if !(self.drive_freq >= 0.0 && self.drive_freq.is_finite()) {
            return Err(invalid("drive_freq", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// Flat-top cosine envelope, `0` outside `[0, gate_time]`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.drive_amp * flat_top(t, self.ramp_time, self.gate_time)
    }
}

/// Dynamic bias from an idle flux to an interaction flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRamp {
    pub flux_idle: f64,
    pub flux_interaction: f64,
    pub ramp_time: f64,
    #[serde(default)]
    pub lead: f64,
    #[serde(default)]
    pub lag: f64,
}

impl BiasRamp {
    pub fn new(flux_idle: f64, flux_interaction: f64, ramp_time: f64) -> Self {
        Self { flux_idle, flux_interaction, ramp_time, lead: 0.0, lag: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ramp_time > 0.0) {
            return Err(invalid("bias_ramp", format!("ramp time must be positive, got {}", self.ramp_time)));
        }
        if !(self.lead >= 0.0 && self.lag >= 0.0) {
            return Err(invalid("bias_ramp", "lead and lag must be non-negative"));
        }
        Ok(())
    }
}

/// `0 → 1` cosine rise over `ramp`, flat, and cosine fall ending at `length`.
pub fn flat_top(t: f64, ramp: f64, length: f64) -> f64 {
    if t <= 0.0 || t >= length {
        0.0
    } else if ramp > 0.0 && t < ramp {
        0.5 * (1.0 - (PI * t / ramp).cos())
    } else if ramp > 0.0 && t > length - ramp {
        0.5 * (1.0 - (PI * (length - t) / ramp).cos())
    } else {
        1.0
    }
}

/// Total schedule length: the drive plus any bias padding.
pub fn schedule_length(pulse: &ParametricPulse, ramp: Option<&BiasRamp>) -> f64 {
    match ramp {
        Some(r) => r.lead + pulse.gate_time + r.lag,
        None => pulse.gate_time,
    }
}

/// Flux at which the measurement frame is defined (the coupler's resting point).
pub fn frame_flux(pulse: &ParametricPulse, ramp: Option<&BiasRamp>) -> f64 {
    ramp.map_or(pulse.flux_static, |r| r.flux_idle)
}

/// Coupler flux at time `t`.
///
/// Without a bias ramp the static part is `pulse.flux_static`. With one, the
/// static part follows a flat-top profile from `flux_idle` to
/// `flux_interaction` over the full schedule and the drive starts after
/// `lead`; the drive phase is referenced to the drive start.
pub fn flux_waveform(pulse: &ParametricPulse, ramp: Option<&BiasRamp>, t: f64) -> f64 {
    flux_sample(pulse, ramp, t).total
}

/// Bias and total coupler flux at time `t`; see [`flux_waveform`].
pub fn flux_sample(pulse: &ParametricPulse, ramp: Option<&BiasRamp>, t: f64) -> FluxSample {
    let (bias, drive_t) = match ramp {
        Some(r) => {
            let total = r.lead + pulse.gate_time + r.lag;
            let profile = flat_top(t, r.ramp_time, total);
            (r.flux_idle + (r.flux_interaction - r.flux_idle) * profile, t - r.lead)
        }
        None => (pulse.flux_static, t),
    };
    let env = pulse.envelope(drive_t);
    if env == 0.0 {
        return FluxSample::fixed(bias);
    }
    FluxSample { bias, total: bias + env * (2.0 * PI * pulse.drive_freq * drive_t + pulse.drive_phase).cos() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> ParametricPulse {
        ParametricPulse { flux_static: 0.35, drive_amp: 0.045, drive_freq: 10.89, drive_phase: 0.3, ramp_time: 5.0, gate_time: 60.0 }
    }

    #[test]
    fn starts_at_rest() {
        assert_eq!(flux_waveform(&pulse(), None, 0.0), 0.35);
        let r = BiasRamp::new(0.0, 0.35, 3.0);
        assert_eq!(flux_waveform(&pulse(), Some(&r), 0.0), 0.0);
    }

    #[test]
    fn flat_top_region_value() {
        let p = pulse();
        let t = p.gate_time / 2.0;
        let expect = 0.35 + 0.045 * (2.0 * PI * 10.89 * t + 0.3).cos();
        assert!((flux_waveform(&p, None, t) - expect).abs() < 1e-15);
    }

    #[test]
    fn envelope_is_c1_at_junctions() {
        let p = pulse();
        let h = 1e-6;
        for t in [0.0, p.ramp_time, p.gate_time - p.ramp_time, p.gate_time] {
            let l = p.envelope(t - h);
            let c = p.envelope(t);
            let r = p.envelope(t + h);
            assert!((l - c).abs() < 1e-9 && (r - c).abs() < 1e-9, "value jump at {t}");
            let dl = (c - l) / h;
            let dr = (r - c) / h;
            assert!((dl - dr).abs() < 1e-4, "slope jump at {t}: {dl} vs {dr}");
        }
    }

    #[test]
    fn ramp_invariant_checked() {
        let p = ParametricPulse { ramp_time: 31.0, ..pulse() };
        assert!(p.validate().is_err());
        let p = ParametricPulse { drive_amp: -0.1, ..pulse() };
        assert!(p.validate().is_err());
        assert!(pulse().validate().is_ok());
    }

    #[test]
    fn bias_ramp_reaches_interaction_point() {
        let p = ParametricPulse { drive_amp: 0.0, ..pulse() };
        let r = BiasRamp::new(0.0, 0.35, 3.0);
        assert!((flux_waveform(&p, Some(&r), 30.0) - 0.35).abs() < 1e-15);
        assert!((flux_waveform(&p, Some(&r), 1.5) - 0.175).abs() < 1e-12);
        assert_eq!(flux_waveform(&p, Some(&r), 60.0), 0.0);
    }
}
