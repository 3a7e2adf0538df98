//! Run configuration: TOML with one section per circuit block and one per
//! command. Frequencies in GHz, times in ns, fluxes in flux quanta.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fluxcz::composite::{CompositeParams, DriveModel, Label};
use fluxcz::gate::{BiasMode, CoherenceTimes, GateConfig, SearchBounds};
use fluxcz::spectra::{FluxoniumParams, TransmonParams, DEFAULT_FLUXONIUM_BASIS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub circuits: Circuits,
    pub couplings: Couplings,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub numerics: Numerics,
    pub spectrum: Option<SpectrumSection>,
    pub shift_scan: Option<ShiftScanSection>,
    pub chevron: Option<ChevronSection>,
    pub amplitude: Option<AmplitudeSection>,
    pub floquet: Option<FloquetSection>,
    pub gate: Option<GateSection>,
    pub gate_sweep: Option<GateSweepSection>,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fluxonium {
    pub e_c: f64,
    pub e_l: f64,
    pub e_j: f64,
    /// External flux in flux quanta; 0.5 is the sweet spot.
    #[serde(default = "half")]
    pub flux_ext: f64,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupler {
    pub e_c: f64,
    pub e_j_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circuits {
    pub q0: Fluxonium,
    pub q1: Fluxonium,
    pub coupler: Coupler,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    pub j_c0: f64,
    pub j_c1: f64,
    pub j_01: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    #[serde(default = "flux_levels")]
    pub flux_levels: usize,
    #[serde(default = "coupler_levels")]
    pub coupler_levels: usize,
    #[serde(default = "fluxonium_basis")]
    pub fluxonium_basis: usize,
}

fn flux_levels() -> usize {
    5
}
fn coupler_levels() -> usize {
    6
}
fn fluxonium_basis() -> usize {
    DEFAULT_FLUXONIUM_BASIS
}

impl Default for Truncation {
    fn default() -> Self {
        Self { flux_levels: flux_levels(), coupler_levels: coupler_levels(), fluxonium_basis: fluxonium_basis() }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    #[serde(default)]
    pub drive_model: DriveModel,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Integrator step in picoseconds.
    #[serde(default = "dt_ps")]
    pub dt_ps: f64,
}

fn dt_ps() -> f64 {
    fluxcz::dynamics::DEFAULT_DT * 1e3
}

impl Default for Numerics {
    fn default() -> Self {
        Self { dt_ps: dt_ps() }
    }
}

/// Evenly spaced grid including both ends, or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) if r.points == 1 => vec![r.start],
            Grid::Range(r) => {
                let step = (r.stop - r.start) / (r.points - 1) as f64;
                (0..r.points).map(|k| r.start + step * k as f64).collect()
            }
        }
    }

    fn check(&self, path: &str) -> Result<()> {
        match self {
            Grid::List(v) if v.is_empty() => bail!("{path}: empty grid"),
            Grid::List(v) if v.iter().any(|x| !x.is_finite()) => bail!("{path}: non-finite value"),
            Grid::Range(r) if r.points == 0 => bail!("{path}: empty grid"),
            Grid::Range(r) if !(r.start.is_finite() && r.stop.is_finite()) => bail!("{path}: non-finite bound"),
            Grid::Range(r) if r.points > 1 && r.start >= r.stop => bail!("{path}: need start < stop"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "spectrum_levels")]
    pub levels: usize,
    /// Coupler fluxes for the charge-basis spectrum.
    pub coupler_fluxes: Vec<f64>,
    pub reference: Option<SpectrumReference>,
}

fn spectrum_levels() -> usize {
    5
}

/// Expected values printed next to the computed ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumReference {
    /// `ω_01, ω_12, ω_03, ω_14` of each fluxonium.
    pub q0: Option<[f64; 4]>,
    pub q1: Option<[f64; 4]>,
    /// `(flux, ω_01, ω_12)` of the coupler.
    #[serde(default)]
    pub coupler: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftScanSection {
    pub flux: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// Dressed `|11⟩`.
    Eleven,
    /// Equal-phase superposition of the four computational states.
    Plus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChevronSection {
    pub flux_s: f64,
    pub drive_amp: f64,
    pub freq: Grid,
    pub time: Grid,
    #[serde(default)]
    pub ramp: f64,
    #[serde(default = "initial")]
    pub initial: Initial,
    #[serde(default = "record")]
    pub record: Vec<Label>,
}

fn initial() -> Initial {
    Initial::Eleven
}
fn record() -> Vec<Label> {
    vec![[1, 0, 1]]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplitudeSection {
    pub flux_s: f64,
    pub freq: Grid,
    pub amp: Grid,
    pub time: f64,
    #[serde(default)]
    pub ramp: f64,
    #[serde(default = "initial")]
    pub initial: Initial,
    #[serde(default = "record")]
    pub record: Vec<Label>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetSection {
    pub flux_s: f64,
    pub amp: Grid,
    /// Frequency window `[lo, hi]` searched for the crossing.
    pub window: [f64; 2],
    #[serde(default = "resolution")]
    pub resolution: usize,
    /// Dressed pair `(from, to)`.
    #[serde(default = "pair")]
    pub pair: [Label; 2],
}

fn resolution() -> usize {
    21
}
fn pair() -> [Label; 2] {
    [[1, 0, 1], [2, 0, 2]]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coherence {
    pub t1_22_us: f64,
    pub tphi_22_us: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub mode: BiasMode,
    pub flux_idle: f64,
    /// Required in dynamic mode, ignored in static mode.
    pub flux_interaction: Option<f64>,
    pub gate_time: f64,
    pub bias_ramp: Option<f64>,
    pub drive_ramp: Option<f64>,
    #[serde(default)]
    pub bounds: SearchBounds,
    #[serde(default)]
    pub optimize_bias: bool,
    pub reference_amp: Option<f64>,
    pub restarts: Option<usize>,
    pub max_evaluations: Option<usize>,
    pub accept_objective: Option<f64>,
    pub coherence: Option<Coherence>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSweepSection {
    pub gate_times: Grid,
    #[serde(default = "drive_ramps")]
    pub drive_ramps: Vec<f64>,
}

fn drive_ramps() -> Vec<f64> {
    vec![5.0]
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Output directory; `--out` takes precedence.
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    ShiftScan,
    Chevron,
    Amplitude,
    Floquet,
    GateOpt,
    GateSweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::ShiftScan => "shift-scan",
            Command::Chevron => "chevron",
            Command::Amplitude => "amplitude",
            Command::Floquet => "floquet",
            Command::GateOpt => "gate-opt",
            Command::GateSweep => "gate-sweep",
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn dt_ns(&self) -> f64 {
        self.numerics.dt_ps * 1e-3
    }

    pub fn composite(&self) -> CompositeParams {
        let fl = |f: &Fluxonium| FluxoniumParams::new(f.e_c, f.e_l, f.e_j, 2.0 * PI * f.flux_ext);
        CompositeParams {
            q0: fl(&self.circuits.q0),
            q1: fl(&self.circuits.q1),
            coupler: TransmonParams::new(self.circuits.coupler.e_c, self.circuits.coupler.e_j_max, 0.0),
            j_c0: self.couplings.j_c0,
            j_c1: self.couplings.j_c1,
            j_01: self.couplings.j_01,
            n_flux_levels: self.truncation.flux_levels,
            n_coupler_levels: self.truncation.coupler_levels,
            fluxonium_basis: self.truncation.fluxonium_basis,
            drive_model: self.model.drive_model,
        }
    }

    pub fn gate_config(&self) -> Result<GateConfig> {
        let g = self.gate.as_ref().context("gate: section missing")?;
        let interaction = match g.mode {
            BiasMode::DynamicBias => g.flux_interaction.context("gate.flux_interaction: required in dynamic-bias mode")?,
            BiasMode::StaticBias => g.flux_idle,
        };
        let mut cfg = match g.mode {
            BiasMode::DynamicBias => GateConfig::dynamic(g.flux_idle, interaction, g.gate_time),
            BiasMode::StaticBias => GateConfig::static_bias(g.flux_idle, g.gate_time),
        };
        cfg.bias_ramp = g.bias_ramp.unwrap_or(cfg.bias_ramp);
        cfg.drive_ramp = g.drive_ramp.unwrap_or(cfg.drive_ramp);
        cfg.bounds = g.bounds;
        cfg.optimize_bias = g.optimize_bias;
        cfg.reference_amp = g.reference_amp.unwrap_or(cfg.reference_amp);
        cfg.restarts = g.restarts.unwrap_or(cfg.restarts);
        cfg.max_evaluations = g.max_evaluations.unwrap_or(cfg.max_evaluations);
        cfg.accept_objective = g.accept_objective.unwrap_or(cfg.accept_objective);
        cfg.dt = self.dt_ns();
        Ok(cfg)
    }

    pub fn coherence(&self) -> Result<Option<CoherenceTimes>> {
        match self.gate.as_ref().and_then(|g| g.coherence) {
            Some(c) => Ok(Some(CoherenceTimes::new(c.t1_22_us, c.tphi_22_us).context("gate.coherence")?)),
            None => Ok(None),
        }
    }

    /// Checks the circuit and the section `cmd` needs, without computing anything.
    pub fn validate(&self, cmd: Command) -> Result<()> {
        if !(self.numerics.dt_ps > 0.0 && self.numerics.dt_ps.is_finite()) {
            bail!("numerics.dt_ps: must be positive, got {}", self.numerics.dt_ps);
        }
        let p = self.composite();
        p.validate().context("circuits/couplings/truncation")?;
        let labels_ok = |labels: &[Label], path: &str| -> Result<()> {
            if labels.is_empty() {
                bail!("{path}: empty label list");
            }
            for l in labels {
                if l[0] >= p.n_flux_levels || l[2] >= p.n_flux_levels || l[1] >= p.n_coupler_levels {
                    bail!("{path}: label {l:?} outside the truncation");
                }
            }
            Ok(())
        };
        let flux_ok = |f: f64, path: &str| -> Result<()> {
            p.coupler.at_flux(f).validate().with_context(|| path.to_string())?;
            Ok(())
        };
        match cmd {
            Command::Spectrum => {
                let s = self.spectrum.as_ref().context("spectrum: section missing")?;
                if s.levels < 5 {
                    bail!("spectrum.levels: need at least 5 for the ω_14 transition");
                }
                for &f in &s.coupler_fluxes {
                    flux_ok(f, "spectrum.coupler_fluxes")?;
                }
            }
            Command::ShiftScan => {
                let s = self.shift_scan.as_ref().context("shift_scan: section missing")?;
                s.flux.check("shift_scan.flux")?;
                for f in s.flux.values() {
                    flux_ok(f, "shift_scan.flux")?;
                }
            }
            Command::Chevron => {
                let s = self.chevron.as_ref().context("chevron: section missing")?;
                s.freq.check("chevron.freq")?;
                s.time.check("chevron.time")?;
                flux_ok(s.flux_s, "chevron.flux_s")?;
                flux_ok(s.flux_s + s.drive_amp.abs(), "chevron.drive_amp")?;
                flux_ok(s.flux_s - s.drive_amp.abs(), "chevron.drive_amp")?;
                if s.freq.values().iter().any(|&f| f <= 0.0) {
                    bail!("chevron.freq: frequencies must be positive");
                }
                if s.time.values().iter().any(|&t| t <= 2.0 * s.ramp) {
                    bail!("chevron.time: every time must exceed twice the ramp");
                }
                labels_ok(&s.record, "chevron.record")?;
            }
            Command::Amplitude => {
                let s = self.amplitude.as_ref().context("amplitude: section missing")?;
                s.freq.check("amplitude.freq")?;
                s.amp.check("amplitude.amp")?;
                flux_ok(s.flux_s, "amplitude.flux_s")?;
                let amax = s.amp.values().iter().fold(0.0_f64, |m, a| m.max(a.abs()));
                flux_ok(s.flux_s + amax, "amplitude.amp")?;
                flux_ok(s.flux_s - amax, "amplitude.amp")?;
                if s.freq.values().iter().any(|&f| f <= 0.0) {
                    bail!("amplitude.freq: frequencies must be positive");
                }
                if !(s.time > 2.0 * s.ramp) {
                    bail!("amplitude.time: must exceed twice the ramp");
                }
                labels_ok(&s.record, "amplitude.record")?;
            }
            Command::Floquet => {
                let s = self.floquet.as_ref().context("floquet: section missing")?;
                s.amp.check("floquet.amp")?;
                flux_ok(s.flux_s, "floquet.flux_s")?;
                let amax = s.amp.values().iter().fold(0.0_f64, |m, a| m.max(a.abs()));
                flux_ok(s.flux_s + amax, "floquet.amp")?;
                flux_ok(s.flux_s - amax, "floquet.amp")?;
                if !(s.window[0] > 0.0 && s.window[0] < s.window[1]) {
                    bail!("floquet.window: need 0 < lo < hi");
                }
                if s.resolution < 3 {
                    bail!("floquet.resolution: need at least 3 points");
                }
                labels_ok(&s.pair, "floquet.pair")?;
            }
            Command::GateOpt | Command::GateSweep => {
                let cfg = self.gate_config()?;
                self.coherence()?;
                flux_ok(cfg.flux_idle, "gate.flux_idle")?;
                flux_ok(cfg.interaction_flux(), "gate.flux_interaction")?;
                if cmd == Command::GateOpt {
                    cfg.validate().context("gate")?;
                } else {
                    let s = self.gate_sweep.as_ref().context("gate_sweep: section missing")?;
                    s.gate_times.check("gate_sweep.gate_times")?;
                    if s.drive_ramps.is_empty() {
                        bail!("gate_sweep.drive_ramps: empty list");
                    }
                    for &r in &s.drive_ramps {
                        for t in s.gate_times.values() {
                            if t < 2.0 * r + 10.0 {
                                bail!("gate_sweep.gate_times: t_g = {t} is below 2·ramp + 10 for ramp {r}");
                            }
                            fluxcz::gate::GateConfig { gate_time: t, drive_ramp: r, ..cfg }.validate().context("gate")?;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[circuits]
q0 = { e_c = 1.41, e_l = 0.80, e_j = 6.27 }
q1 = { e_c = 1.30, e_l = 0.59, e_j = 5.71 }
coupler = { e_c = 0.32, e_j_max = 55.0 }

[couplings]
j_c0 = 0.5
j_c1 = 0.5
j_01 = 0.125
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.truncation.coupler_levels, 6);
        assert!((c.dt_ns() - fluxcz::dynamics::DEFAULT_DT).abs() < 1e-15);
        assert!((c.composite().q0.phi_ext - PI).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{BASE}\n[numerics]\ndt_ps = 5.0\nsteps = 3\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("steps"), "{err}");
    }

    #[test]
    fn empty_grid_rejected() {
        let text = format!("{BASE}\n[shift_scan]\nflux = []\n");
        let c = RunConfig::parse(&text).unwrap();
        let err = c.validate(Command::ShiftScan).unwrap_err().to_string();
        assert!(err.contains("shift_scan.flux"), "{err}");
    }

    #[test]
    fn missing_section_named() {
        let c = RunConfig::parse(BASE).unwrap();
        let err = c.validate(Command::Chevron).unwrap_err().to_string();
        assert!(err.contains("chevron"), "{err}");
    }

    #[test]
    fn grid_forms() {
        let r = Grid::Range(Range { start: 1.0, stop: 2.0, points: 5 });
        assert_eq!(r.values(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert_eq!(Grid::List(vec![3.0]).values(), vec![3.0]);
    }

    #[test]
    fn static_gate_uses_idle_flux() {
        let text = format!("{BASE}\n[gate]\nmode = \"static-bias\"\nflux_idle = 0.3\ngate_time = 80.0\n");
        let c = RunConfig::parse(&text).unwrap();
        let g = c.gate_config().unwrap();
        assert_eq!(g.interaction_flux(), 0.3);
        c.validate(Command::GateOpt).unwrap();
    }
}
