//! Time-domain propagation of the composite system under a coupler flux
//! schedule, and the chevron / amplitude scans built on it.
//!
//! Stepping uses the fourth-order commutator-free Magnus scheme with two
//! exponentials per step, evaluated at the Gauss–Legendre nodes. Because the
//! Hamiltonian is linear in three flux-dependent scalars (coupler frequency,
//! charge scale, squeezing), each exponential is `H` evaluated at a weighted
//! combination of them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::composite::{CompositeSystem, Label, LabeledSpectrum, Sector};
use crate::error::{invalid, Error, Result};
use crate::linalg::{expm_action, ExpScratch, C64};
use crate::pulse::{flux_sample, frame_flux, FluxSample, schedule_length, BiasRamp, ParametricPulse};
use std::f64::consts::PI;

/// Default time step in ns. Halving it moves populations by < 1e-6 over
/// 200 ns for drive amplitudes up to about 0.075 Φ₀.
pub const DEFAULT_DT: f64 = 0.0025;
/// Maximum tolerated `|‖ψ‖ − 1|`.
pub const NORM_LIMIT: f64 = 1e-8;

/// Computational states `|00⟩, |01⟩, |10⟩, |11⟩` as bare triples.
pub const COMPUTATIONAL: [Label; 4] = [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]];

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // √3/6
const NODE_1: f64 = 0.5 - SQRT3_6;
const NODE_2: f64 = 0.5 + SQRT3_6;
const W_EARLY: f64 = 0.25 + SQRT3_6;
const W_LATE: f64 = 0.25 - SQRT3_6;

/// Fixed-step propagator for one composite system.
#[derive(Debug, Clone, Copy)]
pub struct Stepper<'a> {
    pub system: &'a CompositeSystem,
    pub dt: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(system: &'a CompositeSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        Ok(Self { system, dt })
    }

    /// Evolves the row-major block `state` (`dim × width`) from `t0` to `t1`
    /// under `flux(t)`, using `ceil(|t1 − t0| / dt)` equal steps. `t1 < t0`
    /// runs backwards in time. Each invariant sector is propagated on its own,
    /// restricted to the columns with support there.
    pub fn evolve(
        &self,
        flux: &dyn Fn(f64) -> FluxSample,
        t0: f64,
        t1: f64,
        state: &mut [C64],
        width: usize,
        scratch: &mut StepScratch,
    ) -> Result<()> {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(());
        }
        let steps = (span.abs() / self.dt).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        let mut block = std::mem::take(&mut scratch.block);
        for sector in self.system.sectors() {
            let cols: Vec<usize> = (0..width)
                .filter(|&j| sector.indices.iter().any(|&i| state[i * width + j] != C64::default()))
                .collect();
            if cols.is_empty() {
                continue;
            }
            let w = cols.len();
            block.clear();
            for &i in &sector.indices {
                block.extend(cols.iter().map(|&j| state[i * width + j]));
            }
            for k in 0..steps {
                self.step(sector, flux, t0 + h * k as f64, h, &mut block, w, scratch)?;
            }
            for (r, &i) in sector.indices.iter().enumerate() {
                for (c, &j) in cols.iter().enumerate() {
                    state[i * width + j] = block[r * w + c];
                }
            }
        }
        scratch.block = block;
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        sector: &Sector,
        flux: &dyn Fn(f64) -> FluxSample,
        t: f64,
        h: f64,
        state: &mut [C64],
        width: usize,
        scratch: &mut StepScratch,
    ) -> Result<()> {
        let k1 = self.system.drive_coefficients(flux(t + NODE_1 * h))?;
        let k2 = self.system.drive_coefficients(flux(t + NODE_2 * h))?;
        // exp(−i h (a H1 + b H2)) = exp(−i (h/2) H(2a k1 + 2b k2)) since a + b = 1/2
        for (a, b) in [(W_EARLY, W_LATE), (W_LATE, W_EARLY)] {
            let k = k1.blend(2.0 * a, &k2, 2.0 * b);
            sector.diagonal(k.omega_c, &mut scratch.diag);
            expm_action(&sector.csr, &k.scales(), &scratch.diag, PI * h, state, width, &mut scratch.exp);
        }
        Ok(())
    }
}

/// Per-worker scratch space for [`Stepper`].
#[derive(Debug, Default, Clone)]
pub struct StepScratch {
    block: Vec<C64>,
    diag: Vec<f64>,
    exp: ExpScratch,
}

/// Initial condition expressed in the dressed frame.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Dressed(Label),
    /// Normalized internally.
    Superposition(Vec<(Label, C64)>),
}

impl InitialState {
    /// Equal-phase superposition of the four computational states.
    pub fn computational_plus() -> Self {
        InitialState::Superposition(COMPUTATIONAL.iter().map(|&l| (l, C64::new(0.5, 0.0))).collect())
    }

    fn to_bare(&self, frame: &LabeledSpectrum) -> Result<Vec<C64>> {
        let dim = frame.vectors.nrows();
        let mut out = vec![C64::default(); dim];
        let terms: Vec<(Label, C64)> = match self {
            InitialState::Dressed(l) => vec![(*l, C64::new(1.0, 0.0))],
            InitialState::Superposition(t) => t.clone(),
        };
        let norm: f64 = terms.iter().map(|(_, c)| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(invalid("initial_state", "zero vector"));
        }
        for (label, c) in terms {
            let idx = frame.index_of(label)?;
            if frame.ambiguous[idx] {
                return Err(Error::AmbiguousLabels { labels: vec![label] });
            }
            for i in 0..dim {
                out[i] += frame.vectors[(i, idx)] * (c / norm);
            }
        }
        Ok(out)
    }
}

/// Population record of one propagation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub labels: Vec<Label>,
    /// `populations[k][j]`: population of `labels[j]` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    /// Final state in the bare basis.
    #[serde(skip)]
    pub final_state: Vec<C64>,
    pub norm_drift: f64,
}

/// Everything needed to run schedules against one composite system.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub system: &'a CompositeSystem,
    pub dt: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(system: &'a CompositeSystem, dt: f64) -> Result<Self> {
        Stepper::new(system, dt)?;
        Ok(Self { system, dt })
    }

    pub fn frame(&self, pulse: &ParametricPulse, ramp: Option<&BiasRamp>) -> Result<LabeledSpectrum> {
        self.system.labeled_spectrum(frame_flux(pulse, ramp))
    }

    /// Propagates `psi0` through the schedule, recording the dressed-frame
    /// populations of `record` at each time of `sample_times` (ns, ascending;
    /// the last entry sets the end time).
    pub fn propagate_state(
        &self,
        pulse: &ParametricPulse,
        ramp: Option<&BiasRamp>,
        psi0: &InitialState,
        sample_times: &[f64],
        record: &[Label],
    ) -> Result<EvolutionResult> {
        let frame = self.frame(pulse, ramp)?;
        self.propagate_in_frame(&frame, pulse, ramp, psi0, sample_times, record)
    }

    pub fn propagate_in_frame(
        &self,
        frame: &LabeledSpectrum,
        pulse: &ParametricPulse,
        ramp: Option<&BiasRamp>,
        psi0: &InitialState,
        sample_times: &[f64],
        record: &[Label],
    ) -> Result<EvolutionResult> {
        pulse.validate()?;
        if let Some(r) = ramp {
            r.validate()?;
        }
        if sample_times.is_empty() || sample_times.windows(2).any(|w| w[1] < w[0]) || sample_times[0] < 0.0 {
            return Err(invalid("sample_times", "must be non-empty, non-negative and ascending"));
        }
        let idx: Vec<usize> = record.iter().map(|&l| frame.index_of(l)).collect::<Result<_>>()?;
        let stepper = Stepper::new(self.system, self.dt)?;
        let mut psi = psi0.to_bare(frame)?;
        let flux = |t: f64| flux_sample(pulse, ramp, t);
        let mut scratch = StepScratch::default();
        let mut t = 0.0;
        let mut populations = Vec::with_capacity(sample_times.len());
        let mut drift: f64 = 0.0;
        for &ts in sample_times {
            stepper.evolve(&flux, t, ts, &mut psi, 1, &mut scratch)?;
            t = ts;
            let norm: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            drift = drift.max((norm - 1.0).abs());
            populations.push(idx.iter().map(|&k| dressed_amplitude(frame, k, &psi).norm_sqr()).collect());
        }
        if drift > NORM_LIMIT {
            return Err(Error::Integration { drift, limit: NORM_LIMIT });
        }
        Ok(EvolutionResult {
            times: sample_times.to_vec(),
            labels: record.to_vec(),
            populations,
            final_state: psi,
            norm_drift: drift,
        })
    }

    /// Propagates the four dressed computational states through the full
    /// schedule and projects back onto the dressed frame.
    pub fn propagate_computational_unitary(
        &self,
        pulse: &ParametricPulse,
        ramp: Option<&BiasRamp>,
    ) -> Result<TruncatedPropagator> {
        let frame = self.frame(pulse, ramp)?;
        self.computational_unitary_in_frame(&frame, pulse, ramp)
    }

    pub fn computational_unitary_in_frame(
        &self,
        frame: &LabeledSpectrum,
        pulse: &ParametricPulse,
        ramp: Option<&BiasRamp>,
    ) -> Result<TruncatedPropagator> {
        pulse.validate()?;
        if let Some(r) = ramp {
            r.validate()?;
        }
        let dim = frame.vectors.nrows();
        let comp: Vec<usize> = COMPUTATIONAL.iter().map(|&l| frame.index_of(l)).collect::<Result<_>>()?;
        if let Some(k) = comp.iter().position(|&k| frame.ambiguous[k]) {
            return Err(Error::AmbiguousLabels { labels: vec![COMPUTATIONAL[k]] });
        }
        let width = 4;
        let mut block = vec![C64::default(); dim * width];
        for (j, &k) in comp.iter().enumerate() {
            for i in 0..dim {
                block[i * width + j] = frame.vectors[(i, k)];
            }
        }
        let stepper = Stepper::new(self.system, self.dt)?;
        let flux = |t: f64| flux_sample(pulse, ramp, t);
        let t_end = schedule_length(pulse, ramp);
        let mut scratch = StepScratch::default();
        stepper.evolve(&flux, 0.0, t_end, &mut block, width, &mut scratch)?;

        // dressed-frame amplitudes of every final column
        let mut dressed = DMatrix::<C64>::zeros(dim, width);
        for j in 0..width {
            for d in 0..dim {
                let mut acc = C64::default();
                for i in 0..dim {
                    acc += frame.vectors[(i, d)].conj() * block[i * width + j];
                }
                dressed[(d, j)] = acc;
            }
        }
        let mut drift: f64 = 0.0;
        for j in 0..width {
            let n: f64 = (0..dim).map(|d| dressed[(d, j)].norm_sqr()).sum::<f64>().sqrt();
            drift = drift.max((n - 1.0).abs());
        }
        if drift > NORM_LIMIT {
            return Err(Error::Integration { drift, limit: NORM_LIMIT });
        }
        let mut u = DMatrix::<C64>::zeros(4, 4);
        for (i, &ki) in comp.iter().enumerate() {
            let phase = C64::from_polar(1.0, 2.0 * PI * frame.energies[ki] * t_end);
            for j in 0..width {
                u[(i, j)] = dressed[(ki, j)] * phase;
            }
        }
        let leakage = std::array::from_fn(|j| 1.0 - (0..4).map(|i| u[(i, j)].norm_sqr()).sum::<f64>());
        Ok(TruncatedPropagator {
            u,
            leakage,
            final_populations: dressed.map(|v| v.norm_sqr()),
            labels: frame.labels.clone(),
            norm_drift: drift,
            duration: t_end,
        })
    }
}

fn dressed_amplitude(frame: &LabeledSpectrum, k: usize, psi: &[C64]) -> C64 {
    frame.vectors.column(k).iter().zip(psi).map(|(v, p)| v.conj() * p).sum()
}

/// Computational block of the propagator in the rotating dressed frame.
#[derive(Debug, Clone)]
pub struct TruncatedPropagator {
    /// `u[(i, j)] = e^{+iE_i t}⟨dressed_i|ψ_j(t)⟩` over `|00⟩,|01⟩,|10⟩,|11⟩`.
    pub u: DMatrix<C64>,
    /// `1 − ‖column‖²` per computational input.
    pub leakage: [f64; 4],
    /// Final dressed populations, `dim × 4`.
    pub final_populations: DMatrix<f64>,
    /// Dressed-state labels for the rows of `final_populations`.
    pub labels: Vec<Label>,
    pub norm_drift: f64,
    pub duration: f64,
}

/// Where each scan point lands in the output map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanMap {
    pub freqs: Vec<f64>,
    /// Second axis: time (ns) or drive amplitude (Φ₀).
    pub axis: Vec<f64>,
    pub labels: Vec<Label>,
    /// `values[f][a]` is the summed population of `labels`; `None` for failed points.
    pub values: Vec<Vec<Option<f64>>>,
    pub failures: Vec<(usize, String)>,
}

impl ScanMap {
    /// Frequency whose row has the smallest minimum value.
    pub fn valley_frequency(&self) -> Option<f64> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, row)| row.iter().flatten().copied().reduce(f64::min).map(|m| (k, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| self.freqs[k])
    }

    /// Frequency whose row has the smallest mean value.
    pub fn mean_valley_frequency(&self) -> Option<f64> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(k, row)| {
                let v: Vec<f64> = row.iter().flatten().copied().collect();
                (!v.is_empty()).then(|| (k, v.iter().sum::<f64>() / v.len() as f64))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| self.freqs[k])
    }
}

/// Population map over drive frequency and evolution time.
///
/// With a square template (`ramp_time == 0`) one trajectory per frequency is
/// sampled at every time in `t_grid`; since the drive is switched on at
/// `t = 0` this equals independent propagations per point. With an envelope
/// each point is a separate propagation whose gate time is the point's time.
pub fn chevron_scan(
    sim: &Simulation,
    template: &ParametricPulse,
    freq_grid: &[f64],
    t_grid: &[f64],
    psi0: &InitialState,
    record: &[Label],
) -> Result<ScanMap> {
    if freq_grid.is_empty() || t_grid.is_empty() {
        return Err(invalid("grid", "frequency and time grids must be non-empty"));
    }
    let mut times = t_grid.to_vec();
    times.sort_by(f64::total_cmp);
    let frame = sim.frame(template, None)?;
    let rows: Vec<Result<Vec<Option<f64>>>> = crate::par::map(freq_grid, |&f| {
        if template.ramp_time == 0.0 {
            let pulse = ParametricPulse { drive_freq: f, gate_time: times[times.len() - 1], ..*template };
            let res = sim.propagate_in_frame(&frame, &pulse, None, psi0, &times, record)?;
            Ok(res.populations.iter().map(|p| Some(p.iter().sum())).collect())
        } else {
            Ok(times
                .iter()
                .map(|&t| {
                    let pulse = ParametricPulse { drive_freq: f, gate_time: t, ..*template };
                    sim.propagate_in_frame(&frame, &pulse, None, psi0, &[t], record)
                        .ok()
                        .map(|r| r.populations[0].iter().sum())
                })
                .collect())
        }
    });
    collect_rows(freq_grid, times, record, rows)
}

/// Population map over drive frequency and amplitude at a fixed evolution time.
pub fn amplitude_scan(
    sim: &Simulation,
    template: &ParametricPulse,
    freq_grid: &[f64],
    amp_grid: &[f64],
    fixed_time: f64,
    psi0: &InitialState,
    record: &[Label],
) -> Result<ScanMap> {
    if freq_grid.is_empty() || amp_grid.is_empty() {
        return Err(invalid("grid", "frequency and amplitude grids must be non-empty"));
    }
    let frame = sim.frame(template, None)?;
    let points: Vec<(f64, f64)> = freq_grid.iter().flat_map(|&f| amp_grid.iter().map(move |&a| (f, a))).collect();
    let flat: Vec<std::result::Result<f64, String>> = crate::par::map(&points, |&(f, a)| {
        let pulse = ParametricPulse { drive_freq: f, drive_amp: a, gate_time: fixed_time, ..*template };
        sim.propagate_in_frame(&frame, &pulse, None, psi0, &[fixed_time], record)
            .map(|r| r.populations[0].iter().sum())
            .map_err(|e| e.to_string())
    });
    let mut values = vec![vec![None; amp_grid.len()]; freq_grid.len()];
    let mut failures = Vec::new();
    for (k, v) in flat.into_iter().enumerate() {
        let (fi, ai) = (k / amp_grid.len(), k % amp_grid.len());
        match v {
            Ok(p) => values[fi][ai] = Some(p),
            Err(e) => failures.push((k, e)),
        }
    }
    Ok(ScanMap { freqs: freq_grid.to_vec(), axis: amp_grid.to_vec(), labels: record.to_vec(), values, failures })
}

fn collect_rows(
    freqs: &[f64],
    axis: Vec<f64>,
    record: &[Label],
    rows: Vec<Result<Vec<Option<f64>>>>,
) -> Result<ScanMap> {
    let mut values = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for (k, r) in rows.into_iter().enumerate() {
        match r {
            Ok(row) => values.push(row),
            Err(e) => {
                failures.push((k, e.to_string()));
                values.push(vec![None; axis.len()]);
            }
        }
    }
    Ok(ScanMap { freqs: freqs.to_vec(), axis, labels: record.to_vec(), values, failures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::CompositeParams;

    fn small() -> CompositeSystem {
        CompositeSystem::new(CompositeParams { n_coupler_levels: 4, ..CompositeParams::strong() }).unwrap()
    }

    #[test]
    fn undriven_state_is_stationary() {
        let sys = small();
        let sim = Simulation::new(&sys, 0.005).unwrap();
        let pulse = ParametricPulse::square(0.35, 0.0, 10.9, 5.0);
        let res = sim
            .propagate_state(&pulse, None, &InitialState::Dressed([0, 0, 0]), &[1.0, 5.0], &[[0, 0, 0]])
            .unwrap();
        for p in &res.populations {
            assert!((p[0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn undriven_unitary_is_identity_in_rotating_frame() {
        let sys = small();
        let sim = Simulation::new(&sys, 0.005).unwrap();
        let pulse = ParametricPulse::square(0.35, 0.0, 10.9, 3.0);
        let tp = sim.propagate_computational_unitary(&pulse, None).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((tp.u[(i, j)] - C64::new(target, 0.0)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn backward_evolution_restores_state() {
        let sys = small();
        let stepper = Stepper::new(&sys, 0.002).unwrap();
        let pulse = ParametricPulse { ramp_time: 0.5, ..ParametricPulse::square(0.35, 0.045, 10.9, 2.0) };
        let flux = |t: f64| flux_sample(&pulse, None, t);
        let dim = sys.dim();
        let mut psi = vec![C64::default(); dim];
        psi[31] = C64::new(1.0, 0.0);
        let start = psi.clone();
        let mut scratch = StepScratch::default();
        stepper.evolve(&flux, 0.0, 2.0, &mut psi, 1, &mut scratch).unwrap();
        stepper.evolve(&flux, 2.0, 0.0, &mut psi, 1, &mut scratch).unwrap();
        let err: f64 = psi.iter().zip(&start).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn empty_grid_rejected() {
        let sys = small();
        let sim = Simulation::new(&sys, 0.005).unwrap();
        let pulse = ParametricPulse::square(0.35, 0.0, 10.9, 3.0);
        let r = chevron_scan(&sim, &pulse, &[], &[1.0], &InitialState::Dressed([1, 0, 1]), &[[1, 0, 1]]);
        assert!(r.is_err());
    }
}
