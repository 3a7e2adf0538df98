//! The seven commands. Grid points run in parallel on the current rayon pool;
//! each finished point is journaled under its parameter hash so `--resume`
//! skips it.

use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use fluxcz::composite::{state_dependent_shifts, zz_coupling, CompositeParams, CompositeSystem, Label, LabeledSpectrum};
use fluxcz::dynamics::{InitialState, ScanMap, Simulation};
use fluxcz::error::Error;
use fluxcz::floquet::extract_transition;
use fluxcz::gate::{
    calibrate_drive, incoherent_error, leakage_channels, optimize_cz, optimize_with_calibration, GateConfig, Optimum,
};
use fluxcz::pulse::ParametricPulse;
use fluxcz::spectra::{diagonalize_fluxonium, diagonalize_transmon_charge, transmon_oscillator_params};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Command, Initial, RunConfig};
use crate::output::{hash_of, now_unix, num, opt, Failure, Journal, RunDir, Sidecar, SCHEMA_VERSION};

/// Charge cutoff for the coupler spectrum; ample for E_J/E_C up to ~200.
const CHARGE_CUTOFF: usize = 30;
/// Channels listed per gate report.
const TOP_CHANNELS: usize = 10;

pub struct Outcome {
    pub points: usize,
    pub failures: Vec<Failure>,
}

pub fn run(cmd: Command, cfg: &RunConfig, dir: &RunDir, resume: bool) -> Result<Outcome> {
    let ctx = Ctx { cmd, cfg, dir, resume, params: cfg.composite(), dt: cfg.dt_ns() };
    match cmd {
        Command::Spectrum => spectrum(&ctx),
        Command::ShiftScan => shift_scan(&ctx),
        Command::Chevron => chevron(&ctx),
        Command::Amplitude => amplitude(&ctx),
        Command::Floquet => floquet(&ctx),
        Command::GateOpt => gate_opt(&ctx),
        Command::GateSweep => gate_sweep(&ctx),
    }
}

struct Ctx<'a> {
    cmd: Command,
    cfg: &'a RunConfig,
    dir: &'a RunDir,
    resume: bool,
    params: CompositeParams,
    dt: f64,
}

impl Ctx<'_> {
    fn run_id(&self) -> String {
        hash_of(&(self.cmd.name(), self.cfg, self.dt))
    }

    fn system(&self) -> Result<CompositeSystem> {
        CompositeSystem::new(self.params).context("building the composite system")
    }

    /// Runs `compute` on every point not already in the journal. Results keep
    /// the order of `points`.
    fn points<P, R, F>(&self, section: &impl Serialize, points: &[P], compute: F) -> Result<(Vec<Result<R, String>>, usize)>
    where
        P: Serialize + Sync,
        R: Serialize + DeserializeOwned + Clone + Send + Sync,
        F: Fn(&P) -> Result<R, String> + Sync + Send,
    {
        let journal: Journal<R> = Journal::open(&self.dir.path, self.resume)?;
        let scope = hash_of(&(self.cmd.name(), &self.params, self.dt, section));
        let reused = AtomicUsize::new(0);
        let out: Vec<Result<R, String>> = points
            .par_iter()
            .map(|p| {
                let key = hash_of(&(&scope, p));
                if let Some(r) = journal.get(&key) {
                    reused.fetch_add(1, Ordering::Relaxed);
                    return Ok(r.clone());
                }
                let r = compute(p)?;
                journal.append(&key, &r).map_err(|e| e.to_string())?;
                Ok(r)
            })
            .collect();
        Ok((out, reused.into_inner()))
    }

    fn finish(&self, points: usize, resumed: usize, failures: Vec<Failure>, files: Vec<String>, summary: serde_json::Value) -> Result<Outcome> {
        self.dir.sidecar(&Sidecar {
            schema_version: SCHEMA_VERSION,
            command: self.cmd.name(),
            run_id: self.run_id(),
            created_unix: now_unix(),
            dt_ns: self.dt,
            config: self.cfg,
            points,
            resumed,
            failures: failures.clone(),
            files,
            summary,
        })?;
        Ok(Outcome { points, failures })
    }
}

fn label_name(l: &Label) -> String {
    format!("p{}{}{}", l[0], l[1], l[2])
}

fn initial_state(i: Initial) -> InitialState {
    match i {
        Initial::Eleven => InitialState::Dressed([1, 0, 1]),
        Initial::Plus => InitialState::computational_plus(),
    }
}

fn failures_of<R>(results: &[Result<R, String>], point: impl Fn(usize) -> String) -> Vec<Failure> {
    results
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.as_ref().err().map(|e| Failure { point: point(k), error: e.clone() }))
        .collect()
}

fn spectrum(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.cfg.spectrum.as_ref().context("spectrum: section missing")?;
    let p = &ctx.params;
    let q = [
        ("q0", diagonalize_fluxonium(&p.q0, p.fluxonium_basis, s.levels)?),
        ("q1", diagonalize_fluxonium(&p.q1, p.fluxonium_basis, s.levels)?),
    ];
    let mut files = Vec::new();
    let rows = q.iter().flat_map(|(name, sd)| {
        sd.energies.iter().enumerate().map(move |(k, e)| vec![name.to_string(), k.to_string(), num(*e)])
    });
    files.push(ctx.dir.csv("fluxonium_levels.csv", &["circuit", "level", "energy_ghz"], rows)?);
    let rows = q.iter().flat_map(|(name, sd)| {
        (0..sd.n_levels).flat_map(move |i| {
            (i + 1..sd.n_levels).map(move |j| vec![name.to_string(), i.to_string(), j.to_string(), num(sd.n_abs(i, j))])
        })
    });
    files.push(ctx.dir.csv("fluxonium_charge_elements.csv", &["circuit", "i", "j", "abs_n"], rows)?);

    let mut coupler = Vec::new();
    for &f in &s.coupler_fluxes {
        let sd = diagonalize_transmon_charge(&p.coupler.at_flux(f), CHARGE_CUTOFF, 3)?;
        let osc = transmon_oscillator_params(&p.coupler, f)?;
        coupler.push((f, sd.transition(0, 1), sd.transition(1, 2), sd.n_abs(0, 1), sd.n_abs(1, 2), osc));
    }
    let rows = coupler.iter().map(|(f, w01, w12, n01, n12, o)| {
        vec![num(*f), num(*w01), num(*w12), num(*n01), num(*n12), num(o.omega_c), num(o.n_zpf)]
    });
    files.push(ctx.dir.csv(
        "coupler.csv",
        &["flux", "omega_01_ghz", "omega_12_ghz", "abs_n_01", "abs_n_12", "oscillator_omega_ghz", "oscillator_n_zpf"],
        rows,
    )?);

    let table = |sd: &fluxcz::spectra::SpectralData| [sd.transition(0, 1), sd.transition(1, 2), sd.transition(0, 3), sd.transition(1, 4)];
    let mut comparison = Vec::new();
    if let Some(r) = &s.reference {
        for ((name, sd), reference) in q.iter().zip([r.q0, r.q1]) {
            if let Some(want) = reference {
                for ((tag, got), want) in ["01", "12", "03", "14"].iter().zip(table(sd)).zip(want) {
                    comparison.push((format!("{name} omega_{tag}"), got, want));
                }
            }
        }
        for [f, w01, w12] in &r.coupler {
            let sd = diagonalize_transmon_charge(&p.coupler.at_flux(*f), CHARGE_CUTOFF, 3)?;
            comparison.push((format!("coupler omega_01 @ {f}"), sd.transition(0, 1), *w01));
            comparison.push((format!("coupler omega_12 @ {f}"), sd.transition(1, 2), *w12));
        }
    }
    if !comparison.is_empty() {
        println!("{:<26} {:>10} {:>10} {:>9}", "quantity", "computed", "reference", "diff_MHz");
        for (name, got, want) in &comparison {
            println!("{name:<26} {got:>10.4} {want:>10.4} {:>9.2}", (got - want) * 1e3);
        }
    }
    let summary = json!({
        "q0": table(&q[0].1),
        "q1": table(&q[1].1),
        "max_reference_deviation_mhz": comparison.iter().map(|(_, g, w)| ((g - w) * 1e3).abs()).fold(0.0, f64::max),
    });
    ctx.finish(coupler.len() + 2, 0, Vec::new(), files, summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShiftPoint {
    flux: f64,
    shifts: Option<(f64, f64)>,
    zz: Option<f64>,
    ambiguous: bool,
}

fn shift_scan(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.cfg.shift_scan.as_ref().context("shift_scan: section missing")?;
    let system = ctx.system()?;
    let fluxes = s.flux.values();
    let (res, resumed) = ctx.points(s, &fluxes, |&flux| {
        let spec = system.labeled_spectrum(flux).map_err(|e| e.to_string())?;
        let amb = |e: &Error| matches!(e, Error::AmbiguousLabels { .. });
        let shifts = state_dependent_shifts(&spec);
        let zz = zz_coupling(&spec);
        let ambiguous = shifts.as_ref().err().is_some_and(amb) || zz.as_ref().err().is_some_and(amb);
        let shifts = match shifts {
            Ok(v) => Some(v),
            Err(e) if amb(&e) => None,
            Err(e) => return Err(e.to_string()),
        };
        let zz = match zz {
            Ok(v) => Some(v),
            Err(e) if amb(&e) => None,
            Err(e) => return Err(e.to_string()),
        };
        Ok(ShiftPoint { flux, shifts, zz, ambiguous })
    })?;
    let failures = failures_of(&res, |k| format!("flux={}", fluxes[k]));
    let ok: Vec<&ShiftPoint> = res.iter().flatten().collect();
    let rows = ok.iter().map(|p| {
        vec![
            num(p.flux),
            opt(p.shifts.map(|s| s.0)),
            opt(p.shifts.map(|s| s.1)),
            opt(p.zz),
            (p.ambiguous as u8).to_string(),
        ]
    });
    let files = vec![ctx.dir.csv("shift_scan.csv", &["flux", "shift_p0_ghz", "shift_p1_ghz", "zz_ghz", "ambiguous"], rows)?];
    let idle = ok
        .iter()
        .filter_map(|p| p.shifts.map(|s| (p.flux, s.0.max(s.1))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|m| m.0);
    ctx.finish(fluxes.len(), resumed, failures, files, json!({ "grid_idle_point": idle }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Row {
    freq: f64,
    /// `values[k][j]`: population of label `j` at axis point `k`; `None` where the point failed.
    values: Vec<Option<Vec<f64>>>,
}

fn population_rows(
    ctx: &Ctx,
    rows: &[Row],
    axis: &[f64],
    axis_name: &str,
    record: &[Label],
    file: &str,
) -> Result<(String, ScanMap)> {
    let mut header = vec!["freq_ghz".to_string(), axis_name.to_string()];
    header.extend(record.iter().map(label_name));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let lines = rows.iter().flat_map(|r| {
        axis.iter().zip(&r.values).map(move |(x, v)| {
            let mut line = vec![num(r.freq), num(*x)];
            match v {
                Some(p) => line.extend(p.iter().map(|v| num(*v))),
                None => line.extend(record.iter().map(|_| String::new())),
            }
            line
        })
    });
    let name = ctx.dir.csv(file, &header, lines)?;
    let map = ScanMap {
        freqs: rows.iter().map(|r| r.freq).collect(),
        axis: axis.to_vec(),
        labels: record.to_vec(),
        values: rows.iter().map(|r| r.values.iter().map(|v| v.as_ref().map(|p| p.iter().sum())).collect()).collect(),
        failures: Vec::new(),
    };
    Ok((name, map))
}

fn scan_summary(map: &ScanMap) -> serde_json::Value {
    json!({
        "valley_frequency_ghz": map.valley_frequency(),
        "mean_valley_frequency_ghz": map.mean_valley_frequency(),
    })
}

fn chevron(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.cfg.chevron.as_ref().context("chevron: section missing")?;
    let system = ctx.system()?;
    let sim = Simulation::new(&system, ctx.dt)?;
    let freqs = s.freq.values();
    let mut times = s.time.values();
    times.sort_by(f64::total_cmp);
    let template = ParametricPulse {
        flux_static: s.flux_s,
        drive_amp: s.drive_amp,
        drive_freq: freqs[0],
        drive_phase: 0.0,
        ramp_time: s.ramp,
        gate_time: times[times.len() - 1],
    };
    let frame: LabeledSpectrum = sim.frame(&template, None)?;
    let psi0 = initial_state(s.initial);
    let (res, resumed) = ctx.points(s, &freqs, |&f| {
        let values = if s.ramp == 0.0 {
            let pulse = ParametricPulse { drive_freq: f, ..template };
            let r = sim.propagate_in_frame(&frame, &pulse, None, &psi0, &times, &s.record).map_err(|e| e.to_string())?;
            r.populations.into_iter().map(Some).collect()
        } else {
            times
                .iter()
                .map(|&t| {
                    let pulse = ParametricPulse { drive_freq: f, gate_time: t, ..template };
                    sim.propagate_in_frame(&frame, &pulse, None, &psi0, &[t], &s.record).ok().map(|r| r.populations[0].clone())
                })
                .collect()
        };
        Ok(Row { freq: f, values })
    })?;
    let failures = failures_of(&res, |k| format!("freq={}", freqs[k]));
    let ok: Vec<Row> = res.into_iter().flatten().collect();
    let (file, map) = population_rows(ctx, &ok, &times, "time_ns", &s.record, "chevron.csv")?;
    ctx.finish(freqs.len(), resumed, failures, vec![file], scan_summary(&map))
}

fn amplitude(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.cfg.amplitude.as_ref().context("amplitude: section missing")?;
    let system = ctx.system()?;
    let sim = Simulation::new(&system, ctx.dt)?;
    let freqs = s.freq.values();
    let amps = s.amp.values();
    let template = ParametricPulse {
        flux_static: s.flux_s,
        drive_amp: 0.0,
        drive_freq: freqs[0],
        drive_phase: 0.0,
        ramp_time: s.ramp,
        gate_time: s.time,
    };
    let frame = sim.frame(&template, None)?;
    let psi0 = initial_state(s.initial);
    let (res, resumed) = ctx.points(s, &freqs, |&f| {
        let values = amps
            .iter()
            .map(|&a| {
                let pulse = ParametricPulse { drive_freq: f, drive_amp: a, ..template };
                sim.propagate_in_frame(&frame, &pulse, None, &psi0, &[s.time], &s.record).ok().map(|r| r.populations[0].clone())
            })
            .collect();
        Ok(Row { freq: f, values })
    })?;
    let failures = failures_of(&res, |k| format!("freq={}", freqs[k]));
    let ok: Vec<Row> = res.into_iter().flatten().collect();
    let (file, map) = population_rows(ctx, &ok, &amps, "drive_amp", &s.record, "amplitude.csv")?;
    // the valley at each amplitude traces the drive-shifted resonance
    let valleys: Vec<Option<f64>> = (0..amps.len())
        .map(|k| {
            map.values
                .iter()
                .zip(&map.freqs)
                .filter_map(|(row, f)| row[k].map(|v| (*f, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|m| m.0)
        })
        .collect();
    let mut summary = scan_summary(&map);
    summary["valley_by_amplitude_ghz"] = json!(valleys);
    ctx.finish(freqs.len(), resumed, failures, vec![file], summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FloquetPoint {
    amp: f64,
    omega_res: f64,
    strength: f64,
    gaps: Vec<(f64, f64)>,
}

fn floquet(ctx: &Ctx) -> Result<Outcome> {
    let s = ctx.cfg.floquet.as_ref().context("floquet: section missing")?;
    let system = ctx.system()?;
    let amps = s.amp.values();
    let pair = (s.pair[0], s.pair[1]);
    let window = (s.window[0], s.window[1]);
    let (res, resumed) = ctx.points(s, &amps, |&amp| {
        let fit = extract_transition(&system, s.flux_s, amp, pair, window, s.resolution, ctx.dt).map_err(|e| e.to_string())?;
        Ok(FloquetPoint { amp, omega_res: fit.omega_res, strength: fit.strength, gaps: fit.gaps })
    })?;
    let failures = failures_of(&res, |k| format!("amp={}", amps[k]));
    let ok: Vec<&FloquetPoint> = res.iter().flatten().collect();
    let files = vec![
        ctx.dir.csv(
            "floquet.csv",
            &["drive_amp", "omega_res_ghz", "strength_ghz"],
            ok.iter().map(|p| vec![num(p.amp), num(p.omega_res), num(p.strength)]),
        )?,
        ctx.dir.csv(
            "floquet_gaps.csv",
            &["drive_amp", "freq_ghz", "gap_ghz"],
            ok.iter().flat_map(|p| p.gaps.iter().map(move |(f, g)| vec![num(p.amp), num(*f), num(*g)])),
        )?,
    ];
    let last = ok.last().map(|p| json!({ "drive_amp": p.amp, "strength_ghz": p.strength, "omega_res_ghz": p.omega_res }));
    ctx.finish(amps.len(), resumed, failures, files, json!({ "largest_amplitude": last }))
}

/// Optimized point, or the optimizer trace when it stagnated. Both are
/// deterministic, so both are journaled.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GatePoint {
    gate_time: f64,
    drive_ramp: f64,
    optimum: Option<Optimum>,
    failure: Option<String>,
    stalled_trace: Vec<[f64; 4]>,
}

impl GatePoint {
    fn from(gate_time: f64, drive_ramp: f64, r: fluxcz::error::Result<Optimum>) -> Result<Self, String> {
        match r {
            Ok(o) => Ok(Self { gate_time, drive_ramp, optimum: Some(o), failure: None, stalled_trace: Vec::new() }),
            Err(e @ Error::Stagnation { .. }) => {
                let Error::Stagnation { trace, .. } = &e else { unreachable!() };
                Ok(Self { gate_time, drive_ramp, optimum: None, failure: Some(e.to_string()), stalled_trace: trace.clone() })
            }
            Err(e) => Err(e.to_string()),
        }
    }
}

fn gate_row(gate_time: f64, drive_ramp: f64, o: &Optimum, incoherent: Option<f64>) -> Vec<String> {
    vec![
        num(gate_time),
        num(drive_ramp),
        num(o.metrics.error),
        num(o.metrics.leakage),
        num(o.metrics.conditional_phase),
        num(o.drive_freq),
        num(o.drive_amp),
        num(o.flux_interaction),
        opt(incoherent),
    ]
}

const GATE_HEADER: [&str; 9] = [
    "gate_time_ns",
    "drive_ramp_ns",
    "error",
    "leakage",
    "conditional_phase",
    "drive_freq_ghz",
    "drive_amp",
    "flux_interaction",
    "incoherent_error",
];

const TRACE_HEADER: [&str; 5] = ["evaluation", "drive_freq_ghz", "drive_amp", "flux_interaction", "objective"];

fn trace_rows(trace: &[[f64; 4]]) -> impl Iterator<Item = Vec<String>> + '_ {
    trace.iter().enumerate().map(|(k, t)| vec![k.to_string(), num(t[0]), num(t[1]), num(t[2]), num(t[3])])
}

/// Turns stagnated points into failures alongside the hard errors.
fn gate_failures(res: &[Result<GatePoint, String>]) -> Vec<Failure> {
    res.iter()
        .filter_map(|r| match r {
            Ok(p) => p.failure.as_ref().map(|e| Failure { point: format!("gate_time={} ramp={}", p.gate_time, p.drive_ramp), error: e.clone() }),
            Err(e) => Some(Failure { point: "gate".into(), error: e.clone() }),
        })
        .collect()
}

fn gate_opt(ctx: &Ctx) -> Result<Outcome> {
    let gate = ctx.cfg.gate_config()?;
    let incoherent = ctx.cfg.coherence()?.map(|c| incoherent_error(gate.gate_time, c));
    let system = ctx.system()?;
    let (res, resumed) = ctx.points(&gate, &[gate.gate_time], |&t| {
        GatePoint::from(t, gate.drive_ramp, optimize_cz(&system, &gate, t))
    })?;
    let failures = gate_failures(&res);
    let mut files = Vec::new();
    let mut summary = json!({ "converged": false });
    if let Some(Ok(p)) = res.first() {
        match &p.optimum {
            Some(o) => {
                let channels = leakage_channels(&o.metrics, TOP_CHANNELS);
                files.push(ctx.dir.csv("gate_opt.csv", &GATE_HEADER, [gate_row(p.gate_time, p.drive_ramp, o, incoherent)])?);
                files.push(ctx.dir.csv("gate_opt_trace.csv", &TRACE_HEADER, trace_rows(&o.trace))?);
                files.push(ctx.dir.csv(
                    "gate_opt_channels.csv",
                    &["from", "to", "population"],
                    channels.iter().map(|c| vec![label_name(&c.from), label_name(&c.to), num(c.population)]),
                )?);
                let report = json!({
                    "inputs": gate,
                    "drive_freq_ghz": o.drive_freq,
                    "drive_amp": o.drive_amp,
                    "flux_interaction": o.flux_interaction,
                    "objective": o.objective,
                    "metrics": {
                        "fidelity": o.metrics.fidelity,
                        "error": o.metrics.error,
                        "leakage": o.metrics.leakage,
                        "conditional_phase": o.metrics.conditional_phase,
                        "single_qubit_phases": o.metrics.single_qubit_phases,
                        "phase_unreliable": o.metrics.phase_unreliable,
                    },
                    "incoherent_error": incoherent,
                    "seed": o.seed,
                    "seed_objective": o.seed_objective,
                    "trace_length": o.trace.len(),
                    "channels": channels,
                });
                files.push(ctx.dir.json("gate_opt.json", &report)?);
                summary = json!({ "converged": true, "error": o.metrics.error, "leakage": o.metrics.leakage });
            }
            None => files.push(ctx.dir.csv("gate_opt_trace.csv", &TRACE_HEADER, trace_rows(&p.stalled_trace))?),
        }
    }
    ctx.finish(1, resumed, failures, files, summary)
}

fn gate_sweep(ctx: &Ctx) -> Result<Outcome> {
    let gate = ctx.cfg.gate_config()?;
    let s = ctx.cfg.gate_sweep.as_ref().context("gate_sweep: section missing")?;
    let coherence = ctx.cfg.coherence()?;
    let system = ctx.system()?;
    let points: Vec<(f64, f64)> =
        s.drive_ramps.iter().flat_map(|&r| s.gate_times.values().into_iter().map(move |t| (t, r))).collect();
    // one calibration serves every point; computed only when a point needs it
    let cal = std::sync::OnceLock::new();
    let (res, resumed) = ctx.points(&(gate, s), &points, |&(t, r)| {
        let cal = cal.get_or_init(|| calibrate_drive(&system, &gate, gate.interaction_flux()).map_err(|e| e.to_string()));
        let cal = cal.as_ref().map_err(|e| e.clone())?;
        let cfg = GateConfig { gate_time: t, drive_ramp: r, ..gate };
        GatePoint::from(t, r, optimize_with_calibration(&system, &cfg, cal))
    })?;
    let failures = gate_failures(&res);
    let rows = res.iter().flatten().filter_map(|p| {
        p.optimum.as_ref().map(|o| gate_row(p.gate_time, p.drive_ramp, o, coherence.map(|c| incoherent_error(p.gate_time, c))))
    });
    let files = vec![ctx.dir.csv("gate_sweep.csv", &GATE_HEADER, rows)?];
    let best = res
        .iter()
        .flatten()
        .filter_map(|p| p.optimum.as_ref().map(|o| (p.gate_time, p.drive_ramp, o.metrics.error)))
        .min_by(|a, b| a.2.total_cmp(&b.2));
    let summary = json!({ "best": best.map(|b| json!({ "gate_time_ns": b.0, "drive_ramp_ns": b.1, "error": b.2 })) });
    ctx.finish(points.len(), resumed, failures, files, summary)
}
