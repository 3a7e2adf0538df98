use std::f64::consts::PI;

use fluxcz::composite::{CompositeParams, CompositeSystem, Label, LabeledSpectrum};
use fluxcz::dynamics::{InitialState, Simulation, COMPUTATIONAL, DEFAULT_DT};
use fluxcz::effective::{
    classify_transition, parametric_strength, static_plasmon_coupling, EffectiveCouplings, PlasmonModeSelection,
};
use fluxcz::floquet::{floquet_spectrum, fold, FloquetDrive};
use fluxcz::gate::gate_metrics;
use fluxcz::linalg::C64;
use fluxcz::optim::{minimize, SimplexOptions};
use fluxcz::pulse::ParametricPulse;
use fluxcz::spectra::{
    diagonalize_fluxonium, diagonalize_transmon_charge, transmon_oscillator_params, FluxoniumParams, TransmonParams,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn energy_map(s: &LabeledSpectrum) -> std::collections::HashMap<Label, f64> {
    s.labels.iter().copied().zip(s.energies.iter().copied()).collect()
}

fn with_scaled_couplings(p: CompositeParams, s: f64) -> CompositeParams {
    CompositeParams { j_c0: p.j_c0 * s, j_c1: p.j_c1 * s, j_01: p.j_01 * s, ..p }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fluxonium_spectrum_even_in_external_phase(e_c in 0.8..1.6f64, e_l in 0.4..1.0f64, e_j in 4.0..7.0f64) {
        let a = diagonalize_fluxonium(&FluxoniumParams::new(e_c, e_l, e_j, PI), 120, 5).unwrap();
        let b = diagonalize_fluxonium(&FluxoniumParams::new(e_c, e_l, e_j, -PI), 120, 5).unwrap();
        for (x, y) in a.energies.iter().zip(&b.energies) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn oscillator_tracks_charge_basis(e_c in 0.25..0.4f64, flux in 0.0..0.4f64, ratio in 100.0..250.0f64) {
        let e_j_max = ratio * e_c / (PI * flux).cos();
        let t = TransmonParams::new(e_c, e_j_max, flux);
        let exact = diagonalize_transmon_charge(&t, 40, 2).unwrap().transition(0, 1);
        let osc = transmon_oscillator_params(&t, flux).unwrap();
        prop_assert!((exact - osc.omega_c).abs() < e_c / 10.0, "{exact} vs {}", osc.omega_c);
    }

    #[test]
    fn parametric_strength_odd_in_bias(flux in 0.05..0.4f64, delta in 0.0..0.08f64) {
        let p = CompositeParams::strong();
        let sel = PlasmonModeSelection::plasmon_12();
        let a = parametric_strength(&p, sel, flux, delta, None).unwrap();
        let b = parametric_strength(&p, sel, -flux, delta, None).unwrap();
        prop_assert!((a.g_eff + b.g_eff).abs() <= 1e-9 * a.g_eff.abs().max(1e-12));
        prop_assert!((a.resonance_sum - b.resonance_sum).abs() < 1e-12);
    }

    #[test]
    fn static_coupling_reduces_to_direct_term(g01 in -0.2..0.2f64, w0 in 4.0..6.0f64, w1 in 4.0..6.0f64, wc in 6.5..9.0f64) {
        let ec = EffectiveCouplings { g_pc0: 0.0, g_pc1: 0.0, g_p01: g01, omega_p: [w0, w1], forbidden: Vec::new() };
        prop_assert_eq!(static_plasmon_coupling(&ec, [w0, w1], wc).unwrap().g_p, g01);
    }

    #[test]
    fn taxonomy_is_total(a in proptest::array::uniform3(0usize..5), b in proptest::array::uniform3(0usize..5)) {
        let c = classify_transition(a, b);
        prop_assert_eq!(c, classify_transition(a, b));
    }

    #[test]
    fn fidelity_and_conditional_phase_gauge_invariant(
        phases in proptest::array::uniform4(-PI..PI),
        global in -PI..PI,
        z0 in -PI..PI,
        z1 in -PI..PI,
        off in -0.05..0.05f64,
    ) {
        let mut u = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |k, _| C64::from_polar(0.98, phases[k])));
        u[(1, 2)] = C64::new(off, 0.3 * off);
        u[(3, 0)] = C64::new(-0.5 * off, off);
        let z = [0.0, z1, z0, z0 + z1];
        let local = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(4, |k, _| C64::from_polar(1.0, z[k] + global)));
        let a = gate_metrics(&u).unwrap();
        let b = gate_metrics(&(local * &u)).unwrap();
        prop_assert!((a.fidelity - b.fidelity).abs() < 1e-12);
        let dcp = fold(a.conditional_phase - b.conditional_phase, 2.0 * PI);
        prop_assert!(dcp.abs() < 1e-12);
    }

    #[test]
    fn leakage_identity(entries in proptest::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 16)) {
        let mut u = DMatrix::from_fn(4, 4, |i, j| { let (a, b) = entries[4 * i + j]; C64::new(a, b) });
        for k in 0..4 {
            u[(k, k)] += C64::new(0.5, 0.0);
        }
        let m = gate_metrics(&u).unwrap();
        let tr: f64 = u.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((m.leakage - (1.0 - tr / 4.0).clamp(0.0, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn optimizer_is_deterministic(sx in -0.8..0.8f64, sy in -0.8..0.8f64) {
        let f = |x: &[f64]| (x[0] - 0.1).powi(2) + (3.0 * x[1]).sin() + x[1] * x[1];
        let opts = SimplexOptions { max_evaluations: 120, restarts: 2, ..Default::default() };
        let a = minimize(f, &[sx, sy], &[(-1.0, 1.0), (-1.0, 1.0)], &opts).unwrap();
        let b = minimize(f, &[sx, sy], &[(-1.0, 1.0), (-1.0, 1.0)], &opts).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn exchange_symmetry(jc0 in 0.3..0.6f64, jc1 in 0.3..0.6f64, flux in 0.0..0.4f64) {
        let base = CompositeParams::strong();
        let p = CompositeParams { j_c0: jc0, j_c1: jc1, ..base };
        let swapped = CompositeParams { q0: p.q1, q1: p.q0, j_c0: jc1, j_c1: jc0, ..p };
        let mut a = CompositeSystem::new(p).unwrap().labeled_spectrum(flux).unwrap().energies;
        let mut b = CompositeSystem::new(swapped).unwrap().labeled_spectrum(flux).unwrap().energies;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn labels_stable_under_coupling_scale(scale in 0.9..1.1f64, flux in 0.0..0.36f64) {
        let reference = CompositeSystem::new(CompositeParams::strong()).unwrap().labeled_spectrum(flux).unwrap();
        let scaled = CompositeSystem::new(with_scaled_couplings(CompositeParams::strong(), scale))
            .unwrap()
            .labeled_spectrum(flux)
            .unwrap();
        let mut sorted = scaled.labels.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), scaled.labels.len());
        // the low-lying manifold keeps the same labels; near-degenerate pairs may reorder
        let low = |s: &LabeledSpectrum| -> std::collections::BTreeSet<Label> {
            let g = s.energy([0, 0, 0]).unwrap();
            s.labels.iter().zip(&s.energies).filter(|(_, &e)| e - g < 10.0).map(|(l, _)| *l).collect()
        };
        prop_assert_eq!(low(&reference), low(&scaled));
        for l in COMPUTATIONAL.iter().chain(&[[2, 0, 2]]) {
            prop_assert!(!scaled.ambiguous[scaled.index_of(*l).unwrap()]);
        }
    }

    #[test]
    fn coupler_truncation_converged(flux in 0.0..0.36f64) {
        let six = CompositeSystem::new(CompositeParams::strong()).unwrap().labeled_spectrum(flux).unwrap();
        let eight = CompositeSystem::new(CompositeParams { n_coupler_levels: 8, ..CompositeParams::strong() })
            .unwrap()
            .labeled_spectrum(flux)
            .unwrap();
        let (a, b) = (energy_map(&six), energy_map(&eight));
        let (g6, g8) = (a[&[0, 0, 0]], b[&[0, 0, 0]]);
        for (l, e) in &a {
            if e - g6 < 15.0 {
                prop_assert!(((e - g6) - (b[l] - g8)).abs() < 1e-4, "{l:?}: {} vs {}", e - g6, b[l] - g8);
            }
        }
    }

    #[test]
    fn quasienergies_independent_of_time_origin(phase in 0.0..(2.0 * PI), amp in 0.01..0.05f64) {
        let system = CompositeSystem::new(CompositeParams::strong()).unwrap();
        let frame = system.labeled_spectrum(0.35).unwrap();
        let f = 10.77;
        let a = floquet_spectrum(&system, &frame, FloquetDrive::new(0.35, amp, f), DEFAULT_DT).unwrap();
        let b = floquet_spectrum(&system, &frame, FloquetDrive { phase, ..FloquetDrive::new(0.35, amp, f) }, DEFAULT_DT).unwrap();
        let mut qa = a.quasienergies.clone();
        let mut qb = b.quasienergies.clone();
        qa.sort_by(f64::total_cmp);
        qb.sort_by(f64::total_cmp);
        for x in &qa {
            let nearest = qb.iter().map(|y| fold(x - y, f).abs()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-7, "{x}: {nearest}");
        }
    }

    #[test]
    fn dressed_populations_sum_to_one(freq in 10.6..11.0f64, amp in 0.0..0.06f64) {
        let system = CompositeSystem::new(CompositeParams::strong()).unwrap();
        let sim = Simulation::new(&system, DEFAULT_DT).unwrap();
        let pulse = ParametricPulse { ramp_time: 1.0, ..ParametricPulse::square(0.35, amp, freq, 6.0) };
        let frame = sim.frame(&pulse, None).unwrap();
        let all = frame.labels.clone();
        let r = sim.propagate_in_frame(&frame, &pulse, None, &InitialState::computational_plus(), &[6.0], &all).unwrap();
        let total: f64 = r.populations[0].iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-8, "{total}");
    }
}

/// A two-level `|11⟩ ↔ |22⟩` exchange of strength `g` (half the splitting)
/// and detuning `Δ`, both in GHz, held for `t` ns. Returns the 4×4
/// computational block.
fn toy_block(detuning: f64, g: f64, t: f64) -> DMatrix<C64> {
    let omega = (detuning * detuning + 4.0 * g * g).sqrt();
    let theta = PI * omega * t;
    let u11 = C64::from_polar(1.0, PI * detuning * t)
        * C64::new(theta.cos(), if omega > 0.0 { -detuning / omega * theta.sin() } else { 0.0 });
    let mut u = DMatrix::identity(4, 4);
    u[(3, 3)] = u11;
    u
}

#[test]
fn toy_cz_optimum_is_one_full_cycle_on_resonance() {
    let t = 60.0;
    let objective = |x: &[f64]| gate_metrics(&toy_block(x[0], x[1], t)).map(|m| m.objective()).unwrap_or(f64::INFINITY);
    let opts = SimplexOptions { restarts: 0, f_tol: 1e-16, x_tol: 1e-10, ..Default::default() };
    let m = minimize(objective, &[0.002, 0.007], &[(-0.01, 0.01), (0.004, 0.012)], &opts).unwrap();
    assert!(m.x[0].abs() < 1e-5, "detuning {}", m.x[0]);
    assert!((2.0 * m.x[1] * t - 1.0).abs() < 1e-3, "2gt = {}", 2.0 * m.x[1] * t);
    assert!(m.value < 1e-8);
}
