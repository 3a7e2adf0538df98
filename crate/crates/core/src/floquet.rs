//! Quasienergies of the steadily driven system from its one-period
//! propagator, and avoided-crossing extraction of parametric transitions.

use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::composite::{match_labels, CompositeSystem, Label, LabeledSpectrum};
use crate::dynamics::{StepScratch, Stepper};
use crate::error::{invalid, Error, Result};
use crate::linalg::{unitarity_defect, C64};
use crate::pulse::FluxSample;

/// Quasienergies closer than this (GHz) are reported as degenerate.
pub const DEGENERATE_QUASIENERGY: f64 = 1e-9;

/// Steady single-tone drive `Φ(t) = Φ_s + δ_Φ cos(2π f t + φ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetDrive {
    pub flux_s: f64,
    pub drive_amp: f64,
    pub drive_freq: f64,
    #[serde(default)]
    pub phase: f64,
}

impl FloquetDrive {
    pub fn new(flux_s: f64, drive_amp: f64, drive_freq: f64) -> Self {
        Self { flux_s, drive_amp, drive_freq, phase: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.drive_amp >= 0.0 && self.drive_amp.is_finite()) {
            return Err(invalid("drive_amp", format!("must be non-negative, got {}", self.drive_amp)));
        }
        if !(self.drive_freq > 0.0 && self.drive_freq.is_finite()) {
            return Err(invalid("drive_freq", format!("must be positive, got {}", self.drive_freq)));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.drive_freq
    }

    pub fn flux(&self, t: f64) -> f64 {
        self.flux_s + self.drive_amp * (2.0 * PI * self.drive_freq * t + self.phase).cos()
    }
}

/// One-period propagator in the bare basis.
#[derive(Debug, Clone)]
pub struct Monodromy {
    pub matrix: DMatrix<C64>,
    pub drive: FloquetDrive,
    pub unitarity_defect: f64,
    sectors: Vec<Vec<usize>>,
}

impl Monodromy {
    pub fn period(&self) -> f64 {
        self.drive.period()
    }
}

/// Propagates the identity over one drive period.
pub fn monodromy(system: &CompositeSystem, drive: FloquetDrive, dt: f64) -> Result<Monodromy> {
    drive.validate()?;
    let dim = system.dim();
    let stepper = Stepper::new(system, dt)?;
    let mut block = vec![C64::default(); dim * dim];
    for i in 0..dim {
        block[i * dim + i] = C64::new(1.0, 0.0);
    }
    let flux = |t: f64| FluxSample { bias: drive.flux_s, total: drive.flux(t) };
    stepper.evolve(&flux, 0.0, drive.period(), &mut block, dim, &mut StepScratch::default())?;
    let matrix = DMatrix::from_row_slice(dim, dim, &block);
    let defect = unitarity_defect(&matrix);
    let limit = 1e-10;
    if defect > limit {
        return Err(Error::Integration { drift: defect, limit });
    }
    Ok(Monodromy {
        matrix,
        drive,
        unitarity_defect: defect,
        sectors: system.sectors().iter().map(|s| s.indices.clone()).collect(),
    })
}

/// Folds `e` into `[−f/2, f/2)`.
pub fn fold(e: f64, f: f64) -> f64 {
    let r = e - f * (e / f + 0.5).floor();
    if r >= 0.5 * f { r - f } else { r }
}

#[derive(Debug, Clone)]
pub struct FloquetSpectrum {
    /// Folded quasienergies, GHz.
    pub quasienergies: Vec<f64>,
    pub labels: Vec<Label>,
    /// `|⟨dressed(label)|floquet⟩|` for each state.
    pub overlaps: Vec<f64>,
    /// Floquet states (columns) in the bare basis.
    pub vectors: DMatrix<C64>,
    pub drive: FloquetDrive,
    /// Pairs of state indices whose quasienergies coincide within
    /// [`DEGENERATE_QUASIENERGY`].
    pub degenerate: Vec<(usize, usize)>,
}

impl FloquetSpectrum {
    pub fn index_of(&self, label: Label) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or(Error::MissingLabel { label })
    }

    pub fn quasienergy(&self, label: Label) -> Result<f64> {
        Ok(self.quasienergies[self.index_of(label)?])
    }
}

/// Eigen-decomposition of the monodromy (complex Schur form per invariant
/// sector), labeled by maximal overlap with the dressed states in `frame`.
pub fn quasienergies(m: &Monodromy, frame: &LabeledSpectrum) -> Result<FloquetSpectrum> {
    let dim = m.matrix.nrows();
    if frame.vectors.nrows() != dim {
        return Err(Error::Dimension { expected: dim, got: frame.vectors.nrows() });
    }
    let period = m.period();
    let f = m.drive.drive_freq;
    let mut phases = Vec::with_capacity(dim);
    let mut vectors = DMatrix::<C64>::zeros(dim, dim);
    let mut col = 0;
    for idx in &m.sectors {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| m.matrix[(idx[a], idx[b])]);
        let (q, t) = Schur::try_new(sub, 1e-15, 100_000)
            .ok_or(Error::Integration { drift: f64::NAN, limit: 0.0 })?
            .unpack();
        for k in 0..idx.len() {
            phases.push(t[(k, k)]);
            for (a, &i) in idx.iter().enumerate() {
                vectors[(i, col)] = q[(a, k)];
            }
            col += 1;
        }
    }
    let quasi: Vec<f64> = phases.iter().map(|l| fold(-l.arg() / (2.0 * PI * period), f)).collect();
    let overlaps_m = frame.vectors.adjoint() * &vectors;
    let (rows, overlaps, _) = match_labels(&overlaps_m);
    let labels = rows.iter().map(|&r| frame.labels[r]).collect();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| quasi[a].total_cmp(&quasi[b]));
    let mut degenerate = Vec::new();
    for w in order.windows(2) {
        if (quasi[w[1]] - quasi[w[0]]).abs() < DEGENERATE_QUASIENERGY {
            degenerate.push((w[0], w[1]));
        }
    }
    if let (Some(&first), Some(&last)) = (order.first(), order.last()) {
        if dim > 1 && (quasi[first] + f - quasi[last]).abs() < DEGENERATE_QUASIENERGY {
            degenerate.push((last, first));
        }
    }
    Ok(FloquetSpectrum { quasienergies: quasi, labels, overlaps, vectors, drive: m.drive, degenerate })
}

/// Monodromy plus quasienergies at one drive.
pub fn floquet_spectrum(
    system: &CompositeSystem,
    frame: &LabeledSpectrum,
    drive: FloquetDrive,
    dt: f64,
) -> Result<FloquetSpectrum> {
    quasienergies(&monodromy(system, drive, dt)?, frame)
}

/// Located avoided crossing of one state pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionFit {
    /// Drive frequency of the minimal gap, GHz.
    pub omega_res: f64,
    /// Half the minimal gap, GHz.
    pub strength: f64,
    /// Scanned `(ω_p, gap)` curve.
    pub gaps: Vec<(f64, f64)>,
    pub evaluations: usize,
}

/// Scan of one pair across a frequency window.
#[derive(Debug, Clone)]
pub struct PairScan {
    pub freqs: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Smaller of the two selected states' weights on the undriven pair span.
    pub span_weight: Vec<f64>,
    /// Selected pair of Floquet states (bare basis) at each frequency.
    pub tracked: Vec<[Vec<C64>; 2]>,
    pub spectra: Vec<FloquetSpectrum>,
}

/// Span weight below which a scan point is treated as contaminated by a
/// third state and ignored when locating the crossing.
pub const MIN_SPAN_WEIGHT: f64 = 0.75;

/// The two columns of `spec.vectors` with the largest weight on
/// `span(reference)`, ordered so slot 0 overlaps `reference[0]` most, and
/// the smaller of their two weights.
fn pick_pair(spec: &FloquetSpectrum, reference: &[Vec<C64>; 2]) -> ([usize; 2], f64) {
    let dim = spec.vectors.nrows();
    let ov = |r: &Vec<C64>, j: usize| (0..dim).map(|i| r[i].conj() * spec.vectors[(i, j)]).sum::<C64>().norm_sqr();
    let mut w: Vec<(f64, usize)> =
        (0..spec.vectors.ncols()).map(|j| (ov(&reference[0], j) + ov(&reference[1], j), j)).collect();
    w.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (mut a, mut b) = (w[0].1, w[1].1);
    if ov(&reference[0], b) > ov(&reference[0], a) {
        std::mem::swap(&mut a, &mut b);
    }
    ([a, b], w[1].0)
}

fn pair_gap(spec: &FloquetSpectrum, pair: [usize; 2]) -> f64 {
    fold(spec.quasienergies[pair[0]] - spec.quasienergies[pair[1]], spec.drive.drive_freq).abs()
}

fn column(m: &DMatrix<C64>, j: usize) -> Vec<C64> {
    m.column(j).iter().copied().collect()
}

/// Quasienergy gap of the `(a, b)` pair over `freqs`.
///
/// At every frequency the pair is the two Floquet states with the largest
/// weight on the span of the undriven dressed states `a`, `b`. Anchoring to
/// the undriven span rather than to the previous point keeps the selection
/// diabatic through narrow crossings with spectator states, which a
/// point-to-point continuity rule follows adiabatically on a fine grid.
pub fn scan_pair(
    system: &CompositeSystem,
    flux_s: f64,
    drive_amp: f64,
    pair: (Label, Label),
    freqs: &[f64],
    dt: f64,
) -> Result<PairScan> {
    if freqs.is_empty() {
        return Err(invalid("freqs", "empty frequency grid"));
    }
    let frame = system.labeled_spectrum(flux_s)?;
    let reference = pair_reference(&frame, pair)?;
    let spectra: Vec<Result<FloquetSpectrum>> =
        crate::par::map(freqs, |&f| floquet_spectrum(system, &frame, FloquetDrive::new(flux_s, drive_amp, f), dt));
    let spectra: Vec<FloquetSpectrum> = spectra.into_iter().collect::<Result<_>>()?;
    let mut gaps = Vec::with_capacity(freqs.len());
    let mut span_weight = Vec::with_capacity(freqs.len());
    let mut tracked = Vec::with_capacity(freqs.len());
    for spec in &spectra {
        let (p, w) = pick_pair(spec, &reference);
        gaps.push(pair_gap(spec, p));
        span_weight.push(w);
        tracked.push([column(&spec.vectors, p[0]), column(&spec.vectors, p[1])]);
    }
    Ok(PairScan { freqs: freqs.to_vec(), gaps, span_weight, tracked, spectra })
}

fn pair_reference(frame: &LabeledSpectrum, pair: (Label, Label)) -> Result<[Vec<C64>; 2]> {
    let (ia, ib) = (frame.index_of(pair.0)?, frame.index_of(pair.1)?);
    Ok([column(&frame.vectors, ia), column(&frame.vectors, ib)])
}

/// Locates the avoided crossing of `pair` in `window` at drive amplitude
/// `drive_amp`: coarse scan of `resolution` points, then parabolic (Brent)
/// refinement of the minimal gap within the neighbouring grid cells. Points
/// whose pair weight falls below [`MIN_SPAN_WEIGHT`] are skipped.
pub fn extract_transition(
    system: &CompositeSystem,
    flux_s: f64,
    drive_amp: f64,
    pair: (Label, Label),
    window: (f64, f64),
    resolution: usize,
    dt: f64,
) -> Result<TransitionFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) || resolution < 3 {
        return Err(invalid("window", "need 0 < lo < hi and at least three points"));
    }
    let step = (hi - lo) / (resolution - 1) as f64;
    let freqs: Vec<f64> = (0..resolution).map(|k| lo + step * k as f64).collect();
    let scan = scan_pair(system, flux_s, drive_amp, pair, &freqs, dt)?;
    let mut curve: Vec<(f64, f64)> = freqs.iter().copied().zip(scan.gaps.iter().copied()).collect();
    let k = crate::linalg::argmax(
        scan.gaps.iter().zip(&scan.span_weight).map(|(g, &w)| if w >= MIN_SPAN_WEIGHT { -g } else { f64::NEG_INFINITY }),
    );
    if k == 0 || k + 1 == resolution || scan.span_weight[k] < MIN_SPAN_WEIGHT {
        return Err(Error::NoCrossing { lo, hi, gaps: curve });
    }
    let frame = system.labeled_spectrum(flux_s)?;
    let reference = pair_reference(&frame, pair)?;
    let mut extra = Vec::new();
    let mut failure = None;
    let mut gap_at = |f: f64| -> f64 {
        match floquet_spectrum(system, &frame, FloquetDrive::new(flux_s, drive_amp, f), dt) {
            Ok(spec) => {
                let (p, w) = pick_pair(&spec, &reference);
                let g = pair_gap(&spec, p);
                extra.push((f, g));
                if w >= MIN_SPAN_WEIGHT {
                    g
                } else {
                    f64::INFINITY
                }
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let (omega_res, min_gap) = brent_min(&mut gap_at, freqs[k - 1], freqs[k + 1], (freqs[k], scan.gaps[k]), 1e-7, 60);
    if let Some(e) = failure {
        return Err(e);
    }
    let evaluations = resolution + extra.len();
    curve.extend(extra);
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(TransitionFit { omega_res, strength: 0.5 * min_gap, gaps: curve, evaluations })
}

/// Brent's parabolic-interpolation minimizer on `[a, b]` starting from the
/// interior point `start = (x, f(x))`.
fn brent_min(
    f: &mut dyn FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    start: (f64, f64),
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut x, mut fx) = start;
    let (mut w, mut fw, mut v, mut fv) = (x, fx, x, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol + 1e-10 * x.abs();
        if (x - m).abs() <= 2.0 * tol1 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < 2.0 * tol1 || b - u < 2.0 * tol1 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u < x { b = x } else { a = x }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x { a = u } else { b = u }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_range() {
        for e in [-7.3, -0.5, 0.0, 0.49, 0.5, 3.2, 11.0] {
            let r = fold(e, 1.0);
            assert!((-0.5..0.5).contains(&r), "{e} -> {r}");
            assert!(((e - r) - (e - r).round()).abs() < 1e-12);
            assert_eq!(fold(r, 1.0), r);
        }
    }

    #[test]
    fn brent_finds_parabola_vertex() {
        let mut f = |x: f64| (x - 0.3).powi(2) + 1.0;
        let (x, fx) = brent_min(&mut f, 0.0, 1.0, (0.5, 1.04), 1e-10, 100);
        assert!((x - 0.3).abs() < 1e-8 && (fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brent_handles_v_shape() {
        let mut f = |x: f64| (x - 0.123).abs();
        let (x, _) = brent_min(&mut f, 0.0, 1.0, (0.5, 0.377), 1e-9, 200);
        assert!((x - 0.123).abs() < 1e-7);
    }

    #[test]
    fn drive_validation() {
        assert!(FloquetDrive::new(0.35, -0.1, 10.0).validate().is_err());
        assert!(FloquetDrive::new(0.35, 0.1, 0.0).validate().is_err());
    }
}
