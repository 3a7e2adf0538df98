//! Bounded Nelder–Mead simplex search with deterministic restarts.
//!
//! Coordinates are mapped to the unit box so one simplex scale fits every
//! parameter; trial points that leave the box are reflected back in.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Evaluation budget per restart.
    pub max_evaluations: usize,
    /// Extra starts at fixed offsets from the seed, run besides the seed itself.
    pub restarts: usize,
    /// Initial edge length in unit-box coordinates.
    pub initial_step: f64,
    /// Stop when the simplex values spread less than this...
    pub f_tol: f64,
    /// ...and its vertices lie within this unit-box distance of the best.
    pub x_tol: f64,
    /// Skip the restarts when the seed run ends below this value.
    pub accept: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evaluations: 400, restarts: 3, initial_step: 0.1, f_tol: 1e-10, x_tol: 1e-6, accept: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Every evaluation in order: restart-major, then call order.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub evaluations: usize,
}

fn reflect_into_unit(v: f64) -> f64 {
    let mut v = v;
    for _ in 0..4 {
        if v < 0.0 {
            v = -v;
        } else if v > 1.0 {
            v = 2.0 - v;
        } else {
            return v;
        }
    }
    v.clamp(0.0, 1.0)
}

/// Offset of restart `k` in unit-box coordinates; zero for the first start.
fn restart_offset(k: usize, dim: usize) -> Vec<f64> {
    if k == 0 {
        return vec![0.0; dim];
    }
    let mag = 0.15 * k.div_ceil(2) as f64;
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    (0..dim).map(|i| if i % 2 == 0 { sign * mag } else { -sign * mag }).collect()
}

/// Minimizes `f` inside `bounds` from `seed`. The seed run goes first; if it
/// ends at or above `opts.accept` the restarts follow through
/// [`crate::par::map`]. Each run is sequential, so the result and trace
/// depend only on the inputs. Non-finite values count as `+∞`.
pub fn minimize<F>(f: F, seed: &[f64], bounds: &[(f64, f64)], opts: &SimplexOptions) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let dim = seed.len();
    if dim == 0 || bounds.len() != dim {
        return Err(invalid("bounds", "need one (lo, hi) pair per coordinate"));
    }
    if bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(invalid("bounds", "each bound needs lo < hi"));
    }
    if opts.max_evaluations < dim + 1 {
        return Err(invalid("max_evaluations", "budget must exceed the simplex size"));
    }
    let to_unit: Vec<f64> = seed.iter().zip(bounds).map(|(x, (lo, hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect();
    let starts: Vec<Vec<f64>> = (0..=opts.restarts)
        .map(|k| to_unit.iter().zip(restart_offset(k, dim)).map(|(u, o)| reflect_into_unit(u + o)).collect())
        .collect();
    let from_unit = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(v, (lo, hi))| lo + v * (hi - lo)).collect() };
    let run = |start: &Vec<f64>| {
        let mut trace = Vec::new();
        let mut eval = |u: &[f64]| -> f64 {
            let x = from_unit(u);
            let v = f(&x);
            let v = if v.is_finite() { v } else { f64::INFINITY };
            trace.push((x, v));
            v
        };
        let (u, v) = simplex(&mut eval, start, opts);
        (from_unit(&u), v, trace)
    };
    let mut runs = vec![run(&starts[0])];
    if !(runs[0].1 < opts.accept) {
        runs.extend(crate::par::map(&starts[1..], run));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trace = Vec::new();
    for (x, v, t) in runs {
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
        trace.extend(t);
    }
    let (x, value) = best.expect("the seed run always exists");
    Ok(Minimum { x, value, evaluations: trace.len(), trace })
}

fn simplex(f: &mut dyn FnMut(&[f64]) -> f64, start: &[f64], opts: &SimplexOptions) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        // step inward when the seed sits near the upper face
        p[i] = if p[i] + opts.initial_step <= 1.0 { p[i] + opts.initial_step } else { p[i] - opts.initial_step };
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut used = n + 1;
    let at = |c: &[f64], p: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(p).map(|(c, p)| reflect_into_unit(c + t * (p - c))).collect()
    };
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let size = pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if used + 2 > opts.max_evaluations || (spread <= opts.f_tol && size <= opts.x_tol) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let xr = at(&centroid, &pts[n], -1.0);
        let fr = f(&xr);
        used += 1;
        if fr < vals[0] {
            let xe = at(&centroid, &pts[n], -2.0);
            let fe = f(&xe);
            used += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let x = at(&centroid, &pts[n], -0.5);
            let v = f(&x);
            (x, v)
        } else {
            let x = at(&centroid, &pts[n], 0.5);
            let v = f(&x);
            (x, v)
        };
        used += 1;
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            if used >= opts.max_evaluations {
                break;
            }
            pts[i] = at(&pts[0], &pts[i], 0.5);
            vals[i] = f(&pts[i]);
            used += 1;
        }
    }
    let k = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (pts[k].clone(), vals[k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_shifted_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 10.0 * (x[1] + 1.2).powi(2);
        let m = minimize(f, &[0.0, 0.0], &[(-1.0, 1.0), (-2.0, 2.0)], &SimplexOptions::default()).unwrap();
        assert!((m.x[0] - 0.3).abs() < 1e-4 && (m.x[1] + 1.2).abs() < 1e-4, "{:?}", m.x);
        assert_eq!(m.evaluations, m.trace.len());
    }

    #[test]
    fn stays_inside_bounds() {
        let f = |x: &[f64]| x[0] + x[1];
        let m = minimize(f, &[0.5, 0.5], &[(0.0, 1.0), (0.0, 1.0)], &SimplexOptions::default()).unwrap();
        assert!(m.trace.iter().all(|(x, _)| x.iter().all(|v| (0.0..=1.0).contains(v))));
        assert!(m.value < 1e-4);
    }

    #[test]
    fn deterministic_trace() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + x[1] * x[1];
        let opts = SimplexOptions { restarts: 4, ..Default::default() };
        let a = minimize(f, &[0.2, 0.4], &[(-2.0, 2.0), (-1.0, 1.0)], &opts).unwrap();
        let b = minimize(f, &[0.2, 0.4], &[(-2.0, 2.0), (-1.0, 1.0)], &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn accepted_seed_skips_restarts() {
        let f = |x: &[f64]| (x[0] - 0.1).powi(2);
        let base = SimplexOptions { restarts: 3, ..Default::default() };
        let all = minimize(f, &[0.3], &[(-1.0, 1.0)], &base).unwrap();
        let seed_only = minimize(f, &[0.3], &[(-1.0, 1.0)], &SimplexOptions { restarts: 0, ..base }).unwrap();
        let accepted = minimize(f, &[0.3], &[(-1.0, 1.0)], &SimplexOptions { accept: 1e-6, ..base }).unwrap();
        assert_eq!(accepted, seed_only);
        assert!(all.evaluations > seed_only.evaluations);
    }

    #[test]
    fn budget_respected() {
        let f = |x: &[f64]| x[0].abs().sqrt();
        let opts = SimplexOptions { max_evaluations: 20, restarts: 0, f_tol: 0.0, x_tol: 0.0, ..Default::default() };
        let m = minimize(f, &[0.7], &[(-1.0, 1.0)], &opts).unwrap();
        assert!(m.evaluations <= 20, "{}", m.evaluations);
    }

    #[test]
    fn rejects_bad_bounds() {
        let f = |_: &[f64]| 0.0;
        assert!(minimize(f, &[0.0], &[(1.0, 0.0)], &SimplexOptions::default()).is_err());
        assert!(minimize(f, &[0.0, 1.0], &[(0.0, 1.0)], &SimplexOptions::default()).is_err());
    }
}
