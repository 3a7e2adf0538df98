//! Dense eigen helpers and the sparse operator kernels used by the propagators.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;

pub(crate) const DEGENERACY_TOL: f64 = 1e-10;

/// Sorted eigen-decomposition of a real symmetric matrix.
///
/// Eigenvectors are sign-fixed so the largest-magnitude component is positive.
/// Eigenvalues closer than `1e-10` are ordered by the index of their largest
/// basis component.
pub fn symmetric_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let order = sorted_order(eig.eigenvalues.as_slice(), |k| {
        argmax(eig.eigenvectors.column(k).iter().map(|x| x.abs()))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let peak = argmax(col.iter().map(|x| x.abs()));
        let sign = if col[peak] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    (values, vectors)
}

/// Sorted eigen-decomposition of a complex Hermitian matrix, phase-fixed so
/// the largest-magnitude component of each eigenvector is real positive.
pub fn hermitian_eigen(m: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let order = sorted_order(eig.eigenvalues.as_slice(), |k| {
        argmax(eig.eigenvectors.column(k).iter().map(|x| x.norm()))
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let peak = argmax(col.iter().map(|x| x.norm()));
        let p = col[peak];
        let phase = if p.norm() > 0.0 { p.conj() / p.norm() } else { C64::new(1.0, 0.0) };
        vectors.set_column(dst, &(col * phase));
    }
    (values, vectors)
}

fn sorted_order(values: &[f64], peak_index: impl Fn(usize) -> usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    // ties broken by bare-basis position of the dominant component
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[end - 1]] < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by_key(|&k| peak_index(k));
        }
        start = end;
    }
    order
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Largest absolute entry of `A - A†`.
pub fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `‖U†U − 1‖` in the max-entry norm.
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Compressed-row Hermitian matrix with a separate diagonal.
///
/// Off-diagonal values are a fixed part plus parts scaled by runtime
/// coefficients: `H_ij = fixed_ij + Σ_k s_k · parts[k]_ij`. When every entry
/// is real the kernels skip the imaginary parts.
#[derive(Debug, Clone)]
pub struct SplitCsr {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub fixed: Vec<C64>,
    pub parts: Vec<Vec<C64>>,
    pub real: bool,
    fixed_abs: Vec<f64>,
    parts_abs: Vec<Vec<f64>>,
}

impl SplitCsr {
    /// Builds from dense operators, keeping every off-diagonal entry where
    /// any magnitude exceeds `tol`. Diagonals are ignored.
    pub fn from_dense(fixed: &DMatrix<C64>, parts: &[&DMatrix<C64>], tol: f64) -> Self {
        let dim = fixed.nrows();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut fv = Vec::new();
        let mut pv: Vec<Vec<C64>> = vec![Vec::new(); parts.len()];
        row_ptr.push(0);
        for i in 0..dim {
            for j in 0..dim {
                if i == j {
                    continue;
                }
                let a = fixed[(i, j)];
                if a.norm() > tol || parts.iter().any(|m| m[(i, j)].norm() > tol) {
                    cols.push(j);
                    fv.push(a);
                    for (v, m) in pv.iter_mut().zip(parts) {
                        v.push(m[(i, j)]);
                    }
                }
            }
            row_ptr.push(cols.len());
        }
        let real = fv.iter().chain(pv.iter().flatten()).all(|v| v.im == 0.0);
        let row_abs = |v: &[C64]| -> Vec<f64> {
            row_ptr.windows(2).map(|w| v[w[0]..w[1]].iter().map(|z| z.norm()).sum()).collect()
        };
        let fixed_abs = row_abs(&fv);
        let parts_abs = pv.iter().map(|v| row_abs(v)).collect();
        Self { dim, row_ptr, cols, fixed: fv, parts: pv, real, fixed_abs, parts_abs }
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    fn combine(&self, scales: &[f64], inv_radius: f64, out: &mut Values) {
        debug_assert_eq!(scales.len(), self.parts.len());
        out.complex.clear();
        out.real.clear();
        if self.real {
            out.real.extend(self.fixed.iter().map(|a| a.re));
            for (part, &s) in self.parts.iter().zip(scales) {
                if s != 0.0 {
                    for (o, b) in out.real.iter_mut().zip(part) {
                        *o += b.re * s;
                    }
                }
            }
            out.real.iter_mut().for_each(|o| *o *= inv_radius);
        } else {
            out.complex.extend(self.fixed.iter().copied());
            for (part, &s) in self.parts.iter().zip(scales) {
                if s != 0.0 {
                    for (o, b) in out.complex.iter_mut().zip(part) {
                        *o += b * s;
                    }
                }
            }
            out.complex.iter_mut().for_each(|o| *o *= inv_radius);
        }
    }

    /// Interval containing the spectrum of `diag + offdiag(scales)`: Gershgorin
    /// discs with radii bounded by the triangle inequality.
    pub fn gershgorin(&self, scales: &[f64], diag: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim {
            let r = self.fixed_abs[i]
                + self.parts_abs.iter().zip(scales).map(|(a, s)| s.abs() * a[i]).sum::<f64>();
            lo = lo.min(diag[i] - r);
            hi = hi.max(diag[i] + r);
        }
        (lo, hi)
    }
}

#[derive(Debug, Default, Clone)]
struct Values {
    real: Vec<f64>,
    complex: Vec<C64>,
}

/// `y = (diag + offdiag) x` on a row-major block of `width` vectors.
fn block_matvec(csr: &SplitCsr, values: &Values, diag: &[f64], x: &[C64], y: &mut [C64], width: usize) {
    if csr.real {
        match width {
            1 => real_fixed::<1>(csr, &values.real, diag, x, y),
            2 => real_fixed::<2>(csr, &values.real, diag, x, y),
            3 => real_fixed::<3>(csr, &values.real, diag, x, y),
            4 => real_fixed::<4>(csr, &values.real, diag, x, y),
            _ => real_wide(csr, &values.real, diag, x, y, width),
        }
        return;
    }
    let vals = &values.complex;
    for i in 0..csr.dim {
        let yi = &mut y[i * width..(i + 1) * width];
        let d = diag[i];
        for (a, b) in yi.iter_mut().zip(&x[i * width..(i + 1) * width]) {
            *a = b * d;
        }
        let (lo, hi) = (csr.row_ptr[i], csr.row_ptr[i + 1]);
        for (v, &c) in vals[lo..hi].iter().zip(&csr.cols[lo..hi]) {
            for (a, b) in yi.iter_mut().zip(&x[c * width..(c + 1) * width]) {
                *a += v * b;
            }
        }
    }
}

fn real_fixed<const W: usize>(csr: &SplitCsr, vals: &[f64], diag: &[f64], x: &[C64], y: &mut [C64]) {
    let xs: &[[C64; W]] = as_rows(x);
    for (i, yi) in y.chunks_exact_mut(W).enumerate() {
        let (lo, hi) = (csr.row_ptr[i], csr.row_ptr[i + 1]);
        let d = diag[i];
        let mut re: [f64; W] = std::array::from_fn(|k| xs[i][k].re * d);
        let mut im: [f64; W] = std::array::from_fn(|k| xs[i][k].im * d);
        for (&v, &c) in vals[lo..hi].iter().zip(&csr.cols[lo..hi]) {
            let xc = &xs[c];
            for k in 0..W {
                re[k] += v * xc[k].re;
                im[k] += v * xc[k].im;
            }
        }
        for k in 0..W {
            yi[k] = C64::new(re[k], im[k]);
        }
    }
}

fn as_rows<const W: usize>(x: &[C64]) -> &[[C64; W]] {
    let (rows, rest) = x.as_chunks::<W>();
    debug_assert!(rest.is_empty());
    rows
}

fn real_wide(csr: &SplitCsr, vals: &[f64], diag: &[f64], x: &[C64], y: &mut [C64], width: usize) {
    for i in 0..csr.dim {
        let yi = &mut y[i * width..(i + 1) * width];
        let d = diag[i];
        for (a, b) in yi.iter_mut().zip(&x[i * width..(i + 1) * width]) {
            *a = b * d;
        }
        let (lo, hi) = (csr.row_ptr[i], csr.row_ptr[i + 1]);
        for (&v, &c) in vals[lo..hi].iter().zip(&csr.cols[lo..hi]) {
            for (a, b) in yi.iter_mut().zip(&x[c * width..(c + 1) * width]) {
                a.re += v * b.re;
                a.im += v * b.im;
            }
        }
    }
}

/// Scratch buffers for [`expm_action`]; one per worker.
#[derive(Debug, Default, Clone)]
pub struct ExpScratch {
    prev: Vec<C64>,
    cur: Vec<C64>,
    next: Vec<C64>,
    acc: Vec<C64>,
    values: Values,
    diag: Vec<f64>,
    bessel: Vec<f64>,
}

/// Bessel functions `J_0(z) … J_{K}(z)`, truncated where `|J_k| < 1e-17`
/// beyond `k > z` (Miller backward recurrence, normalized by
/// `J_0 + 2ΣJ_2k = 1`).
pub fn bessel_j_series(z: f64, out: &mut Vec<f64>) {
    out.clear();
    if z == 0.0 {
        out.push(1.0);
        return;
    }
    let start = (z + 30.0 + 6.0 * z.cbrt()).ceil() as usize + 10;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-280;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / z * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..=start].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    let mut last = 0;
    for (k, v) in j.iter().enumerate() {
        if (*v / norm).abs() >= 1e-17 || (k as f64) <= z {
            last = k;
        }
    }
    out.extend(j[..=last].iter().map(|v| v / norm));
}

/// In-place `x ← exp(−i τ H) x` for `H = diag + offdiag(scales)` acting on a
/// row-major block of `width` vectors, by Chebyshev expansion over the
/// Gershgorin interval of `H`.
pub fn expm_action(
    csr: &SplitCsr,
    scales: &[f64],
    diag: &[f64],
    tau: f64,
    x: &mut [C64],
    width: usize,
    scratch: &mut ExpScratch,
) {
    let len = csr.dim * width;
    debug_assert_eq!(x.len(), len);
    if tau == 0.0 {
        return;
    }
    let (lo, hi) = csr.gershgorin(scales, diag);
    let center = 0.5 * (lo + hi);
    let radius = (0.5 * (hi - lo)).max(1e-300);
    csr.combine(scales, 1.0 / radius, &mut scratch.values);
    scratch.diag.clear();
    scratch.diag.extend(diag.iter().map(|d| (d - center) / radius));
    let z = tau * radius;
    bessel_j_series(z.abs(), &mut scratch.bessel);
    // exp(−i z Ĥ) = Σ (2 − δ_k0) (−i)^k J_k(z) T_k(Ĥ), using J_k(−z) = (−1)^k J_k(z)
    let coeff = |k: usize, b: f64| {
        let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
        let mag = if k == 0 { b } else { 2.0 * b } * sign;
        match k % 4 {
            0 => C64::new(mag, 0.0),
            1 => C64::new(0.0, -mag),
            2 => C64::new(-mag, 0.0),
            _ => C64::new(0.0, mag),
        }
    };
    let ExpScratch { prev, cur, next, acc, values, diag: d, bessel } = scratch;
    for buf in [&mut *prev, &mut *cur, &mut *next, &mut *acc] {
        buf.resize(len, C64::default());
    }
    prev.copy_from_slice(x);
    let c0 = coeff(0, bessel[0]);
    for (a, p) in acc.iter_mut().zip(prev.iter()) {
        *a = p * c0;
    }
    if bessel.len() > 1 {
        block_matvec(csr, values, d, prev, cur, width);
        let c1 = coeff(1, bessel[1]);
        for (a, c) in acc.iter_mut().zip(cur.iter()) {
            *a += c * c1;
        }
        for (k, &b) in bessel.iter().enumerate().skip(2) {
            block_matvec(csr, values, d, cur, next, width);
            let ck = coeff(k, b);
            for ((n, p), a) in next.iter_mut().zip(prev.iter()).zip(acc.iter_mut()) {
                *n = *n * 2.0 - p;
                *a += *n * ck;
            }
            std::mem::swap(prev, cur);
            std::mem::swap(cur, next);
        }
    }
    let phase = C64::from_polar(1.0, -center * tau);
    for (xi, a) in x.iter_mut().zip(acc.iter()) {
        *xi = a * phase;
    }
}

#[doc(hidden)]
pub fn bench_matvec(csr: &SplitCsr, diag: &[f64], width: usize, reps: usize) -> f64 {
    let mut vals = Values::default();
    csr.combine(&vec![1.0; csr.parts.len()], 1.0, &mut vals);
    let x = vec![C64::new(1.0, 0.5); csr.dim * width];
    let mut y = vec![C64::default(); csr.dim * width];
    let t = std::time::Instant::now();
    for _ in 0..reps {
        block_matvec(csr, &vals, diag, &x, &mut y, width);
    }
    std::hint::black_box(&y);
    t.elapsed().as_secs_f64() / reps as f64
}
