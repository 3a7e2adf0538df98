//! Truncated fluxonium–coupler–fluxonium Hamiltonian, dressed-state labeling
//! and the static interaction diagnostics.
//!
//! The bare basis is the product of the two fluxonium eigenbases and the
//! coupler Fock basis, ordered `(q0, c, q1)` with `q0` most significant.
//! The coupler is an anharmonic oscillator whose frequency and charge
//! zero-point fluctuation follow the external flux.
//!
//! A fast flux drive is not followed adiabatically by the coupler basis. In
//! the default [`DriveModel::LabFrame`] the basis tracks only the slow bias
//! and the drive enters through the linearized change of the inductive
//! energy, `δE_J φ̂²/2`, which shifts the frequency and adds a two-photon
//! (squeezing) term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, symmetric_eigen, SplitCsr, C64};
use crate::pulse::FluxSample;
use crate::spectra::{
    check_flux_domain, diagonalize_fluxonium, transmon_oscillator_params, FluxoniumParams, SpectralData,
    TransmonParams, DEFAULT_FLUXONIUM_BASIS,
};

/// Bare product label `(q0 level, coupler level, q1 level)`.
pub type Label = [usize; 3];

/// Overlap² below which a dressed state's label is flagged ambiguous.
pub const AMBIGUITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeParams {
    pub q0: FluxoniumParams,
    pub q1: FluxoniumParams,
    pub coupler: TransmonParams,
    pub j_c0: f64,
    pub j_c1: f64,
    pub j_01: f64,
    pub n_flux_levels: usize,
    pub n_coupler_levels: usize,
    pub fluxonium_basis: usize,
    #[serde(default)]
    pub drive_model: DriveModel,
}

/// How the coupler responds to the part of the flux that departs from the bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveModel {
    /// Basis and charge scale follow the bias. The inductive change
    /// `δE_J φ̂²/2`, with `δE_J = E_J(Φ) − E_J(Φ_bias)`, is kept exactly in the
    /// bias basis: `Δ·N − (Δ/2)(a² + a†²)` with `Δ = δE_J φ_zpf²(Φ_bias)`.
    #[default]
    LabFrame,
    /// Every coefficient follows the total flux, as if the coupler basis were
    /// rotated adiabatically. Omits the non-adiabatic squeezing term, which
    /// nearly cancels the parametric exchange at GHz drive frequencies.
    Instantaneous,
}

/// Scalars multiplying the flux-dependent operators at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCoefficients {
    /// Coefficient of the coupler number operator.
    pub omega_c: f64,
    /// Charge zero-point scale multiplying the coupler-fluxonium couplings.
    pub n_zpf: f64,
    /// Coefficient of `a² + a†²`.
    pub squeeze: f64,
}

impl DriveCoefficients {
    /// Weighted combination `a·self + b·other`; all coefficients enter `H` linearly.
    pub fn blend(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            omega_c: a * self.omega_c + b * other.omega_c,
            n_zpf: a * self.n_zpf + b * other.n_zpf,
            squeeze: a * self.squeeze + b * other.squeeze,
        }
    }

    pub(crate) fn scales(&self) -> [f64; 2] {
        [self.n_zpf, self.squeeze]
    }
}

impl CompositeParams {
    /// Table-I style parameter set; `j_c` is used for both fluxonium–coupler couplings.
    pub fn reference(e_j_coupler: f64, j_c: f64, j_01: f64) -> Self {
        use std::f64::consts::PI;
        Self {
            q0: FluxoniumParams::new(1.41, 0.80, 6.27, PI),
            q1: FluxoniumParams::new(1.30, 0.59, 5.71, PI),
            coupler: TransmonParams::new(0.32, e_j_coupler, 0.0),
            j_c0: j_c,
            j_c1: j_c,
            j_01,
            n_flux_levels: 5,
            n_coupler_levels: 6,
            fluxonium_basis: DEFAULT_FLUXONIUM_BASIS,
            drive_model: DriveModel::LabFrame,
        }
    }

    /// 500 MHz coupling set (E_J,c = 55 GHz).
    pub fn strong() -> Self {
        Self::reference(55.0, 0.500, 0.125)
    }

    /// 300 MHz coupling set (E_J,c = 40 GHz).
    pub fn weak() -> Self {
        Self::reference(40.0, 0.300, 0.080)
    }

    pub fn validate(&self) -> Result<()> {
        self.q0.validate()?;
        self.q1.validate()?;
        if !(self.coupler.e_c > 0.0 && self.coupler.e_j_max > 0.0) {
            return Err(invalid("coupler", "energies must be positive"));
        }
        if self.n_flux_levels < 5 {
            return Err(invalid("n_flux_levels", format!("must be at least 5, got {}", self.n_flux_levels)));
        }
        if self.n_coupler_levels < 4 {
            return Err(invalid("n_coupler_levels", format!("must be at least 4, got {}", self.n_coupler_levels)));
        }
        for (field, v) in [("j_c0", self.j_c0), ("j_c1", self.j_c1), ("j_01", self.j_01)] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Hermitian operator on `Q0 ⊗ C ⊗ Q1` in the bare product basis.
#[derive(Debug, Clone)]
pub struct CompositeOperator {
    pub matrix: DMatrix<C64>,
    pub flux_c: f64,
    pub n_flux: usize,
    pub n_coupler: usize,
}

/// Dressed spectrum with bare-product labels.
#[derive(Debug, Clone)]
pub struct LabeledSpectrum {
    pub energies: Vec<f64>,
    pub labels: Vec<Label>,
    pub overlaps: Vec<f64>,
    pub ambiguous: Vec<bool>,
    /// Dressed eigenvectors as columns, in the bare basis.
    pub vectors: DMatrix<C64>,
    n_flux: usize,
    n_coupler: usize,
    by_bare: Vec<usize>,
}

impl LabeledSpectrum {
    pub fn dims(&self) -> (usize, usize) {
        (self.n_flux, self.n_coupler)
    }

    /// Dressed index carrying `label`.
    pub fn index_of(&self, label: Label) -> Result<usize> {
        if label[0] >= self.n_flux || label[2] >= self.n_flux || label[1] >= self.n_coupler {
            return Err(Error::MissingLabel { label });
        }
        Ok(self.by_bare[bare_index(label, self.n_flux, self.n_coupler)])
    }

    pub fn energy(&self, label: Label) -> Result<f64> {
        Ok(self.energies[self.index_of(label)?])
    }

    /// Energy of `label`, failing if its assignment is ambiguous.
    pub fn clean_energy(&self, label: Label) -> Result<f64> {
        let idx = self.index_of(label)?;
        if self.ambiguous[idx] {
            return Err(Error::AmbiguousLabels { labels: vec![label] });
        }
        Ok(self.energies[idx])
    }

    fn clean_energies<const N: usize>(&self, labels: [Label; N]) -> Result<[f64; N]> {
        let flagged: Vec<Label> = labels
            .iter()
            .filter(|&&l| self.index_of(l).map(|i| self.ambiguous[i]).unwrap_or(false))
            .copied()
            .collect();
        if !flagged.is_empty() {
            return Err(Error::AmbiguousLabels { labels: flagged });
        }
        let mut out = [0.0; N];
        for (o, l) in out.iter_mut().zip(labels) {
            *o = self.energy(l)?;
        }
        Ok(out)
    }
}

pub fn bare_index(label: Label, n_flux: usize, n_coupler: usize) -> usize {
    (label[0] * n_coupler + label[1]) * n_flux + label[2]
}

pub fn bare_label(index: usize, n_flux: usize, n_coupler: usize) -> Label {
    let q1 = index % n_flux;
    let rest = index / n_flux;
    [rest / n_coupler, rest % n_coupler, q1]
}

/// Flux-independent pieces of the composite Hamiltonian, precomputed once.
///
/// `H = diag(E_q0 + E_q1 + α/2·N(N−1)) + ω·N + J_01 n̂₀n̂₁
///    + z·(J_c0 n̂₀ X + J_c1 X n̂₁) + s·(a² + a†²)`, with `X = a + a†` and
/// `(ω, z, s)` from [`CompositeSystem::drive_coefficients`].
#[derive(Debug, Clone)]
pub struct CompositeSystem {
    pub params: CompositeParams,
    pub q0: SpectralData,
    pub q1: SpectralData,
    static_diag: Vec<f64>,
    coupler_number: Vec<f64>,
    direct: DMatrix<C64>,
    coupling_unit: DMatrix<C64>,
    squeeze_unit: DMatrix<C64>,
    csr: SplitCsr,
    sectors: Vec<Sector>,
}

/// Invariant subspace of `H(Φ)` for every flux, in bare-basis indices.
///
/// At the fluxonium sweet spot the total parity `(q0 + c + q1) mod 2` is
/// conserved and the space splits in two; otherwise there is a single sector.
#[derive(Debug, Clone)]
pub struct Sector {
    pub indices: Vec<usize>,
    pub csr: SplitCsr,
    static_diag: Vec<f64>,
    coupler_number: Vec<f64>,
}

impl Sector {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn diagonal(&self, omega_c: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.static_diag.iter().zip(&self.coupler_number).map(|(d, n)| d + omega_c * n));
    }
}

const SPARSE_TOL: f64 = 1e-14;

fn build_sectors(
    direct: &DMatrix<C64>,
    parts: &[&DMatrix<C64>],
    static_diag: &[f64],
    coupler_number: &[f64],
    nf: usize,
    nc: usize,
) -> Vec<Sector> {
    let dim = static_diag.len();
    let parity = |i: usize| bare_label(i, nf, nc).iter().sum::<usize>() % 2;
    let conserved = (0..dim).all(|i| {
        (0..dim).all(|j| {
            parity(i) == parity(j)
                || (direct[(i, j)].norm() <= SPARSE_TOL && parts.iter().all(|m| m[(i, j)].norm() <= SPARSE_TOL))
        })
    });
    let groups: Vec<Vec<usize>> = if conserved {
        (0..2).map(|p| (0..dim).filter(|&i| parity(i) == p).collect()).collect()
    } else {
        vec![(0..dim).collect()]
    };
    groups
        .into_iter()
        .map(|idx| {
            let sub = |m: &DMatrix<C64>| DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
            let subs: Vec<DMatrix<C64>> = parts.iter().map(|m| sub(m)).collect();
            let refs: Vec<&DMatrix<C64>> = subs.iter().collect();
            Sector {
                csr: SplitCsr::from_dense(&sub(direct), &refs, SPARSE_TOL),
                static_diag: idx.iter().map(|&i| static_diag[i]).collect(),
                coupler_number: idx.iter().map(|&i| coupler_number[i]).collect(),
                indices: idx,
            }
        })
        .collect()
}

impl CompositeSystem {
    pub fn new(params: CompositeParams) -> Result<Self> {
        params.validate()?;
        let nf = params.n_flux_levels;
        let q0 = diagonalize_fluxonium(&params.q0, params.fluxonium_basis.max(4 * nf), nf)?;
        let q1 = diagonalize_fluxonium(&params.q1, params.fluxonium_basis.max(4 * nf), nf)?;
        Self::from_spectra(params, q0, q1)
    }

    /// Builds from precomputed fluxonium spectra (each truncated to `n_flux_levels`).
    pub fn from_spectra(params: CompositeParams, q0: SpectralData, q1: SpectralData) -> Result<Self> {
        params.validate()?;
        let nf = params.n_flux_levels;
        let nc = params.n_coupler_levels;
        for sd in [&q0, &q1] {
            if sd.n_levels != nf || sd.n_elements.nrows() != nf {
                return Err(Error::Dimension { expected: nf, got: sd.n_elements.nrows() });
            }
        }
        let dim = nf * nc * nf;
        let alpha = -params.coupler.e_c;
        let mut static_diag = vec![0.0; dim];
        let mut coupler_number = vec![0.0; dim];
        for (idx, (d, n)) in static_diag.iter_mut().zip(coupler_number.iter_mut()).enumerate() {
            let [a, c, b] = bare_label(idx, nf, nc);
            let cn = c as f64;
            *d = q0.energies[a] + q1.energies[b] + 0.5 * alpha * cn * (cn - 1.0);
            *n = cn;
        }
        let mut x = DMatrix::<C64>::zeros(nc, nc);
        for c in 0..nc - 1 {
            let v = C64::new(((c + 1) as f64).sqrt(), 0.0);
            x[(c, c + 1)] = v;
            x[(c + 1, c)] = v;
        }
        let mut sq = DMatrix::<C64>::zeros(nc, nc);
        for c in 0..nc.saturating_sub(2) {
            let v = C64::new((((c + 1) * (c + 2)) as f64).sqrt(), 0.0);
            sq[(c, c + 2)] = v;
            sq[(c + 2, c)] = v;
        }
        let id_f = DMatrix::<C64>::identity(nf, nf);
        let id_c = DMatrix::<C64>::identity(nc, nc);
        let n0 = &real_gauge(&q0.n_elements);
        let n1 = &real_gauge(&q1.n_elements);
        let j = |v: f64| C64::new(v, 0.0);
        let direct = n0.kronecker(&id_c).kronecker(n1) * j(params.j_01);
        let coupling_unit =
            n0.kronecker(&x).kronecker(&id_f) * j(params.j_c0) + id_f.kronecker(&x).kronecker(n1) * j(params.j_c1);
        if direct.nrows() != dim || coupling_unit.nrows() != dim {
            return Err(Error::Dimension { expected: dim, got: direct.nrows() });
        }
        let squeeze_unit = id_f.kronecker(&sq).kronecker(&id_f);
        let parts = [&coupling_unit, &squeeze_unit];
        let csr = SplitCsr::from_dense(&direct, &parts, SPARSE_TOL);
        let sectors = build_sectors(&direct, &parts, &static_diag, &coupler_number, nf, nc);
        Ok(Self { params, q0, q1, static_diag, coupler_number, direct, coupling_unit, squeeze_unit, csr, sectors })
    }

    pub fn dim(&self) -> usize {
        self.static_diag.len()
    }

    pub fn n_flux(&self) -> usize {
        self.params.n_flux_levels
    }

    pub fn n_coupler(&self) -> usize {
        self.params.n_coupler_levels
    }

    /// `(ω_c(Φ), n_zpf(Φ))`.
    pub fn coupler_coefficients(&self, flux: f64) -> Result<(f64, f64)> {
        let o = transmon_oscillator_params(&self.params.coupler, flux)?;
        Ok((o.omega_c, o.n_zpf))
    }

    /// Operator coefficients at one instant under the configured [`DriveModel`].
    pub fn drive_coefficients(&self, sample: FluxSample) -> Result<DriveCoefficients> {
        if sample.bias == sample.total || self.params.drive_model == DriveModel::Instantaneous {
            let (omega_c, n_zpf) = self.coupler_coefficients(sample.total)?;
            return Ok(DriveCoefficients { omega_c, n_zpf, squeeze: 0.0 });
        }
        check_flux_domain(&self.params.coupler, sample.total)?;
        let c = &self.params.coupler;
        let b = transmon_oscillator_params(c, sample.bias)?;
        let delta = (c.effective_e_j(sample.total) - c.effective_e_j(sample.bias)) * b.phi_zpf * b.phi_zpf;
        Ok(DriveCoefficients { omega_c: b.omega_c + delta, n_zpf: b.n_zpf, squeeze: -0.5 * delta })
    }

    /// Diagonal of `H` for a given coupler frequency.
    pub fn diagonal(&self, omega_c: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.static_diag.iter().zip(&self.coupler_number).map(|(d, n)| d + omega_c * n));
    }

    pub fn sparse(&self) -> &SplitCsr {
        &self.csr
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn hamiltonian(&self, flux_c: f64) -> Result<CompositeOperator> {
        self.hamiltonian_at(FluxSample::fixed(flux_c))
    }

    /// Instantaneous Hamiltonian for a bias/total flux pair.
    pub fn hamiltonian_at(&self, sample: FluxSample) -> Result<CompositeOperator> {
        check_flux_domain(&self.params.coupler, sample.bias)?;
        check_flux_domain(&self.params.coupler, sample.total)?;
        let k = self.drive_coefficients(sample)?;
        let mut matrix = &self.direct + &self.coupling_unit * C64::new(k.n_zpf, 0.0);
        if k.squeeze != 0.0 {
            matrix += &self.squeeze_unit * C64::new(k.squeeze, 0.0);
        }
        for i in 0..self.dim() {
            matrix[(i, i)] += C64::new(self.static_diag[i] + k.omega_c * self.coupler_number[i], 0.0);
        }
        Ok(CompositeOperator { matrix, flux_c: sample.total, n_flux: self.n_flux(), n_coupler: self.n_coupler() })
    }

    pub fn labeled_spectrum(&self, flux_c: f64) -> Result<LabeledSpectrum> {
        Ok(label_eigenstates(&self.hamiltonian(flux_c)?))
    }
}

/// Rephases fluxonium level `j` by `i^j`. With parity symmetry the charge
/// operator only links opposite-parity levels and `i·K` becomes real;
/// round-off below `1e-12` in the imaginary part is dropped so the real
/// kernels apply.
fn real_gauge(n: &DMatrix<C64>) -> DMatrix<C64> {
    const PHASE: [C64; 4] = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
    let g = DMatrix::from_fn(n.nrows(), n.ncols(), |j, k| n[(j, k)] * PHASE[(k + 4 - j % 4) % 4]);
    if g.iter().all(|v| v.im.abs() < 1e-12) {
        g.map(|v| C64::new(v.re, 0.0))
    } else {
        g
    }
}

/// Builds `H` at coupler flux `flux_c`.
pub fn build_hamiltonian(params: &CompositeParams, flux_c: f64) -> Result<CompositeOperator> {
    CompositeSystem::new(*params)?.hamiltonian(flux_c)
}

/// Diagonalizes and labels by greedy one-to-one maximum-overlap matching.
pub fn label_eigenstates(op: &CompositeOperator) -> LabeledSpectrum {
    let (energies, vectors) = if op.matrix.iter().all(|v| v.im == 0.0) {
        let (e, v) = symmetric_eigen(op.matrix.map(|v| v.re));
        (e, v.map(|x| C64::new(x, 0.0)))
    } else {
        hermitian_eigen(op.matrix.clone())
    };
    let (labels, overlaps, by_bare) = match_labels(&vectors);
    let ambiguous = overlaps.iter().map(|o| o * o < AMBIGUITY_THRESHOLD).collect();
    LabeledSpectrum {
        energies,
        labels: labels.into_iter().map(|b| bare_label(b, op.n_flux, op.n_coupler)).collect(),
        overlaps,
        ambiguous,
        vectors,
        n_flux: op.n_flux,
        n_coupler: op.n_coupler,
        by_bare,
    }
}

/// Greedy matching of columns of `vectors` to rows, processing `(row, col)`
/// pairs in descending `|v|`. Returns per-column row, per-column `|v|`, and the
/// inverse map row → column.
pub(crate) fn match_labels(vectors: &DMatrix<C64>) -> (Vec<usize>, Vec<f64>, Vec<usize>) {
    let n = vectors.nrows();
    let m = vectors.ncols();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * m);
    for col in 0..m {
        for row in 0..n {
            let v = vectors[(row, col)].norm();
            if v > 1e-6 {
                pairs.push((v, row, col));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut col_row = vec![usize::MAX; m];
    let mut col_ov = vec![0.0; m];
    let mut row_col = vec![usize::MAX; n];
    let mut left = m.min(n);
    for (v, row, col) in pairs {
        if left == 0 {
            break;
        }
        if col_row[col] == usize::MAX && row_col[row] == usize::MAX {
            col_row[col] = row;
            col_ov[col] = v;
            row_col[row] = col;
            left -= 1;
        }
    }
    // leftovers (all their overlaps were below the pair cutoff)
    let free: Vec<usize> = (0..n).filter(|r| row_col[*r] == usize::MAX).collect();
    let mut free_rows = free.into_iter();
    for col in 0..m {
        if col_row[col] == usize::MAX {
            if let Some(r) = free_rows.next() {
                col_row[col] = r;
                col_ov[col] = vectors[(r, col)].norm().max(f64::MIN_POSITIVE);
                row_col[r] = col;
            }
        }
    }
    (col_row, col_ov, row_col)
}

/// State-dependent plasmon shifts `(δω_p0, δω_p1)` of the 1→2 plasmon modes.
pub fn state_dependent_shifts(spec: &LabeledSpectrum) -> Result<(f64, f64)> {
    let [e10, e11, e20, e21, e01, e02, e12] =
        spec.clean_energies([[1, 0, 0], [1, 0, 1], [2, 0, 0], [2, 0, 1], [0, 0, 1], [0, 0, 2], [1, 0, 2]])?;
    let d0 = ((e21 - e11) - (e20 - e10)).abs();
    let d1 = ((e12 - e11) - (e02 - e01)).abs();
    Ok((d0, d1))
}

/// `ζ = E_101 − E_100 − E_001 + E_000`.
pub fn zz_coupling(spec: &LabeledSpectrum) -> Result<f64> {
    let [e000, e001, e100, e101] = spec.clean_energies([[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 1]])?;
    Ok(e101 - e100 - e001 + e000)
}

/// Coupler flux minimizing `max(δω_p0, δω_p1)` over a grid, then refined by
/// golden-section search to 1e-4 in flux.
pub fn find_idle_point(system: &CompositeSystem, flux_range: (f64, f64), resolution: usize) -> Result<f64> {
    let (lo, hi) = flux_range;
    if !(lo < hi) || resolution < 2 {
        return Err(invalid("flux_range", "need lo < hi and at least two grid points"));
    }
    check_flux_domain(&system.params.coupler, lo)?;
    check_flux_domain(&system.params.coupler, hi)?;
    let metric = |f: f64| -> Option<f64> {
        let spec = system.labeled_spectrum(f).ok()?;
        state_dependent_shifts(&spec).ok().map(|(a, b)| a.max(b))
    };
    let step = (hi - lo) / (resolution - 1) as f64;
    let grid: Vec<f64> = (0..resolution).map(|k| lo + step * k as f64).collect();
    let values: Vec<Option<f64>> = crate::par::map(&grid, |&f| metric(f));
    let best = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::SearchFailed)?;
    let (mut a, mut b) = (grid[best.0.saturating_sub(1)], grid[(best.0 + 1).min(resolution - 1)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |f: f64| metric(f).unwrap_or(f64::INFINITY);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    while b - a > 1e-4 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
    }
    let refined = 0.5 * (a + b);
    // keep the grid point if refinement wandered onto an ambiguous region
    if eval(refined) <= best.1 {
        Ok(refined)
    } else {
        Ok(grid[best.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decoupled() -> CompositeParams {
        CompositeParams { j_c0: 0.0, j_c1: 0.0, j_01: 0.0, ..CompositeParams::strong() }
    }

    #[test]
    fn label_index_roundtrip() {
        for idx in 0..150 {
            assert_eq!(bare_index(bare_label(idx, 5, 6), 5, 6), idx);
        }
        assert_eq!(bare_index([1, 0, 1], 5, 6), 31);
    }

    #[test]
    fn decoupled_limit_is_sum_of_bare_energies() {
        let sys = CompositeSystem::new(decoupled()).unwrap();
        let spec = sys.labeled_spectrum(0.35).unwrap();
        let osc = transmon_oscillator_params(&sys.params.coupler, 0.35).unwrap();
        for (k, l) in spec.labels.iter().enumerate() {
            let c = l[1] as f64;
            let expect = sys.q0.energies[l[0]] + sys.q1.energies[l[2]] + osc.omega_c * c + 0.5 * osc.alpha_c * c * (c - 1.0);
            assert!((spec.energies[k] - expect).abs() < 1e-9);
            assert!((spec.overlaps[k] - 1.0).abs() < 1e-12);
            assert!(!spec.ambiguous[k]);
        }
        let (a, b) = state_dependent_shifts(&spec).unwrap();
        assert!(a < 1e-9 && b < 1e-9);
        assert!(zz_coupling(&spec).unwrap().abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let op = build_hamiltonian(&CompositeParams::strong(), 0.35).unwrap();
        let norm = op.matrix.norm();
        assert!(crate::linalg::hermiticity_defect(&op.matrix) <= 1e-12 * norm);
    }

    #[test]
    fn invalid_truncation_rejected() {
        let p = CompositeParams { n_coupler_levels: 3, ..CompositeParams::strong() };
        assert!(CompositeSystem::new(p).is_err());
        let p = CompositeParams { n_flux_levels: 4, ..CompositeParams::strong() };
        assert!(CompositeSystem::new(p).is_err());
    }

    #[test]
    fn flux_outside_domain_rejected() {
        let sys = CompositeSystem::new(CompositeParams::strong()).unwrap();
        assert!(matches!(sys.hamiltonian(0.5), Err(Error::FluxDomain { .. })));
    }

    #[test]
    fn missing_label_reported() {
        let sys = CompositeSystem::new(decoupled()).unwrap();
        let spec = sys.labeled_spectrum(0.0).unwrap();
        assert!(matches!(spec.index_of([5, 0, 0]), Err(Error::MissingLabel { .. })));
    }

    #[test]
    fn lab_frame_static_offset_tracks_instantaneous_dressing() {
        // a small static offset read in the bias basis must reproduce, to
        // leading order, both the coupler frequency shift and the change in
        // plasmon dressing carried by n_zpf (which fixes the squeeze sign)
        let sys = CompositeSystem::new(CompositeParams::strong()).unwrap();
        let (bias, total) = (0.35, 0.352);
        let gap = |op: CompositeOperator| {
            let s = label_eigenstates(&op);
            let e = |l| s.energy(l).unwrap();
            (e([0, 1, 0]) - e([0, 0, 0]), e([2, 0, 2]) - e([1, 0, 1]))
        };
        let base = gap(sys.hamiltonian(bias).unwrap());
        let inst = gap(sys.hamiltonian(total).unwrap());
        let lab = gap(sys.hamiltonian_at(FluxSample { bias, total }).unwrap());
        for k in 0..2 {
            let (di, dl) = ([inst.0, inst.1][k] - [base.0, base.1][k], [lab.0, lab.1][k] - [base.0, base.1][k]);
            assert!((dl - di).abs() < 0.1 * di.abs(), "component {k}: lab {dl} vs instantaneous {di}");
        }
    }

    #[test]
    fn drive_models_agree_without_drive() {
        let mut p = CompositeParams::strong();
        let lab = CompositeSystem::new(p).unwrap();
        p.drive_model = DriveModel::Instantaneous;
        let inst = CompositeSystem::new(p).unwrap();
        let s = FluxSample::fixed(0.3);
        assert_eq!(lab.drive_coefficients(s).unwrap(), inst.drive_coefficients(s).unwrap());
        let moved = FluxSample { bias: 0.3, total: 0.33 };
        let (kl, ki) = (lab.drive_coefficients(moved).unwrap(), inst.drive_coefficients(moved).unwrap());
        assert!(kl.squeeze > 0.0 && ki.squeeze == 0.0);
        assert_eq!(kl.n_zpf, lab.coupler_coefficients(0.3).unwrap().1);
    }
}
