//! Frequency supports and the discrete Fourier transform of
//! Hamiltonian-encoded kernels.
//!
//! A kernel built from data-bound gates with rational scales is a finite
//! Fourier series `k(x, y) = z†(y) F z(x)` where `z` lists complex
//! exponentials over a finite integer frequency grid and `F` is Hermitian,
//! positive semi-definite and unit-trace. The diagonal of `F` is a
//! probability mass function over frequencies; its factorizations feed the
//! random-feature constructions in [`crate::rff`].
//!
//! ```
//! use qkrff::qsim::x_rotation_map;
//! use qkrff::spectrum::FourierTransform;
//!
//! let ft = FourierTransform::of_circuit(&x_rotation_map()).unwrap();
//! let q = ft.diagonal().unwrap();
//! // cos²((x-y)/2) = 1/2 + (1/4) e^{i(x-y)} + (1/4) e^{-i(x-y)}
//! assert!((q.probs()[0] - 0.5).abs() < 1e-9);
//! assert!((q.probs()[1] - 0.25).abs() < 1e-9);
//! assert!((q.probs()[2] - 0.25).abs() < 1e-9);
//! ```

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_integer::Integer;

use crate::error::{Error, Result};
use crate::qsim::EncodingCircuit;

/// Largest full frequency support that will be materialized as a list.
pub const MAX_FULL_SUPPORT: usize = 1_000_000;
/// Largest support for which the dense transform matrix is computed.
pub const MAX_TRANSFORM_SIZE: usize = 4096;
/// Budget of kernel evaluations for exact grid extraction.
pub const MAX_GRID_EVALS: usize = 10_000_000;

/// Eigenvalues below `-PSD_TOL` make a matrix count as non-PSD; anything in
/// `[-PSD_TOL, 0)` is clipped to zero.
pub const PSD_TOL: f64 = 1e-9;

/// The finite frequency grid of a discrete-spectrum kernel.
///
/// Frequencies are stored as integer vectors on a common grid; the true
/// frequency is `integer / denom`. The full support is the Cartesian product
/// of the per-dimension sets, ordered ascending by Euclidean norm with
/// lexicographic tie-breaking, so factorizations are reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencySupport {
    dims: usize,
    per_dim: Vec<Vec<i64>>,
    denom: i64,
    freqs: Vec<Vec<i64>>,
    positive_half: Vec<usize>,
    index: BTreeMap<Vec<i64>, usize>,
}

impl FrequencySupport {
    /// Support of a circuit's fidelity kernel: per dimension, all differences
    /// of sums of encoding-generator eigenvalues.
    pub fn from_circuit(circuit: &EncodingCircuit) -> Result<Self> {
        let (per_dim, denom) = per_dim_frequency_sets(circuit)?;
        Self::from_per_dim(per_dim, denom)
    }

    pub fn from_per_dim(per_dim: Vec<Vec<i64>>, denom: i64) -> Result<Self> {
        if per_dim.is_empty() {
            return Err(Error::invalid("support needs at least one dimension"));
        }
        if denom <= 0 {
            return Err(Error::invalid("frequency denominator must be positive"));
        }
        let mut cleaned = Vec::with_capacity(per_dim.len());
        for set in per_dim {
            let set: BTreeSet<i64> = set.into_iter().collect();
            if !set.contains(&0) {
                return Err(Error::invalid("per-dimension support must contain 0"));
            }
            for w in &set {
                if !set.contains(&-w) {
                    return Err(Error::invalid(
                        "per-dimension support must be symmetric about 0",
                    ));
                }
            }
            cleaned.push(set.into_iter().collect::<Vec<i64>>());
        }

        let mut total: usize = 1;
        for set in &cleaned {
            total = total.saturating_mul(set.len());
            if total > MAX_FULL_SUPPORT {
                return Err(Error::ResourceLimit(format!(
                    "full frequency support exceeds {MAX_FULL_SUPPORT} entries"
                )));
            }
        }

        let mut freqs: Vec<Vec<i64>> = vec![vec![]];
        for set in &cleaned {
            let mut next = Vec::with_capacity(freqs.len() * set.len());
            for prefix in &freqs {
                for w in set {
                    let mut f = prefix.clone();
                    f.push(*w);
                    next.push(f);
                }
            }
            freqs = next;
        }
        let norm2 = |f: &[i64]| -> i64 { f.iter().map(|w| w * w).sum() };
        freqs.sort_by(|a, b| norm2(a).cmp(&norm2(b)).then_with(|| a.cmp(b)));

        let index: BTreeMap<Vec<i64>, usize> = freqs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        // Positive half: first nonzero coordinate positive.
        let positive_half = freqs
            .iter()
            .enumerate()
            .filter(|(_, f)| matches!(f.iter().find(|w| **w != 0), Some(w) if *w > 0))
            .map(|(i, _)| i)
            .collect();

        Ok(FrequencySupport {
            dims: cleaned.len(),
            per_dim: cleaned,
            denom,
            freqs,
            positive_half,
            index,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    pub fn per_dim(&self) -> &[Vec<i64>] {
        &self.per_dim
    }

    /// Number of frequencies in the full support.
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[Vec<i64>] {
        &self.freqs
    }

    pub fn freq(&self, i: usize) -> &[i64] {
        &self.freqs[i]
    }

    /// Frequency `i` in true (possibly fractional) units.
    pub fn freq_f64(&self, i: usize) -> Vec<f64> {
        self.freqs[i]
            .iter()
            .map(|w| *w as f64 / self.denom as f64)
            .collect()
    }

    pub fn index_of(&self, freq: &[i64]) -> Option<usize> {
        self.index.get(freq).copied()
    }

    /// Index of `-ω` for index `i`; exists by symmetry.
    pub fn negation_index(&self, i: usize) -> usize {
        let neg: Vec<i64> = self.freqs[i].iter().map(|w| -w).collect();
        self.index[&neg]
    }

    pub fn positive_half(&self) -> &[usize] {
        &self.positive_half
    }

    /// Euclidean norm of frequency `i` in true units.
    pub fn norm(&self, i: usize) -> f64 {
        (self.freqs[i].iter().map(|w| (w * w) as f64).sum::<f64>()).sqrt() / self.denom as f64
    }

    /// Largest frequency norm over the support.
    pub fn max_norm(&self) -> f64 {
        self.norm(self.len() - 1)
    }
}

/// Per-dimension frequency sets of a circuit on a common integer grid,
/// together with the grid denominator.
///
/// Each data-bound gate with scale `s` contributes eigenvalue differences
/// `{-s, 0, s}`; the dimension's set is the sumset over all its gates.
pub fn per_dim_frequency_sets(circuit: &EncodingCircuit) -> Result<(Vec<Vec<i64>>, i64)> {
    let mut denom: i64 = 1;
    for gate in circuit.gates() {
        if let Some((_, scale)) = gate.data_binding() {
            denom = denom.lcm(scale.denom());
            if denom > 1_000_000 {
                return Err(Error::UnsupportedEncoding(
                    "gate scales do not reduce to a practical common integer grid".into(),
                ));
            }
        }
    }
    let mut per_dim = Vec::with_capacity(circuit.dim());
    for j in 0..circuit.dim() {
        let mut set = BTreeSet::from([0i64]);
        for gate in circuit.data_gates_for_dim(j) {
            let (_, scale) = gate.data_binding().expect("filtered to data gates");
            let step = scale.numer() * (denom / scale.denom());
            let mut next = BTreeSet::new();
            for base in &set {
                for delta in [-step, 0, step] {
                    next.insert(base + delta);
                }
            }
            set = next;
            if set.len() > 100_000 {
                return Err(Error::ResourceLimit(
                    "per-dimension frequency set grew beyond 100000 entries".into(),
                ));
            }
        }
        per_dim.push(set.into_iter().collect());
    }
    Ok((per_dim, denom))
}

/// Histogram of single-gate eigenvalue differences for every gate encoding
/// dimension `j`, on the support's integer grid. Two-eigenvalue generators
/// give weights (1, 2, 1)/4 on `{-s, 0, s}`.
pub fn per_gate_difference_histograms(
    circuit: &EncodingCircuit,
    j: usize,
    denom: i64,
) -> Vec<BTreeMap<i64, f64>> {
    circuit
        .data_gates_for_dim(j)
        .iter()
        .map(|gate| {
            let (_, scale) = gate.data_binding().expect("data gate");
            let step = scale.numer() * (denom / scale.denom());
            BTreeMap::from([(-step, 0.25), (0, 0.5), (step, 0.25)])
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fourier transform extraction
// ---------------------------------------------------------------------------

/// The `|Ω| × |Ω|` Fourier transform matrix of a discrete-spectrum kernel,
/// with its frequency support.
#[derive(Clone, Debug)]
pub struct FourierTransform {
    support: FrequencySupport,
    matrix: DMatrix<Complex64>,
}

impl FourierTransform {
    /// Exact extraction for a circuit's fidelity kernel. Statevectors are
    /// cached per grid point, so this costs one simulation per point plus
    /// one inner product per point pair.
    pub fn of_circuit(circuit: &EncodingCircuit) -> Result<Self> {
        let support = FrequencySupport::from_circuit(circuit)?;
        let grid = Grid::for_support(&support)?;
        let states: Vec<_> = grid
            .points()
            .map(|x| circuit.apply(&x))
            .collect::<Result<_>>()?;
        let n = states.len();
        let mut gram = DMatrix::<Complex64>::zeros(n, n);
        for t in 0..n {
            for s in 0..n {
                let k = states[s].inner(&states[t]).norm_sqr();
                gram[(t, s)] = Complex64::new(k, 0.0);
            }
        }
        Self::from_grid_gram(support, &grid, gram)
    }

    /// Exact extraction of `F` for an arbitrary kernel callable, sampled on
    /// the Nyquist grid of the given support. Exact up to roundoff when the
    /// kernel truly is a Fourier series on that support.
    pub fn from_kernel_fn<K>(kernel: K, support: &FrequencySupport) -> Result<Self>
    where
        K: Fn(&[f64], &[f64]) -> f64,
    {
        let grid = Grid::for_support(support)?;
        let points: Vec<Vec<f64>> = grid.points().collect();
        let n = points.len();
        let mut gram = DMatrix::<Complex64>::zeros(n, n);
        for t in 0..n {
            for s in 0..n {
                gram[(t, s)] = Complex64::new(kernel(&points[t], &points[s]), 0.0);
            }
        }
        Self::from_grid_gram(support.clone(), &grid, gram)
    }

    /// `F = Z† K Z / G²` where `Z[t, ω] = e^{iω·x_t}` over the grid.
    fn from_grid_gram(
        support: FrequencySupport,
        grid: &Grid,
        gram: DMatrix<Complex64>,
    ) -> Result<Self> {
        let g = gram.nrows();
        let omega = support.len();
        let mut z = DMatrix::<Complex64>::zeros(g, omega);
        for (t, coords) in grid.unit_angles().enumerate() {
            for (w, freq) in support.freqs().iter().enumerate() {
                let phase: f64 = freq
                    .iter()
                    .zip(coords.iter())
                    .map(|(n, u)| *n as f64 * u)
                    .sum();
                z[(t, w)] = Complex64::from_polar(1.0, phase);
            }
        }
        let scale = 1.0 / (g as f64 * g as f64);
        let matrix = (z.adjoint() * gram * z).map(|v| v * scale);
        Ok(FourierTransform { support, matrix })
    }

    /// Wrap an existing matrix (used when loading from disk).
    pub fn from_matrix(support: FrequencySupport, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != support.len() || matrix.ncols() != support.len() {
            return Err(Error::invalid(
                "transform matrix does not match its support size",
            ));
        }
        Ok(FourierTransform { support, matrix })
    }

    pub fn support(&self) -> &FrequencySupport {
        &self.support
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `max |F - F†|`.
    pub fn hermitian_residual(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// `max |F[-ω,-ν] - conj(F[ω,ν])|`, the real-kernel symmetry.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let n = self.support.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let ni = self.support.negation_index(i);
            for j in 0..n {
                let nj = self.support.negation_index(j);
                let diff = (self.matrix[(ni, nj)] - self.matrix[(i, j)].conj()).norm();
                worst = worst.max(diff);
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let eig = self.matrix.clone().symmetric_eigen();
        eig.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// The kernel value encoded by the transform:
    /// `Σ_{ω,ν} F[ω,ν] e^{i(ω·x - ν·y)}`, i.e. `z†(y) F z(x)` in the
    /// row-equals-y-side convention.
    pub fn reconstruct_complex(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let zx = self.feature_vector(x);
        let zy = self.feature_vector(y);
        let fz = self.matrix.transpose() * zx;
        zy.dotc(&fz)
    }

    pub fn reconstruct(&self, x: &[f64], y: &[f64]) -> f64 {
        self.reconstruct_complex(x, y).re
    }

    fn feature_vector(&self, x: &[f64]) -> nalgebra::DVector<Complex64> {
        nalgebra::DVector::from_iterator(
            self.support.len(),
            (0..self.support.len()).map(|i| {
                let phase: f64 = self
                    .support
                    .freq_f64(i)
                    .iter()
                    .zip(x.iter())
                    .map(|(w, xi)| w * xi)
                    .sum();
                Complex64::from_polar(1.0, phase)
            }),
        )
    }

    /// The diagonal distribution `q_ω = F[ω, ω]`.
    pub fn diagonal(&self) -> Result<DiagonalDistribution> {
        let q: Vec<f64> = self.matrix.diagonal().iter().map(|v| v.re).collect();
        DiagonalDistribution::new(self.support.clone(), q)
    }

    /// `F = U diag(p) U†` with `U` upper triangular, unit columns.
    pub fn reverse_cholesky(&self) -> Result<SpectralFactorization> {
        let (u, weights) = reverse_cholesky_matrix(&self.matrix)?;
        Ok(SpectralFactorization {
            kind: FactorKind::ReverseCholesky,
            u,
            weights,
            support: self.support.clone(),
        })
    }

    /// `F = U diag(v) U†` with unitary `U` of eigenvectors, eigenvalues
    /// clipped at zero and renormalized.
    pub fn eigen_factorization(&self) -> Result<SpectralFactorization> {
        let (u, weights) = eigen_factorization_matrix(&self.matrix)?;
        Ok(SpectralFactorization {
            kind: FactorKind::Eigen,
            u,
            weights,
            support: self.support.clone(),
        })
    }

    /// Non-stationarity measure of the `n`-th eigenfeature:
    /// `ζ_n = ‖u_n‖₁ (|U_nn| ‖ω_n‖₂ + B (‖u_n‖₁ - |U_nn|))` with `B` the
    /// largest frequency norm. Equals `‖ω_n‖₂` for shift-invariant kernels.
    pub fn nonstationarity_measure(&self, n: usize) -> Result<f64> {
        self.eigen_factorization()?.nonstationarity(n)
    }
}

/// Mixed-radix Nyquist grid: `N_j = 2·max|ω_j| + 1` points per dimension.
struct Grid {
    sizes: Vec<usize>,
    denom: i64,
}

impl Grid {
    fn for_support(support: &FrequencySupport) -> Result<Grid> {
        if support.len() > MAX_TRANSFORM_SIZE {
            return Err(Error::ResourceLimit(format!(
                "support has {} frequencies, above the {MAX_TRANSFORM_SIZE} cap for exact \
                 extraction; use estimate_diagonal (CLI: spectrum --estimate) instead",
                support.len()
            )));
        }
        let sizes: Vec<usize> = support
            .per_dim()
            .iter()
            .map(|set| {
                let max = set.iter().map(|w| w.unsigned_abs()).max().unwrap_or(0);
                2 * max as usize + 1
            })
            .collect();
        let points: usize = sizes.iter().product();
        if points.saturating_mul(points) > MAX_GRID_EVALS {
            return Err(Error::ResourceLimit(format!(
                "exact extraction would need {} kernel evaluations, above the \
                 {MAX_GRID_EVALS} budget; use estimate_diagonal instead",
                points * points
            )));
        }
        Ok(Grid {
            sizes,
            denom: support.denom(),
        })
    }

    fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Grid angles in rescaled units (integer frequencies live here).
    fn unit_angles(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let tau = 2.0 * std::f64::consts::PI;
        (0..self.len()).map(move |mut t| {
            let mut coords = Vec::with_capacity(self.sizes.len());
            for n in &self.sizes {
                let idx = t % n;
                t /= n;
                coords.push(tau * idx as f64 / *n as f64);
            }
            coords
        })
    }

    /// Grid points in true input coordinates.
    fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let denom = self.denom as f64;
        self.unit_angles()
            .map(move |u| u.into_iter().map(|v| v * denom).collect())
    }
}

// ---------------------------------------------------------------------------
// Diagonal distribution
// ---------------------------------------------------------------------------

/// The probability mass function formed by the diagonal of `F`.
#[derive(Clone, Debug)]
pub struct DiagonalDistribution {
    support: FrequencySupport,
    q: Vec<f64>,
}

impl DiagonalDistribution {
    pub fn new(support: FrequencySupport, q: Vec<f64>) -> Result<Self> {
        if q.len() != support.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: q.len(),
            });
        }
        let mut cleaned = q;
        for v in cleaned.iter_mut() {
            if *v < 0.0 {
                if *v < -PSD_TOL {
                    return Err(Error::numeric(format!(
                        "diagonal entry {v} is negative beyond tolerance"
                    )));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = cleaned.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::numeric(format!(
                "diagonal distribution sums to {sum}, expected 1"
            )));
        }
        Ok(DiagonalDistribution {
            support,
            q: cleaned,
        })
    }

    pub fn support(&self) -> &FrequencySupport {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.q
    }

    pub fn sum(&self) -> f64 {
        self.q.iter().sum()
    }
}

/// Monte Carlo estimate of the diagonal distribution for supports where the
/// exact grid is out of budget: `q̂_ω` is the sample mean of
/// `Re[k(x, y) e^{-iω·(x-y)}]` over uniform pairs, clipped at zero and
/// renormalized.
pub struct EstimatedDiagonal {
    pub dist: DiagonalDistribution,
    /// Standard error of each raw (pre-clipping) estimate.
    pub std_error: Vec<f64>,
}

pub fn estimate_diagonal<K>(
    kernel: K,
    support: &FrequencySupport,
    n_samples: usize,
    rng: &mut impl rand::Rng,
) -> Result<EstimatedDiagonal>
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let d = support.dims();
    let tau = 2.0 * std::f64::consts::PI * support.denom() as f64;
    let m = support.len();
    let mut sum = vec![0.0f64; m];
    let mut sum_sq = vec![0.0f64; m];
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..tau)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..tau)).collect();
        let k = kernel(&x, &y);
        for w in 0..m {
            let freq = support.freq_f64(w);
            let phase: f64 = freq
                .iter()
                .enumerate()
                .map(|(j, f)| f * (x[j] - y[j]))
                .sum();
            let value = k * phase.cos();
            sum[w] += value;
            sum_sq[w] += value * value;
        }
    }
    let n = n_samples as f64;
    let mut q: Vec<f64> = sum.iter().map(|s| (s / n).max(0.0)).collect();
    let std_error: Vec<f64> = sum
        .iter()
        .zip(sum_sq.iter())
        .map(|(s, ss)| {
            let mean = s / n;
            let var = (ss / n - mean * mean).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    let total: f64 = q.iter().sum();
    if total <= 0.0 {
        return Err(Error::numeric("estimated diagonal has no mass"));
    }
    for v in q.iter_mut() {
        *v /= total;
    }
    Ok(EstimatedDiagonal {
        dist: DiagonalDistribution {
            support: support.clone(),
            q,
        },
        std_error,
    })
}

// ---------------------------------------------------------------------------
// Factorizations
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    ReverseCholesky,
    Eigen,
}

/// `F = U diag(weights) U†` with unit-norm columns: upper triangular `U` for
/// the reverse Cholesky route, unitary `U` for the eigen route.
#[derive(Clone, Debug)]
pub struct SpectralFactorization {
    kind: FactorKind,
    u: DMatrix<Complex64>,
    weights: Vec<f64>,
    support: FrequencySupport,
}

impl SpectralFactorization {
    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn u(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> &FrequencySupport {
        &self.support
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.u.nrows();
        let mut diag = DMatrix::<Complex64>::zeros(n, n);
        for (i, w) in self.weights.iter().enumerate() {
            diag[(i, i)] = Complex64::new(*w, 0.0);
        }
        &self.u * diag * self.u.adjoint()
    }

    /// `ζ_n` (eigen factorizations only).
    pub fn nonstationarity(&self, n: usize) -> Result<f64> {
        if self.kind != FactorKind::Eigen {
            return Err(Error::invalid(
                "non-stationarity is defined over the eigen factorization",
            ));
        }
        if n >= self.u.ncols() {
            return Err(Error::invalid(format!(
                "index {n} out of range for {} eigenfeatures",
                self.u.ncols()
            )));
        }
        let col = self.u.column(n);
        let l1: f64 = col.iter().map(|v| v.norm()).sum();
        let diag = col[n].norm();
        let omega_norm = self.support.norm(n);
        let b = self.support.max_norm();
        Ok(l1 * (diag * omega_norm + b * (l1 - diag)))
    }
}

/// Reverse Cholesky of a Hermitian PSD matrix: `A = U diag(p) U†` with `U`
/// upper triangular and unit 2-norm columns where `p > 0`. Columns with zero
/// weight are replaced by basis vectors.
pub fn reverse_cholesky_matrix(a: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("matrix must be square"));
    }
    // Flip, factor A_flip = L L† with a PSD-tolerant lower Cholesky, flip back.
    let flipped = DMatrix::from_fn(n, n, |i, j| a[(n - 1 - i, n - 1 - j)]);
    let l = psd_lower_cholesky(&flipped)?;
    let u_raw = DMatrix::from_fn(n, n, |i, j| l[(n - 1 - i, n - 1 - j)]);

    let mut u = DMatrix::<Complex64>::zeros(n, n);
    let mut weights = vec![0.0f64; n];
    for j in 0..n {
        let col = u_raw.column(j);
        let norm_sq: f64 = col.iter().map(|v| v.norm_sqr()).sum();
        if norm_sq > 0.0 {
            weights[j] = norm_sq;
            let inv = 1.0 / norm_sq.sqrt();
            for i in 0..n {
                u[(i, j)] = u_raw[(i, j)] * inv;
            }
        } else {
            u[(j, j)] = Complex64::new(1.0, 0.0);
        }
    }
    Ok((u, weights))
}

/// Lower Cholesky that tolerates semi-definite inputs: pivots within
/// `[-PSD_TOL, ~0]` zero out their column, pivots below `-PSD_TOL` are an
/// error.
fn psd_lower_cholesky(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    let mut l = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d < -PSD_TOL {
            return Err(Error::numeric(format!(
                "matrix is not positive semi-definite (pivot {d:e})"
            )));
        }
        if d <= 1e-12 {
            continue; // zero column
        }
        let root = d.sqrt();
        l[(j, j)] = Complex64::new(root, 0.0);
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

/// Hermitian eigendecomposition with deterministic ordering and phases:
/// eigenvectors are assigned to the index of their largest component
/// (largest eigenvalue first), and each column is rotated so that entry is
/// real positive. Diagonal matrices therefore factor through the identity.
pub fn eigen_factorization_matrix(
    a: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, Vec<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("matrix must be square"));
    }
    let herm = (a + a.adjoint()).map(|v| v * 0.5);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    // Within (near-)degenerate eigenvalue clusters any orthonormal basis of
    // the eigenspace is valid; pick the one closest to the coordinate axes
    // so diagonal matrices factor through the identity.
    let mut pairs: Vec<(f64, nalgebra::DVector<Complex64>)> = Vec::with_capacity(n);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len()
            && (eig.eigenvalues[order[end - 1]] - eig.eigenvalues[order[end]]).abs() <= 1e-10
        {
            end += 1;
        }
        let cluster: Vec<usize> = order[start..end].to_vec();
        if cluster.len() == 1 {
            pairs.push((
                eig.eigenvalues[cluster[0]],
                eig.eigenvectors.column(cluster[0]).into_owned(),
            ));
        } else {
            let mut projector = DMatrix::<Complex64>::zeros(n, n);
            for &idx in &cluster {
                let v = eig.eigenvectors.column(idx);
                projector += v * v.adjoint();
            }
            let mut coord_order: Vec<usize> = (0..n).collect();
            coord_order.sort_by(|&i, &j| {
                projector[(j, j)]
                    .re
                    .partial_cmp(&projector[(i, i)].re)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(i.cmp(&j))
            });
            let mut basis: Vec<nalgebra::DVector<Complex64>> = Vec::new();
            for &coord in &coord_order {
                if basis.len() == cluster.len() {
                    break;
                }
                let mut v = projector.column(coord).into_owned();
                for b in &basis {
                    let overlap = b.dotc(&v);
                    v -= b * overlap;
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    v /= Complex64::new(norm, 0.0);
                    basis.push(v);
                }
            }
            // Numerical fallback: keep the original eigenvectors.
            if basis.len() != cluster.len() {
                basis = cluster
                    .iter()
                    .map(|&idx| eig.eigenvectors.column(idx).into_owned())
                    .collect();
            }
            let mean: f64 =
                cluster.iter().map(|&idx| eig.eigenvalues[idx]).sum::<f64>() / cluster.len() as f64;
            for v in basis {
                pairs.push((mean, v));
            }
        }
        start = end;
    }

    let mut taken = vec![false; n];
    let mut u = DMatrix::<Complex64>::zeros(n, n);
    let mut weights = vec![0.0f64; n];
    for (lambda_src, col) in &pairs {
        // Home index: largest-magnitude component among free slots.
        let mut home = usize::MAX;
        let mut best = -1.0;
        for i in 0..n {
            if !taken[i] && col[i].norm() > best {
                best = col[i].norm();
                home = i;
            }
        }
        taken[home] = true;
        let pivot = col[home];
        let phase = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            u[(i, home)] = col[i] * phase;
        }
        let lambda = *lambda_src;
        if lambda < -PSD_TOL {
            return Err(Error::numeric(format!(
                "matrix is not positive semi-definite (eigenvalue {lambda:e})"
            )));
        }
        weights[home] = lambda.max(0.0);
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        let trace = a.trace().re;
        let target = if (trace - 1.0).abs() < 1e-6 {
            1.0
        } else {
            trace
        };
        for w in weights.iter_mut() {
            *w *= target / total;
        }
    }
    Ok((u, weights))
}

/// Principal square root of a Hermitian PSD matrix via eigendecomposition,
/// with eigenvalues clipped at zero.
pub fn matrix_sqrt_psd(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("matrix must be square"));
    }
    let herm = (a + a.adjoint()).map(|v| v * 0.5);
    let eig = herm.symmetric_eigen();
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda < -PSD_TOL {
            return Err(Error::numeric(format!(
                "matrix is not positive semi-definite (eigenvalue {lambda:e})"
            )));
        }
        if *lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            let outer = v * v.adjoint();
            out += outer * Complex64::new(lambda.sqrt(), 0.0);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// Text serialization of a transform: header with the frequency list, then
/// one `row` line per matrix row with interleaved re/im values.
pub fn transform_to_text(ft: &FourierTransform) -> String {
    let mut out = String::from("qkrff-fourier-transform v1\n");
    let s = ft.support();
    out.push_str(&format!("dims {}\n", s.dims()));
    out.push_str(&format!("denom {}\n", s.denom()));
    out.push_str(&format!("size {}\n", s.len()));
    for f in s.freqs() {
        out.push_str("freq");
        for w in f {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
    }
    for i in 0..s.len() {
        out.push_str("row");
        for j in 0..s.len() {
            let v = ft.matrix()[(i, j)];
            out.push_str(&format!(" {} {}", v.re, v.im));
        }
        out.push('\n');
    }
    out
}

pub fn transform_from_text(text: &str) -> Result<FourierTransform> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (i, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty transform file"))?;
    if header.trim() != "qkrff-fourier-transform v1" {
        return Err(perr(i, "missing transform header"));
    }
    let mut dims = None;
    let mut denom = None;
    let mut size = None;
    let mut freqs: Vec<Vec<i64>> = Vec::new();
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (i, line) in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("dims") => dims = tok.next().and_then(|v| v.parse().ok()),
            Some("denom") => denom = tok.next().and_then(|v| v.parse().ok()),
            Some("size") => size = tok.next().and_then(|v| v.parse().ok()),
            Some("freq") => {
                let f: Option<Vec<i64>> = tok.map(|v| v.parse().ok()).collect();
                freqs.push(f.ok_or_else(|| perr(i, "bad frequency entry"))?);
            }
            Some("row") => {
                let vals: Option<Vec<f64>> = tok.map(|v| v.parse().ok()).collect();
                let vals = vals.ok_or_else(|| perr(i, "bad row entry"))?;
                if vals.len() % 2 != 0 {
                    return Err(perr(i, "row needs interleaved re/im pairs"));
                }
                rows.push(vals.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect());
            }
            Some(other) => return Err(perr(i, &format!("unknown directive '{other}'"))),
            None => continue,
        }
    }
    let dims: usize = dims.ok_or_else(|| Error::invalid("transform file missing dims"))?;
    let denom: i64 = denom.ok_or_else(|| Error::invalid("transform file missing denom"))?;
    let size: usize = size.ok_or_else(|| Error::invalid("transform file missing size"))?;
    if freqs.len() != size || rows.len() != size {
        return Err(Error::invalid(
            "transform file size does not match its frequency or row count",
        ));
    }
    // Rebuild the support from the stored per-dimension sets.
    let mut per_dim: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); dims];
    for f in &freqs {
        if f.len() != dims {
            return Err(Error::invalid("frequency entry has wrong dimension"));
        }
        for (j, w) in f.iter().enumerate() {
            per_dim[j].insert(*w);
        }
    }
    let support = FrequencySupport::from_per_dim(
        per_dim
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
        denom,
    )?;
    if support.len() != size {
        return Err(Error::invalid(
            "stored frequencies do not form a full product support",
        ));
    }
    let mut matrix = DMatrix::<Complex64>::zeros(size, size);
    for (stored_i, f) in freqs.iter().enumerate() {
        let i = support
            .index_of(f)
            .ok_or_else(|| Error::invalid("frequency missing from rebuilt support"))?;
        for (stored_j, g) in freqs.iter().enumerate() {
            let j = support.index_of(g).expect("same support");
            matrix[(i, j)] = rows[stored_i][stored_j];
        }
    }
    FourierTransform::from_matrix(support, matrix)
}

/// CSV rows `(frequency vector, probability)` for a diagonal distribution.
pub fn diagonal_to_csv(q: &DiagonalDistribution) -> String {
    let mut out = String::new();
    let d = q.support().dims();
    for j in 0..d {
        out.push_str(&format!("w{j},"));
    }
    out.push_str("probability\n");
    for (i, p) in q.probs().iter().enumerate() {
        for w in q.support().freq_f64(i) {
            out.push_str(&format!("{w},"));
        }
        out.push_str(&format!("{p}\n"));
    }
    out
}
