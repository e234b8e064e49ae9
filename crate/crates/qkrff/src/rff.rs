//! Frequency sampling distributions and random feature maps.
//!
//! A surrogate model samples `D` frequencies from a distribution over the
//! kernel's support and learns on the resulting features. Separable
//! strategies (uniform, convolutional, truncated-convolutional) factor per
//! dimension and never materialize the full support; spectrum-aware
//! strategies (diagonal, square-root-diagonal, coefficient-aligned) weight
//! individual frequencies.
//!
//! Shift-invariant kernels use the cosine/sine pairs of [`TrigFeatureMap`];
//! non-stationary kernels use [`SpectralFeatureMap`], whose complex features
//! come from a reverse-Cholesky or eigen factorization of the kernel's
//! Fourier transform and reproduce the kernel in expectation.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::qsim::EncodingCircuit;
use crate::spectrum::{
    per_dim_frequency_sets, per_gate_difference_histograms, DiagonalDistribution, FactorKind,
    FourierTransform, FrequencySupport, SpectralFactorization,
};

/// Named construction strategies for sampling distributions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Uniform,
    Convolutional,
    TruncatedConvolutional,
    Diagonal,
    SqrtDiagonal,
    CoefficientAligned,
    Custom,
}

impl Strategy {
    pub fn parse(name: &str) -> Result<Strategy> {
        Ok(match name {
            "uniform" => Strategy::Uniform,
            "convolutional" => Strategy::Convolutional,
            "truncated-convolutional" => Strategy::TruncatedConvolutional,
            "diagonal" => Strategy::Diagonal,
            "sqrt-diagonal" => Strategy::SqrtDiagonal,
            "coefficient-aligned" => Strategy::CoefficientAligned,
            other => {
                return Err(Error::invalid(format!(
                    "unknown sampling strategy '{other}'"
                )))
            }
        })
    }
}

#[derive(Clone, Debug)]
struct DimPmf {
    freqs: Vec<i64>,
    probs: Vec<f64>,
}

#[derive(Clone, Debug)]
enum DistForm {
    /// Separable: one factor per input dimension.
    Product(Vec<DimPmf>),
    /// Explicit mass per frequency vector.
    Full {
        freqs: Vec<Vec<i64>>,
        probs: Vec<f64>,
        index: BTreeMap<Vec<i64>, usize>,
    },
}

/// A probability mass function over integer frequency vectors.
#[derive(Clone, Debug)]
pub struct SamplingDistribution {
    strategy: Strategy,
    denom: i64,
    form: DistForm,
}

fn normalize(probs: &mut [f64]) -> Result<()> {
    if probs.iter().any(|p| *p < 0.0) {
        return Err(Error::invalid("probabilities must be nonnegative"));
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("all-zero weight vector"));
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(())
}

impl SamplingDistribution {
    /// Uniform over the product support: each dimension uniform over its
    /// frequency set.
    pub fn uniform(per_dim: &[Vec<i64>], denom: i64) -> Result<Self> {
        let dims = per_dim
            .iter()
            .map(|set| {
                if set.is_empty() {
                    return Err(Error::invalid("empty per-dimension support"));
                }
                Ok(DimPmf {
                    freqs: set.clone(),
                    probs: vec![1.0 / set.len() as f64; set.len()],
                })
            })
            .collect::<Result<_>>()?;
        Ok(SamplingDistribution {
            strategy: Strategy::Uniform,
            denom,
            form: DistForm::Product(dims),
        })
    }

    pub fn uniform_for_circuit(circuit: &EncodingCircuit) -> Result<Self> {
        let (per_dim, denom) = per_dim_frequency_sets(circuit)?;
        Self::uniform(&per_dim, denom)
    }

    /// Per dimension, the discrete self-convolution of every encoding gate's
    /// eigenvalue-difference histogram. For maps with two unit-scale gates
    /// per dimension and layer this is a Pascal-triangle row.
    pub fn convolutional(circuit: &EncodingCircuit) -> Result<Self> {
        let (per_dim, denom) = per_dim_frequency_sets(circuit)?;
        let mut dims = Vec::with_capacity(per_dim.len());
        for j in 0..per_dim.len() {
            let hists = per_gate_difference_histograms(circuit, j, denom);
            let mut acc: BTreeMap<i64, f64> = BTreeMap::from([(0, 1.0)]);
            for hist in hists {
                let mut next: BTreeMap<i64, f64> = BTreeMap::new();
                for (a, pa) in &acc {
                    for (b, pb) in &hist {
                        *next.entry(a + b).or_insert(0.0) += pa * pb;
                    }
                }
                acc = next;
            }
            let freqs: Vec<i64> = acc.keys().copied().collect();
            let mut probs: Vec<f64> = acc.values().copied().collect();
            normalize(&mut probs)?;
            dims.push(DimPmf { freqs, probs });
        }
        Ok(SamplingDistribution {
            strategy: Strategy::Convolutional,
            denom,
            form: DistForm::Product(dims),
        })
    }

    /// Convolutional, restricted per dimension to `|ω_j| ≤ floor(max_j / 2)`
    /// and renormalized. Discards the upper half of each dimension's
    /// frequency range.
    pub fn truncated_convolutional(circuit: &EncodingCircuit) -> Result<Self> {
        let conv = Self::convolutional(circuit)?;
        let DistForm::Product(dims) = conv.form else {
            unreachable!("convolutional distributions are separable");
        };
        let truncated = dims
            .into_iter()
            .map(|dim| {
                let max = dim.freqs.iter().map(|w| w.abs()).max().unwrap_or(0);
                let cut = max / 2;
                let mut freqs = Vec::new();
                let mut probs = Vec::new();
                for (w, p) in dim.freqs.iter().zip(dim.probs.iter()) {
                    if w.abs() <= cut {
                        freqs.push(*w);
                        probs.push(*p);
                    }
                }
                normalize(&mut probs)?;
                Ok(DimPmf { freqs, probs })
            })
            .collect::<Result<_>>()?;
        Ok(SamplingDistribution {
            strategy: Strategy::TruncatedConvolutional,
            denom: conv.denom,
            form: DistForm::Product(truncated),
        })
    }

    /// The diagonal of the kernel's Fourier transform as a distribution.
    pub fn diagonal(q: &DiagonalDistribution) -> Result<Self> {
        Self::from_weights(Strategy::Diagonal, q.support(), q.probs().to_vec())
    }

    /// Mass proportional to `sqrt(q)`, the optimal alignment for
    /// hinge-loss surrogates.
    pub fn sqrt_diagonal(q: &DiagonalDistribution) -> Result<Self> {
        Self::from_weights(
            Strategy::SqrtDiagonal,
            q.support(),
            q.probs().iter().map(|v| v.sqrt()).collect(),
        )
    }

    /// Mass proportional to `|c_ω|` for a coefficient vector aligned with
    /// the support ordering.
    pub fn coefficient_aligned(support: &FrequencySupport, magnitudes: &[f64]) -> Result<Self> {
        if magnitudes.len() != support.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: magnitudes.len(),
            });
        }
        Self::from_weights(
            Strategy::CoefficientAligned,
            support,
            magnitudes.iter().map(|m| m.abs()).collect(),
        )
    }

    /// Arbitrary mass over an explicit frequency list.
    pub fn custom(freqs: Vec<Vec<i64>>, weights: Vec<f64>, denom: i64) -> Result<Self> {
        if freqs.len() != weights.len() || freqs.is_empty() {
            return Err(Error::invalid(
                "custom distribution needs matching, nonempty frequency and weight lists",
            ));
        }
        let mut probs = weights;
        normalize(&mut probs)?;
        let index = freqs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        Ok(SamplingDistribution {
            strategy: Strategy::Custom,
            denom,
            form: DistForm::Full {
                freqs,
                probs,
                index,
            },
        })
    }

    fn from_weights(
        strategy: Strategy,
        support: &FrequencySupport,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut probs = weights;
        normalize(&mut probs)?;
        let freqs: Vec<Vec<i64>> = support.freqs().to_vec();
        let index = freqs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        Ok(SamplingDistribution {
            strategy,
            denom: support.denom(),
            form: DistForm::Full {
                freqs,
                probs,
                index,
            },
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    pub fn dims(&self) -> usize {
        match &self.form {
            DistForm::Product(dims) => dims.len(),
            DistForm::Full { freqs, .. } => freqs[0].len(),
        }
    }

    /// Probability of one frequency vector.
    pub fn prob_of(&self, freq: &[i64]) -> f64 {
        match &self.form {
            DistForm::Product(dims) => {
                if freq.len() != dims.len() {
                    return 0.0;
                }
                dims.iter()
                    .zip(freq.iter())
                    .map(|(dim, w)| {
                        dim.freqs
                            .iter()
                            .position(|f| f == w)
                            .map(|i| dim.probs[i])
                            .unwrap_or(0.0)
                    })
                    .product()
            }
            DistForm::Full { index, probs, .. } => {
                index.get(freq).map(|i| probs[*i]).unwrap_or(0.0)
            }
        }
    }

    /// Largest single-frequency probability.
    pub fn p_max(&self) -> f64 {
        match &self.form {
            DistForm::Product(dims) => dims
                .iter()
                .map(|d| d.probs.iter().copied().fold(0.0, f64::max))
                .product(),
            DistForm::Full { probs, .. } => probs.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Total probability mass (1 up to roundoff; exposed for invariants).
    pub fn total_mass(&self) -> f64 {
        match &self.form {
            DistForm::Product(dims) => dims.iter().map(|d| d.probs.iter().sum::<f64>()).product(),
            DistForm::Full { probs, .. } => probs.iter().sum(),
        }
    }

    /// Number of frequency vectors with nonzero mass (product over
    /// dimensions for separable forms).
    pub fn support_size(&self) -> usize {
        match &self.form {
            DistForm::Product(dims) => dims.iter().map(|d| d.freqs.len()).product(),
            DistForm::Full { freqs, .. } => freqs.len(),
        }
    }

    /// Expand to a dense vector aligned with `support`'s ordering.
    /// Frequencies outside `support` are an error; frequencies of `support`
    /// missing here get zero mass.
    pub fn dense_over(&self, support: &FrequencySupport) -> Result<Vec<f64>> {
        let mut out = vec![0.0; support.len()];
        match &self.form {
            DistForm::Full { freqs, probs, .. } => {
                for (f, p) in freqs.iter().zip(probs.iter()) {
                    let i = support.index_of(f).ok_or_else(|| {
                        Error::invalid("distribution frequency missing from target support")
                    })?;
                    out[i] += p;
                }
            }
            DistForm::Product(_) => {
                for (i, f) in support.freqs().iter().enumerate() {
                    out[i] = self.prob_of(f);
                }
                let total: f64 = out.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "separable distribution puts mass outside the target support",
                    ));
                }
            }
        }
        Ok(out)
    }

    /// `count` i.i.d. frequency vectors.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Vec<Vec<i64>> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one(&self, rng: &mut impl Rng) -> Vec<i64> {
        match &self.form {
            DistForm::Product(dims) => dims
                .iter()
                .map(|dim| dim.freqs[categorical(&dim.probs, rng)])
                .collect(),
            DistForm::Full { freqs, probs, .. } => freqs[categorical(probs, rng)].clone(),
        }
    }
}

fn categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

// ---------------------------------------------------------------------------
// Trigonometric feature map
// ---------------------------------------------------------------------------

/// The cosine/sine pair feature map
/// `φ_D(x) = (cos(ω_1·x), sin(ω_1·x), …) / sqrt(D)`.
#[derive(Clone, Debug)]
pub struct TrigFeatureMap {
    freqs: Vec<Vec<i64>>,
    denom: i64,
}

impl TrigFeatureMap {
    pub fn new(freqs: Vec<Vec<i64>>, denom: i64) -> Self {
        TrigFeatureMap { freqs, denom }
    }

    pub fn d_samples(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[Vec<i64>] {
        &self.freqs
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    fn omega_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.freqs[i]
            .iter()
            .zip(x.iter())
            .map(|(w, xi)| *w as f64 * xi)
            .sum::<f64>()
            / self.denom as f64
    }

    /// `φ_D(x)`: length `2D`, every coordinate bounded by `1/sqrt(D)`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let d = self.freqs.len();
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = Vec::with_capacity(2 * d);
        for i in 0..d {
            let angle = self.omega_dot(i, x);
            out.push(scale * angle.cos());
            out.push(scale * angle.sin());
        }
        out
    }

    /// `z(x) = sqrt(D)·φ_D(x)`: raw cosine/sine entries in `[-1, 1]`, the
    /// featurization used by the constrained SVM solver.
    pub fn evaluate_unnormalized(&self, x: &[f64]) -> Vec<f64> {
        let d = self.freqs.len();
        let mut out = Vec::with_capacity(2 * d);
        for i in 0..d {
            let angle = self.omega_dot(i, x);
            out.push(angle.cos());
            out.push(angle.sin());
        }
        out
    }

    /// `⟨φ_D(x), φ_D(y)⟩ = (1/D) Σ cos(ω_i·(x-y))`.
    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.freqs.len();
        (0..d)
            .map(|i| (self.omega_dot(i, x) - self.omega_dot(i, y)).cos())
            .sum::<f64>()
            / d as f64
    }
}

// ---------------------------------------------------------------------------
// Factorization-based feature maps
// ---------------------------------------------------------------------------

/// Complex random features `g(n, x) = u_n† z(x)` sampled from a spectral
/// factorization `F = U diag(p) U†`. The approximate kernel
/// `s(x, y) = φ(y)† φ(x)` is an unbiased estimate of the true kernel.
#[derive(Clone, Debug)]
pub struct SpectralFeatureMap {
    kind: FactorKind,
    support: FrequencySupport,
    u: DMatrix<Complex64>,
    indices: Vec<usize>,
    /// Per-feature amplitude: `1/sqrt(D)` for sampled maps, `sqrt(p_n)` for
    /// the exact map.
    amplitudes: Vec<f64>,
}

impl SpectralFeatureMap {
    fn sampled(fact: &SpectralFactorization, d_samples: usize, rng: &mut impl Rng) -> Result<Self> {
        if d_samples == 0 {
            return Err(Error::invalid("need at least one feature sample"));
        }
        let mut probs = fact.weights().to_vec();
        normalize(&mut probs)?;
        let indices: Vec<usize> = (0..d_samples).map(|_| categorical(&probs, rng)).collect();
        let amp = 1.0 / (d_samples as f64).sqrt();
        Ok(SpectralFeatureMap {
            kind: fact.kind(),
            support: fact.support().clone(),
            u: fact.u().clone(),
            indices,
            amplitudes: vec![amp; d_samples],
        })
    }

    /// Deterministic map using every column with its own weight; reproduces
    /// the kernel exactly.
    pub fn exact(fact: &SpectralFactorization) -> Self {
        let n = fact.weights().len();
        SpectralFeatureMap {
            kind: fact.kind(),
            support: fact.support().clone(),
            u: fact.u().clone(),
            indices: (0..n).collect(),
            amplitudes: fact.weights().iter().map(|w| w.sqrt()).collect(),
        }
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn d_samples(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Upper bound on `|g(n, x)|` for column `n` (0-based): `sqrt(n+1)` for
    /// upper-triangular factors, `‖u_n‖₁` for eigenvectors.
    pub fn feature_bound(&self, n: usize) -> f64 {
        match self.kind {
            FactorKind::ReverseCholesky => ((n + 1) as f64).sqrt(),
            FactorKind::Eigen => self.u.column(n).iter().map(|v| v.norm()).sum(),
        }
    }

    fn z_vector(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.support.len())
            .map(|i| {
                let phase: f64 = self
                    .support
                    .freq_f64(i)
                    .iter()
                    .zip(x.iter())
                    .map(|(w, xi)| w * xi)
                    .sum();
                Complex64::from_polar(1.0, phase)
            })
            .collect()
    }

    /// Raw feature `g(n, x) = u_n† z(x)` for column `n`.
    pub fn g(&self, n: usize, x: &[f64]) -> Complex64 {
        let z = self.z_vector(x);
        self.g_from_z(n, &z)
    }

    fn g_from_z(&self, n: usize, z: &[Complex64]) -> Complex64 {
        // g(n, x) = ũ_n† z(x) where ũ = conj(U) factors the transform in the
        // z†(y) F z(x) orientation. Upper-triangular columns stop at row n.
        let rows = match self.kind {
            FactorKind::ReverseCholesky => n + 1,
            FactorKind::Eigen => self.u.nrows(),
        };
        (0..rows).map(|k| self.u[(k, n)] * z[k]).sum()
    }

    /// The complex feature vector `φ(x)`.
    pub fn evaluate_complex(&self, x: &[f64]) -> Vec<Complex64> {
        let z = self.z_vector(x);
        self.indices
            .iter()
            .zip(self.amplitudes.iter())
            .map(|(n, amp)| self.g_from_z(*n, &z) * amp)
            .collect()
    }

    /// Realified features: real and imaginary parts stacked, so that the
    /// Euclidean inner product of two feature vectors equals `Re s(x, y)`.
    pub fn evaluate_real(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.evaluate_complex(x);
        let mut out = Vec::with_capacity(2 * phi.len());
        for v in phi {
            out.push(v.re);
            out.push(v.im);
        }
        out
    }

    /// `s(x, y) = φ(y)† φ(x)`.
    pub fn approx_kernel(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let px = self.evaluate_complex(x);
        let py = self.evaluate_complex(y);
        px.iter().zip(py.iter()).map(|(a, b)| b.conj() * a).sum()
    }

    /// Real part of `s`; equal to averaging each feature with its conjugate
    /// partner, so the surrogate handed to learners is real.
    pub fn approx_kernel_re(&self, x: &[f64], y: &[f64]) -> f64 {
        self.approx_kernel(x, y).re
    }
}

/// Random feature approximation through the reverse Cholesky factorization.
pub fn approx_kernel_cholesky(
    transform: &FourierTransform,
    d_samples: usize,
    rng: &mut impl Rng,
) -> Result<SpectralFeatureMap> {
    let fact = transform.reverse_cholesky()?;
    SpectralFeatureMap::sampled(&fact, d_samples, rng)
}

/// Random feature approximation through the eigendecomposition.
pub fn approx_kernel_eigen(
    transform: &FourierTransform,
    d_samples: usize,
    rng: &mut impl Rng,
) -> Result<SpectralFeatureMap> {
    let fact = transform.eigen_factorization()?;
    SpectralFeatureMap::sampled(&fact, d_samples, rng)
}

/// Sample a map from an existing factorization (avoids refactorizing in
/// sweeps).
pub fn sample_feature_map(
    fact: &SpectralFactorization,
    d_samples: usize,
    rng: &mut impl Rng,
) -> Result<SpectralFeatureMap> {
    SpectralFeatureMap::sampled(fact, d_samples, rng)
}

/// Max and mean absolute pointwise error of a surrogate kernel over pairs.
#[derive(Clone, Copy, Debug)]
pub struct PointwiseError {
    pub max: f64,
    pub mean: f64,
}

pub fn pointwise_error<K>(
    kernel: K,
    map: &SpectralFeatureMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<PointwiseError>
where
    K: Fn(&[f64], &[f64]) -> f64,
{
    if pairs.is_empty() {
        return Err(Error::invalid("need at least one test pair"));
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for (x, y) in pairs {
        let s = map.approx_kernel(x, y);
        let err = (s - Complex64::new(kernel(x, y), 0.0)).norm();
        max = max.max(err);
        sum += err;
    }
    Ok(PointwiseError {
        max,
        mean: sum / pairs.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{derive_rng, ring_map, x_rotation_map};

    #[test]
    fn convolutional_matches_brute_force_and_pascal() {
        // ring(1, 1): two unit-scale gates on the one coordinate.
        let circuit = ring_map(1, 1, None).unwrap();
        let dist = SamplingDistribution::convolutional(&circuit).unwrap();

        // Brute force over the actual gate list: enumerate a bra and a ket
        // eigenvalue per gate and count the sums (integer arithmetic).
        let gates = circuit.data_gates_for_dim(0);
        let mut counts: BTreeMap<i64, u64> = BTreeMap::from([(0, 1)]);
        for _ in &gates {
            let mut next = BTreeMap::new();
            for (w, c) in &counts {
                for (delta, mult) in [(-1i64, 1u64), (0, 2), (1, 1)] {
                    *next.entry(w + delta).or_insert(0) += c * mult;
                }
            }
            counts = next;
        }
        let total: u64 = counts.values().sum();
        assert_eq!(total, 16);
        for (w, c) in &counts {
            let expected = *c as f64 / total as f64;
            assert!(
                (dist.prob_of(&[*w]) - expected).abs() < 1e-15,
                "freq {w}: {} vs {expected}",
                dist.prob_of(&[*w])
            );
        }
        // Pascal row with 5 entries: (1, 4, 6, 4, 1)/16.
        assert!((dist.prob_of(&[0]) - 6.0 / 16.0).abs() < 1e-15);
        assert!((dist.prob_of(&[2]) - 1.0 / 16.0).abs() < 1e-15);
        assert!((dist.prob_of(&[-1]) - 4.0 / 16.0).abs() < 1e-15);
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_probability_is_inverse_support_size() {
        let circuit = ring_map(2, 1, None).unwrap();
        let dist = SamplingDistribution::uniform_for_circuit(&circuit).unwrap();
        assert_eq!(dist.support_size(), 25);
        assert!((dist.prob_of(&[1, -2]) - 1.0 / 25.0).abs() < 1e-15);
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_keeps_lower_half_and_renormalizes() {
        let circuit = ring_map(1, 1, None).unwrap(); // per-dim {-2..2}
        let dist = SamplingDistribution::truncated_convolutional(&circuit).unwrap();
        // floor(2/2) = 1: keep {-1, 0, 1} with conv weights (4, 6, 4)/14.
        assert_eq!(dist.support_size(), 3);
        assert!((dist.prob_of(&[0]) - 6.0 / 14.0).abs() < 1e-15);
        assert!((dist.prob_of(&[1]) - 4.0 / 14.0).abs() < 1e-15);
        assert_eq!(dist.prob_of(&[2]), 0.0);
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);

        // Support at most ceil(half) of the full per-dim support.
        let full = SamplingDistribution::convolutional(&circuit).unwrap();
        assert!(dist.support_size() <= full.support_size().div_ceil(2));
    }

    #[test]
    fn sqrt_diagonal_of_delta_is_delta() {
        let support = FrequencySupport::from_per_dim(vec![vec![-1, 0, 1]], 1).unwrap();
        let mut q = vec![0.0; 3];
        q[support.index_of(&[0]).unwrap()] = 1.0;
        let q = DiagonalDistribution::new(support.clone(), q).unwrap();
        let dist = SamplingDistribution::sqrt_diagonal(&q).unwrap();
        assert!((dist.prob_of(&[0]) - 1.0).abs() < 1e-15);
        let mut rng = derive_rng(1, &[]);
        assert!(dist.sample(32, &mut rng).iter().all(|f| f == &vec![0]));
    }

    #[test]
    fn sampling_frequencies_concentrates_to_probabilities() {
        // Uniform over 25, 1e5 draws, each within 3 sigma of 1/25.
        let circuit = ring_map(2, 1, None).unwrap();
        let dist = SamplingDistribution::uniform_for_circuit(&circuit).unwrap();
        let mut rng = derive_rng(2, &[]);
        let n = 100_000usize;
        let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        for f in dist.sample(n, &mut rng) {
            *counts.entry(f).or_insert(0) += 1;
        }
        let p = 1.0 / 25.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert_eq!(counts.len(), 25);
        for c in counts.values() {
            assert!((*c as f64 / n as f64 - p).abs() < 3.5 * sigma);
        }

        // SqrtDiagonal of (1/2, 1/4, 1/4): (0.414, 0.293, 0.293).
        let support = FrequencySupport::from_per_dim(vec![vec![-1, 0, 1]], 1).unwrap();
        let mut q = vec![0.0; 3];
        q[support.index_of(&[0]).unwrap()] = 0.5;
        q[support.index_of(&[1]).unwrap()] = 0.25;
        q[support.index_of(&[-1]).unwrap()] = 0.25;
        let q = DiagonalDistribution::new(support.clone(), q).unwrap();
        let dist = SamplingDistribution::sqrt_diagonal(&q).unwrap();
        let norm = 0.5f64.sqrt() + 2.0 * 0.25f64.sqrt();
        let expect0 = 0.5f64.sqrt() / norm;
        let expect1 = 0.25f64.sqrt() / norm;
        assert!((dist.prob_of(&[0]) - expect0).abs() < 1e-12);
        let mut rng = derive_rng(3, &[]);
        let n = 100_000usize;
        let samples = dist.sample(n, &mut rng);
        let c0 = samples.iter().filter(|f| f == &&vec![0]).count() as f64 / n as f64;
        let c1 = samples.iter().filter(|f| f == &&vec![1]).count() as f64 / n as f64;
        let s0 = (expect0 * (1.0 - expect0) / n as f64).sqrt();
        let s1 = (expect1 * (1.0 - expect1) / n as f64).sqrt();
        assert!((c0 - expect0).abs() < 3.5 * s0);
        assert!((c1 - expect1).abs() < 3.5 * s1);
    }

    #[test]
    fn trig_map_fixed_points() {
        let map = TrigFeatureMap::new(vec![vec![1], vec![2], vec![3]], 1);
        let at_zero = map.evaluate(&[0.0]);
        let scale = 1.0 / 3.0f64.sqrt();
        for i in 0..3 {
            assert!((at_zero[2 * i] - scale).abs() < 1e-15);
            assert!(at_zero[2 * i + 1].abs() < 1e-15);
        }

        let map = TrigFeatureMap::new(vec![vec![1]], 1);
        let phi = map.evaluate(&[std::f64::consts::FRAC_PI_2]);
        assert!(phi[0].abs() < 1e-15);
        assert!((phi[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_sample_maps_are_unbiased_for_shift_invariant_kernels() {
        // E over D=1 maps of φ(x)·φ(y) = Σ p_ω cos(ω·(x-y)).
        let support = FrequencySupport::from_per_dim(vec![vec![-1, 0, 1]], 1).unwrap();
        let mut q = vec![0.0; 3];
        q[support.index_of(&[0]).unwrap()] = 0.5;
        q[support.index_of(&[1]).unwrap()] = 0.25;
        q[support.index_of(&[-1]).unwrap()] = 0.25;
        let qd = DiagonalDistribution::new(support, q).unwrap();
        let dist = SamplingDistribution::diagonal(&qd).unwrap();
        let (x, y) = ([0.7f64], [2.1f64]);
        let expected = 0.5 + 0.5 * (x[0] - y[0]).cos();

        let reps = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for i in 0..reps {
            let mut rng = derive_rng(500, &[i as u64]);
            let map = TrigFeatureMap::new(dist.sample(1, &mut rng), dist.denom());
            let v = map.approx_kernel(&x, &y);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / reps as f64;
        let se = ((sum_sq / reps as f64 - mean * mean) / reps as f64).sqrt();
        assert!(
            (mean - expected).abs() < 4.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn diagonal_transform_reduces_to_complex_exponential_features() {
        // For shift-invariant kernels U is the identity, so g(n, x) is the
        // bare complex exponential and both algorithms share one law.
        let ft = FourierTransform::of_circuit(&x_rotation_map()).unwrap();
        let mut rng = derive_rng(9, &[]);
        let chol = approx_kernel_cholesky(&ft, 8, &mut rng).unwrap();
        let eig = approx_kernel_eigen(&ft, 8, &mut rng).unwrap();
        let x = [1.234];
        for map in [&chol, &eig] {
            for n in 0..ft.support().len() {
                let omega = ft.support().freq_f64(n)[0];
                let expected = Complex64::from_polar(1.0, omega * x[0]);
                assert!((map.g(n, &x) - expected).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn feature_bounds_hold_for_both_factorizations() {
        let ft = FourierTransform::of_circuit(&ring_map(2, 1, None).unwrap()).unwrap();
        let n_support = ft.support().len();
        let chol = SpectralFeatureMap::exact(&ft.reverse_cholesky().unwrap());
        let eig = SpectralFeatureMap::exact(&ft.eigen_factorization().unwrap());
        let mut rng = derive_rng(13, &[]);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            for n in 0..n_support {
                assert!(chol.g(n, &x).norm() <= chol.feature_bound(n) + 1e-9);
                assert!(eig.g(n, &x).norm() <= eig.feature_bound(n) + 1e-9);
            }
        }
    }

    #[test]
    fn exact_maps_reproduce_the_kernel() {
        let circuit = ring_map(1, 1, None).unwrap();
        let ft = FourierTransform::of_circuit(&circuit).unwrap();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = {
            let mut rng = derive_rng(15, &[]);
            (0..10)
                .map(|_| {
                    (
                        vec![rng.gen_range(0.0..std::f64::consts::TAU)],
                        vec![rng.gen_range(0.0..std::f64::consts::TAU)],
                    )
                })
                .collect()
        };
        for fact in [
            ft.reverse_cholesky().unwrap(),
            ft.eigen_factorization().unwrap(),
        ] {
            let map = SpectralFeatureMap::exact(&fact);
            let err = pointwise_error(|x, y| circuit.kernel(x, y).unwrap(), &map, &pairs).unwrap();
            assert!(err.max < 1e-8, "exact map error {}", err.max);
            // Imaginary residue vanishes once conjugate columns combine.
            for (x, y) in &pairs {
                assert!(map.approx_kernel(x, y).im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_samples_is_an_error() {
        let ft = FourierTransform::of_circuit(&x_rotation_map()).unwrap();
        let mut rng = derive_rng(1, &[]);
        assert!(approx_kernel_cholesky(&ft, 0, &mut rng).is_err());
    }

    #[test]
    fn median_error_decreases_with_more_features() {
        let circuit = ring_map(1, 1, None).unwrap();
        let ft = FourierTransform::of_circuit(&circuit).unwrap();
        let fact = ft.reverse_cholesky().unwrap();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = {
            let mut rng = derive_rng(21, &[]);
            (0..10)
                .map(|_| {
                    (
                        vec![rng.gen_range(0.0..std::f64::consts::TAU)],
                        vec![rng.gen_range(0.0..std::f64::consts::TAU)],
                    )
                })
                .collect()
        };
        let kernel = |x: &[f64], y: &[f64]| circuit.kernel(x, y).unwrap();
        let grid = [50usize, 200, 1000, 4000];
        let mut medians = Vec::new();
        for (gi, d) in grid.iter().enumerate() {
            let mut errs: Vec<f64> = (0..21)
                .map(|seed| {
                    let mut rng = derive_rng(600 + seed, &[gi as u64]);
                    let map = sample_feature_map(&fact, *d, &mut rng).unwrap();
                    pointwise_error(kernel, &map, &pairs).unwrap().max
                })
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(errs[errs.len() / 2]);
        }
        for w in medians.windows(2) {
            assert!(
                w[1] < w[0],
                "medians should decrease along the D grid: {medians:?}"
            );
        }
    }

    #[test]
    fn unbiasedness_of_single_feature_spectral_maps() {
        let ft = FourierTransform::of_circuit(&x_rotation_map()).unwrap();
        let circuit = x_rotation_map();
        let (x, y) = (vec![0.9], vec![2.4]);
        let k = circuit.kernel(&x, &y).unwrap();
        for (tag, fact) in [
            (0u64, ft.reverse_cholesky().unwrap()),
            (1u64, ft.eigen_factorization().unwrap()),
        ] {
            let reps = 10_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for i in 0..reps {
                let mut rng = derive_rng(700, &[tag, i as u64]);
                let map = sample_feature_map(&fact, 1, &mut rng).unwrap();
                let v = map.approx_kernel_re(&x, &y);
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / reps as f64;
            let se = ((sum_sq / reps as f64 - mean * mean).max(0.0) / reps as f64).sqrt();
            assert!(
                (mean - k).abs() < 4.0 * se + 1e-12,
                "mean {mean} vs k {k} (se {se})"
            );
        }
    }

    #[test]
    fn custom_rejects_zero_mass() {
        assert!(SamplingDistribution::custom(vec![vec![0]], vec![0.0], 1).is_err());
    }
}
