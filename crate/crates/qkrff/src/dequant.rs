//! Quantities behind the sufficient conditions for replacing a quantum
//! kernel model with a random-feature surrogate.
//!
//! Three families of diagnostics:
//!
//! - **Concentration** — `1/p_max` of the sampling distribution, and the
//!   square-root mass `Σ√q` of the kernel's diagonal distribution (whose
//!   logarithm is the 1/2-Rényi entropy). Small values mean the spectrum is
//!   concentrated and easy to cover by sampling.
//! - **Alignment** — the spectral norm `‖diag(p)^{-1/2} F^{1/2}‖` between a
//!   sampling distribution and the kernel's transform, the aligned
//!   distributions `p ∝ √q` and `p ∝ |c|`, and the RKHS norm of a target
//!   function against the kernel.
//! - **Budgets** — sample-complexity estimates for ridge regression with
//!   random features, and the shot-noise bound quantity
//!   `yᵀ(K + λI)⁻¹ y` in exact and finite-shot form.
//!
//! All report-facing functions are total: out-of-space inputs produce an
//! infinity sentinel rather than an error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qsim::{estimate_with_shots, Shots};
use crate::rff::SamplingDistribution;
use crate::spectrum::{matrix_sqrt_psd, DiagonalDistribution, FourierTransform, FrequencySupport};

// ---------------------------------------------------------------------------
// Fourier-series target functions
// ---------------------------------------------------------------------------

/// A real-valued function given by a finite Fourier series
/// `f(x) = Σ c_ω e^{iω·x}` with conjugate-symmetric coefficients.
///
/// Terms are stored sparsely so synthetic targets over large supports stay
/// cheap to evaluate.
#[derive(Clone, Debug)]
pub struct FourierFunction {
    dims: usize,
    denom: i64,
    terms: Vec<(Vec<i64>, Complex64)>,
}

impl FourierFunction {
    pub fn new(dims: usize, denom: i64, terms: Vec<(Vec<i64>, Complex64)>) -> Result<Self> {
        if dims == 0 || denom <= 0 {
            return Err(Error::invalid("function needs dims ≥ 1 and denom ≥ 1"));
        }
        let mut merged: BTreeMap<Vec<i64>, Complex64> = BTreeMap::new();
        for (freq, c) in terms {
            if freq.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    got: freq.len(),
                });
            }
            *merged.entry(freq).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        for (freq, c) in &merged {
            let neg: Vec<i64> = freq.iter().map(|w| -w).collect();
            let partner = merged
                .get(&neg)
                .copied()
                .unwrap_or(Complex64::new(0.0, 0.0));
            if (partner - c.conj()).norm() > 1e-12 {
                return Err(Error::invalid(
                    "coefficients must satisfy c(-ω) = conj(c(ω)) for a real function",
                ));
            }
        }
        let norm2 = |f: &[i64]| -> i64 { f.iter().map(|w| w * w).sum() };
        let mut terms: Vec<(Vec<i64>, Complex64)> = merged.into_iter().collect();
        terms.sort_by(|a, b| norm2(&a.0).cmp(&norm2(&b.0)).then_with(|| a.0.cmp(&b.0)));
        Ok(FourierFunction { dims, denom, terms })
    }

    /// Random target supported on `|ω_j| ≤ max_freq` with `n_terms`
    /// conjugate pairs of Gaussian coefficients.
    pub fn random_low_frequency(
        dims: usize,
        max_freq: i64,
        n_terms: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut terms: Vec<(Vec<i64>, Complex64)> = Vec::new();
        let mut tries = 0;
        while terms.len() < 2 * n_terms && tries < 100 * n_terms {
            tries += 1;
            let freq: Vec<i64> = (0..dims)
                .map(|_| rng.gen_range(-max_freq..=max_freq))
                .collect();
            if freq.iter().all(|w| *w == 0) {
                continue;
            }
            if terms.iter().any(|(f, _)| f == &freq) {
                continue;
            }
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let neg: Vec<i64> = freq.iter().map(|w| -w).collect();
            terms.push((freq, c));
            terms.push((neg, c.conj()));
        }
        if terms.is_empty() {
            return Err(Error::invalid("failed to draw any nonzero frequency"));
        }
        FourierFunction::new(dims, 1, terms)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn denom(&self) -> i64 {
        self.denom
    }

    pub fn terms(&self) -> &[(Vec<i64>, Complex64)] {
        &self.terms
    }

    /// `f(x)`, guaranteed real by conjugate symmetry.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let value: Complex64 = self
            .terms
            .iter()
            .map(|(freq, c)| {
                let phase: f64 = freq
                    .iter()
                    .zip(x.iter())
                    .map(|(w, xi)| *w as f64 * xi)
                    .sum::<f64>()
                    / self.denom as f64;
                c * Complex64::from_polar(1.0, phase)
            })
            .sum();
        debug_assert!(value.im.abs() < 1e-10);
        value.re
    }

    /// Coefficient vector aligned with a support's ordering; frequencies
    /// outside the support are an error.
    pub fn dense_over(&self, support: &FrequencySupport) -> Result<Vec<Complex64>> {
        if support.dims() != self.dims || support.denom() != self.denom {
            return Err(Error::invalid(
                "function and support live on different grids",
            ));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); support.len()];
        for (freq, c) in &self.terms {
            let i = support
                .index_of(freq)
                .ok_or_else(|| Error::invalid("function frequency missing from support"))?;
            out[i] = *c;
        }
        Ok(out)
    }

    /// `Σ |c_ω|` over all terms.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm()).sum()
    }

    pub fn coefficient_l2(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, c)| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

// ---------------------------------------------------------------------------
// Concentration measures
// ---------------------------------------------------------------------------

/// `1 / max_ω p_ω`: small values mean the distribution is concentrated.
pub fn pmax_inverse(p: &SamplingDistribution) -> f64 {
    1.0 / p.p_max()
}

/// `Σ √q_ω`: ranges from 1 (delta spectrum) to `√|Ω|` (uniform spectrum).
pub fn sqrt_sum_concentration(q: &DiagonalDistribution) -> f64 {
    q.probs().iter().map(|v| v.sqrt()).sum()
}

/// The 1/2-Rényi entropy `2 log Σ√q`.
pub fn renyi_half(q: &DiagonalDistribution) -> f64 {
    2.0 * sqrt_sum_concentration(q).ln()
}

// ---------------------------------------------------------------------------
// Alignment measures
// ---------------------------------------------------------------------------

/// Spectral norm of `diag(p)^{-1/2} F^{1/2}`.
///
/// Rows where `p` vanishes are dropped when the corresponding row of
/// `F^{1/2}` carries no mass; if `p` vanishes where `F` has mass the result
/// is the infinity sentinel.
pub fn alignment_norm(p_dense: &[f64], transform: &FourierTransform) -> Result<f64> {
    let n = transform.support().len();
    if p_dense.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p_dense.len(),
        });
    }
    let root = matrix_sqrt_psd(transform.matrix())?;
    let mut keep = Vec::with_capacity(n);
    for i in 0..n {
        let row_mass: f64 = (0..n).map(|j| root[(i, j)].norm()).sum();
        if p_dense[i] > 0.0 {
            keep.push(i);
        } else if row_mass > 1e-10 {
            return Ok(f64::INFINITY);
        }
    }
    let mut scaled = DMatrix::<Complex64>::zeros(keep.len(), n);
    for (r, &i) in keep.iter().enumerate() {
        let inv = 1.0 / p_dense[i].sqrt();
        for j in 0..n {
            scaled[(r, j)] = root[(i, j)] * inv;
        }
    }
    let gram = scaled.adjoint() * &scaled;
    let top = gram.symmetric_eigen().eigenvalues.max();
    Ok(top.max(0.0).sqrt())
}

/// RKHS norm of a coefficient vector against a kernel transform: the
/// minimum-norm solution of `M a = c` with `M = U diag(√p)` from the reverse
/// Cholesky factorization. Coefficients outside the column space of `F^{1/2}`
/// give the infinity sentinel (the function is not in the RKHS).
pub fn rkhs_norm(c: &[Complex64], transform: &FourierTransform) -> Result<f64> {
    let n = transform.support().len();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.len(),
        });
    }
    let fact = transform.reverse_cholesky()?;
    // conj(U) diag(sqrt p) factors the transform in the z†(y) F z(x)
    // orientation that coefficient vectors live in.
    let mut m = fact.u().map(|v| v.conj());
    for (j, w) in fact.weights().iter().enumerate() {
        let s = w.sqrt();
        for i in 0..n {
            m[(i, j)] *= s;
        }
    }
    let cv = DVector::from_column_slice(c);
    let svd = m.clone().svd(true, true);
    let a = svd
        .solve(&cv, 1e-12)
        .map_err(|e| Error::numeric(format!("least-squares solve failed: {e}")))?;
    let residual = (&m * &a - &cv)
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max);
    if residual > 1e-8 {
        return Ok(f64::INFINITY);
    }
    Ok(a.norm())
}

/// Convenience wrapper for a sparse Fourier function.
pub fn rkhs_norm_of_function(f: &FourierFunction, transform: &FourierTransform) -> Result<f64> {
    match f.dense_over(transform.support()) {
        Ok(c) => rkhs_norm(&c, transform),
        // Frequencies outside the support: not in the RKHS.
        Err(_) => Ok(f64::INFINITY),
    }
}

/// `Σ |c_ω|`, the Fourier sum of a target function.
pub fn fourier_sum(f: &FourierFunction) -> f64 {
    f.coefficient_l1()
}

/// The distribution `p ∝ |c_ω|` aligned with a target function's spectrum.
pub fn aligned_distribution(f: &FourierFunction) -> Result<SamplingDistribution> {
    let freqs: Vec<Vec<i64>> = f.terms().iter().map(|(w, _)| w.clone()).collect();
    let weights: Vec<f64> = f.terms().iter().map(|(_, c)| c.norm()).collect();
    SamplingDistribution::custom(freqs, weights, f.denom())
}

/// The optimizer `p* ∝ √q` of `min_p max_i √q_i / p_i`, with its value
/// `C₁ = Σ √q_i`; at the optimum `min_i p*_i / √q_i = 1/C₁`.
pub fn optimal_sqrt_distribution(q: &DiagonalDistribution) -> Result<(SamplingDistribution, f64)> {
    let c1 = sqrt_sum_concentration(q);
    let dist = SamplingDistribution::sqrt_diagonal(q)?;
    Ok((dist, c1))
}

/// `min over q_i > 0 of p_i / √q_i`, the quantity the square-root
/// distribution maximizes.
pub fn sqrt_alignment_value(p_dense: &[f64], q: &DiagonalDistribution) -> f64 {
    p_dense
        .iter()
        .zip(q.probs().iter())
        .filter(|(_, qi)| **qi > 0.0)
        .map(|(pi, qi)| pi / qi.sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// `Σ c_i² / p_i`, the weighted-coefficient objective minimized by the
/// aligned distribution `p ∝ |c|`.
pub fn coefficient_weighted_objective(f: &FourierFunction, p: &SamplingDistribution) -> f64 {
    f.terms()
        .iter()
        .map(|(freq, c)| {
            let pw = p.prob_of(freq);
            if pw <= 0.0 {
                f64::INFINITY
            } else {
                c.norm_sqr() / pw
            }
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Sample complexity
// ---------------------------------------------------------------------------

/// Inputs for the ridge-regression sample-complexity estimate: the RKHS-norm
/// bound `s1`, the alignment bound `s2`, the feature bound `kappa`, the
/// label bound `b`, the peak sampling probability `p_max` (standing in for
/// the kernel integral operator norm, proportionality constant taken as 1),
/// and the failure/accuracy targets.
#[derive(Clone, Copy, Debug)]
pub struct ComplexityInputs {
    pub s1: f64,
    pub s2: f64,
    pub kappa: f64,
    pub b: f64,
    pub p_max: f64,
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComplexityEstimate {
    pub b_bar: f64,
    pub sigma_bar: f64,
    pub c0: f64,
    pub c1: f64,
    pub m0: f64,
    pub m_min: f64,
    pub d_min: f64,
}

/// Data and feature counts sufficient for random-feature ridge regression
/// to match the kernel model within `epsilon`, with probability `1 - delta`.
pub fn regression_sample_complexity(inp: &ComplexityInputs) -> Result<ComplexityEstimate> {
    if inp.s1 <= 0.0 || inp.s2 <= 0.0 || inp.kappa <= 0.0 || inp.b <= 0.0 || inp.p_max <= 0.0 {
        return Err(Error::invalid("complexity inputs must be positive"));
    }
    if !(0.0..1.0).contains(&inp.delta)
        || !(0.0..1.0).contains(&inp.epsilon)
        || inp.delta == 0.0
        || inp.epsilon == 0.0
    {
        return Err(Error::invalid("delta and epsilon must lie in (0, 1)"));
    }
    let s12 = (inp.s1 * inp.s2).max(1.0);
    let kappa = inp.kappa;
    let b_bar = 2.0 * inp.b + 2.0 * kappa * s12;
    let sigma_bar = 2.0 * inp.b + 2.0 * kappa * s12.sqrt();
    let t_norm = inp.p_max;
    let m0 = (4.0 * t_norm * t_norm)
        .max((264.0 * kappa * kappa * (556.0 * kappa.powi(3) / inp.delta).ln()).powi(2));
    let c0 = 9.0 * (3.0 + 4.0 * kappa * kappa + 4.0 * kappa * kappa / t_norm + kappa.powi(4) / 4.0);
    let c1 = 8.0 * (b_bar * kappa + sigma_bar * kappa + s12);
    let accuracy_floor = (c1 * (1.0 / inp.delta).ln().powi(2) / inp.epsilon).powi(2);
    let m_min = m0.max(accuracy_floor);
    let d_min = c0 * m_min.sqrt() * (108.0 * kappa * kappa * m_min.sqrt() / inp.delta).ln();
    Ok(ComplexityEstimate {
        b_bar,
        sigma_bar,
        c0,
        c1,
        m0,
        m_min,
        d_min,
    })
}

// ---------------------------------------------------------------------------
// Shot-noise bound quantity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShotNoiseBound {
    pub exact: f64,
    pub noisy: f64,
}

/// `yᵀ(K + λI)⁻¹ y` with the exact Gram matrix and with a finite-shot
/// binomial resample of it (PSD-repaired). The sign of `noisy - exact` is
/// condition-dependent; both values are reported.
pub fn shot_noise_bound_quantity(
    k: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    shots: Shots,
    rng: &mut impl Rng,
) -> Result<ShotNoiseBound> {
    if lambda <= 0.0 {
        return Err(Error::invalid("bound quantity needs lambda > 0"));
    }
    let m = k.nrows();
    if k.ncols() != m || y.len() != m {
        return Err(Error::invalid("gram matrix and labels disagree"));
    }
    let quad = |mat: &DMatrix<f64>| -> Result<f64> {
        let mut reg = mat.clone();
        for i in 0..m {
            reg[(i, i)] += lambda;
        }
        let chol = reg
            .cholesky()
            .ok_or_else(|| Error::numeric("regularized gram matrix is singular"))?;
        let yv = DVector::from_column_slice(y);
        let sol = chol.solve(&yv);
        Ok(yv.dot(&sol))
    };
    let exact = quad(k)?;
    let noisy = match shots {
        Shots::Infinite => exact,
        Shots::Finite(t) => {
            let mut sampled = DMatrix::<f64>::identity(m, m);
            for i in 0..m {
                for j in (i + 1)..m {
                    let truth = k[(i, j)].clamp(0.0, 1.0);
                    let est = estimate_with_shots(truth, t, rng)?;
                    sampled[(i, j)] = est;
                    sampled[(j, i)] = est;
                }
            }
            let (repaired, _) = crate::learners::psd_repair(&sampled);
            quad(&repaired)?
        }
    };
    Ok(ShotNoiseBound { exact, noisy })
}

// ---------------------------------------------------------------------------
// Condition reports
// ---------------------------------------------------------------------------

/// One evaluated condition. `value` is `null` in JSON when the quantity is
/// the infinity sentinel (`finite = false`).
#[derive(Clone, Debug, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub value: f64,
    pub finite: bool,
    pub threshold_expression: String,
    pub satisfied_at_budget: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionEntry>,
    pub provenance: BTreeMap<String, String>,
    pub poly_budget: Option<f64>,
}

impl ConditionReport {
    fn push(&mut self, name: &str, value: f64, threshold: &str) {
        let satisfied = self.poly_budget.map(|b| value.is_finite() && value <= b);
        self.conditions.push(ConditionEntry {
            name: name.to_string(),
            value,
            finite: value.is_finite(),
            threshold_expression: threshold.to_string(),
            satisfied_at_budget: satisfied,
        });
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>16} {:<24} {}\n",
            "condition", "value", "threshold", "within budget"
        ));
        for c in &self.conditions {
            let value = if c.finite {
                format!("{:.6}", c.value)
            } else {
                "inf".to_string()
            };
            let ok = match c.satisfied_at_budget {
                Some(true) => "yes",
                Some(false) => "no",
                None => "-",
            };
            out.push_str(&format!(
                "{:<28} {:>16} {:<24} {}\n",
                c.name, value, c.threshold_expression, ok
            ));
        }
        out
    }
}

/// Everything a condition report can be computed from; any subset may be
/// present and only the evaluable conditions are emitted.
#[derive(Default)]
pub struct ConditionInputs<'a> {
    pub sampling: Option<&'a SamplingDistribution>,
    pub diagonal: Option<&'a DiagonalDistribution>,
    pub transform: Option<&'a FourierTransform>,
    pub function: Option<&'a FourierFunction>,
}

pub fn condition_report(
    inputs: &ConditionInputs<'_>,
    poly_budget: Option<f64>,
) -> Result<ConditionReport> {
    let mut report = ConditionReport {
        poly_budget,
        ..ConditionReport::default()
    };
    if let Some(p) = inputs.sampling {
        report.provenance.insert(
            "sampling_distribution".into(),
            format!("{:?} over {} frequencies", p.strategy(), p.support_size()),
        );
        report.push("pmax_inverse", pmax_inverse(p), "poly(d)");
    }
    if let Some(q) = inputs.diagonal {
        report.provenance.insert(
            "diagonal_distribution".into(),
            format!("{} frequencies", q.probs().len()),
        );
        report.push(
            "sqrt_sum_concentration",
            sqrt_sum_concentration(q),
            "poly(d)",
        );
        report.push("renyi_half_entropy", renyi_half(q), "log poly(d)");
    }
    if let (Some(p), Some(ft)) = (inputs.sampling, inputs.transform) {
        let dense = p.dense_over(ft.support())?;
        report.push("alignment_norm", alignment_norm(&dense, ft)?, "poly(d)");
    }
    if let (Some(f), Some(ft)) = (inputs.function, inputs.transform) {
        report.push("rkhs_norm", rkhs_norm_of_function(f, ft)?, "poly(d)");
    }
    if let Some(f) = inputs.function {
        report.provenance.insert(
            "target_function".into(),
            format!("{} fourier terms", f.terms().len()),
        );
        report.push("fourier_sum", fourier_sum(f), "poly(d)");
    }
    if let Some(ft) = inputs.transform {
        report.provenance.insert(
            "fourier_transform".into(),
            format!("{} x {} matrix", ft.support().len(), ft.support().len()),
        );
    }
    if report.conditions.is_empty() {
        return Err(Error::invalid(
            "no condition inputs provided (need a distribution, transform or coefficients)",
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{derive_rng, x_rotation_map};
    use crate::spectrum::eigen_factorization_matrix;

    fn support_1d(k: i64) -> FrequencySupport {
        FrequencySupport::from_per_dim(vec![(-k..=k).collect()], 1).unwrap()
    }

    fn diagonal_q(values: &[(i64, f64)], k: i64) -> DiagonalDistribution {
        let support = support_1d(k);
        let mut q = vec![0.0; support.len()];
        for (w, p) in values {
            q[support.index_of(&[*w]).unwrap()] = *p;
        }
        DiagonalDistribution::new(support, q).unwrap()
    }

    #[test]
    fn pmax_inverse_examples() {
        let delta = diagonal_q(&[(0, 1.0)], 1);
        let p = SamplingDistribution::diagonal(&delta).unwrap();
        assert_eq!(pmax_inverse(&p), 1.0);

        let support = support_1d(2);
        let uniform = SamplingDistribution::uniform(support.per_dim(), 1).unwrap();
        assert!((pmax_inverse(&uniform) - 5.0).abs() < 1e-12);

        let q = diagonal_q(&[(0, 0.5), (1, 0.25), (-1, 0.25)], 1);
        let sqrt = SamplingDistribution::sqrt_diagonal(&q).unwrap();
        let expected = (0.5f64.sqrt() + 2.0 * 0.5) / 0.5f64.sqrt();
        assert!((pmax_inverse(&sqrt) - expected).abs() < 1e-12);
        assert!((pmax_inverse(&sqrt) - 2.414).abs() < 1e-3);
    }

    #[test]
    fn sqrt_sum_endpoints() {
        let delta = diagonal_q(&[(0, 1.0)], 3);
        assert_eq!(sqrt_sum_concentration(&delta), 1.0);
        assert_eq!(renyi_half(&delta), 0.0);

        let n = 25;
        let support = support_1d(12);
        let q = DiagonalDistribution::new(support, vec![1.0 / n as f64; n]).unwrap();
        assert!((sqrt_sum_concentration(&q) - (n as f64).sqrt()).abs() < 1e-12);

        let two = diagonal_q(&[(1, 0.5), (-1, 0.5)], 1);
        assert!((sqrt_sum_concentration(&two) - 2.0f64.sqrt()).abs() < 1e-15);
    }

    fn diagonal_transform(values: &[(i64, f64)], k: i64) -> FourierTransform {
        let support = support_1d(k);
        let mut m = DMatrix::<Complex64>::zeros(support.len(), support.len());
        for (w, p) in values {
            let i = support.index_of(&[*w]).unwrap();
            m[(i, i)] = Complex64::new(*p, 0.0);
        }
        FourierTransform::from_matrix(support, m).unwrap()
    }

    #[test]
    fn alignment_norm_diagonal_cases() {
        // p = diag(F) is perfectly aligned.
        let ft = diagonal_transform(&[(0, 0.5), (1, 0.25), (-1, 0.25)], 1);
        let q = ft.diagonal().unwrap();
        let p = SamplingDistribution::diagonal(&q).unwrap();
        let dense = p.dense_over(ft.support()).unwrap();
        assert!((alignment_norm(&dense, &ft).unwrap() - 1.0).abs() < 1e-10);

        // Misaligned diagonal: max sqrt(q_i / p_i) = sqrt(5).
        let ft = diagonal_transform(&[(1, 0.5), (-1, 0.5)], 1);
        let mut dense = vec![0.0; 3];
        dense[ft.support().index_of(&[1]).unwrap()] = 0.9;
        dense[ft.support().index_of(&[-1]).unwrap()] = 0.1;
        let got = alignment_norm(&dense, &ft).unwrap();
        assert!((got - 5.0f64.sqrt()).abs() < 1e-10);

        // Zero probability where F has mass: infinity sentinel.
        let mut dense = vec![0.0; 3];
        dense[ft.support().index_of(&[1]).unwrap()] = 1.0;
        assert!(alignment_norm(&dense, &ft).unwrap().is_infinite());
    }

    #[test]
    fn aligned_distribution_minimizes_alignment_norm() {
        let ft = diagonal_transform(&[(0, 0.6), (1, 0.2), (-1, 0.2)], 1);
        let q = ft.diagonal().unwrap();
        let aligned = SamplingDistribution::diagonal(&q).unwrap();
        let dense = aligned.dense_over(ft.support()).unwrap();
        let best = alignment_norm(&dense, &ft).unwrap();
        assert!((best - 1.0).abs() < 1e-10);
        let mut rng = derive_rng(51, &[]);
        for _ in 0..200 {
            let mut p: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            assert!(alignment_norm(&p, &ft).unwrap() >= best - 1e-10);
        }
    }

    #[test]
    fn rkhs_norm_examples_and_oracle() {
        // Kernel section of a shift-invariant kernel has unit norm.
        let ft = diagonal_transform(&[(0, 0.5), (1, 0.25), (-1, 0.25)], 1);
        let support = ft.support();
        let x0 = 1.3;
        let mut c = vec![Complex64::new(0.0, 0.0); 3];
        for (w, qv) in [(0i64, 0.5), (1, 0.25), (-1, 0.25)] {
            let i = support.index_of(&[w]).unwrap();
            c[i] = Complex64::from_polar(qv, -(w as f64) * x0);
        }
        let norm = rkhs_norm(&c, &ft).unwrap();
        assert!((norm - 1.0).abs() < 1e-8);

        // Zero coefficients: zero norm.
        let zero = vec![Complex64::new(0.0, 0.0); 3];
        assert!(rkhs_norm(&zero, &ft).unwrap() < 1e-12);

        // Diagonal formula: sqrt(Σ |c|²/q) for c = q.
        let mut c = vec![Complex64::new(0.0, 0.0); 3];
        for (w, qv) in [(0i64, 0.5), (1, 0.25), (-1, 0.25)] {
            c[support.index_of(&[w]).unwrap()] = Complex64::new(qv, 0.0);
        }
        let norm = rkhs_norm(&c, &ft).unwrap();
        assert!((norm - 1.0).abs() < 1e-8);

        // Out-of-space coefficients: infinity.
        let ft0 = diagonal_transform(&[(0, 1.0)], 1);
        let mut c = vec![Complex64::new(0.0, 0.0); 3];
        c[ft0.support().index_of(&[1]).unwrap()] = Complex64::new(0.5, 0.0);
        c[ft0.support().index_of(&[-1]).unwrap()] = Complex64::new(0.5, 0.0);
        assert!(rkhs_norm(&c, &ft0).unwrap().is_infinite());

        // Dense pseudo-inverse oracle on non-diagonal transforms up to
        // |support| = 5.
        for circuit in [x_rotation_map(), crate::qsim::ring_map(1, 1, None).unwrap()] {
            let n = FrequencySupport::from_circuit(&circuit).unwrap().len();
            let ft = FourierTransform::of_circuit(&circuit).unwrap();
            let mut rng = derive_rng(53, &[n as u64]);
            for _ in 0..20 {
                // Build a coefficient vector inside the RKHS: c = F b.
                let b = DVector::from_fn(n, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let c: Vec<Complex64> = (ft.matrix().conjugate() * &b).iter().copied().collect();
                let norm = rkhs_norm(&c, &ft).unwrap();
                // Oracle: ‖a‖² = c† conj(F)⁺ c via the eigendecomposition.
                let (u, v) = eigen_factorization_matrix(ft.matrix()).unwrap();
                let cv = DVector::from_column_slice(&c);
                let proj = u.transpose() * &cv;
                let norm_sq: f64 = proj
                    .iter()
                    .zip(v.iter())
                    .filter(|(_, lambda)| **lambda > 1e-12)
                    .map(|(z, lambda)| z.norm_sqr() / lambda)
                    .sum();
                assert!(
                    (norm - norm_sq.sqrt()).abs() < 1e-8,
                    "rkhs {} vs oracle {}",
                    norm,
                    norm_sq.sqrt()
                );
            }
        }
    }

    #[test]
    fn fourier_sum_and_aligned_distribution() {
        // Single frequency pair.
        let f = FourierFunction::new(
            1,
            1,
            vec![
                (vec![2], Complex64::new(0.3, 0.1)),
                (vec![-2], Complex64::new(0.3, -0.1)),
            ],
        )
        .unwrap();
        let sum = fourier_sum(&f);
        assert!((sum - 2.0 * (0.3f64 * 0.3 + 0.1 * 0.1).sqrt()).abs() < 1e-12);
        let p = aligned_distribution(&f).unwrap();
        assert!((p.prob_of(&[2]) - 0.5).abs() < 1e-12);

        // cos(x): c_{±1} = 1/2.
        let f = FourierFunction::new(
            1,
            1,
            vec![
                (vec![1], Complex64::new(0.5, 0.0)),
                (vec![-1], Complex64::new(0.5, 0.0)),
            ],
        )
        .unwrap();
        assert!((fourier_sum(&f) - 1.0).abs() < 1e-15);
        let p = aligned_distribution(&f).unwrap();
        assert!((p.prob_of(&[1]) - 0.5).abs() < 1e-15);
        assert!((f.evaluate(&[0.7]) - 0.7f64.cos()).abs() < 1e-12);

        // ‖c‖₂ ≤ ‖c‖₁ over random functions.
        let mut rng = derive_rng(57, &[]);
        for i in 0..100 {
            let f = FourierFunction::random_low_frequency(2, 2, 3 + i % 3, &mut rng).unwrap();
            assert!(f.coefficient_l2() <= f.coefficient_l1() + 1e-12);
        }
    }

    #[test]
    fn sqrt_sum_stays_between_one_and_sqrt_support_size() {
        let mut rng = derive_rng(58, &[]);
        let support = support_1d(3);
        let n = support.len();
        for _ in 0..200 {
            let mut q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = q.iter().sum();
            q.iter_mut().for_each(|v| *v /= total);
            let q = DiagonalDistribution::new(support.clone(), q).unwrap();
            let s = sqrt_sum_concentration(&q);
            assert!(s >= 1.0 - 1e-12);
            assert!(s <= (n as f64).sqrt() + 1e-12);
        }
    }

    #[test]
    fn sqrt_distribution_is_kkt_optimal() {
        let q = diagonal_q(&[(0, 0.81), (1, 0.09), (-1, 0.09), (2, 0.01)], 2);
        let (p_star, c1) = optimal_sqrt_distribution(&q).unwrap();
        assert!((c1 - 1.6).abs() < 1e-12);
        assert!((p_star.prob_of(&[0]) - 0.9 / 1.6).abs() < 1e-12);
        assert!((p_star.prob_of(&[2]) - 0.1 / 1.6).abs() < 1e-12);

        let dense_star = p_star.dense_over(q.support()).unwrap();
        let best = sqrt_alignment_value(&dense_star, &q);
        assert!((best - 1.0 / c1).abs() < 1e-12);
        let mut rng = derive_rng(59, &[]);
        for _ in 0..1000 {
            let mut p: Vec<f64> = (0..q.probs().len())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            let total: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= total);
            assert!(sqrt_alignment_value(&p, &q) <= best + 1e-12);
        }

        // Uniform q: p* uniform with C1 = sqrt(N).
        let n = 5;
        let q = DiagonalDistribution::new(support_1d(2), vec![1.0 / n as f64; n]).unwrap();
        let (p_star, c1) = optimal_sqrt_distribution(&q).unwrap();
        assert!((c1 - (n as f64).sqrt()).abs() < 1e-12);
        assert!((p_star.prob_of(&[0]) - 1.0 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn aligned_distribution_minimizes_weighted_objective() {
        let mut rng = derive_rng(61, &[]);
        let f = FourierFunction::random_low_frequency(1, 3, 3, &mut rng).unwrap();
        let aligned = aligned_distribution(&f).unwrap();
        let best = coefficient_weighted_objective(&f, &aligned);
        let freqs: Vec<Vec<i64>> = f.terms().iter().map(|(w, _)| w.clone()).collect();
        for _ in 0..1000 {
            let weights: Vec<f64> = (0..freqs.len()).map(|_| rng.gen_range(0.01..1.0)).collect();
            let p = SamplingDistribution::custom(freqs.clone(), weights, 1).unwrap();
            assert!(best <= coefficient_weighted_objective(&f, &p) + 1e-12);
        }
    }

    #[test]
    fn complexity_formulas_match_reference_evaluation() {
        let inp = ComplexityInputs {
            s1: 1.0,
            s2: 1.0,
            kappa: 1.0,
            b: 1.0,
            p_max: 1.0,
            delta: 0.1,
            epsilon: 0.1,
        };
        let est = regression_sample_complexity(&inp).unwrap();
        // Independent re-evaluation of every constant.
        let s12 = 1.0f64;
        let b_bar = 2.0 + 2.0 * s12;
        let sigma_bar = 2.0 + 2.0 * s12.sqrt();
        assert_eq!(est.b_bar, b_bar);
        assert_eq!(est.sigma_bar, sigma_bar);
        let c0 = 9.0 * (3.0 + 4.0 + 4.0 + 0.25);
        assert!((est.c0 - c0).abs() < 1e-12);
        let c1 = 8.0 * (b_bar + sigma_bar + 1.0);
        assert!((est.c1 - c1).abs() < 1e-12);
        let m0 = (264.0 * (5560.0f64).ln()).powi(2).max(4.0);
        assert!((est.m0 - m0).abs() < 1e-6);
        let m_min = m0.max((c1 * (10.0f64).ln().powi(2) / 0.1).powi(2));
        assert!((est.m_min - m_min).abs() < 1e-6);
        let d_min = c0 * m_min.sqrt() * (108.0 * m_min.sqrt() / 0.1).ln();
        assert!((est.d_min - d_min).abs() * 1e-6 < 1.0);

        // Halving epsilon quadruples m when the accuracy branch dominates.
        let mut half = inp;
        half.epsilon = 0.05;
        let est2 = regression_sample_complexity(&half).unwrap();
        assert!((est2.m_min / est.m_min - 4.0).abs() < 1e-9);

        // Monotone in s1 * s2.
        let mut bigger = inp;
        bigger.s1 = 3.0;
        let est3 = regression_sample_complexity(&bigger).unwrap();
        assert!(est3.m_min >= est.m_min);
    }

    #[test]
    fn shot_noise_quantity_identity_case_and_determinism() {
        let k = DMatrix::<f64>::identity(3, 3);
        let y = vec![1.0, 0.0, 0.0];
        let mut rng = derive_rng(63, &[]);
        let out = shot_noise_bound_quantity(&k, &y, 1.0, Shots::Infinite, &mut rng).unwrap();
        assert!((out.exact - 0.5).abs() < 1e-12);
        assert_eq!(out.exact, out.noisy);

        // Finite shots: finite, reproducible by seed.
        let m = 12;
        let mut rng = derive_rng(64, &[]);
        let xs: Vec<f64> = (0..m)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        let k = DMatrix::from_fn(m, m, |i, j| (0.5 * (xs[i] - xs[j])).cos().powi(2));
        let y: Vec<f64> = (0..m)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let run = |seed: u64| {
            let mut rng = derive_rng(seed, &[]);
            shot_noise_bound_quantity(&k, &y, 0.1, Shots::Finite(100), &mut rng).unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert!(a.noisy.is_finite());
        assert_eq!(a.noisy, b.noisy);
        assert_ne!(run(8).noisy, a.noisy);
    }

    #[test]
    fn condition_report_is_total_and_serializable() {
        let ft = diagonal_transform(&[(0, 0.5), (1, 0.25), (-1, 0.25)], 1);
        let q = ft.diagonal().unwrap();
        let p = SamplingDistribution::sqrt_diagonal(&q).unwrap();
        let f = FourierFunction::new(
            1,
            1,
            vec![
                (vec![1], Complex64::new(0.5, 0.0)),
                (vec![-1], Complex64::new(0.5, 0.0)),
            ],
        )
        .unwrap();
        let report = condition_report(
            &ConditionInputs {
                sampling: Some(&p),
                diagonal: Some(&q),
                transform: Some(&ft),
                function: Some(&f),
            },
            Some(100.0),
        )
        .unwrap();
        assert!(report.conditions.len() >= 5);
        assert!(report
            .conditions
            .iter()
            .all(|c| c.satisfied_at_budget == Some(true)));
        let json = serde_json::to_string_pretty(&report).unwrap();
        assert!(json.contains("alignment_norm"));
        let table = report.render_table();
        assert!(table.contains("rkhs_norm"));

        assert!(condition_report(&ConditionInputs::default(), None).is_err());
    }
}
