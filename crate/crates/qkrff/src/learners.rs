//! Primal random-feature learners and dual kernel learners.
//!
//! The primal side trains on explicit feature matrices: closed-form ridge
//! regression and a box-constrained hinge minimizer solved by projected
//! averaged subgradient descent. The dual side trains on Gram matrices:
//! coordinate-ascent SVM and closed-form kernel ridge. With the exact
//! feature map of a kernel's spectrum both routes agree, which several
//! tests pin down.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A supervised dataset: rows of features plus labels (±1 for
/// classification, reals for regression).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid(
                "dataset needs at least one row and matching labels",
            ));
        }
        let dim = x[0].len();
        if x.iter().any(|row| row.len() != dim) {
            return Err(Error::invalid("dataset rows have inconsistent dimensions"));
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn validate_classification(&self) -> Result<()> {
        if self.y.iter().any(|v| *v != 1.0 && *v != -1.0) {
            return Err(Error::invalid("classification labels must be ±1"));
        }
        Ok(())
    }
}

/// Loss functions for risk evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Hinge,
    ZeroOne,
    Mse,
}

impl Loss {
    pub fn parse(name: &str) -> Result<Loss> {
        Ok(match name {
            "hinge" => Loss::Hinge,
            "zero-one" | "zero_one" => Loss::ZeroOne,
            "mse" => Loss::Mse,
            other => return Err(Error::invalid(format!("unknown loss '{other}'"))),
        })
    }
}

/// Sign convention for classification: `sign(0) = +1`, so a constant-zero
/// predictor on balanced ±1 labels scores a zero-one risk of 0.5.
pub fn predicted_label(f: f64) -> f64 {
    if f >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Mean loss of raw decision values against labels.
pub fn empirical_risk(decision: &[f64], labels: &[f64], loss: Loss) -> Result<f64> {
    if decision.len() != labels.len() || decision.is_empty() {
        return Err(Error::invalid(
            "risk needs matching, nonempty prediction and label lists",
        ));
    }
    let m = decision.len() as f64;
    let sum: f64 = decision
        .iter()
        .zip(labels.iter())
        .map(|(f, y)| match loss {
            Loss::Hinge => (1.0 - y * f).max(0.0),
            Loss::ZeroOne => {
                if predicted_label(*f) == *y {
                    0.0
                } else {
                    1.0
                }
            }
            Loss::Mse => (f - y) * (f - y),
        })
        .sum();
    Ok(sum / m)
}

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

/// Closed-form ridge: `β = (ZᵀZ + λ m I)⁻¹ Zᵀ y`, the minimizer of
/// `(1/m)‖Zβ - y‖² + λ‖β‖²`.
pub fn train_rff_ridge(z: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(Error::invalid("ridge regularization must be nonnegative"));
    }
    let m = z.nrows();
    if m == 0 || y.len() != m {
        return Err(Error::invalid("feature matrix and labels disagree"));
    }
    let yv = DVector::from_column_slice(y);
    // Wide feature matrices solve through the m x m kernel form instead:
    // β = Zᵀ(ZZᵀ + λmI)⁻¹y, identical to the primal solution for λ > 0.
    if lambda > 0.0 && z.ncols() > m {
        let mut kernelized = z * z.transpose();
        for i in 0..m {
            kernelized[(i, i)] += lambda * m as f64;
        }
        let chol = kernelized
            .cholesky()
            .ok_or_else(|| Error::numeric("kernelized normal matrix is singular"))?;
        return Ok(z.transpose() * chol.solve(&yv));
    }
    let mut normal = z.transpose() * z;
    for i in 0..normal.nrows() {
        normal[(i, i)] += lambda * m as f64;
    }
    let rhs = z.transpose() * yv;
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::numeric("normal matrix is singular; use lambda > 0"))?;
    if lambda == 0.0 {
        // Cholesky can sneak through a numerically singular matrix; reject
        // pivots collapsed relative to the largest one.
        let l = chol.l();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for i in 0..l.nrows() {
            min_pivot = min_pivot.min(l[(i, i)]);
            max_pivot = max_pivot.max(l[(i, i)]);
        }
        if min_pivot <= 1e-7 * max_pivot {
            return Err(Error::numeric("normal matrix is singular; use lambda > 0"));
        }
    }
    Ok(chol.solve(&rhs))
}

/// Ridge with an infinity-norm box `‖β‖∞ ≤ c/d`: projected gradient descent
/// on the same objective, for feature maps trained under a search radius.
pub fn train_rff_ridge_boxed(
    z: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    c: f64,
    d_samples: usize,
) -> Result<DVector<f64>> {
    if c <= 0.0 || d_samples == 0 {
        return Err(Error::invalid("box needs c > 0 and d ≥ 1"));
    }
    let m = z.nrows() as f64;
    let bound = c / d_samples as f64;
    let p = z.ncols();
    let yv = DVector::from_column_slice(y);
    // Lipschitz constant of the gradient: 2(σ_max(Z)² / m + λ).
    let sigma_sq = (z.transpose() * z).symmetric_eigen().eigenvalues.max();
    let step = 1.0 / (2.0 * (sigma_sq / m + lambda)).max(1e-12);
    let mut beta = DVector::zeros(p);
    for _ in 0..5000 {
        let grad = (z.transpose() * (z * &beta - &yv)) * (2.0 / m) + &beta * (2.0 * lambda);
        let mut next = &beta - grad * step;
        for v in next.iter_mut() {
            *v = v.clamp(-bound, bound);
        }
        let moved = (&next - &beta).amax();
        beta = next;
        if moved < 1e-12 {
            break;
        }
    }
    Ok(beta)
}

/// Residual of the ridge normal equations, `‖(ZᵀZ + λmI)β - Zᵀy‖∞`.
pub fn ridge_normal_residual(z: &DMatrix<f64>, y: &[f64], lambda: f64, beta: &DVector<f64>) -> f64 {
    let m = z.nrows() as f64;
    let yv = DVector::from_column_slice(y);
    let lhs = z.transpose() * (z * beta) + beta * (lambda * m);
    let rhs = z.transpose() * yv;
    (lhs - rhs).amax()
}

// ---------------------------------------------------------------------------
// Box-constrained primal SVM
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct SvmOptions {
    pub epochs: usize,
    pub eta0: f64,
    /// Early stop when the best objective changes by less than this
    /// relative amount over ten epochs.
    pub rel_tol: f64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            epochs: 200,
            eta0: 1.0,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SvmSolution {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub best_objective: f64,
    pub epochs_run: usize,
}

/// `(λ/2)‖β‖² + (1/m) Σ max(0, 1 - y_i βᵀz_i)`.
pub fn svm_objective(z: &DMatrix<f64>, y: &[f64], lambda: f64, beta: &DVector<f64>) -> f64 {
    let m = z.nrows();
    let decision = z * beta;
    let hinge: f64 = decision
        .iter()
        .zip(y.iter())
        .map(|(f, yi)| (1.0 - yi * f).max(0.0))
        .sum();
    0.5 * lambda * beta.norm_squared() + hinge / m as f64
}

/// Box-constrained hinge minimization by projected averaged subgradient
/// descent with step `η₀/√t`. Features are the unnormalized `z(x)` entries
/// in `[-1, 1]`; the box is `‖β‖∞ ≤ c/d`.
///
/// Returns the averaged iterate when its objective is within 1e-3 of the
/// best iterate seen, otherwise the best iterate itself.
pub fn train_rff_svm(
    z: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    c: f64,
    d_samples: usize,
    opts: &SvmOptions,
) -> Result<SvmSolution> {
    if c <= 0.0 {
        return Err(Error::invalid("search radius c must be positive"));
    }
    if d_samples == 0 {
        return Err(Error::invalid("need at least one feature sample"));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("regularization must be nonnegative"));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::invalid("classification labels must be ±1"));
    }
    let m = z.nrows();
    if m == 0 || y.len() != m {
        return Err(Error::invalid("feature matrix and labels disagree"));
    }
    let bound = c / d_samples as f64;
    let p = z.ncols();
    let mut beta = DVector::<f64>::zeros(p);
    let mut average = DVector::<f64>::zeros(p);
    let mut best = beta.clone();
    let mut best_objective = svm_objective(z, y, lambda, &beta);
    let mut objective_at_window = best_objective;
    let mut epochs_run = 0;

    for t in 1..=opts.epochs {
        let decision = z * &beta;
        let mut grad = &beta * lambda;
        for i in 0..m {
            if y[i] * decision[i] < 1.0 {
                for j in 0..p {
                    grad[j] -= y[i] * z[(i, j)] / m as f64;
                }
            }
        }
        let eta = opts.eta0 / (t as f64).sqrt();
        beta -= grad * eta;
        for v in beta.iter_mut() {
            *v = v.clamp(-bound, bound);
        }
        debug_assert!(beta.amax() <= bound + 1e-12);

        let objective = svm_objective(z, y, lambda, &beta);
        if objective < best_objective {
            best_objective = objective;
            best.copy_from(&beta);
        }
        average = (&average * (t as f64 - 1.0) + &beta) / t as f64;
        epochs_run = t;

        if t % 10 == 0 {
            let change = (objective_at_window - objective).abs();
            if change <= opts.rel_tol * objective_at_window.abs().max(1e-12) {
                break;
            }
            objective_at_window = objective;
        }
    }

    let avg_objective = svm_objective(z, y, lambda, &average);
    let (beta, objective) = if avg_objective <= best_objective + 1e-3 {
        (average, avg_objective)
    } else {
        (best, best_objective)
    };
    Ok(SvmSolution {
        beta,
        objective,
        best_objective,
        epochs_run,
    })
}

// ---------------------------------------------------------------------------
// Dual kernel SVM
// ---------------------------------------------------------------------------

/// Upper bound rule for the dual variables.
///
/// `InverseLambdaM` (`α ≤ 1/(λm)`) is the Lagrangian box of the
/// `(λ/2)‖w‖² + (1/m)Σ hinge` primal. `InverseLambda` (`α ≤ 1/λ`) is kept
/// as a compatibility option for formulations without the 1/m loss scaling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualBox {
    InverseLambdaM,
    InverseLambda,
}

impl DualBox {
    pub fn bound(&self, lambda: f64, m: usize) -> f64 {
        match self {
            DualBox::InverseLambdaM => 1.0 / (lambda * m as f64),
            DualBox::InverseLambda => 1.0 / lambda,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DualOptions {
    pub box_rule: DualBox,
    pub max_sweeps: usize,
    pub gap_tol: f64,
    /// Augment the kernel with a constant to emulate a (regularized) bias.
    pub bias: bool,
}

impl Default for DualOptions {
    fn default() -> Self {
        DualOptions {
            box_rule: DualBox::InverseLambdaM,
            max_sweeps: 2000,
            gap_tol: 1e-6,
            bias: false,
        }
    }
}

/// Dual SVM model: coefficients over the training points. The decision
/// function is `f(x) = Σ α_i y_i k(x_i, x) + bias`.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub objective: f64,
    pub gap: f64,
    pub sweeps: usize,
}

impl DualSolution {
    /// Decision value given the kernel row `k(x_i, x)` over training points.
    pub fn decision(&self, labels: &[f64], kernel_row: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(labels.iter())
            .zip(kernel_row.iter())
            .map(|((a, y), k)| a * y * k)
            .sum::<f64>()
            + self.bias
    }
}

/// Eigenvalue clipping at zero followed by re-symmetrization. Returns the
/// repaired matrix and the most negative eigenvalue seen.
pub fn psd_repair(k: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (k + k.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig >= 0.0 {
        return (sym, min_eig);
    }
    let mut clipped = DMatrix::zeros(k.nrows(), k.ncols());
    for (i, lambda) in eig.eigenvalues.iter().enumerate() {
        if *lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            clipped += v * v.transpose() * *lambda;
        }
    }
    let repaired = (&clipped + clipped.transpose()) * 0.5;
    (repaired, min_eig)
}

/// Coordinate-ascent maximization of
/// `Σ α_i - ½ Σ α_i α_j y_i y_j K_ij` over the box `[0, B]^m`, stopping on a
/// primal-dual gap surrogate.
pub fn train_kernel_svm_dual(
    k: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    opts: &DualOptions,
) -> Result<DualSolution> {
    if lambda <= 0.0 {
        return Err(Error::invalid("dual SVM needs lambda > 0"));
    }
    let m = k.nrows();
    if m == 0 || k.ncols() != m || y.len() != m {
        return Err(Error::invalid("gram matrix and labels disagree"));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::invalid("classification labels must be ±1"));
    }
    let sym_residual = (k - k.transpose()).amax();
    if sym_residual > 1e-8 {
        return Err(Error::invalid("gram matrix is not symmetric"));
    }
    let work = if opts.bias {
        k.map(|v| v + 1.0)
    } else {
        k.clone()
    };
    let min_eig = work.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-6 {
        return Err(Error::numeric(format!(
            "gram matrix has eigenvalue {min_eig:e}; repair it with psd_repair first"
        )));
    }

    let bound = opts.box_rule.bound(lambda, m);
    // The box corresponds to a primal with this effective regularization.
    let lambda_eff = 1.0 / (bound * m as f64);
    let mut alphas = vec![0.0f64; m];
    // g[i] = Σ_j α_j y_j K_ij
    let mut g = vec![0.0f64; m];
    let mut sweeps = 0;
    let mut gap = f64::INFINITY;

    for sweep in 1..=opts.max_sweeps {
        sweeps = sweep;
        for i in 0..m {
            let kii = work[(i, i)];
            let grad = 1.0 - y[i] * g[i];
            let target = if kii > 1e-12 {
                alphas[i] + grad / kii
            } else if grad > 0.0 {
                bound
            } else {
                0.0
            };
            let clipped = target.clamp(0.0, bound);
            let delta = clipped - alphas[i];
            if delta != 0.0 {
                alphas[i] = clipped;
                for j in 0..m {
                    g[j] += delta * y[i] * work[(i, j)];
                }
            }
            debug_assert!((0.0..=bound + 1e-12).contains(&alphas[i]));
        }
        // Primal-dual gap surrogate.
        let dual: f64 = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| a - 0.5 * a * y[i] * g[i])
            .sum();
        let w_norm_sq: f64 = alphas
            .iter()
            .enumerate()
            .map(|(i, a)| a * y[i] * g[i])
            .sum();
        let hinge: f64 = (0..m).map(|i| (1.0 - y[i] * g[i]).max(0.0)).sum();
        let primal = 0.5 * lambda_eff * w_norm_sq + hinge / m as f64;
        gap = primal - lambda_eff * dual;
        if gap.abs() <= opts.gap_tol * (1.0 + primal.abs()) {
            break;
        }
    }

    let dual_objective: f64 = alphas
        .iter()
        .enumerate()
        .map(|(i, a)| a - 0.5 * a * y[i] * g[i])
        .sum();
    let support_indices = alphas
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 1e-9 * bound)
        .map(|(i, _)| i)
        .collect();
    let bias = if opts.bias {
        alphas
            .iter()
            .zip(y.iter())
            .map(|(a, yi)| a * yi)
            .sum::<f64>()
    } else {
        0.0
    };
    Ok(DualSolution {
        alphas,
        support_indices,
        bias,
        objective: dual_objective,
        gap,
        sweeps,
    })
}

// ---------------------------------------------------------------------------
// Kernel ridge
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct KernelRidge {
    pub alphas: Vec<f64>,
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

impl KernelRidge {
    pub fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.alphas
            .iter()
            .zip(kernel_row.iter())
            .map(|(a, k)| a * k)
            .sum()
    }
}

/// `α = (K + λ m I)⁻¹ y`; flags condition numbers above 1e12.
pub fn train_kernel_ridge(k: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<KernelRidge> {
    if lambda <= 0.0 {
        return Err(Error::invalid("kernel ridge needs lambda > 0"));
    }
    let m = k.nrows();
    if m == 0 || k.ncols() != m || y.len() != m {
        return Err(Error::invalid("gram matrix and labels disagree"));
    }
    let mut reg = k.clone();
    for i in 0..m {
        reg[(i, i)] += lambda * m as f64;
    }
    let eig = reg.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    let condition_estimate = if min_eig > 0.0 {
        max_eig / min_eig
    } else {
        f64::INFINITY
    };
    let chol = reg
        .cholesky()
        .ok_or_else(|| Error::numeric("regularized gram matrix is not positive definite"))?;
    let alphas = chol.solve(&DVector::from_column_slice(y));
    Ok(KernelRidge {
        alphas: alphas.iter().copied().collect(),
        condition_estimate,
        ill_conditioned: condition_estimate > 1e12,
    })
}
