//! # qkrff
//!
//! Random-feature surrogates for quantum kernel models, end to end:
//!
//! - [`qsim`] — exact statevector simulation of data-encoding circuits,
//!   fidelity kernels, Gram matrices and finite-shot estimation.
//! - [`spectrum`] — frequency supports, the positive semi-definite
//!   unit-trace Fourier transform `F` of a discrete-spectrum kernel, and its
//!   reverse-Cholesky / eigen factorizations.
//! - [`rff`] — sampling distributions over frequencies, trigonometric and
//!   factorization-based random feature maps, kernel-approximation error.
//! - [`learners`] — ridge regression and SVMs in primal (random-feature) and
//!   dual (kernel) form, with risk evaluation.
//! - [`dequant`] — the quantities behind the sufficient conditions for
//!   replacing a quantum kernel model by a random-feature model:
//!   concentration, alignment, RKHS norms, Fourier sums, optimal sampling
//!   distributions and sample-complexity estimates.
//! - [`harness`] — dataset ingestion, synthetic data, PCA, risk-versus-D
//!   sweeps and the CLI plumbing.
//!
//! The mdbook under `book/` walks through the same pipeline chapter by
//! chapter; its code listings are compiled and run as doc-tests by the
//! `guide-tests` crate.
//!
//! ```
//! use qkrff::qsim::x_rotation_map;
//! use qkrff::spectrum::FourierTransform;
//! use qkrff::rff::{SamplingDistribution, TrigFeatureMap};
//! use qkrff::qsim::derive_rng;
//!
//! // Simulate a kernel, extract its spectrum, build a surrogate.
//! let circuit = x_rotation_map();
//! let ft = FourierTransform::of_circuit(&circuit).unwrap();
//! let q = ft.diagonal().unwrap();
//! let dist = SamplingDistribution::diagonal(&q).unwrap();
//! let freqs = dist.sample(256, &mut derive_rng(7, &[]));
//! let map = TrigFeatureMap::new(freqs, dist.denom());
//! let s = map.approx_kernel(&[0.4], &[1.3]);
//! let k = circuit.kernel(&[0.4], &[1.3]).unwrap();
//! assert!((s - k).abs() < 0.2);
//! ```

pub mod cli;
pub mod dequant;
pub mod error;
pub mod harness;
pub mod learners;
pub mod qsim;
pub mod rff;
pub mod spectrum;

pub use error::{Error, Result};
