//! Doc-test shim for the mdbook guide: each chapter is included as module
//! documentation, so `cargo test -p guide-tests --doc` compiles and runs
//! every Rust listing in the book. Editing a chapter without keeping its
//! code valid fails the build.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}

#[doc = include_str!("../../../book/src/random-features.md")]
pub mod random_features {}

#[doc = include_str!("../../../book/src/learners.md")]
pub mod learners {}

#[doc = include_str!("../../../book/src/dequantization.md")]
pub mod dequantization {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
