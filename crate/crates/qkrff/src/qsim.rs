//! Exact statevector simulation of Hamiltonian-encoded circuits and
//! fidelity-kernel evaluation.
//!
//! Data enters a circuit through phase shifts and Pauli rotations whose angle
//! is a rational multiple of one input coordinate. The induced kernel
//! `k(x, y) = |⟨0|U†(y)U(x)|0⟩|²` is then a finite Fourier series, which is
//! what the [`crate::spectrum`] module extracts.
//!
//! ```
//! use qkrff::qsim::{x_rotation_map, Shots, ShotModel, gram_matrix};
//!
//! let circuit = x_rotation_map();
//! let k = circuit.kernel(&[0.3], &[1.1]).unwrap();
//! assert!((k - (0.5 * (0.3f64 - 1.1)).cos().powi(2)).abs() < 1e-12);
//!
//! let points = vec![vec![0.0], vec![1.0], vec![2.0]];
//! let gram = gram_matrix(&circuit, &points, &ShotModel::exact()).unwrap();
//! assert_eq!(gram[(0, 0)], 1.0);
//! ```

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::ToPrimitive;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};

/// Dense simulation refuses to allocate beyond this many qubits.
pub const MAX_QUBITS: usize = 24;

/// Rotation axis of a Pauli rotation gate `exp(-i θ σ/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// How a gate angle is obtained: bound to an input coordinate (scaled by a
/// rational factor) or fixed in radians.
///
/// Scales are rational so that all kernel frequencies land on a common
/// integer grid, which makes exact discrete-Fourier extraction possible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle {
    Feature { index: usize, scale: Rational64 },
    Fixed(f64),
}

impl Angle {
    pub fn feature(index: usize) -> Self {
        Angle::Feature {
            index,
            scale: Rational64::new(1, 1),
        }
    }

    fn resolve(&self, x: &[f64]) -> f64 {
        match *self {
            Angle::Feature { index, scale } => scale.to_f64().unwrap_or(f64::NAN) * x[index],
            Angle::Fixed(theta) => theta,
        }
    }
}

/// A single gate of an encoding circuit.
#[derive(Clone, Debug, PartialEq)]
pub enum GateSpec {
    Hadamard {
        target: usize,
    },
    PhaseShift {
        target: usize,
        angle: Angle,
    },
    PauliRotation {
        axis: Axis,
        target: usize,
        angle: Angle,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

impl GateSpec {
    /// The data coordinate (if any) this gate encodes, with its scale.
    pub fn data_binding(&self) -> Option<(usize, Rational64)> {
        match self {
            GateSpec::PhaseShift { angle, .. } | GateSpec::PauliRotation { angle, .. } => {
                match *angle {
                    Angle::Feature { index, scale } => Some((index, scale)),
                    Angle::Fixed(_) => None,
                }
            }
            _ => None,
        }
    }
}

/// A layered, data-encoding circuit acting on `n_qubits` qubits with input
/// dimension `dim`.
#[derive(Clone, Debug)]
pub struct EncodingCircuit {
    n_qubits: usize,
    dim: usize,
    layers: Vec<Vec<GateSpec>>,
}

impl EncodingCircuit {
    pub fn new(n_qubits: usize, dim: usize, layers: Vec<Vec<GateSpec>>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::invalid("circuit needs at least one qubit"));
        }
        if n_qubits > MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "dense statevector simulation is limited to {MAX_QUBITS} qubits, got {n_qubits}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("input dimension must be at least 1"));
        }
        for gate in layers.iter().flatten() {
            let check_qubit = |q: usize| -> Result<()> {
                if q >= n_qubits {
                    Err(Error::invalid(format!(
                        "gate targets qubit {q} but the circuit has {n_qubits} qubits"
                    )))
                } else {
                    Ok(())
                }
            };
            match gate {
                GateSpec::Hadamard { target } => check_qubit(*target)?,
                GateSpec::PhaseShift { target, angle }
                | GateSpec::PauliRotation { target, angle, .. } => {
                    check_qubit(*target)?;
                    if let Angle::Feature { index, scale } = angle {
                        if *index >= dim {
                            return Err(Error::invalid(format!(
                                "gate binds input coordinate {index} but dim is {dim}"
                            )));
                        }
                        if *scale.numer() == 0 {
                            return Err(Error::invalid("data-bound gate has zero scale"));
                        }
                    }
                }
                GateSpec::Cnot { control, target } => {
                    check_qubit(*control)?;
                    check_qubit(*target)?;
                    if control == target {
                        return Err(Error::invalid("CNOT control and target must differ"));
                    }
                }
            }
        }
        Ok(EncodingCircuit {
            n_qubits,
            dim,
            layers,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<GateSpec>] {
        &self.layers
    }

    pub fn gates(&self) -> impl Iterator<Item = &GateSpec> {
        self.layers.iter().flatten()
    }

    /// Gates that encode input coordinate `j`, in circuit order.
    pub fn data_gates_for_dim(&self, j: usize) -> Vec<&GateSpec> {
        self.gates()
            .filter(|g| g.data_binding().map(|(i, _)| i) == Some(j))
            .collect()
    }

    /// Input coordinates not bound by any gate. The kernel ignores these, so
    /// callers should surface a warning.
    pub fn unbound_dimensions(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|j| self.data_gates_for_dim(*j).is_empty())
            .collect()
    }

    /// `U(x)|0…0⟩`.
    pub fn apply(&self, x: &[f64]) -> Result<StateVector> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut state = StateVector::zero(self.n_qubits);
        for gate in self.gates() {
            state.apply_gate(gate, x)?;
        }
        Ok(state)
    }

    /// Fidelity kernel `|⟨0|U†(y)U(x)|0⟩|²`.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let sx = self.apply(x)?;
        let sy = self.apply(y)?;
        Ok(sy.inner(&sx).norm_sqr())
    }
}

/// Dense complex statevector over `2^n_qubits` amplitudes.
#[derive(Clone, Debug)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        StateVector { n_qubits, amps }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn apply_single_qubit(&mut self, target: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i | bit] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    pub fn apply_gate(&mut self, gate: &GateSpec, x: &[f64]) -> Result<()> {
        let zero = Complex64::new(0.0, 0.0);
        match gate {
            GateSpec::Hadamard { target } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                let h = Complex64::new(h, 0.0);
                self.apply_single_qubit(*target, [[h, h], [h, -h]]);
            }
            GateSpec::PhaseShift { target, angle } => {
                let theta = angle.resolve(x);
                let phase = Complex64::from_polar(1.0, theta);
                let one = Complex64::new(1.0, 0.0);
                self.apply_single_qubit(*target, [[one, zero], [zero, phase]]);
            }
            GateSpec::PauliRotation {
                axis,
                target,
                angle,
            } => {
                let half = 0.5 * angle.resolve(x);
                let (c, s) = (half.cos(), half.sin());
                let c = Complex64::new(c, 0.0);
                let m = match axis {
                    Axis::X => {
                        let mis = Complex64::new(0.0, -s);
                        [[c, mis], [mis, c]]
                    }
                    Axis::Y => {
                        let s = Complex64::new(s, 0.0);
                        [[c, -s], [s, c]]
                    }
                    Axis::Z => [
                        [Complex64::from_polar(1.0, -half), zero],
                        [zero, Complex64::from_polar(1.0, half)],
                    ],
                };
                self.apply_single_qubit(*target, m);
            }
            GateSpec::Cnot { control, target } => {
                let cbit = 1usize << *control;
                let tbit = 1usize << *target;
                for i in 0..self.amps.len() {
                    if i & cbit != 0 && i & tbit == 0 {
                        self.amps.swap(i, i | tbit);
                    }
                }
            }
        }
        let drift = (self.norm_sq() - 1.0).abs();
        if drift > 1e-10 {
            return Err(Error::numeric(format!(
                "statevector norm drifted by {drift:e} after a gate"
            )));
        }
        Ok(())
    }
}

/// Measurement budget for kernel estimation: exact values or a finite number
/// of shots per kernel entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    Infinite,
    Finite(u64),
}

/// Shot budget plus the seed that derives every per-entry sampling stream.
#[derive(Clone, Copy, Debug)]
pub struct ShotModel {
    pub shots: Shots,
    pub rng_seed: u64,
}

impl ShotModel {
    pub fn exact() -> Self {
        ShotModel {
            shots: Shots::Infinite,
            rng_seed: 0,
        }
    }

    pub fn finite(shots: u64, rng_seed: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::invalid("shot count must be at least 1"));
        }
        Ok(ShotModel {
            shots: Shots::Finite(shots),
            rng_seed,
        })
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic RNG stream derived from a master seed and a tag path,
/// e.g. `(seed, i, j)` for Gram entry (i, j). Independent tags give
/// independent streams, so parallel evaluation stays reproducible.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha12Rng {
    let mut state = seed ^ 0x6a09e667f3bcc908;
    for t in tags {
        state = splitmix64(&mut state) ^ t.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Finite-shot estimate of a kernel value: the mean of `shots` Bernoulli
/// draws with success probability `k_true`. Unbiased.
pub fn estimate_with_shots(k_true: f64, shots: u64, rng: &mut impl Rng) -> Result<f64> {
    if !(0.0..=1.0).contains(&k_true) {
        return Err(Error::invalid(format!(
            "kernel value {k_true} outside [0, 1]"
        )));
    }
    if shots == 0 {
        return Err(Error::invalid("shot count must be at least 1"));
    }
    let binom = Binomial::new(shots, k_true)
        .map_err(|e| Error::invalid(format!("binomial parameters rejected: {e}")))?;
    Ok(binom.sample(rng) as f64 / shots as f64)
}

/// Gram matrix of the fidelity kernel over `points`.
///
/// With finite shots each unordered pair is sampled once from a binomial
/// model with its own RNG stream derived from `(seed, i, j)`, and the
/// diagonal is forced to exactly 1 (the kernel of a point with itself is 1
/// analytically).
pub fn gram_matrix(
    circuit: &EncodingCircuit,
    points: &[Vec<f64>],
    shot_model: &ShotModel,
) -> Result<nalgebra::DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one point"));
    }
    let m = points.len();
    let states: Vec<StateVector> = points
        .iter()
        .map(|p| circuit.apply(p))
        .collect::<Result<_>>()?;
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        gram[(i, i)] = 1.0;
        for j in (i + 1)..m {
            let k_true = states[j].inner(&states[i]).norm_sqr().clamp(0.0, 1.0);
            let k = match shot_model.shots {
                Shots::Infinite => k_true,
                Shots::Finite(t) => {
                    let mut rng = derive_rng(shot_model.rng_seed, &[i as u64, j as u64]);
                    estimate_with_shots(k_true, t, &mut rng)?
                }
            };
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    Ok(gram)
}

/// Sample variance of the kernel over random input pairs drawn uniformly
/// from `[0, 2π)^d`. A concentration diagnostic: values near zero mean the
/// kernel is nearly constant over the data distribution.
pub fn kernel_variance(
    circuit: &EncodingCircuit,
    n_pairs: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if n_pairs < 2 {
        return Err(Error::invalid("variance needs at least two pairs"));
    }
    let d = circuit.dim();
    let tau = 2.0 * std::f64::consts::PI;
    let mut values = Vec::with_capacity(n_pairs);
    for _ in 0..n_pairs {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..tau)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..tau)).collect();
        values.push(circuit.kernel(&x, &y)?);
    }
    let mean = values.iter().sum::<f64>() / n_pairs as f64;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_pairs as f64 - 1.0))
}

// ---------------------------------------------------------------------------
// Builtin feature maps
// ---------------------------------------------------------------------------

/// Layered phase + Y-rotation encoding with a CNOT entangling ring.
///
/// Each layer applies `H`, a phase shift bound to one coordinate, a CNOT
/// ring, and a Y rotation bound to the same coordinate. By default every
/// qubit carries its own input dimension (`dim = n_qubits`); passing
/// `dim = Some(d)` wires qubit `i` to coordinate `i mod d` instead, so wider
/// registers can re-encode a low-dimensional input.
///
/// With the default wiring each coordinate is encoded by exactly two gates
/// per layer, so its frequency set after `L` layers is `{-2L, …, 2L}` and the
/// full support has `(4L+1)^d` frequencies.
pub fn ring_map(n_qubits: usize, layers: usize, dim: Option<usize>) -> Result<EncodingCircuit> {
    let d = dim.unwrap_or(n_qubits);
    if d == 0 || layers == 0 || n_qubits == 0 {
        return Err(Error::invalid(
            "ring map needs at least one qubit, one layer and one dimension",
        ));
    }
    if d > n_qubits {
        return Err(Error::invalid(format!(
            "ring map wires one coordinate per qubit; dim {d} exceeds {n_qubits} qubits"
        )));
    }
    let mut all_layers = Vec::with_capacity(layers);
    for _ in 0..layers {
        let mut layer = Vec::new();
        for q in 0..n_qubits {
            layer.push(GateSpec::Hadamard { target: q });
        }
        for q in 0..n_qubits {
            layer.push(GateSpec::PhaseShift {
                target: q,
                angle: Angle::feature(q % d),
            });
        }
        if n_qubits >= 2 {
            for q in 0..n_qubits {
                layer.push(GateSpec::Cnot {
                    control: q,
                    target: (q + 1) % n_qubits,
                });
            }
        }
        for q in 0..n_qubits {
            layer.push(GateSpec::PauliRotation {
                axis: Axis::Y,
                target: q,
                angle: Angle::feature(q % d),
            });
        }
        all_layers.push(layer);
    }
    EncodingCircuit::new(n_qubits, d, all_layers)
}

/// One qubit, one X rotation bound to the single input coordinate. The
/// kernel has the closed form `cos²((x − y)/2)`.
pub fn x_rotation_map() -> EncodingCircuit {
    EncodingCircuit::new(
        1,
        1,
        vec![vec![GateSpec::PauliRotation {
            axis: Axis::X,
            target: 0,
            angle: Angle::feature(0),
        }]],
    )
    .expect("static circuit is valid")
}

/// Look up a builtin feature map by name.
pub fn builtin_circuit(
    name: &str,
    n_qubits: usize,
    layers: usize,
    dim: Option<usize>,
) -> Result<EncodingCircuit> {
    match name {
        "ring" => ring_map(n_qubits, layers, dim),
        "x-rotation" => {
            if n_qubits != 1 || dim.unwrap_or(1) != 1 {
                return Err(Error::invalid(
                    "the x-rotation builtin is a single-qubit, single-dimension map",
                ));
            }
            Ok(x_rotation_map())
        }
        other => Err(Error::invalid(format!(
            "unknown builtin circuit '{other}' (available: ring, x-rotation)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Circuit description files
// ---------------------------------------------------------------------------

/// Parse the key/value circuit description format.
///
/// ```text
/// qubits 2
/// dim 2
/// layer
/// h 0
/// phase 0 x0
/// cnot 0 1
/// ry 0 x0 scale 1/2
/// rz 1 fixed 0.7853981633974483
/// ```
///
/// Blank lines and `#` comments are ignored. `layer` starts a new layer;
/// gates before the first `layer` keyword form layer one. Data bindings are
/// written `x<j>` with an optional `scale p/q` suffix; fixed angles are
/// written `fixed <radians>`.
pub fn parse_circuit(text: &str) -> Result<EncodingCircuit> {
    let mut n_qubits = None;
    let mut dim = None;
    let mut layers: Vec<Vec<GateSpec>> = Vec::new();
    let mut current: Vec<GateSpec> = Vec::new();

    let parse_err = |line: usize, msg: String| Error::Parse { line, msg };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(line_no, format!("expected {what}, got '{s}'")))
        };
        match head {
            "qubits" => {
                let v = rest
                    .first()
                    .ok_or_else(|| parse_err(line_no, "qubits needs a count".into()))?;
                n_qubits = Some(parse_usize(v, "a qubit count")?);
            }
            "dim" => {
                let v = rest
                    .first()
                    .ok_or_else(|| parse_err(line_no, "dim needs a count".into()))?;
                dim = Some(parse_usize(v, "a dimension")?);
            }
            "layer" => {
                if !current.is_empty() {
                    layers.push(std::mem::take(&mut current));
                }
            }
            "h" => {
                let t = rest
                    .first()
                    .ok_or_else(|| parse_err(line_no, "h needs a target qubit".into()))?;
                current.push(GateSpec::Hadamard {
                    target: parse_usize(t, "a qubit index")?,
                });
            }
            "cnot" => {
                if rest.len() != 2 {
                    return Err(parse_err(line_no, "cnot needs control and target".into()));
                }
                current.push(GateSpec::Cnot {
                    control: parse_usize(rest[0], "a qubit index")?,
                    target: parse_usize(rest[1], "a qubit index")?,
                });
            }
            "phase" | "rx" | "ry" | "rz" => {
                if rest.is_empty() {
                    return Err(parse_err(line_no, format!("{head} needs a target qubit")));
                }
                let target = parse_usize(rest[0], "a qubit index")?;
                let angle = parse_angle(&rest[1..], line_no)?;
                let gate = match head {
                    "phase" => GateSpec::PhaseShift { target, angle },
                    "rx" => GateSpec::PauliRotation {
                        axis: Axis::X,
                        target,
                        angle,
                    },
                    "ry" => GateSpec::PauliRotation {
                        axis: Axis::Y,
                        target,
                        angle,
                    },
                    _ => GateSpec::PauliRotation {
                        axis: Axis::Z,
                        target,
                        angle,
                    },
                };
                current.push(gate);
            }
            other => {
                return Err(parse_err(line_no, format!("unknown directive '{other}'")));
            }
        }
    }
    if !current.is_empty() {
        layers.push(current);
    }
    let n_qubits = n_qubits.ok_or_else(|| Error::invalid("circuit file is missing 'qubits'"))?;
    let dim = dim.ok_or_else(|| Error::invalid("circuit file is missing 'dim'"))?;
    EncodingCircuit::new(n_qubits, dim, layers)
}

fn parse_angle(tokens: &[&str], line: usize) -> Result<Angle> {
    let err = |msg: String| Error::Parse { line, msg };
    match tokens.first() {
        Some(&"fixed") => {
            let v = tokens
                .get(1)
                .ok_or_else(|| err("fixed needs a value in radians".into()))?;
            let theta: f64 = v
                .parse()
                .map_err(|_| err(format!("expected a real angle, got '{v}'")))?;
            Ok(Angle::Fixed(theta))
        }
        Some(tok) if tok.starts_with('x') => {
            let index: usize = tok[1..]
                .parse()
                .map_err(|_| err(format!("expected a data binding like x0, got '{tok}'")))?;
            let scale = match tokens.get(1) {
                Some(&"scale") => {
                    let v = tokens
                        .get(2)
                        .ok_or_else(|| err("scale needs a rational like 1/2".into()))?;
                    parse_rational(v).ok_or_else(|| err(format!("bad rational '{v}'")))?
                }
                Some(other) => return Err(err(format!("unexpected token '{other}'"))),
                None => Rational64::new(1, 1),
            };
            Ok(Angle::Feature { index, scale })
        }
        Some(other) => Err(err(format!(
            "expected a data binding (x<j>) or 'fixed', got '{other}'"
        ))),
        None => Err(err("gate is missing its angle".into())),
    }
}

fn parse_rational(s: &str) -> Option<Rational64> {
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.parse().ok()?;
        let d: i64 = den.parse().ok()?;
        if d == 0 {
            return None;
        }
        Some(Rational64::new(n, d))
    } else {
        let n: i64 = s.parse().ok()?;
        Some(Rational64::new(n, 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // Independent 2x2 oracle for exp(-i θ σ/2) built from the closed-form
    // matrix exponential of each Pauli matrix.
    fn rotation_oracle(axis: Axis, theta: f64) -> [[Complex64; 2]; 2] {
        let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        match axis {
            Axis::X => [[c(ch, 0.0), c(0.0, -sh)], [c(0.0, -sh), c(ch, 0.0)]],
            Axis::Y => [[c(ch, 0.0), c(-sh, 0.0)], [c(sh, 0.0), c(ch, 0.0)]],
            Axis::Z => [[c(ch, -sh), c(0.0, 0.0)], [c(0.0, 0.0), c(ch, sh)]],
        }
    }

    #[test]
    fn empty_circuit_is_identity() {
        let circuit = EncodingCircuit::new(2, 1, vec![]).unwrap();
        let state = circuit.apply(&[0.37]).unwrap();
        assert_eq!(state.amplitudes()[0], c(1.0, 0.0));
        assert!(state.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn hadamard_makes_uniform_superposition() {
        let circuit =
            EncodingCircuit::new(1, 1, vec![vec![GateSpec::Hadamard { target: 0 }]]).unwrap();
        let state = circuit.apply(&[1.23]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((state.amplitudes()[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((state.amplitudes()[1] - c(r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn x_rotation_matches_matrix_exponential_oracle() {
        let circuit = x_rotation_map();
        for theta in [std::f64::consts::PI, 0.3, -1.7, 2.9] {
            let state = circuit.apply(&[theta]).unwrap();
            let m = rotation_oracle(Axis::X, theta);
            assert!((state.amplitudes()[0] - m[0][0]).norm() < 1e-12);
            assert!((state.amplitudes()[1] - m[1][0]).norm() < 1e-12);
        }
        // Pinned case: x = π gives amplitudes (0, -i).
        let state = circuit.apply(&[std::f64::consts::PI]).unwrap();
        assert!((state.amplitudes()[0] - c(0.0, 0.0)).norm() < 1e-12);
        assert!((state.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn all_rotation_axes_match_oracle() {
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let circuit = EncodingCircuit::new(
                1,
                1,
                vec![vec![
                    GateSpec::Hadamard { target: 0 },
                    GateSpec::PauliRotation {
                        axis,
                        target: 0,
                        angle: Angle::feature(0),
                    },
                ]],
            )
            .unwrap();
            let theta = 0.8531;
            let state = circuit.apply(&[theta]).unwrap();
            let m = rotation_oracle(axis, theta);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            let expected0 = m[0][0] * r + m[0][1] * r;
            let expected1 = m[1][0] * r + m[1][1] * r;
            assert!((state.amplitudes()[0] - expected0).norm() < 1e-12);
            assert!((state.amplitudes()[1] - expected1).norm() < 1e-12);
        }
    }

    #[test]
    fn x_rotation_kernel_closed_form() {
        let circuit = x_rotation_map();
        let mut rng = derive_rng(11, &[0]);
        for _ in 0..100 {
            let x = rng.gen_range(-10.0..10.0);
            let y = rng.gen_range(-10.0..10.0);
            let k = circuit.kernel(&[x], &[y]).unwrap();
            assert!((k - (0.5 * (x - y)).cos().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_is_one_on_equal_inputs_and_symmetric() {
        let circuit = ring_map(2, 1, None).unwrap();
        let mut rng = derive_rng(5, &[]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let y: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let kxy = circuit.kernel(&x, &y).unwrap();
            let kyx = circuit.kernel(&y, &x).unwrap();
            assert!((kxy - kyx).abs() < 1e-12);
            assert!((-1e-12..=1.0 + 1e-12).contains(&kxy));
            assert!((circuit.kernel(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    // Brute-force oracle: assemble the full 2^n x 2^n unitary by Kronecker
    // products and matrix multiplication, independent of the statevector
    // gate-application path.
    fn dense_unitary(circuit: &EncodingCircuit, x: &[f64]) -> nalgebra::DMatrix<Complex64> {
        let n = circuit.n_qubits();
        let dim = 1usize << n;
        let mut u = nalgebra::DMatrix::<Complex64>::identity(dim, dim);
        for gate in circuit.gates() {
            let g = dense_gate(gate, n, x);
            u = g * u;
        }
        u
    }

    fn dense_gate(gate: &GateSpec, n: usize, x: &[f64]) -> nalgebra::DMatrix<Complex64> {
        let dim = 1usize << n;
        let mut m = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
        let single = |target: usize, g: [[Complex64; 2]; 2]| {
            let mut out = nalgebra::DMatrix::<Complex64>::zeros(dim, dim);
            for col in 0..dim {
                for (r, row_coeffs) in g.iter().enumerate() {
                    let bit = (col >> target) & 1;
                    let row = (col & !(1 << target)) | (r << target);
                    out[(row, col)] += row_coeffs[bit];
                }
            }
            out
        };
        match gate {
            GateSpec::Hadamard { target } => {
                let r = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                m = single(*target, [[r, r], [r, -r]]);
            }
            GateSpec::PhaseShift { target, angle } => {
                let theta = match angle {
                    Angle::Feature { index, scale } => scale.to_f64().unwrap() * x[*index],
                    Angle::Fixed(t) => *t,
                };
                m = single(
                    *target,
                    [
                        [c(1.0, 0.0), c(0.0, 0.0)],
                        [c(0.0, 0.0), Complex64::from_polar(1.0, theta)],
                    ],
                );
            }
            GateSpec::PauliRotation {
                axis,
                target,
                angle,
            } => {
                let theta = match angle {
                    Angle::Feature { index, scale } => scale.to_f64().unwrap() * x[*index],
                    Angle::Fixed(t) => *t,
                };
                m = single(*target, rotation_oracle(*axis, theta));
            }
            GateSpec::Cnot { control, target } => {
                for col in 0..dim {
                    let row = if (col >> control) & 1 == 1 {
                        col ^ (1 << target)
                    } else {
                        col
                    };
                    m[(row, col)] = c(1.0, 0.0);
                }
            }
        }
        m
    }

    #[test]
    fn ring_kernel_matches_dense_unitary_oracle() {
        let circuit = ring_map(2, 1, None).unwrap();
        let mut rng = derive_rng(17, &[]);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let y: Vec<f64> = (0..2)
                .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
                .collect();
            let ux = dense_unitary(&circuit, &x);
            let uy = dense_unitary(&circuit, &y);
            let overlap = (uy.adjoint() * &ux)[(0, 0)];
            let expected = overlap.norm_sqr();
            let got = circuit.kernel(&x, &y).unwrap();
            assert!(
                (got - expected).abs() < 1e-12,
                "kernel {got} vs oracle {expected}"
            );
            assert!((0.0..=1.0 + 1e-12).contains(&got));
        }
    }

    #[test]
    fn gram_single_point_and_exact_entries() {
        let circuit = x_rotation_map();
        let gram = gram_matrix(&circuit, &[vec![0.4]], &ShotModel::exact()).unwrap();
        assert_eq!(gram.nrows(), 1);
        assert_eq!(gram[(0, 0)], 1.0);

        let mut rng = derive_rng(3, &[]);
        let points: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.gen_range(0.0..std::f64::consts::TAU)])
            .collect();
        let gram = gram_matrix(&circuit, &points, &ShotModel::exact()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = (0.5 * (points[i][0] - points[j][0])).cos().powi(2);
                let want = if i == j { 1.0 } else { expected };
                assert!((gram[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shot_estimator_degenerate_and_moments() {
        let mut rng = derive_rng(7, &[]);
        assert_eq!(estimate_with_shots(1.0, 17, &mut rng).unwrap(), 1.0);
        assert_eq!(estimate_with_shots(0.0, 17, &mut rng).unwrap(), 0.0);
        assert!(estimate_with_shots(1.2, 17, &mut rng).is_err());

        // Mean and std oracle: Binomial(t, k)/t has mean k and std
        // sqrt(k(1-k)/t) = 0.05 for k = 0.5, t = 100.
        let reps = 10_000;
        let mut values = Vec::with_capacity(reps);
        for i in 0..reps {
            let mut rng = derive_rng(100, &[i as u64]);
            values.push(estimate_with_shots(0.5, 100, &mut rng).unwrap());
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let std = var.sqrt();
        // 3 sigma of the sampling std of the std estimate, generous.
        assert!((mean - 0.5).abs() < 4.0 * (0.05 / (reps as f64).sqrt()));
        assert!((std - 0.05).abs() < 3.0 * 0.05 / (2.0 * (reps as f64).sqrt()).sqrt());
    }

    #[test]
    fn shot_noise_per_unordered_pair_keeps_symmetry() {
        let circuit = x_rotation_map();
        let points: Vec<Vec<f64>> = vec![vec![0.1], vec![1.9], vec![4.0]];
        let model = ShotModel::finite(25, 99).unwrap();
        let gram = gram_matrix(&circuit, &points, &model).unwrap();
        for i in 0..3 {
            assert_eq!(gram[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(gram[(i, j)], gram[(j, i)]);
            }
        }
        // Same seed, same matrix.
        let again = gram_matrix(&circuit, &points, &model).unwrap();
        assert_eq!(gram, again);
    }

    #[test]
    fn validation_rejects_bad_indices() {
        assert!(EncodingCircuit::new(1, 1, vec![vec![GateSpec::Hadamard { target: 1 }]]).is_err());
        assert!(EncodingCircuit::new(
            2,
            1,
            vec![vec![GateSpec::Cnot {
                control: 0,
                target: 0
            }]]
        )
        .is_err());
        assert!(EncodingCircuit::new(
            1,
            1,
            vec![vec![GateSpec::PhaseShift {
                target: 0,
                angle: Angle::feature(3),
            }]]
        )
        .is_err());
        let circuit = EncodingCircuit::new(1, 2, vec![vec![]]).unwrap();
        assert_eq!(circuit.unbound_dimensions(), vec![0, 1]);
        assert!(circuit.kernel(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn circuit_file_round_trip() {
        let text = "\
# two qubits, two coordinates
qubits 2
dim 2
layer
h 0
h 1
phase 0 x0
phase 1 x1 scale 1/2
cnot 0 1
layer
ry 0 x0
rz 1 fixed 0.5
";
        let circuit = parse_circuit(text).unwrap();
        assert_eq!(circuit.n_qubits(), 2);
        assert_eq!(circuit.dim(), 2);
        assert_eq!(circuit.layer_count(), 2);
        assert_eq!(circuit.gates().count(), 7);
        let k = circuit.kernel(&[0.2, 1.2], &[0.2, 1.2]).unwrap();
        assert!((k - 1.0).abs() < 1e-12);

        let bad = "qubits 1\ndim 1\nwobble 0";
        match parse_circuit(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| derive_rng(9, &[1, 2]).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| derive_rng(9, &[1, 2]).gen()).collect();
        assert_eq!(a, b);
        let c: u64 = derive_rng(9, &[2, 1]).gen();
        assert_ne!(a[0], c);
    }
}
