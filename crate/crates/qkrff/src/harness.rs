//! Experiment orchestration: dataset ingestion, synthetic targets, PCA,
//! risk-versus-feature-count sweeps and minimum-feature searches.
//!
//! Every run is driven by an [`ExperimentConfig`] (a TOML file on the CLI
//! side) and a master seed. Each sweep cell derives its own RNG stream from
//! `(seed, D, repetition)`, so results are reproducible cell by cell and
//! independent of execution order.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::learners::{
    empirical_risk, train_kernel_ridge, train_kernel_svm_dual, train_rff_ridge,
    train_rff_ridge_boxed, train_rff_svm, Dataset, DualBox, DualOptions, Loss, SvmOptions,
};
use crate::qsim::{
    builtin_circuit, derive_rng, estimate_with_shots, gram_matrix, parse_circuit, EncodingCircuit,
    ShotModel,
};
use crate::rff::{SamplingDistribution, Strategy, TrigFeatureMap};
use crate::spectrum::FourierTransform;

// ---------------------------------------------------------------------------
// Dataset IO
// ---------------------------------------------------------------------------

/// Read a dataset from CSV. The header must name a label column `y`; every
/// other column is a feature, in header order. Binary labels written as
/// `{0, 1}` are mapped to `{-1, +1}`; all other label values are kept as-is
/// for regression.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("bad csv header: {e}")))?
        .clone();
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::invalid("csv needs a label column named 'y'"))?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: format!("{e}"),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line,
                msg: format!("'{field}' is not a number"),
            })?;
            if j == y_col {
                y.push(value);
            } else {
                row.push(value);
            }
        }
        x.push(row);
    }
    if x.is_empty() {
        return Err(Error::invalid("csv has no data rows"));
    }
    // {0,1} labels are a documented alias for {-1,+1}.
    if y.iter().all(|v| *v == 0.0 || *v == 1.0) && y.contains(&0.0) {
        for v in y.iter_mut() {
            *v = if *v == 0.0 { -1.0 } else { 1.0 };
        }
    }
    Dataset::new(x, y)
}

/// Write a dataset as `x0,…,x{d-1},y` rows.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    for j in 0..data.dim() {
        out.push_str(&format!("x{j},"));
    }
    out.push_str("y\n");
    for (row, label) in data.x.iter().zip(data.y.iter()) {
        for v in row {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    out
}

/// How synthetic labels are produced from the ground-truth function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    Sign,
    Value,
}

/// Draw `m` points uniformly from `[0, 2π)^d` and label them with a
/// Fourier-series ground truth: `sign(f(x))` or `f(x)` plus Gaussian noise.
pub fn synth_fourier_dataset(
    truth: &crate::dequant::FourierFunction,
    m: usize,
    label_mode: LabelMode,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let d = truth.dims();
    let tau = 2.0 * std::f64::consts::PI;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    for _ in 0..m {
        let point: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..tau)).collect();
        let value = truth.evaluate(&point);
        let label = match label_mode {
            LabelMode::Sign => {
                if value >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LabelMode::Value => value + noise * normal.sample(rng),
        };
        x.push(point);
        y.push(label);
    }
    Dataset::new(x, y)
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// Centering vector plus the top principal directions (columns), ordered by
/// explained variance.
#[derive(Clone, Debug)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaProjection {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let centered = nalgebra::DVector::from_iterator(
            x.len(),
            x.iter().zip(self.mean.iter()).map(|(v, m)| v - m),
        );
        (self.components.transpose() * centered)
            .iter()
            .copied()
            .collect()
    }
}

/// Project centered data onto its top `target_dim` principal components.
pub fn pca_reduce(x: &[Vec<f64>], target_dim: usize) -> Result<(Vec<Vec<f64>>, PcaProjection)> {
    if x.is_empty() {
        return Err(Error::invalid("pca needs at least one row"));
    }
    let (m, p) = (x.len(), x[0].len());
    if target_dim == 0 || target_dim > p {
        return Err(Error::invalid(format!(
            "target dimension must be in 1..={p}"
        )));
    }
    let mean: Vec<f64> = (0..p)
        .map(|j| x.iter().map(|row| row[j]).sum::<f64>() / m as f64)
        .collect();
    let centered = DMatrix::from_fn(m, p, |i, j| x[i][j] - mean[j]);
    let svd = centered.clone().svd(true, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::numeric("svd failed to produce right singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut components = DMatrix::zeros(p, target_dim);
    let mut explained = Vec::with_capacity(target_dim);
    for (k, &idx) in order.iter().take(target_dim).enumerate() {
        let mut col: Vec<f64> = v_t.row(idx).iter().copied().collect();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = col
            .iter()
            .cloned()
            .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
        for (i, v) in col.iter().enumerate() {
            components[(i, k)] = *v;
        }
        let s = svd.singular_values[idx];
        explained.push(s * s / (m.max(2) as f64 - 1.0));
    }
    let projection = PcaProjection {
        mean,
        components,
        explained_variance: explained,
    };
    let reduced = x.iter().map(|row| projection.apply(row)).collect();
    Ok((reduced, projection))
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub circuit_file: Option<String>,
    #[serde(default = "default_one")]
    pub qubits: usize,
    #[serde(default = "default_one")]
    pub layers: usize,
    #[serde(default)]
    pub dim: Option<usize>,
}

fn default_one() -> usize {
    1
}

impl KernelConfig {
    pub fn build(&self) -> Result<EncodingCircuit> {
        match (&self.builtin, &self.circuit_file) {
            (Some(name), None) => builtin_circuit(name, self.qubits, self.layers, self.dim),
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)?;
                parse_circuit(&text)
            }
            _ => Err(Error::Config(
                "kernel needs exactly one of 'builtin' or 'circuit_file'".into(),
            )),
        }
    }
}

/// One Fourier term of an explicit synthetic ground truth; its conjugate
/// partner is added automatically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientTerm {
    pub freq: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub dim: usize,
    #[serde(default = "default_max_freq")]
    pub max_freq: i64,
    #[serde(default = "default_terms")]
    pub terms: usize,
    #[serde(default = "default_label_mode")]
    pub label_mode: LabelMode,
    #[serde(default)]
    pub noise: f64,
    /// Explicit ground-truth spectrum; when absent a random low-frequency
    /// target is drawn from the seed.
    #[serde(default)]
    pub coefficients: Option<Vec<CoefficientTerm>>,
}

impl SyntheticConfig {
    pub fn ground_truth(&self, seed: u64) -> Result<crate::dequant::FourierFunction> {
        match &self.coefficients {
            Some(terms) => {
                let mut full = Vec::with_capacity(2 * terms.len());
                for t in terms {
                    let c = num_complex::Complex64::new(t.re, t.im);
                    let neg: Vec<i64> = t.freq.iter().map(|w| -w).collect();
                    full.push((t.freq.clone(), c));
                    if neg != t.freq {
                        full.push((neg, c.conj()));
                    }
                }
                crate::dequant::FourierFunction::new(self.dim, 1, full)
            }
            None => {
                let mut rng = derive_rng(seed, &[3]);
                crate::dequant::FourierFunction::random_low_frequency(
                    self.dim,
                    self.max_freq,
                    self.terms,
                    &mut rng,
                )
            }
        }
    }
}

fn default_max_freq() -> i64 {
    1
}

fn default_terms() -> usize {
    3
}

fn default_label_mode() -> LabelMode {
    LabelMode::Sign
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(default)]
    pub csv: Option<String>,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub pca_dim: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: String,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    #[serde(default)]
    pub dual_box: Option<String>,
}

fn default_eta0() -> f64 {
    1.0
}

fn default_epochs() -> usize {
    200
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub strategy: String,
    pub d_grid: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default)]
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub shots: Option<u64>,
    #[serde(default)]
    pub noisy_inference: bool,
    #[serde(default)]
    pub risk_threshold: Option<f64>,
    #[serde(default)]
    pub out: Option<String>,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub data: DataConfig,
    pub model: ModelConfig,
    pub sampling: SamplingConfig,
}

fn default_id() -> String {
    "experiment".into()
}

fn default_reps() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config(
                "train and test sizes must be positive".into(),
            ));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.sampling.d_grid.is_empty() {
            return Err(Error::Config("d_grid must be nonempty".into()));
        }
        if !self.sampling.d_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("d_grid must be strictly increasing".into()));
        }
        if !matches!(self.model.kind.as_str(), "rff-svm" | "rff-ridge") {
            return Err(Error::Config(format!(
                "model kind '{}' not sweepable (use rff-svm or rff-ridge)",
                self.model.kind
            )));
        }
        if self.data.csv.is_none() && self.data.synthetic.is_none() {
            return Err(Error::Config(
                "data needs either 'csv' or a [data.synthetic] section".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; recorded next to results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn is_classification(&self) -> bool {
        self.model.kind == "rff-svm"
    }

    fn dual_box(&self) -> Result<DualBox> {
        match self.model.dual_box.as_deref() {
            None | Some("inverse-lambda-m") => Ok(DualBox::InverseLambdaM),
            Some("inverse-lambda") => Ok(DualBox::InverseLambda),
            Some(other) => Err(Error::Config(format!("unknown dual box rule '{other}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One sweep cell: a trained model's train/test risks.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub config_id: String,
    pub model: String,
    pub strategy: String,
    pub d_features: usize,
    pub rep: usize,
    pub train_risk: f64,
    pub test_risk: f64,
    /// Wall time of the cell; excluded from the CSV by default so result
    /// files stay byte-identical across runs.
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Documented column order. Timings are opt-in (they are the one
    /// non-reproducible column).
    pub fn to_csv(&self, include_timings: bool) -> String {
        let mut out = String::from("config_id,model,strategy,d_features,rep,train_risk,test_risk");
        if include_timings {
            out.push_str(",wall_time_ms");
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                r.config_id, r.model, r.strategy, r.d_features, r.rep, r.train_risk, r.test_risk
            ));
            if include_timings {
                out.push_str(&format!(",{}", r.wall_time_ms));
            }
            out.push('\n');
        }
        out
    }

    /// Mean test risk per RFF feature count, ascending in `d`.
    pub fn mean_test_risk_by_d(&self) -> Vec<(usize, f64)> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.model == "rff") {
            let e = acc.entry(r.d_features).or_insert((0.0, 0));
            e.0 += r.test_risk;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(d, (sum, n))| (d, sum / n as f64))
            .collect()
    }
}

struct PreparedData {
    train: Dataset,
    test: Dataset,
}

fn prepare_data(config: &ExperimentConfig, circuit_dim: usize) -> Result<PreparedData> {
    let needed = config.train_size + config.test_size;
    let full = if let Some(path) = &config.data.csv {
        let mut data = load_csv(Path::new(path))?;
        if let Some(k) = config.data.pca_dim {
            let (reduced, _) = pca_reduce(&data.x, k)?;
            data = Dataset::new(reduced, data.y)?;
        }
        data
    } else {
        let synth = config.data.synthetic.as_ref().expect("validated");
        let truth = synth.ground_truth(config.seed)?;
        let mut data_rng = derive_rng(config.seed, &[2]);
        synth_fourier_dataset(&truth, needed, synth.label_mode, synth.noise, &mut data_rng)?
    };
    if full.len() < needed {
        return Err(Error::Config(format!(
            "dataset has {} rows but train+test needs {needed}",
            full.len()
        )));
    }
    if full.dim() != circuit_dim {
        return Err(Error::Config(format!(
            "data dimension {} does not match the kernel's input dimension {circuit_dim}",
            full.dim()
        )));
    }
    // Disjoint by construction: leading rows train, following rows test.
    let train = Dataset::new(
        full.x[..config.train_size].to_vec(),
        full.y[..config.train_size].to_vec(),
    )?;
    let test = Dataset::new(
        full.x[config.train_size..needed].to_vec(),
        full.y[config.train_size..needed].to_vec(),
    )?;
    if config.is_classification() {
        train.validate_classification()?;
        test.validate_classification()?;
    }
    Ok(PreparedData { train, test })
}

fn build_distribution(
    config: &ExperimentConfig,
    circuit: &EncodingCircuit,
) -> Result<SamplingDistribution> {
    match Strategy::parse(&config.sampling.strategy)? {
        Strategy::Uniform => SamplingDistribution::uniform_for_circuit(circuit),
        Strategy::Convolutional => SamplingDistribution::convolutional(circuit),
        Strategy::TruncatedConvolutional => SamplingDistribution::truncated_convolutional(circuit),
        Strategy::Diagonal => {
            let ft = FourierTransform::of_circuit(circuit)?;
            SamplingDistribution::diagonal(&ft.diagonal()?)
        }
        Strategy::SqrtDiagonal => {
            let ft = FourierTransform::of_circuit(circuit)?;
            SamplingDistribution::sqrt_diagonal(&ft.diagonal()?)
        }
        other => Err(Error::Config(format!(
            "strategy {other:?} needs explicit inputs; use the check subcommand"
        ))),
    }
}

fn feature_matrix(map: &TrigFeatureMap, data: &Dataset, unnormalized: bool) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|x| {
            if unnormalized {
                map.evaluate_unnormalized(x)
            } else {
                map.evaluate(x)
            }
        })
        .collect();
    DMatrix::from_fn(data.len(), 2 * map.d_samples(), |i, j| rows[i][j])
}

fn kernel_rows_for_test(
    circuit: &EncodingCircuit,
    train: &Dataset,
    test_point: &[f64],
    shots: Option<u64>,
    rng_seed: u64,
    tag: u64,
) -> Result<Vec<f64>> {
    train
        .x
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let k = circuit.kernel(xi, test_point)?;
            match shots {
                None => Ok(k),
                Some(t) => {
                    let mut rng = derive_rng(rng_seed, &[4, tag, i as u64]);
                    estimate_with_shots(k.clamp(0.0, 1.0), t, &mut rng)
                }
            }
        })
        .collect()
}

/// Train the kernel baseline (dual SVM or kernel ridge) once and report its
/// train/test risks.
fn baseline_row(
    config: &ExperimentConfig,
    circuit: &EncodingCircuit,
    data: &PreparedData,
) -> Result<SweepRow> {
    let started = Instant::now();
    let shot_model = match config.shots {
        None => ShotModel::exact(),
        Some(t) => ShotModel::finite(t, splitmix_seed(config.seed, 0))?,
    };
    let gram_raw = gram_matrix(circuit, &data.train.x, &shot_model)?;
    let (gram, _) = crate::learners::psd_repair(&gram_raw);
    let inference_shots = if config.noisy_inference {
        config.shots
    } else {
        None
    };
    let loss = if config.is_classification() {
        Loss::ZeroOne
    } else {
        Loss::Mse
    };
    let lambda = if config.model.lambda > 0.0 {
        config.model.lambda
    } else {
        1e-3
    };
    let (train_decision, test_decision, model_name) = if config.is_classification() {
        let opts = DualOptions {
            box_rule: config.dual_box()?,
            ..DualOptions::default()
        };
        let solution = train_kernel_svm_dual(&gram, &data.train.y, lambda, &opts)?;
        let train_decision: Vec<f64> = (0..data.train.len())
            .map(|i| {
                let row: Vec<f64> = (0..data.train.len()).map(|j| gram[(j, i)]).collect();
                solution.decision(&data.train.y, &row)
            })
            .collect();
        let test_decision: Vec<f64> = data
            .test
            .x
            .iter()
            .enumerate()
            .map(|(j, xt)| {
                let row = kernel_rows_for_test(
                    circuit,
                    &data.train,
                    xt,
                    inference_shots,
                    config.seed,
                    j as u64,
                )?;
                Ok(solution.decision(&data.train.y, &row))
            })
            .collect::<Result<_>>()?;
        (train_decision, test_decision, "qsvm")
    } else {
        let ridge = train_kernel_ridge(&gram, &data.train.y, lambda)?;
        let train_decision: Vec<f64> = (0..data.train.len())
            .map(|i| {
                let row: Vec<f64> = (0..data.train.len()).map(|j| gram[(j, i)]).collect();
                ridge.decision(&row)
            })
            .collect();
        let test_decision: Vec<f64> = data
            .test
            .x
            .iter()
            .enumerate()
            .map(|(j, xt)| {
                let row = kernel_rows_for_test(
                    circuit,
                    &data.train,
                    xt,
                    inference_shots,
                    config.seed,
                    j as u64,
                )?;
                Ok(ridge.decision(&row))
            })
            .collect::<Result<_>>()?;
        (train_decision, test_decision, "qkrr")
    };
    Ok(SweepRow {
        config_id: config.id.clone(),
        model: model_name.into(),
        strategy: "kernel".into(),
        d_features: 0,
        rep: 0,
        train_risk: empirical_risk(&train_decision, &data.train.y, loss)?,
        test_risk: empirical_risk(&test_decision, &data.test.y, loss)?,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn splitmix_seed(seed: u64, tag: u64) -> u64 {
    // Stable per-purpose sub-seed.
    seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(tag)
}

/// One RFF cell: sample frequencies, train, evaluate.
fn rff_cell(
    config: &ExperimentConfig,
    dist: &SamplingDistribution,
    data: &PreparedData,
    d_features: usize,
    rep: usize,
) -> Result<SweepRow> {
    let started = Instant::now();
    let mut rng = derive_rng(config.seed, &[1, d_features as u64, rep as u64]);
    let freqs = dist.sample(d_features, &mut rng);
    let map = TrigFeatureMap::new(freqs, dist.denom());
    let loss = if config.is_classification() {
        Loss::ZeroOne
    } else {
        Loss::Mse
    };
    let (train_decision, test_decision) = if config.is_classification() {
        let z = feature_matrix(&map, &data.train, true);
        let c = config.model.c.unwrap_or(1e6);
        let opts = SvmOptions {
            epochs: config.model.epochs,
            eta0: config.model.eta0,
            ..SvmOptions::default()
        };
        let solution = train_rff_svm(&z, &data.train.y, config.model.lambda, c, d_features, &opts)?;
        let train_decision: Vec<f64> = (&z * &solution.beta).iter().copied().collect();
        let test_decision: Vec<f64> = data
            .test
            .x
            .iter()
            .map(|x| {
                map.evaluate_unnormalized(x)
                    .iter()
                    .zip(solution.beta.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        (train_decision, test_decision)
    } else {
        let z = feature_matrix(&map, &data.train, false);
        let lambda = if config.model.lambda > 0.0 {
            config.model.lambda
        } else {
            1e-6
        };
        let beta = match config.model.c {
            Some(c) => train_rff_ridge_boxed(&z, &data.train.y, lambda, c, d_features)?,
            None => train_rff_ridge(&z, &data.train.y, lambda)?,
        };
        let train_decision: Vec<f64> = (&z * &beta).iter().copied().collect();
        let test_decision: Vec<f64> = data
            .test
            .x
            .iter()
            .map(|x| {
                map.evaluate(x)
                    .iter()
                    .zip(beta.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        (train_decision, test_decision)
    };
    Ok(SweepRow {
        config_id: config.id.clone(),
        model: "rff".into(),
        strategy: config.sampling.strategy.clone(),
        d_features,
        rep,
        train_risk: empirical_risk(&train_decision, &data.train.y, loss)?,
        test_risk: empirical_risk(&test_decision, &data.test.y, loss)?,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Full sweep: every (D, repetition) RFF cell plus the kernel baseline.
/// Rows are sorted, so output is independent of evaluation order.
pub fn risk_vs_d_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let circuit = config.kernel.build()?;
    if !circuit.unbound_dimensions().is_empty() {
        eprintln!(
            "warning: circuit ignores input dimensions {:?}",
            circuit.unbound_dimensions()
        );
    }
    let data = prepare_data(config, circuit.dim())?;
    let dist = build_distribution(config, &circuit)?;
    let mut rows = Vec::new();
    rows.push(baseline_row(config, &circuit, &data)?);
    for &d_features in &config.sampling.d_grid {
        for rep in 0..config.repetitions {
            rows.push(rff_cell(config, &dist, &data, d_features, rep)?);
        }
    }
    rows.sort_by(|a, b| (&a.model, a.d_features, a.rep).cmp(&(&b.model, b.d_features, b.rep)));
    Ok(SweepResult {
        config_hash: config.hash(),
        seed: config.seed,
        rows,
    })
}

/// Outcome of a minimum-feature search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinD {
    Reached(usize),
    NotReached,
}

/// Smallest grid entry whose mean test risk (over repetitions) is at or
/// below the threshold.
pub fn min_d_to_risk(result: &SweepResult, threshold: f64) -> MinD {
    for (d, risk) in result.mean_test_risk_by_d() {
        if risk <= threshold {
            return MinD::Reached(d);
        }
    }
    MinD::NotReached
}

/// Least-squares fit of `log y` against `log x`: returns `(slope, r²)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::invalid("fit needs at least two points"));
    }
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(Error::invalid("log-log fit needs positive coordinates"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = logs.iter().map(|(_, y)| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Ok((slope, r2))
}

// ---------------------------------------------------------------------------
// Trained-model files
// ---------------------------------------------------------------------------

/// Serialized model emitted by the `train` subcommand: weights plus the
/// sampled frequencies (primal) or coefficients plus training data (dual).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelFile {
    RffSvm {
        strategy: String,
        denom: i64,
        frequencies: Vec<Vec<i64>>,
        beta: Vec<f64>,
        lambda: f64,
        c: f64,
        seed: u64,
    },
    RffRidge {
        strategy: String,
        denom: i64,
        frequencies: Vec<Vec<i64>>,
        beta: Vec<f64>,
        lambda: f64,
        seed: u64,
    },
    Qsvm {
        kernel: KernelConfig,
        alphas: Vec<f64>,
        bias: f64,
        train_x: Vec<Vec<f64>>,
        train_y: Vec<f64>,
        lambda: f64,
    },
    Qkrr {
        kernel: KernelConfig,
        alphas: Vec<f64>,
        train_x: Vec<Vec<f64>>,
        lambda: f64,
    },
}

impl ModelFile {
    /// Decision value at a point.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        match self {
            ModelFile::RffSvm {
                denom,
                frequencies,
                beta,
                ..
            } => {
                let map = TrigFeatureMap::new(frequencies.clone(), *denom);
                Ok(map
                    .evaluate_unnormalized(x)
                    .iter()
                    .zip(beta.iter())
                    .map(|(a, b)| a * b)
                    .sum())
            }
            ModelFile::RffRidge {
                denom,
                frequencies,
                beta,
                ..
            } => {
                let map = TrigFeatureMap::new(frequencies.clone(), *denom);
                Ok(map
                    .evaluate(x)
                    .iter()
                    .zip(beta.iter())
                    .map(|(a, b)| a * b)
                    .sum())
            }
            ModelFile::Qsvm {
                kernel,
                alphas,
                bias,
                train_x,
                train_y,
                ..
            } => {
                let circuit = kernel.build()?;
                let mut acc = *bias;
                for ((xi, yi), a) in train_x.iter().zip(train_y.iter()).zip(alphas.iter()) {
                    acc += a * yi * circuit.kernel(xi, x)?;
                }
                Ok(acc)
            }
            ModelFile::Qkrr {
                kernel,
                alphas,
                train_x,
                ..
            } => {
                let circuit = kernel.build()?;
                let mut acc = 0.0;
                for (xi, a) in train_x.iter().zip(alphas.iter()) {
                    acc += a * circuit.kernel(xi, x)?;
                }
                Ok(acc)
            }
        }
    }
}
