//! Command-line interface: simulate kernels, extract spectra, measure
//! approximation error, train models, audit dequantization conditions and
//! run risk sweeps.
//!
//! Every subcommand is deterministic given its `--seed`: rerunning with the
//! same arguments produces byte-identical files.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use crate::dequant::{condition_report, ConditionInputs, FourierFunction};
use crate::error::{Error, Result};
use crate::harness::{
    load_csv, min_d_to_risk, risk_vs_d_sweep, ExperimentConfig, KernelConfig, MinD, ModelFile,
};
use crate::learners::{
    empirical_risk, train_kernel_ridge, train_kernel_svm_dual, train_rff_ridge, train_rff_svm,
    DualOptions, Loss, SvmOptions,
};
use crate::qsim::{derive_rng, gram_matrix, EncodingCircuit, ShotModel};
use crate::rff::{
    approx_kernel_cholesky, approx_kernel_eigen, pointwise_error, SamplingDistribution, Strategy,
    TrigFeatureMap,
};
use crate::spectrum::{
    diagonal_to_csv, transform_from_text, transform_to_text, DiagonalDistribution,
    FourierTransform, FrequencySupport,
};

#[derive(Parser)]
#[command(
    name = "qkrff",
    about = "Quantum-kernel spectra, random-feature surrogates and dequantization checks",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Builtin feature map: `ring` or `x-rotation`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long, default_value_t = 1)]
    qubits: usize,
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Input dimension override (defaults to one coordinate per qubit).
    #[arg(long)]
    dim: Option<usize>,
    /// Circuit description file (alternative to --kernel).
    #[arg(long)]
    circuit: Option<PathBuf>,
}

impl KernelArgs {
    fn to_config(&self) -> Result<KernelConfig> {
        if self.kernel.is_some() == self.circuit.is_some() {
            return Err(Error::Config(
                "give exactly one of --kernel or --circuit".into(),
            ));
        }
        Ok(KernelConfig {
            builtin: self.kernel.clone(),
            circuit_file: self
                .circuit
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
            qubits: self.qubits,
            layers: self.layers,
            dim: self.dim,
        })
    }

    fn build(&self) -> Result<EncodingCircuit> {
        self.to_config()?.build()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a fidelity kernel at a pair of points or over a random
    /// point set as a Gram matrix.
    SimulateKernel {
        #[command(flatten)]
        kernel: KernelArgs,
        /// First point, comma-separated.
        #[arg(long)]
        x: Option<String>,
        /// Second point, comma-separated.
        #[arg(long)]
        y: Option<String>,
        /// Number of uniform random points for a Gram matrix.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite shots per Gram entry (omit for exact values).
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the diagonal distribution (and optionally the full Fourier
    /// transform) of a kernel.
    Spectrum {
        #[command(flatten)]
        kernel: KernelArgs,
        /// CSV output for the diagonal distribution.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional text output for the full transform matrix.
        #[arg(long)]
        f_out: Option<PathBuf>,
        /// Monte Carlo sample count for supports too large for exact
        /// extraction (skips the transform matrix).
        #[arg(long)]
        estimate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure pointwise kernel-approximation error of the factorization
    /// feature maps.
    Approx {
        #[command(flatten)]
        kernel: KernelArgs,
        /// `cholesky` or `eigen`.
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        d_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random evaluation pairs.
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on a CSV dataset and emit a model file plus risk
    /// metrics as JSON lines.
    Train {
        /// Training data CSV (label column `y`).
        #[arg(long)]
        data: PathBuf,
        /// Held-out data CSV for test risks.
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// `rff-svm`, `rff-ridge`, `qsvm` or `qkrr`.
        #[arg(long)]
        model: String,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        /// Search radius for the constrained SVM.
        #[arg(long)]
        c: Option<f64>,
        /// Sampling strategy for rff models.
        #[arg(long, default_value = "convolutional")]
        strategy: String,
        #[arg(long, default_value_t = 100)]
        d_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite shots for the Gram matrix of kernel models.
        #[arg(long)]
        shots: Option<u64>,
        /// Dual box rule: `inverse-lambda-m` (default) or `inverse-lambda`.
        #[arg(long)]
        dual_box: Option<String>,
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Evaluate dequantization conditions from spectra and coefficients.
    Check {
        /// Fourier transform file (from `spectrum --f-out`).
        #[arg(long)]
        f_file: Option<PathBuf>,
        /// Diagonal distribution CSV (from `spectrum --out`).
        #[arg(long)]
        q_file: Option<PathBuf>,
        /// Coefficient CSV with columns `w0..wd,re,im`.
        #[arg(long)]
        coeffs: Option<PathBuf>,
        /// Sampling distribution to audit: `uniform`, `diagonal`,
        /// `sqrt-diagonal` or `coefficient-aligned`.
        #[arg(long)]
        dist: Option<String>,
        /// Numeric stand-in for the poly(d) budget.
        #[arg(long)]
        poly_budget: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a risk-versus-feature-count sweep from a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-time columns (breaks byte-reproducibility).
        #[arg(long)]
        timings: bool,
    },
    /// Smallest feature count reaching a risk threshold.
    MinD {
        #[arg(long)]
        config: PathBuf,
        /// Risk threshold; falls back to the config's `risk_threshold`.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_point(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("'{t}' is not a number")))
        })
        .collect()
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn load_q_csv(path: &Path) -> Result<DiagonalDistribution> {
    let text = std::fs::read_to_string(path)?;
    let mut freqs: Vec<Vec<i64>> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected frequency columns plus a probability".into(),
            });
        }
        let freq: Vec<i64> = fields[..fields.len() - 1]
            .iter()
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("'{f}' is not a number"),
                })?;
                Ok(v.round() as i64)
            })
            .collect::<Result<_>>()?;
        let p: f64 = fields[fields.len() - 1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                line: i + 1,
                msg: "bad probability".into(),
            })?;
        freqs.push(freq);
        probs.push(p);
    }
    if freqs.is_empty() {
        return Err(Error::invalid("q file has no rows"));
    }
    let dims = freqs[0].len();
    let mut per_dim: Vec<BTreeSet<i64>> = vec![BTreeSet::new(); dims];
    for f in &freqs {
        for (j, w) in f.iter().enumerate() {
            per_dim[j].insert(*w);
        }
    }
    let support = FrequencySupport::from_per_dim(
        per_dim
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
        1,
    )?;
    let mut q = vec![0.0; support.len()];
    for (f, p) in freqs.iter().zip(probs.iter()) {
        let idx = support
            .index_of(f)
            .ok_or_else(|| Error::invalid("q file frequencies do not form a product support"))?;
        q[idx] = *p;
    }
    DiagonalDistribution::new(support, q)
}

fn load_coeffs_csv(path: &Path) -> Result<FourierFunction> {
    let text = std::fs::read_to_string(path)?;
    let mut terms: Vec<(Vec<i64>, Complex64)> = Vec::new();
    let mut dims = 0;
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: i + 1,
                msg: "expected frequency columns plus re,im".into(),
            });
        }
        dims = fields.len() - 2;
        let freq: Vec<i64> = fields[..dims]
            .iter()
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("'{f}' is not a number"),
                })?;
                Ok(v.round() as i64)
            })
            .collect::<Result<_>>()?;
        let re: f64 = fields[dims].trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: "bad real part".into(),
        })?;
        let im: f64 = fields[dims + 1].trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: "bad imaginary part".into(),
        })?;
        terms.push((freq, Complex64::new(re, im)));
    }
    FourierFunction::new(dims.max(1), 1, terms)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulateKernel {
            kernel,
            x,
            y,
            points,
            seed,
            shots,
            out,
        } => {
            let circuit = kernel.build()?;
            warn_unbound(&circuit);
            match (x, y, points) {
                (Some(x), Some(y), None) => {
                    let xv = parse_point(&x)?;
                    let yv = parse_point(&y)?;
                    let k = circuit.kernel(&xv, &yv)?;
                    emit(&out, &format!("{k}\n"))
                }
                (None, None, Some(m)) => {
                    let mut rng = derive_rng(seed, &[10]);
                    let tau = 2.0 * std::f64::consts::PI;
                    let pts: Vec<Vec<f64>> = (0..m)
                        .map(|_| {
                            (0..circuit.dim())
                                .map(|_| rand::Rng::gen_range(&mut rng, 0.0..tau))
                                .collect()
                        })
                        .collect();
                    let model = match shots {
                        None => ShotModel::exact(),
                        Some(t) => ShotModel::finite(t, seed)?,
                    };
                    let gram = gram_matrix(&circuit, &pts, &model)?;
                    let mut text = String::new();
                    for i in 0..m {
                        let row: Vec<String> =
                            (0..m).map(|j| format!("{}", gram[(i, j)])).collect();
                        text.push_str(&row.join(","));
                        text.push('\n');
                    }
                    emit(&out, &text)
                }
                _ => Err(Error::Config("give either --x and --y, or --points".into())),
            }
        }
        Command::Spectrum {
            kernel,
            out,
            f_out,
            estimate,
            seed,
        } => {
            let circuit = kernel.build()?;
            warn_unbound(&circuit);
            match estimate {
                None => {
                    let ft = FourierTransform::of_circuit(&circuit)?;
                    let q = ft.diagonal()?;
                    emit(&out, &diagonal_to_csv(&q))?;
                    if let Some(path) = f_out {
                        std::fs::write(path, transform_to_text(&ft))?;
                    }
                }
                Some(samples) => {
                    if f_out.is_some() {
                        return Err(Error::Config(
                            "--f-out is unavailable with --estimate (only the diagonal                              is estimated)"
                                .into(),
                        ));
                    }
                    let support = crate::spectrum::FrequencySupport::from_circuit(&circuit)?;
                    let mut rng = derive_rng(seed, &[40]);
                    let est = crate::spectrum::estimate_diagonal(
                        |x, y| circuit.kernel(x, y).expect("validated dimensions"),
                        &support,
                        samples,
                        &mut rng,
                    )?;
                    emit(&out, &diagonal_to_csv(&est.dist))?;
                }
            }
            Ok(())
        }
        Command::Approx {
            kernel,
            algorithm,
            d_samples,
            seed,
            pairs,
            out,
        } => {
            let circuit = kernel.build()?;
            let ft = FourierTransform::of_circuit(&circuit)?;
            let mut rng = derive_rng(seed, &[20]);
            let map = match algorithm.as_str() {
                "cholesky" => approx_kernel_cholesky(&ft, d_samples, &mut rng)?,
                "eigen" => approx_kernel_eigen(&ft, d_samples, &mut rng)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown algorithm '{other}' (use cholesky or eigen)"
                    )))
                }
            };
            let tau = 2.0 * std::f64::consts::PI;
            let mut pair_rng = derive_rng(seed, &[21]);
            let eval_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs.max(1))
                .map(|_| {
                    let a = (0..circuit.dim())
                        .map(|_| rand::Rng::gen_range(&mut pair_rng, 0.0..tau))
                        .collect();
                    let b = (0..circuit.dim())
                        .map(|_| rand::Rng::gen_range(&mut pair_rng, 0.0..tau))
                        .collect();
                    (a, b)
                })
                .collect();
            let err = pointwise_error(
                |a, b| circuit.kernel(a, b).expect("validated dimensions"),
                &map,
                &eval_pairs,
            )?;
            let text = format!(
                "d_samples,seed,max_err,mean_err\n{},{},{},{}\n",
                d_samples, seed, err.max, err.mean
            );
            emit(&out, &text)
        }
        Command::Train {
            data,
            test_data,
            model,
            kernel,
            lambda,
            c,
            strategy,
            d_samples,
            seed,
            shots,
            dual_box,
            model_out,
            metrics_out,
        } => run_train(TrainArgs {
            data,
            test_data,
            model,
            kernel,
            lambda,
            c,
            strategy,
            d_samples,
            seed,
            shots,
            dual_box,
            model_out,
            metrics_out,
        }),
        Command::Check {
            f_file,
            q_file,
            coeffs,
            dist,
            poly_budget,
            out,
        } => {
            let transform = f_file
                .map(|p| -> Result<FourierTransform> {
                    transform_from_text(&std::fs::read_to_string(p)?)
                })
                .transpose()?;
            let diagonal = match (&q_file, &transform) {
                (Some(path), _) => Some(load_q_csv(path)?),
                (None, Some(ft)) => Some(ft.diagonal()?),
                (None, None) => None,
            };
            let function = coeffs.map(|p| load_coeffs_csv(&p)).transpose()?;
            let sampling = match dist.as_deref() {
                None => None,
                Some("uniform") => {
                    let q = diagonal.as_ref().ok_or_else(|| {
                        Error::Config("uniform needs a q file or transform".into())
                    })?;
                    Some(SamplingDistribution::uniform(
                        q.support().per_dim(),
                        q.support().denom(),
                    )?)
                }
                Some("diagonal") => {
                    let q = diagonal.as_ref().ok_or_else(|| {
                        Error::Config("diagonal needs a q file or transform".into())
                    })?;
                    Some(SamplingDistribution::diagonal(q)?)
                }
                Some("sqrt-diagonal") => {
                    let q = diagonal.as_ref().ok_or_else(|| {
                        Error::Config("sqrt-diagonal needs a q file or transform".into())
                    })?;
                    Some(SamplingDistribution::sqrt_diagonal(q)?)
                }
                Some("coefficient-aligned") => {
                    let f = function.as_ref().ok_or_else(|| {
                        Error::Config("coefficient-aligned needs --coeffs".into())
                    })?;
                    Some(crate::dequant::aligned_distribution(f)?)
                }
                Some(other) => {
                    return Err(Error::Config(format!("unknown distribution '{other}'")))
                }
            };
            let report = condition_report(
                &ConditionInputs {
                    sampling: sampling.as_ref(),
                    diagonal: diagonal.as_ref(),
                    transform: transform.as_ref(),
                    function: function.as_ref(),
                },
                poly_budget,
            )?;
            print!("{}", report.render_table());
            if let Some(path) = out {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| Error::numeric(format!("json encoding failed: {e}")))?;
                std::fs::write(path, json + "\n")?;
            }
            Ok(())
        }
        Command::Sweep {
            config,
            seed,
            out,
            timings,
        } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let result = risk_vs_d_sweep(&config)?;
            let csv = result.to_csv(timings);
            let out_path = out
                .or_else(|| config.out.as_ref().map(PathBuf::from))
                .ok_or_else(|| Error::Config("no output path (set --out or config.out)".into()))?;
            std::fs::write(&out_path, &csv)?;
            let sidecar = serde_json::json!({
                "config_hash": result.config_hash,
                "seed": result.seed,
                "rows": result.rows.len(),
            });
            std::fs::write(
                out_path.with_extension("meta.json"),
                serde_json::to_string_pretty(&sidecar)
                    .map_err(|e| Error::numeric(format!("json encoding failed: {e}")))?
                    + "\n",
            )?;
            println!("wrote {} rows to {}", result.rows.len(), out_path.display());
            Ok(())
        }
        Command::MinD {
            config,
            threshold,
            seed,
        } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let threshold = threshold
                .or(config.risk_threshold)
                .ok_or_else(|| Error::Config("no threshold (set --threshold or config)".into()))?;
            let result = risk_vs_d_sweep(&config)?;
            match min_d_to_risk(&result, threshold) {
                MinD::Reached(d) => println!("min_d,{d}"),
                MinD::NotReached => println!("min_d,not-reached"),
            }
            Ok(())
        }
    }
}

fn warn_unbound(circuit: &EncodingCircuit) {
    let unbound = circuit.unbound_dimensions();
    if !unbound.is_empty() {
        eprintln!("warning: circuit ignores input dimensions {unbound:?}");
    }
}

struct TrainArgs {
    data: PathBuf,
    test_data: Option<PathBuf>,
    model: String,
    kernel: KernelArgs,
    lambda: f64,
    c: Option<f64>,
    strategy: String,
    d_samples: usize,
    seed: u64,
    shots: Option<u64>,
    dual_box: Option<String>,
    model_out: Option<PathBuf>,
    metrics_out: Option<PathBuf>,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let train = load_csv(&args.data)?;
    let test = args.test_data.as_ref().map(|p| load_csv(p)).transpose()?;
    let classification = matches!(args.model.as_str(), "rff-svm" | "qsvm");
    if classification {
        train.validate_classification()?;
    }

    let (model_file, train_decision): (ModelFile, Vec<f64>) = match args.model.as_str() {
        "rff-svm" | "rff-ridge" => {
            let circuit = args.kernel.build()?;
            if circuit.dim() != train.dim() {
                return Err(Error::Config(format!(
                    "kernel dimension {} does not match data dimension {}",
                    circuit.dim(),
                    train.dim()
                )));
            }
            let dist = match Strategy::parse(&args.strategy)? {
                Strategy::Uniform => SamplingDistribution::uniform_for_circuit(&circuit)?,
                Strategy::Convolutional => SamplingDistribution::convolutional(&circuit)?,
                Strategy::TruncatedConvolutional => {
                    SamplingDistribution::truncated_convolutional(&circuit)?
                }
                Strategy::Diagonal => {
                    let ft = FourierTransform::of_circuit(&circuit)?;
                    SamplingDistribution::diagonal(&ft.diagonal()?)?
                }
                Strategy::SqrtDiagonal => {
                    let ft = FourierTransform::of_circuit(&circuit)?;
                    SamplingDistribution::sqrt_diagonal(&ft.diagonal()?)?
                }
                other => {
                    return Err(Error::Config(format!(
                        "strategy {other:?} is not available for training"
                    )))
                }
            };
            let mut rng = derive_rng(args.seed, &[30]);
            let freqs = dist.sample(args.d_samples, &mut rng);
            let map = TrigFeatureMap::new(freqs.clone(), dist.denom());
            if args.model == "rff-svm" {
                let rows: Vec<Vec<f64>> = train
                    .x
                    .iter()
                    .map(|x| map.evaluate_unnormalized(x))
                    .collect();
                let z =
                    nalgebra::DMatrix::from_fn(train.len(), 2 * args.d_samples, |i, j| rows[i][j]);
                let c = args.c.unwrap_or(1e6);
                let sol = train_rff_svm(
                    &z,
                    &train.y,
                    args.lambda,
                    c,
                    args.d_samples,
                    &SvmOptions::default(),
                )?;
                let decision = (&z * &sol.beta).iter().copied().collect();
                (
                    ModelFile::RffSvm {
                        strategy: args.strategy.clone(),
                        denom: dist.denom(),
                        frequencies: freqs,
                        beta: sol.beta.iter().copied().collect(),
                        lambda: args.lambda,
                        c,
                        seed: args.seed,
                    },
                    decision,
                )
            } else {
                let rows: Vec<Vec<f64>> = train.x.iter().map(|x| map.evaluate(x)).collect();
                let z =
                    nalgebra::DMatrix::from_fn(train.len(), 2 * args.d_samples, |i, j| rows[i][j]);
                let lambda = if args.lambda > 0.0 { args.lambda } else { 1e-6 };
                let beta = train_rff_ridge(&z, &train.y, lambda)?;
                let decision = (&z * &beta).iter().copied().collect();
                (
                    ModelFile::RffRidge {
                        strategy: args.strategy.clone(),
                        denom: dist.denom(),
                        frequencies: freqs,
                        beta: beta.iter().copied().collect(),
                        lambda,
                        seed: args.seed,
                    },
                    decision,
                )
            }
        }
        "qsvm" | "qkrr" => {
            let circuit = args.kernel.build()?;
            if circuit.dim() != train.dim() {
                return Err(Error::Config(format!(
                    "kernel dimension {} does not match data dimension {}",
                    circuit.dim(),
                    train.dim()
                )));
            }
            let shot_model = match args.shots {
                None => ShotModel::exact(),
                Some(t) => ShotModel::finite(t, args.seed)?,
            };
            let gram_raw = gram_matrix(&circuit, &train.x, &shot_model)?;
            let (gram, _) = crate::learners::psd_repair(&gram_raw);
            let lambda = if args.lambda > 0.0 { args.lambda } else { 1e-3 };
            if args.model == "qsvm" {
                let box_rule = match args.dual_box.as_deref() {
                    None | Some("inverse-lambda-m") => crate::learners::DualBox::InverseLambdaM,
                    Some("inverse-lambda") => crate::learners::DualBox::InverseLambda,
                    Some(other) => {
                        return Err(Error::Config(format!("unknown dual box '{other}'")))
                    }
                };
                let opts = DualOptions {
                    box_rule,
                    ..DualOptions::default()
                };
                let sol = train_kernel_svm_dual(&gram, &train.y, lambda, &opts)?;
                let decision: Vec<f64> = (0..train.len())
                    .map(|i| {
                        let row: Vec<f64> = (0..train.len()).map(|j| gram[(j, i)]).collect();
                        sol.decision(&train.y, &row)
                    })
                    .collect();
                (
                    ModelFile::Qsvm {
                        kernel: args.kernel.to_config()?,
                        alphas: sol.alphas,
                        bias: sol.bias,
                        train_x: train.x.clone(),
                        train_y: train.y.clone(),
                        lambda,
                    },
                    decision,
                )
            } else {
                let ridge = train_kernel_ridge(&gram, &train.y, lambda)?;
                let decision: Vec<f64> = (0..train.len())
                    .map(|i| {
                        let row: Vec<f64> = (0..train.len()).map(|j| gram[(j, i)]).collect();
                        ridge.decision(&row)
                    })
                    .collect();
                (
                    ModelFile::Qkrr {
                        kernel: args.kernel.to_config()?,
                        alphas: ridge.alphas,
                        train_x: train.x.clone(),
                        lambda,
                    },
                    decision,
                )
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model '{other}' (rff-svm, rff-ridge, qsvm, qkrr)"
            )))
        }
    };

    let mut metrics = Vec::new();
    let push = |metrics: &mut Vec<String>, name: &str, value: f64| {
        metrics.push(format!("{{\"metric\":\"{name}\",\"value\":{value}}}"));
    };
    if classification {
        push(
            &mut metrics,
            "train_zero_one",
            empirical_risk(&train_decision, &train.y, Loss::ZeroOne)?,
        );
        push(
            &mut metrics,
            "train_hinge",
            empirical_risk(&train_decision, &train.y, Loss::Hinge)?,
        );
    } else {
        push(
            &mut metrics,
            "train_mse",
            empirical_risk(&train_decision, &train.y, Loss::Mse)?,
        );
    }
    if let Some(test) = &test {
        let decision: Vec<f64> = test
            .x
            .iter()
            .map(|x| model_file.decision(x))
            .collect::<Result<_>>()?;
        if classification {
            push(
                &mut metrics,
                "test_zero_one",
                empirical_risk(&decision, &test.y, Loss::ZeroOne)?,
            );
        } else {
            push(
                &mut metrics,
                "test_mse",
                empirical_risk(&decision, &test.y, Loss::Mse)?,
            );
        }
    }
    let metrics_text = metrics.join("\n") + "\n";
    match &args.metrics_out {
        Some(path) => std::fs::write(path, &metrics_text)?,
        None => print!("{metrics_text}"),
    }
    if let Some(path) = &args.model_out {
        let json = serde_json::to_string_pretty(&model_file)
            .map_err(|e| Error::numeric(format!("json encoding failed: {e}")))?;
        std::fs::write(path, json + "\n")?;
    }
    Ok(())
}
