use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use latent_distill::archive::{
    bytes_to_mb, mb_to_bytes, read_distilled, read_latent_dataset, read_tensor_archive, write_distilled,
    write_latent_dataset, write_tensor_archive, ArchiveTensor, Payload, Precision, TensorArchive,
};
use latent_distill::dpp::{SelectionMethod, SigmaPolicy};
use latent_distill::pipeline::{
    decode, distill, evaluate, generate_synthetic, sweep, DistillConfig, InstancesPerClass, SynthSpec,
};
use latent_distill::quantize::{archive_quantize, QuantPolicy};
use latent_distill::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Budgeted latent dataset distillation: DPP selection, HOSVD compression,
/// checksummed archives and post-training quantization.
#[derive(Parser, Debug)]
#[command(name = "latent-distill", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic latent dataset.
    GenSynth(GenSynthArgs),
    /// Select, compress and pack a dataset into a distilled archive.
    Distill(DistillArgs),
    /// Reconstruct the stored instances of a distilled archive.
    Decode(DecodeArgs),
    /// Compare decoded latents with the originals.
    Metrics(MetricsArgs),
    /// Quantize a tensor archive.
    Quantize(QuantizeArgs),
    /// Reconstruction error and size over a grid of rank ratios, as CSV.
    Sweep(SweepArgs),
    /// Write a random fp32 tensor archive with fully connected and convolution weights.
    GenWeights(GenWeightsArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 30)]
    per_class: usize,
    /// Latent shape, e.g. 4x8x16x16.
    #[arg(long, default_value = "4x8x16x16", value_parser = parse_shape)]
    shape: Shape,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian blur width in samples.
    #[arg(long, default_value_t = 2.0)]
    smoothness: f64,
    /// Within-class noise RMS relative to a unit class mean.
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Kdpp,
    Greedy,
}

impl From<Method> for SelectionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Kdpp => SelectionMethod::ExactKdpp,
            Method::Greedy => SelectionMethod::GreedyMap,
        }
    }
}

#[derive(Args, Debug)]
struct SelectionArgs {
    /// Rank ratio applied to every mode of each class tensor.
    #[arg(long, default_value_t = 0.75)]
    ratio: f64,
    /// Exact k-DPP sampling or greedy MAP selection.
    #[arg(long, value_enum, default_value_t = Method::Kdpp)]
    method: Method,
    /// Master seed; each class gets its own stream derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RBF bandwidth: `median` or a positive number.
    #[arg(long, default_value = "median", value_parser = parse_sigma)]
    sigma: SigmaPolicy,
    /// Store cores and factors as fp16.
    #[arg(long)]
    fp16: bool,
    /// Keep the full instance mode instead of truncating it.
    #[arg(long)]
    keep_instance_mode: bool,
    /// Standardize features within each class before selection.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args, Debug)]
struct DistillArgs {
    /// Latent dataset (.lvdd).
    #[arg(short, long)]
    input: PathBuf,
    /// Total storage budget in MB (2^20 bytes), model included.
    #[arg(long)]
    budget_mb: f64,
    /// Declared decoder size in MB.
    #[arg(long, default_value_t = 0.0)]
    model_mb: f64,
    /// Instances per class: a number or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_ipc)]
    ipc: InstancesPerClass,
    /// Store every class raw.
    #[arg(long)]
    no_compress: bool,
    #[command(flatten)]
    selection: SelectionArgs,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    decoded: PathBuf,
    /// Archive whose byte accounting is included in the report.
    #[arg(long)]
    archive: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct QuantizeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value = "fc-int8-rest-fp16")]
    policy: String,
    /// Name substring that also marks a tensor as fully connected; repeatable.
    #[arg(long = "fc-pattern")]
    fc_patterns: Vec<String>,
    #[arg(short, long)]
    output: PathBuf,
    /// Print per-tensor and total compression.
    #[arg(long)]
    report: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Dataset to sweep; the default synthetic dataset when omitted.
    #[arg(short, long)]
    input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,1.0")]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 24)]
    ipc: usize,
    #[arg(long, value_enum, default_value_t = Method::Kdpp)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    fp16: bool,
    /// CSV destination; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenWeightsArgs {
    /// Approximate total parameter count.
    #[arg(long, default_value_t = 200_000)]
    params: usize,
    /// Fraction of parameters in rank-2 tensors.
    #[arg(long, default_value_t = 0.6)]
    fc_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Debug)]
struct Shape(Vec<usize>);

fn parse_shape(s: &str) -> Result<Shape, String> {
    let dims: Result<Vec<usize>, _> = s.split(['x', 'X', ',']).map(str::parse).collect();
    match dims {
        Ok(d) if !d.is_empty() && !d.contains(&0) => Ok(Shape(d)),
        _ => Err(format!("expected positive extents like 4x8x16x16, got {s}")),
    }
}

fn parse_sigma(s: &str) -> Result<SigmaPolicy, String> {
    if s == "median" {
        return Ok(SigmaPolicy::Median);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaPolicy::Fixed(v)),
        _ => Err(format!("expected `median` or a positive number, got {s}")),
    }
}

fn parse_ipc(s: &str) -> Result<InstancesPerClass, String> {
    if s == "auto" {
        return Ok(InstancesPerClass::Auto);
    }
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(InstancesPerClass::Fixed(v)),
        _ => Err(format!("expected `auto` or a positive integer, got {s}")),
    }
}

fn precision(fp16: bool) -> Precision {
    if fp16 {
        Precision::Fp16
    } else {
        Precision::Fp32
    }
}

fn gen_synth(a: GenSynthArgs) -> anyhow::Result<()> {
    let spec = SynthSpec {
        num_classes: a.classes,
        items_per_class: a.per_class,
        latent_shape: a.shape.0,
        noise_scale: a.noise,
        smoothness: a.smoothness,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let d = generate_synthetic(&spec)?;
    write_latent_dataset(&a.output, &d)?;
    println!(
        "wrote {} items in {} classes, shape {:?}, to {}",
        d.len(),
        d.num_classes(),
        d.latent_shape(),
        a.output.display()
    );
    Ok(())
}

fn run_distill(a: DistillArgs) -> anyhow::Result<()> {
    let d = read_latent_dataset(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let s = a.selection;
    let cfg = DistillConfig {
        budget_bytes: mb_to_bytes(a.budget_mb),
        model_bytes: mb_to_bytes(a.model_mb),
        ratio: s.ratio,
        method: s.method.into(),
        sigma: s.sigma,
        master_seed: s.seed,
        instances_per_class: a.ipc,
        precision: precision(s.fp16),
        truncate_instance_mode: !s.keep_instance_mode,
        standardize: s.standardize,
        compress: !a.no_compress,
    };
    let out = distill(&d, &cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    write_distilled(&a.output, &out.archive)?;
    let acc = out.archive.accounting();
    println!("instances per class: {}", out.archive.instances_per_class());
    println!("classes: {}", out.archive.classes().len());
    println!(
        "archive: {} bytes ({:.3} MB); model: {:.3} MB; total {:.3} MB of {:.3} MB budget",
        acc.total_bytes,
        bytes_to_mb(acc.total_bytes),
        bytes_to_mb(acc.model_bytes),
        bytes_to_mb(acc.total_bytes + acc.model_bytes),
        bytes_to_mb(acc.budget_bytes)
    );
    Ok(())
}

fn run_decode(a: DecodeArgs) -> anyhow::Result<()> {
    let archive = read_distilled(&a.input)?;
    let d = decode(&archive)?;
    write_latent_dataset(&a.output, &d)?;
    println!("decoded {} items to {}", d.len(), a.output.display());
    Ok(())
}

fn run_metrics(a: MetricsArgs) -> anyhow::Result<()> {
    let original = read_latent_dataset(&a.original)?;
    let decoded = read_latent_dataset(&a.decoded)?;
    let archive = a.archive.as_ref().map(read_distilled).transpose()?;
    let report = evaluate(&original, &decoded, archive.as_ref())?;
    let json = serde_json::to_string_pretty(&report)?;
    match a.json {
        Some(path) => {
            fs::write(&path, json)?;
            println!(
                "{} items, MSE {:.6e}, relative error {:.6e}",
                report.items, report.mse, report.relative_error
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn run_quantize(a: QuantizeArgs) -> anyhow::Result<()> {
    let mut policy = QuantPolicy::from_name(&a.policy)?;
    policy.fc_name_patterns = a.fc_patterns;
    let archive = read_tensor_archive(&a.input)?;
    let (q, report) = archive_quantize(&archive, &policy)?;
    write_tensor_archive(&a.output, &q)?;
    if a.report {
        println!("{:<32} {:>6} {:>12} {:>12}", "tensor", "dtype", "fp32 bytes", "bytes");
        for t in &report.tensors {
            println!(
                "{:<32} {:>6} {:>12} {:>12}",
                t.name,
                t.dtype,
                t.fp32_bytes,
                t.payload_bytes + t.metadata_bytes
            );
        }
        println!("payload ratio: {:.4}", report.payload_ratio);
        println!("total ratio:   {:.4}", report.total_ratio);
        println!(
            "file: {} -> {} bytes ({:.4}x)",
            report.fp32_file_bytes, report.file_bytes, report.file_ratio
        );
    }
    if let Some(path) = a.json {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let d = match &a.input {
        Some(p) => read_latent_dataset(p)?,
        None => generate_synthetic(&SynthSpec {
            seed: a.seed,
            ..SynthSpec::default()
        })?,
    };
    let cfg = DistillConfig {
        method: a.method.into(),
        master_seed: a.seed,
        precision: precision(a.fp16),
        ..DistillConfig::new(u64::MAX, 0)
    };
    let rows = sweep(&d, &cfg, a.ipc, &a.ratios)?;
    let mut csv = String::from("ratio,bytes,mse,relative_error\n");
    for r in rows {
        csv.push_str(&format!("{},{},{:e},{:e}\n", r.ratio, r.bytes, r.mse, r.relative_error));
    }
    match a.output {
        Some(path) => fs::write(path, csv)?,
        None => io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn gen_weights(a: GenWeightsArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.fc_fraction) || a.params == 0 {
        bail!(Error::InvalidArgument("need params > 0 and fc fraction in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let fc_target = (a.params as f64 * a.fc_fraction) as usize;
    let conv_target = a.params - fc_target;
    let mut tensors = Vec::new();
    let mut add = |name: String, shape: Vec<usize>, rng: &mut ChaCha8Rng| -> anyhow::Result<()> {
        let n: usize = shape.iter().product();
        let bound = 1.0 / (shape[1..].iter().product::<usize>() as f32).sqrt();
        let values = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        tensors.push(ArchiveTensor::new(name, shape, Payload::Fp32(values))?);
        Ok(())
    };
    let mut left = fc_target;
    let mut i = 0;
    while left >= 64 {
        let cols = 64;
        let rows = (left / cols).min(256);
        add(format!("fc{i}.weight"), vec![rows, cols], &mut rng)?;
        left -= rows * cols;
        i += 1;
    }
    let mut left = conv_target;
    let mut i = 0;
    while left >= 9 {
        let out = (left / 72).clamp(1, 32);
        add(format!("conv{i}.weight"), vec![out, 8.min(left / (9 * out)).max(1), 3, 3], &mut rng)?;
        left = left.saturating_sub(out * 8.min(left / (9 * out)).max(1) * 9);
        i += 1;
    }
    let archive = TensorArchive::new(tensors)?;
    write_tensor_archive(&a.output, &archive)?;
    let total: usize = archive.tensors().iter().map(|t| t.payload.len()).sum();
    let fc: usize = archive.tensors().iter().filter(|t| t.shape.len() == 2).map(|t| t.payload.len()).sum();
    println!(
        "wrote {} tensors, {total} parameters ({:.1}% in rank-2 tensors) to {}",
        archive.len(),
        100.0 * fc as f64 / total as f64,
        a.output.display()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleBudget { .. }) => 2,
        Some(e) if e.is_integrity() => 3,
        Some(Error::Io(_)) => 1,
        Some(_) => 4,
        None if err.downcast_ref::<io::Error>().is_some() => 1,
        None => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Distill(a) => run_distill(a),
        Command::Decode(a) => run_decode(a),
        Command::Metrics(a) => run_metrics(a),
        Command::Quantize(a) => run_quantize(a),
        Command::Sweep(a) => run_sweep(a),
        Command::GenWeights(a) => gen_weights(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
