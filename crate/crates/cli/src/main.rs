use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lp2dh_core::corpus::{load_corpus, ClassMapping};
use lp2dh_core::eval::{evaluate, write_report};
use lp2dh_core::model_file::{load_model, save_model};
use lp2dh_core::pipeline::train_pipeline;
use lp2dh_core::selftest::{run_selftest, SelftestOptions};
use lp2dh_core::volume::load_video;
use lp2dh_core::{PipelineConfig, Protocol};

#[derive(Parser)]
#[command(
    name = "lp2dh",
    version,
    about = "Dynamic texture recognition with locality-preserving hashed PDV codes"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineArgs {
    /// Corpus root laid out as <class>/<video>/ frame directories or <class>/<video>.lpvol
    data: PathBuf,
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// `old_class,new_class` CSV relabelling the class directories
    #[arg(long)]
    class_map: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train hashing projections, codebooks and PCA on a corpus
    Train {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Model file to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the feature vector of one video as a CSV row
    Featurize {
        /// Trained model file
        model: PathBuf,
        /// Frame directory or .lpvol file
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Emit the concatenated histograms before PCA
        #[arg(long)]
        pre_pca: bool,
    },
    /// Evaluate with retraining inside every fold or trial
    Eval {
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// kfold:K, split:FRACTION,TRIALS or loo
        #[arg(long)]
        protocol: Protocol,
        /// Report directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical invariant checks
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        perturb_gradient: bool,
    },
    /// Describe a model file
    Info { model: PathBuf },
}

fn load_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_data(args: &PipelineArgs) -> Result<lp2dh_core::Dataset> {
    let mapping = args
        .class_map
        .as_deref()
        .map(ClassMapping::load)
        .transpose()?;
    let dataset = load_corpus(&args.data, mapping.as_ref())
        .with_context(|| format!("loading corpus {}", args.data.display()))?;
    log::info!(
        "loaded {} videos in {} classes",
        dataset.len(),
        dataset.classes().len()
    );
    Ok(dataset)
}

fn train(args: &PipelineArgs, out: &Path) -> Result<()> {
    let config = load_config(args)?;
    let dataset = load_data(args)?;
    let videos: Vec<_> = dataset.videos().iter().collect();
    let (model, report) = train_pipeline(&videos, &config)?;
    save_model(&model, out)?;
    for (stage, elapsed) in &report.timings {
        println!("{stage:<18} {:>9.3} s", elapsed.as_secs_f64());
    }
    for (side, s) in &report.hash_stats {
        println!(
            "P={side}: loss {:.6e} after {} outer / {} accepted steps, gradient {:.3e} -> {:.3e}, converged {}, max orthogonality residual {:.2e}",
            s.final_loss.total,
            s.outer_iterations,
            s.accepted_steps,
            s.initial_grad_norm,
            s.grad_norm,
            s.converged,
            s.max_orthogonality_residual
        );
    }
    println!("model written to {}", out.display());
    Ok(())
}

fn featurize(model: &Path, video: &Path, out: &Path, pre_pca: bool) -> Result<()> {
    let model = load_model(model).with_context(|| format!("loading model {}", model.display()))?;
    let volume = load_video(video, None)?;
    let features = if pre_pca {
        model.histograms(&volume)?
    } else {
        model.featurize(&volume)?
    };
    let row: Vec<String> = features.values.iter().map(f64::to_string).collect();
    let mut file =
        std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    writeln!(file, "{}", row.join(","))?;
    Ok(())
}

fn eval(args: &PipelineArgs, protocol: Protocol, out: &Path) -> Result<()> {
    let config = load_config(args)?;
    let dataset = load_data(args)?;
    let start = Instant::now();
    let report = evaluate(&dataset, protocol, &config)?;
    write_report(&report, out)?;
    println!(
        "{}: accuracy {:.4} (mean {:.4} +/- {:.4} over {} trials) in {:.1} s",
        report.protocol,
        report.accuracy,
        report.mean,
        report.std,
        report.per_trial.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn selftest(seed: u64, perturb_gradient: bool) -> bool {
    let results = run_selftest(SelftestOptions {
        perturb_gradient,
        seed,
    });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{}  {:<width$}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    failed == 0
}

fn info(path: &Path) -> Result<()> {
    let model = load_model(path)?;
    println!("format version {}", model.format_version);
    for m in &model.scales {
        let s = m.hashing.stats();
        println!(
            "P={}: {} bits, {} codewords, hashing loss {:.6e}, converged {}",
            m.scale(),
            m.hashing.code_bits(),
            m.codebook.len(),
            s.final_loss.total,
            s.converged
        );
    }
    match &model.pca {
        Some(p) => println!(
            "pca: {} -> {} dims, explained variance {:.4}",
            p.input_dim(),
            p.retained_dim(),
            p.explained_variance_ratio().iter().sum::<f64>()
        ),
        None => println!("pca: off"),
    }
    let mut classes = model.train.labels.clone();
    classes.sort();
    classes.dedup();
    println!(
        "training set: {} videos, {} classes",
        model.train.len(),
        classes.len()
    );
    print!("config:\n{}", model.config.to_config_string());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Train { pipeline, out } => train(&pipeline, &out)?,
        Command::Featurize {
            model,
            video,
            out,
            pre_pca,
        } => featurize(&model, &video, &out, pre_pca)?,
        Command::Eval {
            pipeline,
            protocol,
            out,
        } => eval(&pipeline, protocol, &out)?,
        Command::Selftest {
            seed,
            perturb_gradient,
        } => return Ok(selftest(seed, perturb_gradient)),
        Command::Info { model } => info(&model)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LP2DH_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
