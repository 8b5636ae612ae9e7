use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use duca::data::loaders::{load_image, save_image};
use duca::data::manifest::DomainManifest;
use duca::dn4il::{build_dn4il, materialize, validate_manifest, BalancePolicy, ClassTable};
use duca::runner::{compare, load_records, preset, preset_names, run, ExperimentConfig, DATA_ROOT_ENV};
use duca::shape::{extract_shape, ShapeConfig};
use duca::{Error, Result};
use ndarray::Axis;

// Stdout writes that tolerate a closed pipe (`duca presets | head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "duca", version, about = "Dual-network continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of an experiment and write its result record.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Summarize result records and write plot-ready CSVs.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Where the CSVs go (default: <records>/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets, or print one as TOML.
    Presets { name: Option<String> },
    /// Build or validate the DN4IL domain manifest.
    Dn4il {
        #[command(subcommand)]
        action: Dn4ilAction,
    },
    /// Write the edge-magnitude image the shape learner sees.
    ShapePreview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Resize the input to this side length first.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        kernel: usize,
        #[arg(long, default_value_t = 2)]
        upsample: usize,
    },
}

#[derive(Subcommand)]
enum Dn4ilAction {
    /// Scan `<root>/<domain>/<class>/` and write a balanced manifest.
    Build {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write resized PNG copies here and point the manifest at them.
        #[arg(long)]
        materialize: Option<PathBuf>,
    },
    Validate {
        #[arg(long)]
        manifest: PathBuf,
        /// Check that referenced files exist under this root.
        #[arg(long)]
        root: Option<PathBuf>,
    },
}

fn train(config: &Path, output_dir: Option<PathBuf>, seeds: Option<Vec<u64>>) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    if let Some(s) = seeds {
        cfg.seeds = s;
        cfg.validate()?;
    }
    log::info!("data root: {} (override with {DATA_ROOT_ENV})", cfg.data_root().display());
    let record = run(&cfg)?;
    out!("{}", compare(std::slice::from_ref(&record))?);
    outln!("record: {}", duca::runner::record_path(&cfg).display());
    Ok(())
}

fn report(records: &Path, out: Option<PathBuf>) -> Result<()> {
    let all = load_records(records)?;
    let out = out.unwrap_or_else(|| records.join("report"));
    out!("{}", duca::runner::write_report(&all, &out)?);
    outln!("csv: {}", out.display());
    Ok(())
}

fn presets(name: Option<String>) -> Result<()> {
    match name {
        None => preset_names().iter().for_each(|n| outln!("{n}")),
        Some(n) => {
            let cfg = preset(&n).ok_or_else(|| Error::config(format!("unknown preset `{n}`")))?;
            out!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn dn4il(action: Dn4ilAction) -> Result<()> {
    let table = ClassTable::standard();
    match action {
        Dn4ilAction::Build { root, out, seed, materialize: images } => {
            let policy = BalancePolicy::default();
            let built = build_dn4il(&root, &table, &policy, seed)?;
            outln!("{}", built.summary());
            for s in &built.shortfalls {
                log::debug!("{}/{} {}: {} available, even share {}", s.domain, s.class, s.split, s.available, s.even_share);
            }
            let manifest = match images {
                Some(dir) => {
                    let m = materialize(&built.manifest, &root, &dir, policy.image_size)?;
                    outln!("images: {}", dir.display());
                    m
                }
                None => built.manifest,
            };
            manifest.save(&out)?;
            outln!("manifest: {}", out.display());
        }
        Dn4ilAction::Validate { manifest, root } => {
            let m = DomainManifest::load(&manifest)?;
            let report = validate_manifest(&m, &table, root.as_deref());
            out!("{report}");
            if !report.passed() {
                return Err(Error::Manifest(format!("{} problem(s)", report.problems.len())));
            }
        }
    }
    Ok(())
}

fn shape_preview(input: &Path, output: &Path, size: usize, kernel: usize, upsample: usize) -> Result<()> {
    let cfg = ShapeConfig { gaussian_kernel_size: kernel, upsample_factor: upsample, output_channels: 1, normalize: true };
    cfg.validate()?;
    let img = load_image(input, (3, size, size))?;
    let batch = img.insert_axis(Axis(0));
    let edges = extract_shape(&batch, &cfg)?;
    save_image(output, &edges.index_axis(Axis(0), 0).to_owned())?;
    outln!("{}", output.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train { config, output_dir, seeds } => train(&config, output_dir, seeds),
        Command::Report { records, out } => report(&records, out),
        Command::Presets { name } => presets(name),
        Command::Dn4il { action } => dn4il(action),
        Command::ShapePreview { input, output, size, kernel, upsample } => {
            shape_preview(&input, &output, size, kernel, upsample)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
