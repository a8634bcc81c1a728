//! `nui` — command-line front-end for the non-uniform illumination
//! toolkit: mask export, single-image and batch attacks, training-set
//! augmentation, classifier sweeps, histograms and report comparison.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on runtime errors.
//! Diagnostics go to stderr; machine-readable output goes to files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use nui_core::attack::{apply_attack, histogram, AttackSpec, ChannelSubset};
use nui_core::dataset::{augment_dataset, load_dataset, AugmentationPolicy, DatasetLayout};
use nui_core::eval::{
    compare_reports, read_report_csv, sweep, write_comparison_csv, write_partial_report_csv,
    write_report_csv, ClassifierAdapter, SUMMARY_WEIGHT,
};
use nui_core::exec::run_jobs;
use nui_core::io;
use nui_core::mask::{generate_mask, standard_weight_grid, training_weight_grid, MaskId};

#[derive(Parser)]
#[command(name = "nui", version, about = "Non-uniform illumination attack toolkit")]
struct Cli {
    /// Seed for all sampling decisions.
    #[arg(long, global = true, env = "NUI_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker count for batch operations. Any value produces output
    /// identical to --jobs 1.
    #[arg(long, global = true, value_parser = parse_jobs, default_value_t = default_jobs())]
    jobs: usize,

    /// Chattier progress reporting on stderr.
    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export a mask field as CSV or a normalized grayscale PNG.
    Mask {
        /// Mask id: 1..12, or 12t for the training variant of mask 12.
        #[arg(long, value_parser = parse_mask_id)]
        id: MaskId,
        /// Output size as WxH, e.g. 32x32.
        #[arg(long, value_parser = parse_size, default_value = "32x32")]
        size: (u32, u32),
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Export format; inferred from the extension when omitted.
        #[arg(long, value_enum)]
        format: Option<MaskFormat>,
    },
    /// Attack a single image or every image under a directory.
    Attack {
        /// Input image or directory.
        #[arg(long = "in")]
        input: PathBuf,
        /// Mask id: 1..12, or 12t.
        #[arg(long, value_parser = parse_mask_id)]
        mask: MaskId,
        /// Perturbation weight.
        #[arg(long, value_parser = parse_weight, allow_hyphen_values = true)]
        k: f64,
        /// Channel subset to perturb, e.g. R,B. Defaults to all channels.
        #[arg(long, value_parser = parse_channels, default_value = "R,G,B")]
        channels: ChannelSubset,
        /// Output image or directory (mirrors the input kind).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an augmented training set with seeded per-item perturbations.
    Augment {
        /// Dataset root.
        #[arg(long = "in")]
        input: PathBuf,
        /// Dataset layout.
        #[arg(long, value_enum, default_value_t = LayoutArg::Folder)]
        layout: LayoutArg,
        /// Fraction of items to perturb, in (0, 1].
        #[arg(long, default_value_t = 0.8)]
        fraction: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Mask pool, e.g. 1,2,5,12t. Defaults to the ten-mask training pool.
        #[arg(long, value_parser = parse_mask_list)]
        masks: Option<MaskList>,
        /// Weight pool: "training", "standard", or a comma-separated list.
        #[arg(long, value_parser = parse_weight_list, allow_hyphen_values = true)]
        ks: Option<WeightList>,
    },
    /// Sweep (mask, weight) attack cells against an external classifier.
    Sweep {
        /// Dataset root.
        #[arg(long = "in")]
        input: PathBuf,
        /// Dataset layout.
        #[arg(long, value_enum, default_value_t = LayoutArg::Folder)]
        layout: LayoutArg,
        /// Classifier command template with {input_dir} and {output_csv}.
        #[arg(long)]
        adapter: String,
        /// Report CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Masks to sweep, e.g. 1,6. Defaults to all twelve test masks.
        #[arg(long, value_parser = parse_mask_list)]
        masks: Option<MaskList>,
        /// Weights to sweep: "standard", "training", or a list. Defaults to standard.
        #[arg(long, value_parser = parse_weight_list, allow_hyphen_values = true)]
        ks: Option<WeightList>,
    },
    /// Write the 256-bin intensity histogram of an image as CSV.
    Hist {
        /// Input image.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an attacked report with a defended report.
    Compare {
        /// Report CSV for the undefended model.
        #[arg(long)]
        attacked: PathBuf,
        /// Report CSV for the defended model.
        #[arg(long)]
        defended: PathBuf,
        /// Comparison CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskFormat {
    Csv,
    Png,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    /// root/<label>/<image>
    Folder,
    /// Two-column labels.csv (path,label)
    Csv,
}

impl From<LayoutArg> for DatasetLayout {
    fn from(arg: LayoutArg) -> DatasetLayout {
        match arg {
            LayoutArg::Folder => DatasetLayout::FolderPerClass,
            LayoutArg::Csv => DatasetLayout::LabelsCsv,
        }
    }
}

#[derive(Clone)]
struct MaskList(Vec<MaskId>);

#[derive(Clone)]
struct WeightList(Vec<f64>);

fn parse_mask_id(s: &str) -> Result<MaskId, String> {
    MaskId::parse(s).map_err(|e| e.to_string())
}

fn parse_mask_list(s: &str) -> Result<MaskList, String> {
    let mut masks = Vec::new();
    for part in s.split(',') {
        masks.push(parse_mask_id(part)?);
    }
    if masks.is_empty() {
        return Err("mask list must be nonempty".to_string());
    }
    Ok(MaskList(masks))
}

fn parse_weight(s: &str) -> Result<f64, String> {
    let k: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {s:?}"))?;
    if !k.is_finite() {
        return Err(format!("weight must be finite, got {k}"));
    }
    Ok(k)
}

fn parse_weight_list(s: &str) -> Result<WeightList, String> {
    match s.trim() {
        "standard" => Ok(WeightList(standard_weight_grid())),
        "training" => Ok(WeightList(training_weight_grid())),
        list => {
            let mut ks = Vec::new();
            for part in list.split(',') {
                ks.push(parse_weight(part)?);
            }
            if ks.is_empty() {
                return Err("weight list must be nonempty".to_string());
            }
            Ok(WeightList(ks))
        }
    }
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be at least 1x1".to_string());
    }
    Ok((w, h))
}

fn parse_channels(s: &str) -> Result<ChannelSubset, String> {
    ChannelSubset::parse(s).map_err(|e| e.to_string())
}

fn parse_jobs(s: &str) -> Result<usize, String> {
    let jobs: usize = s.parse().map_err(|_| format!("bad job count {s:?}"))?;
    if jobs == 0 {
        return Err("--jobs must be at least 1".to_string());
    }
    Ok(jobs)
}

#[cfg(feature = "parallel")]
fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(not(feature = "parallel"))]
fn default_jobs() -> usize {
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let jobs = cli.jobs;
    let verbose = cli.verbose;
    match cli.command {
        Command::Mask {
            id,
            size,
            out,
            format,
        } => run_mask(id, size, &out, format),
        Command::Attack {
            input,
            mask,
            k,
            channels,
            out,
        } => run_attack(&input, mask, k, channels, &out, jobs, verbose),
        Command::Augment {
            input,
            layout,
            fraction,
            out,
            masks,
            ks,
        } => run_augment(
            &input, layout, fraction, &out, masks, ks, cli.seed, jobs, verbose,
        ),
        Command::Sweep {
            input,
            layout,
            adapter,
            out,
            masks,
            ks,
        } => run_sweep(&input, layout, &adapter, &out, masks, ks, jobs, verbose),
        Command::Hist { input, out } => run_hist(&input, &out),
        Command::Compare {
            attacked,
            defended,
            out,
        } => run_compare(&attacked, &defended, &out),
    }
}

fn run_mask(
    id: MaskId,
    (width, height): (u32, u32),
    out: &Path,
    format: Option<MaskFormat>,
) -> anyhow::Result<()> {
    let field = generate_mask(id, width, height)?;
    let format = format.unwrap_or_else(|| match out.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => MaskFormat::Png,
        _ => MaskFormat::Csv,
    });
    let bytes = match format {
        MaskFormat::Csv => field.to_csv().into_bytes(),
        MaskFormat::Png => {
            io::encode_gray_png(field.width(), field.height(), &field.to_normalized_bytes())?
        }
    };
    write_output(out, &bytes)
}

fn run_attack(
    input: &Path,
    mask: MaskId,
    k: f64,
    channels: ChannelSubset,
    out: &Path,
    jobs: usize,
    verbose: bool,
) -> anyhow::Result<()> {
    let spec = AttackSpec::new(mask, k, channels)?;
    if input.is_dir() {
        let files = io::list_image_files(input)?;
        if files.is_empty() {
            bail!("no images found under {}", input.display());
        }
        let results = run_jobs(files, jobs, |path| {
            let outcome = attack_one(&path, input, out, &spec);
            (path, outcome)
        });
        let mut failures = 0usize;
        let mut written = 0usize;
        for (path, outcome) in results {
            match outcome {
                Ok(dest) => {
                    written += 1;
                    if verbose {
                        eprintln!("attacked {} -> {}", path.display(), dest.display());
                    }
                }
                Err(e) => {
                    failures += 1;
                    eprintln!("warning: skipping {}: {e:#}", path.display());
                }
            }
        }
        if written == 0 {
            bail!("all {failures} images failed to process");
        }
        Ok(())
    } else {
        let image = io::load_image(input)?;
        let attacked = apply_attack(&image, &spec)?;
        io::save_image(out, &attacked)?;
        if verbose {
            eprintln!("attacked {} -> {}", input.display(), out.display());
        }
        Ok(())
    }
}

fn attack_one(
    path: &Path,
    input_root: &Path,
    out_root: &Path,
    spec: &AttackSpec,
) -> anyhow::Result<PathBuf> {
    let image = io::load_image(path)?;
    let attacked = apply_attack(&image, spec)?;
    let rel = path.strip_prefix(input_root).unwrap_or(path);
    let dest = out_root.join(rel).with_extension("png");
    io::save_image(&dest, &attacked)?;
    Ok(dest)
}

#[allow(clippy::too_many_arguments)]
fn run_augment(
    input: &Path,
    layout: LayoutArg,
    fraction: f64,
    out: &Path,
    masks: Option<MaskList>,
    ks: Option<WeightList>,
    seed: u64,
    jobs: usize,
    verbose: bool,
) -> anyhow::Result<()> {
    let data = load_dataset(input, layout.into())?;
    let policy = AugmentationPolicy::new(
        fraction,
        masks
            .map(|m| m.0)
            .unwrap_or_else(|| MaskId::AUGMENTATION_DEFAULT.to_vec()),
        ks.map(|k| k.0).unwrap_or_else(training_weight_grid),
        seed,
    )?;
    let result = augment_dataset(&data, &policy, out, jobs)?;
    for (path, message) in &result.failures {
        eprintln!("warning: skipping {}: {message}", path.display());
    }
    if verbose {
        eprintln!(
            "augmented {} items into {} (manifest: {})",
            result.dataset.len(),
            out.display(),
            result.manifest_path.display()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    input: &Path,
    layout: LayoutArg,
    adapter: &str,
    out: &Path,
    masks: Option<MaskList>,
    ks: Option<WeightList>,
    jobs: usize,
    verbose: bool,
) -> anyhow::Result<()> {
    let data = load_dataset(input, layout.into())?;
    let adapter = ClassifierAdapter::new(adapter)?;
    let masks = masks
        .map(|m| m.0)
        .unwrap_or_else(|| MaskId::STANDARD.to_vec());
    let ks = ks.map(|k| k.0).unwrap_or_else(standard_weight_grid);
    let workspace = tempfile::Builder::new()
        .prefix("nui-sweep-")
        .tempdir()
        .context("creating sweep workspace")?;
    if verbose {
        eprintln!(
            "sweeping {} masks x {} weights over {} items",
            masks.len(),
            ks.len(),
            data.len()
        );
    }
    match sweep(&data, &masks, &ks, &adapter, workspace.path(), jobs) {
        Ok(report) => {
            write_report_csv(&report, out)?;
            if verbose {
                eprintln!("wrote {} rows to {}", report.rows.len(), out.display());
            }
            Ok(())
        }
        Err(e) => {
            write_partial_report_csv(&e, out)?;
            bail!("{e} (partial report written to {})", out.display());
        }
    }
}

fn run_hist(input: &Path, out: &Path) -> anyhow::Result<()> {
    let image = io::load_image(input)?;
    let bins = histogram(&image);
    let mut text = String::from("value,count\n");
    for (value, count) in bins.iter().enumerate() {
        text.push_str(&format!("{value},{count}\n"));
    }
    write_output(out, text.as_bytes())
}

fn run_compare(attacked: &Path, defended: &Path, out: &Path) -> anyhow::Result<()> {
    let attacked_rows = read_report_csv(attacked)?;
    let defended_rows = read_report_csv(defended)?;
    let comparison = compare_reports(&attacked_rows, &defended_rows)?;
    write_comparison_csv(&comparison, out)?;
    for (mask, increase) in &comparison.summary {
        eprintln!("mask {mask} at k={SUMMARY_WEIGHT}: {increase:+.2}% accuracy change");
    }
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
