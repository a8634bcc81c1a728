//! Labeled dataset loading and materialization: attacked test sets (one
//! spec for every image) and augmented training sets (a seeded fraction of
//! items perturbed with masks and weights drawn from a policy).
//!
//! Every materialized directory carries a `manifest.csv` describing the
//! perturbation applied to each item. Sampling decisions are made
//! single-threaded from a seeded generator so a (dataset, policy) pair
//! always reproduces the same bytes; image transforms then fan out over
//! the worker pool.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{apply_weighted_field, AttackSpec, ChannelSubset};

use crate::error::{Error, Result};
use crate::exec::run_jobs;
use crate::io;
use crate::mask::{generate_mask, training_weight_grid, MaskId};

/// Name of the manifest file written into every materialized directory.
pub const MANIFEST_FILE: &str = "manifest.csv";

/// One dataset entry: an image path and its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetItem {
    pub path: PathBuf,
    pub label: String,
}

/// A labeled image dataset with a sorted class list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    items: Vec<DatasetItem>,
    classes: Vec<String>,
}

impl LabeledDataset {
    /// Validates items (nonempty, unique paths, sane labels) and derives
    /// the lexicographically sorted class list.
    pub fn new(items: Vec<DatasetItem>) -> Result<LabeledDataset> {
        if items.is_empty() {
            return Err(Error::invalid("dataset must contain at least one item"));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(&item.path) {
                return Err(Error::invalid(format!(
                    "duplicate dataset path {}",
                    item.path.display()
                )));
            }
            validate_label(&item.label)?;
        }
        let mut classes: Vec<String> = items.iter().map(|i| i.label.clone()).collect();
        classes.sort();
        classes.dedup();
        Ok(LabeledDataset { items, classes })
    }

    pub fn items(&self) -> &[DatasetItem] {
        &self.items
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn validate_label(label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(Error::invalid("empty class label"));
    }
    if label.contains('/') || label.contains('\\') || label == "." || label == ".." {
        return Err(Error::invalid(format!(
            "class label {label:?} must not contain path separators"
        )));
    }
    Ok(())
}

/// On-disk layouts understood by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetLayout {
    /// `root/<label>/<image>`: the label is the immediate parent directory.
    FolderPerClass,
    /// A two-column CSV (`path,label`); `root` is either the CSV file or a
    /// directory containing `labels.csv`. Paths are resolved relative to
    /// the CSV's directory.
    LabelsCsv,
}

/// Loads a labeled dataset from disk.
pub fn load_dataset(root: &Path, layout: DatasetLayout) -> Result<LabeledDataset> {
    match layout {
        DatasetLayout::FolderPerClass => load_folder_per_class(root),
        DatasetLayout::LabelsCsv => load_labels_csv(root),
    }
}

fn load_folder_per_class(root: &Path) -> Result<LabeledDataset> {
    let mut items = Vec::new();
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    for dir in class_dirs {
        let label = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::invalid(format!("unreadable directory name in {}", root.display())))?
            .to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_file() && io::is_image_path(p))
            .collect();
        files.sort();
        for path in files {
            items.push(DatasetItem {
                path,
                label: label.clone(),
            });
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    LabeledDataset::new(items)
}

fn load_labels_csv(root: &Path) -> Result<LabeledDataset> {
    let csv_path = if root.is_dir() {
        root.join("labels.csv")
    } else {
        root.to_path_buf()
    };
    let base = csv_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let parse_err = |line: Option<u64>, message: String| Error::Parse {
        path: csv_path.clone(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&csv_path)
        .map_err(|e| parse_err(None, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| parse_err(None, e.to_string()))?;
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
            return Err(parse_err(
                Some(1),
                format!("expected header \"path,label\", got {headers:?}"),
            ));
        }
    }

    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(None, e.to_string()))?;
        let line = record.position().map(|p| p.line());
        if record.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 fields, got {}", record.len()),
            ));
        }
        let rel = record[0].to_string();
        let label = record[1].to_string();
        if !seen.insert(rel.clone()) {
            return Err(parse_err(line, format!("duplicate path {rel:?}")));
        }
        let path = base.join(&rel);
        if !path.is_file() {
            return Err(parse_err(line, format!("no such image {rel:?}")));
        }
        validate_label(&label).map_err(|e| parse_err(line, e.to_string()))?;
        items.push(DatasetItem { path, label });
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(csv_path));
    }
    LabeledDataset::new(items)
}

/// Sampling rules for building an augmented training set.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    /// Fraction of items to perturb, in (0, 1].
    pub perturbed_fraction: f64,
    /// Mask pool; one is drawn uniformly per perturbed item.
    pub allowed_masks: Vec<MaskId>,
    /// Weight pool; one is drawn uniformly per perturbed item. Zero is
    /// excluded by construction (clean items already cover it).
    pub allowed_k: Vec<f64>,
    /// Seed for every sampling decision.
    pub seed: u64,
}

impl AugmentationPolicy {
    pub fn new(
        perturbed_fraction: f64,
        allowed_masks: Vec<MaskId>,
        allowed_k: Vec<f64>,
        seed: u64,
    ) -> Result<AugmentationPolicy> {
        if !(perturbed_fraction > 0.0 && perturbed_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "perturbed fraction must be in (0, 1], got {perturbed_fraction}"
            )));
        }
        if allowed_masks.is_empty() {
            return Err(Error::invalid("allowed mask set must be nonempty"));
        }
        if allowed_k.is_empty() {
            return Err(Error::invalid("allowed weight list must be nonempty"));
        }
        for k in &allowed_k {
            if !k.is_finite() {
                return Err(Error::invalid(format!("non-finite weight {k}")));
            }
            if *k == 0.0 {
                return Err(Error::invalid(
                    "weight 0 is not allowed in augmentation policies",
                ));
            }
        }
        let mut masks = allowed_masks;
        masks.sort();
        masks.dedup();
        let mut ks = allowed_k;
        ks.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
        ks.dedup();
        Ok(AugmentationPolicy {
            perturbed_fraction,
            allowed_masks: masks,
            allowed_k: ks,
            seed,
        })
    }

    /// The stock defense policy: 80% perturbed, ten-mask pool, training
    /// weight grid.
    pub fn default_with_seed(seed: u64) -> AugmentationPolicy {
        AugmentationPolicy::new(
            0.8,
            MaskId::AUGMENTATION_DEFAULT.to_vec(),
            training_weight_grid(),
            seed,
        )
        .expect("stock policy is valid")
    }
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        AugmentationPolicy::default_with_seed(0)
    }
}

/// Number of items to perturb: `fraction * n`, rounded half up.
pub fn perturbed_count(n: usize, fraction: f64) -> usize {
    (((fraction * n as f64) + 0.5).floor() as usize).min(n)
}

/// Per-item augmentation decisions, index-aligned with the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    decisions: Vec<Option<(MaskId, f64)>>,
}

impl AugmentationPlan {
    pub fn decisions(&self) -> &[Option<(MaskId, f64)>] {
        &self.decisions
    }

    pub fn perturbed(&self) -> usize {
        self.decisions.iter().filter(|d| d.is_some()).count()
    }
}

/// Draws the augmentation decisions for `data` under `policy`.
///
/// The perturbed subset is a uniform draw without replacement; each
/// perturbed item then receives an independent uniform (mask, weight)
/// pair. All draws come from one generator seeded by `policy.seed`,
/// consumed in item order, so the plan is a pure function of its inputs.
pub fn plan_augmentation(
    data: &LabeledDataset,
    policy: &AugmentationPolicy,
) -> Result<AugmentationPlan> {
    let n = data.len();
    let count = perturbed_count(n, policy.perturbed_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let chosen = rand::seq::index::sample(&mut rng, n, count);
    let mut perturb = vec![false; n];
    for idx in chosen {
        perturb[idx] = true;
    }
    let mut decisions = Vec::with_capacity(n);
    for selected in perturb {
        if selected {
            let mask = policy.allowed_masks[rng.gen_range(0..policy.allowed_masks.len())];
            let k = policy.allowed_k[rng.gen_range(0..policy.allowed_k.len())];
            decisions.push(Some((mask, k)));
        } else {
            decisions.push(None);
        }
    }
    Ok(AugmentationPlan { decisions })
}

/// One manifest line: output path (relative to the manifest directory),
/// label, and the perturbation applied (`None` for clean copies).
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub label: String,
    pub mask: Option<MaskId>,
    pub k: f64,
}

/// Parsed or to-be-written manifest: a seed header plus one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    /// Renders the manifest: a `# seed=<u64>` comment line, the
    /// `path,label,mask,k` header, then one row per item (UTF-8, LF).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed={}", self.seed);
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer
            .write_record(["path", "label", "mask", "k"])
            .expect("in-memory write");
        for row in &self.rows {
            let mask = row
                .mask
                .map(|m| m.to_string())
                .unwrap_or_else(|| "none".to_string());
            writer
                .write_record([&row.path, &row.label, &mask, &format!("{}", row.k)])
                .expect("in-memory write");
        }
        let body = writer.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Parses a manifest file, including the seed header.
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: Option<u64>, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines();
        let seed_line = lines
            .next()
            .ok_or_else(|| parse_err(Some(1), "empty manifest".to_string()))?;
        let seed = seed_line
            .strip_prefix("# seed=")
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| {
                parse_err(Some(1), format!("expected \"# seed=<u64>\", got {seed_line:?}"))
            })?;
        let rest: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(rest.as_bytes());
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = Some(i as u64 + 3); // seed line + header precede the data
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != 4 {
                return Err(parse_err(
                    line,
                    format!("expected 4 fields, got {}", record.len()),
                ));
            }
            let mask = match &record[2] {
                "none" => None,
                other => Some(MaskId::parse(other).map_err(|e| parse_err(line, e.to_string()))?),
            };
            let k: f64 = record[3]
                .parse()
                .map_err(|_| parse_err(line, format!("bad weight {:?}", &record[3])))?;
            rows.push(ManifestRow {
                path: record[0].to_string(),
                label: record[1].to_string(),
                mask,
                k,
            });
        }
        Ok(Manifest { seed, rows })
    }
}

/// Result of materializing a dataset to disk.
#[derive(Debug)]
pub struct MaterializedDataset {
    /// The output dataset; item paths point into the output directory.
    pub dataset: LabeledDataset,
    pub manifest_path: PathBuf,
    /// Items that could not be processed (unreadable or undecodable
    /// sources); the run continues past them.
    pub failures: Vec<(PathBuf, String)>,
}

/// Attacks every image of `data` with the same `spec` into `out_dir`.
///
/// Labels are preserved; outputs are PNG files under one directory per
/// label; a manifest records the perturbation applied to each item.
pub fn attack_dataset(
    data: &LabeledDataset,
    spec: &AttackSpec,
    out_dir: &Path,
    jobs: usize,
) -> Result<MaterializedDataset> {
    let plan: Vec<Option<(MaskId, f64)>> =
        vec![Some((spec.mask, spec.k)); data.len()];
    materialize(data, &plan, spec.channels, 0, out_dir, jobs)
}

/// Builds an augmented training set under `policy` into `out_dir`.
///
/// Exactly `perturbed_count(n, fraction)` items are perturbed with
/// per-item (mask, weight) draws; the rest are decoded and re-encoded
/// unchanged. The manifest records every decision along with the seed.
pub fn augment_dataset(
    data: &LabeledDataset,
    policy: &AugmentationPolicy,
    out_dir: &Path,
    jobs: usize,
) -> Result<MaterializedDataset> {
    let plan = plan_augmentation(data, policy)?;
    materialize(
        data,
        plan.decisions(),
        ChannelSubset::all(),
        policy.seed,
        out_dir,
        jobs,
    )
}

struct ItemJob {
    index: usize,
    source: PathBuf,
    dest: PathBuf,
    decision: Option<(MaskId, f64)>,
}

fn materialize(
    data: &LabeledDataset,
    plan: &[Option<(MaskId, f64)>],
    channels: ChannelSubset,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<MaterializedDataset> {
    debug_assert_eq!(plan.len(), data.len());
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Assign collision-free output names up front, in item order.
    let mut used: HashSet<PathBuf> = HashSet::new();
    let mut output_rel: Vec<PathBuf> = Vec::with_capacity(data.len());
    for item in data.items() {
        let stem = item
            .path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("image");
        let mut rel = PathBuf::from(&item.label).join(format!("{stem}.png"));
        let mut suffix = 1;
        while used.contains(&rel) {
            rel = PathBuf::from(&item.label).join(format!("{stem}_{suffix}.png"));
            suffix += 1;
        }
        used.insert(rel.clone());
        output_rel.push(rel);
    }

    for class in data.classes() {
        let dir = out_dir.join(class);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    // Mask fields are generated lazily per (mask, size) in the worker
    // closure; sizes are unknown until images are decoded, so workers
    // regenerate instead of sharing a cache. Generation is cheap next to
    // file I/O.
    let items: Vec<ItemJob> = data
        .items()
        .iter()
        .enumerate()
        .map(|(index, item)| ItemJob {
            index,
            source: item.path.clone(),
            dest: out_dir.join(&output_rel[index]),
            decision: plan[index],
        })
        .collect();

    let results = run_jobs(items, jobs, |job| {
        let outcome = process_item(&job, channels);
        (job.index, job.source, outcome)
    });

    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(data.len());
    let mut out_items = Vec::with_capacity(data.len());
    for (index, source, outcome) in results {
        let item = &data.items()[index];
        match outcome {
            Ok(()) => {
                rows.push(ManifestRow {
                    path: path_to_slash(&output_rel[index]),
                    label: item.label.clone(),
                    mask: plan[index].map(|(m, _)| m),
                    k: plan[index].map(|(_, k)| k).unwrap_or(0.0),
                });
                out_items.push(DatasetItem {
                    path: out_dir.join(&output_rel[index]),
                    label: item.label.clone(),
                });
            }
            Err(e) => failures.push((source, e.to_string())),
        }
    }

    let manifest = Manifest { seed, rows };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.write(&manifest_path)?;

    let dataset = LabeledDataset::new(out_items)?;
    Ok(MaterializedDataset {
        dataset,
        manifest_path,
        failures,
    })
}

fn process_item(job: &ItemJob, channels: ChannelSubset) -> Result<()> {
    let image = io::load_image(&job.source)?;
    let output = match job.decision {
        Some((mask, k)) if k != 0.0 => {
            let field = generate_mask(mask, image.width(), image.height())?;
            apply_weighted_field(&image, &field, k, channels)
        }
        _ => image,
    };
    io::save_image(&job.dest, &output)
}

/// Renders a relative path with forward slashes for manifests and
/// prediction joins.
pub fn path_to_slash(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

// Re-exported so tests can regenerate a recorded perturbation exactly.
pub fn replay_spec(row: &ManifestRow, channels: ChannelSubset) -> Result<Option<AttackSpec>> {
    match row.mask {
        Some(mask) => Ok(Some(AttackSpec::new(mask, row.k, channels)?)),
        None => Ok(None),
    }
}
