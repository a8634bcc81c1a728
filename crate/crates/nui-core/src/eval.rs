//! Evaluation harness: attacks a dataset, invokes an external classifier
//! over a subprocess adapter, joins predictions back to ground truth, and
//! sweeps (mask, weight) grids into relative-change reports.
//!
//! The adapter contract is directory-in / CSV-out so classifiers from any
//! ecosystem plug in unchanged: the command template's `{input_dir}` is
//! replaced with a directory of images and `{output_csv}` with the file
//! the adapter must write (`path,label[,confidence]`, paths relative to
//! the input directory, exit status 0 on success).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::attack::AttackSpec;
use crate::dataset::{attack_dataset, path_to_slash, LabeledDataset};
use crate::error::{Error, Result};
use crate::exec::run_jobs;
use crate::mask::MaskId;

/// Weight at which per-mask comparison summaries are reported.
pub const SUMMARY_WEIGHT: f64 = -1.4;

/// Tolerance for matching weights that originate from different grids.
const WEIGHT_EPS: f64 = 1e-9;

/// External classifier invoked as a subprocess.
///
/// The command template must contain `{output_csv}` and usually
/// `{input_dir}`; it runs under `sh -c` with both placeholders expanded.
#[derive(Debug, Clone)]
pub struct ClassifierAdapter {
    command: String,
}

impl ClassifierAdapter {
    pub fn new(command: impl Into<String>) -> Result<ClassifierAdapter> {
        let command = command.into();
        if !command.contains("{output_csv}") {
            return Err(Error::invalid(
                "adapter template must contain the {output_csv} placeholder",
            ));
        }
        Ok(ClassifierAdapter { command })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    /// Runs the adapter; nonzero exit or a missing output file is an error
    /// carrying the captured diagnostics.
    pub fn run(&self, input_dir: &Path, output_csv: &Path) -> Result<()> {
        let expanded = self
            .command
            .replace("{input_dir}", &input_dir.to_string_lossy())
            .replace("{output_csv}", &output_csv.to_string_lossy());
        let output = Command::new("sh")
            .arg("-c")
            .arg(&expanded)
            .output()
            .map_err(|e| Error::io(PathBuf::from("sh"), e))?;
        if !output.status.success() {
            return Err(Error::Adapter {
                status: output.status.code(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        if !output_csv.is_file() {
            return Err(Error::Adapter {
                status: output.status.code(),
                stderr: format!(
                    "adapter exited 0 but did not write {}",
                    output_csv.display()
                ),
            });
        }
        Ok(())
    }
}

/// One prediction row produced by an adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Image path relative to the evaluated directory.
    pub path: String,
    pub label: String,
    pub confidence: Option<f64>,
}

/// Parses a prediction CSV (`path,label[,confidence]`).
pub fn parse_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let parse_err = |line: Option<u64>, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(None, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| parse_err(None, e.to_string()))?;
        let ok = (headers.len() == 2 || headers.len() == 3)
            && &headers[0] == "path"
            && &headers[1] == "label"
            && (headers.len() == 2 || &headers[2] == "confidence");
        if !ok {
            return Err(parse_err(
                Some(1),
                format!("expected header \"path,label[,confidence]\", got {headers:?}"),
            ));
        }
    }
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(None, e.to_string()))?;
        let line = record.position().map(|p| p.line());
        if record.len() != 2 && record.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected 2 or 3 fields, got {}", record.len()),
            ));
        }
        let key = normalize_rel_path(&record[0]);
        if !seen.insert(key.clone()) {
            return Err(parse_err(line, format!("duplicate prediction for {key:?}")));
        }
        let confidence = if record.len() == 3 && !record[2].is_empty() {
            let c: f64 = record[2]
                .parse()
                .map_err(|_| parse_err(line, format!("bad confidence {:?}", &record[2])))?;
            if !(0.0..=1.0).contains(&c) {
                return Err(parse_err(line, format!("confidence {c} outside [0, 1]")));
            }
            Some(c)
        } else {
            None
        };
        rows.push(Prediction {
            path: key,
            label: record[1].to_string(),
            confidence,
        });
    }
    Ok(rows)
}

fn normalize_rel_path(raw: &str) -> String {
    let s = raw.trim().replace('\\', "/");
    s.strip_prefix("./").unwrap_or(&s).to_string()
}

/// Square count matrix over dataset classes; rows are true classes,
/// columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<ConfusionMatrix> {
        if counts.len() != classes * classes {
            return Err(Error::invalid(format!(
                "confusion matrix needs {classes}x{classes} entries, got {}",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn add(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.classes + predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    fn row_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|j| self.get(c, j)).sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, c)).sum()
    }
}

/// Classification metrics derived from a confusion matrix. Macro metrics
/// are unweighted means over classes; a class with an empty denominator
/// contributes 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub confusion: ConfusionMatrix,
}

/// Computes accuracy and macro precision/recall/F1 from `cm`.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsRecord> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix has no observations"));
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let n = cm.classes();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in 0..n {
        let tp = cm.get(c, c) as f64;
        let predicted = cm.col_sum(c) as f64;
        let actual = cm.row_sum(c) as f64;
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        let f1 = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        precision_sum += p;
        recall_sum += r;
        f1_sum += f1;
    }
    Ok(MetricsRecord {
        accuracy,
        precision_macro: precision_sum / n as f64,
        recall_macro: recall_sum / n as f64,
        f1_macro: f1_sum / n as f64,
        confusion: cm.clone(),
    })
}

/// Outcome of one classifier evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: MetricsRecord,
    /// Dataset items the adapter returned no (or an unknown-class)
    /// prediction for; each is scored as a misclassification.
    pub missing_predictions: u64,
}

/// Attacks `data` with `spec`, runs the adapter on the result, and scores
/// the predictions.
///
/// Items absent from the prediction CSV, or predicted as a label outside
/// the dataset's class list, count as misclassified: they are tallied
/// into a fixed wrong-class cell so the accuracy/trace identity holds.
pub fn evaluate(
    data: &LabeledDataset,
    spec: &AttackSpec,
    adapter: &ClassifierAdapter,
    workspace: &Path,
    jobs: usize,
) -> Result<Evaluation> {
    let attacked_dir = workspace.join("attacked");
    let materialized = attack_dataset(data, spec, &attacked_dir, jobs)?;
    let predictions_path = workspace.join("predictions.csv");
    adapter.run(&attacked_dir, &predictions_path)?;
    let predictions = parse_predictions(&predictions_path)?;
    score_predictions(&materialized.dataset, &attacked_dir, data.classes(), &predictions)
}

fn score_predictions(
    attacked: &LabeledDataset,
    attacked_dir: &Path,
    classes: &[String],
    predictions: &[Prediction],
) -> Result<Evaluation> {
    let class_index: HashMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut by_path: HashMap<String, &Prediction> = HashMap::new();
    let dir_prefix = format!("{}/", attacked_dir.to_string_lossy());
    for p in predictions {
        // Adapters may emit absolute paths; normalize to dir-relative.
        let key = p
            .path
            .strip_prefix(&dir_prefix)
            .unwrap_or(&p.path)
            .to_string();
        by_path.insert(key, p);
    }

    let mut cm = ConfusionMatrix::zeros(classes.len());
    let mut missing = 0u64;
    for item in attacked.items() {
        let rel = item
            .path
            .strip_prefix(attacked_dir)
            .map(path_to_slash)
            .unwrap_or_else(|_| path_to_slash(&item.path));
        let true_idx = *class_index
            .get(item.label.as_str())
            .expect("dataset labels are drawn from its class list");
        let predicted_idx = by_path
            .get(&rel)
            .and_then(|p| class_index.get(p.label.as_str()).copied());
        match predicted_idx {
            Some(idx) => cm.add(true_idx, idx),
            None => {
                // No usable prediction: score against a fixed wrong class
                // so the item still lands off the diagonal.
                missing += 1;
                let wrong = if true_idx == 0 { 1 } else { 0 };
                if classes.len() > 1 {
                    cm.add(true_idx, wrong);
                } else {
                    cm.add(true_idx, 0); // single-class sets cannot be wrong
                }
            }
        }
    }
    Ok(Evaluation {
        metrics: metrics_from_confusion(&cm)?,
        missing_predictions: missing,
    })
}

/// Relative accuracy drop, in percent: `100 * (baseline - attacked) / baseline`.
pub fn pct_decrease(baseline_acc: f64, attacked_acc: f64) -> Result<f64> {
    if baseline_acc <= 0.0 {
        return Err(Error::UndefinedBaseline(
            "baseline accuracy must be positive to express a relative decrease",
        ));
    }
    Ok(100.0 * (baseline_acc - attacked_acc) / baseline_acc)
}

/// Relative accuracy gain, in percent: `100 * (defended - attacked) / attacked`.
pub fn pct_increase(attacked_acc: f64, defended_acc: f64) -> Result<f64> {
    if attacked_acc <= 0.0 {
        return Err(Error::UndefinedBaseline(
            "attacked accuracy must be positive to express a relative increase",
        ));
    }
    Ok(100.0 * (defended_acc - attacked_acc) / attacked_acc)
}

/// One sweep cell: a (mask, weight) pair and its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mask: MaskId,
    pub k: f64,
    pub metrics: MetricsRecord,
}

/// Full sweep result: one row per (mask, weight) plus the unattacked
/// baseline. Zero-weight cells are the baseline evaluation replicated, so
/// per-mask slices can be consumed without joins.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub baseline: MetricsRecord,
}

/// A sweep failure carrying whatever completed before the abort.
#[derive(Debug)]
pub struct SweepError {
    pub completed: Vec<SweepRow>,
    pub baseline: Option<MetricsRecord>,
    pub source: Error,
}

impl std::fmt::Display for SweepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "sweep aborted after {} completed cells: {}",
            self.completed.len(),
            self.source
        )
    }
}

impl std::error::Error for SweepError {}

/// Evaluates every (mask, weight) cell of the grid.
///
/// The baseline (weight 0) is evaluated once up front and replicated into
/// each mask's zero row. Cells run independently, each in an isolated
/// workspace subdirectory, up to `jobs` at a time; rows are assembled in
/// (mask ascending, weight ascending) order afterwards. The first cell
/// failure aborts the sweep: pending cells are skipped and the completed
/// rows are returned inside the error.
#[allow(clippy::result_large_err)] // the error payload (completed rows) is the point
pub fn sweep(
    data: &LabeledDataset,
    masks: &[MaskId],
    ks: &[f64],
    adapter: &ClassifierAdapter,
    workspace: &Path,
    jobs: usize,
) -> std::result::Result<SweepReport, SweepError> {
    let fail = |source: Error| SweepError {
        completed: Vec::new(),
        baseline: None,
        source,
    };
    if masks.is_empty() {
        return Err(fail(Error::invalid("mask set must be nonempty")));
    }
    if ks.is_empty() {
        return Err(fail(Error::invalid("weight list must be nonempty")));
    }
    let mut masks = masks.to_vec();
    masks.sort();
    masks.dedup();
    let mut ks = ks.to_vec();
    ks.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
    ks.dedup();

    let baseline_spec = match AttackSpec::uniform(masks[0], 0.0) {
        Ok(s) => s,
        Err(e) => return Err(fail(e)),
    };
    let baseline = evaluate(data, &baseline_spec, adapter, &workspace.join("baseline"), jobs)
        .map_err(fail)?
        .metrics;

    struct Cell {
        mask: MaskId,
        k: f64,
        workspace: PathBuf,
    }
    let mut cells = Vec::new();
    for mask in &masks {
        for (ki, k) in ks.iter().enumerate() {
            if *k == 0.0 {
                continue; // replicated from the baseline
            }
            cells.push(Cell {
                mask: *mask,
                k: *k,
                workspace: workspace.join(format!("cell_{mask}_{ki}")),
            });
        }
    }

    let aborted = AtomicBool::new(false);
    enum Outcome {
        Done(SweepRow),
        Failed(Error),
        Skipped,
    }
    let outcomes = run_jobs(cells, jobs, |cell| {
        if aborted.load(Ordering::SeqCst) {
            return Outcome::Skipped;
        }
        let spec = match AttackSpec::uniform(cell.mask, cell.k) {
            Ok(s) => s,
            Err(e) => {
                aborted.store(true, Ordering::SeqCst);
                return Outcome::Failed(e);
            }
        };
        match evaluate(data, &spec, adapter, &cell.workspace, 1) {
            Ok(eval) => Outcome::Done(SweepRow {
                mask: cell.mask,
                k: cell.k,
                metrics: eval.metrics,
            }),
            Err(e) => {
                aborted.store(true, Ordering::SeqCst);
                Outcome::Failed(e)
            }
        }
    });

    let mut rows = Vec::new();
    let mut failure: Option<Error> = None;
    for outcome in outcomes {
        match outcome {
            Outcome::Done(row) => rows.push(row),
            Outcome::Failed(e) => failure = failure.or(Some(e)),
            Outcome::Skipped => {}
        }
    }
    for mask in &masks {
        if ks.contains(&0.0) {
            rows.push(SweepRow {
                mask: *mask,
                k: 0.0,
                metrics: baseline.clone(),
            });
        }
    }
    rows.sort_by(|a, b| {
        a.mask
            .cmp(&b.mask)
            .then(a.k.partial_cmp(&b.k).expect("finite weights"))
    });

    match failure {
        None => Ok(SweepReport { rows, baseline }),
        Some(source) => Err(SweepError {
            completed: rows,
            baseline: Some(baseline),
            source,
        }),
    }
}

/// Writes a sweep report CSV: header
/// `mask,k,accuracy,precision_macro,recall_macro,f1_macro,pct_decrease`,
/// six-decimal fixed-point values, rows sorted (mask, weight).
pub fn write_report_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let text = render_report_rows(&report.rows, report.baseline.accuracy, None)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes whatever rows a failed sweep completed, terminated by an error
/// marker comment so partial output cannot be mistaken for a full report.
pub fn write_partial_report_csv(err: &SweepError, path: &Path) -> Result<()> {
    let baseline_acc = err.baseline.as_ref().map(|b| b.accuracy).unwrap_or(0.0);
    let text = render_report_rows(
        &err.completed,
        baseline_acc,
        Some(&format!("# error: {}", err.source)),
    )?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn render_report_rows(
    rows: &[SweepRow],
    baseline_accuracy: f64,
    trailer: Option<&str>,
) -> Result<String> {
    let mut out = String::new();
    out.push_str("mask,k,accuracy,precision_macro,recall_macro,f1_macro,pct_decrease\n");
    for row in rows {
        let decrease = pct_decrease(baseline_accuracy, row.metrics.accuracy)?;
        let mut line = String::new();
        let _ = write!(
            line,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.mask,
            row.k,
            row.metrics.accuracy,
            row.metrics.precision_macro,
            row.metrics.recall_macro,
            row.metrics.f1_macro,
            decrease
        );
        out.push_str(&line);
        out.push('\n');
    }
    if let Some(t) = trailer {
        out.push_str(t);
        out.push('\n');
    }
    Ok(out)
}

/// One parsed report line; the confusion matrix is not round-tripped.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportLine {
    pub mask: MaskId,
    pub k: f64,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub pct_decrease: f64,
}

/// Parses a report CSV produced by [`write_report_csv`].
pub fn read_report_csv(path: &Path) -> Result<Vec<ReportLine>> {
    let parse_err = |line: Option<u64>, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(Some(1), "empty report".to_string()))?;
    if header.1 != "mask,k,accuracy,precision_macro,recall_macro,f1_macro,pct_decrease" {
        return Err(parse_err(Some(1), format!("unexpected header {:?}", header.1)));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = Some(i as u64 + 1);
        if line.starts_with('#') {
            return Err(parse_err(lineno, format!("report contains a marker: {line}")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                lineno,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let mask = MaskId::parse(fields[0]).map_err(|e| parse_err(lineno, e.to_string()))?;
        let mut nums = [0.0f64; 6];
        for (slot, raw) in nums.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number {raw:?}")))?;
        }
        rows.push(ReportLine {
            mask,
            k: nums[0],
            accuracy: nums[1],
            precision_macro: nums[2],
            recall_macro: nums[3],
            f1_macro: nums[4],
            pct_decrease: nums[5],
        });
    }
    Ok(rows)
}

/// Per-row defense comparison plus per-mask summaries at the reporting
/// weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// (mask, pct_increase) at [`SUMMARY_WEIGHT`], for masks whose grid
    /// contains that weight.
    pub summary: Vec<(MaskId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub mask: MaskId,
    pub k: f64,
    pub attacked_accuracy: f64,
    pub defended_accuracy: f64,
    pub pct_increase: f64,
}

/// Joins an attacked report with a defended report cell by cell.
///
/// Both must cover the identical (mask, weight) grid in the same order;
/// the first differing cell is named in the error.
pub fn compare_reports(attacked: &[ReportLine], defended: &[ReportLine]) -> Result<Comparison> {
    if attacked.len() != defended.len() {
        return Err(Error::invalid(format!(
            "report grids differ: {} rows vs {} rows",
            attacked.len(),
            defended.len()
        )));
    }
    let mut rows = Vec::with_capacity(attacked.len());
    let mut summary = Vec::new();
    for (a, d) in attacked.iter().zip(defended) {
        if a.mask != d.mask || (a.k - d.k).abs() > WEIGHT_EPS {
            return Err(Error::invalid(format!(
                "report grids differ at cell (mask {}, k {}) vs (mask {}, k {})",
                a.mask, a.k, d.mask, d.k
            )));
        }
        let increase = pct_increase(a.accuracy, d.accuracy)?;
        if (a.k - SUMMARY_WEIGHT).abs() <= WEIGHT_EPS {
            summary.push((a.mask, increase));
        }
        rows.push(ComparisonRow {
            mask: a.mask,
            k: a.k,
            attacked_accuracy: a.accuracy,
            defended_accuracy: d.accuracy,
            pct_increase: increase,
        });
    }
    Ok(Comparison { rows, summary })
}

/// Writes a comparison CSV: header
/// `mask,k,attacked_accuracy,defended_accuracy,pct_increase`.
pub fn write_comparison_csv(comparison: &Comparison, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("mask,k,attacked_accuracy,defended_accuracy,pct_increase\n");
    for row in &comparison.rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            row.mask, row.k, row.attacked_accuracy, row.defended_accuracy, row.pct_increase
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
