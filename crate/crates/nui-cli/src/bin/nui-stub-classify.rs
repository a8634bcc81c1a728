//! Deterministic reference classifier for harness tests and demos.
//!
//! Predicts one of three classes by nearest mean intensity:
//! `dark` (64), `mid` (128), `bright` (192). Implements the adapter
//! contract: `nui-stub-classify <input_dir> <output_csv>` reads every
//! image under the input directory and writes `path,label,confidence`
//! rows with paths relative to the input directory.

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use nui_core::io;

const CENTROIDS: [(&str, f64); 3] = [("dark", 64.0), ("mid", 128.0), ("bright", 192.0)];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.len() != 3 {
        eprintln!("usage: nui-stub-classify <input_dir> <output_csv>");
        return ExitCode::from(2);
    }
    match run(Path::new(&args[1]), Path::new(&args[2])) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(input_dir: &Path, output_csv: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let files = io::list_image_files(input_dir)?;
    let mut out = String::from("path,label,confidence\n");
    for path in files {
        let image = io::load_image(&path)?;
        let mean = image.mean_intensity();
        let (label, distance) = CENTROIDS
            .iter()
            .map(|(label, center)| (*label, (mean - center).abs()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"))
            .expect("nonempty centroid list");
        let confidence = (1.0 - distance / 255.0).clamp(0.0, 1.0);
        let rel = path.strip_prefix(input_dir).unwrap_or(&path);
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let _ = writeln!(out, "{rel},{label},{confidence:.6}");
    }
    std::fs::write(output_csv, out)?;
    Ok(())
}
