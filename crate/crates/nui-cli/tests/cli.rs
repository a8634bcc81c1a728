//! Black-box tests of the `nui` binary: exit codes, file contracts and
//! determinism across job counts.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nui_core::buffer::ImageBuffer;
use nui_core::io::save_image;

fn nui(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nui"))
        .args(args)
        .output()
        .expect("spawn nui")
}

fn assert_status(out: &Output, expected: i32) {
    assert_eq!(
        out.status.code(),
        Some(expected),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Mid-range RGB test image written by the toolkit's own encoder so
/// byte-level comparisons are meaningful.
fn write_test_image(path: &Path) {
    let pixels: Vec<u8> = (0..32u32 * 32 * 3)
        .map(|i| (20 + (i * 7) % 200) as u8)
        .collect();
    let img = ImageBuffer::new(32, 32, 3, pixels).unwrap();
    save_image(path, &img).unwrap();
}

#[test]
fn zero_weight_attack_is_byte_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.png");
    write_test_image(&input);
    let output = dir.path().join("y.png");
    let out = nui(&[
        "attack",
        "--in",
        input.to_str().unwrap(),
        "--mask",
        "1",
        "--k",
        "0",
        "--out",
        output.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    assert_eq!(fs::read(&input).unwrap(), fs::read(&output).unwrap());
}

#[test]
fn usage_errors_exit_2_and_touch_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out_file = dir.path().join("out.csv");

    let out = nui(&["--bogus-flag", "mask", "--id", "1", "--out", out_file.to_str().unwrap()]);
    assert_status(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus-flag"));
    assert!(!out_file.exists());

    let out = nui(&["mask", "--id", "99", "--out", out_file.to_str().unwrap()]);
    assert_status(&out, 2);
    assert!(!out_file.exists());

    let out = nui(&["mask", "--id", "1", "--size", "0x4", "--out", out_file.to_str().unwrap()]);
    assert_status(&out, 2);
    assert!(!out_file.exists());

    let out = nui(&["attack", "--in", "x.png", "--mask", "1", "--k", "inf", "--out", "y.png"]);
    assert_status(&out, 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = nui(&[
        "attack",
        "--in",
        dir.path().join("missing.png").to_str().unwrap(),
        "--mask",
        "1",
        "--k",
        "0.5",
        "--out",
        dir.path().join("y.png").to_str().unwrap(),
    ]);
    assert_status(&out, 1);
    assert!(out.stdout.is_empty()); // diagnostics go to stderr
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_exits_zero() {
    let out = nui(&["--help"]);
    assert_status(&out, 0);
}

#[test]
fn mask_csv_spot_value_and_png_export() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("m6.csv");
    let out = nui(&["mask", "--id", "6", "--size", "32x32", "--out", csv_path.to_str().unwrap(), "--format", "csv"]);
    assert_status(&out, 0);
    let text = fs::read_to_string(&csv_path).unwrap();
    let row: Vec<&str> = text.lines().nth(16).unwrap().split(',').collect();
    assert_eq!(row[16], "144");

    let png_path = dir.path().join("m6.png");
    let out = nui(&["mask", "--id", "6", "--out", png_path.to_str().unwrap()]);
    assert_status(&out, 0);
    let img = nui_core::io::load_image(&png_path).unwrap();
    assert_eq!(img.channels(), 1);
    assert_eq!(img.get(16, 16, 0), 255);
}

#[test]
fn attack_round_trips_only_without_saturation_or_ties() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.png");
    write_test_image(&input);
    let fwd = dir.path().join("fwd.png");
    let back = dir.path().join("back.png");

    // Weight 2^-6 keeps every weighted mask value well inside the pixel
    // range and off half-integer rounding ties, so negating the weight
    // restores the input exactly.
    let out = nui(&["attack", "--in", input.to_str().unwrap(), "--mask", "1", "--k", "0.015625", "--out", fwd.to_str().unwrap()]);
    assert_status(&out, 0);
    let out = nui(&["attack", "--in", fwd.to_str().unwrap(), "--mask", "1", "--k", "-0.015625", "--out", back.to_str().unwrap()]);
    assert_status(&out, 0);
    assert_eq!(fs::read(&input).unwrap(), fs::read(&back).unwrap());
    assert_ne!(fs::read(&input).unwrap(), fs::read(&fwd).unwrap());

    // A saturating attack clamps and cannot be undone.
    let bright = dir.path().join("bright.png");
    save_image(&bright, &ImageBuffer::filled(32, 32, 3, 200).unwrap()).unwrap();
    let out = nui(&["attack", "--in", bright.to_str().unwrap(), "--mask", "1", "--k", "2.0", "--out", fwd.to_str().unwrap()]);
    assert_status(&out, 0);
    let out = nui(&["attack", "--in", fwd.to_str().unwrap(), "--mask", "1", "--k", "-2.0", "--out", back.to_str().unwrap()]);
    assert_status(&out, 0);
    assert_ne!(fs::read(&bright).unwrap(), fs::read(&back).unwrap());
}

#[test]
fn directory_attack_is_job_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("imgs");
    for i in 0..6 {
        let pixels: Vec<u8> = (0..24u32 * 24 * 3).map(|j| ((j + i * 37) % 251) as u8).collect();
        save_image(
            &input.join(format!("sub/i{i}.png")),
            &ImageBuffer::new(24, 24, 3, pixels).unwrap(),
        )
        .unwrap();
    }
    let out1 = dir.path().join("out1");
    let out4 = dir.path().join("out4");
    for (jobs, out_dir) in [("1", &out1), ("4", &out4)] {
        let out = nui(&[
            "--jobs", jobs,
            "attack",
            "--in", input.to_str().unwrap(),
            "--mask", "9",
            "--k", "-1.4",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_status(&out, 0);
    }
    for i in 0..6 {
        let rel = format!("sub/i{i}.png");
        assert_eq!(
            fs::read(out1.join(&rel)).unwrap(),
            fs::read(out4.join(&rel)).unwrap()
        );
    }
}

#[test]
fn unselected_channels_survive_cli_attack() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.png");
    write_test_image(&input);
    let output = dir.path().join("y.png");
    let out = nui(&[
        "attack",
        "--in", input.to_str().unwrap(),
        "--mask", "5",
        "--k", "1.8",
        "--channels", "R,B",
        "--out", output.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let a = nui_core::io::load_image(&input).unwrap();
    let b = nui_core::io::load_image(&output).unwrap();
    for y in 0..32 {
        for x in 0..32 {
            assert_eq!(a.get(x, y, 1), b.get(x, y, 1));
        }
    }
}

#[test]
fn histogram_csv_sums_to_sample_count() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.png");
    write_test_image(&input);
    let csv_path = dir.path().join("hist.csv");
    let out = nui(&["hist", "--in", input.to_str().unwrap(), "--out", csv_path.to_str().unwrap()]);
    assert_status(&out, 0);
    let text = fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,count"));
    let total: u64 = lines
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 32 * 32 * 3);
}

#[test]
fn seed_flag_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("data");
    for (label, base) in [("a", 60u8), ("b", 180u8)] {
        for i in 0..5 {
            save_image(
                &input.join(label).join(format!("i{i}.png")),
                &ImageBuffer::filled(16, 16, 3, base + i).unwrap(),
            )
            .unwrap();
        }
    }
    let flag_out = dir.path().join("flag");
    let env_out = dir.path().join("env");

    let out = nui(&["--seed", "31", "augment", "--in", input.to_str().unwrap(), "--out", flag_out.to_str().unwrap()]);
    assert_status(&out, 0);

    let out = Command::new(env!("CARGO_BIN_EXE_nui"))
        .env("NUI_SEED", "31")
        .args(["augment", "--in", input.to_str().unwrap(), "--out", env_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_status(&out, 0);

    assert_eq!(
        fs::read(flag_out.join("manifest.csv")).unwrap(),
        fs::read(env_out.join("manifest.csv")).unwrap()
    );
}

#[test]
fn compare_joins_reports_and_flags_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let attacked = dir.path().join("attacked.csv");
    let defended = dir.path().join("defended.csv");
    let header = "mask,k,accuracy,precision_macro,recall_macro,f1_macro,pct_decrease\n";
    fs::write(
        &attacked,
        format!("{header}6,-1.400000,0.200000,0.2,0.2,0.2,60.0\n6,0.000000,0.500000,0.5,0.5,0.5,0.0\n"),
    )
    .unwrap();
    fs::write(
        &defended,
        format!("{header}6,-1.400000,0.600000,0.6,0.6,0.6,10.0\n6,0.000000,0.550000,0.55,0.55,0.55,0.0\n"),
    )
    .unwrap();
    let cmp = dir.path().join("cmp.csv");
    let out = nui(&[
        "compare",
        "--attacked", attacked.to_str().unwrap(),
        "--defended", defended.to_str().unwrap(),
        "--out", cmp.to_str().unwrap(),
    ]);
    assert_status(&out, 0);
    let text = fs::read_to_string(&cmp).unwrap();
    assert!(text.starts_with("mask,k,attacked_accuracy,defended_accuracy,pct_increase\n"));
    assert!(text.contains("6,-1.400000,0.200000,0.600000,200.000000"));
    // The per-mask summary at the reporting weight lands on stderr.
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask 6"));

    let mismatched = dir.path().join("mismatch.csv");
    fs::write(&mismatched, format!("{header}6,-1.400000,0.6,0.6,0.6,0.6,10.0\n")).unwrap();
    let out = nui(&[
        "compare",
        "--attacked", attacked.to_str().unwrap(),
        "--defended", mismatched.to_str().unwrap(),
        "--out", cmp.to_str().unwrap(),
    ]);
    assert_status(&out, 1);
}
