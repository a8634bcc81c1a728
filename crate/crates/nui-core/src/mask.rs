//! Non-uniform illumination mask generation.
//!
//! Thirteen mask patterns: twelve test-time masks plus a training-time
//! variant of the quadrant mask (`M12Train`). Every mask is defined by a
//! closed-form intensity `a(x, y)` on a canonical 32x32 lattice; other
//! sizes are served by bilinear resampling of the canonical field so the
//! defining constants stay untouched.
//!
//! Coordinates are 0-based with `x` the column (horizontal) index and `y`
//! the row (vertical) index.

use crate::error::{Error, Result};

/// Extent of the canonical lattice on which the mask formulas are defined.
pub const CANONICAL_SIZE: u32 = 32;

/// Identifies one of the illumination masks.
///
/// `M12Train` is the substitute for `M12` used when building augmented
/// training sets; it darkens the right-hand quadrant pair instead of the
/// bottom pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaskId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M8,
    M9,
    M10,
    M11,
    M12,
    M12Train,
}

impl MaskId {
    /// Every mask variant, in ascending order.
    pub const ALL: [MaskId; 13] = [
        MaskId::M1,
        MaskId::M2,
        MaskId::M3,
        MaskId::M4,
        MaskId::M5,
        MaskId::M6,
        MaskId::M7,
        MaskId::M8,
        MaskId::M9,
        MaskId::M10,
        MaskId::M11,
        MaskId::M12,
        MaskId::M12Train,
    ];

    /// The twelve test-time attack masks.
    pub const STANDARD: [MaskId; 12] = [
        MaskId::M1,
        MaskId::M2,
        MaskId::M3,
        MaskId::M4,
        MaskId::M5,
        MaskId::M6,
        MaskId::M7,
        MaskId::M8,
        MaskId::M9,
        MaskId::M10,
        MaskId::M11,
        MaskId::M12,
    ];

    /// Default mask pool for training-set augmentation: masks 6 and 7 are
    /// dropped (they are severities of the same pattern as mask 8) and
    /// mask 12 is swapped for its training variant.
    pub const AUGMENTATION_DEFAULT: [MaskId; 10] = [
        MaskId::M1,
        MaskId::M2,
        MaskId::M3,
        MaskId::M4,
        MaskId::M5,
        MaskId::M8,
        MaskId::M9,
        MaskId::M10,
        MaskId::M11,
        MaskId::M12Train,
    ];

    /// Parses a mask identifier: `"1"` through `"12"`, or `"12t"` for the
    /// training variant of mask 12.
    pub fn parse(s: &str) -> Result<MaskId> {
        match s.trim() {
            "1" => Ok(MaskId::M1),
            "2" => Ok(MaskId::M2),
            "3" => Ok(MaskId::M3),
            "4" => Ok(MaskId::M4),
            "5" => Ok(MaskId::M5),
            "6" => Ok(MaskId::M6),
            "7" => Ok(MaskId::M7),
            "8" => Ok(MaskId::M8),
            "9" => Ok(MaskId::M9),
            "10" => Ok(MaskId::M10),
            "11" => Ok(MaskId::M11),
            "12" => Ok(MaskId::M12),
            "12t" | "12T" => Ok(MaskId::M12Train),
            other => Err(Error::invalid(format!(
                "unknown mask id {other:?} (expected 1..12 or 12t)"
            ))),
        }
    }
}

impl std::fmt::Display for MaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MaskId::M1 => "1",
            MaskId::M2 => "2",
            MaskId::M3 => "3",
            MaskId::M4 => "4",
            MaskId::M5 => "5",
            MaskId::M6 => "6",
            MaskId::M7 => "7",
            MaskId::M8 => "8",
            MaskId::M9 => "9",
            MaskId::M10 => "10",
            MaskId::M11 => "11",
            MaskId::M12 => "12",
            MaskId::M12Train => "12t",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for MaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<MaskId> {
        MaskId::parse(s)
    }
}

/// A 2D grid of real-valued mask intensities, row-major.
///
/// The value at `(x, y)` is the brightness offset `a(x, y)` that an attack
/// adds to an image pixel after scaling by the weight `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskField {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl MaskField {
    /// Builds a field from row-major values; dimensions must be positive,
    /// the length must match, and every entry must be finite.
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<MaskField> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "mask value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite mask value {v}")));
        }
        Ok(MaskField {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at column `x`, row `y`. Panics if out of bounds.
    pub fn get(&self, x: u32, y: u32) -> f64 {
        assert!(x < self.width && y < self.height, "coordinate out of bounds");
        self.values[y as usize * self.width as usize + x as usize]
    }

    /// Bilinearly resamples the field to `width`x`height`.
    ///
    /// Uses corner-aligned sampling, so resampling to the source size
    /// reproduces the source exactly.
    pub fn resample(&self, width: u32, height: u32) -> Result<MaskField> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "resample dimensions must be positive, got {width}x{height}"
            )));
        }
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            let sy = axis_position(y, height, self.height);
            let y0 = sy.floor() as u32;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = sy - y0 as f64;
            for x in 0..width {
                let sx = axis_position(x, width, self.width);
                let x0 = sx.floor() as u32;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = sx - x0 as f64;
                let top = lerp(self.get(x0, y0), self.get(x1, y0), tx);
                let bottom = lerp(self.get(x0, y1), self.get(x1, y1), tx);
                values.push(lerp(top, bottom, ty));
            }
        }
        MaskField::new(width, height, values)
    }

    /// Row-major CSV rendering: one line per row, comma-separated, values
    /// printed with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if x > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", self.get(x, y)));
            }
            out.push('\n');
        }
        out
    }

    /// 8-bit grayscale rendering with min-max normalization to [0, 255].
    /// A constant field maps to all zeros.
    pub fn to_normalized_bytes(&self) -> Vec<u8> {
        let min = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = self
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        self.values
            .iter()
            .map(|&v| {
                if span == 0.0 {
                    0
                } else {
                    (((v - min) / span) * 255.0).round().clamp(0.0, 255.0) as u8
                }
            })
            .collect()
    }
}

/// A mask paired with its scalar weight; `k = 0` denotes no attack.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMask {
    base: MaskField,
    k: f64,
}

impl WeightedMask {
    pub fn base(&self) -> &MaskField {
        &self.base
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Weighted value `k * a(x, y)`.
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.k * self.base.get(x, y)
    }

    /// Materializes the weighted field entry by entry.
    pub fn to_field(&self) -> MaskField {
        let values = self.base.values.iter().map(|v| self.k * v).collect();
        MaskField {
            width: self.base.width,
            height: self.base.height,
            values,
        }
    }
}

/// Scales a mask by the weight `k`; `k` must be finite.
pub fn weight_mask(mask: MaskField, k: f64) -> Result<WeightedMask> {
    if !k.is_finite() {
        return Err(Error::invalid(format!("weight must be finite, got {k}")));
    }
    Ok(WeightedMask { base: mask, k })
}

/// Generates the mask field for `id` at the requested size.
///
/// The canonical 32x32 field is evaluated from the defining formula; any
/// other size is produced by bilinear resampling of that field. The result
/// is a pure function of the inputs.
pub fn generate_mask(id: MaskId, width: u32, height: u32) -> Result<MaskField> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "mask dimensions must be positive, got {width}x{height}"
        )));
    }
    let canonical = canonical_field(id);
    if width == CANONICAL_SIZE && height == CANONICAL_SIZE {
        Ok(canonical)
    } else {
        canonical.resample(width, height)
    }
}

/// The 23-step attack weight grid: -2.2 to 2.2 in 0.2 increments.
pub fn standard_weight_grid() -> Vec<f64> {
    (-11..=11).map(|i| i as f64 / 5.0).collect()
}

/// The 12-step training weight grid: -1.2 to 1.2 in 0.2 increments with
/// 0 excluded (unweighted images are covered by the clean portion of an
/// augmented training set).
pub fn training_weight_grid() -> Vec<f64> {
    (-6..=6)
        .filter(|&i| i != 0)
        .map(|i| i as f64 / 5.0)
        .collect()
}

fn canonical_field(id: MaskId) -> MaskField {
    let n = CANONICAL_SIZE;
    let mut values = Vec::with_capacity((n * n) as usize);
    for y in 0..n {
        for x in 0..n {
            values.push(mask_value(id, x, y));
        }
    }
    MaskField {
        width: n,
        height: n,
        values,
    }
}

/// Mask intensity at integer canonical coordinates, evaluated from the
/// defining formula of each pattern.
fn mask_value(id: MaskId, x: u32, y: u32) -> f64 {
    match id {
        MaskId::M1 => mask1(x, y),
        MaskId::M2 => mask2(x, y),
        MaskId::M3 => mask3(x, y),
        MaskId::M4 => mask4(x, y),
        MaskId::M5 => center_product(x, y),
        MaskId::M6 => 144.0 - center_product(x, y),
        MaskId::M7 => 100.0 - center_product(x, y),
        MaskId::M8 => 50.0 - center_product(x, y),
        MaskId::M9 => {
            if in_stripe_band(y) {
                mask1(x, y)
            } else {
                -mask2(x, y)
            }
        }
        MaskId::M10 => {
            if in_stripe_band(x) {
                mask1(x, y)
            } else {
                -mask2(x, y)
            }
        }
        MaskId::M11 => match (x <= 16, y <= 16) {
            (true, true) => mask1(x, y),
            (true, false) => mask2(x, y),
            (false, true) => mask3(x, y),
            (false, false) => mask4(x, y),
        },
        MaskId::M12 => match (x <= 16, y <= 16) {
            (true, true) => mask1(x, y),
            (true, false) => mask2(x, y),
            (false, true) => -mask3(x, y),
            (false, false) => -mask4(x, y),
        },
        MaskId::M12Train => match (x <= 16, y <= 16) {
            (true, true) => mask1(x, y),
            (true, false) => -mask2(x, y),
            (false, true) => mask3(x, y),
            (false, false) => -mask4(x, y),
        },
    }
}

const U: f64 = CANONICAL_SIZE as f64;
const V: f64 = CANONICAL_SIZE as f64;

// Linear gradient brightest on the left edge.
fn mask1(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    (U - x) * 30.0 / U + (V - y) * 30.0 / V + (U - y) * 20.0 / U + (V - y) * 20.0 / V
}

// Gradient spread across the whole frame.
fn mask2(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    x * 30.0 / U + (V - y) * 30.0 / V + y * 20.0 / U + (V - x) * 20.0 / V
}

// Gradient brightest in the top-right corner.
fn mask3(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    (U - x) * 30.0 / U + y * 30.0 / V + (U - y) * 20.0 / U + y * 20.0 / V
}

// Gradient brightest in the bottom-right corner.
fn mask4(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    x * 30.0 / U + y * 30.0 / V + x * 20.0 / U + y * 20.0 / V
}

// Product of distances from the center lines; the curved-diamond term
// shared by masks 5 through 8.
fn center_product(x: u32, y: u32) -> f64 {
    ((16.0 - x as f64).abs()) * ((16.0 - y as f64).abs())
}

// Alternating band pattern: four 6-wide bands interleaved with 4-wide gaps.
fn in_stripe_band(coord: u32) -> bool {
    matches!(coord, 0..=5 | 10..=15 | 20..=25 | 30..=32)
}

fn axis_position(dst: u32, dst_len: u32, src_len: u32) -> f64 {
    if dst_len == 1 {
        (src_len - 1) as f64 / 2.0
    } else {
        dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}
