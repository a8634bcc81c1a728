//! Applies weighted illumination masks to images.
//!
//! The perturbation is computed in real arithmetic per sample and only
//! converted back to 8 bits at the end: `out = clamp(round(in + k * a))`,
//! rounding half away from zero and clamping to [0, 255].

use std::collections::HashMap;

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::exec::run_jobs;
use crate::mask::{generate_mask, MaskField, MaskId};

/// One of the three color planes of an RGB image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    fn bit(self) -> u8 {
        match self {
            Channel::R => 0b001,
            Channel::G => 0b010,
            Channel::B => 0b100,
        }
    }

    /// Interleaved sample offset of this channel within an RGB pixel.
    pub fn index(self) -> u8 {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// Nonempty subset of the RGB planes an attack is applied to.
///
/// Grayscale images treat their single channel as always selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelSubset(u8);

impl ChannelSubset {
    /// All three channels; the default attack configuration.
    pub fn all() -> ChannelSubset {
        ChannelSubset(0b111)
    }

    pub fn new(channels: &[Channel]) -> Result<ChannelSubset> {
        if channels.is_empty() {
            return Err(Error::invalid("channel subset must be nonempty"));
        }
        let mut bits = 0u8;
        for c in channels {
            if bits & c.bit() != 0 {
                return Err(Error::invalid(format!("duplicate channel {c:?}")));
            }
            bits |= c.bit();
        }
        Ok(ChannelSubset(bits))
    }

    /// Parses a comma-separated list of channel letters, e.g. `"R,B"`.
    pub fn parse(s: &str) -> Result<ChannelSubset> {
        let mut channels = Vec::new();
        for part in s.split(',') {
            match part.trim() {
                "R" | "r" => channels.push(Channel::R),
                "G" | "g" => channels.push(Channel::G),
                "B" | "b" => channels.push(Channel::B),
                other => {
                    return Err(Error::invalid(format!(
                        "unknown channel {other:?} (expected R, G or B)"
                    )))
                }
            }
        }
        ChannelSubset::new(&channels)
    }

    pub fn contains(&self, c: Channel) -> bool {
        self.0 & c.bit() != 0
    }

    pub fn is_all(&self) -> bool {
        self.0 == 0b111
    }
}

impl std::fmt::Display for ChannelSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for c in Channel::ALL {
            if self.contains(c) {
                if !first {
                    f.write_str(",")?;
                }
                write!(f, "{c:?}")?;
                first = false;
            }
        }
        Ok(())
    }
}

impl Default for ChannelSubset {
    fn default() -> Self {
        ChannelSubset::all()
    }
}

/// Full description of one perturbation: mask, weight and channel subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub mask: MaskId,
    pub k: f64,
    pub channels: ChannelSubset,
}

impl AttackSpec {
    pub fn new(mask: MaskId, k: f64, channels: ChannelSubset) -> Result<AttackSpec> {
        if !k.is_finite() {
            return Err(Error::invalid(format!("weight must be finite, got {k}")));
        }
        Ok(AttackSpec { mask, k, channels })
    }

    /// Attack on all channels; the common case.
    pub fn uniform(mask: MaskId, k: f64) -> Result<AttackSpec> {
        AttackSpec::new(mask, k, ChannelSubset::all())
    }
}

/// Perturbs `image` according to `spec`.
///
/// The mask is generated at the image's own dimensions; selected channels
/// receive `clamp(round(in + k * a(x, y)))` while unselected channels are
/// copied verbatim. `k = 0` reproduces the input byte for byte.
pub fn apply_attack(image: &ImageBuffer, spec: &AttackSpec) -> Result<ImageBuffer> {
    let field = generate_mask(spec.mask, image.width(), image.height())?;
    Ok(apply_weighted_field(image, &field, spec.k, spec.channels))
}

/// Attack with a precomputed mask field matching the image dimensions.
pub fn apply_weighted_field(
    image: &ImageBuffer,
    field: &MaskField,
    k: f64,
    channels: ChannelSubset,
) -> ImageBuffer {
    debug_assert_eq!(field.width(), image.width());
    debug_assert_eq!(field.height(), image.height());
    let mut out = image.clone();
    let n_channels = image.channels();
    for y in 0..image.height() {
        for x in 0..image.width() {
            let delta = k * field.get(x, y);
            for c in 0..n_channels {
                // A single grayscale channel counts as selected.
                let selected = n_channels == 1 || channels.contains(Channel::ALL[c as usize]);
                if selected {
                    let idx = image.sample_index(x, y, c);
                    out.pixels_mut()[idx] = clamp_round(image.pixels()[idx] as f64 + delta);
                }
            }
        }
    }
    out
}

/// Attacks a batch of images with one spec, optionally in parallel.
///
/// Output order matches input order regardless of the job count.
pub fn attack_images(
    images: &[ImageBuffer],
    spec: &AttackSpec,
    jobs: usize,
) -> Result<Vec<ImageBuffer>> {
    // Masks are resampled once per distinct image size.
    let mut fields: HashMap<(u32, u32), MaskField> = HashMap::new();
    for img in images {
        let key = (img.width(), img.height());
        if let std::collections::hash_map::Entry::Vacant(slot) = fields.entry(key) {
            slot.insert(generate_mask(spec.mask, key.0, key.1)?);
        }
    }
    let k = spec.k;
    let channels = spec.channels;
    Ok(run_jobs(images.iter().collect(), jobs, |img| {
        let field = &fields[&(img.width(), img.height())];
        apply_weighted_field(img, field, k, channels)
    }))
}

/// 256-bin intensity histogram over every sample, all channels pooled.
pub fn histogram(image: &ImageBuffer) -> [u64; 256] {
    let mut bins = [0u64; 256];
    for &p in image.pixels() {
        bins[p as usize] += 1;
    }
    bins
}

/// Nearest integer (ties away from zero) clamped to the 8-bit range.
pub(crate) fn clamp_round(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
