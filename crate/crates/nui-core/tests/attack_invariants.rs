//! Property tests for the attack engine and mask algebra.

use nui_core::attack::{apply_attack, histogram, AttackSpec, Channel, ChannelSubset};
use nui_core::buffer::ImageBuffer;
use nui_core::mask::{generate_mask, weight_mask, MaskId};
use proptest::prelude::*;

/// Independent scalar reference for the perturbation arithmetic: promote
/// to f64, add the weighted mask value, round half away from zero, clamp.
/// Kept free of any library helper so it can catch systematic mistakes.
#[allow(clippy::needless_range_loop, clippy::manual_clamp)]
fn reference_attack(
    image: &ImageBuffer,
    mask_values: &[f64],
    k: f64,
    selected: [bool; 3],
) -> Vec<u8> {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let ch = image.channels() as usize;
    let mut out = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let p = image.pixels()[(y * w + x) * ch + c] as f64;
                let take = ch == 1 || selected[c];
                if take {
                    let v = p + k * mask_values[y * w + x];
                    let rounded = if v >= 0.0 {
                        (v + 0.5).floor()
                    } else {
                        (v - 0.5).ceil()
                    };
                    let clamped = if rounded < 0.0 {
                        0.0
                    } else if rounded > 255.0 {
                        255.0
                    } else {
                        rounded
                    };
                    out.push(clamped as u8);
                } else {
                    out.push(p as u8);
                }
            }
        }
    }
    out
}

fn arb_mask_id() -> impl Strategy<Value = MaskId> {
    prop::sample::select(MaskId::ALL.to_vec())
}

fn arb_image() -> impl Strategy<Value = ImageBuffer> {
    (1u32..40, 1u32..40, prop::sample::select(vec![1u8, 3u8])).prop_flat_map(|(w, h, ch)| {
        let len = (w * h * ch as u32) as usize;
        prop::collection::vec(any::<u8>(), len)
            .prop_map(move |pixels| ImageBuffer::new(w, h, ch, pixels).unwrap())
    })
}

fn arb_subset() -> impl Strategy<Value = ([bool; 3], ChannelSubset)> {
    (1u8..8).prop_map(|bits| {
        let flags = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0];
        let chans: Vec<Channel> = Channel::ALL
            .iter()
            .zip(flags)
            .filter_map(|(c, on)| on.then_some(*c))
            .collect();
        (flags, ChannelSubset::new(&chans).unwrap())
    })
}

proptest! {
    #[test]
    fn zero_weight_is_identity(img in arb_image(), id in arb_mask_id()) {
        let spec = AttackSpec::uniform(id, 0.0).unwrap();
        prop_assert_eq!(apply_attack(&img, &spec).unwrap(), img);
    }

    #[test]
    fn output_matches_scalar_reference(
        img in arb_image(),
        id in arb_mask_id(),
        k in -3.0f64..3.0,
        (flags, subset) in arb_subset(),
    ) {
        let spec = AttackSpec::new(id, k, subset).unwrap();
        let out = apply_attack(&img, &spec).unwrap();
        let field = generate_mask(id, img.width(), img.height()).unwrap();
        let expected = reference_attack(&img, field.values(), k, flags);
        prop_assert_eq!(out.pixels(), &expected[..]);
    }

    #[test]
    fn unselected_channels_are_untouched(
        img in arb_image(),
        id in arb_mask_id(),
        k in -3.0f64..3.0,
        (flags, subset) in arb_subset(),
    ) {
        prop_assume!(img.channels() == 3);
        let spec = AttackSpec::new(id, k, subset).unwrap();
        let out = apply_attack(&img, &spec).unwrap();
        for (i, (&a, &b)) in img.pixels().iter().zip(out.pixels()).enumerate() {
            if !flags[i % 3] {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn nonnegative_masks_are_monotone_in_the_weight(
        img in arb_image(),
        id in prop::sample::select(vec![MaskId::M1, MaskId::M2, MaskId::M3, MaskId::M4, MaskId::M5]),
        k1 in 0.0f64..2.5,
        dk in 0.0f64..1.5,
    ) {
        let lo = apply_attack(&img, &AttackSpec::uniform(id, k1).unwrap()).unwrap();
        let hi = apply_attack(&img, &AttackSpec::uniform(id, k1 + dk).unwrap()).unwrap();
        for (a, b) in lo.pixels().iter().zip(hi.pixels()) {
            prop_assert!(b >= a);
        }
        // Mirror case for weights on the dark side of zero.
        let lo = apply_attack(&img, &AttackSpec::uniform(id, -(k1 + dk)).unwrap()).unwrap();
        let hi = apply_attack(&img, &AttackSpec::uniform(id, -k1).unwrap()).unwrap();
        for (a, b) in lo.pixels().iter().zip(hi.pixels()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn histogram_totals_match_sample_count(img in arb_image()) {
        let bins = histogram(&img);
        let total: u64 = bins.iter().sum();
        prop_assert_eq!(total, img.pixels().len() as u64);
    }

    #[test]
    fn weighting_is_linear(
        id in arb_mask_id(),
        k1 in -3.0f64..3.0,
        k2 in -3.0f64..3.0,
    ) {
        let base = generate_mask(id, 32, 32).unwrap();
        let combined = weight_mask(base.clone(), k1 + k2).unwrap().to_field();
        let a = weight_mask(base.clone(), k1).unwrap().to_field();
        let b = weight_mask(base, k2).unwrap().to_field();
        for ((c, a), b) in combined.values().iter().zip(a.values()).zip(b.values()) {
            prop_assert!((c - (a + b)).abs() < 1e-9);
        }
    }

    #[test]
    fn resampled_masks_stay_finite_and_bounded(
        id in arb_mask_id(),
        w in 1u32..70,
        h in 1u32..70,
    ) {
        let canonical = generate_mask(id, 32, 32).unwrap();
        let min = canonical.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = canonical.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let resampled = generate_mask(id, w, h).unwrap();
        prop_assert_eq!(resampled.width(), w);
        prop_assert_eq!(resampled.height(), h);
        for v in resampled.values() {
            // Bilinear interpolation cannot escape the source range.
            prop_assert!(*v >= min - 1e-9 && *v <= max + 1e-9);
        }
    }
}

#[test]
fn attacked_mean_rises_with_positive_weight_on_m2() {
    // M2 is nonnegative everywhere on the canonical lattice (checked by
    // brute force here), so positive weights can only raise or clamp.
    let field = generate_mask(MaskId::M2, 32, 32).unwrap();
    assert!(field.values().iter().all(|v| *v >= 0.0));

    let pixels: Vec<u8> = (0..32u32 * 32 * 3).map(|i| (i % 251) as u8).collect();
    let img = ImageBuffer::new(32, 32, 3, pixels).unwrap();
    for k in [0.2, 0.8, 1.6, 2.2] {
        let attacked = apply_attack(&img, &AttackSpec::uniform(MaskId::M2, k).unwrap()).unwrap();
        assert!(attacked.mean_intensity() >= img.mean_intensity());
    }
}
