use serde::{Deserialize, Serialize};

/// Hue/saturation/lightness triple. Hue in `[0, 360)`, the rest in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HslPixel {
    pub hue_deg: f64,
    pub saturation: f64,
    pub lightness: f64,
}

/// Standard RGB to HSL conversion. Lightness is `(max + min) / 510`.
pub fn rgb_to_hsl(r: u8, g: u8, b: u8) -> HslPixel {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let lightness = (max as f64 + min as f64) / 510.0;
    if max == min {
        return HslPixel { hue_deg: 0.0, saturation: 0.0, lightness };
    }
    let chroma = (max - min) as f64 / 255.0;
    let saturation = (chroma / (1.0 - (2.0 * lightness - 1.0).abs())).min(1.0);
    let (rf, gf, bf) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let sector = if max == r {
        ((gf - bf) / chroma).rem_euclid(6.0)
    } else if max == g {
        (bf - rf) / chroma + 2.0
    } else {
        (rf - gf) / chroma + 4.0
    };
    let hue_deg = (60.0 * sector).rem_euclid(360.0);
    HslPixel { hue_deg, saturation, lightness }
}

/// Lightness only; the hot path of Sun segmentation.
#[inline]
pub fn lightness(rgb: [u8; 3]) -> f64 {
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    let min = rgb[0].min(rgb[1]).min(rgb[2]);
    (max as f64 + min as f64) / 510.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn primaries_and_greys() {
        let red = rgb_to_hsl(255, 0, 0);
        assert_eq!((red.hue_deg, red.saturation, red.lightness), (0.0, 1.0, 0.5));
        let white = rgb_to_hsl(255, 255, 255);
        assert_eq!((white.saturation, white.lightness), (0.0, 1.0));
        let grey = rgb_to_hsl(128, 128, 128);
        assert_eq!(grey.saturation, 0.0);
        assert!((grey.lightness - 0.502).abs() < 1e-3);
        assert_eq!(rgb_to_hsl(0, 255, 0).hue_deg, 120.0);
        assert_eq!(rgb_to_hsl(0, 0, 255).hue_deg, 240.0);
        assert_eq!(rgb_to_hsl(255, 0, 255).hue_deg, 300.0);
    }

    proptest! {
        #[test]
        fn ranges_hold(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            let h = rgb_to_hsl(r, g, b);
            prop_assert!((0.0..360.0).contains(&h.hue_deg));
            prop_assert!((0.0..=1.0).contains(&h.saturation));
            prop_assert!((0.0..=1.0).contains(&h.lightness));
            prop_assert_eq!(h.lightness, lightness([r, g, b]));
        }

        #[test]
        fn lightness_ignores_channel_permutation(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            let l = rgb_to_hsl(r, g, b).lightness;
            prop_assert_eq!(l, rgb_to_hsl(g, b, r).lightness);
            prop_assert_eq!(l, rgb_to_hsl(b, r, g).lightness);
            prop_assert_eq!(l, rgb_to_hsl(b, g, r).lightness);
        }
    }
}
