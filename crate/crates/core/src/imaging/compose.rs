use serde::{Deserialize, Serialize};

use super::{ImagingError, RasterImage, RegionMask};
use crate::geometry::BBox;

/// How label regions are restored into a stylized image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositeMode {
    /// Masked pixels are copied verbatim from the source.
    #[default]
    PixelCopy,
    /// Pixel copy inside the mask plus a linear blend over a 2 px band
    /// outside it.
    Feathered,
}

/// Width in pixels of the blend band used by [`CompositeMode::Feathered`].
pub const FEATHER_BAND: u32 = 2;

/// Union of the padded boxes, clamped to the raster.
///
/// A box covers pixel columns `[floor(x - pad), ceil(x + w + pad))` and the
/// matching rows.
pub fn build_text_mask<'a>(
    boxes: impl IntoIterator<Item = &'a BBox>,
    width: u32,
    height: u32,
    padding: u32,
) -> RegionMask {
    let mut mask = RegionMask::empty(width, height);
    let pad = f64::from(padding);
    for b in boxes {
        if b.width <= 0.0 || b.height <= 0.0 {
            continue;
        }
        let x0 = (b.x - pad).floor().clamp(0.0, f64::from(width)) as u32;
        let y0 = (b.y - pad).floor().clamp(0.0, f64::from(height)) as u32;
        let x1 = (b.right() + pad).ceil().clamp(0.0, f64::from(width)) as u32;
        let y1 = (b.bottom() + pad).ceil().clamp(0.0, f64::from(height)) as u32;
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Restores `source` into `base` wherever `mask` is set.
pub fn composite_regions(
    base: &RasterImage,
    source: &RasterImage,
    mask: &RegionMask,
    mode: CompositeMode,
) -> Result<RasterImage, ImagingError> {
    if base.dimensions() != source.dimensions() || base.dimensions() != mask.dimensions() {
        return Err(ImagingError::DimensionMismatch {
            expected: base.dimensions(),
            actual: if base.dimensions() != source.dimensions() {
                source.dimensions()
            } else {
                mask.dimensions()
            },
        });
    }
    let (w, h) = base.dimensions();
    let mut out = base.clone();
    match mode {
        CompositeMode::PixelCopy => {
            for (x, y) in mask.set_pixels() {
                out.put(x, y, source.get(x, y));
            }
        }
        CompositeMode::Feathered => {
            let dist = chebyshev_distance(mask, FEATHER_BAND + 1);
            let band = f64::from(FEATHER_BAND + 1);
            for y in 0..h {
                for x in 0..w {
                    let d = dist[y as usize * w as usize + x as usize];
                    if d == 0 {
                        out.put(x, y, source.get(x, y));
                    } else if d <= FEATHER_BAND {
                        let alpha = 1.0 - f64::from(d) / band;
                        let (s, b) = (source.get(x, y), base.get(x, y));
                        let mut px = [0u8; 3];
                        for c in 0..3 {
                            let v = alpha * f64::from(s[c]) + (1.0 - alpha) * f64::from(b[c]);
                            px[c] = v.round().clamp(0.0, 255.0) as u8;
                        }
                        out.put(x, y, px);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Chebyshev distance to the nearest set pixel, saturating at `cap`.
fn chebyshev_distance(mask: &RegionMask, cap: u32) -> Vec<u32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut dist = vec![cap; (w * h) as usize];
    for (x, y) in mask.set_pixels() {
        let (x, y) = (x as i64, y as i64);
        let r = cap as i64;
        for ny in (y - r).max(0)..=(y + r).min(h - 1) {
            for nx in (x - r).max(0)..=(x + r).min(w - 1) {
                let d = (nx - x).abs().max((ny - y).abs()) as u32;
                let slot = &mut dist[(ny * w + nx) as usize];
                if d < *slot {
                    *slot = d;
                }
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_box_arithmetic() {
        let mask = build_text_mask(&[BBox::new(10.0, 10.0, 20.0, 8.0)], 64, 64, 2);
        for y in 0..64 {
            for x in 0..64 {
                let inside = (8..32).contains(&x) && (8..20).contains(&y);
                assert_eq!(mask.get(x, y), inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn overlapping_boxes_union_is_idempotent() {
        let a = BBox::new(2.0, 2.0, 6.0, 4.0);
        let b = BBox::new(5.0, 3.0, 6.0, 4.0);
        let m1 = build_text_mask(&[a, b], 16, 16, 0);
        let m2 = build_text_mask(&[a, b, a, b], 16, 16, 0);
        assert_eq!(m1, m2);
        assert_eq!(m1.count(), 24 + 24 - 9);
    }

    #[test]
    fn empty_regions_empty_mask() {
        let m = build_text_mask(std::iter::empty(), 5, 5, 3);
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn padding_clamps_at_borders() {
        let m = build_text_mask(&[BBox::new(0.0, 0.0, 3.0, 3.0)], 4, 4, 5);
        assert_eq!(m.count(), 16);
    }

    fn pair() -> (RasterImage, RasterImage) {
        let base = RasterImage::from_fn(4, 4, |x, y| [x as u8, y as u8, 200]);
        let source = RasterImage::from_fn(4, 4, |x, y| [100 + x as u8, 100 + y as u8, 0]);
        (base, source)
    }

    #[test]
    fn all_false_mask_returns_base() {
        let (base, source) = pair();
        let out = composite_regions(&base, &source, &RegionMask::empty(4, 4), CompositeMode::PixelCopy)
            .unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn all_true_mask_returns_source() {
        let (base, source) = pair();
        let mask = build_text_mask(&[BBox::new(0.0, 0.0, 4.0, 4.0)], 4, 4, 0);
        for mode in [CompositeMode::PixelCopy, CompositeMode::Feathered] {
            assert_eq!(composite_regions(&base, &source, &mask, mode).unwrap(), source);
        }
    }

    #[test]
    fn left_half_pixelwise() {
        let (base, source) = pair();
        let mask = build_text_mask(&[BBox::new(0.0, 0.0, 2.0, 4.0)], 4, 4, 0);
        let out = composite_regions(&base, &source, &mask, CompositeMode::PixelCopy).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = if x < 2 { source.get(x, y) } else { base.get(x, y) };
                assert_eq!(out.get(x, y), want);
            }
        }
    }

    #[test]
    fn feathered_blends_only_the_band() {
        let base = RasterImage::filled(10, 1, [0, 0, 0]);
        let source = RasterImage::filled(10, 1, [255, 255, 255]);
        let mask = build_text_mask(&[BBox::new(0.0, 0.0, 3.0, 1.0)], 10, 1, 0);
        let out = composite_regions(&base, &source, &mask, CompositeMode::Feathered).unwrap();
        let row: Vec<u8> = (0..10).map(|x| out.get(x, 0)[0]).collect();
        assert_eq!(row, vec![255, 255, 255, 170, 85, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn mismatched_dimensions() {
        let (base, _) = pair();
        let other = RasterImage::filled(5, 4, [0; 3]);
        let err = composite_regions(&base, &other, &RegionMask::empty(4, 4), CompositeMode::PixelCopy)
            .unwrap_err();
        assert!(matches!(err, ImagingError::DimensionMismatch { expected: (4, 4), actual: (5, 4) }));
    }
}
