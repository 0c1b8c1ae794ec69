//! Seed (trimap) generators for GrabCut.
//!
//! * [`seeds_from_recist`]: the RECIST-slice seeds. The outer half of the
//!   ROI is background, a dilation of the diameters covering 10% of the ROI
//!   is foreground, and the remaining band is split into probable
//!   foreground/background by distance.
//! * [`recist_d_mask`]: the diameters dilated to 20% of their bounding box.
//! * [`seeds_bbox_variant`]: box-based seeds with 25% padding.
//! * [`seeds_off_slice`]: seeds from a probability map plus a propagated
//!   RECIST estimate, with fallback to [`seeds_from_recist`].

use crate::error::{Error, Result};
use crate::grabcut::SegmentationMask;
use crate::imaging::RoiImage;
use crate::learner::ProbabilityMap;
use crate::raster::{
    centered_rect_pixels, connected_components, point_segment_distance, rasterize_segment,
    squared_distance_transform,
};
use crate::recist::CrossAxes;

/// Fraction of the ROI assigned to background.
pub const BG_FRACTION: f64 = 0.5;
/// Fraction of the ROI covered by the dilated diameters.
pub const FG_FRACTION: f64 = 0.1;
/// Fraction of the lesion bbox covered by the RECIST-D mask.
pub const RECIST_D_FRACTION: f64 = 0.2;
/// Per-side padding of the box-based variants, relative to the box side.
pub const BBOX_PADDING: f64 = 0.25;
/// Fraction of the padded box seeded as foreground by the INNER variant.
pub const INNER_FG_FRACTION: f64 = 0.2;
/// Probabilities above this mark confident foreground regions.
pub const HIGH_FG_PROB: f64 = 0.8;
/// Probabilities below this mark confident background regions.
pub const HIGH_BG_PROB: f64 = 0.2;
/// Fraction of the propagated diameter pixels the binarized map must cover.
pub const RECIST_COVERAGE: f64 = 0.5;

/// Per-pixel seed category. Discriminants are the on-disk debug codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SeedLabel {
    Bg = 0,
    Fg = 1,
    Pbg = 2,
    Pfg = 3,
    Unknown = 4,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<SeedLabel>,
}

impl SeedMask {
    pub fn count(&self, label: SeedLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn fraction(&self, label: SeedLabel) -> f64 {
        self.count(label) as f64 / self.labels.len() as f64
    }

    /// Raw `uint8` debug export (0=BG, 1=FG, 2=PBG, 3=PFG, 4=UNKNOWN).
    pub fn to_bytes(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l as u8).collect()
    }
}

/// Diameters in ROI-local pixel coordinates, rejecting endpoints outside it.
fn local_axes(roi: &RoiImage, axes: &CrossAxes) -> Result<CrossAxes> {
    let local = axes.translated(roi.origin.0 as f64, roi.origin.1 as f64);
    for p in local.endpoints() {
        let (x, y) = (p[0].round(), p[1].round());
        if x < 0.0 || y < 0.0 || x >= roi.width as f64 || y >= roi.height as f64 {
            return Err(Error::InvalidRecist(format!(
                "endpoint ({:.1}, {:.1}) outside the {}x{} ROI",
                p[0] + roi.origin.0 as f64,
                p[1] + roi.origin.1 as f64,
                roi.width,
                roi.height
            )));
        }
    }
    Ok(local)
}

fn axes_raster(axes: &CrossAxes, width: usize, height: usize) -> Vec<usize> {
    let mut px = rasterize_segment(axes.long.0, axes.long.1, width, height);
    px.extend(rasterize_segment(axes.short.0, axes.short.1, width, height));
    px.sort_unstable();
    px.dedup();
    px
}

fn distance_to_axes(axes: &CrossAxes, i: usize, width: usize) -> f64 {
    let p = [(i % width) as f64, (i / width) as f64];
    point_segment_distance(p, axes.long.0, axes.long.1)
        .min(point_segment_distance(p, axes.short.0, axes.short.1))
}

/// Rasterized diameters grown by a disk until `target` pixels are covered.
/// Only pixels accepted by `allowed` are added; growth order is distance to
/// the segments, ties by linear index.
fn dilate_axes(
    axes: &CrossAxes,
    width: usize,
    height: usize,
    target: usize,
    allowed: impl Fn(usize) -> bool,
) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let raster = axes_raster(axes, width, height);
    for &i in &raster {
        mask[i] = true;
    }
    if raster.len() >= target {
        return mask;
    }
    let mut order: Vec<(f64, usize)> = (0..width * height)
        .filter(|&i| !mask[i] && allowed(i))
        .map(|i| (distance_to_axes(axes, i, width), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, i) in order.iter().take(target - raster.len()) {
        mask[i] = true;
    }
    mask
}

/// Assigns every `Unknown` pixel to PFG when it is strictly closer to the
/// foreground seeds than to the background seeds, otherwise to PBG.
fn split_probable(width: usize, height: usize, labels: &mut [SeedLabel]) {
    let fg: Vec<bool> = labels.iter().map(|&l| l == SeedLabel::Fg).collect();
    let bg: Vec<bool> = labels.iter().map(|&l| l == SeedLabel::Bg).collect();
    let dfg = squared_distance_transform(&fg, width, height);
    let dbg = squared_distance_transform(&bg, width, height);
    for (i, l) in labels.iter_mut().enumerate() {
        if *l == SeedLabel::Unknown {
            *l = if dfg[i] < dbg[i] {
                SeedLabel::Pfg
            } else {
                SeedLabel::Pbg
            };
        }
    }
}

/// Inner region of the ROI: the centred rectangle holding `floor(N / 2)`
/// pixels, i.e. the complement of the background half.
fn inner_region(width: usize, height: usize) -> Vec<bool> {
    let n = width * height;
    let inner_count = n - (BG_FRACTION * n as f64).ceil() as usize;
    let mut inner = vec![false; n];
    for i in centered_rect_pixels(width, height, inner_count) {
        inner[i] = true;
    }
    inner
}

/// Seeds on a slice carrying a (possibly propagated) RECIST.
pub fn seeds_from_recist(roi: &RoiImage, axes: &CrossAxes) -> Result<SeedMask> {
    let (w, h) = (roi.width, roi.height);
    let local = local_axes(roi, axes)?;
    let n = w * h;
    let inner = inner_region(w, h);
    let target = (FG_FRACTION * n as f64).round() as usize;
    let fg = dilate_axes(&local, w, h, target, |i| inner[i]);
    let mut labels: Vec<SeedLabel> = (0..n)
        .map(|i| {
            if fg[i] {
                SeedLabel::Fg
            } else if inner[i] {
                SeedLabel::Unknown
            } else {
                SeedLabel::Bg
            }
        })
        .collect();
    split_probable(w, h, &mut labels);
    Ok(SeedMask {
        width: w,
        height: h,
        labels,
    })
}

/// The RECIST-D baseline label: diameters dilated to 20% of their bbox area.
pub fn recist_d_mask(roi: &RoiImage, axes: &CrossAxes) -> Result<SegmentationMask> {
    let local = local_axes(roi, axes)?;
    let zero = |s: &(crate::raster::Point, crate::raster::Point)| s.0 == s.1;
    if zero(&local.long) || zero(&local.short) {
        return Err(Error::InvalidRecist("zero-length axis".into()));
    }
    let bbox = local.bbox();
    let target = (RECIST_D_FRACTION * bbox.area() as f64).round() as usize;
    let mask = dilate_axes(&local, roi.width, roi.height, target, |_| true);
    SegmentationMask::new(roi.width, roi.height, mask.into_iter().map(u8::from).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BBoxVariant {
    /// Inside the padded box is PFG, outside BG.
    Plain,
    /// As `Plain`, plus the central 20% of the box as FG.
    Inner,
}

/// Pixel bounds `[x0, x1) x [y0, y1)` of the padded lesion box, clipped to
/// the ROI. Pixels whose centre lies inside the padded box are included.
pub fn padded_box_bounds(roi: &RoiImage, axes: &CrossAxes) -> (usize, usize, usize, usize) {
    let local = axes.translated(roi.origin.0 as f64, roi.origin.1 as f64);
    let b = local.bbox();
    let (pw, ph) = (BBOX_PADDING * b.w as f64, BBOX_PADDING * b.h as f64);
    let left = b.x as f64 - pw;
    let right = b.x as f64 + b.w as f64 + pw;
    let top = b.y as f64 - ph;
    let bottom = b.y as f64 + b.h as f64 + ph;
    let clip = |v: f64, hi: usize| v.ceil().clamp(0.0, hi as f64) as usize;
    (
        clip(left, roi.width),
        clip(right, roi.width),
        clip(top, roi.height),
        clip(bottom, roi.height),
    )
}

/// Box-based seeds with 25% padding per side.
pub fn seeds_bbox_variant(roi: &RoiImage, axes: &CrossAxes, variant: BBoxVariant) -> SeedMask {
    let (w, h) = (roi.width, roi.height);
    let (x0, x1, y0, y1) = padded_box_bounds(roi, axes);
    let mut labels = vec![SeedLabel::Bg; w * h];
    for y in y0..y1 {
        for x in x0..x1 {
            labels[y * w + x] = SeedLabel::Pfg;
        }
    }
    if variant == BBoxVariant::Inner && x1 > x0 && y1 > y0 {
        let (bw, bh) = (x1 - x0, y1 - y0);
        let count = (INNER_FG_FRACTION * (bw * bh) as f64).round() as usize;
        for i in centered_rect_pixels(bw, bh, count) {
            labels[(y0 + i / bw) * w + x0 + i % bw] = SeedLabel::Fg;
        }
    }
    SeedMask {
        width: w,
        height: h,
        labels,
    }
}

/// Marks the pixel at the centre of the padded box as FG so that the plain
/// box variant can be fed to GrabCut.
pub fn inject_center_fg(seeds: &mut SeedMask, roi: &RoiImage, axes: &CrossAxes) {
    let (x0, x1, y0, y1) = padded_box_bounds(roi, axes);
    let x = ((x0 + x1) / 2).min(seeds.width - 1);
    let y = ((y0 + y1) / 2).min(seeds.height - 1);
    seeds.labels[y * seeds.width + x] = SeedLabel::Fg;
}

/// Largest threshold `t` such that at least half of `pixels` have
/// probability `>= t`.
fn coverage_threshold(prob: &ProbabilityMap, pixels: &[usize]) -> f64 {
    if pixels.is_empty() {
        return 1.0;
    }
    let mut values: Vec<f64> = pixels.iter().map(|&i| prob.values[i]).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    let need = ((RECIST_COVERAGE * pixels.len() as f64).ceil() as usize).max(1);
    values[need - 1]
}

/// Seeds on an off-RECIST slice from the learner's probability map and the
/// propagated diameters `rhat`.
///
/// The map is binarized at the largest threshold that still covers half of
/// the `rhat` pixels (never accepting probabilities below 0.5 as
/// foreground). If nothing survives, this is [`seeds_from_recist`] on
/// `rhat`. Otherwise FG is `rhat` plus every confident (`> 0.8`) region of
/// the binarized map touching it, BG every confident-background (`< 0.2`)
/// pixel off `rhat`, and the rest is split by distance.
///
/// Background is excluded per pixel rather than per region: off-slice the
/// propagated diameters routinely overshoot the lesion, and the whole
/// surrounding background region then touches them.
pub fn seeds_off_slice(roi: &RoiImage, prob: &ProbabilityMap, rhat: &CrossAxes) -> Result<SeedMask> {
    let (w, h) = (roi.width, roi.height);
    if prob.width != w || prob.height != h {
        return Err(Error::DimMismatch(format!(
            "probability map {}x{} vs ROI {w}x{h}",
            prob.width, prob.height
        )));
    }
    let local = local_axes(roi, rhat)?;
    let raster = axes_raster(&local, w, h);
    let threshold = coverage_threshold(prob, &raster);
    let binarized: Vec<bool> = prob
        .values
        .iter()
        .map(|&p| p >= threshold && p >= 0.5)
        .collect();
    if !binarized.contains(&true) {
        return seeds_from_recist(roi, rhat);
    }

    let n = w * h;
    let mut on_rhat = vec![false; n];
    for &i in &raster {
        on_rhat[i] = true;
    }
    let touching = |mask: &[bool]| -> Vec<bool> {
        let (labels, n_comp) = connected_components(mask, w, h);
        let mut hit = vec![false; n_comp as usize + 1];
        for &i in &raster {
            hit[labels[i] as usize] = true;
        }
        labels.iter().map(|&l| l != 0 && hit[l as usize]).collect()
    };

    let confident_fg: Vec<bool> = (0..n)
        .map(|i| binarized[i] && prob.values[i] > HIGH_FG_PROB)
        .collect();
    let fg_regions = touching(&confident_fg);
    let mut labels: Vec<SeedLabel> = (0..n)
        .map(|i| {
            if on_rhat[i] || fg_regions[i] {
                SeedLabel::Fg
            } else if prob.values[i] < HIGH_BG_PROB {
                SeedLabel::Bg
            } else {
                SeedLabel::Unknown
            }
        })
        .collect();
    if !labels.contains(&SeedLabel::Bg) {
        let inner = inner_region(w, h);
        for (i, l) in labels.iter_mut().enumerate() {
            if !inner[i] && *l != SeedLabel::Fg {
                *l = SeedLabel::Bg;
            }
        }
    }
    split_probable(w, h, &mut labels);
    Ok(SeedMask {
        width: w,
        height: h,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roi(w: usize, h: usize) -> RoiImage {
        RoiImage::from_pixels(w, h, vec![0.5; w * h]).unwrap()
    }

    fn centred_cross(w: usize, h: usize, semi_x: f64, semi_y: f64) -> CrossAxes {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        CrossAxes {
            long: ([cx - semi_x, cy], [cx + semi_x, cy]),
            short: ([cx, cy - semi_y], [cx, cy + semi_y]),
        }
    }

    #[test]
    fn recist_seed_fractions_on_100px_roi() {
        let r = roi(100, 100);
        let s = seeds_from_recist(&r, &centred_cross(100, 100, 25.0, 25.0)).unwrap();
        let bg = s.count(SeedLabel::Bg);
        assert!((4950..=5050).contains(&bg), "{bg}");
        assert!((s.fraction(SeedLabel::Fg) - 0.10).abs() <= 0.01);
        let band = s.fraction(SeedLabel::Pfg) + s.fraction(SeedLabel::Pbg);
        assert!((band - 0.40).abs() <= 0.02);
        assert_eq!(s.count(SeedLabel::Unknown), 0);
    }

    #[test]
    fn every_recist_pixel_is_foreground() {
        let r = roi(60, 40);
        let axes = centred_cross(60, 40, 14.0, 9.0);
        let s = seeds_from_recist(&r, &axes).unwrap();
        for i in axes_raster(&axes, 60, 40) {
            assert_eq!(s.labels[i], SeedLabel::Fg);
        }
    }

    #[test]
    fn probable_band_follows_distance_rule() {
        let r = roi(50, 50);
        let s = seeds_from_recist(&r, &centred_cross(50, 50, 12.0, 12.0)).unwrap();
        // pixel next to the centre is PFG or FG; pixel next to the BG ring is PBG
        assert_ne!(s.labels[25 * 50 + 25], SeedLabel::Bg);
        let ring = (0..50 * 50)
            .filter(|&i| s.labels[i] == SeedLabel::Pbg)
            .count();
        assert!(ring > 0);
    }

    #[test]
    fn endpoints_outside_roi_are_rejected() {
        let r = roi(20, 20);
        assert!(seeds_from_recist(&r, &centred_cross(20, 20, 15.0, 2.0)).is_err());
    }

    #[test]
    fn recist_d_area_is_twenty_percent_of_bbox() {
        // 20x10 bbox
        let axes = CrossAxes {
            long: ([10.0, 10.0], [30.0, 10.0]),
            short: ([20.0, 5.0], [20.0, 15.0]),
        };
        let r = roi(40, 20);
        let m = recist_d_mask(&r, &axes).unwrap();
        assert!((38..=42).contains(&m.count()), "{}", m.count());
        for i in axes_raster(&axes, 40, 20) {
            assert_eq!(m.labels[i], 1);
        }
        let zero = CrossAxes {
            long: ([10.0, 10.0], [10.0, 10.0]),
            short: ([10.0, 10.0], [10.0, 10.0]),
        };
        assert!(recist_d_mask(&r, &zero).is_err());
    }

    #[test]
    fn bbox_variants() {
        let r = roi(80, 80);
        // tight bbox 20x20 at (30, 30)
        let axes = CrossAxes {
            long: ([30.0, 30.0], [50.0, 50.0]),
            short: ([30.0, 50.0], [50.0, 30.0]),
        };
        let plain = seeds_bbox_variant(&r, &axes, BBoxVariant::Plain);
        assert_eq!(plain.count(SeedLabel::Fg), 0);
        let (x0, x1, y0, y1) = padded_box_bounds(&r, &axes);
        assert_eq!((x1 - x0, y1 - y0), (30, 30));
        assert_eq!(plain.count(SeedLabel::Pfg), 900);
        let inner = seeds_bbox_variant(&r, &axes, BBoxVariant::Inner);
        let frac = inner.count(SeedLabel::Fg) as f64 / 900.0;
        assert!((frac - 0.2).abs() <= 0.01, "{frac}");
        let mut injected = plain.clone();
        inject_center_fg(&mut injected, &r, &axes);
        assert_eq!(injected.count(SeedLabel::Fg), 1);
    }

    fn prob(w: usize, h: usize, values: Vec<f64>) -> ProbabilityMap {
        ProbabilityMap::new(w, h, values).unwrap()
    }

    #[test]
    fn zero_probability_falls_back_to_recist_seeds() {
        let r = roi(40, 40);
        let axes = centred_cross(40, 40, 8.0, 5.0);
        let off = seeds_off_slice(&r, &prob(40, 40, vec![0.0; 1600]), &axes).unwrap();
        assert_eq!(off, seeds_from_recist(&r, &axes).unwrap());
        let low = seeds_off_slice(&r, &prob(40, 40, vec![0.15; 1600]), &axes).unwrap();
        assert_eq!(low, seeds_from_recist(&r, &axes).unwrap());
    }

    #[test]
    fn confident_blob_over_rhat_becomes_foreground() {
        let r = roi(40, 40);
        let axes = centred_cross(40, 40, 4.0, 3.0);
        let mut values = vec![0.0; 1600];
        let mut blob = Vec::new();
        for y in 12..28 {
            for x in 12..28 {
                values[y * 40 + x] = 1.0;
                blob.push(y * 40 + x);
            }
        }
        let s = seeds_off_slice(&r, &prob(40, 40, values), &axes).unwrap();
        assert!(blob.iter().all(|&i| s.labels[i] == SeedLabel::Fg));
        assert!(s.count(SeedLabel::Bg) > 0);
    }

    #[test]
    fn only_the_blob_on_rhat_is_foreground() {
        // 8x8: blob A (rows 2-4, cols 1-3) under rhat, blob B (rows 5-6, cols 6-7) elsewhere
        let r = roi(8, 8);
        let axes = CrossAxes {
            long: ([1.0, 3.0], [3.0, 3.0]),
            short: ([2.0, 2.0], [2.0, 4.0]),
        };
        let mut values = vec![0.05; 64];
        for y in 2..5 {
            for x in 1..4 {
                values[y * 8 + x] = 0.9;
            }
        }
        for y in 5..7 {
            for x in 6..8 {
                values[y * 8 + x] = 0.9;
            }
        }
        let s = seeds_off_slice(&r, &prob(8, 8, values), &axes).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let in_a = (2..5).contains(&y) && (1..4).contains(&x);
                assert_eq!(s.labels[y * 8 + x] == SeedLabel::Fg, in_a, "({x}, {y})");
            }
        }
        assert_eq!(s.labels[0], SeedLabel::Bg);
    }

    #[test]
    fn overshooting_rhat_keeps_background_off_its_pixels() {
        // rhat reaches past a small blob into the low-probability surround
        let r = roi(16, 16);
        let axes = CrossAxes {
            long: ([2.0, 8.0], [13.0, 8.0]),
            short: ([8.0, 3.0], [8.0, 13.0]),
        };
        let mut values = vec![0.02; 256];
        for y in 6..11 {
            for x in 6..11 {
                values[y * 16 + x] = 0.95;
            }
        }
        let s = seeds_off_slice(&r, &prob(16, 16, values.clone()), &axes).unwrap();
        let raster = axes_raster(&axes, 16, 16);
        for i in 0..256 {
            let expect = if raster.contains(&i) || values[i] > 0.8 {
                SeedLabel::Fg
            } else {
                SeedLabel::Bg
            };
            assert_eq!(s.labels[i], expect, "pixel {i}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]
        #[test]
        fn seed_geometry_holds_for_all_sizes(w in 32usize..90, h in 32usize..90, sx in 0.2f64..0.5, sy in 0.1f64..0.5) {
            let r = roi(w, h);
            let axes = centred_cross(w, h, sx * w as f64 / 2.0, sy * h as f64 / 2.0);
            let s = seeds_from_recist(&r, &axes).unwrap();
            let n = (w * h) as f64;
            let bg = s.count(SeedLabel::Bg) as f64;
            proptest::prop_assert!((bg - n / 2.0).abs() <= 0.5);
            proptest::prop_assert!((s.fraction(SeedLabel::Fg) - 0.1).abs() <= 0.01);
            let band = s.fraction(SeedLabel::Pfg) + s.fraction(SeedLabel::Pbg);
            proptest::prop_assert!((band - 0.4).abs() <= 0.02);
            proptest::prop_assert_eq!(s.count(SeedLabel::Unknown), 0);
        }
    }
}
