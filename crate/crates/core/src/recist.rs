//! RECIST diameters: representation, extraction from masks, and propagation
//! to neighbouring slices.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BBox, MaskVolume};
use crate::raster::Point;

/// Tolerance (pixels) when checking that the two diameters cross.
pub const CROSSING_TOLERANCE_PX: f64 = 2.0;

/// Allowed deviation from perpendicular for the short axis, in degrees.
pub const PERPENDICULAR_TOLERANCE_DEG: f64 = 10.0;

/// The long and short diameter segments, in pixel coordinates of the slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossAxes {
    pub long: (Point, Point),
    pub short: (Point, Point),
}

impl CrossAxes {
    pub fn endpoints(&self) -> [Point; 4] {
        [self.long.0, self.long.1, self.short.0, self.short.1]
    }

    /// Segment parameters `(t, s)` of the intersection of the two axis lines,
    /// `t` along the long axis and `s` along the short one. `None` when the
    /// lines are parallel or an axis is degenerate.
    fn line_intersection(&self) -> Option<(f64, f64)> {
        let (p, p2) = self.long;
        let (q, q2) = self.short;
        let r = [p2[0] - p[0], p2[1] - p[1]];
        let s = [q2[0] - q[0], q2[1] - q[1]];
        let denom = r[0] * s[1] - r[1] * s[0];
        if denom.abs() < 1e-12 {
            return None;
        }
        let qp = [q[0] - p[0], q[1] - p[1]];
        let t = (qp[0] * s[1] - qp[1] * s[0]) / denom;
        let u = (qp[0] * r[1] - qp[1] * r[0]) / denom;
        Some((t, u))
    }

    /// True when the segments cross within `tol` pixels of their extents.
    pub fn crosses(&self, tol: f64) -> bool {
        let Some((t, u)) = self.line_intersection() else {
            return false;
        };
        let ll = dist(self.long.0, self.long.1);
        let ls = dist(self.short.0, self.short.1);
        let within = |param: f64, len: f64| {
            let slack = if len > 0.0 { tol / len } else { 0.0 };
            param >= -slack && param <= 1.0 + slack
        };
        within(t, ll) && within(u, ls)
    }

    /// Intersection of the two diameters, or the long-axis midpoint when
    /// the segments do not cross.
    pub fn center(&self) -> Point {
        if self.crosses(CROSSING_TOLERANCE_PX) {
            if let Some((t, _)) = self.line_intersection() {
                let (p, p2) = self.long;
                return [p[0] + t * (p2[0] - p[0]), p[1] + t * (p2[1] - p[1])];
            }
        }
        midpoint(self.long.0, self.long.1)
    }

    /// Minimal axis-aligned box around the four endpoints.
    pub fn bbox(&self) -> BBox {
        let pts = self.endpoints();
        let min_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x = min_x.floor();
        let y = min_y.floor();
        BBox {
            x: x as i64,
            y: y as i64,
            w: ((max_x.ceil() - x) as usize).max(1),
            h: ((max_y.ceil() - y) as usize).max(1),
        }
    }

    /// Same axes shifted by `(-dx, -dy)`, e.g. into ROI-local coordinates.
    pub fn translated(&self, dx: f64, dy: f64) -> CrossAxes {
        let t = |p: Point| [p[0] - dx, p[1] - dy];
        CrossAxes {
            long: (t(self.long.0), t(self.long.1)),
            short: (t(self.short.0), t(self.short.1)),
        }
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn phys_dist(a: Point, b: Point, sx: f64, sy: f64) -> f64 {
    (((a[0] - b[0]) * sx).powi(2) + ((a[1] - b[1]) * sy).powi(2)).sqrt()
}

fn midpoint(a: Point, b: Point) -> Point {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Two perpendicular diameters drawn on axial slice `slice_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecistAnnotation {
    pub axes: CrossAxes,
    pub slice_index: usize,
    /// Voxel spacing `(sx, sy, sz)` in mm.
    pub spacing: [f64; 3],
}

impl RecistAnnotation {
    pub fn new(axes: CrossAxes, slice_index: usize, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidRecist(format!("bad spacing {spacing:?}")));
        }
        let r = Self {
            axes,
            slice_index,
            spacing,
        };
        let (long, short) = (r.long_length_mm(), r.short_length_mm());
        if !(short > 0.0) {
            return Err(Error::InvalidRecist("zero-length short axis".into()));
        }
        if long < short {
            return Err(Error::InvalidRecist(format!(
                "long axis ({long:.3} mm) shorter than short axis ({short:.3} mm)"
            )));
        }
        if !axes.crosses(CROSSING_TOLERANCE_PX) {
            return Err(Error::InvalidRecist("diameters do not cross".into()));
        }
        Ok(r)
    }

    pub fn long_length_mm(&self) -> f64 {
        phys_dist(self.axes.long.0, self.axes.long.1, self.spacing[0], self.spacing[1])
    }

    pub fn short_length_mm(&self) -> f64 {
        phys_dist(self.axes.short.0, self.axes.short.1, self.spacing[0], self.spacing[1])
    }

    /// This annotation viewed as the offset-0 propagation of itself.
    pub fn as_propagated(&self) -> PropagatedRecist {
        PropagatedRecist {
            axes: self.axes,
            slice_index: self.slice_index as i64,
            offset: 0,
        }
    }
}

/// Minimal axis-aligned box containing all four endpoints.
pub fn bbox_of(r: &RecistAnnotation) -> BBox {
    r.axes.bbox()
}

/// RECIST estimate on a slice at `offset` from the annotated one.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedRecist {
    pub axes: CrossAxes,
    pub slice_index: i64,
    pub offset: i64,
}

/// Shrinks every endpoint toward the axis centre as if it lay on a sphere
/// whose radius is its own in-plane distance to the centre:
/// `l' = sqrt(max(l^2 - (offset * sz)^2, 0))`. Returns `None` once both
/// long-axis endpoints have collapsed onto the centre.
pub fn propagate(r: &RecistAnnotation, offset: i64) -> Option<PropagatedRecist> {
    let [sx, sy, sz] = r.spacing;
    let c = r.axes.center();
    let dz = offset as f64 * sz;
    let shrink = |p: Point| -> (Point, f64) {
        let l = phys_dist(p, c, sx, sy);
        let l_new = (l * l - dz * dz).max(0.0).sqrt();
        if l == 0.0 {
            return (c, 0.0);
        }
        let k = l_new / l;
        ([c[0] + (p[0] - c[0]) * k, c[1] + (p[1] - c[1]) * k], l_new)
    };
    let (l0, ll0) = shrink(r.axes.long.0);
    let (l1, ll1) = shrink(r.axes.long.1);
    if offset != 0 && ll0 == 0.0 && ll1 == 0.0 {
        return None;
    }
    if offset == 0 {
        return Some(r.as_propagated());
    }
    let (s0, _) = shrink(r.axes.short.0);
    let (s1, _) = shrink(r.axes.short.1);
    Some(PropagatedRecist {
        axes: CrossAxes {
            long: (l0, l1),
            short: (s0, s1),
        },
        slice_index: r.slice_index as i64 + offset,
        offset,
    })
}

/// Pixels of `slice` that lie on the mask boundary (4-neighbourhood).
fn boundary_pixels(slice: &[u8], nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let inside = |x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny && slice[y as usize * nx + x as usize] != 0
    };
    let mut out = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            if slice[y * nx + x] == 0 {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            if !inside(xi - 1, yi) || !inside(xi + 1, yi) || !inside(xi, yi - 1) || !inside(xi, yi + 1) {
                out.push((x, y));
            }
        }
    }
    out
}

fn chord_inside(slice: &[u8], nx: usize, a: (usize, usize), b: (usize, usize)) -> bool {
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (bx, by) = (b.0 as f64, b.1 as f64);
    let steps = (((bx - ax).powi(2) + (by - ay).powi(2)).sqrt() * 2.0).ceil() as usize;
    (0..=steps).all(|i| {
        let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
        let x = (ax + t * (bx - ax)).round() as usize;
        let y = (ay + t * (by - ay)).round() as usize;
        slice[y * nx + x] != 0
    })
}

/// Measures RECIST diameters on the axial slice of maximal mask area.
///
/// The long axis is the longest boundary-to-boundary chord lying inside the
/// mask; the short axis the longest such chord within 90 +/- 10 degrees of it
/// that crosses it. Each of the four semi-lengths is then scaled by
/// `1 + u`, `u ~ U(-noise_frac, noise_frac)`.
pub fn extract_recist_from_mask<R: Rng + ?Sized>(
    mask: &MaskVolume,
    spacing: [f64; 3],
    noise_frac: f64,
    rng: &mut R,
) -> Result<RecistAnnotation> {
    if !(0.0..=0.5).contains(&noise_frac) {
        return Err(Error::InvalidParam(format!(
            "noise fraction {noise_frac} outside [0, 0.5]"
        )));
    }
    let [nx, ny, nz] = mask.dims;
    let (best_z, best_area) = (0..nz)
        .map(|z| (z, mask.slice(z).iter().filter(|&&v| v != 0).count()))
        .fold((0, 0), |acc, (z, a)| if a > acc.1 { (z, a) } else { acc });
    if best_area == 0 {
        return Err(Error::EmptyMask);
    }
    let slice = mask.slice(best_z);
    let (sx, sy) = (spacing[0], spacing[1]);
    let boundary = boundary_pixels(slice, nx, ny);
    let to_pt = |p: (usize, usize)| [p.0 as f64, p.1 as f64];

    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..boundary.len() {
        for j in i + 1..boundary.len() {
            let d = phys_dist(to_pt(boundary[i]), to_pt(boundary[j]), sx, sy);
            pairs.push((d, i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let long = pairs
        .iter()
        .find(|(_, i, j)| chord_inside(slice, nx, boundary[*i], boundary[*j]))
        .map(|&(_, i, j)| (to_pt(boundary[i]), to_pt(boundary[j])));
    // a single-pixel mask has no pair; use a unit-length degenerate cross
    let (long, short) = match long {
        None => {
            let p = to_pt(boundary[0]);
            let long = ([p[0] - 0.5, p[1]], [p[0] + 0.5, p[1]]);
            let short = ([p[0], p[1] - 0.5], [p[0], p[1] + 0.5]);
            (long, short)
        }
        Some(long) => {
            let dir = [(long.1[0] - long.0[0]) * sx, (long.1[1] - long.0[1]) * sy];
            let dir_len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            let max_cos = (90.0f64 - PERPENDICULAR_TOLERANCE_DEG).to_radians().cos();
            let short = pairs
                .iter()
                .filter(|(d, i, j)| {
                    let (a, b) = (to_pt(boundary[*i]), to_pt(boundary[*j]));
                    let v = [(b[0] - a[0]) * sx, (b[1] - a[1]) * sy];
                    let cos = (v[0] * dir[0] + v[1] * dir[1]).abs() / (d * dir_len);
                    cos <= max_cos + 1e-12
                        && CrossAxes {
                            long,
                            short: (a, b),
                        }
                        .crosses(CROSSING_TOLERANCE_PX)
                })
                .find(|(_, i, j)| chord_inside(slice, nx, boundary[*i], boundary[*j]))
                .map(|&(_, i, j)| (to_pt(boundary[i]), to_pt(boundary[j])));
            // thin shapes may have no perpendicular chord wider than a pixel
            let short = short.unwrap_or_else(|| {
                let c = midpoint(long.0, long.1);
                let n = [-dir[1] / dir_len / sx, dir[0] / dir_len / sy];
                let h = 0.5;
                ([c[0] - n[0] * h, c[1] - n[1] * h], [c[0] + n[0] * h, c[1] + n[1] * h])
            });
            (long, short)
        }
    };

    let mut axes = CrossAxes { long, short };
    if noise_frac > 0.0 {
        let c = axes.center();
        let mut jitter = |p: Point| {
            let u: f64 = rng.random_range(-noise_frac..=noise_frac);
            [c[0] + (p[0] - c[0]) * (1.0 + u), c[1] + (p[1] - c[1]) * (1.0 + u)]
        };
        axes = CrossAxes {
            long: (jitter(axes.long.0), jitter(axes.long.1)),
            short: (jitter(axes.short.0), jitter(axes.short.1)),
        };
    }
    let long_mm = phys_dist(axes.long.0, axes.long.1, sx, sy);
    let short_mm = phys_dist(axes.short.0, axes.short.1, sx, sy);
    if short_mm > long_mm {
        axes = CrossAxes {
            long: axes.short,
            short: axes.long,
        };
    }
    RecistAnnotation::new(axes, best_z, spacing)
}

/// One row of the annotation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub lesion_id: String,
    pub volume_path: String,
    pub slice_index: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub x3: f64,
    pub y3: f64,
    pub x4: f64,
    pub y4: f64,
}

impl AnnotationRow {
    pub fn from_recist(lesion_id: &str, volume_path: &str, r: &RecistAnnotation) -> Self {
        let CrossAxes { long, short } = r.axes;
        Self {
            lesion_id: lesion_id.to_string(),
            volume_path: volume_path.to_string(),
            slice_index: r.slice_index,
            x1: long.0[0],
            y1: long.0[1],
            x2: long.1[0],
            y2: long.1[1],
            x3: short.0[0],
            y3: short.0[1],
            x4: short.1[0],
            y4: short.1[1],
        }
    }

    pub fn axes(&self) -> CrossAxes {
        CrossAxes {
            long: ([self.x1, self.y1], [self.x2, self.y2]),
            short: ([self.x3, self.y3], [self.x4, self.y4]),
        }
    }

    pub fn to_recist(&self, spacing: [f64; 3]) -> Result<RecistAnnotation> {
        RecistAnnotation::new(self.axes(), self.slice_index, spacing)
    }
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Csv(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_annotations(path: &Path, rows: &[AnnotationRow]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cross(l0: Point, l1: Point, s0: Point, s1: Point) -> CrossAxes {
        CrossAxes {
            long: (l0, l1),
            short: (s0, s1),
        }
    }

    #[test]
    fn bbox_of_axis_aligned_cross() {
        let r = RecistAnnotation::new(
            cross([10.0, 10.0], [30.0, 10.0], [20.0, 5.0], [20.0, 15.0]),
            0,
            [1.0; 3],
        )
        .unwrap();
        assert_eq!(bbox_of(&r), BBox { x: 10, y: 5, w: 20, h: 10 });
    }

    #[test]
    fn bbox_of_diagonal_cross() {
        let r = RecistAnnotation::new(
            cross([0.0, 0.0], [10.0, 10.0], [0.0, 10.0], [10.0, 0.0]),
            0,
            [1.0; 3],
        )
        .unwrap();
        let b = bbox_of(&r);
        assert_eq!((b.w, b.h), (10, 10));
    }

    #[test]
    fn degenerate_or_inconsistent_annotations_are_rejected() {
        let zero = cross([0.0, 0.0], [10.0, 0.0], [5.0, 0.0], [5.0, 0.0]);
        assert!(RecistAnnotation::new(zero, 0, [1.0; 3]).is_err());
        let swapped = cross([5.0, -1.0], [5.0, 1.0], [0.0, 0.0], [10.0, 0.0]);
        assert!(RecistAnnotation::new(swapped, 0, [1.0; 3]).is_err());
        let apart = cross([0.0, 0.0], [10.0, 0.0], [30.0, -3.0], [30.0, 3.0]);
        assert!(RecistAnnotation::new(apart, 0, [1.0; 3]).is_err());
    }

    fn centred_annotation(semi: f64, sz: f64) -> RecistAnnotation {
        RecistAnnotation::new(
            cross(
                [50.0 - semi, 50.0],
                [50.0 + semi, 50.0],
                [50.0, 50.0 - semi / 2.0],
                [50.0, 50.0 + semi / 2.0],
            ),
            10,
            [1.0, 1.0, sz],
        )
        .unwrap()
    }

    #[test]
    fn propagation_identity_at_offset_zero() {
        let r = centred_annotation(10.0, 1.0);
        let p = propagate(&r, 0).unwrap();
        assert_eq!(p.axes, r.axes);
        assert_eq!(p.slice_index, 10);
    }

    #[test]
    fn propagation_follows_pythagoras() {
        let r = centred_annotation(10.0, 1.0);
        let p = propagate(&r, 6).unwrap();
        let semi = 50.0 - p.axes.long.0[0];
        assert!((semi - 8.0).abs() < 1e-12, "{semi}");
        assert_eq!(p.slice_index, 16);
        // short semi-axis 5 mm is fully collapsed at 6 mm
        assert_eq!(p.axes.short.0, [50.0, 50.0]);
    }

    #[test]
    fn propagation_terminates_beyond_long_semi_axis() {
        let r = centred_annotation(10.0, 1.0);
        assert!(propagate(&r, 9).is_some());
        assert!(propagate(&r, 10).is_none());
        assert!(propagate(&r, 12).is_none());
        assert!(propagate(&r, -12).is_none());
    }

    #[test]
    fn propagation_uses_physical_slice_distance() {
        let r = centred_annotation(10.0, 2.0);
        let p = propagate(&r, 3).unwrap();
        assert!((50.0 - p.axes.long.0[0] - 8.0).abs() < 1e-12);
    }

    fn disk_mask(radius: f64) -> MaskVolume {
        let mut m = MaskVolume::zeros([41, 41, 3]);
        for y in 0..41 {
            for x in 0..41 {
                let d2 = (x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2);
                if d2 <= radius * radius {
                    let i = m.index(x, y, 1);
                    m.data[i] = 1;
                }
            }
        }
        m
    }

    #[test]
    fn digital_disk_diameters() {
        let m = disk_mask(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = extract_recist_from_mask(&m, [1.0; 3], 0.0, &mut rng).unwrap();
        assert_eq!(r.slice_index, 1);
        assert!((r.long_length_mm() - 20.0).abs() <= 1.0, "{}", r.long_length_mm());
        assert!((r.short_length_mm() - 20.0).abs() <= 1.0, "{}", r.short_length_mm());
    }

    #[test]
    fn noiseless_extraction_ignores_rng() {
        let m = disk_mask(7.0);
        let a = extract_recist_from_mask(&m, [1.0; 3], 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = extract_recist_from_mask(&m, [1.0; 3], 0.0, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noisy_semi_lengths_stay_within_band() {
        let m = disk_mask(9.0);
        let clean = extract_recist_from_mask(&m, [1.0; 3], 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let c = clean.axes.center();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noisy = extract_recist_from_mask(&m, [1.0; 3], 0.2, &mut rng).unwrap();
            assert!(noisy.long_length_mm() >= noisy.short_length_mm());
            // every noisy endpoint sits on the ray of one clean endpoint
            for p in noisy.axes.endpoints() {
                let matched = clean.axes.endpoints().iter().any(|&q| {
                    let (vx, vy) = (q[0] - c[0], q[1] - c[1]);
                    let (wx, wy) = (p[0] - c[0], p[1] - c[1]);
                    let cross = vx * wy - vy * wx;
                    let ratio = (wx * vx + wy * vy) / (vx * vx + vy * vy);
                    cross.abs() < 1e-9 && (0.8 - 1e-12..=1.2 + 1e-12).contains(&ratio)
                });
                assert!(matched, "endpoint {p:?} (seed {seed})");
            }
        }
    }

    #[test]
    fn empty_mask_is_error() {
        let m = MaskVolume::zeros([5, 5, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            extract_recist_from_mask(&m, [1.0; 3], 0.0, &mut rng),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn csv_round_trip_and_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        std::fs::write(
            &path,
            "lesion_id,volume_path,slice_index,x1,y1,x2,y2,x3,y3,x4,y4,comment\n\
             L1,v.raw,7,10.25,10,30,10,20,5,20,15,hello\n",
        )
        .unwrap();
        let rows = read_annotations(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].x1, 10.25);
        assert_eq!(rows[0].slice_index, 7);
        let out = dir.path().join("b.csv");
        write_annotations(&out, &rows).unwrap();
        assert_eq!(read_annotations(&out).unwrap(), rows);
    }

    proptest::proptest! {
        #[test]
        fn propagation_is_symmetric_and_monotone(semi in 2.0f64..30.0, sz in 0.5f64..3.0, k in 0i64..20) {
            let r = centred_annotation(semi, sz);
            let plus = propagate(&r, k);
            let minus = propagate(&r, -k);
            proptest::prop_assert_eq!(plus.is_some(), minus.is_some());
            if let (Some(p), Some(m)) = (&plus, &minus) {
                proptest::prop_assert_eq!(p.axes, m.axes);
                if let Some(next) = propagate(&r, k + 1) {
                    let c = r.axes.center();
                    for (a, b) in p.axes.endpoints().iter().zip(next.axes.endpoints().iter()) {
                        proptest::prop_assert!(dist(*b, c) <= dist(*a, c) + 1e-12);
                    }
                }
                for (a, b) in p.axes.endpoints().iter().zip(r.axes.endpoints().iter()) {
                    let c = r.axes.center();
                    proptest::prop_assert!(dist(*a, c) <= dist(*b, c) + 1e-12);
                }
            }
        }
    }
}
