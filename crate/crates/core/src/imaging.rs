//! Volume and slice representation, intensity windowing and ROI cropping.
//!
//! Volumes are stored on disk as raw little-endian `int16` voxels (x fastest,
//! then y, then z) next to a JSON sidecar holding `dims`, `spacing` and
//! `window`. Masks use the same ordering as raw `uint8`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CT-like volume of signed 16-bit intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    window: (f64, f64),
    voxels: Vec<i16>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    window: [f64; 2],
}

fn check_geometry(dims: [usize; 3], spacing: [f64; 3]) -> std::result::Result<(), String> {
    if dims.contains(&0) {
        return Err(format!("dims must be >= 1, got {dims:?}"));
    }
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(format!("spacing must be positive, got {spacing:?}"));
    }
    Ok(())
}

impl Volume {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        window: (f64, f64),
        voxels: Vec<i16>,
    ) -> Result<Self> {
        check_geometry(dims, spacing).map_err(Error::InvalidParam)?;
        if !(window.0 < window.1) {
            return Err(Error::InvalidWindow {
                lo: window.0,
                hi: window.1,
            });
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(Error::DimMismatch(format!(
                "{} voxels for dims {:?}",
                voxels.len(),
                dims
            )));
        }
        Ok(Self {
            dims,
            spacing,
            window,
            voxels,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> i16 {
        self.voxels[self.index(x, y, z)]
    }

    /// Maps one raw intensity through the volume's window into `[0, 1]`.
    #[inline]
    pub fn normalize(&self, value: i16) -> f64 {
        let (lo, hi) = self.window;
        ((f64::from(value) - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

/// Path of the JSON sidecar belonging to a `.raw` volume file.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Reads `<name>.raw` plus its `<name>.json` sidecar.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let raw_path = path.with_extension("raw");
    let header_path = sidecar_path(&raw_path);
    let header_text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: Sidecar = serde_json::from_str(&header_text).map_err(|e| Error::Header {
        path: header_path.clone(),
        reason: e.to_string(),
    })?;
    check_geometry(header.dims, header.spacing).map_err(|reason| Error::Header {
        path: header_path.clone(),
        reason,
    })?;
    if !(header.window[0] < header.window[1]) {
        return Err(Error::Header {
            path: header_path,
            reason: format!("window lo must be below hi, got {:?}", header.window),
        });
    }

    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    if bytes.len() != 2 * n {
        return Err(Error::ByteCountMismatch {
            path: raw_path,
            expected: 2 * n,
            found: bytes.len(),
        });
    }
    let voxels = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    Volume::new(
        header.dims,
        header.spacing,
        (header.window[0], header.window[1]),
        voxels,
    )
}

/// Writes `<name>.raw` and `<name>.json`.
pub fn save_volume(volume: &Volume, path: &Path) -> Result<()> {
    let raw_path = path.with_extension("raw");
    let header_path = sidecar_path(&raw_path);
    let mut bytes = Vec::with_capacity(volume.voxels.len() * 2);
    for v in &volume.voxels {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    let header = Sidecar {
        dims: volume.dims,
        spacing: volume.spacing,
        window: [volume.window.0, volume.window.1],
    };
    let text = serde_json::to_string(&header).expect("sidecar serializes");
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))
}

/// Volume of window-normalized intensities in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct NormalizedVolume {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

/// `clamp((x - lo) / (hi - lo), 0, 1)` for every voxel.
pub fn window_intensity(v: &Volume) -> Result<NormalizedVolume> {
    let (lo, hi) = v.window;
    if !(lo < hi) {
        return Err(Error::InvalidWindow { lo, hi });
    }
    Ok(NormalizedVolume {
        dims: v.dims,
        spacing: v.spacing,
        values: v.voxels.iter().map(|&x| v.normalize(x)).collect(),
    })
}

/// Axis-aligned box in pixel coordinates. `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn new(x: i64, y: i64, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidBBox(format!("zero extent {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// In-plane rectangle of a volume slice, always fully inside the volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl RoiRect {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The `2w x 2h` window centred on `bbox`, clamped to a `nx x ny` slice.
pub fn roi_rect(nx: usize, ny: usize, bbox: &BBox) -> Result<RoiRect> {
    if bbox.w == 0 || bbox.h == 0 {
        return Err(Error::InvalidBBox(format!(
            "zero extent {}x{}",
            bbox.w, bbox.h
        )));
    }
    let (nx_i, ny_i) = (nx as i64, ny as i64);
    if bbox.x >= nx_i
        || bbox.y >= ny_i
        || bbox.x + bbox.w as i64 <= 0
        || bbox.y + bbox.h as i64 <= 0
    {
        return Err(Error::InvalidBBox(format!(
            "{bbox:?} lies outside the {nx}x{ny} image"
        )));
    }
    let x0 = bbox.x - (bbox.w / 2) as i64;
    let y0 = bbox.y - (bbox.h / 2) as i64;
    let x1 = (x0 + 2 * bbox.w as i64).min(nx_i);
    let y1 = (y0 + 2 * bbox.h as i64).min(ny_i);
    let x0 = x0.max(0);
    let y0 = y0.max(0);
    Ok(RoiRect {
        x0: x0 as usize,
        y0: y0 as usize,
        width: (x1 - x0) as usize,
        height: (y1 - y0) as usize,
    })
}

/// A windowed, normalized 2D crop of one axial slice.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// Voxel offset `(x0, y0, z)` of the crop in its parent volume.
    pub origin: (usize, usize, usize),
    pub spacing: (f64, f64),
}

impl RoiImage {
    /// Builds a free-standing image (origin at zero). Values must lie in `[0, 1]`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParam("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            origin: (0, 0, 0),
            spacing: (1.0, 1.0),
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn rect(&self) -> RoiRect {
        RoiRect {
            x0: self.origin.0,
            y0: self.origin.1,
            width: self.width,
            height: self.height,
        }
    }
}

/// Crops `rect` out of slice `z`, windowing intensities into `[0, 1]`.
pub fn crop_rect(v: &Volume, rect: &RoiRect, z: usize) -> Result<RoiImage> {
    let [nx, ny, nz] = v.dims;
    if z >= nz {
        return Err(Error::SliceOutOfRange { index: z, nz });
    }
    if rect.is_empty() || rect.x0 + rect.width > nx || rect.y0 + rect.height > ny {
        return Err(Error::InvalidBBox(format!(
            "{rect:?} does not fit a {nx}x{ny} slice"
        )));
    }
    let mut pixels = Vec::with_capacity(rect.len());
    for y in rect.y0..rect.y0 + rect.height {
        for x in rect.x0..rect.x0 + rect.width {
            pixels.push(v.normalize(v.get(x, y, z)));
        }
    }
    Ok(RoiImage {
        width: rect.width,
        height: rect.height,
        pixels,
        origin: (rect.x0, rect.y0, z),
        spacing: (v.spacing[0], v.spacing[1]),
    })
}

/// Crops the `2w x 2h` neighbourhood of `lesion_bbox` on `slice`.
pub fn crop_roi(v: &Volume, lesion_bbox: &BBox, slice: usize) -> Result<RoiImage> {
    if slice >= v.dims[2] {
        return Err(Error::SliceOutOfRange {
            index: slice,
            nz: v.dims[2],
        });
    }
    let rect = roi_rect(v.dims[0], v.dims[1], lesion_bbox)?;
    crop_rect(v, &rect, slice)
}

/// Binary (or small-label) volume stored as raw `uint8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVolume {
    pub dims: [usize; 3],
    pub data: Vec<u8>,
}

impl MaskVolume {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0; dims[0] * dims[1] * dims[2]],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Voxels of axial slice `z`, x fastest.
    pub fn slice(&self, z: usize) -> &[u8] {
        let n = self.dims[0] * self.dims[1];
        &self.data[z * n..(z + 1) * n]
    }

    /// Writes a 2D ROI-sized label array into slice `z` at `rect`.
    pub fn paste(&mut self, rect: &RoiRect, z: usize, labels: &[u8]) {
        assert_eq!(labels.len(), rect.len(), "label buffer must match rect");
        for j in 0..rect.height {
            for i in 0..rect.width {
                let idx = self.index(rect.x0 + i, rect.y0 + j, z);
                self.data[idx] = labels[j * rect.width + i];
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.data).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, dims: [usize; 3]) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::ByteCountMismatch {
                path: path.to_path_buf(),
                expected,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }
}
