//! Synthetic lesion volumes with analytic ground truth.
//!
//! A phantom is a single ellipsoidal lesion in a uniform background, with
//! optional low-frequency texture, Gaussian partial-volume blur and additive
//! Gaussian noise. Intensities are generated in normalized units and stored
//! as `i16` through the volume's display window.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{save_volume, MaskVolume, Volume};
use crate::recist::{extract_recist_from_mask, write_annotations, AnnotationRow};

/// Display window of generated volumes.
pub const PHANTOM_WINDOW: (f64, f64) = (-100.0, 300.0);
/// Relative noise applied to the extracted RECIST semi-lengths.
pub const ANNOTATION_NOISE: f64 = 0.2;

/// An ellipsoid in voxel-centre coordinates. The body frame is first
/// rotated in-plane by `rotation`, then tilted out of the axial plane by
/// `tilt` (both radians).
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    /// Centre in voxel coordinates.
    pub center: [f64; 3],
    /// Semi-axes in mm.
    pub semi_axes: [f64; 3],
    pub rotation: f64,
    pub tilt: f64,
}

impl Ellipsoid {
    /// World-to-body rotation matrix (rows are body axes).
    fn frame(&self) -> [[f64; 3]; 3] {
        let (c, s) = (self.rotation.cos(), self.rotation.sin());
        let (ct, st) = (self.tilt.cos(), self.tilt.sin());
        [
            [ct * c, ct * s, st],
            [-s, c, 0.0],
            [-st * c, -st * s, ct],
        ]
    }

    pub fn contains(&self, x: usize, y: usize, z: usize, spacing: [f64; 3]) -> bool {
        let d = [
            (x as f64 - self.center[0]) * spacing[0],
            (y as f64 - self.center[1]) * spacing[1],
            (z as f64 - self.center[2]) * spacing[2],
        ];
        self.frame()
            .iter()
            .zip(&self.semi_axes)
            .map(|(row, a)| (row.iter().zip(&d).map(|(m, v)| m * v).sum::<f64>() / a).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    /// Half-extent along each volume axis, in voxels.
    pub fn extent(&self, spacing: [f64; 3]) -> [f64; 3] {
        let f = self.frame();
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mm = (0..3)
                .map(|j| (f[j][k] * self.semi_axes[j]).powi(2))
                .sum::<f64>()
                .sqrt();
            *o = mm / spacing[k];
        }
        out
    }

    /// Analytic volume in mm^3.
    pub fn volume_mm3(&self) -> f64 {
        let [a, b, c] = self.semi_axes;
        4.0 / 3.0 * std::f64::consts::PI * a * b * c
    }
}

/// A non-lesion structure drawn with its own mean intensity. Not part of
/// the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub shape: Ellipsoid,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    pub lesion: Ellipsoid,
    /// Optional region of different intensity inside the lesion (e.g. a
    /// necrotic core). Part of the ground truth; clipped to the lesion.
    pub core: Option<Structure>,
    /// Surrounding anatomy; the lesion is drawn on top of it.
    pub structures: Vec<Structure>,
    pub fg_mean: f64,
    pub bg_mean: f64,
    pub noise_sigma: f64,
    /// Amplitude of an additive low-frequency texture.
    pub texture: f64,
    /// Gaussian blur sigma in voxels.
    pub blur_sigma: f64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParam("dims and spacing must be positive".into()));
        }
        let shapes = std::iter::once(&self.lesion).chain(self.structures.iter().map(|s| &s.shape));
        for e in shapes {
            if e.semi_axes.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::InvalidParam("semi-axes must be positive".into()));
            }
        }
        if self.fg_mean == self.bg_mean {
            return Err(Error::InvalidParam("fg_mean must differ from bg_mean".into()));
        }
        if self.noise_sigma < 0.0 || self.texture < 0.0 || self.blur_sigma < 0.0 {
            return Err(Error::InvalidParam("noise, texture and blur must be >= 0".into()));
        }
        let ext = self.lesion.extent(self.spacing);
        for k in 0..3 {
            let lo = self.lesion.center[k] - ext[k];
            let hi = self.lesion.center[k] + ext[k];
            if lo < 0.0 || hi > (self.dims[k] - 1) as f64 {
                return Err(Error::InvalidParam(format!(
                    "lesion extends outside the volume along axis {k}"
                )));
            }
        }
        Ok(())
    }

    /// Whether the voxel centre `(x, y, z)` lies inside the lesion.
    pub fn contains(&self, x: usize, y: usize, z: usize) -> bool {
        self.lesion.contains(x, y, z, self.spacing)
    }

    /// Analytic lesion volume in voxels.
    pub fn analytic_voxels(&self) -> f64 {
        self.lesion.volume_mm3() / (self.spacing[0] * self.spacing[1] * self.spacing[2])
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * r)
        .map(|i| {
            let d = i as f64 - r as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with clamped borders.
fn blur3(data: &mut [f64], dims: [usize; 3], sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let [nx, ny, nz] = dims;
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let stride = strides[axis];
        let src = data.to_vec();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let pos = [x, y, z][axis] as isize;
                    let base = x + y * nx + z * nx * ny - pos as usize * stride;
                    let mut acc = 0.0;
                    for (j, w) in k.iter().enumerate() {
                        let p = (pos + j as isize - r).clamp(0, n - 1) as usize;
                        acc += w * src[base + p * stride];
                    }
                    data[x + y * nx + z * nx * ny] = acc;
                }
            }
        }
    }
}

/// Renders the phantom: returns the volume and its ground-truth mask.
pub fn generate_phantom<R: Rng + ?Sized>(
    spec: &PhantomSpec,
    rng: &mut R,
) -> Result<(Volume, MaskVolume)> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let mut mask = MaskVolume::zeros(spec.dims);
    let mut values = vec![0.0; nx * ny * nz];
    // texture: product of sinusoids with wavelengths of 12-24 voxels
    let mut waves = [(0.0, 0.0); 3];
    for w in &mut waves {
        *w = (
            std::f64::consts::TAU / rng.random_range(12.0..24.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
    }
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = mask.index(x, y, z);
                let inside = spec.contains(x, y, z);
                mask.data[i] = u8::from(inside);
                let mut v = if inside {
                    match &spec.core {
                        Some(c) if c.shape.contains(x, y, z, spec.spacing) => c.mean,
                        _ => spec.fg_mean,
                    }
                } else {
                    spec.structures
                        .iter()
                        .rev()
                        .find(|st| st.shape.contains(x, y, z, spec.spacing))
                        .map_or(spec.bg_mean, |st| st.mean)
                };
                if spec.texture > 0.0 {
                    let t = [x, y, z]
                        .iter()
                        .zip(&waves)
                        .map(|(&c, &(f, ph))| (f * c as f64 + ph).sin())
                        .product::<f64>();
                    v += spec.texture * t;
                }
                values[i] = v;
            }
        }
    }
    blur3(&mut values, spec.dims, spec.blur_sigma);
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidParam(e.to_string()))?;
        for v in &mut values {
            *v += normal.sample(rng);
        }
    }
    let (lo, hi) = PHANTOM_WINDOW;
    let voxels = values
        .iter()
        .map(|&v| (lo + v.clamp(0.0, 1.0) * (hi - lo)).round() as i16)
        .collect();
    let volume = Volume::new(spec.dims, spec.spacing, PHANTOM_WINDOW, voxels)?;
    Ok((volume, mask))
}

/// Parameters of the random phantom distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomDistribution {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Range of the longest in-plane semi-axis, mm.
    pub semi_axis_mm: (f64, f64),
    /// Probability of drawing a sphere instead of a general ellipsoid.
    pub sphere_prob: f64,
    /// Ranges of the second and third semi-axis relative to the first, for
    /// non-spherical lesions.
    pub b_ratio: (f64, f64),
    pub c_ratio: (f64, f64),
    /// Maximum out-of-plane tilt of ellipsoids, radians.
    pub max_tilt: f64,
    /// Maximum number of tube-like structures placed next to the lesion.
    pub max_structures: usize,
    /// Range of structure mean intensities.
    pub structure_mean: (f64, f64),
    /// Range of the gap between lesion and structure surfaces, mm.
    pub structure_gap_mm: (f64, f64),
    /// Probability that a lesion has a core of different intensity.
    pub core_prob: f64,
    /// Range of core size relative to the lesion.
    pub core_scale: (f64, f64),
    pub core_mean: (f64, f64),
    /// Relative noise applied to the extracted RECIST semi-lengths.
    pub annotation_noise: f64,
    pub fg_mean: f64,
    pub bg_mean: f64,
    pub noise_sigma: f64,
    pub texture: f64,
    pub blur_sigma: f64,
}

impl Default for PhantomDistribution {
    fn default() -> Self {
        Self {
            dims: [64, 64, 24],
            spacing: [1.0, 1.0, 2.0],
            semi_axis_mm: (9.0, 13.0),
            sphere_prob: 0.3,
            b_ratio: (0.55, 0.95),
            c_ratio: (0.6, 1.5),
            max_tilt: 0.0,
            max_structures: 0,
            structure_mean: (0.6, 0.7),
            structure_gap_mm: (1.0, 3.0),
            core_prob: 0.0,
            core_scale: (0.3, 0.6),
            core_mean: (0.4, 0.55),
            annotation_noise: ANNOTATION_NOISE,
            fg_mean: 0.7,
            bg_mean: 0.3,
            noise_sigma: 0.05,
            texture: 0.05,
            blur_sigma: 0.6,
        }
    }
}

/// Distance in mm from the lesion centre to its surface along the in-plane
/// unit direction `dir`.
fn radius_along(e: &Ellipsoid, dir: [f64; 2]) -> f64 {
    let q: f64 = e
        .frame()
        .iter()
        .zip(&e.semi_axes)
        .map(|(row, a)| ((row[0] * dir[0] + row[1] * dir[1]) / a).powi(2))
        .sum();
    1.0 / q.sqrt()
}

/// Draws a phantom spec: one lesion near the volume centre plus up to
/// `max_structures` tubes running roughly along z, each separated from the
/// lesion by a 1-3 mm gap.
pub fn random_spec<R: Rng + ?Sized>(d: &PhantomDistribution, rng: &mut R) -> PhantomSpec {
    use std::f64::consts::PI;
    let a: f64 = rng.random_range(d.semi_axis_mm.0..d.semi_axis_mm.1);
    let sphere = rng.random_bool(d.sphere_prob);
    let (b, c, rotation, tilt) = if sphere {
        (a, a, 0.0, 0.0)
    } else {
        (
            a * rng.random_range(d.b_ratio.0..=d.b_ratio.1),
            a * rng.random_range(d.c_ratio.0..=d.c_ratio.1),
            rng.random_range(0.0..PI),
            if d.max_tilt > 0.0 {
                rng.random_range(-d.max_tilt..d.max_tilt)
            } else {
                0.0
            },
        )
    };
    let mid = |k: usize| (d.dims[k] as f64 - 1.0) / 2.0;
    let lesion = Ellipsoid {
        center: [
            mid(0) + rng.random_range(-4.0..4.0),
            mid(1) + rng.random_range(-4.0..4.0),
            mid(2) + rng.random_range(-1.0..1.0),
        ],
        semi_axes: [a, b, c],
        rotation,
        tilt,
    };
    let core = if d.core_prob > 0.0 && rng.random_bool(d.core_prob) {
        let k = rng.random_range(d.core_scale.0..=d.core_scale.1);
        let theta: f64 = rng.random_range(0.0..2.0 * PI);
        let dir = [theta.cos(), theta.sin()];
        let shift = rng.random_range(0.0..=(1.0 - k)) * 0.8 * radius_along(&lesion, dir);
        Some(Structure {
            shape: Ellipsoid {
                center: [
                    lesion.center[0] + shift * dir[0] / d.spacing[0],
                    lesion.center[1] + shift * dir[1] / d.spacing[1],
                    lesion.center[2],
                ],
                semi_axes: lesion.semi_axes.map(|s| s * k),
                rotation: lesion.rotation,
                tilt: lesion.tilt,
            },
            mean: rng.random_range(d.core_mean.0..=d.core_mean.1),
        })
    } else {
        None
    };
    let n_structures = rng.random_range(0..=d.max_structures);
    let mut structures = Vec::with_capacity(n_structures);
    for _ in 0..n_structures {
        let theta: f64 = rng.random_range(0.0..2.0 * PI);
        let dir = [theta.cos(), theta.sin()];
        let r: f64 = rng.random_range(2.0..4.0);
        let gap = rng.random_range(d.structure_gap_mm.0..=d.structure_gap_mm.1);
        let dist = radius_along(&lesion, dir) + gap + r;
        let mean = rng.random_range(d.structure_mean.0..=d.structure_mean.1);
        structures.push(Structure {
            shape: Ellipsoid {
                center: [
                    lesion.center[0] + dist * dir[0] / d.spacing[0],
                    lesion.center[1] + dist * dir[1] / d.spacing[1],
                    lesion.center[2],
                ],
                semi_axes: [r, r * rng.random_range(1.0..1.5), 80.0],
                rotation: rng.random_range(0.0..PI),
                tilt: rng.random_range(-0.3..0.3),
            },
            mean,
        });
    }
    PhantomSpec {
        dims: d.dims,
        spacing: d.spacing,
        lesion,
        core,
        structures,
        fg_mean: d.fg_mean,
        bg_mean: d.bg_mean,
        noise_sigma: d.noise_sigma,
        texture: d.texture,
        blur_sigma: d.blur_sigma,
    }
}

/// One generated phantom with its annotation.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub id: String,
    pub spec: PhantomSpec,
    pub volume: Volume,
    pub mask: MaskVolume,
    pub recist: crate::recist::RecistAnnotation,
}

/// Generates `n` phantoms deterministically from `seed`. Each phantom draws
/// from its own generator, so results do not depend on thread count.
pub fn generate_suite(n: usize, seed: u64, id_prefix: &str) -> Result<Vec<Phantom>> {
    generate_suite_from(&PhantomDistribution::default(), n, seed, id_prefix)
}

/// As [`generate_suite`], drawing specs from `dist`.
pub fn generate_suite_from(
    dist: &PhantomDistribution,
    n: usize,
    seed: u64,
    id_prefix: &str,
) -> Result<Vec<Phantom>> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..n).map(|_| master.random()).collect();
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let spec = random_spec(dist, &mut rng);
            let (volume, mask) = generate_phantom(&spec, &mut rng)?;
            let recist = extract_recist_from_mask(&mask, spec.spacing, dist.annotation_noise, &mut rng)?;
            Ok(Phantom {
                id: format!("{id_prefix}{i:03}"),
                spec,
                volume,
                mask,
                recist,
            })
        })
        .collect()
}

/// Writes `<id>.raw/.json`, `gt_<id>.raw` and `annotations.csv` into `dir`.
/// Volume paths in the CSV are relative to `dir`.
pub fn write_dataset(dir: &Path, phantoms: &[Phantom]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(phantoms.len());
    for p in phantoms {
        let raw = format!("{}.raw", p.id);
        save_volume(&p.volume, &dir.join(&raw))?;
        p.mask.save(&dir.join(format!("gt_{}.raw", p.id)))?;
        rows.push(AnnotationRow::from_recist(&p.id, &raw, &p.recist));
    }
    write_annotations(&dir.join("annotations.csv"), &rows)
}
