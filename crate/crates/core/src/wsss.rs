//! Slice-propagated self-training and volumetric inference.
//!
//! Each lesion gets one fixed ROI, derived from its RECIST bbox on the
//! annotated slice and reused on every other slice. Training runs in stages:
//! stage 0 learns from GrabCut-R labels on the RECIST slices; stage `j`
//! labels the slices at offsets `+-1..=+-j` with the previous model
//! (seeds from its probability map plus the propagated diameters, then
//! GrabCut) and fine-tunes on everything.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grabcut::{grabcut, GrabCutParams, SegmentationMask};
use crate::imaging::{crop_rect, load_volume, roi_rect, MaskVolume, RoiImage, RoiRect, Volume};
use crate::learner::{
    partition_from_mask, refine_with_grabcut, train, train_from, LearnerModel, LossConfig,
    Predictor, ProbabilityMap, TrainOptions, TrainReport, TrainSample,
};
use crate::recist::{bbox_of, propagate, read_annotations, CrossAxes, RecistAnnotation};
use crate::seedgen::{
    inject_center_fg, recist_d_mask, seeds_bbox_variant, seeds_from_recist, BBoxVariant,
};

/// One annotated lesion.
#[derive(Debug, Clone)]
pub struct Lesion {
    pub id: String,
    pub volume: Volume,
    pub recist: RecistAnnotation,
    pub gt: Option<MaskVolume>,
}

impl Lesion {
    /// The lesion's fixed ROI rectangle.
    pub fn roi(&self) -> Result<RoiRect> {
        lesion_roi(&self.volume, &self.recist)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub lesions: Vec<Lesion>,
}

impl Dataset {
    pub fn new(lesions: Vec<Lesion>) -> Result<Self> {
        if lesions.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        for l in &lesions {
            let nz = l.volume.dims()[2];
            if l.recist.slice_index >= nz {
                return Err(Error::SliceOutOfRange {
                    index: l.recist.slice_index,
                    nz,
                });
            }
            if let Some(gt) = &l.gt {
                if gt.dims != l.volume.dims() {
                    return Err(Error::DimMismatch(format!(
                        "ground truth of {} has dims {:?}, volume {:?}",
                        l.id,
                        gt.dims,
                        l.volume.dims()
                    )));
                }
            }
        }
        Ok(Self { lesions })
    }

    /// Loads every lesion listed in an annotation CSV. Volume paths are
    /// resolved relative to the CSV's directory. When `gt_dir` is given,
    /// `gt_<lesion_id>.raw` is read from it.
    pub fn load(annotations: &Path, gt_dir: Option<&Path>) -> Result<Self> {
        let rows = read_annotations(annotations)?;
        let base = annotations.parent().unwrap_or(Path::new("."));
        let lesions = rows
            .par_iter()
            .map(|row| {
                let path = resolve(base, &row.volume_path);
                let volume = load_volume(&path)?;
                let recist = row.to_recist(volume.spacing())?;
                let gt = gt_dir
                    .map(|d| MaskVolume::load(&d.join(format!("gt_{}.raw", row.lesion_id)), volume.dims()))
                    .transpose()?;
                Ok(Lesion {
                    id: row.lesion_id.clone(),
                    volume,
                    recist,
                    gt,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lesions)
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// ROI rectangle for a lesion: twice its RECIST bbox, centred on it.
pub fn lesion_roi(v: &Volume, r: &RecistAnnotation) -> Result<RoiRect> {
    let [nx, ny, _] = v.dims();
    roi_rect(nx, ny, &bbox_of(r))
}

#[derive(Debug, Clone)]
pub struct WsssConfig {
    /// Odd number of slices centred on the RECIST slice used for training.
    pub k_slices: usize,
    pub train: TrainOptions,
    pub grabcut: GrabCutParams,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for WsssConfig {
    fn default() -> Self {
        Self {
            k_slices: 5,
            train: TrainOptions::default(),
            grabcut: GrabCutParams::default(),
            loss: LossConfig::default(),
            seed: 42,
        }
    }
}

impl WsssConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_slices == 0 || self.k_slices.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "k_slices must be odd and >= 1, got {}",
                self.k_slices
            )));
        }
        self.grabcut.validate()?;
        self.loss.validate()
    }

    /// Number of added-slice stages after stage 0.
    pub fn n_stages(&self) -> usize {
        (self.k_slices - 1) / 2
    }
}

/// A propagated slice that exists in the volume: its index and diameters.
fn slice_at(v: &Volume, r: &RecistAnnotation, offset: i64) -> Option<(usize, CrossAxes)> {
    let p = propagate(r, offset)?;
    let nz = v.dims()[2] as i64;
    (0..nz)
        .contains(&p.slice_index)
        .then_some((p.slice_index as usize, p.axes))
}

/// Single-slice segmentation methods for the annotated slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceMethod {
    /// GrabCut from the RECIST seed geometry.
    GrabCutR,
    /// Diameters dilated to 20% of the bbox, no GrabCut.
    RecistD,
    /// GrabCut from the padded box (single centre FG pixel).
    GrabCut,
    /// GrabCut from the padded box with its central 20% as FG.
    GrabCutInner,
}

/// Segments the ROI of slice `z` using diameters `axes`.
pub fn segment_roi(
    roi: &RoiImage,
    axes: &CrossAxes,
    method: SliceMethod,
    p: &GrabCutParams,
) -> Result<SegmentationMask> {
    match method {
        SliceMethod::GrabCutR => grabcut(roi, &seeds_from_recist(roi, axes)?, p),
        SliceMethod::RecistD => recist_d_mask(roi, axes),
        SliceMethod::GrabCut => {
            let mut seeds = seeds_bbox_variant(roi, axes, BBoxVariant::Plain);
            inject_center_fg(&mut seeds, roi, axes);
            grabcut(roi, &seeds, p)
        }
        SliceMethod::GrabCutInner => {
            grabcut(roi, &seeds_bbox_variant(roi, axes, BBoxVariant::Inner), p)
        }
    }
}

/// Segments the annotated slice; returns the ROI and its mask.
pub fn segment_recist_slice(
    lesion: &Lesion,
    method: SliceMethod,
    p: &GrabCutParams,
) -> Result<(RoiRect, SegmentationMask)> {
    let rect = lesion.roi()?;
    let roi = crop_rect(&lesion.volume, &rect, lesion.recist.slice_index)?;
    Ok((rect, segment_roi(&roi, &lesion.recist.axes, method, p)?))
}

/// GrabCut-R on every slice reached by diameter propagation.
pub fn grabcut_3de(v: &Volume, r: &RecistAnnotation, p: &GrabCutParams) -> Result<MaskVolume> {
    let rect = lesion_roi(v, r)?;
    let mut out = MaskVolume::zeros(v.dims());
    for dir in [1i64, -1] {
        let start = if dir == 1 { 0 } else { -1 };
        let mut offset = start;
        while let Some((z, axes)) = slice_at(v, r, offset) {
            let roi = crop_rect(v, &rect, z)?;
            let m = grabcut(&roi, &seeds_from_recist(&roi, &axes)?, p)?;
            out.paste(&rect, z, &m.labels);
            offset += dir;
        }
    }
    Ok(out)
}

/// Training example from a mask on slice `z` with diameters `axes`.
fn sample(roi: RoiImage, rect: &RoiRect, axes: &CrossAxes, label: &SegmentationMask) -> TrainSample {
    let local = axes.translated(rect.x0 as f64, rect.y0 as f64);
    let part = partition_from_mask(label, &local);
    TrainSample { roi, part }
}

/// A generated off-slice label, kept for checkpoints.
#[derive(Debug, Clone)]
pub struct SliceLabel {
    pub lesion_id: String,
    pub offset: i64,
    pub mask: SegmentationMask,
}

/// Per-stage training summary.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: usize,
    pub n_samples: usize,
    pub train: TrainReport,
}

/// Output of [`wsss_train`]: the final model plus every stage's model.
#[derive(Debug, Clone)]
pub struct WsssOutcome {
    pub model: LearnerModel,
    pub stage_models: Vec<LearnerModel>,
    pub stages: Vec<StageReport>,
}

/// GrabCut-R labels of the annotated slices.
fn recist_slice_samples(data: &Dataset, p: &GrabCutParams) -> Result<Vec<TrainSample>> {
    data.lesions
        .par_iter()
        .map(|l| {
            let rect = l.roi()?;
            let roi = crop_rect(&l.volume, &rect, l.recist.slice_index)?;
            let label = segment_roi(&roi, &l.recist.axes, SliceMethod::GrabCutR, p)?;
            Ok(sample(roi, &rect, &l.recist.axes, &label))
        })
        .collect()
}

/// Labels slices at offsets `+-1..=+-j` with `model`.
fn off_slice_samples(
    data: &Dataset,
    model: &dyn Predictor,
    j: usize,
    p: &GrabCutParams,
) -> Result<Vec<(TrainSample, SliceLabel)>> {
    let per_lesion: Vec<Vec<(TrainSample, SliceLabel)>> = data
        .lesions
        .par_iter()
        .map(|l| {
            let rect = l.roi()?;
            let mut out = Vec::new();
            for d in 1..=j as i64 {
                for offset in [-d, d] {
                    let Some((z, axes)) = slice_at(&l.volume, &l.recist, offset) else {
                        continue;
                    };
                    let roi = crop_rect(&l.volume, &rect, z)?;
                    let prob = model.predict(&roi);
                    let label = refine_with_grabcut(&roi, &prob, &axes, p)?;
                    let s = sample(roi, &rect, &axes, &label);
                    out.push((
                        s,
                        SliceLabel {
                            lesion_id: l.id.clone(),
                            offset,
                            mask: label,
                        },
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_lesion.into_iter().flatten().collect())
}

/// Trains WSSS-k. When `checkpoint_dir` is given, every stage's model and
/// generated labels are written below it.
pub fn wsss_train(
    data: &Dataset,
    cfg: &WsssConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<WsssOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = recist_slice_samples(data, &cfg.grabcut)?;
    let (mut model, report) = train(&base, &cfg.loss, &cfg.train, &mut rng)?;
    log::info!(
        "stage 0: {} samples, loss {:.4} -> {:.4}",
        base.len(),
        report.initial_loss,
        report.final_loss
    );
    let mut stages = vec![StageReport {
        stage: 0,
        n_samples: base.len(),
        train: report,
    }];
    let mut stage_models = vec![model.clone()];
    if let Some(dir) = checkpoint_dir {
        write_checkpoint(dir, 0, &model, &[])?;
    }
    for j in 1..=cfg.n_stages() {
        let labelled = off_slice_samples(data, &model, j, &cfg.grabcut)?;
        let mut samples = base.clone();
        let mut labels = Vec::with_capacity(labelled.len());
        for (s, l) in labelled {
            samples.push(s);
            labels.push(l);
        }
        let (next, report) = train_from(model, &samples, &cfg.loss, &cfg.train, &mut rng)?;
        log::info!(
            "stage {j}: {} samples, loss {:.4} -> {:.4}",
            samples.len(),
            report.initial_loss,
            report.final_loss
        );
        model = next;
        if let Some(dir) = checkpoint_dir {
            write_checkpoint(dir, j, &model, &labels)?;
        }
        stages.push(StageReport {
            stage: j,
            n_samples: samples.len(),
            train: report,
        });
        stage_models.push(model.clone());
    }
    Ok(WsssOutcome {
        model,
        stage_models,
        stages,
    })
}

fn write_checkpoint(dir: &Path, stage: usize, model: &LearnerModel, labels: &[SliceLabel]) -> Result<()> {
    let stage_dir = dir.join(format!("stage_{stage}"));
    let label_dir = stage_dir.join("labels");
    std::fs::create_dir_all(&label_dir).map_err(|e| Error::io(&label_dir, e))?;
    model.save(&stage_dir.join("model.bin"))?;
    for l in labels {
        let path = label_dir.join(format!("{}_{:+}.raw", l.lesion_id, l.offset));
        std::fs::write(&path, &l.mask.labels).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Slice-by-slice volumetric segmentation outward from the RECIST slice.
/// A direction stops at the first empty slice mask, when propagation
/// terminates, or at the volume boundary.
pub fn segment_volume(
    m: &dyn Predictor,
    v: &Volume,
    r: &RecistAnnotation,
    p: &GrabCutParams,
    refine: bool,
) -> Result<MaskVolume> {
    let rect = lesion_roi(v, r)?;
    let mut out = MaskVolume::zeros(v.dims());
    for dir in [1i64, -1] {
        let mut offset = if dir == 1 { 0 } else { -1 };
        while let Some((z, axes)) = slice_at(v, r, offset) {
            let roi = crop_rect(v, &rect, z)?;
            let prob = m.predict(&roi);
            let mask = if refine {
                refine_with_grabcut(&roi, &prob, &axes, p)?
            } else {
                prob.threshold(0.5)
            };
            if mask.count() == 0 {
                break;
            }
            out.paste(&rect, z, &mask.labels);
            offset += dir;
        }
    }
    Ok(out)
}

/// Probability map of the whole volume: predictions inside the lesion ROI
/// on every slice reached by propagation, zero elsewhere.
pub fn probability_volume(m: &dyn Predictor, v: &Volume, r: &RecistAnnotation) -> Result<Vec<f64>> {
    let rect = lesion_roi(v, r)?;
    let [nx, ny, nz] = v.dims();
    let mut out = vec![0.0; nx * ny * nz];
    for dir in [1i64, -1] {
        let mut offset = if dir == 1 { 0 } else { -1 };
        while let Some((z, _)) = slice_at(v, r, offset) {
            let prob = m.predict(&crop_rect(v, &rect, z)?);
            for yy in 0..rect.height {
                for xx in 0..rect.width {
                    out[(z * ny + rect.y0 + yy) * nx + rect.x0 + xx] = prob.values[yy * rect.width + xx];
                }
            }
            offset += dir;
        }
    }
    Ok(out)
}

/// Per-slice predictions at every offset in `-max_offset..=max_offset` that
/// lies in the volume, independent of any stop rule. With `refine` each
/// slice is refined by GrabCut around its propagated RECIST and slices past
/// termination stay empty; otherwise the probability is thresholded at 0.5.
pub fn predict_slab(
    m: &dyn Predictor,
    v: &Volume,
    r: &RecistAnnotation,
    max_offset: usize,
    refine: Option<&GrabCutParams>,
) -> Result<MaskVolume> {
    let rect = lesion_roi(v, r)?;
    let nz = v.dims()[2] as i64;
    let mut out = MaskVolume::zeros(v.dims());
    for offset in -(max_offset as i64)..=max_offset as i64 {
        let z = r.slice_index as i64 + offset;
        if !(0..nz).contains(&z) {
            continue;
        }
        let z = z as usize;
        let roi = crop_rect(v, &rect, z)?;
        let mask = match refine {
            None => m.predict(&roi).threshold(0.5),
            Some(p) => match slice_at(v, r, offset) {
                Some((_, axes)) => refine_with_grabcut(&roi, &m.predict(&roi), &axes, p)?,
                None => continue,
            },
        };
        out.paste(&rect, z, &mask.labels);
    }
    Ok(out)
}

/// DICE of slice `r + offset` for each offset where the ground truth slice
/// is nonempty. Slices outside the volume are skipped.
pub fn offset_dice(
    pred: &MaskVolume,
    gt: &MaskVolume,
    r: &RecistAnnotation,
    offsets: &[i64],
) -> Result<Vec<(i64, f64)>> {
    let nz = gt.dims[2] as i64;
    let mut out = Vec::new();
    for &o in offsets {
        let z = r.slice_index as i64 + o;
        if !(0..nz).contains(&z) {
            continue;
        }
        let g = gt.slice(z as usize);
        if g.iter().all(|&v| v == 0) {
            continue;
        }
        out.push((o, crate::metrics::dice(pred.slice(z as usize), g)?));
    }
    Ok(out)
}

/// A predictor that is zero everywhere; useful as a no-learning baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, roi: &RoiImage) -> ProbabilityMap {
        ProbabilityMap {
            width: roi.width,
            height: roi.height,
            values: vec![0.0; roi.len()],
        }
    }
}
