//! Pixel-probability learner trained from imperfect masks.
//!
//! Every training pixel falls into one of three regions: on the RECIST
//! diameters (`R`), estimated foreground (`F`) or estimated background
//! (`B`). The loss is
//!
//! ```text
//! L = mean_R(-ln p) + alpha * mean_F(-ln p) + beta * mean_B(-ln(1 - p))
//! ```
//!
//! with `alpha` and `beta` ramped up during training. The built-in model is a
//! one-hidden-layer network over hand-crafted per-pixel features; anything
//! implementing [`Predictor`] can stand in for it at inference time.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grabcut::{grabcut, GrabCutParams, SegmentationMask};
use crate::imaging::RoiImage;
use crate::raster::rasterize_segment;
use crate::recist::CrossAxes;
use crate::seedgen::seeds_off_slice;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside logs.
pub const PROB_CLAMP: f64 = 1e-7;
/// Box-filter radii used by [`extract_features`].
pub const BOX_RADII: [usize; 4] = [1, 2, 4, 8];
pub const N_FEATURES: usize = 2 + 2 * BOX_RADII.len() + 2;
pub const HIDDEN_UNITS: usize = 32;

const MODEL_MAGIC: &[u8; 4] = b"WSSL";
const MODEL_VERSION: u32 = 1;

/// Per-pixel foreground probabilities over an ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} probabilities for {width}x{height}",
                values.len()
            )));
        }
        if values.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParam("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Binary mask of `p >= threshold`.
    pub fn threshold(&self, threshold: f64) -> SegmentationMask {
        let labels = self.values.iter().map(|&p| u8::from(p >= threshold)).collect();
        SegmentationMask {
            width: self.width,
            height: self.height,
            labels,
        }
    }
}

/// Pixel indices of the three loss regions. Pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionPartition {
    pub recist_idx: Vec<usize>,
    pub fg_idx: Vec<usize>,
    pub bg_idx: Vec<usize>,
}

/// Splits a mask into the three loss regions. `axes` are in mask-local
/// pixel coordinates; RECIST pixels take precedence over the mask label.
pub fn partition_from_mask(y: &SegmentationMask, axes: &CrossAxes) -> RegionPartition {
    let (w, h) = (y.width, y.height);
    let mut on_recist = vec![false; w * h];
    for seg in [axes.long, axes.short] {
        for i in rasterize_segment(seg.0, seg.1, w, h) {
            on_recist[i] = true;
        }
    }
    let mut part = RegionPartition::default();
    for (i, &l) in y.labels.iter().enumerate() {
        if on_recist[i] {
            part.recist_idx.push(i);
        } else if l != 0 {
            part.fg_idx.push(i);
        } else {
            part.bg_idx.push(i);
        }
    }
    part
}

/// Linear schedule `start -> end` over the first `fraction` of training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Ramp {
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        let len = self.fraction * epochs as f64;
        let t = epoch as f64;
        if len <= 0.0 || t >= len {
            self.end
        } else {
            self.start + (self.end - self.start) * t / len
        }
    }
}

/// Region weights. The effective weights at epoch `t` are
/// `alpha * ramp(t)` and `beta * ramp(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub ramp: Ramp,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            ramp: Ramp {
                start: 0.1,
                end: 1.0,
                fraction: 0.5,
            },
        }
    }
}

impl LossConfig {
    /// Fixed weights, no ramp.
    pub fn constant(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ramp: Ramp {
                start: 1.0,
                end: 1.0,
                fraction: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.ramp;
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidParam("alpha and beta must be >= 0".into()));
        }
        if !(r.start <= r.end) || !(r.fraction > 0.0 && r.fraction <= 1.0) {
            return Err(Error::InvalidParam(format!("invalid ramp {r:?}")));
        }
        Ok(())
    }

    /// `(alpha, beta)` in effect at `epoch` of `epochs`.
    pub fn weights_at(&self, epoch: usize, epochs: usize) -> (f64, f64) {
        let s = self.ramp.at(epoch, epochs);
        (self.alpha * s, self.beta * s)
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn region_mean(values: &[f64], idx: &[usize], f: impl Fn(f64) -> f64) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&i| f(clamp_prob(values[i]))).sum::<f64>() / idx.len() as f64
}

fn check_partition(n: usize, part: &RegionPartition) -> Result<()> {
    if part.recist_idx.is_empty() {
        return Err(Error::Empty("RECIST region"));
    }
    let max = part
        .recist_idx
        .iter()
        .chain(&part.fg_idx)
        .chain(&part.bg_idx)
        .max()
        .copied()
        .unwrap_or(0);
    if max >= n {
        return Err(Error::DimMismatch(format!(
            "region index {max} outside a {n}-pixel map"
        )));
    }
    Ok(())
}

/// Region-weighted loss with explicit weights.
pub fn loss_with_weights(
    yhat: &ProbabilityMap,
    part: &RegionPartition,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    check_partition(yhat.values.len(), part)?;
    if part.fg_idx.is_empty() {
        log::warn!("empty foreground region: its loss term is zero");
    }
    if part.bg_idx.is_empty() {
        log::warn!("empty background region: its loss term is zero");
    }
    let v = &yhat.values;
    Ok(region_mean(v, &part.recist_idx, |p| -p.ln())
        + alpha * region_mean(v, &part.fg_idx, |p| -p.ln())
        + beta * region_mean(v, &part.bg_idx, |p| -(1.0 - p).ln()))
}

/// Region-weighted loss at `epoch` of `epochs` under `cfg`'s ramp.
pub fn loss(
    yhat: &ProbabilityMap,
    part: &RegionPartition,
    cfg: &LossConfig,
    epoch: usize,
    epochs: usize,
) -> Result<f64> {
    let (alpha, beta) = cfg.weights_at(epoch, epochs);
    loss_with_weights(yhat, part, alpha, beta)
}

/// `dL/dp_i` for every pixel. Zero outside the three regions and where the
/// clamp is active.
pub fn loss_gradient(
    yhat: &ProbabilityMap,
    part: &RegionPartition,
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    check_partition(yhat.values.len(), part)?;
    let v = &yhat.values;
    let mut g = vec![0.0; v.len()];
    let active = |p: f64| (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
    let mut fill = |idx: &[usize], weight: f64, fg: bool| {
        if idx.is_empty() {
            return;
        }
        let scale = weight / idx.len() as f64;
        for &i in idx {
            let p = v[i];
            if active(p) {
                g[i] = if fg { -scale / p } else { scale / (1.0 - p) };
            }
        }
    };
    fill(&part.recist_idx, 1.0, true);
    fill(&part.fg_idx, alpha, true);
    fill(&part.bg_idx, beta, false);
    Ok(g)
}

/// `dL/dz_i` with respect to the logits `z` of `p = sigmoid(z)`, written to
/// avoid dividing by saturated probabilities.
fn logit_gradient(p: &[f64], part: &RegionPartition, alpha: f64, beta: f64, g: &mut [f64]) {
    g.iter_mut().for_each(|x| *x = 0.0);
    let active = |p: f64| (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
    let mut fill = |idx: &[usize], weight: f64, fg: bool| {
        if idx.is_empty() {
            return;
        }
        let scale = weight / idx.len() as f64;
        for &i in idx {
            if active(p[i]) {
                g[i] = if fg { -scale * (1.0 - p[i]) } else { scale * p[i] };
            }
        }
    };
    fill(&part.recist_idx, 1.0, true);
    fill(&part.fg_idx, alpha, true);
    fill(&part.bg_idx, beta, false);
}

fn loss_raw(p: &[f64], part: &RegionPartition, alpha: f64, beta: f64) -> f64 {
    region_mean(p, &part.recist_idx, |q| -q.ln())
        + alpha * region_mean(p, &part.fg_idx, |q| -q.ln())
        + beta * region_mean(p, &part.bg_idx, |q| -(1.0 - q).ln())
}

/// Summed-area table with a zero row and column prepended.
fn integral(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn box_sum(s: &[f64], w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let ww = w + 1;
    s[y1 * ww + x1] - s[y0 * ww + x1] - s[y1 * ww + x0] + s[y0 * ww + x0]
}

/// Per-pixel features before standardization, row-major, `N_FEATURES` per
/// pixel: intensity, box mean and box standard deviation for every radius
/// in [`BOX_RADII`] (windows clipped to the image), gradient magnitude
/// (central differences, clamped at the border) and the `(x, y)` offset from
/// the ROI centre divided by half the ROI size.
pub fn raw_features(roi: &RoiImage) -> Vec<f64> {
    let (w, h) = (roi.width, roi.height);
    let px = &roi.pixels;
    let sq: Vec<f64> = px.iter().map(|v| v * v).collect();
    let s1 = integral(px, w, h);
    let s2 = integral(&sq, w, h);
    let mut f = vec![0.0; w * h * N_FEATURES];
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (hx, hy) = ((w as f64 / 2.0).max(0.5), (h as f64 / 2.0).max(0.5));
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let out = &mut f[i * N_FEATURES..(i + 1) * N_FEATURES];
            out[0] = px[i];
            for (k, &r) in BOX_RADII.iter().enumerate() {
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
                let n = ((x1 - x0) * (y1 - y0)) as f64;
                let mean = box_sum(&s1, w, x0, y0, x1, y1) / n;
                let var = (box_sum(&s2, w, x0, y0, x1, y1) / n - mean * mean).max(0.0);
                out[1 + k] = mean;
                out[1 + BOX_RADII.len() + k] = if var < 1e-14 { 0.0 } else { var.sqrt() };
            }
            let at = |xx: usize, yy: usize| px[yy * w + xx];
            let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            out[N_FEATURES - 3] = (gx * gx + gy * gy).sqrt();
            out[N_FEATURES - 2] = (x as f64 - cx) / hx;
            out[N_FEATURES - 1] = (y as f64 - cy) / hy;
        }
    }
    f
}

/// [`raw_features`] with every feature standardized to zero mean and unit
/// variance over the ROI. Constant features become 0.
pub fn extract_features(roi: &RoiImage) -> Vec<f64> {
    let mut f = raw_features(roi);
    let n = roi.len() as f64;
    for k in 0..N_FEATURES {
        let col = f.iter().skip(k).step_by(N_FEATURES);
        let mean = col.clone().sum::<f64>() / n;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        for v in f.iter_mut().skip(k).step_by(N_FEATURES) {
            *v = if sd < 1e-9 { 0.0 } else { (*v - mean) / sd };
        }
    }
    f
}

/// Anything that maps an ROI to per-pixel foreground probabilities.
pub trait Predictor: Send + Sync {
    fn predict(&self, roi: &RoiImage) -> ProbabilityMap;
}

/// Feature layout a model was trained with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    pub radii: Vec<usize>,
    pub n_features: usize,
    pub hidden: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            radii: BOX_RADII.to_vec(),
            n_features: N_FEATURES,
            hidden: HIDDEN_UNITS,
        }
    }
}

impl FeatureSpec {
    pub fn n_params(&self) -> usize {
        self.hidden * self.n_features + 2 * self.hidden + 1
    }
}

/// The built-in predictor: features -> tanh hidden layer -> logistic output.
///
/// Parameter layout: hidden weights (`hidden x n_features`, row-major),
/// hidden biases, output weights, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerModel {
    pub spec: FeatureSpec,
    pub params: Vec<f64>,
}

impl LearnerModel {
    /// Glorot-uniform initialization.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let spec = FeatureSpec::default();
        let (nf, nh) = (spec.n_features, spec.hidden);
        let mut params = vec![0.0; spec.n_params()];
        let a1 = (6.0 / (nf + nh) as f64).sqrt();
        for p in &mut params[..nh * nf] {
            *p = rng.random_range(-a1..a1);
        }
        let a2 = (6.0 / (nh + 1) as f64).sqrt();
        for p in &mut params[nh * nf + nh..nh * nf + 2 * nh] {
            *p = rng.random_range(-a2..a2);
        }
        Self { spec, params }
    }

    pub fn from_params(spec: FeatureSpec, params: Vec<f64>) -> Result<Self> {
        if spec != FeatureSpec::default() {
            return Err(Error::Model(format!("unsupported feature spec {spec:?}")));
        }
        if params.len() != spec.n_params() {
            return Err(Error::Model(format!(
                "{} parameters, expected {}",
                params.len(),
                spec.n_params()
            )));
        }
        Ok(Self { spec, params })
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], f64) {
        let (nf, nh) = (self.spec.n_features, self.spec.hidden);
        let p = &self.params;
        (
            &p[..nh * nf],
            &p[nh * nf..nh * nf + nh],
            &p[nh * nf + nh..nh * nf + 2 * nh],
            p[nh * nf + 2 * nh],
        )
    }

    /// Output probability for every pixel plus the hidden activations.
    fn forward(&self, features: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nf, nh) = (self.spec.n_features, self.spec.hidden);
        let (w1, b1, w2, b2) = self.split();
        let n = features.len() / nf;
        let mut hidden = vec![0.0; n * nh];
        let mut out = vec![0.0; n];
        for i in 0..n {
            let x = &features[i * nf..(i + 1) * nf];
            let hrow = &mut hidden[i * nh..(i + 1) * nh];
            let mut z = b2;
            for j in 0..nh {
                let wj = &w1[j * nf..(j + 1) * nf];
                let a: f64 = b1[j] + wj.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                let t = a.tanh();
                hrow[j] = t;
                z += w2[j] * t;
            }
            out[i] = sigmoid(z);
        }
        (out, hidden)
    }

    /// Probabilities for precomputed standardized features.
    pub fn predict_features(&self, features: &[f64]) -> Vec<f64> {
        self.forward(features).0
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        features: &[f64],
        part: &RegionPartition,
        alpha: f64,
        beta: f64,
    ) -> (f64, Vec<f64>) {
        let (nf, nh) = (self.spec.n_features, self.spec.hidden);
        let (out, hidden) = self.forward(features);
        let l = loss_raw(&out, part, alpha, beta);
        let mut dz = vec![0.0; out.len()];
        logit_gradient(&out, part, alpha, beta, &mut dz);
        let (_, _, w2, _) = self.split();
        let mut grad = vec![0.0; self.params.len()];
        let (gw1, rest) = grad.split_at_mut(nh * nf);
        let (gb1, rest) = rest.split_at_mut(nh);
        let (gw2, gb2) = rest.split_at_mut(nh);
        for (i, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb2[0] += d;
            let x = &features[i * nf..(i + 1) * nf];
            let hrow = &hidden[i * nh..(i + 1) * nh];
            for j in 0..nh {
                gw2[j] += d * hrow[j];
                let da = d * w2[j] * (1.0 - hrow[j] * hrow[j]);
                gb1[j] += da;
                let g = &mut gw1[j * nf..(j + 1) * nf];
                for (gk, xk) in g.iter_mut().zip(x) {
                    *gk += da * xk;
                }
            }
        }
        (l, grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.params.len());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.spec.n_features as u32).to_le_bytes());
        buf.extend_from_slice(&(self.spec.hidden as u32).to_le_bytes());
        buf.extend_from_slice(&(self.spec.radii.len() as u32).to_le_bytes());
        for &r in &self.spec.radii {
            buf.extend_from_slice(&(r as u32).to_le_bytes());
        }
        buf.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |why: &str| Error::Model(format!("{}: {why}", path.display()));
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4).ok_or_else(|| bad("truncated"))? != MODEL_MAGIC {
            return Err(bad("not a model file"));
        }
        let mut next_u32 = || cur.u32().ok_or_else(|| bad("truncated"));
        if next_u32()? != MODEL_VERSION {
            return Err(bad("unsupported version"));
        }
        let n_features = next_u32()? as usize;
        let hidden = next_u32()? as usize;
        let n_radii = next_u32()? as usize;
        if n_radii > 64 {
            return Err(bad("corrupt header"));
        }
        let mut radii = Vec::with_capacity(n_radii);
        for _ in 0..n_radii {
            radii.push(next_u32()? as usize);
        }
        let n_params = cur.u64().ok_or_else(|| bad("truncated"))? as usize;
        let spec = FeatureSpec {
            radii,
            n_features,
            hidden,
        };
        if spec != FeatureSpec::default() || n_params != spec.n_params() {
            return Err(bad("feature spec does not match this build"));
        }
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            params.push(f64::from_bits(cur.u64().ok_or_else(|| bad("truncated"))?));
        }
        Self::from_params(spec, params)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

impl Predictor for LearnerModel {
    fn predict(&self, roi: &RoiImage) -> ProbabilityMap {
        predict(self, roi)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict(m: &LearnerModel, roi: &RoiImage) -> ProbabilityMap {
    ProbabilityMap {
        width: roi.width,
        height: roi.height,
        values: m.predict_features(&extract_features(roi)),
    }
}

/// One training example: an ROI with its loss regions.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub roi: RoiImage,
    pub part: RegionPartition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Pixels per gradient step. Each ROI's pixels are shuffled and split
    /// into batches; a batch's loss uses region means over its own pixels.
    pub batch_pixels: usize,
    /// Epochs without relative improvement of at least `plateau_tol` before
    /// the learning rate is halved (only once the ramp has finished).
    pub patience: usize,
    pub plateau_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 40,
            learning_rate: 1e-2,
            batch_pixels: 16,
            patience: 3,
            plateau_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean per-ROI loss with the final weights (`alpha`, `beta` at the end
    /// of the ramp) before the first and after the last epoch.
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Mean per-ROI loss under that epoch's weights after each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_learning_rate: f64,
}

struct Prepared {
    features: Vec<f64>,
    part: RegionPartition,
    /// Per-pixel region: 0 none, 1 RECIST, 2 foreground, 3 background.
    region: Vec<u8>,
}

impl Prepared {
    fn new(roi: &RoiImage, part: &RegionPartition) -> Self {
        let mut region = vec![0u8; roi.len()];
        for (idx, code) in [(&part.recist_idx, 1), (&part.fg_idx, 2), (&part.bg_idx, 3)] {
            for &i in idx {
                region[i] = code;
            }
        }
        Self {
            features: extract_features(roi),
            part: part.clone(),
            region,
        }
    }

    /// Features and partition of a subset of pixels, re-indexed.
    fn batch(&self, pixels: &[usize]) -> (Vec<f64>, RegionPartition) {
        let mut feats = Vec::with_capacity(pixels.len() * N_FEATURES);
        let mut part = RegionPartition::default();
        for (k, &i) in pixels.iter().enumerate() {
            feats.extend_from_slice(&self.features[i * N_FEATURES..(i + 1) * N_FEATURES]);
            match self.region[i] {
                1 => part.recist_idx.push(k),
                2 => part.fg_idx.push(k),
                3 => part.bg_idx.push(k),
                _ => {}
            }
        }
        (feats, part)
    }
}

fn mean_loss(m: &LearnerModel, data: &[Prepared], alpha: f64, beta: f64) -> f64 {
    data.iter()
        .map(|d| loss_raw(&m.predict_features(&d.features), &d.part, alpha, beta))
        .sum::<f64>()
        / data.len() as f64
}

/// Trains from scratch.
pub fn train<R: Rng + ?Sized>(
    data: &[TrainSample],
    cfg: &LossConfig,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<(LearnerModel, TrainReport)> {
    let init = LearnerModel::init(rng);
    train_from(init, data, cfg, opts, rng)
}

/// Mini-batch SGD on the region-weighted loss starting from `init`.
pub fn train_from<R: Rng + ?Sized>(
    init: LearnerModel,
    data: &[TrainSample],
    cfg: &LossConfig,
    opts: &TrainOptions,
    rng: &mut R,
) -> Result<(LearnerModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    cfg.validate()?;
    if opts.epochs == 0 || opts.batch_pixels == 0 || !(opts.learning_rate > 0.0) {
        return Err(Error::InvalidParam(format!("invalid training options {opts:?}")));
    }
    let prepared: Vec<Prepared> = data
        .iter()
        .map(|s| {
            check_partition(s.roi.len(), &s.part)?;
            Ok(Prepared::new(&s.roi, &s.part))
        })
        .collect::<Result<_>>()?;

    let (final_alpha, final_beta) = cfg.weights_at(opts.epochs, opts.epochs);
    let mut model = init;
    let initial_loss = mean_loss(&model, &prepared, final_alpha, final_beta);
    let ramp_end = (cfg.ramp.fraction * opts.epochs as f64).ceil() as usize;
    let mut lr = opts.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 0..opts.epochs {
        let (alpha, beta) = cfg.weights_at(epoch, opts.epochs);
        order.shuffle(rng);
        for &i in &order {
            let d = &prepared[i];
            let mut pixels: Vec<usize> = (0..d.region.len()).collect();
            pixels.shuffle(rng);
            for batch in pixels.chunks(opts.batch_pixels) {
                let (feats, part) = d.batch(batch);
                let (_, g) = model.loss_and_gradient(&feats, &part, alpha, beta);
                model
                    .params
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(p, g)| *p -= lr * g);
            }
        }
        let epoch_loss = mean_loss(&model, &prepared, alpha, beta);
        epoch_losses.push(epoch_loss);
        log::debug!("epoch {epoch}: loss {epoch_loss:.5} (alpha {alpha:.3}, lr {lr:.2e})");
        if epoch + 1 >= ramp_end {
            if epoch_loss < best * (1.0 - opts.plateau_tol) {
                best = epoch_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= opts.patience {
                    lr /= 2.0;
                    stale = 0;
                    log::debug!("plateau: learning rate halved to {lr:.2e}");
                }
            }
        }
    }
    let final_loss = mean_loss(&model, &prepared, final_alpha, final_beta);
    Ok((
        model,
        TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
            final_learning_rate: lr,
        },
    ))
}

/// Post-processes a probability map: seeds from the map and the (possibly
/// propagated) diameters `axes`, then GrabCut.
pub fn refine_with_grabcut(
    roi: &RoiImage,
    prob: &ProbabilityMap,
    axes: &CrossAxes,
    p: &GrabCutParams,
) -> Result<SegmentationMask> {
    let seeds = seeds_off_slice(roi, prob, axes)?;
    grabcut(roi, &seeds, p)
}
