//! Iterative GrabCut on a single-channel ROI.
//!
//! The energy is `U + V`: `U` sums `-ln p(z | GMM of the pixel's label)` over
//! all pixels, `V` is the contrast-sensitive Potts term
//! `gamma * sum [l_m != l_n] exp(-beta (z_m - z_n)^2) / dist(m, n)`.
//! Each iteration refits both mixtures with warm-started EM on the current
//! labeling and then solves the labeling exactly by min-cut, so the recorded
//! energy never increases.

use crate::error::{Error, Result};
use crate::gmm::{fit_em, refine_em, GmmModel, EM_MAX_ITERS};
use crate::imaging::RoiImage;
use crate::maxflow::{max_flow, FlowNetwork, Side, HARD};
use crate::seedgen::{SeedLabel, SeedMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrabCutParams {
    pub gamma: f64,
    pub k: usize,
    pub max_iters: usize,
    pub connectivity: Connectivity,
    pub energy_tol: f64,
}

impl Default for GrabCutParams {
    fn default() -> Self {
        Self {
            gamma: 50.0,
            k: 5,
            max_iters: 5,
            connectivity: Connectivity::Eight,
            energy_tol: 1e-3,
        }
    }
}

impl GrabCutParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParam(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.max_iters == 0 || self.k == 0 {
            return Err(Error::InvalidParam("max_iters and k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Binary label map over an ROI (1 = lesion).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} labels for {width}x{height}",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    pub fn as_bools(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != 0).collect()
    }
}

/// Neighbour offsets `(dx, dy)` covering each unordered pair once.
fn neighbour_offsets(c: Connectivity) -> &'static [(i64, i64)] {
    match c {
        Connectivity::Four => &[(1, 0), (0, 1)],
        Connectivity::Eight => &[(1, 0), (0, 1), (1, 1), (-1, 1)],
    }
}

fn for_each_pair(
    width: usize,
    height: usize,
    c: Connectivity,
    mut f: impl FnMut(usize, usize, f64),
) {
    for &(dx, dy) in neighbour_offsets(c) {
        let dist = ((dx * dx + dy * dy) as f64).sqrt();
        for y in 0..height as i64 {
            let ny = y + dy;
            if ny >= height as i64 {
                continue;
            }
            for x in 0..width as i64 {
                let nx = x + dx;
                if nx < 0 || nx >= width as i64 {
                    continue;
                }
                f(
                    (y * width as i64 + x) as usize,
                    (ny * width as i64 + nx) as usize,
                    dist,
                );
            }
        }
    }
}

/// `1 / (2 <(z_m - z_n)^2>)` over all neighbour pairs; 1 for flat images.
pub fn contrast_beta(img: &RoiImage, c: Connectivity) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for_each_pair(img.width, img.height, c, |a, b, _| {
        let d = img.pixels[a] - img.pixels[b];
        sum += d * d;
        count += 1;
    });
    if count == 0 || sum == 0.0 {
        1.0
    } else {
        count as f64 / (2.0 * sum)
    }
}

/// Total GrabCut energy of `labeling` under the given appearance models.
pub fn energy(
    img: &RoiImage,
    labeling: &SegmentationMask,
    fg: &GmmModel,
    bg: &GmmModel,
    p: &GrabCutParams,
) -> f64 {
    let unary: f64 = img
        .pixels
        .iter()
        .zip(&labeling.labels)
        .map(|(&z, &l)| {
            if l != 0 {
                -fg.log_likelihood(z)
            } else {
                -bg.log_likelihood(z)
            }
        })
        .sum();
    let beta = contrast_beta(img, p.connectivity);
    let mut pairwise = 0.0;
    for_each_pair(img.width, img.height, p.connectivity, |a, b, dist| {
        if labeling.labels[a] != labeling.labels[b] {
            let d = img.pixels[a] - img.pixels[b];
            pairwise += p.gamma * (-beta * d * d).exp() / dist;
        }
    });
    unary + pairwise
}

/// Result of a GrabCut run: the final mask and the energy after every
/// min-cut.
#[derive(Debug, Clone)]
pub struct GrabCutOutcome {
    pub mask: SegmentationMask,
    pub energies: Vec<f64>,
}

fn class_samples(img: &RoiImage, labels: &[u8], class: u8) -> Vec<f64> {
    img.pixels
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == class)
        .map(|(&z, _)| z)
        .collect()
}

fn initial_fit(samples: &[f64], k: usize) -> Result<GmmModel> {
    Ok(fit_em(samples, k.min(samples.len()))?.model)
}

fn solve_labels(
    img: &RoiImage,
    seeds: &SeedMask,
    fg: &GmmModel,
    bg: &GmmModel,
    p: &GrabCutParams,
    beta: f64,
) -> Result<Vec<u8>> {
    let n = img.len();
    let mut g = FlowNetwork::new(n);
    for i in 0..n {
        let (to_source, to_sink) = match seeds.labels[i] {
            SeedLabel::Fg => (HARD, 0.0),
            SeedLabel::Bg => (0.0, HARD),
            _ => {
                let z = img.pixels[i];
                let cost_fg = -fg.log_likelihood(z);
                let cost_bg = -bg.log_likelihood(z);
                let m = cost_fg.min(cost_bg);
                // a source-side (foreground) node cuts its sink arc
                (cost_bg - m, cost_fg - m)
            }
        };
        g.set_terminal(i, to_source, to_sink)?;
    }
    let mut result = Ok(());
    for_each_pair(img.width, img.height, p.connectivity, |a, b, dist| {
        let d = img.pixels[a] - img.pixels[b];
        let w = p.gamma * (-beta * d * d).exp() / dist;
        if result.is_ok() {
            result = g.add_edge(a, b, w, w);
        }
    });
    result?;
    let cut = max_flow(&g);
    Ok(cut
        .partition
        .iter()
        .zip(&seeds.labels)
        .map(|(side, seed)| match seed {
            SeedLabel::Fg => 1,
            SeedLabel::Bg => 0,
            _ => u8::from(*side == Side::Source),
        })
        .collect())
}

/// Runs GrabCut and returns the mask together with the energy trace.
pub fn grabcut_with_trace(img: &RoiImage, seeds: &SeedMask, p: &GrabCutParams) -> Result<GrabCutOutcome> {
    p.validate()?;
    if seeds.width != img.width || seeds.height != img.height {
        return Err(Error::DimMismatch(format!(
            "seeds {}x{} vs image {}x{}",
            seeds.width, seeds.height, img.width, img.height
        )));
    }
    if !seeds.labels.contains(&SeedLabel::Fg) {
        return Err(Error::MissingSeeds("FG"));
    }
    if !seeds.labels.contains(&SeedLabel::Bg) {
        return Err(Error::MissingSeeds("BG"));
    }

    let mut labels: Vec<u8> = seeds
        .labels
        .iter()
        .map(|l| u8::from(matches!(l, SeedLabel::Fg | SeedLabel::Pfg)))
        .collect();
    let beta = contrast_beta(img, p.connectivity);
    let mut fg = initial_fit(&class_samples(img, &labels, 1), p.k)?;
    let mut bg = initial_fit(&class_samples(img, &labels, 0), p.k)?;
    let mut energies: Vec<f64> = Vec::with_capacity(p.max_iters);

    for iter in 0..p.max_iters {
        if iter > 0 {
            fg = refine_em(fg, &class_samples(img, &labels, 1), EM_MAX_ITERS).model;
            bg = refine_em(bg, &class_samples(img, &labels, 0), EM_MAX_ITERS).model;
        }
        labels = solve_labels(img, seeds, &fg, &bg, p, beta)?;
        let mask = SegmentationMask {
            width: img.width,
            height: img.height,
            labels: labels.clone(),
        };
        let e = energy(img, &mask, &fg, &bg, p);
        let converged = energies
            .last()
            .is_some_and(|&prev| prev - e < p.energy_tol * prev.abs());
        energies.push(e);
        if converged {
            break;
        }
    }
    Ok(GrabCutOutcome {
        mask: SegmentationMask {
            width: img.width,
            height: img.height,
            labels,
        },
        energies,
    })
}

/// GrabCut segmentation constrained by `seeds`.
pub fn grabcut(img: &RoiImage, seeds: &SeedMask, p: &GrabCutParams) -> Result<SegmentationMask> {
    Ok(grabcut_with_trace(img, seeds, p)?.mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(width: usize, height: usize, pixels: Vec<f64>) -> RoiImage {
        RoiImage::from_pixels(width, height, pixels).unwrap()
    }

    #[test]
    fn uniform_labeling_has_no_pairwise_cost() {
        let img = image(3, 3, vec![0.4; 9]);
        let m = GmmModel::new(vec![1.0], vec![0.4], vec![0.01]).unwrap();
        let ones = SegmentationMask::new(3, 3, vec![1; 9]).unwrap();
        let p = GrabCutParams::default();
        let e = energy(&img, &ones, &m, &m, &p);
        assert!((e - 9.0 * -m.log_likelihood(0.4)).abs() < 1e-12);
    }

    #[test]
    fn equal_neighbours_with_different_labels_cost_gamma() {
        let img = image(2, 1, vec![0.5, 0.5]);
        let m = GmmModel::new(vec![1.0], vec![0.5], vec![1.0]).unwrap();
        let p = GrabCutParams::default();
        let split = SegmentationMask::new(2, 1, vec![1, 0]).unwrap();
        let same = SegmentationMask::new(2, 1, vec![1, 1]).unwrap();
        let diff = energy(&img, &split, &m, &m, &p) - energy(&img, &same, &m, &m, &p);
        assert!((diff - 50.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_energy_matches_hand_sum() {
        // pixels  0.2 0.8
        //         0.3 0.7   labels 0 1 / 0 1
        let img = image(2, 2, vec![0.2, 0.8, 0.3, 0.7]);
        let fg = GmmModel::new(vec![1.0], vec![0.75], vec![0.01]).unwrap();
        let bg = GmmModel::new(vec![0.5, 0.5], vec![0.2, 0.3], vec![0.02, 0.02]).unwrap();
        let labels = SegmentationMask::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let p = GrabCutParams::default();

        let gauss = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
        use std::f64::consts::PI;
        let u = -gauss(0.8, 0.75, 0.01).ln() - gauss(0.7, 0.75, 0.01).ln()
            - (0.5 * gauss(0.2, 0.2, 0.02) + 0.5 * gauss(0.2, 0.3, 0.02)).ln()
            - (0.5 * gauss(0.3, 0.2, 0.02) + 0.5 * gauss(0.3, 0.3, 0.02)).ln();
        // 8-neighbour pairs: (0,1) (2,3) horizontal; (0,2) (1,3) vertical;
        // (0,3) and (1,2) diagonal
        let sq = [0.6f64.powi(2), 0.4f64.powi(2), 0.01, 0.01, 0.5f64.powi(2), 0.5f64.powi(2)];
        let beta = 6.0 / (2.0 * sq.iter().sum::<f64>());
        let r2 = 2f64.sqrt();
        // label changes: (0,1), (2,3), (0,3), (1,2)
        let v = 50.0
            * ((-beta * sq[0]).exp() + (-beta * sq[1]).exp() + (-beta * sq[4]).exp() / r2 + (-beta * sq[5]).exp() / r2);
        let e = energy(&img, &labels, &fg, &bg, &p);
        assert!((e - (u + v)).abs() < 1e-9, "{e} vs {}", u + v);
    }

    fn seeds(width: usize, height: usize, labels: Vec<SeedLabel>) -> SeedMask {
        SeedMask {
            width,
            height,
            labels,
        }
    }

    #[test]
    fn hard_constraints_dominate() {
        let (w, h) = (8, 6);
        let mut labels = vec![SeedLabel::Fg; w * h];
        for y in 0..h {
            for x in 0..w {
                if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                    labels[y * w + x] = SeedLabel::Bg;
                }
            }
        }
        let pixels: Vec<f64> = (0..w * h).map(|i| (i % 7) as f64 / 7.0).collect();
        let img = image(w, h, pixels);
        let out = grabcut(&img, &seeds(w, h, labels.clone()), &GrabCutParams::default()).unwrap();
        for (o, s) in out.labels.iter().zip(&labels) {
            assert_eq!(*o, u8::from(*s == SeedLabel::Fg));
        }
    }

    #[test]
    fn missing_seeds_are_rejected() {
        let img = image(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        let only_bg = seeds(2, 2, vec![SeedLabel::Bg, SeedLabel::Pfg, SeedLabel::Pbg, SeedLabel::Unknown]);
        assert!(matches!(
            grabcut(&img, &only_bg, &GrabCutParams::default()),
            Err(Error::MissingSeeds("FG"))
        ));
        let only_fg = seeds(2, 2, vec![SeedLabel::Fg, SeedLabel::Pfg, SeedLabel::Pbg, SeedLabel::Pfg]);
        assert!(matches!(
            grabcut(&img, &only_fg, &GrabCutParams::default()),
            Err(Error::MissingSeeds("BG"))
        ));
    }

    #[test]
    fn separates_two_intensity_blocks() {
        let (w, h) = (20, 20);
        let mut pixels = vec![0.3; w * h];
        let mut truth = vec![0u8; w * h];
        for y in 6..14 {
            for x in 6..14 {
                pixels[y * w + x] = 0.7;
                truth[y * w + x] = 1;
            }
        }
        // small deterministic texture
        for (i, p) in pixels.iter_mut().enumerate() {
            *p += ((i * 37 % 11) as f64 - 5.0) * 0.004;
        }
        let mut labels = vec![SeedLabel::Pbg; w * h];
        for y in 0..h {
            for x in 0..w {
                if !(3..17).contains(&x) || !(3..17).contains(&y) {
                    labels[y * w + x] = SeedLabel::Bg;
                } else if (9..11).contains(&x) && (9..11).contains(&y) {
                    labels[y * w + x] = SeedLabel::Fg;
                } else if (5..15).contains(&x) && (5..15).contains(&y) {
                    labels[y * w + x] = SeedLabel::Pfg;
                }
            }
        }
        let img = image(w, h, pixels);
        let out = grabcut_with_trace(&img, &seeds(w, h, labels), &GrabCutParams::default()).unwrap();
        assert_eq!(out.mask.labels, truth);
        for e in out.energies.windows(2) {
            assert!(e[1] <= e[0] + 1e-9 * e[0].abs());
        }
    }
}
