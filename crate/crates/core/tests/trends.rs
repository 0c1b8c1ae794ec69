//! Phantom-scale trends of the trained pipeline. One WSSS-7 run supplies
//! every model: its stage snapshots are WSSS-1, WSSS-3 and WSSS-5.

mod common;

use common::{mean, test_set, training_set};
use wsss::grabcut::GrabCutParams;
use wsss::imaging::MaskVolume;
use wsss::learner::LearnerModel;
use wsss::metrics::dice;
use wsss::wsss::{offset_dice, predict_slab, segment_volume, wsss_train, Lesion, WsssConfig};

const OFFSETS: [i64; 6] = [-4, -3, -2, 2, 3, 4];

fn per_slice(lesions: &[Lesion], m: &LearnerModel, refine: Option<&GrabCutParams>) -> f64 {
    let mut all = Vec::new();
    for l in lesions {
        let pred = predict_slab(m, &l.volume, &l.recist, 4, refine).unwrap();
        let gt = l.gt.as_ref().unwrap();
        all.extend(offset_dice(&pred, gt, &l.recist, &OFFSETS).unwrap().into_iter().map(|(_, d)| d));
    }
    mean(&all)
}

fn volumetric(lesions: &[Lesion], m: &LearnerModel, p: &GrabCutParams, refine: bool) -> f64 {
    let scores: Vec<f64> = lesions
        .iter()
        .map(|l| {
            let v: MaskVolume = segment_volume(m, &l.volume, &l.recist, p, refine).unwrap();
            dice(&v.data, &l.gt.as_ref().unwrap().data).unwrap()
        })
        .collect();
    mean(&scores)
}

#[test]
fn slice_propagation_trends() {
    let cfg = WsssConfig {
        k_slices: 7,
        ..WsssConfig::default()
    };
    let out = wsss_train(&training_set(), &cfg, None).unwrap();
    assert_eq!(out.stage_models.len(), 4);
    assert_eq!(out.stage_models[3], out.model);
    let test = test_set();
    let p = &cfg.grabcut;

    let wsss1 = per_slice(&test, &out.stage_models[0], None);
    let wsss7 = per_slice(&test, &out.model, None);
    assert!(wsss7 >= wsss1 + 0.01, "WSSS-7 {wsss7:.4} vs WSSS-1 {wsss1:.4}");

    let refined = per_slice(&test, &out.model, Some(p));
    assert!(refined >= wsss7 - 0.01, "refined {refined:.4} vs thresholded {wsss7:.4}");

    let on = volumetric(&test, &out.model, p, true);
    let off = volumetric(&test, &out.model, p, false);
    assert!(on >= off - 0.01, "refine on {on:.4} vs off {off:.4}");
    assert!(on >= 0.8, "volumetric {on:.4}");
}
