#![allow(dead_code)]

use wsss::phantom::{generate_suite, Phantom};
use wsss::wsss::{Dataset, Lesion};

pub fn lesion(p: &Phantom) -> Lesion {
    Lesion {
        id: p.id.clone(),
        volume: p.volume.clone(),
        recist: p.recist.clone(),
        gt: Some(p.mask.clone()),
    }
}

pub fn lesions(n: usize, seed: u64, prefix: &str) -> Vec<Lesion> {
    generate_suite(n, seed, prefix).unwrap().iter().map(lesion).collect()
}

/// The 20 training phantoms used by the trend checks.
pub fn training_set() -> Dataset {
    Dataset::new(lesions(20, 42, "train_")).unwrap()
}

/// The 10 held-out test phantoms.
pub fn test_set() -> Vec<Lesion> {
    lesions(10, 43, "test_")
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
