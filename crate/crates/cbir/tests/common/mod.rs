#![allow(dead_code)]

use cbir_core::classifier::{init_network, train, Features, TrainConfig, DEFAULT_HIDDEN};
use cbir_core::imagecore::{encode_ppm, RasterImage};
use cbir_core::shape::shape_descriptor;
use cbir_core::store::Store;
use cbir_core::synth::{generate, ShapeKind, DEFAULT_SIDE};
use cbir_core::Category;

pub const TRAIN_SEED: u64 = 1;

/// Shape descriptors of a synthetic set with its true categories.
pub fn labeled_descriptors(kinds: &[ShapeKind], per_kind: usize, seed: u64) -> Vec<(Features, Category)> {
    generate(kinds, per_kind, DEFAULT_SIDE, seed)
        .iter()
        .map(|s| (shape_descriptor(&s.image).expect("synthetic shapes are never blank").0, s.kind.category()))
        .collect()
}

/// Trains the nine-category classifier on 20 synthetic images per family
/// and stores the weights.
pub fn install_classifier(store: &Store) {
    let samples = labeled_descriptors(&ShapeKind::ALL, 20, TRAIN_SEED);
    let out = train(&init_network(TRAIN_SEED, DEFAULT_HIDDEN), &samples, &TrainConfig::default()).unwrap();
    store.put_weights(&out.weights).unwrap();
}

pub fn ppm(img: &RasterImage) -> Vec<u8> {
    encode_ppm(img)
}

pub fn blank_ppm(side: usize) -> Vec<u8> {
    encode_ppm(&RasterImage::filled(side, side, [128, 128, 128]).unwrap())
}
