#![allow(dead_code)]

use chartkit::preprocess::{build_features, FeatureSet};
use chartkit::synthgen::{generate_trajectory, synthesize_csi, ArrayGeometry, ImpairmentConfig, Scene, TrajectoryConfig, TrajectoryKind};

/// Small scene: 4x2 single-polarized array, 64 subcarriers, a few scatterers.
pub fn toy_scene() -> Scene {
    let mut scene = Scene {
        array: ArrayGeometry { azimuth_count: 4, zenith_count: 2, polarization_count: 1, spacing_wavelengths: 0.5 },
        subcarrier_count: 64,
        los_gain: vec![[1.0, 0.0]],
        ..Scene::default()
    };
    scene = scene.with_random_scatterers(4, [0.0, 0.0], 30.0, 10.0, 0.3, 5);
    scene
}

/// Random-walk features with `n` rows, 0.1 s apart.
pub fn toy_features(n: usize) -> FeatureSet<f64> {
    let traj = generate_trajectory(&TrajectoryConfig::new(TrajectoryKind::RandomWalk, n as f64 * 0.1, 0.1, 1.0, 3).with_extent(15.0)).unwrap();
    let ds = synthesize_csi::<f64>(&traj, &toy_scene(), &ImpairmentConfig::default(), 4).unwrap();
    build_features(&ds, &[0, 1, 2, 4, 8, 16], 0).unwrap()
}
