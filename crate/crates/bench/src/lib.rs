//! Benchmark fixtures shared by the criterion targets.

use pep_core::synth::{gen_scene, Scene, SceneConfig};

/// A default synthetic scene with `n` points.
pub fn scene(n: usize, seed: u64) -> Scene {
    gen_scene(&SceneConfig {
        n_points: n,
        ..SceneConfig::with_seed(seed)
    })
    .expect("default scenes generate")
}
