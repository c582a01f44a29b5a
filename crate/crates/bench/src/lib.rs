//! Fixtures shared by the benchmarks.

use corrprune_core::nn::{init_params, NetConfig};
use corrprune_core::pipeline::Network;
use corrprune_core::synthgen::{generate_pair, LabeledPair, SceneConfig};

pub fn scene(n_points: usize, outlier_ratio: f64, seed: u64) -> LabeledPair {
    generate_pair(&SceneConfig {
        n_points,
        outlier_ratio,
        noise_sigma: 1e-3,
        seed,
        ..SceneConfig::default()
    })
    .expect("valid scene")
}

/// Full-depth network at width `channels` with a small backbone.
pub fn network(channels: usize) -> Network {
    let cfg = NetConfig {
        channels,
        backbone_channels: 8,
        image_height: 40,
        image_width: 40,
        ..NetConfig::default()
    };
    let store = init_params(&cfg, 0).expect("valid config");
    Network::new(&cfg, &store).expect("matching store")
}
