//! Shared setup for the benchmarks and the band-count study.

use projspec::forward::{ObservationSet, SimulationOptions};
use projspec::protocol::BandProtocol;
use projspec::scene::{build_scene, SceneOptions, SyntheticScene};
use projspec::solver::EstimationConfig;

/// Default synthetic scene captured under `protocol` with relative noise `noise`.
pub fn captured(protocol: BandProtocol, noise: f64, seed: u64) -> (SyntheticScene, ObservationSet, EstimationConfig) {
    let scene = build_scene(&SceneOptions::default()).expect("default scene builds");
    let opts = SimulationOptions {
        noise_sigma: noise,
        seed,
        gain_distortion: None,
    };
    let (obs, _) = scene.capture(protocol, 550.0, &opts).expect("capture");
    let config = EstimationConfig {
        anchor_illumination: Some(protocol.anchor_illumination()),
        ..EstimationConfig::default()
    };
    (scene, obs, config)
}
