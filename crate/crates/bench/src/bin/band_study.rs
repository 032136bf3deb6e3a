//! Average reflectance and primary RMSE per band protocol on the default
//! synthetic scene, under several iteration budgets and with and without the
//! extrapolation step.

use projspec::basis::Primary;
use projspec::colorimetry::rmse;
use projspec::forward::SimulationOptions;
use projspec::protocol::BandProtocol;
use projspec::scene::{build_scene, SceneOptions};
use projspec::solver::{joint_estimate, EstimationConfig};

fn main() {
    let scene = build_scene(&SceneOptions::default()).expect("default scene builds");
    println!("protocol,noise,line_search,max_iterations,iterations,converged,reflectance_rmse,red_rmse,green_rmse,blue_rmse");
    for noise in [0.0, 0.01] {
        for protocol in BandProtocol::ALL {
            let opts = SimulationOptions {
                noise_sigma: noise,
                seed: 11,
                gain_distortion: None,
            };
            let (obs, beta) = scene.capture(protocol, 550.0, &opts).expect("capture");
            for line_search in [false, true] {
                for budget in [500, 5_000, 50_000] {
                    let config = EstimationConfig {
                        anchor_illumination: Some(protocol.anchor_illumination()),
                        max_outer_iterations: budget,
                        line_search,
                        ..EstimationConfig::default()
                    };
                    let res = joint_estimate(&obs, &scene.bases, &scene.camera, &config).expect("estimate");
                    let refl = res
                        .reflectances
                        .iter()
                        .zip(&scene.reflectances)
                        .map(|(e, t)| rmse(e, t).expect("same grid"))
                        .sum::<f64>()
                        / scene.n_patches() as f64;
                    let spd = Primary::ALL.map(|p| {
                        let truth = scene.bases.illumination.primary_spd(p, &beta).expect("truth");
                        rmse(&res.primaries[p.index()], &truth).expect("same grid")
                    });
                    println!(
                        "{protocol},{noise},{line_search},{budget},{},{},{refl:.5},{:.5},{:.5},{:.5}",
                        res.iterations_used, res.converged, spd[0], spd[1], spd[2]
                    );
                }
            }
        }
    }
}
