//! Prints render throughput at the global and tracking resolutions.

use nalgebra::Vector3;
use nudgeloc::geometry::Pose;
use nudgeloc::image::CameraIntrinsics;
use nudgeloc::scene::{ArtifactSpec, Renderer, SceneModel};
use std::time::Instant;

fn main() {
    let scene = SceneModel::default();
    let spec = ArtifactSpec::default();
    let renderer = Renderer::new(&scene, Some(&spec));
    for (w, h) in [(80, 64), (120, 102), (160, 136), (800, 680)] {
        let k = CameraIntrinsics::new(w, h, 1.4).unwrap();
        let n = (2_000_000 / (w * h)).max(2);
        let t0 = Instant::now();
        let mut acc = 0.0f32;
        for i in 0..n {
            let p = Pose::from_ypr(
                Vector3::new(0.01 * i as f64 - 1.0, 0.3, 0.9),
                0.1 * i as f64,
                0.0,
                0.0,
            );
            acc += renderer.render(&p, &k).data()[0];
        }
        let dt = t0.elapsed().as_secs_f64();
        println!(
            "{w}x{h}: {:.3} ms/render, {:.1} ns/ray ({acc:.1})",
            1e3 * dt / n as f64,
            1e9 * dt / (n * w * h) as f64
        );
    }
}
