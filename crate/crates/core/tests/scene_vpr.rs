use nalgebra::Vector3;
use nudgeloc::filter::ssim;
use nudgeloc::geometry::Pose;
use nudgeloc::image::CameraIntrinsics;
use nudgeloc::scene::{ArtifactSpec, Renderer, SceneModel};
use nudgeloc::vpr::encode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn k() -> CameraIntrinsics {
    CameraIntrinsics::new(80, 64, 1.4).unwrap()
}

/// A level pose and a horizontal direction such that `pose + d * dir`
/// stays inside the central region for every `d <= reach`.
fn pose_and_direction(rng: &mut ChaCha8Rng, reach: f64) -> (Pose, Vector3<f64>) {
    loop {
        let t = Vector3::new(rng.gen_range(-1.8..1.8), rng.gen_range(-1.3..1.3), rng.gen_range(0.6..1.2));
        let th: f64 = rng.gen_range(-3.1..3.1);
        let dir = Vector3::new(th.cos(), th.sin(), 0.0);
        let end = t + dir * reach;
        if end.x.abs() <= 1.8 && end.y.abs() <= 1.3 {
            let yaw = rng.gen_range(-3.1..3.1);
            return (Pose::from_ypr(t, yaw, 0.0, 0.0), dir);
        }
    }
}

fn shifted(p: &Pose, d: Vector3<f64>) -> Pose {
    Pose::new(p.rotation, p.translation + d)
}

#[test]
fn similarity_falls_with_distance() {
    let scene = SceneModel::default();
    let r = Renderer::new(&scene, None);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut ok = 0;
    for _ in 0..100 {
        let (p, dir) = pose_and_direction(&mut rng, 1.0);
        let base = r.render(&p, &k());
        let near = ssim(&base, &r.render(&shifted(&p, dir * 0.1), &k())).unwrap();
        let far = ssim(&base, &r.render(&shifted(&p, dir), &k())).unwrap();
        ok += (far < near) as usize;
    }
    assert!(ok >= 95, "{ok}/100");
}

#[test]
fn floaters_change_pixels_but_not_descriptors() {
    let scene = SceneModel::default();
    let clean = Renderer::new(&scene, None);
    let dirty = Renderer::new(&scene, Some(&ArtifactSpec::default()));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut changed, mut close, mut total_mad) = (0, 0, 0.0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, _) = pose_and_direction(&mut rng, 0.0);
        let a = clean.render(&p, &k());
        let b = dirty.render(&p, &k());
        let mad = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
            / a.data().len() as f64;
        changed += (mad > 0.0) as usize;
        total_mad += mad;
        let d = encode(&a).unwrap().cosine_distance(&encode(&b).unwrap());
        worst = worst.max(d);
        close += (d < 0.15) as usize;
    }
    // some views miss every floater
    assert!(total_mad > 0.0 && changed >= 80, "{changed}/100 renders changed");
    assert!(close >= 95, "{close}/100 within 0.15, worst {worst:.3}");
}

#[test]
fn descriptors_separate_far_views() {
    let scene = SceneModel::default();
    let r = Renderer::new(&scene, None);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut ok = 0;
    for _ in 0..100 {
        let (p, dir) = pose_and_direction(&mut rng, 2.0);
        let base = encode(&r.render(&p, &k())).unwrap();
        let near = base.cosine_distance(&encode(&r.render(&shifted(&p, dir * 0.1), &k())).unwrap());
        let far = base.cosine_distance(&encode(&r.render(&shifted(&p, dir * 2.0), &k())).unwrap());
        ok += (far > near) as usize;
    }
    assert!(ok >= 90, "{ok}/100");
}
