use super::HarnessError;
use crate::geometry::{compose, exp_map, Pose};
use crate::filter::noise_twist;
use crate::scene::SceneModel;
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Generator parameters for smooth camera paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryParams {
    pub frames: usize,
    /// Explicit `[x, y, z]` waypoints; random ones are drawn when empty.
    pub waypoints: Vec<[f64; 3]>,
    /// Headings at the waypoints (rad); random when shorter than `waypoints`.
    pub waypoint_yaws: Vec<f64>,
    pub random_waypoints: usize,
    /// Box for random waypoints.
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    /// Largest heading change between consecutive waypoints (deg).
    pub max_turn_deg: f64,
    /// Pitch and roll oscillation amplitude (deg).
    pub tilt_deg: f64,
    pub max_step: f64,
    pub max_yaw_step_deg: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            frames: 100,
            waypoints: Vec::new(),
            waypoint_yaws: Vec::new(),
            random_waypoints: 4,
            region_min: [-1.8, -1.3, 0.6],
            region_max: [1.8, 1.3, 1.2],
            max_turn_deg: 90.0,
            tilt_deg: 3.0,
            max_step: 0.2,
            max_yaw_step_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Largest translation and rotation (rad) between consecutive poses.
    pub fn max_steps(&self) -> (f64, f64) {
        self.poses.windows(2).fold((0.0, 0.0), |(t, r), w| {
            (t.max(w[0].distance_to(&w[1])), r.max(w[0].rotation_angle_to(&w[1])))
        })
    }
}

fn catmull_rom(p: &[Vector3<f64>], s: f64) -> Vector3<f64> {
    let n = p.len();
    let seg = (s.floor() as usize).min(n - 2);
    let u = s - seg as f64;
    let at = |i: isize| p[i.clamp(0, n as isize - 1) as usize];
    let i = seg as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let u2 = u * u;
    let u3 = u2 * u;
    (p1 * 2.0 + (p2 - p0) * u + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * u2 + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * u3) * 0.5
}

/// Smooth waypoint-interpolated path at constant speed along the spline,
/// heading interpolated between waypoint headings, gentle pitch and roll.
pub fn synth_trajectory<R: Rng + ?Sized>(
    params: &TrajectoryParams,
    scene: &SceneModel,
    rng: &mut R,
) -> Result<Trajectory, HarnessError> {
    // random waypoints are redrawn when the path breaks the step limits
    let attempts = if params.waypoints.is_empty() { 50 } else { 1 };
    let mut last = None;
    for _ in 0..attempts {
        match synth_once(params, scene, rng) {
            Err(e @ HarnessError::StepTooLarge { .. }) => last = Some(e),
            r => return r,
        }
    }
    Err(last.unwrap())
}

fn synth_once<R: Rng + ?Sized>(
    params: &TrajectoryParams,
    scene: &SceneModel,
    rng: &mut R,
) -> Result<Trajectory, HarnessError> {
    if params.frames == 0 {
        return Err(HarnessError::Config("trajectory needs at least one frame".into()));
    }
    if params.tilt_deg.abs() > 5.0 {
        return Err(HarnessError::Config("tilt amplitude above 5 degrees".into()));
    }
    let pts: Vec<[f64; 3]> = if params.waypoints.is_empty() {
        (0..params.random_waypoints.max(1))
            .map(|_| std::array::from_fn(|i| rng.gen_range(params.region_min[i]..=params.region_max[i])))
            .collect()
    } else {
        params.waypoints.clone()
    };
    for (i, w) in pts.iter().enumerate() {
        if !scene.contains(&Vector3::from(*w)) {
            return Err(HarnessError::WaypointOutsideRoom { index: i, position: *w });
        }
    }
    let mut yaws = Vec::with_capacity(pts.len());
    for i in 0..pts.len() {
        let y = match params.waypoint_yaws.get(i) {
            Some(y) => *y,
            None if i == 0 => rng.gen_range(-PI..PI),
            None => {
                let turn = params.max_turn_deg.to_radians();
                yaws[i - 1] + rng.gen_range(-turn..=turn)
            }
        };
        yaws.push(y);
    }
    let tilt = params.tilt_deg.to_radians();
    let (phase_p, phase_r): (f64, f64) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));

    let p: Vec<Vector3<f64>> = pts.iter().map(|w| Vector3::from(*w)).collect();
    let frames = params.frames;
    let poses = if p.len() == 1 {
        vec![Pose::from_ypr(p[0], yaws[0], 0.0, 0.0); frames]
    } else {
        // arc-length table over the spline parameter
        let samples = 200 * (p.len() - 1);
        let smax = (p.len() - 1) as f64;
        let mut table = vec![(0.0, 0.0)];
        let mut prev = p[0];
        let mut len = 0.0;
        for j in 1..=samples {
            let s = smax * j as f64 / samples as f64;
            let q = catmull_rom(&p, s);
            len += (q - prev).norm();
            prev = q;
            table.push((len, s));
        }
        let param_at = |d: f64| {
            let k = table.partition_point(|e| e.0 < d).clamp(1, table.len() - 1);
            let (d0, s0) = table[k - 1];
            let (d1, s1) = table[k];
            if d1 > d0 {
                s0 + (s1 - s0) * (d - d0) / (d1 - d0)
            } else {
                s1
            }
        };
        (0..frames)
            .map(|f| {
                let d = if frames > 1 { len * f as f64 / (frames - 1) as f64 } else { 0.0 };
                let s = param_at(d);
                // headings are keyed to time so short segments do not spin
                let tau = if frames > 1 { smax * f as f64 / (frames - 1) as f64 } else { 0.0 };
                let seg = (tau.floor() as usize).min(p.len() - 2);
                let u = tau - seg as f64;
                let e = u * u * (3.0 - 2.0 * u);
                let yaw = yaws[seg] + (yaws[seg + 1] - yaws[seg]) * e;
                let t = f as f64 * 0.15;
                Pose::from_ypr(
                    catmull_rom(&p, s),
                    yaw,
                    tilt * (t + phase_p).sin(),
                    tilt * (0.7 * t + phase_r).sin(),
                )
            })
            .collect()
    };
    let traj = Trajectory { poses };
    for (i, q) in traj.poses.iter().enumerate() {
        if !scene.contains(&q.translation) {
            return Err(HarnessError::WaypointOutsideRoom {
                index: i,
                position: q.translation.into(),
            });
        }
    }
    let (dt, dr) = traj.max_steps();
    if dt > params.max_step + 1e-12 || dr > params.max_yaw_step_deg.to_radians() + 1e-12 {
        return Err(HarnessError::StepTooLarge {
            translation: dt,
            rotation_deg: dr.to_degrees(),
        });
    }
    Ok(traj)
}

/// Relative motions `exp(noise) · T₋₁⁻¹ T` for each consecutive pair.
pub fn noisy_odometry<R: Rng + ?Sized>(
    traj: &Trajectory,
    sigma_t: [f64; 3],
    sigma_r: [f64; 3],
    rng: &mut R,
) -> Result<Vec<Pose>, HarnessError> {
    if traj.len() < 2 {
        return Err(HarnessError::Config("odometry needs at least two poses".into()));
    }
    Ok(traj
        .poses
        .windows(2)
        .map(|w| {
            let rel = compose(&w[0].inverse(), &w[1]);
            compose(&exp_map(&noise_twist(&sigma_t, &sigma_r, 1.0, rng)), &rel)
        })
        .collect())
}

/// Chains relative motions from `start`.
pub fn dead_reckon(start: &Pose, odom: &[Pose]) -> Vec<Pose> {
    let mut out = vec![*start];
    for o in odom {
        let last = *out.last().unwrap();
        out.push(compose(&last, o));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_waypoint_is_constant() {
        let params = TrajectoryParams {
            waypoints: vec![[0.2, 0.1, 1.0]],
            waypoint_yaws: vec![0.4],
            frames: 10,
            ..TrajectoryParams::default()
        };
        let t = synth_trajectory(&params, &SceneModel::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.poses.iter().all(|p| *p == t.poses[0]));
        assert_eq!(t.max_steps(), (0.0, 0.0));
    }

    #[test]
    fn step_limits_hold_over_seeds() {
        let scene = SceneModel::default();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = synth_trajectory(&TrajectoryParams::default(), &scene, &mut rng).unwrap();
            let (dt, dr) = t.max_steps();
            assert!(dt <= 0.2 && dr <= 10f64.to_radians());
            for p in &t.poses {
                assert!(scene.contains(&p.translation));
                let (_, pitch, roll) = p.ypr();
                assert!(pitch.abs() <= 5f64.to_radians() && roll.abs() <= 5f64.to_radians());
            }
        }
    }

    #[test]
    fn reproducible_per_seed() {
        let scene = SceneModel::default();
        let gen = |s| synth_trajectory(&TrajectoryParams::default(), &scene, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
        assert_eq!(gen(3), gen(3));
        assert_ne!(gen(3), gen(4));
    }

    #[test]
    fn waypoint_outside_room_is_rejected() {
        let params = TrajectoryParams {
            waypoints: vec![[0.0, 0.0, 1.0], [3.0, 0.0, 1.0]],
            ..TrajectoryParams::default()
        };
        let err = synth_trajectory(&params, &SceneModel::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, HarnessError::WaypointOutsideRoom { index: 1, .. }));
    }

    #[test]
    fn noiseless_odometry_chains_back() {
        let scene = SceneModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = synth_trajectory(&TrajectoryParams::default(), &scene, &mut rng).unwrap();
        let odom = noisy_odometry(&t, [0.0; 3], [0.0; 3], &mut rng).unwrap();
        let back = dead_reckon(&t.poses[0], &odom);
        for (a, b) in back.iter().zip(&t.poses) {
            assert!(a.max_abs_diff(b) < 1e-9);
        }
        let a = noisy_odometry(&t, [0.01; 3], [0.01; 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = noisy_odometry(&t, [0.01; 3], [0.01; 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn drift_grows_with_noise() {
        let scene = SceneModel::default();
        let t = synth_trajectory(&TrajectoryParams::default(), &scene, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let end = t.poses.last().unwrap();
        let drift = |s: f64| {
            (0..50)
                .map(|seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                    let odom = noisy_odometry(&t, [s; 3], [0.0; 3], &mut rng).unwrap();
                    dead_reckon(&t.poses[0], &odom).last().unwrap().distance_to(end)
                })
                .sum::<f64>()
                / 50.0
        };
        let d = [drift(0.005), drift(0.01), drift(0.02)];
        assert!(d[0] < d[1] && d[1] < d[2], "{d:?}");
    }
}
