//! The nudged particle filter.
//!
//! Each frame predicts with odometry, weights particles by the SSIM between
//! the camera image and a map render from each particle, and then nudges:
//! anchors retrieved for the image are rendered and scored the same way and
//! join the set when they beat the mean particle weight. Global mode works
//! at low resolution with systematic resampling; once the weighted pose
//! dispersion falls below `lambda` the filter tracks at high resolution with
//! Gaussian resampling, using the anchors only to detect a kidnapping.

pub mod config;
mod resample;
pub mod ssim;

pub use config::FilterConfig;
pub use resample::{noise_twist, resample_global, resample_tracking, systematic_indices};
pub use ssim::{ssim, SsimReference};

use crate::geometry::{
    compose, exp_map, sample_gaussian_pose, weighted_mean, weighted_variance, GeometryError, Pose,
    PoseGaussian,
};
use crate::image::{resample_area, CameraIntrinsics, Image, ImageError};
use crate::scene::{Renderer, SceneModel};
use crate::vpr::{encode, AnchorDatabase, VprError};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("particle set is empty")]
    EmptySet,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Vpr(#[from] VprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Global,
    Tracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub weight: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub mode: Mode,
    /// Frames processed so far.
    pub frame: usize,
    /// Consecutive tracking frames in which an anchor beat the particles.
    pub kidnap_streak: usize,
}

impl ParticleSet {
    pub fn new(particles: Vec<Particle>, mode: Mode) -> Self {
        Self {
            particles,
            mode,
            frame: 0,
            kidnap_streak: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn normalize(&mut self) -> Result<(), FilterError> {
        normalize(&mut self.particles)
    }

    /// Weighted mean pose.
    pub fn estimate(&self) -> Result<Pose, FilterError> {
        Ok(weighted_mean(&pairs(&self.particles))?)
    }

    /// `trace(cov_t) + beta * trace(cov_r)` around the weighted mean.
    pub fn dispersion(&self, beta: f64) -> Result<f64, FilterError> {
        Ok(statistics(&self.particles, beta)?.1)
    }
}

fn pairs(ps: &[Particle]) -> Vec<(f64, Pose)> {
    ps.iter().map(|p| (p.weight, p.pose)).collect()
}

/// Weighted mean and dispersion.
fn statistics(ps: &[Particle], beta: f64) -> Result<(Pose, f64), FilterError> {
    let pr = pairs(ps);
    let mean = weighted_mean(&pr)?;
    let g = weighted_variance(&pr, &mean)?;
    Ok((mean, g.dispersion(beta)))
}

/// Scales weights to sum to one.
pub fn normalize(ps: &mut [Particle]) -> Result<(), FilterError> {
    if ps.is_empty() {
        return Err(FilterError::EmptySet);
    }
    let total: f64 = ps.iter().map(|p| p.weight).sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(GeometryError::ZeroTotalWeight.into());
    }
    for p in ps {
        p.weight /= total;
    }
    Ok(())
}

fn uniform_pose<R: Rng + ?Sized>(scene: &SceneModel, rng: &mut R) -> Pose {
    let (lo, hi) = scene.bounds();
    let t = nalgebra::Vector3::new(
        rng.gen_range(lo[0]..hi[0]),
        rng.gen_range(lo[1]..hi[1]),
        rng.gen_range(lo[2]..hi[2]),
    );
    Pose::from_ypr(t, rng.gen_range(-PI..PI), 0.0, 0.0)
}

/// `n_global` particles uniform over the room box and over yaw, level.
pub fn init_global<R: Rng + ?Sized>(
    cfg: &FilterConfig,
    scene: &SceneModel,
    rng: &mut R,
) -> ParticleSet {
    let n = cfg.n_global;
    let particles = (0..n)
        .map(|_| Particle {
            weight: 1.0 / n as f64,
            pose: uniform_pose(scene, rng),
        })
        .collect();
    ParticleSet::new(particles, Mode::Global)
}

/// The tracking prior: a Gaussian around `center` with the configured
/// initial standard deviations.
pub fn tracking_prior(cfg: &FilterConfig, center: &Pose) -> PoseGaussian {
    PoseGaussian::from_stds(
        *center,
        cfg.track_init_std_t,
        cfg.track_init_std_ypr_deg.map(f64::to_radians),
    )
}

/// `count` particles drawn from the tracking prior around `center`.
pub fn init_tracking<R: Rng + ?Sized>(
    cfg: &FilterConfig,
    center: &Pose,
    count: usize,
    mode: Mode,
    rng: &mut R,
) -> ParticleSet {
    let g = tracking_prior(cfg, center);
    let particles = (0..count)
        .map(|_| Particle {
            weight: 1.0 / count as f64,
            pose: sample_gaussian_pose(&g, rng),
        })
        .collect();
    ParticleSet::new(particles, mode)
}

/// Applies the relative motion `odom` and body-frame motion noise.
pub fn predict<R: Rng + ?Sized>(
    set: &mut ParticleSet,
    odom: &Pose,
    cfg: &FilterConfig,
    rng: &mut R,
) {
    for p in &mut set.particles {
        let noise = noise_twist(&cfg.motion_noise_t, &cfg.motion_noise_r, 1.0, rng);
        p.pose = compose(&p.pose, &compose(odom, &exp_map(&noise)));
    }
}

/// `exp(alpha * SSIM)` of map renders from `poses` against `reference`.
pub fn likelihoods(
    renderer: &Renderer,
    poses: &[Pose],
    reference: &SsimReference,
    k: &CameraIntrinsics,
    alpha: f64,
) -> Result<Vec<f64>, FilterError> {
    poses
        .par_iter()
        .map(|pose| {
            let img = renderer.render(pose, k);
            Ok((alpha * reference.compare(&img)?).exp())
        })
        .collect()
}

/// Weights the set against an observation already at resolution `k`.
/// Returns the unnormalized weights `wᵢ Lᵢ`; the set ends up normalized.
pub fn measure(
    set: &mut ParticleSet,
    reference: &SsimReference,
    renderer: &Renderer,
    k: &CameraIntrinsics,
    alpha: f64,
) -> Result<Vec<f64>, FilterError> {
    let poses: Vec<Pose> = set.particles.iter().map(|p| p.pose).collect();
    let lik = likelihoods(renderer, &poses, reference, k, alpha)?;
    let unnorm: Vec<f64> = set
        .particles
        .iter()
        .zip(&lik)
        .map(|(p, l)| p.weight * l)
        .collect();
    for (p, u) in set.particles.iter_mut().zip(&unnorm) {
        p.weight = *u;
    }
    set.normalize()?;
    Ok(unnorm)
}

/// One scored anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NudgeCandidate {
    pub anchor: usize,
    pub descriptor_distance: f64,
    pub likelihood: f64,
    /// Unnormalized weight on the particles' scale.
    pub weight: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NudgeReport {
    pub candidates: Vec<NudgeCandidate>,
    /// Mean unnormalized weight of the particles before nudging.
    pub pre_mean_weight: f64,
    /// Mean unnormalized weight over the nudged set.
    pub post_mean_weight: f64,
    pub query_null: bool,
    pub truncated: bool,
}

impl NudgeReport {
    pub fn accepted(&self) -> impl Iterator<Item = &NudgeCandidate> {
        self.candidates.iter().filter(|c| c.accepted)
    }

    pub fn best_weight(&self) -> Option<f64> {
        self.candidates.iter().map(|c| c.weight).reduce(f64::max)
    }
}

/// Whether a nudge weight beats the mean particle weight. Both sides scale
/// together, so the decision is invariant to the weights' overall scale.
#[inline]
pub fn accepts(candidate_weight: f64, mean_weight: f64) -> bool {
    candidate_weight > mean_weight
}

/// Observation resampled to the database resolution, for retrieval.
fn query_image(
    obs: &Image,
    obs_k: &CameraIntrinsics,
    db: &AnchorDatabase,
) -> Result<Image, ImageError> {
    resample_area(obs, obs_k, db.intrinsics())
}

/// Scores the top-M anchors for an observation and decides acceptance.
///
/// `unnorm` are the particles' unnormalized weights from [`measure`]. An
/// anchor enters with the prior weight of an average particle times its
/// likelihood and is accepted when that beats the mean of `unnorm`.
#[allow(clippy::too_many_arguments)]
pub fn score_nudges(
    obs: &Image,
    obs_k: &CameraIntrinsics,
    reference: &SsimReference,
    db: &AnchorDatabase,
    renderer: &Renderer,
    k: &CameraIntrinsics,
    m: usize,
    alpha: f64,
    unnorm: &[f64],
) -> Result<NudgeReport, FilterError> {
    if unnorm.is_empty() {
        return Err(FilterError::EmptySet);
    }
    let n = unnorm.len() as f64;
    let pre_mean = unnorm.iter().sum::<f64>() / n;
    let mut report = NudgeReport {
        pre_mean_weight: pre_mean,
        post_mean_weight: pre_mean,
        ..Default::default()
    };
    if m == 0 {
        return Ok(report);
    }
    let query = encode(&query_image(obs, obs_k, db)?)?;
    report.query_null = query.is_null();
    let r = db.retrieve_top_m(&query, m)?;
    report.truncated = r.truncated;
    let poses: Vec<Pose> = r.hits.iter().map(|h| h.pose).collect();
    let lik = likelihoods(renderer, &poses, reference, k, alpha)?;
    // after resampling the prior is uniform; an anchor gets the mean prior weight 1/N
    let mut total = unnorm.iter().sum::<f64>();
    let mut count = n;
    for (hit, l) in r.hits.iter().zip(lik) {
        let weight = l / n;
        let accepted = accepts(weight, pre_mean);
        if accepted {
            total += weight;
            count += 1.0;
        }
        report.candidates.push(NudgeCandidate {
            anchor: hit.index,
            descriptor_distance: hit.distance,
            likelihood: l,
            weight,
            accepted,
        });
    }
    report.post_mean_weight = total / count;
    Ok(report)
}

/// Ξ⁺: the particles with their unnormalized weights plus the accepted
/// anchors, normalized.
pub fn nudged_set(
    particles: &[Particle],
    unnorm: &[f64],
    report: &NudgeReport,
    db: &AnchorDatabase,
) -> Result<Vec<Particle>, FilterError> {
    let mut xi: Vec<Particle> = particles
        .iter()
        .zip(unnorm)
        .map(|(p, u)| Particle {
            weight: *u,
            pose: p.pose,
        })
        .collect();
    xi.extend(report.accepted().map(|c| Particle {
        weight: c.weight,
        pose: db.entries()[c.anchor].pose,
    }));
    normalize(&mut xi)?;
    Ok(xi)
}

/// Per-frame filter output. Ground-truth errors are filled in by callers
/// that have ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    /// Mode the frame was processed in.
    pub mode: Mode,
    pub next_mode: Mode,
    pub estimate: Pose,
    pub sigma2: f64,
    /// Support points in Ξ⁺.
    pub support: usize,
    pub nudge_evaluated: usize,
    pub nudge_accepted: usize,
    /// Best anchor weight over the mean particle weight, when anchors were scored.
    pub best_nudge_ratio: Option<f64>,
    pub kidnap: bool,
    pub position_error: Option<f64>,
    pub rotation_error_deg: Option<f64>,
    /// Absolute (yaw, pitch, roll) errors in degrees.
    pub ypr_error_deg: Option<[f64; 3]>,
    /// Wall time of the step; kept out of the serialized record so that
    /// reruns are byte-identical.
    #[serde(skip)]
    pub wall_ms: f64,
}

impl FrameRecord {
    /// Fills the error fields against ground truth.
    pub fn set_truth(&mut self, truth: &Pose) {
        self.position_error = Some(self.estimate.distance_to(truth));
        self.rotation_error_deg = Some(self.estimate.rotation_angle_to(truth).to_degrees());
        let (a, b) = (self.estimate.ypr(), truth.ypr());
        let wrap = |d: f64| (d + PI).rem_euclid(2.0 * PI) - PI;
        self.ypr_error_deg = Some([
            wrap(a.0 - b.0).abs().to_degrees(),
            wrap(a.1 - b.1).abs().to_degrees(),
            wrap(a.2 - b.2).abs().to_degrees(),
        ]);
    }
}

/// Everything a step produced besides the new particle set.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub record: FrameRecord,
    pub nudge: Option<NudgeReport>,
}

/// Filter context: configuration, map renderer and optional anchors.
pub struct Filter<'a> {
    pub cfg: FilterConfig,
    scene: &'a SceneModel,
    renderer: Renderer<'a>,
    db: Option<&'a AnchorDatabase>,
}

impl<'a> Filter<'a> {
    pub fn new(
        cfg: FilterConfig,
        scene: &'a SceneModel,
        db: Option<&'a AnchorDatabase>,
    ) -> Result<Self, FilterError> {
        cfg.validate().map_err(FilterError::Config)?;
        let renderer = Renderer::new(scene, cfg.artifacts.as_ref());
        Ok(Self {
            cfg,
            scene,
            renderer,
            db,
        })
    }

    pub fn renderer(&self) -> &Renderer<'a> {
        &self.renderer
    }

    pub fn scene(&self) -> &SceneModel {
        self.scene
    }

    pub fn init_global<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleSet {
        init_global(&self.cfg, self.scene, rng)
    }

    /// Particles around `center` in tracking mode, or in global mode with
    /// the global count when mode switching is off.
    pub fn init_tracking<R: Rng + ?Sized>(&self, center: &Pose, rng: &mut R) -> ParticleSet {
        if self.cfg.mode_switching {
            init_tracking(&self.cfg, center, self.cfg.n_track, Mode::Tracking, rng)
        } else {
            init_tracking(&self.cfg, center, self.cfg.n_global, Mode::Global, rng)
        }
    }

    fn nudging(&self) -> Option<&'a AnchorDatabase> {
        self.db.filter(|_| self.cfg.m_nudge > 0)
    }

    /// Half the particles around `anchors`, half uniform over the room.
    fn recover<R: Rng + ?Sized>(&self, anchors: &[Pose], rng: &mut R) -> Vec<Particle> {
        let n = self.cfg.n_global;
        let w = 1.0 / n as f64;
        let around = if anchors.is_empty() { 0 } else { n / 2 };
        let mut out = Vec::with_capacity(n);
        for i in 0..around {
            let g = PoseGaussian::from_stds(
                anchors[i % anchors.len()],
                self.cfg.recovery_std_t,
                self.cfg.recovery_std_ypr_deg.map(f64::to_radians),
            );
            out.push(Particle {
                weight: w,
                pose: sample_gaussian_pose(&g, rng),
            });
        }
        while out.len() < n {
            out.push(Particle {
                weight: w,
                pose: uniform_pose(self.scene, rng),
            });
        }
        out
    }

    /// One filter iteration on the camera image `obs` taken with `obs_k`
    /// after the relative motion `odom`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        set: &mut ParticleSet,
        obs: &Image,
        obs_k: &CameraIntrinsics,
        odom: &Pose,
        rng: &mut R,
    ) -> Result<StepOutput, FilterError> {
        let start = std::time::Instant::now();
        if set.is_empty() {
            return Err(FilterError::EmptySet);
        }
        let cfg = &self.cfg;
        let mode = set.mode;
        let k = cfg.intrinsics_for(mode);

        predict(set, odom, cfg, rng);
        let obs_k_img = resample_area(obs, obs_k, k)?;
        let reference = SsimReference::new(&obs_k_img)?;
        let unnorm = measure(set, &reference, &self.renderer, k, cfg.alpha_lik)?;

        let nudge = match self.nudging() {
            Some(db) => Some((
                db,
                score_nudges(
                    obs,
                    obs_k,
                    &reference,
                    db,
                    &self.renderer,
                    k,
                    cfg.m_nudge,
                    cfg.alpha_lik,
                    &unnorm,
                )?,
            )),
            None => None,
        };

        // tracking mode keeps the anchors out of the resampling
        let xi = match (&nudge, mode) {
            (Some((db, report)), Mode::Global) => nudged_set(&set.particles, &unnorm, report, db)?,
            _ => set.particles.clone(),
        };
        let (estimate, sigma2) = statistics(&xi, cfg.beta)?;

        let mut kidnap = false;
        let mut offending = Vec::new();
        let mut best_ratio = None;
        if let Some((db, report)) = &nudge {
            if let Some(best) = report.best_weight() {
                best_ratio = Some(best / report.pre_mean_weight);
            }
            if mode == Mode::Tracking && cfg.mode_switching {
                let bar = cfg.kappa * report.pre_mean_weight;
                offending = report
                    .candidates
                    .iter()
                    .filter(|c| c.weight > bar)
                    .map(|c| db.entries()[c.anchor].pose)
                    .collect();
                set.kidnap_streak = if offending.is_empty() {
                    0
                } else {
                    set.kidnap_streak + 1
                };
                kidnap = set.kidnap_streak >= cfg.patience;
            }
        }

        let next_mode = if kidnap || !cfg.mode_switching || sigma2 > cfg.lambda {
            Mode::Global
        } else {
            Mode::Tracking
        };
        let n_next = cfg.particles_for(next_mode);
        set.particles = if kidnap {
            set.kidnap_streak = 0;
            self.recover(&offending, rng)
        } else {
            match mode {
                Mode::Global => resample_global(&xi, n_next, cfg, rng),
                Mode::Tracking => resample_tracking(&xi, n_next, cfg, rng)?,
            }
        };
        if next_mode == Mode::Global && mode == Mode::Tracking {
            set.kidnap_streak = 0;
        }
        set.mode = next_mode;
        let frame = set.frame;
        set.frame += 1;

        let report = nudge.map(|(_, r)| r);
        let record = FrameRecord {
            frame,
            mode,
            next_mode,
            estimate,
            sigma2,
            support: xi.len(),
            nudge_evaluated: report.as_ref().map_or(0, |r| r.candidates.len()),
            nudge_accepted: match mode {
                Mode::Global => report.as_ref().map_or(0, |r| r.accepted().count()),
                Mode::Tracking => 0,
            },
            best_nudge_ratio: best_ratio,
            kidnap,
            position_error: None,
            rotation_error_deg: None,
            ypr_error_deg: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok(StepOutput {
            record,
            nudge: report,
        })
    }
}
