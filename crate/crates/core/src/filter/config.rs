use crate::image::CameraIntrinsics;
use crate::scene::ArtifactSpec;
use serde::{Deserialize, Serialize};

/// Filter parameters. Angles ending in `_deg` are degrees, all other
/// angles radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub n_global: usize,
    pub n_track: usize,
    /// Anchors retrieved per frame for nudging; 0 disables nudging.
    pub m_nudge: usize,
    /// Dispersion threshold for tracking mode.
    pub lambda: f64,
    /// Weight of the rotation block (rad²) in the dispersion.
    pub beta: f64,
    /// Tracking resolution.
    pub k_plus: CameraIntrinsics,
    /// Global resolution.
    pub k_minus: CameraIntrinsics,
    /// Likelihood is `exp(alpha_lik * SSIM)`.
    pub alpha_lik: f64,
    /// Per-axis body-frame motion noise (m).
    pub motion_noise_t: [f64; 3],
    /// Motion noise on (yaw, pitch, roll).
    pub motion_noise_r: [f64; 3],
    /// Global resampling jitter as a fraction of the motion noise.
    pub jitter_fraction: f64,
    pub track_init_std_t: [f64; 3],
    pub track_init_std_ypr_deg: [f64; 3],
    /// Floor added to degenerate tracking covariances.
    pub cov_floor: f64,
    /// Kidnap when the best nudge beats `kappa` times the mean particle weight...
    pub kappa: f64,
    /// ...for this many consecutive tracking frames.
    pub patience: usize,
    /// Spread of recovery particles around the offending anchors.
    pub recovery_std_t: [f64; 3],
    pub recovery_std_ypr_deg: [f64; 3],
    /// When false the filter stays in global mode for good.
    pub mode_switching: bool,
    /// Floaters rendered into every map-side image.
    pub artifacts: Option<ArtifactSpec>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n_global: 400,
            n_track: 200,
            m_nudge: 40,
            lambda: 0.1,
            beta: 1.0,
            k_plus: CameraIntrinsics {
                width: 800,
                height: 680,
                horizontal_fov: 1.4,
            },
            k_minus: CameraIntrinsics {
                width: 80,
                height: 64,
                horizontal_fov: 1.4,
            },
            alpha_lik: 10.0,
            motion_noise_t: [0.03, 0.03, 0.015],
            motion_noise_r: [0.03, 0.01, 0.01],
            jitter_fraction: 0.1,
            track_init_std_t: [0.2, 0.2, 0.1],
            track_init_std_ypr_deg: [5.0, 1.0, 1.0],
            cov_floor: 1e-6,
            kappa: 3.0,
            patience: 3,
            recovery_std_t: [0.3, 0.3, 0.15],
            recovery_std_ypr_deg: [15.0, 2.0, 2.0],
            mode_switching: true,
            artifacts: Some(ArtifactSpec::default()),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_global == 0 || self.n_track == 0 {
            return Err("particle counts must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.beta >= 0.0) || !(self.alpha_lik >= 0.0) || !(self.jitter_fraction >= 0.0) {
            return Err("beta, alpha_lik and jitter_fraction must be non-negative".into());
        }
        let stds = self
            .motion_noise_t
            .iter()
            .chain(&self.motion_noise_r)
            .chain(&self.track_init_std_t)
            .chain(&self.track_init_std_ypr_deg)
            .chain(&self.recovery_std_t)
            .chain(&self.recovery_std_ypr_deg);
        for s in stds {
            if !(*s >= 0.0 && s.is_finite()) {
                return Err(format!(
                    "standard deviations must be finite and >= 0, got {s}"
                ));
            }
        }
        if !(self.cov_floor > 0.0) {
            return Err("cov_floor must be positive".into());
        }
        if !(self.kappa > 0.0) || self.patience == 0 {
            return Err("kappa must be positive and patience at least 1".into());
        }
        self.k_plus.validate().map_err(|e| e.to_string())?;
        self.k_minus.validate().map_err(|e| e.to_string())?;
        if let Some(a) = &self.artifacts {
            a.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    /// Particle count used in `mode`.
    pub fn particles_for(&self, mode: super::Mode) -> usize {
        match mode {
            super::Mode::Global => self.n_global,
            super::Mode::Tracking => self.n_track,
        }
    }

    /// Render resolution used in `mode`.
    pub fn intrinsics_for(&self, mode: super::Mode) -> &CameraIntrinsics {
        match mode {
            super::Mode::Global => &self.k_minus,
            super::Mode::Tracking => &self.k_plus,
        }
    }
}
