use super::{FilterConfig, FilterError, Particle};
use crate::geometry::{
    compose, exp_map, sample_gaussian_pose, weighted_mean, weighted_variance, Pose, Twist,
};
use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;

/// Systematic resampling: `n` indices drawn with the single offset
/// `u0 ∈ [0, 1)`. Index `i` appears `⌊n wᵢ⌋` or `⌈n wᵢ⌉` times.
pub fn systematic_indices(weights: &[f64], n: usize, u0: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    if weights.is_empty() || n == 0 {
        return out;
    }
    let mut cum = weights[0] / total;
    let mut i = 0;
    for j in 0..n {
        let u = (u0 + j as f64) / n as f64;
        while u >= cum && i + 1 < weights.len() {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Body-frame Gaussian perturbation with per-axis standard deviations.
pub fn noise_twist<R: Rng + ?Sized>(
    std_t: &[f64; 3],
    std_r: &[f64; 3],
    scale: f64,
    rng: &mut R,
) -> Twist {
    let mut v = [0.0; 6];
    for (i, s) in std_t.iter().chain(std_r).enumerate() {
        let z: f64 = rng.sample(StandardNormal);
        v[i] = scale * s * z;
    }
    // rotation noise is small; wrap defensively so the twist stays valid
    let phi = nalgebra::Vector3::new(v[3], v[4], v[5]);
    let n = phi.norm();
    if n >= std::f64::consts::PI {
        let k = (n - 2.0 * std::f64::consts::PI) / n;
        v[3] *= k;
        v[4] *= k;
        v[5] *= k;
    }
    Twist::from_array(v).unwrap_or_else(|_| Twist::zero())
}

/// Systematic resampling of `xi` to `n` particles plus tangent jitter.
pub fn resample_global<R: Rng + ?Sized>(
    xi: &[Particle],
    n: usize,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Vec<Particle> {
    let weights: Vec<f64> = xi.iter().map(|p| p.weight).collect();
    let u0: f64 = rng.gen();
    let w = 1.0 / n as f64;
    systematic_indices(&weights, n, u0)
        .into_iter()
        .map(|i| {
            let jitter = noise_twist(
                &cfg.motion_noise_t,
                &cfg.motion_noise_r,
                cfg.jitter_fraction,
                rng,
            );
            Particle {
                weight: w,
                pose: compose(&xi[i].pose, &exp_map(&jitter)),
            }
        })
        .collect()
}

/// Gaussian-approximate resampling: `n` draws from the weighted mean and
/// covariance of `xi`.
pub fn resample_tracking<R: Rng + ?Sized>(
    xi: &[Particle],
    n: usize,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<Vec<Particle>, FilterError> {
    let pairs: Vec<(f64, Pose)> = xi.iter().map(|p| (p.weight, p.pose)).collect();
    let mean = weighted_mean(&pairs)?;
    let mut g = weighted_variance(&pairs, &mean)?;
    if g.dispersion(1.0) < cfg.cov_floor {
        g.cov_t += Matrix3::identity() * cfg.cov_floor;
        g.cov_r += Matrix3::identity() * cfg.cov_floor;
    }
    let w = 1.0 / n as f64;
    Ok((0..n)
        .map(|_| Particle {
            weight: w,
            pose: sample_gaussian_pose(&g, rng),
        })
        .collect())
}
