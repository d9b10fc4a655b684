use super::{SceneError, SceneModel};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Parameters for floater blobs injected into map-side renders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactSpec {
    pub count: usize,
    /// Blob radius range in meters.
    pub radius: [f64; 2],
    pub opacity: [f64; 2],
    /// Per-channel color spread around mid gray.
    pub color_jitter: f64,
    pub seed: u64,
}

impl Default for ArtifactSpec {
    fn default() -> Self {
        Self {
            count: 30,
            radius: [0.1, 0.3],
            opacity: [0.3, 0.6],
            color_jitter: 0.3,
            seed: 11,
        }
    }
}

/// A realized floater: a sphere whose opacity falls off quadratically with
/// the ray's distance from its center.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl ArtifactSpec {
    pub fn none() -> Self {
        Self {
            count: 0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let [r0, r1] = self.radius;
        let [o0, o1] = self.opacity;
        if !(r0 > 0.0 && r0 <= r1) {
            return Err(SceneError::BadArtifacts(format!(
                "radius range {:?}",
                self.radius
            )));
        }
        if !(0.0..=1.0).contains(&o0) || !(0.0..=1.0).contains(&o1) || o0 > o1 {
            return Err(SceneError::BadArtifacts(format!(
                "opacity range {:?}",
                self.opacity
            )));
        }
        if !(self.color_jitter >= 0.0) {
            return Err(SceneError::BadArtifacts("negative color jitter".into()));
        }
        Ok(())
    }

    /// Deterministic blob placement inside the room.
    pub fn realize(&self, scene: &SceneModel) -> Vec<Blob> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (lo, hi) = scene.bounds();
        let sample =
            |rng: &mut ChaCha8Rng, a: f64, b: f64| if b > a { rng.gen_range(a..=b) } else { a };
        (0..self.count)
            .map(|_| {
                let radius = sample(&mut rng, self.radius[0], self.radius[1]);
                let center = Vector3::new(
                    sample(&mut rng, lo[0] + radius, hi[0] - radius),
                    sample(&mut rng, lo[1] + radius, hi[1] - radius),
                    sample(&mut rng, lo[2] + radius, hi[2] - radius),
                );
                let opacity = sample(&mut rng, self.opacity[0], self.opacity[1]);
                let j = self.color_jitter;
                let mut color = [0.5; 3];
                for c in &mut color {
                    *c = (*c + sample(&mut rng, -j, j)).clamp(0.0, 1.0);
                }
                Blob {
                    center,
                    radius,
                    opacity,
                    color,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realize_is_deterministic_and_inside() {
        let s = SceneModel::default();
        let a = ArtifactSpec::default().realize(&s);
        assert_eq!(a, ArtifactSpec::default().realize(&s));
        assert_eq!(a.len(), 30);
        for b in &a {
            assert!(s.contains(&b.center));
            assert!((0.0..=1.0).contains(&b.opacity));
        }
    }

    #[test]
    fn validation() {
        assert!(ArtifactSpec::default().validate().is_ok());
        let bad = ArtifactSpec {
            opacity: [0.5, 1.5],
            ..ArtifactSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
