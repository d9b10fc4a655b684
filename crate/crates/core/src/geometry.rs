//! Rigid-body pose algebra on SE(3).
//!
//! Poses map camera coordinates into world coordinates. The tangent vector
//! layout is `[u_x, u_y, u_z, yaw, pitch, roll]`: translation first, then the
//! rotation vector components about the z, y and x axes in that order. This
//! is the layout anchor construction uses, `[x, y, 0, ω, 0, 0]`.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Below this rotation angle the closed forms switch to fourth-order series;
/// `θ - sin θ` has already lost most of its digits at this size.
const SMALL_ANGLE: f64 = 1e-3;

/// Largest rotation angle `log_map` accepts.
pub const MAX_LOG_ANGLE: f64 = PI - 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {0} is too close to pi for a unique logarithm")]
    AngleNearPi(f64),
    #[error("twist rotation norm {0} is outside the principal branch [0, pi)")]
    TwistOutOfRange(f64),
    #[error("twist has non-finite entries")]
    NonFinite,
    #[error("empty particle set")]
    EmptySet,
    #[error("total particle weight is zero")]
    ZeroTotalWeight,
    #[error("negative or non-finite weight {0}")]
    BadWeight(f64),
    #[error("covariance is not symmetric positive semidefinite")]
    NotPsd,
}

/// Rigid transform `x_world = R x_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRecord", try_from = "PoseRecord")]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Row-major `[r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoseRecord(pub [f64; 12]);

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        PoseRecord(p.to_row_major())
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = String;

    fn try_from(r: PoseRecord) -> Result<Self, Self::Error> {
        let pose = Pose::from_row_major(&r.0);
        if !pose.is_valid(1e-6) {
            return Err("rotation block is not a proper rotation".into());
        }
        Ok(pose)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Builds a pose from intrinsic z-y-x (yaw, pitch, roll) angles.
    pub fn from_ypr(translation: Vector3<f64>, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::new(rot_z(yaw) * rot_y(pitch) * rot_x(roll), translation)
    }

    /// Intrinsic z-y-x angles `(yaw, pitch, roll)` of the rotation block.
    pub fn ypr(&self) -> (f64, f64, f64) {
        rotation_ypr(&self.rotation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    /// Applies the pose to a point.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(v: &[f64; 12]) -> Self {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]);
        Self::new(rotation, Vector3::new(v[9], v[10], v[11]))
    }

    /// Orthonormality and `det = +1` within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        if !r
            .iter()
            .chain(self.translation.iter())
            .all(|x| x.is_finite())
        {
            return false;
        }
        let gram = r.transpose() * r;
        (gram - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
    }

    /// Largest absolute entry difference of the 3x4 blocks.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        (self.rotation - other.rotation)
            .amax()
            .max((self.translation - other.translation).amax())
    }

    /// Geodesic rotation distance in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Tangent vector of SE(3): translational part `u` and rotation part `phi`
/// stored as `(yaw, pitch, roll)`, i.e. the rotation-vector components about
/// z, y and x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    u: Vector3<f64>,
    phi: Vector3<f64>,
}

impl Twist {
    pub fn new(u: Vector3<f64>, phi: Vector3<f64>) -> Result<Self, GeometryError> {
        if !u.iter().chain(phi.iter()).all(|x| x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = phi.norm();
        if n >= PI {
            return Err(GeometryError::TwistOutOfRange(n));
        }
        Ok(Self { u, phi })
    }

    /// `[u_x, u_y, u_z, yaw, pitch, roll]`.
    pub fn from_array(v: [f64; 6]) -> Result<Self, GeometryError> {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn zero() -> Self {
        Self {
            u: Vector3::zeros(),
            phi: Vector3::zeros(),
        }
    }

    pub fn u(&self) -> &Vector3<f64> {
        &self.u
    }

    pub fn phi(&self) -> &Vector3<f64> {
        &self.phi
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.u.x, self.u.y, self.u.z, self.phi.x, self.phi.y, self.phi.z,
        ]
    }
}

/// Rotation vector `(x, y, z)` from the `(yaw, pitch, roll)` layout.
#[inline]
fn phi_to_axis(phi: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(phi.z, phi.y, phi.x)
}

#[inline]
fn axis_to_phi(w: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(w.z, w.y, w.x)
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn rotation_ypr(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    (yaw, pitch, roll)
}

/// Angle of a rotation matrix, robust near 0 and pi.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

/// Rodrigues' formula for the rotation vector `w` (axis components).
fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let k2 = k * k;
    let (a, b) = if theta2.sqrt() < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        let theta = theta2.sqrt();
        let h = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * h * h / theta2)
    };
    Matrix3::identity() + k * a + k2 * b
}

/// Left Jacobian `V(w)` coupling translation and rotation in the exponential.
fn left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let k2 = k * k;
    if theta2.sqrt() < SMALL_ANGLE {
        Matrix3::identity()
            + k * (0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
            + k2 * (1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0)
    } else {
        let theta = theta2.sqrt();
        let h = (0.5 * theta).sin();
        Matrix3::identity()
            + k * (2.0 * h * h / theta2)
            + k2 * ((theta - theta.sin()) / (theta2 * theta))
    }
}

fn left_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let k2 = k * k;
    if theta2.sqrt() < SMALL_ANGLE {
        Matrix3::identity() - k * 0.5
            + k2 * (1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0)
    } else {
        let theta = theta2.sqrt();
        let h = (0.5 * theta).sin();
        let coef = (1.0 - theta * theta.sin() / (4.0 * h * h)) / theta2;
        Matrix3::identity() - k * 0.5 + k2 * coef
    }
}

/// Rotation vector of `r` (axis components). Fails within `1e-6` of pi.
fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let theta = rotation_angle(r);
    if theta > MAX_LOG_ANGLE {
        return Err(GeometryError::AngleNearPi(theta));
    }
    let v = vee(&(r - r.transpose())) * 0.5;
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        return Ok(v * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0));
    }
    Ok(v * (theta / theta.sin()))
}

/// Rotation vector of `r` on the closed principal branch. At the cut the
/// axis sign is chosen so its largest component is positive.
fn so3_log_total(r: &Matrix3<f64>) -> Vector3<f64> {
    if let Ok(w) = so3_log(r) {
        return w;
    }
    let theta = rotation_angle(r);
    // R + I = 2 a aᵀ at theta = pi; take the best-conditioned column.
    let b = r + Matrix3::identity();
    let col = (0..3)
        .max_by(|&i, &j| b.column(i).norm().total_cmp(&b.column(j).norm()))
        .unwrap_or(0);
    let mut axis = b.column(col).normalize();
    // Recover the sign from the antisymmetric part when it is still informative.
    let v = vee(&(r - r.transpose()));
    if v.norm() > 1e-12 {
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
    } else if axis.iamax_full().0 < 3 && axis[axis.iamax_full().0] < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Group product `a · b`: `R = R_a R_b`, `t = R_a t_b + t_a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose::new(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

/// Closed-form exponential of a twist.
pub fn exp_map(xi: &Twist) -> Pose {
    let w = phi_to_axis(&xi.phi);
    Pose::new(so3_exp(&w), left_jacobian(&w) * xi.u)
}

/// Inverse of [`exp_map`] on the principal branch.
pub fn log_map(p: &Pose) -> Result<Twist, GeometryError> {
    let w = so3_log(&p.rotation)?;
    let u = left_jacobian_inv(&w) * p.translation;
    Ok(Twist {
        u,
        phi: axis_to_phi(&w),
    })
}

/// Rotation matrix for a `(yaw, pitch, roll)` rotation vector.
pub fn rotation_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_exp(&phi_to_axis(phi))
}

/// Rotation vector `(yaw, pitch, roll)` of `r` on the closed principal branch.
pub fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    axis_to_phi(&so3_log_total(r))
}

/// Gaussian over poses: mean plus translation (world frame) and rotation
/// (mean-relative tangent) covariance blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseGaussian {
    pub mean: Pose,
    pub cov_t: Matrix3<f64>,
    pub cov_r: Matrix3<f64>,
}

impl PoseGaussian {
    pub fn new(
        mean: Pose,
        cov_t: Matrix3<f64>,
        cov_r: Matrix3<f64>,
    ) -> Result<Self, GeometryError> {
        if !is_psd(&cov_t) || !is_psd(&cov_r) {
            return Err(GeometryError::NotPsd);
        }
        Ok(Self { mean, cov_t, cov_r })
    }

    /// Axis-aligned Gaussian from standard deviations.
    pub fn from_stds(mean: Pose, std_t: [f64; 3], std_ypr: [f64; 3]) -> Self {
        let sq = |s: [f64; 3]| {
            Matrix3::from_diagonal(&Vector3::new(s[0] * s[0], s[1] * s[1], s[2] * s[2]))
        };
        Self {
            mean,
            cov_t: sq(std_t),
            cov_r: sq(std_ypr),
        }
    }

    /// Scalar dispersion `trace(cov_t) + beta * trace(cov_r)`.
    pub fn dispersion(&self, beta: f64) -> f64 {
        self.cov_t.trace() + beta * self.cov_r.trace()
    }
}

fn is_psd(m: &Matrix3<f64>) -> bool {
    if (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
        return false;
    }
    SymmetricEigen::new(*m)
        .eigenvalues
        .iter()
        .all(|&e| e >= -1e-12)
}

fn check_weights<'a, I>(weights: I) -> Result<f64, GeometryError>
where
    I: Iterator<Item = &'a f64>,
{
    let mut total = 0.0;
    let mut n = 0usize;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(GeometryError::BadWeight(w));
        }
        total += w;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptySet);
    }
    if total <= 0.0 {
        return Err(GeometryError::ZeroTotalWeight);
    }
    Ok(total)
}

/// Projects a 3x3 matrix onto the nearest rotation (Frobenius norm).
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Matrix3::identity(),
    };
    let d = (u * vt).determinant().signum();
    let mut fix = Matrix3::identity();
    fix[(2, 2)] = if d == 0.0 { 1.0 } else { d };
    // singular values come sorted descending, so the flip lands on the smallest
    u * fix * vt
}

/// Weighted pose mean: arithmetic translation mean and chordal rotation mean.
pub fn weighted_mean(particles: &[(f64, Pose)]) -> Result<Pose, GeometryError> {
    let total = check_weights(particles.iter().map(|(w, _)| w))?;
    let mut t = Vector3::zeros();
    let mut m = Matrix3::zeros();
    let mut first: Option<&Pose> = None;
    let mut single = true;
    for (w, p) in particles {
        if *w == 0.0 {
            continue;
        }
        match first {
            None => first = Some(p),
            Some(f) if f != p => single = false,
            _ => {}
        }
        let a = w / total;
        t += p.translation * a;
        m += p.rotation * a;
    }
    if single {
        if let Some(p) = first {
            return Ok(*p);
        }
    }
    Ok(Pose::new(project_to_so3(&m), t))
}

/// Weighted block covariance around `mean`.
pub fn weighted_variance(
    particles: &[(f64, Pose)],
    mean: &Pose,
) -> Result<PoseGaussian, GeometryError> {
    let total = check_weights(particles.iter().map(|(w, _)| w))?;
    let mut cov_t = Matrix3::zeros();
    let mut cov_r = Matrix3::zeros();
    let rt = mean.rotation.transpose();
    for (w, p) in particles {
        if *w == 0.0 {
            continue;
        }
        let a = w / total;
        let dt = p.translation - mean.translation;
        cov_t += dt * dt.transpose() * a;
        let dr = rotation_log(&(rt * p.rotation));
        cov_r += dr * dr.transpose() * a;
    }
    // symmetrize against rounding
    cov_t = (cov_t + cov_t.transpose()) * 0.5;
    cov_r = (cov_r + cov_r.transpose()) * 0.5;
    Ok(PoseGaussian {
        mean: *mean,
        cov_t,
        cov_r,
    })
}

/// Symmetric square root factor `L` with `L Lᵀ = cov`, tolerant of zero modes.
fn psd_factor(cov: &Matrix3<f64>) -> Matrix3<f64> {
    if cov.amax() == 0.0 {
        return Matrix3::zeros();
    }
    let eig = SymmetricEigen::new(*cov);
    let s = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&s)
}

fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Draws one pose from `g`.
///
/// The rotation is perturbed in the mean's tangent space; the translation
/// offset is drawn in the world frame so the sample translation covariance
/// equals `cov_t`. Equivalently this is `compose(mean, exp_map(δ))` for the
/// twist `δ` with rotation part `δφ` and body translation `V(δφ)⁻¹ Rᵀ δt`.
pub fn sample_gaussian_pose<R: Rng + ?Sized>(g: &PoseGaussian, rng: &mut R) -> Pose {
    let lt = psd_factor(&g.cov_t);
    let lr = psd_factor(&g.cov_r);
    let zt = standard_normal3(rng);
    let zr = standard_normal3(rng);
    if lt.amax() == 0.0 && lr.amax() == 0.0 {
        return g.mean;
    }
    let dt = lt * zt;
    let dphi = lr * zr;
    let local = Pose::new(rotation_exp(&dphi), g.mean.rotation.transpose() * dt);
    compose(&g.mean, &local)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    /// Truncated matrix power series of the 4x4 twist matrix.
    fn exp_series(xi: [f64; 6], terms: usize) -> nalgebra::Matrix4<f64> {
        let w = Vector3::new(xi[5], xi[4], xi[3]);
        let k = hat(&w);
        let mut m = nalgebra::Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&k);
        m[(0, 3)] = xi[0];
        m[(1, 3)] = xi[1];
        m[(2, 3)] = xi[2];
        let mut acc = nalgebra::Matrix4::identity();
        let mut term = nalgebra::Matrix4::identity();
        for n in 1..terms {
            term = term * m / n as f64;
            acc += term;
        }
        acc
    }

    #[test]
    fn compose_identity() {
        let i = Pose::identity();
        assert_eq!(compose(&i, &i), i);
    }

    #[test]
    fn compose_with_inverse() {
        let p = Pose::from_ypr(Vector3::new(1.0, -2.0, 0.5), 0.7, -0.2, 0.3);
        let q = compose(&p, &p.inverse());
        assert!(q.max_abs_diff(&Pose::identity()) < 1e-9);
    }

    #[test]
    fn compose_rotated_translation() {
        let a = Pose::new(rot_z(deg(90.0)), Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let c = compose(&a, &b);
        assert!((c.translation - Vector3::new(1.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn exp_zero_and_pure_translation() {
        assert_eq!(exp_map(&Twist::zero()), Pose::identity());
        let p = exp_map(&Twist::from_array([1.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap());
        assert_eq!(p.rotation, Matrix3::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn exp_quarter_yaw_matches_series() {
        let xi = [0.0, 0.0, 0.0, PI / 2.0, 0.0, 0.0];
        let p = exp_map(&Twist::from_array(xi).unwrap());
        let s = exp_series(xi, 20);
        for r in 0..3 {
            for c in 0..3 {
                assert!((p.rotation[(r, c)] - s[(r, c)]).abs() < 1e-9);
            }
        }
        assert!((p.rotation - rot_z(PI / 2.0)).amax() < 1e-12);
        assert!(p.translation.norm() < 1e-15);
    }

    #[test]
    fn exp_general_matches_series() {
        let xi = [0.3, -1.2, 0.8, 0.9, -0.4, 0.6];
        let p = exp_map(&Twist::from_array(xi).unwrap());
        let s = exp_series(xi, 40);
        for r in 0..3 {
            assert!((p.translation[r] - s[(r, 3)]).abs() < 1e-12);
            for c in 0..3 {
                assert!((p.rotation[(r, c)] - s[(r, c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        for th in [0.5e-6, 2e-6, 0.999e-3, 1.001e-3, 2e-3] {
            let xi = [1.0, 0.5, -0.3, th, 0.3 * th, 0.0];
            let p = exp_map(&Twist::from_array(xi).unwrap());
            let s = exp_series(xi, 12);
            for r in 0..3 {
                assert!((p.translation[r] - s[(r, 3)]).abs() < 1e-13);
                for c in 0..3 {
                    assert!((p.rotation[(r, c)] - s[(r, c)]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn log_identity_and_quarter_yaw() {
        let z = log_map(&Pose::identity()).unwrap();
        assert_eq!(z.to_array(), [0.0; 6]);
        let t = log_map(&Pose::new(rot_z(PI / 2.0), Vector3::zeros())).unwrap();
        let a = t.to_array();
        assert!((a[3] - PI / 2.0).abs() < 1e-12);
        assert!(a[0].abs() + a[1].abs() + a[2].abs() + a[4].abs() + a[5].abs() < 1e-12);
    }

    #[test]
    fn log_rejects_near_pi() {
        let p = Pose::new(rot_z(PI - 1e-8), Vector3::zeros());
        assert!(matches!(log_map(&p), Err(GeometryError::AngleNearPi(_))));
    }

    #[test]
    fn twist_rejects_branch_violation() {
        assert!(Twist::from_array([0.0, 0.0, 0.0, PI, 0.0, 0.0]).is_err());
        assert!(Twist::from_array([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn log_round_trip_03() {
        let xi = Twist::new(Vector3::new(0.2, -0.1, 0.4), Vector3::new(0.3, 0.0, 0.0)).unwrap();
        let back = log_map(&exp_map(&xi)).unwrap();
        for (a, b) in back.to_array().iter().zip(xi.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_log_handles_branch_cut() {
        let r = rot_z(PI);
        let w = rotation_log(&r);
        assert!((w.norm() - PI).abs() < 1e-9);
        assert!((rotation_exp(&w) - r).amax() < 1e-9);
    }

    #[test]
    fn mean_single_particle_is_exact() {
        let p = Pose::from_ypr(Vector3::new(0.1, 0.2, 0.3), 0.4, 0.05, -0.02);
        assert_eq!(weighted_mean(&[(1.0, p)]).unwrap(), p);
    }

    #[test]
    fn mean_symmetric_cases() {
        let a = Pose::from_translation(Vector3::zeros());
        let b = Pose::from_translation(Vector3::new(2.0, 0.0, 0.0));
        let m = weighted_mean(&[(0.5, a), (0.5, b)]).unwrap();
        assert_eq!(m.translation, Vector3::new(1.0, 0.0, 0.0));

        let p = Pose::from_ypr(Vector3::zeros(), deg(10.0), 0.0, 0.0);
        let q = Pose::from_ypr(Vector3::zeros(), deg(-10.0), 0.0, 0.0);
        let m = weighted_mean(&[(1.0, p), (1.0, q)]).unwrap();
        assert!(m.ypr().0.abs() < 1e-9);
        assert!((m.rotation - Matrix3::identity()).amax() < 1e-9);
    }

    #[test]
    fn mean_errors() {
        assert_eq!(weighted_mean(&[]), Err(GeometryError::EmptySet));
        assert_eq!(
            weighted_mean(&[(0.0, Pose::identity())]),
            Err(GeometryError::ZeroTotalWeight)
        );
        assert!(matches!(
            weighted_mean(&[(-1.0, Pose::identity())]),
            Err(GeometryError::BadWeight(_))
        ));
    }

    #[test]
    fn variance_cases() {
        let p = Pose::from_ypr(Vector3::new(1.0, 1.0, 1.0), 0.3, 0.0, 0.0);
        let set = vec![(0.25, p); 4];
        let g = weighted_variance(&set, &weighted_mean(&set).unwrap()).unwrap();
        assert_eq!(g.dispersion(1.0), 0.0);

        let a = Pose::from_translation(Vector3::new(-1.0, 0.0, 0.0));
        let b = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let set = [(1.0, a), (1.0, b)];
        let g = weighted_variance(&set, &weighted_mean(&set).unwrap()).unwrap();
        assert!((g.cov_t - Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 0.0))).amax() < 1e-15);
        assert!((g.dispersion(1.0) - 1.0).abs() < 1e-15);

        let set = [
            (1.0, a),
            (
                0.0,
                Pose::from_ypr(Vector3::new(3.0, 0.0, 0.0), 1.0, 0.0, 0.0),
            ),
        ];
        let g = weighted_variance(&set, &weighted_mean(&set).unwrap()).unwrap();
        assert_eq!(g.dispersion(1.0), 0.0);
    }

    #[test]
    fn variance_of_uniform_yaw_is_finite() {
        let set: Vec<_> = (0..36)
            .map(|i| {
                (
                    1.0,
                    Pose::from_ypr(Vector3::zeros(), -PI + i as f64 * PI / 18.0, 0.0, 0.0),
                )
            })
            .collect();
        let m = weighted_mean(&set).unwrap();
        let g = weighted_variance(&set, &m).unwrap();
        assert!(g.cov_r.trace().is_finite() && g.cov_r.trace() > 1.0);
    }

    #[test]
    fn sample_zero_covariance_returns_mean() {
        let mean = Pose::from_ypr(Vector3::new(1.0, 2.0, 0.5), 0.3, 0.1, 0.0);
        let g = PoseGaussian::new(mean, Matrix3::zeros(), Matrix3::zeros()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_gaussian_pose(&g, &mut rng), mean);
    }

    #[test]
    fn sample_translation_covariance() {
        let cov_t = Matrix3::from_diagonal(&Vector3::new(0.04, 0.04, 0.01));
        let mean = Pose::from_ypr(Vector3::new(0.5, -0.5, 1.0), 1.0, 0.0, 0.0);
        let g = PoseGaussian::new(mean, cov_t, Matrix3::zeros()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let samples: Vec<Vector3<f64>> = (0..n)
            .map(|_| sample_gaussian_pose(&g, &mut rng).translation - mean.translation)
            .collect();
        let mut c = Matrix3::zeros();
        for d in &samples {
            c += d * d.transpose();
        }
        c /= n as f64;
        for i in 0..3 {
            let rel = (c[(i, i)] - cov_t[(i, i)]).abs() / cov_t[(i, i)];
            assert!(rel < 0.05, "axis {i}: {} vs {}", c[(i, i)], cov_t[(i, i)]);
        }
    }

    #[test]
    fn sample_is_deterministic() {
        let g = PoseGaussian::from_stds(Pose::identity(), [0.2, 0.2, 0.1], [0.1, 0.02, 0.02]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16)
                .map(|_| sample_gaussian_pose(&g, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn projection_fixes_reflection() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -0.1));
        let r = project_to_so3(&m);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_major_round_trip() {
        let p = Pose::from_ypr(Vector3::new(0.1, 0.2, 0.3), 0.4, 0.5, 0.6);
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
        assert_eq!(s.matches(',').count(), 11);
    }
}
