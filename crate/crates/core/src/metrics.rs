//! Grasp performance metrics: pickup success, peak stress, rigid-removed
//! deformation, strain energy, linear/angular instability, and deformation
//! controllability.

use crate::fem::{von_mises, SimState};
use crate::{Mat3, Vec3};

/// The seven performance metrics of one grasp. Every field is optional:
/// metrics of experiments that did not run (or failed) stay absent, never
/// zero.
#[derive(Debug, Clone, Default)]
pub struct MetricRecord {
    pub pickup_success: Option<bool>,
    /// Peak von Mises stress over all elements (Pa).
    pub max_stress: Option<f64>,
    /// Peak rigid-removed nodal displacement (m).
    pub max_deformation: Option<f64>,
    /// Elastic strain energy (J).
    pub strain_energy: Option<f64>,
    /// Mean loss-of-contact acceleration over the direction set (m/s^2).
    pub linear_instability: Option<f64>,
    /// Mean loss-of-contact angular acceleration over the axis set (rad/s^2).
    pub angular_instability: Option<f64>,
    /// Max deformation over the reorientation states (m).
    pub deformation_controllability: Option<f64>,
}

/// Best-fit rigid transform (rotation + translation) from one point set to
/// another, plus a degeneracy flag when the cloud had no usable rotational
/// content (collinear points) and the fit fell back to translation only.
#[derive(Debug, Clone)]
pub struct RigidFit {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub degenerate: bool,
}

/// Orthogonal (Kabsch) alignment: the rigid transform minimizing
/// `sum_i || R p_i + t - q_i ||^2` with uniform weights.
pub fn kabsch(pre: &[Vec3], post: &[Vec3]) -> RigidFit {
    assert_eq!(pre.len(), post.len());
    let n = pre.len() as f64;
    let c_pre: Vec3 = pre.iter().sum::<Vec3>() / n;
    let c_post: Vec3 = post.iter().sum::<Vec3>() / n;
    let mut h = Mat3::zeros();
    for (p, q) in pre.iter().zip(post) {
        h += (q - c_post) * (p - c_pre).transpose();
    }
    // h maps pre-frame deviations to post-frame: R = polar factor of h.
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    let det = (u * v_t).determinant();
    if det < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    // Rank deficiency of the cross-covariance: collinear (or coincident)
    // clouds leave the rotation about the degenerate axes arbitrary.
    let degenerate = svd.singular_values[1] <= 1e-12 * svd.singular_values[0].max(1e-300);
    let (rotation, translation) = if degenerate {
        (Mat3::identity(), c_post - c_pre)
    } else {
        (rotation, c_post - rotation * c_pre)
    };
    RigidFit {
        rotation,
        translation,
        degenerate,
    }
}

/// Residual displacement field after removing the best rigid transform:
/// `q_i - (R p_i + t)`.
pub fn deformation_field(pre: &[Vec3], post: &[Vec3]) -> (Vec<Vec3>, RigidFit) {
    let fit = kabsch(pre, post);
    let field = pre
        .iter()
        .zip(post)
        .map(|(p, q)| q - (fit.rotation * p + fit.translation))
        .collect();
    (field, fit)
}

/// Max Euclidean norm over a displacement field.
pub fn max_deformation(field: &[Vec3]) -> f64 {
    field.iter().map(|d| d.norm()).fold(0.0, f64::max)
}

/// Max von Mises stress over the elements of a state.
pub fn max_von_mises_over_elements(state: &SimState) -> f64 {
    state
        .elem_stresses
        .iter()
        .map(von_mises)
        .fold(0.0, f64::max)
}

/// Mean loss-of-contact acceleration over a direction set. `None` entries
/// never lost contact and contribute the acceleration limit (censoring);
/// returns the mean and the censored count.
pub fn instability(loss_accelerations: &[Option<f64>], limit: f64) -> (f64, usize) {
    let censored = loss_accelerations.iter().filter(|a| a.is_none()).count();
    let sum: f64 = loss_accelerations
        .iter()
        .map(|a| a.unwrap_or(limit))
        .sum();
    (sum / loss_accelerations.len() as f64, censored)
}

/// Deformation controllability: max over the reorientation states of the
/// per-state max deformation. States that lost the object are excluded
/// (flagged upstream).
pub fn deformation_controllability(state_maxima: &[f64]) -> f64 {
    state_maxima.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};

    fn random_cloud(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn rigid_motion_leaves_no_residual() {
        let pre = random_cloud(1000, 5);
        let rot = Rotation3::from_euler_angles(0.3, -1.2, 2.2).into_inner();
        let t = Vec3::new(0.4, -0.2, 0.9);
        let post: Vec<Vec3> = pre.iter().map(|p| rot * p + t).collect();
        let (field, fit) = deformation_field(&pre, &post);
        assert!(!fit.degenerate);
        assert!(max_deformation(&field) <= 1e-9);
        assert!((fit.rotation - rot).amax() < 1e-9);
    }

    #[test]
    fn single_moved_node_leaves_positive_residual() {
        let pre = random_cloud(50, 6);
        let mut post = pre.clone();
        let d = 1e-3;
        post[17].x += d;
        let (field, _) = deformation_field(&pre, &post);
        let m = max_deformation(&field);
        assert!(m > 0.0 && m <= d + 1e-12);
    }

    #[test]
    fn stretch_after_rigid_motion_is_recovered() {
        // A symmetric cube lattice has isotropic covariance, so composing
        // a pure stretch with a rigid motion leaves the stretch exactly
        // recoverable: residual_i = Q (A - I) p_i.
        let mut pre = Vec::new();
        let m = 7;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    pre.push(Vec3::new(
                        i as f64 - 3.0,
                        j as f64 - 3.0,
                        k as f64 - 3.0,
                    ));
                }
            }
        }
        let stretch = Mat3::from_diagonal(&Vec3::new(1.001, 0.999, 1.0005));
        let q = Rotation3::from_euler_angles(0.5, 0.6, -0.4).into_inner();
        let t = Vec3::new(0.1, 0.2, -0.3);
        let post: Vec<Vec3> = pre.iter().map(|p| q * (stretch * p) + t).collect();
        let (field, fit) = deformation_field(&pre, &post);
        assert!(!fit.degenerate);
        for (p, f) in pre.iter().zip(&field) {
            let expect = q * ((stretch - Mat3::identity()) * p);
            assert!(
                (f - expect).norm() <= 1e-8,
                "residual mismatch {:?}",
                (f - expect).norm()
            );
        }
    }

    #[test]
    fn collinear_cloud_falls_back_to_translation() {
        let pre: Vec<Vec3> = (0..30).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let post: Vec<Vec3> = pre.iter().map(|p| p + Vec3::new(0.5, 0.1, 0.0)).collect();
        let (field, fit) = deformation_field(&pre, &post);
        assert!(fit.degenerate);
        assert!(max_deformation(&field) < 1e-12);
    }

    #[test]
    fn rigid_removal_never_increases_objective() {
        let pre = random_cloud(200, 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let post: Vec<Vec3> = pre
            .iter()
            .map(|p| {
                p + Vec3::new(
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                )
            })
            .collect();
        let (field, _) = deformation_field(&pre, &post);
        let raw: f64 = pre
            .iter()
            .zip(&post)
            .map(|(p, q)| (q - p).norm_squared())
            .sum();
        let fitted: f64 = field.iter().map(|d| d.norm_squared()).sum();
        assert!(fitted <= raw + 1e-12);
    }

    #[test]
    fn instability_censoring() {
        let (mean, censored) = instability(&[None, None, None], 50.0);
        assert_eq!(mean, 50.0);
        assert_eq!(censored, 3);
        let (mean, censored) = instability(&[Some(0.0), Some(0.0)], 50.0);
        assert_eq!(mean, 0.0);
        assert_eq!(censored, 0);
        let (mean, censored) = instability(&[Some(10.0), None], 50.0);
        assert_eq!(mean, 30.0);
        assert_eq!(censored, 1);
    }

    #[test]
    fn max_deformation_basics() {
        assert_eq!(max_deformation(&[]), 0.0);
        assert_eq!(max_deformation(&[Vec3::zeros()]), 0.0);
        let f = vec![Vec3::zeros(), Vec3::new(0.0, 1e-3, 0.0)];
        assert_eq!(max_deformation(&f), 1e-3);
    }
}
