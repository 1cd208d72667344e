//! Rigid parallel-jaw gripper, penalty-based Coulomb contact against the
//! finger pads and the support plane, the low-pass filtered force
//! controller, and the squeeze-to-force procedure.

mod gripper;
mod squeeze;
mod world;

pub use gripper::{GripperKinematics, GripperMotion, GripperState, PadGeometry};
pub use squeeze::{squeeze_to_force, SqueezeError, SqueezeOutcome, SqueezeSettings, SqueezeTelemetry};
pub use world::{detect_contacts, ContactWorld, PlaneMotion};

use crate::Vec3;

/// One node-vs-pad (or node-vs-plane) contact.
#[derive(Debug, Clone)]
pub struct ContactPoint {
    pub node: usize,
    /// 0 or 1 for the fingers, [`ContactPoint::PLANE`] for the support plane.
    pub finger: u8,
    /// Inward unit normal of the pad (direction the pad pushes the object).
    pub normal: Vec3,
    /// Total contact force on the node (N), normal + friction.
    pub force: Vec3,
    /// World position of the node.
    pub position: Vec3,
    /// Pad-plane coordinates of the contact: (approach axis, width axis).
    pub pad_uv: (f64, f64),
    /// Penetration depth (m); zero for grazing entries inside the margin.
    pub penetration: f64,
    /// Whether the friction force sits on the Coulomb cone boundary (the
    /// contact is sliding).
    pub on_cone: bool,
}

impl ContactPoint {
    pub const PLANE: u8 = 2;

    pub fn normal_force(&self) -> f64 {
        self.force.dot(&self.normal).max(0.0)
    }

    pub fn tangential_force(&self) -> Vec3 {
        self.force - self.normal * self.force.dot(&self.normal)
    }
}

/// Penalty contact parameters.
#[derive(Debug, Clone, Copy)]
pub struct ContactParams {
    /// Normal penalty stiffness per node (N/m).
    pub normal_stiffness: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Detection margin (m): nodes within this distance of a pad surface
    /// are tracked (with zero force until they penetrate).
    pub margin: f64,
    /// Viscous tangential stiffness (N s/m) used inside the friction cone.
    pub tangent_damping: f64,
    /// Half-width (m) of the compliant shell around each rigid surface.
    /// The normal force blends in quadratically from `-smooth_depth` to
    /// `+smooth_depth` penetration, so the force is C1 everywhere and in
    /// particular across zero gap; Newton cannot converge through contact
    /// changes on a hard kink. Light contacts hover inside the shell,
    /// biasing separations by at most this amount (it cancels in squeeze
    /// distances).
    pub smooth_depth: f64,
}

impl ContactParams {
    /// Stiffness scaled from the material and the mesh's per-node contact
    /// length: `k_n = 100 E l_c`, roughly 100x the per-node elastic
    /// stiffness so penetrations stay two orders below elastic deflections.
    ///
    /// The modulus entering the scale is capped at 20 MPa: past that,
    /// penetrations at grasp-scale forces are already orders of magnitude
    /// below any measured quantity, and harder penalties only stiffen the
    /// contact-onset transient.
    pub fn for_mesh(mesh: &crate::mesh::TetMesh, youngs_modulus: f64, friction: f64, dt: f64) -> Self {
        let k_n = 100.0 * youngs_modulus.min(2e7) * mesh.contact_length_scale();
        Self {
            normal_stiffness: k_n,
            friction,
            margin: 5e-4,
            tangent_damping: k_n * dt,
            smooth_depth: 1e-4,
        }
    }

    /// Normal force magnitude and its derivative at a (signed) penetration
    /// depth: zero below `-smooth_depth`, quadratic through the shell,
    /// then linear `k_n * pen` past `+smooth_depth`.
    pub fn normal_force(&self, pen: f64) -> (f64, f64) {
        let k = self.normal_stiffness;
        let w = self.smooth_depth;
        let p = pen + w;
        if p <= 0.0 {
            (0.0, 0.0)
        } else if p < 2.0 * w {
            (k * p * p / (4.0 * w), k * p / (2.0 * w))
        } else {
            (k * pen, k)
        }
    }
}

/// First-order low-pass filter applied to the raw contact force signals.
#[derive(Debug, Clone, Copy)]
pub struct ForceFilter {
    pub alpha: f64,
    pub state: f64,
}

impl ForceFilter {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0 && alpha <= 1.0, "alpha must be in (0, 1]");
        Self { alpha, state: 0.0 }
    }

    /// state <- alpha * raw + (1 - alpha) * state.
    pub fn update(&mut self, raw: f64) -> f64 {
        self.state = self.alpha * raw + (1.0 - self.alpha) * self.state;
        self.state
    }
}

/// PI force controller producing the per-finger drive force.
#[derive(Debug, Clone, Copy)]
pub struct ForceController {
    pub kp: f64,
    pub ki: f64,
    pub f_max: f64,
    integral: f64,
}

impl ForceController {
    pub fn new(kp: f64, ki: f64, f_max: f64) -> Self {
        Self {
            kp,
            ki,
            f_max,
            integral: 0.0,
        }
    }

    /// PI law on the force error, clamped to [0, f_max] with integral
    /// anti-windup.
    pub fn update(&mut self, filtered: f64, target: f64, dt: f64) -> f64 {
        let error = target - filtered;
        self.integral = (self.integral + self.ki * error * dt).clamp(0.0, self.f_max);
        (self.kp * error + self.integral).clamp(0.0, self.f_max)
    }
}

/// Target squeeze force `F_p = 1.3 m g / mu`: enough to support the
/// object's weight through friction with a safety factor.
pub fn target_force(mass: f64, friction: f64, gravity: f64) -> f64 {
    1.3 * mass * gravity / friction
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn target_force_values() {
        let f = target_force(0.064, 0.7, 9.81);
        assert_relative_eq!(f, 1.3 * 0.064 * 9.81 / 0.7, max_relative = 1e-12);
        assert_relative_eq!(f, 1.1662, max_relative = 1e-3);
        // mu doubled halves the force; zero mass gives zero.
        assert_relative_eq!(target_force(0.064, 1.4, 9.81), f / 2.0, max_relative = 1e-12);
        assert_eq!(target_force(0.0, 0.7, 9.81), 0.0);
    }

    #[test]
    fn filter_identity_and_convergence() {
        let mut f = ForceFilter::new(1.0);
        assert_eq!(f.update(3.25), 3.25);

        let mut f = ForceFilter::new(0.1);
        for _ in 0..400 {
            f.update(2.0);
        }
        assert_relative_eq!(f.state, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn filter_alternating_amplitude() {
        // Alternating +/-1 input with alpha = 0.1: the steady oscillation
        // amplitude is alpha / (2 - alpha) = 1/19 < 0.06 (geometric series).
        let mut f = ForceFilter::new(0.1);
        let mut last = 0.0;
        for k in 0..10_000 {
            let raw = if k % 2 == 0 { 1.0 } else { -1.0 };
            last = f.update(raw);
        }
        let expected = 0.1 / (2.0 - 0.1);
        assert!(last.abs() < 0.06);
        assert_relative_eq!(last.abs(), expected, max_relative = 1e-6);
    }

    #[test]
    fn filter_output_is_convex_combination_of_history() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut f = ForceFilter::new(0.3);
        let mut lo = 0.0f64; // initial state counts as history
        let mut hi = 0.0f64;
        for _ in 0..200 {
            let raw = rng.gen_range(-5.0..5.0);
            lo = lo.min(raw);
            hi = hi.max(raw);
            let out = f.update(raw);
            assert!(out >= lo - 1e-12 && out <= hi + 1e-12);
        }
    }

    #[test]
    fn controller_basics() {
        let mut c = ForceController::new(2.0, 50.0, 10.0);
        // Zero error: drive equals the integral term only.
        let d0 = c.update(1.0, 1.0, 1e-3);
        assert_eq!(d0, c.integral);
        // Below target: drive positive (closing).
        let d1 = c.update(0.0, 1.0, 1e-3);
        assert!(d1 > 0.0);
        // Clamped to [0, f_max].
        for _ in 0..100_000 {
            c.update(0.0, 100.0, 1e-3);
        }
        assert!(c.update(0.0, 100.0, 1e-3) <= 10.0);
        let mut c2 = ForceController::new(2.0, 50.0, 10.0);
        assert_eq!(c2.update(5.0, 0.0, 1e-3), 0.0);
    }
}
