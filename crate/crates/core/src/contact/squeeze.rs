//! Squeeze-to-force: close the force-driven fingers until the filtered
//! per-finger contact force converges to the target.

use thiserror::Error;

use super::world::ContactWorld;
use super::{ForceController, ForceFilter};
use crate::fem::solver::{Boundary, ImplicitSolver};
use crate::fem::{FemError, SimState};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum SqueezeError {
    #[error("squeeze did not converge within {budget:.2} s (filtered forces {f0:.3} / {f1:.3} N, target {target:.3} N)")]
    Budget {
        budget: f64,
        f0: f64,
        f1: f64,
        target: f64,
    },
    #[error("fingers closed to {separation:.4e} m without reaching the target force (grasp misses the object)")]
    FingersClosed { separation: f64 },
    #[error(transparent)]
    Sim(#[from] FemError),
}

/// Controller and convergence settings for one squeeze.
#[derive(Debug, Clone, Copy)]
pub struct SqueezeSettings {
    /// Per-finger target normal force (N).
    pub target_force: f64,
    /// Convergence band as a fraction of the target (0.05 = +/-5%).
    pub band: f64,
    /// Time both fingers must stay inside the band (s).
    pub band_hold: f64,
    /// Simulated-time budget (s).
    pub budget: f64,
    /// Low-pass smoothing factor for the contact force signals.
    pub filter_alpha: f64,
    pub kp: f64,
    pub ki: f64,
    pub f_max: f64,
    /// Closing speed per finger before first contact (m/s); the PI force
    /// loop takes over once a pad carries force.
    pub approach_speed: f64,
}

impl SqueezeSettings {
    pub fn for_target(target_force: f64) -> Self {
        Self {
            target_force,
            band: 0.05,
            band_hold: 0.2,
            budget: 5.0,
            filter_alpha: 0.05,
            kp: 2.0,
            ki: 60.0,
            f_max: (10.0 * target_force).max(5.0),
            approach_speed: 0.03,
        }
    }
}

/// What the squeeze recorded.
#[derive(Debug, Clone, Copy)]
pub struct SqueezeTelemetry {
    pub separation_initial: f64,
    /// Separation when the pads first carried force.
    pub separation_first_contact: f64,
    /// Separation when the force converged.
    pub separation_converged: f64,
    /// Simulated time spent squeezing.
    pub elapsed: f64,
    /// Filtered per-finger forces at convergence.
    pub filtered_forces: [f64; 2],
}

/// Outcome of [`squeeze_to_force`]; the state and world are advanced in
/// place, this carries the telemetry.
pub type SqueezeOutcome = SqueezeTelemetry;

/// Runs the force-controlled squeeze until the filtered per-finger normal
/// force stays within the band around the target for `band_hold` seconds.
///
/// `f_ext` must already include gravity. Gripper collisions with the
/// support plane do not exist in this model (only the object touches the
/// plane), matching the experiment protocol.
pub fn squeeze_to_force(
    solver: &mut ImplicitSolver,
    state: &mut SimState,
    world: &mut ContactWorld,
    f_ext: &[Vec3],
    settings: &SqueezeSettings,
) -> Result<SqueezeOutcome, SqueezeError> {
    let dt = solver.settings.dt;
    let target = settings.target_force;
    let mut filters = [
        ForceFilter::new(settings.filter_alpha),
        ForceFilter::new(settings.filter_alpha),
    ];
    let mut controller = ForceController::new(settings.kp, settings.ki, settings.f_max);
    let boundary = Boundary::free();

    let separation_initial = world.separation();
    let mut separation_first_contact = None;
    let mut in_band_since: Option<f64> = None;
    let start = state.time;

    loop {
        let elapsed = state.time - start;
        if elapsed > settings.budget {
            return Err(SqueezeError::Budget {
                budget: settings.budget,
                f0: filters[0].state,
                f1: filters[1].state,
                target,
            });
        }
        let raw = [
            world.finger_normal_force(0),
            world.finger_normal_force(1),
        ];
        let filtered = [filters[0].update(raw[0]), filters[1].update(raw[1])];
        // Speed-limited approach until a pad carries force, then one
        // symmetric PI drive for both fingers (single-actuator jaw).
        let drive = if separation_first_contact.is_none() {
            world.finger_damping * settings.approach_speed
        } else {
            controller.update(0.5 * (filtered[0] + filtered[1]), target, dt)
        };
        world.gripper.drive_force = [drive; 2];

        solver.step(state, f_ext, &boundary, world)?;

        if separation_first_contact.is_none()
            && (world.finger_normal_force(0) > 0.0 || world.finger_normal_force(1) > 0.0)
        {
            separation_first_contact = Some(world.separation());
        }
        if world.separation() < 1e-5 {
            return Err(SqueezeError::FingersClosed {
                separation: world.separation(),
            });
        }

        let in_band = filtered
            .iter()
            .all(|f| (f - target).abs() <= settings.band * target);
        match (in_band, in_band_since) {
            (true, None) => in_band_since = Some(state.time),
            (false, Some(_)) => in_band_since = None,
            _ => {}
        }
        if let Some(t0) = in_band_since {
            if state.time - t0 >= settings.band_hold {
                return Ok(SqueezeTelemetry {
                    separation_initial,
                    separation_first_contact: separation_first_contact
                        .unwrap_or(separation_initial),
                    separation_converged: world.separation(),
                    elapsed: state.time - start,
                    filtered_forces: filtered,
                });
            }
        }
    }
}
