//! Rigid parallel-jaw gripper: pad geometry, pose, and prescribed motion.

use crate::{Mat3, UnitQuat, Vec3};

/// Finger pad rectangles. The pads face each other across the squeeze
/// axis; the rectangle spans the approach axis (length) and the width
/// axis. The paper's generic gripper: 0.04 m max travel per finger.
#[derive(Debug, Clone, Copy)]
pub struct PadGeometry {
    /// Extent along the width axis (m).
    pub width: f64,
    /// Extent along the approach axis (m).
    pub length: f64,
    /// Maximum travel of each finger (m); max opening = 2 x this.
    pub max_half_travel: f64,
}

impl Default for PadGeometry {
    fn default() -> Self {
        Self {
            width: 0.02,
            length: 0.04,
            max_half_travel: 0.04,
        }
    }
}

impl PadGeometry {
    pub fn max_opening(&self) -> f64 {
        2.0 * self.max_half_travel
    }
}

/// Gripper pose and opening.
///
/// Local frame: x = squeeze axis (finger 0 pushes along +x), y = pad width
/// axis, z = approach axis (+z points from the palm towards the
/// fingertips, so the distal pad edge sits at +length/2). The position is
/// the midpoint between the pads.
#[derive(Debug, Clone)]
pub struct GripperState {
    pub position: Vec3,
    pub orientation: UnitQuat,
    /// Distance between the two inner pad faces (m).
    pub separation: f64,
    pub pads: PadGeometry,
    /// Commanded drive force per finger (N), set by the controller.
    pub drive_force: [f64; 2],
    /// Frozen fingers keep their separation exactly.
    pub frozen: bool,
}

impl GripperState {
    pub fn new(position: Vec3, orientation: UnitQuat, separation: f64, pads: PadGeometry) -> Self {
        assert!(separation >= 0.0 && separation <= pads.max_opening() + 1e-12);
        Self {
            position,
            orientation,
            separation,
            pads,
            drive_force: [0.0; 2],
            frozen: false,
        }
    }

    pub fn squeeze_axis(&self) -> Vec3 {
        self.orientation * Vec3::x()
    }

    pub fn width_axis(&self) -> Vec3 {
        self.orientation * Vec3::y()
    }

    pub fn approach_axis(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    /// Inward pad normal of a finger in world coordinates.
    pub fn inward_normal(&self, finger: u8) -> Vec3 {
        let s = self.squeeze_axis();
        if finger == 0 {
            s
        } else {
            -s
        }
    }

    /// World-to-local rotation.
    pub fn world_to_local(&self) -> Mat3 {
        self.orientation.to_rotation_matrix().into_inner().transpose()
    }
}

/// Prescribed rigid motion of the gripper from a reference pose, driven by
/// the experiment protocols.
#[derive(Debug, Clone, Copy)]
pub enum GripperMotion {
    /// Stationary.
    Hold,
    /// Constant linear jerk from rest along `dir`: a(t) = jerk * t.
    LinearJerk { dir: Vec3, jerk: f64 },
    /// Constant angular jerk about `axis` through the finger midpoint.
    AngularJerk { axis: Vec3, jerk: f64 },
    /// Constant-rate rotation about `axis` through the finger midpoint up
    /// to `target_angle`, then hold.
    RotateConst {
        axis: Vec3,
        speed: f64,
        target_angle: f64,
    },
}

/// Pose, velocity, and angular velocity of the gripper at elapsed motion
/// time `tau` from the reference pose.
#[derive(Debug, Clone)]
pub struct GripperKinematics {
    pub position: Vec3,
    pub orientation: UnitQuat,
    pub linear_velocity: Vec3,
    pub angular_velocity: Vec3,
    /// Magnitude of the commanded linear or angular acceleration (for the
    /// instability experiments' loss records).
    pub accel_magnitude: f64,
}

impl GripperMotion {
    pub fn at(&self, reference: &GripperState, tau: f64) -> GripperKinematics {
        let tau = tau.max(0.0);
        match *self {
            GripperMotion::Hold => GripperKinematics {
                position: reference.position,
                orientation: reference.orientation,
                linear_velocity: Vec3::zeros(),
                angular_velocity: Vec3::zeros(),
                accel_magnitude: 0.0,
            },
            GripperMotion::LinearJerk { dir, jerk } => GripperKinematics {
                position: reference.position + dir * (jerk * tau * tau * tau / 6.0),
                orientation: reference.orientation,
                linear_velocity: dir * (jerk * tau * tau / 2.0),
                angular_velocity: Vec3::zeros(),
                accel_magnitude: jerk * tau,
            },
            GripperMotion::AngularJerk { axis, jerk } => {
                let angle = jerk * tau * tau * tau / 6.0;
                let rot = UnitQuat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
                GripperKinematics {
                    position: reference.position,
                    orientation: rot * reference.orientation,
                    linear_velocity: Vec3::zeros(),
                    angular_velocity: axis * (jerk * tau * tau / 2.0),
                    accel_magnitude: jerk * tau,
                }
            }
            GripperMotion::RotateConst {
                axis,
                speed,
                target_angle,
            } => {
                let angle = (speed * tau).min(target_angle);
                let moving = speed * tau < target_angle;
                let rot = UnitQuat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
                GripperKinematics {
                    position: reference.position,
                    orientation: rot * reference.orientation,
                    linear_velocity: Vec3::zeros(),
                    angular_velocity: if moving { axis * speed } else { Vec3::zeros() },
                    accel_magnitude: 0.0,
                }
            }
        }
    }
}

/// Raw pad-contact candidate produced by detection.
#[derive(Debug, Clone, Copy)]
pub struct PadContact {
    pub node: usize,
    pub finger: u8,
}

/// Detects surface nodes at or inside the inner pad half-spaces, within the
/// pad rectangle expanded by `margin`. `finger_travel` are the inward
/// travels of the two fingers relative to `gripper.separation`.
///
/// Returns candidates with their current penetration (can be negative up
/// to `-margin` for grazing contact).
pub fn detect_pad_contacts(
    positions: &[crate::Vec3],
    surface_nodes: &[usize],
    gripper: &GripperState,
    pose: &GripperKinematics,
    finger_travel: [f64; 2],
    margin: f64,
) -> Vec<(PadContact, f64)> {
    let rot_t = pose.orientation.to_rotation_matrix().into_inner().transpose();
    let half_w = gripper.pads.width / 2.0 + margin;
    let half_l = gripper.pads.length / 2.0 + margin;
    let plane0 = -gripper.separation / 2.0 + finger_travel[0];
    let plane1 = gripper.separation / 2.0 - finger_travel[1];
    let mut out = Vec::new();
    for &n in surface_nodes {
        let local = rot_t * (positions[n] - pose.position);
        if local.y.abs() > half_w || local.z.abs() > half_l {
            continue;
        }
        let pen0 = plane0 - local.x;
        if pen0 >= -margin {
            out.push((PadContact { node: n, finger: 0 }, pen0));
        }
        let pen1 = local.x - plane1;
        if pen1 >= -margin {
            out.push((PadContact { node: n, finger: 1 }, pen1));
        }
    }
    out
}
