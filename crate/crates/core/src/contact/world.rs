//! Coupled contact world: finger pads (optionally force-driven), the
//! support plane, and their penalty/friction forces, exposed to the
//! implicit solver through the [`Coupling`] trait.

use super::gripper::{detect_pad_contacts, GripperKinematics, GripperMotion, GripperState, PadContact};
use super::{ContactParams, ContactPoint};
use crate::fem::solver::{Coupling, CouplingJacobian};
use crate::{Mat3, Vec3};

/// Support plane z = height(t): a frictional half-space below the object
/// that can lower itself (the pickup platform).
#[derive(Debug, Clone, Copy)]
pub struct PlaneMotion {
    pub z0: f64,
    /// Absolute simulation time at which lowering starts, if any.
    pub lower_start: Option<f64>,
    /// Lowering speed (m/s, positive down).
    pub speed: f64,
    /// Total lowering travel (m).
    pub travel: f64,
}

impl PlaneMotion {
    pub fn fixed(z0: f64) -> Self {
        Self {
            z0,
            lower_start: None,
            speed: 0.0,
            travel: 0.0,
        }
    }

    pub fn height(&self, t: f64) -> f64 {
        match self.lower_start {
            Some(t0) if t > t0 => self.z0 - (self.speed * (t - t0)).min(self.travel),
            _ => self.z0,
        }
    }

    pub fn velocity(&self, t: f64) -> f64 {
        match self.lower_start {
            Some(t0) if t > t0 && self.speed * (t - t0) < self.travel => -self.speed,
            _ => 0.0,
        }
    }
}

/// Everything rigid the deformable can touch, plus the finger drive
/// dynamics (two auxiliary scalar dofs while the fingers are active).
pub struct ContactWorld {
    pub gripper: GripperState,
    pub motion: GripperMotion,
    /// Absolute time at which `motion` started.
    pub motion_t0: f64,
    pub params: ContactParams,
    pub plane: Option<PlaneMotion>,
    /// Whether the fingers are force-driven aux dofs (true during
    /// squeezing) or locked (after freezing).
    pub fingers_active: bool,
    pub finger_mass: f64,
    pub finger_damping: f64,

    surface_nodes: Vec<usize>,
    /// Inward travel of each finger relative to `gripper.separation`.
    travel: [f64; 2],
    travel_vel: [f64; 2],

    detected_pads: Vec<PadContact>,
    detected_plane: Vec<usize>,
    pose_end: GripperKinematics,
    t_end: f64,

    /// Contact list at the end of the last committed step.
    pub contacts: Vec<ContactPoint>,
}


/// Smooth Coulomb friction: the tangential force opposes the slip velocity
/// with magnitude `cone * tanh(c_t |v_t| / cone)`, a C1 saturation that
/// stays strictly inside the friction cone. Returns the force, its PSD
/// velocity-Jacobian (negated, restricted to the tangent plane), and
/// whether the contact is effectively sliding (deep in saturation).
fn friction_force(v_t: &Vec3, normal: &Vec3, cone: f64, c_t: f64) -> (Vec3, Mat3, bool) {
    let s = v_t.norm();
    if cone <= 0.0 {
        // Zero-friction contacts have no tangential capacity at all and
        // count as permanently sliding.
        return (Vec3::zeros(), Mat3::zeros(), true);
    }
    let tangent_proj = Mat3::identity() - normal * normal.transpose();
    if s < 1e-12 {
        return (-v_t * c_t, tangent_proj * c_t, false);
    }
    let arg = c_t * s / cone;
    let t = arg.tanh();
    let dir = v_t / s;
    let force = -dir * (cone * t);
    let ddt = dir * dir.transpose();
    let along = c_t * (1.0 - t * t);
    let across = cone * t / s;
    let jac = ddt * along + (tangent_proj - ddt) * across;
    (force, jac, arg >= 2.0)
}

impl ContactWorld {
    pub fn new(
        gripper: GripperState,
        surface_nodes: Vec<usize>,
        params: ContactParams,
        plane: Option<PlaneMotion>,
    ) -> Self {
        let pose_end = GripperMotion::Hold.at(&gripper, 0.0);
        Self {
            gripper,
            motion: GripperMotion::Hold,
            motion_t0: 0.0,
            params,
            plane,
            fingers_active: true,
            finger_mass: 0.05,
            finger_damping: 100.0,
            surface_nodes,
            travel: [0.0; 2],
            travel_vel: [0.0; 2],
            detected_pads: Vec::new(),
            detected_plane: Vec::new(),
            pose_end,
            t_end: 0.0,
            contacts: Vec::new(),
        }
    }

    /// Current distance between the inner pad faces.
    pub fn separation(&self) -> f64 {
        self.gripper.separation - self.travel[0] - self.travel[1]
    }

    /// Locks the fingers at their current separation: travel is baked into
    /// the gripper state and the aux dofs disappear.
    pub fn freeze_fingers(&mut self) {
        self.gripper.separation = self.separation();
        self.travel = [0.0; 2];
        self.travel_vel = [0.0; 2];
        self.fingers_active = false;
        self.gripper.frozen = true;
    }

    /// Starts a prescribed gripper motion at absolute time `t0` from the
    /// current reference pose.
    pub fn set_motion(&mut self, motion: GripperMotion, t0: f64) {
        self.motion = motion;
        self.motion_t0 = t0;
    }

    /// Re-bases the reference pose to the gripper pose at absolute time `t`
    /// and resets the motion to Hold (used between experiment phases).
    pub fn rebase_pose(&mut self, t: f64) {
        let k = self.motion.at(&self.gripper, t - self.motion_t0);
        self.gripper.position = k.position;
        self.gripper.orientation = k.orientation;
        self.motion = GripperMotion::Hold;
        self.motion_t0 = t;
    }

    /// Sum of normal contact force on one finger from the last step.
    pub fn finger_normal_force(&self, finger: u8) -> f64 {
        self.contacts
            .iter()
            .filter(|c| c.finger == finger)
            .map(|c| c.normal_force())
            .sum()
    }

    /// Number of force-carrying contact points on one finger.
    pub fn finger_contact_count(&self, finger: u8) -> usize {
        self.contacts
            .iter()
            .filter(|c| c.finger == finger && c.normal_force() > 0.0)
            .count()
    }

    /// True when the finger touches the object and every contact sits on
    /// the friction cone boundary (the whole patch is sliding).
    pub fn finger_gross_slip(&self, finger: u8) -> bool {
        let mut any = false;
        for c in &self.contacts {
            if c.finger == finger && c.normal_force() > 0.0 {
                any = true;
                if !c.on_cone {
                    return false;
                }
            }
        }
        any
    }

    /// Gripper kinematics at the end of the in-flight step.
    pub fn end_pose(&self) -> &GripperKinematics {
        &self.pose_end
    }

    fn pad_planes(&self, travel: &[f64; 2]) -> [f64; 2] {
        [
            -self.gripper.separation / 2.0 + travel[0],
            self.gripper.separation / 2.0 - travel[1],
        ]
    }

    /// Evaluates all contact forces at a candidate configuration.
    /// When `jac` is provided the Jacobian contributions are accumulated;
    /// when `record` is provided the contact list is rebuilt.
    #[allow(clippy::too_many_arguments)]
    fn contact_pass(
        &self,
        x: &[Vec3],
        v: &[Vec3],
        travel: &[f64; 2],
        travel_vel: &[f64; 2],
        f_nodes: &mut [Vec3],
        f_aux: &mut [f64],
        mut jac: Option<&mut CouplingJacobian>,
        mut record: Option<&mut Vec<ContactPoint>>,
    ) {
        let mu = self.params.friction;
        let c_t = self.params.tangent_damping;
        let pose = &self.pose_end;
        let rot = pose.orientation.to_rotation_matrix().into_inner();
        let rot_t = rot.transpose();
        let s_axis = rot * Vec3::x();
        let planes = self.pad_planes(travel);

        for pc in &self.detected_pads {
            let node = pc.node;
            let f = pc.finger as usize;
            let local = rot_t * (x[node] - pose.position);
            let pen = if f == 0 {
                planes[0] - local.x
            } else {
                local.x - planes[1]
            };
            let normal = if f == 0 { s_axis } else { -s_axis };
            let (fn_mag, dfn) = self.params.normal_force(pen);
            if fn_mag <= 0.0 {
                if let Some(rec) = record.as_deref_mut() {
                    rec.push(ContactPoint {
                        node,
                        finger: pc.finger,
                        normal,
                        force: Vec3::zeros(),
                        position: x[node],
                        pad_uv: (local.z, local.y),
                        penetration: 0.0,
                        on_cone: false,
                    });
                }
                continue;
            }
            // Pad material velocity at the contact: rigid motion plus the
            // finger's own travel along the squeeze axis.
            let travel_dir = if f == 0 { s_axis } else { -s_axis };
            let v_pad = pose.linear_velocity
                + pose.angular_velocity.cross(&(x[node] - pose.position))
                + travel_dir * travel_vel[f];
            let v_rel = v[node] - v_pad;
            let v_t = v_rel - normal * v_rel.dot(&normal);
            let cone = mu * fn_mag;
            let (f_t, f_t_jac, on_cone) = friction_force(&v_t, &normal, cone, c_t);
            let force = normal * fn_mag + f_t;
            f_nodes[node] += force;
            if self.fingers_active {
                f_aux[f] -= fn_mag;
            }
            if let Some(j) = jac.as_deref_mut() {
                let stiff = normal * normal.transpose() * dfn;
                j.node_blocks.push((node, stiff, f_t_jac));
                if self.fingers_active {
                    j.cross.push((node, f, -normal * dfn));
                    j.aux[f].0 += dfn;
                }
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(ContactPoint {
                    node,
                    finger: pc.finger,
                    normal,
                    force,
                    position: x[node],
                    pad_uv: (local.z, local.y),
                    penetration: pen.max(0.0),
                    on_cone,
                });
            }
        }

        if let Some(plane) = &self.plane {
            let z_p = plane.height(self.t_end);
            let v_plane = Vec3::new(0.0, 0.0, plane.velocity(self.t_end));
            let normal = Vec3::z();
            for &node in &self.detected_plane {
                let pen = z_p - x[node].z;
                let (fn_mag, dfn) = self.params.normal_force(pen);
                if fn_mag <= 0.0 {
                    continue;
                }
                let v_rel = v[node] - v_plane;
                let v_t = v_rel - normal * v_rel.dot(&normal);
                let cone = mu * fn_mag;
                let (f_t, f_t_jac, on_cone) = friction_force(&v_t, &normal, cone, c_t);
                let force = normal * fn_mag + f_t;
                f_nodes[node] += force;
                if let Some(j) = jac.as_deref_mut() {
                    let stiff = normal * normal.transpose() * dfn;
                    j.node_blocks.push((node, stiff, f_t_jac));
                }
                if let Some(rec) = record.as_deref_mut() {
                    rec.push(ContactPoint {
                        node,
                        finger: ContactPoint::PLANE,
                        normal,
                        force,
                        position: x[node],
                        pad_uv: (x[node].x, x[node].y),
                        penetration: pen.max(0.0),
                        on_cone,
                    });
                }
            }
        }

        // Finger drive and damper.
        if self.fingers_active {
            for f in 0..2 {
                f_aux[f] += self.gripper.drive_force[f] - self.finger_damping * travel_vel[f];
                if let Some(j) = jac.as_deref_mut() {
                    j.aux[f].1 += self.finger_damping;
                }
            }
        }
    }
}

impl Coupling for ContactWorld {
    fn n_aux(&self) -> usize {
        if self.fingers_active {
            2
        } else {
            0
        }
    }

    fn aux_masses(&self) -> Vec<f64> {
        if self.fingers_active {
            vec![self.finger_mass; 2]
        } else {
            Vec::new()
        }
    }

    fn aux_state(&self) -> (Vec<f64>, Vec<f64>) {
        if self.fingers_active {
            (self.travel.to_vec(), self.travel_vel.to_vec())
        } else {
            (Vec::new(), Vec::new())
        }
    }

    fn begin_step(&mut self, x: &[Vec3], t_end: f64) {
        self.t_end = t_end;
        self.pose_end = self.motion.at(&self.gripper, t_end - self.motion_t0);
        self.detected_pads = detect_pad_contacts(
            x,
            &self.surface_nodes,
            &self.gripper,
            &self.pose_end,
            self.travel,
            self.params.margin,
        )
        .into_iter()
        .map(|(pc, _)| pc)
        .collect();
        self.detected_plane.clear();
        if let Some(plane) = &self.plane {
            let z_p = plane.height(t_end);
            for &n in &self.surface_nodes {
                if z_p - x[n].z >= -self.params.margin {
                    self.detected_plane.push(n);
                }
            }
        }
    }

    fn eval(
        &mut self,
        x: &[Vec3],
        v: &[Vec3],
        q: &[f64],
        qdot: &[f64],
        _t_end: f64,
        f_nodes: &mut [Vec3],
        f_aux: &mut [f64],
        jac: &mut CouplingJacobian,
    ) {
        let (travel, travel_vel) = if self.fingers_active {
            ([q[0], q[1]], [qdot[0], qdot[1]])
        } else {
            (self.travel, self.travel_vel)
        };
        self.contact_pass(
            x,
            v,
            &travel,
            &travel_vel,
            f_nodes,
            f_aux,
            Some(jac),
            None,
        );
    }

    fn commit(&mut self, x: &[Vec3], v: &[Vec3], q: &[f64], qdot: &[f64]) {
        if self.fingers_active {
            self.travel = [q[0], q[1]];
            self.travel_vel = [qdot[0], qdot[1]];
        }
        let mut contacts = Vec::new();
        let mut f_nodes = vec![Vec3::zeros(); x.len()];
        let mut f_aux = [0.0; 2];
        let (travel, travel_vel) = (self.travel, self.travel_vel);
        self.contact_pass(
            x,
            v,
            &travel,
            &travel_vel,
            &mut f_nodes,
            &mut f_aux[..self.n_aux()],
            None,
            Some(&mut contacts),
        );
        self.contacts = contacts;
    }

    fn jacobian_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        mix(self.fingers_active as u64);
        mix(self.detected_pads.len() as u64);
        for pc in &self.detected_pads {
            mix((pc.node as u64) << 2 | pc.finger as u64);
        }
        mix(self.detected_plane.len() as u64);
        for &n in &self.detected_plane {
            mix(n as u64);
        }
        h
    }
}

/// Stateless contact query against a stationary gripper: surface nodes at
/// or inside the pads within `margin`, with penetration depth and zero
/// force (grazing convention).
pub fn detect_contacts(
    positions: &[Vec3],
    surface_nodes: &[usize],
    gripper: &GripperState,
    margin: f64,
) -> Vec<ContactPoint> {
    let pose = GripperMotion::Hold.at(gripper, 0.0);
    let rot_t = pose.orientation.to_rotation_matrix().into_inner().transpose();
    detect_pad_contacts(positions, surface_nodes, gripper, &pose, [0.0; 2], margin)
        .into_iter()
        .map(|(pc, pen)| {
            let local = rot_t * (positions[pc.node] - pose.position);
            ContactPoint {
                node: pc.node,
                finger: pc.finger,
                normal: gripper.inward_normal(pc.finger),
                force: Vec3::zeros(),
                position: positions[pc.node],
                pad_uv: (local.z, local.y),
                penetration: pen.max(0.0),
                on_cone: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::PadGeometry;
    use crate::mesh::primitives::box_grid;
    use crate::UnitQuat;

    #[test]
    fn detect_contacts_empty_when_object_clears() {
        let mut mesh = box_grid(0.04, 0.04, 0.04, 2, 2, 2, 1000.0).unwrap();
        for p in &mut mesh.nodes {
            *p -= Vec3::new(0.02, 0.02, 0.02);
        }
        let g = GripperState::new(Vec3::zeros(), UnitQuat::identity(), 0.05, PadGeometry::default());
        let hits = detect_contacts(&mesh.nodes, &mesh.surface_nodes(), &g, 1e-4);
        assert!(hits.is_empty());
    }

    #[test]
    fn plane_motion_profile() {
        let p = PlaneMotion {
            z0: 0.0,
            lower_start: Some(1.0),
            speed: 0.05,
            travel: 0.1,
        };
        assert_eq!(p.height(0.5), 0.0);
        assert!((p.height(2.0) - -0.05).abs() < 1e-12);
        assert!((p.height(10.0) - -0.1).abs() < 1e-12);
        assert_eq!(p.velocity(2.0), -0.05);
        assert_eq!(p.velocity(10.0), 0.0);
    }
}
