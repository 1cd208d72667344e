//! The seven pre-pickup grasp features, measured at the converged squeeze
//! (after the target force is reached, before any loading).

use thiserror::Error;

use crate::contact::{ContactPoint, GripperState, SqueezeTelemetry};
use crate::mesh::TetMesh;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("finger {0} has no contact points; features are undefined for this grasp")]
    NoContacts(u8),
}

/// Pre-pickup grasp features. `patch_area` is a supplementary
/// mesh-resolution-robust companion to `num_contacts` (not one of the
/// seven standard features).
#[derive(Debug, Clone, Copy)]
pub struct FeatureRecord {
    /// Mean distance from each finger's contact-patch center to the center
    /// of mass (m).
    pub pure_dist: f64,
    /// Mean perpendicular distance from the COM to the line through each
    /// patch center along the finger normal (m).
    pub perp_dist: f64,
    /// Contact points per finger, averaged over the two fingers (may be a
    /// half-integer).
    pub num_contacts: f64,
    /// Mean distance from each finger's distal pad edge to its patch
    /// center (m).
    pub edge_dist: f64,
    /// Separation change from first contact to force convergence (m).
    pub squeeze_dist: f64,
    /// Finger separation at force convergence (m).
    pub gripper_sep: f64,
    /// Angle between the finger-0 inward normal and the global vertical
    /// (+z), in [0, pi].
    pub grav_align: f64,
    /// Mean one-ring surface area of the contacting nodes per finger (m^2).
    pub patch_area: f64,
}

/// Arithmetic mean of the contact positions on one finger (unweighted:
/// the patch center is geometric, not pressure-weighted).
pub fn contact_patch_center(contacts: &[ContactPoint], finger: u8) -> Option<Vec3> {
    let mut sum = Vec3::zeros();
    let mut count = 0usize;
    for c in contacts {
        if c.finger == finger && c.normal_force() > 0.0 {
            sum += c.position;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Computes all seven features from the converged squeeze state.
pub fn compute_features(
    contacts: &[ContactPoint],
    gripper: &GripperState,
    com: Vec3,
    telemetry: &SqueezeTelemetry,
    mesh: &TetMesh,
) -> Result<FeatureRecord, FeatureError> {
    let node_areas = mesh.node_surface_areas();
    let mut pure = 0.0;
    let mut perp = 0.0;
    let mut edge = 0.0;
    let mut count_sum = 0.0;
    let mut area_sum = 0.0;
    for finger in 0..2u8 {
        let center = contact_patch_center(contacts, finger).ok_or(FeatureError::NoContacts(finger))?;
        pure += (center - com).norm();
        let normal = gripper.inward_normal(finger);
        // Point-to-line distance from the COM to the line through the
        // patch center along the finger normal.
        let rel = com - center;
        perp += (rel - normal * rel.dot(&normal)).norm();
        // Distal edge sits at +length/2 along the approach axis; the patch
        // center's approach coordinate is the mean pad_uv.0.
        let mut a_mean = 0.0;
        let mut n = 0usize;
        let mut area = 0.0;
        for c in contacts {
            if c.finger == finger && c.normal_force() > 0.0 {
                a_mean += c.pad_uv.0;
                area += node_areas[c.node];
                n += 1;
            }
        }
        a_mean /= n as f64;
        edge += (gripper.pads.length / 2.0 - a_mean).max(0.0);
        count_sum += n as f64;
        area_sum += area;
    }
    let up = Vec3::z();
    let grav_align = gripper
        .inward_normal(0)
        .dot(&up)
        .clamp(-1.0, 1.0)
        .acos();
    Ok(FeatureRecord {
        pure_dist: pure / 2.0,
        perp_dist: perp / 2.0,
        num_contacts: count_sum / 2.0,
        edge_dist: edge / 2.0,
        squeeze_dist: (telemetry.separation_first_contact - telemetry.separation_converged)
            .max(0.0),
        gripper_sep: telemetry.separation_converged,
        grav_align,
        patch_area: area_sum / 2.0,
    })
}

/// Column order of the features CSV (plus the supplementary patch area).
pub const FEATURES_CSV_HEADER: &str =
    "grasp_id,pure_dist,perp_dist,num_contacts,edge_dist,squeeze_dist,gripper_sep,grav_align,patch_area";
