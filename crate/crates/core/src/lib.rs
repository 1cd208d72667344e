//! Deterministic CPU grasp-evaluation simulator for 3D deformable objects.
//!
//! Couples a corotational linear FEM model of a tetrahedralized object to a
//! rigid parallel-jaw gripper through penalty-based Coulomb contact, runs a
//! battery of grasp experiments (pickup, reorientation, linear/angular
//! acceleration), and computes pre-pickup grasp features plus post-hoc
//! performance metrics.
//!
//! Everything is deterministic: a fixed mesh, material, grasp, and seed
//! reproduce results bitwise, independent of the number of worker threads
//! (parallelism is only ever applied across independent simulation
//! instances, merged by index).

pub mod contact;
pub mod exec;
pub mod experiments;
pub mod features;
pub mod fem;
pub mod mesh;
pub mod metrics;
pub mod sampler;
pub mod vtk;

/// 3D vector of f64, the working scalar type everywhere.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix of f64.
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Unit quaternion used for rigid orientations.
pub type UnitQuat = nalgebra::UnitQuaternion<f64>;

/// Standard gravity (m/s^2), used as the default in run configurations.
pub const STANDARD_GRAVITY: f64 = 9.81;
