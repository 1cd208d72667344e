//! Tetrahedral volumetric meshes: loading, validation, and derived data
//! (surface triangles, element volumes, lumped nodal masses).
//!
//! A [`TetMesh`] is immutable after construction and safe to share
//! read-only across concurrent simulation instances.

mod io;
pub mod primitives;

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::Vec3;

pub use io::{parse_gmsh_v2, parse_tet_ascii, write_tet_ascii};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("i/o error reading mesh: {0}")]
    Io(#[from] std::io::Error),
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("mesh validation failed: {0}")]
    Validation(String),
}

/// Tetrahedral mesh with derived surface, volumes, and lumped masses.
#[derive(Debug, Clone)]
pub struct TetMesh {
    /// Rest positions of the nodes (m), in file order.
    pub nodes: Vec<Vec3>,
    /// Tetrahedra as 4-tuples of node indices, positively oriented.
    pub tets: Vec<[usize; 4]>,
    /// Boundary triangles, oriented with outward normals.
    pub surface_tris: Vec<[usize; 3]>,
    /// Rest volume of each tetrahedron (m^3).
    pub elem_volumes: Vec<f64>,
    /// Lumped mass of each node (kg): density x quarter volume of incident tets.
    pub node_masses: Vec<f64>,
    /// Total mass (kg).
    pub total_mass: f64,
    /// Uniform density (kg/m^3).
    pub density: f64,
}

/// Volume of a tetrahedron given its four corners: |det([p1-p0, p2-p0, p3-p0])| / 6.
///
/// Degenerate (coplanar) corners give 0; the sign check happens during mesh
/// validation via [`signed_volume`].
pub fn element_volume(p: &[Vec3; 4]) -> f64 {
    signed_volume(p).abs()
}

/// Signed volume of a tetrahedron; positive when (p1-p0, p2-p0, p3-p0) is a
/// right-handed triple.
pub fn signed_volume(p: &[Vec3; 4]) -> f64 {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    e1.dot(&e2.cross(&e3)) / 6.0
}

/// The four faces of a tet, each wound so its normal points out of the tet
/// (valid for positively oriented tets).
pub fn tet_faces(t: &[usize; 4]) -> [[usize; 3]; 4] {
    [
        [t[1], t[2], t[3]],
        [t[0], t[3], t[2]],
        [t[0], t[1], t[3]],
        [t[0], t[2], t[1]],
    ]
}

/// Area-weighted (unnormalized) normal of a triangle; |result| = 2 x area.
pub fn tri_area_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (b - a).cross(&(c - a))
}

impl TetMesh {
    /// Builds and validates a mesh from raw nodes and connectivity.
    ///
    /// Rejects empty meshes, out-of-range indices, inverted or degenerate
    /// elements, and meshes with more than one connected component.
    pub fn new(nodes: Vec<Vec3>, tets: Vec<[usize; 4]>, density: f64) -> Result<Self, MeshError> {
        if !(density > 0.0) {
            return Err(MeshError::Validation(format!(
                "density must be positive, got {density}"
            )));
        }
        if nodes.is_empty() || tets.is_empty() {
            return Err(MeshError::Validation("mesh has no nodes or no tets".into()));
        }
        let n = nodes.len();
        for (e, t) in tets.iter().enumerate() {
            for &i in t {
                if i >= n {
                    return Err(MeshError::Validation(format!(
                        "tet {e} references node {i}, but mesh has {n} nodes"
                    )));
                }
            }
            let (a, b, c, d) = (t[0], t[1], t[2], t[3]);
            if a == b || a == c || a == d || b == c || b == d || c == d {
                return Err(MeshError::Validation(format!(
                    "tet {e} has repeated node indices {t:?}"
                )));
            }
        }

        let mut elem_volumes = Vec::with_capacity(tets.len());
        for (e, t) in tets.iter().enumerate() {
            let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]];
            let v = signed_volume(&p);
            if !(v > 0.0) {
                return Err(MeshError::Validation(format!(
                    "tet {e} is inverted or degenerate (signed volume {v:.3e})"
                )));
            }
            elem_volumes.push(v);
        }

        // Single connected component over shared nodes.
        let mut uf = UnionFind::new(n);
        for t in &tets {
            uf.union(t[0], t[1]);
            uf.union(t[0], t[2]);
            uf.union(t[0], t[3]);
        }
        let root = uf.find(tets[0][0]);
        // A node used by no tet is also a defect (it would carry zero mass).
        for i in 0..n {
            if uf.find(i) != root {
                return Err(MeshError::Validation(format!(
                    "mesh is not a single connected component (node {i} is disconnected)"
                )));
            }
        }

        let surface_tris = extract_surface_impl(&nodes, &tets)?;

        let mut node_masses = vec![0.0; n];
        for (t, &v) in tets.iter().zip(&elem_volumes) {
            let quarter = density * v / 4.0;
            for &i in t {
                node_masses[i] += quarter;
            }
        }
        let total_mass: f64 = density * elem_volumes.iter().sum::<f64>();

        Ok(TetMesh {
            nodes,
            tets,
            surface_tris,
            elem_volumes,
            node_masses,
            total_mass,
            density,
        })
    }

    /// Loads a mesh from a Gmsh ASCII v2.2 file (`.msh`) or the plain `.tet`
    /// format, validating it and deriving surface/volumes/masses.
    pub fn load(path: &Path, density: f64) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        let (nodes, tets) = if text.trim_start().starts_with("$MeshFormat") {
            parse_gmsh_v2(&text)?
        } else if text.trim_start().starts_with("tet") {
            parse_tet_ascii(&text)?
        } else {
            match path.extension().and_then(|e| e.to_str()) {
                Some("msh") => parse_gmsh_v2(&text)?,
                Some("tet") => parse_tet_ascii(&text)?,
                _ => {
                    return Err(MeshError::Parse {
                        line: 1,
                        msg: "unrecognized mesh format (expected Gmsh v2.2 or .tet)".into(),
                    })
                }
            }
        };
        Self::new(nodes, tets, density)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    /// Indices of the nodes that appear in at least one surface triangle,
    /// sorted ascending.
    pub fn surface_nodes(&self) -> Vec<usize> {
        let mut flag = vec![false; self.nodes.len()];
        for t in &self.surface_tris {
            for &i in t {
                flag[i] = true;
            }
        }
        (0..self.nodes.len()).filter(|&i| flag[i]).collect()
    }

    /// Total area of the boundary surface (m^2).
    pub fn surface_area(&self) -> f64 {
        self.surface_tris
            .iter()
            .map(|t| {
                0.5 * tri_area_normal(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]])
                    .norm()
            })
            .sum()
    }

    /// One-ring surface area attributed to each node: one third of every
    /// incident surface triangle.
    pub fn node_surface_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.nodes.len()];
        for t in &self.surface_tris {
            let a = 0.5
                * tri_area_normal(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]]).norm();
            for &i in t {
                areas[i] += a / 3.0;
            }
        }
        areas
    }

    /// Mass-weighted centroid of the given node positions (defaults to the
    /// rest shape when passed `&mesh.nodes`).
    pub fn center_of_mass(&self, positions: &[Vec3]) -> Vec3 {
        let mut c = Vec3::zeros();
        for (p, &m) in positions.iter().zip(&self.node_masses) {
            c += m * p;
        }
        c / self.total_mass
    }

    /// Axis-aligned bounding box of the rest shape.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Characteristic per-node contact length scale: sqrt of the mean
    /// one-ring surface area of the boundary nodes.
    pub fn contact_length_scale(&self) -> f64 {
        let sn = self.surface_nodes();
        (self.surface_area() / sn.len() as f64).sqrt()
    }
}

/// Extract the oriented boundary triangles of a validated tet soup: faces
/// referenced by exactly one tetrahedron, keeping the outward winding.
pub fn extract_surface(mesh: &TetMesh) -> Vec<[usize; 3]> {
    // The stored surface was derived at construction; recompute for callers
    // that want the operation itself.
    extract_surface_impl(&mesh.nodes, &mesh.tets).expect("validated mesh has a valid surface")
}

fn extract_surface_impl(
    nodes: &[Vec3],
    tets: &[[usize; 4]],
) -> Result<Vec<[usize; 3]>, MeshError> {
    // Sorted node triple -> (count, oriented face as first seen).
    let mut faces: HashMap<[usize; 3], (u32, [usize; 3])> = HashMap::new();
    for t in tets {
        for f in tet_faces(t) {
            let mut key = f;
            key.sort_unstable();
            let entry = faces.entry(key).or_insert((0, f));
            entry.0 += 1;
            if entry.0 > 2 {
                return Err(MeshError::Validation(format!(
                    "face {key:?} is shared by more than two tets"
                )));
            }
        }
    }
    // Deterministic order: sweep tets again and emit faces seen exactly once.
    let mut surface = Vec::new();
    for t in tets {
        for f in tet_faces(t) {
            let mut key = f;
            key.sort_unstable();
            if faces[&key].0 == 1 {
                surface.push(f);
            }
        }
    }
    // Closed-surface check: every boundary edge shared by exactly two tris.
    let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
    for f in &surface {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = if a < b { (a, b) } else { (b, a) };
            *edges.entry(key).or_insert(0) += 1;
        }
    }
    for (e, c) in &edges {
        if *c != 2 {
            return Err(MeshError::Validation(format!(
                "boundary surface is not closed: edge {e:?} borders {c} triangles"
            )));
        }
    }
    let _ = nodes;
    Ok(surface)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{unit_cube_5, box_grid};
    use approx::assert_relative_eq;

    fn unit_cube_mesh() -> TetMesh {
        let (nodes, tets) = unit_cube_5();
        TetMesh::new(nodes, tets, 1000.0).unwrap()
    }

    #[test]
    fn unit_cube_mass_and_volume() {
        let m = unit_cube_mesh();
        assert_eq!(m.n_tets(), 5);
        let vol: f64 = m.elem_volumes.iter().sum();
        assert_relative_eq!(vol, 1.0, max_relative = 1e-12);
        assert_relative_eq!(m.total_mass, 1000.0, max_relative = 1e-12);
        let mass_sum: f64 = m.node_masses.iter().sum();
        assert_relative_eq!(mass_sum, m.density * vol, max_relative = 1e-12);
    }

    #[test]
    fn regular_tet_volume() {
        // Regular tetrahedron with unit edge: V = 1/(6 sqrt(2)).
        let s = 1.0_f64;
        let p = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(s, 0.0, 0.0),
            Vec3::new(s / 2.0, s * 3.0_f64.sqrt() / 2.0, 0.0),
            Vec3::new(s / 2.0, s / (2.0 * 3.0_f64.sqrt()), s * (2.0_f64 / 3.0).sqrt()),
        ];
        let v = element_volume(&p);
        assert_relative_eq!(v, 1.0 / (6.0 * 2.0_f64.sqrt()), max_relative = 1e-12);
    }

    #[test]
    fn canonical_tet_volume_and_scaling() {
        let p = [
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        assert_relative_eq!(element_volume(&p), 1.0 / 6.0, max_relative = 1e-15);
        let scaled = [p[0] * 2.0, p[1] * 2.0, p[2] * 2.0, p[3] * 2.0];
        assert_relative_eq!(element_volume(&scaled), 8.0 / 6.0, max_relative = 1e-15);
        let coplanar = [p[0], p[1], p[2], Vec3::new(0.5, 0.5, 0.0)];
        assert_eq!(element_volume(&coplanar), 0.0);
    }

    #[test]
    fn inverted_tet_rejected() {
        let nodes = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        // Swapped winding -> negative signed volume.
        let err = TetMesh::new(nodes, vec![[0, 2, 1, 3]], 1000.0).unwrap_err();
        assert!(matches!(err, MeshError::Validation(_)));
    }

    #[test]
    fn disconnected_mesh_rejected() {
        let mut nodes = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let far = Vec3::new(10.0, 0.0, 0.0);
        nodes.extend([
            far,
            far + Vec3::new(1.0, 0.0, 0.0),
            far + Vec3::new(0.0, 1.0, 0.0),
            far + Vec3::new(0.0, 0.0, 1.0),
        ]);
        let err = TetMesh::new(nodes, vec![[0, 1, 2, 3], [4, 5, 6, 7]], 1000.0).unwrap_err();
        assert!(matches!(err, MeshError::Validation(_)));
    }

    #[test]
    fn single_tet_surface() {
        let nodes = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let m = TetMesh::new(nodes, vec![[0, 1, 2, 3]], 1000.0).unwrap();
        assert_eq!(m.surface_tris.len(), 4);
    }

    #[test]
    fn two_tets_shared_face_absent() {
        let nodes = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 1.0, 1.0),
        ];
        // Second tet shares face (1,2,3); wound so both are positive.
        let m = TetMesh::new(nodes, vec![[0, 1, 2, 3], [1, 2, 3, 4]], 1000.0).unwrap();
        assert_eq!(m.surface_tris.len(), 6);
        for t in &m.surface_tris {
            let mut k = *t;
            k.sort_unstable();
            assert_ne!(k, [1, 2, 3], "shared face must not be on the surface");
        }
    }

    #[test]
    fn unit_cube_surface_area() {
        let m = unit_cube_mesh();
        assert_eq!(m.surface_tris.len(), 12);
        assert_relative_eq!(m.surface_area(), 6.0, max_relative = 1e-12);
    }

    #[test]
    fn surface_normals_point_outward() {
        let m = box_grid(1.0, 1.0, 1.0, 2, 2, 2, 1000.0).unwrap();
        let centroid = Vec3::new(0.5, 0.5, 0.5);
        for t in &m.surface_tris {
            let (a, b, c) = (m.nodes[t[0]], m.nodes[t[1]], m.nodes[t[2]]);
            let n = tri_area_normal(&a, &b, &c);
            let face_center = (a + b + c) / 3.0;
            assert!(
                n.dot(&(face_center - centroid)) > 0.0,
                "face {t:?} normal points inward"
            );
        }
    }

    #[test]
    fn divergence_theorem_on_surface() {
        let m = box_grid(0.04, 0.03, 0.02, 3, 2, 2, 1000.0).unwrap();
        let mut sum = Vec3::zeros();
        let mut total_area = 0.0;
        for t in &m.surface_tris {
            let n = tri_area_normal(&m.nodes[t[0]], &m.nodes[t[1]], &m.nodes[t[2]]) * 0.5;
            total_area += n.norm();
            sum += n;
        }
        assert!(sum.norm() <= 1e-10 * total_area, "sum = {sum:?}");
    }

    #[test]
    fn lumped_mass_is_quarter_volumes() {
        let m = box_grid(0.1, 0.02, 0.02, 4, 2, 2, 800.0).unwrap();
        let mut expect = vec![0.0; m.n_nodes()];
        for (t, &v) in m.tets.iter().zip(&m.elem_volumes) {
            for &i in t {
                expect[i] += 800.0 * v / 4.0;
            }
        }
        for (a, b) in m.node_masses.iter().zip(&expect) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn surface_edges_shared_by_two_tris() {
        let m = box_grid(0.05, 0.04, 0.03, 3, 3, 2, 1000.0).unwrap();
        let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &m.surface_tris {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }
}
