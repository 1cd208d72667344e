//! Procedural test meshes: boxes, ellipsoids, and rods.
//!
//! These generators exist so the test-suite, benches, and quick-start
//! examples do not depend on external mesh assets. All generators are
//! deterministic.

use super::{signed_volume, MeshError, TetMesh};
use crate::Vec3;

/// The classic 5-tetrahedron decomposition of the unit cube `[0,1]^3`:
/// one central tet of volume 1/3 plus four corner tets of volume 1/6.
pub fn unit_cube_5() -> (Vec<Vec3>, Vec<[usize; 4]>) {
    // Node index = x + 2y + 4z over corner bits.
    let nodes: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                (i & 1) as f64,
                ((i >> 1) & 1) as f64,
                ((i >> 2) & 1) as f64,
            )
        })
        .collect();
    let mut tets = vec![
        [1, 2, 4, 7], // central
        [0, 1, 2, 4],
        [1, 3, 2, 7],
        [1, 5, 7, 4],
        [2, 7, 6, 4],
    ];
    orient_positive(&nodes, &mut tets);
    (nodes, tets)
}

/// Axis-aligned box `[0,sx] x [0,sy] x [0,sz]` subdivided into an
/// `nx x ny x nz` grid of cells, each split into 6 tetrahedra (Kuhn
/// decomposition, conforming across cells).
pub fn box_grid(
    sx: f64,
    sy: f64,
    sz: f64,
    nx: usize,
    ny: usize,
    nz: usize,
    density: f64,
) -> Result<TetMesh, MeshError> {
    let (nodes, tets) = box_grid_raw(sx, sy, sz, nx, ny, nz);
    TetMesh::new(nodes, tets, density)
}

/// Raw node/tet arrays for [`box_grid`].
pub fn box_grid_raw(
    sx: f64,
    sy: f64,
    sz: f64,
    nx: usize,
    ny: usize,
    nz: usize,
) -> (Vec<Vec3>, Vec<[usize; 4]>) {
    let idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Vec3::new(
                    sx * i as f64 / nx as f64,
                    sy * j as f64 / ny as f64,
                    sz * k as f64 / nz as f64,
                ));
            }
        }
    }
    // Kuhn: one tet per permutation of the axis walk 000 -> 111.
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(nx * ny * nz * 6);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for perm in PERMS {
                    let mut corner = [i, j, k];
                    let mut t = [idx(corner[0], corner[1], corner[2]); 4];
                    for (step, &axis) in perm.iter().enumerate() {
                        corner[axis] += 1;
                        t[step + 1] = idx(corner[0], corner[1], corner[2]);
                    }
                    tets.push(t);
                }
            }
        }
    }
    orient_positive(&nodes, &mut tets);
    (nodes, tets)
}

/// Solid ellipsoid with semi-axes `(a, b, c)` centered at the origin,
/// built by mapping an `n x n x n` box grid of the cube `[-1,1]^3` onto
/// the unit ball (infinity-norm to 2-norm radial map) and scaling.
pub fn ellipsoid(a: f64, b: f64, c: f64, n: usize, density: f64) -> Result<TetMesh, MeshError> {
    let (mut nodes, mut tets) = box_grid_raw(2.0, 2.0, 2.0, n, n, n);
    for p in &mut nodes {
        let q = *p - Vec3::new(1.0, 1.0, 1.0);
        let linf = q.x.abs().max(q.y.abs()).max(q.z.abs());
        let l2 = q.norm();
        let ball = if l2 > 1e-12 { q * (linf / l2) } else { Vec3::zeros() };
        *p = Vec3::new(a * ball.x, b * ball.y, c * ball.z);
    }
    orient_positive(&nodes, &mut tets);
    TetMesh::new(nodes, tets, density)
}

/// Slender rod along x: length `len`, square cross-section `side x side`,
/// with `n_len` cells along the axis and `n_side` across.
pub fn rod(
    len: f64,
    side: f64,
    n_len: usize,
    n_side: usize,
    density: f64,
) -> Result<TetMesh, MeshError> {
    box_grid(len, side, side, n_len, n_side, n_side, density)
}

fn orient_positive(nodes: &[Vec3], tets: &mut [[usize; 4]]) {
    for t in tets.iter_mut() {
        let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]];
        if signed_volume(&p) < 0.0 {
            t.swap(2, 3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_grid_volume_exact() {
        let m = box_grid(0.04, 0.03, 0.02, 4, 3, 2, 1000.0).unwrap();
        let vol: f64 = m.elem_volumes.iter().sum();
        assert_relative_eq!(vol, 0.04 * 0.03 * 0.02, max_relative = 1e-12);
    }

    #[test]
    fn ellipsoid_volume_close_to_analytic() {
        let m = ellipsoid(0.03, 0.02, 0.015, 6, 1000.0).unwrap();
        let vol: f64 = m.elem_volumes.iter().sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.03 * 0.02 * 0.015;
        // Faceted ball underestimates the smooth volume.
        assert!(vol > 0.85 * exact && vol < exact, "vol = {vol}, exact = {exact}");
    }

    #[test]
    fn rod_is_valid() {
        let m = rod(0.1, 0.015, 12, 2, 1000.0).unwrap();
        assert!(m.n_tets() > 0);
    }
}
