//! Sparse symmetric linear algebra for the implicit solver.
//!
//! Matrices are stored as block-CSR (3x3 blocks over the node adjacency
//! graph, pattern fixed by the mesh). Systems are solved either by a
//! direct profile (skyline) LDL^T factorization under a reverse
//! Cuthill-McKee ordering, or by block-Jacobi preconditioned conjugate
//! gradients above the direct-size threshold. Both paths are fully
//! deterministic.

use crate::{Mat3, Vec3};

use super::FemError;

/// Unknown-count threshold below which the direct factorization is used.
pub const DIRECT_SOLVE_MAX_DOFS: usize = 10_000;

/// Symmetric block-sparse matrix over the mesh node graph.
pub struct BlockCsr {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    blocks: Vec<Mat3>,
}

impl BlockCsr {
    /// Builds the pattern from element connectivity: node i couples to
    /// node j when they share a tet (plus the diagonal).
    pub fn from_tets(n_nodes: usize, tets: &[[usize; 4]]) -> Self {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for i in 0..n_nodes {
            neighbors[i].push(i);
        }
        for t in tets {
            for &a in t {
                for &b in t {
                    if a != b {
                        neighbors[a].push(b);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
            col_idx.extend_from_slice(list);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n_nodes,
            row_ptr,
            col_idx,
            blocks: vec![Mat3::zeros(); nnz],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Offset of block (i, j) in the value array, if present.
    pub fn block_offset(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|k| lo + k)
    }

    pub fn zero(&mut self) {
        for b in &mut self.blocks {
            *b = Mat3::zeros();
        }
    }

    pub fn add_block(&mut self, offset: usize, m: &Mat3) {
        self.blocks[offset] += m;
    }

    pub fn add_diag_block(&mut self, node: usize, m: &Mat3) {
        let off = self
            .block_offset(node, node)
            .expect("diagonal block always present");
        self.blocks[off] += m;
    }

    /// y = A x (block form).
    pub fn matvec(&self, x: &[Vec3], y: &mut [Vec3]) {
        for i in 0..self.n_nodes {
            let mut acc = Vec3::zeros();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.blocks[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// Applies node constraints symmetrically: zeroes the rows and columns
    /// of constrained nodes and puts identity on their diagonal blocks.
    pub fn constrain_nodes(&mut self, constrained: &[bool]) {
        for i in 0..self.n_nodes {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if constrained[i] || constrained[j] {
                    self.blocks[k] = if i == j {
                        Mat3::identity()
                    } else {
                        Mat3::zeros()
                    };
                }
            }
        }
    }

    fn iter_upper(&self) -> impl Iterator<Item = (usize, usize, &Mat3)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).filter_map(move |k| {
                let j = self.col_idx[k];
                (j >= i).then_some((i, j, &self.blocks[k]))
            })
        })
    }
}

/// Reverse Cuthill-McKee ordering of the node graph, seeded from a
/// pseudo-peripheral node found by a double BFS. Deterministic.
pub fn reverse_cuthill_mckee(matrix: &BlockCsr) -> Vec<usize> {
    let n = matrix.n_nodes;
    let degree =
        |i: usize| -> usize { matrix.row_ptr[i + 1] - matrix.row_ptr[i] - 1 };

    let bfs_farthest = |start: usize| -> usize {
        let mut seen = vec![false; n];
        let mut frontier = vec![start];
        seen[start] = true;
        let mut last = start;
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for &u in &frontier {
                for k in matrix.row_ptr[u]..matrix.row_ptr[u + 1] {
                    let v = matrix.col_idx[k];
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if let Some(&u) = next.first() {
                last = u;
            }
            frontier = next;
        }
        last
    };

    let seed = (0..n).min_by_key(|&i| (degree(i), i)).unwrap_or(0);
    let start = bfs_farthest(bfs_farthest(seed));

    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        let mut nbrs: Vec<usize> = (matrix.row_ptr[u]..matrix.row_ptr[u + 1])
            .map(|k| matrix.col_idx[k])
            .filter(|&v| !seen[v])
            .collect();
        nbrs.sort_unstable_by_key(|&v| (degree(v), v));
        for v in nbrs {
            seen[v] = true;
            queue.push_back(v);
        }
    }
    // Disconnected pieces cannot occur on validated meshes, but stay total.
    for i in 0..n {
        if !seen[i] {
            order.push(i);
        }
    }
    order.reverse();
    order
}

/// Profile (skyline) LDL^T factorization of the 3n x 3n scalar expansion of
/// a [`BlockCsr`], under a fixed node permutation. The symbolic structure
/// is computed once; numeric refactorization reuses it.
pub struct SkylineFactor {
    n: usize,
    /// inv_perm[old] = new node.
    inv_perm: Vec<usize>,
    /// First (lowest) row of each column's stored profile.
    col_start: Vec<usize>,
    /// Offset of each column's data; column j occupies data[col_ptr[j]..col_ptr[j+1]]
    /// holding rows col_start[j]..j.
    col_ptr: Vec<usize>,
    data: Vec<f64>,
    diag: Vec<f64>,
    factored: bool,
}

impl SkylineFactor {
    /// Symbolic setup: profile from the matrix pattern under RCM.
    pub fn new(matrix: &BlockCsr) -> Self {
        let perm = reverse_cuthill_mckee(matrix);
        let mut inv_perm = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let n = matrix.n_nodes * 3;
        let mut col_start: Vec<usize> = (0..n).collect();
        for (i, j, _) in matrix.iter_upper() {
            // Scalar dofs of old nodes i<=j under the permutation; either
            // may come first after renumbering.
            let (pi, pj) = (inv_perm[i], inv_perm[j]);
            let (lo, hi) = if pi <= pj { (pi, pj) } else { (pj, pi) };
            for a in 0..3 {
                let col = 3 * hi + a;
                let first = 3 * lo;
                if first < col_start[col] {
                    col_start[col] = first;
                }
            }
        }
        // Columns of one node share the node's profile start; also rows
        // within the diagonal block: column 3k+a reaches down to 3k.
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut total = 0usize;
        for j in 0..n {
            total += j - col_start[j];
            col_ptr.push(total);
        }
        Self {
            n,
            inv_perm,
            col_start,
            col_ptr,
            data: vec![0.0; total],
            diag: vec![0.0; n],
            factored: false,
        }
    }

    /// Number of stored profile entries (memory proxy).
    pub fn profile_len(&self) -> usize {
        self.data.len()
    }

    /// Loads the scalar values of `matrix` into the profile and factors
    /// A = U^T D U in place. Fails if a non-positive pivot appears.
    pub fn factor(&mut self, matrix: &BlockCsr) -> Result<(), FemError> {
        self.data.fill(0.0);
        self.diag.fill(0.0);
        for (i, j, b) in matrix.iter_upper() {
            let (pi, pj) = (self.inv_perm[i], self.inv_perm[j]);
            for a in 0..3 {
                for c in 0..3 {
                    if i == j && a > c {
                        continue; // keep upper of diagonal blocks
                    }
                    // Scalar entry (3*pi+a, 3*pj+c); swap into the upper
                    // triangle when the permutation flipped the order (the
                    // value is unchanged by symmetry).
                    let (mut r, mut col) = (3 * pi + a, 3 * pj + c);
                    if r > col {
                        std::mem::swap(&mut r, &mut col);
                    }
                    let val = b[(a, c)];
                    if r == col {
                        self.diag[r] += val;
                    } else {
                        let off = self.col_ptr[col] + (r - self.col_start[col]);
                        self.data[off] += val;
                    }
                }
            }
        }

        // COLSOL-style LDL^T: column sweep with a scratch column.
        let mut v = vec![0.0f64; self.n];
        for j in 0..self.n {
            let fj = self.col_start[j];
            for i in fj..j {
                let fi = self.col_start[i];
                let lo = fi.max(fj);
                let mut s = self.data[self.col_ptr[j] + (i - fj)];
                let col_i = self.col_ptr[i];
                for k in lo..i {
                    s -= self.data[col_i + (k - fi)] * v[k];
                }
                v[i] = s;
                let d = self.diag[i];
                if d == 0.0 {
                    return Err(FemError::LinearSolve(format!(
                        "zero pivot at dof {i} during skyline factorization"
                    )));
                }
                self.data[self.col_ptr[j] + (i - fj)] = s / d;
            }
            let mut d = self.diag[j];
            for i in fj..j {
                d -= v[i] * self.data[self.col_ptr[j] + (i - fj)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(FemError::LinearSolve(format!(
                    "non-positive pivot {d:.3e} at dof {j} (matrix not SPD)"
                )));
            }
            self.diag[j] = d;
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A x = b using the current factorization. `b` and `x` are in
    /// the original (unpermuted) node order.
    pub fn solve(&self, b: &[Vec3], x: &mut [Vec3]) {
        assert!(self.factored, "solve called before factor");
        let mut z = vec![0.0f64; self.n];
        for (old, p) in b.iter().enumerate() {
            let new = self.inv_perm[old];
            z[3 * new] = p.x;
            z[3 * new + 1] = p.y;
            z[3 * new + 2] = p.z;
        }
        // Forward: U^T z' = b.
        for j in 0..self.n {
            let fj = self.col_start[j];
            let cp = self.col_ptr[j];
            let mut s = z[j];
            for i in fj..j {
                s -= self.data[cp + (i - fj)] * z[i];
            }
            z[j] = s;
        }
        // Diagonal.
        for j in 0..self.n {
            z[j] /= self.diag[j];
        }
        // Backward: U x = w.
        for j in (0..self.n).rev() {
            let fj = self.col_start[j];
            let cp = self.col_ptr[j];
            let xj = z[j];
            for i in fj..j {
                z[i] -= self.data[cp + (i - fj)] * xj;
            }
        }
        for (old, p) in x.iter_mut().enumerate() {
            let new = self.inv_perm[old];
            *p = Vec3::new(z[3 * new], z[3 * new + 1], z[3 * new + 2]);
        }
    }
}

/// Block-Jacobi preconditioned conjugate gradients.
///
/// Converges to `||r|| <= rel_tol * ||b||`; deterministic given identical
/// inputs. Used above [`DIRECT_SOLVE_MAX_DOFS`].
pub struct ConjugateGradient {
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for ConjugateGradient {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iters: 20_000,
        }
    }
}

impl ConjugateGradient {
    pub fn solve(&self, a: &BlockCsr, b: &[Vec3], x: &mut [Vec3]) -> Result<usize, FemError> {
        let n = a.n_nodes();
        // Block-Jacobi preconditioner: inverted 3x3 diagonal blocks.
        let mut pre = Vec::with_capacity(n);
        for i in 0..n {
            let off = a.block_offset(i, i).expect("diagonal present");
            let inv = a.blocks[off].try_inverse().ok_or_else(|| {
                FemError::LinearSolve(format!("singular diagonal block at node {i}"))
            })?;
            pre.push(inv);
        }
        let bnorm = b.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = Vec3::zeros());
            return Ok(0);
        }
        for v in x.iter_mut() {
            *v = Vec3::zeros();
        }
        let mut r = b.to_vec();
        let mut z: Vec<Vec3> = r.iter().zip(&pre, ).map(|(ri, p)| p * ri).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a.dot(b)).sum();
        let mut ap = vec![Vec3::zeros(); n];
        for it in 0..self.max_iters {
            a.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a.dot(b)).sum();
            if pap <= 0.0 {
                return Err(FemError::LinearSolve(format!(
                    "CG breakdown: p^T A p = {pap:.3e} (matrix not SPD)"
                )));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rnorm = r.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            if rnorm <= self.rel_tol * bnorm {
                return Ok(it + 1);
            }
            for i in 0..n {
                z[i] = pre[i] * r[i];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a.dot(b)).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(FemError::LinearSolve(format!(
            "CG did not converge within {} iterations",
            self.max_iters
        )))
    }
}
