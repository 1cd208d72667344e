//! Implicit time stepping (backward Euler + Newton) and quasi-static
//! solves for the corotational FEM model.
//!
//! The Newton system is solved in velocity form:
//!
//!   J dv = -dt * r,   J = (1 + dt a) M + (dt b + dt^2) K(x) + contact terms
//!
//! with `r` the force residual. Auxiliary scalar degrees of freedom (the
//! gripper finger travels) enter through the [`Coupling`] trait and are
//! eliminated by a dense Schur complement, so the sparse matrix keeps the
//! fixed mesh sparsity pattern. The factorization is reused across steps
//! and Newton iterations while it keeps working (the residual check is
//! always exact, so reuse affects iteration counts, never results).

use nalgebra::{DMatrix, DVector, SMatrix};

use super::sparse::{BlockCsr, ConjugateGradient, SkylineFactor, DIRECT_SOLVE_MAX_DOFS};
use super::{
    element_states, linear_element_stiffness, ElasticParams, ElementBasis, ElementState, FemError,
    SimState,
};
use crate::mesh::TetMesh;
use crate::{Mat3, Vec3};

/// Settings of the implicit stepper.
#[derive(Debug, Clone, Copy)]
pub struct StepSettings {
    /// Time step (s). Default 1/1500 s.
    pub dt: f64,
    /// Newton iteration cap per step.
    pub newton_max_iters: usize,
    /// Relative force-residual tolerance (vs the external force scale).
    pub newton_rel_tol: f64,
    /// Absolute force-residual floor (N).
    pub newton_abs_tol: f64,
    /// Rayleigh mass damping coefficient (1/s).
    pub rayleigh_alpha: f64,
    /// Rayleigh stiffness damping coefficient (s).
    pub rayleigh_beta: f64,
}

impl Default for StepSettings {
    fn default() -> Self {
        Self {
            dt: 1.0 / 1500.0,
            newton_max_iters: 20,
            newton_rel_tol: 1e-6,
            newton_abs_tol: 1e-12,
            rayleigh_alpha: 0.0,
            rayleigh_beta: 0.002,
        }
    }
}

/// Velocity boundary conditions: the listed nodes move at the prescribed
/// velocity during the step (zero = fixed).
#[derive(Debug, Clone, Default)]
pub struct Boundary {
    pub prescribed: Vec<(usize, Vec3)>,
}

impl Boundary {
    pub fn free() -> Self {
        Self::default()
    }

    pub fn fixed(nodes: &[usize]) -> Self {
        Self {
            prescribed: nodes.iter().map(|&i| (i, Vec3::zeros())).collect(),
        }
    }

    fn signature(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for (i, v) in &self.prescribed {
            for b in (*i as u64)
                .to_le_bytes()
                .iter()
                .chain(v.x.to_bits().to_le_bytes().iter())
                .chain(v.y.to_bits().to_le_bytes().iter())
                .chain(v.z.to_bits().to_le_bytes().iter())
            {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }
}

/// Jacobian contributions from a coupling, all written as the *negated*
/// force derivatives so every block is positive semidefinite.
#[derive(Debug, Default)]
pub struct CouplingJacobian {
    /// (node, -df/dx, -df/dv) added to that node's diagonal block.
    pub node_blocks: Vec<(usize, Mat3, Mat3)>,
    /// (node, aux index, -df_node/dq_aux); the aux-row counterpart is the
    /// same vector by symmetry of the penalty energy.
    pub cross: Vec<(usize, usize, Vec3)>,
    /// Per-aux (-df_aux/dq, -df_aux/dqdot).
    pub aux: Vec<(f64, f64)>,
}

impl CouplingJacobian {
    fn clear(&mut self, n_aux: usize) {
        self.node_blocks.clear();
        self.cross.clear();
        self.aux.clear();
        self.aux.resize(n_aux, (0.0, 0.0));
    }
}

/// External coupling (contacts, gripper fingers) evaluated inside the
/// Newton loop at the candidate end-of-step state.
pub trait Coupling {
    fn n_aux(&self) -> usize {
        0
    }
    fn aux_masses(&self) -> Vec<f64> {
        Vec::new()
    }
    /// Aux positions and velocities at the start of the step.
    fn aux_state(&self) -> (Vec<f64>, Vec<f64>) {
        (Vec::new(), Vec::new())
    }
    /// Called once per step before Newton; typically runs contact
    /// detection against the start-of-step configuration.
    fn begin_step(&mut self, _x: &[Vec3], _t_end: f64) {}
    /// Accumulates coupled forces at the candidate state and fills the
    /// Jacobian contributions.
    #[allow(clippy::too_many_arguments)]
    fn eval(
        &mut self,
        _x: &[Vec3],
        _v: &[Vec3],
        _q: &[f64],
        _qdot: &[f64],
        _t_end: f64,
        _f_nodes: &mut [Vec3],
        _f_aux: &mut [f64],
        _jac: &mut CouplingJacobian,
    ) {
    }
    /// Commits the converged step.
    fn commit(&mut self, _x: &[Vec3], _v: &[Vec3], _q: &[f64], _qdot: &[f64]) {}
    /// Changes whenever the active constraint/contact set changes; the
    /// solver invalidates its factorization on a new signature.
    fn jacobian_signature(&self) -> u64 {
        0
    }
}

/// Coupling that does nothing (plain elasticity).
pub struct NoCoupling;
impl Coupling for NoCoupling {}

/// Outcome of one implicit step.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub newton_iters: usize,
    pub refactored: bool,
    pub residual: f64,
}

enum LinearSolver {
    Direct(SkylineFactor),
    Iterative(ConjugateGradient),
}

/// Implicit integrator bound to one mesh + material.
pub struct ImplicitSolver {
    pub settings: StepSettings,
    params: ElasticParams,
    tets: Vec<[usize; 4]>,
    basis: Vec<ElementBasis>,
    k_lin: Vec<SMatrix<f64, 12, 12>>,
    masses: Vec<f64>,
    matrix: BlockCsr,
    elem_offsets: Vec<[usize; 16]>,
    solver: LinearSolver,
    fact_valid: bool,
    fact_sig: u64,
    fact_residual: f64,
}

struct Residual {
    x: Vec<Vec3>,
    q: Vec<f64>,
    r: Vec<Vec3>,
    r_aux: Vec<f64>,
    states: Vec<ElementState>,
    jac: CouplingJacobian,
    f_int_inf: f64,
    norm: f64,
}

impl ImplicitSolver {
    pub fn new(mesh: &TetMesh, params: ElasticParams, settings: StepSettings) -> Self {
        let basis = super::element_bases(mesh);
        let k_lin = basis
            .iter()
            .map(|b| linear_element_stiffness(b, &params))
            .collect();
        let matrix = BlockCsr::from_tets(mesh.n_nodes(), &mesh.tets);
        let elem_offsets = mesh
            .tets
            .iter()
            .map(|t| {
                let mut offs = [0usize; 16];
                for a in 0..4 {
                    for b in 0..4 {
                        offs[4 * a + b] = matrix
                            .block_offset(t[a], t[b])
                            .expect("element nodes are adjacent");
                    }
                }
                offs
            })
            .collect();
        let ndofs = mesh.n_nodes() * 3;
        let solver = if ndofs <= DIRECT_SOLVE_MAX_DOFS {
            LinearSolver::Direct(SkylineFactor::new(&matrix))
        } else {
            LinearSolver::Iterative(ConjugateGradient::default())
        };
        Self {
            settings,
            params,
            tets: mesh.tets.clone(),
            basis,
            k_lin,
            masses: mesh.node_masses.clone(),
            matrix,
            elem_offsets,
            solver,
            fact_valid: false,
            fact_sig: 0,
            fact_residual: f64::INFINITY,
        }
    }

    pub fn params(&self) -> &ElasticParams {
        &self.params
    }

    /// Forces a fresh Jacobian on the next Newton iteration. Call after
    /// changing `settings` mid-run.
    pub fn invalidate_factorization(&mut self) {
        self.fact_valid = false;
    }

    /// One backward-Euler step of `settings.dt`. `f_ext` are the external
    /// nodal forces (gravity included by the caller); `boundary` nodes
    /// move at their prescribed velocities; `coupling` adds
    /// contact/gripper physics.
    ///
    /// A step that fails to converge is retried as two half steps
    /// (recursively, a few levels deep): contact-onset transients
    /// occasionally need finer resolution than the nominal rate.
    pub fn step<C: Coupling>(
        &mut self,
        state: &mut SimState,
        f_ext: &[Vec3],
        boundary: &Boundary,
        coupling: &mut C,
    ) -> Result<StepReport, FemError> {
        self.step_recursive(state, f_ext, boundary, coupling, self.settings.dt, 0)
    }

    fn step_recursive<C: Coupling>(
        &mut self,
        state: &mut SimState,
        f_ext: &[Vec3],
        boundary: &Boundary,
        coupling: &mut C,
        dt: f64,
        depth: usize,
    ) -> Result<StepReport, FemError> {
        match self.step_once(state, f_ext, boundary, coupling, dt) {
            Err(FemError::NonConvergence { .. }) | Err(FemError::ElementInversion { .. })
                if depth < 4 =>
            {
                self.fact_valid = false;
                let a = self.step_recursive(state, f_ext, boundary, coupling, dt / 2.0, depth + 1)?;
                let b = self.step_recursive(state, f_ext, boundary, coupling, dt / 2.0, depth + 1)?;
                Ok(StepReport {
                    newton_iters: a.newton_iters + b.newton_iters,
                    refactored: true,
                    residual: b.residual,
                })
            }
            other => other,
        }
    }

    fn step_once<C: Coupling>(
        &mut self,
        state: &mut SimState,
        f_ext: &[Vec3],
        boundary: &Boundary,
        coupling: &mut C,
        dt: f64,
    ) -> Result<StepReport, FemError> {
        let n = self.masses.len();
        let t_end = state.time + dt;

        let mut constrained = vec![false; n];
        for (i, _) in &boundary.prescribed {
            constrained[*i] = true;
        }

        coupling.begin_step(&state.positions, t_end);
        let sig = coupling.jacobian_signature() ^ boundary.signature() ^ dt.to_bits();
        if sig != self.fact_sig {
            self.fact_sig = sig;
            self.fact_valid = false;
        }

        let n_aux = coupling.n_aux();
        let aux_masses = coupling.aux_masses();
        let (q_n, qdot_n) = coupling.aux_state();

        let mut v: Vec<Vec3> = state.velocities.clone();
        for (i, vp) in &boundary.prescribed {
            v[*i] = *vp;
        }
        let mut qdot = qdot_n.clone();

        let f_ext_inf = f_ext
            .iter()
            .enumerate()
            .filter(|(i, _)| !constrained[*i])
            .map(|(_, f)| f.amax())
            .fold(0.0, f64::max);

        let mut cur = self.eval_residual(
            state, dt, &v, &qdot, &q_n, &qdot_n, f_ext, &constrained, t_end, n_aux, &aux_masses,
            coupling,
        )?;
        // Residual floor tied to the internal force scale keeps highly
        // stressed quasi-static states from demanding sub-roundoff residuals.
        let tol = self.settings.newton_rel_tol * f_ext_inf
            + self.settings.newton_abs_tol
            + 1e-10 * cur.f_int_inf;

        let mut iters = 0;
        let mut refactored = false;
        let mut stalls = 0;
        let mut prev_norm = cur.norm;
        while cur.norm > tol {
            if iters >= self.settings.newton_max_iters {
                return Err(FemError::NonConvergence {
                    residual: cur.norm,
                    tol,
                    iters,
                });
            }
            if !self.fact_valid {
                self.assemble_and_factor(&cur, &constrained, dt)?;
                refactored = true;
                self.fact_residual = cur.norm;
            }

            let (dv, dqdot) =
                self.solve_newton_system(&cur, &constrained, dt, n_aux, &aux_masses)?;

            // Backtracking line search on the residual norm. The residual
            // is only piecewise smooth (contact set changes), so when no
            // trial improves we keep the best bounded-increase trial
            // rather than rejecting outright (semismooth Newton is not
            // monotone through a set change).
            let mut step_scale = 1.0;
            let mut improved = None;
            let mut best: Option<(Vec<Vec3>, Vec<f64>, Residual)> = None;
            for _ in 0..5 {
                let v_try: Vec<Vec3> = v
                    .iter()
                    .zip(&dv)
                    .map(|(vi, di)| vi + di * step_scale)
                    .collect();
                let qdot_try: Vec<f64> = qdot
                    .iter()
                    .zip(&dqdot)
                    .map(|(a, d)| a + d * step_scale)
                    .collect();
                match self.eval_residual(
                    state, dt, &v_try, &qdot_try, &q_n, &qdot_n, f_ext, &constrained, t_end,
                    n_aux, &aux_masses, coupling,
                ) {
                    Ok(trial) if trial.norm < cur.norm => {
                        improved = Some((v_try, qdot_try, trial));
                        break;
                    }
                    Ok(trial) => {
                        if best.as_ref().is_none_or(|(_, _, b)| trial.norm < b.norm) {
                            best = Some((v_try, qdot_try, trial));
                        }
                        step_scale *= 0.5;
                    }
                    Err(FemError::ElementInversion { .. }) => step_scale *= 0.5,
                    Err(e) => return Err(e),
                }
            }
            match improved {
                Some((v_new, qdot_new, trial)) => {
                    v = v_new;
                    qdot = qdot_new;
                    cur = trial;
                    stalls = 0;
                }
                None => {
                    if self.fact_valid {
                        // Retry this iterate with a fresh Jacobian first.
                        self.fact_valid = false;
                    } else if let Some((v_new, qdot_new, trial)) =
                        best.filter(|(_, _, b)| b.norm < 2.0 * cur.norm)
                    {
                        v = v_new;
                        qdot = qdot_new;
                        cur = trial;
                        stalls += 1;
                        if stalls > 4 {
                            return Err(FemError::NonConvergence {
                                residual: cur.norm,
                                tol,
                                iters,
                            });
                        }
                    } else {
                        return Err(FemError::NonConvergence {
                            residual: cur.norm,
                            tol,
                            iters,
                        });
                    }
                }
            }
            iters += 1;
            // Reused or stale Jacobians only earn their keep while the
            // residual keeps dropping fast; otherwise refresh.
            if self.fact_valid && cur.norm > 0.3 * prev_norm && cur.norm > tol {
                self.fact_valid = false;
            }
            prev_norm = cur.norm;
        }

        // Converged: cur corresponds to (v, qdot).
        state.positions = cur.x;
        state.velocities = v;
        for (e, st) in cur.states.iter().enumerate() {
            state.elem_rotations[e] = st.rotation;
            state.elem_stresses[e] = st.stress;
        }
        state.time = t_end;
        let q_end: Vec<f64> = cur.q;
        coupling.commit(&state.positions, &state.velocities, &q_end, &qdot);
        // Hint for the next step: a hard-won step should not inherit a
        // tired Jacobian.
        if iters > 3 {
            self.fact_valid = false;
        }
        Ok(StepReport {
            newton_iters: iters,
            refactored,
            residual: cur.norm,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn eval_residual<C: Coupling>(
        &self,
        state: &SimState,
        dt: f64,
        v: &[Vec3],
        qdot: &[f64],
        q_n: &[f64],
        qdot_n: &[f64],
        f_ext: &[Vec3],
        constrained: &[bool],
        t_end: f64,
        n_aux: usize,
        aux_masses: &[f64],
        coupling: &mut C,
    ) -> Result<Residual, FemError> {
        let n = v.len();
        let x: Vec<Vec3> = state
            .positions
            .iter()
            .zip(v)
            .map(|(x0, vi)| x0 + vi * dt)
            .collect();
        let q: Vec<f64> = q_n.iter().zip(qdot).map(|(q0, qd)| q0 + qd * dt).collect();

        let states = element_states(&x, &self.tets, &self.basis, &self.params)?;

        let mut f = vec![Vec3::zeros(); n];
        super::accumulate_internal_forces(&states, &self.tets, &self.basis, &mut f);
        let f_int_inf = f.iter().map(|p| p.amax()).fold(0.0, f64::max);

        // Rayleigh damping: -(alpha M + beta K) v, evaluated element-wise
        // in the corotated frame.
        let beta = self.settings.rayleigh_beta;
        if beta != 0.0 {
            for ((t, k), st) in self.tets.iter().zip(&self.k_lin).zip(&states) {
                let r = st.rotation;
                let rt = r.transpose();
                let mut w = SMatrix::<f64, 12, 1>::zeros();
                for a in 0..4 {
                    let local = rt * v[t[a]];
                    w.fixed_rows_mut::<3>(3 * a).copy_from(&local);
                }
                let y = k * w;
                for a in 0..4 {
                    let fy = r * Vec3::new(y[3 * a], y[3 * a + 1], y[3 * a + 2]);
                    f[t[a]] -= fy * beta;
                }
            }
        }
        let alpha = self.settings.rayleigh_alpha;
        if alpha != 0.0 {
            for i in 0..n {
                f[i] -= v[i] * (alpha * self.masses[i]);
            }
        }

        let mut f_aux = vec![0.0; n_aux];
        let mut jac = CouplingJacobian::default();
        jac.clear(n_aux);
        coupling.eval(&x, v, &q, qdot, t_end, &mut f, &mut f_aux, &mut jac);

        // r_i = M (v - v_n)/dt - (f_int + f_damp + f_contact) - f_ext
        let mut r = vec![Vec3::zeros(); n];
        let mut norm = 0.0f64;
        for i in 0..n {
            if constrained[i] {
                continue;
            }
            let ri = (v[i] - state.velocities[i]) * (self.masses[i] / dt) - f[i] - f_ext[i];
            norm = norm.max(ri.amax());
            r[i] = ri;
        }
        let mut r_aux = vec![0.0; n_aux];
        for a in 0..n_aux {
            let ra = (qdot[a] - qdot_n[a]) * (aux_masses[a] / dt) - f_aux[a];
            norm = norm.max(ra.abs());
            r_aux[a] = ra;
        }

        Ok(Residual {
            x,
            q,
            r,
            r_aux,
            states,
            jac,
            f_int_inf,
            norm,
        })
    }

    fn assemble_system(&mut self, cur: &Residual, constrained: &[bool], dt: f64) {
        let k_scale = dt * self.settings.rayleigh_beta + dt * dt;
        let m_scale = 1.0 + dt * self.settings.rayleigh_alpha;
        self.matrix.zero();
        for ((offs, k), st) in self.elem_offsets.iter().zip(&self.k_lin).zip(&cur.states) {
            let r = st.rotation;
            let rt = r.transpose();
            for a in 0..4 {
                for b in 0..4 {
                    let kab = k.fixed_view::<3, 3>(3 * a, 3 * b).into_owned();
                    let rot = r * kab * rt * k_scale;
                    self.matrix.add_block(offs[4 * a + b], &rot);
                }
            }
        }
        for (i, &m) in self.masses.iter().enumerate() {
            self.matrix
                .add_diag_block(i, &(Mat3::identity() * (m * m_scale)));
        }
        for (node, kxx, dvv) in &cur.jac.node_blocks {
            let block = kxx * (dt * dt) + dvv * dt;
            self.matrix.add_diag_block(*node, &block);
        }
        self.matrix.constrain_nodes(constrained);
    }

    fn assemble_and_factor(
        &mut self,
        cur: &Residual,
        constrained: &[bool],
        dt: f64,
    ) -> Result<(), FemError> {
        self.assemble_system(cur, constrained, dt);
        if let LinearSolver::Direct(fact) = &mut self.solver {
            fact.factor(&self.matrix)?;
        }
        self.fact_valid = true;
        Ok(())
    }

    fn solve_linear(&self, b: &[Vec3], x: &mut [Vec3]) -> Result<(), FemError> {
        match &self.solver {
            LinearSolver::Direct(fact) => {
                fact.solve(b, x);
                Ok(())
            }
            LinearSolver::Iterative(cg) => cg.solve(&self.matrix, b, x).map(|_| ()),
        }
    }

    fn solve_newton_system(
        &self,
        cur: &Residual,
        constrained: &[bool],
        dt: f64,
        n_aux: usize,
        aux_masses: &[f64],
    ) -> Result<(Vec<Vec3>, Vec<f64>), FemError> {
        let n = cur.r.len();
        let rhs: Vec<Vec3> = cur
            .r
            .iter()
            .enumerate()
            .map(|(i, ri)| if constrained[i] { Vec3::zeros() } else { -ri * dt })
            .collect();
        let mut y0 = vec![Vec3::zeros(); n];
        self.solve_linear(&rhs, &mut y0)?;
        if n_aux == 0 {
            return Ok((y0, Vec::new()));
        }

        // Dense Schur complement over the aux dofs.
        let mut b_cols: Vec<Vec<Vec3>> = vec![vec![Vec3::zeros(); n]; n_aux];
        for (node, a, g) in &cur.jac.cross {
            if !constrained[*node] {
                b_cols[*a][*node] += g * (dt * dt);
            }
        }
        // C diagonal of the Newton matrix in velocity form:
        // m_aux + dt * (-df_aux/dqdot) + dt^2 * (-df_aux/dq).
        let c_diag: Vec<f64> = cur
            .jac
            .aux
            .iter()
            .zip(aux_masses)
            .map(|((kqq, cqq), m)| m + kqq * dt * dt + cqq * dt)
            .collect();

        let mut y_cols = Vec::with_capacity(n_aux);
        for col in &b_cols {
            let mut y = vec![Vec3::zeros(); n];
            self.solve_linear(col, &mut y)?;
            y_cols.push(y);
        }
        let mut s = DMatrix::<f64>::zeros(n_aux, n_aux);
        let mut srhs = DVector::<f64>::zeros(n_aux);
        for a in 0..n_aux {
            for c in 0..n_aux {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += b_cols[a][i].dot(&y_cols[c][i]);
                }
                s[(a, c)] = -dot;
            }
            s[(a, a)] += c_diag[a];
            let mut bty0 = 0.0;
            for i in 0..n {
                bty0 += b_cols[a][i].dot(&y0[i]);
            }
            srhs[a] = -cur.r_aux[a] * dt - bty0;
        }
        let lu = s.lu();
        let dq = lu
            .solve(&srhs)
            .ok_or_else(|| FemError::LinearSolve("singular Schur complement".into()))?;
        let mut dv = y0;
        for a in 0..n_aux {
            for i in 0..n {
                dv[i] -= y_cols[a][i] * dq[a];
            }
        }
        Ok((dv, dq.iter().copied().collect()))
    }

    /// Quasi-static Newton solve: finds positions where the internal
    /// forces balance `f_ext` with the given nodes held fixed, ramping the
    /// load over `increments`. No coupling, no inertia.
    pub fn solve_static(
        &mut self,
        positions: &mut [Vec3],
        f_ext: &[Vec3],
        fixed: &[usize],
        increments: usize,
    ) -> Result<(), FemError> {
        let n = positions.len();
        let mut constrained = vec![false; n];
        for &i in fixed {
            constrained[i] = true;
        }
        let f_ext_inf = f_ext
            .iter()
            .enumerate()
            .filter(|(i, _)| !constrained[*i])
            .map(|(_, f)| f.amax())
            .fold(0.0, f64::max);

        let eval = |slf: &Self, x: &[Vec3], scale: f64| -> Result<(Vec<Vec3>, Vec<ElementState>, f64), FemError> {
            let states = element_states(x, &slf.tets, &slf.basis, &slf.params)?;
            let mut r = vec![Vec3::zeros(); n];
            super::accumulate_internal_forces(&states, &slf.tets, &slf.basis, &mut r);
            let mut norm = 0.0f64;
            for (i, ri) in r.iter_mut().enumerate() {
                if constrained[i] {
                    *ri = Vec3::zeros();
                } else {
                    *ri += f_ext[i] * scale;
                    norm = norm.max(ri.amax());
                }
            }
            Ok((r, states, norm))
        };

        for inc in 1..=increments.max(1) {
            let scale = inc as f64 / increments.max(1) as f64;
            let tol = 1e-9 * scale * f_ext_inf + 1e-12;
            let (mut r, mut states, mut norm) = eval(self, positions, scale)?;
            let mut iters = 0;
            while norm > tol {
                if iters >= 60 {
                    return Err(FemError::NonConvergence {
                        residual: norm,
                        tol,
                        iters,
                    });
                }
                // Static Jacobian: pure corotated stiffness (k_scale = 1).
                self.matrix.zero();
                for ((offs, k), st) in self.elem_offsets.iter().zip(&self.k_lin).zip(&states) {
                    let rot = st.rotation;
                    let rt = rot.transpose();
                    for a in 0..4 {
                        for b in 0..4 {
                            let kab = k.fixed_view::<3, 3>(3 * a, 3 * b).into_owned();
                            self.matrix.add_block(offs[4 * a + b], &(rot * kab * rt));
                        }
                    }
                }
                self.matrix.constrain_nodes(&constrained);
                if let LinearSolver::Direct(fact) = &mut self.solver {
                    fact.factor(&self.matrix)?;
                }
                self.fact_valid = false; // static assembly clobbered the dynamic one
                let mut dx = vec![Vec3::zeros(); n];
                self.solve_linear(&r, &mut dx)?;

                let mut step_scale = 1.0;
                let mut accepted = false;
                for _ in 0..8 {
                    let x_try: Vec<Vec3> = positions
                        .iter()
                        .zip(&dx)
                        .map(|(xi, di)| xi + di * step_scale)
                        .collect();
                    match eval(self, &x_try, scale) {
                        Ok((r2, s2, n2)) if n2 < norm || step_scale <= 0.01 => {
                            positions.copy_from_slice(&x_try);
                            r = r2;
                            states = s2;
                            norm = n2;
                            accepted = true;
                            break;
                        }
                        Ok(_) | Err(FemError::ElementInversion { .. }) => step_scale *= 0.5,
                        Err(e) => return Err(e),
                    }
                }
                if !accepted {
                    return Err(FemError::NonConvergence {
                        residual: norm,
                        tol,
                        iters,
                    });
                }
                iters += 1;
            }
        }
        Ok(())
    }
}

/// Per-node gravity load vector for the given masses.
pub fn gravity_forces(masses: &[f64], g: Vec3) -> Vec<Vec3> {
    masses.iter().map(|&m| g * m).collect()
}
