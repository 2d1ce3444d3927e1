//! The fully implicit time step of the coupled thermoviscoplastic system and
//! the time loop around it.
//!
//! Each step solves the backward-Euler system consisting of the discrete
//! heat equation, the discrete momentum balance, and the discrete plastic
//! flow rule, coupled implicitly through the unknown temperature. The
//! coupling is resolved by an outer fixed point alternating a mechanics
//! solve (temperature frozen) with a heat solve (strain and plastic rates
//! frozen); each substep is a damped Newton iteration, and the flow rule is
//! eliminated cell-locally inside the mechanics Newton with its consistent
//! tangent.

use crate::audit::{AuditConfig, AuditLedger};
use crate::fem::{
    add_vector_mass, assemble_nonlinear_heat, assemble_vector_tangent, edge_scalar_load,
    internal_force_full, lumped_scalar_mass, sym_grad, vector_mass_apply, CellTangent, FemError,
};
use crate::linalg::{BandMatrix, LinalgError, SymBandMatrix};
use crate::loads::{Loads, StepLoads};
use crate::material::{
    gamma_term, positivity_bound, return_map, GammaReg, MaterialError, MaterialModel,
};
use crate::mesh::{FieldLayout, Mesh};
use crate::tensor::SymTensor2;
use thiserror::Error;

/// Mesh, dof layout, and material of one problem instance.
pub struct System {
    pub mesh: Mesh,
    pub layout: FieldLayout,
    pub material: MaterialModel,
}

impl System {
    pub fn new(mesh: Mesh, material: MaterialModel) -> System {
        let layout = FieldLayout::new(&mesh);
        System { mesh, layout, material }
    }
}

/// Discrete unknowns at one time node. The velocity is the backward
/// difference of the displacement, which carries the same information as
/// the two-level displacement history of the inertia stencil.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub vel: Vec<f64>,
    pub e: Vec<SymTensor2>,
    pub p: Vec<SymTensor2>,
    pub zeta: Vec<SymTensor2>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("mechanics Newton stalled after {iterations} iterations (residual {residual:.3e})")]
    MechanicsNonconvergence { iterations: usize, residual: f64 },
    #[error("heat Newton stalled after {iterations} iterations (residual {residual:.3e})")]
    HeatNonconvergence { iterations: usize, residual: f64 },
    #[error("outer coupling loop exceeded {max_outer} sweeps (mechanics residual {mech_residual:.3e}, heat residual {heat_residual:.3e})")]
    OuterNonconvergence { max_outer: usize, mech_residual: f64, heat_residual: f64 },
    #[error("temperature positivity failure: min nodal theta {min_theta:.6e} at guard {guard:.6e}; the time step is too large for the positivity region")]
    PositivityFailure { min_theta: f64, guard: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

#[derive(Debug, Error)]
#[error("step {step} (t = {t:.6}): {source}")]
pub struct RunError {
    pub step: usize,
    pub t: f64,
    #[source]
    pub source: StepError,
}

#[derive(Debug, Clone)]
pub struct SolverOpts {
    /// Tolerance on the combined residual of the coupled step.
    pub tol_outer: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub gamma_reg: GammaReg,
    /// Smallest Newton damping factor before a substep gives up.
    pub damping_min: f64,
    /// Nodal temperature floor enforced during the heat Newton; 0 means the
    /// run loop installs `theta_bar / 10`.
    pub theta_guard: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            tol_outer: 1e-9,
            max_outer: 50,
            max_newton: 60,
            gamma_reg: GammaReg::Off,
            damping_min: 1e-10,
            theta_guard: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub outer_iters: usize,
    pub mech_residual: f64,
    pub heat_residual: f64,
    pub flow_residual: f64,
    pub combined_residual: f64,
}

/// Outcome of one cell-local elimination of the flow rule.
#[derive(Debug, Clone, Copy)]
struct CellOut {
    e_new: SymTensor2,
    p_new: SymTensor2,
    zeta: SymTensor2,
    sigma: SymTensor2,
    tangent: CellTangent,
}

impl State {
    /// Kinematically admissible initial state: the displacement is the
    /// Dirichlet lift at t = 0, the elastic strain its symmetric gradient,
    /// and the plastic strain zero.
    pub fn initial(sys: &System, loads: &Loads, theta0: &[f64]) -> State {
        let u = loads.w_at(&sys.mesh, 0.0);
        let e = sym_grad(&sys.mesh, &u);
        let vel = if loads.v0_from_w_rate {
            loads.w_rate_at(&sys.mesh, 0.0)
        } else {
            vec![0.0; u.len()]
        };
        let n_cells = sys.mesh.n_cells();
        State {
            t: 0.0,
            u,
            vel,
            e,
            p: vec![SymTensor2::ZERO; n_cells],
            zeta: vec![SymTensor2::ZERO; n_cells],
            theta: theta0.to_vec(),
        }
    }

    /// Checks the state invariants: kinematic admissibility, trace-free
    /// plastic strain, Dirichlet match, positive temperature.
    pub fn validate(&self, sys: &System, w_now: &[f64]) -> Result<(), String> {
        let eps = sym_grad(&sys.mesh, &self.u);
        for c in 0..sys.mesh.n_cells() {
            let gap = (eps[c] - self.e[c] - self.p[c]).norm();
            let scale = 1.0 + self.e[c].norm() + self.p[c].norm();
            if gap > 1e-10 * scale {
                return Err(format!("kinematic admissibility violated on cell {c}: gap {gap:.3e}"));
            }
            if self.p[c].trace().abs() > 1e-12 * (1.0 + self.p[c].norm()) {
                return Err(format!("plastic strain has trace on cell {c}"));
            }
        }
        for &node in &sys.layout.dirichlet_nodes {
            for comp in 0..2 {
                let d = 2 * node + comp;
                if (self.u[d] - w_now[d]).abs() > 1e-12 * (1.0 + w_now[d].abs()) {
                    return Err(format!("Dirichlet value mismatch at dof {d}"));
                }
            }
        }
        if self.theta.iter().any(|&t| !(t > 0.0)) {
            return Err("nonpositive initial temperature".into());
        }
        Ok(())
    }
}

pub struct Stepper<'a> {
    pub sys: &'a System,
    pub tau: f64,
    pub opts: SolverOpts,
    lumped_mass: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a System, tau: f64, opts: SolverOpts) -> Stepper<'a> {
        let lumped_mass = lumped_scalar_mass(&sys.mesh);
        Stepper { sys, tau, opts, lumped_mass }
    }

    /// Eliminates (e', p', ζ') cell by cell for a given displacement and
    /// temperature iterate, returning stresses and consistent tangents.
    fn cell_updates(
        &self,
        state: &State,
        u_new: &[f64],
        theta_new: &[f64],
    ) -> Result<Vec<CellOut>, StepError> {
        let sys = self.sys;
        let mat = &sys.material;
        let tau = self.tau;
        let strains = sym_grad(&sys.mesh, u_new);
        let mut out = Vec::with_capacity(sys.mesh.n_cells());
        for c in 0..sys.mesh.n_cells() {
            let big_e = strains[c];
            let theta_c = sys.mesh.barycenter_value(c, theta_new);
            let theta_prev_c = sys.mesh.barycenter_value(c, &state.theta);
            let (e_prev, p_prev) = (state.e[c], state.p[c]);
            let (mu, la) = (mat.mu[c], mat.lambda[c]);
            let (mu_v, la_v) = (mat.mu_v[c], mat.lambda_v[c]);
            let a = 2.0 * mu_v / tau + 2.0 * mu;
            let cap_lambda = la_v / tau + la;
            let b_dev = mat.b_coupling[c].dev();
            let a0 = big_e - p_prev;
            // driving deviatoric trial stress at p' = p_prev
            let s_trial = (a0 - e_prev).dev() * (2.0 * mu_v / tau) + a0.dev() * (2.0 * mu)
                - b_dev * theta_c;
            let cell = match self.opts.gamma_reg {
                GammaReg::Off => {
                    // viscosity rescaling folds the dependence of σ_D on the
                    // plastic rate into the driving stress: with
                    // q = (1 + aτ) p_rate the flow rule becomes
                    // ζ + q = s_trial with ζ ∈ ∂R(q).
                    let (q, zeta) =
                        return_map(mat, c, theta_prev_c, s_trial, tau, GammaReg::Off, p_prev)?;
                    let p_rate = q * (1.0 / (1.0 + a * tau));
                    let p_new = p_prev + p_rate * tau;
                    let e_new = big_e - p_new;
                    let sigma = mat.stress(c, e_new, (e_new - e_prev) * (1.0 / tau), theta_c);
                    let mut tangent = CellTangent::zero();
                    tangent.add_identity(a);
                    tangent.add_trace(cap_lambda);
                    if p_rate.norm() > 0.0 {
                        let r = mat.yield_r(c, theta_prev_c);
                        let sn = s_trial.norm();
                        let qf = a * a * tau / (1.0 + a * tau);
                        let elastic_frac = r / sn;
                        tangent.add_identity(-qf * (1.0 - elastic_frac));
                        tangent.add_trace(0.5 * qf * (1.0 - elastic_frac));
                        tangent.add_dyad(-qf * elastic_frac, s_trial.normalized());
                    }
                    CellOut { e_new, p_new, zeta, sigma, tangent }
                }
                GammaReg::On { gamma } => {
                    self.cell_update_gamma(
                        c, gamma, big_e, e_prev, p_prev, theta_c, theta_prev_c, s_trial, a,
                        cap_lambda,
                    )?
                }
            };
            out.push(cell);
        }
        Ok(out)
    }

    /// Cell solve with the γ-regularization on: the flow rule gains the
    /// term `τ |p'|^{γ-2} p'` and the stress the term `τ |e'|^{γ-2} e'`,
    /// so the deviatoric problem is solved by a damped Newton iteration in
    /// the deviatoric plane and the consistent tangent by the implicit
    /// function theorem, assembled by finite differences of the cell solve.
    #[allow(clippy::too_many_arguments)]
    fn cell_update_gamma(
        &self,
        c: usize,
        gamma: f64,
        big_e: SymTensor2,
        e_prev: SymTensor2,
        p_prev: SymTensor2,
        theta_c: f64,
        theta_prev_c: f64,
        _s_trial: SymTensor2,
        a: f64,
        cap_lambda: f64,
    ) -> Result<CellOut, StepError> {
        let mat = &self.sys.material;
        let tau = self.tau;
        let solve_dev = |big_e: SymTensor2| -> Result<(SymTensor2, SymTensor2), StepError> {
            // flow residual G(p_rate) with σ_D depending on p_rate
            let sigma_dev = |p_rate: SymTensor2| {
                let p_new = p_prev + p_rate * tau;
                let e_new = big_e - p_new;
                (mat.apply_d(c, (e_new - e_prev) * (1.0 / tau)) + mat.apply_c(c, e_new)
                    + gamma_term(tau, gamma, e_new)
                    - mat.b_coupling[c] * theta_c)
                    .dev()
            };
            // elastic test
            let z0 = sigma_dev(SymTensor2::ZERO) - gamma_term(tau, gamma, p_prev);
            let r = mat.yield_r(c, theta_prev_c);
            if z0.norm() <= r {
                return Ok((SymTensor2::ZERO, z0));
            }
            let residual = |p_rate: SymTensor2| {
                p_rate.normalized() * r
                    + p_rate
                    + gamma_term(tau, gamma, p_prev + p_rate * tau)
                    - sigma_dev(p_rate)
            };
            let mut p_rate = {
                let s0 = sigma_dev(SymTensor2::ZERO);
                let (q, _) = return_map(mat, c, theta_prev_c, s0, tau, GammaReg::Off, p_prev)?;
                let guess = q * (1.0 / (1.0 + a * tau));
                if guess.norm() > 1e-14 { guess } else { z0.normalized() * 1e-10 }
            };
            let mut g = residual(p_rate);
            let scale = 1.0 + z0.norm();
            let mut iter = 0;
            while g.norm() > 1e-13 * scale {
                iter += 1;
                if iter > 100 {
                    return Err(StepError::Material(MaterialError::ReturnMapDiverged {
                        iterations: iter,
                        residual: g.norm(),
                    }));
                }
                // dev-plane Jacobian by central differences of G
                let h = 1e-7 * (1.0 + p_rate.norm());
                let basis = [
                    SymTensor2::new(1.0, -1.0, 0.0) * (1.0 / std::f64::consts::SQRT_2),
                    SymTensor2::shear(1.0 / std::f64::consts::SQRT_2),
                ];
                let mut jac = [[0.0; 2]; 2];
                for (k, bk) in basis.iter().enumerate() {
                    let gp = residual(p_rate + *bk * h);
                    let gm = residual(p_rate - *bk * h);
                    let d = (gp - gm) * (0.5 / h);
                    jac[0][k] = d.inner(&basis[0]);
                    jac[1][k] = d.inner(&basis[1]);
                }
                let rhs = [-g.inner(&basis[0]), -g.inner(&basis[1])];
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                let dx = [
                    (rhs[0] * jac[1][1] - rhs[1] * jac[0][1]) / det,
                    (jac[0][0] * rhs[1] - jac[1][0] * rhs[0]) / det,
                ];
                let step = basis[0] * dx[0] + basis[1] * dx[1];
                let mut alpha = 1.0;
                loop {
                    let cand = p_rate + step * alpha;
                    if cand.norm() > 1e-16 {
                        let gc = residual(cand);
                        if gc.norm() < g.norm() || alpha < 1e-8 {
                            p_rate = cand;
                            g = gc;
                            break;
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-14 {
                        return Err(StepError::Material(MaterialError::ReturnMapDiverged {
                            iterations: iter,
                            residual: g.norm(),
                        }));
                    }
                }
            }
            let zeta = sigma_dev(p_rate)
                - p_rate
                - gamma_term(tau, gamma, p_prev + p_rate * tau);
            Ok((p_rate, zeta))
        };

        let (p_rate, zeta) = solve_dev(big_e)?;
        let p_new = p_prev + p_rate * tau;
        let e_new = big_e - p_new;
        let sigma = mat.apply_d(c, (e_new - e_prev) * (1.0 / tau))
            + mat.apply_c(c, e_new)
            + gamma_term(tau, gamma, e_new)
            - mat.b_coupling[c] * theta_c;
        // consistent tangent by central differences of the full cell solve
        let _ = cap_lambda;
        let h = 1e-6 * (1.0 + big_e.norm());
        let sigma_of = |be: SymTensor2| -> Result<SymTensor2, StepError> {
            let (pr, _) = solve_dev(be)?;
            let pn = p_prev + pr * tau;
            let en = be - pn;
            Ok(mat.apply_d(c, (en - e_prev) * (1.0 / tau))
                + mat.apply_c(c, en)
                + gamma_term(tau, gamma, en)
                - mat.b_coupling[c] * theta_c)
        };
        let basis = [
            SymTensor2::new(1.0, 0.0, 0.0),
            SymTensor2::new(0.0, 1.0, 0.0),
            SymTensor2::new(0.0, 0.0, 1.0),
        ];
        let mut cols = [[0.0; 3]; 3];
        for (k, bk) in basis.iter().enumerate() {
            let sp = sigma_of(big_e + *bk * h)?;
            let sm = sigma_of(big_e - *bk * h)?;
            let d = (sp - sm) * (0.5 / h);
            cols[k] = [d.a, d.b, d.c];
        }
        let mut tangent = CellTangent::zero();
        tangent.set_matrix([
            [cols[0][0], cols[1][0], cols[2][0]],
            [cols[0][1], cols[1][1], cols[2][1]],
            [cols[0][2], cols[1][2], cols[2][2]],
        ]);
        Ok(CellOut { e_new, p_new, zeta, sigma, tangent })
    }

    fn mech_residual_free(
        &self,
        state: &State,
        u_new: &[f64],
        cells: &[CellOut],
        step: &StepLoads,
    ) -> Vec<f64> {
        let sys = self.sys;
        let tau = self.tau;
        let rho = sys.material.rho;
        let n = u_new.len();
        let mut accel = vec![0.0; n];
        for i in 0..n {
            accel[i] = ((u_new[i] - state.u[i]) / tau - state.vel[i]) / tau;
        }
        let inertial = vector_mass_apply(&sys.mesh, &accel);
        let sigmas: Vec<SymTensor2> = cells.iter().map(|c| c.sigma).collect();
        let finternal = internal_force_full(&sys.mesh, &sigmas);
        sys.layout
            .free_vdofs
            .iter()
            .map(|&d| rho * inertial[d] + finternal[d] - step.load_vec[d])
            .collect()
    }

    fn mechanics_solve(
        &self,
        state: &State,
        theta_new: &[f64],
        step: &StepLoads,
        u_init: &[f64],
    ) -> Result<(Vec<f64>, Vec<CellOut>), StepError> {
        let sys = self.sys;
        let tau = self.tau;
        let mut u = u_init.to_vec();
        for &node in &sys.layout.dirichlet_nodes {
            u[2 * node] = step.w[2 * node];
            u[2 * node + 1] = step.w[2 * node + 1];
        }
        let mut cells = self.cell_updates(state, &u, theta_new)?;
        let mut res = self.mech_residual_free(state, &u, &cells, step);
        let mut rnorm = norm2(&res);
        let tol = self.inner_tol(step);
        let mut iter = 0;
        while rnorm > tol {
            iter += 1;
            if iter > self.opts.max_newton {
                return Err(StepError::MechanicsNonconvergence { iterations: iter, residual: rnorm });
            }
            let mut k = SymBandMatrix::zeros(sys.layout.n_free(), sys.layout.hbw_free);
            let tangents: Vec<CellTangent> = cells.iter().map(|c| c.tangent).collect();
            assemble_vector_tangent(&sys.mesh, &sys.layout, &|c| tangents[c], &mut k);
            add_vector_mass(&sys.mesh, &sys.layout, sys.material.rho / (tau * tau), &mut k);
            let neg: Vec<f64> = res.iter().map(|v| -v).collect();
            let du = k.factorize()?.solve(&neg)?;
            let mut alpha = 1.0;
            loop {
                let mut u_cand = u.clone();
                for (i, &dof) in sys.layout.free_vdofs.iter().enumerate() {
                    u_cand[dof] += alpha * du[i];
                }
                let cells_cand = self.cell_updates(state, &u_cand, theta_new)?;
                let res_cand = self.mech_residual_free(state, &u_cand, &cells_cand, step);
                let rn = norm2(&res_cand);
                if rn < rnorm || alpha <= self.opts.damping_min {
                    u = u_cand;
                    cells = cells_cand;
                    res = res_cand;
                    rnorm = rn;
                    break;
                }
                alpha *= 0.5;
            }
        }
        Ok((u, cells))
    }

    /// Source vector of the discrete heat equation for frozen rates; the
    /// thermal-coupling part depends linearly on the unknown temperature and
    /// is returned separately as per-cell coefficients.
    fn heat_sources(
        &self,
        state: &State,
        cells: &[CellOut],
        step: &StepLoads,
    ) -> (Vec<f64>, Vec<f64>) {
        let sys = self.sys;
        let tau = self.tau;
        let mut src = vec![0.0; sys.mesh.n_nodes()];
        for (i, m) in self.lumped_mass.iter().enumerate() {
            src[i] += m * step.heat_bulk[i];
        }
        let hv = edge_scalar_load(&sys.mesh, &step.heat_bdry);
        for i in 0..src.len() {
            src[i] += hv[i];
        }
        let mut coupling = vec![0.0; sys.mesh.n_cells()];
        for (c, cell) in sys.mesh.cells.iter().enumerate() {
            let e_rate = (cells[c].e_new - state.e[c]) * (1.0 / tau);
            let p_rate = (cells[c].p_new - state.p[c]) * (1.0 / tau);
            let theta_prev_c = sys.mesh.barycenter_value(c, &state.theta);
            let r = sys.material.dissipation_r(c, theta_prev_c, p_rate);
            let diss = r
                + p_rate.norm_sq()
                + sys.material.apply_d(c, e_rate).inner(&e_rate);
            let w = sys.mesh.areas[c] / 3.0;
            for &node in cell {
                src[node] += w * diss;
            }
            coupling[c] = sys.material.b_coupling[c].inner(&e_rate);
        }
        (src, coupling)
    }

    fn heat_residual(
        &self,
        state: &State,
        theta: &[f64],
        src: &[f64],
        coupling: &[f64],
    ) -> Result<Vec<f64>, StepError> {
        let sys = self.sys;
        let tau = self.tau;
        let kappa = sys.material.kappa;
        let aval = assemble_nonlinear_heat(
            &sys.mesh,
            theta,
            &|t| kappa.c0 * (1.0 + t.powf(kappa.mu_exp)),
            &|t| kappa.derivative(t),
            None,
        )?;
        let mut res = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            res[i] = self.lumped_mass[i] * (theta[i] - state.theta[i]) / tau + aval[i] - src[i];
        }
        for (c, cell) in sys.mesh.cells.iter().enumerate() {
            let tc = sys.mesh.barycenter_value(c, theta);
            let w = sys.mesh.areas[c] / 3.0;
            for &node in cell {
                res[node] += w * coupling[c] * tc;
            }
        }
        Ok(res)
    }

    fn heat_solve(
        &self,
        state: &State,
        cells: &[CellOut],
        step: &StepLoads,
        theta_init: &[f64],
    ) -> Result<Vec<f64>, StepError> {
        let sys = self.sys;
        let tau = self.tau;
        let kappa = sys.material.kappa;
        let guard = if self.opts.theta_guard > 0.0 { self.opts.theta_guard } else { 1e-12 };
        let (src, coupling) = self.heat_sources(state, cells, step);
        let mut theta = theta_init.to_vec();
        let mut res = self.heat_residual(state, &theta, &src, &coupling)?;
        let mut rnorm = norm2(&res);
        let tol = self.inner_tol(step);
        let mut iter = 0;
        let n = sys.mesh.n_nodes();
        while rnorm > tol {
            iter += 1;
            if iter > self.opts.max_newton {
                return Err(StepError::HeatNonconvergence { iterations: iter, residual: rnorm });
            }
            let mut jac = BandMatrix::zeros(n, sys.layout.hbw_scalar, sys.layout.hbw_scalar);
            assemble_nonlinear_heat(
                &sys.mesh,
                &theta,
                &|t| kappa.c0 * (1.0 + t.powf(kappa.mu_exp)),
                &|t| kappa.derivative(t),
                Some(&mut jac),
            )?;
            for (i, m) in self.lumped_mass.iter().enumerate() {
                jac.add(i, i, m / tau);
            }
            for (c, cell) in sys.mesh.cells.iter().enumerate() {
                let w = sys.mesh.areas[c] / 9.0 * coupling[c];
                for &ni in cell {
                    for &nj in cell {
                        jac.add(ni, nj, w);
                    }
                }
            }
            let neg: Vec<f64> = res.iter().map(|v| -v).collect();
            let dtheta = jac.factorize()?.solve(&neg)?;
            let mut alpha = 1.0f64;
            loop {
                let cand: Vec<f64> =
                    theta.iter().zip(&dtheta).map(|(t, d)| t + alpha * d).collect();
                let min_t = cand.iter().cloned().fold(f64::INFINITY, f64::min);
                if min_t > guard {
                    let res_cand = self.heat_residual(state, &cand, &src, &coupling)?;
                    let rn = norm2(&res_cand);
                    if rn < rnorm || alpha <= self.opts.damping_min {
                        theta = cand;
                        res = res_cand;
                        rnorm = rn;
                        break;
                    }
                } else if alpha <= self.opts.damping_min {
                    return Err(StepError::PositivityFailure { min_theta: min_t, guard });
                }
                alpha *= 0.5;
            }
        }
        Ok(theta)
    }

    fn inner_tol(&self, step: &StepLoads) -> f64 {
        let scale = 1.0 + norm2(&step.load_vec);
        (0.02 * self.opts.tol_outer * scale).max(1e-14)
    }

    /// One fully implicit time step.
    pub fn solve_step(
        &self,
        state: &State,
        step: &StepLoads,
    ) -> Result<(State, StepReport), StepError> {
        let tau = self.tau;
        let mut theta_new = state.theta.clone();
        let mut u_new: Vec<f64> =
            state.u.iter().zip(&state.vel).map(|(u, v)| u + tau * v).collect();
        let mut report = StepReport::default();
        for outer in 1..=self.opts.max_outer {
            let (u_next, _) = self.mechanics_solve(state, &theta_new, step, &u_new)?;
            u_new = u_next;
            let cells = self.cell_updates(state, &u_new, &theta_new)?;
            theta_new = self.heat_solve(state, &cells, step, &theta_new)?;
            // residuals of the coupled system at the new temperature
            let cells = self.cell_updates(state, &u_new, &theta_new)?;
            let mech = norm2(&self.mech_residual_free(state, &u_new, &cells, step));
            let (src, coupling) = self.heat_sources(state, &cells, step);
            let heat = norm2(&self.heat_residual(state, &theta_new, &src, &coupling)?);
            let flow = self.flow_residual(state, &cells, &theta_new);
            report.outer_iters = outer;
            report.mech_residual = mech;
            report.heat_residual = heat;
            report.flow_residual = flow;
            report.combined_residual = mech.max(heat).max(flow);
            if report.combined_residual <= self.opts.tol_outer * (1.0 + norm2(&step.load_vec)) {
                let cells_final = cells;
                let mut new_state = State {
                    t: state.t + tau,
                    u: u_new.clone(),
                    vel: state
                        .u
                        .iter()
                        .zip(&u_new)
                        .map(|(old, new)| (new - old) / tau)
                        .collect(),
                    e: cells_final.iter().map(|c| c.e_new).collect(),
                    p: cells_final.iter().map(|c| c.p_new).collect(),
                    zeta: cells_final.iter().map(|c| c.zeta).collect(),
                    theta: theta_new,
                };
                // keep the plastic strain exactly trace-free against drift
                for p in &mut new_state.p {
                    *p = p.dev();
                }
                return Ok((new_state, report));
            }
        }
        Err(StepError::OuterNonconvergence {
            max_outer: self.opts.max_outer,
            mech_residual: report.mech_residual,
            heat_residual: report.heat_residual,
        })
    }

    /// Max cell residual of the discrete flow rule at the new state.
    fn flow_residual(&self, state: &State, cells: &[CellOut], _theta_new: &[f64]) -> f64 {
        let tau = self.tau;
        let mut worst = 0.0f64;
        for (c, out) in cells.iter().enumerate() {
            let p_rate = (out.p_new - state.p[c]) * (1.0 / tau);
            let gamma_p = match self.opts.gamma_reg {
                GammaReg::Off => SymTensor2::ZERO,
                GammaReg::On { gamma } => gamma_term(tau, gamma, out.p_new),
            };
            let res = (out.zeta + p_rate + gamma_p - out.sigma.dev()).norm();
            worst = worst.max(res);
        }
        worst
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Output of a full run: final state, audit ledger, and any requested field
/// snapshots (stored inside the ledger).
pub struct RunOutput {
    pub final_state: State,
    pub ledger: AuditLedger,
}

/// Runs the recursion from `initial` to `t_end` with uniform step `tau`,
/// filling an audit ledger as it goes.
pub fn run(
    sys: &System,
    initial: State,
    loads: &Loads,
    t_end: f64,
    tau: f64,
    opts: SolverOpts,
    audit_cfg: AuditConfig,
) -> Result<RunOutput, RunError> {
    let n_steps = (t_end / tau).round() as usize;
    debug_assert!(
        ((n_steps as f64) * tau - t_end).abs() <= 1e-9 * t_end.max(1.0),
        "tau must divide t_end"
    );
    let mut opts = opts;
    if opts.theta_guard == 0.0 {
        let theta_star = initial.theta.iter().cloned().fold(f64::INFINITY, f64::min);
        if let Ok(bar) = positivity_bound(&sys.material, t_end, theta_star) {
            opts.theta_guard = bar / 10.0;
        }
    }
    let stepper = Stepper::new(sys, tau, opts);
    let w0 = loads.w_at(&sys.mesh, 0.0);
    let mut ledger = AuditLedger::new(audit_cfg, sys, tau, t_end, &initial, &w0);
    let mut state = initial;
    for k in 1..=n_steps {
        let t_right = k as f64 * tau;
        let step = loads.sample_step(&sys.mesh, t_right, tau);
        let (next, report) = stepper
            .solve_step(&state, &step)
            .map_err(|source| RunError { step: k, t: t_right, source })?;
        ledger.record_step(sys, tau, &state, &next, &step, &report, stepper.opts.gamma_reg);
        state = next;
    }
    Ok(RunOutput { final_state: state, ledger })
}
