//! Vanishing-viscosity-and-inertia sweep: rescale the data toward slow
//! loading, run the thermoviscoplastic stepper for a decreasing sequence of
//! rate parameters ε, and measure the convergence toward the quasistatic
//! perfectly plastic evolution and the spatially constant limit temperature.
//!
//! The rescaled system in slow time t with inertia `ρ ε²`, viscosity `ε D`,
//! flow viscosity `ε ṗ`, heat capacity `ε`, and sources `ε H̄, ε h̄` is, step
//! for step, the original discrete system on the fast horizon `[0, T/ε]`
//! with time-dilated data, thermal coupling `B_ε = ε^β B`, and step
//! `τ_fast = τ_slow / ε`. The sweep therefore runs the unmodified stepper
//! on the fast horizon and converts the recorded norms back to slow time.

use crate::audit::{AuditConfig, PhiSpec};
use crate::fem::p0_norm_sq;
use crate::loads::Loads;
use crate::material::MaterialModel;
use crate::pp::{run_quasistatic, var_r, PpError, PpOpts, QuasistaticTrajectory};
use crate::stepper::{run, RunError, SolverOpts, State, System};
use crate::tensor::SymTensor2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VvError {
    #[error("beta must exceed 1/2 for the vanishing-viscosity scaling (got {0})")]
    BadBeta(f64),
    #[error("epsilon list must be positive and strictly decreasing")]
    BadEpsList,
    #[error("run at eps = {eps}: {source}")]
    EpsRunFailed {
        eps: f64,
        #[source]
        source: RunError,
    },
    #[error("perfect-plasticity reference: {0}")]
    Reference(#[from] PpError),
}

/// Sweep configuration: slow-time base data plus the ε schedule.
#[derive(Debug, Clone)]
pub struct VVConfig {
    /// Strictly decreasing, positive.
    pub eps_list: Vec<f64>,
    /// Thermal-coupling scaling exponent, `B_ε = ε^β B`, `β > 1/2`.
    pub beta: f64,
    /// Slow-time step prefactor: `τ_slow = τ0 ε` (so the fast step is τ0).
    pub tau0: f64,
    /// Slow horizon.
    pub t_end: f64,
    /// Slow-time loads; heat sources and the deviatoric safe-load part are
    /// scaled by ε per the data hypotheses, the Dirichlet path is only
    /// slowed down.
    pub base_loads: Loads,
    /// Number of increments of the quasistatic reference.
    pub pp_increments: usize,
    /// Slow sample times for the field comparison against the reference.
    pub sample_times: Vec<f64>,
}

impl VVConfig {
    pub fn validate(&self) -> Result<(), VvError> {
        if !(self.beta > 0.5) {
            return Err(VvError::BadBeta(self.beta));
        }
        if self.eps_list.is_empty()
            || self.eps_list.iter().any(|&e| !(e > 0.0))
            || self.eps_list.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(VvError::BadEpsList);
        }
        Ok(())
    }
}

/// The ε-system inputs in fast time: dilated and scaled loads plus the
/// material with the scaled thermal coupling.
pub struct ScaledProblem {
    pub loads: Loads,
    pub material: MaterialModel,
    pub t_end_fast: f64,
    pub tau_fast: f64,
}

/// Produces the ε-system term by term: `B_ε = ε^β B`, `H_ε = ε H̄`,
/// `h_ε = ε h̄`, deviatoric safe-load part `ε (ϱ_D seed)`, inertia `ρ ε²`,
/// viscosity prefactor ε on the Kelvin-Voigt tensor and the flow rule
/// (realized through the fast-time change of variables).
pub fn rescale(cfg: &VVConfig, base_material: &MaterialModel, eps: f64) -> ScaledProblem {
    let b = &cfg.base_loads;
    let loads = Loads {
        w_curve: b.w_curve.rescaled(eps, 1.0),
        w_mode: b.w_mode,
        w2: b.w2.as_ref().map(|(c, m)| (c.rescaled(eps, 1.0), *m)),
        heat_bulk: b.heat_bulk.as_ref().map(|(c, p)| (c.rescaled(eps, eps), *p)),
        heat_bdry: b.heat_bdry.as_ref().map(|(c, p)| (c.rescaled(eps, eps), *p)),
        rho_load: b.rho_load.as_ref().map(|r| crate::loads::RhoLoad {
            vol_curve: r.vol_curve.rescaled(eps, 1.0),
            dev_curve: r.dev_curve.rescaled(eps, eps),
            dev_dir: r.dev_dir,
        }),
        v0_from_w_rate: b.v0_from_w_rate,
    };
    let mut material = base_material.clone();
    let scale = eps.powf(cfg.beta);
    for t in &mut material.b_coupling {
        *t = *t * scale;
    }
    ScaledProblem { loads, material, t_end_fast: cfg.t_end / eps, tau_fast: cfg.tau0 }
}

/// Metrics of one ε run, reported in slow-time units.
#[derive(Debug, Clone)]
pub struct VVRow {
    pub eps: f64,
    pub max_std_theta: f64,
    pub std_theta_final: f64,
    /// `‖∇θ_ε‖_{L²(Q)}` over the slow cylinder.
    pub grad_theta_l2q: f64,
    /// `‖d((σ_ε)_D, K)‖_{L²(0,T)}` in slow time.
    pub dist_k_l2: f64,
    pub dist_k_l2_over_sqrt_eps: f64,
    /// `‖e_ε(t) - e_pp(t)‖_{L²}` at the sample times.
    pub e_vs_pp: Vec<f64>,
    /// Spatial average of θ at the sample times (and t = 0 first).
    pub theta_mean: Vec<f64>,
    /// Residual of the dissipation-thermal balance over `[0, T]`.
    pub balance_residual: f64,
    /// Uniform-bound monitors: `sup_t ‖e‖`, slow `‖ṗ‖_{L¹(L²)}`,
    /// `ε ‖u̇‖_{L∞(L²)}` (equal to the fast-time velocity sup).
    pub sup_e_l2: f64,
    pub pdot_l1l2: f64,
    pub eps_vel_linf_l2: f64,
    pub min_theta: f64,
    pub theta_bar: f64,
}

#[derive(Debug, Clone)]
pub struct VVSweepResult {
    pub rows: Vec<VVRow>,
    /// Least-squares slope of `log ‖∇θ_ε‖` vs `log ε`.
    pub slope_grad_theta: f64,
    pub slope_dist_k: f64,
    /// Total dissipation of the reference plastic path over `[0, T]`.
    pub pp_var_total: f64,
    pub sample_times: Vec<f64>,
}

/// Residual of the limiting balance between thermal energy growth, plastic
/// dissipation, and heat input over a slow interval:
/// `|Ω| (Θ(t) - Θ(s)) - Var_R(p; [s,t]) - ∫∫H̄ - ∫∫h̄`.
pub fn check_dissipation_thermal_balance(
    domain_area: f64,
    theta_mean_s: f64,
    theta_mean_t: f64,
    var_r_interval: f64,
    source_integral: f64,
) -> f64 {
    domain_area * (theta_mean_t - theta_mean_s) - var_r_interval - source_integral
}

fn fit_slope(points: &[(f64, f64)]) -> f64 {
    // least squares on (ln eps, ln metric); degenerate data gives NaN
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|(_, m)| *m > 0.0).map(|&(e, m)| (e.ln(), m.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Runs one ε of the sweep; `mesh` level data are shared through `sys_of`.
fn run_one_eps(
    cfg: &VVConfig,
    base_sys: &System,
    theta0: &[f64],
    eps: f64,
    pp_traj: &QuasistaticTrajectory,
) -> Result<VVRow, VvError> {
    let mut scaled = rescale(cfg, &base_sys.material, eps);
    // snap the fast step to an integer number of steps on the fast horizon
    let n_steps = (scaled.t_end_fast / scaled.tau_fast).ceil().max(1.0);
    scaled.tau_fast = scaled.t_end_fast / n_steps;
    let sys = System::new(base_sys.mesh.clone(), scaled.material);
    let initial = State::initial(&sys, &scaled.loads, theta0);
    let sample_fast: Vec<f64> = cfg.sample_times.iter().map(|t| t / eps).collect();
    let audit_cfg = AuditConfig {
        phis: vec![PhiSpec::One],
        vi_every: 0,
        vi_competitors: 0,
        snapshot_times: sample_fast,
        alpha_exp: 0.75,
    };
    let opts = SolverOpts::default();
    let out = run(
        &sys,
        initial,
        &scaled.loads,
        scaled.t_end_fast,
        scaled.tau_fast,
        opts,
        audit_cfg,
    )
    .map_err(|source| VvError::EpsRunFailed { eps, source })?;
    let ledger = &out.ledger;
    let tau_fast = scaled.tau_fast;

    let mut grad_sq_fast = 0.0;
    let mut dist_sq_fast = 0.0;
    for r in &ledger.step_rows {
        grad_sq_fast += tau_fast * r.grad_theta_sq;
        dist_sq_fast += tau_fast * r.dist_k_sq;
    }
    let grad_theta_l2q = (eps * grad_sq_fast).sqrt();
    let dist_k_l2 = (eps * dist_sq_fast).sqrt();

    let max_std_theta =
        ledger.node_rows.iter().map(|r| r.std_theta).fold(0.0f64, f64::max);
    let std_theta_final = ledger.node_rows.last().unwrap().std_theta;
    let sup_e_l2 = ledger.node_rows.iter().map(|r| r.e_l2).fold(0.0f64, f64::max);

    // field comparison against the quasistatic reference at sample times
    let mesh = &sys.mesh;
    let mut e_vs_pp = Vec::new();
    let mut theta_mean = vec![ledger.node_rows[0].mean_theta];
    for (si, &ts) in cfg.sample_times.iter().enumerate() {
        let snap = ledger
            .snapshots
            .get(si)
            .unwrap_or_else(|| panic!("missing snapshot at slow time {ts}"));
        let pp_idx = ((ts / cfg.t_end) * cfg.pp_increments as f64).round() as usize;
        let e_pp = &pp_traj.states[pp_idx].e;
        let diff: Vec<SymTensor2> =
            snap.e.iter().zip(e_pp).map(|(a, b)| *a - *b).collect();
        e_vs_pp.push(p0_norm_sq(mesh, &diff).sqrt());
        let node_idx = ((ts / eps) / tau_fast).round() as usize;
        theta_mean.push(ledger.node_rows[node_idx.min(ledger.node_rows.len() - 1)].mean_theta);
    }

    // dissipation-thermal balance over [0, T]: heat input taken from the
    // run's own quadrature, converted to slow time by construction
    let p_path: Vec<Vec<SymTensor2>> = pp_traj.states.iter().map(|s| s.p.clone()).collect();
    let var_pp = var_r(&sys, &p_path);
    let source_integral: f64 = ledger.step_rows.iter().map(|r| r.heat_in).sum();
    let balance_residual = check_dissipation_thermal_balance(
        mesh.domain_area(),
        theta_mean[0],
        *theta_mean.last().unwrap(),
        var_pp,
        source_integral,
    );

    Ok(VVRow {
        eps,
        max_std_theta,
        std_theta_final,
        grad_theta_l2q,
        dist_k_l2,
        dist_k_l2_over_sqrt_eps: dist_k_l2 / eps.sqrt(),
        e_vs_pp,
        theta_mean,
        balance_residual,
        sup_e_l2,
        pdot_l1l2: ledger.monitors.pdot_l1l2,
        eps_vel_linf_l2: ledger.monitors.vel_linf_l2,
        min_theta: ledger.min_theta_trajectory(),
        theta_bar: ledger.theta_bar.unwrap_or(f64::NAN),
    })
}

/// Runs the whole sweep. Independent ε runs execute on separate threads
/// unless `serial` is set; the result aggregation is index-ordered either
/// way, so the output does not depend on scheduling.
pub fn run_sweep(
    cfg: &VVConfig,
    base_sys: &System,
    theta0: &[f64],
    serial: bool,
) -> Result<VVSweepResult, VvError> {
    cfg.validate()?;
    // quasistatic reference on the slow data with the deviatoric safe-load
    // part dropped (it vanishes in the limit)
    let pp_loads = Loads {
        rho_load: cfg.base_loads.rho_load.as_ref().map(|r| crate::loads::RhoLoad {
            vol_curve: r.vol_curve.clone(),
            dev_curve: crate::loads::Curve::Constant(0.0),
            dev_dir: r.dev_dir,
        }),
        ..cfg.base_loads.clone()
    };
    let pp_traj =
        run_quasistatic(base_sys, &pp_loads, cfg.t_end, cfg.pp_increments, &PpOpts::default())?;

    let rows: Vec<VVRow> = if serial || cfg.eps_list.len() == 1 {
        let mut rows = Vec::new();
        for &eps in &cfg.eps_list {
            rows.push(run_one_eps(cfg, base_sys, theta0, eps, &pp_traj)?);
        }
        rows
    } else {
        let results: Vec<Result<VVRow, VvError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .eps_list
                .iter()
                .map(|&eps| {
                    let pp = &pp_traj;
                    scope.spawn(move || run_one_eps(cfg, base_sys, theta0, eps, pp))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep thread panicked")).collect()
        });
        results.into_iter().collect::<Result<Vec<_>, _>>()?
    };

    let slope_grad_theta =
        fit_slope(&rows.iter().map(|r| (r.eps, r.grad_theta_l2q)).collect::<Vec<_>>());
    let slope_dist_k =
        fit_slope(&rows.iter().map(|r| (r.eps, r.dist_k_l2)).collect::<Vec<_>>());
    let p_path: Vec<Vec<SymTensor2>> = pp_traj.states.iter().map(|s| s.p.clone()).collect();
    let pp_var_total = var_r(base_sys, &p_path);
    Ok(VVSweepResult {
        rows,
        slope_grad_theta,
        slope_dist_k,
        pp_var_total,
        sample_times: cfg.sample_times.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loads::{Curve, Profile, RhoLoad, WMode};
    use crate::mesh::{Mesh, Side};

    fn base_system(n: usize) -> System {
        let mesh = Mesh::rectangle(n, n, 1.0, 1.0, &[Side::Bottom, Side::Top]).unwrap();
        let material = MaterialModel::defaults(mesh.n_cells());
        System::new(mesh, material)
    }

    fn base_cfg() -> VVConfig {
        VVConfig {
            eps_list: vec![1.0, 0.5],
            beta: 0.75,
            tau0: 0.05,
            t_end: 0.5,
            base_loads: Loads {
                w_curve: Curve::Linear { a: 0.0, b: 1.0 },
                w_mode: WMode { shear: 0.8, stretch_x: 0.0, uplift: 0.0 },
                heat_bulk: Some((Curve::Constant(0.4), Profile::Uniform)),
                rho_load: Some(RhoLoad {
                    vol_curve: Curve::Constant(0.05),
                    dev_curve: Curve::Constant(0.08),
                    dev_dir: crate::tensor::SymTensor2::shear(1.0),
                }),
                ..Loads::quiescent()
            },
            pp_increments: 10,
            sample_times: vec![0.25, 0.5],
        }
    }

    #[test]
    fn rescale_at_eps_one_is_identity() {
        let sys = base_system(2);
        let cfg = base_cfg();
        let scaled = rescale(&cfg, &sys.material, 1.0);
        assert_eq!(scaled.t_end_fast, cfg.t_end);
        for t in [0.0, 0.2, 0.5] {
            assert_eq!(scaled.loads.w_curve.eval(t), cfg.base_loads.w_curve.eval(t));
            let (bc, _) = scaled.loads.heat_bulk.as_ref().unwrap();
            let (bc0, _) = cfg.base_loads.heat_bulk.as_ref().unwrap();
            assert_eq!(bc.eval(t), bc0.eval(t));
        }
        for (a, b) in scaled.material.b_coupling.iter().zip(&sys.material.b_coupling) {
            assert!((*a - *b).norm() == 0.0);
        }
    }

    #[test]
    fn rescale_scales_sources_and_coupling() {
        let sys = base_system(2);
        let cfg = base_cfg();
        let eps = 0.1;
        let scaled = rescale(&cfg, &sys.material, eps);
        // H_eps = eps * base, sampled at slow time eps * t_fast
        let (bc, _) = scaled.loads.heat_bulk.as_ref().unwrap();
        assert!((bc.eval(3.0) - eps * 0.4).abs() < 1e-15);
        // |B_eps| = eps^beta |B| on a log grid of eps
        for &e in &[1.0, 0.3, 0.1, 0.03, 0.01] {
            let s = rescale(&cfg, &sys.material, e);
            let ratio = s.material.b_coupling[0].norm() / sys.material.b_coupling[0].norm();
            assert!((ratio - e.powf(cfg.beta)).abs() < 1e-14);
        }
        // deviatoric safe-load part scales with eps, volumetric does not
        let r = scaled.loads.rho_load.as_ref().unwrap();
        assert!((r.dev_curve.eval(1.0) - eps * 0.08).abs() < 1e-15);
        assert!((r.vol_curve.eval(1.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn bad_config_is_rejected() {
        let mut cfg = base_cfg();
        cfg.beta = 0.5;
        assert!(matches!(cfg.validate(), Err(VvError::BadBeta(_))));
        let mut cfg = base_cfg();
        cfg.eps_list = vec![0.1, 0.1];
        assert!(matches!(cfg.validate(), Err(VvError::BadEpsList)));
    }

    #[test]
    fn elastic_subyield_sweep_has_zero_yield_distance() {
        let sys = base_system(2);
        let mut cfg = base_cfg();
        cfg.base_loads.w_mode = WMode { shear: 0.05, stretch_x: 0.0, uplift: 0.0 };
        cfg.eps_list = vec![1.0, 0.3];
        cfg.tau0 = 0.05;
        let theta0 = vec![1.0; sys.mesh.n_nodes()];
        let result = run_sweep(&cfg, &sys, &theta0, true).unwrap();
        for row in &result.rows {
            assert!(row.dist_k_l2 < 1e-12, "stress left K: {}", row.dist_k_l2);
        }
        assert_eq!(result.pp_var_total, 0.0);
    }

    #[test]
    fn uniform_source_quiescent_mechanics_theta_grows_linearly() {
        // H̄ = const, no mechanical loading, no thermal expansion:
        // Θ(t) - Θ(0) = t * H̄ (area 1)
        let mut sys = base_system(2);
        for b in &mut sys.material.b_coupling {
            *b = crate::tensor::SymTensor2::ZERO;
        }
        let mut cfg = base_cfg();
        cfg.base_loads = Loads {
            heat_bulk: Some((Curve::Constant(0.4), Profile::Uniform)),
            ..Loads::quiescent()
        };
        cfg.eps_list = vec![1.0, 0.25];
        cfg.sample_times = vec![0.5];
        let theta0 = vec![1.0; sys.mesh.n_nodes()];
        let result = run_sweep(&cfg, &sys, &theta0, true).unwrap();
        for row in &result.rows {
            let gained = row.theta_mean.last().unwrap() - row.theta_mean[0];
            assert!(
                (gained - 0.4 * cfg.t_end).abs() < 1e-9,
                "eps {}: mean theta gained {gained}",
                row.eps
            );
            // balance residual reduces to exact source bookkeeping
            assert!(row.balance_residual.abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_and_serial_agree() {
        let sys = base_system(2);
        let mut cfg = base_cfg();
        cfg.eps_list = vec![1.0, 0.5];
        cfg.tau0 = 0.05;
        let theta0: Vec<f64> =
            sys.mesh.nodes.iter().map(|p| 1.0 + 0.3 * p[0]).collect();
        let a = run_sweep(&cfg, &sys, &theta0, true).unwrap();
        let b = run_sweep(&cfg, &sys, &theta0, false).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.grad_theta_l2q, rb.grad_theta_l2q);
            assert_eq!(ra.balance_residual, rb.balance_residual);
        }
    }
}
