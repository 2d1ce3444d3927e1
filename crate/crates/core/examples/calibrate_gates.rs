//! Calibration of the frozen audit gates: runs the reference shear scenario
//! and prints every measured residual next to its gate, as the ratio
//! residual / (tol_outer * n_steps + tau) / scale. The constants in
//! `audit::gates` were chosen from these numbers with a safety factor.

use thermoplast::audit::gates;
use thermoplast::config::RunConfig;
use thermoplast::stepper::{run, State};

fn main() {
    let mut cfg = RunConfig::preset("shear2d").unwrap();
    // calibration grid: the acceptance resolution and two cheaper ones
    for (nx, tau) in [(8usize, 4e-3f64), (16, 2e-3), (16, 1e-3)] {
        cfg.mesh.nx = nx;
        cfg.mesh.ny = nx;
        cfg.time.tau = tau;
        let sys = cfg.build_system().unwrap();
        let loads = cfg.build_loads();
        let theta0 = cfg.theta0(&sys.mesh);
        let initial = State::initial(&sys, &loads, &theta0);
        let t0 = std::time::Instant::now();
        let out = run(
            &sys,
            initial,
            &loads,
            cfg.time.t_end,
            tau,
            cfg.solver_opts(),
            Default::default(),
        )
        .unwrap();
        let ledger = out.ledger;
        let n = ledger.n_steps();
        let denom = cfg.solver.tol_outer * n as f64 + tau;
        let last = ledger.node_rows.len() - 1;
        let scale = ledger.balance_scale(0, last);
        let mech = ledger.check_mechanical_balance(0, last);
        let total = ledger.check_total_balance(0, last);
        println!("# nx = {nx}, tau = {tau:.1e}, steps = {n}, wall = {:.1?}", t0.elapsed());
        println!("mech_balance_ratio = {:.3e}   (gate C_RES = {})", mech.abs() / denom / scale, gates::C_RES);
        println!("total_slack_ratio = {:.3e}", total / denom / scale);
        for (i, phi) in ledger.cfg.phis.iter().enumerate() {
            let (slack, esc) = ledger.check_entropy_inequality(i, 24);
            println!(
                "entropy_slack[{i} {phi:?}] = {:.3e} of scale {:.3e} (ratio {:.3e}, gate {:.0e})",
                slack,
                esc,
                slack / esc,
                gates::ENTROPY_FACTOR
            );
        }
        let vi_a = ledger.vi_rows.iter().map(|r| r.competitor_slack).fold(f64::INFINITY, f64::min);
        let vi_b = ledger.vi_rows.iter().map(|r| r.rate_slack).fold(f64::INFINITY, f64::min);
        println!("vi_competitor_min = {vi_a:.3e}, vi_rate_min = {vi_b:.3e} (gate -{:.0e})", gates::VI_TOL);
        let bar = ledger.theta_bar.unwrap();
        println!(
            "min_theta = {:.6}, theta_bar = {:.6}, margin = {:.3e} (gate -{:.0e})",
            ledger.min_theta_trajectory(),
            bar,
            ledger.min_theta_trajectory() - bar,
            gates::POSITIVITY_TOL
        );
        println!();
    }
}
