//! Command-line driver: viscoplastic runs, quasistatic perfect-plasticity
//! runs, vanishing-viscosity sweeps, and audited runs with gate checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver nonconvergence,
//! 4 audit-gate failure.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thermoplast::audit::{gates, AuditConfig};
use thermoplast::config::{parse_config, Mode, RunConfig};
use thermoplast::io as tio;
use thermoplast::pp::{check_energy_balance_e, run_quasistatic, PpOpts};
use thermoplast::stepper::{run, State};
use thermoplast::vv::run_sweep;

#[derive(Parser)]
#[command(name = "thermoplast", version, about = "thermoviscoplasticity simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the TOML run configuration; omit to use the shear2d preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and snapshots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Force single-threaded, byte-reproducible execution.
    #[arg(long)]
    serial: bool,
    /// Override the time step from the configuration.
    #[arg(long)]
    tau: Option<f64>,
    /// Override the sweep epsilon list, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the thermoviscoplastic stepper and write trajectory outputs.
    Run(Common),
    /// Run the quasistatic perfectly plastic incremental solver.
    PpRun(Common),
    /// Run the vanishing-viscosity-and-inertia sweep.
    Sweep(Common),
    /// Run the stepper and evaluate every audit gate; fails on violations.
    Audit(Common),
}

fn load_config(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::preset("shear2d").unwrap(),
    };
    if let Some(tau) = common.tau {
        if !(tau > 0.0) {
            return Err("--tau must be positive".into());
        }
        cfg.time.tau = tau;
    }
    if let Some(eps) = &common.eps_list {
        if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|&e| e <= 0.0)
        {
            return Err("--eps-list must be positive and strictly decreasing".into());
        }
        cfg.vv.eps_list = eps.clone();
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn viscoplastic_run(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode, String> {
    let sys = cfg.build_system().map_err(|e| e.to_string())?;
    let loads = cfg.build_loads();
    loads.validate(&sys.mesh, &sys.layout).map_err(|e| e.to_string())?;
    let theta0 = cfg.theta0(&sys.mesh);
    let initial = State::initial(&sys, &loads, &theta0);
    let audit_cfg = AuditConfig {
        snapshot_times: cfg.snapshot_times.clone(),
        ..AuditConfig::default()
    };
    let out = match run(
        &sys,
        initial,
        &loads,
        cfg.time.t_end,
        cfg.time.tau,
        cfg.solver_opts(),
        audit_cfg,
    ) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("solver failed: {e}");
            return Ok(ExitCode::from(3));
        }
    };
    let mut buf = Vec::new();
    tio::write_trajectory(&out.ledger, &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "trajectory.csv", &buf)?;
    let mut buf = Vec::new();
    tio::write_monitors(&out.ledger.apriori_monitors(), &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "monitors.txt", &buf)?;
    write_file(out_dir, "mesh.txt", sys.mesh.export_text().as_bytes())?;
    let mut buf = Vec::new();
    tio::write_state_fields(&sys.mesh, &out.final_state, &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "fields_final.txt", &buf)?;
    for snap in &out.ledger.snapshots {
        let mut buf = Vec::new();
        tio::write_fields(&sys.mesh, snap.t, &snap.u, &snap.theta, &snap.e, &snap.p, &mut buf)
            .map_err(|e| e.to_string())?;
        write_file(out_dir, &format!("fields_t{:.6}.txt", snap.t), &buf)?;
    }
    println!(
        "run finished: {} steps, min theta {:.6}, wrote {}",
        out.ledger.n_steps(),
        out.ledger.min_theta_trajectory(),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn pp_run(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode, String> {
    let sys = cfg.build_system().map_err(|e| e.to_string())?;
    let loads = cfg.build_loads();
    let traj = match run_quasistatic(&sys, &loads, cfg.time.t_end, cfg.pp_increments, &PpOpts::default()) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("incremental solver failed: {e}");
            return Ok(ExitCode::from(3));
        }
    };
    // per-increment summary CSV: t, Q(e), Var_R so far, |p|_L2, energy residual
    let mut buf = Vec::new();
    {
        use std::io::Write;
        writeln!(buf, "t,elastic,var_r,p_l2,e_balance_residual").unwrap();
        for k in 0..traj.states.len() {
            let s = &traj.states[k];
            let p_path: Vec<_> = traj.states[..=k].iter().map(|x| x.p.clone()).collect();
            let var = if k >= 1 { thermoplast::pp::var_r(&sys, &p_path) } else { 0.0 };
            let q = thermoplast::pp::elastic_energy(&sys, &s.e);
            let p_l2 = thermoplast::fem::p0_norm_sq(&sys.mesh, &s.p).sqrt();
            let res = check_energy_balance_e(&sys, &traj, k);
            writeln!(
                buf,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, q, var, p_l2, res
            )
            .unwrap();
        }
    }
    write_file(out_dir, "pp_trajectory.csv", &buf)?;
    let last = traj.states.last().unwrap();
    let mut buf = Vec::new();
    tio::write_fields(&sys.mesh, last.t, &last.u, &vec![0.0; sys.mesh.n_nodes()], &last.e, &last.p, &mut buf)
        .map_err(|e| e.to_string())?;
    write_file(out_dir, "pp_fields_final.txt", &buf)?;
    println!(
        "pp run finished: {} increments, energy balance residual {:.3e}, wrote {}",
        traj.states.len() - 1,
        check_energy_balance_e(&sys, &traj, traj.states.len() - 1),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(cfg: &RunConfig, out_dir: &Path, serial: bool) -> Result<ExitCode, String> {
    let sys = cfg.build_system().map_err(|e| e.to_string())?;
    let theta0 = cfg.theta0(&sys.mesh);
    let vv_cfg = cfg.vv_config();
    let result = match run_sweep(&vv_cfg, &sys, &theta0, serial) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("sweep failed: {e}");
            return Ok(ExitCode::from(3));
        }
    };
    let mut buf = Vec::new();
    tio::write_sweep(&result, &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "sweep.csv", &buf)?;
    let mut buf = Vec::new();
    tio::write_sweep_summary(&result, &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "sweep_summary.txt", &buf)?;
    println!(
        "sweep finished: {} eps values, grad-theta slope {:.3}, wrote {}",
        result.rows.len(),
        result.slope_grad_theta,
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn audit(cfg: &RunConfig, out_dir: &Path) -> Result<ExitCode, String> {
    let sys = cfg.build_system().map_err(|e| e.to_string())?;
    let loads = cfg.build_loads();
    let theta0 = cfg.theta0(&sys.mesh);
    let initial = State::initial(&sys, &loads, &theta0);
    let out = match run(
        &sys,
        initial,
        &loads,
        cfg.time.t_end,
        cfg.time.tau,
        cfg.solver_opts(),
        AuditConfig::default(),
    ) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("solver failed: {e}");
            return Ok(ExitCode::from(3));
        }
    };
    let ledger = &out.ledger;
    let n = ledger.n_steps();
    let last = ledger.node_rows.len() - 1;
    let mut all_pass = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{}: {} ({detail})", name, if pass { "PASS" } else { "FAIL" });
        all_pass &= pass;
    };

    let bar = ledger.theta_bar.unwrap_or(0.0);
    let min_theta = ledger.min_theta_trajectory();
    check(
        "positivity",
        min_theta >= bar - gates::POSITIVITY_TOL,
        format!("min theta {min_theta:.6} vs floor {bar:.6}"),
    );
    let denom = cfg.solver.tol_outer * n as f64 + cfg.time.tau;
    let scale = ledger.balance_scale(0, last);
    let gate = gates::balance_gate(cfg.solver.tol_outer, n, cfg.time.tau, scale);
    let mech = ledger.check_mechanical_balance(0, last);
    check(
        "mechanical_balance",
        mech.abs() <= gate,
        format!("residual {mech:.3e}, gate {gate:.3e}, ratio {:.2}", mech.abs() / denom / scale),
    );
    let total = ledger.check_total_balance(0, last);
    let total_ok = total >= -gates::C_RES * cfg.solver.tol_outer * n as f64 * scale
        && (cfg.solver.gamma > 0.0 || total.abs() <= gate);
    check("total_balance", total_ok, format!("slack {total:.3e}, gate {gate:.3e}"));
    for (i, phi) in ledger.cfg.phis.iter().enumerate() {
        let (slack, esc) = ledger.check_entropy_inequality(i, 24);
        check(
            &format!("entropy[{i}]"),
            slack >= -gates::ENTROPY_FACTOR * esc,
            format!("{phi:?}: slack {slack:.3e}, scale {esc:.3e}"),
        );
    }
    let vi_a = ledger.vi_rows.iter().map(|r| r.competitor_slack).fold(f64::INFINITY, f64::min);
    let vi_b = ledger.vi_rows.iter().map(|r| r.rate_slack).fold(f64::INFINITY, f64::min);
    check(
        "flow_rule_vi",
        vi_a >= -gates::VI_TOL && vi_b >= -gates::VI_TOL,
        format!("competitor slack {vi_a:.3e}, rate slack {vi_b:.3e}"),
    );

    let mut buf = Vec::new();
    tio::write_trajectory(ledger, &mut buf).map_err(|e| e.to_string())?;
    write_file(out_dir, "trajectory.csv", &buf)?;
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(4))
    }
}

fn dispatch(cmd: &Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Run(common) => {
            let cfg = load_config(common)?;
            viscoplastic_run(&cfg, &common.out)
        }
        Command::PpRun(common) => {
            let mut cfg = load_config(common)?;
            if cfg.mode == Mode::Viscoplastic {
                cfg.mode = Mode::PerfectPlasticity;
            }
            pp_run(&cfg, &common.out)
        }
        Command::Sweep(common) => {
            let cfg = load_config(common)?;
            sweep(&cfg, &common.out, common.serial)
        }
        Command::Audit(common) => {
            let cfg = load_config(common)?;
            audit(&cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
