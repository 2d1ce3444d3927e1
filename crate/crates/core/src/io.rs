//! Serialization: trajectory CSV, field snapshots, monitor tables, and
//! sweep outputs. All numeric output uses 17 significant digits so parsing
//! the files back reproduces the binary values exactly, and identical
//! inputs produce byte-identical files.

use crate::audit::{AuditLedger, MonitorTable};
use crate::mesh::Mesh;
use crate::stepper::State;
use crate::vv::VVSweepResult;
use std::io::{self, Write};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Column order of the trajectory CSV; one row per time node, with the
/// increments of the step ending at that node (zeros on the first row).
pub const TRAJECTORY_COLUMNS: &[&str] = &[
    "t",
    "kinetic",
    "elastic",
    "thermal",
    "gamma_energy",
    "visc_diss",
    "plast_r",
    "plast_sq",
    "load_work",
    "theta_be_work",
    "mom_w",
    "sigma_w",
    "heat_in",
    "residual",
    "min_theta",
    "theta_bar",
    "std_theta",
    "mean_theta",
    "dist_k",
    "grad_theta",
    "e_l2",
    "u_h1",
];

pub fn write_trajectory(ledger: &AuditLedger, sink: &mut impl Write) -> io::Result<()> {
    writeln!(sink, "{}", TRAJECTORY_COLUMNS.join(","))?;
    let bar = ledger.theta_bar.unwrap_or(f64::NAN);
    for (k, node) in ledger.node_rows.iter().enumerate() {
        let step = if k >= 1 { Some(&ledger.step_rows[k - 1]) } else { None };
        let s = |f: fn(&crate::audit::StepRow) -> f64| step.map(f).unwrap_or(0.0);
        let cols = [
            node.t,
            node.kinetic,
            node.elastic,
            node.thermal,
            node.gamma_energy,
            s(|r| r.visc_diss),
            s(|r| r.plast_r),
            s(|r| r.plast_sq),
            s(|r| r.load_work),
            s(|r| r.theta_be_work),
            s(|r| r.mom_w),
            s(|r| r.sigma_w),
            s(|r| r.heat_in),
            s(|r| r.residual),
            node.min_theta,
            bar,
            node.std_theta,
            node.mean_theta,
            s(|r| r.dist_k_sq.sqrt()),
            s(|r| r.grad_theta_sq.sqrt()),
            node.e_l2,
            node.u_h1,
        ];
        let line: Vec<String> = cols.iter().map(|&v| fmt(v)).collect();
        writeln!(sink, "{}", line.join(","))?;
    }
    Ok(())
}

/// Parses a trajectory CSV back into rows of numbers (round-trip testing).
pub fn parse_trajectory_csv(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

/// Plain-text field snapshot: per-node and per-cell tables, one record per
/// line.
pub fn write_fields(
    mesh: &Mesh,
    t: f64,
    u: &[f64],
    theta: &[f64],
    e: &[crate::tensor::SymTensor2],
    p: &[crate::tensor::SymTensor2],
    sink: &mut impl Write,
) -> io::Result<()> {
    writeln!(sink, "t {}", fmt(t))?;
    writeln!(sink, "nodes {}", mesh.n_nodes())?;
    writeln!(sink, "# i x y u_x u_y theta")?;
    for i in 0..mesh.n_nodes() {
        writeln!(
            sink,
            "{} {} {} {} {} {}",
            i,
            fmt(mesh.nodes[i][0]),
            fmt(mesh.nodes[i][1]),
            fmt(u[2 * i]),
            fmt(u[2 * i + 1]),
            fmt(theta[i])
        )?;
    }
    writeln!(sink, "cells {}", mesh.n_cells())?;
    writeln!(sink, "# c e_xx e_yy e_xy p_xx p_yy p_xy")?;
    for c in 0..mesh.n_cells() {
        writeln!(
            sink,
            "{} {} {} {} {} {} {}",
            c,
            fmt(e[c].a),
            fmt(e[c].b),
            fmt(e[c].c),
            fmt(p[c].a),
            fmt(p[c].b),
            fmt(p[c].c)
        )?;
    }
    Ok(())
}

pub fn write_state_fields(mesh: &Mesh, state: &State, sink: &mut impl Write) -> io::Result<()> {
    write_fields(mesh, state.t, &state.u, &state.theta, &state.e, &state.p, sink)
}

pub fn write_monitors(table: &MonitorTable, sink: &mut impl Write) -> io::Result<()> {
    for (name, value) in table.named() {
        writeln!(sink, "{name} = {}", fmt(value))?;
    }
    Ok(())
}

/// Sweep CSV: one row per ε, one column per metric (field-comparison
/// columns expand over the sample times).
pub fn write_sweep(result: &VVSweepResult, sink: &mut impl Write) -> io::Result<()> {
    let mut header = vec![
        "eps".to_string(),
        "max_std_theta".into(),
        "std_theta_final".into(),
        "grad_theta_l2q".into(),
        "dist_k_l2".into(),
        "dist_k_over_sqrt_eps".into(),
        "balance_residual".into(),
        "sup_e_l2".into(),
        "pdot_l1l2".into(),
        "eps_vel_linf_l2".into(),
        "min_theta".into(),
        "theta_bar".into(),
    ];
    for t in &result.sample_times {
        header.push(format!("e_vs_pp_t{t}"));
    }
    writeln!(sink, "{}", header.join(","))?;
    for row in &result.rows {
        let mut cols = vec![
            fmt(row.eps),
            fmt(row.max_std_theta),
            fmt(row.std_theta_final),
            fmt(row.grad_theta_l2q),
            fmt(row.dist_k_l2),
            fmt(row.dist_k_l2_over_sqrt_eps),
            fmt(row.balance_residual),
            fmt(row.sup_e_l2),
            fmt(row.pdot_l1l2),
            fmt(row.eps_vel_linf_l2),
            fmt(row.min_theta),
            fmt(row.theta_bar),
        ];
        for v in &row.e_vs_pp {
            cols.push(fmt(*v));
        }
        writeln!(sink, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Machine-readable sweep summary with the fitted slopes.
pub fn write_sweep_summary(result: &VVSweepResult, sink: &mut impl Write) -> io::Result<()> {
    writeln!(sink, "slope_grad_theta = {}", fmt(result.slope_grad_theta))?;
    writeln!(sink, "slope_dist_k = {}", fmt(result.slope_dist_k))?;
    writeln!(sink, "pp_var_total = {}", fmt(result.pp_var_total))?;
    writeln!(sink, "n_eps = {}", result.rows.len())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::AuditConfig;
    use crate::loads::Loads;
    use crate::material::MaterialModel;
    use crate::mesh::Side;
    use crate::stepper::{run, SolverOpts, System};

    fn tiny_run() -> (System, crate::stepper::RunOutput) {
        let mesh = Mesh::rectangle(2, 2, 1.0, 1.0, &[Side::Bottom]).unwrap();
        let material = MaterialModel::defaults(mesh.n_cells());
        let sys = System::new(mesh, material);
        let loads = Loads {
            w_curve: crate::loads::Curve::Linear { a: 0.0, b: 1.0 },
            w_mode: crate::loads::WMode { shear: 0.4, stretch_x: 0.0, uplift: 0.0 },
            ..Loads::quiescent()
        };
        let theta0 = vec![1.0; sys.mesh.n_nodes()];
        let initial = crate::stepper::State::initial(&sys, &loads, &theta0);
        let out = run(&sys, initial, &loads, 0.01, 5e-3, SolverOpts::default(),
                      AuditConfig::default()).unwrap();
        (sys, out)
    }

    #[test]
    fn single_step_run_gives_two_rows_plus_header() {
        let mesh = Mesh::rectangle(1, 1, 1.0, 1.0, &[Side::Bottom]).unwrap();
        let material = MaterialModel::defaults(mesh.n_cells());
        let sys = System::new(mesh, material);
        let loads = Loads::quiescent();
        let theta0 = vec![1.0; sys.mesh.n_nodes()];
        let initial = crate::stepper::State::initial(&sys, &loads, &theta0);
        let out = run(&sys, initial, &loads, 1e-3, 1e-3, SolverOpts::default(),
                      AuditConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&out.ledger, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3); // header + t=0 + t=tau
    }

    #[test]
    fn trajectory_round_trips_all_digits() {
        let (_, out) = tiny_run();
        let mut buf = Vec::new();
        write_trajectory(&out.ledger, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let rows = parse_trajectory_csv(&text);
        // rewrite from the parsed values: identical bytes
        let mut buf2 = Vec::new();
        writeln!(buf2, "{}", TRAJECTORY_COLUMNS.join(",")).unwrap();
        for row in &rows {
            let line: Vec<String> = row.iter().map(|&v| fmt(v)).collect();
            writeln!(buf2, "{}", line.join(",")).unwrap();
        }
        assert_eq!(buf, buf2, "17-digit round trip is not the identity");
    }

    #[test]
    fn serial_reruns_are_byte_identical() {
        let (_, out1) = tiny_run();
        let (_, out2) = tiny_run();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_trajectory(&out1.ledger, &mut a).unwrap();
        write_trajectory(&out2.ledger, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn field_snapshot_has_node_and_cell_tables() {
        let (sys, out) = tiny_run();
        let mut buf = Vec::new();
        write_state_fields(&sys.mesh, &out.final_state, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("nodes 13"));
        assert!(text.contains("cells 16"));
    }
}
