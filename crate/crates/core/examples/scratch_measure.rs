use thermoplast::audit::AuditConfig;
use thermoplast::config::RunConfig;
use thermoplast::fem::p0_norm_sq;
use thermoplast::stepper::{run, State};
use thermoplast::tensor::SymTensor2;

fn main() {
    // Richardson: ||e_tau - e_{tau/2}||_{Linf(L2)} over snapshot times
    let cfg = RunConfig::preset("shear2d").unwrap();
    let sys = cfg.build_system().unwrap();
    let loads = cfg.build_loads();
    let theta0 = cfg.theta0(&sys.mesh);
    let snap: Vec<f64> = (1..=10).map(|k| 0.1 * k as f64).collect();
    let mut runs = Vec::new();
    for tau in [4e-3, 2e-3, 1e-3] {
        let initial = State::initial(&sys, &loads, &theta0);
        let audit_cfg = AuditConfig { snapshot_times: snap.clone(), vi_every: 0, ..Default::default() };
        let t0 = std::time::Instant::now();
        let out = run(&sys, initial, &loads, 1.0, tau, cfg.solver_opts(), audit_cfg).unwrap();
        println!("tau {tau:.0e}: {} snapshots, wall {:.1?}", out.ledger.snapshots.len(), t0.elapsed());
        runs.push(out.ledger.snapshots.clone());
    }
    let dist = |a: &[thermoplast::audit::Snapshot], b: &[thermoplast::audit::Snapshot]| -> f64 {
        a.iter().zip(b).map(|(x, y)| {
            let d: Vec<SymTensor2> = x.e.iter().zip(&y.e).map(|(p, q)| *p - *q).collect();
            p0_norm_sq(&sys.mesh, &d).sqrt()
        }).fold(0.0f64, f64::max)
    };
    let d1 = dist(&runs[0], &runs[1]);
    let d2 = dist(&runs[1], &runs[2]);
    println!("d(4e-3,2e-3) = {d1:.6e}, d(2e-3,1e-3) = {d2:.6e}, slope = {:.3}", (d1 / d2).log2());
}
