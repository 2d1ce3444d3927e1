//! Time-dependent load data: scalar curves sampled by local means, spatial
//! profiles, the Dirichlet lift, heat sources, and the manufactured
//! equilibrated stress field that realizes body force and traction under a
//! safe-load representation.

use crate::fem::{internal_force_full, lumped_scalar_mass, neumann_traction_load, sym_grad};
use crate::mesh::{FieldLayout, Mesh};
use crate::tensor::SymTensor2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("table curve needs at least two points covering [0, T]")]
    BadTable,
    #[error("safe-load equilibrium residual {residual:.3e} exceeds 1e-8")]
    SafeLoadInconsistent { residual: f64 },
}

/// Scalar curve of time.
#[derive(Debug, Clone)]
pub enum Curve {
    Constant(f64),
    /// `a + b t`
    Linear { a: f64, b: f64 },
    /// `offset + amp sin(omega t + phase)`
    Sin { amp: f64, omega: f64, phase: f64, offset: f64 },
    /// piecewise linear through `(t, v)` knots, constant extrapolation
    Table(Vec<(f64, f64)>),
    /// `v_scale * inner(t_scale * t)`; realizes the slow-loading rescaling.
    Scaled { inner: Box<Curve>, t_scale: f64, v_scale: f64 },
}

impl Curve {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Curve::Constant(c) => *c,
            Curve::Linear { a, b } => a + b * t,
            Curve::Sin { amp, omega, phase, offset } => offset + amp * (omega * t + phase).sin(),
            Curve::Table(pts) => {
                if t <= pts[0].0 {
                    return pts[0].1;
                }
                for w in pts.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                pts.last().unwrap().1
            }
            Curve::Scaled { inner, t_scale, v_scale } => v_scale * inner.eval(t_scale * t),
        }
    }

    /// Slows the curve down by `1/t_scale` and scales its values.
    pub fn rescaled(&self, t_scale: f64, v_scale: f64) -> Curve {
        Curve::Scaled { inner: Box::new(self.clone()), t_scale, v_scale }
    }

    /// Local mean `(1/τ) ∫_{t-τ}^{t} curve`, composite Simpson on 8
    /// subintervals; exact for affine curves.
    pub fn local_mean(&self, t_right: f64, tau: f64) -> f64 {
        let a = t_right - tau;
        let n = 8;
        let h = tau / n as f64;
        let mut s = self.eval(a) + self.eval(t_right);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * self.eval(a + i as f64 * h);
        }
        s * h / 3.0 / tau
    }

    pub fn frozen_at(&self, t: f64) -> Curve {
        Curve::Constant(self.eval(t))
    }
}

/// Named spatial profiles for scalar data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Uniform,
    /// Gaussian bump centered in the domain.
    Bump,
    LinearX,
    LinearY,
}

impl Profile {
    pub fn eval(&self, lx: f64, ly: f64, p: [f64; 2]) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::Bump => {
                let (cx, cy) = (0.5 * lx, 0.5 * ly);
                let s2 = (0.15 * lx.min(ly)).powi(2);
                (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (2.0 * s2)).exp()
            }
            Profile::LinearX => p[0] / lx,
            Profile::LinearY => p[1] / ly,
        }
    }

    pub fn nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.nodes.iter().map(|&p| self.eval(mesh.lx, mesh.ly, p)).collect()
    }

    pub fn parse(s: &str) -> Option<Profile> {
        match s {
            "uniform" => Some(Profile::Uniform),
            "bump" => Some(Profile::Bump),
            "linear_x" => Some(Profile::LinearX),
            "linear_y" => Some(Profile::LinearY),
            _ => None,
        }
    }
}

/// Spatial mode of the Dirichlet lift; the imposed displacement is
/// `w(t, x) = curve(t) * mode(x)` with an affine mode, so its strain is
/// spatially constant and the lift is exact in P1.
#[derive(Debug, Clone, Copy)]
pub struct WMode {
    /// `w_1 = shear * y + stretch_x * x`, `w_2 = uplift * y`
    pub shear: f64,
    pub stretch_x: f64,
    pub uplift: f64,
}

impl WMode {
    pub fn nodal(&self, mesh: &Mesh) -> Vec<f64> {
        let mut w = vec![0.0; 2 * mesh.n_nodes()];
        for (i, p) in mesh.nodes.iter().enumerate() {
            w[2 * i] = self.shear * p[1] + self.stretch_x * p[0];
            w[2 * i + 1] = self.uplift * p[1];
        }
        w
    }
}

/// Full load set for one run.
#[derive(Debug, Clone)]
pub struct Loads {
    pub w_curve: Curve,
    pub w_mode: WMode,
    /// Optional second Dirichlet component with its own time curve; a
    /// differing time profile makes the loading path non-proportional.
    pub w2: Option<(Curve, WMode)>,
    /// Bulk heat source `H(t,x) = curve(t) * profile(x)`, nonnegative.
    pub heat_bulk: Option<(Curve, Profile)>,
    /// Boundary heat source `h(t,x) = curve(t) * profile(x)`, nonnegative.
    pub heat_bdry: Option<(Curve, Profile)>,
    /// Spatially constant equilibrated stress `ϱ(t) = vol(t) I + dev(t) D̂`:
    /// it has zero divergence, so the induced total load is the traction
    /// `ϱ ν` on the Neumann boundary and the safe-load condition holds by
    /// construction.
    pub rho_load: Option<RhoLoad>,
    /// Set the initial velocity to the t=0 rate of the Dirichlet lift
    /// instead of zero.
    pub v0_from_w_rate: bool,
}

#[derive(Debug, Clone)]
pub struct RhoLoad {
    pub vol_curve: Curve,
    pub dev_curve: Curve,
    /// Trace-free direction of the deviatoric part (not necessarily unit).
    pub dev_dir: SymTensor2,
}

impl RhoLoad {
    pub fn tensor_at(&self, t: f64) -> SymTensor2 {
        SymTensor2::identity() * self.vol_curve.eval(t) + self.dev_dir * self.dev_curve.eval(t)
    }

    pub fn tensor_mean(&self, t_right: f64, tau: f64) -> SymTensor2 {
        SymTensor2::identity() * self.vol_curve.local_mean(t_right, tau)
            + self.dev_dir * self.dev_curve.local_mean(t_right, tau)
    }
}

/// Loads of one time step, sampled by local means.
#[derive(Debug, Clone)]
pub struct StepLoads {
    /// Dirichlet lift at the step's right node (nodal P1 vector field).
    pub w: Vec<f64>,
    /// Bulk source at Dirichlet nodes is irrelevant; these are nodal values.
    pub heat_bulk: Vec<f64>,
    pub heat_bdry: Vec<f64>,
    /// Total load dual vector over all vector dofs.
    pub load_vec: Vec<f64>,
    /// The safe-load stress at the step, when configured.
    pub rho: Option<SymTensor2>,
}

impl Loads {
    pub const ZERO_W: WMode = WMode { shear: 0.0, stretch_x: 0.0, uplift: 0.0 };

    pub fn quiescent() -> Loads {
        Loads {
            w_curve: Curve::Constant(0.0),
            w_mode: Loads::ZERO_W,
            w2: None,
            heat_bulk: None,
            heat_bdry: None,
            rho_load: None,
            v0_from_w_rate: false,
        }
    }

    /// All curves replaced by their values at time `t`.
    pub fn frozen_at(&self, t: f64) -> Loads {
        Loads {
            w_curve: self.w_curve.frozen_at(t),
            w_mode: self.w_mode,
            w2: self.w2.as_ref().map(|(c, m)| (c.frozen_at(t), *m)),
            heat_bulk: self.heat_bulk.as_ref().map(|(c, p)| (c.frozen_at(t), *p)),
            heat_bdry: self.heat_bdry.as_ref().map(|(c, p)| (c.frozen_at(t), *p)),
            rho_load: self.rho_load.as_ref().map(|r| RhoLoad {
                vol_curve: r.vol_curve.frozen_at(t),
                dev_curve: r.dev_curve.frozen_at(t),
                dev_dir: r.dev_dir,
            }),
            v0_from_w_rate: self.v0_from_w_rate,
        }
    }

    /// Checks the discrete equilibrium of the safe-load field: the traction
    /// load it induces must match `∫ ϱ : ε(v)` on every free dof.
    pub fn validate(&self, mesh: &Mesh, layout: &FieldLayout) -> Result<(), LoadError> {
        if let Some(r) = &self.rho_load {
            let mut worst = 0.0f64;
            for t in [0.0, 0.37, 1.0] {
                let tensor = r.tensor_at(t);
                let traction = neumann_traction_load(mesh, &tensor);
                let bulk = internal_force_full(mesh, &vec![tensor; mesh.n_cells()]);
                for &dof in &layout.free_vdofs {
                    worst = worst.max((traction[dof] - bulk[dof]).abs());
                }
            }
            if worst > 1e-8 {
                return Err(LoadError::SafeLoadInconsistent { residual: worst });
            }
        }
        Ok(())
    }

    /// Samples the loads of the step ending at `t_right` by local means.
    pub fn sample_step(&self, mesh: &Mesh, t_right: f64, tau: f64) -> StepLoads {
        let wv = self.w_curve.local_mean(t_right, tau);
        let mode = self.w_mode.nodal(mesh);
        let mut w: Vec<f64> = mode.iter().map(|&m| m * wv).collect();
        if let Some((c2, m2)) = &self.w2 {
            let v2 = c2.local_mean(t_right, tau);
            for (wi, m) in w.iter_mut().zip(m2.nodal(mesh)) {
                *wi += v2 * m;
            }
        }
        let heat_bulk = match &self.heat_bulk {
            Some((c, p)) => {
                let v = c.local_mean(t_right, tau);
                p.nodal(mesh).iter().map(|&x| x * v).collect()
            }
            None => vec![0.0; mesh.n_nodes()],
        };
        let heat_bdry = match &self.heat_bdry {
            Some((c, p)) => {
                let v = c.local_mean(t_right, tau);
                p.nodal(mesh).iter().map(|&x| x * v).collect()
            }
            None => vec![0.0; mesh.n_nodes()],
        };
        let (load_vec, rho) = match &self.rho_load {
            Some(r) => {
                let tensor = r.tensor_mean(t_right, tau);
                (neumann_traction_load(mesh, &tensor), Some(tensor))
            }
            None => (vec![0.0; 2 * mesh.n_nodes()], None),
        };
        StepLoads { w, heat_bulk, heat_bdry, load_vec, rho }
    }

    /// Dirichlet lift at an exact time (used for t = 0 admissibility).
    pub fn w_at(&self, mesh: &Mesh, t: f64) -> Vec<f64> {
        let v = self.w_curve.eval(t);
        let mut w: Vec<f64> = self.w_mode.nodal(mesh).iter().map(|&m| m * v).collect();
        if let Some((c2, m2)) = &self.w2 {
            let v2 = c2.eval(t);
            for (wi, m) in w.iter_mut().zip(m2.nodal(mesh)) {
                *wi += v2 * m;
            }
        }
        w
    }

    /// Time derivative of the lift at t (for the optional initial velocity).
    pub fn w_rate_at(&self, mesh: &Mesh, t: f64) -> Vec<f64> {
        let h = 1e-7;
        let rate = |c: &Curve| {
            (c.eval(t + h) - c.eval((t - h).max(0.0))) / (h + (t - (t - h).max(0.0)))
        };
        let d = rate(&self.w_curve);
        let mut w: Vec<f64> = self.w_mode.nodal(mesh).iter().map(|&m| m * d).collect();
        if let Some((c2, m2)) = &self.w2 {
            let d2 = rate(c2);
            for (wi, m) in w.iter_mut().zip(m2.nodal(mesh)) {
                *wi += d2 * m;
            }
        }
        w
    }

    /// `∫ H dx` of the sampled bulk source (exact for the P1 data).
    pub fn integrate_bulk(mesh: &Mesh, nodal: &[f64]) -> f64 {
        let m = lumped_scalar_mass(mesh);
        m.iter().zip(nodal).map(|(a, b)| a * b).sum()
    }

    /// Cell strains of the sampled lift.
    pub fn w_strains(mesh: &Mesh, w: &[f64]) -> Vec<SymTensor2> {
        sym_grad(mesh, w)
    }
}
