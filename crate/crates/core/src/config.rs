//! Run configuration: TOML schema, presets, validation that reports every
//! violation (not just the first), and construction of the solver inputs.

use crate::loads::{Curve, Loads, Profile, RhoLoad, WMode};
use crate::material::{GammaReg, KappaLaw, MaterialModel, PsiLaw};
use crate::mesh::{Mesh, MeshError, Side};
use crate::stepper::{SolverOpts, System};
use crate::tensor::SymTensor2;
use crate::vv::VVConfig;
use thiserror::Error;
use toml::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Viscoplastic,
    PerfectPlasticity,
    VvSweep,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML parse error: {0}")]
    Parse(String),
    #[error("{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn format_violations(v: &[Violation]) -> String {
    let mut s = format!("{} configuration violation(s):", v.len());
    for item in v {
        s.push_str(&format!("\n  {}: {}", item.path, item.message));
    }
    s
}

#[derive(Debug, Clone)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dirichlet: Vec<Side>,
}

#[derive(Debug, Clone)]
pub struct MaterialSpec {
    pub lambda: f64,
    pub mu: f64,
    pub lambda_v: f64,
    pub mu_v: f64,
    pub b_coupling: f64,
    pub kappa_c0: f64,
    pub kappa_exp: f64,
    pub yield_radius: f64,
    pub rho: f64,
    pub psi_slope: f64,
    pub psi_min: f64,
    pub psi_max: f64,
}

#[derive(Debug, Clone)]
pub struct InitialSpec {
    pub theta_star: f64,
    pub theta_profile: Profile,
    pub theta_amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct LoadSpec {
    pub w_mode: WMode,
    pub w_curve: Curve,
    pub w2: Option<(Curve, WMode)>,
    pub heat_bulk: Option<(Curve, Profile)>,
    pub heat_bdry: Option<(Curve, Profile)>,
    pub rho_vol: Option<Curve>,
    pub rho_dev: Option<(Curve, [f64; 2])>,
    pub v0_from_w_rate: bool,
}

#[derive(Debug, Clone)]
pub struct TimeSpec {
    pub t_end: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct SolverSpec {
    pub tol_outer: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// 0 disables the regularization; values must exceed 4 otherwise.
    pub gamma: f64,
    pub damping_min: f64,
}

#[derive(Debug, Clone)]
pub struct VvSpec {
    pub eps_list: Vec<f64>,
    pub beta: f64,
    pub tau0: f64,
    pub pp_increments: usize,
    pub sample_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub mesh: MeshSpec,
    pub material: MaterialSpec,
    pub initial: InitialSpec,
    pub loads: LoadSpec,
    pub time: TimeSpec,
    pub solver: SolverSpec,
    pub snapshot_times: Vec<f64>,
    pub vv: VvSpec,
    pub pp_increments: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Viscoplastic,
            mesh: MeshSpec {
                nx: 16,
                ny: 16,
                lx: 1.0,
                ly: 1.0,
                dirichlet: vec![Side::Bottom, Side::Top],
            },
            material: MaterialSpec {
                lambda: 1.0,
                mu: 1.0,
                lambda_v: 0.0,
                mu_v: 0.5,
                b_coupling: 0.1,
                kappa_c0: 1.0,
                kappa_exp: 1.5,
                yield_radius: 0.3,
                rho: 1.0,
                psi_slope: 0.0,
                psi_min: 0.5,
                psi_max: 2.0,
            },
            initial: InitialSpec {
                theta_star: 1.0,
                theta_profile: Profile::Uniform,
                theta_amplitude: 0.0,
            },
            loads: LoadSpec {
                w_mode: WMode { shear: 0.8, stretch_x: 0.0, uplift: 0.2 },
                w_curve: Curve::Linear { a: 0.0, b: 1.0 },
                w2: None,
                heat_bulk: None,
                heat_bdry: None,
                rho_vol: None,
                rho_dev: None,
                v0_from_w_rate: true,
            },
            time: TimeSpec { t_end: 1.0, tau: 1e-3 },
            solver: SolverSpec {
                tol_outer: 1e-9,
                max_outer: 50,
                max_newton: 60,
                gamma: 0.0,
                damping_min: 1e-10,
            },
            snapshot_times: Vec::new(),
            vv: VvSpec {
                eps_list: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
                beta: 0.75,
                tau0: 0.02,
                pp_increments: 50,
                sample_times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            },
            pp_increments: 50,
        }
    }
}

impl RunConfig {
    /// Named scenario presets; explicit keys in the config override them.
    pub fn preset(name: &str) -> Option<RunConfig> {
        let base = RunConfig::default();
        match name {
            // coupled shear+stretch ramp on a 16x16 mesh, the reference run
            "shear2d" => Some(base),
            // no loading at all
            "quiescent" => Some(RunConfig {
                loads: LoadSpec {
                    w_mode: WMode { shear: 0.0, stretch_x: 0.0, uplift: 0.0 },
                    w_curve: Curve::Constant(0.0),
                    w2: None,
                    heat_bulk: None,
                    heat_bdry: None,
                    rho_vol: None,
                    rho_dev: None,
                    v0_from_w_rate: false,
                },
                mesh: MeshSpec { nx: 8, ny: 8, ..base.mesh.clone() },
                ..base
            }),
            // clamped mechanics, heated bulk, insulated boundary
            "heat_only" => Some(RunConfig {
                mesh: MeshSpec {
                    nx: 8,
                    ny: 8,
                    dirichlet: vec![Side::Bottom, Side::Right, Side::Top, Side::Left],
                    ..base.mesh.clone()
                },
                material: MaterialSpec { b_coupling: 0.0, ..base.material.clone() },
                loads: LoadSpec {
                    w_mode: WMode { shear: 0.0, stretch_x: 0.0, uplift: 0.0 },
                    w_curve: Curve::Constant(0.0),
                    w2: None,
                    heat_bulk: Some((Curve::Constant(0.5), Profile::Bump)),
                    heat_bdry: None,
                    rho_vol: None,
                    rho_dev: None,
                    v0_from_w_rate: false,
                },
                ..base
            }),
            // one crossed square, fully clamped affine shear: the 0-D case
            "uniform0d" => Some(RunConfig {
                mesh: MeshSpec {
                    nx: 1,
                    ny: 1,
                    dirichlet: vec![Side::Bottom, Side::Right, Side::Top, Side::Left],
                    ..base.mesh.clone()
                },
                loads: LoadSpec {
                    w_mode: WMode { shear: 0.8, stretch_x: 0.0, uplift: 0.2 },
                    ..base.loads.clone()
                },
                ..base
            }),
            // quasistatic shear for the pp-run mode
            "pp_shear2d" => Some(RunConfig {
                mode: Mode::PerfectPlasticity,
                mesh: MeshSpec { nx: 8, ny: 8, ..base.mesh.clone() },
                loads: LoadSpec {
                    w_mode: WMode { shear: 0.8, stretch_x: 0.0, uplift: 0.0 },
                    v0_from_w_rate: false,
                    ..base.loads.clone()
                },
                ..base
            }),
            // vanishing-viscosity sweep base: 8x8 mesh, nonuniform initial
            // temperature (its fast relaxation layer realizes the √ε
            // gradient decay), shear ramp past yield, small uniform source
            "vv_shear" => Some(RunConfig {
                mode: Mode::VvSweep,
                mesh: MeshSpec { nx: 8, ny: 8, ..base.mesh.clone() },
                initial: InitialSpec {
                    theta_star: 1.0,
                    theta_profile: Profile::Bump,
                    theta_amplitude: 0.5,
                },
                loads: LoadSpec {
                    w_mode: WMode { shear: 0.8, stretch_x: 0.0, uplift: 0.0 },
                    w_curve: Curve::Linear { a: 0.0, b: 1.0 },
                    w2: None,
                    heat_bulk: Some((Curve::Constant(0.2), Profile::Uniform)),
                    heat_bdry: None,
                    rho_vol: Some(Curve::Linear { a: 0.0, b: 0.05 }),
                    rho_dev: Some((Curve::Linear { a: 0.0, b: 0.05 }, [0.0, 1.0])),
                    v0_from_w_rate: false,
                },
                ..base
            }),
            _ => None,
        }
    }

    pub fn build_system(&self) -> Result<System, ConfigError> {
        let mesh = Mesh::rectangle(
            self.mesh.nx,
            self.mesh.ny,
            self.mesh.lx,
            self.mesh.ly,
            &self.mesh.dirichlet,
        )?;
        let m = &self.material;
        let mut material = MaterialModel::uniform(
            mesh.n_cells(),
            m.lambda,
            m.mu,
            m.lambda_v,
            m.mu_v,
            m.b_coupling,
            KappaLaw { c0: m.kappa_c0, mu_exp: m.kappa_exp },
            m.yield_radius,
            m.rho,
        );
        if m.psi_slope != 0.0 {
            material.psi = PsiLaw::Affine { slope: m.psi_slope, lo: m.psi_min, hi: m.psi_max };
        }
        Ok(System::new(mesh, material))
    }

    pub fn build_loads(&self) -> Loads {
        let l = &self.loads;
        Loads {
            w_curve: l.w_curve.clone(),
            w_mode: l.w_mode,
            w2: l.w2.clone(),
            heat_bulk: l.heat_bulk.clone(),
            heat_bdry: l.heat_bdry.clone(),
            rho_load: match (&l.rho_vol, &l.rho_dev) {
                (None, None) => None,
                (vol, dev) => Some(RhoLoad {
                    vol_curve: vol.clone().unwrap_or(Curve::Constant(0.0)),
                    dev_curve: dev.as_ref().map(|(c, _)| c.clone()).unwrap_or(Curve::Constant(0.0)),
                    dev_dir: dev
                        .as_ref()
                        .map(|(_, d)| SymTensor2::new(d[0], -d[0], d[1]))
                        .unwrap_or(SymTensor2::ZERO),
                }),
            },
            v0_from_w_rate: l.v0_from_w_rate,
        }
    }

    pub fn theta0(&self, mesh: &Mesh) -> Vec<f64> {
        let prof = self.initial.theta_profile.nodal(mesh);
        prof.iter().map(|&p| self.initial.theta_star + self.initial.theta_amplitude * p).collect()
    }

    pub fn solver_opts(&self) -> SolverOpts {
        SolverOpts {
            tol_outer: self.solver.tol_outer,
            max_outer: self.solver.max_outer,
            max_newton: self.solver.max_newton,
            gamma_reg: if self.solver.gamma > 0.0 {
                GammaReg::On { gamma: self.solver.gamma }
            } else {
                GammaReg::Off
            },
            damping_min: self.solver.damping_min,
            theta_guard: 0.0,
        }
    }

    pub fn vv_config(&self) -> VVConfig {
        VVConfig {
            eps_list: self.vv.eps_list.clone(),
            beta: self.vv.beta,
            tau0: self.vv.tau0,
            t_end: self.time.t_end,
            base_loads: self.build_loads(),
            pp_increments: self.vv.pp_increments,
            sample_times: self.vv.sample_times.clone(),
        }
    }

    /// Reference configuration listing every key with its default value;
    /// parsing it back yields a valid configuration.
    pub fn reference_toml() -> String {
        let c = RunConfig::default();
        let curve = "{ kind = \"linear\", a = 0.0, b = 1.0 }";
        format!(
            r#"# reference configuration: every recognized key with its default
mode = "viscoplastic" # viscoplastic | perfect_plasticity | vv_sweep
# preset = "shear2d"  # optional: shear2d | quiescent | heat_only | uniform0d | pp_shear2d | vv_shear

[mesh]
nx = {nx}
ny = {ny}
lx = {lx}
ly = {ly}
dirichlet = ["bottom", "top"] # any of bottom/right/top/left, at least one

[material]
lambda = {lambda}
mu = {mu}
lambda_v = {lambda_v}
mu_v = {mu_v}
b_coupling = {b}
kappa_c0 = {c0}
kappa_exp = {kexp}
yield_radius = {r}
rho = {rho}
psi_slope = 0.0 # 0 keeps the yield radius temperature-independent
psi_min = 0.5
psi_max = 2.0

[initial]
theta_star = {tstar}
theta_profile = "uniform" # uniform | bump | linear_x | linear_y
theta_amplitude = 0.0

[loads]
w_shear = {wsh}
w_stretch_x = {wst}
w_uplift = {wup}
w_curve = {curve}
# w2_curve = {{ kind = "linear", a = 0.0, b = 0.3 }} # optional second component
w2_shear = 0.0
w2_stretch_x = 0.0
w2_uplift = 0.0
v0_from_w_rate = true
# heat_bulk_curve = {{ kind = "constant", value = 0.5 }}
heat_bulk_profile = "uniform"
# heat_bdry_curve = {{ kind = "constant", value = 0.0 }}
heat_bdry_profile = "uniform"
# rho_vol_curve = {{ kind = "linear", a = 0.0, b = 0.05 }}
# rho_dev_curve = {{ kind = "linear", a = 0.0, b = 0.05 }}
rho_dev_dir = [0.0, 1.0]

[time]
t_end = {tend}
tau = {tau}

[solver]
tol_outer = 1e-9
max_outer = 50
max_newton = 60
gamma = 0.0 # 0 = regularization off; enabled values must exceed 4
damping_min = 1e-10

[output]
snapshot_times = []

[pp]
increments = 50

[vv]
eps_list = [0.1, 0.03, 0.01, 0.003, 0.001]
beta = 0.75
tau0 = 0.02
pp_increments = 50
sample_times = [0.2, 0.4, 0.6, 0.8, 1.0]
"#,
            nx = c.mesh.nx,
            ny = c.mesh.ny,
            lx = c.mesh.lx,
            ly = c.mesh.ly,
            lambda = c.material.lambda,
            mu = c.material.mu,
            lambda_v = c.material.lambda_v,
            mu_v = c.material.mu_v,
            b = c.material.b_coupling,
            c0 = c.material.kappa_c0,
            kexp = c.material.kappa_exp,
            r = c.material.yield_radius,
            rho = c.material.rho,
            tstar = c.initial.theta_star,
            wsh = c.loads.w_mode.shear,
            wst = c.loads.w_mode.stretch_x,
            wup = c.loads.w_mode.uplift,
            tend = c.time.t_end,
            tau = c.time.tau,
            curve = curve,
        )
    }
}

struct Ctx<'a> {
    violations: &'a mut Vec<Violation>,
}

impl<'a> Ctx<'a> {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation { path: path.to_string(), message: message.into() });
    }

    fn f64(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.push(path, "expected a number");
                None
            }
        }
    }

    fn usize(&mut self, v: &Value, path: &str) -> Option<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => {
                self.push(path, "expected a nonnegative integer");
                None
            }
        }
    }

    fn bool(&mut self, v: &Value, path: &str) -> Option<bool> {
        match v {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.push(path, "expected a boolean");
                None
            }
        }
    }

    fn str<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v str> {
        match v {
            Value::String(s) => Some(s.as_str()),
            _ => {
                self.push(path, "expected a string");
                None
            }
        }
    }

    fn curve(&mut self, v: &Value, path: &str) -> Option<Curve> {
        let Value::Table(t) = v else {
            self.push(path, "expected a curve table like { kind = \"linear\", a = 0.0, b = 1.0 }");
            return None;
        };
        let kind = t.get("kind").and_then(|k| k.as_str()).unwrap_or("");
        let known: &[&str] = match kind {
            "constant" => &["kind", "value"],
            "linear" => &["kind", "a", "b"],
            "sin" => &["kind", "amp", "omega", "phase", "offset"],
            "table" => &["kind", "points"],
            _ => {
                self.push(path, format!("unknown curve kind '{kind}'"));
                return None;
            }
        };
        for key in t.keys() {
            if !known.contains(&key.as_str()) {
                self.push(&format!("{path}.{key}"), "unknown key");
            }
        }
        let get = |name: &str, default: f64, ctx: &mut Ctx| -> f64 {
            t.get(name)
                .map(|v| ctx.f64(v, &format!("{path}.{name}")).unwrap_or(default))
                .unwrap_or(default)
        };
        match kind {
            "constant" => Some(Curve::Constant(get("value", 0.0, self))),
            "linear" => Some(Curve::Linear { a: get("a", 0.0, self), b: get("b", 0.0, self) }),
            "sin" => Some(Curve::Sin {
                amp: get("amp", 0.0, self),
                omega: get("omega", 1.0, self),
                phase: get("phase", 0.0, self),
                offset: get("offset", 0.0, self),
            }),
            "table" => {
                let mut pts = Vec::new();
                match t.get("points") {
                    Some(Value::Array(arr)) if arr.len() >= 2 => {
                        for (i, item) in arr.iter().enumerate() {
                            let ipath = format!("{path}.points[{i}]");
                            match item {
                                Value::Array(pair) if pair.len() == 2 => {
                                    let a = self.f64(&pair[0], &ipath)?;
                                    let b = self.f64(&pair[1], &ipath)?;
                                    pts.push((a, b));
                                }
                                _ => {
                                    self.push(&ipath, "expected a [t, v] pair");
                                    return None;
                                }
                            }
                        }
                        if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                            self.push(path, "table times must be strictly increasing");
                            return None;
                        }
                        Some(Curve::Table(pts))
                    }
                    _ => {
                        self.push(path, "table curve needs a 'points' array of length >= 2");
                        None
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Parses and validates a TOML run configuration. Every violation is
/// collected and reported together; duplicate keys and syntax errors are
/// reported with line numbers by the TOML parser.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Value = text.parse().map_err(|e: toml::de::Error| {
        ConfigError::Parse(e.to_string())
    })?;
    let Value::Table(table) = root else {
        return Err(ConfigError::Parse("top level must be a table".into()));
    };
    let mut violations = Vec::new();
    let mut ctx = Ctx { violations: &mut violations };

    let mut cfg = match table.get("preset") {
        Some(Value::String(name)) => match RunConfig::preset(name) {
            Some(c) => c,
            None => {
                ctx.push("preset", format!("unknown preset '{name}'"));
                RunConfig::default()
            }
        },
        Some(_) => {
            ctx.push("preset", "expected a string");
            RunConfig::default()
        }
        None => RunConfig::default(),
    };

    const TOP_KEYS: &[&str] =
        &["mode", "preset", "mesh", "material", "initial", "loads", "time", "solver", "output", "pp", "vv"];
    for key in table.keys() {
        if !TOP_KEYS.contains(&key.as_str()) {
            ctx.push(key, "unknown key");
        }
    }

    if let Some(v) = table.get("mode") {
        if let Some(s) = ctx.str(v, "mode") {
            cfg.mode = match s {
                "viscoplastic" => Mode::Viscoplastic,
                "perfect_plasticity" => Mode::PerfectPlasticity,
                "vv_sweep" => Mode::VvSweep,
                other => {
                    ctx.push("mode", format!("unknown mode '{other}'"));
                    cfg.mode
                }
            };
        }
    }

    if let Some(Value::Table(t)) = table.get("mesh") {
        for key in t.keys() {
            if !["nx", "ny", "lx", "ly", "dirichlet"].contains(&key.as_str()) {
                ctx.push(&format!("mesh.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("nx") {
            if let Some(n) = ctx.usize(v, "mesh.nx") {
                cfg.mesh.nx = n;
            }
        }
        if let Some(v) = t.get("ny") {
            if let Some(n) = ctx.usize(v, "mesh.ny") {
                cfg.mesh.ny = n;
            }
        }
        if let Some(v) = t.get("lx") {
            if let Some(x) = ctx.f64(v, "mesh.lx") {
                cfg.mesh.lx = x;
            }
        }
        if let Some(v) = t.get("ly") {
            if let Some(x) = ctx.f64(v, "mesh.ly") {
                cfg.mesh.ly = x;
            }
        }
        if let Some(Value::Array(arr)) = t.get("dirichlet") {
            let mut sides = Vec::new();
            for (i, item) in arr.iter().enumerate() {
                if let Some(s) = ctx.str(item, &format!("mesh.dirichlet[{i}]")) {
                    match Side::parse(s) {
                        Some(side) => sides.push(side),
                        None => ctx.push(
                            &format!("mesh.dirichlet[{i}]"),
                            format!("unknown side '{s}' (bottom/right/top/left)"),
                        ),
                    }
                }
            }
            cfg.mesh.dirichlet = sides;
        } else if t.contains_key("dirichlet") {
            ctx.push("mesh.dirichlet", "expected an array of side names");
        }
    }

    if let Some(Value::Table(t)) = table.get("material") {
        let keys = [
            "lambda", "mu", "lambda_v", "mu_v", "b_coupling", "kappa_c0", "kappa_exp",
            "yield_radius", "rho", "psi_slope", "psi_min", "psi_max",
        ];
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                ctx.push(&format!("material.{key}"), "unknown key");
            }
        }
        let grab = |name: &str, ctx: &mut Ctx| -> Option<f64> {
            t.get(name).and_then(|v| ctx.f64(v, &format!("material.{name}")))
        };
        let m = &mut cfg.material;
        if let Some(x) = grab("lambda", &mut ctx) {
            m.lambda = x;
        }
        if let Some(x) = grab("mu", &mut ctx) {
            m.mu = x;
        }
        if let Some(x) = grab("lambda_v", &mut ctx) {
            m.lambda_v = x;
        }
        if let Some(x) = grab("mu_v", &mut ctx) {
            m.mu_v = x;
        }
        if let Some(x) = grab("b_coupling", &mut ctx) {
            m.b_coupling = x;
        }
        if let Some(x) = grab("kappa_c0", &mut ctx) {
            m.kappa_c0 = x;
        }
        if let Some(x) = grab("kappa_exp", &mut ctx) {
            m.kappa_exp = x;
        }
        if let Some(x) = grab("yield_radius", &mut ctx) {
            m.yield_radius = x;
        }
        if let Some(x) = grab("rho", &mut ctx) {
            m.rho = x;
        }
        if let Some(x) = grab("psi_slope", &mut ctx) {
            m.psi_slope = x;
        }
        if let Some(x) = grab("psi_min", &mut ctx) {
            m.psi_min = x;
        }
        if let Some(x) = grab("psi_max", &mut ctx) {
            m.psi_max = x;
        }
    }

    if let Some(Value::Table(t)) = table.get("initial") {
        for key in t.keys() {
            if !["theta_star", "theta_profile", "theta_amplitude"].contains(&key.as_str()) {
                ctx.push(&format!("initial.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("theta_star") {
            if let Some(x) = ctx.f64(v, "initial.theta_star") {
                cfg.initial.theta_star = x;
            }
        }
        if let Some(v) = t.get("theta_amplitude") {
            if let Some(x) = ctx.f64(v, "initial.theta_amplitude") {
                cfg.initial.theta_amplitude = x;
            }
        }
        if let Some(v) = t.get("theta_profile") {
            if let Some(s) = ctx.str(v, "initial.theta_profile") {
                match Profile::parse(s) {
                    Some(p) => cfg.initial.theta_profile = p,
                    None => ctx.push("initial.theta_profile", format!("unknown profile '{s}'")),
                }
            }
        }
    }

    if let Some(Value::Table(t)) = table.get("loads") {
        let keys = [
            "w_shear", "w_stretch_x", "w_uplift", "w_curve", "v0_from_w_rate",
            "w2_shear", "w2_stretch_x", "w2_uplift", "w2_curve",
            "heat_bulk_curve", "heat_bulk_profile", "heat_bdry_curve", "heat_bdry_profile",
            "rho_vol_curve", "rho_dev_curve", "rho_dev_dir",
        ];
        for key in t.keys() {
            if !keys.contains(&key.as_str()) {
                ctx.push(&format!("loads.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("w_shear") {
            if let Some(x) = ctx.f64(v, "loads.w_shear") {
                cfg.loads.w_mode.shear = x;
            }
        }
        if let Some(v) = t.get("w_stretch_x") {
            if let Some(x) = ctx.f64(v, "loads.w_stretch_x") {
                cfg.loads.w_mode.stretch_x = x;
            }
        }
        if let Some(v) = t.get("w_uplift") {
            if let Some(x) = ctx.f64(v, "loads.w_uplift") {
                cfg.loads.w_mode.uplift = x;
            }
        }
        if let Some(v) = t.get("w_curve") {
            if let Some(c) = ctx.curve(v, "loads.w_curve") {
                cfg.loads.w_curve = c;
            }
        }
        if let Some(v) = t.get("v0_from_w_rate") {
            if let Some(b) = ctx.bool(v, "loads.v0_from_w_rate") {
                cfg.loads.v0_from_w_rate = b;
            }
        }
        if let Some(v) = t.get("w2_curve") {
            let mut mode = WMode { shear: 0.0, stretch_x: 0.0, uplift: 0.0 };
            if let Some(x) =
                t.get("w2_shear").and_then(|v| ctx.f64(v, "loads.w2_shear"))
            {
                mode.shear = x;
            }
            if let Some(x) =
                t.get("w2_stretch_x").and_then(|v| ctx.f64(v, "loads.w2_stretch_x"))
            {
                mode.stretch_x = x;
            }
            if let Some(x) =
                t.get("w2_uplift").and_then(|v| ctx.f64(v, "loads.w2_uplift"))
            {
                mode.uplift = x;
            }
            if let Some(c) = ctx.curve(v, "loads.w2_curve") {
                cfg.loads.w2 = Some((c, mode));
            }
        }
        let profile_of = |t: &toml::map::Map<String, Value>, name: &str, ctx: &mut Ctx| {
            t.get(name)
                .and_then(|v| {
                    let path = format!("loads.{name}");
                    ctx.str(v, &path).map(|s| (s.to_string(), path))
                })
                .and_then(|(s, path)| {
                    let p = Profile::parse(&s);
                    if p.is_none() {
                        ctx.push(&path, format!("unknown profile '{s}'"));
                    }
                    p
                })
                .unwrap_or(Profile::Uniform)
        };
        if let Some(v) = t.get("heat_bulk_curve") {
            let prof = profile_of(t, "heat_bulk_profile", &mut ctx);
            if let Some(c) = ctx.curve(v, "loads.heat_bulk_curve") {
                cfg.loads.heat_bulk = Some((c, prof));
            }
        }
        if let Some(v) = t.get("heat_bdry_curve") {
            let prof = profile_of(t, "heat_bdry_profile", &mut ctx);
            if let Some(c) = ctx.curve(v, "loads.heat_bdry_curve") {
                cfg.loads.heat_bdry = Some((c, prof));
            }
        }
        if let Some(v) = t.get("rho_vol_curve") {
            cfg.loads.rho_vol = ctx.curve(v, "loads.rho_vol_curve");
        }
        if let Some(v) = t.get("rho_dev_curve") {
            let dir = match t.get("rho_dev_dir") {
                Some(Value::Array(a)) if a.len() == 2 => {
                    let x = ctx.f64(&a[0], "loads.rho_dev_dir").unwrap_or(0.0);
                    let y = ctx.f64(&a[1], "loads.rho_dev_dir").unwrap_or(1.0);
                    [x, y]
                }
                Some(_) => {
                    ctx.push("loads.rho_dev_dir", "expected [a, c] deviatoric coordinates");
                    [0.0, 1.0]
                }
                None => [0.0, 1.0],
            };
            if let Some(c) = ctx.curve(v, "loads.rho_dev_curve") {
                cfg.loads.rho_dev = Some((c, dir));
            }
        }
    }

    if let Some(Value::Table(t)) = table.get("time") {
        for key in t.keys() {
            if !["t_end", "tau"].contains(&key.as_str()) {
                ctx.push(&format!("time.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("t_end") {
            if let Some(x) = ctx.f64(v, "time.t_end") {
                cfg.time.t_end = x;
            }
        }
        if let Some(v) = t.get("tau") {
            if let Some(x) = ctx.f64(v, "time.tau") {
                cfg.time.tau = x;
            }
        }
    }

    if let Some(Value::Table(t)) = table.get("solver") {
        for key in t.keys() {
            if !["tol_outer", "max_outer", "max_newton", "gamma", "damping_min"]
                .contains(&key.as_str())
            {
                ctx.push(&format!("solver.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("tol_outer") {
            if let Some(x) = ctx.f64(v, "solver.tol_outer") {
                cfg.solver.tol_outer = x;
            }
        }
        if let Some(v) = t.get("max_outer") {
            if let Some(x) = ctx.usize(v, "solver.max_outer") {
                cfg.solver.max_outer = x;
            }
        }
        if let Some(v) = t.get("max_newton") {
            if let Some(x) = ctx.usize(v, "solver.max_newton") {
                cfg.solver.max_newton = x;
            }
        }
        if let Some(v) = t.get("gamma") {
            if let Some(x) = ctx.f64(v, "solver.gamma") {
                cfg.solver.gamma = x;
            }
        }
        if let Some(v) = t.get("damping_min") {
            if let Some(x) = ctx.f64(v, "solver.damping_min") {
                cfg.solver.damping_min = x;
            }
        }
    }

    if let Some(Value::Table(t)) = table.get("output") {
        for key in t.keys() {
            if !["snapshot_times"].contains(&key.as_str()) {
                ctx.push(&format!("output.{key}"), "unknown key");
            }
        }
        if let Some(Value::Array(arr)) = t.get("snapshot_times") {
            let mut times = Vec::new();
            for (i, item) in arr.iter().enumerate() {
                if let Some(x) = ctx.f64(item, &format!("output.snapshot_times[{i}]")) {
                    times.push(x);
                }
            }
            cfg.snapshot_times = times;
        }
    }

    if let Some(Value::Table(t)) = table.get("pp") {
        for key in t.keys() {
            if !["increments"].contains(&key.as_str()) {
                ctx.push(&format!("pp.{key}"), "unknown key");
            }
        }
        if let Some(v) = t.get("increments") {
            if let Some(x) = ctx.usize(v, "pp.increments") {
                cfg.pp_increments = x;
            }
        }
    }

    if let Some(Value::Table(t)) = table.get("vv") {
        for key in t.keys() {
            if !["eps_list", "beta", "tau0", "pp_increments", "sample_times"]
                .contains(&key.as_str())
            {
                ctx.push(&format!("vv.{key}"), "unknown key");
            }
        }
        if let Some(Value::Array(arr)) = t.get("eps_list") {
            let mut eps = Vec::new();
            for (i, item) in arr.iter().enumerate() {
                if let Some(x) = ctx.f64(item, &format!("vv.eps_list[{i}]")) {
                    eps.push(x);
                }
            }
            cfg.vv.eps_list = eps;
        }
        if let Some(v) = t.get("beta") {
            if let Some(x) = ctx.f64(v, "vv.beta") {
                cfg.vv.beta = x;
            }
        }
        if let Some(v) = t.get("tau0") {
            if let Some(x) = ctx.f64(v, "vv.tau0") {
                cfg.vv.tau0 = x;
            }
        }
        if let Some(v) = t.get("pp_increments") {
            if let Some(x) = ctx.usize(v, "vv.pp_increments") {
                cfg.vv.pp_increments = x;
            }
        }
        if let Some(Value::Array(arr)) = t.get("sample_times") {
            let mut times = Vec::new();
            for (i, item) in arr.iter().enumerate() {
                if let Some(x) = ctx.f64(item, &format!("vv.sample_times[{i}]")) {
                    times.push(x);
                }
            }
            cfg.vv.sample_times = times;
        }
    }

    validate_semantics(&cfg, &mut ctx);

    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn validate_semantics(cfg: &RunConfig, ctx: &mut Ctx) {
    if cfg.mesh.nx == 0 || cfg.mesh.ny == 0 {
        ctx.push("mesh", "nx and ny must be at least 1");
    }
    if !(cfg.mesh.lx > 0.0) || !(cfg.mesh.ly > 0.0) {
        ctx.push("mesh", "lx and ly must be positive");
    }
    if cfg.mesh.dirichlet.is_empty() {
        ctx.push("mesh.dirichlet", "the Dirichlet boundary part must be nonempty");
    }
    let m = &cfg.material;
    if !(m.mu > 0.0) {
        ctx.push("material.mu", "the elastic shear modulus must be positive");
    }
    if m.lambda < 0.0 {
        ctx.push("material.lambda", "must be nonnegative");
    }
    if cfg.mode != Mode::PerfectPlasticity && !(m.mu_v > 0.0) {
        ctx.push(
            "material.mu_v",
            "the viscosity must be positive definite in the viscoplastic modes (positivity bound undefined otherwise)",
        );
    }
    if m.lambda_v < 0.0 {
        ctx.push("material.lambda_v", "must be nonnegative");
    }
    if !(m.kappa_c0 > 0.0) {
        ctx.push("material.kappa_c0", "the conductivity floor must be positive");
    }
    if !(m.kappa_exp > 1.0) || m.kappa_exp >= 2.0 {
        ctx.push(
            "material.kappa_exp",
            "the conductivity growth exponent must lie in (1, 2) for d = 2",
        );
    }
    if !(m.yield_radius > 0.0) {
        ctx.push("material.yield_radius", "the yield radius must be positive");
    }
    if !(m.rho > 0.0) {
        ctx.push("material.rho", "the mass density must be positive");
    }
    if m.psi_slope != 0.0 && !(m.psi_min > 0.0 && m.psi_min <= m.psi_max) {
        ctx.push("material.psi_min", "need 0 < psi_min <= psi_max");
    }
    if !(cfg.initial.theta_star > 0.0) {
        ctx.push(
            "initial.theta_star",
            "the initial temperature must be bounded below by a positive constant (strict positivity of the data)",
        );
    }
    if cfg.initial.theta_amplitude < 0.0 {
        ctx.push("initial.theta_amplitude", "must be nonnegative");
    }
    if !(cfg.time.t_end > 0.0) {
        ctx.push("time.t_end", "must be positive");
    }
    if !(cfg.time.tau > 0.0) {
        ctx.push("time.tau", "must be positive");
    } else {
        let steps = cfg.time.t_end / cfg.time.tau;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            ctx.push("time.tau", "must divide t_end into a whole number of steps");
        }
    }
    if !(cfg.solver.tol_outer > 0.0) {
        ctx.push("solver.tol_outer", "must be positive");
    }
    if cfg.solver.gamma != 0.0 && !(cfg.solver.gamma > 4.0) {
        ctx.push("solver.gamma", "the regularization exponent must exceed 4 when enabled");
    }
    // nonnegativity of heat sources over the horizon (sampled check)
    for (name, source) in [
        ("loads.heat_bulk_curve", &cfg.loads.heat_bulk),
        ("loads.heat_bdry_curve", &cfg.loads.heat_bdry),
    ] {
        if let Some((curve, _)) = source {
            let n = 64;
            for i in 0..=n {
                let t = cfg.time.t_end * i as f64 / n as f64;
                if curve.eval(t) < 0.0 {
                    ctx.push(name, format!("heat sources must be nonnegative (negative at t = {t})"));
                    break;
                }
            }
        }
    }
    if cfg.mode == Mode::VvSweep {
        if !(cfg.vv.beta > 0.5) {
            ctx.push("vv.beta", "the coupling scaling exponent must exceed 1/2");
        }
        if cfg.vv.eps_list.is_empty()
            || cfg.vv.eps_list.iter().any(|&e| !(e > 0.0))
            || cfg.vv.eps_list.windows(2).any(|w| w[1] >= w[0])
        {
            ctx.push("vv.eps_list", "must be positive and strictly decreasing");
        }
        if !(cfg.vv.tau0 > 0.0) {
            ctx.push("vv.tau0", "must be positive");
        }
        if cfg.vv.pp_increments == 0 {
            ctx.push("vv.pp_increments", "must be at least 1");
        }
        for (i, &t) in cfg.vv.sample_times.iter().enumerate() {
            if !(t > 0.0 && t <= cfg.time.t_end) {
                ctx.push(&format!("vv.sample_times[{i}]"), "must lie in (0, t_end]");
            }
        }
    }
    if cfg.pp_increments == 0 {
        ctx.push("pp.increments", "must be at least 1");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_preset_validates() {
        let cfg = parse_config("preset = \"shear2d\"").unwrap();
        assert_eq!(cfg.mode, Mode::Viscoplastic);
        assert_eq!(cfg.mesh.nx, 16);
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.mesh.n_cells(), 4 * 16 * 16);
    }

    #[test]
    fn negative_theta_star_names_positivity() {
        let err = parse_config("preset = \"shear2d\"\n[initial]\ntheta_star = -1.0\n")
            .unwrap_err();
        let ConfigError::Invalid(violations) = err else {
            panic!("expected violations")
        };
        assert!(violations.iter().any(|v| v.path == "initial.theta_star"
            && v.message.contains("positive")));
    }

    #[test]
    fn duplicate_key_reports_line() {
        let err = parse_config("[time]\nt_end = 1.0\nt_end = 2.0\n").unwrap_err();
        let ConfigError::Parse(msg) = err else { panic!("expected parse error") };
        assert!(msg.contains("duplicate"), "message: {msg}");
        assert!(msg.contains('3') || msg.contains("line"), "no line info: {msg}");
    }

    #[test]
    fn all_violations_are_collected() {
        let err = parse_config(
            "preset = \"shear2d\"\n[material]\nmu = -1.0\nyield_radius = 0.0\n[time]\ntau = -0.1\n",
        )
        .unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.len() >= 3, "only {} violations: {:?}", v.len(), v);
    }

    #[test]
    fn unknown_keys_are_reported_with_paths() {
        let err =
            parse_config("preset = \"shear2d\"\nbogus = 1\n[mesh]\nnnx = 4\n").unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|x| x.path == "bogus"));
        assert!(v.iter().any(|x| x.path == "mesh.nnx"));
    }

    #[test]
    fn reference_config_validates() {
        let text = RunConfig::reference_toml();
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.mesh.nx, RunConfig::default().mesh.nx);
        assert_eq!(cfg.vv.eps_list.len(), 5);
    }

    #[test]
    fn curves_parse() {
        let cfg = parse_config(
            r#"preset = "shear2d"
[loads]
w_curve = { kind = "table", points = [[0.0, 0.0], [0.5, 1.0], [1.0, 0.5]] }
heat_bulk_curve = { kind = "sin", amp = 0.1, omega = 6.28, offset = 0.2 }
heat_bulk_profile = "bump"
"#,
        )
        .unwrap();
        assert!((cfg.loads.w_curve.eval(0.25) - 0.5).abs() < 1e-15);
        assert!(cfg.loads.heat_bulk.is_some());
    }

    #[test]
    fn negative_heat_source_is_rejected() {
        let err = parse_config(
            "preset = \"shear2d\"\n[loads]\nheat_bulk_curve = { kind = \"constant\", value = -0.5 }\n",
        )
        .unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|x| x.path.contains("heat_bulk") && x.message.contains("nonnegative")));
    }
}
