//! Finite-element simulator for small-strain thermoviscoplasticity with a
//! fully implicit time discretization, discrete entropy/energy audits and
//! temperature-positivity tracking, a quasistatic Prandtl-Reuss solver in
//! incremental energetic form, and a vanishing-viscosity-and-inertia sweep
//! driver connecting the two.

pub mod audit;
pub mod config;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod loads;
pub mod material;
pub mod pp;
pub mod mesh;
pub mod stepper;
pub mod vv;
pub mod tensor;

pub use audit::{AuditConfig, AuditLedger, PhiSpec};
pub use loads::{Curve, Loads, Profile, WMode};
pub use material::{GammaReg, KappaLaw, MaterialModel};
pub use mesh::{FieldLayout, Mesh, Side};
pub use stepper::{run, SolverOpts, State, System};
pub use tensor::SymTensor2;
