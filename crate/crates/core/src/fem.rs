//! P1/P0 finite element assembly on crossed-triangle meshes.
//!
//! Displacements and temperature are nodal P1 fields; strains, plastic
//! variables, and stresses are cell-constant P0 tensor fields. Products of
//! two P1 fields (mass terms) are integrated exactly; every term involving
//! a P0 field or a nonlinear coefficient uses the one-point barycenter rule,
//! which is exact for the P0/P1 products appearing in the scheme. The audit
//! layer reuses these routines so its discrete identities hold to solver
//! precision rather than to quadrature error.

use crate::linalg::{BandMatrix, SymBandMatrix};
use crate::mesh::{EdgeLabel, FieldLayout, Mesh};
use crate::tensor::SymTensor2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("nonpositive nodal temperature {value:.6e} at node {node}; the implicit step left the positivity region")]
    NonPositiveTemperature { node: usize, value: f64 },
    #[error("Korn ratio undefined: sym-grad vanishes but the field norm is {unorm:.3e}; Dirichlet handling is broken")]
    KornDegenerate { unorm: f64 },
}

/// Linear self-adjoint map on symmetric 2x2 tensors, stored as a 3x3 matrix
/// acting on the `(a, b, c)` coordinates. Built from identity, trace, and
/// dyad pieces so the assembled stiffness stays symmetric.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellTangent {
    m: [[f64; 3]; 3],
}

impl CellTangent {
    pub fn zero() -> Self {
        CellTangent::default()
    }

    /// Adds `k * x`.
    pub fn add_identity(&mut self, k: f64) {
        self.m[0][0] += k;
        self.m[1][1] += k;
        self.m[2][2] += k;
    }

    /// Adds `k * tr(x) * I`.
    pub fn add_trace(&mut self, k: f64) {
        self.m[0][0] += k;
        self.m[0][1] += k;
        self.m[1][0] += k;
        self.m[1][1] += k;
    }

    /// Adds `k * n * inner(n, x)`.
    pub fn add_dyad(&mut self, k: f64, n: SymTensor2) {
        let row = [n.a, n.b, 2.0 * n.c];
        let col = [n.a, n.b, n.c];
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += k * col[i] * row[j];
            }
        }
    }

    /// Overwrites the full matrix; used by finite-difference tangents.
    pub fn set_matrix(&mut self, m: [[f64; 3]; 3]) {
        self.m = m;
    }

    pub fn apply(&self, x: SymTensor2) -> SymTensor2 {
        let v = [x.a, x.b, x.c];
        let mut y = [0.0; 3];
        for i in 0..3 {
            y[i] = self.m[i][0] * v[0] + self.m[i][1] * v[1] + self.m[i][2] * v[2];
        }
        SymTensor2::new(y[0], y[1], y[2])
    }
}

/// Per-cell symmetric gradient of a P1 vector field; exact for affine fields.
pub fn sym_grad(mesh: &Mesh, u: &[f64]) -> Vec<SymTensor2> {
    debug_assert_eq!(u.len(), 2 * mesh.n_nodes());
    let mut out = Vec::with_capacity(mesh.n_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let mut t = SymTensor2::ZERO;
        for (v, &node) in cell.iter().enumerate() {
            let g = mesh.grads[c][v];
            let uv = [u[2 * node], u[2 * node + 1]];
            t += SymTensor2::sym_outer(uv, g);
        }
        out.push(t);
    }
    out
}

/// Full (nonsymmetric) gradient per cell, for H1 norms.
pub fn full_grad(mesh: &Mesh, u: &[f64]) -> Vec<[[f64; 2]; 2]> {
    let mut out = Vec::with_capacity(mesh.n_cells());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let mut j = [[0.0; 2]; 2];
        for (v, &node) in cell.iter().enumerate() {
            let g = mesh.grads[c][v];
            for r in 0..2 {
                for s in 0..2 {
                    j[r][s] += u[2 * node + r] * g[s];
                }
            }
        }
        out.push(j);
    }
    out
}

/// Internal force vector over all vector dofs: `f_i = ∫ σ : ε(φ_i)`.
pub fn internal_force_full(mesh: &Mesh, sigma: &[SymTensor2]) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.n_nodes()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let area = mesh.areas[c];
        let s = sigma[c];
        for (v, &node) in cell.iter().enumerate() {
            let g = mesh.grads[c][v];
            // ε(φ e_x) = sym_outer(e_x, g), likewise e_y; σ : that
            f[2 * node] += area * (s.a * g[0] + s.c * g[1]);
            f[2 * node + 1] += area * (s.c * g[0] + s.b * g[1]);
        }
    }
    f
}

/// The discrete `-div` operator: load vector `v ↦ ∫ σ : ε(v)` restricted to
/// the non-Dirichlet dofs.
pub fn assemble_div_sigma(mesh: &Mesh, layout: &FieldLayout, sigma: &[SymTensor2]) -> Vec<f64> {
    let full = internal_force_full(mesh, sigma);
    layout.free_vdofs.iter().map(|&d| full[d]).collect()
}

/// Assembles `K[fi, fj] = ∫ ε(φ_i) : T_c[ε(φ_j)]` over free dofs into a
/// symmetric band matrix; `tangent` supplies the per-cell operator.
pub fn assemble_vector_tangent(
    mesh: &Mesh,
    layout: &FieldLayout,
    tangent: &dyn Fn(usize) -> CellTangent,
    out: &mut SymBandMatrix,
) {
    out.reset();
    for (c, cell) in mesh.cells.iter().enumerate() {
        let area = mesh.areas[c];
        let t = tangent(c);
        // strains of the 6 local basis fields
        let mut eps = [[SymTensor2::ZERO; 2]; 3];
        for v in 0..3 {
            let g = mesh.grads[c][v];
            eps[v][0] = SymTensor2::sym_outer([1.0, 0.0], g);
            eps[v][1] = SymTensor2::sym_outer([0.0, 1.0], g);
        }
        for a in 0..3 {
            for ca in 0..2 {
                let Some(fa) = layout.vdof_to_free[2 * cell[a] + ca] else { continue };
                let tea = t.apply(eps[a][ca]);
                for b in 0..3 {
                    for cb in 0..2 {
                        let Some(fb) = layout.vdof_to_free[2 * cell[b] + cb] else { continue };
                        if fb > fa {
                            continue;
                        }
                        out.add(fa, fb, area * tea.inner(&eps[b][cb]));
                    }
                }
            }
        }
    }
}

/// Adds `coef * M` (consistent P1 vector mass) to the free-dof band matrix.
pub fn add_vector_mass(
    mesh: &Mesh,
    layout: &FieldLayout,
    coef: f64,
    out: &mut SymBandMatrix,
) {
    for (c, cell) in mesh.cells.iter().enumerate() {
        let w = mesh.areas[c] / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                let m = coef * w * if a == b { 2.0 } else { 1.0 };
                for comp in 0..2 {
                    if let (Some(fa), Some(fb)) = (
                        layout.vdof_to_free[2 * cell[a] + comp],
                        layout.vdof_to_free[2 * cell[b] + comp],
                    ) {
                        if fb <= fa {
                            out.add(fa, fb, m);
                        }
                    }
                }
            }
        }
    }
}

/// Consistent P1 vector mass action `y = M u` over all dofs.
pub fn vector_mass_apply(mesh: &Mesh, u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let w = mesh.areas[c] / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                let m = w * if a == b { 2.0 } else { 1.0 };
                for comp in 0..2 {
                    y[2 * cell[a] + comp] += m * u[2 * cell[b] + comp];
                }
            }
        }
    }
    y
}

/// `∫ u · v` with the consistent P1 vector mass.
pub fn vector_l2_product(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    vector_mass_apply(mesh, u).iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Consistent P1 scalar mass action.
pub fn scalar_mass_apply(mesh: &Mesh, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let w = mesh.areas[c] / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                y[cell[a]] += w * if a == b { 2.0 } else { 1.0 } * x[cell[b]];
            }
        }
    }
    y
}

/// Lumped P1 scalar mass (row sums); exact for integrals of P1 fields.
pub fn lumped_scalar_mass(mesh: &Mesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.n_nodes()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        for &node in cell {
            m[node] += mesh.areas[c] / 3.0;
        }
    }
    m
}

/// `∫ x dx` of a P1 field (exact).
pub fn integrate_p1(mesh: &Mesh, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (c, cell) in mesh.cells.iter().enumerate() {
        s += mesh.areas[c] * (x[cell[0]] + x[cell[1]] + x[cell[2]]) / 3.0;
    }
    s
}

/// Constant-coefficient stiffness action `y_i = ∫ ∇x · ∇φ_i`.
pub fn stiffness_apply(mesh: &Mesh, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (c, cell) in mesh.cells.iter().enumerate() {
        let area = mesh.areas[c];
        let mut gx = [0.0; 2];
        for (v, &node) in cell.iter().enumerate() {
            gx[0] += x[node] * mesh.grads[c][v][0];
            gx[1] += x[node] * mesh.grads[c][v][1];
        }
        for (v, &node) in cell.iter().enumerate() {
            let g = mesh.grads[c][v];
            y[node] += area * (gx[0] * g[0] + gx[1] * g[1]);
        }
    }
    y
}

/// Value and consistent Jacobian of the nonlinear heat operator
/// `v ↦ ∫ κ(θ) ∇θ · ∇v`, with κ evaluated at the cell barycenter value of θ.
///
/// Fails if any nodal θ is nonpositive: the positivity-preserving stepper
/// never produces such states, so this signals a broken step.
pub fn assemble_nonlinear_heat(
    mesh: &Mesh,
    theta: &[f64],
    kappa: &dyn Fn(f64) -> f64,
    kappa_prime: &dyn Fn(f64) -> f64,
    jac: Option<&mut BandMatrix>,
) -> Result<Vec<f64>, FemError> {
    for (node, &t) in theta.iter().enumerate() {
        if !(t > 0.0) {
            return Err(FemError::NonPositiveTemperature { node, value: t });
        }
    }
    let mut val = vec![0.0; theta.len()];
    let mut jac = jac;
    if let Some(j) = jac.as_deref_mut() {
        j.reset();
    }
    for (c, cell) in mesh.cells.iter().enumerate() {
        let area = mesh.areas[c];
        let tc = mesh.barycenter_value(c, theta);
        let k = kappa(tc);
        let mut gt = [0.0; 2];
        for (v, &node) in cell.iter().enumerate() {
            gt[0] += theta[node] * mesh.grads[c][v][0];
            gt[1] += theta[node] * mesh.grads[c][v][1];
        }
        for (v, &node) in cell.iter().enumerate() {
            let g = mesh.grads[c][v];
            val[node] += area * k * (gt[0] * g[0] + gt[1] * g[1]);
        }
        if let Some(j) = jac.as_deref_mut() {
            let kp = kappa_prime(tc);
            for (v, &ni) in cell.iter().enumerate() {
                let gi = mesh.grads[c][v];
                let gt_gi = gt[0] * gi[0] + gt[1] * gi[1];
                for (w, &nj) in cell.iter().enumerate() {
                    let gj = mesh.grads[c][w];
                    let gi_gj = gi[0] * gj[0] + gi[1] * gj[1];
                    // d/dθ_j [κ(θ_c) ∇θ · ∇φ_i] = κ ∇φ_j·∇φ_i + κ'/3 ∇θ·∇φ_i
                    j.add(ni, nj, area * (k * gi_gj + kp / 3.0 * gt_gi));
                }
            }
        }
    }
    Ok(val)
}

/// Boundary load `∮ h φ_i dS` for a P1 boundary field `h` (nodal values),
/// integrated exactly edge by edge.
pub fn edge_scalar_load(mesh: &Mesh, h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_nodes()];
    for e in &mesh.boundary_edges {
        let [n1, n2] = e.nodes;
        let l = e.length;
        out[n1] += l * (2.0 * h[n1] + h[n2]) / 6.0;
        out[n2] += l * (h[n1] + 2.0 * h[n2]) / 6.0;
    }
    out
}

/// `∮_∂Ω h dS` of a P1 boundary field, exact.
pub fn integrate_boundary_p1(mesh: &Mesh, h: &[f64]) -> f64 {
    mesh.boundary_edges
        .iter()
        .map(|e| e.length * 0.5 * (h[e.nodes[0]] + h[e.nodes[1]]))
        .sum()
}

/// Neumann traction load `∮_{Γ_Neu} (σ_b ν) · v dS` for a boundary stress
/// field constant per edge (evaluated from a spatially constant tensor).
pub fn neumann_traction_load(mesh: &Mesh, sigma_boundary: &SymTensor2) -> Vec<f64> {
    let mut out = vec![0.0; 2 * mesh.n_nodes()];
    for e in &mesh.boundary_edges {
        if e.label != EdgeLabel::Neumann {
            continue;
        }
        let t = sigma_boundary.apply(e.normal);
        for &node in &e.nodes {
            out[2 * node] += 0.5 * e.length * t[0];
            out[2 * node + 1] += 0.5 * e.length * t[1];
        }
    }
    out
}

/// Squared L2 norm of a P0 tensor field.
pub fn p0_norm_sq(mesh: &Mesh, field: &[SymTensor2]) -> f64 {
    field.iter().zip(&mesh.areas).map(|(t, &a)| a * t.norm_sq()).sum()
}

/// L2 inner product of two P0 tensor fields.
pub fn p0_inner(mesh: &Mesh, f: &[SymTensor2], g: &[SymTensor2]) -> f64 {
    f.iter().zip(g).zip(&mesh.areas).map(|((s, t), &a)| a * s.inner(t)).sum()
}

/// Diagnostic Korn ratio `‖u‖_{H1} / ‖ε(u)‖_{L2}` for a field vanishing on
/// the Dirichlet dofs. Returns 0 for the zero field by convention.
pub fn korn_check(mesh: &Mesh, u: &[f64]) -> Result<f64, FemError> {
    let l2_sq = vector_l2_product(mesh, u, u);
    let grad = full_grad(mesh, u);
    let h1_grad_sq: f64 = grad
        .iter()
        .zip(&mesh.areas)
        .map(|(j, &a)| {
            a * (j[0][0] * j[0][0] + j[0][1] * j[0][1] + j[1][0] * j[1][0] + j[1][1] * j[1][1])
        })
        .sum();
    let eps_sq = p0_norm_sq(mesh, &sym_grad(mesh, u));
    let unorm = (l2_sq + h1_grad_sq).sqrt();
    if unorm == 0.0 {
        return Ok(0.0);
    }
    if eps_sq.sqrt() <= 1e-14 * unorm {
        return Err(FemError::KornDegenerate { unorm });
    }
    Ok(unorm / eps_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Side;
    use approx::assert_abs_diff_eq;

    fn unit_mesh(n: usize) -> Mesh {
        Mesh::rectangle(n, n, 1.0, 1.0, &[Side::Left]).unwrap()
    }

    fn nodal_vec(mesh: &Mesh, f: impl Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; 2 * mesh.n_nodes()];
        for (i, p) in mesh.nodes.iter().enumerate() {
            let v = f(p[0], p[1]);
            u[2 * i] = v[0];
            u[2 * i + 1] = v[1];
        }
        u
    }

    #[test]
    fn sym_grad_affine_fields() {
        let mesh = unit_mesh(3);
        let u = nodal_vec(&mesh, |x, _| [x, 0.0]);
        for t in sym_grad(&mesh, &u) {
            assert_abs_diff_eq!(t.a, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t.b, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(t.c, 0.0, epsilon = 1e-14);
        }
        let u = nodal_vec(&mesh, |x, y| [y, x]);
        for t in sym_grad(&mesh, &u) {
            assert!((t - SymTensor2::shear(1.0)).norm() < 1e-14);
        }
        // rigid rotation: antisymmetric gradient, zero strain
        let u = nodal_vec(&mesh, |x, y| [-y, x]);
        for t in sym_grad(&mesh, &u) {
            assert!(t.norm() < 1e-14);
        }
    }

    #[test]
    fn div_sigma_zero_and_constant() {
        let mesh = unit_mesh(4);
        let layout = FieldLayout::new(&mesh);
        let zero = vec![SymTensor2::ZERO; mesh.n_cells()];
        assert!(assemble_div_sigma(&mesh, &layout, &zero).iter().all(|&v| v == 0.0));

        // constant σ, full Dirichlet boundary: interior residual vanishes
        let mesh_full =
            Mesh::rectangle(4, 4, 1.0, 1.0, &[Side::Bottom, Side::Top, Side::Left, Side::Right])
                .unwrap();
        let layout_full = FieldLayout::new(&mesh_full);
        let sigma = vec![SymTensor2::new(1.3, -0.4, 0.7); mesh_full.n_cells()];
        for v in assemble_div_sigma(&mesh_full, &layout_full, &sigma) {
            assert!(v.abs() < 1e-13, "interior residual {v}");
        }
    }

    #[test]
    fn div_sigma_matches_boundary_integral_oracle() {
        // constant σ = diag(1,1), Γ_Dir = left edge: for free dofs the load
        // equals the independently computed edge integral ∮_{Γ_Neu} (σν)·φ_i.
        let mesh = unit_mesh(3);
        let layout = FieldLayout::new(&mesh);
        let sigma_t = SymTensor2::diag(1.0, 1.0);
        let sigma = vec![sigma_t; mesh.n_cells()];
        let f = assemble_div_sigma(&mesh, &layout, &sigma);
        let oracle_full = neumann_traction_load(&mesh, &sigma_t);
        for (k, &dof) in layout.free_vdofs.iter().enumerate() {
            assert!(
                (f[k] - oracle_full[dof]).abs() < 1e-13,
                "dof {dof}: {} vs oracle {}",
                f[k],
                oracle_full[dof]
            );
        }
    }

    #[test]
    fn assembly_is_linear() {
        let mesh = unit_mesh(3);
        let layout = FieldLayout::new(&mesh);
        let s1: Vec<SymTensor2> = (0..mesh.n_cells())
            .map(|c| SymTensor2::new((c % 5) as f64, 0.3 * c as f64, -(c as f64).sqrt()))
            .collect();
        let s2: Vec<SymTensor2> = (0..mesh.n_cells())
            .map(|c| SymTensor2::new(1.0 / (1.0 + c as f64), (c % 3) as f64, 0.1))
            .collect();
        let (a, b) = (2.5, -1.25);
        let combo: Vec<SymTensor2> =
            s1.iter().zip(&s2).map(|(x, y)| *x * a + *y * b).collect();
        let f1 = assemble_div_sigma(&mesh, &layout, &s1);
        let f2 = assemble_div_sigma(&mesh, &layout, &s2);
        let fc = assemble_div_sigma(&mesh, &layout, &combo);
        let scale: f64 = fc.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..fc.len() {
            assert!((fc[i] - (a * f1[i] + b * f2[i])).abs() < 1e-13 * scale);
        }
    }

    #[test]
    fn heat_operator_constant_theta_vanishes() {
        let mesh = unit_mesh(4);
        let theta = vec![2.7; mesh.n_nodes()];
        let val =
            assemble_nonlinear_heat(&mesh, &theta, &|t| 1.0 + t, &|_| 1.0, None).unwrap();
        assert!(val.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn heat_operator_linear_theta_matches_stiffness() {
        let mesh = unit_mesh(4);
        let theta: Vec<f64> = mesh.nodes.iter().map(|p| 1.0 + p[0]).collect();
        let val = assemble_nonlinear_heat(&mesh, &theta, &|_| 1.0, &|_| 0.0, None).unwrap();
        let stiff = stiffness_apply(&mesh, &theta);
        for (a, b) in val.iter().zip(&stiff) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn heat_jacobian_matches_finite_differences() {
        let mesh = unit_mesh(3);
        let layout = FieldLayout::new(&mesh);
        let kappa = |t: f64| 1.0 * (1.0 + t.powf(1.5));
        let kappa_p = |t: f64| 1.5 * t.powf(0.5);
        let theta: Vec<f64> =
            mesh.nodes.iter().map(|p| 1.0 + 0.3 * p[0] + 0.2 * p[1] * p[1]).collect();
        let mut jac = BandMatrix::zeros(mesh.n_nodes(), layout.hbw_scalar, layout.hbw_scalar);
        let base =
            assemble_nonlinear_heat(&mesh, &theta, &kappa, &kappa_p, Some(&mut jac)).unwrap();
        let h = 1e-6;
        for j in [0usize, 3, mesh.n_nodes() / 2, mesh.n_nodes() - 1] {
            let mut tp = theta.clone();
            tp[j] += h;
            let vp = assemble_nonlinear_heat(&mesh, &tp, &kappa, &kappa_p, None).unwrap();
            let mut tm = theta.clone();
            tm[j] -= h;
            let vm = assemble_nonlinear_heat(&mesh, &tm, &kappa, &kappa_p, None).unwrap();
            for i in 0..mesh.n_nodes() {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                let an = jac.get(i, j);
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + base[i].abs() + an.abs()),
                    "J[{i},{j}] fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn heat_operator_rejects_nonpositive_theta() {
        let mesh = unit_mesh(2);
        let mut theta = vec![1.0; mesh.n_nodes()];
        theta[3] = -0.1;
        assert!(matches!(
            assemble_nonlinear_heat(&mesh, &theta, &|_| 1.0, &|_| 0.0, None),
            Err(FemError::NonPositiveTemperature { node: 3, .. })
        ));
    }

    #[test]
    fn mass_and_stiffness_structure() {
        let mesh = unit_mesh(3);
        // stiffness kernel is exactly the constants
        let ones = vec![1.0; mesh.n_nodes()];
        assert!(stiffness_apply(&mesh, &ones).iter().all(|&v| v.abs() < 1e-14));
        // mass row sums integrate to the domain area; lumped matches
        let m1 = scalar_mass_apply(&mesh, &ones);
        let lumped = lumped_scalar_mass(&mesh);
        let total: f64 = m1.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        for (a, b) in m1.iter().zip(&lumped) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        // positive semidefiniteness of both forms on a few fields
        for (i, f) in [
            mesh.nodes.iter().map(|p| p[0] - 0.3 * p[1]).collect::<Vec<_>>(),
            mesh.nodes.iter().map(|p| (7.0 * p[0]).sin()).collect::<Vec<_>>(),
        ]
        .iter()
        .enumerate()
        {
            let mf = scalar_mass_apply(&mesh, f);
            let sf = stiffness_apply(&mesh, f);
            let qm: f64 = mf.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
            let qs: f64 = sf.iter().zip(f.iter()).map(|(a, b)| a * b).sum();
            assert!(qm > 0.0 && qs >= -1e-14, "field {i}: qm={qm} qs={qs}");
        }
    }

    #[test]
    fn korn_check_cases() {
        let mesh = unit_mesh(4);
        let zero = vec![0.0; 2 * mesh.n_nodes()];
        assert_eq!(korn_check(&mesh, &zero).unwrap(), 0.0);
        // u = (x, 0) vanishes on the left edge; ratio dominates 1
        let u = nodal_vec(&mesh, |x, _| [x, 0.0]);
        let r = korn_check(&mesh, &u).unwrap();
        assert!(r >= 1.0);
        // rigid rotation has zero strain: degenerate for the Dirichlet space
        let u = nodal_vec(&mesh, |x, y| [-y, x]);
        assert!(korn_check(&mesh, &u).is_err());
    }

    #[test]
    fn korn_ratio_stable_under_refinement() {
        // a fixed smooth Dirichlet-compatible field; the ratio should move
        // by less than a factor 2 from an 8x8 mesh to a 16x16 mesh
        let field = |x: f64, y: f64| {
            [
                x * (1.0 - y) * (0.5 + 0.3 * y),
                x * x * 0.25 - 0.1 * x * y,
            ]
        };
        let r8 = {
            let mesh = unit_mesh(8);
            korn_check(&mesh, &nodal_vec(&mesh, field)).unwrap()
        };
        let r16 = {
            let mesh = unit_mesh(16);
            korn_check(&mesh, &nodal_vec(&mesh, field)).unwrap()
        };
        assert!(r8.is_finite() && r16.is_finite());
        assert!(r16 / r8 < 2.0 && r8 / r16 < 2.0, "r8={r8} r16={r16}");
    }
}
