//! Material laws and the pointwise plastic machinery: the Kelvin-Voigt
//! stress with thermal expansion, the nonlinear heat conductivity, the von
//! Mises elastic domain with its radial projection and support function, and
//! the viscoplastic return map that solves the discrete flow rule per cell.

use crate::tensor::SymTensor2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("heat conductivity undefined: temperature {0:.6e} is not positive")]
    KappaDomain(f64),
    #[error("deviatoric input has trace {trace:.3e} beyond tolerance (|input| = {norm:.3e})")]
    TraceViolation { trace: f64, norm: f64 },
    #[error("return map failed to converge after {iterations} iterations (residual {residual:.3e})")]
    ReturnMapDiverged { iterations: usize, residual: f64 },
    #[error("positivity bound undefined: viscosity tensor is not positive definite (C1_D = {0:.3e})")]
    DegenerateViscosity(f64),
}

/// Heat conductivity `κ(θ) = c0 (1 + θ^μ)`, strictly increasing for μ > 1.
/// The upper constant of the admissible growth window is taken equal to the
/// lower one, so the law is the lower envelope exactly.
#[derive(Debug, Clone, Copy)]
pub struct KappaLaw {
    pub c0: f64,
    pub mu_exp: f64,
}

impl KappaLaw {
    pub fn eval(&self, theta: f64) -> Result<f64, MaterialError> {
        if !(theta > 0.0) {
            return Err(MaterialError::KappaDomain(theta));
        }
        Ok(self.c0 * (1.0 + theta.powf(self.mu_exp)))
    }

    pub fn derivative(&self, theta: f64) -> f64 {
        self.c0 * self.mu_exp * theta.powf(self.mu_exp - 1.0)
    }
}

/// Temperature multiplier of the yield radius, bounded away from 0 and ∞.
#[derive(Debug, Clone, Copy)]
pub enum PsiLaw {
    /// ψ ≡ 1: the elastic domain does not depend on temperature. This is the
    /// default, and the only choice under which the vanishing-viscosity
    /// limit hypotheses hold.
    Constant,
    /// ψ(θ) = clamp(1 + slope (θ - 1), lo, hi) with 0 < lo <= hi.
    Affine { slope: f64, lo: f64, hi: f64 },
}

impl PsiLaw {
    pub fn eval(&self, theta: f64) -> f64 {
        match *self {
            PsiLaw::Constant => 1.0,
            PsiLaw::Affine { slope, lo, hi } => (1.0 + slope * (theta - 1.0)).clamp(lo, hi),
        }
    }
}

/// Spatially varying isotropic material data; every per-cell vector has one
/// entry per mesh cell. `CA = 2 mu A + lambda tr(A) I`, likewise the
/// viscosity pair, and `B = C E` is stored directly (default `b I`).
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda_v: Vec<f64>,
    pub mu_v: Vec<f64>,
    pub b_coupling: Vec<SymTensor2>,
    pub kappa: KappaLaw,
    pub yield_radius: Vec<f64>,
    pub psi: PsiLaw,
    pub rho: f64,
}

impl MaterialModel {
    /// Homogeneous material with the given moduli on `n_cells` cells.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n_cells: usize,
        lambda: f64,
        mu: f64,
        lambda_v: f64,
        mu_v: f64,
        b: f64,
        kappa: KappaLaw,
        yield_radius: f64,
        rho: f64,
    ) -> Self {
        MaterialModel {
            lambda: vec![lambda; n_cells],
            mu: vec![mu; n_cells],
            lambda_v: vec![lambda_v; n_cells],
            mu_v: vec![mu_v; n_cells],
            b_coupling: vec![SymTensor2::identity() * b; n_cells],
            kappa,
            yield_radius: vec![yield_radius; n_cells],
            psi: PsiLaw::Constant,
            rho,
        }
    }

    /// Dimensionless defaults used by the bundled scenarios.
    pub fn defaults(n_cells: usize) -> Self {
        MaterialModel::uniform(
            n_cells,
            1.0,
            1.0,
            0.0,
            0.5,
            0.1,
            KappaLaw { c0: 1.0, mu_exp: 1.5 },
            0.3,
            1.0,
        )
    }

    pub fn apply_c(&self, cell: usize, a: SymTensor2) -> SymTensor2 {
        a * (2.0 * self.mu[cell]) + SymTensor2::identity() * (self.lambda[cell] * a.trace())
    }

    pub fn apply_d(&self, cell: usize, a: SymTensor2) -> SymTensor2 {
        a * (2.0 * self.mu_v[cell]) + SymTensor2::identity() * (self.lambda_v[cell] * a.trace())
    }

    /// Kelvin-Voigt stress with thermal expansion:
    /// `σ = D e_rate + C e - θ B`, with cell-local moduli.
    pub fn stress(
        &self,
        cell: usize,
        e: SymTensor2,
        e_rate: SymTensor2,
        theta: f64,
    ) -> SymTensor2 {
        self.apply_d(cell, e_rate) + self.apply_c(cell, e) - self.b_coupling[cell] * theta
    }

    pub fn kappa_eval(&self, theta: f64) -> Result<f64, MaterialError> {
        self.kappa.eval(theta)
    }

    /// Coercivity constant of the viscosity tensor, `C1_D = 2 min mu_v`.
    pub fn c1_d(&self) -> f64 {
        2.0 * self.mu_v.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Coercivity constant of the elasticity tensor, `C1_C = 2 min mu`.
    pub fn c1_c(&self) -> f64 {
        2.0 * self.mu.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Essential sup of the Frobenius norm of the thermal coupling tensor.
    pub fn b_sup(&self) -> f64 {
        self.b_coupling.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    /// Effective yield radius `r(x) ψ(θ)` of the elastic domain at a cell.
    pub fn yield_r(&self, cell: usize, theta: f64) -> f64 {
        self.yield_radius[cell] * self.psi.eval(theta)
    }

    /// Radial projection of a trace-free tensor onto the elastic domain
    /// `K(x, θ)`, the ball of radius `r(x) ψ(θ)`.
    pub fn project_k(
        &self,
        cell: usize,
        theta: f64,
        s_dev: SymTensor2,
    ) -> Result<SymTensor2, MaterialError> {
        check_trace_free(&s_dev)?;
        let r = self.yield_r(cell, theta);
        let n = s_dev.norm();
        if n <= r {
            Ok(s_dev)
        } else {
            Ok(s_dev * (r / n))
        }
    }

    /// Support function of the elastic domain: `R = r(x) ψ(θ) |p_rate|`.
    pub fn dissipation_r(&self, cell: usize, theta: f64, p_rate: SymTensor2) -> f64 {
        self.yield_r(cell, theta) * p_rate.norm()
    }

    /// Distance of a trace-free tensor to the elastic domain.
    pub fn dist_k(&self, cell: usize, theta: f64, s_dev: SymTensor2) -> f64 {
        (s_dev.norm() - self.yield_r(cell, theta)).max(0.0)
    }
}

fn check_trace_free(t: &SymTensor2) -> Result<(), MaterialError> {
    let tr = t.trace();
    if tr.abs() > 1e-12 * (1.0 + t.norm()) {
        return Err(MaterialError::TraceViolation { trace: tr, norm: t.norm() });
    }
    Ok(())
}

/// Optional γ-regularization of the discrete flow rule and stress; `gamma`
/// must exceed 4 when enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaReg {
    Off,
    On { gamma: f64 },
}

impl GammaReg {
    pub fn is_on(&self) -> bool {
        matches!(self, GammaReg::On { .. })
    }
}

/// `τ |q|^{γ-2} q` and its derivative coefficient helpers.
pub fn gamma_term(tau: f64, gamma: f64, q: SymTensor2) -> SymTensor2 {
    let n = q.norm();
    if n == 0.0 {
        SymTensor2::ZERO
    } else {
        q * (tau * n.powf(gamma - 2.0))
    }
}

/// Solves the pointwise discrete flow rule driven by a given deviatoric
/// stress `s`:
///
/// `ζ + p_rate + τ |p_prev + τ p_rate|^{γ-2} (p_prev + τ p_rate) = s`,
/// with `ζ ∈ ∂R(θ_prev, p_rate)`.
///
/// With the regularization off this is exactly `p_rate = s - P_K(s)`,
/// `ζ = P_K(s)`. With it on, a damped semismooth Newton iteration in the
/// deviatoric plane is used. The caller is responsible for folding any
/// dependence of `s` on `p_rate` into the driving stress (the stepper does
/// this via a viscosity rescaling before calling here).
pub fn return_map(
    material: &MaterialModel,
    cell: usize,
    theta_prev: f64,
    sigma_trial_dev: SymTensor2,
    tau: f64,
    gamma_reg: GammaReg,
    p_prev: SymTensor2,
) -> Result<(SymTensor2, SymTensor2), MaterialError> {
    check_trace_free(&sigma_trial_dev)?;
    let r = material.yield_r(cell, theta_prev);
    let s = sigma_trial_dev;
    let GammaReg::On { gamma } = gamma_reg else {
        let zeta = material.project_k(cell, theta_prev, s)?;
        return Ok((s - zeta, zeta));
    };

    // elastic test: p_rate = 0 admissible iff |s - τ|p_prev|^{γ-2} p_prev| <= r
    let zeta0 = s - gamma_term(tau, gamma, p_prev);
    if zeta0.norm() <= r {
        return Ok((SymTensor2::ZERO, zeta0));
    }

    // plastic branch: ζ = r p_rate/|p_rate|; Newton on
    // G(p) = r p/|p| + p + τ |q|^{γ-2} q - s,  q = p_prev + τ p
    let mut p = s - material.project_k(cell, theta_prev, s)?;
    if p.norm() == 0.0 {
        p = zeta0.normalized() * 1e-8;
    }
    let residual = |p: SymTensor2| -> SymTensor2 {
        p.normalized() * r + p + gamma_term(tau, gamma, p_prev + p * tau) - s
    };
    let mut g = residual(p);
    let mut iter = 0usize;
    while g.norm() > 1e-13 * (1.0 + s.norm()) {
        iter += 1;
        if iter > 100 {
            return Err(MaterialError::ReturnMapDiverged { iterations: iter, residual: g.norm() });
        }
        // dev-plane Jacobian in the orthonormal basis (E1, E2)
        let jac = plastic_jacobian(r, tau, gamma, p_prev, p);
        let rhs = [-dev_coord(g, 0), -dev_coord(g, 1)];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let dx1 = (rhs[0] * jac[1][1] - rhs[1] * jac[0][1]) / det;
        let dx2 = (jac[0][0] * rhs[1] - jac[1][0] * rhs[0]) / det;
        let step = from_dev_coords(dx1, dx2);
        // damped update, keeping the iterate on the plastic branch
        let mut alpha = 1.0;
        loop {
            let cand = p + step * alpha;
            if cand.norm() > 1e-14 {
                let gc = residual(cand);
                if gc.norm() < g.norm() || alpha < 1e-6 {
                    p = cand;
                    g = gc;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(MaterialError::ReturnMapDiverged {
                    iterations: iter,
                    residual: g.norm(),
                });
            }
        }
    }
    let zeta = s - p - gamma_term(tau, gamma, p_prev + p * tau);
    Ok((p, zeta))
}

/// Orthonormal basis of the deviatoric plane: `E1 = diag(1,-1)/√2`,
/// `E2 = offdiag(1/√2)`.
fn dev_coord(t: SymTensor2, k: usize) -> f64 {
    match k {
        0 => (t.a - t.b) / std::f64::consts::SQRT_2,
        _ => std::f64::consts::SQRT_2 * t.c,
    }
}

fn from_dev_coords(x1: f64, x2: f64) -> SymTensor2 {
    let s = 1.0 / std::f64::consts::SQRT_2;
    SymTensor2::new(x1 * s, -x1 * s, x2 * s)
}

fn plastic_jacobian(r: f64, tau: f64, gamma: f64, p_prev: SymTensor2, p: SymTensor2) -> [[f64; 2]; 2] {
    // directional dyad coordinates
    let np = p.norm();
    let phat = [dev_coord(p, 0) / np, dev_coord(p, 1) / np];
    let q = p_prev + p * tau;
    let nq = q.norm();
    let mut j = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            let id = if i == k { 1.0 } else { 0.0 };
            // d/dp [r p/|p|] = r/|p| (I - phat phat^T)
            j[i][k] += r / np * (id - phat[i] * phat[k]);
            // identity from the p term
            j[i][k] += id;
            // d/dp [τ |q|^{γ-2} q] with q = p_prev + τ p
            if nq > 0.0 {
                let qhat = [dev_coord(q, 0) / nq, dev_coord(q, 1) / nq];
                j[i][k] += tau * tau * nq.powf(gamma - 2.0)
                    * (id + (gamma - 2.0) * qhat[i] * qhat[k]);
            }
        }
    }
    j
}

/// Strict-positivity floor of the discrete temperatures,
/// `θ̄ = (c̄ T + 1/θ*)^{-1}` with `c̄ = |B|² / (2 C1_D)`.
pub fn positivity_bound(
    material: &MaterialModel,
    t_end: f64,
    theta_star: f64,
) -> Result<f64, MaterialError> {
    let c1d = material.c1_d();
    if !(c1d > 0.0) {
        return Err(MaterialError::DegenerateViscosity(c1d));
    }
    let b = material.b_sup();
    let cbar = b * b / (2.0 * c1d);
    Ok(1.0 / (cbar * t_end + 1.0 / theta_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn mat() -> MaterialModel {
        MaterialModel::defaults(4)
    }

    fn random_dev(rng: &mut ChaCha8Rng, scale: f64) -> SymTensor2 {
        let a = rng.gen_range(-scale..scale);
        let c = rng.gen_range(-scale..scale);
        SymTensor2::new(a, -a, c)
    }

    #[test]
    fn stress_examples() {
        let m = mat();
        // thermal term only
        let s = m.stress(0, SymTensor2::ZERO, SymTensor2::ZERO, 1.0);
        assert!((s - SymTensor2::identity() * -0.1).norm() < 1e-15);
        // 2 mu e + lambda tr(e) I with lambda = mu = 1
        let s = m.stress(0, SymTensor2::diag(1.0, 0.0), SymTensor2::ZERO, 0.0);
        assert!((s - SymTensor2::diag(3.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn stress_is_affine() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let e1 = SymTensor2::new(rng.gen(), rng.gen(), rng.gen());
            let e2 = SymTensor2::new(rng.gen(), rng.gen(), rng.gen());
            let r1 = SymTensor2::new(rng.gen(), rng.gen(), rng.gen());
            let r2 = SymTensor2::new(rng.gen(), rng.gen(), rng.gen());
            let (t1, t2): (f64, f64) = (rng.gen(), rng.gen());
            let lhs = m.stress(0, e1 + e2, r1 + r2, t1 + t2) + m.stress(0, SymTensor2::ZERO, SymTensor2::ZERO, 0.0);
            let rhs = m.stress(0, e1, r1, t1) + m.stress(0, e2, r2, t2);
            assert!((lhs - rhs).norm() <= 1e-14 * (1.0 + rhs.norm()));
        }
    }

    #[test]
    fn kappa_law() {
        let m = mat();
        assert_abs_diff_eq!(m.kappa_eval(1.0).unwrap(), 2.0);
        assert!((m.kappa_eval(1e-12).unwrap() - 1.0).abs() < 1e-9);
        assert!(m.kappa_eval(0.0).is_err());
        assert!(m.kappa_eval(-1.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = rng.gen_range(0.01..10.0);
            let b = rng.gen_range(0.01..10.0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            assert!(m.kappa_eval(lo).unwrap() <= m.kappa_eval(hi).unwrap());
        }
    }

    #[test]
    fn projection_examples() {
        let m = mat();
        let inside = SymTensor2::shear(0.1 / std::f64::consts::SQRT_2);
        assert!((m.project_k(0, 1.0, inside).unwrap() - inside).norm() < 1e-15);
        let n = SymTensor2::shear(1.0 / std::f64::consts::SQRT_2); // unit norm
        let p = m.project_k(0, 1.0, n * 0.6).unwrap();
        assert!((p - n * 0.3).norm() < 1e-14);
        assert_eq!(m.project_k(0, 1.0, SymTensor2::ZERO).unwrap(), SymTensor2::ZERO);
        assert!(m.project_k(0, 1.0, SymTensor2::identity()).is_err());
    }

    #[test]
    fn projection_kkt() {
        // (s - P(s)) : (k - P(s)) <= tol for all k in K
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let s = random_dev(&mut rng, 1.0);
            let ps = m.project_k(0, 1.0, s).unwrap();
            for _ in 0..200 {
                let mut k = random_dev(&mut rng, 0.3);
                if k.norm() > 0.3 {
                    k = k * (0.3 / k.norm() * rng.gen_range(0.0..1.0));
                }
                assert!((s - ps).inner(&(k - ps)) <= 1e-12);
            }
        }
    }

    #[test]
    fn dissipation_density() {
        let m = mat();
        assert_eq!(m.dissipation_r(0, 1.0, SymTensor2::ZERO), 0.0);
        let p = SymTensor2::shear(2.0 / std::f64::consts::SQRT_2); // |p| = 2
        assert_abs_diff_eq!(m.dissipation_r(0, 1.0, p), 0.6, epsilon = 1e-14);
        let alpha = 3.7;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let p = random_dev(&mut rng, 2.0);
            assert_abs_diff_eq!(
                m.dissipation_r(1, 1.0, p * alpha),
                alpha * m.dissipation_r(1, 1.0, p),
                epsilon = 1e-12
            );
            // linear growth window c_r |p| <= R <= C_R |p|
            let r = m.dissipation_r(1, 1.0, p);
            assert!(0.3 * p.norm() - 1e-15 <= r && r <= 0.3 * p.norm() + 1e-15);
        }
    }

    #[test]
    fn return_map_elastic_and_radial() {
        let m = mat();
        let s_in = SymTensor2::shear(0.2 / std::f64::consts::SQRT_2);
        let (pr, z) = return_map(&m, 0, 1.0, s_in, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
        assert_eq!(pr, SymTensor2::ZERO);
        assert!((z - s_in).norm() < 1e-15);

        let n = SymTensor2::shear(1.0 / std::f64::consts::SQRT_2);
        let (pr, z) = return_map(&m, 0, 1.0, n * 0.6, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
        assert!((pr - n * 0.3).norm() < 1e-14);
        assert!((z - n * 0.3).norm() < 1e-14);
    }

    /// Bisection oracle for the scalar plastic magnitude with the
    /// regularization on and collinear data: m + τ^γ m^{γ-1} = |s| - r.
    fn bisection_oracle(s_norm: f64, r: f64, tau: f64, gamma: f64) -> f64 {
        let g = |m: f64| m + tau.powf(gamma) * m.powf(gamma - 1.0) - (s_norm - r);
        let (mut lo, mut hi) = (0.0, s_norm);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn return_map_gamma_matches_bisection_oracle() {
        let m = mat();
        let n = SymTensor2::shear(1.0 / std::f64::consts::SQRT_2);
        let (tau, gamma) = (0.01, 4.5);
        let (pr, zeta) = return_map(
            &m,
            0,
            1.0,
            n * 0.6,
            tau,
            GammaReg::On { gamma },
            SymTensor2::ZERO,
        )
        .unwrap();
        let oracle = bisection_oracle(0.6, 0.3, tau, gamma);
        assert!(
            (pr.norm() - oracle).abs() < 1e-12,
            "returned magnitude {} vs oracle {}",
            pr.norm(),
            oracle
        );
        // the pair satisfies the flow-rule equation and ζ sits on the yield surface
        let res = zeta + pr + gamma_term(tau, gamma, pr * tau) - n * 0.6;
        assert!(res.norm() < 1e-12);
        assert!((zeta.norm() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn return_map_gamma_noncollinear_prev() {
        // p_prev not aligned with the trial stress: the full Newton path
        let m = mat();
        let s = SymTensor2::new(0.4, -0.4, 0.25);
        let p_prev = SymTensor2::new(-0.05, 0.05, 0.3);
        let (tau, gamma) = (0.05, 4.5);
        let (pr, zeta) = return_map(&m, 0, 1.0, s, tau, GammaReg::On { gamma }, p_prev).unwrap();
        let res = zeta + pr + gamma_term(tau, gamma, p_prev + pr * tau) - s;
        assert!(res.norm() < 1e-12, "residual {}", res.norm());
        // subdifferential characterization: ζ : p_rate = R(p_rate), |ζ| <= r
        assert!((zeta.inner(&pr) - m.dissipation_r(0, 1.0, pr)).abs() <= 1e-12 * (1.0 + s.norm_sq()));
        assert!(zeta.norm() <= 0.3 + 1e-12);
    }

    #[test]
    fn flow_rule_energy_identity() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let s = random_dev(&mut rng, 1.2);
            let (pr, zeta) =
                return_map(&m, 0, 1.0, s, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
            let lhs = zeta.inner(&pr);
            let rhs = m.dissipation_r(0, 1.0, pr);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + s.norm_sq()));
            // ζ : η <= R(η) for arbitrary η
            for _ in 0..20 {
                let eta = random_dev(&mut rng, 2.0);
                assert!(zeta.inner(&eta) <= m.dissipation_r(0, 1.0, eta) + 1e-12);
            }
        }
    }

    #[test]
    fn return_map_monotone() {
        let m = mat();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let s1 = random_dev(&mut rng, 1.0);
            let s2 = random_dev(&mut rng, 1.0);
            let (p1, _) = return_map(&m, 0, 1.0, s1, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
            let (p2, _) = return_map(&m, 0, 1.0, s2, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
            assert!((p1 - p2).inner(&(s1 - s2)) >= -1e-12);
        }
    }

    #[test]
    fn return_map_radial_symmetry() {
        // rotations of the deviatoric plane commute with the return map
        let m = mat();
        let rotate = |t: SymTensor2, alpha: f64| {
            let (x1, x2) = ((t.a - t.b) / std::f64::consts::SQRT_2, std::f64::consts::SQRT_2 * t.c);
            let (c, s) = (alpha.cos(), alpha.sin());
            from_dev_coords(c * x1 - s * x2, s * x1 + c * x2)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let s = random_dev(&mut rng, 1.0);
            let alpha = rng.gen_range(0.0..std::f64::consts::TAU);
            let (p, _) = return_map(&m, 0, 1.0, s, 1e-3, GammaReg::Off, SymTensor2::ZERO).unwrap();
            let (p_rot, _) =
                return_map(&m, 0, 1.0, rotate(s, alpha), 1e-3, GammaReg::Off, SymTensor2::ZERO)
                    .unwrap();
            assert!((rotate(p, alpha) - p_rot).norm() <= 1e-13);
        }
    }

    #[test]
    fn positivity_bound_values() {
        let mut m = mat();
        // B = 0 gives the initial floor back
        for b in &mut m.b_coupling {
            *b = SymTensor2::ZERO;
        }
        assert_abs_diff_eq!(positivity_bound(&m, 1.0, 1.0).unwrap(), 1.0);
        // |B| = 0.1 √2, C1_D = 1, T = 1, θ* = 1 -> 1/(0.01 + 1)
        let m = mat();
        assert_abs_diff_eq!(
            positivity_bound(&m, 1.0, 1.0).unwrap(),
            1.0 / 1.01,
            epsilon = 1e-15
        );
        // monotone in T (decreasing) and θ* (increasing)
        let mut prev = f64::INFINITY;
        for t in [0.5, 1.0, 2.0, 4.0] {
            let v = positivity_bound(&m, t, 1.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        let mut prev = 0.0;
        for ts in [0.5, 1.0, 2.0, 4.0] {
            let v = positivity_bound(&m, 1.0, ts).unwrap();
            assert!(v > prev);
            prev = v;
        }
        // degenerate viscosity is an error
        let mut m0 = mat();
        for mv in &mut m0.mu_v {
            *mv = 0.0;
        }
        assert!(positivity_bound(&m0, 1.0, 1.0).is_err());
    }
}
