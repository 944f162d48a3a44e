//! Compliance objective and its sensitivities. The problem is self-adjoint,
//! so no extra solve is needed.

use alloc::vec::Vec;

use crate::fem::{stiffness_interp, stiffness_interp_deriv, FeModel, SolvedState};
use crate::math::quad_form8;
use crate::mesh::DesignState;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveResult {
    /// Compliance `Uᵀ F` (N·m).
    pub c: f64,
    pub dc_drho: Vec<f64>,
    pub dc_dtheta: Vec<f64>,
}

/// `c = Σ η_K(ρ_e) u_eᵀ k_e u_e` with
/// `∂c/∂ρ_e = −η_K'(ρ_e) u_eᵀ k_e u_e` and
/// `∂c/∂θ_e = −η_K(ρ_e) u_eᵀ (∂k_e/∂θ) u_e`.
pub fn compliance_and_gradients(
    model: &FeModel,
    design: &DesignState,
    solved: &SolvedState,
    p: f64,
) -> ObjectiveResult {
    let n = model.n_elements();
    let mut c = 0.0;
    let mut dc_drho = Vec::with_capacity(n);
    let mut dc_dtheta = Vec::with_capacity(n);
    for e in 0..n {
        let ue = model.element_displacements(&solved.u, e);
        let (rho, theta) = (design.rho[e], design.theta[e]);
        let energy = quad_form8(&model.element_stiffness(theta), &ue);
        let scale = stiffness_interp(rho, p);
        c += scale * energy;
        dc_drho.push(-stiffness_interp_deriv(rho, p) * energy);
        dc_dtheta.push(-scale * quad_form8(&model.element_stiffness_dtheta(theta), &ue));
    }
    ObjectiveResult { c, dc_drho, dc_dtheta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::OrthotropicMaterial;
    use crate::mesh::{BoundaryConditions, StructuredMesh};
    use alloc::vec;

    fn cantilever(nelx: usize, nely: usize, mat: OrthotropicMaterial, load: f64) -> FeModel {
        let mesh = StructuredMesh::rectangle(nelx, nely, 1.0, 1.0).unwrap();
        let mut bc = BoundaryConditions::new();
        for j in 0..=nely {
            bc.fix_node(mesh.node_id(0, j).unwrap(), true, true);
        }
        bc.add_node_load(mesh.node_id(nelx, 0).unwrap(), 0.3 * load, -load);
        FeModel::new(mesh, bc, mat).unwrap()
    }

    fn objective(model: &FeModel, d: &DesignState) -> f64 {
        let s = model.solve(d, 3.0).unwrap();
        compliance_and_gradients(model, d, &s, 3.0).c
    }

    #[test]
    fn zero_load_gives_zero() {
        let model = cantilever(3, 2, OrthotropicMaterial::EPOXY_GLASS, 0.0);
        let d = DesignState::uniform(6, 0.6, 0.2);
        let s = model.solve(&d, 3.0).unwrap();
        let r = compliance_and_gradients(&model, &d, &s, 3.0);
        assert_eq!(r.c, 0.0);
        assert!(r.dc_drho.iter().chain(&r.dc_dtheta).all(|&v| v == 0.0));
    }

    #[test]
    fn matches_full_model_finite_differences() {
        let model = cantilever(4, 3, OrthotropicMaterial::EPOXY_GLASS, 1.0e3);
        let n = model.n_elements();
        let design = DesignState {
            rho: (0..n).map(|e| 0.35 + 0.05 * e as f64).collect(),
            theta: (0..n).map(|e| -1.2 + 0.21 * e as f64).collect(),
        };
        let s = model.solve(&design, 3.0).unwrap();
        let r = compliance_and_gradients(&model, &design, &s, 3.0);
        assert!((r.c - model.work(&s)).abs() < 1e-10 * r.c);
        let h = 1e-6;
        for e in 0..n {
            let mut dp = design.clone();
            let mut dm = design.clone();
            dp.rho[e] += h;
            dm.rho[e] -= h;
            let fd = (objective(&model, &dp) - objective(&model, &dm)) / (2.0 * h);
            assert!((fd - r.dc_drho[e]).abs() / r.dc_drho[e].abs() < 1e-4, "rho {e}: {fd} vs {}", r.dc_drho[e]);

            let mut dp = design.clone();
            let mut dm = design.clone();
            dp.theta[e] += h;
            dm.theta[e] -= h;
            let fd = (objective(&model, &dp) - objective(&model, &dm)) / (2.0 * h);
            let scale = r.dc_dtheta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!((fd - r.dc_dtheta[e]).abs() / r.dc_dtheta[e].abs().max(1e-3 * scale) < 1e-4, "theta {e}: {fd} vs {}", r.dc_dtheta[e]);
        }
    }

    #[test]
    fn density_gradient_is_non_positive() {
        let model = cantilever(5, 3, OrthotropicMaterial::EPOXY_GLASS, 1.0);
        let d = DesignState::uniform(15, 0.5, -0.1);
        let s = model.solve(&d, 3.0).unwrap();
        let r = compliance_and_gradients(&model, &d, &s, 3.0);
        assert!(r.dc_drho.iter().all(|&g| g <= 0.0));
    }

    #[test]
    fn isotropic_angle_gradient_vanishes() {
        let iso = OrthotropicMaterial::isotropic(10e9, 0.3).unwrap();
        let model = cantilever(4, 3, iso, 1.0e3);
        let d = DesignState {
            rho: vec![0.8; 12],
            theta: (0..12).map(|e| 0.25 * e as f64 - 1.5).collect(),
        };
        let s = model.solve(&d, 3.0).unwrap();
        let r = compliance_and_gradients(&model, &d, &s, 3.0);
        let drho = r.dc_drho.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(r.dc_dtheta.iter().all(|g| g.abs() < 1e-9 * drho));
    }

    #[test]
    fn compliance_decreases_with_uniform_density() {
        let model = cantilever(6, 4, OrthotropicMaterial::EPOXY_GLASS, 1.0e3);
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let d = DesignState::uniform(24, 0.1 * k as f64, 0.0);
            let c = objective(&model, &d);
            assert!(c < last);
            last = c;
        }
    }
}
