//! Outer optimization loop: analysis, reclustering, sensitivities, filtering
//! and one MMA update per iteration, stopping on the largest density change.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::compliance::compliance_and_gradients;
use crate::error::{Error, Result};
use crate::fem::{FeModel, StressField};
use crate::filter::FilterKernel;
use crate::mesh::DesignState;
use crate::mma::{MmaSettings, MmaState};
use crate::stress::{
    build_clusters, constraint_values_and_sensitivities, load_exclusion_zone, min_cluster_size,
    smooth_abs, ClusterSet, Direction, PNormSettings,
};

/// Clustered P-norm constraint settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressSettings {
    /// Even P-norm exponent.
    pub p_norm: u32,
    /// Constrained clusters per direction (1 or 2).
    pub n_clusters: usize,
    /// Stress evaluation points per cluster.
    pub n_s: usize,
    /// Allowable `min(σ_C, σ_T)` along and across the fibers (Pa).
    pub limits: [f64; 2],
    /// Absolute-value smoothing width relative to the limit.
    pub eps_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSettings {
    /// SIMP power for stiffness.
    pub penal: f64,
    pub volume_fraction: f64,
    /// `None` solves the plain volume-constrained compliance problem.
    pub stress: Option<StressSettings>,
    /// Sensitivity filter radius in element widths.
    pub r_min: f64,
    pub move_rho: f64,
    /// Radians.
    pub move_theta: f64,
    /// Stop when `max |Δρ|` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub rho0: f64,
    pub theta0: f64,
    /// Rings of edge neighbours added around loaded elements before they are
    /// kept out of the stress clusters; `None` keeps every element.
    pub load_exclusion: Option<usize>,
    pub mma: MmaSettings,
}

impl Default for OptimizationSettings {
    fn default() -> Self {
        OptimizationSettings {
            penal: 3.0,
            volume_fraction: 0.25,
            stress: None,
            r_min: 1.5,
            move_rho: 0.2,
            move_theta: 0.2,
            tol: 1e-3,
            max_iter: 8000,
            rho0: 1.0,
            theta0: -0.1,
            load_exclusion: Some(1),
            mma: MmaSettings::default(),
        }
    }
}

impl OptimizationSettings {
    pub fn validate(&self, n_elements: usize) -> Result<()> {
        if !(self.penal >= 1.0) {
            return Err(Error::Config("penal must be at least 1"));
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction <= 1.0) {
            return Err(Error::Config("volume fraction must lie in (0, 1]"));
        }
        if !(self.r_min > 0.0) {
            return Err(Error::Config("filter radius must be positive"));
        }
        if !(self.move_rho > 0.0 && self.move_theta > 0.0) {
            return Err(Error::Config("move limits must be positive"));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tolerance and iteration cap must be positive"));
        }
        if !(0.0..=1.0).contains(&self.rho0) || !(-PI..=PI).contains(&self.theta0) {
            return Err(Error::Config("initial design outside the variable bounds"));
        }
        if let Some(s) = &self.stress {
            PNormSettings { p: s.p_norm, limits: s.limits, eps_rel: s.eps_rel, penal: self.penal }.validate()?;
            if !(1..=2).contains(&s.n_clusters) {
                return Err(Error::Config("one or two clusters per direction are supported"));
            }
            if s.n_s < min_cluster_size(n_elements) {
                return Err(Error::Config("points per cluster must be at least 2.5 % of the element count"));
            }
            if !(s.eps_rel > 0.0) {
                return Err(Error::Config("smoothing width must be positive"));
            }
        }
        Ok(())
    }
}

/// Finite element model together with the optimization settings.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: FeModel,
    pub settings: OptimizationSettings,
}

/// Quantities logged once per iteration, evaluated before the MMA update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iter: usize,
    pub compliance: f64,
    /// Normalized stress constraints in fixed slots: σ1 cluster 1,
    /// σ1 cluster 2, σ2 cluster 1, σ2 cluster 2. Unused slots are NaN.
    pub stress_constraints: [f64; 4],
    /// Raw P-norm values in the same slots (Pa).
    pub pnorms: [f64; 4],
    /// Volume fraction `Σ V_j / V_0`.
    pub volume: f64,
    /// Largest penalized `|σ1|` and `|σ2|` outside the load zone (Pa).
    pub max_sigma: [f64; 2],
    /// `max |Δρ|` produced by the update.
    pub change: f64,
    pub kkt_residual: f64,
    /// The MMA subproblem needed its artificial variables.
    pub infeasible_step: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub design: DesignState,
    /// Penalized principal stresses of the final design.
    pub stress: StressField,
    pub compliance: f64,
    pub volume: f64,
    pub history: Vec<IterationRecord>,
    pub status: TerminationStatus,
    /// Elements kept out of the clusters and of the logged stress maxima.
    pub excluded: Vec<usize>,
}

impl OptimizationResult {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    /// Largest `|σ|` of a component over all elements not in `skip`.
    pub fn max_abs_stress(&self, component: usize, skip: &[usize]) -> f64 {
        max_abs_outside(&self.stress, component, skip)
    }
}

fn max_abs_outside(stress: &StressField, component: usize, skip: &[usize]) -> f64 {
    stress
        .values
        .iter()
        .enumerate()
        .filter(|(e, _)| !skip.contains(e))
        .fold(0.0, |m, (_, s)| f64::max(m, s[component].abs()))
}

fn slot(dir: Direction, cluster: usize) -> usize {
    2 * dir.index() + cluster
}

/// Runs the optimization; `observer` sees every iteration record as soon as
/// it is complete.
pub fn run_optimization(
    problem: &Problem,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<OptimizationResult> {
    let model = &problem.model;
    let st = &problem.settings;
    let mesh = model.mesh();
    let n = mesh.n_elements();
    st.validate(n)?;

    let mut excluded = match st.load_exclusion {
        Some(layers) => load_exclusion_zone(mesh, model.bc(), layers),
        None => Vec::new(),
    };
    excluded.sort_unstable();
    if let Some(s) = &st.stress {
        if n - excluded.len() < s.n_clusters * s.n_s {
            return Err(Error::Config("not enough stress evaluation points for the requested clusters"));
        }
    }
    let pnorm_settings = st.stress.map(|s| PNormSettings {
        p: s.p_norm,
        limits: s.limits,
        eps_rel: s.eps_rel,
        penal: st.penal,
    });
    let m = 1 + st.stress.map_or(0, |s| 2 * s.n_clusters);

    let mut xmin = vec![0.0; n];
    xmin.extend(core::iter::repeat_n(-PI, n));
    let mut xmax = vec![1.0; n];
    xmax.extend(core::iter::repeat_n(PI, n));
    let mut move_limit = vec![st.move_rho; n];
    move_limit.extend(core::iter::repeat_n(st.move_theta, n));
    let mut mma = MmaState::new(xmin, xmax, move_limit, m, st.mma)?;
    let kernel = FilterKernel::build(mesh, st.r_min);

    let mut x = vec![st.rho0; n];
    x.extend(core::iter::repeat_n(st.theta0, n));
    let dvol = 1.0 / (n as f64 * st.volume_fraction);
    let mut vol_grad = vec![dvol; n];
    vol_grad.extend(core::iter::repeat_n(0.0, n));

    let mut c0 = None;
    let mut history = Vec::new();
    let mut status = TerminationStatus::MaxIterations;

    for iter in 1..=st.max_iter {
        let design = DesignState { rho: x[..n].to_vec(), theta: x[n..].to_vec() };
        let solved = model.solve(&design, st.penal)?;
        let stress = model.element_stresses(&design, &solved.u);
        let obj = compliance_and_gradients(model, &design, &solved, st.penal);
        let scale = 1.0 / *c0.get_or_insert(obj.c);

        let mut df0 = kernel.filter_density_sensitivities(&design.rho, &obj.dc_drho);
        df0.extend_from_slice(&obj.dc_dtheta);
        df0.iter_mut().for_each(|v| *v *= scale);

        let volume = design.rho.iter().sum::<f64>() / n as f64;
        let mut g = vec![volume / st.volume_fraction - 1.0];
        let mut dg = vec![vol_grad.clone()];
        let mut stress_constraints = [f64::NAN; 4];
        let mut pnorms = [f64::NAN; 4];

        if let (Some(s), Some(ps)) = (&st.stress, &pnorm_settings) {
            let clusters: ClusterSet = build_clusters(&stress, s.n_clusters, s.n_s, &excluded, ps.eps())?;
            let block = constraint_values_and_sensitivities(model, &design, &solved, &clusters, ps)?;
            for con in &block.constraints {
                let k = slot(con.direction, con.cluster);
                stress_constraints[k] = con.normalized();
                pnorms[k] = con.value;
                g.push(con.normalized());
                let mut grad = kernel.filter_density_sensitivities(&design.rho, &con.drho);
                grad.extend_from_slice(&con.dtheta);
                grad.iter_mut().for_each(|v| *v /= con.limit);
                dg.push(grad);
            }
        }

        let step = mma.step(&x, &df0, &g, &dg)?;
        let change = step.x[..n]
            .iter()
            .zip(&x[..n])
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        x = step.x;

        let record = IterationRecord {
            iter,
            compliance: obj.c,
            stress_constraints,
            pnorms,
            volume,
            max_sigma: [max_abs_outside(&stress, 0, &excluded), max_abs_outside(&stress, 1, &excluded)],
            change,
            kkt_residual: step.kkt_residual,
            infeasible_step: step.infeasible,
        };
        observer(&record);
        history.push(record);
        if change < st.tol {
            status = TerminationStatus::Converged;
            break;
        }
    }

    let design = DesignState { rho: x[..n].to_vec(), theta: x[n..].to_vec() };
    let solved = model.solve(&design, st.penal)?;
    let stress = model.element_stresses(&design, &solved.u);
    let compliance = model.work(&solved);
    let volume = design.rho.iter().sum::<f64>() / n as f64;
    Ok(OptimizationResult { design, stress, compliance, volume, history, status, excluded })
}

/// Penalized stress magnitudes `√(σ² + ε²)` used for ranking, exposed for
/// reporting tools.
pub fn smoothed_magnitudes(stress: &StressField, dir: Direction, eps: f64) -> Vec<f64> {
    stress.values.iter().map(|s| smooth_abs(s[dir.index()], eps)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::OrthotropicMaterial;
    use crate::mesh::{BoundaryConditions, StructuredMesh};

    fn small_cantilever() -> FeModel {
        let mesh = StructuredMesh::rectangle(12, 8, 1.0, 1.0).unwrap();
        let mut bc = BoundaryConditions::new();
        for j in 0..=8 {
            bc.fix_node(mesh.node_id(0, j).unwrap(), true, true);
        }
        for j in 0..3 {
            bc.add_node_load(mesh.node_id(12, j).unwrap(), 0.0, -1.0e3);
        }
        FeModel::new(mesh, bc, OrthotropicMaterial::EPOXY_GLASS).unwrap()
    }

    #[test]
    fn volume_only_run_respects_bounds_and_volume() {
        let problem = Problem {
            model: small_cantilever(),
            settings: OptimizationSettings { max_iter: 150, volume_fraction: 0.4, ..Default::default() },
        };
        let result = run_optimization(&problem, |_| {}).unwrap();
        assert!(result.design.rho.iter().all(|r| (0.0..=1.0).contains(r)));
        assert!(result.design.theta.iter().all(|t| (-PI..=PI).contains(t)));
        assert!(result.volume <= 0.4 + 1e-3, "{}", result.volume);
        let model = &problem.model;
        let uniform = DesignState::uniform(model.n_elements(), 0.4, problem.settings.theta0);
        let c_uniform = model.work(&model.solve(&uniform, 3.0).unwrap());
        assert!(result.compliance < c_uniform, "{} vs {}", result.compliance, c_uniform);
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let model = small_cantilever();
        let mut settings = OptimizationSettings {
            stress: Some(StressSettings { p_norm: 7, n_clusters: 1, n_s: 10, limits: [1.0, 1.0], eps_rel: 1e-6 }),
            ..Default::default()
        };
        assert!(run_optimization(&Problem { model: model.clone(), settings: settings.clone() }, |_| {}).is_err());
        settings.stress = Some(StressSettings { p_norm: 8, n_clusters: 1, n_s: 1, limits: [1.0, 1.0], eps_rel: 1e-6 });
        assert!(run_optimization(&Problem { model, settings }, |_| {}).is_err());
    }

    #[test]
    fn history_is_deterministic() {
        let settings = OptimizationSettings {
            max_iter: 15,
            stress: Some(StressSettings { p_norm: 8, n_clusters: 2, n_s: 10, limits: [4e4, 1.5e4], eps_rel: 1e-6 }),
            ..Default::default()
        };
        let problem = Problem { model: small_cantilever(), settings };
        let a = run_optimization(&problem, |_| {}).unwrap();
        let b = run_optimization(&problem, |_| {}).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.design, b.design);
    }
}
