//! Finite-difference verification of the analytic sensitivities.
//!
//! Compliance and the first σ1 and σ2 P-norm constraints are differentiated
//! with respect to densities and angles. Cluster membership is frozen at the
//! base design so every perturbed evaluation stays on the same smooth branch.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compliance::compliance_and_gradients;
use crate::error::{Error, Result};
use crate::fem::FeModel;
use crate::material::OrthotropicMaterial;
use crate::mesh::{BoundaryConditions, DesignState, StructuredMesh};
use crate::stress::{
    build_clusters, constraint_values, constraint_values_and_sensitivities, min_cluster_size,
    ClusterSet, Direction, PNormSettings,
};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Largest accepted relative error.
pub const GRAD_TOLERANCE: f64 = 1e-3;
/// Probed variables per class and function.
pub const PROBES_PER_CLASS: usize = 20;
/// Step multipliers tried in turn when an entry fails at the base step.
/// Entries many orders below the gradient norm sit at the roundoff floor of
/// the re-solved model, where a wider step is the accurate one.
const STEP_LADDER: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Compliance,
    /// First cluster of the given direction.
    PNorm(Direction),
}

impl Function {
    pub const ALL: [Function; 3] =
        [Function::Compliance, Function::PNorm(Direction::Fiber), Function::PNorm(Direction::Transverse)];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarClass {
    Density,
    Angle,
}

impl VarClass {
    pub const ALL: [VarClass; 2] = [VarClass::Density, VarClass::Angle];

    fn bounds(self) -> (f64, f64) {
        match self {
            VarClass::Density => (0.0, 1.0),
            VarClass::Angle => (-PI, PI),
        }
    }
}

fn var_mut(design: &mut DesignState, class: VarClass, index: usize) -> &mut f64 {
    match class {
        VarClass::Density => &mut design.rho[index],
        VarClass::Angle => &mut design.theta[index],
    }
}

/// Derivative of `f` with respect to one design variable.
///
/// Central differences are used unless the step would leave the variable
/// bounds, in which case a one-sided difference points into the box.
pub fn fd_gradient<F>(f: F, design: &DesignState, class: VarClass, index: usize, h: f64) -> Result<f64>
where
    F: Fn(&DesignState) -> Result<f64>,
{
    let (lo, hi) = class.bounds();
    let mut probe = design.clone();
    let x0 = *var_mut(&mut probe, class, index);
    let up = x0 + h <= hi;
    let down = x0 - h >= lo;
    let eval = |x: f64, probe: &mut DesignState| -> Result<f64> {
        *var_mut(probe, class, index) = x;
        f(probe)
    };
    match (up, down) {
        (true, true) => Ok((eval(x0 + h, &mut probe)? - eval(x0 - h, &mut probe)?) / (2.0 * h)),
        (true, false) => Ok((eval(x0 + h, &mut probe)? - eval(x0, &mut probe)?) / h),
        (false, true) => Ok((eval(x0, &mut probe)? - eval(x0 - h, &mut probe)?) / h),
        (false, false) => Err(Error::Config("finite-difference step wider than the variable range")),
    }
}

/// Analytic gradients of one function, indexed by element.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionGradient {
    pub function: Function,
    pub drho: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl FunctionGradient {
    pub fn class(&self, class: VarClass) -> &[f64] {
        match class {
            VarClass::Density => &self.drho,
            VarClass::Angle => &self.dtheta,
        }
    }

    pub fn class_mut(&mut self, class: VarClass) -> &mut [f64] {
        match class {
            VarClass::Density => &mut self.drho,
            VarClass::Angle => &mut self.dtheta,
        }
    }
}

/// Worst probe of one function and variable class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradEntry {
    pub function: Function,
    pub class: VarClass,
    pub max_rel_error: f64,
    /// Element index of the worst probe.
    pub argmax: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub entries: Vec<GradEntry>,
    pub tolerance: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&GradEntry> {
        self.entries.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// A model, a base design and the frozen clusters used for checking.
#[derive(Debug, Clone)]
pub struct GradCheckProblem {
    pub model: FeModel,
    pub design: DesignState,
    pub penal: f64,
    pub pnorm: PNormSettings,
    pub clusters: ClusterSet,
}

impl GradCheckProblem {
    /// Clusters are built once at `design` and kept for every evaluation.
    pub fn new(model: FeModel, design: DesignState, penal: f64, p: u32, n_s: usize) -> Result<Self> {
        design.validate(model.n_elements())?;
        let solved = model.solve(&design, penal)?;
        let stress = model.element_stresses(&design, &solved.u);
        let mut limits = [0.0_f64; 2];
        for s in &stress.values {
            limits[0] = limits[0].max(s[0].abs());
            limits[1] = limits[1].max(s[1].abs());
        }
        if !(limits[0] > 0.0 && limits[1] > 0.0) {
            return Err(Error::Config("base design carries no stress"));
        }
        let pnorm = PNormSettings { p, limits, eps_rel: 1e-6, penal };
        pnorm.validate()?;
        let clusters = build_clusters(&stress, 1, n_s, &[], pnorm.eps())?;
        Ok(GradCheckProblem { model, design, penal, pnorm, clusters })
    }

    /// Cantilever of `nelx × nely` unit elements clamped on the left with a
    /// downward tip load, random `ρ ∈ [0.3, 0.9]` and `θ ∈ (−π, π)`.
    pub fn random_cantilever(nelx: usize, nely: usize, seed: u64) -> Result<Self> {
        let mesh = StructuredMesh::rectangle(nelx, nely, 1.0, 1.0)?;
        let mut bc = BoundaryConditions::new();
        for j in 0..=nely {
            bc.fix_node(mesh.node_id(0, j).expect("boundary node"), true, true);
        }
        bc.add_node_load(mesh.node_id(nelx, 0).expect("tip node"), 0.0, -1.0);
        let n = mesh.n_elements();
        let model = FeModel::new(mesh, bc, OrthotropicMaterial::EPOXY_GLASS)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = (0..n).map(|_| rng.random_range(0.3..=0.9)).collect();
        let theta = (0..n).map(|_| rng.random_range(-PI + 1e-3..PI - 1e-3)).collect();
        let n_s = min_cluster_size(n).max(n / 4);
        Self::new(model, DesignState { rho, theta }, 3.0, 8, n_s)
    }

    fn first_cluster_index(&self, dir: Direction) -> usize {
        self.clusters
            .iter()
            .position(|(d, k, _)| d == dir && k == 0)
            .expect("every direction has a first cluster")
    }

    /// Value of `f` at `design` with the frozen clusters.
    pub fn value(&self, design: &DesignState, f: Function) -> Result<f64> {
        let solved = self.model.solve(design, self.penal)?;
        match f {
            Function::Compliance => Ok(self.model.work(&solved)),
            Function::PNorm(dir) => {
                let stress = self.model.element_stresses(design, &solved.u);
                let values = constraint_values(&stress, &self.clusters, &self.pnorm);
                Ok(values[self.first_cluster_index(dir)])
            }
        }
    }

    /// Analytic gradients of every checked function at the base design.
    pub fn analytic(&self) -> Result<Vec<FunctionGradient>> {
        let solved = self.model.solve(&self.design, self.penal)?;
        let obj = compliance_and_gradients(&self.model, &self.design, &solved, self.penal);
        let block =
            constraint_values_and_sensitivities(&self.model, &self.design, &solved, &self.clusters, &self.pnorm)?;
        let mut out = Vec::with_capacity(3);
        out.push(FunctionGradient { function: Function::Compliance, drho: obj.dc_drho, dtheta: obj.dc_dtheta });
        for dir in Direction::ALL {
            let con = &block.constraints[self.first_cluster_index(dir)];
            out.push(FunctionGradient {
                function: Function::PNorm(dir),
                drho: con.drho.clone(),
                dtheta: con.dtheta.clone(),
            });
        }
        Ok(out)
    }

    /// Compares `analytic` against finite differences at the probed
    /// element indices, starting from step `h`. Relative error is
    /// `|fd − an| / max(|an|, 1e-12 · ‖an‖∞)`.
    pub fn compare(&self, analytic: &[FunctionGradient], probes: &[usize], h: f64) -> Result<GradReport> {
        let mut entries = Vec::new();
        for grad in analytic {
            for class in VarClass::ALL {
                let g = grad.class(class);
                let floor = 1e-12 * g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let mut worst: Option<GradEntry> = None;
                for &e in probes {
                    let mut best: Option<(f64, f64, f64)> = None;
                    for mult in STEP_LADDER {
                        let step = h * mult;
                        let fd = fd_gradient(|d| self.value(d, grad.function), &self.design, class, e, step)?;
                        let err = (fd - g[e]).abs() / g[e].abs().max(floor).max(f64::MIN_POSITIVE);
                        if best.is_none_or(|b| err < b.0) {
                            best = Some((err, fd, step));
                        }
                        if err < GRAD_TOLERANCE {
                            break;
                        }
                    }
                    let (err, fd, step) = best.expect("step ladder is non-empty");
                    if worst.is_none_or(|w| err > w.max_rel_error) {
                        worst = Some(GradEntry {
                            function: grad.function,
                            class,
                            max_rel_error: err,
                            argmax: e,
                            analytic: g[e],
                            finite_difference: fd,
                            step,
                        });
                    }
                }
                entries.extend(worst);
            }
        }
        Ok(GradReport { entries, tolerance: GRAD_TOLERANCE })
    }

    /// Reproducible random probe indices.
    pub fn probes(&self, count: usize, seed: u64) -> Vec<usize> {
        let n = self.model.n_elements();
        let mut all: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let take = count.min(n);
        for i in 0..take {
            let j = rng.random_range(i..n);
            all.swap(i, j);
        }
        all.truncate(take);
        all
    }
}

/// Full check on a random cantilever design.
pub fn run_gradcheck(nelx: usize, nely: usize, seed: u64) -> Result<GradReport> {
    let problem = GradCheckProblem::random_cantilever(nelx, nely, seed)?;
    let analytic = problem.analytic()?;
    let probes = problem.probes(PROBES_PER_CLASS, seed);
    problem.compare(&analytic, &probes, FD_STEP)
}
