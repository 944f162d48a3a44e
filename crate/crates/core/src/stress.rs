//! Clustered P-norm stress constraints in the principal material directions.
//!
//! Stress evaluation points (element centroids) are ranked by smoothed
//! absolute stress in each direction; the leading clusters of `n_s` points
//! each feed one P-norm constraint. Sensitivities use one adjoint solve per
//! constraint against the stored stiffness factor.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::fem::{
    stiffness_interp, stiffness_interp_deriv, stress_interp, stress_interp_deriv, FeModel,
    SolvedState, StressField,
};
use crate::math::{bilinear8, powi, sqrt};
use crate::mesh::{BoundaryConditions, DesignState, StructuredMesh};

/// Principal material direction of a stress component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Along the fibers (σ1).
    Fiber,
    /// Perpendicular to the fibers (σ2).
    Transverse,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Fiber, Direction::Transverse];

    pub fn index(self) -> usize {
        match self {
            Direction::Fiber => 0,
            Direction::Transverse => 1,
        }
    }
}

/// Smoothed magnitude `√(σ² + ε²)`.
#[inline]
pub fn smooth_abs(sigma: f64, eps: f64) -> f64 {
    sqrt(sigma * sigma + eps * eps)
}

/// `σ / √(σ² + ε²)`, defined as 0 at `σ = 0`.
#[inline]
pub fn smooth_abs_deriv(sigma: f64, eps: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        sigma / smooth_abs(sigma, eps)
    }
}

/// Smallest admissible cluster size, `ceil(0.025 · n_points)`.
pub fn min_cluster_size(n_points: usize) -> usize {
    (n_points * 25).div_ceil(1000).max(1)
}

/// `((1/N) Σ |v|^P)^(1/P)`, evaluated relative to the largest entry so that
/// large `P` does not overflow.
pub fn pnorm(values: &[f64], p: u32) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    let mean = values.iter().map(|v| powi(v.abs() / max, p as i32)).sum::<f64>() / values.len() as f64;
    max * libm::pow(mean, 1.0 / p as f64)
}

/// `∂PN/∂v_a = (1/N) (v_a / PN)^(P−1)` for non-negative entries.
pub fn pnorm_gradient(values: &[f64], p: u32) -> Vec<f64> {
    let pn = pnorm(values, p);
    let n = values.len() as f64;
    values
        .iter()
        .map(|&v| if pn == 0.0 { 0.0 } else { powi(v / pn, p as i32 - 1) / n })
        .collect()
}

/// Elements touching a loaded node, grown by `layers` rings of edge
/// neighbours.
pub fn load_exclusion_zone(mesh: &StructuredMesh, bc: &BoundaryConditions, layers: usize) -> Vec<usize> {
    let mut inside = vec![false; mesh.n_elements()];
    for n in bc.loaded_nodes() {
        for e in mesh.elements_of_node(n) {
            inside[e] = true;
        }
    }
    for _ in 0..layers {
        let current = inside.clone();
        for e in (0..mesh.n_elements()).filter(|&e| current[e]) {
            for nb in mesh.edge_neighbors(e) {
                inside[nb] = true;
            }
        }
    }
    (0..mesh.n_elements()).filter(|&e| inside[e]).collect()
}

/// Constrained clusters of stress evaluation points for each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: [Vec<Vec<usize>>; 2],
    n_s: usize,
    excluded: Vec<usize>,
}

impl ClusterSet {
    pub fn clusters(&self, dir: Direction) -> &[Vec<usize>] {
        &self.clusters[dir.index()]
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    /// `(direction, cluster index, members)` in constraint order.
    pub fn iter(&self) -> impl Iterator<Item = (Direction, usize, &[usize])> + '_ {
        Direction::ALL.into_iter().flat_map(move |d| {
            self.clusters[d.index()].iter().enumerate().map(move |(k, c)| (d, k, c.as_slice()))
        })
    }

    pub fn n_constraints(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }
}

/// Ranks points by descending smoothed `|σ_i|` (ties by ascending element
/// index) and cuts the first `n_clusters · n_s` into clusters of `n_s`.
///
/// `eps` is the absolute smoothing width per direction.
pub fn build_clusters(
    stress: &StressField,
    n_clusters: usize,
    n_s: usize,
    excluded: &[usize],
    eps: [f64; 2],
) -> Result<ClusterSet> {
    let n = stress.len();
    if !(1..=2).contains(&n_clusters) {
        return Err(Error::Config("one or two clusters per direction are supported"));
    }
    if n_s < min_cluster_size(n) {
        return Err(Error::Config("points per cluster must be at least 2.5 % of the element count"));
    }
    let mut is_excluded = vec![false; n];
    for &e in excluded {
        if e < n {
            is_excluded[e] = true;
        }
    }
    let mut clusters: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
    for dir in Direction::ALL {
        let c = dir.index();
        let mags: Vec<f64> = stress.values.iter().map(|s| smooth_abs(s[c], eps[c])).collect();
        let mut order: Vec<usize> = (0..n).filter(|&e| !is_excluded[e]).collect();
        order.sort_by(|&a, &b| {
            mags[b].partial_cmp(&mags[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b))
        });
        clusters[c] = order
            .chunks(n_s)
            .take(n_clusters)
            .map(<[usize]>::to_vec)
            .collect();
    }
    let mut excluded = excluded.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    Ok(ClusterSet { clusters, n_s, excluded })
}

/// One P-norm constraint with its design sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConstraint {
    pub direction: Direction,
    pub cluster: usize,
    /// P-norm of the smoothed stress magnitudes (Pa).
    pub value: f64,
    /// Allowable `min(σ_C, σ_T)` for the direction (Pa).
    pub limit: f64,
    pub drho: Vec<f64>,
    pub dtheta: Vec<f64>,
}

impl ClusterConstraint {
    /// `value / limit − 1`, feasible when non-positive.
    pub fn normalized(&self) -> f64 {
        self.value / self.limit - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub constraints: Vec<ClusterConstraint>,
}

/// Settings that fix the smooth branch of every stress constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNormSettings {
    /// Even exponent.
    pub p: u32,
    /// Allowable stress per direction (Pa).
    pub limits: [f64; 2],
    /// Smoothing width relative to the limit.
    pub eps_rel: f64,
    /// Stiffness penalization power.
    pub penal: f64,
}

impl PNormSettings {
    pub fn eps(&self) -> [f64; 2] {
        [self.eps_rel * self.limits[0], self.eps_rel * self.limits[1]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || !self.p.is_multiple_of(2) {
            return Err(Error::Config("P-norm exponent must be an even integer of at least 2"));
        }
        if self.limits.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("stress limits must be positive"));
        }
        Ok(())
    }
}

/// P-norm values of each cluster without sensitivities.
pub fn constraint_values(stress: &StressField, clusters: &ClusterSet, settings: &PNormSettings) -> Vec<f64> {
    let eps = settings.eps();
    clusters
        .iter()
        .map(|(dir, _, members)| {
            let c = dir.index();
            let mags: Vec<f64> = members.iter().map(|&a| smooth_abs(stress.values[a][c], eps[c])).collect();
            pnorm(&mags, settings.p)
        })
        .collect()
}

/// Values and adjoint sensitivities of every clustered P-norm constraint.
///
/// Cluster membership is taken as fixed. For a constraint over cluster `Ω`
/// in direction `i`, with `w_a = ∂PN/∂σ̄_a · ∂σ̄_a/∂σ_a`:
///
/// * adjoint load `Σ_a w_a η_S(ρ_a) (E_i T2_a B)ᵀ` scattered on element `a`,
/// * `∂PN/∂ρ_e = [e ∈ Ω] w_e η_S'(ρ_e) E_i T2_e B u_e − η_K'(ρ_e) λ_eᵀ k_e u_e`,
/// * `∂PN/∂θ_e = [e ∈ Ω] w_e η_S(ρ_e) E_i T2'_e B u_e − η_K(ρ_e) λ_eᵀ k_e' u_e`.
pub fn constraint_values_and_sensitivities(
    model: &FeModel,
    design: &DesignState,
    solved: &SolvedState,
    clusters: &ClusterSet,
    settings: &PNormSettings,
) -> Result<ConstraintBlock> {
    settings.validate()?;
    let n = model.n_elements();
    let eps = settings.eps();
    let mesh = model.mesh();

    let mut constraints = Vec::new();
    let mut adjoints = Vec::new();
    for (dir, k, members) in clusters.iter() {
        let c = dir.index();
        let mut raw = Vec::with_capacity(members.len());
        let mut raw_dtheta = Vec::with_capacity(members.len());
        let mut rows = Vec::with_capacity(members.len());
        for &a in members {
            let ue = model.element_displacements(&solved.u, a);
            let op = model.stress_operator(design.theta[a]);
            let dop = model.stress_operator_dtheta(design.theta[a]);
            raw.push(dot8(&op[c], &ue));
            raw_dtheta.push(dot8(&dop[c], &ue));
            rows.push(op[c]);
        }
        let penalized: Vec<f64> = members
            .iter()
            .zip(&raw)
            .map(|(&a, s)| stress_interp(design.rho[a]) * s)
            .collect();
        let mags: Vec<f64> = penalized.iter().map(|&s| smooth_abs(s, eps[c])).collect();
        let value = pnorm(&mags, settings.p);
        let dpn = pnorm_gradient(&mags, settings.p);

        let mut drho = vec![0.0; n];
        let mut dtheta = vec![0.0; n];
        let mut rhs = vec![0.0; mesh.n_dofs()];
        for (idx, &a) in members.iter().enumerate() {
            let w = dpn[idx] * smooth_abs_deriv(penalized[idx], eps[c]);
            let rho = design.rho[a];
            drho[a] += w * stress_interp_deriv(rho) * raw[idx];
            dtheta[a] += w * stress_interp(rho) * raw_dtheta[idx];
            let scale = w * stress_interp(rho);
            for (q, d) in mesh.element_dofs(a).iter().enumerate() {
                rhs[*d] += scale * rows[idx][q];
            }
        }
        adjoints.push(solved.adjoint_solve(&rhs));
        constraints.push(ClusterConstraint {
            direction: dir,
            cluster: k,
            value,
            limit: settings.limits[c],
            drho,
            dtheta,
        });
    }

    if !constraints.is_empty() {
        for e in 0..n {
            let ue = model.element_displacements(&solved.u, e);
            let (rho, theta) = (design.rho[e], design.theta[e]);
            let ke = model.element_stiffness(theta);
            let dke = model.element_stiffness_dtheta(theta);
            let (sk, dsk) = (stiffness_interp(rho, settings.penal), stiffness_interp_deriv(rho, settings.penal));
            for (con, lam) in constraints.iter_mut().zip(&adjoints) {
                let le = model.element_displacements(lam, e);
                con.drho[e] -= dsk * bilinear8(&le, &ke, &ue);
                con.dtheta[e] -= sk * bilinear8(&le, &dke, &ue);
            }
        }
    }
    Ok(ConstraintBlock { constraints })
}

fn dot8(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
