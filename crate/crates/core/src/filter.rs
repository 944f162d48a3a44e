//! Sensitivity filter over element centres.

use alloc::vec::Vec;

use crate::math::sqrt;
use crate::mesh::StructuredMesh;

/// Small positive number guarding the density division.
pub const FILTER_GAMMA: f64 = 1e-3;

/// Neighbour lists with hat weights `H_ej = max(0, r_min − Δ(e, j))`, the
/// distance measured in element widths.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterKernel {
    r_min: f64,
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl FilterKernel {
    pub fn build(mesh: &StructuredMesh, r_min: f64) -> Self {
        assert!(r_min > 0.0, "filter radius must be positive");
        let reach = libm::ceil(r_min) as isize;
        let neighbors = (0..mesh.n_elements())
            .map(|e| {
                let (i, j) = mesh.cell(e);
                let mut list = Vec::new();
                for di in -reach..=reach {
                    for dj in -reach..=reach {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if a < 0 || b < 0 {
                            continue;
                        }
                        let Some(k) = mesh.element_at(a as usize, b as usize) else { continue };
                        let w = r_min - sqrt((di * di + dj * dj) as f64);
                        if w > 0.0 {
                            list.push((k, w));
                        }
                    }
                }
                list.sort_by_key(|&(k, _)| k);
                list
            })
            .collect();
        FilterKernel { r_min, neighbors }
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn neighbors(&self, e: usize) -> &[(usize, f64)] {
        &self.neighbors[e]
    }

    /// `(Σ_j H_ej ρ_j g_j) / (max(γ, ρ_e) Σ_j H_ej)`.
    pub fn filter_density_sensitivities(&self, rho: &[f64], grad: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(e, list)| {
                let (mut num, mut den) = (0.0, 0.0);
                for &(j, h) in list {
                    num += h * rho[j] * grad[j];
                    den += h;
                }
                num / (rho[e].max(FILTER_GAMMA) * den)
            })
            .collect()
    }
}

/// Free-function form of [`FilterKernel::build`].
pub fn build_kernel(mesh: &StructuredMesh, r_min: f64) -> FilterKernel {
    FilterKernel::build(mesh, r_min)
}
