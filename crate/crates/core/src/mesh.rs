//! Structured rectangular Q4 grids with an active-cell mask.
//!
//! Cells are addressed by `(i, j)` with `i` along x (`0..nelx`) and `j` along
//! y (`0..nely`, bottom to top). Active elements are enumerated with `i` as
//! the outer loop; this order is the element index used everywhere else.
//! Nodes of element `(i, j)` are taken counter-clockwise from the
//! bottom-left corner.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    nelx: usize,
    nely: usize,
    elem_size: f64,
    thickness: f64,
    /// Cell mask indexed by `i * nely + j`.
    active: Vec<bool>,
    /// Active cells in element order.
    elements: Vec<(usize, usize)>,
    /// Element index of each cell, `None` for inactive cells.
    cell_elem: Vec<Option<usize>>,
    /// Node number of each grid point `i * (nely + 1) + j`.
    node_ids: Vec<Option<usize>>,
    n_nodes: usize,
}

impl StructuredMesh {
    /// Builds a mesh from a cell mask indexed by `i * nely + j`.
    pub fn new(
        nelx: usize,
        nely: usize,
        elem_size: f64,
        thickness: f64,
        active: Vec<bool>,
    ) -> Result<Self> {
        if nelx == 0 || nely == 0 {
            return Err(Error::Mesh("element counts must be positive"));
        }
        if !(elem_size > 0.0 && elem_size.is_finite()) {
            return Err(Error::Mesh("element size must be positive"));
        }
        if !(thickness > 0.0 && thickness.is_finite()) {
            return Err(Error::Mesh("thickness must be positive"));
        }
        if active.len() != nelx * nely {
            return Err(Error::Mesh("mask length must equal nelx * nely"));
        }
        let mut elements = Vec::new();
        let mut cell_elem = vec![None; nelx * nely];
        for i in 0..nelx {
            for j in 0..nely {
                if active[i * nely + j] {
                    cell_elem[i * nely + j] = Some(elements.len());
                    elements.push((i, j));
                }
            }
        }
        if elements.is_empty() {
            return Err(Error::Mesh("no active cells"));
        }
        if !edge_connected(nelx, nely, &active, elements[0]) {
            return Err(Error::Mesh("active region must be a single connected component"));
        }

        // Number along the shorter grid direction to keep the stiffness band narrow.
        let mut used = vec![false; (nelx + 1) * (nely + 1)];
        for &(i, j) in &elements {
            for (ni, nj) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                used[ni * (nely + 1) + nj] = true;
            }
        }
        let mut node_ids = vec![None; used.len()];
        let mut n_nodes = 0;
        let mut visit = |ni: usize, nj: usize| {
            let g = ni * (nely + 1) + nj;
            if used[g] {
                node_ids[g] = Some(n_nodes);
                n_nodes += 1;
            }
        };
        if nely <= nelx {
            for ni in 0..=nelx {
                for nj in 0..=nely {
                    visit(ni, nj);
                }
            }
        } else {
            for nj in 0..=nely {
                for ni in 0..=nelx {
                    visit(ni, nj);
                }
            }
        }

        Ok(StructuredMesh {
            nelx,
            nely,
            elem_size,
            thickness,
            active,
            elements,
            cell_elem,
            node_ids,
            n_nodes,
        })
    }

    /// Fully active rectangle.
    pub fn rectangle(nelx: usize, nely: usize, elem_size: f64, thickness: f64) -> Result<Self> {
        Self::new(nelx, nely, elem_size, thickness, vec![true; nelx * nely])
    }

    /// Square-cornered L shape: the `cut_x × cut_y` block in the top-right
    /// corner of the bounding box is inactive.
    pub fn l_bracket(
        nelx: usize,
        nely: usize,
        cut_x: usize,
        cut_y: usize,
        elem_size: f64,
        thickness: f64,
    ) -> Result<Self> {
        if cut_x >= nelx || cut_y >= nely {
            return Err(Error::Mesh("L-bracket cut-out must leave both arms"));
        }
        let mut mask = vec![true; nelx * nely];
        for i in nelx - cut_x..nelx {
            for j in nely - cut_y..nely {
                mask[i * nely + j] = false;
            }
        }
        Self::new(nelx, nely, elem_size, thickness, mask)
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn elem_size(&self) -> f64 {
        self.elem_size
    }

    pub fn thickness(&self) -> f64 {
        self.thickness
    }

    /// Number of active elements.
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i < self.nelx && j < self.nely && self.active[i * self.nely + j]
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    /// Grid cell of an active element.
    pub fn cell(&self, e: usize) -> (usize, usize) {
        self.elements[e]
    }

    /// Element index of cell `(i, j)`, if active.
    pub fn element_at(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.nelx && j < self.nely {
            self.cell_elem[i * self.nely + j]
        } else {
            None
        }
    }

    /// Node number at grid point `(i, j)`, `0 ≤ i ≤ nelx`, `0 ≤ j ≤ nely`.
    pub fn node_id(&self, i: usize, j: usize) -> Option<usize> {
        if i <= self.nelx && j <= self.nely {
            self.node_ids[i * (self.nely + 1) + j]
        } else {
            None
        }
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.elements[e];
        let n = |a, b| self.node_id(a, b).expect("active element corner is numbered");
        [n(i, j), n(i + 1, j), n(i + 1, j + 1), n(i, j + 1)]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let nodes = self.element_nodes(e);
        let mut dofs = [0; 8];
        for (k, n) in nodes.iter().enumerate() {
            dofs[2 * k] = 2 * n;
            dofs[2 * k + 1] = 2 * n + 1;
        }
        dofs
    }

    /// Edge-adjacent active neighbours of element `e`.
    pub fn edge_neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.elements[e];
        let cand = [
            i.checked_sub(1).map(|a| (a, j)),
            Some((i + 1, j)),
            j.checked_sub(1).map(|b| (i, b)),
            Some((i, j + 1)),
        ];
        cand.into_iter().flatten().filter_map(|(a, b)| self.element_at(a, b))
    }

    /// Active elements sharing node `n`.
    pub fn elements_of_node(&self, n: usize) -> Vec<usize> {
        (0..self.n_elements())
            .filter(|&e| self.element_nodes(e).contains(&n))
            .collect()
    }
}

fn edge_connected(nelx: usize, nely: usize, active: &[bool], start: (usize, usize)) -> bool {
    let mut seen = vec![false; active.len()];
    let mut queue = VecDeque::from([start]);
    seen[start.0 * nely + start.1] = true;
    let mut count = 1;
    while let Some((i, j)) = queue.pop_front() {
        let cand = [
            i.checked_sub(1).map(|a| (a, j)),
            (i + 1 < nelx).then_some((i + 1, j)),
            j.checked_sub(1).map(|b| (i, b)),
            (j + 1 < nely).then_some((i, j + 1)),
        ];
        for (a, b) in cand.into_iter().flatten() {
            let c = a * nely + b;
            if active[c] && !seen[c] {
                seen[c] = true;
                count += 1;
                queue.push_back((a, b));
            }
        }
    }
    count == active.iter().filter(|&&a| a).count()
}

/// Homogeneous Dirichlet constraints and nodal point loads.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryConditions {
    fixed: Vec<usize>,
    loads: Vec<(usize, f64)>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix_dof(&mut self, dof: usize) -> &mut Self {
        if let Err(pos) = self.fixed.binary_search(&dof) {
            self.fixed.insert(pos, dof);
        }
        self
    }

    pub fn fix_node(&mut self, node: usize, x: bool, y: bool) -> &mut Self {
        if x {
            self.fix_dof(2 * node);
        }
        if y {
            self.fix_dof(2 * node + 1);
        }
        self
    }

    /// Adds a point force; repeated dofs accumulate.
    pub fn add_load(&mut self, dof: usize, force: f64) -> &mut Self {
        match self.loads.iter_mut().find(|(d, _)| *d == dof) {
            Some((_, f)) => *f += force,
            None => {
                self.loads.push((dof, force));
                self.loads.sort_by_key(|&(d, _)| d);
            }
        }
        self
    }

    pub fn add_node_load(&mut self, node: usize, fx: f64, fy: f64) -> &mut Self {
        if fx != 0.0 {
            self.add_load(2 * node, fx);
        }
        if fy != 0.0 {
            self.add_load(2 * node + 1, fy);
        }
        self
    }

    /// Sorted fixed dof indices.
    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed
    }

    pub fn loads(&self) -> &[(usize, f64)] {
        &self.loads
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed.binary_search(&dof).is_ok()
    }

    pub fn validate(&self, mesh: &StructuredMesh) -> Result<()> {
        let n = mesh.n_dofs();
        if self.fixed.iter().any(|&d| d >= n) || self.loads.iter().any(|&(d, _)| d >= n) {
            return Err(Error::Boundary("dof index out of range"));
        }
        if self.fixed.len() < 3 {
            return Err(Error::Boundary("at least three dofs must be fixed"));
        }
        if self.loads.iter().any(|&(d, _)| self.is_fixed(d)) {
            return Err(Error::Boundary("a loaded dof is also fixed"));
        }
        if self.loads.iter().any(|&(_, f)| !f.is_finite()) {
            return Err(Error::Boundary("non-finite load"));
        }
        Ok(())
    }

    /// Global force vector of length `n_dofs`.
    pub fn force_vector(&self, n_dofs: usize) -> Vec<f64> {
        let mut f = vec![0.0; n_dofs];
        for &(d, v) in &self.loads {
            f[d] += v;
        }
        f
    }

    /// Nodes carrying a non-zero load.
    pub fn loaded_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .loads
            .iter()
            .filter(|&&(_, f)| f != 0.0)
            .map(|&(d, _)| d / 2)
            .collect();
        nodes.dedup();
        nodes
    }

    /// Elements touching the ends of each straight run of supported nodes.
    ///
    /// A supported node is an end when at most one grid neighbour is also
    /// supported; these are the corners where stress concentrates at the
    /// edge of a clamp.
    pub fn support_end_elements(&self, mesh: &StructuredMesh) -> Vec<usize> {
        let mut supported = vec![false; mesh.n_nodes()];
        for &d in &self.fixed {
            supported[d / 2] = true;
        }
        let mut out = Vec::new();
        for i in 0..=mesh.nelx() {
            for j in 0..=mesh.nely() {
                let Some(n) = mesh.node_id(i, j) else { continue };
                if !supported[n] {
                    continue;
                }
                let cand = [
                    i.checked_sub(1).map(|a| (a, j)),
                    Some((i + 1, j)),
                    j.checked_sub(1).map(|b| (i, b)),
                    Some((i, j + 1)),
                ];
                let count = cand
                    .into_iter()
                    .flatten()
                    .filter_map(|(a, b)| mesh.node_id(a, b))
                    .filter(|&m| supported[m])
                    .count();
                if count <= 1 {
                    out.extend(mesh.elements_of_node(n));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Per-element density and fiber angle (radians).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

impl DesignState {
    pub fn uniform(n: usize, rho: f64, theta: f64) -> Self {
        DesignState { rho: vec![rho; n], theta: vec![theta; n] }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn validate(&self, n_elements: usize) -> Result<()> {
        if self.rho.len() != n_elements || self.theta.len() != n_elements {
            return Err(Error::Design("design length must equal active element count"));
        }
        if self.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Design("density outside [0, 1]"));
        }
        let pi = core::f64::consts::PI;
        if self.theta.iter().any(|t| !(-pi..=pi).contains(t)) {
            return Err(Error::Design("angle outside [-pi, pi]"));
        }
        Ok(())
    }
}
