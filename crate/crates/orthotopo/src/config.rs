//! TOML problem description.
//!
//! All physical quantities are SI: metres, newtons, pascals, radians.
//! Node coordinates are grid indices `(i, j)` with `i` along x from the left
//! edge and `j` along y from the bottom edge.

use std::fs;
use std::path::{Path, PathBuf};

use orthotopo_core::mma::MmaSettings;
use orthotopo_core::stress::min_cluster_size;
use orthotopo_core::{
    BoundaryConditions, FeModel, OptimizationSettings, OrthotropicMaterial, Problem, StressSettings,
    StructuredMesh,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("invalid problem: {0}")]
    Model(#[from] orthotopo_core::Error),
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Cantilever,
    Lbracket,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    pub nelx: usize,
    pub nely: usize,
    /// Edge length of the square elements (m).
    pub elem_size: f64,
    /// Out-of-plane thickness (m).
    #[serde(default = "one")]
    pub thickness: f64,
    /// Width of the removed top-right block (lbracket only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_x: Option<usize>,
    /// Height of the removed top-right block (lbracket only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_y: Option<usize>,
    /// One string per element row, top row first; `#` active, `.` void
    /// (custom only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub e1: f64,
    pub e2: f64,
    pub g12: f64,
    pub nu12: f64,
    pub nu21: f64,
}

impl From<OrthotropicMaterial> for MaterialConfig {
    fn from(m: OrthotropicMaterial) -> Self {
        MaterialConfig { e1: m.e1, e2: m.e2, g12: m.g12, nu12: m.nu12, nu21: m.nu21 }
    }
}

/// Inclusive rectangle of grid nodes, `i = [first, last]`, `j = [first, last]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRange {
    pub i: [usize; 2],
    pub j: [usize; 2],
}

impl NodeRange {
    pub fn single(i: usize, j: usize) -> Self {
        NodeRange { i: [i, i], j: [j, j] }
    }

    fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.i[0]..=self.i[1]).flat_map(move |i| (self.j[0]..=self.j[1]).map(move |j| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportConfig {
    pub nodes: NodeRange,
    #[serde(default = "yes")]
    pub fix_x: bool,
    #[serde(default = "yes")]
    pub fix_y: bool,
}

/// Force applied to every node of the range (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub nodes: NodeRange,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    pub volume_fraction: f64,
    pub penal: f64,
    pub r_min: f64,
    pub rho0: f64,
    pub theta0: f64,
    pub move_rho: f64,
    pub move_theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Rings of elements around loaded nodes kept out of the stress
    /// clusters; negative disables the exclusion.
    pub load_exclusion_layers: i64,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        let d = OptimizationSettings::default();
        OptimizationConfig {
            volume_fraction: d.volume_fraction,
            penal: d.penal,
            r_min: d.r_min,
            rho0: d.rho0,
            theta0: d.theta0,
            move_rho: d.move_rho,
            move_theta: d.move_theta,
            tol: d.tol,
            max_iter: d.max_iter,
            load_exclusion_layers: d.load_exclusion.map_or(-1, |l| l as i64),
        }
    }
}

/// Tension and compression allowables per principal direction (Pa).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressConfig {
    #[serde(default = "default_p_norm")]
    pub p_norm: u32,
    #[serde(default = "one_usize")]
    pub n_clusters: usize,
    pub n_s: usize,
    pub sigma1_t: f64,
    pub sigma1_c: f64,
    pub sigma2_t: f64,
    pub sigma2_c: f64,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
}

impl StressConfig {
    /// `min(σ_C, σ_T)` per direction.
    pub fn limits(&self) -> [f64; 2] {
        [self.sigma1_t.min(self.sigma1_c), self.sigma2_t.min(self.sigma2_c)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub supports: Vec<SupportConfig>,
    pub loads: Vec<LoadConfig>,
    #[serde(default)]
    pub optimization: OptimizationConfig,
    /// Absent for a volume-constrained compliance run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stress: Option<StressConfig>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_p_norm() -> u32 {
    8
}

fn default_eps_rel() -> f64 {
    1e-6
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ProblemConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, ConfigError> {
    let cfg: ProblemConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ProblemConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn n_elements(&self) -> Result<usize, ConfigError> {
        Ok(self.mesh()?.n_elements())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mesh = self.mesh()?;
        OrthotropicMaterial::new(self.material.e1, self.material.e2, self.material.g12, self.material.nu12, self.material.nu21)
            .map_err(|e| invalid("material", e.to_string()))?;
        if self.supports.is_empty() {
            return Err(invalid("supports", "at least one support is required"));
        }
        if self.loads.is_empty() {
            return Err(invalid("loads", "at least one load is required"));
        }
        let o = &self.optimization;
        if !(o.volume_fraction > 0.0 && o.volume_fraction <= 1.0) {
            return Err(invalid("optimization.volume_fraction", "must lie in (0, 1]"));
        }
        if !(o.penal >= 1.0) {
            return Err(invalid("optimization.penal", "must be at least 1"));
        }
        if !(o.r_min > 0.0) {
            return Err(invalid("optimization.r_min", "must be positive"));
        }
        if !(0.0..=1.0).contains(&o.rho0) {
            return Err(invalid("optimization.rho0", "must lie in [0, 1]"));
        }
        if !(-std::f64::consts::PI..=std::f64::consts::PI).contains(&o.theta0) {
            return Err(invalid("optimization.theta0", "must lie in [-pi, pi]"));
        }
        if !(o.move_rho > 0.0) || !(o.move_theta > 0.0) {
            return Err(invalid("optimization.move_rho", "move limits must be positive"));
        }
        if !(o.tol > 0.0) {
            return Err(invalid("optimization.tol", "must be positive"));
        }
        if o.max_iter == 0 {
            return Err(invalid("optimization.max_iter", "must be positive"));
        }
        if let Some(s) = &self.stress {
            if s.p_norm < 2 || s.p_norm % 2 != 0 {
                return Err(invalid("stress.p_norm", "must be an even integer of at least 2"));
            }
            if !(1..=2).contains(&s.n_clusters) {
                return Err(invalid("stress.n_clusters", "must be 1 or 2"));
            }
            let min = min_cluster_size(mesh.n_elements());
            if s.n_s < min {
                return Err(invalid("stress.n_s", format!("must be at least {min} (2.5 % of the elements)")));
            }
            for (key, v) in [
                ("stress.sigma1_t", s.sigma1_t),
                ("stress.sigma1_c", s.sigma1_c),
                ("stress.sigma2_t", s.sigma2_t),
                ("stress.sigma2_c", s.sigma2_c),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(key, "stress limits must be positive"));
                }
            }
            if !(s.eps_rel > 0.0) {
                return Err(invalid("stress.eps_rel", "must be positive"));
            }
        }
        self.boundary_conditions(&mesh)?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<StructuredMesh, ConfigError> {
        let g = &self.geometry;
        if g.nelx == 0 || g.nely == 0 {
            return Err(invalid("geometry.nelx", "grid must have at least one element each way"));
        }
        if !(g.elem_size > 0.0) {
            return Err(invalid("geometry.elem_size", "must be positive"));
        }
        if !(g.thickness > 0.0) {
            return Err(invalid("geometry.thickness", "must be positive"));
        }
        let mesh = match g.kind {
            GeometryKind::Cantilever => StructuredMesh::rectangle(g.nelx, g.nely, g.elem_size, g.thickness),
            GeometryKind::Lbracket => {
                let cut_x = g.cut_x.ok_or_else(|| invalid("geometry.cut_x", "required for an lbracket"))?;
                let cut_y = g.cut_y.ok_or_else(|| invalid("geometry.cut_y", "required for an lbracket"))?;
                StructuredMesh::l_bracket(g.nelx, g.nely, cut_x, cut_y, g.elem_size, g.thickness)
            }
            GeometryKind::Custom => {
                let rows = g.mask.as_ref().ok_or_else(|| invalid("geometry.mask", "required for a custom geometry"))?;
                let mask = parse_mask(rows, g.nelx, g.nely)?;
                StructuredMesh::new(g.nelx, g.nely, g.elem_size, g.thickness, mask)
            }
        };
        mesh.map_err(|e| invalid("geometry", e.to_string()))
    }

    pub fn material(&self) -> Result<OrthotropicMaterial, ConfigError> {
        let m = &self.material;
        OrthotropicMaterial::new(m.e1, m.e2, m.g12, m.nu12, m.nu21).map_err(|e| invalid("material", e.to_string()))
    }

    pub fn boundary_conditions(&self, mesh: &StructuredMesh) -> Result<BoundaryConditions, ConfigError> {
        let mut bc = BoundaryConditions::new();
        for s in &self.supports {
            for (i, j) in s.nodes.nodes() {
                let node = mesh
                    .node_id(i, j)
                    .ok_or_else(|| invalid("supports", format!("node ({i}, {j}) is not on the mesh")))?;
                bc.fix_node(node, s.fix_x, s.fix_y);
            }
        }
        for l in &self.loads {
            for (i, j) in l.nodes.nodes() {
                let node =
                    mesh.node_id(i, j).ok_or_else(|| invalid("loads", format!("node ({i}, {j}) is not on the mesh")))?;
                bc.add_node_load(node, l.fx, l.fy);
            }
        }
        bc.validate(mesh).map_err(|e| invalid("supports", e.to_string()))?;
        Ok(bc)
    }

    pub fn settings(&self) -> OptimizationSettings {
        let o = &self.optimization;
        OptimizationSettings {
            penal: o.penal,
            volume_fraction: o.volume_fraction,
            stress: self.stress.as_ref().map(|s| StressSettings {
                p_norm: s.p_norm,
                n_clusters: s.n_clusters,
                n_s: s.n_s,
                limits: s.limits(),
                eps_rel: s.eps_rel,
            }),
            r_min: o.r_min,
            move_rho: o.move_rho,
            move_theta: o.move_theta,
            tol: o.tol,
            max_iter: o.max_iter,
            rho0: o.rho0,
            theta0: o.theta0,
            load_exclusion: usize::try_from(o.load_exclusion_layers).ok(),
            mma: MmaSettings::default(),
        }
    }

    /// Finite element model and optimization settings ready to run.
    pub fn build_problem(&self) -> Result<Problem, ConfigError> {
        self.validate()?;
        let mesh = self.mesh()?;
        let bc = self.boundary_conditions(&mesh)?;
        let model = FeModel::new(mesh, bc, self.material()?)?;
        Ok(Problem { model, settings: self.settings() })
    }

    /// Active elements touching the end nodes of each support range. Stresses
    /// there are dominated by the clamping singularity.
    pub fn support_end_elements(&self, mesh: &StructuredMesh) -> Vec<usize> {
        let mut out = Vec::new();
        for s in &self.supports {
            let NodeRange { i, j } = s.nodes;
            for (ni, nj) in [(i[0], j[0]), (i[1], j[1])] {
                for (ci, cj) in [(ni.wrapping_sub(1), nj.wrapping_sub(1)), (ni, nj.wrapping_sub(1)), (ni.wrapping_sub(1), nj), (ni, nj)] {
                    if let Some(e) = mesh.element_at(ci, cj) {
                        if !out.contains(&e) {
                            out.push(e);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn parse_mask(rows: &[String], nelx: usize, nely: usize) -> Result<Vec<bool>, ConfigError> {
    if rows.len() != nely {
        return Err(invalid("geometry.mask", format!("expected {nely} rows, found {}", rows.len())));
    }
    let mut mask = vec![false; nelx * nely];
    for (r, row) in rows.iter().enumerate() {
        let j = nely - 1 - r;
        let cells: Vec<char> = row.chars().collect();
        if cells.len() != nelx {
            return Err(invalid("geometry.mask", format!("row {r} has {} cells, expected {nelx}", cells.len())));
        }
        for (i, c) in cells.into_iter().enumerate() {
            mask[i * nely + j] = match c {
                '#' => true,
                '.' => false,
                other => return Err(invalid("geometry.mask", format!("unexpected character {other:?}"))),
            };
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[geometry]
kind = "cantilever"
nelx = 6
nely = 4
elem_size = 0.5

[material]
e1 = 38.6e9
e2 = 8.27e9
g12 = 4.14e9
nu12 = 0.27
nu21 = 0.0578

[[supports]]
nodes = { i = [0, 0], j = [0, 4] }

[[loads]]
nodes = { i = [6, 6], j = [0, 1] }
fy = -1000.0

[optimization]
volume_fraction = 0.4
max_iter = 20

[stress]
n_s = 6
sigma1_t = 60e3
sigma1_c = 50e3
sigma2_t = 20e3
sigma2_c = 25e3
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = parse_config(SMALL).unwrap();
        assert_eq!(cfg.geometry.thickness, 1.0);
        assert_eq!(cfg.optimization.penal, 3.0);
        assert_eq!(cfg.optimization.r_min, 1.5);
        let s = cfg.stress.as_ref().unwrap();
        assert_eq!(s.p_norm, 8);
        assert_eq!(s.limits(), [50e3, 20e3]);
        let problem = cfg.build_problem().unwrap();
        assert_eq!(problem.model.n_elements(), 24);
        assert_eq!(problem.model.bc().fixed_dofs().len(), 10);
        assert_eq!(problem.model.force().iter().sum::<f64>(), -2000.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = parse_config(SMALL).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn missing_material_is_named() {
        let text = SMALL.replace("[material]", "[unused]");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("material"), "{err}");
    }

    #[test]
    fn invariant_violations_name_the_key() {
        let text = SMALL.replace("n_s = 6", "n_s = 0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("stress.n_s"), "{err}");
        let text = SMALL.replace("[stress]", "[stress]\np_norm = 7");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("stress.p_norm"), "{err}");
        let text = SMALL.replace("volume_fraction = 0.4", "volume_fraction = 1.5");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("optimization.volume_fraction"), "{err}");
    }

    #[test]
    fn off_mesh_nodes_are_rejected() {
        let text = SMALL.replace("i = [6, 6], j = [0, 1]", "i = [7, 7], j = [0, 1]");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("loads"), "{err}");
    }

    #[test]
    fn custom_mask_rows_are_top_first() {
        let mut cfg = parse_config(SMALL).unwrap();
        cfg.geometry.kind = GeometryKind::Custom;
        cfg.geometry.mask = Some(vec!["##....".into(), "######".into(), "######".into(), "######".into()]);
        let mesh = cfg.mesh().unwrap();
        assert!(mesh.is_active(0, 3) && mesh.is_active(1, 3));
        assert!(!mesh.is_active(2, 3));
        assert!(mesh.is_active(5, 0));
        cfg.geometry.mask = Some(vec!["#####".into(); 4]);
        assert!(cfg.mesh().is_err());
    }
}
