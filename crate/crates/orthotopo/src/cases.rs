//! Built-in case studies.
//!
//! Every preset is a complete [`ProblemConfig`]; nothing is merged with user
//! input. Geometry and load layout follow the usual benchmark shapes and
//! every preset carries 60 kN. Physical dimensions are not part of the
//! benchmark definitions, so the out-of-plane thickness is calibrated per
//! geometry: the unconstrained cantilever peaks near 89 kPa along the
//! fibers (clamped-edge corner elements aside), and the unconstrained
//! L-bracket sits at about one and a half times its stress limits.

use orthotopo_core::OrthotropicMaterial;

use crate::config::{
    GeometryConfig, GeometryKind, LoadConfig, MaterialConfig, NodeRange, OptimizationConfig,
    ProblemConfig, StressConfig, SupportConfig,
};

/// Element edge length for the presets (m).
pub const PRESET_ELEM_SIZE: f64 = 1.0;
/// Calibrated cantilever thickness (m).
pub const CANTILEVER_THICKNESS: f64 = 0.54;
/// Calibrated L-bracket thickness (m).
pub const LBRACKET_THICKNESS: f64 = 21.0;
/// Load per loaded node (N); six nodes carry 60 kN.
pub const NODE_LOAD: f64 = 10.0e3;
const LOADED_NODES: usize = 6;

pub const CANTILEVER_NELX: usize = 60;
pub const CANTILEVER_NELY: usize = 40;
/// L-bracket bounding box and removed top-right block, in elements.
pub const LBRACKET_SIZE: usize = 50;
pub const LBRACKET_CUT: usize = 30;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CaseError {
    #[error("unknown case study {0}; expected 1 to 4")]
    UnknownCase(u32),
    #[error("case {case} has no variant {variant:?}; expected one of {expected}")]
    UnknownVariant { case: u32, variant: String, expected: &'static str },
}

/// Variant names accepted by each case, default first.
pub fn variants(case: u32) -> Option<&'static [&'static str]> {
    match case {
        1 => Some(&["constrained", "unconstrained"]),
        2 => Some(&["n40", "n80"]),
        3 => Some(&["default"]),
        4 => Some(&["p8", "p4", "p6", "p10"]),
        _ => None,
    }
}

/// Preset for case study `case` (1 to 4). `variant` defaults to the first
/// entry of [`variants`].
pub fn build_case_study(case: u32, variant: Option<&str>) -> Result<ProblemConfig, CaseError> {
    let names = variants(case).ok_or(CaseError::UnknownCase(case))?;
    let variant = variant.unwrap_or(names[0]);
    if !names.contains(&variant) {
        return Err(CaseError::UnknownVariant {
            case,
            variant: variant.to_string(),
            expected: match case {
                1 => "constrained, unconstrained",
                2 => "n40, n80",
                3 => "default",
                _ => "p4, p6, p8, p10",
            },
        });
    }
    let mut cfg = match case {
        1 | 4 => cantilever(),
        _ => lbracket(),
    };
    cfg.name = Some(format!("case{case}-{variant}"));
    match (case, variant) {
        (1, "constrained") => cfg.stress = Some(limits(240, 1, 8, 60e3, 20e3)),
        (1, _) => cfg.stress = None,
        (2, "n40") => cfg.stress = Some(limits(40, 1, 8, 5e3, 4e3)),
        (2, _) => cfg.stress = Some(limits(80, 1, 8, 5e3, 4e3)),
        (3, _) => cfg.stress = Some(limits(40, 2, 8, 5e3, 4e3)),
        (4, p) => {
            let p_norm = p[1..].parse().expect("variant names carry the exponent");
            cfg.stress = Some(limits(120, 1, p_norm, 60e3, 25e3));
            cfg.optimization.rho0 = 0.25;
            cfg.optimization.theta0 = 0.1;
        }
        _ => unreachable!("case id checked above"),
    }
    Ok(cfg)
}

fn limits(n_s: usize, n_clusters: usize, p_norm: u32, sigma1: f64, sigma2: f64) -> StressConfig {
    StressConfig {
        p_norm,
        n_clusters,
        n_s,
        sigma1_t: sigma1,
        sigma1_c: sigma1,
        sigma2_t: sigma2,
        sigma2_c: sigma2,
        eps_rel: 1e-6,
    }
}

fn base_optimization() -> OptimizationConfig {
    OptimizationConfig { volume_fraction: 0.25, penal: 3.0, rho0: 1.0, theta0: -0.1, ..Default::default() }
}

/// Clamped left edge, 60 kN downward over the six bottom nodes of the
/// right edge.
pub fn cantilever() -> ProblemConfig {
    let (nx, ny) = (CANTILEVER_NELX, CANTILEVER_NELY);
    ProblemConfig {
        name: Some("cantilever".into()),
        output_dir: None,
        geometry: GeometryConfig {
            kind: GeometryKind::Cantilever,
            nelx: nx,
            nely: ny,
            elem_size: PRESET_ELEM_SIZE,
            thickness: CANTILEVER_THICKNESS,
            cut_x: None,
            cut_y: None,
            mask: None,
        },
        material: MaterialConfig::from(OrthotropicMaterial::EPOXY_GLASS),
        supports: vec![SupportConfig { nodes: NodeRange { i: [0, 0], j: [0, ny] }, fix_x: true, fix_y: true }],
        loads: vec![LoadConfig {
            nodes: NodeRange { i: [nx, nx], j: [0, LOADED_NODES - 1] },
            fx: 0.0,
            fy: -NODE_LOAD,
        }],
        optimization: base_optimization(),
        stress: None,
    }
}

/// Top edge of the vertical arm clamped, 60 kN downward over the six
/// right-most nodes of the horizontal arm's top edge.
pub fn lbracket() -> ProblemConfig {
    let (n, cut) = (LBRACKET_SIZE, LBRACKET_CUT);
    let arm = n - cut;
    ProblemConfig {
        name: Some("lbracket".into()),
        output_dir: None,
        geometry: GeometryConfig {
            kind: GeometryKind::Lbracket,
            nelx: n,
            nely: n,
            elem_size: PRESET_ELEM_SIZE,
            thickness: LBRACKET_THICKNESS,
            cut_x: Some(cut),
            cut_y: Some(cut),
            mask: None,
        },
        material: MaterialConfig::from(OrthotropicMaterial::EPOXY_GLASS),
        supports: vec![SupportConfig { nodes: NodeRange { i: [0, arm], j: [n, n] }, fix_x: true, fix_y: true }],
        loads: vec![LoadConfig {
            nodes: NodeRange { i: [n - (LOADED_NODES - 1), n], j: [arm, arm] },
            fx: 0.0,
            fy: -NODE_LOAD,
        }],
        optimization: base_optimization(),
        stress: None,
    }
}
