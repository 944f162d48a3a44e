//! Orthotropic plane-stress constitutive law and the stress/strain rotation
//! matrices between principal material axes and global axes.
//!
//! Voigt ordering is `[11, 22, 12]` with engineering shear strain, so the
//! strain rotation carries the factor of two on the shear row.

use crate::error::{Error, Result};
use crate::math::{sin_cos, Matrix3};

/// Relative tolerance on `ν21·E1 = ν12·E2`.
pub const RECIPROCITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthotropicMaterial {
    /// Modulus along the fibers (Pa).
    pub e1: f64,
    /// Modulus transverse to the fibers (Pa).
    pub e2: f64,
    /// In-plane shear modulus (Pa).
    pub g12: f64,
    pub nu12: f64,
    pub nu21: f64,
}

impl OrthotropicMaterial {
    /// Epoxy glass, the material used in all built-in case studies.
    pub const EPOXY_GLASS: OrthotropicMaterial = OrthotropicMaterial {
        e1: 38.6e9,
        e2: 8.27e9,
        g12: 4.14e9,
        nu12: 0.27,
        nu21: 0.0578,
    };

    pub fn new(e1: f64, e2: f64, g12: f64, nu12: f64, nu21: f64) -> Result<Self> {
        let mat = OrthotropicMaterial { e1, e2, g12, nu12, nu21 };
        mat.validate()?;
        Ok(mat)
    }

    /// Isotropic material written in orthotropic form.
    pub fn isotropic(e: f64, nu: f64) -> Result<Self> {
        Self::new(e, e, e / (2.0 * (1.0 + nu)), nu, nu)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.e1, self.e2, self.g12, self.nu12, self.nu21];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Constitutive("non-finite material constant"));
        }
        if self.e1 <= 0.0 || self.e2 <= 0.0 || self.g12 <= 0.0 {
            return Err(Error::Constitutive("moduli must be positive"));
        }
        if 1.0 - self.nu12 * self.nu21 <= 0.0 {
            return Err(Error::Constitutive("1 - nu12*nu21 must be positive"));
        }
        let lhs = self.nu21 * self.e1;
        let rhs = self.nu12 * self.e2;
        let mismatch = if rhs != 0.0 {
            (lhs - rhs).abs() / rhs.abs()
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if mismatch > RECIPROCITY_TOL {
            return Err(Error::Constitutive(
                "Poisson ratios violate reciprocity nu21*E1 = nu12*E2",
            ));
        }
        Ok(())
    }
}

/// Plane-stress constitutive matrix in principal material axes, entries as
/// given by classical laminate theory (not symmetrized).
pub fn constitutive_matrix(mat: &OrthotropicMaterial) -> Result<Matrix3> {
    mat.validate()?;
    let d = 1.0 - mat.nu12 * mat.nu21;
    Ok(Matrix3([
        [mat.e1 / d, mat.nu12 * mat.e2 / d, 0.0],
        [mat.nu21 * mat.e1 / d, mat.e2 / d, 0.0],
        [0.0, 0.0, mat.g12],
    ]))
}

/// Constitutive matrix with its off-diagonal pair replaced by their mean.
///
/// The finite element model uses this form so the global stiffness stays
/// exactly symmetric; it differs from [`constitutive_matrix`] by at most the
/// reciprocity tolerance in the coupling terms.
pub fn symmetric_constitutive(mat: &OrthotropicMaterial) -> Result<Matrix3> {
    let mut e = constitutive_matrix(mat)?;
    let mean = 0.5 * (e.0[0][1] + e.0[1][0]);
    e.0[0][1] = mean;
    e.0[1][0] = mean;
    Ok(e)
}

/// Stress (`T1`) and strain (`T2`) transformation matrices for a fiber angle
/// `theta` in radians.
pub fn transform_matrices(theta: f64) -> (Matrix3, Matrix3) {
    let (s, c) = sin_cos(theta);
    let (c2, s2, cs) = (c * c, s * s, c * s);
    let t1 = Matrix3([
        [c2, s2, 2.0 * cs],
        [s2, c2, -2.0 * cs],
        [-cs, cs, c2 - s2],
    ]);
    let t2 = Matrix3([[c2, s2, cs], [s2, c2, -cs], [-2.0 * cs, 2.0 * cs, c2 - s2]]);
    (t1, t2)
}

/// Analytic inverse of `T1(theta)`, which is `T1(-theta)`.
pub fn t1_inverse(theta: f64) -> Matrix3 {
    transform_matrices(-theta).0
}

/// `E' = T1⁻¹ E T2` for the literal constitutive matrix.
pub fn transformed_constitutive(mat: &OrthotropicMaterial, theta: f64) -> Result<Matrix3> {
    let e = constitutive_matrix(mat)?;
    Ok(rotate_constitutive(&e, theta))
}

/// `T1(θ)⁻¹ E T2(θ)` for an arbitrary principal-axes matrix `e`.
pub fn rotate_constitutive(e: &Matrix3, theta: f64) -> Matrix3 {
    let (_, t2) = transform_matrices(theta);
    t1_inverse(theta) * *e * t2
}

/// Derivatives `d(T1⁻¹)/dθ` and `dT2/dθ`.
pub fn transform_derivatives(theta: f64) -> (Matrix3, Matrix3) {
    let (s, c) = sin_cos(theta);
    let cs = c * s;
    let c2ms2 = c * c - s * s;
    let dt1inv = Matrix3([
        [-2.0 * cs, 2.0 * cs, -2.0 * c2ms2],
        [2.0 * cs, -2.0 * cs, 2.0 * c2ms2],
        [c2ms2, -c2ms2, -4.0 * cs],
    ]);
    let dt2 = Matrix3([
        [-2.0 * cs, 2.0 * cs, c2ms2],
        [2.0 * cs, -2.0 * cs, -c2ms2],
        [-2.0 * c2ms2, 2.0 * c2ms2, -4.0 * cs],
    ]);
    (dt1inv, dt2)
}

/// `dE'/dθ` for an arbitrary principal-axes matrix `e`.
pub fn rotate_constitutive_dtheta(e: &Matrix3, theta: f64) -> Matrix3 {
    let (_, t2) = transform_matrices(theta);
    let (dt1inv, dt2) = transform_derivatives(theta);
    dt1inv * *e * t2 + t1_inverse(theta) * *e * dt2
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn epoxy_glass_entries() {
        let e = constitutive_matrix(&OrthotropicMaterial::EPOXY_GLASS).unwrap();
        // Closed-form values evaluated independently.
        assert!(rel(e.get(0, 0), 39_211_941_559.985_13) < 1e-12);
        assert!(rel(e.get(1, 1), 8_401_107_686.556_399) < 1e-12);
        assert!(rel(e.get(0, 1), 2_268_299_075.370_228) < 1e-12);
        assert!(rel(e.get(1, 0), 2_266_450_222.167_14) < 1e-12);
        assert!(rel(e.get(0, 1), e.get(1, 0)) < RECIPROCITY_TOL);
        assert_eq!(e.get(2, 2), 4.14e9);
        assert_eq!(e.get(0, 2), 0.0);
    }

    #[test]
    fn decoupled_and_identity() {
        let m = OrthotropicMaterial::new(3.0, 2.0, 1.5, 0.0, 0.0).unwrap();
        let e = constitutive_matrix(&m).unwrap();
        assert_eq!(e, Matrix3([[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.5]]));
        let unit = OrthotropicMaterial::new(1.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(constitutive_matrix(&unit).unwrap(), Matrix3::IDENTITY);
    }

    #[test]
    fn rejects_bad_materials() {
        assert!(OrthotropicMaterial::new(-1.0, 1.0, 1.0, 0.2, 0.2).is_err());
        assert!(OrthotropicMaterial::new(1.0, 1.0, 0.0, 0.2, 0.2).is_err());
        assert!(OrthotropicMaterial::new(1.0, 1.0, 1.0, 1.2, 1.2).is_err());
        // reciprocity broken by 10 %
        assert!(OrthotropicMaterial::new(38.6e9, 8.27e9, 4.14e9, 0.27, 0.0636).is_err());
    }

    #[test]
    fn transforms_at_special_angles() {
        let (t1, t2) = transform_matrices(0.0);
        assert_eq!(t1, Matrix3::IDENTITY);
        assert_eq!(t2, Matrix3::IDENTITY);

        let (t1, _) = transform_matrices(PI / 2.0);
        let want = Matrix3([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]);
        assert!((t1 - want).max_abs() < 1e-15);

        let (t1, _) = transform_matrices(PI / 4.0);
        let r = t1.row(0);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[1] - 0.5).abs() < 1e-15 && (r[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn determinants_and_inverse() {
        for k in 0..32 {
            let th = -PI + 2.0 * PI * k as f64 / 31.0;
            let (t1, t2) = transform_matrices(th);
            assert!((t1.det() - 1.0).abs() < 1e-12);
            assert!((t2.det() - 1.0).abs() < 1e-12);
            let numeric = t1.inverse().unwrap();
            assert!((numeric - t1_inverse(th)).max_abs() < 1e-12);
            // T1⁻¹ = T2ᵀ for these rotations
            assert!((t1_inverse(th) - t2.transpose()).max_abs() < 1e-15);
        }
    }

    #[test]
    fn transformed_constitutive_properties() {
        let mat = OrthotropicMaterial::EPOXY_GLASS;
        let e = constitutive_matrix(&mat).unwrap();
        assert!((transformed_constitutive(&mat, 0.0).unwrap() - e).max_abs() < 1e-6);

        let quarter = transformed_constitutive(&mat, PI / 2.0).unwrap();
        assert!(rel(quarter.get(0, 0), e.get(1, 1)) < 1e-12);
        assert!(rel(quarter.get(1, 1), e.get(0, 0)) < 1e-12);

        let es = symmetric_constitutive(&mat).unwrap();
        for k in 0..32 {
            let th = -PI + 0.2 * k as f64;
            let ep = rotate_constitutive(&es, th);
            assert!((ep - ep.transpose()).max_abs() <= 1e-10 * ep.max_abs());
            let shifted = rotate_constitutive(&es, th + PI);
            assert!((ep - shifted).max_abs() <= 1e-15 * ep.max_abs() * 64.0);
        }
    }

    #[test]
    fn isotropic_is_rotation_invariant() {
        let iso = OrthotropicMaterial::isotropic(70e9, 0.3).unwrap();
        let e = constitutive_matrix(&iso).unwrap();
        for k in 0..32 {
            let th = -PI + 2.0 * PI * k as f64 / 32.0;
            let ep = transformed_constitutive(&iso, th).unwrap();
            assert!((ep - e).max_abs() < 1e-12 * e.max_abs());
        }
    }

    #[test]
    fn derivative_at_zero() {
        let (_, dt2) = transform_derivatives(0.0);
        let want = Matrix3([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [-2.0, 2.0, 0.0]]);
        assert_eq!(dt2, want);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for k in 0..16 {
            let th = -3.0 + 0.4 * k as f64;
            let (dt1inv, dt2) = transform_derivatives(th);
            let fd_t1inv = (t1_inverse(th + h) - t1_inverse(th - h)).scale(0.5 / h);
            let fd_t2 = (transform_matrices(th + h).1 - transform_matrices(th - h).1).scale(0.5 / h);
            for r in 0..3 {
                for c in 0..3 {
                    let pairs = [(dt1inv.get(r, c), fd_t1inv.get(r, c)), (dt2.get(r, c), fd_t2.get(r, c))];
                    for (a, f) in pairs {
                        // entries are O(1); use a unit floor for the relative measure
                        assert!((a - f).abs() / a.abs().max(1.0) < 1e-6, "{a} vs {f}");
                    }
                }
            }
            let (p1, p2) = transform_derivatives(th + PI);
            assert!((p1 - dt1inv).max_abs() < 1e-12 && (p2 - dt2).max_abs() < 1e-12);
        }
    }
}
