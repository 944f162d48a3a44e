use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Material parameters do not describe a valid orthotropic law.
    Constitutive(&'static str),
    /// Mesh construction failed (empty, disconnected, bad sizes).
    Mesh(&'static str),
    /// Boundary conditions are inconsistent with the mesh.
    Boundary(&'static str),
    /// Design vectors have wrong length or leave their bounds.
    Design(&'static str),
    /// A non-positive pivot was met while factorizing the reduced stiffness.
    Singular { pivot: usize },
    /// Invalid optimizer or clustering settings.
    Config(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Constitutive(msg) => write!(f, "invalid material: {msg}"),
            Error::Mesh(msg) => write!(f, "invalid mesh: {msg}"),
            Error::Boundary(msg) => write!(f, "invalid boundary conditions: {msg}"),
            Error::Design(msg) => write!(f, "invalid design: {msg}"),
            Error::Singular { pivot } => {
                write!(f, "stiffness matrix is singular (non-positive pivot at reduced dof {pivot}); the model may be under-constrained")
            }
            Error::Config(msg) => write!(f, "invalid settings: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
