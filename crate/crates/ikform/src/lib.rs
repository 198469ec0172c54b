//! Two ways to pose inverse kinematics as a nonlinear program.
//!
//! The classical formulation optimizes directly over joint angles and carries
//! the pose target as a nonlinear equality constraint. The alternative
//! implemented here optimizes over the task-space pose plus the self-motion
//! parameters of an analytic IK map; the pose target then becomes a set of
//! linear rows and reachability is expressed through smooth "probe"
//! inequalities derived from the IK map's domain clipping.
//!
//! The crate provides the building blocks (forward-mode autodiff, DH
//! kinematics, analytic IK for a planar chain and a spherical-revolute-
//! spherical arm, collision and stability constraints), both program
//! builders, an augmented Lagrangian solver, a grid-sampling baseline, and a
//! benchmark harness behind the `ikform` binary.

pub mod analytic_ik;
pub mod autodiff;
pub mod bench;
pub mod constraints;
pub mod formulation;
pub mod geometry;
pub mod kinematics;
pub mod sampling;
pub mod solver;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A chain or arm description that cannot be built.
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    /// A configuration or target where the analytic IK map is undefined.
    #[error("singular configuration: {0}")]
    Singular(String),

    /// Degenerate geometry handed to a constraint helper.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A problem description that the requested operation cannot use.
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    /// File I/O, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A result table that does not match the expected layout.
    #[error("malformed table: {0}")]
    Table(String),

    /// Malformed JSON input, annotated with the path involved.
    #[error("parse error on {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
