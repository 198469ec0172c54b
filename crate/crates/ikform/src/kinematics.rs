//! Forward kinematics for revolute chains.
//!
//! Spatial chains use classic (distal) Denavit-Hartenberg parameters: the
//! transform of link `i` at joint angle `theta` is
//! `Rz(theta) * Tz(d) * Tx(a) * Rx(alpha)`. Planar chains are kept separate
//! and cheaper: unit total length split over `n` links, each a pure rotation
//! in the plane.
//!
//! [`scaled_arm`] builds the redundancy-scaling family used by the
//! benchmarks: a 7-DoF spherical-revolute-spherical wrist/elbow/shoulder arm
//! preceded by `n_extra` alternating-axis links, with the common link length
//! chosen so the total arm length stays constant as links are added.

use crate::autodiff::{DiffScalar, Scalar};
use crate::geometry::{rpy_from_rotation_smooth, Mat3, Pose2, Pose3, Vec3};
use serde::{Deserialize, Serialize};

/// Joint box for planar chains, `[-2*pi, 2*pi]` per joint.
pub const PLANAR_JOINT_LIMIT: f64 = 2.0 * std::f64::consts::PI;

/// One DH link: offset `d` along the previous z, twist `alpha` about the new
/// x, translation `a` along the new x. The joint variable is the rotation
/// about the previous z.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DHLink {
    pub d: f64,
    pub alpha: f64,
    pub a: f64,
}

/// A serial chain of DH links with joint limits and a base pose.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KinematicChain {
    pub links: Vec<DHLink>,
    pub q_lb: Vec<f64>,
    pub q_ub: Vec<f64>,
    pub base: Pose3<f64>,
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn validate(&self) -> crate::Result<()> {
        let n = self.links.len();
        if self.q_lb.len() != n || self.q_ub.len() != n {
            return Err(crate::Error::InvalidChain(format!(
                "{} links but {} lower and {} upper joint bounds",
                n,
                self.q_lb.len(),
                self.q_ub.len()
            )));
        }
        // NaN bounds must fail too, so the comparison is spelled to reject them.
        if self
            .q_lb
            .iter()
            .zip(&self.q_ub)
            .any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi)
        {
            return Err(crate::Error::InvalidChain(
                "joint lower bound above upper bound".into(),
            ));
        }
        self.base
            .rotation
            .orthonormal_error()
            .le(&1e-9)
            .then_some(())
            .ok_or_else(|| crate::Error::InvalidChain("base rotation is not orthonormal".into()))
    }
}

/// Transform contributed by one link at joint angle `theta`.
pub fn dh_transform<T: Scalar>(link: &DHLink, theta: &T) -> Pose3<T> {
    let (st, ct) = (theta.sin(), theta.cos());
    let (sa, ca) = (link.alpha.sin(), link.alpha.cos());
    let c = |v: f64| T::constant(v);
    let rotation = Mat3 {
        m: [
            [ct.clone(), st.clone() * c(-ca), st.clone() * c(sa)],
            [st.clone(), ct.clone() * c(ca), ct.clone() * c(-sa)],
            [c(0.0), c(sa), c(ca)],
        ],
    };
    let position = Vec3::new(ct * c(link.a), st * c(link.a), c(link.d));
    Pose3::new(rotation, position)
}

/// Pose of the last link in the world frame.
pub fn forward_kinematics<T: Scalar>(chain: &KinematicChain, q: &[T]) -> Pose3<T> {
    assert_eq!(q.len(), chain.dof(), "joint vector length mismatch");
    let mut pose = Pose3::from_f64(&chain.base);
    for (link, qi) in chain.links.iter().zip(q) {
        pose = pose.compose(&dh_transform(link, qi));
    }
    pose
}

/// World pose after each link; index 0 is the base, index `i+1` follows
/// link `i`.
pub fn link_poses<T: Scalar>(chain: &KinematicChain, q: &[T]) -> Vec<Pose3<T>> {
    assert_eq!(q.len(), chain.dof(), "joint vector length mismatch");
    let mut out = Vec::with_capacity(chain.dof() + 1);
    let mut pose = Pose3::from_f64(&chain.base);
    out.push(pose.clone());
    for (link, qi) in chain.links.iter().zip(q) {
        pose = pose.compose(&dh_transform(link, qi));
        out.push(pose.clone());
    }
    out
}

/// Task-space Jacobian of `(position, Euler angles)` with respect to the
/// joints, as six rows of `dof` entries. Euler rows are undefined at gimbal
/// lock, like the extraction they differentiate.
pub fn jacobian(chain: &KinematicChain, q: &[f64]) -> Vec<Vec<f64>> {
    let vars = DiffScalar::seed(q);
    let pose = forward_kinematics(chain, &vars);
    let rpy = rpy_from_rotation_smooth(&pose.rotation);
    [
        pose.position.x,
        pose.position.y,
        pose.position.z,
        rpy.roll,
        rpy.pitch,
        rpy.yaw,
    ]
    .iter()
    .map(|s| s.gradient(q.len()))
    .collect()
}

/// Planar chain of `n` equal links with total length 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanarChain {
    pub n: usize,
    pub link_length: f64,
    pub base: Pose2<f64>,
}

impl PlanarChain {
    /// `n` links of length `1/n`, based at the origin. Needs `n >= 3` so the
    /// last three links can form the analytic sub-chain.
    pub fn new(n: usize) -> crate::Result<Self> {
        if n < 3 {
            return Err(crate::Error::InvalidChain(format!(
                "planar chain needs at least 3 links, got {n}"
            )));
        }
        Ok(PlanarChain {
            n,
            link_length: 1.0 / n as f64,
            base: Pose2::new(0.0, 0.0, 0.0),
        })
    }

    /// Joint box, identical for every joint.
    pub fn limits(&self) -> (f64, f64) {
        (-PLANAR_JOINT_LIMIT, PLANAR_JOINT_LIMIT)
    }

    /// Equivalent spatial chain (each link `a = link_length`, no twist),
    /// used where planar problems meet 3D machinery such as collision
    /// spheres.
    pub fn to_spatial(&self) -> KinematicChain {
        KinematicChain {
            links: (0..self.n)
                .map(|_| DHLink {
                    d: 0.0,
                    alpha: 0.0,
                    a: self.link_length,
                })
                .collect(),
            q_lb: vec![-PLANAR_JOINT_LIMIT; self.n],
            q_ub: vec![PLANAR_JOINT_LIMIT; self.n],
            base: self.base.to_pose3(),
        }
    }
}

/// Tip pose of a planar chain: cumulative heading sums.
///
/// `x = sum_i l*cos(q_1 + .. + q_i)`, likewise for `y`; the heading is the
/// plain (unwrapped) sum of joint angles.
pub fn planar_fk<T: Scalar>(chain: &PlanarChain, q: &[T]) -> Pose2<T> {
    assert_eq!(q.len(), chain.n, "joint vector length mismatch");
    let l = T::constant(chain.link_length);
    let mut heading = T::constant(chain.base.theta);
    let mut x = T::constant(chain.base.x);
    let mut y = T::constant(chain.base.y);
    for qi in q {
        heading = heading + qi.clone();
        x = x + l.clone() * heading.cos();
        y = y + l.clone() * heading.sin();
    }
    Pose2::new(x, y, heading)
}

/// Pose after each planar link; index 0 is the base.
pub fn planar_link_poses<T: Scalar>(chain: &PlanarChain, q: &[T]) -> Vec<Pose2<T>> {
    let l = T::constant(chain.link_length);
    let mut out = Vec::with_capacity(chain.n + 1);
    let mut pose: Pose2<T> = Pose2::from_f64(&chain.base);
    out.push(pose.clone());
    for qi in q {
        let heading = pose.theta.clone() + qi.clone();
        pose = Pose2::new(
            pose.x + l.clone() * heading.cos(),
            pose.y + l.clone() * heading.sin(),
            heading,
        );
        out.push(pose.clone());
    }
    out
}

/// Planar Jacobian of `(x, y, theta)`, three rows of `n` entries.
pub fn planar_jacobian(chain: &PlanarChain, q: &[f64]) -> Vec<Vec<f64>> {
    let vars = DiffScalar::seed(q);
    let pose = planar_fk(chain, &vars);
    [pose.x, pose.y, pose.theta]
        .iter()
        .map(|s| s.gradient(q.len()))
        .collect()
}

/// Segment lengths of the wrist-partitioned arm: base-to-shoulder,
/// shoulder-to-elbow, elbow-to-wrist, wrist-to-flange.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SrsGeometry {
    pub d_bs: f64,
    pub d_se: f64,
    pub d_ew: f64,
    pub d_wf: f64,
}

/// A spatial arm whose last seven joints form the analytic
/// spherical-revolute-spherical structure, preceded by `prefix` redundancy
/// links.
#[derive(Clone, Debug)]
pub struct SpatialArm {
    pub chain: KinematicChain,
    pub srs: SrsGeometry,
    pub prefix: usize,
}

impl SpatialArm {
    pub fn dof(&self) -> usize {
        self.chain.dof()
    }
}

/// The redundancy-scaling arm family: `n_extra` (even, possibly zero)
/// alternating-twist links followed by the 7-DoF wrist-partitioned arm.
///
/// The common link length is `total_length / (n_extra/2 + 4)` so the fully
/// stretched arm always spans `total_length`. Joint limits are `[-pi, pi]`.
pub fn scaled_arm(n_extra: usize, total_length: f64) -> crate::Result<SpatialArm> {
    if !n_extra.is_multiple_of(2) {
        return Err(crate::Error::InvalidChain(format!(
            "prefix link count must be even, got {n_extra}"
        )));
    }
    if total_length.is_nan() || total_length <= 0.0 {
        return Err(crate::Error::InvalidChain(format!(
            "total length must be positive, got {total_length}"
        )));
    }
    let l = total_length / (n_extra as f64 / 2.0 + 4.0);
    let half = std::f64::consts::FRAC_PI_2;
    let mut links = Vec::with_capacity(n_extra + 7);
    for i in 0..n_extra {
        if i % 2 == 0 {
            links.push(DHLink {
                d: l,
                alpha: -half,
                a: 0.0,
            });
        } else {
            links.push(DHLink {
                d: 0.0,
                alpha: half,
                a: 0.0,
            });
        }
    }
    links.extend_from_slice(&[
        DHLink {
            d: l,
            alpha: -half,
            a: 0.0,
        },
        DHLink {
            d: 0.0,
            alpha: half,
            a: 0.0,
        },
        DHLink {
            d: l,
            alpha: half,
            a: 0.0,
        },
        DHLink {
            d: 0.0,
            alpha: -half,
            a: 0.0,
        },
        DHLink {
            d: l,
            alpha: -half,
            a: 0.0,
        },
        DHLink {
            d: 0.0,
            alpha: half,
            a: 0.0,
        },
        DHLink {
            d: l,
            alpha: 0.0,
            a: 0.0,
        },
    ]);
    let dof = links.len();
    let chain = KinematicChain {
        links,
        q_lb: vec![-std::f64::consts::PI; dof],
        q_ub: vec![std::f64::consts::PI; dof],
        base: Pose3::identity(),
    };
    Ok(SpatialArm {
        chain,
        srs: SrsGeometry {
            d_bs: l,
            d_se: l,
            d_ew: l,
            d_wf: l,
        },
        prefix: n_extra,
    })
}

/// Reads a chain from a JSON file.
pub fn load_chain(path: &str) -> crate::Result<KinematicChain> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Io {
        path: path.into(),
        source,
    })?;
    let chain: KinematicChain =
        serde_json::from_str(&text).map_err(|source| crate::Error::Parse {
            path: path.into(),
            source,
        })?;
    chain.validate()?;
    Ok(chain)
}
