//! Closed-form IK maps with self-motion parameters and probing functions.
//!
//! Each map takes a task pose, a continuous self-motion parameter (free
//! prefix joints for the planar chain, the elbow circle angle `psi` for the
//! spatial arm), and a discrete branch tuple of signs. Every `arccos` inside
//! a map is clipped slightly inside `[-1, 1]`; for each clip site with
//! argument `f` the map reports the pre-clip probe pair `(1 - f, 1 + f)`.
//! All probes nonnegative means no clipping fired, which in turn means the
//! returned joints reproduce the requested pose exactly. That equivalence is
//! what lets reachability enter a nonlinear program as smooth inequalities.
//!
//! Angles are extracted with `atan2` wherever two-argument data exists, so
//! branch choices reduce to explicit sign factors rather than case analysis.

use crate::autodiff::Scalar;
use crate::geometry::{Mat3, Pose2, Pose3, Vec3};
use crate::kinematics::{planar_link_poses, PlanarChain, SrsGeometry};
use serde::{Deserialize, Serialize};

/// Clip margin used inside the IK maps.
///
/// Deliberately below [`crate::autodiff::DEFAULT_CLIP_EPS`] and exactly
/// equal to the probe margin imposed by the change-of-variables
/// formulation: a satisfied probe (`>= 1e-9`) guarantees the clip never
/// actually engaged, so the solution is exact rather than merely near the
/// boundary. Pushing the clip any lower buys no extra precision but makes
/// the arccos slope near full stretch (`~1/sqrt(2*eps)`) so steep that
/// line-search methods cannot resolve steps across it.
pub const CLIP_EPS_IK: f64 = 1e-9;

/// Branch tuple for the 7-DoF arm: shoulder flip, elbow sign, wrist flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrsBranch {
    pub shoulder: i8,
    pub elbow: i8,
    pub wrist: i8,
}

impl SrsBranch {
    pub fn new(shoulder: i8, elbow: i8, wrist: i8) -> Self {
        for s in [shoulder, elbow, wrist] {
            assert!(s == 1 || s == -1, "branch signs must be +1 or -1");
        }
        SrsBranch {
            shoulder,
            elbow,
            wrist,
        }
    }

    /// All eight branches, in a fixed enumeration order.
    pub fn all() -> [SrsBranch; 8] {
        let mut out = [SrsBranch::new(1, 1, 1); 8];
        let mut i = 0;
        for s in [1i8, -1] {
            for e in [1i8, -1] {
                for w in [1i8, -1] {
                    out[i] = SrsBranch::new(s, e, w);
                    i += 1;
                }
            }
        }
        out
    }

    /// Branch of an existing joint vector: signs of the shoulder, elbow, and
    /// wrist pivot angles (zero counts as positive).
    pub fn from_joints(q_tail: &[f64]) -> Self {
        assert_eq!(q_tail.len(), 7);
        let sgn = |v: f64| if v < 0.0 { -1i8 } else { 1i8 };
        SrsBranch::new(sgn(q_tail[1]), sgn(q_tail[3]), sgn(q_tail[5]))
    }
}

/// Discrete branch of an IK map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// Elbow sign of the planar 3R sub-chain.
    Planar(i8),
    /// Sign tuple of the spatial arm.
    Srs(SrsBranch),
}

impl Branch {
    /// Compact text form used in benchmark records: `+`/`-` per sign.
    pub fn label(&self) -> String {
        let c = |s: i8| if s >= 0 { '+' } else { '-' };
        match self {
            Branch::Planar(g) => c(*g).to_string(),
            Branch::Srs(b) => [c(b.shoulder), c(b.elbow), c(b.wrist)].iter().collect(),
        }
    }
}

/// Output of an IK map evaluation.
///
/// When `clipped` is false the joints reproduce the requested pose to 1e-9;
/// when clipping fired the joints are a boundary solution near the edge of
/// the reachable set and `q` is still finite.
#[derive(Clone, Debug)]
pub struct IkResult<T> {
    pub q: Vec<T>,
    /// Pre-clip probe values, one pair `(1 - f, 1 + f)` per arccos site
    /// (single `1 - t^2` probe for the planar map).
    pub probes: Vec<T>,
    pub clipped: bool,
}

/// The probe pair of one arccos clip site with argument `f`.
pub fn probe_pair<T: Scalar>(f: &T) -> (T, T) {
    (T::constant(1.0) - f.clone(), T::constant(1.0) + f.clone())
}

fn sign_factor(g: i8) -> f64 {
    if g >= 0 {
        1.0
    } else {
        -1.0
    }
}

/// Analytic IK for a planar 3R chain of equal link length `l`.
///
/// Working backwards from the tip heading, the wrist (joint of the last
/// link) is fixed at `target - l*(cos theta, sin theta)`; the two remaining
/// links reach it as an isosceles two-bar linkage. The only arccos is the
/// half-opening angle `delta = arccos(r / 2l)` where `r` is the
/// base-to-wrist distance; the reported probe is `1 - (r/2l)^2`, nonnegative
/// exactly when the wrist is within reach. `branch` picks the elbow side.
/// Joint angles are wrapped to `(-pi, pi]`.
pub fn planar3r_ik<T: Scalar>(
    base: &Pose2<T>,
    target: &Pose2<T>,
    l: f64,
    branch: i8,
) -> IkResult<T> {
    assert!(l > 0.0, "link length must be positive");
    let g = T::constant(sign_factor(branch));
    let wx = target.x.clone() - target.theta.cos() * T::constant(l);
    let wy = target.y.clone() - target.theta.sin() * T::constant(l);
    let dx = wx.clone() - base.x.clone();
    let dy = wy.clone() - base.y.clone();
    let r2 = dx.clone() * dx.clone() + dy.clone() * dy.clone();
    // Pre-clip probe, formed before any square root so it stays smooth at
    // the fold (r = 0).
    let probe = T::constant(1.0) - r2.clone() / T::constant(4.0 * l * l);
    let t = r2.sqrt() / T::constant(2.0 * l);
    let clipped = t.val().abs() > 1.0 - CLIP_EPS_IK;
    let delta = t.acos_clipped(CLIP_EPS_IK);
    let gamma = dy.atan2(&dx);
    let h1 = gamma + g * delta;
    let p1x = base.x.clone() + h1.cos() * T::constant(l);
    let p1y = base.y.clone() + h1.sin() * T::constant(l);
    let h2 = (wy - p1y).atan2(&(wx - p1x));
    let q1 = (h1.clone() - base.theta.clone()).wrap_angle();
    let q2 = (h2.clone() - h1).wrap_angle();
    let q3 = (target.theta.clone() - h2).wrap_angle();
    IkResult {
        q: vec![q1, q2, q3],
        probes: vec![probe],
        clipped,
    }
}

/// IK for the full planar chain: the first `n - 3` joints are the
/// self-motion parameters, copied through verbatim; the last three come from
/// [`planar3r_ik`] based at the tip of the free prefix.
pub fn planar_chain_ik<T: Scalar>(
    chain: &PlanarChain,
    q_free: &[T],
    target: &Pose2<T>,
    branch: i8,
) -> IkResult<T> {
    assert_eq!(
        q_free.len(),
        chain.n - 3,
        "expected {} free joints",
        chain.n - 3
    );
    let prefix = PlanarChain {
        n: q_free.len(),
        link_length: chain.link_length,
        base: chain.base.clone(),
    };
    let poses = planar_link_poses(&prefix, q_free);
    let tail_base = poses.last().expect("at least the base pose").clone();
    let tail = planar3r_ik(&tail_base, target, chain.link_length, branch);
    let mut q = q_free.to_vec();
    q.extend(tail.q);
    IkResult {
        q,
        probes: tail.probes,
        clipped: tail.clipped,
    }
}

/// Reachability probes of the planar map (branch-independent).
pub fn probe_reachability_planar<T: Scalar>(
    chain: &PlanarChain,
    q_free: &[T],
    target: &Pose2<T>,
) -> Vec<T> {
    planar_chain_ik(chain, q_free, target, 1).probes
}

/// Elbow branch of an existing planar tail: the middle joint bends by
/// `-2 g delta`, so its sign determines the branch (zero counts as `+`).
pub fn planar_branch_of(q_tail: &[f64]) -> i8 {
    assert_eq!(q_tail.len(), 3);
    if q_tail[1] > 0.0 {
        -1
    } else {
        1
    }
}

/// Unit direction of the shoulder-to-elbow segment written with the two
/// shoulder pivot angles: `Rz(q1) * Ry(q2) * e_z`.
fn shoulder_rotation<T: Scalar>(q1: &T, q2: &T) -> Mat3<T> {
    Mat3::rotation_z(q1).mul(&Mat3::rotation_y(q2))
}

/// Reference frame for the elbow circle around the shoulder-wrist axis `u`:
/// `v0` is the unit component of the base z-axis orthogonal to `u` (base
/// x-axis when they align), `w0` completes the right-handed triad.
fn elbow_circle_frame<T: Scalar>(u: &Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let mut a = Vec3::new(
        -(u.z.clone() * u.x.clone()),
        -(u.z.clone() * u.y.clone()),
        T::constant(1.0) - u.z.clone() * u.z.clone(),
    );
    if a.norm_squared().val() < 1e-16 {
        a = Vec3::new(
            T::constant(1.0) - u.x.clone() * u.x.clone(),
            -(u.x.clone() * u.y.clone()),
            -(u.x.clone() * u.z.clone()),
        );
    }
    let v0 = a.normalized();
    let w0 = u.cross(&v0);
    (v0, w0)
}

/// Analytic IK for the wrist-partitioned 7-DoF arm.
///
/// The target is given in the world frame; `base` is the world pose of the
/// arm base (the frame the [`SrsGeometry`] offsets live in). The algorithm:
///
/// 1. wrist center `= p - d_wf * (R * e_z)`;
/// 2. elbow pivot from the law of cosines on the shoulder-wrist distance
///    (clip site 1), sign chosen by `branch.elbow`;
/// 3. the elbow point sits on a circle around the shoulder-wrist axis,
///    parameterized by `psi` from the reference direction of
///    [`elbow_circle_frame`]; the shoulder pivot pair follows from the
///    elbow direction (clip site 2, sign `branch.shoulder`);
/// 4. the remaining wrist rotation is a z-y-z factorization of
///    `R4^T * R_target` (clip site 3, sign `branch.wrist`).
pub fn srs7_ik<T: Scalar>(
    geom: &SrsGeometry,
    base: &Pose3<T>,
    target: &Pose3<T>,
    psi: &T,
    branch: SrsBranch,
) -> crate::Result<IkResult<T>> {
    let rel = base.inverse().compose(target);
    let rt = rel.rotation.clone();

    let wrist = rel.position.sub(&rt.col(2).scale(&T::constant(geom.d_wf)));
    let shoulder = Vec3::new(T::constant(0.0), T::constant(0.0), T::constant(geom.d_bs));
    let xsw = wrist.sub(&shoulder);
    let dsw2 = xsw.norm_squared();
    if dsw2.val().sqrt() < 1e-12 {
        return Err(crate::Error::Singular(
            "wrist center coincides with the shoulder".into(),
        ));
    }
    let dsw = dsw2.sqrt();

    // Elbow pivot: cos(q4) = (|SW|^2 - d_se^2 - d_ew^2) / (2 d_se d_ew).
    let ce = (dsw2.clone() - T::constant(geom.d_se * geom.d_se + geom.d_ew * geom.d_ew))
        / T::constant(2.0 * geom.d_se * geom.d_ew);
    let (p1, p2) = probe_pair(&ce);
    let ge = T::constant(sign_factor(branch.elbow));
    let q4 = ge * ce.acos_clipped(CLIP_EPS_IK);

    // Elbow point on the self-motion circle.
    let u = xsw.scale(&(T::constant(1.0) / dsw.clone()));
    let cb = (T::constant(geom.d_se * geom.d_se) + dsw2.clone()
        - T::constant(geom.d_ew * geom.d_ew))
        / (T::constant(2.0 * geom.d_se) * dsw);
    let sb = (T::constant(1.0) - cb.clone() * cb.clone())
        .maximum(&T::constant(1e-24))
        .sqrt();
    let (v0, w0) = elbow_circle_frame(&u);
    let v = v0.scale(&psi.cos()).add(&w0.scale(&psi.sin()));
    let z2 = u.scale(&cb).add(&v.scale(&sb));

    // Shoulder pivot pair from the elbow direction (z2 is unit by
    // construction: cb^2 + sb^2 = 1).
    let fb = z2.z.clone();
    let (p3, p4) = probe_pair(&fb);
    let gs = T::constant(sign_factor(branch.shoulder));
    let q2 = gs * fb.acos_clipped(CLIP_EPS_IK);
    let s2 = q2.sin();
    let q1 = (z2.y.clone() * s2.clone()).atan2(&(z2.x.clone() * s2));
    let r2m = shoulder_rotation(&q1, &q2);

    // Forearm direction resolves the upper-arm roll q3.
    let elbow = shoulder.add(&z2.scale(&T::constant(geom.d_se)));
    let z4 = wrist.sub(&elbow).scale(&T::constant(1.0 / geom.d_ew));
    let zeta = r2m.transpose().mul_vec(&z4);
    let s4 = q4.sin();
    let q3 = (-(zeta.y.clone() * s4.clone())).atan2(&(-(zeta.x.clone() * s4)));

    // Wrist: R4^T * R_target = Rz(q5) * Ry(q6) * Rz(q7).
    let r4 = r2m
        .mul(&Mat3::rotation_z(&q3))
        .mul(&Mat3::rotation_y(&-q4.clone()));
    let m = r4.transpose().mul(&rt);
    let fc = m.m[2][2].clone();
    let (p5, p6) = probe_pair(&fc);
    let gw = T::constant(sign_factor(branch.wrist));
    let q6 = gw * fc.acos_clipped(CLIP_EPS_IK);
    let s6 = q6.sin();
    let q5 = (m.m[1][2].clone() * s6.clone()).atan2(&(m.m[0][2].clone() * s6.clone()));
    let q7 = (m.m[2][1].clone() * s6.clone()).atan2(&(-(m.m[2][0].clone() * s6)));

    let clipped = [&ce, &fb, &fc]
        .iter()
        .any(|f| f.val().abs() > 1.0 - CLIP_EPS_IK);
    Ok(IkResult {
        q: vec![q1, q2, q3, q4, q5, q6, q7],
        probes: vec![p1, p2, p3, p4, p5, p6],
        clipped,
    })
}

/// IK for a full spatial arm: the `arm.prefix` leading joints act as extra
/// self-motion parameters, copied through verbatim; the seven-joint tail is
/// solved by [`srs7_ik`] based at the world pose of the prefix tip.
pub fn spatial_arm_ik<T: Scalar>(
    arm: &crate::kinematics::SpatialArm,
    q_prefix: &[T],
    target: &Pose3<T>,
    psi: &T,
    branch: SrsBranch,
) -> crate::Result<IkResult<T>> {
    assert_eq!(
        q_prefix.len(),
        arm.prefix,
        "expected {} prefix joints",
        arm.prefix
    );
    let mut tail_base: Pose3<T> = Pose3::from_f64(&arm.chain.base);
    for (link, qi) in arm.chain.links[..arm.prefix].iter().zip(q_prefix) {
        tail_base = tail_base.compose(&crate::kinematics::dh_transform(link, qi));
    }
    let tail = srs7_ik(&arm.srs, &tail_base, target, psi, branch)?;
    let mut q = q_prefix.to_vec();
    q.extend(tail.q);
    Ok(IkResult {
        q,
        probes: tail.probes,
        clipped: tail.clipped,
    })
}

/// Reachability probes of the spatial map. Branch-independent: the clip-site
/// arguments depend only on the target and `psi`.
pub fn probe_reachability_srs<T: Scalar>(
    geom: &SrsGeometry,
    base: &Pose3<T>,
    target: &Pose3<T>,
    psi: &T,
) -> crate::Result<Vec<T>> {
    srs7_ik(geom, base, target, psi, SrsBranch::new(1, 1, 1)).map(|r| r.probes)
}

/// Recovers the self-motion angle of an existing joint vector by rebuilding
/// the elbow-circle frame from the arm's own geometry.
///
/// `q_tail` are the seven arm joints in the arm base frame. Fails on the
/// alignment singularity (wrist at the shoulder); at a straight elbow the
/// circle degenerates and the angle is reported as zero.
pub fn srs_psi_of(geom: &SrsGeometry, q_tail: &[f64]) -> crate::Result<f64> {
    assert_eq!(q_tail.len(), 7);
    let (q1, q2, q3, q4) = (q_tail[0], q_tail[1], q_tail[2], q_tail[3]);
    let z2 = shoulder_rotation(&q1, &q2).mul_vec(&Vec3::new(0.0, 0.0, 1.0));
    let z4 = shoulder_rotation(&q1, &q2)
        .mul(&Mat3::rotation_z(&q3))
        .mul(&Mat3::rotation_y(&-q4))
        .mul_vec(&Vec3::new(0.0, 0.0, 1.0));
    let e_rel = z2.scale(&geom.d_se);
    let xsw = e_rel.add(&z4.scale(&geom.d_ew));
    let dsw = xsw.norm();
    if dsw < 1e-12 {
        return Err(crate::Error::Singular(
            "wrist center coincides with the shoulder".into(),
        ));
    }
    let u = xsw.scale(&(1.0 / dsw));
    let (v0, w0) = elbow_circle_frame(&u);
    let ep = e_rel.sub(&u.scale(&e_rel.dot(&u)));
    Ok(ep.dot(&w0).atan2(ep.dot(&v0)))
}
