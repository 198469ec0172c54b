//! Differentiable constraint building blocks shared by both formulations:
//! sphere-vs-box and sphere-vs-sphere clearance residuals over the chain's
//! collision geometry, quadratic joint-centering costs, log barriers, and a
//! support-polygon stability condition in both inequality (smoothed max of
//! triangle slacks) and equality (convex-hull multipliers) form.

use crate::autodiff::{safe_log, Scalar, DEFAULT_CLIP_EPS};
use crate::geometry::Vec3;
use crate::kinematics::{link_poses, KinematicChain};
use serde::{Deserialize, Serialize};

/// Sphere rigidly attached to one frame of a kinematic chain.
///
/// `link_index` addresses the frames returned by
/// [`crate::kinematics::link_poses`]: 0 is the chain base, `i >= 1` the frame
/// after joint `i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CollisionSphere {
    pub link_index: usize,
    pub local_offset: Vec3<f64>,
    pub radius: f64,
}

/// Axis-aligned box obstacle in the world frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vec3<f64>,
    pub half_extents: Vec3<f64>,
}

/// Ground-plane support points whose convex hull the center of mass must
/// stay above.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportPoints {
    pub points: Vec<[f64; 2]>,
}

impl SupportPoints {
    pub fn new(points: Vec<[f64; 2]>) -> crate::Result<Self> {
        if points.len() < 3 {
            return Err(crate::Error::DegenerateGeometry(
                "support needs at least 3 points".into(),
            ));
        }
        Ok(SupportPoints { points })
    }
}

/// Collision scene: chain-attached spheres, world boxes, and the clearance
/// every pair must keep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scene {
    #[serde(default)]
    pub spheres: Vec<CollisionSphere>,
    #[serde(default)]
    pub boxes: Vec<BoxObstacle>,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
}

fn default_d_min() -> f64 {
    0.001
}

impl Scene {
    pub fn empty() -> Self {
        Scene {
            spheres: Vec::new(),
            boxes: Vec::new(),
            d_min: default_d_min(),
        }
    }

    pub fn validate(&self, dof: usize) -> crate::Result<()> {
        for s in &self.spheres {
            if s.radius <= 0.0 {
                return Err(crate::Error::InvalidProblem(
                    "sphere radius must be positive".into(),
                ));
            }
            if s.link_index > dof {
                return Err(crate::Error::InvalidProblem(format!(
                    "sphere link index {} out of range for a {dof}-joint chain",
                    s.link_index
                )));
            }
        }
        for b in &self.boxes {
            let h = &b.half_extents;
            if h.x <= 0.0 || h.y <= 0.0 || h.z <= 0.0 {
                return Err(crate::Error::InvalidProblem(
                    "box half extents must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Loads a scene from JSON (`{spheres: [...], boxes: [...], d_min}`).
pub fn load_scene(path: &std::path::Path) -> crate::Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| crate::Error::Parse {
        path: path.display().to_string(),
        source,
    })
}

/// Signed distance from a sphere's surface to an axis-aligned box: positive
/// when clear, negative when penetrating (by nearest-face depth when fully
/// contained).
pub fn sphere_box_sdf<T: Scalar>(center: &Vec3<T>, radius: f64, b: &BoxObstacle) -> T {
    let zero = T::constant(0.0);
    let dx = (center.x.clone() - T::constant(b.center.x)).abs() - T::constant(b.half_extents.x);
    let dy = (center.y.clone() - T::constant(b.center.y)).abs() - T::constant(b.half_extents.y);
    let dz = (center.z.clone() - T::constant(b.center.z)).abs() - T::constant(b.half_extents.z);
    let ox = dx.maximum(&zero);
    let oy = dy.maximum(&zero);
    let oz = dz.maximum(&zero);
    let outside = (ox.clone() * ox + oy.clone() * oy + oz.clone() * oz).sqrt();
    let inside = dx.maximum(&dy).maximum(&dz).minimum(&zero);
    outside + inside - T::constant(radius)
}

/// Clearance residuals of a configuration: one `sdf - d_min` entry per
/// (sphere, box) pair and per non-adjacent sphere pair (link indices
/// differing by more than one). Each residual must be nonnegative for the
/// scene to be collision-free with margin `d_min`.
pub fn min_distance_residuals<T: Scalar>(
    chain: &KinematicChain,
    q: &[T],
    spheres: &[CollisionSphere],
    boxes: &[BoxObstacle],
    d_min: f64,
) -> Vec<T> {
    if spheres.is_empty() {
        return Vec::new();
    }
    let poses = link_poses(chain, q);
    let centers: Vec<Vec3<T>> = spheres
        .iter()
        .map(|s| {
            assert!(s.link_index < poses.len(), "sphere link index out of range");
            poses[s.link_index].transform_point(&Vec3::from_f64(&s.local_offset))
        })
        .collect();

    let mut out = Vec::new();
    for (c, s) in centers.iter().zip(spheres) {
        for b in boxes {
            out.push(sphere_box_sdf(c, s.radius, b) - T::constant(d_min));
        }
    }
    for i in 0..spheres.len() {
        for j in (i + 1)..spheres.len() {
            let (a, b) = (&spheres[i], &spheres[j]);
            if a.link_index.abs_diff(b.link_index) <= 1 {
                continue;
            }
            let dist = centers[i].sub(&centers[j]).norm();
            out.push(dist - T::constant(a.radius + b.radius + d_min));
        }
    }
    out
}

/// Quadratic centering cost `(q - q_nom)^T M (q - q_nom)` with a symmetric
/// PSD weight given as dense rows.
pub fn joint_centering_cost<T: Scalar>(q: &[T], m: &[Vec<f64>], q_nom: &[f64]) -> T {
    let n = q.len();
    assert_eq!(q_nom.len(), n);
    assert_eq!(m.len(), n);
    let d: Vec<T> = q
        .iter()
        .zip(q_nom)
        .map(|(qi, ni)| qi.clone() - T::constant(*ni))
        .collect();
    let mut acc = T::constant(0.0);
    for (i, row) in m.iter().enumerate() {
        assert_eq!(row.len(), n);
        for (j, w) in row.iter().enumerate() {
            if *w != 0.0 {
                acc = acc + d[i].clone() * d[j].clone() * T::constant(*w);
            }
        }
    }
    acc
}

/// Identity weight scaled by `scale`, the usual default for centering costs.
pub fn identity_weight(n: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { scale } else { 0.0 }).collect())
        .collect()
}

/// `-mu * log(residual)`, kept finite below `residual = 1e-6` by the clipped
/// logarithm so hard constraints can enter a cost term directly.
pub fn log_barrier<T: Scalar>(residual: &T, mu: f64) -> T {
    assert!(mu > 0.0, "barrier weight must be positive");
    T::constant(-mu) * safe_log(residual, DEFAULT_CLIP_EPS)
}

fn edge_slack<T: Scalar>(p: &[T; 2], a: &[f64; 2], b: &[f64; 2]) -> T {
    // Inward normal of edge a->b for a counterclockwise triangle.
    let nx = -(b[1] - a[1]);
    let ny = b[0] - a[0];
    let len = (nx * nx + ny * ny).sqrt();
    let sx = (p[0].clone() - T::constant(a[0])) * T::constant(nx / len);
    let sy = (p[1].clone() - T::constant(a[1])) * T::constant(ny / len);
    sx + sy
}

fn triangle_area(v1: &[f64; 2], v2: &[f64; 2], v3: &[f64; 2]) -> f64 {
    0.5 * ((v2[0] - v1[0]) * (v3[1] - v1[1]) - (v2[1] - v1[1]) * (v3[0] - v1[0]))
}

/// The three per-edge slacks of the ordered triangle `(v1, v2, v3)`:
/// signed distances of `p` to the edge lines, positive on the side that is
/// interior when the winding is counterclockwise.
pub fn triangle_slacks<T: Scalar>(
    p: &[T; 2],
    v1: &[f64; 2],
    v2: &[f64; 2],
    v3: &[f64; 2],
) -> crate::Result<[T; 3]> {
    if triangle_area(v1, v2, v3).abs() <= 1e-12 {
        return Err(crate::Error::DegenerateGeometry(
            "triangle is degenerate (area below 1e-12)".into(),
        ));
    }
    Ok([
        edge_slack(p, v1, v2),
        edge_slack(p, v2, v3),
        edge_slack(p, v3, v1),
    ])
}

/// Minimum edge slack of one ordered triangle; nonnegative iff `p` lies
/// inside when the winding is counterclockwise. Hard min, ties resolved to
/// the lowest edge index.
pub fn triangle_slack<T: Scalar>(
    p: &[T; 2],
    v1: &[f64; 2],
    v2: &[f64; 2],
    v3: &[f64; 2],
) -> crate::Result<T> {
    let [s1, s2, s3] = triangle_slacks(p, v1, v2, v3)?;
    Ok(s1.minimum(&s2).minimum(&s3))
}

/// Winding-free containment test: the larger of the two opposite-winding
/// slacks, nonnegative exactly when `p` is inside the triangle.
pub fn containment_margin<T: Scalar>(
    p: &[T; 2],
    v1: &[f64; 2],
    v2: &[f64; 2],
    v3: &[f64; 2],
) -> crate::Result<T> {
    let a = triangle_slack(p, v1, v2, v3)?;
    let b = triangle_slack(p, v1, v3, v2)?;
    Ok(a.maximum(&b))
}

/// Smoothing temperature for [`stability_margin`].
pub const STABILITY_BETA: f64 = 200.0;

fn margin_slacks<T: Scalar>(p: &[T; 2], support: &SupportPoints) -> crate::Result<Vec<T>> {
    let pts = &support.points;
    if pts.len() < 3 {
        return Err(crate::Error::DegenerateGeometry(
            "support needs at least 3 points".into(),
        ));
    }
    let mut slacks = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            for k in (j + 1)..pts.len() {
                let (a, b, c) = (&pts[i], &pts[j], &pts[k]);
                if triangle_area(a, b, c).abs() <= 1e-12 {
                    continue;
                }
                slacks.push(triangle_slack(p, a, b, c)?);
                slacks.push(triangle_slack(p, a, c, b)?);
            }
        }
    }
    if slacks.is_empty() {
        return Err(crate::Error::DegenerateGeometry(
            "all support points are collinear".into(),
        ));
    }
    Ok(slacks)
}

/// Smoothed stability margin of the center of mass over the support hull:
/// log-sum-exp (temperature [`STABILITY_BETA`]) over the containment slacks
/// of every point triple and both windings. Always within `ln(count)/beta`
/// (about 0.024 for 8 generic points) *above* the hard maximum, so imposing
/// `margin >= 0` slightly relaxes exact containment; solutions are meant to
/// be re-checked afterwards with [`stability_margin_hard`].
pub fn stability_margin<T: Scalar>(p: &[T; 2], support: &SupportPoints) -> crate::Result<T> {
    let slacks = margin_slacks(p, support)?;
    let hi = slacks
        .iter()
        .skip(1)
        .fold(slacks[0].clone(), |acc, s| acc.maximum(s));
    let mut sum = T::constant(0.0);
    for s in &slacks {
        sum = sum + ((s.clone() - hi.clone()) * T::constant(STABILITY_BETA)).exp();
    }
    Ok(hi + safe_log(&sum, DEFAULT_CLIP_EPS) * T::constant(1.0 / STABILITY_BETA))
}

/// Hard (unsmoothed) stability margin: the exact maximum containment slack.
/// Nonnegative exactly when the point lies in the convex hull of the
/// support. Used for post-hoc verification of solutions found with the
/// smoothed margin.
pub fn stability_margin_hard(p: &[f64; 2], support: &SupportPoints) -> crate::Result<f64> {
    let slacks = margin_slacks(p, support)?;
    Ok(slacks.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Equality-form stability residuals with convex-hull multipliers `lambda`:
/// `(sum(lambda) - 1, sum(lambda * p_i) - p_com)` as three entries. Zero
/// residuals with `lambda` in `[0, 1]` certify containment.
pub fn stability_equality_residuals<T: Scalar>(
    p: &[T; 2],
    support: &SupportPoints,
    lambda: &[T],
) -> Vec<T> {
    assert_eq!(lambda.len(), support.points.len());
    let mut sum = T::constant(-1.0);
    let mut cx = -p[0].clone();
    let mut cy = -p[1].clone();
    for (l, pt) in lambda.iter().zip(&support.points) {
        sum = sum + l.clone();
        cx = cx + l.clone() * T::constant(pt[0]);
        cy = cy + l.clone() * T::constant(pt[1]);
    }
    vec![sum, cx, cy]
}
