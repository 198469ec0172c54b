//! Assembly of the two inverse-kinematics nonlinear programs.
//!
//! The joint-space ("old") program optimizes over the joint vector directly:
//! pose residuals are nonlinear equalities through forward kinematics, and
//! joint limits are variable boxes. The change-of-variables ("new") program
//! optimizes over the task pose, and self-motion parameters of an analytic
//! IK map with a fixed branch: the pose-target rows become *linear*
//! (identity rows on the pose variables), while joint limits, collision
//! clearances, and user constraints compose with the IK map. Reachability
//! enters as probe rows `D_k >= 1e-9`, keeping iterates strictly inside the
//! IK domain.
//!
//! Both builders share the same cost callback composition, so the objective
//! value agrees exactly between a joint vector and its preimage.

use crate::analytic_ik::{
    planar_branch_of, planar_chain_ik, spatial_arm_ik, srs_psi_of, Branch, IkResult, SrsBranch,
};
use crate::autodiff::{DiffScalar, Scalar};
use crate::constraints::{joint_centering_cost, min_distance_residuals, Scene};
use crate::geometry::{
    rotation_from_rpy, rpy_from_rotation, rpy_from_rotation_smooth, EulerRpy, Pose2, Pose3, Vec3,
};
use crate::kinematics::{forward_kinematics, planar_fk, KinematicChain, PlanarChain, SpatialArm};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Probe rows are imposed as `D_k >= PROBE_MARGIN` rather than `>= 0`, so
/// solutions stay strictly inside the IK domain where derivatives are
/// informative.
pub const PROBE_MARGIN: f64 = 1e-9;

/// The robot being solved for.
#[derive(Clone, Debug)]
pub enum RobotModel {
    Planar(PlanarChain),
    Spatial(SpatialArm),
}

impl RobotModel {
    pub fn dof(&self) -> usize {
        match self {
            RobotModel::Planar(c) => c.n,
            RobotModel::Spatial(a) => a.chain.dof(),
        }
    }

    /// Joint box bounds.
    pub fn joint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            RobotModel::Planar(c) => {
                let (lo, hi) = c.limits();
                (vec![lo; c.n], vec![hi; c.n])
            }
            RobotModel::Spatial(a) => (a.chain.q_lb.clone(), a.chain.q_ub.clone()),
        }
    }

    /// Joints that remain decision variables under the IK map: the free
    /// prefix (all but the last 3 planar joints, all but the 7-joint tail).
    pub fn free_prefix(&self) -> usize {
        match self {
            RobotModel::Planar(c) => c.n - 3,
            RobotModel::Spatial(a) => a.prefix,
        }
    }

    /// Pose residual rows of a full task constraint: 3 planar, 6 spatial.
    pub fn task_dim(&self) -> usize {
        match self {
            RobotModel::Planar(_) => 3,
            RobotModel::Spatial(_) => 6,
        }
    }

    /// Spatial kinematic chain used for collision geometry (planar chains
    /// are lifted into the z = 0 plane).
    pub fn collision_chain(&self) -> KinematicChain {
        match self {
            RobotModel::Planar(c) => c.to_spatial(),
            RobotModel::Spatial(a) => a.chain.clone(),
        }
    }
}

/// A task-space target of matching dimensionality.
#[derive(Clone, Debug)]
pub enum TaskPose {
    Planar(Pose2<f64>),
    Spatial(Pose3<f64>),
}

/// How much of the target pose is constrained.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Position and orientation equality.
    Full,
    /// Position equality only; orientation free.
    PositionOnly,
    /// Elementwise position box; orientation free.
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// Quadratic centering objective `(q - q_nom)^T W (q - q_nom)`.
#[derive(Clone, Debug)]
pub struct CenteringCost {
    pub weight: Vec<Vec<f64>>,
    pub q_nom: Vec<f64>,
}

/// Shared evaluator producing constraint rows from the program variables.
pub type RowsFn = Arc<dyn Fn(&[DiffScalar]) -> Vec<DiffScalar> + Send + Sync>;

/// Shared scalar objective over the program variables.
pub type CostFn = Arc<dyn Fn(&[DiffScalar]) -> DiffScalar + Send + Sync>;

/// User constraint callback on the joint vector, with a declared row count.
#[derive(Clone)]
pub struct ExtraConstraint {
    pub rows: usize,
    pub eval: RowsFn,
}

/// Full problem description consumed by both builders.
#[derive(Clone)]
pub struct IkProblem {
    pub robot: RobotModel,
    pub target: TaskPose,
    pub mode: TargetMode,
    pub cost: Option<CenteringCost>,
    pub scene: Scene,
    /// Inequalities `g(q) <= 0`, one row each.
    pub extra_ineq: Vec<ExtraConstraint>,
    /// Equalities `h(q) = 0`.
    pub extra_eq: Vec<ExtraConstraint>,
}

impl IkProblem {
    pub fn new(robot: RobotModel, target: TaskPose) -> Self {
        IkProblem {
            robot,
            target,
            mode: TargetMode::Full,
            cost: None,
            scene: Scene::empty(),
            extra_ineq: Vec::new(),
            extra_eq: Vec::new(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let pos_dim = match (&self.robot, &self.target) {
            (RobotModel::Planar(_), TaskPose::Planar(_)) => 2,
            (RobotModel::Spatial(_), TaskPose::Spatial(_)) => 3,
            _ => {
                return Err(crate::Error::InvalidProblem(
                    "target dimensionality does not match the robot".into(),
                ))
            }
        };
        if let TargetMode::Box { lower, upper } = &self.mode {
            if lower.len() != pos_dim || upper.len() != pos_dim {
                return Err(crate::Error::InvalidProblem(format!(
                    "position box must have {pos_dim} entries"
                )));
            }
            if lower.iter().zip(upper).any(|(l, u)| l > u) {
                return Err(crate::Error::InvalidProblem(
                    "position box lower bound above upper bound".into(),
                ));
            }
        }
        if let Some(c) = &self.cost {
            let d = self.robot.dof();
            if c.q_nom.len() != d || c.weight.len() != d || c.weight.iter().any(|r| r.len() != d) {
                return Err(crate::Error::InvalidProblem(
                    "cost dimensions do not match the robot".into(),
                ));
            }
        }
        self.scene.validate(self.robot.dof())
    }
}

/// One group of constraint rows sharing an evaluation callback.
pub struct ConstraintBlock {
    pub name: String,
    /// True when every row has a constant Jacobian by construction.
    pub linear: bool,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eval: RowsFn,
}

impl ConstraintBlock {
    pub fn rows(&self) -> usize {
        self.lower.len()
    }
}

/// Solver-facing nonlinear program.
pub struct NlProgram {
    pub num_vars: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: CostFn,
    pub blocks: Vec<ConstraintBlock>,
    pub initial_guess: Vec<f64>,
}

impl NlProgram {
    pub fn constraint_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    pub fn block(&self, name: &str) -> Option<&ConstraintBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

fn nan_rows(rows: usize) -> Vec<DiffScalar> {
    vec![DiffScalar::constant(f64::NAN); rows]
}

/// Cost over the joint vector shared by both formulations (and the
/// sampling baseline), so their objective values agree exactly.
pub fn joint_cost_fn(cost: &Option<CenteringCost>) -> CostFn {
    match cost {
        None => Arc::new(|_q: &[DiffScalar]| DiffScalar::constant(0.0)),
        Some(c) => {
            let w = c.weight.clone();
            let q_nom = c.q_nom.clone();
            Arc::new(move |q: &[DiffScalar]| joint_centering_cost(q, &w, &q_nom))
        }
    }
}

/// Evaluates the IK map at a new-formulation variable vector.
///
/// Layout: `[q_free.., x, y, theta]` for planar chains and
/// `[q_prefix.., p_x, p_y, p_z, roll, pitch, yaw, psi]` for spatial arms.
pub fn recover_state<T: Scalar>(
    robot: &RobotModel,
    x: &[T],
    branch: Branch,
) -> crate::Result<IkResult<T>> {
    match (robot, branch) {
        (RobotModel::Planar(chain), Branch::Planar(g)) => {
            let k = chain.n - 3;
            assert_eq!(x.len(), chain.n, "variable vector length mismatch");
            let target = Pose2::new(x[k].clone(), x[k + 1].clone(), x[k + 2].clone());
            Ok(planar_chain_ik(chain, &x[..k], &target, g))
        }
        (RobotModel::Spatial(arm), Branch::Srs(b)) => {
            let k = arm.prefix;
            assert_eq!(x.len(), k + 7, "variable vector length mismatch");
            let rpy = EulerRpy::new(x[k + 3].clone(), x[k + 4].clone(), x[k + 5].clone());
            let target = Pose3::new(
                rotation_from_rpy(&rpy),
                Vec3::new(x[k].clone(), x[k + 1].clone(), x[k + 2].clone()),
            );
            spatial_arm_ik(arm, &x[..k], &target, &x[k + 6], b)
        }
        _ => Err(crate::Error::InvalidProblem(
            "branch kind does not match the robot".into(),
        )),
    }
}

/// Joint vector reached by the IK map at `x` (plain values).
pub fn recover_joints(robot: &RobotModel, x: &[f64], branch: Branch) -> crate::Result<Vec<f64>> {
    recover_state(robot, x, branch).map(|r| r.q)
}

/// Builds the joint-space program: variables are the joints themselves.
pub fn build_old(problem: &IkProblem) -> NlProgram {
    problem.validate().expect("invalid problem");
    let d = problem.robot.dof();
    let (lower, upper) = problem.robot.joint_bounds();
    let mut blocks = Vec::new();

    // Pose rows through forward kinematics (nonlinear).
    let robot = problem.robot.clone();
    let (rows, lo, hi): (RowsFn, Vec<f64>, Vec<f64>) =
        match (&robot, &problem.target, &problem.mode) {
            (RobotModel::Planar(chain), TaskPose::Planar(t), TargetMode::Full) => {
                let (chain, t) = (chain.clone(), t.clone());
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = planar_fk(&chain, q);
                        vec![
                            fk.x - DiffScalar::constant(t.x),
                            fk.y - DiffScalar::constant(t.y),
                            (fk.theta - DiffScalar::constant(t.theta)).wrap_angle(),
                        ]
                    }),
                    vec![0.0; 3],
                    vec![0.0; 3],
                )
            }
            (RobotModel::Planar(chain), TaskPose::Planar(t), TargetMode::PositionOnly) => {
                let (chain, t) = (chain.clone(), t.clone());
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = planar_fk(&chain, q);
                        vec![
                            fk.x - DiffScalar::constant(t.x),
                            fk.y - DiffScalar::constant(t.y),
                        ]
                    }),
                    vec![0.0; 2],
                    vec![0.0; 2],
                )
            }
            (RobotModel::Planar(chain), TaskPose::Planar(_), TargetMode::Box { lower, upper }) => {
                let chain = chain.clone();
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = planar_fk(&chain, q);
                        vec![fk.x, fk.y]
                    }),
                    lower.clone(),
                    upper.clone(),
                )
            }
            (RobotModel::Spatial(arm), TaskPose::Spatial(t), TargetMode::Full) => {
                let chain = arm.chain.clone();
                let tp = t.position.clone();
                let trpy = rpy_from_rotation(&t.rotation);
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = forward_kinematics(&chain, q);
                        let rpy = rpy_from_rotation_smooth(&fk.rotation);
                        vec![
                            fk.position.x - DiffScalar::constant(tp.x),
                            fk.position.y - DiffScalar::constant(tp.y),
                            fk.position.z - DiffScalar::constant(tp.z),
                            (rpy.roll - DiffScalar::constant(trpy.roll)).wrap_angle(),
                            (rpy.pitch - DiffScalar::constant(trpy.pitch)).wrap_angle(),
                            (rpy.yaw - DiffScalar::constant(trpy.yaw)).wrap_angle(),
                        ]
                    }),
                    vec![0.0; 6],
                    vec![0.0; 6],
                )
            }
            (RobotModel::Spatial(arm), TaskPose::Spatial(t), TargetMode::PositionOnly) => {
                let chain = arm.chain.clone();
                let tp = t.position.clone();
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = forward_kinematics(&chain, q);
                        vec![
                            fk.position.x - DiffScalar::constant(tp.x),
                            fk.position.y - DiffScalar::constant(tp.y),
                            fk.position.z - DiffScalar::constant(tp.z),
                        ]
                    }),
                    vec![0.0; 3],
                    vec![0.0; 3],
                )
            }
            (RobotModel::Spatial(arm), TaskPose::Spatial(_), TargetMode::Box { lower, upper }) => {
                let chain = arm.chain.clone();
                (
                    Arc::new(move |q: &[DiffScalar]| {
                        let fk = forward_kinematics(&chain, q);
                        vec![fk.position.x, fk.position.y, fk.position.z]
                    }),
                    lower.clone(),
                    upper.clone(),
                )
            }
            _ => unreachable!("validated problem"),
        };
    blocks.push(ConstraintBlock {
        name: "pose".into(),
        linear: false,
        lower: lo,
        upper: hi,
        eval: rows,
    });

    push_joint_constraint_blocks(problem, &mut blocks, None);

    NlProgram {
        num_vars: d,
        lower,
        upper,
        cost: joint_cost_fn(&problem.cost),
        blocks,
        initial_guess: vec![0.0; d],
    }
}

/// Appends collision and user constraint blocks. When `through_ik` is given
/// the blocks compose with the IK map (variables are the new-formulation
/// vector); otherwise they act on the joints directly.
/// Maps program variables to the joint vector, `None` off the IK domain.
type JointMap = Arc<dyn Fn(&[DiffScalar]) -> Option<Vec<DiffScalar>> + Send + Sync>;

fn push_joint_constraint_blocks(
    problem: &IkProblem,
    blocks: &mut Vec<ConstraintBlock>,
    through_ik: Option<Branch>,
) {
    let to_joints = |robot: RobotModel, branch: Option<Branch>| -> JointMap {
        match branch {
            None => Arc::new(|q: &[DiffScalar]| Some(q.to_vec())),
            Some(b) => {
                Arc::new(move |x: &[DiffScalar]| recover_state(&robot, x, b).ok().map(|r| r.q))
            }
        }
    };

    if !problem.scene.spheres.is_empty() {
        let chain = problem.robot.collision_chain();
        let zeros = vec![0.0; chain.dof()];
        let rows = min_distance_residuals(
            &chain,
            &zeros,
            &problem.scene.spheres,
            &problem.scene.boxes,
            problem.scene.d_min,
        )
        .len();
        if rows > 0 {
            let spheres = problem.scene.spheres.clone();
            let boxes = problem.scene.boxes.clone();
            let d_min = problem.scene.d_min;
            let joints = to_joints(problem.robot.clone(), through_ik);
            blocks.push(ConstraintBlock {
                name: "collision".into(),
                linear: false,
                lower: vec![0.0; rows],
                upper: vec![f64::INFINITY; rows],
                eval: Arc::new(move |x: &[DiffScalar]| match joints(x) {
                    Some(q) => min_distance_residuals(&chain, &q, &spheres, &boxes, d_min),
                    None => nan_rows(rows),
                }),
            });
        }
    }

    for (idx, extra) in problem.extra_ineq.iter().enumerate() {
        let rows = extra.rows;
        let f = extra.eval.clone();
        let joints = to_joints(problem.robot.clone(), through_ik);
        blocks.push(ConstraintBlock {
            name: format!("user-ineq-{idx}"),
            linear: false,
            lower: vec![f64::NEG_INFINITY; rows],
            upper: vec![0.0; rows],
            eval: Arc::new(move |x: &[DiffScalar]| match joints(x) {
                Some(q) => f(&q),
                None => nan_rows(rows),
            }),
        });
    }
    for (idx, extra) in problem.extra_eq.iter().enumerate() {
        let rows = extra.rows;
        let f = extra.eval.clone();
        let joints = to_joints(problem.robot.clone(), through_ik);
        blocks.push(ConstraintBlock {
            name: format!("user-eq-{idx}"),
            linear: false,
            lower: vec![0.0; rows],
            upper: vec![0.0; rows],
            eval: Arc::new(move |x: &[DiffScalar]| match joints(x) {
                Some(q) => f(&q),
                None => nan_rows(rows),
            }),
        });
    }
}

/// Target values of the new-formulation pose variables: `(x, y, theta)`
/// planar, `(p, rpy)` spatial.
fn pose_variable_targets(target: &TaskPose) -> Vec<f64> {
    match target {
        TaskPose::Planar(t) => vec![t.x, t.y, t.theta],
        TaskPose::Spatial(t) => {
            let rpy = rpy_from_rotation(&t.rotation);
            vec![
                t.position.x,
                t.position.y,
                t.position.z,
                rpy.roll,
                rpy.pitch,
                rpy.yaw,
            ]
        }
    }
}

/// Builds the change-of-variables program for one fixed branch.
///
/// Variables are `[free joints.., pose components.., psi*]`; the pose-target
/// rows are linear identity rows, reachability enters as probe rows, and all
/// joint-space constraints compose with the IK map.
pub fn build_new(problem: &IkProblem, branch: Branch) -> NlProgram {
    problem.validate().expect("invalid problem");
    match (&problem.robot, branch) {
        (RobotModel::Planar(_), Branch::Planar(_)) => {}
        (RobotModel::Spatial(_), Branch::Srs(_)) => {}
        _ => panic!("branch kind does not match the robot"),
    }
    let k = problem.robot.free_prefix();
    let (q_lb, q_ub) = problem.robot.joint_bounds();
    let task = problem.robot.task_dim();
    let num_vars = match &problem.robot {
        RobotModel::Planar(c) => c.n,
        RobotModel::Spatial(a) => a.prefix + 7,
    };

    // Free joints keep their boxes; pose and self-motion variables are
    // unconstrained (the target rows pin the pose).
    let mut lower = q_lb[..k].to_vec();
    let mut upper = q_ub[..k].to_vec();
    lower.resize(num_vars, f64::NEG_INFINITY);
    upper.resize(num_vars, f64::INFINITY);

    let mut blocks = Vec::new();

    // Linear target rows on the pose variables.
    let targets = pose_variable_targets(&problem.target);
    let (sel, lo, hi): (Vec<usize>, Vec<f64>, Vec<f64>) = match &problem.mode {
        TargetMode::Full => (
            (0..task).map(|i| k + i).collect(),
            targets.clone(),
            targets.clone(),
        ),
        TargetMode::PositionOnly => {
            let p = task - 3; // 2 planar, 3 spatial
            (
                (0..p).map(|i| k + i).collect(),
                targets[..p].to_vec(),
                targets[..p].to_vec(),
            )
        }
        TargetMode::Box { lower, upper } => (
            (0..lower.len()).map(|i| k + i).collect(),
            lower.clone(),
            upper.clone(),
        ),
    };
    {
        let sel = sel.clone();
        blocks.push(ConstraintBlock {
            name: "target".into(),
            linear: true,
            lower: lo,
            upper: hi,
            eval: Arc::new(move |x: &[DiffScalar]| sel.iter().map(|i| x[*i].clone()).collect()),
        });
    }

    // Reachability probes.
    let probe_rows = match &problem.robot {
        RobotModel::Planar(_) => 1,
        RobotModel::Spatial(_) => 6,
    };
    {
        let robot = problem.robot.clone();
        blocks.push(ConstraintBlock {
            name: "probes".into(),
            linear: false,
            lower: vec![PROBE_MARGIN; probe_rows],
            upper: vec![f64::INFINITY; probe_rows],
            eval: Arc::new(
                move |x: &[DiffScalar]| match recover_state(&robot, x, branch) {
                    Ok(r) => r.probes,
                    Err(_) => nan_rows(probe_rows),
                },
            ),
        });
    }

    // Joint limits of the IK-determined tail joints.
    let tail = problem.robot.dof() - k;
    {
        let robot = problem.robot.clone();
        blocks.push(ConstraintBlock {
            name: "joint-limits".into(),
            linear: false,
            lower: q_lb[k..].to_vec(),
            upper: q_ub[k..].to_vec(),
            eval: Arc::new(
                move |x: &[DiffScalar]| match recover_state(&robot, x, branch) {
                    Ok(r) => r.q[r.q.len() - tail..].to_vec(),
                    Err(_) => nan_rows(tail),
                },
            ),
        });
    }

    push_joint_constraint_blocks(problem, &mut blocks, Some(branch));

    // Start at the target pose (linear rows satisfied) with centered free
    // joints and zero self-motion angle.
    let mut initial_guess = vec![0.0; num_vars];
    for (i, v) in sel.iter().zip(match &problem.mode {
        TargetMode::Full | TargetMode::PositionOnly => targets.clone(),
        TargetMode::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect(),
    }) {
        initial_guess[*i] = v;
    }
    if problem.mode != TargetMode::Full {
        // Orientation variables default to the target's orientation even
        // when unconstrained, as a reasonable starting point.
        initial_guess[k + sel.len()..k + task].copy_from_slice(&targets[sel.len()..task]);
    }

    let robot = problem.robot.clone();
    let jc = joint_cost_fn(&problem.cost);
    NlProgram {
        num_vars,
        lower,
        upper,
        cost: Arc::new(
            move |x: &[DiffScalar]| match recover_state(&robot, x, branch) {
                Ok(r) => jc(&r.q),
                Err(_) => DiffScalar::constant(f64::NAN),
            },
        ),
        blocks,
        initial_guess,
    }
}

/// A new-formulation starting point matched to a joint-space seed.
#[derive(Clone, Debug)]
pub struct MatchedGuess {
    /// Variable vector with `IK(x0) = q0` (away from probe boundaries).
    pub x0: Vec<f64>,
    pub branch: Branch,
}

/// Matches a joint seed `q0` to new-formulation variables: the pose part is
/// `FK(q0)`, the free joints copy over, and the self-motion angle and branch
/// are extracted from the configuration. Near probe boundaries the map is
/// not invertible and the reproduction degrades; truly singular seeds
/// (spatial wrist on the shoulder axis) are rejected.
pub fn match_initial_guess(robot: &RobotModel, q0: &[f64]) -> crate::Result<MatchedGuess> {
    assert_eq!(q0.len(), robot.dof(), "joint vector length mismatch");
    match robot {
        RobotModel::Planar(chain) => {
            let k = chain.n - 3;
            let pose = planar_fk(chain, q0);
            let mut x0 = q0[..k].to_vec();
            x0.extend([pose.x, pose.y, pose.theta]);
            Ok(MatchedGuess {
                x0,
                branch: Branch::Planar(planar_branch_of(&q0[k..])),
            })
        }
        RobotModel::Spatial(arm) => {
            let k = arm.prefix;
            let tail = &q0[k..];
            let psi = srs_psi_of(&arm.srs, tail).map_err(|_| {
                crate::Error::Singular(
                    "seed joints are at an IK singularity; resample the seed".into(),
                )
            })?;
            let pose = forward_kinematics(&arm.chain, q0);
            let rpy = rpy_from_rotation(&pose.rotation);
            let mut x0 = q0[..k].to_vec();
            x0.extend([
                pose.position.x,
                pose.position.y,
                pose.position.z,
                rpy.roll,
                rpy.pitch,
                rpy.yaw,
                psi,
            ]);
            Ok(MatchedGuess {
                x0,
                branch: Branch::Srs(SrsBranch::from_joints(tail)),
            })
        }
    }
}

/// Independent feasibility check of a joint vector against the problem:
/// returns the maximum violation across pose target, joint boxes, collision
/// clearances, and user constraints. This re-check never goes through the IK
/// map, so it validates new-formulation solutions on the old formulation's
/// terms.
pub fn verify_joint_solution(problem: &IkProblem, q: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    let d = problem.robot.dof();
    assert_eq!(q.len(), d);

    let (lb, ub) = problem.robot.joint_bounds();
    for i in 0..d {
        worst = worst.max(lb[i] - q[i]).max(q[i] - ub[i]);
    }

    let box_violation = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    match (&problem.robot, &problem.target) {
        (RobotModel::Planar(chain), TaskPose::Planar(t)) => {
            let fk = planar_fk(chain, q);
            match &problem.mode {
                TargetMode::Full => {
                    worst = worst
                        .max((fk.x - t.x).abs())
                        .max((fk.y - t.y).abs())
                        .max((fk.theta - t.theta).wrap_angle().abs());
                }
                TargetMode::PositionOnly => {
                    worst = worst.max((fk.x - t.x).abs()).max((fk.y - t.y).abs());
                }
                TargetMode::Box { lower, upper } => {
                    worst = worst
                        .max(box_violation(fk.x, lower[0], upper[0]))
                        .max(box_violation(fk.y, lower[1], upper[1]));
                }
            }
        }
        (RobotModel::Spatial(arm), TaskPose::Spatial(t)) => {
            let fk = forward_kinematics(&arm.chain, q);
            match &problem.mode {
                TargetMode::Full => {
                    let rpy = rpy_from_rotation(&fk.rotation);
                    let trpy = rpy_from_rotation(&t.rotation);
                    worst = worst
                        .max((fk.position.x - t.position.x).abs())
                        .max((fk.position.y - t.position.y).abs())
                        .max((fk.position.z - t.position.z).abs())
                        .max((rpy.roll - trpy.roll).wrap_angle().abs())
                        .max((rpy.pitch - trpy.pitch).wrap_angle().abs())
                        .max((rpy.yaw - trpy.yaw).wrap_angle().abs());
                }
                TargetMode::PositionOnly => {
                    worst = worst
                        .max((fk.position.x - t.position.x).abs())
                        .max((fk.position.y - t.position.y).abs())
                        .max((fk.position.z - t.position.z).abs());
                }
                TargetMode::Box { lower, upper } => {
                    for (i, v) in [fk.position.x, fk.position.y, fk.position.z]
                        .iter()
                        .enumerate()
                    {
                        worst = worst.max(box_violation(*v, lower[i], upper[i]));
                    }
                }
            }
        }
        _ => return f64::INFINITY,
    }

    if !problem.scene.spheres.is_empty() {
        let chain = problem.robot.collision_chain();
        for r in min_distance_residuals(
            &chain,
            q,
            &problem.scene.spheres,
            &problem.scene.boxes,
            problem.scene.d_min,
        ) {
            worst = worst.max(-r);
        }
    }
    let qd: Vec<DiffScalar> = q.iter().map(|v| DiffScalar::constant(*v)).collect();
    for extra in &problem.extra_ineq {
        for row in (extra.eval)(&qd) {
            worst = worst.max(row.value());
        }
    }
    for extra in &problem.extra_eq {
        for row in (extra.eval)(&qd) {
            worst = worst.max(row.value().abs());
        }
    }
    worst
}

/// JSON problem description: robot, target, and optional mode/cost/scene.
#[derive(Serialize, Deserialize)]
struct ProblemJson {
    robot: RobotJson,
    target: TargetJson,
    #[serde(default)]
    mode: Option<TargetMode>,
    #[serde(default)]
    cost: Option<CostJson>,
    #[serde(default)]
    scene: Option<Scene>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RobotJson {
    Planar {
        n: usize,
    },
    Spatial {
        n_extra: usize,
        total_length: Option<f64>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TargetJson {
    Pose2 { x: f64, y: f64, theta: f64 },
    Pose3 { position: [f64; 3], rpy: [f64; 3] },
}

#[derive(Serialize, Deserialize)]
struct CostJson {
    #[serde(default)]
    q_nom: Option<Vec<f64>>,
    #[serde(default = "default_weight_scale")]
    weight_scale: f64,
}

fn default_weight_scale() -> f64 {
    1.0
}

/// Loads an [`IkProblem`] from a JSON file.
pub fn load_problem(path: &std::path::Path) -> crate::Result<IkProblem> {
    let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let spec: ProblemJson = serde_json::from_str(&text).map_err(|source| crate::Error::Parse {
        path: path.display().to_string(),
        source,
    })?;

    let robot = match spec.robot {
        RobotJson::Planar { n } => RobotModel::Planar(PlanarChain::new(n)?),
        RobotJson::Spatial {
            n_extra,
            total_length,
        } => RobotModel::Spatial(crate::kinematics::scaled_arm(
            n_extra,
            total_length.unwrap_or(1.0),
        )?),
    };
    let target = match spec.target {
        TargetJson::Pose2 { x, y, theta } => TaskPose::Planar(Pose2::new(x, y, theta)),
        TargetJson::Pose3 { position, rpy } => TaskPose::Spatial(Pose3::new(
            rotation_from_rpy(&EulerRpy::new(rpy[0], rpy[1], rpy[2])),
            Vec3::new(position[0], position[1], position[2]),
        )),
    };
    let mut problem = IkProblem::new(robot, target);
    if let Some(mode) = spec.mode {
        problem.mode = mode;
    }
    if let Some(c) = spec.cost {
        let d = problem.robot.dof();
        problem.cost = Some(CenteringCost {
            weight: crate::constraints::identity_weight(d, c.weight_scale),
            q_nom: c.q_nom.unwrap_or_else(|| vec![0.0; d]),
        });
    }
    if let Some(scene) = spec.scene {
        problem.scene = scene;
    }
    problem.validate()?;
    Ok(problem)
}
