//! Grid-sampling baseline over self-motion parameters and solution branches.
//!
//! Instead of solving a nonlinear program, enumerate the analytic IK map on
//! a uniform grid: every branch combined with a lattice over the continuous
//! inputs (the free prefix joints, plus the self-motion angle for the
//! spatial arm). Each sample that passes the probe, limit, collision and
//! extra-constraint filters is scored by the problem cost; the cheapest one
//! wins. Grids use half-open intervals so that doubling the resolution
//! yields a strict superset of the coarse grid, which makes refinement
//! monotone in the returned cost.

use crate::analytic_ik::{planar_chain_ik, spatial_arm_ik, Branch, SrsBranch};
use crate::autodiff::DiffScalar;
use crate::formulation::{joint_cost_fn, verify_joint_solution, IkProblem, RobotModel, TaskPose};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Feasibility tolerance for the independent re-check of each sample.
pub const SAMPLE_FEASIBILITY_TOL: f64 = 1e-8;

/// Grid layout for [`sample_ik`].
#[derive(Clone, Debug)]
pub struct SamplePlan {
    /// Grid points per continuous parameter.
    pub resolution: usize,
    /// Branches to enumerate.
    pub branches: Vec<Branch>,
    /// Optional hard cap on the number of evaluated samples.
    pub max_samples: Option<usize>,
}

impl SamplePlan {
    /// All branches of the given robot at the given resolution.
    pub fn full(robot: &RobotModel, resolution: usize) -> SamplePlan {
        let branches = match robot {
            RobotModel::Planar(_) => vec![Branch::Planar(1), Branch::Planar(-1)],
            RobotModel::Spatial(_) => SrsBranch::all().iter().map(|b| Branch::Srs(*b)).collect(),
        };
        SamplePlan {
            resolution,
            branches,
            max_samples: None,
        }
    }

    /// Total evaluations: `resolution^continuous_params * |branches|`,
    /// saturating, before any `max_samples` cap.
    pub fn budget(&self, continuous_params: usize) -> usize {
        let mut grid = 1usize;
        for _ in 0..continuous_params {
            grid = grid.saturating_mul(self.resolution);
        }
        grid.saturating_mul(self.branches.len())
    }
}

/// Number of continuous grid parameters for a robot: the free prefix
/// joints, plus the self-motion angle for the spatial arm.
pub fn continuous_params(robot: &RobotModel) -> usize {
    match robot {
        RobotModel::Planar(_) => robot.free_prefix(),
        RobotModel::Spatial(_) => robot.free_prefix() + 1,
    }
}

/// Decodes grid index `gi` into parameter values (mixed radix, first
/// parameter slowest). Free joints sweep `[-pi, pi)`; the trailing
/// self-motion angle sweeps `[0, 2*pi)`.
fn grid_point(gi: usize, resolution: usize, params: usize, robot: &RobotModel) -> Vec<f64> {
    let mut digits = vec![0usize; params];
    let mut rest = gi;
    for d in (0..params).rev() {
        digits[d] = rest % resolution;
        rest /= resolution;
    }
    let psi_param = matches!(robot, RobotModel::Spatial(_));
    digits
        .iter()
        .enumerate()
        .map(|(d, &j)| {
            let t = j as f64 / resolution as f64;
            if psi_param && d + 1 == params {
                2.0 * PI * t
            } else {
                -PI + 2.0 * PI * t
            }
        })
        .collect()
}

/// Runs the analytic IK map for one sample; `None` when the map fails, a
/// probe is negative, or the argument was clipped.
fn ik_sample(
    robot: &RobotModel,
    target: &TaskPose,
    params: &[f64],
    branch: Branch,
) -> Option<Vec<f64>> {
    match (robot, target) {
        (RobotModel::Planar(chain), TaskPose::Planar(pose)) => {
            let Branch::Planar(g) = branch else {
                return None;
            };
            let result = planar_chain_ik(chain, params, pose, g);
            if result.clipped || result.probes.iter().any(|p| *p < 0.0) {
                return None;
            }
            Some(result.q)
        }
        (RobotModel::Spatial(arm), TaskPose::Spatial(pose)) => {
            let Branch::Srs(b) = branch else { return None };
            let (q_prefix, psi) = params.split_at(params.len() - 1);
            let result = spatial_arm_ik(arm, q_prefix, pose, &psi[0], b).ok()?;
            if result.clipped || result.probes.iter().any(|p| *p < 0.0) {
                return None;
            }
            Some(result.q)
        }
        _ => None,
    }
}

/// Evaluates the IK map over the whole grid and returns the cheapest sample
/// that passes every constraint, or `None` if the feasible set is empty.
/// Exact cost ties are broken toward the lowest sample index, so the result
/// does not depend on thread scheduling.
pub fn sample_ik(problem: &IkProblem, plan: &SamplePlan) -> Option<(Vec<f64>, f64)> {
    let robot = &problem.robot;
    let params = continuous_params(robot);
    let resolution = plan.resolution.max(1);
    let branches = &plan.branches;
    if branches.is_empty() {
        return None;
    }
    let mut grid = 1usize;
    for _ in 0..params {
        grid = grid.saturating_mul(resolution);
    }
    let total = grid
        .saturating_mul(branches.len())
        .min(plan.max_samples.unwrap_or(usize::MAX));
    let cost_fn = joint_cost_fn(&problem.cost);

    let best = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let gi = idx / branches.len();
            let bi = idx % branches.len();
            let point = grid_point(gi, resolution, params, robot);
            let q = ik_sample(robot, &problem.target, &point, branches[bi])?;
            if verify_joint_solution(problem, &q) > SAMPLE_FEASIBILITY_TOL {
                return None;
            }
            let cost = cost_fn(&DiffScalar::constants(&q)).value();
            if !cost.is_finite() {
                return None;
            }
            Some((cost, idx, q))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    best.map(|(cost, _, q)| (q, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{BoxObstacle, CollisionSphere, Scene};
    use crate::formulation::CenteringCost;
    use crate::geometry::{Pose2, Vec3};
    use crate::kinematics::{forward_kinematics, planar_fk, scaled_arm, PlanarChain};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn budget_is_product_of_resolutions_and_branches() {
        let chain = PlanarChain::new(6).unwrap();
        let robot = RobotModel::Planar(chain);
        let plan = SamplePlan::full(&robot, 5);
        assert_eq!(continuous_params(&robot), 3);
        assert_eq!(plan.budget(3), 5 * 5 * 5 * 2);

        let arm = scaled_arm(0, 1.0).unwrap();
        let robot = RobotModel::Spatial(arm);
        let plan = SamplePlan::full(&robot, 64);
        assert_eq!(continuous_params(&robot), 1);
        assert_eq!(plan.budget(1), 64 * 8);
    }

    #[test]
    fn unreachable_planar_target_returns_none() {
        let chain = PlanarChain::new(4).unwrap();
        let robot = RobotModel::Planar(chain.clone());
        // Total reach is 1, so a target at radius 1.5 is out of range and
        // every sampled probe must come out negative.
        let target = Pose2::new(1.5, 0.0, 0.3);
        let problem = IkProblem::new(robot.clone(), TaskPose::Planar(target.clone()));
        let plan = SamplePlan::full(&robot, 16);
        assert!(sample_ik(&problem, &plan).is_none());

        for j in 0..16 {
            let q_free = [-PI + 2.0 * PI * j as f64 / 16.0];
            let r = planar_chain_ik(&chain, &q_free, &target, 1);
            assert!(r.probes[0] < 0.0, "probe {} at sample {j}", r.probes[0]);
        }
    }

    #[test]
    fn srs_fk_targets_are_mostly_hit() {
        let arm = scaled_arm(0, 1.0).unwrap();
        let robot = RobotModel::Spatial(arm.clone());
        let plan = SamplePlan::full(&robot, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let mut hits = 0;
        for _ in 0..200 {
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.6..2.6)).collect();
            let target = forward_kinematics(&arm.chain, &q).values();
            let problem = IkProblem::new(robot.clone(), TaskPose::Spatial(target));
            if let Some((q_best, _)) = sample_ik(&problem, &plan) {
                hits += 1;
                // Returned samples always pass the independent re-check.
                assert!(verify_joint_solution(&problem, &q_best) <= SAMPLE_FEASIBILITY_TOL);
            }
        }
        assert!(hits >= 190, "only {hits}/200 targets hit");
    }

    #[test]
    fn doubling_the_grid_never_increases_cost() {
        let arm = scaled_arm(0, 1.0).unwrap();
        let robot = RobotModel::Spatial(arm.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for _ in 0..30 {
            let q: Vec<f64> = (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let target = forward_kinematics(&arm.chain, &q).values();
            let q_nom: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut problem = IkProblem::new(robot.clone(), TaskPose::Spatial(target));
            problem.cost = Some(CenteringCost {
                weight: crate::constraints::identity_weight(7, 1.0),
                q_nom,
            });
            let coarse = sample_ik(&problem, &SamplePlan::full(&robot, 16));
            let fine = sample_ik(&problem, &SamplePlan::full(&robot, 32));
            if let Some((_, c_coarse)) = coarse {
                let (_, c_fine) = fine.expect("refined grid lost a feasible sample");
                assert!(
                    c_fine <= c_coarse + 1e-12,
                    "refinement increased cost: {c_coarse} -> {c_fine}"
                );
            }
        }
    }

    #[test]
    fn planar_refinement_is_monotone_too() {
        let chain = PlanarChain::new(5).unwrap();
        let robot = RobotModel::Planar(chain.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..20 {
            let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let target = planar_fk(&chain, &q);
            let q_nom: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let mut problem = IkProblem::new(robot.clone(), TaskPose::Planar(target));
            problem.cost = Some(CenteringCost {
                weight: crate::constraints::identity_weight(5, 1.0),
                q_nom,
            });
            let coarse = sample_ik(&problem, &SamplePlan::full(&robot, 6));
            let fine = sample_ik(&problem, &SamplePlan::full(&robot, 12));
            if let Some((_, c_coarse)) = coarse {
                let (_, c_fine) = fine.expect("refined grid lost a feasible sample");
                assert!(c_fine <= c_coarse + 1e-12);
            }
        }
    }

    #[test]
    fn exact_ties_resolve_to_the_first_sample() {
        // A feasibility problem (constant zero cost) makes every feasible
        // sample tie; the parallel reduction must still return the same
        // joints as a serial scan.
        let chain = PlanarChain::new(4).unwrap();
        let robot = RobotModel::Planar(chain.clone());
        let target = planar_fk(&chain, &[0.4, 0.5, -0.3, 0.2]);
        let problem = IkProblem::new(robot.clone(), TaskPose::Planar(target.clone()));
        let plan = SamplePlan::full(&robot, 24);

        let (q_par, cost) = sample_ik(&problem, &plan).unwrap();
        assert_eq!(cost, 0.0);

        let mut expected: Option<Vec<f64>> = None;
        'outer: for gi in 0..24 {
            for branch in [1, -1] {
                let point = [-PI + 2.0 * PI * (gi as f64 / 24.0)];
                let r = planar_chain_ik(&chain, &point, &target, branch);
                if !r.clipped
                    && r.probes.iter().all(|p| *p >= 0.0)
                    && verify_joint_solution(&problem, &r.q) <= SAMPLE_FEASIBILITY_TOL
                {
                    expected = Some(r.q);
                    break 'outer;
                }
            }
        }
        let expected = expected.expect("serial scan found no feasible sample");
        for (a, b) in q_par.iter().zip(&expected) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn blocking_obstacle_empties_the_feasible_set() {
        let chain = PlanarChain::new(4).unwrap();
        let robot = RobotModel::Planar(chain.clone());
        let target = planar_fk(&chain, &[0.3, -0.2, 0.4, 0.1]);
        let mut problem = IkProblem::new(robot.clone(), TaskPose::Planar(target));
        // Without obstacles the target is hit...
        let plan = SamplePlan::full(&robot, 16);
        assert!(sample_ik(&problem, &plan).is_some());
        // ...but a box swallowing the whole workspace leaves nothing.
        problem.scene = Scene {
            spheres: (0..=4)
                .map(|i| CollisionSphere {
                    link_index: i,
                    local_offset: Vec3::new(0.0, 0.0, 0.0),
                    radius: 0.05,
                })
                .collect(),
            boxes: vec![BoxObstacle {
                center: Vec3::new(0.0, 0.0, 0.0),
                half_extents: Vec3::new(5.0, 5.0, 5.0),
            }],
            d_min: 0.001,
        };
        assert!(sample_ik(&problem, &plan).is_none());
    }

    #[test]
    fn sample_cap_limits_the_scan() {
        let chain = PlanarChain::new(4).unwrap();
        let robot = RobotModel::Planar(chain.clone());
        let target = planar_fk(&chain, &[0.4, 0.5, -0.3, 0.2]);
        let problem = IkProblem::new(robot.clone(), TaskPose::Planar(target));
        let mut plan = SamplePlan::full(&robot, 16);
        plan.max_samples = Some(0);
        assert!(sample_ik(&problem, &plan).is_none());
        plan.max_samples = Some(16 * 2);
        let capped = sample_ik(&problem, &plan);
        plan.max_samples = None;
        let full = sample_ik(&problem, &plan);
        // The cap covers the whole grid here, so results agree exactly.
        assert_eq!(
            capped.map(|(q, _)| q.iter().map(|v| v.to_bits()).collect::<Vec<_>>()),
            full.map(|(q, _)| q.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        );
    }
}
