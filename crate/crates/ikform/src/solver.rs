//! Augmented-Lagrangian solver for [`NlProgram`].
//!
//! Equality rows enter the merit function as `lambda*r + (rho/2)*r^2`;
//! inequality rows use the slack-free `max(0, mu + rho*c)^2` form, one
//! multiplier per active side of each row's `[lower, upper]` interval. The
//! inner minimization is a box-projected L-BFGS with a backtracking line
//! search that treats non-finite trial values as step rejections — this is
//! what keeps iterates inside the domain of IK maps and square roots without
//! any problem-specific hooks.
//!
//! After convergence, rows flagged linear are polished by a least-squares
//! projection onto their affine set, which brings the pose-target rows of
//! the change-of-variables formulation to near machine precision.

use crate::autodiff::{DiffScalar, Scalar};
use crate::formulation::NlProgram;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Augmented-Lagrangian parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Maximum constraint violation accepted as feasible.
    pub feasibility_tol: f64,
    /// Projected-gradient norm demanded of the final inner solve.
    pub optimality_tol: f64,
    pub max_outer: usize,
    /// Inner iteration budget per outer iteration.
    pub max_inner: usize,
    pub initial_penalty: f64,
    /// Penalty multiplier applied when progress is too slow.
    pub penalty_growth: f64,
    /// Required per-outer shrink factor of the max violation; slower
    /// progress triggers penalty growth.
    pub violation_shrink: f64,
    /// Wall-clock budget in seconds.
    pub timeout: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feasibility_tol: 1e-8,
            optimality_tol: 1e-6,
            max_outer: 50,
            max_inner: 200,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            violation_shrink: 4.0,
            timeout: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Solved,
    InfeasibleStalled,
    Timeout,
    EvaluationFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Solved => "solved",
            SolveStatus::InfeasibleStalled => "infeasible-stalled",
            SolveStatus::Timeout => "timeout",
            SolveStatus::EvaluationFailure => "evaluation-failure",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x_star: Vec<f64>,
    pub cost: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Default)]
struct RowMultipliers {
    lambda: f64,
    mu_lower: f64,
    mu_upper: f64,
}

const MULTIPLIER_CAP: f64 = 1e8;
const PENALTY_CAP: f64 = 1e12;

fn clamp_to_box(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Evaluates all constraint rows as plain values.
fn eval_rows(program: &NlProgram, x: &[f64]) -> Option<Vec<f64>> {
    let vars = DiffScalar::constants(x);
    let mut out = Vec::with_capacity(program.constraint_rows());
    for block in &program.blocks {
        let vals = (block.eval)(&vars);
        debug_assert_eq!(vals.len(), block.rows(), "block '{}' row count", block.name);
        out.extend(vals.into_iter().map(|v| v.value()));
    }
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Row bounds flattened across blocks.
fn row_bounds(program: &NlProgram) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for block in &program.blocks {
        lo.extend_from_slice(&block.lower);
        hi.extend_from_slice(&block.upper);
    }
    (lo, hi)
}

fn max_row_violation(values: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| (lo[i] - v).max(v - hi[i]).max(0.0))
        .fold(0.0, f64::max)
}

/// Maximum constraint violation and cost at `x` (independent re-check used
/// for status soundness; NaN anywhere counts as infinite violation).
pub fn evaluate_program(program: &NlProgram, x: &[f64]) -> (f64, f64) {
    let (lo, hi) = row_bounds(program);
    let box_viol = x
        .iter()
        .enumerate()
        .map(|(i, v)| (program.lower[i] - v).max(v - program.upper[i]).max(0.0))
        .fold(0.0, f64::max);
    let cost = (program.cost)(&DiffScalar::constants(x)).value();
    match eval_rows(program, x) {
        Some(vals) => (max_row_violation(&vals, &lo, &hi).max(box_viol), cost),
        None => (f64::INFINITY, cost),
    }
}

/// Augmented Lagrangian value (and gradient when `with_grad`) at `x`.
fn al_eval(
    program: &NlProgram,
    mult: &[RowMultipliers],
    rho: f64,
    lo: &[f64],
    hi: &[f64],
    x: &[f64],
    with_grad: bool,
) -> Option<(f64, Vec<f64>)> {
    let vars = if with_grad {
        DiffScalar::seed(x)
    } else {
        DiffScalar::constants(x)
    };
    let zero = DiffScalar::constant(0.0);
    let mut l = (program.cost)(&vars);
    if !l.value().is_finite() {
        return None;
    }
    let mut r = 0usize;
    for block in &program.blocks {
        let vals = (block.eval)(&vars);
        for v in vals {
            if !v.value().is_finite() {
                return None;
            }
            let m = &mult[r];
            if lo[r] == hi[r] {
                let resid = v - DiffScalar::constant(lo[r]);
                l = l
                    + resid.clone() * DiffScalar::constant(m.lambda)
                    + resid.clone() * resid * DiffScalar::constant(0.5 * rho);
            } else {
                if lo[r].is_finite() {
                    let c = DiffScalar::constant(lo[r]) - v.clone();
                    let t = (c * DiffScalar::constant(rho) + DiffScalar::constant(m.mu_lower))
                        .maximum(&zero);
                    l = l
                        + (t.clone() * t - DiffScalar::constant(m.mu_lower * m.mu_lower))
                            * DiffScalar::constant(0.5 / rho);
                }
                if hi[r].is_finite() {
                    let c = v.clone() - DiffScalar::constant(hi[r]);
                    let t = (c * DiffScalar::constant(rho) + DiffScalar::constant(m.mu_upper))
                        .maximum(&zero);
                    l = l
                        + (t.clone() * t - DiffScalar::constant(m.mu_upper * m.mu_upper))
                            * DiffScalar::constant(0.5 / rho);
                }
            }
            r += 1;
        }
    }
    if !l.value().is_finite() {
        return None;
    }
    let g = if with_grad {
        let g = l.gradient(program.num_vars);
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        g
    } else {
        Vec::new()
    };
    Some((l.value(), g))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop L-BFGS recursion: approximates `-H * g`.
fn lbfgs_direction(g: &[f64], hist: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y) in hist.iter().rev() {
        let rho_i = 1.0 / dot(y, s);
        let a = rho_i * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho_i));
    }
    if let Some((s, y)) = hist.last() {
        let scale = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= scale;
        }
    }
    for ((s, y), (a, rho_i)) in hist.iter().zip(alphas.iter().rev()) {
        let b = rho_i * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Merit evaluator handed to the inner loop: value plus (optionally) the
/// gradient, or `None` when the point is not finite.
type MeritFn<'a> = dyn Fn(&[f64], bool) -> Option<(f64, Vec<f64>)> + 'a;

/// Scans coordinate steps `x ± alpha e_j` over a fixed deterministic order,
/// returning the first boxed move that lowers the merit value by more than
/// a relative epsilon (which keeps the scan from dithering on rounding
/// noise). Linear in dimension times the halving depth, so it is only
/// consulted after the gradient-based searches have already failed.
fn coordinate_rescue(
    eval: &MeritFn<'_>,
    x: &[f64],
    l: f64,
    blo: &[f64],
    bhi: &[f64],
) -> Option<(Vec<f64>, f64)> {
    for j in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut alpha = 0.1f64;
            for _ in 0..20 {
                let mut xt = x.to_vec();
                xt[j] = (xt[j] + sign * alpha).clamp(blo[j], bhi[j]);
                if (xt[j] - x[j]).abs() > 1e-16 {
                    if let Some((lt, _)) = eval(&xt, false) {
                        if lt < l - (1e-12 * l.abs()).max(1e-18) {
                            return Some((xt, lt));
                        }
                    }
                }
                alpha *= 0.5;
            }
        }
    }
    None
}

/// Infinity norm of the projected gradient `x - clamp(x - g)`.
fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, xi)| (xi - (xi - g[i]).clamp(lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

enum InnerOutcome {
    Converged(usize),
    Exhausted(usize),
    Stalled(usize),
    TimedOut(usize),
    EvalFailed,
}

#[allow(clippy::too_many_arguments)]
fn minimize_inner(
    program: &NlProgram,
    mult: &[RowMultipliers],
    rho: f64,
    row_lo: &[f64],
    row_hi: &[f64],
    x: &mut Vec<f64>,
    omega: f64,
    budget: usize,
    deadline: Option<(Instant, f64)>,
) -> InnerOutcome {
    let (blo, bhi) = (&program.lower, &program.upper);
    let eval = |x: &[f64], grad: bool| al_eval(program, mult, rho, row_lo, row_hi, x, grad);

    let (mut l, mut g) = match eval(x, true) {
        Some(v) => v,
        None => return InnerOutcome::EvalFailed,
    };
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut iters = 0usize;
    let mut rescues = 0usize;
    while iters < budget {
        if let Some((start, limit)) = deadline {
            if start.elapsed().as_secs_f64() > limit {
                return InnerOutcome::TimedOut(iters);
            }
        }
        if projected_gradient_norm(x, &g, blo, bhi) <= omega {
            return InnerOutcome::Converged(iters);
        }

        let mut accepted: Option<(Vec<f64>, f64)> = None;
        for attempt in 0..2 {
            let d: Vec<f64> = if attempt == 0 && !hist.is_empty() {
                lbfgs_direction(&g, &hist)
            } else {
                g.iter().map(|v| -v).collect()
            };
            if d.iter().any(|v| !v.is_finite()) || dot(&d, &g) >= 0.0 {
                continue;
            }
            // Cap the first trial step so a steep merit function cannot
            // fling the iterate across the variable box in one move.
            let d_norm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut alpha = if d_norm > 1.0 { 1.0 / d_norm } else { 1.0 };
            for _ in 0..60 {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                clamp_to_box(&mut xt, blo, bhi);
                let step: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let move_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if move_norm > 1e-16 {
                    if let Some((lt, _)) = eval(&xt, false) {
                        let slope = dot(&g, &step).min(0.0);
                        if lt <= l + 1e-4 * slope {
                            accepted = Some((xt, lt));
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            hist.clear();
        }

        // Gradient-based searches fail at active-constraint kinks, where
        // the merit function rises along both the quasi-Newton and the
        // steepest-descent direction. Single-coordinate moves stay on one
        // smooth side of such a kink, so probe those before giving up.
        if accepted.is_none() && rescues < 20 {
            rescues += 1;
            accepted = coordinate_rescue(&eval, x, l, blo, bhi);
        }
        let (xt, _) = match accepted {
            Some(v) => v,
            None => return InnerOutcome::Stalled(iters),
        };
        let (lt, gt) = match eval(&xt, true) {
            Some(v) => v,
            None => return InnerOutcome::Stalled(iters),
        };
        let s: Vec<f64> = xt.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            hist.push((s, y));
            if hist.len() > 8 {
                hist.remove(0);
            }
        }
        *x = xt;
        l = lt;
        g = gt;
        iters += 1;
    }
    InnerOutcome::Exhausted(iters)
}

/// Minimum-norm correction `delta = A^T (A A^T)^{-1} rhs` so that
/// `A delta = rhs`, via Gaussian elimination with partial pivoting on the
/// Gram matrix. Returns `None` when the rows are dependent.
#[allow(clippy::needless_range_loop)]
fn least_norm_correction(a_rows: &[Vec<f64>], rhs: &[f64], n: usize) -> Option<Vec<f64>> {
    let m = a_rows.len();
    let mut gram: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| dot(&a_rows[i], &a_rows[j])).collect())
        .collect();
    let mut b = rhs.to_vec();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|a, b| gram[*a][col].abs().total_cmp(&gram[*b][col].abs()))
            .unwrap();
        if gram[pivot][col].abs() < 1e-12 {
            return None;
        }
        gram.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..m {
            let f = gram[row][col] / gram[col][col];
            for k in col..m {
                gram[row][k] -= f * gram[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut w = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = b[row];
        for k in (row + 1)..m {
            acc -= gram[row][k] * w[k];
        }
        w[row] = acc / gram[row][row];
    }
    let mut delta = vec![0.0; n];
    for (i, a) in a_rows.iter().enumerate() {
        for (dj, aj) in delta.iter_mut().zip(a) {
            *dj += w[i] * aj;
        }
    }
    Some(delta)
}

/// Collects all equality rows (value and jacobian) at `x`; `linear_only`
/// restricts to blocks flagged linear.
fn equality_rows(
    program: &NlProgram,
    x: &[f64],
    linear_only: bool,
) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = program.num_vars;
    let seeded = DiffScalar::seed(x);
    let mut a_rows = Vec::new();
    let mut resid = Vec::new();
    for block in &program.blocks {
        if linear_only && !block.linear {
            continue;
        }
        let vals = (block.eval)(&seeded);
        for (j, v) in vals.iter().enumerate() {
            if block.lower[j] == block.upper[j] && block.lower[j].is_finite() {
                if !v.value().is_finite() {
                    return None;
                }
                a_rows.push(v.gradient(n));
                resid.push(v.value() - block.lower[j]);
            }
        }
    }
    Some((a_rows, resid))
}

/// A few Gauss-Newton least-norm steps on all equality rows, driving their
/// residuals from solver tolerance down toward machine precision. Steps that
/// fail to shrink the residual are halved and ultimately discarded.
fn polish_equality_rows(program: &NlProgram, x: &mut Vec<f64>) {
    for _ in 0..5 {
        let Some((a_rows, resid)) = equality_rows(program, x, false) else {
            return;
        };
        if a_rows.is_empty() {
            return;
        }
        let r_norm = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if r_norm <= 1e-13 {
            return;
        }
        let rhs: Vec<f64> = resid.iter().map(|r| -r).collect();
        let Some(mut step) = least_norm_correction(&a_rows, &rhs, program.num_vars) else {
            return;
        };
        let mut improved = false;
        for _ in 0..4 {
            let mut xt: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            clamp_to_box(&mut xt, &program.lower, &program.upper);
            if let Some((_, r_new)) = equality_rows(program, &xt, false) {
                let n_new = r_new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if n_new < r_norm {
                    *x = xt;
                    improved = true;
                    break;
                }
            }
            step.iter_mut().for_each(|v| *v *= 0.5);
        }
        if !improved {
            return;
        }
    }
}

/// Final cleanup at a solved exit: Gauss-Newton polish of the equality
/// rows, exact projection onto the linear ones, restoration of any
/// inequality row the projection disturbed. Reverts entirely if the
/// cleaned point is less feasible than the accepted one.
fn refine_solved(program: &NlProgram, x: &mut Vec<f64>, tol: f64) {
    let pre = x.clone();
    polish_equality_rows(program, x);
    project_onto_linear_rows(program, x);
    clamp_to_box(x, &program.lower, &program.upper);
    if evaluate_program(program, x).0 > tol {
        restore_inequality_rows(program, x);
    }
    if evaluate_program(program, x).0 > tol {
        *x = pre;
    }
}

/// Pulls violated inequality rows back onto their bounds with a few
/// Gauss-Newton least-norm steps whose system also contains every equality
/// row (so the exact linear projection just applied is preserved). Used at
/// the solved exit when that projection nudged an active inequality — for
/// example a reachability probe sitting exactly on its margin — slightly
/// past its bound.
fn restore_inequality_rows(program: &NlProgram, x: &mut Vec<f64>) {
    let n = program.num_vars;
    for _ in 0..5 {
        let seeded = DiffScalar::seed(x);
        let mut a_rows: Vec<Vec<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut worst = 0.0f64;
        for block in &program.blocks {
            let vals = (block.eval)(&seeded);
            for (j, v) in vals.iter().enumerate() {
                let (lo, hi) = (block.lower[j], block.upper[j]);
                let val = v.value();
                if !val.is_finite() {
                    return;
                }
                if lo == hi && lo.is_finite() {
                    a_rows.push(v.gradient(n));
                    rhs.push(lo - val);
                } else if lo.is_finite() && val < lo {
                    worst = worst.max(lo - val);
                    a_rows.push(v.gradient(n));
                    // Aim a hair inside the bound so the linearization
                    // error of the step cannot leave the row violated.
                    rhs.push(lo - val + 1e-12);
                } else if hi.is_finite() && val > hi {
                    worst = worst.max(val - hi);
                    a_rows.push(v.gradient(n));
                    rhs.push(hi - val - 1e-12);
                }
            }
        }
        if worst <= 0.0 || a_rows.is_empty() {
            return;
        }
        let Some(mut step) = least_norm_correction(&a_rows, &rhs, n) else {
            return;
        };
        let before = evaluate_program(program, x).0;
        let mut improved = false;
        for _ in 0..4 {
            let mut xt: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            clamp_to_box(&mut xt, &program.lower, &program.upper);
            if evaluate_program(program, &xt).0 < before {
                *x = xt;
                improved = true;
                break;
            }
            step.iter_mut().for_each(|v| *v *= 0.5);
        }
        if !improved {
            return;
        }
    }
}

/// Least-squares projection of `x` onto the affine set of all linear
/// equality rows. Silently skips if there are no such rows or the Gram
/// matrix is singular.
fn project_onto_linear_rows(program: &NlProgram, x: &mut [f64]) {
    let Some((a_rows, resid)) = equality_rows(program, x, true) else {
        return;
    };
    if a_rows.is_empty() {
        return;
    }
    let rhs: Vec<f64> = resid.iter().map(|r| -r).collect();
    if let Some(delta) = least_norm_correction(&a_rows, &rhs, program.num_vars) {
        for (xj, dj) in x.iter_mut().zip(&delta) {
            *xj += dj;
        }
    }
}

/// Solves the program with the augmented-Lagrangian method starting at `x0`
/// (projected into the variable box if outside). Deterministic for identical
/// inputs.
pub fn solve(program: &NlProgram, x0: &[f64], opts: &SolverOptions) -> SolveResult {
    let start = Instant::now();
    assert_eq!(x0.len(), program.num_vars, "initial guess length mismatch");
    let mut x = x0.to_vec();
    clamp_to_box(&mut x, &program.lower, &program.upper);
    let (row_lo, row_hi) = row_bounds(program);
    let rows = row_lo.len();
    let mut mult = vec![RowMultipliers::default(); rows];
    let mut rho = opts.initial_penalty;
    let mut omega = 1e-2_f64.max(opts.optimality_tol);
    let deadline = opts.timeout.map(|t| (start, t));

    let finish = |status: SolveStatus, x: Vec<f64>, outer: usize, inner: usize| {
        let (viol, cost) = evaluate_program(program, &x);
        let status = if status == SolveStatus::Solved && viol > opts.feasibility_tol {
            SolveStatus::InfeasibleStalled
        } else {
            status
        };
        SolveResult {
            status,
            x_star: x,
            cost,
            max_violation: viol,
            outer_iterations: outer,
            inner_iterations: inner,
            wall_time: start.elapsed().as_secs_f64(),
        }
    };

    // NaN at the projected starting point is an evaluation failure.
    if al_eval(program, &mult, rho, &row_lo, &row_hi, &x, false).is_none() {
        return finish(SolveStatus::EvaluationFailure, x, 0, 0);
    }

    let mut inner_total = 0usize;
    let mut prev_violation = f64::INFINITY;
    let mut stall_streak = 0usize;
    let mut feasible_streak = 0usize;
    for outer in 1..=opts.max_outer {
        let outcome = minimize_inner(
            program,
            &mult,
            rho,
            &row_lo,
            &row_hi,
            &mut x,
            omega,
            opts.max_inner,
            deadline,
        );
        let (converged, stalled) = match outcome {
            InnerOutcome::Converged(it) => {
                inner_total += it;
                (true, false)
            }
            InnerOutcome::Exhausted(it) => {
                inner_total += it;
                (false, false)
            }
            InnerOutcome::Stalled(it) => {
                inner_total += it;
                (false, true)
            }
            InnerOutcome::TimedOut(it) => {
                inner_total += it;
                return finish(SolveStatus::Timeout, x, outer, inner_total);
            }
            InnerOutcome::EvalFailed => {
                return finish(SolveStatus::EvaluationFailure, x, outer, inner_total);
            }
        };

        let values = match eval_rows(program, &x) {
            Some(v) => v,
            None => return finish(SolveStatus::InfeasibleStalled, x, outer, inner_total),
        };
        let violation = max_row_violation(&values, &row_lo, &row_hi);

        // Accept once the iterate is feasible at the final stationarity
        // target and the inner solver has either certified it (small
        // projected gradient), frozen (no descent within line-search
        // resolution, which happens at active-constraint kinks where the
        // projected gradient never vanishes), or circled it for several
        // rounds without leaving the feasible set.
        if violation <= opts.feasibility_tol && omega <= opts.optimality_tol {
            feasible_streak += 1;
            if converged || stalled || feasible_streak >= 5 {
                refine_solved(program, &mut x, opts.feasibility_tol);
                return finish(SolveStatus::Solved, x, outer, inner_total);
            }
        } else {
            feasible_streak = 0;
        }

        // Multiplier updates.
        for (r, v) in values.iter().enumerate() {
            let m = &mut mult[r];
            if row_lo[r] == row_hi[r] {
                m.lambda =
                    (m.lambda + rho * (v - row_lo[r])).clamp(-MULTIPLIER_CAP, MULTIPLIER_CAP);
            } else {
                if row_lo[r].is_finite() {
                    m.mu_lower = (m.mu_lower + rho * (row_lo[r] - v)).clamp(0.0, MULTIPLIER_CAP);
                }
                if row_hi[r].is_finite() {
                    m.mu_upper = (m.mu_upper + rho * (v - row_hi[r])).clamp(0.0, MULTIPLIER_CAP);
                }
            }
        }

        // Penalty growth on slow feasibility progress.
        if violation > opts.feasibility_tol && violation > prev_violation / opts.violation_shrink {
            rho = (rho * opts.penalty_growth).min(PENALTY_CAP);
        }

        // Give up early only on clearly infeasible plateaus: the inner
        // solver cannot move (or declares box-optimality) while the
        // violation is large and no longer shrinking. Near-feasible
        // iterates instead get the full outer budget, because the
        // multiplier updates keep reshaping the merit function and often
        // pull an iterate pinned at a constraint kink free after a few
        // more rounds.
        if violation > opts.feasibility_tol.sqrt() {
            let no_progress = violation >= 0.99 * prev_violation;
            if no_progress && (stalled || converged || rho >= PENALTY_CAP) {
                stall_streak += 1;
                if stall_streak >= 4 {
                    return finish(SolveStatus::InfeasibleStalled, x, outer, inner_total);
                }
            } else {
                stall_streak = 0;
            }
        }

        prev_violation = prev_violation.min(violation);
        omega = if violation <= opts.feasibility_tol {
            opts.optimality_tol
        } else {
            (omega * 0.1).max(opts.optimality_tol)
        };
    }

    let (viol, _) = evaluate_program(program, &x);
    if viol <= opts.feasibility_tol {
        refine_solved(program, &mut x, opts.feasibility_tol);
        return finish(SolveStatus::Solved, x, opts.max_outer, inner_total);
    }
    finish(
        SolveStatus::InfeasibleStalled,
        x,
        opts.max_outer,
        inner_total,
    )
}

/// Compares every cost and constraint partial against central differences
/// with step `h`; returns the worst relative error (scaled by
/// `max(1, |analytic|)`).
pub fn check_gradients(program: &NlProgram, x: &[f64], h: f64) -> f64 {
    let n = program.num_vars;
    let seeded = DiffScalar::seed(x);
    let mut analytic: Vec<DiffScalar> = vec![(program.cost)(&seeded)];
    for block in &program.blocks {
        analytic.extend((block.eval)(&seeded));
    }

    let eval_all = |xx: &[f64]| -> Vec<f64> {
        let c = DiffScalar::constants(xx);
        let mut out = vec![(program.cost)(&c).value()];
        for block in &program.blocks {
            out.extend((block.eval)(&c).into_iter().map(|v| v.value()));
        }
        out
    };

    let mut worst = 0.0f64;
    for i in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i] += h;
        xm[i] -= h;
        let (fp, fm) = (eval_all(&xp), eval_all(&xm));
        for (a, (vp, vm)) in analytic.iter().zip(fp.iter().zip(&fm)) {
            let fd = (vp - vm) / (2.0 * h);
            let ad = a.partial(i);
            let rel = (ad - fd).abs() / ad.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    worst
}
