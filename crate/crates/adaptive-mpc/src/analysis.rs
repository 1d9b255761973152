//! Post-hoc and in-loop metrics: the tracking-error score, optimal reachable
//! equilibria of the true plant, identification-error diagnostics, and the
//! regularization/window sweep grid.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::closed_loop::{run_closed_loop, BootstrapStrategy, ClosedLoopTrace, RunStatus};
use crate::mpc::MpcConfig;
use crate::plant::{linearize, Plant, PlantError};
use crate::sysid::AffineModel;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// The trace does not contain outputs up to the requested time.
    TraceTooShort { need: usize, got: usize },
    /// No Newton start converged to a steady state.
    NoConvergence { best_residual: f64 },
    Plant(PlantError),
    Config(String),
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnalysisError::TraceTooShort { need, got } => {
                write!(f, "trace holds {got} outputs, need {need}")
            }
            AnalysisError::NoConvergence { best_residual } => {
                write!(f, "no steady state found (best residual {best_residual:.3e})")
            }
            AnalysisError::Plant(e) => write!(f, "{e}"),
            AnalysisError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for AnalysisError {}

impl From<PlantError> for AnalysisError {
    fn from(e: PlantError) -> Self {
        AnalysisError::Plant(e)
    }
}

/// Cumulative tracking error `Σ_{t=0}^{t_max} ‖y_t − y_ref‖₂`, bootstrap
/// segment included.
pub fn tracking_error(
    trace: &ClosedLoopTrace,
    y_ref: &DVector<f64>,
    t_max: usize,
) -> Result<f64, AnalysisError> {
    tracking_error_from(trace, y_ref, 0, t_max)
}

/// [`tracking_error`] starting the sum at `t_start` instead of zero.
pub fn tracking_error_from(
    trace: &ClosedLoopTrace,
    y_ref: &DVector<f64>,
    t_start: usize,
    t_max: usize,
) -> Result<f64, AnalysisError> {
    if trace.rows.len() < t_max + 1 {
        return Err(AnalysisError::TraceTooShort {
            need: t_max + 1,
            got: trace.rows.len(),
        });
    }
    Ok(trace.rows[t_start..=t_max]
        .iter()
        .map(|row| (&row.output - y_ref).norm())
        .sum())
}

/// A steady state of the true plant together with its fixed-point residual.
#[derive(Debug, Clone)]
pub struct PlantEquilibrium {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    /// `‖f(x, u) − x‖₂`.
    pub residual: f64,
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ITERS: usize = 50;
const GRID_POINTS: usize = 20;

/// Newton iteration for a fixed point of `x ↦ f(x, u)` at fixed `u`.
fn steady_state_at<P: Plant + ?Sized>(
    plant: &P,
    u: &DVector<f64>,
    x_start: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = plant.state_dim();
    let mut x = x_start.clone();
    let mut residual = match plant.step(&x, u) {
        Ok(fx) => fx - &x,
        Err(_) => return None,
    };
    for _ in 0..NEWTON_ITERS {
        if residual.norm() <= NEWTON_TOL * (1.0 + x.norm()) {
            return Some(x);
        }
        let model = linearize(plant, &x, u).ok()?;
        let jac = &model.a - DMatrix::identity(n, n);
        let delta = jac.full_piv_lu().solve(&residual)?;
        // Damped update: halve until the residual shrinks.
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &x - &delta * alpha;
            if let Ok(fx) = plant.step(&cand, u) {
                let cand_res = fx - &cand;
                if cand_res.norm() < residual.norm() {
                    x = cand;
                    residual = cand_res;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved || x.norm() > 1e9 {
            return None;
        }
    }
    if residual.norm() <= NEWTON_TOL * (1.0 + x.norm()) {
        Some(x)
    } else {
        None
    }
}

fn weighted_cost(s: &DMatrix<f64>, y: &DVector<f64>, y_ref: &DVector<f64>) -> f64 {
    let dy = y - y_ref;
    (dy.transpose() * s * &dy)[(0, 0)]
}

/// Optimal reachable equilibrium of the true plant: minimizes
/// `‖h(x, u) − y_ref‖²_S` over steady states `f(x, u) = x` with `u` in the
/// given box.
///
/// Multi-start Newton over a grid of inputs (with branch-following warm
/// starts in both sweep directions), followed by a projected Gauss–Newton
/// polish in `u` from every converged candidate. `x_init` anchors the state
/// starts; pass a state in the operating region of interest.
pub fn plant_equilibrium<P: Plant + ?Sized>(
    plant: &P,
    s: &DMatrix<f64>,
    us_lo: &DVector<f64>,
    us_hi: &DVector<f64>,
    y_ref: &DVector<f64>,
    x_init: &DVector<f64>,
) -> Result<PlantEquilibrium, AnalysisError> {
    let m = plant.input_dim();
    if us_lo.len() != m || us_hi.len() != m {
        return Err(AnalysisError::Config(format!(
            "input box has lengths {}/{}, expected {m}",
            us_lo.len(),
            us_hi.len()
        )));
    }
    if (0..m).any(|j| us_lo[j] > us_hi[j]) {
        return Err(AnalysisError::Config("empty steady input box".into()));
    }

    // Grid along the box diagonal.
    let grid: Vec<DVector<f64>> = (0..GRID_POINTS)
        .map(|k| {
            let frac = k as f64 / (GRID_POINTS - 1) as f64;
            DVector::from_fn(m, |j, _| us_lo[j] + frac * (us_hi[j] - us_lo[j]))
        })
        .collect();

    // Candidate steady states: direct starts from x_init plus carry-over
    // sweeps that follow a manifold branch in both directions.
    let mut candidates: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let push_candidate = |x: DVector<f64>, u: DVector<f64>, list: &mut Vec<(DVector<f64>, DVector<f64>)>| {
        let duplicate = list
            .iter()
            .any(|(cx, cu)| (cx - &x).norm() + (cu - &u).norm() < 1e-9);
        if !duplicate {
            list.push((x, u));
        }
    };
    for u in &grid {
        if let Some(x) = steady_state_at(plant, u, x_init) {
            push_candidate(x, u.clone(), &mut candidates);
        } else {
            // Not a steady state, but still a usable start: the polish
            // below restores feasibility through the constraint model.
            push_candidate(x_init.clone(), u.clone(), &mut candidates);
        }
    }
    let mut carry = x_init.clone();
    for u in &grid {
        if let Some(x) = steady_state_at(plant, u, &carry) {
            carry = x.clone();
            push_candidate(x, u.clone(), &mut candidates);
        }
    }
    carry = x_init.clone();
    for u in grid.iter().rev() {
        if let Some(x) = steady_state_at(plant, u, &carry) {
            carry = x.clone();
            push_candidate(x, u.clone(), &mut candidates);
        }
    }

    if candidates.is_empty() {
        // Report the best fixed-point residual among the direct starts.
        let mut best = f64::INFINITY;
        for u in &grid {
            if let Ok(fx) = plant.step(x_init, u) {
                best = best.min((fx - x_init).norm());
            }
        }
        return Err(AnalysisError::NoConvergence {
            best_residual: best,
        });
    }

    // Newton-type (Gauss-Newton SQP) polish on the constrained steady-state
    // system in (x, u) jointly; unlike a reduction to u, this walks through
    // folds of the steady-state manifold, where I − ∂f/∂x is singular.
    let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
    for (x0, u0) in candidates {
        let Some((x, u)) = sqp_polish(plant, s, us_lo, us_hi, y_ref, x0, u0) else {
            continue;
        };
        let Ok(y) = plant.output(&x, &u) else { continue };
        let Ok(fx) = plant.step(&x, &u) else { continue };
        if (fx - &x).norm() > 1e-10 * (1.0 + x.norm()) {
            continue;
        }
        let cost = weighted_cost(s, &y, y_ref);
        if best.as_ref().map(|(bc, _, _)| cost < *bc).unwrap_or(true) {
            best = Some((cost, x, u));
        }
    }

    let Some((_, x, u)) = best else {
        return Err(AnalysisError::NoConvergence {
            best_residual: f64::INFINITY,
        });
    };
    let y = plant.output(&x, &u)?;
    let residual = (plant.step(&x, &u)? - &x).norm();
    Ok(PlantEquilibrium { x, u, y, residual })
}

/// One SQP run on `min ‖h(x,u) − y_ref‖²_S  s.t. f(x,u) = x, u ∈ box` from
/// the given start. Each step solves a small strictly convex QP built from
/// the plant Jacobians; steps are accepted under an exact-penalty merit.
fn sqp_polish<P: Plant + ?Sized>(
    plant: &P,
    s: &DMatrix<f64>,
    us_lo: &DVector<f64>,
    us_hi: &DVector<f64>,
    y_ref: &DVector<f64>,
    mut x: DVector<f64>,
    mut u: DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    use crate::qp::{solve_qp, QpProblem, QpStatus, SolveOptions};

    let n = plant.state_dim();
    let m = plant.input_dim();
    let d = n + m;
    let penalty = 1e4 * (1.0 + s.amax());
    let merit = |x: &DVector<f64>, u: &DVector<f64>| -> Option<f64> {
        let y = plant.output(x, u).ok()?;
        let fx = plant.step(x, u).ok()?;
        Some(weighted_cost(s, &y, y_ref) + penalty * (fx - x).norm())
    };
    let mut current = merit(&x, &u)?;

    for _ in 0..2 * NEWTON_ITERS {
        let model = linearize(plant, &x, &u).ok()?;
        let y = plant.output(&x, &u).ok()?;
        let fx = plant.step(&x, &u).ok()?;
        let rho = &fx - &x; // want (A−I)δx + Bδu = −ρ

        // Quadratic model of the output objective in δ = (δx, δu).
        let mut jac = DMatrix::zeros(plant.output_dim(), d);
        jac.view_mut((0, 0), (plant.output_dim(), n))
            .copy_from(&model.c);
        jac.view_mut((0, n), (plant.output_dim(), m))
            .copy_from(&model.d);
        let dy = &y - y_ref;
        let mut h = jac.transpose() * s * &jac * 2.0;
        let reg = 1e-10 * (1.0 + h.amax());
        for i in 0..d {
            h[(i, i)] += reg;
        }
        h = (&h + h.transpose()) * 0.5;
        let g = jac.transpose() * s * &dy * 2.0;

        let mut a_eq = DMatrix::zeros(n, d);
        a_eq.view_mut((0, 0), (n, n))
            .copy_from(&(&model.a - DMatrix::identity(n, n)));
        a_eq.view_mut((0, n), (n, m)).copy_from(&model.b);
        let b_eq = -&rho;

        let mut a_in = DMatrix::zeros(2 * m, d);
        let mut b_in = DVector::zeros(2 * m);
        for j in 0..m {
            a_in[(2 * j, n + j)] = 1.0;
            b_in[2 * j] = us_hi[j] - u[j];
            a_in[(2 * j + 1, n + j)] = -1.0;
            b_in[2 * j + 1] = u[j] - us_lo[j];
        }

        let qp = QpProblem::new(h, g, a_eq, b_eq, a_in, b_in).ok()?;
        let sol = solve_qp(&qp, SolveOptions::default()).ok()?;
        if sol.status != QpStatus::Optimal {
            return None;
        }
        let delta = sol.z;
        let step_norm = delta.amax();
        if step_norm <= 1e-13 * (1.0 + x.amax().max(u.amax())) {
            break;
        }

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let x_cand = &x + delta.rows(0, n) * alpha;
            let u_cand = DVector::from_fn(m, |j, _| {
                (u[j] + alpha * delta[n + j]).clamp(us_lo[j], us_hi[j])
            });
            if let Some(cand) = merit(&x_cand, &u_cand) {
                if cand < current - 1e-16 * (1.0 + current.abs()) {
                    x = x_cand;
                    u = u_cand;
                    current = cand;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Final fixed-point refinement at the settled input.
    let x = steady_state_at(plant, &u, &x)?;
    Some((x, u))
}

/// Max-norm distance between the identified model and the true-plant
/// linearization at `x_t` (with zero input), across all six coefficient
/// blocks.
pub fn id_error_diagnostic<P: Plant + ?Sized>(
    model: &AffineModel,
    plant: &P,
    x_t: &DVector<f64>,
) -> Result<f64, PlantError> {
    let reference = linearize(plant, x_t, &DVector::zeros(plant.input_dim()))?;
    Ok(model.max_coefficient_difference(&reference))
}

/// Cartesian sweep specification over regularization values and window
/// lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambdas: Vec<f64>,
    pub windows: Vec<usize>,
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    Converged {
        tracking_error: f64,
        /// `‖y_{t_end} − y_ref‖₂`.
        final_deviation: f64,
    },
    Failed {
        status: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub lambda: f64,
    pub window: usize,
    pub outcome: CellOutcome,
}

/// Full sweep result; cells are stored row-major with windows as rows and
/// lambdas as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub windows: Vec<usize>,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, window_idx: usize, lambda_idx: usize) -> &SweepCell {
        &self.cells[window_idx * self.lambdas.len() + lambda_idx]
    }

    pub fn converged_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.outcome, CellOutcome::Converged { .. }))
            .count()
    }
}

/// Runs one independent closed loop per `(λ, N)` cell and scores it with the
/// tracking error. Failures are recorded per cell, never fabricated into
/// error values. Cells run in parallel on the ambient rayon pool with
/// deterministic per-cell seeds derived from `base_seed`.
pub fn run_sweep<P: Plant + Sync + ?Sized>(
    plant: &P,
    x0: &DVector<f64>,
    base_cfg: &MpcConfig,
    strategy: &BootstrapStrategy,
    t_end: usize,
    spec: &SweepSpec,
    base_seed: u64,
) -> SweepGrid {
    let jobs: Vec<(usize, usize)> = (0..spec.windows.len())
        .flat_map(|wi| (0..spec.lambdas.len()).map(move |li| (wi, li)))
        .collect();

    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(wi, li)| {
            let lambda = spec.lambdas[li];
            let window = spec.windows[wi];
            let mut cfg = base_cfg.clone();
            cfg.lambda = lambda;
            cfg.window = window;
            let seed = base_seed
                .wrapping_add((wi * spec.lambdas.len() + li) as u64)
                .wrapping_mul(0x9e37_79b9_7f4a_7c15);
            let strategy = strategy.with_seed(seed);
            let outcome = match run_closed_loop(plant, x0, &cfg, &strategy, t_end) {
                Ok(trace) if trace.status == RunStatus::Completed => {
                    match tracking_error(&trace, &cfg.y_ref, t_end) {
                        Ok(err) => {
                            let final_deviation =
                                (&trace.rows[t_end].output - &cfg.y_ref).norm();
                            CellOutcome::Converged {
                                tracking_error: err,
                                final_deviation,
                            }
                        }
                        Err(e) => CellOutcome::Failed {
                            status: e.to_string(),
                        },
                    }
                }
                Ok(trace) => CellOutcome::Failed {
                    status: trace.status.to_string(),
                },
                Err(e) => CellOutcome::Failed {
                    status: e.to_string(),
                },
            };
            SweepCell {
                lambda,
                window,
                outcome,
            }
        })
        .collect();

    SweepGrid {
        lambdas: spec.lambdas.clone(),
        windows: spec.windows.clone(),
        cells,
    }
}
