//! The adaptive control loop: generate an initial data window, then
//! alternate identification, a tracking solve, and open-loop application of
//! the first `n_apply` optimal inputs.
//!
//! Identification stops (the model freezes) once the plant state settles to
//! within `stop_threshold` between consecutive steps, which protects the
//! regressor from losing excitation near the setpoint.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::id_error_diagnostic;
use crate::mpc::{optimal_reachable_cost, solve_tracking, MpcConfig, MpcError};
use crate::plant::{linearize, Plant, PlantError};
use crate::qp::QpStatus;
use crate::sysid::{identify, pe_metric, AffineModel, DataWindow, SysIdError};

/// How the initial window of `N` transitions is generated.
#[derive(Debug, Clone)]
pub enum BootstrapStrategy {
    /// Run the model-based baseline controller: every `n_apply` steps,
    /// linearize the true plant at the current state (with zero input) and
    /// solve the same tracking problem on that model.
    ModelBasedMpc,
    /// Hold a nominal input and add a seeded uniform perturbation of the
    /// given amplitude, clamped to the input box.
    ExcitedRollout {
        nominal: DVector<f64>,
        amplitude: f64,
        seed: u64,
    },
}

impl BootstrapStrategy {
    /// Same strategy with the seed replaced (used by sweep cells).
    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            BootstrapStrategy::ModelBasedMpc => BootstrapStrategy::ModelBasedMpc,
            BootstrapStrategy::ExcitedRollout {
                nominal, amplitude, ..
            } => BootstrapStrategy::ExcitedRollout {
                nominal: nominal.clone(),
                amplitude: *amplitude,
                seed,
            },
        }
    }
}

/// Diagnostics recorded at one solve instant.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub t: usize,
    /// Optimal tracking cost J*.
    pub j_star: f64,
    /// Optimal reachable cost Ĵ* of the current model.
    pub j_hat_star: f64,
    /// Lyapunov candidate V = J* − Ĵ*.
    pub lyapunov: f64,
    /// σ_min of the regressor at this instant.
    pub sigma_min_z: f64,
    /// Max-norm distance between the model in use and the true-plant
    /// linearization at the current state.
    pub id_error: f64,
    pub status: QpStatus,
    /// Whether identification had already been stopped at this instant.
    pub frozen: bool,
    /// The model used for this solve.
    pub model: AffineModel,
}

/// One time step of the closed loop.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub t: usize,
    pub state: DVector<f64>,
    pub input: DVector<f64>,
    pub output: DVector<f64>,
    /// Present exactly on solve instants.
    pub solve: Option<SolveRecord>,
}

/// Terminal condition of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The tracking problem became infeasible; the trace holds everything up
    /// to the failing instant.
    MpcInfeasible { t: usize, violation: f64 },
    /// The run aborted for another reason (plant domain violation,
    /// identification failure, solver breakdown).
    Failed { t: usize, message: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStatus::Completed => write!(f, "completed"),
            RunStatus::MpcInfeasible { t, violation } => {
                write!(f, "infeasible@t={t} (violation {violation:.3e})")
            }
            RunStatus::Failed { t, message } => write!(f, "failed@t={t}: {message}"),
        }
    }
}

/// Time-indexed record of a closed-loop run. Row `t` holds the state,
/// applied input, and measured output at time `t`; rows at solve instants
/// additionally carry a [`SolveRecord`].
#[derive(Debug, Clone)]
pub struct ClosedLoopTrace {
    pub rows: Vec<TraceRow>,
    pub y_ref: DVector<f64>,
    pub status: RunStatus,
    /// State reached after the final recorded step.
    pub final_state: DVector<f64>,
}

impl ClosedLoopTrace {
    pub fn solve_records(&self) -> impl Iterator<Item = &SolveRecord> {
        self.rows.iter().filter_map(|r| r.solve.as_ref())
    }

    /// Output at time `t`, when recorded.
    pub fn output(&self, t: usize) -> Option<&DVector<f64>> {
        self.rows.get(t).map(|r| &r.output)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug)]
pub enum LoopError {
    /// The window cannot support identification: `N ≥ n + m + 1` is needed
    /// for the regressor to have full row rank.
    WindowTooShort { need: usize, got: usize },
    /// Bootstrap data has a rank-deficient regressor.
    RankDeficientBootstrap { sigma_min: f64 },
    /// Bootstrap violated a configured state box.
    BootstrapConstraint { t: usize, message: String },
    /// Hard failure while bootstrapping.
    Bootstrap { t: usize, message: String },
    Config(MpcError),
    Plant(PlantError),
    SysId(SysIdError),
}

impl fmt::Display for LoopError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoopError::WindowTooShort { need, got } => {
                write!(f, "window length {got} too short, need at least {need}")
            }
            LoopError::RankDeficientBootstrap { sigma_min } => {
                write!(f, "bootstrap regressor rank deficient (sigma_min = {sigma_min:.3e})")
            }
            LoopError::BootstrapConstraint { t, message } => {
                write!(f, "bootstrap violated constraints at t={t}: {message}")
            }
            LoopError::Bootstrap { t, message } => {
                write!(f, "bootstrap failed at t={t}: {message}")
            }
            LoopError::Config(e) => write!(f, "{e}"),
            LoopError::Plant(e) => write!(f, "{e}"),
            LoopError::SysId(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for LoopError {}

impl From<MpcError> for LoopError {
    fn from(e: MpcError) -> Self {
        LoopError::Config(e)
    }
}

impl From<PlantError> for LoopError {
    fn from(e: PlantError) -> Self {
        LoopError::Plant(e)
    }
}

impl From<SysIdError> for LoopError {
    fn from(e: SysIdError) -> Self {
        LoopError::SysId(e)
    }
}

fn check_state_box(cfg: &MpcConfig, x: &DVector<f64>, t: usize) -> Result<(), LoopError> {
    for sb in &cfg.state_box {
        let v = x[sb.index];
        if v < sb.lo - 1e-8 || v > sb.hi + 1e-8 {
            return Err(LoopError::BootstrapConstraint {
                t,
                message: format!(
                    "state component {} = {v} outside [{}, {}]",
                    sb.index, sb.lo, sb.hi
                ),
            });
        }
    }
    Ok(())
}

/// Generates the initial full data window of `cfg.window` transitions from
/// `x0` and verifies that its regressor has full row rank.
pub fn bootstrap<P: Plant + ?Sized>(
    plant: &P,
    x0: &DVector<f64>,
    cfg: &MpcConfig,
    strategy: &BootstrapStrategy,
) -> Result<DataWindow, LoopError> {
    let (n, m, p) = (plant.state_dim(), plant.input_dim(), plant.output_dim());
    cfg.validate(n, m, p)?;
    let window_len = cfg.window;
    if window_len < n + m + 1 {
        return Err(LoopError::WindowTooShort {
            need: n + m + 1,
            got: window_len,
        });
    }
    let mut window = DataWindow::new(n, m, p, window_len);
    let mut x = x0.clone();
    check_state_box(cfg, &x, 0)?;

    match strategy {
        BootstrapStrategy::ModelBasedMpc => {
            let mut t = 0;
            while t < window_len {
                let model =
                    linearize(plant, &x, &DVector::zeros(m)).map_err(LoopError::Plant)?;
                let sol = solve_tracking(&model, &x, cfg).map_err(|e| LoopError::Bootstrap {
                    t,
                    message: e.to_string(),
                })?;
                let block = cfg.n_apply.min(window_len - t);
                for k in 0..block {
                    let u = sol.u_pred[k].clone();
                    let y = plant.output(&x, &u)?;
                    let x_next = plant.step(&x, &u)?;
                    check_state_box(cfg, &x_next, t + k + 1)?;
                    window.push(x.clone(), u, y, x_next.clone())?;
                    x = x_next;
                }
                t += block;
            }
        }
        BootstrapStrategy::ExcitedRollout {
            nominal,
            amplitude,
            seed,
        } => {
            if nominal.len() != m {
                return Err(LoopError::Config(MpcError::Dimension(format!(
                    "nominal input has length {}, expected {m}",
                    nominal.len()
                ))));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for t in 0..window_len {
                let mut u = DVector::zeros(m);
                for j in 0..m {
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    u[j] = (nominal[j] + amplitude * noise).clamp(cfg.u_lo[j], cfg.u_hi[j]);
                }
                let y = plant.output(&x, &u)?;
                let x_next = plant.step(&x, &u)?;
                check_state_box(cfg, &x_next, t + 1)?;
                window.push(x.clone(), u, y, x_next.clone())?;
                x = x_next;
            }
        }
    }

    let sv = window.regressor()?.singular_values();
    let sigma_min = sv.min();
    if sigma_min <= 1e-12 * sv.max().max(1.0) {
        return Err(LoopError::RankDeficientBootstrap { sigma_min });
    }
    Ok(window)
}

/// Runs the adaptive loop up to and including time `t_end`.
///
/// Solve instants are `N, N + n_apply, N + 2 n_apply, …` up to `t_end`; the
/// final block is truncated so the last recorded step is exactly `t_end`.
/// Infeasibility or a plant failure aborts the run and the partial trace is
/// returned with the corresponding status.
pub fn run_closed_loop<P: Plant + ?Sized>(
    plant: &P,
    x0: &DVector<f64>,
    cfg: &MpcConfig,
    strategy: &BootstrapStrategy,
    t_end: usize,
) -> Result<ClosedLoopTrace, LoopError> {
    let window_len = cfg.window;
    if t_end < window_len {
        return Err(LoopError::Config(MpcError::Config(format!(
            "t_end = {t_end} must be at least the window length {window_len}"
        ))));
    }
    let mut window = bootstrap(plant, x0, cfg, strategy)?;

    let mut rows: Vec<TraceRow> = Vec::with_capacity(t_end + 1);
    {
        let states: Vec<_> = window.states().cloned().collect();
        for (k, (u, y)) in window.inputs().zip(window.outputs()).enumerate() {
            rows.push(TraceRow {
                t: k,
                state: states[k].clone(),
                input: u.clone(),
                output: y.clone(),
                solve: None,
            });
        }
    }
    let mut x = window
        .head_state()
        .expect("bootstrap returns a full window")
        .clone();
    let mut t = window_len;
    let mut model: Option<AffineModel> = None;
    let mut frozen = false;
    let mut settled = false; // smallest step of the last block below threshold
    let mut status = RunStatus::Completed;

    'run: while t <= t_end {
        // The freeze latches on the first quiet block; identification at the
        // first instant always runs since no model exists yet.
        if model.is_some() && settled {
            frozen = true;
        }
        if !frozen {
            match identify(&window, cfg.lambda) {
                Ok(m) => model = Some(m),
                Err(e) => {
                    status = RunStatus::Failed {
                        t,
                        message: format!("identification: {e}"),
                    };
                    break 'run;
                }
            }
        }
        let mdl = model.as_ref().expect("model available after identification");

        let sigma_min_z = match pe_metric(&window) {
            Ok(s) => s,
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    message: format!("pe metric: {e}"),
                };
                break 'run;
            }
        };
        let id_error = match id_error_diagnostic(mdl, plant, &x) {
            Ok(v) => v,
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    message: format!("linearization diagnostic: {e}"),
                };
                break 'run;
            }
        };

        let solution = match solve_tracking(mdl, &x, cfg) {
            Ok(sol) => sol,
            Err(MpcError::Infeasible { violation }) => {
                status = RunStatus::MpcInfeasible { t, violation };
                break 'run;
            }
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    message: e.to_string(),
                };
                break 'run;
            }
        };
        let reachable = match optimal_reachable_cost(mdl, cfg) {
            Ok(r) => r,
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    message: format!("reachable cost: {e}"),
                };
                break 'run;
            }
        };
        let record = SolveRecord {
            t,
            j_star: solution.j_star,
            j_hat_star: reachable.j_hat_star,
            lyapunov: crate::mpc::lyapunov_candidate(solution.j_star, reachable.j_hat_star),
            sigma_min_z,
            id_error,
            status: solution.status,
            frozen,
            model: mdl.clone(),
        };

        let block = cfg.n_apply.min(t_end - t + 1);
        let mut min_step = f64::INFINITY;
        for k in 0..block {
            let u = solution.u_pred[k].clone();
            let y = match plant.output(&x, &u) {
                Ok(y) => y,
                Err(e) => {
                    status = RunStatus::Failed {
                        t: t + k,
                        message: e.to_string(),
                    };
                    break 'run;
                }
            };
            let x_next = match plant.step(&x, &u) {
                Ok(xn) => xn,
                Err(e) => {
                    status = RunStatus::Failed {
                        t: t + k,
                        message: e.to_string(),
                    };
                    break 'run;
                }
            };
            min_step = min_step.min((&x_next - &x).norm());
            rows.push(TraceRow {
                t: t + k,
                state: x.clone(),
                input: u.clone(),
                output: y.clone(),
                solve: (k == 0).then(|| record.clone()),
            });
            if let Err(e) = window.push(x.clone(), u, y, x_next.clone()) {
                status = RunStatus::Failed {
                    t: t + k,
                    message: e.to_string(),
                };
                break 'run;
            }
            x = x_next;
        }
        settled = min_step < cfg.stop_threshold;
        t += block;
    }

    Ok(ClosedLoopTrace {
        rows,
        y_ref: cfg.y_ref.clone(),
        status,
        final_state: x,
    })
}
