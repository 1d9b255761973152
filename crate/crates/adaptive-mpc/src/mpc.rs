//! Tracking MPC on an identified affine model.
//!
//! Each solve minimizes, over an input sequence and an artificial
//! steady-state triple `(x̂ˢ, ûˢ, ŷˢ)` of the current model,
//!
//! ```text
//!     Σ_{k=0}^{L-1} ‖x̂_k − x̂ˢ‖²_Q + ‖û_k − ûˢ‖²_R  +  ‖ŷˢ − y_ref‖²_S
//! ```
//!
//! subject to the model dynamics from the measured state, a terminal
//! equality `x̂_L = x̂ˢ`, the steady-state relation for `(x̂ˢ, ûˢ)`, and the
//! input boxes. Predicted states are condensed out by single shooting;
//! `x̂ˢ` stays a decision variable so that models with a neutrally stable
//! direction (for example input-rate augmented plants, where one state
//! integrates the input) remain well posed.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::qp::{solve_qp, QpError, QpProblem, QpSolution, QpStatus, SolveOptions};
use crate::sysid::AffineModel;

/// Relative singular-value threshold below which `I − A` is treated as
/// singular by [`steady_state_map`].
pub const STEADY_MAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum MpcError {
    Config(String),
    Dimension(String),
    /// `I − A` numerically singular where an explicit steady-state map was
    /// requested.
    SingularSteadyState { sigma_min: f64 },
    /// The steady-state manifold of the model is empty or degenerate.
    DegenerateSteadyManifold,
    /// The tracking problem is infeasible at the current state.
    Infeasible { violation: f64 },
    /// The QP solver hit its iteration limit.
    SolverStalled,
    Qp(QpError),
}

impl fmt::Display for MpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpcError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            MpcError::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            MpcError::SingularSteadyState { sigma_min } => {
                write!(f, "I - A singular (sigma_min = {sigma_min:.3e})")
            }
            MpcError::DegenerateSteadyManifold => {
                write!(f, "steady-state manifold empty or degenerate")
            }
            MpcError::Infeasible { violation } => {
                write!(f, "tracking problem infeasible (violation {violation:.3e})")
            }
            MpcError::SolverStalled => write!(f, "QP solver hit its iteration limit"),
            MpcError::Qp(e) => write!(f, "QP failure: {e}"),
        }
    }
}

impl std::error::Error for MpcError {}

impl From<QpError> for MpcError {
    fn from(e: QpError) -> Self {
        MpcError::Qp(e)
    }
}

/// Box constraint on one component of the predicted state, with a separate
/// (strictly tighter) box for the artificial steady state.
///
/// Used with input-rate augmented plants, where the physical input bounds
/// land on the state component that stores the input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBound {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub steady_lo: f64,
    pub steady_hi: f64,
}

/// All tunables of the tracking controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    /// State deviation weight, n×n positive definite.
    pub q: DMatrix<f64>,
    /// Input deviation weight, m×m positive definite.
    pub r: DMatrix<f64>,
    /// Setpoint tracking weight, p×p positive definite.
    pub s: DMatrix<f64>,
    /// Prediction horizon L.
    pub horizon: usize,
    /// Identification window length N.
    pub window: usize,
    /// Inputs applied per solve.
    pub n_apply: usize,
    pub u_lo: DVector<f64>,
    pub u_hi: DVector<f64>,
    /// Steady-state input box, strictly inside the input box.
    pub us_lo: DVector<f64>,
    pub us_hi: DVector<f64>,
    /// Identification regularization λ.
    pub lambda: f64,
    pub y_ref: DVector<f64>,
    pub state_box: Vec<StateBound>,
    /// Identification stops once consecutive states differ by less than
    /// this in Euclidean norm.
    pub stop_threshold: f64,
}

impl MpcConfig {
    /// Uniform-weight configuration with the given scalar weights, horizon,
    /// window, and input box; all remaining fields get benign defaults.
    pub fn uniform(
        n: usize,
        m: usize,
        p: usize,
        q: f64,
        r: f64,
        s: f64,
        horizon: usize,
        window: usize,
        u_lo: f64,
        u_hi: f64,
        us_lo: f64,
        us_hi: f64,
        y_ref: DVector<f64>,
    ) -> Self {
        MpcConfig {
            q: DMatrix::identity(n, n) * q,
            r: DMatrix::identity(m, m) * r,
            s: DMatrix::identity(p, p) * s,
            horizon,
            window,
            n_apply: n,
            u_lo: DVector::from_element(m, u_lo),
            u_hi: DVector::from_element(m, u_hi),
            us_lo: DVector::from_element(m, us_lo),
            us_hi: DVector::from_element(m, us_hi),
            lambda: 1e-12,
            y_ref,
            state_box: Vec::new(),
            stop_threshold: 5e-6,
        }
    }

    /// The CSTR benchmark configuration for the input-rate augmented plant:
    /// three states (two physical plus the stored input), increment input.
    /// Weights `Q = I`, `R = 0.05`, `S = 100`, horizon 41, window 25,
    /// setpoint 0.6519; the physical input box `[0.1, 2]` (steady box
    /// `[0.11, 1.99]`) is enforced on the stored-input state component, and
    /// the raw increment gets a wide box.
    pub fn cstr_benchmark() -> Self {
        let mut cfg = MpcConfig::uniform(
            3,
            1,
            1,
            1.0,
            0.05,
            100.0,
            41,
            25,
            -10.0,
            10.0,
            -9.9,
            9.9,
            DVector::from_element(1, 0.6519),
        );
        cfg.state_box = vec![StateBound {
            index: 2,
            lo: 0.1,
            hi: 2.0,
            steady_lo: 0.11,
            steady_hi: 1.99,
        }];
        cfg
    }

    pub fn dims_from_model(model: &AffineModel) -> (usize, usize, usize) {
        model.dims()
    }

    /// Validates the configuration against plant dimensions.
    pub fn validate(&self, n: usize, m: usize, p: usize) -> Result<(), MpcError> {
        let check_square_pd = |mat: &DMatrix<f64>, dim: usize, name: &str| {
            if mat.nrows() != dim || mat.ncols() != dim {
                return Err(MpcError::Dimension(format!(
                    "{name} is {}x{}, expected {dim}x{dim}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            let sym = (mat + mat.transpose()) * 0.5;
            if Cholesky::new(sym).is_none() {
                return Err(MpcError::Config(format!(
                    "{name} must be symmetric positive definite"
                )));
            }
            Ok(())
        };
        check_square_pd(&self.q, n, "Q")?;
        check_square_pd(&self.r, m, "R")?;
        check_square_pd(&self.s, p, "S")?;
        if self.horizon < n {
            return Err(MpcError::Config(format!(
                "horizon {} must be at least the state dimension {n}",
                self.horizon
            )));
        }
        if self.window < n {
            return Err(MpcError::Config(format!(
                "window {} must be at least the state dimension {n}",
                self.window
            )));
        }
        if self.n_apply == 0 || self.n_apply > self.horizon {
            return Err(MpcError::Config(format!(
                "n_apply {} must lie in 1..=horizon",
                self.n_apply
            )));
        }
        for (v, name, len) in [
            (&self.u_lo, "u_lo", m),
            (&self.u_hi, "u_hi", m),
            (&self.us_lo, "us_lo", m),
            (&self.us_hi, "us_hi", m),
        ] {
            if v.len() != len {
                return Err(MpcError::Dimension(format!(
                    "{name} has length {}, expected {len}",
                    v.len()
                )));
            }
        }
        if self.y_ref.len() != p {
            return Err(MpcError::Dimension(format!(
                "y_ref has length {}, expected {p}",
                self.y_ref.len()
            )));
        }
        for j in 0..m {
            if !(self.u_lo[j] < self.u_hi[j]) {
                return Err(MpcError::Config(format!(
                    "input box component {j} is empty"
                )));
            }
            if !(self.us_lo[j] > self.u_lo[j] && self.us_hi[j] < self.u_hi[j]) {
                return Err(MpcError::Config(format!(
                    "steady input box must lie strictly inside the input box (component {j})"
                )));
            }
            if !(self.us_lo[j] <= self.us_hi[j]) {
                return Err(MpcError::Config(format!(
                    "steady input box component {j} is empty"
                )));
            }
        }
        for sb in &self.state_box {
            if sb.index >= n {
                return Err(MpcError::Config(format!(
                    "state_box index {} out of range for n = {n}",
                    sb.index
                )));
            }
            if !(sb.lo < sb.hi) || !(sb.steady_lo > sb.lo && sb.steady_hi < sb.hi) {
                return Err(MpcError::Config(format!(
                    "state_box on component {} must be nonempty with the steady box strictly inside",
                    sb.index
                )));
            }
        }
        if !(self.lambda >= 0.0) {
            return Err(MpcError::Config(format!(
                "regularization {} must be nonnegative",
                self.lambda
            )));
        }
        if !(self.stop_threshold > 0.0) {
            return Err(MpcError::Config(
                "stop_threshold must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Decoded optimizer of one tracking solve.
#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// Predicted states `x̂_0 .. x̂_L` (exact model rollout of `u_pred`).
    pub x_pred: Vec<DVector<f64>>,
    /// Optimal inputs `û_0 .. û_{L-1}`.
    pub u_pred: Vec<DVector<f64>>,
    pub x_s: DVector<f64>,
    pub u_s: DVector<f64>,
    pub y_s: DVector<f64>,
    /// Optimal cost, including the constant term, so it equals the tracking
    /// cost evaluated at the minimizer.
    pub j_star: f64,
    pub status: QpStatus,
}

/// Explicit steady state for a given input: `x_s = (I−A)⁻¹(B u_s + e)`,
/// `y_s = C x_s + D u_s + r`.
///
/// Errors when `I − A` is numerically singular; models of input-rate
/// augmented plants fall in that class, and the tracking QP therefore keeps
/// the steady state as a constrained variable instead of using this map.
pub fn steady_state_map(
    model: &AffineModel,
    u_s: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), MpcError> {
    let (n, m, _) = model.dims();
    if u_s.len() != m {
        return Err(MpcError::Dimension(format!(
            "u_s has length {}, expected {m}",
            u_s.len()
        )));
    }
    let eye_minus_a = DMatrix::identity(n, n) - &model.a;
    let sv = eye_minus_a.clone().singular_values();
    let sigma_min = sv.min();
    let sigma_max = sv.max();
    if sigma_min <= STEADY_MAP_TOL * sigma_max.max(1.0) {
        return Err(MpcError::SingularSteadyState { sigma_min });
    }
    let rhs = &model.b * u_s + &model.e;
    let x_s = eye_minus_a
        .lu()
        .solve(&rhs)
        .ok_or(MpcError::SingularSteadyState { sigma_min })?;
    let y_s = model.predict_output(&x_s, u_s);
    Ok((x_s, y_s))
}

/// A condensed tracking QP together with the context needed to decode its
/// solution. Decision vector: `z = [û_0, …, û_{L-1}, ûˢ, x̂ˢ]`.
#[derive(Debug, Clone)]
pub struct TrackingQp {
    pub qp: QpProblem,
    /// Constant cost term dropped from the quadratic form.
    pub constant: f64,
    model: AffineModel,
    x_t: DVector<f64>,
    horizon: usize,
    weights: (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>),
    y_ref: DVector<f64>,
}

impl TrackingQp {
    /// Maps a QP minimizer back to trajectories and the steady-state triple.
    pub fn decode(&self, sol: &QpSolution) -> MpcSolution {
        let (n, m, _) = self.model.dims();
        let len = self.horizon;
        let mut u_pred = Vec::with_capacity(len);
        for k in 0..len {
            u_pred.push(sol.z.rows(k * m, m).into_owned());
        }
        let u_s = sol.z.rows(len * m, m).into_owned();
        let x_s = sol.z.rows(len * m + m, n).into_owned();
        let y_s = self.model.predict_output(&x_s, &u_s);

        let mut x_pred = Vec::with_capacity(len + 1);
        x_pred.push(self.x_t.clone());
        for u in &u_pred {
            let next = self.model.predict_state(x_pred.last().unwrap(), u);
            x_pred.push(next);
        }

        // Evaluate the tracking cost directly at the decoded point.
        let mut j_star = 0.0;
        for k in 0..len {
            let dx = &x_pred[k] - &x_s;
            let du = &u_pred[k] - &u_s;
            j_star += quad(&self.weights.0, &dx) + quad(&self.weights.1, &du);
        }
        let dy = &y_s - &self.y_ref;
        j_star += quad(&self.weights.2, &dy);

        MpcSolution {
            x_pred,
            u_pred,
            x_s,
            u_s,
            y_s,
            j_star,
            status: sol.status,
        }
    }
}

fn quad(w: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (v.transpose() * w * v)[(0, 0)]
}

/// Builds the condensed tracking QP for the given model, measured state, and
/// configuration.
pub fn build_tracking_qp(
    model: &AffineModel,
    x_t: &DVector<f64>,
    cfg: &MpcConfig,
) -> Result<TrackingQp, MpcError> {
    let (n, m, p) = model.dims();
    cfg.validate(n, m, p)?;
    if x_t.len() != n {
        return Err(MpcError::Dimension(format!(
            "state has length {}, expected {n}",
            x_t.len()
        )));
    }
    let len = cfg.horizon;
    let d = (len + 1) * m + n; // û_0..û_{L-1}, ûˢ, x̂ˢ
    let off_us = len * m;
    let off_xs = len * m + m;

    // Rollout blocks: x̂_k = φ_k + Σ_{j<k} P_{k,j} û_j with
    // P_{k,j} = A^{k-1-j} B. Row k of `gamma` stores [P_{k,0} … P_{k,k-1}].
    let mut phi = Vec::with_capacity(len + 1);
    phi.push(x_t.clone());
    let mut gamma: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(len + 1);
    gamma.push(Vec::new());
    for k in 1..=len {
        let mut row = Vec::with_capacity(k);
        for j in 0..k - 1 {
            row.push(&model.a * &gamma[k - 1][j]);
        }
        row.push(model.b.clone());
        gamma.push(row);
        let prev = phi.last().unwrap();
        phi.push(&model.a * prev + &model.e);
    }

    // Stage Jacobians of x̂_k − x̂ˢ with respect to z, assembled densely.
    let mut h = DMatrix::zeros(d, d);
    let mut g = DVector::zeros(d);
    let mut constant = 0.0;

    let mut jac = DMatrix::zeros(n, d);
    for k in 0..len {
        jac.fill(0.0);
        for j in 0..k {
            jac.view_mut((0, j * m), (n, m)).copy_from(&gamma[k][j]);
        }
        jac.view_mut((0, off_xs), (n, n))
            .copy_from(&(-DMatrix::identity(n, n)));
        let c_k = &phi[k];
        let qjac = &cfg.q * &jac;
        h += jac.transpose() * &qjac;
        g += qjac.transpose() * c_k;
        constant += quad(&cfg.q, c_k);
    }

    // Input deviation terms ‖û_k − ûˢ‖²_R.
    for k in 0..len {
        let base = k * m;
        for i in 0..m {
            for j in 0..m {
                let w = cfg.r[(i, j)];
                h[(base + i, base + j)] += w;
                h[(base + i, off_us + j)] -= w;
                h[(off_us + i, base + j)] -= w;
                h[(off_us + i, off_us + j)] += w;
            }
        }
    }

    // Setpoint term ‖C x̂ˢ + D ûˢ + r − y_ref‖²_S.
    {
        let mut jac_y = DMatrix::zeros(p, d);
        jac_y.view_mut((0, off_us), (p, m)).copy_from(&model.d);
        jac_y.view_mut((0, off_xs), (p, n)).copy_from(&model.c);
        let c_y = &model.r - &cfg.y_ref;
        let sjac = &cfg.s * &jac_y;
        h += jac_y.transpose() * &sjac;
        g += sjac.transpose() * &c_y;
        constant += quad(&cfg.s, &c_y);
    }

    // The QP convention is 1/2 zᵀHz + gᵀz.
    h *= 2.0;
    g *= 2.0;
    h = (&h + h.transpose()) * 0.5;

    // Equalities: terminal x̂_L = x̂ˢ and the steady-state relation
    // (I − A) x̂ˢ − B ûˢ = e.
    let ke = 2 * n;
    let mut a_eq = DMatrix::zeros(ke, d);
    let mut b_eq = DVector::zeros(ke);
    for j in 0..len {
        a_eq.view_mut((0, j * m), (n, m)).copy_from(&gamma[len][j]);
    }
    a_eq.view_mut((0, off_xs), (n, n))
        .copy_from(&(-DMatrix::identity(n, n)));
    b_eq.rows_mut(0, n).copy_from(&(-&phi[len]));
    a_eq.view_mut((n, off_xs), (n, n))
        .copy_from(&(DMatrix::identity(n, n) - &model.a));
    a_eq.view_mut((n, off_us), (n, m)).copy_from(&(-&model.b));
    b_eq.rows_mut(n, n).copy_from(&model.e);

    // Inequalities: per-step input boxes, the steady input box, and the
    // optional state boxes.
    let sb_rows = cfg.state_box.len() * (2 * len + 2);
    let ki = 2 * m * len + 2 * m + sb_rows;
    let mut a_in = DMatrix::zeros(ki, d);
    let mut b_in = DVector::zeros(ki);
    let mut row = 0;
    for k in 0..len {
        for j in 0..m {
            a_in[(row, k * m + j)] = 1.0;
            b_in[row] = cfg.u_hi[j];
            row += 1;
            a_in[(row, k * m + j)] = -1.0;
            b_in[row] = -cfg.u_lo[j];
            row += 1;
        }
    }
    for j in 0..m {
        a_in[(row, off_us + j)] = 1.0;
        b_in[row] = cfg.us_hi[j];
        row += 1;
        a_in[(row, off_us + j)] = -1.0;
        b_in[row] = -cfg.us_lo[j];
        row += 1;
    }
    for sb in &cfg.state_box {
        // Predicted states k = 1..L; x̂_0 is the measured state.
        for k in 1..=len {
            let mut upper = DVector::zeros(d);
            for j in 0..k {
                for jj in 0..m {
                    upper[j * m + jj] = gamma[k][j][(sb.index, jj)];
                }
            }
            let offset = phi[k][sb.index];
            for j in 0..d {
                a_in[(row, j)] = upper[j];
            }
            b_in[row] = sb.hi - offset;
            row += 1;
            for j in 0..d {
                a_in[(row, j)] = -upper[j];
            }
            b_in[row] = offset - sb.lo;
            row += 1;
        }
        // Steady-state component within the tighter box.
        a_in[(row, off_xs + sb.index)] = 1.0;
        b_in[row] = sb.steady_hi;
        row += 1;
        a_in[(row, off_xs + sb.index)] = -1.0;
        b_in[row] = -sb.steady_lo;
        row += 1;
    }
    debug_assert_eq!(row, ki);

    let qp = QpProblem::new(h, g, a_eq, b_eq, a_in, b_in)?;
    Ok(TrackingQp {
        qp,
        constant,
        model: model.clone(),
        x_t: x_t.clone(),
        horizon: len,
        weights: (cfg.q.clone(), cfg.r.clone(), cfg.s.clone()),
        y_ref: cfg.y_ref.clone(),
    })
}

/// Builds, solves, and decodes the tracking problem.
pub fn solve_tracking(
    model: &AffineModel,
    x_t: &DVector<f64>,
    cfg: &MpcConfig,
) -> Result<MpcSolution, MpcError> {
    let tracking = build_tracking_qp(model, x_t, cfg)?;
    let sol = solve_qp(&tracking.qp, SolveOptions::default())?;
    match sol.status {
        QpStatus::Optimal => Ok(tracking.decode(&sol)),
        QpStatus::Infeasible => Err(MpcError::Infeasible {
            violation: sol.infeasibility,
        }),
        QpStatus::MaxIter => Err(MpcError::SolverStalled),
    }
}

/// Optimal reachable equilibrium of the identified model: minimizes
/// `‖y_s − y_ref‖²_S` over the model's steady states with `u_s` in the
/// steady input box (and the steady state boxes, when configured).
#[derive(Debug, Clone)]
pub struct ReachableEquilibrium {
    pub y_s: DVector<f64>,
    pub x_s: DVector<f64>,
    pub u_s: DVector<f64>,
    pub j_hat_star: f64,
}

pub fn optimal_reachable_cost(
    model: &AffineModel,
    cfg: &MpcConfig,
) -> Result<ReachableEquilibrium, MpcError> {
    let (n, m, p) = model.dims();
    cfg.validate(n, m, p)?;

    // Steady states solve E w = e with w = (x_s, u_s),
    // E = [I − A | −B]; reduce to the affine family w = w0 + W v.
    let mut e_mat = DMatrix::zeros(n, n + m);
    e_mat
        .view_mut((0, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) - &model.a));
    e_mat.view_mut((0, n), (n, m)).copy_from(&(-&model.b));

    let svd = e_mat.clone().svd(true, true);
    let smax = svd.singular_values.max().max(1.0);
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-12 * smax)
        .count();
    let w0 = svd
        .solve(&model.e, 1e-12 * smax)
        .map_err(|_| MpcError::DegenerateSteadyManifold)?;
    if (&e_mat * &w0 - &model.e).amax() > 1e-9 * (1.0 + model.e.amax()) {
        return Err(MpcError::DegenerateSteadyManifold);
    }
    let free = n + m - rank;
    if free == 0 {
        // A unique steady state; only feasibility checks remain.
        let x_s = w0.rows(0, n).into_owned();
        let u_s = w0.rows(n, m).into_owned();
        for j in 0..m {
            if u_s[j] < cfg.us_lo[j] - 1e-9 || u_s[j] > cfg.us_hi[j] + 1e-9 {
                return Err(MpcError::Infeasible {
                    violation: (cfg.us_lo[j] - u_s[j]).max(u_s[j] - cfg.us_hi[j]),
                });
            }
        }
        let y_s = model.predict_output(&x_s, &u_s);
        let dy = &y_s - &cfg.y_ref;
        let j_hat_star = quad(&cfg.s, &dy);
        return Ok(ReachableEquilibrium {
            y_s,
            x_s,
            u_s,
            j_hat_star,
        });
    }

    // Null-space basis of E from the complementary projector.
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let v = vt.transpose();
    let proj = DMatrix::identity(n + m, n + m) - &v * v.transpose();
    let psvd = proj.svd(true, false);
    let q = psvd.u.as_ref().expect("svd with u");
    let cols: Vec<usize> = (0..n + m)
        .filter(|&j| psvd.singular_values[j] > 0.5)
        .collect();
    if cols.len() != free {
        return Err(MpcError::DegenerateSteadyManifold);
    }
    let mut basis = DMatrix::zeros(n + m, free);
    for (jj, &j) in cols.iter().enumerate() {
        basis.set_column(jj, &q.column(j).into_owned());
    }

    // Objective in the reduced variable v: y_s = M w + r − y_ref with
    // M = [C D].
    let mut m_out = DMatrix::zeros(p, n + m);
    m_out.view_mut((0, 0), (p, n)).copy_from(&model.c);
    m_out.view_mut((0, n), (p, m)).copy_from(&model.d);
    let w_y = &m_out * &basis; // p × free
    let c_y = &m_out * &w0 + &model.r - &cfg.y_ref;
    let mut h = w_y.transpose() * &cfg.s * &w_y * 2.0;
    h = (&h + h.transpose()) * 0.5;
    let g = w_y.transpose() * &cfg.s * &c_y * 2.0;

    // Box rows on u_s plus state boxes on x_s, expressed in v.
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for j in 0..m {
        let wu = basis.row(n + j).transpose();
        rows.push((wu.clone(), cfg.us_hi[j] - w0[n + j]));
        rows.push((-wu, w0[n + j] - cfg.us_lo[j]));
    }
    for sb in &cfg.state_box {
        let wx = basis.row(sb.index).transpose();
        rows.push((wx.clone(), sb.steady_hi - w0[sb.index]));
        rows.push((-wx, w0[sb.index] - sb.steady_lo));
    }
    let mut a_in = DMatrix::zeros(rows.len(), free);
    let mut b_in = DVector::zeros(rows.len());
    for (i, (rv, bv)) in rows.iter().enumerate() {
        for j in 0..free {
            a_in[(i, j)] = rv[j];
        }
        b_in[i] = *bv;
    }

    let qp = QpProblem::new(
        h,
        g,
        DMatrix::zeros(0, free),
        DVector::zeros(0),
        a_in,
        b_in,
    )?;
    let sol = solve_qp(&qp, SolveOptions::default())?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => {
            return Err(MpcError::Infeasible {
                violation: sol.infeasibility,
            })
        }
        QpStatus::MaxIter => return Err(MpcError::SolverStalled),
    }

    let w = &w0 + &basis * &sol.z;
    let x_s = w.rows(0, n).into_owned();
    let u_s = w.rows(n, m).into_owned();
    let y_s = model.predict_output(&x_s, &u_s);
    let dy = &y_s - &cfg.y_ref;
    let j_hat_star = quad(&cfg.s, &dy);
    Ok(ReachableEquilibrium {
        y_s,
        x_s,
        u_s,
        j_hat_star,
    })
}

/// Lyapunov candidate `V = J* − Ĵ*` of one solve instant. The sign is not
/// asserted; near the setpoint it is nonnegative up to solver tolerance.
pub fn lyapunov_candidate(j_star: f64, j_hat_star: f64) -> f64 {
    j_star - j_hat_star
}
