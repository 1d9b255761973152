//! Moving-window data sets and regularized least-squares identification of
//! local affine models, plus singular-value diagnostics for the standing
//! assumptions of the tracking controller.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};

/// Relative threshold below which the regressor Gram matrix is declared
/// singular when identifying without regularization.
pub const SINGULARITY_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum SysIdError {
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// The window does not yet hold the full number of transitions.
    WindowNotFull { have: usize, need: usize },
    /// `push` received a state that does not continue the stored trajectory.
    NonContiguous,
    /// Gram matrix of the regressor is numerically singular (λ = 0 only).
    SingularRegressor { sigma_min: f64, sigma_max: f64 },
    InvalidRegularization(f64),
    Numerical(&'static str),
}

impl fmt::Display for SysIdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SysIdError::Dimension {
                what,
                expected,
                got,
            } => write!(f, "{what} has dimension {got}, expected {expected}"),
            SysIdError::WindowNotFull { have, need } => {
                write!(f, "window holds {have} of {need} transitions")
            }
            SysIdError::NonContiguous => {
                write!(f, "pushed state does not match the stored trajectory head")
            }
            SysIdError::SingularRegressor {
                sigma_min,
                sigma_max,
            } => write!(
                f,
                "regressor Gram matrix singular: sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e}"
            ),
            SysIdError::InvalidRegularization(l) => {
                write!(f, "regularization {l} must be nonnegative")
            }
            SysIdError::Numerical(msg) => write!(f, "identification failed: {msg}"),
        }
    }
}

impl std::error::Error for SysIdError {}

/// An identified or linearized local affine model
/// `x⁺ = A x + B u + e`, `y = C x + D u + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub r: DVector<f64>,
}

impl AffineModel {
    /// Zero model of the given dimensions.
    pub fn zeros(n: usize, m: usize, p: usize) -> Self {
        AffineModel {
            a: DMatrix::zeros(n, n),
            b: DMatrix::zeros(n, m),
            e: DVector::zeros(n),
            c: DMatrix::zeros(p, n),
            d: DMatrix::zeros(p, m),
            r: DVector::zeros(p),
        }
    }

    /// Convenience constructor for scalar (n = m = p = 1) models.
    pub fn scalar(a: f64, b: f64, e: f64, c: f64, d: f64, r: f64) -> Self {
        AffineModel {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            e: DVector::from_element(1, e),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::from_element(1, 1, d),
            r: DVector::from_element(1, r),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.state_dim(), self.input_dim(), self.output_dim())
    }

    /// Checks internal dimension consistency.
    pub fn validate(&self) -> Result<(), SysIdError> {
        let (n, m, p) = self.dims();
        let checks: [(&'static str, usize, usize); 7] = [
            ("A rows", self.a.nrows(), n),
            ("A cols", self.a.ncols(), n),
            ("B rows", self.b.nrows(), n),
            ("e", self.e.len(), n),
            ("C cols", self.c.ncols(), n),
            ("D rows", self.d.nrows(), p),
            ("r", self.r.len(), p),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(SysIdError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        if self.d.ncols() != m {
            return Err(SysIdError::Dimension {
                what: "D cols",
                expected: m,
                got: self.d.ncols(),
            });
        }
        if !self.is_finite() {
            return Err(SysIdError::Numerical("model has non-finite entries"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.e.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite())
            && self.d.iter().all(|v| v.is_finite())
            && self.r.iter().all(|v| v.is_finite())
    }

    pub fn predict_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.e
    }

    pub fn predict_output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u + &self.r
    }

    /// Largest absolute entrywise difference across all six coefficient
    /// blocks of two models with equal dimensions.
    pub fn max_coefficient_difference(&self, other: &AffineModel) -> f64 {
        let blocks = [
            (&self.a - &other.a).amax(),
            (&self.b - &other.b).amax(),
            (&self.e - &other.e).amax(),
            (&self.c - &other.c).amax(),
            (&self.d - &other.d).amax(),
            (&self.r - &other.r).amax(),
        ];
        blocks.into_iter().fold(0.0, f64::max)
    }
}

/// Moving window of the last `N` transitions: `N + 1` states
/// `x_{t-N} .. x_t`, `N` inputs, and `N` outputs.
#[derive(Debug, Clone)]
pub struct DataWindow {
    n: usize,
    m: usize,
    p: usize,
    len: usize,
    states: VecDeque<DVector<f64>>,
    inputs: VecDeque<DVector<f64>>,
    outputs: VecDeque<DVector<f64>>,
    t: usize,
}

impl DataWindow {
    /// Empty window that will hold `len` transitions once filled.
    pub fn new(n: usize, m: usize, p: usize, len: usize) -> Self {
        DataWindow {
            n,
            m,
            p,
            len,
            states: VecDeque::with_capacity(len + 1),
            inputs: VecDeque::with_capacity(len),
            outputs: VecDeque::with_capacity(len),
            t: 0,
        }
    }

    /// Builds a full window from a contiguous trajectory ending at absolute
    /// time `t_newest`.
    pub fn from_trajectory(
        states: &[DVector<f64>],
        inputs: &[DVector<f64>],
        outputs: &[DVector<f64>],
        t_newest: usize,
    ) -> Result<Self, SysIdError> {
        if states.len() != inputs.len() + 1 {
            return Err(SysIdError::Dimension {
                what: "states",
                expected: inputs.len() + 1,
                got: states.len(),
            });
        }
        if outputs.len() != inputs.len() {
            return Err(SysIdError::Dimension {
                what: "outputs",
                expected: inputs.len(),
                got: outputs.len(),
            });
        }
        if states.is_empty() || inputs.is_empty() {
            return Err(SysIdError::WindowNotFull { have: 0, need: 1 });
        }
        let n = states[0].len();
        let m = inputs[0].len();
        let p = outputs[0].len();
        let mut w = DataWindow::new(n, m, p, inputs.len());
        for k in 0..inputs.len() {
            w.push(
                states[k].clone(),
                inputs[k].clone(),
                outputs[k].clone(),
                states[k + 1].clone(),
            )?;
        }
        w.t = t_newest;
        Ok(w)
    }

    /// Number of transitions the full window holds.
    pub fn window_len(&self) -> usize {
        self.len
    }

    /// Transitions currently stored.
    pub fn sample_count(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_full(&self) -> bool {
        self.inputs.len() == self.len
    }

    /// Absolute time index of the newest state.
    pub fn time(&self) -> usize {
        self.t
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.p)
    }

    /// Newest state `x_t`.
    pub fn head_state(&self) -> Option<&DVector<f64>> {
        self.states.back()
    }

    pub fn states(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.states.iter()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.inputs.iter()
    }

    pub fn outputs(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.outputs.iter()
    }

    /// Records the transition `(x, u, y, x⁺)`, evicting the oldest sample
    /// when the window is already full. `x` must equal the stored newest
    /// state so the window remains one contiguous trajectory.
    pub fn push(
        &mut self,
        x: DVector<f64>,
        u: DVector<f64>,
        y: DVector<f64>,
        x_next: DVector<f64>,
    ) -> Result<(), SysIdError> {
        let dims: [(&'static str, usize, usize); 4] = [
            ("state", x.len(), self.n),
            ("input", u.len(), self.m),
            ("output", y.len(), self.p),
            ("next state", x_next.len(), self.n),
        ];
        for (what, got, expected) in dims {
            if got != expected {
                return Err(SysIdError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        match self.states.back() {
            None => self.states.push_back(x),
            Some(head) if *head == x => {}
            Some(_) => return Err(SysIdError::NonContiguous),
        }
        self.states.push_back(x_next);
        self.inputs.push_back(u);
        self.outputs.push_back(y);
        if self.inputs.len() > self.len {
            self.states.pop_front();
            self.inputs.pop_front();
            self.outputs.pop_front();
        }
        self.t += 1;
        Ok(())
    }

    fn require_full(&self) -> Result<(), SysIdError> {
        if !self.is_full() {
            return Err(SysIdError::WindowNotFull {
                have: self.sample_count(),
                need: self.len,
            });
        }
        Ok(())
    }

    /// `X_t`: states `x_{t-N} .. x_{t-1}` as columns.
    pub fn state_matrix(&self) -> Result<DMatrix<f64>, SysIdError> {
        self.require_full()?;
        Ok(columns(self.states.iter().take(self.len), self.n, self.len))
    }

    /// `X_t⁺`: states `x_{t-N+1} .. x_t` as columns.
    pub fn shifted_state_matrix(&self) -> Result<DMatrix<f64>, SysIdError> {
        self.require_full()?;
        Ok(columns(self.states.iter().skip(1), self.n, self.len))
    }

    /// `U_t`: inputs as columns.
    pub fn input_matrix(&self) -> Result<DMatrix<f64>, SysIdError> {
        self.require_full()?;
        Ok(columns(self.inputs.iter(), self.m, self.len))
    }

    /// `Y_t`: outputs `y_{t-N} .. y_{t-1}` as columns.
    pub fn output_matrix(&self) -> Result<DMatrix<f64>, SysIdError> {
        self.require_full()?;
        Ok(columns(self.outputs.iter(), self.p, self.len))
    }

    pub fn regressor(&self) -> Result<RegressorMatrix, SysIdError> {
        RegressorMatrix::from_window(self)
    }
}

fn columns<'a>(
    it: impl Iterator<Item = &'a DVector<f64>>,
    rows: usize,
    count: usize,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, count);
    for (k, v) in it.enumerate().take(count) {
        m.set_column(k, v);
    }
    m
}

/// The regressor `Z = [X; U; 1ᵀ]`. Column `k` is `[x_{t-N+k}; u_{t-N+k}; 1]`.
#[derive(Debug, Clone)]
pub struct RegressorMatrix {
    z: DMatrix<f64>,
}

impl RegressorMatrix {
    pub fn from_window(w: &DataWindow) -> Result<Self, SysIdError> {
        w.require_full()?;
        let (n, m, _) = w.dims();
        let count = w.window_len();
        let mut z = DMatrix::zeros(n + m + 1, count);
        z.rows_mut(0, n).copy_from(&w.state_matrix()?);
        z.rows_mut(n, m).copy_from(&w.input_matrix()?);
        z.rows_mut(n + m, 1).fill(1.0);
        Ok(RegressorMatrix { z })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Singular values of `Z`, unordered.
    pub fn singular_values(&self) -> DVector<f64> {
        self.z.clone().singular_values()
    }
}

/// Least-squares identification of the local affine model from a full
/// window: `[A B e] = X⁺ Zᵀ (Z Zᵀ + λI)⁻¹` and likewise for `[C D r]` from
/// the outputs.
///
/// With `λ > 0` the Gram system is solved by Cholesky (SVD fallback when the
/// Gram matrix is indefinite at rounding level); with `λ = 0` the singular
/// case is rejected and the normal equations are avoided in favor of an SVD
/// least-squares solve, which keeps exact recovery at the conditioning of `Z`
/// rather than of `Z Zᵀ`.
pub fn identify(window: &DataWindow, lambda: f64) -> Result<AffineModel, SysIdError> {
    if !(lambda >= 0.0) {
        return Err(SysIdError::InvalidRegularization(lambda));
    }
    let (n, m, _) = window.dims();
    let z = window.regressor()?.z;
    let xp = window.shifted_state_matrix()?;
    let y = window.output_matrix()?;
    let d = n + m + 1;

    // M solves M (Z Zᵀ + λI) = RHS Zᵀ for RHS in {X⁺, Y}.
    let (m_dyn, m_out);
    if lambda == 0.0 {
        if window.window_len() < d {
            // Fewer samples than regressor rows: the Gram matrix cannot have
            // full rank.
            return Err(SysIdError::SingularRegressor {
                sigma_min: 0.0,
                sigma_max: f64::INFINITY,
            });
        }
        let svd = z.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin * smin <= SINGULARITY_RATIO * smax * smax {
            return Err(SysIdError::SingularRegressor {
                sigma_min: smin * smin,
                sigma_max: smax * smax,
            });
        }
        // min ‖Zᵀ Mᵀ − RHSᵀ‖_F via the SVD already at hand.
        let solve = |rhs: &DMatrix<f64>| -> DMatrix<f64> {
            let u = svd.u.as_ref().expect("svd with u");
            let vt = svd.v_t.as_ref().expect("svd with v_t");
            // M = RHS V Σ⁻¹ Uᵀ restricted to nonzero singular values.
            let mut scaled = rhs * vt.transpose();
            for (j, s) in svd.singular_values.iter().enumerate() {
                scaled.column_mut(j).scale_mut(1.0 / s);
            }
            scaled * u.transpose()
        };
        m_dyn = solve(&xp);
        m_out = solve(&y);
    } else {
        let mut gram = &z * z.transpose();
        gram = (&gram + gram.transpose()) * 0.5;
        for i in 0..d {
            gram[(i, i)] += lambda;
        }
        let rhs_dyn = &z * xp.transpose();
        let rhs_out = &z * y.transpose();
        match nalgebra::Cholesky::new(gram) {
            Some(chol) => {
                m_dyn = chol.solve(&rhs_dyn).transpose();
                m_out = chol.solve(&rhs_out).transpose();
            }
            None => {
                // Gram matrix indefinite at rounding level; fall back to the
                // spectral form of the same regularized solution.
                let svd = z.clone().svd(true, true);
                let u = svd.u.as_ref().ok_or(SysIdError::Numerical("svd failed"))?;
                let vt = svd
                    .v_t
                    .as_ref()
                    .ok_or(SysIdError::Numerical("svd failed"))?;
                let solve = |rhs: &DMatrix<f64>| -> DMatrix<f64> {
                    let mut scaled = rhs * vt.transpose();
                    for (j, s) in svd.singular_values.iter().enumerate() {
                        scaled.column_mut(j).scale_mut(s / (s * s + lambda));
                    }
                    scaled * u.transpose()
                };
                m_dyn = solve(&xp);
                m_out = solve(&y);
            }
        }
    }

    let model = AffineModel {
        a: m_dyn.columns(0, n).into_owned(),
        b: m_dyn.columns(n, m).into_owned(),
        e: m_dyn.column(n + m).clone_owned(),
        c: m_out.columns(0, n).into_owned(),
        d: m_out.columns(n, m).into_owned(),
        r: m_out.column(n + m).clone_owned(),
    };
    model.validate()?;
    Ok(model)
}

/// Persistence-of-excitation metric: `σ_min(Z)` of the full window.
pub fn pe_metric(window: &DataWindow) -> Result<f64, SysIdError> {
    Ok(window.regressor()?.singular_values().min())
}

/// Thresholds for the assumption diagnostics; a raw singular value below its
/// threshold marks the corresponding assumption as failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionThresholds {
    /// Unique steady-state rank condition on `[[A−I, B], [C, D]]`.
    pub sigma_rank: f64,
    /// Uniform controllability of `(A, B)`.
    pub sigma_controllability: f64,
    /// Nonsingularity of `I − A`.
    pub sigma_steady_map: f64,
}

impl Default for AssumptionThresholds {
    fn default() -> Self {
        AssumptionThresholds {
            sigma_rank: 1e-6,
            sigma_controllability: 1e-6,
            sigma_steady_map: 1e-6,
        }
    }
}

/// Raw singular values and pass/fail flags for the standing assumptions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// `σ_min` of the stacked matrix `[[A−I, B], [C, D]]`.
    pub sigma_rank: f64,
    pub rank_ok: bool,
    /// `σ_min` of the controllability matrix `[B, AB, …, A^{n-1}B]`.
    pub sigma_controllability: f64,
    pub controllability_ok: bool,
    /// `σ_min(I − A)`.
    pub sigma_steady_map: f64,
    pub steady_map_ok: bool,
}

/// Diagnostics for the identified model against the standing assumptions.
pub fn assumption_report(model: &AffineModel, thresholds: &AssumptionThresholds) -> AssumptionReport {
    let (n, m, p) = model.dims();

    let mut stacked = DMatrix::zeros(n + p, n + m);
    stacked
        .view_mut((0, 0), (n, n))
        .copy_from(&(&model.a - DMatrix::identity(n, n)));
    stacked.view_mut((0, n), (n, m)).copy_from(&model.b);
    stacked.view_mut((n, 0), (p, n)).copy_from(&model.c);
    stacked.view_mut((n, n), (p, m)).copy_from(&model.d);
    let sigma_rank = stacked.singular_values().min();

    let mut ctrb = DMatrix::zeros(n, n * m);
    let mut power = model.b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * m), (n, m)).copy_from(&power);
        power = &model.a * power;
    }
    let sigma_controllability = ctrb.singular_values().min();

    let sigma_steady_map = (DMatrix::identity(n, n) - &model.a).singular_values().min();

    AssumptionReport {
        sigma_rank,
        rank_ok: sigma_rank >= thresholds.sigma_rank,
        sigma_controllability,
        controllability_ok: sigma_controllability >= thresholds.sigma_controllability,
        sigma_steady_map,
        steady_map_ok: sigma_steady_map >= thresholds.sigma_steady_map,
    }
}
