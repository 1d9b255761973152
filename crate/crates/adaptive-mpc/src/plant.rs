//! Plant models: the plant trait, the CSTR benchmark, input-rate
//! augmentation, exact rollout, and finite-difference linearization.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::sysid::AffineModel;

/// Default relative step for finite-difference Jacobians.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Error raised by plant evaluations.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantError {
    /// State or input left the domain on which the dynamics are defined.
    Domain(String),
    /// A vector does not match the plant signature.
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for PlantError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantError::Domain(msg) => write!(f, "plant domain error: {msg}"),
            PlantError::Dimension {
                what,
                expected,
                got,
            } => write!(f, "{what} has dimension {got}, expected {expected}"),
        }
    }
}

impl std::error::Error for PlantError {}

/// Error raised by [`simulate`], carrying the failing time index.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulationError {
    EmptyInput,
    Plant { step: usize, source: PlantError },
}

impl fmt::Display for SimulationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimulationError::EmptyInput => write!(f, "simulation requires at least one input"),
            SimulationError::Plant { step, source } => {
                write!(f, "simulation failed at step {step}: {source}")
            }
        }
    }
}

impl std::error::Error for SimulationError {}

/// A discrete-time plant with state, input, and output dimensions and a
/// deterministic step/output map.
///
/// Implementations are immutable after construction and therefore safe to
/// share across concurrent simulation runs.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Next state `x⁺ = f(x, u)`.
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError>;

    /// Measured output `y = h(x, u)`.
    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError>;
}

fn check_dims<P: Plant + ?Sized>(
    plant: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(), PlantError> {
    if x.len() != plant.state_dim() {
        return Err(PlantError::Dimension {
            what: "state",
            expected: plant.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != plant.input_dim() {
        return Err(PlantError::Dimension {
            what: "input",
            expected: plant.input_dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Parameters of the continuous stirred tank reactor benchmark.
///
/// Defaults are the benchmark values: `T_s = 0.2`, `θ = 20`, `k̄ = 300`,
/// `M = 5`, `x_f = 0.3947`, `x_c = 0.3816`, `α = 0.117`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CstrParams {
    pub t_s: f64,
    pub theta: f64,
    pub k_bar: f64,
    pub m: f64,
    pub x_f: f64,
    pub x_c: f64,
    pub alpha: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        CstrParams {
            t_s: 0.2,
            theta: 20.0,
            k_bar: 300.0,
            m: 5.0,
            x_f: 0.3947,
            x_c: 0.3816,
            alpha: 0.117,
        }
    }
}

/// Euler-discretized CSTR step map.
///
/// The reaction term `k̄ x₁ e^{-M/x₂}` couples both state equations; the
/// coolant flow rate `u` acts on the second state through `α u (x₂ - x_c)`.
/// Requires `x₂ > 0`.
pub fn cstr_step(
    x: &DVector<f64>,
    u: &DVector<f64>,
    p: &CstrParams,
) -> Result<DVector<f64>, PlantError> {
    if x.len() != 2 {
        return Err(PlantError::Dimension {
            what: "state",
            expected: 2,
            got: x.len(),
        });
    }
    if u.len() != 1 {
        return Err(PlantError::Dimension {
            what: "input",
            expected: 1,
            got: u.len(),
        });
    }
    let (x1, x2, uv) = (x[0], x[1], u[0]);
    if x2 <= 0.0 {
        return Err(PlantError::Domain(format!(
            "x2 = {x2} must be positive (enters exp(-M/x2))"
        )));
    }
    let rate = p.k_bar * (-p.m / x2).exp();
    let x1_next = x1 + p.t_s / p.theta * (1.0 - x1) - p.t_s * rate * x1;
    let x2_next =
        x2 + p.t_s / p.theta * (p.x_f - x2) + p.t_s * rate * x1 - p.t_s * p.alpha * uv * (x2 - p.x_c);
    Ok(DVector::from_vec(vec![x1_next, x2_next]))
}

/// The two-state CSTR benchmark plant with output `y = x₂`.
#[derive(Debug, Clone, Default)]
pub struct CstrPlant {
    params: CstrParams,
}

impl CstrPlant {
    pub fn new(params: CstrParams) -> Self {
        CstrPlant { params }
    }

    pub fn params(&self) -> &CstrParams {
        &self.params
    }
}

impl Plant for CstrPlant {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        cstr_step(x, u, &self.params)
    }

    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_dims(self, x, u)?;
        Ok(DVector::from_element(1, x[1]))
    }
}

/// A plant whose dynamics are exactly an affine model. Used as a test bed
/// where identification must recover the generator exactly.
#[derive(Debug, Clone)]
pub struct AffinePlant {
    model: AffineModel,
}

impl AffinePlant {
    pub fn new(model: AffineModel) -> Result<Self, PlantError> {
        if !model.is_finite() {
            return Err(PlantError::Domain(
                "affine plant coefficients must be finite".into(),
            ));
        }
        Ok(AffinePlant { model })
    }

    pub fn model(&self) -> &AffineModel {
        &self.model
    }
}

impl Plant for AffinePlant {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.model.output_dim()
    }

    fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_dims(self, x, u)?;
        Ok(self.model.predict_state(x, u))
    }

    fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_dims(self, x, u)?;
        Ok(self.model.predict_output(x, u))
    }
}

/// Input-rate augmentation: the inner input becomes a state component and the
/// new input is the increment `Δu`.
///
/// The augmented state is `[x; u]` with `x` the inner state. One augmented
/// step applies the inner dynamics with the currently stored `u` and then
/// updates `u⁺ = u + Δu`, so the increment takes effect on the next step.
/// The output is the inner output evaluated at the stored `u`.
#[derive(Debug, Clone)]
pub struct AugmentedPlant<P> {
    inner: P,
}

impl<P: Plant> AugmentedPlant<P> {
    pub fn new(inner: P) -> Self {
        AugmentedPlant { inner }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// Splits an augmented state into the inner state and the stored input.
    pub fn split_state(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.inner.state_dim();
        let m = self.inner.input_dim();
        (x.rows(0, n).into_owned(), x.rows(n, m).into_owned())
    }
}

impl<P: Plant> Plant for AugmentedPlant<P> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim() + self.inner.input_dim()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn step(&self, x: &DVector<f64>, du: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_dims(self, x, du)?;
        let (xi, ui) = self.split_state(x);
        let xi_next = self.inner.step(&xi, &ui)?;
        let mut next = DVector::zeros(self.state_dim());
        next.rows_mut(0, self.inner.state_dim()).copy_from(&xi_next);
        next.rows_mut(self.inner.state_dim(), self.inner.input_dim())
            .copy_from(&(ui + du));
        Ok(next)
    }

    fn output(&self, x: &DVector<f64>, du: &DVector<f64>) -> Result<DVector<f64>, PlantError> {
        check_dims(self, x, du)?;
        let (xi, ui) = self.split_state(x);
        self.inner.output(&xi, &ui)
    }
}

/// A rolled-out trajectory: `inputs.len() + 1` states and `inputs.len()`
/// outputs, with `outputs[k] = h(states[k], inputs[k])`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

/// Rolls the plant out from `x0` under the given input sequence.
pub fn simulate<P: Plant + ?Sized>(
    plant: &P,
    x0: &DVector<f64>,
    inputs: &[DVector<f64>],
) -> Result<Trajectory, SimulationError> {
    if inputs.is_empty() {
        return Err(SimulationError::EmptyInput);
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    let mut outputs = Vec::with_capacity(inputs.len());
    states.push(x0.clone());
    for (k, u) in inputs.iter().enumerate() {
        let x = states.last().expect("at least the initial state");
        let y = plant
            .output(x, u)
            .map_err(|source| SimulationError::Plant { step: k, source })?;
        let x_next = plant
            .step(x, u)
            .map_err(|source| SimulationError::Plant { step: k, source })?;
        outputs.push(y);
        states.push(x_next);
    }
    Ok(Trajectory { states, outputs })
}

/// Linearizes the plant at `(x̃, ũ)` by central finite differences and
/// returns the affine model whose offsets reproduce `f(x̃, ũ)` and `h(x̃, ũ)`
/// exactly at the expansion point.
pub fn linearize<P: Plant + ?Sized>(
    plant: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<AffineModel, PlantError> {
    linearize_with_step(plant, x, u, DEFAULT_FD_STEP)
}

/// [`linearize`] with an explicit base step; the per-coordinate step is
/// `h · max(1, |v_i|)`.
pub fn linearize_with_step<P: Plant + ?Sized>(
    plant: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
) -> Result<AffineModel, PlantError> {
    check_dims(plant, x, u)?;
    if !(h > 0.0) {
        return Err(PlantError::Domain(format!(
            "finite-difference step {h} must be positive"
        )));
    }
    let (n, m, p) = (plant.state_dim(), plant.input_dim(), plant.output_dim());
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    let mut c = DMatrix::zeros(p, n);
    let mut d = DMatrix::zeros(p, m);

    for j in 0..n {
        let hj = h * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += hj;
        xm[j] -= hj;
        let fp = plant.step(&xp, u)?;
        let fm = plant.step(&xm, u)?;
        let hp = plant.output(&xp, u)?;
        let hm = plant.output(&xm, u)?;
        a.set_column(j, &((fp - fm) / (2.0 * hj)));
        c.set_column(j, &((hp - hm) / (2.0 * hj)));
    }
    for j in 0..m {
        let hj = h * u[j].abs().max(1.0);
        let mut up = u.clone();
        let mut um = u.clone();
        up[j] += hj;
        um[j] -= hj;
        let fp = plant.step(x, &up)?;
        let fm = plant.step(x, &um)?;
        let hp = plant.output(x, &up)?;
        let hm = plant.output(x, &um)?;
        b.set_column(j, &((fp - fm) / (2.0 * hj)));
        d.set_column(j, &((hp - hm) / (2.0 * hj)));
    }

    let f0 = plant.step(x, u)?;
    let h0 = plant.output(x, u)?;
    let e = f0 - &a * x - &b * u;
    let r = h0 - &c * x - &d * u;
    Ok(AffineModel { a, b, e, c, d, r })
}
