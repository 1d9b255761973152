//! Flat key-value run configuration.
//!
//! The format is one `key = value` pair per line with `#` comments and
//! dotted section prefixes, for example:
//!
//! ```text
//! plant = cstr
//! mpc.horizon = 41
//! mpc.lambda = 1e-12
//! sweep.lambdas = 1e-14, 1e-12, 1e-10, 1e-8
//! ```
//!
//! Every key has a default equal to the CSTR benchmark configuration, so an
//! empty file reproduces the benchmark run. Unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};

use crate::analysis::SweepSpec;
use crate::closed_loop::BootstrapStrategy;
use crate::mpc::{MpcConfig, StateBound};
use crate::plant::{AffinePlant, AugmentedPlant, CstrPlant, Plant};
use crate::sysid::AffineModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum PlantChoice {
    /// The CSTR benchmark with input-rate augmentation.
    Cstr,
    /// An affine test plant given by explicit coefficients.
    Affine,
}

/// Everything one run needs: plant selection, controller tunables,
/// bootstrap strategy, horizons, and output paths.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plant: PlantChoice,
    pub x0: DVector<f64>,
    pub mpc: MpcConfig,
    pub bootstrap_excited: bool,
    pub bootstrap_amplitude: f64,
    pub bootstrap_nominal: Option<DVector<f64>>,
    pub seed: u64,
    pub t_end: usize,
    pub workers: usize,
    pub sweep: SweepSpec,
    pub out: Option<PathBuf>,
    /// Physical input box of the CSTR, applied to the stored-input state
    /// component of the augmented plant.
    pub cstr_u_min: f64,
    pub cstr_u_max: f64,
    pub cstr_us_min: f64,
    pub cstr_us_max: f64,
    affine: AffineSpec,
}

#[derive(Debug, Clone, Default)]
struct AffineSpec {
    n: Option<usize>,
    m: Option<usize>,
    p: Option<usize>,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    e: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    d: Option<Vec<f64>>,
    r: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            plant: PlantChoice::Cstr,
            x0: DVector::from_vec(vec![0.4, 0.6, 0.1]),
            mpc: MpcConfig::cstr_benchmark(),
            bootstrap_excited: false,
            bootstrap_amplitude: 0.05,
            bootstrap_nominal: None,
            seed: 0,
            t_end: 2500,
            workers: 4,
            sweep: SweepSpec {
                lambdas: vec![1e-14, 1e-12, 1e-10, 1e-8],
                windows: vec![15, 25, 50, 100],
            },
            out: None,
            cstr_u_min: 0.1,
            cstr_u_max: 2.0,
            cstr_us_min: 0.11,
            cstr_us_max: 1.99,
            affine: AffineSpec::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{v}' as a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{v}' as an integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{v}' as an integer")))
}

fn parse_f64_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| parse_f64(key, s))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|list| {
            if list.is_empty() {
                Err(ConfigError(format!("key '{key}': empty list")))
            } else {
                Ok(list)
            }
        })
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>, ConfigError> {
    v.split(',')
        .map(|s| parse_usize(key, s))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|list| {
            if list.is_empty() {
                Err(ConfigError(format!("key '{key}': empty list")))
            } else {
                Ok(list)
            }
        })
}

/// Scalars used for Q/R/S before plant dimensions are known.
#[derive(Debug, Clone, Copy)]
struct WeightScalars {
    q: f64,
    r: f64,
    s: f64,
}

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut weights = WeightScalars {
            q: 1.0,
            r: 0.05,
            s: 100.0,
        };
        let mut weights_touched = false;
        let mut boxes_touched = false;
        let mut y_ref_touched = false;
        let mut x0_touched = false;
        let mut n_apply_touched = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            match key {
                "plant" => {
                    cfg.plant = match value {
                        "cstr" => PlantChoice::Cstr,
                        "affine" => PlantChoice::Affine,
                        other => {
                            return Err(ConfigError(format!(
                                "plant must be 'cstr' or 'affine', got '{other}'"
                            )))
                        }
                    }
                }
                "x0" => {
                    cfg.x0 = DVector::from_vec(parse_f64_list(key, value)?);
                    x0_touched = true;
                }
                "seed" => cfg.seed = parse_u64(key, value)?,
                "t_end" => cfg.t_end = parse_usize(key, value)?,
                "workers" => cfg.workers = parse_usize(key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                "bootstrap" => {
                    cfg.bootstrap_excited = match value {
                        "model_based" => false,
                        "excited" => true,
                        other => {
                            return Err(ConfigError(format!(
                                "bootstrap must be 'model_based' or 'excited', got '{other}'"
                            )))
                        }
                    }
                }
                "bootstrap.amplitude" => cfg.bootstrap_amplitude = parse_f64(key, value)?,
                "bootstrap.nominal" => {
                    cfg.bootstrap_nominal =
                        Some(DVector::from_vec(parse_f64_list(key, value)?))
                }
                "mpc.horizon" => cfg.mpc.horizon = parse_usize(key, value)?,
                "mpc.window" => cfg.mpc.window = parse_usize(key, value)?,
                "mpc.n_apply" => {
                    cfg.mpc.n_apply = parse_usize(key, value)?;
                    n_apply_touched = true;
                }
                "mpc.q" => {
                    weights.q = parse_f64(key, value)?;
                    weights_touched = true;
                }
                "mpc.r" => {
                    weights.r = parse_f64(key, value)?;
                    weights_touched = true;
                }
                "mpc.s" => {
                    weights.s = parse_f64(key, value)?;
                    weights_touched = true;
                }
                "mpc.lambda" => cfg.mpc.lambda = parse_f64(key, value)?,
                "mpc.y_ref" => {
                    cfg.mpc.y_ref = DVector::from_vec(parse_f64_list(key, value)?);
                    y_ref_touched = true;
                }
                "mpc.u_lo" => {
                    cfg.mpc.u_lo = DVector::from_vec(parse_f64_list(key, value)?);
                    boxes_touched = true;
                }
                "mpc.u_hi" => {
                    cfg.mpc.u_hi = DVector::from_vec(parse_f64_list(key, value)?);
                    boxes_touched = true;
                }
                "mpc.us_lo" => {
                    cfg.mpc.us_lo = DVector::from_vec(parse_f64_list(key, value)?);
                    boxes_touched = true;
                }
                "mpc.us_hi" => {
                    cfg.mpc.us_hi = DVector::from_vec(parse_f64_list(key, value)?);
                    boxes_touched = true;
                }
                "mpc.stop_threshold" => cfg.mpc.stop_threshold = parse_f64(key, value)?,
                "cstr.u_min" => cfg.cstr_u_min = parse_f64(key, value)?,
                "cstr.u_max" => cfg.cstr_u_max = parse_f64(key, value)?,
                "cstr.us_min" => cfg.cstr_us_min = parse_f64(key, value)?,
                "cstr.us_max" => cfg.cstr_us_max = parse_f64(key, value)?,
                "affine.n" => cfg.affine.n = Some(parse_usize(key, value)?),
                "affine.m" => cfg.affine.m = Some(parse_usize(key, value)?),
                "affine.p" => cfg.affine.p = Some(parse_usize(key, value)?),
                "affine.a" => cfg.affine.a = Some(parse_f64_list(key, value)?),
                "affine.b" => cfg.affine.b = Some(parse_f64_list(key, value)?),
                "affine.e" => cfg.affine.e = Some(parse_f64_list(key, value)?),
                "affine.c" => cfg.affine.c = Some(parse_f64_list(key, value)?),
                "affine.d" => cfg.affine.d = Some(parse_f64_list(key, value)?),
                "affine.r" => cfg.affine.r = Some(parse_f64_list(key, value)?),
                "sweep.lambdas" => cfg.sweep.lambdas = parse_f64_list(key, value)?,
                "sweep.windows" => cfg.sweep.windows = parse_usize_list(key, value)?,
                other => return Err(ConfigError(format!("unknown key '{other}'"))),
            }
        }

        // Resolve dimension-dependent pieces once the plant is known.
        let (n, m, p) = cfg.plant_dims()?;
        if weights_touched || cfg.plant == PlantChoice::Affine {
            cfg.mpc.q = DMatrix::identity(n, n) * weights.q;
            cfg.mpc.r = DMatrix::identity(m, m) * weights.r;
            cfg.mpc.s = DMatrix::identity(p, p) * weights.s;
        }
        match cfg.plant {
            PlantChoice::Cstr => {
                cfg.mpc.state_box = vec![StateBound {
                    index: 2,
                    lo: cfg.cstr_u_min,
                    hi: cfg.cstr_u_max,
                    steady_lo: cfg.cstr_us_min,
                    steady_hi: cfg.cstr_us_max,
                }];
            }
            PlantChoice::Affine => {
                cfg.mpc.state_box.clear();
                if !boxes_touched {
                    cfg.mpc.u_lo = DVector::from_element(m, -10.0);
                    cfg.mpc.u_hi = DVector::from_element(m, 10.0);
                    cfg.mpc.us_lo = DVector::from_element(m, -9.9);
                    cfg.mpc.us_hi = DVector::from_element(m, 9.9);
                }
                if !y_ref_touched {
                    cfg.mpc.y_ref = DVector::zeros(p);
                }
                if !x0_touched {
                    cfg.x0 = DVector::zeros(n);
                }
            }
        }
        // n_apply defaults to the model state dimension.
        if !n_apply_touched {
            cfg.mpc.n_apply = n.min(cfg.mpc.horizon);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn plant_dims(&self) -> Result<(usize, usize, usize), ConfigError> {
        match self.plant {
            PlantChoice::Cstr => Ok((3, 1, 1)),
            PlantChoice::Affine => {
                let n = self
                    .affine
                    .n
                    .ok_or_else(|| ConfigError("affine plant requires affine.n".into()))?;
                let m = self
                    .affine
                    .m
                    .ok_or_else(|| ConfigError("affine plant requires affine.m".into()))?;
                let p = self
                    .affine
                    .p
                    .ok_or_else(|| ConfigError("affine plant requires affine.p".into()))?;
                Ok((n, m, p))
            }
        }
    }

    /// Builds the configured plant.
    pub fn build_plant(&self) -> Result<Box<dyn Plant + Sync + Send>, ConfigError> {
        match self.plant {
            PlantChoice::Cstr => Ok(Box::new(AugmentedPlant::new(CstrPlant::default()))),
            PlantChoice::Affine => {
                let (n, m, p) = self.plant_dims()?;
                let grab = |name: &str, v: &Option<Vec<f64>>, rows: usize, cols: usize| {
                    let data = v.clone().unwrap_or_else(|| vec![0.0; rows * cols]);
                    if data.len() != rows * cols {
                        return Err(ConfigError(format!(
                            "affine.{name} has {} entries, expected {}",
                            data.len(),
                            rows * cols
                        )));
                    }
                    Ok(DMatrix::from_row_slice(rows, cols, &data))
                };
                let model = AffineModel {
                    a: grab("a", &self.affine.a, n, n)?,
                    b: grab("b", &self.affine.b, n, m)?,
                    e: DVector::from_vec(
                        self.affine.e.clone().unwrap_or_else(|| vec![0.0; n]),
                    ),
                    c: grab("c", &self.affine.c, p, n)?,
                    d: grab("d", &self.affine.d, p, m)?,
                    r: DVector::from_vec(
                        self.affine.r.clone().unwrap_or_else(|| vec![0.0; p]),
                    ),
                };
                model
                    .validate()
                    .map_err(|e| ConfigError(format!("affine plant: {e}")))?;
                AffinePlant::new(model)
                    .map(|p| Box::new(p) as Box<dyn Plant + Sync + Send>)
                    .map_err(|e| ConfigError(e.to_string()))
            }
        }
    }

    /// Bootstrap strategy with this configuration's seed.
    pub fn bootstrap_strategy(&self) -> BootstrapStrategy {
        if self.bootstrap_excited {
            let m = match self.plant {
                PlantChoice::Cstr => 1,
                PlantChoice::Affine => self.affine.m.unwrap_or(1),
            };
            BootstrapStrategy::ExcitedRollout {
                nominal: self
                    .bootstrap_nominal
                    .clone()
                    .unwrap_or_else(|| DVector::zeros(m)),
                amplitude: self.bootstrap_amplitude,
                seed: self.seed,
            }
        } else {
            BootstrapStrategy::ModelBasedMpc
        }
    }

    /// Cross-field validation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (n, m, p) = self.plant_dims()?;
        self.mpc
            .validate(n, m, p)
            .map_err(|e| ConfigError(e.to_string()))?;
        if self.x0.len() != n {
            return Err(ConfigError(format!(
                "x0 has length {}, expected {n}",
                self.x0.len()
            )));
        }
        let _ = (m, p);
        if self.t_end < self.mpc.window {
            return Err(ConfigError(format!(
                "t_end = {} must be at least the window length {}",
                self.t_end, self.mpc.window
            )));
        }
        if self.sweep.lambdas.is_empty() || self.sweep.windows.is_empty() {
            return Err(ConfigError("sweep grid must be nonempty".into()));
        }
        if self.sweep.lambdas.iter().any(|l| *l < 0.0) {
            return Err(ConfigError("sweep lambdas must be nonnegative".into()));
        }
        Ok(())
    }
}
