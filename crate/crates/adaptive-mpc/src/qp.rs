//! Dense convex quadratic programming.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 zᵀ H z + gᵀ z
//!     subject to  A_eq z  = b_eq
//!                 A_in z <= b_in
//! ```
//!
//! with `H` symmetric positive (semi)definite. [`solve_eqp`] handles the
//! equality-constrained kernel through its KKT system, [`solve_qp`] runs a
//! dual active-set iteration over the inequalities, and [`brute_force_qp`]
//! enumerates active sets as an independent oracle for small problems.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector};

/// Default KKT tolerance for reporting a solution as optimal.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Permitted asymmetry in the cost matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    Dimension(String),
    NotSymmetric { max_asymmetry: f64 },
    /// The cost matrix is not positive definite (required by the dual
    /// active-set iteration).
    NotPositiveDefinite,
    /// Equality rows are linearly dependent.
    RankDeficientEqualities,
    /// The cost matrix is indefinite or singular on the equality null space.
    IndefiniteReducedHessian,
    Numerical(&'static str),
}

impl fmt::Display for QpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpError::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            QpError::NotSymmetric { max_asymmetry } => {
                write!(f, "cost matrix asymmetric by {max_asymmetry:.3e}")
            }
            QpError::NotPositiveDefinite => write!(f, "cost matrix not positive definite"),
            QpError::RankDeficientEqualities => write!(f, "equality rows linearly dependent"),
            QpError::IndefiniteReducedHessian => {
                write!(f, "cost matrix indefinite on the equality null space")
            }
            QpError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for QpError {}

/// A dense convex QP. Inequalities are `a_in z ≤ b_in` row-wise.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self, QpError> {
        let p = QpProblem {
            h,
            g,
            a_eq,
            b_eq,
            a_in,
            b_in,
        };
        p.validate()?;
        Ok(p)
    }

    /// Problem without any constraints.
    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let d = g.len();
        QpProblem::new(
            h,
            g,
            DMatrix::zeros(0, d),
            DVector::zeros(0),
            DMatrix::zeros(0, d),
            DVector::zeros(0),
        )
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn eq_count(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn in_count(&self) -> usize {
        self.a_in.nrows()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let d = self.dim();
        if d == 0 {
            return Err(QpError::Dimension("empty problem".into()));
        }
        if self.h.nrows() != d || self.h.ncols() != d {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, expected {d}x{d}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.a_eq.ncols() != d && self.a_eq.nrows() > 0 {
            return Err(QpError::Dimension(format!(
                "A_eq has {} columns, expected {d}",
                self.a_eq.ncols()
            )));
        }
        if self.a_in.ncols() != d && self.a_in.nrows() > 0 {
            return Err(QpError::Dimension(format!(
                "A_in has {} columns, expected {d}",
                self.a_in.ncols()
            )));
        }
        if self.b_eq.len() != self.a_eq.nrows() {
            return Err(QpError::Dimension(format!(
                "b_eq has length {}, expected {}",
                self.b_eq.len(),
                self.a_eq.nrows()
            )));
        }
        if self.b_in.len() != self.a_in.nrows() {
            return Err(QpError::Dimension(format!(
                "b_in has length {}, expected {}",
                self.b_in.len(),
                self.a_in.nrows()
            )));
        }
        let scale = self.h.amax().max(1.0);
        let max_asymmetry = (&self.h - self.h.transpose()).amax();
        if max_asymmetry > SYMMETRY_TOL * scale {
            return Err(QpError::NotSymmetric { max_asymmetry });
        }
        Ok(())
    }

    /// `1/2 zᵀHz + gᵀz`.
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z.transpose() * &self.h * z)[(0, 0)] + self.g.dot(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl fmt::Display for QpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpStatus::Optimal => write!(f, "optimal"),
            QpStatus::Infeasible => write!(f, "infeasible"),
            QpStatus::MaxIter => write!(f, "max_iter"),
        }
    }
}

/// KKT residuals of a candidate solution, all nonnegative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    /// `‖Hz + g + A_eqᵀν + A_inᵀμ‖_∞`.
    pub stationarity: f64,
    /// `‖A_eq z − b_eq‖_∞`.
    pub primal_eq: f64,
    /// `max(0, max_i (A_in z − b_in)_i)`.
    pub primal_in: f64,
    /// `max_i |μ_i (b_in − A_in z)_i|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_eq)
            .max(self.primal_in)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub status: QpStatus,
    pub eq_multipliers: DVector<f64>,
    pub in_multipliers: DVector<f64>,
    /// Residual violation certifying infeasibility when `status` is
    /// [`QpStatus::Infeasible`]; zero otherwise.
    pub infeasibility: f64,
    pub iterations: usize,
}

/// Solver knobs for [`solve_qp`]. `max_iter = 0` selects an automatic limit.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_iter: 0,
        }
    }
}

fn kkt_residuals(
    p: &QpProblem,
    z: &DVector<f64>,
    nu: &DVector<f64>,
    mu: &DVector<f64>,
) -> KktResiduals {
    let mut grad = &p.h * z + &p.g;
    if p.eq_count() > 0 {
        grad += p.a_eq.transpose() * nu;
    }
    if p.in_count() > 0 {
        grad += p.a_in.transpose() * mu;
    }
    let stationarity = grad.amax();
    let primal_eq = if p.eq_count() > 0 {
        (&p.a_eq * z - &p.b_eq).amax()
    } else {
        0.0
    };
    let mut primal_in: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    if p.in_count() > 0 {
        let slack = &p.b_in - &p.a_in * z;
        for i in 0..slack.len() {
            primal_in = primal_in.max(-slack[i]);
            complementarity = complementarity.max((mu[i] * slack[i]).abs());
        }
        primal_in = primal_in.max(0.0);
    }
    KktResiduals {
        stationarity,
        primal_eq,
        primal_in,
        complementarity,
    }
}

/// Solves the equality-constrained problem
/// `min 1/2 zᵀHz + gᵀz  s.t.  A_eq z = b_eq` through its KKT system.
///
/// Fails if the equality rows are linearly dependent or if `H` is not
/// positive definite on the equality null space (the KKT solution would be a
/// saddle point rather than a minimizer).
pub fn solve_eqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
) -> Result<QpSolution, QpError> {
    let d = g.len();
    let k = a_eq.nrows();
    if h.nrows() != d || h.ncols() != d {
        return Err(QpError::Dimension(format!(
            "H is {}x{}, expected {d}x{d}",
            h.nrows(),
            h.ncols()
        )));
    }
    if k > 0 && a_eq.ncols() != d {
        return Err(QpError::Dimension(format!(
            "A_eq has {} columns, expected {d}",
            a_eq.ncols()
        )));
    }
    if b_eq.len() != k {
        return Err(QpError::Dimension(format!(
            "b_eq has length {}, expected {k}",
            b_eq.len()
        )));
    }
    if k > d {
        return Err(QpError::RankDeficientEqualities);
    }

    // Rank of the equalities and a null-space basis for the curvature check.
    let null_basis = if k > 0 {
        let svd = a_eq.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > 1e-12 * smax.max(1.0))
            .count();
        if rank < k {
            return Err(QpError::RankDeficientEqualities);
        }
        let vt = svd.v_t.as_ref().expect("svd with v_t");
        // The thin SVD only spans the row space; the null space is the
        // column space of the complementary projector, which is symmetric
        // with eigenvalues in {0, 1}.
        if d > k {
            let v = vt.transpose(); // d x k
            let proj = DMatrix::identity(d, d) - &v * v.transpose();
            let psvd = proj.svd(true, false);
            let q = psvd.u.as_ref().expect("svd with u");
            let cols: Vec<usize> = (0..d)
                .filter(|&j| psvd.singular_values[j] > 0.5)
                .collect();
            let mut basis = DMatrix::zeros(d, cols.len());
            for (jj, &j) in cols.iter().enumerate() {
                basis.set_column(jj, &q.column(j).into_owned());
            }
            Some(basis)
        } else {
            None
        }
    } else {
        None
    };

    // Curvature check on the null space.
    let reduced = match (&null_basis, k) {
        (_, 0) => Some(h.clone()),
        (Some(basis), _) if basis.ncols() > 0 => Some(basis.transpose() * h * basis),
        _ => None,
    };
    if let Some(red) = reduced {
        let sym = (&red + red.transpose()) * 0.5;
        if Cholesky::new(sym).is_none() {
            return Err(QpError::IndefiniteReducedHessian);
        }
    }

    // Assemble and solve the KKT system.
    let mut kkt = DMatrix::zeros(d + k, d + k);
    kkt.view_mut((0, 0), (d, d)).copy_from(h);
    if k > 0 {
        kkt.view_mut((0, d), (d, k)).copy_from(&a_eq.transpose());
        kkt.view_mut((d, 0), (k, d)).copy_from(a_eq);
    }
    let mut rhs = DVector::zeros(d + k);
    rhs.rows_mut(0, d).copy_from(&(-g));
    if k > 0 {
        rhs.rows_mut(d, k).copy_from(b_eq);
    }
    let solution = kkt
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(QpError::IndefiniteReducedHessian)?;
    let z = solution.rows(0, d).into_owned();
    let nu = solution.rows(d, k).into_owned();

    let objective = 0.5 * (z.transpose() * h * &z)[(0, 0)] + g.dot(&z);
    let dummy = QpProblem {
        h: h.clone(),
        g: g.clone(),
        a_eq: a_eq.clone(),
        b_eq: b_eq.clone(),
        a_in: DMatrix::zeros(0, d),
        b_in: DVector::zeros(0),
    };
    let kkt_res = kkt_residuals(&dummy, &z, &nu, &DVector::zeros(0));
    Ok(QpSolution {
        z,
        objective,
        kkt: kkt_res,
        status: QpStatus::Optimal,
        eq_multipliers: nu,
        in_multipliers: DVector::zeros(0),
        infeasibility: 0.0,
        iterations: 1,
    })
}

/// Ruiz-style symmetric equilibration of `H`. Returns the diagonal scaling
/// `D` (as a vector) such that `D H D` has rows of roughly unit infinity
/// norm.
fn ruiz_scaling(h: &DMatrix<f64>) -> DVector<f64> {
    let d = h.nrows();
    let mut scale = DVector::from_element(d, 1.0);
    for _ in 0..10 {
        let mut worst: f64 = 0.0;
        let mut factors = DVector::from_element(d, 1.0);
        for i in 0..d {
            let mut norm: f64 = 0.0;
            for j in 0..d {
                norm = norm.max((scale[i] * h[(i, j)] * scale[j]).abs());
            }
            if norm > 0.0 {
                factors[i] = norm.sqrt().recip();
                worst = worst.max((norm - 1.0).abs());
            }
        }
        for i in 0..d {
            scale[i] *= factors[i];
        }
        if worst < 1e-2 {
            break;
        }
    }
    scale
}

/// Internal constraint in `n ᵀ z ≥ β` form.
struct Constraint {
    normal: DVector<f64>,
    bound: f64,
    /// Row norm divided out during normalization; multipliers are scaled
    /// back by this factor.
    row_scale: f64,
    is_eq: bool,
    /// Row index in the original problem.
    index: usize,
}

struct ActiveEntry {
    constraint: usize,
    mult: f64,
}

/// Dual active-set solver for strictly convex problems.
///
/// Starts from the unconstrained minimizer, which is dual feasible, and adds
/// the most violated constraint one at a time, taking the dual steps needed
/// to keep the active multipliers nonnegative. Primal infeasibility is
/// detected when a violated constraint admits neither a primal nor a dual
/// step. Equalities are installed first and never leave the active set.
pub fn solve_qp(p: &QpProblem, opts: SolveOptions) -> Result<QpSolution, QpError> {
    p.validate()?;
    let d = p.dim();
    if p.eq_count() > d {
        return Err(QpError::RankDeficientEqualities);
    }
    let max_iter = if opts.max_iter == 0 {
        50 * (d + p.in_count() + 1)
    } else {
        opts.max_iter
    };

    // Variable scaling z = D ẑ; multipliers are unaffected by D but scale
    // with the row normalization below.
    let dscale = ruiz_scaling(&p.h);
    let mut h_s = p.h.clone();
    for i in 0..d {
        for j in 0..d {
            h_s[(i, j)] *= dscale[i] * dscale[j];
        }
    }
    h_s = (&h_s + h_s.transpose()) * 0.5;
    let g_s = DVector::from_fn(d, |i, _| p.g[i] * dscale[i]);

    let chol = Cholesky::new(h_s.clone()).ok_or(QpError::NotPositiveDefinite)?;

    // Normalized constraints in ≥ form: equalities first, then inequalities.
    let mut constraints = Vec::with_capacity(p.eq_count() + p.in_count());
    for i in 0..p.eq_count() {
        let mut normal = DVector::from_fn(d, |j, _| p.a_eq[(i, j)] * dscale[j]);
        let norm = normal.norm();
        if norm <= 1e-14 {
            if p.b_eq[i].abs() > 1e-12 {
                return infeasible_result(p, d, p.b_eq[i].abs(), 0);
            }
            continue; // trivially satisfied zero row
        }
        normal /= norm;
        constraints.push(Constraint {
            normal,
            bound: p.b_eq[i] / norm,
            row_scale: norm,
            is_eq: true,
            index: i,
        });
    }
    let eq_total = constraints.len();
    for i in 0..p.in_count() {
        // a z ≤ b  ⟺  (−a) z ≥ −b
        let mut normal = DVector::from_fn(d, |j, _| -p.a_in[(i, j)] * dscale[j]);
        let norm = normal.norm();
        if norm <= 1e-14 {
            if p.b_in[i] < -1e-12 {
                return infeasible_result(p, d, -p.b_in[i], 0);
            }
            continue;
        }
        normal /= norm;
        constraints.push(Constraint {
            normal,
            bound: -p.b_in[i] / norm,
            row_scale: norm,
            is_eq: false,
            index: i,
        });
    }

    // Unconstrained minimizer.
    let mut z = -chol.solve(&g_s);
    let mut active: Vec<ActiveEntry> = Vec::new();
    let mut w_cache: DMatrix<f64> = DMatrix::zeros(d, 0); // H⁻¹ N for active normals
    let mut iterations = 0usize;

    let feas_tol = 1e-10;
    let curv_tol = 1e-11;

    // Directions for a candidate normal given the current active set:
    // primal direction d_z (movement towards the constraint that keeps the
    // active set satisfied) and dual direction rvec.
    let directions = |active: &[ActiveEntry],
                      w_cache: &DMatrix<f64>,
                      normal: &DVector<f64>|
     -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let hinv_n = chol.solve(normal);
        if active.is_empty() {
            return Ok((hinv_n, DVector::zeros(0)));
        }
        let na: DMatrix<f64> = {
            let mut m = DMatrix::zeros(d, active.len());
            for (k, entry) in active.iter().enumerate() {
                m.set_column(k, &constraints[entry.constraint].normal);
            }
            m
        };
        let m_small = na.transpose() * w_cache;
        let m_sym = (&m_small + m_small.transpose()) * 0.5;
        let rhs = na.transpose() * &hinv_n;
        let rvec = Cholesky::new(m_sym)
            .map(|c| c.solve(&rhs))
            .or_else(|| m_small.clone().full_piv_lu().solve(&rhs))
            .ok_or(QpError::Numerical("active-set system singular"))?;
        let d_z = hinv_n - w_cache * &rvec;
        Ok((d_z, rvec))
    };

    let rebuild_cache = |active: &[ActiveEntry]| -> DMatrix<f64> {
        let mut w = DMatrix::zeros(d, active.len());
        for (k, entry) in active.iter().enumerate() {
            w.set_column(k, &chol.solve(&constraints[entry.constraint].normal));
        }
        w
    };

    // Install equalities.
    for ci in 0..eq_total {
        let (d_z, rvec) = directions(&active, &w_cache, &constraints[ci].normal)?;
        let slack = constraints[ci].bound - constraints[ci].normal.dot(&z);
        let theta = constraints[ci].normal.dot(&d_z);
        if theta.abs() <= curv_tol {
            if slack.abs() <= 1e-9 {
                // Dependent on already-installed equalities.
                return Err(QpError::RankDeficientEqualities);
            }
            return infeasible_result(p, d, slack.abs() * constraints[ci].row_scale, iterations);
        }
        let t = slack / theta;
        z += &d_z * t;
        for (k, entry) in active.iter_mut().enumerate() {
            entry.mult -= t * rvec[k];
        }
        active.push(ActiveEntry {
            constraint: ci,
            mult: t,
        });
        w_cache = rebuild_cache(&active);
        iterations += 1;
    }

    // Inequality loop.
    let mut status = QpStatus::Optimal;
    'outer: loop {
        // Most violated inactive inequality.
        let mut worst: Option<(usize, f64)> = None;
        for ci in eq_total..constraints.len() {
            if active.iter().any(|e| e.constraint == ci) {
                continue;
            }
            let v = constraints[ci].bound - constraints[ci].normal.dot(&z);
            if v > feas_tol && worst.map(|(_, wv)| v > wv).unwrap_or(true) {
                worst = Some((ci, v));
            }
        }
        let Some((entering, mut violation)) = worst else {
            break;
        };
        let mut entering_mult = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                status = QpStatus::MaxIter;
                break 'outer;
            }
            let (d_z, rvec) = directions(&active, &w_cache, &constraints[entering].normal)?;
            let theta = constraints[entering].normal.dot(&d_z);

            // Longest dual step before an active inequality multiplier
            // reaches zero.
            let mut t_dual = f64::INFINITY;
            let mut drop_idx = None;
            for (k, entry) in active.iter().enumerate() {
                if constraints[entry.constraint].is_eq {
                    continue;
                }
                if rvec[k] > 1e-12 {
                    let ratio = entry.mult / rvec[k];
                    if ratio < t_dual {
                        t_dual = ratio;
                        drop_idx = Some(k);
                    }
                }
            }
            let t_primal = if theta > curv_tol {
                violation / theta
            } else {
                f64::INFINITY
            };

            if t_primal.is_infinite() && t_dual.is_infinite() {
                return infeasible_result(
                    p,
                    d,
                    violation * constraints[entering].row_scale,
                    iterations,
                );
            }

            let t = t_primal.min(t_dual);
            if t_primal.is_finite() {
                z += &d_z * t;
                violation -= t * theta;
            }
            for (k, entry) in active.iter_mut().enumerate() {
                entry.mult -= t * rvec[k];
            }
            entering_mult += t;

            if t_primal <= t_dual {
                active.push(ActiveEntry {
                    constraint: entering,
                    mult: entering_mult,
                });
                w_cache = rebuild_cache(&active);
                continue 'outer;
            }
            let k = drop_idx.expect("finite dual step has a blocking index");
            active.remove(k);
            w_cache = rebuild_cache(&active);
        }
    }

    // Map back to the original variables and multipliers.
    let mut z_orig = DVector::from_fn(d, |i, _| z[i] * dscale[i]);
    let mut nu = DVector::zeros(p.eq_count());
    let mut mu = DVector::zeros(p.in_count());
    for entry in &active {
        let c = &constraints[entry.constraint];
        if c.is_eq {
            nu[c.index] = -entry.mult / c.row_scale;
        } else {
            // ≥-form multiplier maps to μ ≥ 0 for the ≤-form row.
            mu[c.index] = entry.mult / c.row_scale;
        }
    }
    let mut kkt = kkt_residuals(p, &z_orig, &nu, &mu);

    // Polish: incremental updates accumulate drift over long runs, so
    // re-solve the equality problem on the final active set and keep the
    // result when it is consistent and tighter.
    if status == QpStatus::Optimal && kkt.max() > 1e-12 {
        let active_in: Vec<usize> = active
            .iter()
            .filter(|e| !constraints[e.constraint].is_eq)
            .map(|e| constraints[e.constraint].index)
            .collect();
        let rows = p.eq_count() + active_in.len();
        if rows <= d {
            let mut a_act = DMatrix::zeros(rows, d);
            let mut b_act = DVector::zeros(rows);
            if p.eq_count() > 0 {
                a_act
                    .view_mut((0, 0), (p.eq_count(), d))
                    .copy_from(&p.a_eq);
                b_act.rows_mut(0, p.eq_count()).copy_from(&p.b_eq);
            }
            for (k, &i) in active_in.iter().enumerate() {
                for j in 0..d {
                    a_act[(p.eq_count() + k, j)] = p.a_in[(i, j)];
                }
                b_act[p.eq_count() + k] = p.b_in[i];
            }
            if let Ok(polished) = solve_eqp(&p.h, &p.g, &a_act, &b_act) {
                let mut mu_p = DVector::zeros(p.in_count());
                for (k, &i) in active_in.iter().enumerate() {
                    mu_p[i] = polished.eq_multipliers[p.eq_count() + k];
                }
                let nu_p = polished.eq_multipliers.rows(0, p.eq_count()).into_owned();
                let kkt_p = kkt_residuals(p, &polished.z, &nu_p, &mu_p);
                let dual_ok = mu_p.iter().all(|v| *v >= -opts.tol);
                if dual_ok && kkt_p.max() < kkt.max() {
                    z_orig = polished.z;
                    nu = nu_p;
                    mu = mu_p;
                    kkt = kkt_p;
                }
            }
        }
    }
    if status == QpStatus::Optimal && kkt.max() > opts.tol {
        return Err(QpError::Numerical("KKT residuals exceed tolerance"));
    }
    Ok(QpSolution {
        objective: p.objective(&z_orig),
        z: z_orig,
        kkt,
        status,
        eq_multipliers: nu,
        in_multipliers: mu,
        infeasibility: 0.0,
        iterations,
    })
}

fn infeasible_result(
    p: &QpProblem,
    d: usize,
    violation: f64,
    iterations: usize,
) -> Result<QpSolution, QpError> {
    Ok(QpSolution {
        z: DVector::zeros(d),
        objective: f64::INFINITY,
        kkt: KktResiduals::default(),
        status: QpStatus::Infeasible,
        eq_multipliers: DVector::zeros(p.eq_count()),
        in_multipliers: DVector::zeros(p.in_count()),
        infeasibility: violation,
        iterations,
    })
}

/// Enumerates every subset of inequality constraints as the active set,
/// solves the resulting equality-constrained problem, and returns the
/// feasible, dual-feasible candidate with the smallest objective.
///
/// Intended as a test oracle; requires `dim ≤ 8` and at most 12 inequality
/// rows.
pub fn brute_force_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let d = p.dim();
    let ki = p.in_count();
    let ke = p.eq_count();
    if d > 8 || ki > 12 {
        return Err(QpError::Dimension(format!(
            "brute force limited to dim ≤ 8 and ≤ 12 inequalities, got {d} and {ki}"
        )));
    }
    let b_scale = p
        .b_in
        .iter()
        .chain(p.b_eq.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let feas_tol = 1e-9 * (1.0 + b_scale);
    let dual_tol = 1e-9;

    let mut best: Option<QpSolution> = None;
    let mut best_certificate = f64::INFINITY;

    for mask in 0u32..(1 << ki) {
        let selected: Vec<usize> = (0..ki).filter(|i| mask & (1 << i) != 0).collect();
        if ke + selected.len() > d {
            continue;
        }
        let rows = ke + selected.len();
        let mut a_act = DMatrix::zeros(rows, d);
        let mut b_act = DVector::zeros(rows);
        if ke > 0 {
            a_act.view_mut((0, 0), (ke, d)).copy_from(&p.a_eq);
            b_act.rows_mut(0, ke).copy_from(&p.b_eq);
        }
        for (k, &i) in selected.iter().enumerate() {
            for j in 0..d {
                a_act[(ke + k, j)] = p.a_in[(i, j)];
            }
            b_act[ke + k] = p.b_in[i];
        }
        let Ok(candidate) = solve_eqp(&p.h, &p.g, &a_act, &b_act) else {
            continue;
        };

        // Primal feasibility over all inequalities.
        let mut worst_violation: f64 = 0.0;
        if ki > 0 {
            let slack = &p.b_in - &p.a_in * &candidate.z;
            worst_violation = slack.iter().fold(0.0f64, |acc, s| acc.max(-s));
        }
        best_certificate = best_certificate.min(worst_violation);
        if worst_violation > feas_tol {
            continue;
        }
        // Dual feasibility of the selected rows.
        let mults = candidate.eq_multipliers.rows(ke, selected.len());
        if mults.iter().any(|m| *m < -dual_tol) {
            continue;
        }

        let mut mu = DVector::zeros(ki);
        for (k, &i) in selected.iter().enumerate() {
            mu[i] = candidate.eq_multipliers[ke + k].max(0.0);
        }
        let nu = candidate.eq_multipliers.rows(0, ke).into_owned();
        let kkt = kkt_residuals(p, &candidate.z, &nu, &mu);
        let refined = QpSolution {
            objective: p.objective(&candidate.z),
            z: candidate.z,
            kkt,
            status: QpStatus::Optimal,
            eq_multipliers: nu,
            in_multipliers: mu,
            infeasibility: 0.0,
            iterations: 1,
        };
        if best
            .as_ref()
            .map(|b| refined.objective < b.objective)
            .unwrap_or(true)
        {
            best = Some(refined);
        }
    }

    match best {
        Some(sol) => Ok(sol),
        None => infeasible_result(
            p,
            d,
            if best_certificate.is_finite() {
                best_certificate
            } else {
                f64::INFINITY
            },
            1 << ki,
        ),
    }
}
