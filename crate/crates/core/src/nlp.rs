//! Dense nonlinear programming.
//!
//! The built-in solver is an augmented Lagrangian method. Inequalities get
//! slack variables with bounds, so the outer loop only sees equalities, and
//! each subproblem is a bound-constrained minimization solved by a projected
//! quasi-Newton method with an Armijo search along the projection arc.

use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{GiseError, Result};
use crate::par::{self, Execution};

pub type ObjectiveFn = dyn Fn(&[f64]) -> Result<f64> + Send + Sync;
pub type GradientFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
pub type ConstraintFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;
/// Hessian of `f(z) + w . [c_E(z); c_I(z)]` given `(z, w)`.
pub type HessianFn = dyn Fn(&[f64], &[f64]) -> Result<DMatrix<f64>> + Send + Sync;

/// `min f(z)` subject to `c_E(z) = 0`, `lo_I <= c_I(z) <= hi_I`, `lo <= z <= hi`.
///
/// Missing derivative callbacks fall back to forward differences.
#[derive(Clone)]
pub struct NlpProblem {
    n: usize,
    objective: Arc<ObjectiveFn>,
    gradient: Option<Arc<GradientFn>>,
    m_eq: usize,
    equality: Option<Arc<ConstraintFn>>,
    eq_jacobian: Option<Arc<JacobianFn>>,
    inequality: Option<Arc<ConstraintFn>>,
    in_jacobian: Option<Arc<JacobianFn>>,
    hessian: Option<Arc<HessianFn>>,
    in_lower: Vec<f64>,
    in_upper: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    exec: Execution,
}

impl fmt::Debug for NlpProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NlpProblem")
            .field("n", &self.n)
            .field("m_eq", &self.m_eq)
            .field("m_in", &self.in_lower.len())
            .finish_non_exhaustive()
    }
}

impl NlpProblem {
    pub fn new(n: usize, objective: impl Fn(&[f64]) -> Result<f64> + Send + Sync + 'static) -> Self {
        Self {
            n,
            objective: Arc::new(objective),
            gradient: None,
            m_eq: 0,
            equality: None,
            eq_jacobian: None,
            inequality: None,
            in_jacobian: None,
            hessian: None,
            in_lower: Vec::new(),
            in_upper: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
            exec: Execution::default(),
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn equalities(mut self, m: usize, c: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.m_eq = m;
        self.equality = Some(Arc::new(c));
        self
    }

    pub fn with_equality_jacobian(
        mut self,
        j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.eq_jacobian = Some(Arc::new(j));
        self
    }

    pub fn inequalities(
        mut self,
        lower: Vec<f64>,
        upper: Vec<f64>,
        c: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.in_lower = lower;
        self.in_upper = upper;
        self.inequality = Some(Arc::new(c));
        self
    }

    pub fn with_inequality_jacobian(
        mut self,
        j: impl Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.in_jacobian = Some(Arc::new(j));
        self
    }

    /// Exact Lagrangian Hessian; without it the solver uses damped BFGS.
    pub fn with_lagrangian_hessian(
        mut self,
        h: impl Fn(&[f64], &[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn has_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn lagrangian_hessian(&self, z: &[f64], w: &[f64]) -> Option<Result<DMatrix<f64>>> {
        self.hessian.as_ref().map(|h| h(z, w))
    }

    pub fn bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    /// Scheduling of finite-difference columns.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn num_equalities(&self) -> usize {
        self.m_eq
    }

    pub fn num_inequalities(&self) -> usize {
        self.in_lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn inequality_lower(&self) -> &[f64] {
        &self.in_lower
    }

    pub fn inequality_upper(&self) -> &[f64] {
        &self.in_upper
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |lo: &[f64], hi: &[f64], len: usize, what: &str| -> Result<()> {
            if lo.len() != len || hi.len() != len {
                return Err(GiseError::Dimension(format!("{what} bounds need {len} entries")));
            }
            if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                return Err(GiseError::Dimension(format!("{what} bounds are not ordered")));
            }
            Ok(())
        };
        ordered(&self.lower, &self.upper, self.n, "variable")?;
        ordered(&self.in_lower, &self.in_upper, self.in_upper.len(), "inequality")
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        let f = (self.objective)(z)?;
        if f.is_finite() {
            Ok(f)
        } else {
            Err(GiseError::NonFiniteIndex(0))
        }
    }

    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.gradient {
            Some(g) => checked(g(z)?),
            None => central_gradient(&|v: &[f64]| (self.objective)(v), z),
        }
    }

    pub fn eval_equalities(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.equality {
            Some(c) => checked_len(c(z)?, self.m_eq),
            None => Ok(Vec::new()),
        }
    }

    pub fn equality_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        match (&self.equality, &self.eq_jacobian) {
            (_, Some(j)) => j(z),
            (Some(c), None) => central_jacobian(&|v: &[f64]| c(v), z, self.exec),
            (None, None) => Ok(DMatrix::zeros(0, self.n)),
        }
    }

    pub fn eval_inequalities(&self, z: &[f64]) -> Result<Vec<f64>> {
        match &self.inequality {
            Some(c) => checked_len(c(z)?, self.in_lower.len()),
            None => Ok(Vec::new()),
        }
    }

    pub fn inequality_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        match (&self.inequality, &self.in_jacobian) {
            (_, Some(j)) => j(z),
            (Some(c), None) => central_jacobian(&|v: &[f64]| c(v), z, self.exec),
            (None, None) => Ok(DMatrix::zeros(0, self.n)),
        }
    }

    /// Largest equality residual or distance of an inequality to its range.
    pub fn max_violation(&self, z: &[f64]) -> Result<f64> {
        let ce = self.eval_equalities(z)?;
        let ci = self.eval_inequalities(z)?;
        let mut v = ce.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        for ((c, lo), hi) in ci.iter().zip(&self.in_lower).zip(&self.in_upper) {
            v = v.max(lo - c).max(c - hi);
        }
        Ok(v)
    }
}

fn checked(v: Vec<f64>) -> Result<Vec<f64>> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(GiseError::NonFiniteIndex(i)),
        None => Ok(v),
    }
}

fn checked_len(v: Vec<f64>, m: usize) -> Result<Vec<f64>> {
    if v.len() != m {
        return Err(GiseError::Dimension(format!("constraint callback returned {} values, expected {m}", v.len())));
    }
    checked(v)
}

fn fd_step(z: f64, scale: f64) -> f64 {
    scale * f64::EPSILON.sqrt() * (1.0 + z.abs())
}

/// Forward-difference gradient with step `scale * sqrt(eps) * (1 + |z_i|)`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, z: &[f64], scale: f64) -> Result<Vec<f64>> {
    let f0 = f(z)?;
    if !f0.is_finite() {
        return Err(GiseError::NonFiniteIndex(0));
    }
    let mut work = z.to_vec();
    let mut g = vec![0.0; z.len()];
    for i in 0..z.len() {
        let h = fd_step(z[i], scale);
        work[i] = z[i] + h;
        let fi = f(&work)?;
        if !fi.is_finite() {
            return Err(GiseError::NonFiniteIndex(i));
        }
        g[i] = (fi - f0) / (work[i] - z[i]);
        work[i] = z[i];
    }
    Ok(g)
}

/// Forward-difference Jacobian; columns are evaluated independently.
pub fn fd_jacobian(c: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync), z: &[f64], exec: Execution) -> Result<DMatrix<f64>> {
    let c0 = checked(c(z)?)?;
    let m = c0.len();
    let cols = par::try_map_indexed(z.len(), exec, |i| -> Result<Vec<f64>> {
        let mut work = z.to_vec();
        work[i] += fd_step(z[i], 1.0);
        let h = work[i] - z[i];
        let ci = c(&work)?;
        if ci.len() != m {
            return Err(GiseError::Dimension(format!("callback returned {} values, expected {m}", ci.len())));
        }
        if ci.iter().any(|v| !v.is_finite()) {
            return Err(GiseError::NonFiniteIndex(i));
        }
        Ok(ci.iter().zip(&c0).map(|(a, b)| (a - b) / h).collect())
    })?;
    let mut jac = DMatrix::zeros(m, z.len());
    for (i, col) in cols.into_iter().enumerate() {
        jac.column_mut(i).copy_from_slice(&col);
    }
    Ok(jac)
}

/// Central differences with step `cbrt(eps) * (1 + |z_i|)`; the solver's
/// fallback when no derivative callback is given.
pub fn central_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, z: &[f64]) -> Result<Vec<f64>> {
    let mut work = z.to_vec();
    let mut g = vec![0.0; z.len()];
    for i in 0..z.len() {
        let h = f64::EPSILON.cbrt() * (1.0 + z[i].abs());
        work[i] = z[i] + h;
        let fp = f(&work)?;
        let hp = work[i] - z[i];
        work[i] = z[i] - h;
        let fm = f(&work)?;
        let hm = z[i] - work[i];
        work[i] = z[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(GiseError::NonFiniteIndex(i));
        }
        g[i] = (fp - fm) / (hp + hm);
    }
    Ok(g)
}

pub fn central_jacobian(c: &(dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync), z: &[f64], exec: Execution) -> Result<DMatrix<f64>> {
    let m = checked(c(z)?)?.len();
    let cols = par::try_map_indexed(z.len(), exec, |i| -> Result<Vec<f64>> {
        let h = f64::EPSILON.cbrt() * (1.0 + z[i].abs());
        let mut work = z.to_vec();
        work[i] = z[i] + h;
        let hp = work[i] - z[i];
        let cp = c(&work)?;
        work[i] = z[i] - h;
        let hm = z[i] - work[i];
        let cm = c(&work)?;
        if cp.len() != m || cm.len() != m {
            return Err(GiseError::Dimension(format!("callback returned {} values, expected {m}", cp.len())));
        }
        if cp.iter().chain(&cm).any(|v| !v.is_finite()) {
            return Err(GiseError::NonFiniteIndex(i));
        }
        Ok(cp.iter().zip(&cm).map(|(a, b)| (a - b) / (hp + hm)).collect())
    })?;
    let mut jac = DMatrix::zeros(m, z.len());
    for (i, col) in cols.into_iter().enumerate() {
        jac.column_mut(i).copy_from_slice(&col);
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFailure,
    /// Feasible, but the iterate stopped moving before stationarity was met.
    Stalled,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::LineSearchFailure => "line-search-failure",
            SolveStatus::Stalled => "stalled",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Outer (multiplier) iterations.
    pub max_iter: usize,
    /// Quasi-Newton iterations per subproblem.
    pub max_inner_iter: usize,
    pub initial_penalty: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            opt_tol: 1e-8,
            max_iter: 60,
            max_inner_iter: 400,
            initial_penalty: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub z: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Infinity norm of the projected Lagrangian gradient.
    pub stationarity: f64,
    /// Total inner iterations.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub status: SolveStatus,
    /// Constraint violation after each outer iteration.
    pub violation_history: Vec<f64>,
    pub eq_multipliers: Vec<f64>,
    pub ineq_multipliers: Vec<f64>,
    pub penalty: f64,
}

const PENALTY_GROWTH: f64 = 10.0;
const MAX_PENALTY: f64 = 1e10;
/// Feasible outer iterations with no relative change in f beyond this
/// before the solve is reported as stalled.
const STALL_RTOL: f64 = 1e-14;
const STALL_OUTER: usize = 3;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_SHIFTS: usize = 30;
const SHIFT_FLOOR: f64 = 1e-10;
const BOUND_TOL: f64 = 1e-10;
/// Iterates this large only arise on unbounded discretizations.
const DIVERGENCE_LIMIT: f64 = 1e20;
const MAX_ACTIVE_SET_ITERS: usize = 50;

/// Function values and first derivatives at an extended point `(z, s)`.
struct Point {
    v: Vec<f64>,
    f: f64,
    /// `[c_E(z); c_I(z) - s]`.
    c: Vec<f64>,
    grad_f: Vec<f64>,
    /// Constraint Jacobian over `z` only, `[J_E; J_I]`.
    jac: DMatrix<f64>,
}

struct AugLag<'a> {
    p: &'a NlpProblem,
    n: usize,
    m_eq: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> AugLag<'a> {
    fn new(p: &'a NlpProblem) -> Self {
        let mut lo = p.lower.clone();
        lo.extend_from_slice(&p.in_lower);
        let mut hi = p.upper.clone();
        hi.extend_from_slice(&p.in_upper);
        Self {
            p,
            n: p.n,
            m_eq: p.m_eq,
            lo,
            hi,
        }
    }

    fn project(&self, v: &mut [f64]) {
        for ((x, l), h) in v.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(*l, *h);
        }
    }

    fn values(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        let z = &v[..self.n];
        let f = self.p.objective(z)?;
        let mut c = self.p.eval_equalities(z)?;
        let ci = self.p.eval_inequalities(z)?;
        c.extend(ci.iter().zip(&v[self.n..]).map(|(c, s)| c - s));
        Ok((f, c))
    }

    fn point(&self, v: Vec<f64>) -> Result<Point> {
        let (f, c) = self.values(&v)?;
        self.point_with(v, f, c)
    }

    fn point_with(&self, v: Vec<f64>, f: f64, c: Vec<f64>) -> Result<Point> {
        let z = &v[..self.n];
        let grad_f = self.p.gradient(z)?;
        let je = self.p.equality_jacobian(z)?;
        let ji = self.p.inequality_jacobian(z)?;
        let mut jac = DMatrix::zeros(c.len(), self.n);
        jac.view_mut((0, 0), je.shape()).copy_from(&je);
        jac.view_mut((je.nrows(), 0), ji.shape()).copy_from(&ji);
        Ok(Point { v, f, c, grad_f, jac })
    }

    fn merit(f: f64, c: &[f64], lambda: &[f64], mu: f64) -> f64 {
        let lin: f64 = c.iter().zip(lambda).map(|(c, l)| c * l).sum();
        let sq: f64 = c.iter().map(|c| c * c).sum();
        f + lin + 0.5 * mu * sq
    }

    /// Gradient of the augmented Lagrangian over `(z, s)`.
    fn merit_gradient(&self, pt: &Point, lambda: &[f64], mu: f64) -> Vec<f64> {
        let w = DVector::from_iterator(pt.c.len(), pt.c.iter().zip(lambda).map(|(c, l)| l + mu * c));
        let gz = pt.jac.tr_mul(&w);
        let mut g: Vec<f64> = pt.grad_f.iter().zip(gz.iter()).map(|(a, b)| a + b).collect();
        g.extend(w.iter().skip(self.m_eq).map(|w| -w));
        g
    }

    fn projected_gradient_norm(&self, v: &[f64], g: &[f64]) -> f64 {
        v.iter()
            .zip(g)
            .zip(self.lo.iter().zip(&self.hi))
            .map(|((x, gi), (l, h))| ((x - gi).clamp(*l, *h) - x).abs())
            .fold(0.0, f64::max)
    }

    /// Projected Lagrangian gradient with least-squares multipliers fitted on
    /// the variables off their bounds. Unlike the augmented Lagrangian
    /// gradient it carries no `mu * c` rounding noise.
    fn ls_stationarity(&self, pt: &Point) -> f64 {
        let nv = pt.v.len();
        let m = pt.c.len();
        let mut g = pt.grad_f.clone();
        g.resize(nv, 0.0);
        let mut jc = DMatrix::zeros(m, nv);
        jc.view_mut((0, 0), pt.jac.shape()).copy_from(&pt.jac);
        for i in 0..(nv - self.n) {
            jc[(self.m_eq + i, self.n + i)] = -1.0;
        }
        let free: Vec<usize> = (0..nv)
            .filter(|&i| {
                let tol = BOUND_TOL * (1.0 + pt.v[i].abs());
                pt.v[i] > self.lo[i] + tol && pt.v[i] < self.hi[i] - tol
            })
            .collect();
        if m == 0 || free.is_empty() {
            return self.projected_gradient_norm(&pt.v, &g);
        }
        let a = DMatrix::from_fn(free.len(), m, |r, c| jc[(c, free[r])]);
        let b = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(lambda) = svd.solve(&b, smax * f64::EPSILON * (free.len().max(m) as f64)) else {
            return f64::INFINITY;
        };
        let lg = DVector::from_vec(g) + jc.tr_mul(&lambda);
        self.projected_gradient_norm(&pt.v, lg.as_slice())
    }

    /// Structured secant pair for the Lagrangian Hessian over `z`.
    fn secant(&self, old: &Point, new: &Point, lambda: &[f64], mu: f64) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        let s = DVector::from_iterator(n, new.v[..n].iter().zip(&old.v[..n]).map(|(a, b)| a - b));
        let w = DVector::from_iterator(new.c.len(), new.c.iter().zip(lambda).map(|(c, l)| l + mu * c));
        let dj = &new.jac - &old.jac;
        let y = DVector::from_iterator(n, new.grad_f.iter().zip(&old.grad_f).map(|(a, b)| a - b)) + dj.tr_mul(&w);
        (s, y)
    }
}

/// Damped BFGS update keeping `b` positive definite.
fn bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: &mut bool) {
    let ss = s.dot(s);
    if ss <= 0.0 || !ss.is_finite() {
        return;
    }
    if *first {
        let sy = s.dot(y);
        let yy = y.dot(y);
        if sy > 0.0 && yy > 0.0 {
            b.fill_with_identity();
            *b *= yy / sy;
            *first = false;
        }
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if sr <= 0.0 || !sr.is_finite() {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += &r * r.transpose() / sr;
}

/// Cholesky solve of `h x = rhs`, shifting the diagonal until `h` is
/// numerically positive definite.
fn shifted_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if h.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let dmax = h.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
    // a relative floor keeps near-null directions from producing huge steps
    let mut shift = SHIFT_FLOOR * dmax;
    for _ in 0..MAX_SHIFTS {
        let mut hs = h.clone();
        for i in 0..hs.nrows() {
            hs[(i, i)] += shift;
        }
        if let Some(ch) = hs.cholesky() {
            return Some(ch.solve(rhs));
        }
        shift *= 10.0;
    }
    None
}

/// Minimizer of the model `g.d + d.H d / 2` over the shifted box
/// `lo - v <= d <= hi - v`, by primal-dual active-set iterations. Falls back
/// to the scaled negative gradient when the factorization fails.
fn box_newton_step(h: &DMatrix<f64>, g: &[f64], v: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    #[derive(Clone, Copy, PartialEq)]
    enum Set {
        Free,
        Lower,
        Upper,
    }
    let n = g.len();
    let dl: Vec<f64> = lo.iter().zip(v).map(|(l, x)| l - x).collect();
    let dh: Vec<f64> = hi.iter().zip(v).map(|(u, x)| u - x).collect();
    let mut set: Vec<Set> = (0..n)
        .map(|i| {
            if dl[i] >= 0.0 && g[i] > 0.0 {
                Set::Lower
            } else if dh[i] <= 0.0 && g[i] < 0.0 {
                Set::Upper
            } else {
                Set::Free
            }
        })
        .collect();
    let fallback = || -> Vec<f64> { (0..n).map(|i| (-g[i] / h[(i, i)].max(1e-12)).clamp(dl[i], dh[i])).collect() };
    let mut d = vec![0.0; n];
    for _ in 0..MAX_ACTIVE_SET_ITERS {
        let free: Vec<usize> = (0..n).filter(|&i| set[i] == Set::Free).collect();
        for i in 0..n {
            d[i] = match set[i] {
                Set::Free => 0.0,
                Set::Lower => dl[i],
                Set::Upper => dh[i],
            };
        }
        if !free.is_empty() {
            let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_iterator(
                free.len(),
                free.iter().map(|&i| -g[i] - (0..n).filter(|&j| set[j] != Set::Free).map(|j| h[(i, j)] * d[j]).sum::<f64>()),
            );
            let Some(x) = shifted_solve(&hf, &rhs) else {
                return fallback();
            };
            for (k, &i) in free.iter().enumerate() {
                d[i] = x[k];
            }
        }
        let dv = DVector::from_column_slice(&d);
        let y = h * &dv;
        let mut changed = false;
        for i in 0..n {
            let grad = y[i] + g[i];
            let next = match set[i] {
                Set::Free if d[i] < dl[i] => Set::Lower,
                Set::Free if d[i] > dh[i] => Set::Upper,
                Set::Lower if grad < 0.0 => Set::Free,
                Set::Upper if grad > 0.0 => Set::Free,
                s => s,
            };
            changed |= next != set[i];
            set[i] = next;
        }
        if !changed {
            return d;
        }
    }
    for i in 0..n {
        d[i] = d[i].clamp(dl[i], dh[i]);
    }
    d
}

enum Inner {
    Done,
    MaxIter,
    LineSearch,
}

struct InnerState {
    b: DMatrix<f64>,
    first: bool,
    iterations: usize,
}

fn inner_solve(al: &AugLag, pt: &mut Point, lambda: &[f64], mu: f64, tol: f64, max_iter: usize, st: &mut InnerState) -> Result<(Inner, f64)> {
    let nv = pt.v.len();
    let n = al.n;
    let mut phi = AugLag::merit(pt.f, &pt.c, lambda, mu);
    for _ in 0..max_iter {
        let g = al.merit_gradient(pt, lambda, mu);
        let pg = al.projected_gradient_norm(&pt.v, &g);
        if pg <= tol {
            return Ok((Inner::Done, pg));
        }
        st.iterations += 1;
        let w: Vec<f64> = pt.c.iter().zip(lambda).map(|(c, l)| l + mu * c).collect();
        // keep the previous model where second differences fail
        if let Some(Ok(hz)) = al.p.lagrangian_hessian(&pt.v[..n], &w) {
            st.b = hz;
        }

        // Hessian model: blockdiag(B, 0) + mu * Jc^T Jc with Jc = [J, -E_I].
        let mut jc = DMatrix::zeros(pt.c.len(), nv);
        jc.view_mut((0, 0), pt.jac.shape()).copy_from(&pt.jac);
        for i in 0..(nv - n) {
            jc[(al.m_eq + i, n + i)] = -1.0;
        }
        let mut h = jc.tr_mul(&jc) * mu;
        let mut hz = h.view_mut((0, 0), (n, n));
        hz += &st.b;

        let d = box_newton_step(&h, &g, &pt.v, &al.lo, &al.hi);

        let mut accepted = None;
        let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        for dir in [d, g.iter().map(|x| -x / gmax.max(1.0)).collect::<Vec<_>>()] {
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut trial: Vec<f64> = pt.v.iter().zip(&dir).map(|(v, d)| v + t * d).collect();
                al.project(&mut trial);
                if trial.iter().zip(&pt.v).all(|(a, b)| (a - b).abs() <= f64::EPSILON * (1.0 + b.abs())) {
                    break;
                }
                let pred: f64 = g.iter().zip(trial.iter().zip(&pt.v)).map(|(g, (a, b))| g * (a - b)).sum();
                if pred >= 0.0 {
                    t *= 0.5;
                    continue;
                }
                if let Ok((f, c)) = al.values(&trial) {
                    let phi_t = AugLag::merit(f, &c, lambda, mu);
                    let slack = 10.0 * f64::EPSILON * phi.abs();
                    if phi_t.is_finite() && phi_t <= phi + ARMIJO * pred + slack {
                        // points where derivatives fail are rejected like any other
                        if let Ok(new) = al.point_with(trial, f, c) {
                            accepted = Some((new, phi_t));
                            break;
                        }
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((new, phi_t)) = accepted else {
            return Ok((Inner::LineSearch, pg));
        };
        if !al.p.has_hessian() {
            let (s, y) = al.secant(pt, &new, lambda, mu);
            bfgs_update(&mut st.b, &s, &y, &mut st.first);
        }
        *pt = new;
        phi = phi_t;
    }
    let g = al.merit_gradient(pt, lambda, mu);
    let pg = al.projected_gradient_norm(&pt.v, &g);
    Ok((if pg <= tol { Inner::Done } else { Inner::MaxIter }, pg))
}

/// Solves `p` from `z0` with the built-in augmented Lagrangian method.
///
/// Non-convergence is reported through [`SolveReport::status`]; an error is
/// returned only for invalid input or when the callbacks fail at the start.
pub fn solve(p: &NlpProblem, z0: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    p.validate()?;
    if z0.len() != p.n {
        return Err(GiseError::Dimension(format!("start has {} entries, problem has {}", z0.len(), p.n)));
    }
    let al = AugLag::new(p);
    let mut v = z0.to_vec();
    al.project(&mut v[..]);
    let ci = p.eval_inequalities(&v[..p.n])?;
    v.extend(ci);
    al.project(&mut v);
    let mut pt = al.point(v)?;

    let m = pt.c.len();
    let mut lambda = vec![0.0; m];
    let mut mu = opts.initial_penalty;
    let mut tol = opts.opt_tol.max(1e-3);
    let mut st = InnerState {
        b: DMatrix::identity(p.n, p.n),
        first: true,
        iterations: 0,
    };
    let violation = |c: &[f64]| c.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut prev_viol = violation(&pt.c);
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut stationarity = f64::INFINITY;
    let mut outer = 0;
    let mut ls_failures = 0;
    let mut frozen = 0;
    let mut prev_f = pt.f;
    while outer < opts.max_iter {
        outer += 1;
        let before = st.iterations;
        let (inner, pg) = inner_solve(&al, &mut pt, &lambda, mu, tol, opts.max_inner_iter, &mut st)?;
        let stalled = st.iterations - before <= 1;
        let viol = violation(&pt.c);
        for (l, c) in lambda.iter_mut().zip(&pt.c) {
            *l += mu * c;
        }
        stationarity = if pg <= opts.opt_tol { pg } else { pg.min(al.ls_stationarity(&pt)) };
        history.push(viol);
        let lam_mean = lambda.iter().map(|l| l.abs()).sum::<f64>() / lambda.len().max(1) as f64;
        log::debug!("outer {outer} {}: f={:.12e} viol={viol:.3e} pg={pg:.3e} ls={stationarity:.3e} mu={mu:.1e} lam={lam_mean:.2e}", match inner { Inner::Done => "done", Inner::MaxIter => "maxit", Inner::LineSearch => "ls" }, pt.f);
        if viol <= opts.feas_tol && stationarity <= opts.opt_tol {
            status = SolveStatus::Converged;
            break;
        }
        if pt.v.iter().any(|x| x.abs() > DIVERGENCE_LIMIT) {
            log::debug!("outer {outer}: iterate left the finite region, stopping");
            break;
        }
        let still = (pt.f - prev_f).abs() <= STALL_RTOL * pt.f.abs().max(1.0);
        frozen = if viol <= opts.feas_tol && still && viol > 0.25 * prev_viol { frozen + 1 } else { 0 };
        prev_f = pt.f;
        if frozen >= STALL_OUTER {
            status = SolveStatus::Stalled;
            break;
        }
        match inner {
            Inner::LineSearch if stalled => {
                ls_failures += 1;
                st.b.fill_with_identity();
                st.first = true;
                if ls_failures >= 3 {
                    status = SolveStatus::LineSearchFailure;
                    break;
                }
            }
            _ => ls_failures = 0,
        }
        if viol > opts.feas_tol && viol > 0.25 * prev_viol {
            mu = (mu * PENALTY_GROWTH).min(MAX_PENALTY);
        }
        prev_viol = viol;
        tol = (tol * 0.1).max(opts.opt_tol);
    }
    let z = pt.v[..p.n].to_vec();
    Ok(SolveReport {
        max_violation: p.max_violation(&z)?,
        objective: pt.f,
        z,
        stationarity,
        iterations: st.iterations,
        outer_iterations: outer,
        status,
        violation_history: history,
        eq_multipliers: lambda[..p.m_eq].to_vec(),
        ineq_multipliers: lambda[p.m_eq..].to_vec(),
        penalty: mu,
    })
}

/// A pluggable NLP backend.
pub trait NlpSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &NlpProblem, z0: &[f64], opts: &SolveOptions) -> Result<SolveReport>;
}

pub const BUILTIN_SOLVER: &str = "builtin";

/// The augmented Lagrangian solver as an [`NlpSolver`].
#[derive(Debug, Clone, Copy, Default)]
pub struct AugmentedLagrangian;

impl NlpSolver for AugmentedLagrangian {
    fn name(&self) -> &str {
        BUILTIN_SOLVER
    }

    fn solve(&self, problem: &NlpProblem, z0: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
        solve(problem, z0, opts)
    }
}

/// Named solvers; the most recently registered one is active.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: Vec<Arc<dyn NlpSolver>>,
    active: String,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        Self {
            solvers: vec![Arc::new(AugmentedLagrangian)],
            active: BUILTIN_SOLVER.to_string(),
        }
    }
}

impl fmt::Debug for SolverRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverRegistry")
            .field("solvers", &self.names())
            .field("active", &self.active)
            .finish()
    }
}

impl SolverRegistry {
    /// Adds or replaces a solver and makes it the active one.
    pub fn register(&mut self, solver: Arc<dyn NlpSolver>) {
        let name = solver.name().to_string();
        self.solvers.retain(|s| s.name() != name);
        self.solvers.push(solver);
        self.active = name;
    }

    pub fn names(&self) -> Vec<String> {
        self.solvers.iter().map(|s| s.name().to_string()).collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn NlpSolver>> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .cloned()
            .ok_or_else(|| GiseError::Config(format!("unknown solver '{name}', registered: {}", self.names().join(", "))))
    }

    pub fn active(&self) -> Arc<dyn NlpSolver> {
        self.get(&self.active).expect("active solver is registered")
    }

    /// The named solver, or the active one when `name` is `None`.
    pub fn select(&self, name: Option<&str>) -> Result<Arc<dyn NlpSolver>> {
        match name {
            Some(n) => self.get(n),
            None => Ok(self.active()),
        }
    }
}

fn global() -> &'static RwLock<SolverRegistry> {
    static REGISTRY: OnceLock<RwLock<SolverRegistry>> = OnceLock::new();
    REGISTRY.get_or_init(|| RwLock::new(SolverRegistry::default()))
}

/// Registers `solver` process-wide; later runs without an explicit solver
/// name use it.
pub fn register_external_solver(solver: Arc<dyn NlpSolver>) {
    global().write().expect("registry lock").register(solver);
}

/// Snapshot of the process-wide registry.
pub fn solver_registry() -> SolverRegistry {
    global().read().expect("registry lock").clone()
}
