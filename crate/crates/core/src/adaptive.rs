//! Residual and coefficient-decay driven h/p mesh refinement.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GiseError, Result};
use crate::gegenbauer::{Element, GegenbauerParam, NodeSet};
use crate::nlp::{solver_registry, SolveOptions, SolveReport, SolveStatus};
use crate::par::{self, Execution};
use crate::problem::{ElementConfig, Mesh, MeshElement, OCProblem};
use crate::transcription::{
    alternating_ones, collocation_nodes, dot, eval_pointwise, ElementOperator, RowChoice, SpectralSolution,
    Transcription,
};

/// `(1 + sqrt 5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Refinement thresholds, increments and caps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptParams {
    /// Residual threshold of Condition A.
    pub eps_r: f64,
    /// Last-coefficient threshold of Condition B.
    pub eps_coeff: f64,
    /// Peak threshold on the normalized residual; must exceed 1.
    pub rho: f64,
    /// Total number of splits allowed over a run.
    pub k_max: usize,
    /// Edge spacing: minimum element length for splitting and minimum
    /// distance of a split point from the element ends.
    pub eps_es: f64,
    pub n_inc: usize,
    pub lx_inc: usize,
    pub lu_inc: usize,
    pub n_max: usize,
    pub lx_max: usize,
    pub lu_max: usize,
    /// Quadrature degree of the residual-check matrix.
    pub mbar: usize,
}

impl Default for AdaptParams {
    fn default() -> Self {
        Self {
            eps_r: 1e-2,
            eps_coeff: 1e-3,
            rho: 1.5,
            k_max: 20,
            eps_es: 0.1,
            n_inc: 4,
            lx_inc: 4,
            lu_inc: 4,
            n_max: 30,
            lx_max: 30,
            lu_max: 30,
            mbar: 4,
        }
    }
}

impl AdaptParams {
    pub fn validate(&self, initial: &Mesh) -> Result<()> {
        let bad = |msg: String| Err(GiseError::Config(msg));
        if !(self.rho > 1.0) {
            return bad(format!("rho must exceed 1, got {}", self.rho));
        }
        if !(self.eps_es > 0.0) || !(self.eps_r > 0.0) || !(self.eps_coeff > 0.0) {
            return bad("eps_r, eps_coeff and eps_es must be positive".into());
        }
        if self.n_inc == 0 || self.lx_inc == 0 || self.lu_inc == 0 {
            return bad("increments must be at least 1".into());
        }
        if self.mbar == 0 {
            return bad("mbar must be positive".into());
        }
        for me in initial.elements() {
            let c = me.config;
            if c.n > self.n_max || c.lx > self.lx_max || c.lu > self.lu_max {
                return bad(format!(
                    "caps (N {}, Lx {}, Lu {}) below initial sizes (N {}, Lx {}, Lu {})",
                    self.n_max, self.lx_max, self.lu_max, c.n, c.lx, c.lu
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of the refinement decision for one element.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Accept,
    /// Split at these interior points, ascending.
    Split(Vec<f64>),
    PIncrease(ElementConfig),
    /// Golden-ratio split of an element already at its caps.
    ForcedGoldenSplit(f64),
    CappedAccept(String),
}

impl Action {
    pub fn split_points(&self) -> &[f64] {
        match self {
            Action::Split(p) => p,
            Action::ForcedGoldenSplit(p) => std::slice::from_ref(p),
            _ => &[],
        }
    }

    /// Accepting actions end refinement of the element.
    pub fn is_final(&self) -> bool {
        matches!(self, Action::Accept | Action::CappedAccept(_))
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Accept => f.write_str("accept"),
            Action::Split(p) => {
                let pts: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
                write!(f, "split({})", pts.join(" "))
            }
            Action::PIncrease(c) => write!(f, "p-increase(N={} Lx={} Lu={})", c.n, c.lx, c.lu),
            Action::ForcedGoldenSplit(p) => write!(f, "forced-golden-split({p:.6})"),
            Action::CappedAccept(w) => write!(f, "capped-accept({w})"),
        }
    }
}

/// Diagnostics of one solved element.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub element: Element,
    pub config: ElementConfig,
    pub midpoints: Vec<f64>,
    /// `(N + 1) x n_x` absolute residuals at the midpoints.
    pub residual: DMatrix<f64>,
    pub max_residual: f64,
    pub i_max: usize,
    pub j_max: usize,
    /// `None` when the residual column is identically zero.
    pub beta: Option<Vec<f64>>,
    pub peaks: Vec<(usize, f64)>,
    /// `|a_{r,Lx}|` for every state, then `|b_{s,Lu}|` for every control.
    pub last_coeffs: Vec<f64>,
    pub condition_a: bool,
    pub condition_b: bool,
    pub action: Action,
}

/// Midpoints between consecutive augmented collocation nodes.
pub fn midpoints(element: &Element, n: usize, alpha: GegenbauerParam) -> Result<NodeSet> {
    let nodes = collocation_nodes(alpha, n, element)?;
    let mids = nodes.nodes().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(NodeSet::from_nodes(mids, n + 1))
}

/// Absolute integral-form residuals of element `k` of `sol` at its midpoints,
/// measured from the element's own left-end state.
pub fn residual_matrix(problem: &OCProblem, sol: &SpectralSolution, k: usize, rows: RowChoice) -> Result<DMatrix<f64>> {
    let me = *sol
        .mesh
        .elements()
        .get(k)
        .ok_or_else(|| GiseError::Dimension(format!("element {k} of {}", sol.mesh.len())))?;
    let alpha = sol.mesh.alpha();
    let c = me.config;
    let mids = midpoints(&me.element, c.n, alpha)?;
    let op = ElementOperator::new(problem, me.element, mids, c.mbar, rows.mode(alpha), alpha, c.lx, c.lu)?;
    let (states, controls) = sol.element_coeffs(k);
    let n_x = problem.n_x;
    let a = DMatrix::from_fn(c.lx + 1, n_x, |i, r| states[r][i]);
    let b = DMatrix::from_fn(c.lu + 1, problem.n_u, |i, s| controls[s][i]);
    let dyn_fn = |x: &[f64], u: &[f64], t: f64, o: &mut [f64]| problem.dynamics(x, u, t, o);
    let evals = op
        .groups
        .iter()
        .map(|g| eval_pointwise(&(&g.bx * &a), &(&g.bu * &b), &g.t, n_x, false, "dynamics at midpoint", k, &dyn_fn))
        .collect::<Result<Vec<_>>>()?;
    let alt = alternating_ones(c.lx + 1);
    let left: Vec<f64> = (0..n_x).map(|r| dot(&alt, &states[r])).collect();
    let mid_x = &op.upper_bx * &a;
    let hfac = problem.time_scale();
    Ok(DMatrix::from_fn(op.rows(), n_x, |i, r| {
        let f = &evals[op.row_group[i]].values;
        let integral: f64 = op.pmat.entries().row(i).iter().enumerate().map(|(j, p)| p * f[(j, r)]).sum();
        (mid_x[(i, r)] - left[r] - hfac * integral).abs()
    }))
}

/// Position and value of the largest entry; the first one on ties.
pub fn max_entry(r: &DMatrix<f64>) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for j in 0..r.ncols() {
        for i in 0..r.nrows() {
            if r[(i, j)] > best.2 {
                best = (i, j, r[(i, j)]);
            }
        }
    }
    best
}

/// Condition A: every residual is below `eps_r`.
pub fn condition_a(r: &DMatrix<f64>, eps_r: f64) -> bool {
    r.iter().all(|v| *v < eps_r)
}

/// Condition B: every last state and control coefficient is below
/// `eps_coeff` in magnitude.
pub fn condition_b(states: &[Vec<f64>], controls: &[Vec<f64>], eps_coeff: f64) -> bool {
    states
        .iter()
        .chain(controls)
        .all(|c| c.last().is_none_or(|v| v.abs() < eps_coeff))
}

/// Column of the largest residual divided by its mean; `None` when that
/// mean is zero.
pub fn beta_vector(r: &DMatrix<f64>) -> Option<Vec<f64>> {
    if r.is_empty() {
        return None;
    }
    let (_, j, _) = max_entry(r);
    let col: Vec<f64> = r.column(j).iter().copied().collect();
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    Some(col.iter().map(|v| v / mean).collect())
}

/// Strict interior local maxima, plus the first and last samples when they
/// exceed their single neighbour.
pub fn beta_peaks(beta: &[f64]) -> Vec<(usize, f64)> {
    let n = beta.len();
    if n < 2 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    if beta[0] > beta[1] {
        peaks.push((0, beta[0]));
    }
    for i in 1..n - 1 {
        if beta[i - 1] < beta[i] && beta[i] > beta[i + 1] {
            peaks.push((i, beta[i]));
        }
    }
    if beta[n - 1] > beta[n - 2] {
        peaks.push((n - 1, beta[n - 1]));
    }
    peaks
}

/// `left + (right - left) / golden ratio`.
pub fn golden_split(element: &Element) -> f64 {
    element.left() + element.length() / GOLDEN_RATIO
}

/// Computes residuals, conditions and peaks for element `k`. The returned
/// action is provisional; see [`decide`].
pub fn analyze_element(
    problem: &OCProblem,
    sol: &SpectralSolution,
    k: usize,
    params: &AdaptParams,
    rows: RowChoice,
) -> Result<RefinementReport> {
    let me = sol.mesh.elements()[k];
    let residual = residual_matrix(problem, sol, k, rows)?;
    let (i_max, j_max, max_residual) = max_entry(&residual);
    let (states, controls) = sol.element_coeffs(k);
    let beta = beta_vector(&residual);
    let peaks = beta.as_deref().map(beta_peaks).unwrap_or_default();
    let mids = midpoints(&me.element, me.config.n, sol.mesh.alpha())?.into_vec();
    let last_coeffs = states.iter().chain(&controls).map(|c| c.last().map_or(0.0, |v| v.abs())).collect();
    let condition_a = condition_a(&residual, params.eps_r);
    let condition_b = condition_b(&states, &controls, params.eps_coeff);
    Ok(RefinementReport {
        element: me.element,
        config: me.config,
        midpoints: mids,
        residual,
        max_residual,
        i_max,
        j_max,
        beta,
        peaks,
        last_coeffs,
        condition_a,
        condition_b,
        action: Action::Accept,
    })
}

fn p_increase(c: ElementConfig, params: &AdaptParams) -> Option<ElementConfig> {
    let step = |v: usize, inc: usize, cap: usize| if v >= cap { v } else { (v + inc).min(cap) };
    let next = ElementConfig {
        n: step(c.n, params.n_inc, params.n_max),
        lx: step(c.lx, params.lx_inc, params.lx_max),
        lu: step(c.lu, params.lu_inc, params.lu_max),
        ..c
    };
    (next != c).then_some(next)
}

/// Refinement action for an element given `splits_so_far` splits already
/// spent in the run.
pub fn decide(report: &RefinementReport, params: &AdaptParams, splits_so_far: usize) -> Action {
    if report.condition_a && report.condition_b {
        return Action::Accept;
    }
    let el = report.element;
    let budget = params.k_max.saturating_sub(splits_so_far);
    let wide = el.length() >= params.eps_es;
    let capped = |why: &str| {
        Action::CappedAccept(format!(
            "element [{:.6}, {:.6}] accepted at caps (N {}, Lx {}, Lu {}) with max residual {:.3e}: {why}",
            el.left(),
            el.right(),
            report.config.n,
            report.config.lx,
            report.config.lu,
            report.max_residual
        ))
    };
    let grow_or_cap = |why: &str| p_increase(report.config, params).map_or_else(|| capped(why), Action::PIncrease);

    let mut big: Vec<(usize, f64)> = report.peaks.iter().copied().filter(|(_, b)| *b > params.rho).collect();
    if big.is_empty() {
        if let Some(c) = p_increase(report.config, params) {
            return Action::PIncrease(c);
        }
        if wide && budget > 0 {
            return Action::ForcedGoldenSplit(golden_split(&el));
        }
        return capped(if wide { "split budget exhausted" } else { "element below edge spacing" });
    }
    if !wide {
        return grow_or_cap("element below edge spacing");
    }
    if budget == 0 {
        return grow_or_cap("split budget exhausted");
    }
    big.retain(|(i, _)| {
        let p = report.midpoints[*i];
        p - el.left() >= params.eps_es && el.right() - p >= params.eps_es
    });
    if big.is_empty() {
        return Action::Split(vec![golden_split(&el)]);
    }
    big.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    big.truncate(budget);
    let mut points: Vec<f64> = big.iter().map(|(i, _)| report.midpoints[*i]).collect();
    points.sort_by(f64::total_cmp);
    Action::Split(points)
}

/// Applies per-element actions to `mesh`; split children inherit sizes.
pub fn refine(mesh: &Mesh, actions: &[Action]) -> Result<Mesh> {
    if actions.len() != mesh.len() {
        return Err(GiseError::Dimension(format!("{} actions for {} elements", actions.len(), mesh.len())));
    }
    let mut out = Vec::with_capacity(mesh.len());
    for (me, action) in mesh.elements().iter().zip(actions) {
        match action {
            Action::PIncrease(c) => out.push(MeshElement {
                element: me.element,
                config: *c,
            }),
            Action::Split(_) | Action::ForcedGoldenSplit(_) => {
                let mut left = me.element.left();
                for &p in action.split_points().iter().chain(std::iter::once(&me.element.right())) {
                    out.push(MeshElement {
                        element: Element::new(left, p)?,
                        config: me.config,
                    });
                    left = p;
                }
            }
            Action::Accept | Action::CappedAccept(_) => out.push(*me),
        }
    }
    Mesh::new(out, mesh.alpha())
}

/// Settings of [`run_adaptive`] outside the refinement rules.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub solve: SolveOptions,
    /// Registered NLP solver; the active one when `None`.
    pub solver: Option<String>,
    /// Value of every coefficient in the first solve.
    pub initial_coefficient: f64,
    /// Row parameters of the collocation integration matrices.
    pub rows: RowChoice,
    /// Row parameters of the residual-check matrices.
    pub check_rows: RowChoice,
    /// Solve-refine cycles, including the first solve.
    pub max_iterations: usize,
    pub exec: Execution,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            solver: None,
            initial_coefficient: 0.0,
            rows: RowChoice::MeshAlpha,
            check_rows: RowChoice::MeshAlpha,
            max_iterations: 25,
            exec: Execution::default(),
        }
    }
}

/// One solve-refine cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Element boundaries in transformed time, both ends included.
    pub boundaries: Vec<f64>,
    pub configs: Vec<ElementConfig>,
    pub objective: f64,
    pub status: SolveStatus,
    pub violation: f64,
    pub max_residuals: Vec<f64>,
    pub actions: Vec<Action>,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(" ");
        write!(
            f,
            "iter={} status={} objective={:.16e} violation={:.3e} mesh=[{}] N=[{}] Lx=[{}] Lu=[{}] max_residual=[{}] actions=[{}]",
            self.iteration,
            self.status,
            self.objective,
            self.violation,
            join(self.boundaries.iter().map(|v| format!("{v:.16e}")).collect()),
            join(self.configs.iter().map(|c| c.n.to_string()).collect()),
            join(self.configs.iter().map(|c| c.lx.to_string()).collect()),
            join(self.configs.iter().map(|c| c.lu.to_string()).collect()),
            join(self.max_residuals.iter().map(|v| format!("{v:.3e}")).collect()),
            join(self.actions.iter().map(|a| a.to_string()).collect()),
        )
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub solution: SpectralSolution,
    /// Report of the last NLP solve.
    pub solve: SolveReport,
    /// Element reports of the last solution.
    pub reports: Vec<RefinementReport>,
    pub trace: Vec<IterationRecord>,
    pub warnings: Vec<String>,
    pub splits: usize,
}

impl AdaptiveOutcome {
    /// True when the last NLP solve converged.
    pub fn converged(&self) -> bool {
        self.solve.status == SolveStatus::Converged
    }
}

/// Solves on `initial`, then alternates element diagnostics, refinement and
/// warm-started re-solves until every element is accepted, the budgets run
/// out or `opts.max_iterations` cycles have run.
pub fn run_adaptive(
    problem: &OCProblem,
    initial: &Mesh,
    params: &AdaptParams,
    opts: &RunOptions,
) -> Result<AdaptiveOutcome> {
    params.validate(initial)?;
    if opts.max_iterations == 0 {
        return Err(GiseError::Config("max_iterations must be positive".into()));
    }
    let solver = solver_registry().select(opts.solver.as_deref())?;
    let mut mesh = Mesh::new(
        initial
            .elements()
            .iter()
            .map(|me| MeshElement {
                element: me.element,
                config: ElementConfig {
                    mbar: params.mbar,
                    ..me.config
                },
            })
            .collect(),
        initial.alpha(),
    )?;
    let mut warm: Option<SpectralSolution> = None;
    let mut splits = 0;
    let mut trace = Vec::new();
    for iteration in 1..=opts.max_iterations {
        let t = Arc::new(Transcription::with_options(problem, &mesh, opts.rows, opts.exec)?);
        let z0 = match &warm {
            Some(prev) => t.fit(prev)?,
            None => vec![opts.initial_coefficient; t.dimension()],
        };
        let z0 = t.bounded_start(&z0)?;
        let rep = solver.solve(&t.to_nlp(), &z0, &opts.solve)?;
        let sol = SpectralSolution::new(problem, mesh.clone(), rep.z.clone(), rep.objective)?;
        let mut reports = par::try_map_indexed(mesh.len(), opts.exec, |k| {
            analyze_element(problem, &sol, k, params, opts.check_rows)
        })?;
        for r in reports.iter_mut() {
            r.action = decide(r, params, splits);
            splits += r.action.split_points().len();
        }
        let actions: Vec<Action> = reports.iter().map(|r| r.action.clone()).collect();
        let mut boundaries = vec![-1.0];
        boundaries.extend(mesh.interfaces());
        boundaries.push(1.0);
        let record = IterationRecord {
            iteration,
            boundaries,
            configs: mesh.elements().iter().map(|me| me.config).collect(),
            objective: rep.objective,
            status: rep.status,
            violation: rep.max_violation,
            max_residuals: reports.iter().map(|r| r.max_residual).collect(),
            actions: actions.clone(),
        };
        log::info!("{record}");
        trace.push(record);
        let done = actions.iter().all(Action::is_final);
        if done || iteration == opts.max_iterations {
            let mut warnings: Vec<String> = actions
                .iter()
                .filter_map(|a| match a {
                    Action::CappedAccept(w) => Some(w.clone()),
                    _ => None,
                })
                .collect();
            if !done {
                warnings.push(format!("iteration limit {} reached before all elements were accepted", opts.max_iterations));
            }
            if rep.status != SolveStatus::Converged {
                warnings.push(format!(
                    "final NLP solve ended with status {} (violation {:.3e}, stationarity {:.3e})",
                    rep.status, rep.max_violation, rep.stationarity
                ));
            }
            // accepted elements keep their provisional sizes in the final report
            for r in reports.iter_mut().filter(|r| !r.action.is_final()) {
                r.action = decide(r, params, splits);
            }
            return Ok(AdaptiveOutcome {
                solution: sol,
                solve: rep,
                reports,
                trace,
                warnings,
                splits,
            });
        }
        mesh = refine(&mesh, &actions)?;
        warm = Some(sol);
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn alpha(a: f64) -> GegenbauerParam {
        GegenbauerParam::new(a).unwrap()
    }

    fn report(element: Element, config: ElementConfig, beta: Vec<f64>, mids: Vec<f64>) -> RefinementReport {
        let peaks = beta_peaks(&beta);
        RefinementReport {
            element,
            config,
            midpoints: mids,
            residual: DMatrix::from_column_slice(beta.len(), 1, &beta),
            max_residual: 1.0,
            i_max: 0,
            j_max: 0,
            beta: Some(beta),
            peaks,
            last_coeffs: vec![1.0],
            condition_a: false,
            condition_b: false,
            action: Action::Accept,
        }
    }

    #[test]
    fn midpoints_of_one_node() {
        let m = midpoints(&Element::reference(), 1, alpha(0.0)).unwrap();
        let a = 0.5f64.sqrt();
        assert_eq!(m.len(), 2);
        assert_abs_diff_eq!(m.nodes()[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.nodes()[1], (a + 1.0) / 2.0, epsilon = 1e-15);
        let el = Element::new(0.2, 0.9).unwrap();
        let nodes = collocation_nodes(alpha(0.7), 6, &el).unwrap();
        let mids = midpoints(&el, 6, alpha(0.7)).unwrap();
        assert_eq!(mids.len(), 7);
        for (i, m) in mids.nodes().iter().enumerate() {
            assert!(nodes.nodes()[i] < *m && *m < nodes.nodes()[i + 1]);
        }
    }

    #[test]
    fn conditions() {
        let zero = DMatrix::zeros(3, 2);
        assert!(condition_a(&zero, 1e-300));
        assert!(!condition_a(&DMatrix::from_element(1, 1, 0.5), 0.5));
        assert!(!condition_b(&[vec![1.0, 0.1]], &[], 0.1));
        assert!(condition_b(&[vec![1.0, 0.0]], &[vec![3.0, 0.0]], 1e-12));
        assert!(!condition_b(&[vec![1.0, 0.0]], &[vec![3.0, -0.2]], 0.1));
    }

    #[test]
    fn beta_and_peaks() {
        let uniform = DMatrix::from_element(4, 1, 2.5);
        assert_eq!(beta_vector(&uniform).unwrap(), vec![1.0; 4]);
        let r = DMatrix::from_column_slice(2, 2, &[0.1, 0.2, 1.0, 3.0]);
        assert_eq!(beta_vector(&r).unwrap(), vec![0.5, 1.5]);
        assert!(beta_vector(&DMatrix::zeros(3, 1)).is_none());
        assert_eq!(beta_peaks(&[3.0, 1.0, 2.0, 1.0, 5.0]), vec![(0, 3.0), (2, 2.0), (4, 5.0)]);
        assert_eq!(beta_peaks(&[3.0, 1.0, 2.0, 1.0, 0.5]), vec![(0, 3.0), (2, 2.0)]);
        assert_eq!(beta_peaks(&[1.0, 2.0, 3.0]), vec![(2, 3.0)]);
        assert!(beta_peaks(&[1.0, 1.0, 1.0]).is_empty());
    }

    #[test]
    fn decisions() {
        let params = AdaptParams {
            rho: 3.0,
            eps_es: 0.1,
            n_inc: 4,
            lx_inc: 4,
            lu_inc: 4,
            n_max: 20,
            lx_max: 20,
            lu_max: 20,
            ..AdaptParams::default()
        };
        let cfg = ElementConfig::new(10, 8, 8, 16, 4);
        let el = Element::reference();
        let mids = vec![-0.8, -0.4, 0.0, 0.4, 0.8];
        let r = report(el, cfg, vec![0.5, 0.5, 3.5, 0.25, 0.25], mids.clone());
        assert_eq!(decide(&r, &params, 0), Action::Split(vec![0.0]));
        let r = report(el, cfg, vec![1.0, 1.2, 0.8, 1.1, 0.9], mids.clone());
        assert_eq!(decide(&r, &params, 0), Action::PIncrease(ElementConfig::new(14, 12, 12, 16, 4)));
        let near = vec![-0.95, -0.5, 0.0, 0.5, 0.95];
        let r = report(el, cfg, vec![4.0, 0.25, 0.25, 0.25, 0.25], near);
        match decide(&r, &params, 0) {
            Action::Split(p) => {
                assert_eq!(p.len(), 1);
                assert_abs_diff_eq!(p[0], 0.2360679774997898, epsilon = 1e-15);
            }
            other => panic!("{other:?}"),
        }
        let small = Element::new(0.0, 0.05).unwrap();
        let r = report(small, cfg, vec![0.5, 0.5, 3.5, 0.25, 0.25], vec![0.01, 0.02, 0.025, 0.03, 0.04]);
        assert!(matches!(decide(&r, &params, 0), Action::PIncrease(_)));
        let top = ElementConfig::new(20, 20, 20, 16, 4);
        let r = report(el, top, vec![1.0; 5], mids.clone());
        assert!(matches!(decide(&r, &params, 0), Action::ForcedGoldenSplit(_)));
        assert!(matches!(decide(&r, &params, params.k_max), Action::CappedAccept(_)));
        let r = report(el, cfg, vec![0.5, 0.5, 3.5, 0.25, 0.25], mids);
        assert!(matches!(decide(&r, &params, params.k_max), Action::PIncrease(_)));
    }

    #[test]
    fn refine_tiles_the_interval() {
        let cfg = ElementConfig::new(4, 3, 3, 8, 4);
        let mesh = Mesh::from_interfaces(&[0.0], cfg, alpha(0.5)).unwrap();
        let bigger = ElementConfig::new(8, 7, 7, 8, 4);
        let out = refine(&mesh, &[Action::Split(vec![-0.5, -0.25]), Action::PIncrease(bigger)]).unwrap();
        assert_eq!(out.interfaces(), vec![-0.5, -0.25, 0.0]);
        assert_eq!(out.elements()[3].config, bigger);
        assert_eq!(out.elements()[1].config, cfg);
    }

    #[test]
    fn exact_solution_has_no_residual() {
        let p = OCProblem::builder("cubic", 1, 1, (0.0, 1.0), |_, _, t, out| out[0] = 3.0 * t * t)
            .build()
            .unwrap();
        let cfg = ElementConfig::new(5, 3, 1, 8, 4);
        let mesh = Mesh::from_interfaces(&[0.1], cfg, alpha(0.5)).unwrap();
        let t = Transcription::new(&p, &mesh).unwrap();
        let mut z = vec![0.0; t.dimension()];
        for (k, me) in mesh.elements().iter().enumerate() {
            let el = me.element;
            let taus: Vec<f64> = (0..4).map(|i| el.left() + el.length() * i as f64 / 3.0).collect();
            let b = crate::transcription::basis_matrix(0.5, &el, &taus, 3);
            let rhs = nalgebra::DVector::from_iterator(4, taus.iter().map(|s| (0.5 * (s + 1.0)).powi(3)));
            let c = b.lu().solve(&rhs).unwrap();
            let idx = t.layout().state_index(k, 0, 0);
            z[idx..idx + 4].copy_from_slice(c.as_slice());
        }
        let sol = SpectralSolution::new(&p, mesh.clone(), z, 0.0).unwrap();
        for k in 0..mesh.len() {
            for rows in [RowChoice::MeshAlpha, RowChoice::BoundMin] {
                let r = residual_matrix(&p, &sol, k, rows).unwrap();
                assert_eq!(r.shape(), (6, 1));
                assert!(r.max() < 1e-12, "{}", r.max());
            }
        }
    }
}
