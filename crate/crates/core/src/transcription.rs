//! Integral collocation of an [`OCProblem`] on a [`Mesh`].
//!
//! Each element carries an integration matrix whose rows integrate the
//! dynamics from the element's left end to its augmented Gauss nodes. State
//! continuity is built into the defects: the left value of element `k >= 2` is
//! the right value of element `k - 1`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GiseError, Result};
use crate::gegenbauer::{basis_row_unchecked, shifted_gauss_nodes, Element, GegenbauerParam, NodeSet};
use crate::nlp::{self, NlpProblem, SolveOptions};
use crate::par::{self, Execution};
use crate::problem::{affine_to_tau, tau_to_time, DecisionLayout, Mesh, OCProblem};
use crate::quadrature::{build_obgim, select_row_param, IntegrationMatrix, RowParamMode};

/// Relative step for the central differences of pointwise callbacks.
const CENTRAL_STEP: f64 = 6.0554544523933395e-6; // cbrt(f64::EPSILON)
const HESSIAN_STEP: f64 = 1.220703125e-4; // f64::EPSILON^(1/4)

/// How integration-matrix rows pick their Gegenbauer parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowChoice {
    /// Every row uses the mesh parameter.
    #[default]
    MeshAlpha,
    /// Each row minimizes the quadrature error bound.
    BoundMin,
}

impl RowChoice {
    pub(crate) fn mode(self, alpha: GegenbauerParam) -> RowParamMode {
        match self {
            RowChoice::MeshAlpha => RowParamMode::Fixed(alpha),
            RowChoice::BoundMin => RowParamMode::BoundMin,
        }
    }
}

/// `(-1)^j`, the basis values at an element's left end.
pub fn alternating_ones(len: usize) -> Vec<f64> {
    (0..len).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

pub(crate) fn basis_matrix(alpha: f64, element: &Element, taus: &[f64], l: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(taus.len(), l + 1);
    let mut row = vec![0.0; l + 1];
    for (i, &tau) in taus.iter().enumerate() {
        basis_row_unchecked(alpha, element, tau, &mut row);
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Augmented Gauss nodes of an element: `N + 1` zeros plus the right end.
pub fn collocation_nodes(alpha: GegenbauerParam, n: usize, element: &Element) -> Result<NodeSet> {
    Ok(shifted_gauss_nodes(alpha, n + 1, element)?.augment(element))
}

/// Adjoint nodes shared by one or more matrix rows, with basis values there.
#[derive(Debug, Clone)]
pub(crate) struct NodeGroup {
    pub t: Vec<f64>,
    pub bx: DMatrix<f64>,
    pub bu: DMatrix<f64>,
}

/// An integration matrix together with everything needed to apply it to the
/// dynamics of one element.
#[derive(Debug, Clone)]
pub(crate) struct ElementOperator {
    pub element: Element,
    pub pmat: IntegrationMatrix,
    /// Basis rows at the upper limits.
    pub upper_bx: DMatrix<f64>,
    pub upper_bu: DMatrix<f64>,
    pub upper_t: Vec<f64>,
    pub groups: Vec<NodeGroup>,
    pub row_group: Vec<usize>,
}

impl ElementOperator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        problem: &OCProblem,
        element: Element,
        upper: NodeSet,
        m: usize,
        mode: RowParamMode,
        alpha: GegenbauerParam,
        lx: usize,
        lu: usize,
    ) -> Result<Self> {
        let params = upper
            .nodes()
            .iter()
            .map(|&y| select_row_param(mode, m, &element, y))
            .collect::<Result<Vec<_>>>()?;
        let pmat = build_obgim(&element, &upper, m, &params)?;
        let a = alpha.value();
        let time = |taus: &[f64]| -> Vec<f64> { taus.iter().map(|&s| tau_to_time(s, problem.t0, problem.tf)).collect() };
        let mut groups: Vec<NodeGroup> = Vec::new();
        let mut keys: Vec<u64> = Vec::new();
        let mut row_group = Vec::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            let key = p.value().to_bits();
            let g = match keys.iter().position(|&k| k == key) {
                Some(g) => g,
                None => {
                    let nodes = pmat.adjoint_nodes(i).nodes();
                    groups.push(NodeGroup {
                        t: time(nodes),
                        bx: basis_matrix(a, &element, nodes, lx),
                        bu: basis_matrix(a, &element, nodes, lu),
                    });
                    keys.push(key);
                    groups.len() - 1
                }
            };
            row_group.push(g);
        }
        Ok(Self {
            element,
            upper_bx: basis_matrix(a, &element, upper.nodes(), lx),
            upper_bu: basis_matrix(a, &element, upper.nodes(), lu),
            upper_t: time(upper.nodes()),
            pmat,
            groups,
            row_group,
        })
    }

    pub fn rows(&self) -> usize {
        self.pmat.rows()
    }
}

/// States and controls of one element as `(L+1) x n` coefficient matrices.
pub(crate) struct Coeffs {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Coeffs {
    pub fn from_slices(a: &[f64], b: &[f64], n_x: usize, n_u: usize) -> Self {
        let lx1 = a.len() / n_x.max(1);
        let lu1 = b.len().checked_div(n_u).unwrap_or(0);
        Self {
            a: DMatrix::from_column_slice(lx1, n_x, a),
            b: DMatrix::from_column_slice(lu1, n_u, b),
        }
    }
}

/// Pointwise samples of a callback over a node group.
pub(crate) struct GroupEval {
    /// `nodes x n_out` values.
    pub values: DMatrix<f64>,
    /// Per node, row-major `n_out x (n_x + n_u)` derivatives.
    pub jac: Vec<Vec<f64>>,
}

fn check_finite(vals: &[f64], what: &'static str, element: usize, node: usize) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GiseError::NonFinite { what, element, node })
    }
}

/// Central-difference Jacobian of `f` at `input`, row-major `n_out x n_in`.
fn central_jacobian(input: &[f64], n_out: usize, f: &dyn Fn(&[f64], &mut [f64])) -> Vec<f64> {
    let n_in = input.len();
    let mut jac = vec![0.0; n_out * n_in];
    let mut work = input.to_vec();
    let mut plus = vec![0.0; n_out];
    let mut minus = vec![0.0; n_out];
    for c in 0..n_in {
        let v = input[c];
        let h = CENTRAL_STEP * (1.0 + v.abs());
        work[c] = v + h;
        let hp = work[c] - v;
        f(&work, &mut plus);
        work[c] = v - h;
        let hm = v - work[c];
        f(&work, &mut minus);
        work[c] = v;
        for r in 0..n_out {
            jac[r * n_in + c] = (plus[r] - minus[r]) / (hp + hm);
        }
    }
    jac
}

/// Second-difference Hessian of a scalar function, row-major.
fn central_hessian(v: &[f64], g: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let d = v.len();
    let step: Vec<f64> = v.iter().map(|x| HESSIAN_STEP * (1.0 + x.abs())).collect();
    let mut w = v.to_vec();
    let f0 = g(v);
    let mut h = vec![0.0; d * d];
    for i in 0..d {
        w[i] = v[i] + step[i];
        let fp = g(&w);
        w[i] = v[i] - step[i];
        let fm = g(&w);
        w[i] = v[i];
        h[i * d + i] = (fp - 2.0 * f0 + fm) / (step[i] * step[i]);
        for j in 0..i {
            let mut corner = |si: f64, sj: f64| {
                w[i] = v[i] + si * step[i];
                w[j] = v[j] + sj * step[j];
                let r = g(&w);
                w[i] = v[i];
                w[j] = v[j];
                r
            };
            let val = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * step[i] * step[j]);
            h[i * d + j] = val;
            h[j * d + i] = val;
        }
    }
    h
}

/// Evaluates `f(x, u, t)` at every row of `x`/`u`, optionally with derivatives.
#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_pointwise(
    x: &DMatrix<f64>,
    u: &DMatrix<f64>,
    t: &[f64],
    n_out: usize,
    with_jac: bool,
    what: &'static str,
    element: usize,
    f: &dyn Fn(&[f64], &[f64], f64, &mut [f64]),
) -> Result<GroupEval> {
    let n_x = x.ncols();
    let n_u = u.ncols();
    let nodes = t.len();
    let mut values = DMatrix::zeros(nodes, n_out);
    let mut jac = Vec::new();
    let mut xu = vec![0.0; n_x + n_u];
    let mut out = vec![0.0; n_out];
    for j in 0..nodes {
        for r in 0..n_x {
            xu[r] = x[(j, r)];
        }
        for s in 0..n_u {
            xu[n_x + s] = u[(j, s)];
        }
        f(&xu[..n_x], &xu[n_x..], t[j], &mut out);
        check_finite(&out, what, element, j)?;
        for (r, v) in out.iter().enumerate() {
            values[(j, r)] = *v;
        }
        if with_jac {
            let tj = t[j];
            let d = central_jacobian(&xu, n_out, &|v: &[f64], o: &mut [f64]| f(&v[..n_x], &v[n_x..], tj, o));
            check_finite(&d, what, element, j)?;
            jac.push(d);
        }
    }
    Ok(GroupEval { values, jac })
}

/// Sizes of the constraint blocks in the assembled NLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintPartition {
    pub defects: usize,
    pub boundary: usize,
    pub continuity: usize,
    pub path: usize,
}

impl ConstraintPartition {
    pub fn equalities(&self) -> usize {
        self.defects + self.boundary + self.continuity
    }
}

/// The discretized problem: the problem, its mesh and per-element operators.
#[derive(Debug, Clone)]
pub struct Transcription {
    problem: OCProblem,
    mesh: Mesh,
    layout: DecisionLayout,
    ops: Vec<ElementOperator>,
    exec: Execution,
    partition: ConstraintPartition,
    path_rows_per_node: usize,
}

/// Per-element block of a vector-valued assembly and its Jacobian.
struct Block {
    values: Vec<f64>,
    jac: Option<DMatrix<f64>>,
}

impl Transcription {
    pub fn new(problem: &OCProblem, mesh: &Mesh) -> Result<Self> {
        Self::with_options(problem, mesh, RowChoice::MeshAlpha, Execution::default())
    }

    pub fn with_options(problem: &OCProblem, mesh: &Mesh, rows: RowChoice, exec: Execution) -> Result<Self> {
        let alpha = mesh.alpha();
        let mode = rows.mode(alpha);
        let ops = par::try_map_indexed(mesh.len(), exec, |k| {
            let me = mesh.elements()[k];
            let upper = collocation_nodes(alpha, me.config.n, &me.element)?;
            ElementOperator::new(problem, me.element, upper, me.config.m, mode, alpha, me.config.lx, me.config.lu)
        })?;
        let path_rows_per_node = problem.n_c()
            + problem.state_bounds.as_ref().map_or(0, |_| problem.n_x)
            + problem.control_bounds.as_ref().map_or(0, |_| problem.n_u);
        let nodes: usize = mesh.elements().iter().map(|e| e.config.n + 2).sum();
        let partition = ConstraintPartition {
            defects: problem.n_x * nodes,
            boundary: problem.n_psi(),
            continuity: if problem.continuous_controls {
                problem.n_u * (mesh.len() - 1)
            } else {
                0
            },
            path: path_rows_per_node * nodes,
        };
        Ok(Self {
            layout: DecisionLayout::new(mesh, problem.n_x, problem.n_u),
            problem: problem.clone(),
            mesh: mesh.clone(),
            ops,
            exec,
            partition,
            path_rows_per_node,
        })
    }

    pub fn problem(&self) -> &OCProblem {
        &self.problem
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn layout(&self) -> &DecisionLayout {
        &self.layout
    }

    pub fn partition(&self) -> ConstraintPartition {
        self.partition
    }

    pub fn dimension(&self) -> usize {
        self.layout.len()
    }

    pub fn integration_matrix(&self, k: usize) -> &IntegrationMatrix {
        &self.ops[k].pmat
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.layout.len() {
            return Err(GiseError::Dimension(format!(
                "decision vector has {} entries, layout needs {}",
                z.len(),
                self.layout.len()
            )));
        }
        Ok(())
    }

    fn coeffs(&self, z: &[f64], k: usize) -> Coeffs {
        let b = self.layout.block(k);
        let (n_x, n_u) = (self.problem.n_x, self.problem.n_u);
        Coeffs::from_slices(
            &z[b.a..b.a + n_x * (b.lx + 1)],
            &z[b.b..b.b + n_u * (b.lu + 1)],
            n_x,
            n_u,
        )
    }

    /// State at the left end of the horizon, `alt . a^(1)`.
    pub fn initial_state(&self, z: &[f64]) -> Vec<f64> {
        let alt = alternating_ones(self.layout.block(0).lx + 1);
        (0..self.problem.n_x)
            .map(|r| dot(&alt, self.layout.state(z, 0, r)))
            .collect()
    }

    /// State at the right end of the horizon, `ones . a^(K)`.
    pub fn final_state(&self, z: &[f64]) -> Vec<f64> {
        let k = self.mesh.len() - 1;
        (0..self.problem.n_x)
            .map(|r| self.layout.state(z, k, r).iter().sum())
            .collect()
    }

    fn block_cols(&self, k: usize) -> (usize, usize) {
        let b = self.layout.block(k);
        (b.a, b.b + self.problem.n_u * (b.lu + 1) - b.a)
    }

    /// Discrete Bolza cost.
    pub fn cost(&self, z: &[f64]) -> Result<f64> {
        Ok(self.cost_impl(z, false)?.0)
    }

    /// Discrete cost and its gradient.
    pub fn cost_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost_impl(z, true)?.1)
    }

    fn cost_impl(&self, z: &[f64], grad: bool) -> Result<(f64, Vec<f64>)> {
        self.check_len(z)?;
        let p = &self.problem;
        let hfac = p.time_scale();
        let n_x = p.n_x;
        let mut g = if grad { vec![0.0; z.len()] } else { Vec::new() };
        let mut total = 0.0;
        if p.has_lagrangian() {
            let lag = |x: &[f64], u: &[f64], t: f64, o: &mut [f64]| o[0] = p.lagrangian(x, u, t);
            let parts = par::try_map_indexed(self.mesh.len(), self.exec, |k| -> Result<(f64, Vec<f64>)> {
                let op = &self.ops[k];
                let c = self.coeffs(z, k);
                let last = op.rows() - 1;
                let grp = &op.groups[op.row_group[last]];
                let ev = eval_pointwise(&(&grp.bx * &c.a), &(&grp.bu * &c.b), &grp.t, 1, grad, "lagrangian", k, &lag)?;
                let w: Vec<f64> = op.pmat.entries().row(last).iter().map(|v| v * hfac).collect();
                let value: f64 = w.iter().zip(ev.values.iter()).map(|(a, b)| a * b).sum();
                let mut local = Vec::new();
                if grad {
                    local = self.pointwise_chain(k, grp, &w, &ev.jac, 0);
                }
                Ok((value, local))
            })?;
            for (k, (v, local)) in parts.into_iter().enumerate() {
                total += v;
                if grad {
                    let (start, _) = self.block_cols(k);
                    for (i, d) in local.into_iter().enumerate() {
                        g[start + i] += d;
                    }
                }
            }
        }
        if p.has_terminal_cost() {
            let x0 = self.initial_state(z);
            let xf = self.final_state(z);
            let phi = p.terminal_cost(&x0, &xf);
            check_finite(&[phi], "terminal cost", 0, 0)?;
            total += phi;
            if grad {
                let mut ends = x0.clone();
                ends.extend_from_slice(&xf);
                let d = central_jacobian(&ends, 1, &|v: &[f64], o: &mut [f64]| {
                    o[0] = p.terminal_cost(&v[..n_x], &v[n_x..])
                });
                check_finite(&d, "terminal cost", 0, 0)?;
                self.scatter_endpoints(&d, 0, 2 * n_x, |col, val| g[col] += val);
            }
        }
        Ok((total, g))
    }

    /// Chain rule for `sum_j w_j h(x_j, u_j)` with `h` having `n_out` outputs,
    /// picking output `r`; returns the gradient over element `k`'s block.
    fn pointwise_chain(&self, k: usize, grp: &NodeGroup, w: &[f64], jac: &[Vec<f64>], r: usize) -> Vec<f64> {
        let (n_x, n_u) = (self.problem.n_x, self.problem.n_u);
        let n_in = n_x + n_u;
        let b = self.layout.block(k);
        let (_, width) = self.block_cols(k);
        let mut out = vec![0.0; width];
        for (j, wj) in w.iter().enumerate() {
            if *wj == 0.0 {
                continue;
            }
            let d = &jac[j][r * n_in..(r + 1) * n_in];
            for s in 0..n_x {
                let c = wj * d[s];
                if c != 0.0 {
                    let base = s * (b.lx + 1);
                    for l in 0..=b.lx {
                        out[base + l] += c * grp.bx[(j, l)];
                    }
                }
            }
            for q in 0..n_u {
                let c = wj * d[n_x + q];
                if c != 0.0 {
                    let base = n_x * (b.lx + 1) + q * (b.lu + 1);
                    for l in 0..=b.lu {
                        out[base + l] += c * grp.bu[(j, l)];
                    }
                }
            }
        }
        out
    }

    /// Spreads derivatives with respect to `(x0, xf)` onto the coefficients.
    /// `d` is row-major `n_rows x 2n_x`; `put(col, value)` receives row `row`.
    fn scatter_endpoints(&self, d: &[f64], row: usize, width: usize, mut put: impl FnMut(usize, f64)) {
        let n_x = self.problem.n_x;
        let last = self.mesh.len() - 1;
        let alt = alternating_ones(self.layout.block(0).lx + 1);
        for r in 0..n_x {
            let d0 = d[row * width + r];
            if d0 != 0.0 {
                for (j, s) in alt.iter().enumerate() {
                    put(self.layout.state_index(0, r, j), d0 * s);
                }
            }
            let df = d[row * width + n_x + r];
            if df != 0.0 {
                for j in 0..=self.layout.block(last).lx {
                    put(self.layout.state_index(last, r, j), df);
                }
            }
        }
    }

    fn defect_block(&self, z: &[f64], k: usize, jac: bool) -> Result<Block> {
        let p = &self.problem;
        let (n_x, n_u) = (p.n_x, p.n_u);
        let hfac = p.time_scale();
        let op = &self.ops[k];
        let c = self.coeffs(z, k);
        let rows = op.rows();
        let dyn_fn = |x: &[f64], u: &[f64], t: f64, o: &mut [f64]| p.dynamics(x, u, t, o);
        let evals = op
            .groups
            .iter()
            .map(|g| eval_pointwise(&(&g.bx * &c.a), &(&g.bu * &c.b), &g.t, n_x, jac, "dynamics", k, &dyn_fn))
            .collect::<Result<Vec<_>>>()?;
        let upper_x = &op.upper_bx * &c.a;
        let left: Vec<f64> = if k == 0 {
            let alt = alternating_ones(c.a.nrows());
            (0..n_x).map(|r| dot(&alt, c.a.column(r).as_slice())).collect()
        } else {
            (0..n_x).map(|r| self.layout.state(z, k - 1, r).iter().sum()).collect()
        };
        let mut values = vec![0.0; n_x * rows];
        for r in 0..n_x {
            for i in 0..rows {
                let f = &evals[op.row_group[i]].values;
                let integral: f64 = op.pmat.entries().row(i).iter().enumerate().map(|(j, pij)| pij * f[(j, r)]).sum();
                values[r * rows + i] = upper_x[(i, r)] - left[r] - hfac * integral;
            }
        }
        let jac = if jac {
            let b = self.layout.block(k);
            let (_, width) = self.block_cols(k);
            let mut m = DMatrix::zeros(n_x * rows, width);
            let alt = alternating_ones(b.lx + 1);
            for r in 0..n_x {
                for i in 0..rows {
                    let row = r * rows + i;
                    for l in 0..=b.lx {
                        m[(row, r * (b.lx + 1) + l)] = op.upper_bx[(i, l)] - if k == 0 { alt[l] } else { 0.0 };
                    }
                    let g = op.row_group[i];
                    let w: Vec<f64> = op.pmat.entries().row(i).iter().map(|v| -hfac * v).collect();
                    let chain = self.pointwise_chain(k, &op.groups[g], &w, &evals[g].jac, r);
                    for (col, v) in chain.into_iter().enumerate() {
                        m[(row, col)] += v;
                    }
                }
            }
            let _ = n_u;
            Some(m)
        } else {
            None
        };
        Ok(Block { values, jac })
    }

    /// Integral-form dynamics defects, element-major then state-major.
    pub fn dynamics_defects(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let blocks = par::try_map_indexed(self.mesh.len(), self.exec, |k| self.defect_block(z, k, false))?;
        Ok(blocks.into_iter().flat_map(|b| b.values).collect())
    }

    pub fn dynamics_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let blocks = par::try_map_indexed(self.mesh.len(), self.exec, |k| self.defect_block(z, k, true))?;
        let mut m = DMatrix::zeros(self.partition.defects, z.len());
        let n_x = self.problem.n_x;
        let mut row0 = 0;
        for (k, blk) in blocks.into_iter().enumerate() {
            let local = blk.jac.expect("requested");
            let (c0, _) = self.block_cols(k);
            m.view_mut((row0, c0), local.shape()).copy_from(&local);
            if k > 0 {
                let rows = self.ops[k].rows();
                let prev = self.layout.block(k - 1);
                for r in 0..n_x {
                    for i in 0..rows {
                        for l in 0..=prev.lx {
                            m[(row0 + r * rows + i, self.layout.state_index(k - 1, r, l))] = -1.0;
                        }
                    }
                }
            }
            row0 += local.nrows();
        }
        Ok(m)
    }

    fn path_block(&self, z: &[f64], k: usize, jac: bool) -> Result<Block> {
        let p = &self.problem;
        let (n_x, n_u, n_c) = (p.n_x, p.n_u, p.n_c());
        let op = &self.ops[k];
        let c = self.coeffs(z, k);
        let x = &op.upper_bx * &c.a;
        let u = &op.upper_bu * &c.b;
        let nodes = op.rows();
        let per = self.path_rows_per_node;
        let path_fn = |x: &[f64], u: &[f64], t: f64, o: &mut [f64]| p.path(x, u, t, o);
        let ev = if n_c > 0 {
            Some(eval_pointwise(&x, &u, &op.upper_t, n_c, jac, "path", k, &path_fn)?)
        } else {
            None
        };
        let b = self.layout.block(k);
        let (_, width) = self.block_cols(k);
        let mut values = vec![0.0; nodes * per];
        let mut m = if jac { Some(DMatrix::zeros(nodes * per, width)) } else { None };
        for i in 0..nodes {
            let base = i * per;
            if let Some(ev) = &ev {
                for q in 0..n_c {
                    values[base + q] = ev.values[(i, q)];
                    if let Some(m) = m.as_mut() {
                        let d = &ev.jac[i][q * (n_x + n_u)..(q + 1) * (n_x + n_u)];
                        for s in 0..n_x {
                            for l in 0..=b.lx {
                                m[(base + q, s * (b.lx + 1) + l)] += d[s] * op.upper_bx[(i, l)];
                            }
                        }
                        for s in 0..n_u {
                            for l in 0..=b.lu {
                                m[(base + q, n_x * (b.lx + 1) + s * (b.lu + 1) + l)] += d[n_x + s] * op.upper_bu[(i, l)];
                            }
                        }
                    }
                }
            }
            let mut row = base + n_c;
            if p.state_bounds.is_some() {
                for r in 0..n_x {
                    values[row] = x[(i, r)];
                    if let Some(m) = m.as_mut() {
                        for l in 0..=b.lx {
                            m[(row, r * (b.lx + 1) + l)] = op.upper_bx[(i, l)];
                        }
                    }
                    row += 1;
                }
            }
            if p.control_bounds.is_some() {
                for s in 0..n_u {
                    values[row] = u[(i, s)];
                    if let Some(m) = m.as_mut() {
                        for l in 0..=b.lu {
                            m[(row, n_x * (b.lx + 1) + s * (b.lu + 1) + l)] = op.upper_bu[(i, l)];
                        }
                    }
                    row += 1;
                }
            }
        }
        Ok(Block { values, jac: m })
    }

    /// Path constraints and box bounds at every augmented node.
    pub fn path_constraints(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let blocks = par::try_map_indexed(self.mesh.len(), self.exec, |k| self.path_block(z, k, false))?;
        Ok(blocks.into_iter().flat_map(|b| b.values).collect())
    }

    pub fn path_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let blocks = par::try_map_indexed(self.mesh.len(), self.exec, |k| self.path_block(z, k, true))?;
        let mut m = DMatrix::zeros(self.partition.path, z.len());
        let mut row0 = 0;
        for (k, blk) in blocks.into_iter().enumerate() {
            let local = blk.jac.expect("requested");
            let (c0, _) = self.block_cols(k);
            m.view_mut((row0, c0), local.shape()).copy_from(&local);
            row0 += local.nrows();
        }
        Ok(m)
    }

    /// Lower and upper ranges matching [`Transcription::path_constraints`].
    pub fn path_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let p = &self.problem;
        let mut lo = Vec::with_capacity(self.path_rows_per_node);
        let mut hi = Vec::with_capacity(self.path_rows_per_node);
        if let Some((l, h)) = p.path_bounds() {
            lo.extend_from_slice(l);
            hi.extend_from_slice(h);
        }
        if let Some((l, h)) = &p.state_bounds {
            lo.extend_from_slice(l);
            hi.extend_from_slice(h);
        }
        if let Some((l, h)) = &p.control_bounds {
            lo.extend_from_slice(l);
            hi.extend_from_slice(h);
        }
        let nodes = self.partition.path / self.path_rows_per_node.max(1);
        (lo.repeat(nodes), hi.repeat(nodes))
    }

    pub fn boundary_constraints(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        let mut out = vec![0.0; self.problem.n_psi()];
        self.problem.boundary(&self.initial_state(z), &self.final_state(z), &mut out);
        check_finite(&out, "boundary", 0, 0)?;
        Ok(out)
    }

    pub fn boundary_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let (n_x, n_psi) = (self.problem.n_x, self.problem.n_psi());
        let mut ends = self.initial_state(z);
        ends.extend(self.final_state(z));
        let d = central_jacobian(&ends, n_psi, &|v: &[f64], o: &mut [f64]| {
            self.problem.boundary(&v[..n_x], &v[n_x..], o)
        });
        check_finite(&d, "boundary", 0, 0)?;
        let mut m = DMatrix::zeros(n_psi, z.len());
        for row in 0..n_psi {
            self.scatter_endpoints(&d, row, 2 * n_x, |col, val| m[(row, col)] += val);
        }
        Ok(m)
    }

    /// `alt . b^(k) - ones . b^(k-1)` for `k = 2..K`; empty unless the problem
    /// asks for continuous controls.
    pub fn control_continuity(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z)?;
        if !self.problem.continuous_controls {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(self.partition.continuity);
        for k in 1..self.mesh.len() {
            let alt = alternating_ones(self.layout.block(k).lu + 1);
            for s in 0..self.problem.n_u {
                let left = dot(&alt, self.layout.control(z, k, s));
                let right: f64 = self.layout.control(z, k - 1, s).iter().sum();
                out.push(left - right);
            }
        }
        Ok(out)
    }

    pub fn continuity_jacobian(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.partition.continuity, self.layout.len());
        if !self.problem.continuous_controls {
            return m;
        }
        let mut row = 0;
        for k in 1..self.mesh.len() {
            let alt = alternating_ones(self.layout.block(k).lu + 1);
            for s in 0..self.problem.n_u {
                for (j, a) in alt.iter().enumerate() {
                    m[(row, self.layout.control_index(k, s, j))] = *a;
                }
                for j in 0..=self.layout.block(k - 1).lu {
                    m[(row, self.layout.control_index(k - 1, s, j))] = -1.0;
                }
                row += 1;
            }
        }
        m
    }

    /// Defects, boundary and continuity rows stacked.
    pub fn equalities(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.dynamics_defects(z)?;
        v.extend(self.boundary_constraints(z)?);
        v.extend(self.control_continuity(z)?);
        Ok(v)
    }

    pub fn equality_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dynamics_jacobian(z)?;
        let b = self.boundary_jacobian(z)?;
        let c = self.continuity_jacobian();
        let mut m = DMatrix::zeros(self.partition.equalities(), z.len());
        m.view_mut((0, 0), d.shape()).copy_from(&d);
        m.view_mut((d.nrows(), 0), b.shape()).copy_from(&b);
        m.view_mut((d.nrows() + b.nrows(), 0), c.shape()).copy_from(&c);
        Ok(m)
    }

    /// Hessian of `f(z) + w . [equalities; path]` over the decision vector.
    pub fn lagrangian_hessian(&self, z: &[f64], w: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(z)?;
        let part = self.partition;
        if w.len() != part.equalities() + part.path {
            return Err(GiseError::Dimension(format!(
                "{} multipliers for {} constraints",
                w.len(),
                part.equalities() + part.path
            )));
        }
        let mut def_off = Vec::with_capacity(self.mesh.len());
        let mut path_off = Vec::with_capacity(self.mesh.len());
        let (mut d, mut q) = (0, part.equalities());
        for op in &self.ops {
            def_off.push(d);
            path_off.push(q);
            d += self.problem.n_x * op.rows();
            q += self.path_rows_per_node * op.rows();
        }
        let blocks = par::try_map_indexed(self.mesh.len(), self.exec, |k| {
            let rows = self.ops[k].rows();
            self.element_hessian(
                z,
                k,
                &w[def_off[k]..def_off[k] + self.problem.n_x * rows],
                &w[path_off[k]..path_off[k] + self.path_rows_per_node * rows],
            )
        })?;
        let mut h = DMatrix::zeros(z.len(), z.len());
        for (k, blk) in blocks.into_iter().enumerate() {
            let (c0, _) = self.block_cols(k);
            let mut view = h.view_mut((c0, c0), blk.shape());
            view += &blk;
        }
        let p = &self.problem;
        let n_x = p.n_x;
        let wb = &w[part.defects..part.defects + part.boundary];
        if p.has_terminal_cost() || wb.iter().any(|v| *v != 0.0) {
            let mut ends = self.initial_state(z);
            ends.extend(self.final_state(z));
            let he = central_hessian(&ends, &|v: &[f64]| {
                let mut s = p.terminal_cost(&v[..n_x], &v[n_x..]);
                if !wb.is_empty() {
                    let mut out = vec![0.0; wb.len()];
                    p.boundary(&v[..n_x], &v[n_x..], &mut out);
                    s += dot(wb, &out);
                }
                s
            });
            check_finite(&he, "boundary", 0, 0)?;
            // endpoint map: rows of E are x0 (alt on element 1) and xf (ones on element K)
            let mut e = DMatrix::<f64>::zeros(2 * n_x, z.len());
            for row in 0..2 * n_x {
                let mut unit = vec![0.0; 2 * n_x];
                unit[row] = 1.0;
                self.scatter_endpoints(&unit, 0, 2 * n_x, |col, val| e[(row, col)] += val);
            }
            let he = DMatrix::from_row_slice(2 * n_x, 2 * n_x, &he);
            h += e.transpose() * he * &e;
        }
        Ok(h)
    }

    fn element_hessian(&self, z: &[f64], k: usize, w_def: &[f64], w_path: &[f64]) -> Result<DMatrix<f64>> {
        let p = &self.problem;
        let (n_x, n_u, n_c) = (p.n_x, p.n_u, p.n_c());
        let hfac = p.time_scale();
        let op = &self.ops[k];
        let c = self.coeffs(z, k);
        let rows = op.rows();
        let last = rows - 1;
        let (_, width) = self.block_cols(k);
        let b = self.layout.block(k);
        let mut h = DMatrix::zeros(width, width);
        let d = n_x + n_u;
        let mut accumulate = |bx: &DMatrix<f64>, bu: &DMatrix<f64>, j: usize, hv: &[f64]| {
            let mut bj = DMatrix::zeros(d, width);
            for s in 0..n_x {
                for l in 0..=b.lx {
                    bj[(s, s * (b.lx + 1) + l)] = bx[(j, l)];
                }
            }
            for q in 0..n_u {
                for l in 0..=b.lu {
                    bj[(n_x + q, n_x * (b.lx + 1) + q * (b.lu + 1) + l)] = bu[(j, l)];
                }
            }
            let hm = DMatrix::from_row_slice(d, d, hv);
            h += bj.transpose() * hm * bj;
        };
        for (g, grp) in op.groups.iter().enumerate() {
            let x = &grp.bx * &c.a;
            let u = &grp.bu * &c.b;
            for j in 0..grp.t.len() {
                let mut omega = vec![0.0; n_x];
                for i in (0..rows).filter(|&i| op.row_group[i] == g) {
                    let pij = op.pmat.entries()[(i, j)];
                    for r in 0..n_x {
                        omega[r] -= hfac * pij * w_def[r * rows + i];
                    }
                }
                let cost_w = if p.has_lagrangian() && op.row_group[last] == g {
                    hfac * op.pmat.entries()[(last, j)]
                } else {
                    0.0
                };
                if cost_w == 0.0 && omega.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let mut v: Vec<f64> = (0..n_x).map(|r| x[(j, r)]).collect();
                v.extend((0..n_u).map(|s| u[(j, s)]));
                let t = grp.t[j];
                let hv = central_hessian(&v, &|v: &[f64]| {
                    let mut f = vec![0.0; n_x];
                    p.dynamics(&v[..n_x], &v[n_x..], t, &mut f);
                    dot(&omega, &f) + cost_w * p.lagrangian(&v[..n_x], &v[n_x..], t)
                });
                check_finite(&hv, "dynamics", k, j)?;
                accumulate(&grp.bx, &grp.bu, j, &hv);
            }
        }
        if n_c > 0 {
            let x = &op.upper_bx * &c.a;
            let u = &op.upper_bu * &c.b;
            let per = self.path_rows_per_node;
            for i in 0..rows {
                let wi = &w_path[i * per..i * per + n_c];
                if wi.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let mut v: Vec<f64> = (0..n_x).map(|r| x[(i, r)]).collect();
                v.extend((0..n_u).map(|s| u[(i, s)]));
                let t = op.upper_t[i];
                let hv = central_hessian(&v, &|v: &[f64]| {
                    let mut out = vec![0.0; n_c];
                    p.path(&v[..n_x], &v[n_x..], t, &mut out);
                    dot(wi, &out)
                });
                check_finite(&hv, "path", k, i)?;
                accumulate(&op.upper_bx, &op.upper_bu, i, &hv);
            }
        }
        Ok(h)
    }

    /// The dense NLP over the flat decision vector, with structured derivatives.
    pub fn to_nlp(self: &Arc<Self>) -> NlpProblem {
        let n = self.dimension();
        let (lo, hi) = self.path_bounds();
        let part = self.partition;
        let t = Arc::clone(self);
        let mut nlp = NlpProblem::new(n, move |z| t.cost(z));
        let t = Arc::clone(self);
        nlp = nlp.with_gradient(move |z| t.cost_gradient(z));
        let (t1, t2) = (Arc::clone(self), Arc::clone(self));
        nlp = nlp
            .equalities(part.equalities(), move |z| t1.equalities(z))
            .with_equality_jacobian(move |z| t2.equality_jacobian(z));
        if part.path > 0 {
            let (t1, t2) = (Arc::clone(self), Arc::clone(self));
            nlp = nlp
                .inequalities(lo, hi, move |z| t1.path_constraints(z))
                .with_inequality_jacobian(move |z| t2.path_jacobian(z));
        }
        let t = Arc::clone(self);
        nlp.with_lagrangian_hessian(move |z, w| t.lagrangian_hessian(z, w))
            .with_execution(self.exec)
    }

    /// Closest point to `z0` whose node values satisfy the state and control
    /// bounds. These rows are linear in the coefficients, so this is a small
    /// QP; returns `z0` unchanged when it already complies.
    pub fn bounded_start(&self, z0: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z0)?;
        let n_c = self.problem.n_c();
        let width = self.path_rows_per_node;
        if width == n_c {
            return Ok(z0.to_vec());
        }
        let (lo, hi) = self.path_bounds();
        let rows: Vec<usize> = (0..self.partition.path).filter(|r| r % width >= n_c).collect();
        let jac = self.path_jacobian(z0)?;
        let a = DMatrix::from_fn(rows.len(), z0.len(), |i, j| jac[(rows[i], j)]);
        let lo: Vec<f64> = rows.iter().map(|&r| lo[r]).collect();
        let hi: Vec<f64> = rows.iter().map(|&r| hi[r]).collect();
        let vals = &a * DVector::from_column_slice(z0);
        let tol = 1e-12;
        if vals.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol) {
            return Ok(z0.to_vec());
        }
        let n = z0.len();
        let (c0, c1, c2, a1, a2) = (z0.to_vec(), z0.to_vec(), z0.to_vec(), a.clone(), a.clone());
        let qp = NlpProblem::new(n, move |z| Ok(0.5 * z.iter().zip(&c0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .with_gradient(move |z| Ok(z.iter().zip(&c1).map(|(a, b)| a - b).collect()))
            .inequalities(lo, hi, move |z| Ok((&a1 * DVector::from_column_slice(z)).as_slice().to_vec()))
            .with_inequality_jacobian(move |_| Ok(a2.clone()))
            .with_lagrangian_hessian(move |_, _| Ok(DMatrix::identity(c2.len(), c2.len())))
            .with_execution(self.exec);
        let opts = SolveOptions {
            feas_tol: 1e-10,
            ..SolveOptions::default()
        };
        Ok(nlp::solve(&qp, z0, &opts)?.z)
    }

    /// Least-squares coefficients reproducing `sol` at this mesh's nodes.
    pub fn fit(&self, sol: &SpectralSolution) -> Result<Vec<f64>> {
        let (n_x, n_u) = (self.problem.n_x, self.problem.n_u);
        let mut z = vec![0.0; self.layout.len()];
        for (k, op) in self.ops.iter().enumerate() {
            // include the left end so interface values carry over
            let mut taus = vec![op.element.left()];
            taus.extend_from_slice(op.pmat.upper_limits().nodes());
            let alpha = self.mesh.alpha().value();
            let b = self.layout.block(k);
            let bx = basis_matrix(alpha, &op.element, &taus, b.lx);
            let bu = basis_matrix(alpha, &op.element, &taus, b.lu);
            let mut xs = DMatrix::zeros(taus.len(), n_x);
            let mut us = DMatrix::zeros(taus.len(), n_u);
            for (i, &tau) in taus.iter().enumerate() {
                let (x, u) = sol.eval_tau(tau, if i == 0 { Side::Right } else { Side::Left })?;
                for r in 0..n_x {
                    xs[(i, r)] = x[r];
                }
                for s in 0..n_u {
                    us[(i, s)] = u[s];
                }
            }
            let a = least_squares(bx, &xs)?;
            let bb = least_squares(bu, &us)?;
            z[b.a..b.a + a.len()].copy_from_slice(a.as_slice());
            z[b.b..b.b + bb.len()].copy_from_slice(bb.as_slice());
        }
        Ok(z)
    }
}

fn least_squares(m: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.ncols() == 0 {
        return Ok(DMatrix::zeros(m.ncols(), 0));
    }
    m.svd(true, true)
        .solve(rhs, 1e-13)
        .map_err(|e| GiseError::Dimension(format!("least-squares fit failed: {e}")))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which element to use for a point on an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A solved (or candidate) coefficient vector on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub mesh: Mesh,
    pub z: Vec<f64>,
    pub objective: f64,
    pub n_x: usize,
    pub n_u: usize,
    pub t0: f64,
    pub tf: f64,
    /// Left and right end states of every element.
    pub endpoints: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SpectralSolution {
    pub fn new(problem: &OCProblem, mesh: Mesh, z: Vec<f64>, objective: f64) -> Result<Self> {
        let layout = DecisionLayout::new(&mesh, problem.n_x, problem.n_u);
        if z.len() != layout.len() {
            return Err(GiseError::Dimension(format!(
                "decision vector has {} entries, layout needs {}",
                z.len(),
                layout.len()
            )));
        }
        let endpoints = (0..mesh.len())
            .map(|k| {
                let alt = alternating_ones(layout.block(k).lx + 1);
                let left = (0..problem.n_x).map(|r| dot(&alt, layout.state(&z, k, r))).collect();
                let right = (0..problem.n_x).map(|r| layout.state(&z, k, r).iter().sum()).collect();
                (left, right)
            })
            .collect();
        Ok(Self {
            mesh,
            z,
            objective,
            n_x: problem.n_x,
            n_u: problem.n_u,
            t0: problem.t0,
            tf: problem.tf,
            endpoints,
        })
    }

    pub fn layout(&self) -> DecisionLayout {
        DecisionLayout::new(&self.mesh, self.n_x, self.n_u)
    }

    /// Interior interfaces in original time.
    pub fn interfaces_time(&self) -> Vec<f64> {
        self.mesh.interfaces().iter().map(|&s| tau_to_time(s, self.t0, self.tf)).collect()
    }

    /// Coefficients of element `k`: states then controls, each `L + 1` long.
    pub fn element_coeffs(&self, k: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layout = self.layout();
        (
            (0..self.n_x).map(|r| layout.state(&self.z, k, r).to_vec()).collect(),
            (0..self.n_u).map(|s| layout.control(&self.z, k, s).to_vec()).collect(),
        )
    }

    /// State and control at a transformed time.
    pub fn eval_tau(&self, tau: f64, side: Side) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut k = self.mesh.locate(tau).ok_or(GiseError::Domain { value: tau, lo: -1.0, hi: 1.0 })?;
        if side == Side::Right && k + 1 < self.mesh.len() && tau == self.mesh.elements()[k].element.right() {
            k += 1;
        }
        let me = self.mesh.elements()[k];
        let layout = self.layout();
        let alpha = self.mesh.alpha().value();
        let mut row = vec![0.0; me.config.lx.max(me.config.lu) + 1];
        basis_row_unchecked(alpha, &me.element, tau, &mut row);
        let x = (0..self.n_x)
            .map(|r| dot(&row[..=me.config.lx], layout.state(&self.z, k, r)))
            .collect();
        let u = (0..self.n_u)
            .map(|s| dot(&row[..=me.config.lu], layout.control(&self.z, k, s)))
            .collect();
        Ok((x, u))
    }
}

/// Sampled state and control trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectories {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

/// Evaluates the solution at original times; interfaces use the left element.
pub fn sample_solution(sol: &SpectralSolution, times: &[f64]) -> Result<Trajectories> {
    let mut x = Vec::with_capacity(times.len());
    let mut u = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= sol.t0 && t <= sol.tf) {
            return Err(GiseError::Domain {
                value: t,
                lo: sol.t0,
                hi: sol.tf,
            });
        }
        let (xt, ut) = sol.eval_tau(snap_to_interface(affine_to_tau(t, sol.t0, sol.tf)?, &sol.mesh), Side::Left)?;
        x.push(xt);
        u.push(ut);
    }
    Ok(Trajectories { t: times.to_vec(), x, u })
}

/// `tau` moved onto an interface it misses by rounding from the time map.
fn snap_to_interface(tau: f64, mesh: &Mesh) -> f64 {
    mesh.interfaces()
        .into_iter()
        .find(|s| (tau - s).abs() <= 8.0 * f64::EPSILON)
        .unwrap_or(tau)
}

/// Sample `i` of `samples` equispaced points in `element`, and the side an
/// endpoint sample belongs to.
fn element_sample_tau(element: &Element, i: usize, samples: usize) -> (f64, Side) {
    if samples == 1 {
        return (element.left() + 0.5 * element.length(), Side::Left);
    }
    if i == 0 {
        return (element.left(), Side::Right);
    }
    if i + 1 == samples {
        return (element.right(), Side::Left);
    }
    (element.left() + element.length() * i as f64 / (samples - 1) as f64, Side::Left)
}

/// `samples` equispaced original times per element, endpoints included.
pub fn element_sample_times(sol: &SpectralSolution, samples: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(sol.mesh.len() * samples);
    for me in sol.mesh.elements() {
        for i in 0..samples {
            out.push(tau_to_time(element_sample_tau(&me.element, i, samples).0, sol.t0, sol.tf));
        }
    }
    out
}

/// [`element_sample_times`] evaluated on each sample's own element, so the
/// two samples at an interface come from the two sides.
pub fn sample_elements(sol: &SpectralSolution, samples: usize) -> Result<Trajectories> {
    let times = element_sample_times(sol, samples);
    let mut x = Vec::with_capacity(times.len());
    let mut u = Vec::with_capacity(times.len());
    for me in sol.mesh.elements() {
        for i in 0..samples {
            let (tau, side) = element_sample_tau(&me.element, i, samples);
            let (xt, ut) = sol.eval_tau(tau, side)?;
            x.push(xt);
            u.push(ut);
        }
    }
    Ok(Trajectories { t: times, x, u })
}

/// Shorthand for `Transcription::new(..)?.cost(z)`.
pub fn assemble_cost(problem: &OCProblem, mesh: &Mesh, z: &[f64]) -> Result<f64> {
    Transcription::new(problem, mesh)?.cost(z)
}

pub fn assemble_dynamics_defects(problem: &OCProblem, mesh: &Mesh, z: &[f64]) -> Result<Vec<f64>> {
    Transcription::new(problem, mesh)?.dynamics_defects(z)
}

pub fn assemble_path_constraints(problem: &OCProblem, mesh: &Mesh, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let t = Transcription::new(problem, mesh)?;
    let (lo, hi) = t.path_bounds();
    Ok((t.path_constraints(z)?, lo, hi))
}

pub fn assemble_boundary_constraints(problem: &OCProblem, mesh: &Mesh, z: &[f64]) -> Result<Vec<f64>> {
    Transcription::new(problem, mesh)?.boundary_constraints(z)
}

pub fn assemble_control_continuity(problem: &OCProblem, mesh: &Mesh, z: &[f64]) -> Result<Vec<f64>> {
    Transcription::new(problem, mesh)?.control_continuity(z)
}

pub fn assemble_nlp(problem: &OCProblem, mesh: &Mesh) -> Result<(Arc<Transcription>, NlpProblem)> {
    let t = Arc::new(Transcription::new(problem, mesh)?);
    let nlp = t.to_nlp();
    Ok((t, nlp))
}
