//! The continuous Bolza problem and the mesh it is discretized on.

use std::fmt;
use std::sync::Arc;

use crate::error::{GiseError, Result};
use crate::gegenbauer::{Element, GegenbauerParam};

/// `f(x, u, t, out)` writing `n_x` state derivatives.
pub type DynamicsFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;
/// Running cost `L(x, u, t)`.
pub type LagrangianFn = dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync;
/// Endpoint cost `phi(x0, t0, xf, tf)`.
pub type EndpointCostFn = dyn Fn(&[f64], f64, &[f64], f64) -> f64 + Send + Sync;
/// Mixed path constraint `C(x, u, t, out)` writing `n_c` values.
pub type PathFn = dyn Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync;
/// Boundary function `psi(x0, t0, xf, tf, out)` writing `n_psi` values.
pub type BoundaryFn = dyn Fn(&[f64], f64, &[f64], f64, &mut [f64]) + Send + Sync;

/// A fixed-horizon optimal control problem in Bolza form.
#[derive(Clone)]
pub struct OCProblem {
    pub name: String,
    pub n_x: usize,
    pub n_u: usize,
    pub t0: f64,
    pub tf: f64,
    pub(crate) dynamics: Arc<DynamicsFn>,
    pub(crate) lagrangian: Option<Arc<LagrangianFn>>,
    pub(crate) terminal_cost: Option<Arc<EndpointCostFn>>,
    pub(crate) path: Option<PathConstraint>,
    pub(crate) boundary: Option<(usize, Arc<BoundaryFn>)>,
    pub state_bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub control_bounds: Option<(Vec<f64>, Vec<f64>)>,
    /// Emit control continuity constraints at element interfaces.
    pub continuous_controls: bool,
}

#[derive(Clone)]
pub(crate) struct PathConstraint {
    pub n_c: usize,
    pub func: Arc<PathFn>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl fmt::Debug for OCProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OCProblem")
            .field("name", &self.name)
            .field("n_x", &self.n_x)
            .field("n_u", &self.n_u)
            .field("n_c", &self.n_c())
            .field("n_psi", &self.n_psi())
            .field("t0", &self.t0)
            .field("tf", &self.tf)
            .finish_non_exhaustive()
    }
}

impl OCProblem {
    pub fn builder(
        name: impl Into<String>,
        n_x: usize,
        n_u: usize,
        horizon: (f64, f64),
        dynamics: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> OCProblemBuilder {
        OCProblemBuilder {
            problem: OCProblem {
                name: name.into(),
                n_x,
                n_u,
                t0: horizon.0,
                tf: horizon.1,
                dynamics: Arc::new(dynamics),
                lagrangian: None,
                terminal_cost: None,
                path: None,
                boundary: None,
                state_bounds: None,
                control_bounds: None,
                continuous_controls: false,
            },
        }
    }

    pub fn n_c(&self) -> usize {
        self.path.as_ref().map_or(0, |p| p.n_c)
    }

    pub fn n_psi(&self) -> usize {
        self.boundary.as_ref().map_or(0, |b| b.0)
    }

    pub fn path_bounds(&self) -> Option<(&[f64], &[f64])> {
        self.path.as_ref().map(|p| (p.lower.as_slice(), p.upper.as_slice()))
    }

    /// Half the horizon length, the Jacobian of the time map.
    pub fn time_scale(&self) -> f64 {
        0.5 * (self.tf - self.t0)
    }

    pub fn dynamics(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        (self.dynamics)(x, u, t, out)
    }

    pub fn lagrangian(&self, x: &[f64], u: &[f64], t: f64) -> f64 {
        self.lagrangian.as_ref().map_or(0.0, |l| l(x, u, t))
    }

    pub fn has_lagrangian(&self) -> bool {
        self.lagrangian.is_some()
    }

    pub fn terminal_cost(&self, x0: &[f64], xf: &[f64]) -> f64 {
        self.terminal_cost
            .as_ref()
            .map_or(0.0, |phi| phi(x0, self.t0, xf, self.tf))
    }

    pub fn has_terminal_cost(&self) -> bool {
        self.terminal_cost.is_some()
    }

    pub fn path(&self, x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        if let Some(p) = &self.path {
            (p.func)(x, u, t, out)
        }
    }

    pub fn boundary(&self, x0: &[f64], xf: &[f64], out: &mut [f64]) {
        if let Some((_, psi)) = &self.boundary {
            psi(x0, self.t0, xf, self.tf, out)
        }
    }
}

pub struct OCProblemBuilder {
    problem: OCProblem,
}

impl OCProblemBuilder {
    pub fn lagrangian(mut self, l: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.problem.lagrangian = Some(Arc::new(l));
        self
    }

    pub fn terminal_cost(
        mut self,
        phi: impl Fn(&[f64], f64, &[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.problem.terminal_cost = Some(Arc::new(phi));
        self
    }

    pub fn path(
        mut self,
        n_c: usize,
        c: impl Fn(&[f64], &[f64], f64, &mut [f64]) + Send + Sync + 'static,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Self {
        self.problem.path = Some(PathConstraint {
            n_c,
            func: Arc::new(c),
            lower,
            upper,
        });
        self
    }

    pub fn boundary(
        mut self,
        n_psi: usize,
        psi: impl Fn(&[f64], f64, &[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.problem.boundary = Some((n_psi, Arc::new(psi)));
        self
    }

    pub fn state_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.problem.state_bounds = Some((lower, upper));
        self
    }

    pub fn control_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.problem.control_bounds = Some((lower, upper));
        self
    }

    pub fn continuous_controls(mut self, on: bool) -> Self {
        self.problem.continuous_controls = on;
        self
    }

    pub fn build(self) -> Result<OCProblem> {
        let p = self.problem;
        if p.n_x == 0 {
            return Err(GiseError::Dimension("problem needs at least one state".into()));
        }
        if !(p.tf > p.t0) {
            return Err(GiseError::Domain {
                value: p.tf,
                lo: p.t0,
                hi: f64::INFINITY,
            });
        }
        let ordered = |lo: &[f64], hi: &[f64], len: usize, what: &str| -> Result<()> {
            if lo.len() != len || hi.len() != len {
                return Err(GiseError::Dimension(format!("{what} bounds need {len} entries")));
            }
            if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
                return Err(GiseError::Dimension(format!("{what} bounds are not ordered")));
            }
            Ok(())
        };
        if let Some(c) = &p.path {
            ordered(&c.lower, &c.upper, c.n_c, "path")?;
        }
        if let Some((lo, hi)) = &p.state_bounds {
            ordered(lo, hi, p.n_x, "state")?;
        }
        if let Some((lo, hi)) = &p.control_bounds {
            ordered(lo, hi, p.n_u, "control")?;
        }
        Ok(p)
    }
}

/// Maps original time onto `[-1, 1]`.
pub fn affine_to_tau(t: f64, t0: f64, tf: f64) -> Result<f64> {
    if !(tf > t0) {
        return Err(GiseError::Domain {
            value: tf,
            lo: t0,
            hi: f64::INFINITY,
        });
    }
    if t == t0 {
        return Ok(-1.0);
    }
    if t == tf {
        return Ok(1.0);
    }
    Ok((2.0 * t - (t0 + tf)) / (tf - t0))
}

/// Inverse of [`affine_to_tau`].
pub fn tau_to_time(tau: f64, t0: f64, tf: f64) -> f64 {
    if tau == -1.0 {
        return t0;
    }
    if tau == 1.0 {
        return tf;
    }
    0.5 * ((tf - t0) * tau + (t0 + tf))
}

/// Per-element discretization sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementConfig {
    /// Collocation uses the `n + 1` Gauss nodes plus the right endpoint.
    pub n: usize,
    pub lx: usize,
    pub lu: usize,
    /// Quadrature degree of the integration matrix (`m + 1` columns).
    pub m: usize,
    /// Quadrature degree of the residual-check matrix.
    pub mbar: usize,
}

impl ElementConfig {
    pub fn new(n: usize, lx: usize, lu: usize, m: usize, mbar: usize) -> Self {
        Self { n, lx, lu, m, mbar }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.mbar == 0 {
            return Err(GiseError::InvalidMesh(format!(
                "N, M and Mbar must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshElement {
    pub element: Element,
    pub config: ElementConfig,
}

/// A partition of `[-1, 1]` into elements with per-element sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    elements: Vec<MeshElement>,
    alpha: GegenbauerParam,
}

impl Mesh {
    pub fn new(elements: Vec<MeshElement>, alpha: GegenbauerParam) -> Result<Self> {
        let mesh = Self { elements, alpha };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Builds a mesh from interior interface points, all sharing one config.
    pub fn from_interfaces(interior: &[f64], config: ElementConfig, alpha: GegenbauerParam) -> Result<Self> {
        let mut points = Vec::with_capacity(interior.len() + 2);
        points.push(-1.0);
        points.extend_from_slice(interior);
        points.push(1.0);
        let elements = points
            .windows(2)
            .map(|w| {
                Ok(MeshElement {
                    element: Element::new(w[0], w[1])?,
                    config,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(elements, alpha)
    }

    pub fn single(config: ElementConfig, alpha: GegenbauerParam) -> Self {
        Self {
            elements: vec![MeshElement {
                element: Element::reference(),
                config,
            }],
            alpha,
        }
    }

    pub fn uniform(k: usize, config: ElementConfig, alpha: GegenbauerParam) -> Result<Self> {
        if k == 0 {
            return Err(GiseError::InvalidMesh("K must be positive".into()));
        }
        let interior: Vec<f64> = (1..k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect();
        Self::from_interfaces(&interior, config, alpha)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .elements
            .first()
            .ok_or_else(|| GiseError::InvalidMesh("no elements".into()))?;
        if first.element.left() != -1.0 {
            return Err(GiseError::InvalidMesh("first element must start at -1".into()));
        }
        if self.elements.last().map(|e| e.element.right()) != Some(1.0) {
            return Err(GiseError::InvalidMesh("last element must end at 1".into()));
        }
        for w in self.elements.windows(2) {
            if w[0].element.right() != w[1].element.left() {
                return Err(GiseError::InvalidMesh(format!(
                    "gap between {} and {}",
                    w[0].element.right(),
                    w[1].element.left()
                )));
            }
        }
        self.elements.iter().try_for_each(|e| e.config.validate())
    }

    pub fn elements(&self) -> &[MeshElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn alpha(&self) -> GegenbauerParam {
        self.alpha
    }

    /// Interior interface points `tau_1 .. tau_{K-1}`.
    pub fn interfaces(&self) -> Vec<f64> {
        self.elements[..self.elements.len() - 1]
            .iter()
            .map(|e| e.element.right())
            .collect()
    }

    /// Index of the element containing `tau`; interfaces go to the left element.
    pub fn locate(&self, tau: f64) -> Option<usize> {
        if !(-1.0..=1.0).contains(&tau) {
            return None;
        }
        self.elements
            .iter()
            .position(|e| tau <= e.element.right())
            .or(Some(self.elements.len() - 1))
    }
}

/// Offsets of each element's coefficient blocks in the flat decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionLayout {
    n_x: usize,
    n_u: usize,
    blocks: Vec<BlockOffsets>,
    len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockOffsets {
    pub a: usize,
    pub b: usize,
    pub lx: usize,
    pub lu: usize,
}

impl DecisionLayout {
    pub fn new(mesh: &Mesh, n_x: usize, n_u: usize) -> Self {
        let mut off = 0;
        let blocks = mesh
            .elements()
            .iter()
            .map(|e| {
                let a = off;
                let b = a + n_x * (e.config.lx + 1);
                off = b + n_u * (e.config.lu + 1);
                BlockOffsets {
                    a,
                    b,
                    lx: e.config.lx,
                    lu: e.config.lu,
                }
            })
            .collect();
        Self {
            n_x,
            n_u,
            blocks,
            len: off,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn block(&self, k: usize) -> BlockOffsets {
        self.blocks[k]
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Coefficients of state `r` in element `k`.
    pub fn state<'a>(&self, z: &'a [f64], k: usize, r: usize) -> &'a [f64] {
        let b = self.blocks[k];
        let start = b.a + r * (b.lx + 1);
        &z[start..start + b.lx + 1]
    }

    /// Coefficients of control `s` in element `k`.
    pub fn control<'a>(&self, z: &'a [f64], k: usize, s: usize) -> &'a [f64] {
        let b = self.blocks[k];
        let start = b.b + s * (b.lu + 1);
        &z[start..start + b.lu + 1]
    }

    pub fn state_index(&self, k: usize, r: usize, j: usize) -> usize {
        let b = self.blocks[k];
        b.a + r * (b.lx + 1) + j
    }

    pub fn control_index(&self, k: usize, s: usize, j: usize) -> usize {
        let b = self.blocks[k];
        b.b + s * (b.lu + 1) + j
    }
}
