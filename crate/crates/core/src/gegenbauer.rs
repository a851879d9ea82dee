//! Gegenbauer (ultraspherical) polynomials normalized by `G_j(1) = 1`, their
//! Gauss nodes and norms, on the reference interval and on mesh elements.
//!
//! With this normalization `alpha = 0` gives the Chebyshev polynomials of the
//! first kind and `alpha = 0.5` the Legendre polynomials. Evaluating a basis
//! row at the right end of an element therefore yields the all-ones vector and
//! at the left end the alternating-ones vector, which the transcription uses
//! to read endpoint states directly off the coefficients.

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::function::gamma::ln_gamma;

use crate::error::{GiseError, Result};

/// Slack allowed when checking that an abscissa lies inside an interval.
const DOMAIN_SLACK: f64 = 1e-13;

/// The Gegenbauer parameter, always `> -1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GegenbauerParam(f64);

impl GegenbauerParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha.is_finite() && alpha > -0.5 {
            Ok(Self(alpha))
        } else {
            Err(GiseError::AlphaDomain(alpha))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A mesh interval `[left, right]` of the transformed time axis `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    left: f64,
    right: f64,
}

impl Element {
    pub fn new(left: f64, right: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite()) || left >= right || left < -1.0 || right > 1.0
        {
            return Err(GiseError::InvalidElement { left, right });
        }
        Ok(Self { left, right })
    }

    /// The reference element `[-1, 1]`.
    pub fn reference() -> Self {
        Self {
            left: -1.0,
            right: 1.0,
        }
    }

    #[inline]
    pub fn left(&self) -> f64 {
        self.left
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.right
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    /// Affine pullback of `tau` onto `[-1, 1]`.
    #[inline]
    pub fn to_reference(&self, tau: f64) -> f64 {
        if tau == self.right {
            return 1.0;
        }
        if tau == self.left {
            return -1.0;
        }
        (2.0 * tau - (self.left + self.right)) / (self.right - self.left)
    }

    /// Affine image of a reference abscissa in the element.
    #[inline]
    pub fn from_reference(&self, x: f64) -> f64 {
        if x == 1.0 {
            return self.right;
        }
        if x == -1.0 {
            return self.left;
        }
        0.5 * ((self.right - self.left) * x + (self.left + self.right))
    }

    pub fn contains(&self, tau: f64) -> bool {
        let slack = DOMAIN_SLACK * (1.0 + self.length());
        tau >= self.left - slack && tau <= self.right + slack
    }

    pub(crate) fn check(&self, tau: f64) -> Result<()> {
        if self.contains(tau) {
            Ok(())
        } else {
            Err(GiseError::Domain {
                value: tau,
                lo: self.left,
                hi: self.right,
            })
        }
    }
}

/// An ordered node set inside an element.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    nodes: Vec<f64>,
    /// Degree of the polynomial whose zeros make up the Gauss part.
    degree: usize,
    augmented: bool,
}

impl NodeSet {
    pub fn from_nodes(nodes: Vec<f64>, degree: usize) -> Self {
        Self {
            nodes,
            degree,
            augmented: false,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Appends the element's right endpoint as the last node.
    pub fn augment(mut self, element: &Element) -> Self {
        if !self.augmented {
            self.nodes.push(element.right());
            self.augmented = true;
        }
        self
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.nodes
    }
}

fn check_unit(x: f64) -> Result<()> {
    if x.abs() <= 1.0 + DOMAIN_SLACK {
        Ok(())
    } else {
        Err(GiseError::Domain {
            value: x,
            lo: -1.0,
            hi: 1.0,
        })
    }
}

/// Runs the three-term recurrence up to `degree`, filling `out[0..=degree]`.
#[inline]
pub(crate) fn recurrence_into(alpha: f64, x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    // exact endpoint values
    if x == 1.0 {
        out.fill(1.0);
        return;
    }
    if x == -1.0 {
        for (j, v) in out.iter_mut().enumerate() {
            *v = if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = x;
    for j in 1..out.len() - 1 {
        let jf = j as f64;
        out[j + 1] = (2.0 * (jf + alpha) * x * out[j] - jf * out[j - 1]) / (jf + 2.0 * alpha);
    }
}

/// `G_degree(x)` and its derivative.
fn value_and_derivative(alpha: f64, degree: usize, x: f64) -> (f64, f64) {
    if degree == 0 {
        return (1.0, 0.0);
    }
    if x.abs() == 1.0 {
        // G_n'(1) = n (n + 2 alpha) / (2 alpha + 1)
        let n = degree as f64;
        let d = n * (n + 2.0 * alpha) / (2.0 * alpha + 1.0);
        if x > 0.0 {
            return (1.0, d);
        }
        let parity = if degree.is_multiple_of(2) { 1.0 } else { -1.0 };
        return (parity, -parity * d);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut d_prev, mut d) = (0.0, 1.0);
    for j in 1..degree {
        let jf = j as f64;
        let denom = jf + 2.0 * alpha;
        let a = 2.0 * (jf + alpha);
        let p_next = (a * x * p - jf * p_prev) / denom;
        let d_next = (a * (p + x * d) - jf * d_prev) / denom;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Evaluates `G_degree^(alpha)(x)` on `[-1, 1]` under the normalization `G(1) = 1`.
pub fn eval_gegenbauer(alpha: GegenbauerParam, degree: usize, x: f64) -> Result<f64> {
    check_unit(x)?;
    Ok(value_and_derivative(alpha.value(), degree, x).0)
}

/// Evaluates the element-shifted polynomial at `tau`.
pub fn eval_shifted(
    alpha: GegenbauerParam,
    degree: usize,
    element: &Element,
    tau: f64,
) -> Result<f64> {
    element.check(tau)?;
    let x = element.to_reference(tau).clamp(-1.0, 1.0);
    Ok(value_and_derivative(alpha.value(), degree, x).0)
}

/// `[G_0, ..., G_L]` of the element-shifted family at `tau`.
pub fn basis_row(alpha: GegenbauerParam, l: usize, element: &Element, tau: f64) -> Result<Vec<f64>> {
    element.check(tau)?;
    let mut row = vec![0.0; l + 1];
    basis_row_unchecked(alpha.value(), element, tau, &mut row);
    Ok(row)
}

/// Same as [`basis_row`] without the domain check; `out.len()` sets `L + 1`.
#[inline]
pub(crate) fn basis_row_unchecked(alpha: f64, element: &Element, tau: f64, out: &mut [f64]) {
    let x = element.to_reference(tau).clamp(-1.0, 1.0);
    recurrence_into(alpha, x, out);
}

/// The `m` zeros of `G_m^(alpha)` in increasing order.
///
/// Newton iteration with deflation from Chebyshev initial guesses; falls back
/// to bracketing and bisection if Newton misbehaves.
pub fn gauss_nodes(alpha: GegenbauerParam, m: usize) -> Result<NodeSet> {
    if m == 0 {
        return Err(GiseError::NodeSolve {
            alpha: alpha.value(),
            m,
        });
    }
    let a = alpha.value();
    let roots = newton_roots(a, m)
        .filter(|r| roots_are_valid(a, m, r))
        .or_else(|| bracket_roots(a, m).filter(|r| roots_are_valid(a, m, r)))
        .ok_or(GiseError::NodeSolve { alpha: a, m })?;
    Ok(NodeSet::from_nodes(symmetrize(roots), m))
}

fn newton_roots(alpha: f64, m: usize) -> Option<Vec<f64>> {
    chebyshev_start_roots(alpha, m)
        .filter(|r| roots_are_valid(alpha, m, r))
        .or_else(|| deflated_roots(alpha, m))
}

/// Plain Newton from each Chebyshev zero; fine for moderate alpha.
fn chebyshev_start_roots(alpha: f64, m: usize) -> Option<Vec<f64>> {
    let pi = std::f64::consts::PI;
    let mut roots = Vec::with_capacity(m);
    for i in (0..m).rev() {
        let x0 = (pi * (i as f64 + 0.5) / m as f64).cos();
        roots.push(deflated_newton(alpha, m, &[], x0, 1.0)?);
    }
    Some(roots)
}

/// Largest root first, each started to the right of every remaining root so
/// Newton on the deflated polynomial converges monotonically.
fn deflated_roots(alpha: f64, m: usize) -> Option<Vec<f64>> {
    let mut roots: Vec<f64> = Vec::with_capacity(m);
    for _ in 0..m {
        let hi = roots.last().copied().unwrap_or(1.0);
        let x0 = hi - 1e-6 * (1.0 + hi);
        roots.push(deflated_newton(alpha, m, &roots, x0, hi)?);
    }
    roots.reverse();
    for r in roots.iter_mut() {
        let (p, d) = value_and_derivative(alpha, m, *r);
        if d != 0.0 {
            *r -= p / d;
        }
    }
    Some(roots)
}

fn deflated_newton(alpha: f64, m: usize, found: &[f64], x0: f64, hi: f64) -> Option<f64> {
    let mut x = x0;
    for _ in 0..200 {
        let (p, d) = value_and_derivative(alpha, m, x);
        if p == 0.0 {
            return Some(x);
        }
        let deflation: f64 = found.iter().map(|r| 1.0 / (x - r)).sum();
        let denom = d / p - deflation;
        if !denom.is_finite() || denom == 0.0 {
            return None;
        }
        let step = 1.0 / denom;
        x -= step;
        if !x.is_finite() || x <= -1.0 || x >= hi {
            return None;
        }
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            return Some(x);
        }
    }
    None
}

fn bracket_roots(alpha: f64, m: usize) -> Option<Vec<f64>> {
    let samples = 200 * m + 1;
    let mut roots = Vec::with_capacity(m);
    let g = |x: f64| value_and_derivative(alpha, m, x).0;
    let mut x0 = -1.0;
    let mut g0 = g(x0);
    for s in 1..samples {
        // Chebyshev-like spacing resolves the node clustering near +-1.
        let x1 = -(std::f64::consts::PI * s as f64 / (samples - 1) as f64).cos();
        let g1 = g(x1);
        if g1 == 0.0 {
            roots.push(x1);
        } else if g0 != 0.0 && g0.signum() != g1.signum() {
            let (mut lo, mut hi, mut glo) = (x0, x1, g0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-16 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        g0 = g1;
    }
    (roots.len() == m).then_some(roots)
}

const ROOT_SEPARATION: f64 = 1e-8;

fn roots_are_valid(alpha: f64, m: usize, roots: &[f64]) -> bool {
    roots.len() == m
        // two starts can converge to one root; real zeros are far apart
        && roots.windows(2).all(|w| w[1] - w[0] > ROOT_SEPARATION)
        && roots.iter().all(|&x| {
            let (p, d) = value_and_derivative(alpha, m, x);
            x.abs() < 1.0 && p.abs() <= 1e-11 * (1.0 + d.abs())
        })
}

/// Enforces exact symmetry about zero.
fn symmetrize(mut roots: Vec<f64>) -> Vec<f64> {
    let m = roots.len();
    for i in 0..m / 2 {
        let v = 0.5 * (roots[m - 1 - i] - roots[i]);
        roots[i] = -v;
        roots[m - 1 - i] = v;
    }
    if m % 2 == 1 {
        roots[m / 2] = 0.0;
    }
    roots
}

/// Shifted Gauss nodes of degree `m` in `element`.
pub fn shifted_gauss_nodes(alpha: GegenbauerParam, m: usize, element: &Element) -> Result<NodeSet> {
    let reference = gauss_nodes(alpha, m)?;
    let nodes = reference
        .nodes()
        .iter()
        .map(|&x| element.from_reference(x))
        .collect();
    Ok(NodeSet::from_nodes(nodes, m))
}

/// Leading coefficient of the degree-`j` element-shifted polynomial.
pub fn leading_coefficient(alpha: GegenbauerParam, j: usize, element: &Element) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let a = alpha.value();
    let jf = j as f64;
    let log_ratio = ln_gamma(2.0 * a + 1.0) + ln_gamma(jf + a) - ln_gamma(a + 1.0) - ln_gamma(jf + 2.0 * a);
    let log_scale = (2.0 * jf - 1.0) * std::f64::consts::LN_2 - jf * element.length().ln();
    (log_scale + log_ratio).exp()
}

/// Gauss rule for the weight `(1 - x^2)^(alpha - 1/2)` on `[-1, 1]`
/// (Golub-Welsch on the orthonormal recurrence).
#[derive(Debug, Clone)]
pub struct GaussGegenbauerRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussGegenbauerRule {
    pub fn new(alpha: GegenbauerParam, points: usize) -> Result<Self> {
        let a = alpha.value();
        let n = points.max(1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for j in 1..n {
            let jf = j as f64;
            let b2 = if j == 1 {
                1.0 / (2.0 * (1.0 + a))
            } else {
                jf * (jf + 2.0 * a - 1.0) / (4.0 * (jf + a) * (jf + a - 1.0))
            };
            let b = b2.sqrt();
            jacobi[(j, j - 1)] = b;
            jacobi[(j - 1, j)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mu0 = (ln_gamma(0.5) + ln_gamma(a + 0.5) - ln_gamma(a + 1.0)).exp();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        // Newton polish of the eigenvalues against G_n.
        for p in pairs.iter_mut() {
            let (v, d) = value_and_derivative(a, n, p.0);
            if d != 0.0 && (v / d).abs() < 1e-8 {
                p.0 -= v / d;
            }
        }
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    /// Weighted integral of `g` over `[-1, 1]`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (the `alpha = 1/2` member).
pub fn gauss_legendre(points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = gauss_nodes(GegenbauerParam(0.5), points)?.into_vec();
    let weights = nodes
        .iter()
        .map(|&x| {
            let d = value_and_derivative(0.5, points, x).1;
            2.0 / ((1.0 - x * x) * d * d)
        })
        .collect();
    Ok((nodes, weights))
}

/// `||G_n||^2` in the element's weighted inner product.
pub fn norm_factor(alpha: GegenbauerParam, n: usize, element: &Element) -> Result<f64> {
    let rule = GaussGegenbauerRule::new(alpha, n + 32)?;
    let reference = rule.integrate(|x| {
        let g = value_and_derivative(alpha.value(), n, x).0;
        g * g
    });
    Ok((0.5 * element.length()).powf(2.0 * alpha.value()) * reference)
}
