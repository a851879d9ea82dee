//! Rectangular barycentric Gegenbauer integration matrices.
//!
//! Row `i` of an [`IntegrationMatrix`] maps samples of an integrand at that
//! row's adjoint nodes (shifted Gauss nodes of degree `M + 1` on the whole
//! element) to the integral from the element's left end up to the row's upper
//! limit. Entries are integrals of the barycentric Lagrange basis, so each row
//! is exact on polynomials of degree `<= M`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{GiseError, Result};
use crate::gegenbauer::{gauss_legendre, shifted_gauss_nodes, Element, GegenbauerParam, NodeSet};
use crate::par::{self, Execution};

/// Barycentric weights `w_j ~ 1 / prod_{l != j} (z_j - z_l)`, scaled so that
/// `max |w_j| = 1`.
pub fn barycentric_weights(nodes: &[f64]) -> Result<Vec<f64>> {
    let n = nodes.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = nodes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &z| (a.min(z), b.max(z)));
    // capacity scaling keeps the products O(1)
    let scale = if hi > lo { 4.0 / (hi - lo) } else { 1.0 };
    let mut w = vec![1.0; n];
    for j in 0..n {
        for l in 0..n {
            if l == j {
                continue;
            }
            let d = nodes[j] - nodes[l];
            if d == 0.0 {
                return Err(GiseError::DegenerateNodes(j.min(l), j.max(l)));
            }
            w[j] /= d * scale;
        }
    }
    let wmax = w.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    w.iter_mut().for_each(|v| *v /= wmax);
    Ok(w)
}

/// Values of every Lagrange basis polynomial at `t` via the second barycentric form.
fn lagrange_basis_at(nodes: &[f64], weights: &[f64], t: f64, out: &mut [f64]) {
    if let Some(k) = nodes.iter().position(|&z| z == t) {
        out.fill(0.0);
        out[k] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for ((o, &z), &w) in out.iter_mut().zip(nodes).zip(weights) {
        *o = w / (t - z);
        denom += *o;
    }
    out.iter_mut().for_each(|o| *o /= denom);
}

/// Interpolates samples at `nodes` to `t` with the barycentric formula.
pub fn barycentric_interpolate(nodes: &[f64], weights: &[f64], values: &[f64], t: f64) -> f64 {
    let mut basis = vec![0.0; nodes.len()];
    lagrange_basis_at(nodes, weights, t, &mut basis);
    basis.iter().zip(values).map(|(b, v)| b * v).sum()
}

/// How the per-row Gegenbauer parameter of the adjoint nodes is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowParamMode {
    Fixed(GegenbauerParam),
    /// Grid minimizer of the quadrature error bound.
    BoundMin,
}

/// Grid used by [`RowParamMode::BoundMin`]: 101 points on `[-1/2 + 0.1, 2]`.
pub const BOUND_MIN_EPS: f64 = 0.1;
pub const BOUND_MIN_R: f64 = 2.0;
pub const BOUND_MIN_POINTS: usize = 101;

pub fn select_row_param(mode: RowParamMode, m: usize, element: &Element, y: f64) -> Result<GegenbauerParam> {
    match mode {
        RowParamMode::Fixed(a) => Ok(a),
        RowParamMode::BoundMin => {
            let lo = -0.5 + BOUND_MIN_EPS;
            let step = (BOUND_MIN_R - lo) / (BOUND_MIN_POINTS - 1) as f64;
            let mut best: Option<(f64, GegenbauerParam)> = None;
            for g in 0..BOUND_MIN_POINTS {
                let a = GegenbauerParam::new(lo + step * g as f64)?;
                let b = eval_error_bound(&QuadErrorBound {
                    m,
                    alpha_star: a,
                    derivative_bound: 1.0,
                    element: *element,
                    upper_limit: y,
                })?;
                // strict: ties resolve to the smallest alpha
                if best.is_none_or(|(bb, _)| b < bb) {
                    best = Some((b, a));
                }
            }
            Ok(best.map(|(_, a)| a).expect("non-empty grid"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationMatrix {
    entries: DMatrix<f64>,
    upper_limits: NodeSet,
    adjoint_nodes: Vec<NodeSet>,
    row_params: Vec<GegenbauerParam>,
    element: Element,
}

impl IntegrationMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn upper_limits(&self) -> &NodeSet {
        &self.upper_limits
    }

    pub fn adjoint_nodes(&self, row: usize) -> &NodeSet {
        &self.adjoint_nodes[row]
    }

    pub fn row_params(&self) -> &[GegenbauerParam] {
        &self.row_params
    }

    pub fn element(&self) -> &Element {
        &self.element
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// Row `i` applied to integrand samples at the row's adjoint nodes.
    pub fn apply_row(&self, i: usize, samples: &[f64]) -> f64 {
        self.entries
            .row(i)
            .iter()
            .zip(samples)
            .map(|(p, g)| p * g)
            .sum()
    }

    /// Integrates `g` from the left end to every upper limit.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let samples: Vec<f64> = self.adjoint_nodes[i].nodes().iter().map(|&z| g(z)).collect();
                self.apply_row(i, &samples)
            })
            .collect()
    }

    /// Comma-separated dump, row-major, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.rows() {
            let row: Vec<String> = self.entries.row(i).iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Builds the integration matrix for `element` with one row per upper limit.
pub fn build_obgim(
    element: &Element,
    upper_limits: &NodeSet,
    m: usize,
    row_params: &[GegenbauerParam],
) -> Result<IntegrationMatrix> {
    build_obgim_with(element, upper_limits, m, row_params, Execution::Sequential)
}

pub fn build_obgim_with(
    element: &Element,
    upper_limits: &NodeSet,
    m: usize,
    row_params: &[GegenbauerParam],
    exec: Execution,
) -> Result<IntegrationMatrix> {
    if m == 0 {
        return Err(GiseError::Dimension("integration matrix needs M >= 1".into()));
    }
    if row_params.len() != upper_limits.len() {
        return Err(GiseError::Dimension(format!(
            "{} row parameters for {} upper limits",
            row_params.len(),
            upper_limits.len()
        )));
    }
    for &y in upper_limits.nodes() {
        if !(y > element.left() && element.contains(y)) {
            return Err(GiseError::Domain {
                value: y,
                lo: element.left(),
                hi: element.right(),
            });
        }
    }
    let (gl_nodes, gl_weights) = gauss_legendre(m + 1)?;
    let cols = m + 1;
    let rows = par::try_map_indexed(upper_limits.len(), exec, |i| -> Result<(NodeSet, Vec<f64>)> {
        let adjoint = shifted_gauss_nodes(row_params[i], m + 1, element)?;
        let bw = barycentric_weights(adjoint.nodes())?;
        let y = upper_limits.nodes()[i];
        let half = 0.5 * (y - element.left());
        let mid = 0.5 * (y + element.left());
        let mut row = vec![0.0; cols];
        let mut basis = vec![0.0; cols];
        for (&x, &w) in gl_nodes.iter().zip(&gl_weights) {
            lagrange_basis_at(adjoint.nodes(), &bw, mid + half * x, &mut basis);
            for (r, b) in row.iter_mut().zip(&basis) {
                *r += w * b;
            }
        }
        row.iter_mut().for_each(|r| *r *= half);
        Ok((adjoint, row))
    })?;
    let mut entries = DMatrix::zeros(upper_limits.len(), cols);
    let mut adjoint_nodes = Vec::with_capacity(rows.len());
    for (i, (nodes, row)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            entries[(i, j)] = v;
        }
        adjoint_nodes.push(nodes);
    }
    Ok(IntegrationMatrix {
        entries,
        upper_limits: upper_limits.clone(),
        adjoint_nodes,
        row_params: row_params.to_vec(),
        element: *element,
    })
}

/// Maps a matrix built on `[-1, 1]` onto `element`: entries scale by half the
/// element length, nodes move affinely.
pub fn scale_to_element(reference: &IntegrationMatrix, element: &Element) -> Result<IntegrationMatrix> {
    if reference.element != Element::reference() {
        return Err(GiseError::InvalidElement {
            left: reference.element.left(),
            right: reference.element.right(),
        });
    }
    let map = |set: &NodeSet| {
        let mapped: Vec<f64> = set.nodes().iter().map(|&x| element.from_reference(x)).collect();
        let out = NodeSet::from_nodes(mapped, set.degree());
        if set.is_augmented() {
            // the augmented node is the right endpoint; re-append it exactly
            let mut v = out.into_vec();
            v.pop();
            NodeSet::from_nodes(v, set.degree()).augment(element)
        } else {
            out
        }
    };
    Ok(IntegrationMatrix {
        entries: &reference.entries * (0.5 * element.length()),
        upper_limits: map(&reference.upper_limits),
        adjoint_nodes: reference.adjoint_nodes.iter().map(map).collect(),
        row_params: reference.row_params.clone(),
        element: *element,
    })
}

/// Absolute rounding allowance when comparing measured quadrature errors
/// with [`eval_error_bound`], which drops below machine precision for large
/// `m`.
pub const ROUNDOFF_FLOOR: f64 = 1e-14;

/// Inputs of the quadrature truncation-error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadErrorBound {
    pub m: usize,
    pub alpha_star: GegenbauerParam,
    /// Sup-norm of the `(m + 1)`-th derivative of the integrand on the element.
    pub derivative_bound: f64,
    pub element: Element,
    pub upper_limit: f64,
}

/// Evaluates the truncation-error bound of an `m`-th degree row.
///
/// The unknown constants multiplying the bound (`D` and `B_2`) are taken as 1,
/// so the value is meaningful for comparisons across `m` and `alpha` rather
/// than as a certified bound.
pub fn eval_error_bound(b: &QuadErrorBound) -> Result<f64> {
    if b.m == 0 {
        return Err(GiseError::Dimension("error bound needs m >= 1".into()));
    }
    if !(b.derivative_bound >= 0.0) {
        return Err(GiseError::Domain {
            value: b.derivative_bound,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let span = b.upper_limit - b.element.left();
    if b.derivative_bound == 0.0 || span <= 0.0 {
        return Ok(0.0);
    }
    let a = b.alpha_star.value();
    let m = b.m as f64;
    let h = b.element.length();
    let mut log_bound = b.derivative_bound.ln() - (2.0 * m + 1.0) * std::f64::consts::LN_2 + m
        + (a - m - 1.5) * m.ln()
        + span.ln()
        + (m + 1.0) * h.ln();
    if a < 0.0 {
        let ln_sqrt_pi = 0.5 * std::f64::consts::PI.ln();
        log_bound += if b.m % 2 == 1 {
            ln_gamma(0.5 * m + 1.0) + ln_gamma(a + 0.5) - ln_sqrt_pi - ln_gamma(0.5 * m + a + 1.0)
        } else {
            std::f64::consts::LN_2 + ln_gamma(0.5 * (m + 3.0)) + ln_gamma(a + 0.5)
                - ln_sqrt_pi
                - 0.5 * ((m + 1.0) * (m + 2.0 * a + 1.0)).ln()
                - ln_gamma(0.5 * (m + 1.0) + a)
        };
    }
    Ok(log_bound.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gegenbauer::gauss_nodes;
    use approx::assert_abs_diff_eq;

    fn p(a: f64) -> GegenbauerParam {
        GegenbauerParam::new(a).unwrap()
    }

    fn augmented_limits(alpha: f64, n: usize, e: &Element) -> NodeSet {
        shifted_gauss_nodes(p(alpha), n + 1, e).unwrap().augment(e)
    }

    #[test]
    fn barycentric_weight_examples() {
        let w = barycentric_weights(&[-1.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w[0] / w[1], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[2] / w[1], -0.5, epsilon = 1e-15);
        let (a, b) = (0.3, 0.8);
        let w = barycentric_weights(&[a, b]).unwrap();
        assert_abs_diff_eq!(w[0] / w[1], (1.0 / (a - b)) / (1.0 / (b - a)), epsilon = 1e-15);
        assert!(matches!(
            barycentric_weights(&[0.1, 0.2, 0.1]),
            Err(GiseError::DegenerateNodes(0, 2))
        ));
    }

    #[test]
    fn weight_rescaling_leaves_interpolant_unchanged() {
        let z = gauss_nodes(p(0.2), 7).unwrap().into_vec();
        let w = barycentric_weights(&z).unwrap();
        let w3: Vec<f64> = w.iter().map(|v| v * 3.7).collect();
        let f: Vec<f64> = z.iter().map(|x: &f64| x.sin()).collect();
        for t in [-0.9, -0.1, 0.33, 0.97] {
            assert_abs_diff_eq!(
                barycentric_interpolate(&z, &w, &f, t),
                barycentric_interpolate(&z, &w3, &f, t),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn constants_integrate_to_lengths() {
        let e = Element::new(-0.2, 0.9).unwrap();
        let limits = augmented_limits(0.5, 6, &e);
        let params = vec![p(0.5); limits.len()];
        let mat = build_obgim(&e, &limits, 10, &params).unwrap();
        assert_eq!((mat.rows(), mat.cols()), (8, 11));
        for (i, v) in mat.integrate(|_| 1.0).iter().enumerate() {
            assert_abs_diff_eq!(*v, limits.nodes()[i] - e.left(), epsilon = 1e-14);
        }
    }

    #[test]
    fn monomials_up_to_m_are_exact() {
        let e = Element::new(0.1, 0.6).unwrap();
        let limits = augmented_limits(0.0, 5, &e);
        let m = 9;
        let params = vec![p(0.3); limits.len()];
        let mat = build_obgim(&e, &limits, m, &params).unwrap();
        for d in 0..=m as i32 {
            let got = mat.integrate(|t| t.powi(d));
            for (i, g) in got.iter().enumerate() {
                let y: f64 = limits.nodes()[i];
                let exact = (y.powi(d + 1) - e.left().powi(d + 1)) / (d + 1) as f64;
                assert_abs_diff_eq!(*g, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exponential_on_unit_element() {
        let e = Element::new(0.0, 1.0).unwrap();
        let limits = augmented_limits(0.5, 10, &e);
        let params = vec![p(0.5); limits.len()];
        let mat = build_obgim(&e, &limits, 16, &params).unwrap();
        let err = mat
            .integrate(f64::exp)
            .iter()
            .zip(limits.nodes())
            .map(|(v, y)| (v - (y.exp() - 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-13, "{err}");
    }

    #[test]
    fn rejects_limits_at_left_end() {
        let e = Element::new(0.0, 1.0).unwrap();
        let limits = NodeSet::from_nodes(vec![0.0, 0.5], 0);
        assert!(build_obgim(&e, &limits, 4, &[p(0.5), p(0.5)]).is_err());
    }

    #[test]
    fn scaling_matches_direct_construction() {
        let r = Element::reference();
        let limits = augmented_limits(0.5, 6, &r);
        let params = vec![p(0.5); limits.len()];
        let reference = build_obgim(&r, &limits, 8, &params).unwrap();
        assert_eq!(scale_to_element(&reference, &r).unwrap(), reference);
        let half = scale_to_element(&reference, &Element::new(0.0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(half.entries()[(3, 2)], 0.5 * reference.entries()[(3, 2)], epsilon = 0.0);

        let e = Element::new(0.3, 0.7).unwrap();
        let scaled = scale_to_element(&reference, &e).unwrap();
        let direct = build_obgim(&e, scaled.upper_limits(), 8, &params).unwrap();
        assert!((scaled.entries() - direct.entries()).amax() <= 1e-12);
        assert_abs_diff_eq!(scaled.entries()[(2, 4)], 0.2 * reference.entries()[(2, 4)], epsilon = 1e-16);
    }

    #[test]
    fn row_param_selection() {
        let e = Element::reference();
        assert_eq!(select_row_param(RowParamMode::Fixed(p(0.5)), 16, &e, 1.0).unwrap(), p(0.5));
        for m in [3, 4, 9, 16] {
            for y in [-0.5, 0.2, 1.0] {
                let a = select_row_param(RowParamMode::BoundMin, m, &e, y).unwrap().value();
                assert!((-0.4 - 1e-12..=2.0 + 1e-12).contains(&a));
            }
        }
    }

    #[test]
    fn bound_min_equals_exhaustive_grid_argmin() {
        let e = Element::reference();
        let chosen = select_row_param(RowParamMode::BoundMin, 16, &e, 1.0).unwrap();
        // independent exhaustive scan
        let grid: Vec<f64> = (0..101).map(|g| -0.4 + 2.4 * g as f64 / 100.0).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&a| {
                eval_error_bound(&QuadErrorBound {
                    m: 16,
                    alpha_star: p(a),
                    derivative_bound: 1.0,
                    element: e,
                    upper_limit: 1.0,
                })
                .unwrap()
            })
            .collect();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = values.iter().position(|&v| v == min).unwrap();
        assert_abs_diff_eq!(chosen.value(), grid[first], epsilon = 1e-12);
    }

    #[test]
    fn error_bound_zero_for_zero_derivative() {
        let b = QuadErrorBound {
            m: 8,
            alpha_star: p(0.5),
            derivative_bound: 0.0,
            element: Element::reference(),
            upper_limit: 0.3,
        };
        assert_eq!(eval_error_bound(&b).unwrap(), 0.0);
    }

    #[test]
    fn error_bound_decreases_in_m() {
        let mut prev = f64::INFINITY;
        for m in 4..=24 {
            let b = eval_error_bound(&QuadErrorBound {
                m,
                alpha_star: p(0.5),
                derivative_bound: 1.0,
                element: Element::reference(),
                upper_limit: 1.0,
            })
            .unwrap();
            assert!(b < prev, "m={m}");
            prev = b;
        }
    }

    #[test]
    fn csv_dump_round_trips() {
        let e = Element::new(0.0, 1.0).unwrap();
        let limits = augmented_limits(0.5, 3, &e);
        let mat = build_obgim(&e, &limits, 5, &vec![p(0.5); limits.len()]).unwrap();
        let csv = mat.to_csv();
        let parsed: Vec<Vec<f64>> = csv
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed.len(), mat.rows());
        for (i, row) in parsed.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, mat.entries()[(i, j)]);
            }
        }
    }
}
