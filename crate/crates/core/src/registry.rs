//! Built-in benchmark problems.

use std::f64::consts::PI;

use crate::error::{GiseError, Result};
use crate::problem::OCProblem;

pub const PROBLEM_NAMES: [&str; 3] = ["example1", "breakwell", "example3"];

/// `min int_0^1 sin(3 pi t) x dt`, `x' = -tan(pi u^3 / 8 + t)`, `u in [0, 1]`,
/// `x(0) = 1`, `x(1) = 0`.
pub fn example1() -> OCProblem {
    OCProblem::builder("example1", 1, 1, (0.0, 1.0), |x, u, t, out| {
        let _ = x;
        out[0] = -(PI / 8.0 * u[0].powi(3) + t).tan();
    })
    .lagrangian(|x, _, t| (3.0 * PI * t).sin() * x[0])
    .boundary(2, |x0, _, xf, _, out| {
        out[0] = x0[0] - 1.0;
        out[1] = xf[0];
    })
    .control_bounds(vec![0.0], vec![1.0])
    .build()
    .expect("valid benchmark")
}

/// Breakwell: `min 1/2 int_0^1 u^2`, `x1' = x2`, `x2' = u`, `x1 <= 0.1`.
pub fn breakwell() -> OCProblem {
    OCProblem::builder("breakwell", 2, 1, (0.0, 1.0), |x, u, _, out| {
        out[0] = x[1];
        out[1] = u[0];
    })
    .lagrangian(|_, u, _| 0.5 * u[0] * u[0])
    .path(1, |x, _, _, out| out[0] = x[0], vec![f64::NEG_INFINITY], vec![0.1])
    .boundary(4, |x0, _, xf, _, out| {
        out[0] = x0[0];
        out[1] = x0[1] - 1.0;
        out[2] = xf[0];
        out[3] = xf[1] + 1.0;
    })
    .build()
    .expect("valid benchmark")
}

/// Exact Breakwell control.
pub fn breakwell_control(t: f64) -> f64 {
    if t <= 0.3 {
        200.0 * t / 9.0 - 20.0 / 3.0
    } else if t <= 0.7 {
        0.0
    } else {
        -200.0 * t / 9.0 + 140.0 / 9.0
    }
}

pub const BREAKWELL_COST: f64 = 40.0 / 9.0;

/// `min int_0^2 u (u - t)`, `x' = -|x - 0.5| + 2(u + 1)/(t + 2) - 0.5`,
/// `x(0) = 0.1`, `0 <= x <= 1`, `-1 <= u <= 1`.
pub fn example3() -> OCProblem {
    OCProblem::builder("example3", 1, 1, (0.0, 2.0), |x, u, t, out| {
        out[0] = -(x[0] - 0.5).abs() + 2.0 * (u[0] + 1.0) / (t + 2.0) - 0.5;
    })
    .lagrangian(|_, u, t| u[0] * (u[0] - t))
    .boundary(1, |x0, _, _, _, out| out[0] = x0[0] - 0.1)
    .state_bounds(vec![0.0], vec![1.0])
    .control_bounds(vec![-1.0], vec![1.0])
    .build()
    .expect("valid benchmark")
}

pub const EXAMPLE3_COST: f64 = -2.0 / 3.0;

/// Looks a benchmark up by name.
pub fn registry_get(name: &str) -> Result<OCProblem> {
    match name {
        "example1" => Ok(example1()),
        "breakwell" => Ok(breakwell()),
        "example3" => Ok(example3()),
        other => Err(GiseError::Config(format!(
            "unknown problem '{other}', registered: {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        let b = registry_get("breakwell").unwrap();
        assert_eq!((b.n_x, b.n_u, b.n_c(), b.n_psi()), (2, 1, 1, 4));
        assert_eq!((b.t0, b.tf), (0.0, 1.0));
        assert_eq!(b.path_bounds().unwrap().1, &[0.1]);
        let e = registry_get("example3").unwrap();
        assert_eq!(e.state_bounds, Some((vec![0.0], vec![1.0])));
        assert_eq!(e.control_bounds, Some((vec![-1.0], vec![1.0])));
        assert_eq!(e.tf, 2.0);
        let mut psi = [0.0];
        e.boundary(&[0.1], &[0.7], &mut psi);
        assert_eq!(psi, [0.0]);
        match registry_get("nope") {
            Err(GiseError::Config(msg)) => assert!(msg.contains("breakwell")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_breakwell_control_is_continuous() {
        assert!((breakwell_control(0.0) + 20.0 / 3.0).abs() < 1e-15);
        assert!(breakwell_control(0.3).abs() < 1e-14);
        assert!((breakwell_control(0.7) - 0.0).abs() < 1e-14);
        assert!((breakwell_control(1.0) + 20.0 / 3.0).abs() < 1e-14);
    }
}
