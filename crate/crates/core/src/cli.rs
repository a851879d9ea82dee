//! Command implementations behind the `gise` binary.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::adaptive::{run_adaptive, AdaptiveOutcome};
use crate::config::RunConfig;
use crate::error::Result;
use crate::gegenbauer::{Element, GegenbauerParam};
use crate::io::{samples_csv, write_solution, write_text, SolutionFile};
use crate::quadrature::{
    build_obgim, eval_error_bound, scale_to_element, IntegrationMatrix, QuadErrorBound, ROUNDOFF_FLOOR,
};
use crate::sweep::{run_sweep, sweep_csv, SweepRow};
use crate::transcription::collocation_nodes;

/// Result of [`cmd_solve`].
#[derive(Debug)]
pub struct SolveRun {
    pub outcome: AdaptiveOutcome,
    pub solution_path: PathBuf,
    pub csv_path: PathBuf,
}

impl SolveRun {
    /// 0 when the final NLP solve converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.outcome.converged() {
            0
        } else {
            2
        }
    }
}

/// Loads a config, runs the adaptive solver and writes the solution file and
/// the CSV samples. Nothing is written when the config or the run fails.
pub fn cmd_solve(config: &Path, out: Option<&Path>) -> Result<SolveRun> {
    let cfg = RunConfig::load(config)?;
    solve_config(&cfg, out)
}

pub fn solve_config(cfg: &RunConfig, out: Option<&Path>) -> Result<SolveRun> {
    let problem = cfg.problem()?;
    let outcome = run_adaptive(&problem, &cfg.initial_mesh()?, &cfg.adapt_params(), &cfg.run_options())?;
    let file = SolutionFile::from_outcome(&cfg.problem, &outcome, cfg.samples)?;
    let solution_path = cfg.solution_path(out);
    let csv_path = cfg.csv_path(&solution_path);
    let csv = samples_csv(&file.samples, file.n_x, file.n_u);
    write_solution(&file, &solution_path)?;
    write_text(&csv_path, &csv)?;
    Ok(SolveRun {
        outcome,
        solution_path,
        csv_path,
    })
}

/// Runs a fixed-mesh sweep; `alphas` and `fixed_edges` override the config.
pub fn cmd_sweep(
    config: &Path,
    alphas: &[f64],
    fixed_edges: Option<&[f64]>,
    out: Option<&Path>,
) -> Result<(Vec<SweepRow>, PathBuf)> {
    let mut cfg = RunConfig::load(config)?;
    cfg.sweep.alphas = alphas.to_vec();
    if let Some(edges) = fixed_edges {
        cfg.sweep.fixed_edges = edges.to_vec();
    }
    cfg.validate()?;
    let rows = run_sweep(&cfg)?;
    let path = cfg.table_path(out);
    write_text(&path, &sweep_csv(&rows))?;
    Ok((rows, path))
}

/// One line of the `quadcheck` table.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl fmt::Display for QuadCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<44} {:>10.3e} <= {:.1e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.limit
        )
    }
}

fn check(name: String, value: f64, limit: f64) -> QuadCheck {
    QuadCheck {
        pass: value <= limit,
        name,
        value,
        limit,
    }
}

/// Integration matrix of degree `m` on `element` with rows at the augmented
/// collocation set of the same degree.
pub fn quadcheck_matrix(m: usize, alpha: GegenbauerParam, element: &Element) -> Result<IntegrationMatrix> {
    let rows = collocation_nodes(alpha, m, element)?;
    let params = vec![alpha; rows.len()];
    build_obgim(element, &rows, m, &params)
}

/// Monomial exactness, row sums, scaling and error-bound checks of the
/// degree-`m` matrix.
pub fn quadcheck(m: usize, alpha: f64) -> Result<Vec<QuadCheck>> {
    let a = GegenbauerParam::new(alpha)?;
    let mut out = Vec::new();
    let reference = Element::reference();
    let sub = Element::new(0.3, 0.7)?;
    for el in [reference, sub] {
        let p = quadcheck_matrix(m, a, &el)?;
        let left = el.left();
        let mut worst: f64 = 0.0;
        for d in 0..=m {
            let got = p.integrate(|t| t.powi(d as i32));
            for (g, &y) in got.iter().zip(p.upper_limits().nodes()) {
                let exact = (y.powi(d as i32 + 1) - left.powi(d as i32 + 1)) / (d + 1) as f64;
                worst = worst.max((g - exact).abs());
            }
        }
        let label = format!("[{}, {}]", el.left(), el.right());
        out.push(check(format!("monomials deg <= {m} on {label}"), worst, 1e-12));
        let sums = p.integrate(|_| 1.0);
        let dev = sums
            .iter()
            .zip(p.upper_limits().nodes())
            .fold(0.0f64, |w, (s, y)| w.max((s - (y - left)).abs()));
        out.push(check(format!("row sums on {label}"), dev, 1e-14));
    }
    let p_ref = quadcheck_matrix(m, a, &reference)?;
    let scaled = scale_to_element(&p_ref, &sub)?;
    let direct = quadcheck_matrix(m, a, &sub)?;
    let diff = (scaled.entries() - direct.entries()).amax();
    out.push(check("scaled vs direct on [0.3, 0.7]".into(), diff, 1e-12));
    let measured = p_ref.integrate(f64::sin);
    let mut excess = f64::NEG_INFINITY;
    for (g, &y) in measured.iter().zip(p_ref.upper_limits().nodes()) {
        let err = (g - ((-1.0f64).cos() - y.cos())).abs();
        let bound = eval_error_bound(&QuadErrorBound {
            m,
            alpha_star: a,
            derivative_bound: 1.0,
            element: reference,
            upper_limit: y,
        })?;
        excess = excess.max(err - bound);
    }
    out.push(check("sin error - bound on [-1, 1]".into(), excess, ROUNDOFF_FLOOR));
    Ok(out)
}

/// Writes the degree-`m` matrix on `[-1, 1]` as CSV.
pub fn quadcheck_dump(m: usize, alpha: f64, path: &Path) -> Result<()> {
    let p = quadcheck_matrix(m, GegenbauerParam::new(alpha)?, &Element::reference())?;
    write_text(path, &p.to_csv())
}
