//! Fixed-mesh parameter sweeps.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::config::{to_tau, RunConfig, SweepSize};
use crate::error::{GiseError, Result};
use crate::gegenbauer::GegenbauerParam;
use crate::nlp::solver_registry;
use crate::par::{self, Execution};
use crate::problem::{ElementConfig, Mesh, OCProblem};
use crate::transcription::{SpectralSolution, Transcription};

/// One solve of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub config: ElementConfig,
    /// NaN when the row failed before producing a solution.
    pub objective: f64,
    pub violation: f64,
    /// Solver status, or `error: ..` when the row failed.
    pub status: String,
    /// Per element, the largest last-mode magnitude over states and controls.
    pub last_coeffs: Vec<f64>,
}

impl SweepRow {
    pub fn max_last_coeff(&self) -> f64 {
        self.last_coeffs.iter().fold(f64::NAN, |m, v| m.max(*v))
    }
}

/// Largest `|c_L|` over the states and controls of each element.
pub fn last_coefficients(sol: &SpectralSolution) -> Vec<f64> {
    (0..sol.mesh.len())
        .map(|k| {
            let (a, b) = sol.element_coeffs(k);
            a.iter().chain(&b).filter_map(|c| c.last()).fold(0.0, |m: f64, v| m.max(v.abs()))
        })
        .collect()
}

fn solve_row(problem: &OCProblem, cfg: &RunConfig, alpha: f64, size: ElementConfig, exec: Execution) -> Result<SweepRow> {
    let a = GegenbauerParam::new(alpha)?;
    let mesh = if cfg.sweep.fixed_edges.is_empty() {
        Mesh::uniform(cfg.mesh.elements, size, a)?
    } else {
        Mesh::from_interfaces(&to_tau(&cfg.sweep.fixed_edges, problem)?, size, a)?
    };
    let t = Arc::new(Transcription::with_options(problem, &mesh, cfg.rows, exec)?);
    let z0 = t.bounded_start(&vec![cfg.initial_coefficient; t.dimension()])?;
    let solver = solver_registry().select(cfg.nlp.solver.as_deref())?;
    let rep = solver.solve(&t.to_nlp(), &z0, &cfg.solve_options())?;
    let sol = SpectralSolution::new(problem, mesh, rep.z, rep.objective)?;
    Ok(SweepRow {
        alpha,
        config: size,
        objective: rep.objective,
        violation: rep.max_violation,
        status: rep.status.to_string(),
        last_coeffs: last_coefficients(&sol),
    })
}

/// Solves every (alpha, size) pair on a fixed mesh.
///
/// Rows run in parallel on up to `cfg.workers` threads and come back sorted
/// by `(alpha, N, Lx, Lu, M)`. A failing row is recorded, not propagated.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.sweep.alphas.is_empty() {
        return Err(GiseError::Config("sweep needs at least one alpha".into()));
    }
    let problem = cfg.problem()?;
    let sizes: Vec<ElementConfig> = if cfg.sweep.sizes.is_empty() {
        vec![cfg.element_config()]
    } else {
        cfg.sweep.sizes.iter().map(|s: &SweepSize| cfg.sweep_config(s)).collect()
    };
    let mut jobs: Vec<(f64, ElementConfig)> = cfg
        .sweep
        .alphas
        .iter()
        .flat_map(|&a| sizes.iter().map(move |&s| (a, s)))
        .collect();
    jobs.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then((x.1.n, x.1.lx, x.1.lu, x.1.m).cmp(&(y.1.n, y.1.lx, y.1.lu, y.1.m)))
    });
    let rows = par::with_workers(cfg.workers, || {
        par::map_indexed(jobs.len(), Execution::Parallel, |i| {
            let (alpha, size) = jobs[i];
            solve_row(&problem, cfg, alpha, size, Execution::Sequential).unwrap_or_else(|e| SweepRow {
                alpha,
                config: size,
                objective: f64::NAN,
                violation: f64::NAN,
                status: format!("error: {e}"),
                last_coeffs: Vec::new(),
            })
        })
    });
    for r in &rows {
        log::info!("alpha={} N={} J={:.10} status={}", r.alpha, r.config.n, r.objective, r.status);
    }
    Ok(rows)
}

/// CSV table: `alpha,N,Lx,Lu,M,objective,violation,status,last_1..last_K`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let k = rows.iter().map(|r| r.last_coeffs.len()).max().unwrap_or(0);
    let mut s = String::from("alpha,N,Lx,Lu,M,objective,violation,status");
    for i in 1..=k {
        let _ = write!(s, ",last_{i}");
    }
    s.push('\n');
    for r in rows {
        let c = r.config;
        let _ = write!(
            s,
            "{:.16e},{},{},{},{},{:.16e},{:.16e},\"{}\"",
            r.alpha,
            c.n,
            c.lx,
            c.lu,
            c.m,
            r.objective,
            r.violation,
            r.status.replace('"', "'")
        );
        for i in 0..k {
            match r.last_coeffs.get(i) {
                Some(v) => {
                    let _ = write!(s, ",{v:.16e}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}
