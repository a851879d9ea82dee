//! Run configuration files.
//!
//! A config is TOML with a required `problem` key. Every other key is
//! optional and defaults to the reference settings of that benchmark; see
//! [`RunConfig::defaults_for`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{AdaptParams, RunOptions};
use crate::error::{GiseError, Result};
use crate::gegenbauer::GegenbauerParam;
use crate::nlp::SolveOptions;
use crate::par::Execution;
use crate::problem::{affine_to_tau, ElementConfig, Mesh, OCProblem};
use crate::registry;
use crate::transcription::RowChoice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSettings {
    /// Number of equal initial elements; ignored when `interfaces` is set.
    pub elements: usize,
    pub n: usize,
    pub lx: usize,
    pub lu: usize,
    pub m: usize,
    /// Quadrature degree of the residual-check matrix.
    pub mbar: usize,
    /// Interior interfaces in original time.
    #[serde(default)]
    pub interfaces: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSettings {
    pub eps_r: f64,
    pub eps_coeff: f64,
    pub rho: f64,
    pub k_max: usize,
    pub eps_es: f64,
    pub n_inc: usize,
    pub lx_inc: usize,
    pub lu_inc: usize,
    pub n_max: usize,
    pub lx_max: usize,
    pub lu_max: usize,
    /// Solve-refine cycles, including the first solve.
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlpSettings {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    pub max_inner_iter: usize,
    pub initial_penalty: f64,
    /// Registered solver name; the active solver when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
}

/// Element sizes of one sweep row; `m` defaults to the mesh value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSize {
    pub n: usize,
    pub lx: usize,
    pub lu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Size schedule; the mesh sizes alone when empty.
    #[serde(default)]
    pub sizes: Vec<SweepSize>,
    /// Fixed interior interfaces in original time.
    #[serde(default)]
    pub fixed_edges: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub alpha: f64,
    /// Value of every coefficient in the first solve.
    pub initial_coefficient: f64,
    /// Linearly spaced samples per element in the CSV output.
    pub samples: usize,
    /// Sweep threads; 0 uses every core.
    pub workers: usize,
    /// Row parameters of the collocation integration matrices.
    pub rows: RowChoice,
    /// Row parameters of the residual-check matrices.
    pub check_rows: RowChoice,
    pub mesh: MeshSettings,
    pub adapt: AdaptSettings,
    pub nlp: NlpSettings,
    #[serde(default)]
    pub output: OutputSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl RunConfig {
    /// Published settings of a registered benchmark.
    pub fn defaults_for(problem: &str) -> Result<Self> {
        registry::registry_get(problem)?;
        let d = SolveOptions::default();
        let nlp = NlpSettings {
            feas_tol: d.feas_tol,
            opt_tol: d.opt_tol,
            max_iter: d.max_iter,
            max_inner_iter: d.max_inner_iter,
            initial_penalty: d.initial_penalty,
            solver: None,
        };
        let mesh = |n, l, mbar| MeshSettings {
            elements: 1,
            n,
            lx: l,
            lu: l,
            m: 16,
            mbar,
            interfaces: Vec::new(),
        };
        let adapt = |eps_r, eps_coeff, rho, eps_es, inc, cap| AdaptSettings {
            eps_r,
            eps_coeff,
            rho,
            k_max: 20,
            eps_es,
            n_inc: inc,
            lx_inc: inc,
            lu_inc: inc,
            n_max: cap,
            lx_max: cap,
            lu_max: cap,
            max_iterations: 25,
        };
        let (alpha, init, mesh, adapt) = match problem {
            "example1" => (0.2, 1.0, mesh(14, 8, 4), adapt(1e-2, 1e-1, 3.0, 0.1, 4, 20)),
            "breakwell" => (0.5, 0.0, mesh(18, 17, 4), adapt(1e-2, 1e-3, 1.5, 0.1, 4, 30)),
            _ => (0.0, 0.0, mesh(5, 6, 6), adapt(1e-3, 1e-4, 2.0, 0.2, 2, 30)),
        };
        Ok(Self {
            problem: problem.to_string(),
            alpha,
            initial_coefficient: init,
            samples: 20,
            workers: 0,
            rows: RowChoice::MeshAlpha,
            check_rows: RowChoice::MeshAlpha,
            mesh,
            adapt,
            nlp,
            output: OutputSettings::default(),
            sweep: SweepSettings::default(),
        })
    }

    /// Parses a config, filling absent keys from [`RunConfig::defaults_for`].
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| GiseError::Parse(e.to_string()))?;
        let name = match user.get("problem") {
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(GiseError::Config("'problem' must be a string".into())),
            None => return Err(GiseError::Config("missing required key 'problem'".into())),
        };
        let mut merged = toml::Table::try_from(Self::defaults_for(&name)?).map_err(|e| GiseError::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| GiseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GiseError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GiseError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GiseError::Config(msg));
        let problem = self.problem()?;
        GegenbauerParam::new(self.alpha).map_err(|e| GiseError::Config(e.to_string()))?;
        if !self.initial_coefficient.is_finite() {
            return bad("initial_coefficient must be finite".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.mesh.elements == 0 {
            return bad("mesh.elements must be at least 1".into());
        }
        self.element_config().validate().map_err(|e| GiseError::Config(e.to_string()))?;
        check_edges(&self.mesh.interfaces, &problem, "mesh.interfaces")?;
        check_edges(&self.sweep.fixed_edges, &problem, "sweep.fixed_edges")?;
        let n = &self.nlp;
        if !(n.feas_tol > 0.0 && n.opt_tol > 0.0 && n.initial_penalty > 0.0) {
            return bad("nlp tolerances and initial_penalty must be positive".into());
        }
        if n.max_iter == 0 || n.max_inner_iter == 0 || self.adapt.max_iterations == 0 {
            return bad("iteration limits must be at least 1".into());
        }
        if let Some(a) = self.sweep.alphas.iter().find(|a| !(**a > -0.5) || !a.is_finite()) {
            return bad(format!("sweep alpha {a} outside (-0.5, inf)"));
        }
        for s in &self.sweep.sizes {
            self.sweep_config(s).validate().map_err(|e| GiseError::Config(e.to_string()))?;
        }
        self.adapt_params().validate(&self.initial_mesh()?)
    }

    pub fn problem(&self) -> Result<OCProblem> {
        registry::registry_get(&self.problem)
    }

    pub fn element_config(&self) -> ElementConfig {
        let m = &self.mesh;
        ElementConfig::new(m.n, m.lx, m.lu, m.m, m.mbar)
    }

    pub fn sweep_config(&self, s: &SweepSize) -> ElementConfig {
        ElementConfig::new(s.n, s.lx, s.lu, s.m.unwrap_or(self.mesh.m), self.mesh.mbar)
    }

    pub fn gegenbauer(&self) -> Result<GegenbauerParam> {
        GegenbauerParam::new(self.alpha)
    }

    /// Starting mesh of an adaptive run.
    pub fn initial_mesh(&self) -> Result<Mesh> {
        let problem = self.problem()?;
        let alpha = self.gegenbauer()?;
        if self.mesh.interfaces.is_empty() {
            Mesh::uniform(self.mesh.elements, self.element_config(), alpha)
        } else {
            let taus = to_tau(&self.mesh.interfaces, &problem)?;
            Mesh::from_interfaces(&taus, self.element_config(), alpha)
        }
    }

    pub fn adapt_params(&self) -> AdaptParams {
        let a = &self.adapt;
        AdaptParams {
            eps_r: a.eps_r,
            eps_coeff: a.eps_coeff,
            rho: a.rho,
            k_max: a.k_max,
            eps_es: a.eps_es,
            n_inc: a.n_inc,
            lx_inc: a.lx_inc,
            lu_inc: a.lu_inc,
            n_max: a.n_max,
            lx_max: a.lx_max,
            lu_max: a.lu_max,
            mbar: self.mesh.mbar,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            feas_tol: self.nlp.feas_tol,
            opt_tol: self.nlp.opt_tol,
            max_iter: self.nlp.max_iter,
            max_inner_iter: self.nlp.max_inner_iter,
            initial_penalty: self.nlp.initial_penalty,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            solve: self.solve_options(),
            solver: self.nlp.solver.clone(),
            initial_coefficient: self.initial_coefficient,
            rows: self.rows,
            check_rows: self.check_rows,
            max_iterations: self.adapt.max_iterations,
            exec: Execution::default(),
        }
    }

    /// Solution path: `out`, else `output.solution`, else `<problem>.sol`.
    pub fn solution_path(&self, out: Option<&Path>) -> PathBuf {
        out.map(Path::to_path_buf)
            .or_else(|| self.output.solution.clone())
            .unwrap_or_else(|| PathBuf::from(format!("{}.sol", self.problem)))
    }

    /// CSV path: `output.csv`, else the solution path with a `csv` extension.
    pub fn csv_path(&self, solution: &Path) -> PathBuf {
        self.output.csv.clone().unwrap_or_else(|| solution.with_extension("csv"))
    }

    /// Sweep table path: `out`, else `output.table`, else `<problem>-sweep.csv`.
    pub fn table_path(&self, out: Option<&Path>) -> PathBuf {
        out.map(Path::to_path_buf)
            .or_else(|| self.output.table.clone())
            .unwrap_or_else(|| PathBuf::from(format!("{}-sweep.csv", self.problem)))
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn check_edges(edges: &[f64], problem: &OCProblem, what: &str) -> Result<()> {
    let inside = edges.iter().all(|t| *t > problem.t0 && *t < problem.tf);
    let increasing = edges.windows(2).all(|w| w[0] < w[1]);
    if inside && increasing {
        Ok(())
    } else {
        Err(GiseError::Config(format!(
            "{what} must be increasing and inside ({}, {})",
            problem.t0, problem.tf
        )))
    }
}

/// Original-time interfaces mapped to `[-1, 1]`.
pub fn to_tau(times: &[f64], problem: &OCProblem) -> Result<Vec<f64>> {
    times.iter().map(|&t| affine_to_tau(t, problem.t0, problem.tf)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_benchmark() {
        let c = RunConfig::from_toml_str("problem = \"breakwell\"").unwrap();
        assert_eq!(c, RunConfig::defaults_for("breakwell").unwrap());
        assert_eq!((c.mesh.n, c.mesh.lx, c.mesh.mbar, c.alpha), (18, 17, 4, 0.5));
        let e = RunConfig::from_toml_str("problem = \"example3\"\n[adapt]\nrho = 2.5\n").unwrap();
        assert_eq!(e.adapt.rho, 2.5);
        assert_eq!(e.adapt.eps_es, 0.2);
        assert_eq!(e.mesh.mbar, 6);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        for text in [
            "",
            "problem = 3",
            "problem = \"nope\"",
            "problem = \"breakwell\"\nalpha = -0.5",
            "problem = \"breakwell\"\ntypo = 1",
            "problem = \"breakwell\"\n[mesh]\nn = \"four\"",
            "problem = \"breakwell\"\n[adapt]\nrho = 1.0",
            "problem = \"breakwell\"\n[mesh]\ninterfaces = [0.7, 0.3]",
            "problem = [",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::defaults_for("example1").unwrap();
        c.sweep.sizes.push(SweepSize { n: 6, lx: 4, lu: 4, m: None });
        c.output.solution = Some(PathBuf::from("x.sol"));
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn interfaces_map_to_transformed_time() {
        let c = RunConfig::from_toml_str("problem = \"breakwell\"\n[mesh]\ninterfaces = [0.3, 0.7]").unwrap();
        let mesh = c.initial_mesh().unwrap();
        assert_eq!(mesh.len(), 3);
        let i = mesh.interfaces();
        assert!((i[0] + 0.4).abs() < 1e-15 && (i[1] - 0.4).abs() < 1e-15);
    }
}
