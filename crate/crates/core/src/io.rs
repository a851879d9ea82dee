//! Solution files and CSV samples.
//!
//! A solution file is line-oriented text:
//!
//! ```text
//! GISE-SOLUTION 1
//! PROBLEM breakwell
//! ALPHA <a>
//! DIMS <n_x> <n_u>
//! HORIZON <t0> <tf>
//! STATUS converged
//! MESH <K>
//! <k> <tau_left> <tau_right> <t_left> <t_right> <N> <Lx> <Lu> <M> <Mbar>
//! COEFFS
//! <k> x <r> <c_0> .. <c_Lx>
//! <k> u <s> <c_0> .. <c_Lu>
//! OBJECTIVE <J>
//! SAMPLES <rows>
//! <t> <x_1> .. <u_1> ..
//! TRACE <lines>
//! <free text>
//! WARNINGS <lines>
//! <free text>
//! END
//! ```
//!
//! Reals carry 17 significant digits, so coefficients read back bitwise.

use std::fmt::Write as _;
use std::path::Path;

use crate::adaptive::AdaptiveOutcome;
use crate::error::{GiseError, Result};
use crate::gegenbauer::{Element, GegenbauerParam};
use crate::problem::{tau_to_time, ElementConfig, Mesh, MeshElement, OCProblem};
use crate::transcription::{sample_elements, SpectralSolution, Trajectories};

pub const SOLUTION_HEADER: &str = "GISE-SOLUTION 1";

/// In-memory form of a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub problem: String,
    pub alpha: f64,
    pub n_x: usize,
    pub n_u: usize,
    pub t0: f64,
    pub tf: f64,
    pub status: String,
    pub mesh: Vec<MeshElement>,
    /// Flat decision vector in layout order.
    pub z: Vec<f64>,
    pub objective: f64,
    pub samples: Trajectories,
    pub trace: Vec<String>,
    pub warnings: Vec<String>,
}

impl SolutionFile {
    pub fn from_solution(
        problem: &str,
        sol: &SpectralSolution,
        status: &str,
        samples: usize,
        trace: Vec<String>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        Ok(Self {
            problem: problem.to_string(),
            alpha: sol.mesh.alpha().value(),
            n_x: sol.n_x,
            n_u: sol.n_u,
            t0: sol.t0,
            tf: sol.tf,
            status: status.to_string(),
            mesh: sol.mesh.elements().to_vec(),
            z: sol.z.clone(),
            objective: sol.objective,
            samples: sample_elements(sol, samples)?,
            trace,
            warnings,
        })
    }

    pub fn from_outcome(problem: &str, out: &AdaptiveOutcome, samples: usize) -> Result<Self> {
        Self::from_solution(
            problem,
            &out.solution,
            out.solve.status.as_str(),
            samples,
            out.trace.iter().map(ToString::to_string).collect(),
            out.warnings.clone(),
        )
    }

    /// Rebuilds the solution against its registered problem.
    pub fn to_solution(&self, problem: &OCProblem) -> Result<SpectralSolution> {
        let mesh = Mesh::new(self.mesh.clone(), GegenbauerParam::new(self.alpha)?)?;
        SpectralSolution::new(problem, mesh, self.z.clone(), self.objective)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = |v: f64| format!("{v:.16e}");
        let _ = writeln!(s, "{SOLUTION_HEADER}");
        let _ = writeln!(s, "PROBLEM {}", self.problem);
        let _ = writeln!(s, "ALPHA {}", r(self.alpha));
        let _ = writeln!(s, "DIMS {} {}", self.n_x, self.n_u);
        let _ = writeln!(s, "HORIZON {} {}", r(self.t0), r(self.tf));
        let _ = writeln!(s, "STATUS {}", self.status);
        let _ = writeln!(s, "MESH {}", self.mesh.len());
        for (k, me) in self.mesh.iter().enumerate() {
            let (a, b) = (me.element.left(), me.element.right());
            let c = me.config;
            let _ = writeln!(
                s,
                "{k} {} {} {} {} {} {} {} {} {}",
                r(a),
                r(b),
                r(tau_to_time(a, self.t0, self.tf)),
                r(tau_to_time(b, self.t0, self.tf)),
                c.n,
                c.lx,
                c.lu,
                c.m,
                c.mbar
            );
        }
        let _ = writeln!(s, "COEFFS");
        let mut at = 0;
        for (k, me) in self.mesh.iter().enumerate() {
            let blocks = [("x", self.n_x, me.config.lx + 1), ("u", self.n_u, me.config.lu + 1)];
            for (tag, count, len) in blocks {
                for i in 0..count {
                    let vals: Vec<String> = self.z[at..at + len].iter().map(|&v| r(v)).collect();
                    let _ = writeln!(s, "{k} {tag} {i} {}", vals.join(" "));
                    at += len;
                }
            }
        }
        let _ = writeln!(s, "OBJECTIVE {}", r(self.objective));
        let _ = writeln!(s, "SAMPLES {}", self.samples.t.len());
        for i in 0..self.samples.t.len() {
            let row: Vec<String> = std::iter::once(self.samples.t[i])
                .chain(self.samples.x[i].iter().copied())
                .chain(self.samples.u[i].iter().copied())
                .map(r)
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        let _ = writeln!(s, "TRACE {}", self.trace.len());
        for line in &self.trace {
            let _ = writeln!(s, "{}", one_line(line));
        }
        let _ = writeln!(s, "WARNINGS {}", self.warnings.len());
        for line in &self.warnings {
            let _ = writeln!(s, "{}", one_line(line));
        }
        let _ = writeln!(s, "END");
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Lines::new(text);
        if p.next()? != SOLUTION_HEADER {
            return Err(p.error("unsupported header"));
        }
        let problem = p.keyed("PROBLEM")?.to_string();
        let line = p.keyed("ALPHA")?;
        let alpha = p.real(line)?;
        let line = p.keyed("DIMS")?;
        let dims = p.fields(line, 2)?;
        let (n_x, n_u) = (p.count(dims[0])?, p.count(dims[1])?);
        let line = p.keyed("HORIZON")?;
        let horizon = p.fields(line, 2)?;
        let (t0, tf) = (p.real(horizon[0])?, p.real(horizon[1])?);
        let status = p.keyed("STATUS")?.to_string();
        let line = p.keyed("MESH")?;
        let k_count = p.count(line)?;
        let mut mesh = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let line = p.next()?;
            let f = p.fields(line, 10)?;
            if p.count(f[0])? != k {
                return Err(p.error("mesh rows out of order"));
            }
            let element = Element::new(p.real(f[1])?, p.real(f[2])?)?;
            let sizes: Vec<usize> = f[5..].iter().map(|v| p.count(v)).collect::<Result<_>>()?;
            let config = ElementConfig::new(sizes[0], sizes[1], sizes[2], sizes[3], sizes[4]);
            mesh.push(MeshElement { element, config });
        }
        if p.next()? != "COEFFS" {
            return Err(p.error("expected COEFFS"));
        }
        let mut z = Vec::new();
        for (k, me) in mesh.iter().enumerate() {
            let blocks = [("x", n_x, me.config.lx + 1), ("u", n_u, me.config.lu + 1)];
            for (tag, count, len) in blocks {
                for i in 0..count {
                    let line = p.next()?;
                    let f = p.fields(line, len + 3)?;
                    if p.count(f[0])? != k || f[1] != tag || p.count(f[2])? != i {
                        return Err(p.error("coefficient rows out of order"));
                    }
                    for v in &f[3..] {
                        z.push(p.real(v)?);
                    }
                }
            }
        }
        let line = p.keyed("OBJECTIVE")?;
        let objective = p.real(line)?;
        let line = p.keyed("SAMPLES")?;
        let rows = p.count(line)?;
        let mut samples = Trajectories { t: Vec::new(), x: Vec::new(), u: Vec::new() };
        for _ in 0..rows {
            let line = p.next()?;
            let f = p.fields(line, 1 + n_x + n_u)?;
            let v: Vec<f64> = f.iter().map(|s| p.real(s)).collect::<Result<_>>()?;
            samples.t.push(v[0]);
            samples.x.push(v[1..=n_x].to_vec());
            samples.u.push(v[1 + n_x..].to_vec());
        }
        let trace = p.block("TRACE")?;
        let warnings = p.block("WARNINGS")?;
        if p.next()? != "END" {
            return Err(p.error("expected END"));
        }
        Ok(Self {
            problem,
            alpha,
            n_x,
            n_u,
            t0,
            tf,
            status,
            mesh,
            z,
            objective,
            samples,
            trace,
            warnings,
        })
    }

    /// Interior interfaces in original time.
    pub fn interfaces_time(&self) -> Vec<f64> {
        self.mesh[1..]
            .iter()
            .map(|me| tau_to_time(me.element.left(), self.t0, self.tf))
            .collect()
    }
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { iter: text.lines(), line: 0 }
    }

    fn error(&self, msg: &str) -> GiseError {
        GiseError::Parse(format!("solution file line {}: {msg}", self.line))
    }

    fn next(&mut self) -> Result<&'a str> {
        self.line += 1;
        self.iter.next().map(str::trim_end).ok_or_else(|| self.error("unexpected end of file"))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            _ => Err(self.error(&format!("expected {key}"))),
        }
    }

    fn fields(&self, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() == n {
            Ok(f)
        } else {
            Err(self.error(&format!("expected {n} fields, found {}", f.len())))
        }
    }

    fn real(&self, s: &str) -> Result<f64> {
        s.parse().map_err(|_| self.error(&format!("bad real '{s}'")))
    }

    fn count(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.error(&format!("bad integer '{s}'")))
    }

    fn block(&mut self, key: &str) -> Result<Vec<String>> {
        let n = self.keyed(key)?;
        let n = self.count(n)?;
        (0..n).map(|_| self.next().map(str::to_string)).collect()
    }
}

pub fn write_solution(file: &SolutionFile, path: &Path) -> Result<()> {
    write_text(path, &file.to_text())
}

pub fn read_solution(path: &Path) -> Result<SolutionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| GiseError::Io(format!("{}: {e}", path.display())))?;
    SolutionFile::parse(&text)
}

/// CSV text with header `t,x1..,u1..` and one row per sample.
pub fn samples_csv(samples: &Trajectories, n_x: usize, n_u: usize) -> String {
    let mut s = String::from("t");
    for r in 1..=n_x {
        let _ = write!(s, ",x{r}");
    }
    for r in 1..=n_u {
        let _ = write!(s, ",u{r}");
    }
    s.push('\n');
    for i in 0..samples.t.len() {
        let _ = write!(s, "{:.16e}", samples.t[i]);
        for v in samples.x[i].iter().chain(&samples.u[i]) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

/// Writes `samples` linearly spaced points per element.
pub fn write_csv_samples(sol: &SpectralSolution, samples: usize, path: &Path) -> Result<()> {
    let traj = sample_elements(sol, samples)?;
    write_text(path, &samples_csv(&traj, sol.n_x, sol.n_u))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| GiseError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| GiseError::Io(format!("{}: {e}", path.display())))
}
