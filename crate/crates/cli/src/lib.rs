//! Configuration, presets and file formats for the `lmmg` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lmmg_core::fespace::{read_solution, write_solution};
use lmmg_core::problem::builtin_problem;
use lmmg_core::{
    FeFunction, FeSpace, GenerationRecord, InitialGuess, LmmgConfig, LmmgError, Rectangle, Refinement,
    RunLog, Triangulation,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: key `{key}`: {message}")]
    Config { key: String, line: usize, message: String },

    #[error("{0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] LmmgError),
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// Exit status: 2 for configuration problems, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => 2,
            CliError::Core(LmmgError::Configuration(_) | LmmgError::UnknownProblem(_)) => 2,
            CliError::Io { .. } => 2,
            CliError::Core(_) => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Native,
    Vtk,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "native" => Ok(ExportFormat::Native),
            "vtk" => Ok(ExportFormat::Vtk),
            other => Err(format!("unknown export format `{other}` (expected native or vtk)")),
        }
    }
}

/// Everything a run needs, in textual-config terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    pub domain: Option<Rectangle>,
    pub epsilon: Option<f64>,
    pub reaction: Option<f64>,
    pub gamma: f64,
    pub lambda: f64,
    pub theta: f64,
    pub eps_tol: f64,
    pub max_elements: usize,
    pub divisions: usize,
    pub refinement: Refinement,
    pub initial_guess: InitialGuess,
    pub l_files: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub export: Option<ExportFormat>,
    pub scaled_threshold: f64,
    pub oscillation: bool,
    pub max_inner_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "lane_emden".into(),
            domain: None,
            epsilon: None,
            reaction: None,
            gamma: 0.25,
            lambda: 0.5,
            theta: 0.5,
            eps_tol: 0.0,
            max_elements: 50_000,
            divisions: 4,
            refinement: Refinement::Adaptive,
            initial_guess: InitialGuess::Sine,
            l_files: Vec::new(),
            output_dir: PathBuf::from("out"),
            export: None,
            scaled_threshold: 1e-4,
            oscillation: false,
            max_inner_steps: 200,
        }
    }
}

pub const PRESETS: [&str; 4] = ["lane_emden", "henon", "henon_perturbed", "lane_emden_perturbed"];

impl ExperimentConfig {
    /// Parameter sets of the four model experiments.
    pub fn preset(name: &str) -> CliResult<Self> {
        let mut c = ExperimentConfig { problem: name.to_string(), ..Self::default() };
        match name {
            "lane_emden" | "henon" | "lane_emden_perturbed" => {}
            "henon_perturbed" => {
                c.gamma = 0.125;
                c.lambda = 0.25;
            }
            other => return Err(CliError::Invalid(format!("unknown preset `{other}`"))),
        }
        Ok(c)
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Config {
                key: line.to_string(),
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            self.set(key.trim(), value.trim()).map_err(|message| CliError::Config {
                key: key.trim().to_string(),
                line: i + 1,
                message,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Sets one key; the error message does not repeat the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "problem" => {
                if !PRESETS.contains(&value) {
                    return Err(format!("unknown problem `{value}`"));
                }
                self.problem = value.to_string();
            }
            "domain" => {
                self.domain = Some(match value {
                    "unit" => Rectangle::unit(),
                    "symmetric" => Rectangle::symmetric(),
                    other => return Err(format!("expected unit or symmetric, got `{other}`")),
                })
            }
            "epsilon" => self.epsilon = Some(parse_num(value)?),
            "reaction" => self.reaction = Some(parse_num(value)?),
            "gamma" => self.gamma = parse_num(value)?,
            "lambda" => self.lambda = parse_num(value)?,
            "theta" => self.theta = parse_num(value)?,
            "eps_tol" => self.eps_tol = parse_num(value)?,
            "max_elements" => self.max_elements = parse_count(value)?,
            "divisions" => self.divisions = parse_count(value)?,
            "max_inner_steps" => self.max_inner_steps = parse_count(value)?,
            "scaled_threshold" => self.scaled_threshold = parse_num(value)?,
            "refinement" => {
                self.refinement = match value {
                    "adaptive" => Refinement::Adaptive,
                    "uniform" => Refinement::Uniform,
                    other => return Err(format!("expected adaptive or uniform, got `{other}`")),
                }
            }
            "initial_guess" => {
                self.initial_guess = match value {
                    "sine" => InitialGuess::Sine,
                    "sine_bump" => InitialGuess::SineBump,
                    other => return Err(format!("expected sine or sine_bump, got `{other}`")),
                }
            }
            "L_files" | "l_files" => {
                self.l_files =
                    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "export" => self.export = Some(value.parse()?),
            "oscillation" => {
                self.oscillation = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    other => return Err(format!("expected true or false, got `{other}`")),
                }
            }
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Builds the solver configuration, reading any `L` solution files.
    pub fn to_lmmg(&self) -> CliResult<LmmgConfig> {
        let mut problem = builtin_problem(&self.problem)?;
        if let Some(d) = self.domain {
            problem = problem.with_domain(d);
        }
        if let Some(eps) = self.epsilon {
            problem = problem.with_epsilon(eps)?;
        }
        if let Some(q) = self.reaction {
            problem = problem.with_reaction(q)?;
        }
        let mut c = LmmgConfig::new(problem);
        c.gamma = self.gamma;
        c.lambda = self.lambda;
        c.theta = self.theta;
        c.eps_tol = self.eps_tol;
        c.max_elements = self.max_elements;
        c.initial_divisions = self.divisions;
        c.refinement = self.refinement;
        c.initial_guess = self.initial_guess;
        c.scaled_threshold = self.scaled_threshold;
        c.oscillation = self.oscillation;
        c.max_inner_steps = self.max_inner_steps;
        c.subspace = self.l_files.iter().map(|p| load_solution(p)).collect::<CliResult<_>>()?;
        c.validate()?;
        Ok(c)
    }
}

fn parse_num(value: &str) -> Result<f64, String> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{value}` is not a finite number")),
    }
}

fn parse_count(value: &str) -> Result<usize, String> {
    // allow 5e4 style
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(format!("`{value}` is not a nonnegative integer")),
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub const CSV_HEADER: &str = "N,elements,dofs,eta,res_norm,energy,minimax_steps,sigma";

pub fn format_csv(records: &[GenerationRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.generation, r.elements, r.dofs, r.eta, r.res_norm, r.energy, r.minimax_steps, r.sigma
        )
        .unwrap();
    }
    s
}

pub fn write_csv(log: &RunLog, path: &Path) -> CliResult<()> {
    write_atomic(path, format_csv(&log.records).as_bytes())
}

pub fn parse_csv(text: &str) -> CliResult<Vec<GenerationRecord>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(CliError::Invalid("missing or unexpected CSV header".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::Invalid(format!("CSV row {}: bad {what}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("column count"));
        }
        let int = |j: usize, name: &str| f[j].parse::<usize>().map_err(|_| bad(name));
        let real = |j: usize, name: &str| f[j].parse::<f64>().map_err(|_| bad(name));
        out.push(GenerationRecord {
            generation: int(0, "N")?,
            elements: int(1, "elements")?,
            dofs: int(2, "dofs")?,
            eta: real(3, "eta")?,
            res_norm: real(4, "res_norm")?,
            energy: real(5, "energy")?,
            minimax_steps: int(6, "minimax_steps")?,
            sigma: real(7, "sigma")?,
        });
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> CliResult<Vec<GenerationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_csv(&text)
}

/// Per-step diagnostics, one row per accepted minimax step.
pub fn format_steps_csv(log: &RunLog) -> String {
    let mut s = String::from("N,k,energy_before,energy_after,res_norm,dual_product,m,s,t\n");
    for r in &log.steps {
        writeln!(
            s,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            r.generation, r.k, r.energy_before, r.energy_after, r.res_norm, r.dual_product, r.m, r.s, r.t
        )
        .unwrap();
    }
    s
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `log η` against `log |T_N|` over the last `last_k` records.
pub fn slope_of_records(records: &[GenerationRecord], last_k: usize) -> CliResult<f64> {
    if last_k < 2 || records.len() < last_k {
        return Err(CliError::Invalid(format!(
            "need at least {} rows for a slope, have {}",
            last_k.max(2),
            records.len()
        )));
    }
    let tail = &records[records.len() - last_k..];
    let x: Vec<f64> = tail.iter().map(|r| r.elements as f64).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.eta).collect();
    Ok(loglog_slope(&x, &y))
}

pub fn report_slope(path: &Path, last_k: usize) -> CliResult<f64> {
    slope_of_records(&read_csv(path)?, last_k)
}

/// Legacy ASCII VTK unstructured grid with the nodal values as `u`.
pub fn format_vtk(u: &FeFunction) -> String {
    let mesh = u.mesh();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nlmmg solution\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {} double", mesh.num_vertices()).unwrap();
    for p in mesh.vertices() {
        writeln!(s, "{:?} {:?} 0", p[0], p[1]).unwrap();
    }
    let m = mesh.num_elements();
    writeln!(s, "CELLS {} {}", m, 4 * m).unwrap();
    for t in mesh.elements() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        s.push_str("5\n");
    }
    writeln!(s, "POINT_DATA {}\nSCALARS u double 1\nLOOKUP_TABLE default", mesh.num_vertices()).unwrap();
    for v in u.nodal_values() {
        writeln!(s, "{v:?}").unwrap();
    }
    s
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut p = stem.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Writes `<stem>.mesh` + `<stem>.sol`, or `<stem>.vtk`. Returns the paths.
pub fn export_solution(u: &FeFunction, format: ExportFormat, stem: &Path) -> CliResult<Vec<PathBuf>> {
    match format {
        ExportFormat::Native => {
            let mut mesh_buf = Vec::new();
            u.mesh().write_text(&mut mesh_buf)?;
            let mut sol_buf = Vec::new();
            write_solution(u, &mut sol_buf)?;
            let (mp, sp) = (with_ext(stem, "mesh"), with_ext(stem, "sol"));
            write_atomic(&mp, &mesh_buf)?;
            write_atomic(&sp, &sol_buf)?;
            Ok(vec![mp, sp])
        }
        ExportFormat::Vtk => {
            let p = with_ext(stem, "vtk");
            write_atomic(&p, format_vtk(u).as_bytes())?;
            Ok(vec![p])
        }
    }
}

/// Reads a native export. `path` may be the stem or either of its files.
pub fn load_solution(path: &Path) -> CliResult<FeFunction> {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("sol" | "mesh") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mp = with_ext(&stem, "mesh");
    let sp = with_ext(&stem, "sol");
    let mf = fs::File::open(&mp).map_err(|e| CliError::io(&mp, e))?;
    let mesh = Triangulation::read_text(BufReader::new(mf))?;
    let space = FeSpace::new(Arc::new(mesh));
    let sf = fs::File::open(&sp).map_err(|e| CliError::io(&sp, e))?;
    Ok(read_solution(&space, BufReader::new(sf))?)
}

/// Writes the CSV logs of a run into `dir` and returns the main CSV path.
pub fn write_run_logs(log: &RunLog, dir: &Path, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let csv = dir.join(format!("{name}.csv"));
    write_csv(log, &csv)?;
    write_atomic(&dir.join(format!("{name}_steps.csv")), format_steps_csv(log).as_bytes())?;
    Ok(csv)
}

/// Short human-readable summary of a log.
pub fn summarize(log: &RunLog, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}: r0 = {:.6e}", log.problem, log.initial_residual)?;
    for r in &log.records {
        writeln!(
            out,
            "N={:3} elements={:7} eta={:.4e} res={:.4e} energy={:.10e} steps={}",
            r.generation, r.elements, r.eta, r.res_norm, r.energy, r.minimax_steps
        )?;
    }
    Ok(())
}

pub fn buffered(path: &Path) -> CliResult<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?))
}
