//! The adaptive loop: minimax steps on a fixed space until the discrete
//! residual is dominated by the estimator and by `σ(N)`, then mark, refine and
//! carry the iterate over.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::error::{LmmgError, Result};
use crate::estimator::{dorfler_mark, element_indicators, IndicatorField};
use crate::fespace::{interpolate_function, nodal_interpolant, FeFunction, FeSpace};
use crate::galerkin::Discretization;
use crate::mesh::{create_square_mesh, Triangulation};
use crate::minimax::{minimax_step_with, MinimaxSettings, MinimaxState, StepDiagnostics, Subspace};
use crate::problem::SemilinearProblem;
use crate::sparse::DEFAULT_CG_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Adaptive,
    Uniform,
}

/// Profile whose nodal interpolant is the initial direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `sin(πx) sin(πy)` taken literally, whatever the domain.
    Sine,
    /// The single sine bump fitted to the domain rectangle.
    SineBump,
}

#[derive(Debug, Clone)]
pub struct LmmgConfig {
    pub problem: SemilinearProblem,
    pub gamma: f64,
    pub lambda: f64,
    pub theta: f64,
    pub eps_tol: f64,
    pub max_elements: usize,
    pub initial_divisions: usize,
    pub initial_guess: InitialGuess,
    pub refinement: Refinement,
    /// Previously found solutions spanning `L`; empty for the mountain pass.
    pub subspace: Vec<FeFunction>,
    pub scaled_threshold: f64,
    pub max_inner_steps: usize,
    pub nd_max_iter: usize,
    pub oscillation: bool,
    pub cg_tol: f64,
}

impl LmmgConfig {
    pub fn new(problem: SemilinearProblem) -> Self {
        let defaults = MinimaxSettings::default();
        LmmgConfig {
            problem,
            gamma: 0.25,
            lambda: defaults.lambda,
            theta: 0.5,
            eps_tol: 0.0,
            max_elements: 50_000,
            initial_divisions: 4,
            initial_guess: InitialGuess::Sine,
            refinement: Refinement::Adaptive,
            subspace: Vec::new(),
            scaled_threshold: defaults.scaled_threshold,
            max_inner_steps: 200,
            nd_max_iter: defaults.nd_max_iter,
            oscillation: false,
            cg_tol: DEFAULT_CG_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda), ("theta", self.theta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(LmmgError::Configuration(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.initial_divisions == 0 {
            return Err(LmmgError::Configuration("initial divisions must be positive".into()));
        }
        let initial = 2 * self.initial_divisions * self.initial_divisions;
        if self.max_elements < initial {
            return Err(LmmgError::Configuration(format!(
                "max_elements = {} is below the {initial} initial elements",
                self.max_elements
            )));
        }
        if !(self.eps_tol >= 0.0) {
            return Err(LmmgError::Configuration("eps_tol must be nonnegative".into()));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(LmmgError::Configuration("cg tolerance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn settings(&self) -> MinimaxSettings {
        MinimaxSettings {
            lambda: self.lambda,
            scaled_threshold: self.scaled_threshold,
            nd_max_iter: self.nd_max_iter,
            ..MinimaxSettings::default()
        }
    }
}

/// State of one generation at the moment the mesh is refined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub elements: usize,
    pub dofs: usize,
    pub eta: f64,
    pub res_norm: f64,
    pub energy: f64,
    pub minimax_steps: usize,
    pub sigma: f64,
}

/// One accepted minimax step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub generation: usize,
    pub k: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub res_norm: f64,
    pub dual_product: f64,
    pub m: i32,
    pub s: f64,
    pub t: f64,
}

impl StepRecord {
    fn new(generation: usize, k: usize, d: &StepDiagnostics) -> Self {
        StepRecord {
            generation,
            k,
            energy_before: d.energy_before,
            energy_after: d.energy_after,
            res_norm: d.res_norm,
            dual_product: d.dual_product,
            m: d.m,
            s: d.s,
            t: d.t,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub problem: String,
    /// `‖R_0(w_0^1)‖_ε`, the anchor of `σ(N)`.
    pub initial_residual: f64,
    pub initial_eta: f64,
    pub initial_energy: f64,
    /// Generations `N ≥ 1`.
    pub records: Vec<GenerationRecord>,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: FeFunction,
    pub direction: FeFunction,
    /// Coefficients of the solution along the (energy-ordered) basis of `L`.
    pub subspace_coefficients: Vec<f64>,
    pub log: RunLog,
}

impl RunOutput {
    pub fn mesh(&self) -> &Arc<Triangulation> {
        self.solution.mesh()
    }
}

/// A failed run, with everything logged up to the failure.
#[derive(Debug, Clone, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: LmmgError,
    pub log: RunLog,
}

/// `σ(N) = ‖R_0‖_ε / |T_N|^{1/2}`.
pub fn sigma(r0: f64, elements: usize) -> f64 {
    r0 / (elements as f64).sqrt()
}

fn initial_direction(space: &Arc<FeSpace>, problem: &SemilinearProblem, guess: InitialGuess) -> FeFunction {
    match guess {
        InitialGuess::Sine => nodal_interpolant(space, |x| (PI * x[0]).sin() * (PI * x[1]).sin()),
        InitialGuess::SineBump => {
            let d = problem.domain;
            nodal_interpolant(space, |x| {
                (PI * (x[0] - d.lo[0]) / d.width()).sin() * (PI * (x[1] - d.lo[1]) / d.height()).sin()
            })
        }
    }
}

fn discretize(problem: &Arc<SemilinearProblem>, mesh: Arc<Triangulation>, config: &LmmgConfig) -> Result<Discretization> {
    Ok(Discretization::new(problem.clone(), FeSpace::new(mesh))?.with_cg_tolerance(config.cg_tol))
}

fn subspace_on(disc: &Discretization, previous: &[FeFunction]) -> Result<Subspace> {
    let basis = previous
        .iter()
        .map(|w| interpolate_function(w, disc.space()))
        .collect::<Result<Vec<_>>>()?;
    Subspace::new(disc, basis)
}

fn next_mesh(mesh: &Triangulation, eta: &IndicatorField, config: &LmmgConfig) -> Result<Triangulation> {
    match config.refinement {
        Refinement::Uniform => mesh.refine_all(),
        Refinement::Adaptive => {
            let marked = dorfler_mark(eta, config.theta);
            if marked.is_empty() {
                mesh.refine_all()
            } else {
                mesh.refine(&marked)
            }
        }
    }
}

/// Runs the adaptive local minimax Galerkin iteration.
pub fn run_lmmg(config: &LmmgConfig) -> std::result::Result<RunOutput, Box<RunFailure>> {
    let mut log = RunLog { problem: config.problem.name.clone(), ..RunLog::default() };
    match run_inner(config, &mut log) {
        Ok(state) => Ok(RunOutput {
            solution: state.w,
            direction: state.v,
            subspace_coefficients: state.coefficients,
            log,
        }),
        Err(error) => Err(Box::new(RunFailure { error, log })),
    }
}

/// Restarts with `L` spanned by previously found solutions; they are
/// interpolated onto every new mesh.
pub fn restart_with_subspace(
    config: &LmmgConfig,
    previous: &[FeFunction],
) -> std::result::Result<RunOutput, Box<RunFailure>> {
    let mut config = config.clone();
    config.subspace = previous.to_vec();
    run_lmmg(&config)
}

fn run_inner(config: &LmmgConfig, log: &mut RunLog) -> Result<MinimaxState> {
    config.validate()?;
    config.problem.check_hypotheses();
    let problem = Arc::new(config.problem.clone());
    let settings = config.settings();
    let dom = problem.domain;

    let mesh0 = Arc::new(create_square_mesh(dom.lo, dom.hi, config.initial_divisions)?);
    let disc = discretize(&problem, mesh0, config)?;
    let l = subspace_on(&disc, &config.subspace)?;
    let v0 = initial_direction(disc.space(), &problem, config.initial_guess);
    if let Some(top) = l.basis().last() {
        let probe = top.axpy(1e-3, &v0)?;
        if disc.energy(&probe)? <= disc.energy(top)? {
            log::warn!("initial direction is not an ascent direction at the last basis function");
        }
    }
    let mut state = MinimaxState::new(&disc, &l, &v0, &settings)?;
    log.initial_energy = state.energy;

    // a single step on the initial space fixes r0
    let res = disc.discrete_residual(&state.w)?;
    if res.norm_eps > 0.0 {
        let (next, diag) = minimax_step_with(&disc, &l, &state, &res, &settings)?;
        log.steps.push(StepRecord::new(0, 0, &diag));
        state = next;
    }
    let res = disc.discrete_residual(&state.w)?;
    let r0 = res.norm_eps;
    let eta = element_indicators(&disc, &state.w, config.oscillation)?;
    log.initial_residual = r0;
    log.initial_eta = eta.global();
    log::info!(
        "{}: N=0 elements={} eta={:.6e} res={:.6e} energy={:.12e}",
        problem.name,
        disc.space().num_elements(),
        eta.global(),
        r0,
        state.energy
    );
    if r0 < config.eps_tol {
        return Ok(state);
    }
    let mut mesh = next_mesh(disc.space().mesh(), &eta, config)?;
    if mesh.num_elements() > config.max_elements {
        return Ok(state);
    }

    for generation in 1.. {
        let disc = discretize(&problem, Arc::new(mesh), config)?;
        let l = subspace_on(&disc, &config.subspace)?;
        state = state.transfer(&disc, &l, &settings)?;
        let elements = disc.space().num_elements();
        let sigma_n = sigma(r0, elements);
        let mut res = disc.discrete_residual(&state.w)?;
        let mut eta = element_indicators(&disc, &state.w, config.oscillation)?;
        let mut steps = 0;
        while res.norm_eps > config.gamma * eta.global() || res.norm_eps > sigma_n {
            if steps == config.max_inner_steps {
                return Err(LmmgError::InnerLoopCap { generation, steps });
            }
            let (next, diag) = minimax_step_with(&disc, &l, &state, &res, &settings)?;
            log.steps.push(StepRecord::new(generation, steps, &diag));
            state = next;
            steps += 1;
            res = disc.discrete_residual(&state.w)?;
            eta = element_indicators(&disc, &state.w, config.oscillation)?;
        }
        let record = GenerationRecord {
            generation,
            elements,
            dofs: disc.space().num_dofs(),
            eta: eta.global(),
            res_norm: res.norm_eps,
            energy: state.energy,
            minimax_steps: steps,
            sigma: sigma_n,
        };
        log::info!(
            "{}: N={} elements={} eta={:.6e} res={:.6e} energy={:.12e} steps={}",
            problem.name,
            generation,
            elements,
            record.eta,
            record.res_norm,
            record.energy,
            steps
        );
        log.records.push(record);
        if res.norm_eps < config.eps_tol {
            break;
        }
        let next = next_mesh(disc.space().mesh(), &eta, config)?;
        if next.num_elements() > config.max_elements {
            break;
        }
        mesh = next;
    }
    Ok(state)
}
