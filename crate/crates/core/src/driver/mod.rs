//! Simulation lifecycle: unit initialization from a manifest and parfile,
//! the per-step physics sequence, output triggers and the run summary.

mod apps;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bodies::{self, BodyError, BodyVars, Kinematics, LagrangianBody};
use crate::composer::SimulationManifest;
use crate::grid::poisson::{PoissonError, PoissonMethod, PoissonOperator, PoissonOptions};
use crate::grid::{
    BlockGrid, BoundaryType, Centering, DomainSpec, FieldRegistry, GlobalField, GridError, Persistence, Tile, VarId,
};
use crate::heatad::{self, DiffusionKind, HeatError, HeatVars, PhaseRef, ThermalConfig};
use crate::incompns::{self, FlowConfig, FlowError, FlowVars, Formulation};
use crate::io::{self, Checkpoint, IoError};
use crate::multiphase::{self, MultiphaseConfig, MultiphaseError, PhaseVars};
use crate::params::{ParamError, ParameterSet};
use crate::sourceterms::{self, HeaterPatch, OutletConfig, SourceError};

pub use apps::{AppRegistry, Initializer};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error(transparent)]
    Multiphase(#[from] MultiphaseError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("parameter `{name}`: {reason}")]
    BadParameter { name: String, reason: String },
    #[error("no initializer registered for application `{0}`")]
    MissingInitializer(String),
    #[error("no implementation registered for `{key}` = `{provider}`")]
    UnknownImplementation { key: String, provider: String },
    #[error("manifest has no `init_block` binding")]
    NoApplication,
    #[error("step {step}: divergence {value:e} exceeds {bound:e}")]
    DivergenceBound { step: usize, value: f64, bound: f64 },
    #[error("step {step}: pressure solve failed, state dumped to {}", dump.display())]
    Aborted { step: usize, dump: PathBuf, source: PoissonError },
    #[error("cannot reach `{}`: {source}", path.display())]
    File { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Binding keys and the providers that have a kernel behind them.
const IMPLEMENTATIONS: &[(&str, &[&str])] = &[
    ("advection", &["physics/IncompNS", "physics/IncompNS/IncompNSMain"]),
    ("body_advance", &["physics/SolidMechanics/SolidMechanicsMain"]),
    ("evolve", &["Driver/DriverMain", "Driver/DriverMain/Incomp"]),
    ("face_to_center", &["physics/IncompNS/IncompNSExtras"]),
    ("fill_guard_cells", &["Grid/GridMain", "Grid/GridMain/Uniform"]),
    ("heat_advance", &["physics/HeatAD/HeatADMain"]),
    ("heat_advection", &["physics/HeatAD/HeatADAdvection"]),
    (
        "heat_diffusion",
        &["physics/HeatAD/HeatADMain/constDiffusion", "physics/HeatAD/HeatADMain/varDiffusion"],
    ),
    ("heater_apply", &["physics/sourceTerms/Heater/HeaterMain"]),
    ("ib_forcing", &["physics/ImBound/ImBoundMain"]),
    ("ib_map_to_levelset", &["physics/ImBound/ImBoundMain"]),
    ("inlet_bc", &["physics/sourceTerms/Inlet/InletMain"]),
    (
        "ins_diffusion",
        &["physics/IncompNS/IncompNSMain/constDens", "physics/IncompNS/IncompNSMain/varDens"],
    ),
    ("mph_advect", &["physics/Multiphase/MultiphaseMain"]),
    ("mph_set_properties", &["physics/Multiphase/MultiphaseMain"]),
    ("mph_vel_forcing", &["physics/Multiphase/MultiphaseMain"]),
    ("outlet_forcing", &["physics/sourceTerms/Outlet/OutletMain"]),
    ("poisson_solve", &["Grid/GridSolvers", "Grid/GridSolvers/uniform"]),
    ("predictor", &["physics/IncompNS"]),
    ("projection", &["physics/IncompNS"]),
    ("tile_iterator", &["Grid/GridMain/Uniform"]),
    ("write_checkpoint", &["IO/IOMain"]),
    ("write_plotfile", &["IO/IOMain"]),
];

/// Checks every manifest binding against the kernel table. Application
/// initializers are matched separately by name.
pub fn check_bindings(manifest: &SimulationManifest) -> Result<(), DriverError> {
    for (key, provider) in &manifest.bindings {
        if key == "init_block" {
            continue;
        }
        let known = IMPLEMENTATIONS
            .iter()
            .any(|(k, ps)| k == key && ps.contains(&provider.as_str()));
        if !known {
            return Err(DriverError::UnknownImplementation { key: key.clone(), provider: provider.clone() });
        }
    }
    Ok(())
}

/// Operation names recorded in the trace.
pub mod ops {
    pub const FILL_GUARD_CELLS: &str = "fill_guard_cells";
    pub const HEATER_APPLY: &str = "heater_apply";
    pub const MPH_SET_PROPERTIES: &str = "mph_set_properties";
    pub const INS_ADVECTION: &str = "ins_advection";
    pub const INS_DIFFUSION: &str = "ins_diffusion";
    pub const HEAT_RHS: &str = "heat_rhs";
    pub const HT_BUOYANCY: &str = "ht_buoyancy";
    pub const MPH_VEL_FORCING: &str = "mph_vel_forcing";
    pub const OUTLET_FORCING: &str = "outlet_forcing";
    pub const IB_FORCING: &str = "ib_forcing";
    pub const INS_PREDICTOR: &str = "ins_predictor";
    pub const HEAT_ADVANCE: &str = "heat_advance";
    pub const INS_PROJECT: &str = "ins_project";
    pub const MPH_ADVECT: &str = "mph_advect";
    pub const MPH_REDISTANCE: &str = "mph_redistance_if_due";
    pub const INS_FACE_TO_CENTER: &str = "ins_face_to_center";
    pub const BODY_ADVANCE: &str = "body_advance";
    pub const IB_MAP_TO_LEVELSET: &str = "ib_map_to_levelset";
    pub const WRITE_CHECKPOINT: &str = "write_checkpoint";
    pub const WRITE_PLOTFILE: &str = "write_plotfile";
}

/// Counters and limits of the evolution loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvolutionState {
    pub nstep: usize,
    pub time: f64,
    pub dt: f64,
    pub nend: usize,
    pub tmax: f64,
}

impl EvolutionState {
    pub fn finished(&self) -> bool {
        self.nstep >= self.nend || self.time >= self.tmax - 1e-9 * self.dt
    }
}

/// Which units the manifest selected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Enabled {
    pub flow: bool,
    pub heat: bool,
    pub heat_advection: bool,
    pub multiphase: bool,
    pub bodies: bool,
    pub outlet: bool,
    pub heater: bool,
    pub inlet: bool,
}

impl Enabled {
    pub fn from_manifest(m: &SimulationManifest) -> Self {
        Enabled {
            flow: m.has_subtree("physics/IncompNS"),
            heat: m.has_subtree("physics/HeatAD"),
            heat_advection: m.has_subtree("physics/HeatAD/HeatADAdvection"),
            multiphase: m.has_subtree("physics/Multiphase"),
            bodies: m.has_subtree("physics/ImBound"),
            outlet: m.has_subtree("physics/sourceTerms/Outlet"),
            heater: m.has_subtree("physics/sourceTerms/Heater"),
            inlet: m.has_subtree("physics/sourceTerms/Inlet"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowUnit {
    pub vars: FlowVars,
    pub cfg: FlowConfig,
    /// Density and viscosity arrays for the variable-density formulation.
    pub props: Option<(VarId, VarId)>,
}

#[derive(Clone, Debug)]
pub struct HeatUnit {
    pub vars: HeatVars,
    pub cfg: ThermalConfig,
    pub advect: bool,
}

#[derive(Clone, Debug)]
pub struct PhaseUnit {
    pub vars: PhaseVars,
    pub cfg: MultiphaseConfig,
}

#[derive(Clone, Debug)]
pub struct BodyUnit {
    pub vars: BodyVars,
    pub body: Option<LagrangianBody>,
    pub solid_beta: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub application: String,
    pub steps: usize,
    pub start_step: usize,
    pub final_step: usize,
    pub time: f64,
    pub dt: f64,
    pub workers: usize,
    pub wall_seconds: f64,
    pub phase_seconds: BTreeMap<String, f64>,
    pub max_divergence: f64,
    pub poisson_iterations: usize,
    pub redistance_passes: usize,
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run report serializes")
    }
}

pub struct Simulation {
    pub manifest: SimulationManifest,
    pub params: ParameterSet,
    pub grid: BlockGrid,
    pub state: EvolutionState,
    pub enabled: Enabled,
    pub flow: Option<FlowUnit>,
    pub heat: Option<HeatUnit>,
    pub phase: Option<PhaseUnit>,
    pub body: Option<BodyUnit>,
    pub outlet: Option<OutletConfig>,
    pub heaters: Vec<HeaterPatch>,
    pub application: String,
    /// Units whose init ran, in resolved order.
    pub init_log: Vec<String>,
    pool: rayon::ThreadPool,
    workers: usize,
    output_dir: PathBuf,
    trace: Option<Vec<(usize, &'static str)>>,
    first_step: bool,
    poisson: Option<(Vec<f64>, PoissonOperator)>,
    start_step: usize,
    last_checkpoint: Option<usize>,
    timers: BTreeMap<String, f64>,
    wall: Instant,
    max_divergence: f64,
    poisson_iterations: usize,
    redistance_passes: usize,
    outputs: Vec<String>,
}

/// Parses and validates parfile text against the manifest schema.
pub fn load_params(manifest: &SimulationManifest, text: &str, source: Option<&Path>) -> Result<ParameterSet, DriverError> {
    let raw = crate::params::parse_parfile(text)?;
    let mut set = ParameterSet::validate(&raw, &manifest.parameters)?;
    set.source = source.map(Path::to_path_buf);
    Ok(set)
}

fn bad(name: &str, reason: impl Into<String>) -> DriverError {
    DriverError::BadParameter { name: name.to_string(), reason: reason.into() }
}

fn count(params: &ParameterSet, name: &str, fallback: i64) -> Result<usize, DriverError> {
    let v = params.int_or(name, fallback);
    usize::try_from(v).map_err(|_| bad(name, format!("must be non-negative, got {v}")))
}

/// Domain geometry and boundary conditions from the Grid parameters.
pub fn domain_from(manifest: &SimulationManifest, params: &ParameterSet) -> Result<DomainSpec, DriverError> {
    let g = manifest.geometry;
    let axes = ["x", "y", "z"];
    let mut d = DomainSpec::unit(g.dims, [1; 3], [g.nxb, g.nyb, g.nzb.max(1)]);
    d.maxblocks = g.maxblocks;
    for (a, ax) in axes.iter().enumerate().take(g.dims) {
        d.nblocks[a] = count(params, &format!("nblock{ax}"), 1)?;
        d.lo[a] = params.real_or(&format!("{ax}min"), 0.0);
        d.hi[a] = params.real_or(&format!("{ax}max"), 1.0);
        for (s, side) in ["l", "r"].iter().enumerate() {
            let key = format!("{ax}{side}_boundary_type");
            let text = params.string_or(&key, "periodic");
            d.boundary[a][s] = text.parse::<BoundaryType>().map_err(|e| bad(&key, e.to_string()))?;
            d.inflow[a][s] = params.real_or(&format!("{ax}{side}_inflow_value"), 0.0);
        }
    }
    if d.block_count() > d.maxblocks {
        return Err(bad("nblockx", format!("{} blocks exceed maxblocks {}", d.block_count(), d.maxblocks)));
    }
    d.validate()?;
    Ok(d)
}

fn poisson_options(params: &ParameterSet) -> Result<PoissonOptions, DriverError> {
    let method = match params.string_or("gr_poisson_method", "mgpcg") {
        "mgpcg" => PoissonMethod::MgPcg,
        "sor" => PoissonMethod::Sor { omega: params.real_or("gr_sor_omega", 1.7) },
        other => return Err(bad("gr_poisson_method", format!("unknown method `{other}`"))),
    };
    Ok(PoissonOptions {
        tol: params.real_or("ins_poisson_tol", 1e-9),
        max_iters: count(params, "ins_poisson_maxit", 500)?.max(1),
        method,
    })
}

fn resolve_file(params: &ParameterSet, name: &str) -> PathBuf {
    let p = Path::new(name);
    match params.source.as_deref().and_then(Path::parent) {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    }
}

fn read_text(path: &Path) -> Result<String, DriverError> {
    std::fs::read_to_string(path).map_err(|source| DriverError::File { path: path.to_path_buf(), source })
}

impl Simulation {
    /// `init_all` with the built-in application initializers.
    pub fn init(manifest: SimulationManifest, params: ParameterSet, workers: usize) -> Result<Self, DriverError> {
        Self::init_with(manifest, params, workers, &AppRegistry::builtin())
    }

    /// Initializes every selected unit in resolved order and fills the
    /// initial condition through the application's initializer.
    pub fn init_with(
        manifest: SimulationManifest,
        params: ParameterSet,
        workers: usize,
        apps: &AppRegistry,
    ) -> Result<Self, DriverError> {
        check_bindings(&manifest)?;
        let app_path = manifest.binding("init_block").ok_or(DriverError::NoApplication)?.to_string();
        let application = app_path.rsplit('/').next().unwrap_or_default().to_string();
        let init = apps.get(&application).ok_or_else(|| DriverError::MissingInitializer(application.clone()))?;
        let enabled = Enabled::from_manifest(&manifest);
        let domain = domain_from(&manifest, &params)?;

        let mut reg = FieldRegistry::new();
        for v in &manifest.variables {
            reg.ensure(&v.name, v.centering, Persistence::Checkpoint)?;
        }
        let mut init_log = Vec::new();
        let mut flow = None;
        let mut heat = None;
        let mut phase = None;
        let mut body = None;
        let mut outlet = None;
        let mut heater_text = None;
        for unit in &manifest.resolved_units {
            let name = unit.as_str();
            match name {
                "physics/IncompNS" => {
                    let vars = FlowVars::register(&mut reg)?;
                    let formulation = match manifest.binding("ins_diffusion") {
                        Some(p) if p.ends_with("varDens") => Formulation::VarDens,
                        _ => Formulation::ConstDens,
                    };
                    let cfg = FlowConfig {
                        inv_reynolds: params.real_or("ins_invReynolds", 0.01),
                        grav: [
                            params.real_or("ins_gravX", 0.0),
                            params.real_or("ins_gravY", 0.0),
                            params.real_or("ins_gravZ", 0.0),
                        ],
                        formulation,
                        poisson: poisson_options(&params)?,
                    };
                    cfg.validate()?;
                    flow = Some(FlowUnit { vars, cfg, props: None });
                }
                "physics/HeatAD" => {
                    let kind = match manifest.binding("heat_diffusion") {
                        Some(p) if p.ends_with("varDiffusion") => DiffusionKind::Variable,
                        _ => DiffusionKind::Constant,
                    };
                    let cfg = ThermalConfig {
                        alpha: params.real_or("ht_alpha", 0.01),
                        alpha_gas: params.real_or("ht_alphaGas", 1.0),
                        kind,
                        buoyancy: params.real_or("ht_buoyancy", 0.0),
                    };
                    cfg.validate()?;
                    let vars = HeatVars::register(&mut reg)?;
                    heat = Some(HeatUnit { vars, cfg, advect: enabled.heat_advection && enabled.flow });
                }
                "physics/Multiphase" => {
                    let cfg = MultiphaseConfig {
                        rho_gas: params.real_or("mph_rhoGas", 1.0),
                        mu_gas: params.real_or("mph_muGas", 1.0),
                        inv_weber: params.real_or("mph_invWeber", 0.0),
                        smear_cells: params.real_or("mph_smearCells", 2.5),
                        redistance_every: count(&params, "mph_redistance_every", 5)?,
                        redistance_iters: count(&params, "mph_redistance_iters", 20)?,
                    };
                    cfg.validate()?;
                    phase = Some(PhaseUnit { vars: PhaseVars::register(&mut reg)?, cfg });
                }
                "physics/ImBound" => {
                    let solid_beta = params.real_or("ib_solidBeta", 1e-4);
                    if !(solid_beta > 0.0) {
                        return Err(bad("ib_solidBeta", "must be positive"));
                    }
                    body = Some(BodyUnit { vars: BodyVars::register(&mut reg)?, body: None, solid_beta });
                }
                "physics/sourceTerms/Outlet" => {
                    let cfg = OutletConfig {
                        buffer: params.real_or("out_buffer", 0.1),
                        vel_ref: params.real_or("out_velRef", 1.0),
                    };
                    cfg.validate(&domain)?;
                    outlet = Some(cfg);
                }
                "physics/sourceTerms/Heater" => {
                    let file = params.string_or("htr_heaterFile", "");
                    heater_text = Some(if file.is_empty() {
                        String::new()
                    } else {
                        read_text(&resolve_file(&params, file))?
                    });
                }
                _ => continue,
            }
            init_log.push(name.to_string());
        }
        if let Some(f) = flow.as_mut() {
            if f.cfg.formulation == Formulation::VarDens {
                f.props = Some(match &phase {
                    Some(p) => (p.vars.rho, p.vars.mu),
                    None => (
                        reg.ensure("mph_rho", Centering::Center, Persistence::Scratch)?,
                        reg.ensure("mph_mu", Centering::Center, Persistence::Scratch)?,
                    ),
                });
            }
        }
        if let Some(h) = &heat {
            if h.cfg.kind == DiffusionKind::Variable && phase.is_none() {
                return Err(HeatError::MissingPhase.into());
            }
        }
        let heaters = match heater_text {
            Some(text) => sourceterms::parse_heaters(&text, &domain, params.real_or("htr_tempWall", 1.0))?,
            None => Vec::new(),
        };
        if let Some(b) = body.as_mut() {
            let file = params.string_or("sm_bodyFile", "");
            if !file.is_empty() {
                let kin = Kinematics {
                    velocity: [
                        params.real_or("sm_velX", 0.0),
                        params.real_or("sm_velY", 0.0),
                        params.real_or("sm_velZ", 0.0),
                    ],
                    omega: params.real_or("sm_omega", 0.0),
                };
                let text = read_text(&resolve_file(&params, file))?;
                b.body = Some(LagrangianBody::parse(&text, domain.dims, kin)?);
            }
        }

        let dt = params.real_or("dr_dt", 1e-3);
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(bad("dr_dt", format!("must be positive, got {dt}")));
        }
        let tmax = params.real_or("tmax", 1.0);
        let state = EvolutionState { nstep: 0, time: 0.0, dt, nend: count(&params, "nend", 100)?, tmax };
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| DriverError::Pool(e.to_string()))?;
        let grid = BlockGrid::new(domain, reg)?;
        let mut sim = Simulation {
            manifest,
            params,
            grid,
            state,
            enabled,
            flow,
            heat,
            phase,
            body,
            outlet,
            heaters,
            application,
            init_log,
            pool,
            workers,
            output_dir: PathBuf::from("."),
            trace: None,
            first_step: true,
            poisson: None,
            start_step: 0,
            last_checkpoint: None,
            timers: BTreeMap::new(),
            wall: Instant::now(),
            max_divergence: 0.0,
            poisson_iterations: 0,
            redistance_passes: 0,
            outputs: Vec::new(),
        };
        if let Some((rho, mu)) = sim.flow.as_ref().and_then(|f| f.props) {
            if sim.phase.is_none() {
                for t in sim.grid.tiles_mut() {
                    t.field_mut(rho).fill(1.0);
                    t.field_mut(mu).fill(1.0);
                }
            }
        }
        init(&mut sim)?;
        sim.init_log.push(app_path);
        if let Some(b) = &sim.body {
            if b.body.is_none() {
                return Err(bad("sm_bodyFile", "immersed boundary enabled but no body given"));
            }
        }
        sim.map_body()?;
        if let Some(f) = &sim.flow {
            let vars = f.vars.clone();
            sim.grid.fill_guard_ids(&vars.vel[..sim.grid.dims()]);
            for t in sim.grid.tiles_mut() {
                incompns::face_to_center(t, &vars);
            }
        }
        Ok(sim)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Directory that receives checkpoint and plot files.
    pub fn set_output_dir(&mut self, dir: impl Into<PathBuf>) {
        self.output_dir = dir.into();
    }

    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    /// Starts recording the operation sequence as `(step, op)` pairs.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[(usize, &'static str)] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn log(&mut self, op: &'static str) {
        let step = self.state.nstep;
        if let Some(t) = self.trace.as_mut() {
            t.push((step, op));
        }
    }

    fn time_phase(&mut self, name: &str, start: Instant) {
        *self.timers.entry(name.to_string()).or_insert(0.0) += start.elapsed().as_secs_f64();
    }

    fn basenm(&self) -> String {
        self.params.string_or("basenm", "INS_Simulation_").to_string()
    }

    fn checkpoint_interval(&self) -> usize {
        self.params.int_or("checkpointFileIntervalStep", 0).max(0) as usize
    }

    fn plot_interval(&self) -> usize {
        self.params.int_or("plotFileIntervalStep", 0).max(0) as usize
    }

    /// Path of the checkpoint written at `step`.
    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        let k = self.checkpoint_interval();
        let n = if k > 0 { step.div_ceil(k) } else { usize::from(step > 0) };
        self.output_dir.join(io::checkpoint_name(&self.basenm(), n))
    }

    /// Restores the state stored in a checkpoint. The first step after a
    /// restart uses forward Euler.
    pub fn restart(&mut self, path: &Path) -> Result<(), DriverError> {
        let chk = Checkpoint::read(path)?;
        chk.restore(&mut self.grid)?;
        self.state.nstep = chk.header.step as usize;
        self.state.time = chk.header.time;
        self.start_step = self.state.nstep;
        self.last_checkpoint = Some(self.state.nstep);
        self.first_step = true;
        if let Some(b) = self.body.as_mut().and_then(|b| b.body.as_mut()) {
            b.set_time(chk.header.time);
        }
        self.map_body()?;
        Ok(())
    }

    pub(crate) fn map_body(&mut self) -> Result<(), DriverError> {
        let Some(unit) = &self.body else { return Ok(()) };
        let Some(body) = &unit.body else { return Ok(()) };
        let vars = unit.vars;
        self.pool.install(|| {
            self.grid
                .tiles_slice_mut()
                .par_iter_mut()
                .try_for_each(|t| bodies::map_to_levelset(body, t, &vars))
        })?;
        Ok(())
    }

    fn write_checkpoint(&mut self) -> Result<PathBuf, DriverError> {
        let path = self.checkpoint_path(self.state.nstep);
        Checkpoint::capture_checkpoint(&self.grid, self.state.nstep as u64, self.state.time).write(&path)?;
        self.last_checkpoint = Some(self.state.nstep);
        self.outputs.push(path.display().to_string());
        self.log(ops::WRITE_CHECKPOINT);
        Ok(path)
    }

    fn write_plotfile(&mut self) -> Result<(), DriverError> {
        let mut ids = Vec::new();
        for i in 1..=4 {
            let name = self.params.string_or(&format!("plot_var_{i}"), "none");
            if name != "none" {
                ids.push(self.grid.var(name)?);
            }
        }
        if ids.is_empty() {
            return Ok(());
        }
        let n = self.state.nstep / self.plot_interval().max(1);
        let path = self.output_dir.join(io::plot_name(&self.basenm(), n));
        Checkpoint::capture(&self.grid, &ids, self.state.nstep as u64, self.state.time).write(&path)?;
        self.outputs.push(path.display().to_string());
        self.log(ops::WRITE_PLOTFILE);
        Ok(())
    }

    /// Writes the initial checkpoint when periodic checkpoints are on.
    pub fn write_initial_output(&mut self) -> Result<(), DriverError> {
        if self.checkpoint_interval() > 0 && self.last_checkpoint != Some(self.state.nstep) {
            self.write_checkpoint()?;
        }
        Ok(())
    }

    /// Cell coefficient of the pressure equation.
    fn beta(&self) -> Vec<f64> {
        let n = self.grid.domain().global_cells();
        let mut beta = vec![1.0; n[0] * n[1] * n[2]];
        if let Some((rho, _)) = self.flow.as_ref().and_then(|f| f.props) {
            for (b, r) in beta.iter_mut().zip(self.grid.gather(rho).data) {
                *b = 1.0 / r;
            }
        }
        if let Some(unit) = &self.body {
            for (b, l) in beta.iter_mut().zip(self.grid.gather(unit.vars.lmda).data) {
                if l <= 0.0 {
                    *b = unit.solid_beta;
                }
            }
        }
        beta
    }

    fn operator(&mut self) -> Result<(), DriverError> {
        let beta = self.beta();
        if self.poisson.as_ref().is_some_and(|(b, _)| *b == beta) {
            return Ok(());
        }
        let g = GlobalField { n: self.grid.domain().global_cells(), data: beta.clone() };
        let op = PoissonOperator::new(self.grid.domain(), &g).map_err(FlowError::from)?;
        self.poisson = Some((beta, op));
        Ok(())
    }

    /// Advances one step through the fixed operation sequence.
    pub fn step(&mut self) -> Result<(), DriverError> {
        let dt = self.state.dt;
        let first = self.first_step;
        let dims = self.grid.dims();
        let domain = self.grid.domain().clone();
        let flow = self.flow.clone();
        let heat = self.heat.clone();
        let phase = self.phase.clone();
        let body = self.body.clone();
        let outlet = self.outlet;
        let heaters = std::mem::take(&mut self.heaters);

        let t0 = Instant::now();
        let mut fill: Vec<VarId> = Vec::new();
        if let Some(f) = &flow {
            fill.extend_from_slice(&f.vars.vel[..dims]);
        }
        if let Some(p) = &phase {
            fill.push(p.vars.phi);
        }
        if let Some(h) = &heat {
            fill.push(h.vars.temp);
        }
        self.grid.fill_guard_ids(&fill);
        self.log(ops::FILL_GUARD_CELLS);
        if let Some(h) = &heat {
            let temp = h.vars.temp;
            let inflow = self.enabled.flow;
            for t in self.grid.tiles_mut() {
                sourceterms::heater_apply(t, temp, &heaters, &domain);
                if inflow {
                    sourceterms::inflow_temperature(t, temp, &domain, 0.0);
                }
            }
            if !heaters.is_empty() {
                self.log(ops::HEATER_APPLY);
            }
        }
        if let Some(p) = &phase {
            self.pool.install(|| {
                self.grid
                    .tiles_slice_mut()
                    .par_iter_mut()
                    .try_for_each(|t| multiphase::set_properties(t, &p.vars, &p.cfg))
            })?;
            if p.cfg.inv_weber > 0.0 {
                self.grid.fill_guard_ids(&[p.vars.curv]);
            }
            self.log(ops::MPH_SET_PROPERTIES);
        }
        self.time_phase("guard_fill", t0);

        let t1 = Instant::now();
        let phase1 = |t: &mut Tile| -> Result<(), DriverError> {
            if let Some(f) = &flow {
                incompns::accumulate_rhs(t, &f.vars, &f.cfg, f.props)?;
            }
            if let Some(h) = &heat {
                let fv = if h.advect { flow.as_ref().map(|f| &f.vars) } else { None };
                let ph = phase.as_ref().map(|p| PhaseRef { phi: p.vars.phi, eps: p.cfg.eps(t.dx) });
                heatad::heat_rhs(t, &h.vars, &h.cfg, fv, ph)?;
                if let Some(f) = &flow {
                    heatad::buoyancy(t, &f.vars, &h.vars, &h.cfg, f.cfg.grav[1]);
                }
            }
            if let Some(f) = &flow {
                if let Some(p) = &phase {
                    multiphase::vel_forcing(t, &f.vars, &p.vars, &p.cfg);
                }
                if let Some(o) = &outlet {
                    sourceterms::outlet_forcing(t, &f.vars, o, &domain);
                }
                if let Some(b) = body.as_ref().and_then(|b| b.body.as_ref().map(|l| (b.vars, l))) {
                    bodies::ib_forcing(t, &f.vars, &b.0, b.1, dt, first);
                }
                incompns::predictor(t, &f.vars, dt, first);
            }
            if let Some(h) = &heat {
                heatad::heat_advance(t, &h.vars, dt, first);
            }
            Ok(())
        };
        let res = self
            .pool
            .install(|| self.grid.tiles_slice_mut().par_iter_mut().try_for_each(phase1));
        self.heaters = heaters;
        res?;
        if flow.is_some() {
            self.log(ops::INS_ADVECTION);
            self.log(ops::INS_DIFFUSION);
        }
        if let Some(h) = &heat {
            self.log(ops::HEAT_RHS);
            if flow.is_some() && h.cfg.buoyancy != 0.0 {
                self.log(ops::HT_BUOYANCY);
            }
        }
        if flow.is_some() {
            if phase.as_ref().is_some_and(|p| p.cfg.inv_weber > 0.0) {
                self.log(ops::MPH_VEL_FORCING);
            }
            if outlet.is_some() {
                self.log(ops::OUTLET_FORCING);
            }
            if body.is_some() {
                self.log(ops::IB_FORCING);
            }
            self.log(ops::INS_PREDICTOR);
        }
        if heat.is_some() {
            self.log(ops::HEAT_ADVANCE);
        }
        self.time_phase("phase1", t1);

        let t2 = Instant::now();
        if let Some(f) = &flow {
            self.grid.fill_guard_ids(&f.vars.vel[..dims]);
            self.operator()?;
            let op = &self.poisson.as_ref().expect("operator built").1;
            let proj = match incompns::project(&mut self.grid, &f.vars, op, dt, &f.cfg.poisson) {
                Ok(p) => p,
                Err(FlowError::Poisson(e)) => {
                    let dump = self.output_dir.join(format!("{}chk_abort", self.basenm()));
                    Checkpoint::capture_checkpoint(&self.grid, self.state.nstep as u64, self.state.time)
                        .write(&dump)?;
                    return Err(DriverError::Aborted { step: self.state.nstep + 1, dump, source: e });
                }
                Err(e) => return Err(e.into()),
            };
            self.poisson_iterations += proj.report.iterations;
            self.max_divergence = self.max_divergence.max(proj.divergence_after);
            self.log(ops::INS_PROJECT);
            if self.params.bool_or("dr_debug", false) {
                let bound = 10.0 * f.cfg.poisson.tol;
                if proj.divergence_after > bound {
                    return Err(DriverError::DivergenceBound {
                        step: self.state.nstep + 1,
                        value: proj.divergence_after,
                        bound,
                    });
                }
            }
            self.grid.fill_guard_ids(&f.vars.vel[..dims]);
        }
        self.time_phase("projection", t2);

        let t3 = Instant::now();
        if let (Some(f), Some(p)) = (&flow, &phase) {
            self.pool.install(|| {
                self.grid
                    .tiles_slice_mut()
                    .par_iter_mut()
                    .for_each(|t| multiphase::advect(t, &f.vars, &p.vars, dt, first))
            });
            self.log(ops::MPH_ADVECT);
            if multiphase::redistance_if_due(&mut self.grid, &p.vars, &p.cfg, self.state.nstep + 1)? {
                self.redistance_passes += 1;
            }
            self.log(ops::MPH_REDISTANCE);
        }
        if let Some(f) = &flow {
            self.pool.install(|| {
                self.grid
                    .tiles_slice_mut()
                    .par_iter_mut()
                    .for_each(|t| incompns::face_to_center(t, &f.vars))
            });
            self.log(ops::INS_FACE_TO_CENTER);
        }
        self.time_phase("phase2", t3);

        let t4 = Instant::now();
        self.state.nstep += 1;
        self.state.time = self.state.nstep as f64 * dt;
        self.first_step = false;
        let moving = self
            .body
            .as_ref()
            .and_then(|b| b.body.as_ref())
            .is_some_and(|b| b.kinematics.velocity != [0.0; 3] || b.kinematics.omega != 0.0);
        if let Some(b) = self.body.as_mut().and_then(|b| b.body.as_mut()) {
            b.set_time(self.state.time);
            self.trace_step_op(ops::BODY_ADVANCE);
            if moving {
                self.map_body()?;
            }
            self.trace_step_op(ops::IB_MAP_TO_LEVELSET);
        }
        self.time_phase("bodies", t4);

        let t5 = Instant::now();
        let k = self.checkpoint_interval();
        if k > 0 && self.state.nstep % k == 0 {
            self.write_checkpoint()?;
            self.first_step = true;
        }
        let kp = self.plot_interval();
        if kp > 0 && self.state.nstep % kp == 0 {
            self.write_plotfile()?;
        }
        self.time_phase("io", t5);
        Ok(())
    }

    /// Logs against the step that is ending.
    fn trace_step_op(&mut self, op: &'static str) {
        let step = self.state.nstep - 1;
        if let Some(t) = self.trace.as_mut() {
            t.push((step, op));
        }
    }

    /// Steps until `nend` or `tmax`.
    pub fn evolve(&mut self) -> Result<(), DriverError> {
        while !self.state.finished() {
            self.step()?;
        }
        Ok(())
    }

    /// Writes the final checkpoint if the last step has none, and returns
    /// the run summary.
    pub fn finalize(&mut self) -> Result<RunReport, DriverError> {
        if self.last_checkpoint != Some(self.state.nstep) {
            self.write_checkpoint()?;
        }
        Ok(RunReport {
            application: self.application.clone(),
            steps: self.state.nstep - self.start_step,
            start_step: self.start_step,
            final_step: self.state.nstep,
            time: self.state.time,
            dt: self.state.dt,
            workers: self.workers,
            wall_seconds: self.wall.elapsed().as_secs_f64(),
            phase_seconds: self.timers.clone(),
            max_divergence: self.max_divergence,
            poisson_iterations: self.poisson_iterations,
            redistance_passes: self.redistance_passes,
            outputs: self.outputs.clone(),
        })
    }

    /// Last written checkpoint path, if any.
    pub fn last_checkpoint_path(&self) -> Option<PathBuf> {
        self.last_checkpoint.map(|s| self.checkpoint_path(s))
    }
}

#[cfg(test)]
mod tests;
