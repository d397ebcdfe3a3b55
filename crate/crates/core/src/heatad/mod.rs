//! Temperature transport: optional upwind advection by the flow plus
//! flux-form diffusion with a constant or phase-blended diffusivity.

use thiserror::Error;

use crate::grid::{Centering, Field, FieldRegistry, GridError, Persistence, Tile, VarId};
use crate::incompns::FlowVars;
use crate::multiphase::blend;
use crate::stencils::{advect_upwind, diffuse_central, integrate_ab2, smoothed_heaviside, Diffusivity, StencilError};

#[derive(Debug, Error)]
pub enum HeatError {
    #[error("thermal diffusivity must be non-negative, got {0}")]
    BadDiffusivity(f64),
    #[error("variable diffusion needs the level-set field")]
    MissingPhase,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffusionKind {
    Constant,
    Variable,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalConfig {
    pub alpha: f64,
    /// Gas-to-liquid diffusivity ratio for variable diffusion.
    pub alpha_gas: f64,
    pub kind: DiffusionKind,
    pub buoyancy: f64,
}

impl ThermalConfig {
    pub fn validate(&self) -> Result<(), HeatError> {
        for v in [self.alpha, self.alpha_gas] {
            if !(v >= 0.0) {
                return Err(HeatError::BadDiffusivity(v));
            }
        }
        Ok(())
    }

    /// Largest stable explicit step.
    pub fn stable_dt(&self, dx: f64, dims: usize) -> f64 {
        let a = match self.kind {
            DiffusionKind::Constant => self.alpha,
            DiffusionKind::Variable => self.alpha * self.alpha_gas.max(1.0),
        };
        if a == 0.0 {
            f64::INFINITY
        } else {
            dx * dx / (2.0 * dims as f64 * a)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatVars {
    pub temp: VarId,
    pub rhs: VarId,
    pub rhs_prev: VarId,
}

impl HeatVars {
    pub fn register(reg: &mut FieldRegistry) -> Result<Self, GridError> {
        let c = Centering::Center;
        Ok(HeatVars {
            temp: reg.ensure("temp", c, Persistence::Checkpoint)?,
            rhs: reg.ensure("ht_rhs", c, Persistence::Scratch)?,
            rhs_prev: reg.ensure("ht_rhs_prev", c, Persistence::Scratch)?,
        })
    }
}

/// Level-set handle and smoothing width for variable diffusion.
#[derive(Clone, Copy, Debug)]
pub struct PhaseRef {
    pub phi: VarId,
    pub eps: f64,
}

/// `[−u·∇T] + ∇·(α∇T)` into the `rhs` scratch array. Advection is included
/// only when `flow` is given.
pub fn heat_rhs(tile: &mut Tile, vars: &HeatVars, cfg: &ThermalConfig, flow: Option<&FlowVars>, phase: Option<PhaseRef>) -> Result<(), HeatError> {
    let t = tile.field(vars.temp);
    let mut rhs = if cfg.alpha == 0.0 {
        Field::zeros_like(t)
    } else {
        match cfg.kind {
            DiffusionKind::Constant => diffuse_central(t, Diffusivity::Constant(cfg.alpha), tile.dx)?,
            DiffusionKind::Variable => {
                let ph = phase.ok_or(HeatError::MissingPhase)?;
                let phi = tile.field(ph.phi);
                let mut k = Field::zeros_like(phi);
                for (kv, &f) in k.data_mut().iter_mut().zip(phi.data()) {
                    *kv = cfg.alpha * blend(1.0, cfg.alpha_gas, smoothed_heaviside(f, ph.eps));
                }
                diffuse_central(t, Diffusivity::Cell(&k), tile.dx)?
            }
        }
    };
    if let Some(fv) = flow {
        let vel: Vec<&Field> = (0..tile.dims).map(|a| tile.field(fv.vel[a])).collect();
        let adv = advect_upwind(t, &vel, tile.dx)?;
        for (r, a) in rhs.data_mut().iter_mut().zip(adv.data()) {
            *r += a;
        }
    }
    tile.replace(vars.rhs, rhs);
    Ok(())
}

/// AB2 update of T; the current RHS becomes the history.
pub fn heat_advance(tile: &mut Tile, vars: &HeatVars, dt: f64, first_step: bool) {
    let now = tile.field(vars.rhs).clone();
    let prev = tile.field(vars.rhs_prev).clone();
    integrate_ab2(tile.field_mut(vars.temp), &now, &prev, dt, first_step);
    tile.replace(vars.rhs_prev, now);
}

/// Boussinesq term `−g_y·β·T` on vertical faces.
pub fn buoyancy(tile: &mut Tile, flow: &FlowVars, vars: &HeatVars, cfg: &ThermalConfig, grav_y: f64) {
    if cfg.buoyancy == 0.0 || grav_y == 0.0 {
        return;
    }
    let t = tile.field(vars.temp);
    let mut add = Vec::new();
    tile.field(flow.rhs[1]).for_each_interior(|p, n| {
        let mut l = p;
        l[1] -= 1;
        add.push((n, -grav_y * cfg.buoyancy * 0.5 * (t.get(p) + t.get(l))));
    });
    let r = tile.field_mut(flow.rhs[1]).data_mut();
    for (n, v) in add {
        r[n] += v;
    }
}

/// `Σ T Δx^d` over owned cells.
pub fn total_heat(tiles: &[Tile], temp: VarId) -> f64 {
    tiles
        .iter()
        .map(|t| {
            let f = t.field(temp);
            let mut s = 0.0;
            f.for_each_interior(|p, _| s += f.get(p));
            s * t.dx.powi(t.dims as i32)
        })
        .sum()
}
