//! Level-set interface: transport of φ (positive in gas), periodic
//! redistancing, phase-blended density/viscosity ratios and surface-tension
//! forcing.

use thiserror::Error;

use crate::grid::{BlockGrid, Centering, Field, FieldRegistry, GridError, Persistence, Tile, VarId};
use crate::incompns::{face_beta, FlowVars};
use crate::stencils::levelset::{has_interface, minmod};
use crate::stencils::{curvature, integrate_ab2, redistance_step, smoothed_heaviside, velocity_at, RedistanceOptions, StencilError};

#[derive(Debug, Error)]
pub enum MultiphaseError {
    #[error("{name} must lie in (0, 1], got {value}")]
    BadRatio { name: &'static str, value: f64 },
    #[error("mph_invWeber must be non-negative, got {0}")]
    BadWeber(f64),
    #[error("smearing width must be positive, got {0}")]
    BadSmear(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiphaseConfig {
    pub rho_gas: f64,
    pub mu_gas: f64,
    pub inv_weber: f64,
    /// Half-width of the smoothing band in cells.
    pub smear_cells: f64,
    /// Redistance every this many steps; 0 disables.
    pub redistance_every: usize,
    pub redistance_iters: usize,
}

impl Default for MultiphaseConfig {
    fn default() -> Self {
        MultiphaseConfig {
            rho_gas: 1.0,
            mu_gas: 1.0,
            inv_weber: 0.0,
            smear_cells: 2.5,
            redistance_every: 5,
            redistance_iters: 20,
        }
    }
}

impl MultiphaseConfig {
    pub fn validate(&self) -> Result<(), MultiphaseError> {
        for (name, value) in [("mph_rhoGas", self.rho_gas), ("mph_muGas", self.mu_gas)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(MultiphaseError::BadRatio { name, value });
            }
        }
        if !(self.inv_weber >= 0.0) {
            return Err(MultiphaseError::BadWeber(self.inv_weber));
        }
        if !(self.smear_cells > 0.0) {
            return Err(MultiphaseError::BadSmear(self.smear_cells));
        }
        Ok(())
    }

    pub fn eps(&self, dx: f64) -> f64 {
        self.smear_cells * dx
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseVars {
    pub phi: VarId,
    pub rho: VarId,
    pub mu: VarId,
    pub curv: VarId,
    pub rhs_prev: VarId,
}

impl PhaseVars {
    pub fn register(reg: &mut FieldRegistry) -> Result<Self, GridError> {
        let c = Centering::Center;
        Ok(PhaseVars {
            phi: reg.ensure("dfun", c, Persistence::Checkpoint)?,
            rho: reg.ensure("mph_rho", c, Persistence::Scratch)?,
            mu: reg.ensure("mph_mu", c, Persistence::Scratch)?,
            curv: reg.ensure("mph_curv", c, Persistence::Scratch)?,
            rhs_prev: reg.ensure("mph_rhs_prev", c, Persistence::Scratch)?,
        })
    }
}

/// `(1−H)·liquid + H·gas`, so pure phases are reproduced exactly.
#[inline]
pub fn blend(liquid: f64, gas: f64, h: f64) -> f64 {
    (1.0 - h) * liquid + h * gas
}

/// Density and viscosity ratios on every point of the tile, guards included.
/// Curvature is evaluated on owned cells, corrected to the interface.
pub fn set_properties(tile: &mut Tile, vars: &PhaseVars, cfg: &MultiphaseConfig) -> Result<(), MultiphaseError> {
    let eps = cfg.eps(tile.dx);
    let phi = tile.field(vars.phi).clone();
    let mut rho = Field::zeros_like(&phi);
    let mut mu = Field::zeros_like(&phi);
    for ((r, m), &f) in rho.data_mut().iter_mut().zip(mu.data_mut()).zip(phi.data()) {
        let h = smoothed_heaviside(f, eps);
        *r = blend(1.0, cfg.rho_gas, h);
        *m = blend(1.0, cfg.mu_gas, h);
    }
    tile.replace(vars.rho, rho);
    tile.replace(vars.mu, mu);
    if cfg.inv_weber > 0.0 {
        let mut k = curvature(&phi, tile.dx)?;
        let d = (tile.dims - 1) as f64;
        let pd = phi.data();
        for (kv, &f) in k.data_mut().iter_mut().zip(pd) {
            let den = 1.0 - f * *kv / d;
            if den > 0.5 {
                *kv /= den;
            }
        }
        tile.replace(vars.curv, k);
    }
    Ok(())
}

/// Adds the balanced-force surface-tension acceleration
/// `−σ κ_f (H_R − H_L)/Δx · β_f` to the momentum RHS. Curvature guards
/// must be filled.
pub fn vel_forcing(tile: &mut Tile, flow: &FlowVars, vars: &PhaseVars, cfg: &MultiphaseConfig) {
    if cfg.inv_weber == 0.0 {
        return;
    }
    let dx = tile.dx;
    let eps = cfg.eps(dx);
    for a in 0..tile.dims {
        let phi = tile.field(vars.phi);
        let kap = tile.field(vars.curv);
        let rho = tile.field(vars.rho);
        let mut add = Vec::new();
        tile.field(flow.rhs[a]).for_each_interior(|p, n| {
            let mut l = p;
            l[a] -= 1;
            let jump = smoothed_heaviside(phi.get(p), eps) - smoothed_heaviside(phi.get(l), eps);
            if jump != 0.0 {
                let kf = 0.5 * (kap.get(p) + kap.get(l));
                add.push((n, -cfg.inv_weber * kf * jump / dx * face_beta(rho, a, p)));
            }
        });
        let r = tile.field_mut(flow.rhs[a]).data_mut();
        for (n, v) in add {
            r[n] += v;
        }
    }
}

/// Second-order ENO upwind `−u·∇φ` with cell-averaged face velocities.
pub fn advect_eno2(phi: &Field, vel: &[&Field], dx: f64) -> Field {
    let dims = phi.dims();
    let s = phi.strides();
    let f = phi.data();
    let mut vals = Vec::new();
    phi.for_each_interior(|p, n| {
        let mut t = 0.0;
        for b in 0..dims {
            let w = velocity_at(vel[b], b, Centering::Center, p);
            if w == 0.0 {
                continue;
            }
            let sb = s[b];
            let d2 = |m: usize| f[m + sb] - 2.0 * f[m] + f[m - sb];
            let g = if w > 0.0 {
                (f[n] - f[n - sb] + 0.5 * minmod(d2(n - sb), d2(n))) / dx
            } else {
                (f[n + sb] - f[n] - 0.5 * minmod(d2(n), d2(n + sb))) / dx
            };
            t -= w * g;
        }
        vals.push((n, t));
    });
    let mut out = Field::zeros_like(phi);
    let od = out.data_mut();
    for (n, v) in vals {
        od[n] = v;
    }
    out
}

/// AB2 transport of φ by the (guard-filled) face velocity.
pub fn advect(tile: &mut Tile, flow: &FlowVars, vars: &PhaseVars, dt: f64, first_step: bool) {
    let vel: Vec<&Field> = (0..tile.dims).map(|a| tile.field(flow.vel[a])).collect();
    let rhs = advect_eno2(tile.field(vars.phi), &vel, tile.dx);
    let prev = tile.field(vars.rhs_prev).clone();
    integrate_ab2(tile.field_mut(vars.phi), &rhs, &prev, dt, first_step);
    tile.replace(vars.rhs_prev, rhs);
}

/// Reinitializes φ on every block with guard exchange between sweeps.
pub fn redistance_grid(grid: &mut BlockGrid, phi: VarId, opts: &RedistanceOptions) -> Result<(), MultiphaseError> {
    grid.fill_guard_ids(&[phi]);
    if !grid.tiles().any(|t| has_interface(t.field(phi))) {
        return Err(StencilError::NoInterface.into());
    }
    let phi0: Vec<Field> = grid.tiles().map(|t| t.field(phi).clone()).collect();
    let dx = grid.dx();
    for _ in 0..opts.iters {
        grid.fill_guard_ids(&[phi]);
        for (t, p0) in grid.tiles_mut().zip(&phi0) {
            let next = redistance_step(t.field(phi), p0, dx, opts.band);
            t.replace(phi, next);
        }
    }
    grid.fill_guard_ids(&[phi]);
    Ok(())
}

/// Runs [`redistance_grid`] when `step` falls on the configured cadence.
/// Returns whether it ran.
pub fn redistance_if_due(grid: &mut BlockGrid, vars: &PhaseVars, cfg: &MultiphaseConfig, step: usize) -> Result<bool, MultiphaseError> {
    if cfg.redistance_every == 0 || step % cfg.redistance_every != 0 {
        return Ok(false);
    }
    let opts = RedistanceOptions { iters: cfg.redistance_iters, band: f64::INFINITY };
    redistance_grid(grid, vars.phi, &opts)?;
    Ok(true)
}

/// Liquid area (volume in 3-D) `Σ (1 − H_ε(φ)) Δx^d`.
pub fn liquid_volume(grid: &BlockGrid, phi: VarId, eps: f64) -> f64 {
    let cell = grid.dx().powi(grid.dims() as i32);
    grid.tiles()
        .map(|t| {
            let f = t.field(phi);
            let mut s = 0.0;
            f.for_each_interior(|p, _| s += 1.0 - smoothed_heaviside(f.get(p), eps));
            s * cell
        })
        .sum()
}

/// Centroid of the liquid phase.
pub fn liquid_centroid(grid: &BlockGrid, phi: VarId, eps: f64) -> [f64; 3] {
    let (mut m, mut c) = (0.0, [0.0; 3]);
    for t in grid.tiles() {
        let f = t.field(phi);
        for p in f.interior_points() {
            let w = 1.0 - smoothed_heaviside(f.get(p), eps);
            let x = t.coord(phi, p);
            m += w;
            for a in 0..3 {
                c[a] += w * x[a];
            }
        }
    }
    c.map(|v| v / m)
}

/// Seeds φ as the signed distance to a sphere; `gas_inside` selects a bubble
/// rather than a droplet.
pub fn seed_sphere(tile: &mut Tile, phi: VarId, center: [f64; 3], radius: f64, gas_inside: bool) {
    let dims = tile.dims;
    let lo = tile.lo;
    let dx = tile.dx;
    let f = tile.field_mut(phi);
    let pts: Vec<_> = f.points_with_margin(f.guards()[0]).collect();
    for p in pts {
        let x = f.coord(p, lo, dx);
        let r = (0..dims).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt();
        let d = r - radius;
        f.set(p[0], p[1], p[2], if gas_inside { -d } else { d });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BlockShape, DomainSpec};

    fn fig16() -> MultiphaseConfig {
        MultiphaseConfig { rho_gas: 0.001, mu_gas: 0.02, inv_weber: 0.004, ..Default::default() }
    }

    fn single_cell_tile(phi_value: f64) -> (Tile, PhaseVars) {
        let mut reg = FieldRegistry::new();
        let vars = PhaseVars::register(&mut reg).unwrap();
        let d = DomainSpec::unit(2, [1, 1, 1], [4, 4, 1]);
        let mut g = BlockGrid::new(d, reg).unwrap();
        g.tiles_mut().next().unwrap().field_mut(vars.phi).fill(phi_value);
        (g.tiles_slice()[0].clone(), vars)
    }

    #[test]
    fn property_limits() {
        let cfg = fig16();
        let eps = cfg.eps(0.25);
        for (phi, want) in [(-10.0 * eps, 1.0), (10.0 * eps, 0.001), (0.0, (1.0 + 0.001) / 2.0)] {
            let (mut t, vars) = single_cell_tile(phi);
            set_properties(&mut t, &vars, &cfg).unwrap();
            let r = t.field(vars.rho).at(3, 3, 0);
            assert!((r - want).abs() <= 1e-12, "{phi}: {r}");
        }
        let (mut t, vars) = single_cell_tile(10.0 * eps);
        set_properties(&mut t, &vars, &cfg).unwrap();
        assert_eq!(t.field(vars.rho).at(3, 3, 0), 0.001);
        assert_eq!(t.field(vars.mu).at(3, 3, 0), 0.02);
    }

    #[test]
    fn properties_are_monotone_and_bounded() {
        let cfg = fig16();
        let mut last = f64::INFINITY;
        for i in -100..=100 {
            let h = smoothed_heaviside(i as f64 * 0.001, 0.05);
            let r = blend(1.0, cfg.rho_gas, h);
            assert!(r <= last && (cfg.rho_gas..=1.0).contains(&r));
            last = r;
        }
    }

    #[test]
    fn config_validation() {
        assert!(fig16().validate().is_ok());
        assert!(MultiphaseConfig { rho_gas: 0.0, ..fig16() }.validate().is_err());
        assert!(MultiphaseConfig { mu_gas: 1.5, ..fig16() }.validate().is_err());
        assert!(MultiphaseConfig { inv_weber: -1.0, ..fig16() }.validate().is_err());
    }

    fn phase_grid(n: usize) -> (BlockGrid, FlowVars, PhaseVars) {
        let mut reg = FieldRegistry::new();
        let flow = FlowVars::register(&mut reg).unwrap();
        let vars = PhaseVars::register(&mut reg).unwrap();
        let d = DomainSpec::unit(2, [2, 2, 1], [n / 2, n / 2, 1]);
        (BlockGrid::new(d, reg).unwrap(), flow, vars)
    }

    #[test]
    fn flat_interface_has_no_surface_tension() {
        let (mut g, flow, vars) = phase_grid(32);
        let dx = g.dx();
        for t in g.tiles_mut() {
            let lo = t.lo;
            let f = t.field_mut(vars.phi);
            let pts: Vec<_> = f.points_with_margin(2).collect();
            for p in pts {
                let y = f.coord(p, lo, dx)[1];
                f.set(p[0], p[1], p[2], y - 0.5);
            }
        }
        let cfg = fig16();
        for t in g.tiles_mut() {
            set_properties(t, &vars, &cfg).unwrap();
        }
        g.fill_guard_ids(&[vars.curv]);
        for t in g.tiles_mut() {
            vel_forcing(t, &flow, &vars, &cfg);
            for a in 0..2 {
                assert!(t.field(flow.rhs[a]).max_abs_interior() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_weber_adds_nothing() {
        let (mut g, flow, vars) = phase_grid(16);
        for t in g.tiles_mut() {
            seed_sphere(t, vars.phi, [0.5, 0.5, 0.0], 0.25, true);
            set_properties(t, &vars, &MultiphaseConfig::default()).unwrap();
            vel_forcing(t, &flow, &vars, &MultiphaseConfig::default());
            assert_eq!(t.field(flow.rhs[0]).max_abs_interior(), 0.0);
        }
    }

    #[test]
    fn circle_force_points_into_gas_bubble() {
        let (mut g, flow, vars) = phase_grid(32);
        let cfg = fig16();
        for t in g.tiles_mut() {
            seed_sphere(t, vars.phi, [0.5, 0.5, 0.0], 0.25, true);
            set_properties(t, &vars, &cfg).unwrap();
        }
        g.fill_guard_ids(&[vars.curv]);
        for t in g.tiles_mut() {
            vel_forcing(t, &flow, &vars, &cfg);
        }
        let u = g.gather(flow.rhs[0]);
        // Face at x = 0.75 (right interface) pushes toward the centre.
        let j = 16;
        let i = 24;
        assert!(u.at(i, j, 0) < 0.0);
        assert!(u.at(32 - i, j, 0) > 0.0);
    }

    #[test]
    fn still_fluid_leaves_phi_unchanged() {
        let (mut g, flow, vars) = phase_grid(16);
        for t in g.tiles_mut() {
            seed_sphere(t, vars.phi, [0.5, 0.5, 0.0], 0.25, false);
        }
        let before = g.gather(vars.phi);
        for t in g.tiles_mut() {
            advect(t, &flow, &vars, 0.01, true);
        }
        assert_eq!(g.gather(vars.phi), before);
    }

    #[test]
    fn eno2_is_exact_for_linear_fields() {
        let shape = BlockShape::new(2, [8, 8, 1], 2);
        let mut phi = Field::zeros(Centering::Center, shape);
        let mut u = Field::zeros(Centering::FaceX, shape);
        let mut v = Field::zeros(Centering::FaceY, shape);
        let pts: Vec<_> = phi.points_with_margin(2).collect();
        for p in pts {
            let x = phi.coord(p, [0.0; 3], 0.1);
            phi.set(p[0], p[1], p[2], 2.0 * x[0] - 3.0 * x[1]);
        }
        for (w, f) in [(1.5, &mut u), (-0.5, &mut v)] {
            f.fill(w);
        }
        let t = advect_eno2(&phi, &[&u, &v], 0.1);
        for p in t.interior_points() {
            assert!((t.get(p) - (-(1.5 * 2.0) - (-0.5 * -3.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn cadence() {
        let (mut g, _, vars) = phase_grid(16);
        for t in g.tiles_mut() {
            seed_sphere(t, vars.phi, [0.5, 0.5, 0.0], 0.25, false);
        }
        let cfg = MultiphaseConfig { redistance_every: 3, ..Default::default() };
        assert!(!redistance_if_due(&mut g, &vars, &cfg, 4).unwrap());
        assert!(redistance_if_due(&mut g, &vars, &cfg, 6).unwrap());
        let every = MultiphaseConfig { redistance_every: 1, ..Default::default() };
        assert!((1..5).all(|s| redistance_if_due(&mut g, &vars, &every, s).unwrap()));
    }

    #[test]
    fn redistance_restores_unit_gradient_across_blocks() {
        let (mut g, _, vars) = phase_grid(128);
        for t in g.tiles_mut() {
            seed_sphere(t, vars.phi, [0.5, 0.5, 0.0], 0.25, false);
            t.field_mut(vars.phi).data_mut().iter_mut().for_each(|x| *x *= 2.0);
        }
        let opts = RedistanceOptions { iters: 20, band: f64::INFINITY };
        redistance_grid(&mut g, vars.phi, &opts).unwrap();
        let dx = g.dx();
        for t in g.tiles() {
            let f = t.field(vars.phi);
            for p in f.interior_points() {
                let x = t.coord(vars.phi, p);
                if (((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() - 0.25).abs() > 5.0 * dx {
                    continue;
                }
                let gx = (f.at(p[0] + 1, p[1], 0) - f.at(p[0] - 1, p[1], 0)) / (2.0 * dx);
                let gy = (f.at(p[0], p[1] + 1, 0) - f.at(p[0], p[1] - 1, 0)) / (2.0 * dx);
                let n = (gx * gx + gy * gy).sqrt();
                assert!((0.95..=1.05).contains(&n), "{n} at {p:?}");
            }
        }
    }
}
