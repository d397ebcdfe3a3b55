//! Fractional-step projection for incompressible flow on the staggered grid.
//!
//! Face velocities are advanced by an explicit predictor (advection,
//! viscous and body-force tendencies integrated with AB2), then projected
//! onto discretely divergence-free fields by a pressure Poisson solve.

use thiserror::Error;

use crate::grid::poisson::{PoissonError, PoissonOperator, PoissonOptions, PoissonReport};
use crate::grid::{BlockGrid, Centering, Field, FieldRegistry, GlobalField, GridError, Persistence, Tile, VarId};
use crate::stencils::{diffuse_central, integrate_ab2, Diffusivity, StencilError};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error(transparent)]
    Poisson(#[from] PoissonError),
    #[error("variable-density diffusion needs multiphase density and viscosity fields")]
    MissingProperties,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("inverse Reynolds number must be non-negative, got {0}")]
    BadViscosity(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    ConstDens,
    VarDens,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub inv_reynolds: f64,
    pub grav: [f64; 3],
    pub formulation: Formulation,
    pub poisson: PoissonOptions,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.inv_reynolds >= 0.0) {
            return Err(FlowError::BadViscosity(self.inv_reynolds));
        }
        Ok(())
    }
}

/// Handles to the flow variables on a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowVars {
    pub vel: [VarId; 3],
    pub pres: VarId,
    pub center: [VarId; 3],
    /// Accumulated predictor right-hand side of the current step.
    pub rhs: [VarId; 3],
    /// Right-hand side of the previous step, for AB2.
    pub rhs_prev: [VarId; 3],
}

pub const VELOCITY: [&str; 3] = ["uface", "vface", "wface"];
pub const CENTER_VELOCITY: [&str; 3] = ["velx", "vely", "velz"];

impl FlowVars {
    /// Registers any missing flow variable.
    pub fn register(reg: &mut FieldRegistry) -> Result<Self, GridError> {
        let mut vel = [VarId(0); 3];
        let mut center = [VarId(0); 3];
        let mut rhs = [VarId(0); 3];
        let mut rhs_prev = [VarId(0); 3];
        for a in 0..3 {
            vel[a] = reg.ensure(VELOCITY[a], Centering::face(a), Persistence::Checkpoint)?;
            center[a] = reg.ensure(CENTER_VELOCITY[a], Centering::Center, Persistence::Checkpoint)?;
        }
        let pres = reg.ensure("pres", Centering::Center, Persistence::Checkpoint)?;
        for a in 0..3 {
            rhs[a] = reg.ensure(&format!("ins_rhs_{a}"), Centering::face(a), Persistence::Scratch)?;
            rhs_prev[a] = reg.ensure(&format!("ins_rhs_prev_{a}"), Centering::face(a), Persistence::Scratch)?;
        }
        Ok(FlowVars { vel, pres, center, rhs, rhs_prev })
    }

    /// Resolves handles on an existing grid.
    pub fn lookup(grid: &BlockGrid) -> Result<Self, GridError> {
        let mut reg = grid.registry().clone();
        let before = reg.len();
        let vars = FlowVars::register(&mut reg)?;
        if reg.len() != before {
            return Err(GridError::UnknownVariable("ins_rhs_0".into()));
        }
        Ok(vars)
    }
}

fn step(p: [usize; 3], axis: usize, by: isize) -> [usize; 3] {
    let mut q = p;
    q[axis] = (q[axis] as isize + by) as usize;
    q
}

/// `−∇·(u u)` at each face component, central in divergence form.
pub fn momentum_advection(vel: &[&Field], dx: f64) -> Vec<Field> {
    let dims = vel[0].dims();
    let mut out = Vec::with_capacity(dims);
    for a in 0..dims {
        let ua = vel[a];
        let mut t = Field::zeros_like(ua);
        let mut vals = Vec::new();
        ua.for_each_interior(|p, n| {
            let right = 0.5 * (ua.get(p) + ua.get(step(p, a, 1)));
            let left = 0.5 * (ua.get(step(p, a, -1)) + ua.get(p));
            let mut div = right * right - left * left;
            for b in (0..dims).filter(|&b| b != a) {
                let ub = vel[b];
                let ua_top = 0.5 * (ua.get(p) + ua.get(step(p, b, 1)));
                let ua_bot = 0.5 * (ua.get(step(p, b, -1)) + ua.get(p));
                let pb = step(p, b, 1);
                let ub_top = 0.5 * (ub.get(step(pb, a, -1)) + ub.get(pb));
                let ub_bot = 0.5 * (ub.get(step(p, a, -1)) + ub.get(p));
                div += ua_top * ub_top - ua_bot * ub_bot;
            }
            vals.push((n, -div / dx));
        });
        let d = t.data_mut();
        for (n, v) in vals {
            d[n] = v;
        }
        out.push(t);
    }
    out
}

/// Face value of `1/ρ`: harmonic mean of the two adjacent cells.
#[inline]
pub fn face_beta(rho: &Field, axis: usize, face: [usize; 3]) -> f64 {
    let bl = 1.0 / rho.get(step(face, axis, -1));
    let br = 1.0 / rho.get(face);
    2.0 * bl * br / (bl + br)
}

/// Viscous coefficients for [`momentum_diffusion`].
#[derive(Clone, Copy, Debug)]
pub enum Viscosity<'a> {
    Const { inv_reynolds: f64 },
    /// Cell-centered viscosity and density ratios with filled guards.
    Var { inv_reynolds: f64, mu: &'a Field, rho: &'a Field },
}

/// Viscous tendency of each face component.
pub fn momentum_diffusion(vel: &[&Field], visc: Viscosity<'_>, dx: f64) -> Result<Vec<Field>, FlowError> {
    let dims = vel[0].dims();
    let mut out = Vec::with_capacity(dims);
    for a in 0..dims {
        let ua = vel[a];
        let t = match visc {
            Viscosity::Const { inv_reynolds } if inv_reynolds == 0.0 => Field::zeros_like(ua),
            Viscosity::Const { inv_reynolds } => diffuse_central(ua, Diffusivity::Constant(inv_reynolds), dx)?,
            Viscosity::Var { inv_reynolds, .. } if inv_reynolds == 0.0 => Field::zeros_like(ua),
            Viscosity::Var { inv_reynolds, mu, rho } => {
                let mut t = diffuse_central(ua, Diffusivity::Cell(mu), dx)?;
                let pts: Vec<_> = t.interior_points().collect();
                for p in pts {
                    let v = t.get(p) * inv_reynolds * face_beta(rho, a, p);
                    t.set(p[0], p[1], p[2], v);
                }
                t
            }
        };
        out.push(t);
    }
    Ok(out)
}

/// Evaluates advection and diffusion on one tile and stores the sum plus
/// gravity in the `rhs` scratch arrays.
pub fn accumulate_rhs(tile: &mut Tile, vars: &FlowVars, cfg: &FlowConfig, props: Option<(VarId, VarId)>) -> Result<(), FlowError> {
    let dims = tile.dims;
    let dx = tile.dx;
    let vel: Vec<&Field> = (0..dims).map(|a| tile.field(vars.vel[a])).collect();
    let adv = momentum_advection(&vel, dx);
    let visc = match (cfg.formulation, props) {
        (Formulation::ConstDens, _) => Viscosity::Const { inv_reynolds: cfg.inv_reynolds },
        (Formulation::VarDens, Some((rho, mu))) => Viscosity::Var {
            inv_reynolds: cfg.inv_reynolds,
            mu: tile.field(mu),
            rho: tile.field(rho),
        },
        (Formulation::VarDens, None) => return Err(FlowError::MissingProperties),
    };
    let diff = momentum_diffusion(&vel, visc, dx)?;
    for a in 0..dims {
        let mut r = Field::zeros_like(&adv[a]);
        let g = cfg.grav[a];
        let (ad, dd) = (adv[a].data(), diff[a].data());
        let pts: Vec<_> = r.interior_points().collect();
        for p in pts {
            let n = r.idx(p[0], p[1], p[2]);
            r.data_mut()[n] = ad[n] + dd[n] + g;
        }
        tile.replace(vars.rhs[a], r);
    }
    Ok(())
}

/// AB2 predictor `u* = u + dt(3/2 r − 1/2 r_prev)`; the current RHS then
/// becomes the previous one.
pub fn predictor(tile: &mut Tile, vars: &FlowVars, dt: f64, first_step: bool) {
    for a in 0..tile.dims {
        let now = tile.field(vars.rhs[a]).clone();
        let prev = tile.field(vars.rhs_prev[a]).clone();
        integrate_ab2(tile.field_mut(vars.vel[a]), &now, &prev, dt, first_step);
        tile.replace(vars.rhs_prev[a], now);
    }
}

/// Discrete divergence of the face velocity on the global cell mesh.
pub fn divergence(grid: &BlockGrid, vars: &FlowVars) -> GlobalField {
    let dims = grid.dims();
    let n = grid.domain().global_cells();
    let dx = grid.dx();
    let mut div = GlobalField::zeros(n);
    for a in 0..dims {
        let u = grid.gather(vars.vel[a]);
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    let c = div.idx(i, j, k);
                    div.data[c] += (u.at(hi[0], hi[1], hi[2]) - u.at(i, j, k)) / dx;
                }
            }
        }
    }
    div
}

pub fn max_abs(f: &GlobalField) -> f64 {
    f.data.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Outcome of one projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub report: PoissonReport,
    pub divergence_before: f64,
    pub divergence_after: f64,
}

/// Projects the (guard-filled) predicted velocity: solves
/// `∇·(β∇p) = ∇·u*/dt` and sets `u = u* − dt β∇p`. The solver tolerance is
/// scaled by `max(1, max|∇·u*|)` so that the bound on the corrected
/// divergence is absolute.
pub fn project(grid: &mut BlockGrid, vars: &FlowVars, op: &PoissonOperator, dt: f64, opts: &PoissonOptions) -> Result<Projection, FlowError> {
    if !(dt > 0.0) {
        return Err(FlowError::BadTimeStep(dt));
    }
    let dims = grid.dims();
    let div = divergence(grid, vars);
    let before = max_abs(&div);
    let rhs = GlobalField { n: div.n, data: div.data.iter().map(|d| d / dt).collect() };
    let mut scaled = *opts;
    scaled.tol = opts.tol / before.max(1.0);
    let (p, report) = op.solve(&rhs, None, &scaled)?;
    for a in 0..dims {
        let flux = op.face_flux(&p, a);
        let mut u = grid.gather(vars.vel[a]);
        for (x, f) in u.data.iter_mut().zip(&flux.data) {
            *x -= dt * f;
        }
        grid.scatter(vars.vel[a], &u);
    }
    grid.scatter(vars.pres, &p);
    let after = max_abs(&divergence(grid, vars));
    Ok(Projection { report, divergence_before: before, divergence_after: after })
}

/// Cell-centered velocity as the mean of the two bounding faces.
pub fn face_to_center(tile: &mut Tile, vars: &FlowVars) {
    for a in 0..tile.dims {
        let (u, c) = tile.field_pair_mut(vars.vel[a], vars.center[a]);
        let pts: Vec<_> = c.interior_points().collect();
        for p in pts {
            c.set(p[0], p[1], p[2], 0.5 * (u.get(p) + u.get(step(p, a, 1))));
        }
    }
}

/// Largest `|u| dt / dx` over owned faces.
pub fn cfl(grid: &BlockGrid, vars: &FlowVars, dt: f64) -> f64 {
    let mut m: f64 = 0.0;
    for t in grid.tiles() {
        for a in 0..grid.dims() {
            m = m.max(t.field(vars.vel[a]).max_abs_interior());
        }
    }
    m * dt / grid.dx()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BlockShape, BoundaryType, DomainSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_faces(shape: BlockShape, dims: usize, rng: &mut ChaCha8Rng) -> Vec<Field> {
        (0..dims)
            .map(|a| {
                let mut f = Field::zeros(Centering::face(a), shape);
                f.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
                f
            })
            .collect()
    }

    // Straight-loop reference using explicit coordinates of every sample.
    fn advection_oracle(vel: &[Field], a: usize, i: usize, j: usize, k: usize, dx: f64) -> f64 {
        let dims = vel.len();
        let u = |c: usize, i: isize, j: isize, k: isize| vel[c].at(i as usize, j as usize, k as usize);
        let (i, j, k) = (i as isize, j as isize, k as isize);
        let off = |ax: usize, d: isize| -> (isize, isize, isize) {
            match ax {
                0 => (i + d, j, k),
                1 => (i, j + d, k),
                _ => (i, j, k + d),
            }
        };
        let (ip, jp, kp) = off(a, 1);
        let (im, jm, km) = off(a, -1);
        let r = (u(a, i, j, k) + u(a, ip, jp, kp)) / 2.0;
        let l = (u(a, im, jm, km) + u(a, i, j, k)) / 2.0;
        let mut s = r * r - l * l;
        for b in 0..dims {
            if b == a {
                continue;
            }
            let (bi, bj, bk) = off(b, 1);
            let (ci, cj, ck) = off(b, -1);
            let top_a = (u(a, i, j, k) + u(a, bi, bj, bk)) / 2.0;
            let bot_a = (u(a, ci, cj, ck) + u(a, i, j, k)) / 2.0;
            let shift = |x: (isize, isize, isize)| match a {
                0 => (x.0 - 1, x.1, x.2),
                1 => (x.0, x.1 - 1, x.2),
                _ => (x.0, x.1, x.2 - 1),
            };
            let tb = (bi, bj, bk);
            let ts = shift(tb);
            let top_b = (u(b, ts.0, ts.1, ts.2) + u(b, tb.0, tb.1, tb.2)) / 2.0;
            let bs = shift((i, j, k));
            let bot_b = (u(b, bs.0, bs.1, bs.2) + u(b, i, j, k)) / 2.0;
            s += top_a * top_b - bot_a * bot_b;
        }
        -s / dx
    }

    #[test]
    fn advection_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dims in [2, 3] {
            let shape = BlockShape::new(dims, [8, 8, 8], 2);
            let vel = random_faces(shape, dims, &mut rng);
            let refs: Vec<&Field> = vel.iter().collect();
            let got = momentum_advection(&refs, 0.1);
            for a in 0..dims {
                for p in got[a].interior_points() {
                    let want = advection_oracle(&vel, a, p[0], p[1], p[2], 0.1);
                    assert!((got[a].get(p) - want).abs() <= 1e-14 * want.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn uniform_and_shear_flows_have_no_advection() {
        let shape = BlockShape::new(2, [8, 8, 1], 2);
        let mut u = Field::zeros(Centering::FaceX, shape);
        let v = Field::zeros(Centering::FaceY, shape);
        let ext = u.ext();
        for j in 0..ext[1] {
            for i in 0..ext[0] {
                u.set(i, j, 0, j as f64 * 0.1);
            }
        }
        let t = momentum_advection(&[&u, &v], 0.1);
        assert!(t[0].max_abs_interior() <= 1e-12 && t[1].max_abs_interior() <= 1e-12);
        u.fill(2.0);
        let t = momentum_advection(&[&u, &v], 0.1);
        assert!(t[0].max_abs_interior() == 0.0);
    }

    #[test]
    fn quadratic_profile_diffuses_exactly() {
        let shape = BlockShape::new(2, [8, 8, 1], 2);
        let dx = 0.125;
        let mut u = Field::zeros(Centering::FaceX, shape);
        let v = Field::zeros(Centering::FaceY, shape);
        let pts: Vec<_> = u.points_with_margin(2).collect();
        for p in pts {
            let y = u.coord(p, [0.0; 3], dx)[1];
            u.set(p[0], p[1], p[2], y * y);
        }
        let t = momentum_diffusion(&[&u, &v], Viscosity::Const { inv_reynolds: 0.01 }, dx).unwrap();
        for p in t[0].interior_points() {
            assert!((t[0].get(p) - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn variable_density_degenerates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = BlockShape::new(2, [8, 8, 1], 2);
        let vel = random_faces(shape, 2, &mut rng);
        let refs: Vec<&Field> = vel.iter().collect();
        let mut ones = Field::zeros(Centering::Center, shape);
        ones.fill(1.0);
        let c = momentum_diffusion(&refs, Viscosity::Const { inv_reynolds: 0.3 }, 0.1).unwrap();
        let v = momentum_diffusion(&refs, Viscosity::Var { inv_reynolds: 0.3, mu: &ones, rho: &ones }, 0.1).unwrap();
        for a in 0..2 {
            for p in c[a].interior_points() {
                assert!((c[a].get(p) - v[a].get(p)).abs() <= 1e-14 * c[a].get(p).abs().max(1.0));
            }
        }
    }

    fn channel(n: usize) -> (BlockGrid, FlowVars) {
        let d = DomainSpec::unit(2, [2, 2, 1], [n / 2, n / 2, 1]);
        let mut reg = FieldRegistry::new();
        let vars = FlowVars::register(&mut reg).unwrap();
        (BlockGrid::new(d, reg).unwrap(), vars)
    }

    #[test]
    fn gradient_fields_project_to_zero() {
        let (mut g, vars) = channel(32);
        let dx = g.dx();
        use std::f64::consts::PI;
        let psi = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.3 * (4.0 * PI * y).sin();
        for t in g.tiles_mut() {
            let lo = t.lo;
            for a in 0..2 {
                let f = t.field_mut(vars.vel[a]);
                let pts: Vec<_> = f.interior_points().collect();
                for p in pts {
                    let x = f.coord(p, lo, dx);
                    let mut xl = x;
                    xl[a] -= 0.5 * dx;
                    let mut xr = x;
                    xr[a] += 0.5 * dx;
                    f.set(p[0], p[1], p[2], (psi(xr[0], xr[1]) - psi(xl[0], xl[1])) / dx);
                }
            }
        }
        g.fill_guard_cells(&["uface", "vface"]).unwrap();
        let mut beta = GlobalField::zeros(g.domain().global_cells());
        beta.data.fill(1.0);
        let op = PoissonOperator::new(g.domain(), &beta).unwrap();
        let opts = PoissonOptions::default();
        project(&mut g, &vars, &op, 0.5, &opts).unwrap();
        for t in g.tiles() {
            for a in 0..2 {
                assert!(t.field(vars.vel[a]).max_abs_interior() <= 10.0 * opts.tol);
            }
        }
    }

    #[test]
    fn divergence_free_field_is_unchanged() {
        let (mut g, vars) = channel(16);
        for t in g.tiles_mut() {
            t.field_mut(vars.vel[0]).fill(1.0);
        }
        g.fill_guard_cells(&["uface", "vface"]).unwrap();
        let before = g.gather(vars.vel[0]);
        let mut beta = GlobalField::zeros(g.domain().global_cells());
        beta.data.fill(1.0);
        let op = PoissonOperator::new(g.domain(), &beta).unwrap();
        let pr = project(&mut g, &vars, &op, 0.1, &PoissonOptions::default()).unwrap();
        assert_eq!(g.gather(vars.vel[0]), before);
        assert_eq!(max_abs(&g.gather(vars.pres)), 0.0);
        assert_eq!(pr.divergence_after, 0.0);
    }

    #[test]
    fn inflow_outflow_projection_bound() {
        let d = DomainSpec::unit(2, [2, 2, 1], [16, 16, 1])
            .with_boundary(0, BoundaryType::InflowIns, BoundaryType::OutflowIns)
            .with_boundary(1, BoundaryType::NoslipIns, BoundaryType::NoslipIns);
        let mut d = d;
        d.inflow[0][0] = 1.0;
        let mut reg = FieldRegistry::new();
        let vars = FlowVars::register(&mut reg).unwrap();
        let mut g = BlockGrid::new(d, reg).unwrap();
        g.fill_guard_cells(&["uface", "vface"]).unwrap();
        let mut beta = GlobalField::zeros(g.domain().global_cells());
        beta.data.fill(1.0);
        let op = PoissonOperator::new(g.domain(), &beta).unwrap();
        let pr = project(&mut g, &vars, &op, 0.01, &PoissonOptions::default()).unwrap();
        assert!(pr.divergence_before > 1.0);
        assert!(pr.divergence_after <= 1e-8, "{}", pr.divergence_after);
    }

    #[test]
    fn predictor_telescopes_for_constant_rhs() {
        let cfg = FlowConfig {
            inv_reynolds: 0.0,
            grav: [0.0, -2.0, 0.0],
            formulation: Formulation::ConstDens,
            poisson: PoissonOptions::default(),
        };
        let dt = 0.01;
        let (mut g, vars) = channel(8);
        for first in [true, false] {
            g.fill_guard_cells(&["uface", "vface"]).unwrap();
            for t in g.tiles_mut() {
                accumulate_rhs(t, &vars, &cfg, None).unwrap();
                predictor(t, &vars, dt, first);
            }
        }
        for t in g.tiles() {
            for p in t.field(vars.vel[1]).interior_points() {
                assert!((t.field(vars.vel[1]).get(p) + 2.0 * 2.0 * dt).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn face_to_center_reproduces_linear_fields() {
        let (mut g, vars) = channel(8);
        let dx = g.dx();
        for t in g.tiles_mut() {
            let lo = t.lo;
            let f = t.field_mut(vars.vel[0]);
            let pts: Vec<_> = f.points_with_margin(2).collect();
            for p in pts {
                let x = f.coord(p, lo, dx)[0];
                f.set(p[0], p[1], p[2], 3.0 * x + 1.0);
            }
            face_to_center(t, &vars);
            let c = t.field(vars.center[0]);
            for p in c.interior_points() {
                let x = c.coord(p, lo, dx)[0];
                assert!((c.get(p) - (3.0 * x + 1.0)).abs() < 1e-14);
            }
        }
    }
}
