//! Initial conditions for the shipped applications, keyed by name.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{DriverError, Simulation};
use crate::bodies::{circle, Kinematics};
use crate::grid::BoundaryType;
use crate::multiphase::seed_sphere;

pub type Initializer = fn(&mut Simulation) -> Result<(), DriverError>;

#[derive(Clone, Default)]
pub struct AppRegistry {
    apps: BTreeMap<String, Initializer>,
}

impl AppRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Self::default();
        r.register("ChannelFlow", channel_flow);
        r.register("StaticBubble", bubble);
        r.register("FlowBoiling", bubble);
        r.register("CylinderFlow", cylinder_flow);
        r.register("HeatConduction", heat_conduction);
        r
    }

    pub fn register(&mut self, name: &str, init: Initializer) {
        self.apps.insert(name.to_string(), init);
    }

    pub fn get(&self, name: &str) -> Option<Initializer> {
        self.apps.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.apps.keys().map(String::as_str)
    }
}

fn channel_flow(sim: &mut Simulation) -> Result<(), DriverError> {
    if let Some(f) = &sim.flow {
        let ids: Vec<_> = f.vars.vel.iter().chain([&f.vars.pres]).copied().collect();
        for t in sim.grid.tiles_mut() {
            for &id in &ids {
                t.field_mut(id).fill(0.0);
            }
        }
    }
    Ok(())
}

/// Gas bubble (φ > 0 inside) at `sim_bubble*`.
fn bubble(sim: &mut Simulation) -> Result<(), DriverError> {
    channel_flow(sim)?;
    let Some(p) = &sim.phase else { return Ok(()) };
    let phi = p.vars.phi;
    let c = [
        sim.params.real_or("sim_bubbleX", 0.5),
        sim.params.real_or("sim_bubbleY", 0.5),
        sim.params.real_or("sim_bubbleZ", 0.5),
    ];
    let r = sim.params.real_or("sim_bubbleR", 0.25);
    for t in sim.grid.tiles_mut() {
        seed_sphere(t, phi, c, r, true);
    }
    Ok(())
}

/// Circular cylinder at `sim_cyl*` unless a body file was given, with the
/// inflow velocity everywhere outside it.
fn cylinder_flow(sim: &mut Simulation) -> Result<(), DriverError> {
    channel_flow(sim)?;
    let params = &sim.params;
    let kin = Kinematics {
        velocity: [params.real_or("sm_velX", 0.0), params.real_or("sm_velY", 0.0), params.real_or("sm_velZ", 0.0)],
        omega: params.real_or("sm_omega", 0.0),
    };
    let center = [params.real_or("sim_cylX", 0.5), params.real_or("sim_cylY", 0.5)];
    let radius = params.real_or("sim_cylR", 0.15);
    if let Some(b) = sim.body.as_mut() {
        if b.body.is_none() {
            b.body = Some(circle(center, radius, 64, true, kin));
        }
    }
    sim.map_body()?;
    let (Some(f), Some(b)) = (&sim.flow, &sim.body) else { return Ok(()) };
    let d = sim.grid.domain();
    let u0 = if d.boundary[0][0] == BoundaryType::InflowIns { d.inflow[0][0] } else { 0.0 };
    let (u, lmda) = (f.vars.vel[0], b.vars.lmda);
    for t in sim.grid.tiles_mut() {
        let lm = t.field(lmda).clone();
        let field = t.field_mut(u);
        let pts: Vec<_> = field.interior_points().collect();
        for p in pts {
            let mut l = p;
            l[0] -= 1;
            let inside = 0.5 * (lm.get(p) + lm.get(l)) <= 0.0;
            field.set(p[0], p[1], p[2], if inside { 0.0 } else { u0 });
        }
    }
    Ok(())
}

/// `T = A sin(2π k (x − xmin)/Lx)`.
fn heat_conduction(sim: &mut Simulation) -> Result<(), DriverError> {
    let Some(h) = &sim.heat else { return Ok(()) };
    let temp = h.vars.temp;
    let amp = sim.params.real_or("sim_tempAmp", 1.0);
    let k = sim.params.int_or("sim_waveNumber", 1) as f64;
    let d = sim.grid.domain();
    let (x0, len) = (d.lo[0], d.hi[0] - d.lo[0]);
    let dx = sim.grid.dx();
    for t in sim.grid.tiles_mut() {
        let lo = t.lo;
        let f = t.field_mut(temp);
        let pts: Vec<_> = f.points_with_margin(f.guards()[0]).collect();
        for p in pts {
            let x = f.coord(p, lo, dx)[0];
            f.set(p[0], p[1], p[2], amp * (2.0 * PI * k * (x - x0) / len).sin());
        }
    }
    Ok(())
}
