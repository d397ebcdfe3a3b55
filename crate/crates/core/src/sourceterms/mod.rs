//! Outlet buffer relaxation and heater wall patches.
//!
//! Heater files hold one `[heater]` table per patch:
//!
//! ```text
//! [heater]
//! face = "ylow"
//! xmin = 0.4
//! xmax = 0.6
//! temp = 1.0
//! sites = [[0.45, 0.0], [0.55, 0.0]]
//! ```
//!
//! `face` is one of `xlow xhigh ylow yhigh zlow zhigh`; bounds on the
//! tangential axes default to the whole face and `temp` to `htr_tempWall`.

use serde::Deserialize;
use thiserror::Error;

use crate::grid::{BoundaryType, DomainSpec, Tile, VarId};
use crate::incompns::FlowVars;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("out_buffer must be positive, got {0}")]
    BadBuffer(f64),
    #[error("out_buffer {buffer} exceeds the domain length {length} along axis {axis}")]
    BufferTooWide { buffer: f64, length: f64, axis: usize },
    #[error("heater file: {0}")]
    Parse(String),
    #[error("heater {index}: unknown face `{face}`")]
    BadFace { index: usize, face: String },
    #[error("heater {index}: face {face} is not a physical boundary")]
    OffBoundary { index: usize, face: String },
    #[error("heater {index}: extent [{lo}, {hi}] on axis {axis} lies outside the face")]
    BadExtent { index: usize, axis: usize, lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutletConfig {
    pub buffer: f64,
    pub vel_ref: f64,
}

impl OutletConfig {
    pub fn validate(&self, domain: &DomainSpec) -> Result<(), SourceError> {
        if !(self.buffer > 0.0) {
            return Err(SourceError::BadBuffer(self.buffer));
        }
        for a in 0..domain.dims {
            let length = domain.hi[a] - domain.lo[a];
            if domain.boundary[a].contains(&BoundaryType::OutflowIns) && self.buffer > length {
                return Err(SourceError::BufferTooWide { buffer: self.buffer, length, axis: a });
            }
        }
        Ok(())
    }

    pub fn tau(&self) -> f64 {
        self.buffer / self.vel_ref.abs()
    }
}

/// Inside an outflow buffer, relaxes each face velocity toward its upstream
/// neighbour (a zero streamwise gradient) at rate `1/τ`.
pub fn outlet_forcing(tile: &mut Tile, flow: &FlowVars, cfg: &OutletConfig, domain: &DomainSpec) {
    if cfg.vel_ref == 0.0 {
        return;
    }
    let tau = cfg.tau();
    let (lo, dx) = (tile.lo, tile.dx);
    for axis in 0..tile.dims {
        for side in 0..2 {
            if domain.boundary[axis][side] != BoundaryType::OutflowIns {
                continue;
            }
            let wall = if side == 0 { domain.lo[axis] } else { domain.hi[axis] };
            let upstream: isize = if side == 0 { 1 } else { -1 };
            for a in 0..tile.dims {
                let u = tile.field(flow.vel[a]);
                let mut add = Vec::new();
                u.for_each_interior(|p, n| {
                    let x = u.coord(p, lo, dx)[axis];
                    if (x - wall).abs() > cfg.buffer {
                        return;
                    }
                    let mut q = p;
                    q[axis] = (q[axis] as isize + upstream) as usize;
                    add.push((n, -(u.get(p) - u.get(q)) / tau));
                });
                let r = tile.field_mut(flow.rhs[a]).data_mut();
                for (n, v) in add {
                    r[n] += v;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeaterPatch {
    pub axis: usize,
    pub side: usize,
    /// Tangential bounds; the normal-axis entries are unused.
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub temp: f64,
    /// Nucleation sites, recorded only.
    pub sites: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeater {
    face: String,
    xmin: Option<f64>,
    xmax: Option<f64>,
    ymin: Option<f64>,
    ymax: Option<f64>,
    zmin: Option<f64>,
    zmax: Option<f64>,
    temp: Option<f64>,
    #[serde(default)]
    sites: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeaterFile {
    #[serde(default)]
    heater: Vec<RawHeater>,
}

pub fn face_of(name: &str) -> Option<(usize, usize)> {
    let axis = match name.as_bytes().first()? {
        b'x' => 0,
        b'y' => 1,
        b'z' => 2,
        _ => return None,
    };
    match &name[1..] {
        "low" => Some((axis, 0)),
        "high" => Some((axis, 1)),
        _ => None,
    }
}

/// Parses a heater file and checks every patch against `domain`.
pub fn parse_heaters(text: &str, domain: &DomainSpec, default_temp: f64) -> Result<Vec<HeaterPatch>, SourceError> {
    let normalized: String = text
        .lines()
        .map(|l| if l.trim() == "[heater]" { "[[heater]]" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let raw: RawHeaterFile = toml::from_str(&normalized).map_err(|e| SourceError::Parse(e.message().to_string()))?;
    let mut out = Vec::new();
    for (index, h) in raw.heater.into_iter().enumerate() {
        let (axis, side) = face_of(&h.face)
            .filter(|(a, _)| *a < domain.dims)
            .ok_or_else(|| SourceError::BadFace { index, face: h.face.clone() })?;
        if domain.boundary[axis][side] == BoundaryType::Periodic {
            return Err(SourceError::OffBoundary { index, face: h.face });
        }
        let mins = [h.xmin, h.ymin, h.zmin];
        let maxs = [h.xmax, h.ymax, h.zmax];
        let mut lo = domain.lo;
        let mut hi = domain.hi;
        for a in 0..domain.dims {
            if a == axis {
                continue;
            }
            lo[a] = mins[a].unwrap_or(domain.lo[a]);
            hi[a] = maxs[a].unwrap_or(domain.hi[a]);
            if !(lo[a] >= domain.lo[a] && hi[a] <= domain.hi[a] && lo[a] <= hi[a]) {
                return Err(SourceError::BadExtent { index, axis: a, lo: lo[a], hi: hi[a] });
            }
        }
        out.push(HeaterPatch {
            axis,
            side,
            lo,
            hi,
            temp: h.temp.unwrap_or(default_temp),
            sites: h.sites,
        });
    }
    Ok(out)
}

/// Mirrors guard temperatures as `T_g = 2 T_w − T_i` wherever a cell's
/// wall face lies inside a patch; other guards are left as filled.
pub fn heater_apply(tile: &mut Tile, temp: VarId, patches: &[HeaterPatch], domain: &DomainSpec) {
    let (lo, dx, dims) = (tile.lo, tile.dx, tile.dims);
    for h in patches {
        let edge = if h.side == 0 { domain.lo[h.axis] } else { domain.hi[h.axis] };
        let at_wall = if h.side == 0 { (lo[h.axis] - edge).abs() < 0.5 * dx } else { (tile.hi[h.axis] - edge).abs() < 0.5 * dx };
        if !at_wall {
            continue;
        }
        dirichlet_mirror(tile.field_mut(temp), h.axis, h.side, h.temp, |x| {
            (0..dims).filter(|&a| a != h.axis).all(|a| x[a] >= h.lo[a] && x[a] <= h.hi[a])
        }, lo, dx);
    }
}

/// Imposes `T = value` at every inflow face of the domain.
pub fn inflow_temperature(tile: &mut Tile, temp: VarId, domain: &DomainSpec, value: f64) {
    let (lo, dx) = (tile.lo, tile.dx);
    for axis in 0..tile.dims {
        for side in 0..2 {
            if domain.boundary[axis][side] != BoundaryType::InflowIns {
                continue;
            }
            let edge = if side == 0 { domain.lo[axis] } else { domain.hi[axis] };
            let here = if side == 0 { tile.lo[axis] } else { tile.hi[axis] };
            if (here - edge).abs() < 0.5 * dx {
                dirichlet_mirror(tile.field_mut(temp), axis, side, value, |_| true, lo, dx);
            }
        }
    }
}

fn dirichlet_mirror(f: &mut crate::grid::Field, axis: usize, side: usize, value: f64, inside: impl Fn([f64; 3]) -> bool, lo: [f64; 3], dx: f64) {
    let g = f.guards()[axis];
    let r = f.interior(axis);
    let pts: Vec<_> = f.points_with_margin(0).filter(|p| p[axis] == if side == 0 { r.start } else { r.end - 1 }).collect();
    for p in pts {
        if !inside(f.coord(p, lo, dx)) {
            continue;
        }
        for k in 0..g {
            let (mut gp, mut ip) = (p, p);
            if side == 0 {
                gp[axis] = r.start - 1 - k;
                ip[axis] = r.start + k;
            } else {
                gp[axis] = r.end + k;
                ip[axis] = r.end - 1 - k;
            }
            let v = 2.0 * value - f.get(ip);
            f.set(gp[0], gp[1], gp[2], v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BlockGrid, FieldRegistry};
    use crate::heatad::{heat_advance, heat_rhs, DiffusionKind, HeatVars, ThermalConfig};

    fn walled(nb: usize, n: usize) -> DomainSpec {
        DomainSpec::unit(2, [nb, nb, 1], [n / nb, n / nb, 1])
            .with_boundary(1, BoundaryType::NoslipIns, BoundaryType::InflowIns)
    }

    #[test]
    fn heater_file_parsing() {
        let d = walled(1, 8);
        let text = "[heater]\nface = \"ylow\"\nxmin = 0.4\nxmax = 0.6\ntemp = 1.0\nsites = [[0.5, 0.0]]\n\n[heater]\nface = \"yhigh\"\n";
        let hs = parse_heaters(text, &d, 2.0).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!((hs[0].axis, hs[0].side, hs[0].lo[0], hs[0].hi[0]), (1, 0, 0.4, 0.6));
        assert_eq!(hs[1].temp, 2.0);
        assert_eq!(parse_heaters("", &d, 1.0).unwrap(), vec![]);
        assert!(matches!(parse_heaters("[heater]\nface = \"xlow\"\n", &d, 1.0), Err(SourceError::OffBoundary { .. })));
        assert!(matches!(parse_heaters("[heater]\nface = \"wlow\"\n", &d, 1.0), Err(SourceError::BadFace { .. })));
        assert!(matches!(
            parse_heaters("[heater]\nface = \"ylow\"\nxmax = 2.0\n", &d, 1.0),
            Err(SourceError::BadExtent { .. })
        ));
        assert!(parse_heaters("[heater]\nface = \"ylow\"\ncolor = 1\n", &d, 1.0).is_err());
    }

    fn temp_grid(d: DomainSpec) -> (BlockGrid, HeatVars) {
        let mut reg = FieldRegistry::new();
        let vars = HeatVars::register(&mut reg).unwrap();
        (BlockGrid::new(d, reg).unwrap(), vars)
    }

    #[test]
    fn wall_value_is_reproduced_and_idempotent() {
        let d = walled(2, 16);
        let hs = parse_heaters("[heater]\nface = \"ylow\"\nxmin = 0.4\nxmax = 0.6\ntemp = 1.0\n", &d, 1.0).unwrap();
        let (mut g, vars) = temp_grid(d.clone());
        for t in g.tiles_mut() {
            let f = t.field_mut(vars.temp);
            for (k, x) in f.data_mut().iter_mut().enumerate() {
                *x = (k % 7) as f64 * 0.1;
            }
        }
        g.fill_guard_ids(&[vars.temp]);
        for t in g.tiles_mut() {
            heater_apply(t, vars.temp, &hs, &d);
            let once = t.field(vars.temp).clone();
            heater_apply(t, vars.temp, &hs, &d);
            assert_eq!(&once, t.field(vars.temp));
            if t.index[1] != 0 {
                continue;
            }
            let f = t.field(vars.temp);
            for i in f.interior(0) {
                let x = f.coord([i, 2, 0], t.lo, t.dx)[0];
                let wall = 0.5 * (f.at(i, 1, 0) + f.at(i, 2, 0));
                if (0.4..=0.6).contains(&x) {
                    assert!((wall - 1.0).abs() <= 1e-12);
                } else {
                    assert_eq!(f.at(i, 1, 0), f.at(i, 2, 0));
                }
            }
        }
    }

    #[test]
    fn steady_conduction_is_linear() {
        let d = walled(2, 16);
        let hs = parse_heaters("[heater]\nface = \"ylow\"\ntemp = 1.0\n", &d, 1.0).unwrap();
        let (mut g, vars) = temp_grid(d.clone());
        let cfg = ThermalConfig { alpha: 1.0, alpha_gas: 1.0, kind: DiffusionKind::Constant, buoyancy: 0.0 };
        let dt = 0.5 * cfg.stable_dt(g.dx(), 2);
        for s in 0..4000 {
            g.fill_guard_ids(&[vars.temp]);
            for t in g.tiles_mut() {
                heater_apply(t, vars.temp, &hs, &d);
                inflow_temperature(t, vars.temp, &d, 0.0);
                heat_rhs(t, &vars, &cfg, None, None).unwrap();
                heat_advance(t, &vars, dt, s == 0);
            }
        }
        let dx = g.dx();
        for t in g.tiles() {
            let f = t.field(vars.temp);
            for p in f.interior_points() {
                let y = f.coord(p, t.lo, dx)[1];
                assert!((f.get(p) - (1.0 - y)).abs() <= 0.02, "{} vs {}", f.get(p), 1.0 - y);
            }
        }
    }

    #[test]
    fn outlet_relaxes_only_inside_buffer() {
        let d = DomainSpec::unit(2, [2, 1, 1], [8, 16, 1])
            .with_boundary(0, BoundaryType::InflowIns, BoundaryType::OutflowIns)
            .with_boundary(1, BoundaryType::NoslipIns, BoundaryType::NoslipIns);
        let cfg = OutletConfig { buffer: 0.25, vel_ref: 1.0 };
        cfg.validate(&d).unwrap();
        assert!(OutletConfig { buffer: 2.0, vel_ref: 1.0 }.validate(&d).is_err());
        assert!(OutletConfig { buffer: 0.0, vel_ref: 1.0 }.validate(&d).is_err());
        let mut reg = FieldRegistry::new();
        let flow = FlowVars::register(&mut reg).unwrap();
        let mut g = BlockGrid::new(d.clone(), reg).unwrap();
        for t in g.tiles_mut() {
            let lo = t.lo;
            let f = t.field_mut(flow.vel[0]);
            let pts: Vec<_> = f.points_with_margin(2).collect();
            for p in pts {
                let x = f.coord(p, lo, 1.0 / 16.0)[0];
                f.set(p[0], p[1], p[2], 1.0 + x);
            }
            outlet_forcing(t, &flow, &cfg, &d);
            let r = t.field(flow.rhs[0]);
            for p in r.interior_points() {
                let x = r.coord(p, lo, 1.0 / 16.0)[0];
                if (1.0 - x) > 0.25 {
                    assert_eq!(r.get(p), 0.0);
                } else {
                    assert!((r.get(p) + (1.0 / 16.0) / cfg.tau()).abs() < 1e-12);
                }
            }
        }
        for t in g.tiles_mut() {
            t.field_mut(flow.vel[0]).fill(0.5);
            t.field_mut(flow.rhs[0]).fill(0.0);
            outlet_forcing(t, &flow, &cfg, &d);
            assert_eq!(t.field(flow.rhs[0]).max_abs_interior(), 0.0);
        }
    }
}
