//! Rigid Lagrangian bodies with prescribed motion, their signed-distance
//! image on the grid, and direct forcing of the momentum predictor.
//!
//! Body files are plain text:
//!
//! ```text
//! NODES 3
//! 0.0 0.0
//! 1.0 0.0
//! 0.0 1.0
//! ELEMS 3
//! 0 1
//! 1 2
//! 2 0
//! ```
//!
//! Indices are zero-based. In 2-D an element is a segment `i j`, or a
//! circular arc `i j @ cx cy` running counter-clockwise from `i` to `j`
//! around `(cx, cy)`. In 3-D elements are triangles `i j k`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use thiserror::Error;

use crate::grid::{Centering, Field, FieldRegistry, GridError, Persistence, Tile, VarId};
use crate::incompns::FlowVars;
use crate::stencils::ab2_increment;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BodyError {
    #[error("body file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("element {element} references node {node}, but only {count} nodes exist")]
    BadIndex { element: usize, node: usize, count: usize },
    #[error("surface is not closed: {0}")]
    OpenSurface(String),
    #[error("element {0} is degenerate")]
    Degenerate(usize),
    #[error("body is {body}-D but the grid is {grid}-D")]
    DimMismatch { body: usize, grid: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Element {
    Segment([usize; 2]),
    Arc { nodes: [usize; 2], center: [f64; 3] },
    Triangle([usize; 3]),
}

/// Rigid motion: translation velocity plus angular velocity about the
/// initial centroid, rotating in the x–y plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Kinematics {
    pub velocity: [f64; 3],
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianBody {
    pub dims: usize,
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<Element>,
    pub kinematics: Kinematics,
    reference: Vec<[f64; 3]>,
    arc_reference: Vec<[f64; 3]>,
    centroid0: [f64; 3],
    pub time: f64,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl LagrangianBody {
    pub fn new(dims: usize, nodes: Vec<[f64; 3]>, elements: Vec<Element>, kinematics: Kinematics) -> Result<Self, BodyError> {
        let body = LagrangianBody {
            dims,
            centroid0: centroid(&nodes),
            reference: nodes.clone(),
            arc_reference: elements
                .iter()
                .filter_map(|e| match e {
                    Element::Arc { center, .. } => Some(*center),
                    _ => None,
                })
                .collect(),
            nodes,
            elements,
            kinematics,
            time: 0.0,
        };
        body.validate()?;
        Ok(body)
    }

    pub fn parse(text: &str, dims: usize, kinematics: Kinematics) -> Result<Self, BodyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let err = |line: usize, m: &str| BodyError::Parse { line, message: m.to_string() };
        let count = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize, BodyError> {
            let (ln, l) = lines.next().ok_or_else(|| err(0, &format!("missing {key} header")))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(ln, &format!("expected `{key} n`")));
            }
            let n = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(ln, "bad count"))?;
            if it.next().is_some() {
                return Err(err(ln, "trailing tokens"));
            }
            Ok(n)
        };
        let real = |ln: usize, s: &str| -> Result<f64, BodyError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(ln, &format!("bad number `{s}`")))
        };
        let n = count(&mut lines, "NODES")?;
        let mut nodes = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "too few node lines"))?;
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != dims {
                return Err(err(ln, &format!("expected {dims} coordinates")));
            }
            let mut x = [0.0; 3];
            for (a, s) in v.iter().enumerate() {
                x[a] = real(ln, s)?;
            }
            nodes.push(x);
        }
        let m = count(&mut lines, "ELEMS")?;
        let mut elements = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "too few element lines"))?;
            let v: Vec<&str> = l.split_whitespace().collect();
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err(ln, &format!("bad index `{s}`")));
            let e = match (dims, v.as_slice()) {
                (2, [i, j]) => Element::Segment([idx(i)?, idx(j)?]),
                (2, [i, j, "@", cx, cy]) => Element::Arc {
                    nodes: [idx(i)?, idx(j)?],
                    center: [real(ln, cx)?, real(ln, cy)?, 0.0],
                },
                (3, [i, j, k]) => Element::Triangle([idx(i)?, idx(j)?, idx(k)?]),
                _ => return Err(err(ln, "malformed element")),
            };
            elements.push(e);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln, "unexpected trailing content"));
        }
        LagrangianBody::new(dims, nodes, elements, kinematics)
    }

    fn validate(&self) -> Result<(), BodyError> {
        let count = self.nodes.len();
        let mut edges: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut degree = vec![(0usize, 0usize); count];
        for (k, e) in self.elements.iter().enumerate() {
            let ids: &[usize] = match e {
                Element::Segment(n) | Element::Arc { nodes: n, .. } => n,
                Element::Triangle(n) => n,
            };
            for &node in ids {
                if node >= count {
                    return Err(BodyError::BadIndex { element: k, node, count });
                }
            }
            match (self.dims, e) {
                (2, Element::Segment([i, j])) | (2, Element::Arc { nodes: [i, j], .. }) => {
                    if i == j && !matches!(e, Element::Arc { .. }) {
                        return Err(BodyError::Degenerate(k));
                    }
                    degree[*i].1 += 1;
                    degree[*j].0 += 1;
                }
                (3, Element::Triangle([i, j, l])) => {
                    let a = sub(self.nodes[*j], self.nodes[*i]);
                    let b = sub(self.nodes[*l], self.nodes[*i]);
                    if norm(cross(a, b)) == 0.0 {
                        return Err(BodyError::Degenerate(k));
                    }
                    for (p, q) in [(*i, *j), (*j, *l), (*l, *i)] {
                        *edges.entry((p.min(q), p.max(q))).or_default() += 1;
                    }
                }
                _ => return Err(BodyError::Degenerate(k)),
            }
        }
        if self.elements.is_empty() {
            return Err(BodyError::OpenSurface("no elements".into()));
        }
        if self.dims == 2 {
            for (n, &(into, out)) in degree.iter().enumerate() {
                if (into, out) != (0, 0) && (into, out) != (1, 1) {
                    return Err(BodyError::OpenSurface(format!("node {n} starts {out} and ends {into} elements")));
                }
            }
        } else if let Some(((p, q), c)) = edges.iter().find(|(_, &c)| c != 2) {
            return Err(BodyError::OpenSurface(format!("edge {p}-{q} shared by {c} triangles")));
        }
        Ok(())
    }

    pub fn centroid(&self) -> [f64; 3] {
        centroid(&self.nodes)
    }

    /// Moves every node to its rigid pose at `time + dt`, evaluated from
    /// the initial configuration so rotations close exactly.
    pub fn advance(&mut self, dt: f64) {
        self.set_time(self.time + dt);
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
        for (x, x0) in self.nodes.iter_mut().zip(&self.reference) {
            *x = pose_of(&self.kinematics, self.centroid0, t, *x0);
        }
        let mut arcs = self.arc_reference.iter();
        let (kin, c0) = (self.kinematics, self.centroid0);
        for e in &mut self.elements {
            if let Element::Arc { center, .. } = e {
                *center = pose_of(&kin, c0, t, *arcs.next().unwrap());
            }
        }
    }

    /// Rigid-body velocity at `x`.
    pub fn velocity_at(&self, x: [f64; 3]) -> [f64; 3] {
        let k = &self.kinematics;
        let c = add(self.centroid0, scale(k.velocity, self.time));
        let r = sub(x, c);
        [k.velocity[0] - k.omega * r[1], k.velocity[1] + k.omega * r[0], k.velocity[2]]
    }

    fn arc_geometry(&self, nodes: [usize; 2], center: [f64; 3]) -> (f64, f64, f64) {
        let a = sub(self.nodes[nodes[0]], center);
        let b = sub(self.nodes[nodes[1]], center);
        let r = norm(a);
        let start = a[1].atan2(a[0]);
        let mut sweep = b[1].atan2(b[0]) - start;
        if sweep <= 0.0 {
            sweep += 2.0 * PI;
        }
        (r, start, sweep)
    }

    /// Unsigned distance from `x` to the surface.
    pub fn distance(&self, x: [f64; 3]) -> f64 {
        self.elements
            .iter()
            .map(|e| match *e {
                Element::Segment([i, j]) => segment_distance(x, self.nodes[i], self.nodes[j]),
                Element::Arc { nodes, center } => {
                    let (r, start, sweep) = self.arc_geometry(nodes, center);
                    let d = sub(x, center);
                    if within(d[1].atan2(d[0]), start, sweep) {
                        (norm([d[0], d[1], 0.0]) - r).abs()
                    } else {
                        norm(sub(x, self.nodes[nodes[0]])).min(norm(sub(x, self.nodes[nodes[1]])))
                    }
                }
                Element::Triangle([i, j, k]) => norm(sub(x, closest_on_triangle(x, self.nodes[i], self.nodes[j], self.nodes[k]))),
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Ray-parity containment test.
    pub fn contains(&self, x: [f64; 3]) -> bool {
        let mut crossings = 0usize;
        if self.dims == 2 {
            for e in &self.elements {
                match *e {
                    Element::Segment([i, j]) => {
                        let (a, b) = (self.nodes[i], self.nodes[j]);
                        if (a[1] > x[1]) != (b[1] > x[1]) {
                            let xc = a[0] + (x[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                            if xc > x[0] {
                                crossings += 1;
                            }
                        }
                    }
                    Element::Arc { nodes, center } => {
                        let (r, start, sweep) = self.arc_geometry(nodes, center);
                        let dy = x[1] - center[1];
                        let disc = r * r - dy * dy;
                        if disc > 0.0 {
                            let h = disc.sqrt();
                            for xc in [center[0] - h, center[0] + h] {
                                if xc > x[0] && within(dy.atan2(xc - center[0]), start, sweep) {
                                    crossings += 1;
                                }
                            }
                        }
                    }
                    Element::Triangle(_) => {}
                }
            }
        } else {
            let dir = [1.0, 0.318_309_886_183_790_7, 0.137_035_999_084];
            for e in &self.elements {
                if let Element::Triangle([i, j, k]) = *e {
                    if ray_hits_triangle(x, dir, self.nodes[i], self.nodes[j], self.nodes[k]) {
                        crossings += 1;
                    }
                }
            }
        }
        crossings % 2 == 1
    }

    /// Signed distance, negative inside, clamped to `±band`.
    pub fn signed_distance(&self, x: [f64; 3], band: f64) -> f64 {
        let inside = self.contains(x);
        let d = self.distance(x).min(band);
        if inside {
            -d
        } else {
            d
        }
    }
}

fn pose_of(k: &Kinematics, c0: [f64; 3], t: f64, x0: [f64; 3]) -> [f64; 3] {
    let (s, c) = (k.omega * t).sin_cos();
    let r = sub(x0, c0);
    let rot = [c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]];
    add(add(c0, scale(k.velocity, t)), rot)
}

fn centroid(nodes: &[[f64; 3]]) -> [f64; 3] {
    let n = nodes.len().max(1) as f64;
    nodes.iter().fold([0.0; 3], |s, x| add(s, *x)).map(|v| v / n)
}

/// Half-open angular containment in `[start, start + sweep)`.
fn within(angle: f64, start: f64, sweep: f64) -> bool {
    (angle - start).rem_euclid(2.0 * PI) < sweep
}

fn segment_distance(x: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = sub(b, a);
    let t = (dot(sub(x, a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
    norm(sub(x, add(a, scale(ab, t))))
}

fn closest_on_triangle(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> [f64; 3] {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return add(a, scale(ab, d1 / (d1 - d3)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return add(a, scale(ac, d2 / (d2 - d6)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return add(b, scale(sub(c, b), (d4 - d3) / ((d4 - d3) + (d5 - d6))));
    }
    let denom = 1.0 / (va + vb + vc);
    add(a, add(scale(ab, vb * denom), scale(ac, vc * denom)))
}

fn ray_hits_triangle(o: [f64; 3], d: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> bool {
    let e1 = sub(b, a);
    let e2 = sub(c, a);
    let h = cross(d, e2);
    let det = dot(e1, h);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = sub(o, a);
    let u = inv * dot(s, h);
    if !(0.0..1.0).contains(&u) {
        return false;
    }
    let q = cross(s, e1);
    let v = inv * dot(d, q);
    if v < 0.0 || u + v >= 1.0 {
        return false;
    }
    inv * dot(e2, q) > 0.0
}

/// Polygonal circle with `n` segments, or exact arcs when `arcs` is set.
pub fn circle(center: [f64; 2], radius: f64, n: usize, arcs: bool, kinematics: Kinematics) -> LagrangianBody {
    let nodes: Vec<[f64; 3]> = (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [center[0] + radius * t.cos(), center[1] + radius * t.sin(), 0.0]
        })
        .collect();
    let elements = (0..n)
        .map(|k| {
            let nodes = [k, (k + 1) % n];
            if arcs {
                Element::Arc { nodes, center: [center[0], center[1], 0.0] }
            } else {
                Element::Segment(nodes)
            }
        })
        .collect();
    LagrangianBody::new(2, nodes, elements, kinematics).expect("valid circle")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyVars {
    pub lmda: VarId,
}

impl BodyVars {
    pub fn register(reg: &mut FieldRegistry) -> Result<Self, GridError> {
        Ok(BodyVars { lmda: reg.ensure("lmda", Centering::Center, Persistence::Checkpoint)? })
    }
}

/// Narrow-band half-width in cells.
pub const BAND_CELLS: f64 = 6.0;

/// Writes λφ on every point of the tile, guards included.
pub fn map_to_levelset(body: &LagrangianBody, tile: &mut Tile, vars: &BodyVars) -> Result<(), BodyError> {
    if body.dims != tile.dims {
        return Err(BodyError::DimMismatch { body: body.dims, grid: tile.dims });
    }
    let band = BAND_CELLS * tile.dx;
    let (lo, dx) = (tile.lo, tile.dx);
    let f = tile.field_mut(vars.lmda);
    let pts: Vec<_> = f.points_with_margin(f.guards()[0]).collect();
    for p in pts {
        let x = f.coord(p, lo, dx);
        f.set(p[0], p[1], p[2], body.signed_distance(x, band));
    }
    Ok(())
}

/// Rewrites the momentum RHS at solid faces so the AB2 predictor lands on
/// the rigid-body velocity; faces within one cell of the surface blend
/// linearly between the fluid prediction and the body velocity.
pub fn ib_forcing(tile: &mut Tile, flow: &FlowVars, vars: &BodyVars, body: &LagrangianBody, dt: f64, first_step: bool) {
    let dx = tile.dx;
    let lo = tile.lo;
    for a in 0..tile.dims {
        let lm = tile.field(vars.lmda);
        let u = tile.field(flow.vel[a]);
        let r = tile.field(flow.rhs[a]);
        let rp = tile.field(flow.rhs_prev[a]);
        let mut set = Vec::new();
        u.for_each_interior(|p, n| {
            let mut l = p;
            l[a] -= 1;
            let phi = 0.5 * (lm.get(p) + lm.get(l));
            if phi >= dx {
                return;
            }
            let w = (phi / dx).max(0.0);
            let ub = body.velocity_at(u.coord(p, lo, dx))[a];
            let pred = u.data()[n] + ab2_increment(r.data()[n], rp.data()[n], dt, first_step);
            let target = w * pred + (1.0 - w) * ub;
            let du = (target - u.data()[n]) / dt;
            let rhs = if first_step { du } else { (du + 0.5 * rp.data()[n]) / 1.5 };
            set.push((n, rhs));
        });
        let rd = tile.field_mut(flow.rhs[a]).data_mut();
        for (n, v) in set {
            rd[n] = v;
        }
    }
}

/// Cell coefficient of the projection: `solid_beta` where λφ ≤ 0.
pub fn penalized_beta(lmda: &Field, solid_beta: f64, beta: f64) -> impl Fn([usize; 3]) -> f64 + '_ {
    move |p| if lmda.get(p) <= 0.0 { solid_beta } else { beta }
}
