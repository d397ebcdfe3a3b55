//! Uniform block-structured Cartesian grid with staggered storage.
//!
//! The domain is split into `nblockx × nblocky (× nblockz)` equally sized
//! blocks. Each block owns its interior points plus [`NGUARD`] guard layers
//! per active axis. Guard layers are refreshed by [`BlockGrid::fill_guard_cells`]
//! which performs neighbour exchange and applies physical boundary conditions.

mod field;
pub mod poisson;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use field::{BlockShape, Centering, Field};

/// Guard-cell width on every active axis.
pub const NGUARD: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dimensionality must be 2 or 3, got {0}")]
    BadDims(usize),
    #[error("axis {axis}: upper bound {hi} not above lower bound {lo}")]
    BadBounds { axis: usize, lo: f64, hi: f64 },
    #[error("cells are not isotropic: spacings {0:?}")]
    Anisotropic([f64; 3]),
    #[error("{blocks} blocks exceed maxblocks = {maxblocks}")]
    TooManyBlocks { blocks: usize, maxblocks: usize },
    #[error("axis {0}: block and cell counts must be positive")]
    EmptyAxis(usize),
    #[error("guard width {0} is below the required 2")]
    GuardTooNarrow(usize),
    #[error("axis {0}: periodic boundaries must be paired on both faces")]
    UnpairedPeriodic(usize),
    #[error("unknown boundary type `{0}`")]
    UnknownBoundary(String),
    #[error("variable `{0}` is not registered")]
    UnknownVariable(String),
    #[error("variable `{0}` registered twice")]
    DuplicateVariable(String),
}

/// Physical boundary treatment for one domain face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryType {
    InflowIns,
    OutflowIns,
    NoslipIns,
    SlipIns,
    Periodic,
}

impl BoundaryType {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryType::InflowIns => "inflow_ins",
            BoundaryType::OutflowIns => "outflow_ins",
            BoundaryType::NoslipIns => "noslip_ins",
            BoundaryType::SlipIns => "slip_ins",
            BoundaryType::Periodic => "periodic",
        }
    }
}

impl fmt::Display for BoundaryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryType {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "inflow_ins" => BoundaryType::InflowIns,
            "outflow_ins" => BoundaryType::OutflowIns,
            "noslip_ins" => BoundaryType::NoslipIns,
            "slip_ins" => BoundaryType::SlipIns,
            "periodic" => BoundaryType::Periodic,
            other => return Err(GridError::UnknownBoundary(other.to_string())),
        })
    }
}

/// Geometry and boundary description of the computational domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub dims: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub nblocks: [usize; 3],
    /// Interior cells per block along each axis.
    pub cells: [usize; 3],
    pub nguard: usize,
    /// `[axis][side]`, side 0 = low, 1 = high.
    pub boundary: [[BoundaryType; 2]; 3],
    /// Face-normal velocity imposed on `inflow_ins` faces.
    pub inflow: [[f64; 2]; 3],
    pub maxblocks: usize,
}

impl DomainSpec {
    /// Unit square/cube, one block, periodic everywhere.
    pub fn unit(dims: usize, nblocks: [usize; 3], cells: [usize; 3]) -> Self {
        DomainSpec {
            dims,
            lo: [0.0; 3],
            hi: [1.0; 3],
            nblocks,
            cells,
            nguard: NGUARD,
            boundary: [[BoundaryType::Periodic; 2]; 3],
            inflow: [[0.0; 2]; 3],
            maxblocks: usize::MAX,
        }
    }

    pub fn with_boundary(mut self, axis: usize, low: BoundaryType, high: BoundaryType) -> Self {
        self.boundary[axis] = [low, high];
        self
    }

    pub fn with_bounds(mut self, lo: [f64; 3], hi: [f64; 3]) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn block_count(&self) -> usize {
        self.nblocks[..self.dims].iter().product()
    }

    /// Global cell count along each active axis (1 on inactive z).
    pub fn global_cells(&self) -> [usize; 3] {
        let mut n = [1; 3];
        for a in 0..self.dims {
            n[a] = self.nblocks[a] * self.cells[a];
        }
        n
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.nblocks[axis] * self.cells[axis]) as f64
    }

    pub fn validate(&self) -> Result<f64, GridError> {
        if self.dims != 2 && self.dims != 3 {
            return Err(GridError::BadDims(self.dims));
        }
        if self.nguard < 2 {
            return Err(GridError::GuardTooNarrow(self.nguard));
        }
        let mut h = [0.0; 3];
        for a in 0..self.dims {
            if self.nblocks[a] == 0 || self.cells[a] == 0 {
                return Err(GridError::EmptyAxis(a));
            }
            if !(self.hi[a] > self.lo[a]) {
                return Err(GridError::BadBounds { axis: a, lo: self.lo[a], hi: self.hi[a] });
            }
            let [l, r] = self.boundary[a];
            if (l == BoundaryType::Periodic) != (r == BoundaryType::Periodic) {
                return Err(GridError::UnpairedPeriodic(a));
            }
            h[a] = self.spacing(a);
        }
        for a in 1..self.dims {
            if (h[a] - h[0]).abs() > 1e-12 * h[0] {
                return Err(GridError::Anisotropic(h));
            }
        }
        let blocks = self.block_count();
        if blocks > self.maxblocks {
            return Err(GridError::TooManyBlocks { blocks, maxblocks: self.maxblocks });
        }
        Ok(h[0])
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.boundary[axis][0] == BoundaryType::Periodic
    }
}

/// How guard cells of a variable are filled at physical boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcKind {
    /// Face-normal velocity component (face-centered) or its cell average.
    Velocity,
    /// Zero-gradient scalar.
    Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Persistence {
    Checkpoint,
    Plot,
    Scratch,
}

impl Persistence {
    pub fn as_str(self) -> &'static str {
        match self {
            Persistence::Checkpoint => "checkpoint",
            Persistence::Plot => "plot",
            Persistence::Scratch => "scratch",
        }
    }
}

impl FromStr for Persistence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "checkpoint" => Ok(Persistence::Checkpoint),
            "plot" => Ok(Persistence::Plot),
            "scratch" => Ok(Persistence::Scratch),
            other => Err(format!("unknown persistence `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarSpec {
    pub name: String,
    pub centering: Centering,
    pub persistence: Persistence,
    pub bc: BcKind,
}

/// Handle to a registered variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Ordered set of grid variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldRegistry {
    vars: Vec<VarSpec>,
}

impl FieldRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a variable. Face-centered variables that persist are treated
    /// as velocity components for boundary purposes.
    pub fn register(
        &mut self,
        name: &str,
        centering: Centering,
        persistence: Persistence,
    ) -> Result<VarId, GridError> {
        let bc = if centering.face_axis().is_some() {
            BcKind::Velocity
        } else {
            BcKind::Scalar
        };
        self.register_with(VarSpec { name: name.to_string(), centering, persistence, bc })
    }

    pub fn register_with(&mut self, spec: VarSpec) -> Result<VarId, GridError> {
        if self.id(&spec.name).is_some() {
            return Err(GridError::DuplicateVariable(spec.name));
        }
        self.vars.push(spec);
        Ok(VarId(self.vars.len() - 1))
    }

    /// Returns the existing handle if `name` is already registered with the
    /// same centering.
    pub fn ensure(
        &mut self,
        name: &str,
        centering: Centering,
        persistence: Persistence,
    ) -> Result<VarId, GridError> {
        match self.id(name) {
            Some(id) if self.vars[id.0].centering == centering => Ok(id),
            Some(_) => Err(GridError::DuplicateVariable(name.to_string())),
            None => self.register(name, centering, persistence),
        }
    }

    pub fn id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn require(&self, name: &str) -> Result<VarId, GridError> {
        self.id(name).ok_or_else(|| GridError::UnknownVariable(name.to_string()))
    }

    pub fn spec(&self, id: VarId) -> &VarSpec {
        &self.vars[id.0]
    }

    pub fn spec_mut(&mut self, id: VarId) -> &mut VarSpec {
        &mut self.vars[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &VarSpec)> {
        self.vars.iter().enumerate().map(|(i, v)| (VarId(i), v))
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// One block of the domain with all of its variables.
#[derive(Clone, Debug)]
pub struct Tile {
    pub index: [usize; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub dx: f64,
    pub dims: usize,
    fields: Vec<Field>,
}

impl Tile {
    pub fn field(&self, id: VarId) -> &Field {
        &self.fields[id.0]
    }

    pub fn field_mut(&mut self, id: VarId) -> &mut Field {
        &mut self.fields[id.0]
    }

    /// Two distinct fields, the second mutably.
    pub fn field_pair_mut(&mut self, read: VarId, write: VarId) -> (&Field, &mut Field) {
        assert_ne!(read, write);
        if read.0 < write.0 {
            let (a, b) = self.fields.split_at_mut(write.0);
            (&a[read.0], &mut b[0])
        } else {
            let (a, b) = self.fields.split_at_mut(read.0);
            (&b[0], &mut a[write.0])
        }
    }

    pub fn replace(&mut self, id: VarId, field: Field) {
        assert!(self.fields[id.0].same_layout(&field), "layout mismatch");
        self.fields[id.0] = field;
    }

    pub fn coord(&self, id: VarId, p: [usize; 3]) -> [f64; 3] {
        self.fields[id.0].coord(p, self.lo, self.dx)
    }
}

/// The block-structured domain Ω.
#[derive(Clone, Debug)]
pub struct BlockGrid {
    domain: DomainSpec,
    registry: FieldRegistry,
    shape: BlockShape,
    dx: f64,
    tiles: Vec<Tile>,
}

/// Global (all-block) array of the owned points of one variable.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalField {
    pub n: [usize; 3],
    pub data: Vec<f64>,
}

impl GlobalField {
    pub fn zeros(n: [usize; 3]) -> Self {
        GlobalField { n, data: vec![0.0; n[0] * n[1] * n[2]] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }
}

impl BlockGrid {
    /// Allocates every block with zero-initialised variables.
    pub fn new(domain: DomainSpec, registry: FieldRegistry) -> Result<Self, GridError> {
        let dx = domain.validate()?;
        let shape = BlockShape::new(domain.dims, domain.cells, domain.nguard);
        let nb = domain.nblocks;
        let nbz = if domain.dims == 3 { nb[2] } else { 1 };
        let mut tiles = Vec::with_capacity(domain.block_count());
        for bk in 0..nbz {
            for bj in 0..nb[1] {
                for bi in 0..nb[0] {
                    let index = [bi, bj, bk];
                    let mut lo = [0.0; 3];
                    let mut hi = [0.0; 3];
                    for a in 0..3 {
                        if a < domain.dims {
                            let w = domain.cells[a] as f64 * dx;
                            lo[a] = domain.lo[a] + index[a] as f64 * w;
                            hi[a] = if index[a] + 1 == nb[a] { domain.hi[a] } else { lo[a] + w };
                        } else {
                            lo[a] = domain.lo[a];
                            hi[a] = domain.lo[a] + dx;
                        }
                    }
                    let fields = registry
                        .iter()
                        .map(|(_, v)| Field::zeros(v.centering, shape))
                        .collect();
                    tiles.push(Tile { index, lo, hi, dx, dims: domain.dims, fields });
                }
            }
        }
        Ok(BlockGrid { domain, registry, shape, dx, tiles })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn registry(&self) -> &FieldRegistry {
        &self.registry
    }

    pub fn dims(&self) -> usize {
        self.domain.dims
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn var(&self, name: &str) -> Result<VarId, GridError> {
        self.registry.require(name)
    }

    /// Blocks in lexicographic order, x fastest.
    pub fn tiles(&self) -> impl Iterator<Item = &Tile> {
        self.tiles.iter()
    }

    pub fn tiles_mut(&mut self) -> std::slice::IterMut<'_, Tile> {
        self.tiles.iter_mut()
    }

    pub fn tiles_slice(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tiles_slice_mut(&mut self) -> &mut [Tile] {
        &mut self.tiles
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    fn tile_at(&self, index: [usize; 3]) -> usize {
        let nb = self.domain.nblocks;
        index[0] + nb[0] * (index[1] + nb[1] * index[2])
    }

    /// Neighbouring block across `side` of `axis`, wrapping on periodic axes.
    fn neighbor(&self, index: [usize; 3], axis: usize, side: usize) -> Option<usize> {
        let nb = self.domain.nblocks[axis];
        let mut other = index;
        if side == 0 {
            if index[axis] > 0 {
                other[axis] -= 1;
            } else if self.domain.is_periodic(axis) {
                other[axis] = nb - 1;
            } else {
                return None;
            }
        } else if index[axis] + 1 < nb {
            other[axis] += 1;
        } else if self.domain.is_periodic(axis) {
            other[axis] = 0;
        } else {
            return None;
        }
        Some(self.tile_at(other))
    }

    /// Refreshes guard layers of the named variables.
    pub fn fill_guard_cells(&mut self, names: &[&str]) -> Result<(), GridError> {
        let ids = names
            .iter()
            .map(|n| self.registry.require(n))
            .collect::<Result<Vec<_>, _>>()?;
        self.fill_guard_ids(&ids);
        Ok(())
    }

    /// Axis-by-axis sweep: halo copies from neighbours, then physical
    /// boundary conditions. Later sweeps overwrite the corner regions written
    /// by earlier ones, so the result depends on interiors only.
    pub fn fill_guard_ids(&mut self, ids: &[VarId]) {
        for axis in 0..self.domain.dims {
            for &id in ids {
                self.fill_axis(id, axis);
            }
        }
    }

    fn fill_axis(&mut self, id: VarId, axis: usize) {
        let spec = self.registry.spec(id).clone();
        for t in 0..self.tiles.len() {
            for side in 0..2 {
                match self.neighbor(self.tiles[t].index, axis, side) {
                    Some(src) => {
                        let (dst_box, src_box) = halo_boxes(&self.tiles[t].fields[id.0], axis, side);
                        let vals = read_box(&self.tiles[src].fields[id.0], src_box);
                        write_box(&mut self.tiles[t].fields[id.0], dst_box, &vals);
                    }
                    None => {
                        let bc = self.domain.boundary[axis][side];
                        let inflow = self.domain.inflow[axis][side];
                        apply_physical(self.tiles[t].field_mut(id), &spec, axis, side, bc, inflow);
                    }
                }
            }
        }
    }

    /// Gathers the owned points of a variable into one global array. Faces
    /// shared by two blocks are taken from the block on the high side.
    pub fn gather(&self, id: VarId) -> GlobalField {
        let centering = self.registry.spec(id).centering;
        let mut n = self.domain.global_cells();
        if let Some(a) = centering.face_axis() {
            n[a] += 1;
        }
        let mut out = GlobalField::zeros(n);
        for tile in &self.tiles {
            let f = &tile.fields[id.0];
            let g = f.guards();
            for p in f.interior_points() {
                let gi = self.global_index(tile.index, p, g);
                let k = out.idx(gi[0], gi[1], gi[2]);
                out.data[k] = f.get(p);
            }
        }
        out
    }

    /// Writes a global array back into every block's owned points.
    pub fn scatter(&mut self, id: VarId, global: &GlobalField) {
        let cells = self.shape.cells;
        for tile in &mut self.tiles {
            let f = &mut tile.fields[id.0];
            let g = f.guards();
            let pts: Vec<_> = f.interior_points().collect();
            for p in pts {
                let mut gi = [0; 3];
                for a in 0..3 {
                    gi[a] = tile.index[a] * cells[a] + p[a] - g[a];
                }
                let v = global.at(gi[0], gi[1], gi[2]);
                f.set(p[0], p[1], p[2], v);
            }
        }
    }

    fn global_index(&self, block: [usize; 3], p: [usize; 3], g: [usize; 3]) -> [usize; 3] {
        let mut gi = [0; 3];
        for a in 0..3 {
            gi[a] = block[a] * self.shape.cells[a] + p[a] - g[a];
        }
        gi
    }
}

type IndexBox = ([usize; 3], [usize; 3]);

/// Destination (guard) box on this block and matching source box on the
/// neighbour for a halo copy across `side` of `axis`.
fn halo_boxes(f: &Field, axis: usize, side: usize) -> (IndexBox, IndexBox) {
    let ext = f.ext();
    let g = f.guards()[axis];
    let n = f.shape().cells[axis];
    let mut dlo = [0; 3];
    let mut dhi = ext;
    let mut slo = [0; 3];
    let mut shi = ext;
    if side == 0 {
        dlo[axis] = 0;
        dhi[axis] = g;
        slo[axis] = n;
        shi[axis] = n + g;
    } else {
        // High side includes the shared face for face-normal arrays.
        dlo[axis] = g + n;
        dhi[axis] = ext[axis];
        slo[axis] = g;
        shi[axis] = g + (ext[axis] - g - n);
    }
    ((dlo, dhi), (slo, shi))
}

fn read_box(f: &Field, (lo, hi): IndexBox) -> Vec<f64> {
    let mut out = Vec::with_capacity((hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                out.push(f.at(i, j, k));
            }
        }
    }
    out
}

fn write_box(f: &mut Field, (lo, hi): IndexBox, vals: &[f64]) {
    let mut it = vals.iter();
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                f.set(i, j, k, *it.next().expect("slab size"));
            }
        }
    }
}

/// Applies a physical boundary on one face of one block.
fn apply_physical(
    f: &mut Field,
    spec: &VarSpec,
    axis: usize,
    side: usize,
    bc: BoundaryType,
    inflow: f64,
) {
    let ext = f.ext();
    let g = f.guards()[axis];
    let n = f.shape().cells[axis];
    let normal = spec.bc == BcKind::Velocity && spec.centering.face_axis() == Some(axis);
    let velocity = spec.bc == BcKind::Velocity;
    let s = f.strides()[axis];

    // Walk every line along `axis`.
    let mut lo = [0usize; 3];
    let mut hi = ext;
    lo[axis] = 0;
    hi[axis] = 1;
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                let base = f.idx(i, j, k);
                let data = f.data_mut();
                if normal {
                    let b = if side == 0 { g } else { g + n };
                    let bnd = base + b * s;
                    match bc {
                        BoundaryType::NoslipIns | BoundaryType::SlipIns => data[bnd] = 0.0,
                        BoundaryType::InflowIns => data[bnd] = inflow,
                        _ => {}
                    }
                    let wall = data[bnd];
                    for m in 1..=g {
                        let (dst, src) = if side == 0 {
                            (bnd - m * s, bnd + m * s)
                        } else {
                            (bnd + m * s, bnd - m * s)
                        };
                        data[dst] = match bc {
                            BoundaryType::OutflowIns => wall,
                            _ => 2.0 * wall - data[src],
                        };
                    }
                } else {
                    let sign = match (velocity, bc) {
                        (true, BoundaryType::NoslipIns | BoundaryType::InflowIns) => -1.0,
                        _ => 1.0,
                    };
                    for m in 0..g {
                        let (dst, src) = if side == 0 {
                            (g - 1 - m, g + m)
                        } else {
                            (g + n + m, g + n - 1 - m)
                        };
                        data[base + dst * s] = sign * data[base + src * s];
                    }
                }
            }
        }
    }
}
