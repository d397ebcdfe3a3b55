//! Per-block staggered arrays.
//!
//! Every variable on a block is stored as a dense 3-D array that includes
//! guard layers. In 2-D runs the z extent is a single plane with no guards,
//! so the same indexing serves both dimensionalities.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Where a variable lives on the staggered mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Centering {
    Center,
    FaceX,
    FaceY,
    FaceZ,
}

impl Centering {
    pub const FACES: [Centering; 3] = [Centering::FaceX, Centering::FaceY, Centering::FaceZ];

    /// Axis normal to the face, or `None` for cell-centered data.
    pub fn face_axis(self) -> Option<usize> {
        match self {
            Centering::Center => None,
            Centering::FaceX => Some(0),
            Centering::FaceY => Some(1),
            Centering::FaceZ => Some(2),
        }
    }

    pub fn face(axis: usize) -> Centering {
        Self::FACES[axis]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Centering::Center => "CENTER",
            Centering::FaceX => "FACEX",
            Centering::FaceY => "FACEY",
            Centering::FaceZ => "FACEZ",
        }
    }
}

impl fmt::Display for Centering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Centering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CENTER" => Ok(Centering::Center),
            "FACEX" => Ok(Centering::FaceX),
            "FACEY" => Ok(Centering::FaceY),
            "FACEZ" => Ok(Centering::FaceZ),
            other => Err(format!("unknown centering `{other}`")),
        }
    }
}

/// Interior cell counts and guard widths of one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub cells: [usize; 3],
    pub guards: [usize; 3],
}

impl BlockShape {
    pub fn new(dims: usize, cells: [usize; 3], nguard: usize) -> Self {
        let mut guards = [nguard; 3];
        let mut cells = cells;
        if dims == 2 {
            guards[2] = 0;
            cells[2] = 1;
        }
        BlockShape { cells, guards }
    }

    /// Allocated extents for a variable with the given centering.
    pub fn extents(&self, centering: Centering) -> [usize; 3] {
        let mut ext = [0; 3];
        for a in 0..3 {
            ext[a] = self.cells[a] + 2 * self.guards[a];
            if centering.face_axis() == Some(a) {
                ext[a] += 1;
            }
        }
        ext
    }
}

/// A staggered array on one block, guards included.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    centering: Centering,
    shape: BlockShape,
    ext: [usize; 3],
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(centering: Centering, shape: BlockShape) -> Self {
        let ext = shape.extents(centering);
        Field {
            centering,
            shape,
            ext,
            data: vec![0.0; ext[0] * ext[1] * ext[2]],
        }
    }

    pub fn zeros_like(other: &Field) -> Self {
        Field::zeros(other.centering, other.shape)
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn shape(&self) -> BlockShape {
        self.shape
    }

    pub fn ext(&self) -> [usize; 3] {
        self.ext
    }

    pub fn guards(&self) -> [usize; 3] {
        self.shape.guards
    }

    /// 2 when the z axis is a single unguarded plane, else 3.
    pub fn dims(&self) -> usize {
        if self.shape.guards[2] == 0 && self.shape.cells[2] == 1 {
            2
        } else {
            3
        }
    }

    /// Calls `op(point, linear_index)` for every owned point, x fastest.
    #[inline]
    pub fn for_each_interior(&self, mut op: impl FnMut([usize; 3], usize)) {
        let (ri, rj, rk) = (self.interior(0), self.interior(1), self.interior(2));
        for k in rk {
            for j in rj.clone() {
                let row = self.ext[0] * (j + self.ext[1] * k);
                for i in ri.clone() {
                    op([i, j, k], row + i);
                }
            }
        }
    }

    /// Linear offsets between neighbouring points along each axis.
    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.ext[0], self.ext[0] * self.ext[1]]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.ext[0] && j < self.ext[1] && k < self.ext[2]);
        i + self.ext[0] * (j + self.ext[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.idx(i, j, k);
        self.data[n] = v;
    }

    #[inline]
    pub fn get(&self, p: [usize; 3]) -> f64 {
        self.at(p[0], p[1], p[2])
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Index range of owned (non-guard) points along `axis`. Face arrays own
    /// both bounding faces.
    pub fn interior(&self, axis: usize) -> Range<usize> {
        let g = self.shape.guards[axis];
        let mut n = self.shape.cells[axis];
        if self.centering.face_axis() == Some(axis) {
            n += 1;
        }
        g..g + n
    }

    /// Every owned point in x-fastest order.
    pub fn interior_points(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let (ri, rj, rk) = (self.interior(0), self.interior(1), self.interior(2));
        rk.flat_map(move |k| {
            let ri = ri.clone();
            rj.clone()
                .flat_map(move |j| ri.clone().map(move |i| [i, j, k]))
        })
    }

    /// Owned points that sit `margin` layers into the guard region as well.
    pub fn points_with_margin(&self, margin: usize) -> impl Iterator<Item = [usize; 3]> + '_ {
        let range = |a: usize| {
            let r = self.interior(a);
            let m = margin.min(self.shape.guards[a]);
            r.start - m..r.end + m
        };
        let (ri, rj, rk) = (range(0), range(1), range(2));
        rk.flat_map(move |k| {
            let ri = ri.clone();
            rj.clone()
                .flat_map(move |j| ri.clone().map(move |i| [i, j, k]))
        })
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn same_layout(&self, other: &Field) -> bool {
        self.centering == other.centering && self.shape == other.shape
    }

    /// Physical coordinate of point `p` on a block whose low corner is `lo`.
    pub fn coord(&self, p: [usize; 3], lo: [f64; 3], dx: f64) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..3 {
            let g = self.shape.guards[a] as f64;
            let shift = if self.centering.face_axis() == Some(a) { 0.0 } else { 0.5 };
            x[a] = lo[a] + (p[a] as f64 - g + shift) * dx;
        }
        x
    }

    /// Copies owned values from `other`, leaving guards untouched.
    pub fn copy_interior_from(&mut self, other: &Field) {
        assert!(self.same_layout(other), "layout mismatch");
        let pts: Vec<_> = self.interior_points().collect();
        for p in pts {
            let n = self.idx(p[0], p[1], p[2]);
            self.data[n] = other.data[n];
        }
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.interior_points()
            .map(|p| self.get(p).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_arrays_carry_one_extra_point() {
        let shape = BlockShape::new(3, [8, 6, 4], 2);
        let c = Field::zeros(Centering::Center, shape);
        let fx = Field::zeros(Centering::FaceX, shape);
        let fz = Field::zeros(Centering::FaceZ, shape);
        assert_eq!(c.ext(), [12, 10, 8]);
        assert_eq!(fx.ext(), [13, 10, 8]);
        assert_eq!(fz.ext(), [12, 10, 9]);
        assert_eq!(fx.interior(0), 2..11);
        assert_eq!(fx.interior(1), 2..8);
    }

    #[test]
    fn two_dimensional_shape_has_flat_z() {
        let shape = BlockShape::new(2, [16, 16, 7], 2);
        let f = Field::zeros(Centering::FaceY, shape);
        assert_eq!(f.ext(), [20, 21, 1]);
        assert_eq!(f.interior(2), 0..1);
        assert_eq!(f.interior_points().count(), 16 * 17);
    }

    #[test]
    fn coordinates_follow_staggering() {
        let shape = BlockShape::new(2, [4, 4, 1], 2);
        let c = Field::zeros(Centering::Center, shape);
        let fx = Field::zeros(Centering::FaceX, shape);
        let dx = 0.25;
        assert_eq!(c.coord([2, 2, 0], [0.0; 3], dx)[0], 0.125);
        assert_eq!(fx.coord([2, 2, 0], [0.0; 3], dx)[0], 0.0);
        assert_eq!(fx.coord([6, 2, 0], [0.0; 3], dx)[0], 1.0);
    }
}
