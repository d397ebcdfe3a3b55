//! Variable-coefficient pressure Poisson solver.
//!
//! Solves `∇·(β∇p) = rhs` on the global cell-centered mesh. Face coefficients
//! are harmonic means of the cell values of `β`. Outflow faces impose `p = 0`,
//! periodic faces wrap and every other face is homogeneous Neumann. The
//! default method is conjugate gradients preconditioned by one symmetric
//! V-cycle of aggregation multigrid with red-black Gauss-Seidel smoothing; a
//! plain red-black SOR iteration is also available.
//!
//! All reductions run sequentially in a fixed order, so results do not depend
//! on how the rest of the step was scheduled.

use thiserror::Error;

use super::{BoundaryType, DomainSpec, GlobalField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoissonError {
    #[error("Poisson solve did not converge in {iterations} iterations (relative residual {last:e})")]
    NonConvergence { iterations: usize, last: f64, history: Vec<f64> },
    #[error("coefficient must be positive and finite, found {0}")]
    BadCoefficient(f64),
    #[error("right-hand side contains non-finite values")]
    NonFiniteRhs,
    #[error("array has {got} points, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PoissonMethod {
    /// Multigrid-preconditioned conjugate gradients.
    MgPcg,
    /// Red-black successive over-relaxation.
    Sor { omega: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    /// Stop when `‖rhs − ∇·(β∇p)‖∞ ≤ tol · ‖rhs‖∞`.
    pub tol: f64,
    pub max_iters: usize,
    pub method: PoissonMethod,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions { tol: 1e-9, max_iters: 500, method: PoissonMethod::MgPcg }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonReport {
    pub iterations: usize,
    /// Relative L∞ residual after each iteration (index 0 = initial guess).
    pub history: Vec<f64>,
    /// Relative L∞ residual of the returned solution, recomputed by applying
    /// the operator.
    pub relative_residual: f64,
    /// Whether the operator had a constant nullspace (no Dirichlet face).
    pub singular: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FaceBc {
    Neumann,
    Dirichlet,
    Periodic,
}

/// Discrete operator on one grid level, stored as face weights.
///
/// `A p = diag·p − Σ w·p_neighbour` equals `−∇·(β∇p)` on the finest level.
#[derive(Clone, Debug)]
struct Level {
    n: [usize; 3],
    dims: usize,
    bc: [[FaceBc; 2]; 3],
    /// Per axis, face weights with `n[a] + 1` entries along `a`.
    w: [Vec<f64>; 3],
    diag: Vec<f64>,
}

impl Level {
    fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    #[inline]
    fn cell(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    fn face(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let mut m = self.n;
        m[axis] += 1;
        i + m[0] * (j + m[1] * k)
    }

    fn face_len(&self, axis: usize) -> usize {
        let mut m = self.n;
        m[axis] += 1;
        m[0] * m[1] * m[2]
    }

    fn compute_diag(&mut self) {
        let mut diag = vec![0.0; self.len()];
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    let c = [i, j, k];
                    let mut d = 0.0;
                    for a in 0..self.dims {
                        let mut hi = c;
                        hi[a] += 1;
                        d += self.w[a][self.face(a, c[0], c[1], c[2])];
                        d += self.w[a][self.face(a, hi[0], hi[1], hi[2])];
                    }
                    diag[self.cell(i, j, k)] = d;
                }
            }
        }
        self.diag = diag;
    }

    /// Visits every coupling of cell `c`: yields (weight, neighbour cell index)
    /// for interior and periodic faces.
    #[inline]
    fn for_neighbors(&self, c: [usize; 3], mut f: impl FnMut(f64, usize)) {
        for a in 0..self.dims {
            let n = self.n[a];
            // low face
            let wl = self.w[a][self.face(a, c[0], c[1], c[2])];
            if c[a] > 0 {
                let mut o = c;
                o[a] -= 1;
                f(wl, self.cell(o[0], o[1], o[2]));
            } else if self.bc[a][0] == FaceBc::Periodic {
                let mut o = c;
                o[a] = n - 1;
                f(wl, self.cell(o[0], o[1], o[2]));
            }
            let mut hi = c;
            hi[a] += 1;
            let wh = self.w[a][self.face(a, hi[0], hi[1], hi[2])];
            if c[a] + 1 < n {
                let mut o = c;
                o[a] += 1;
                f(wh, self.cell(o[0], o[1], o[2]));
            } else if self.bc[a][1] == FaceBc::Periodic {
                let mut o = c;
                o[a] = 0;
                f(wh, self.cell(o[0], o[1], o[2]));
            }
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                for i in 0..self.n[0] {
                    let c = self.cell(i, j, k);
                    let mut s = self.diag[c] * x[c];
                    self.for_neighbors([i, j, k], |w, o| s -= w * x[o]);
                    out[c] = s;
                }
            }
        }
    }

    /// One Gauss-Seidel half sweep over cells of the given colour.
    fn smooth_color(&self, x: &mut [f64], b: &[f64], color: usize, omega: f64) {
        for k in 0..self.n[2] {
            for j in 0..self.n[1] {
                let start = (color + j + k) % 2;
                for i in (start..self.n[0]).step_by(2) {
                    let c = self.cell(i, j, k);
                    let d = self.diag[c];
                    if d == 0.0 {
                        continue;
                    }
                    let mut s = b[c];
                    self.for_neighbors([i, j, k], |w, o| s += w * x[o]);
                    x[c] = (1.0 - omega) * x[c] + omega * s / d;
                }
            }
        }
    }

    fn coarsenable(&self) -> [bool; 3] {
        let mut c = [false; 3];
        for a in 0..self.dims {
            c[a] = self.n[a] % 2 == 0 && self.n[a] >= 4;
        }
        c
    }

    /// Galerkin coarse operator for piecewise-constant aggregation.
    fn coarsen(&self, which: [bool; 3]) -> Level {
        let mut nc = self.n;
        for a in 0..3 {
            if which[a] {
                nc[a] /= 2;
            }
        }
        let mut coarse = Level {
            n: nc,
            dims: self.dims,
            bc: self.bc,
            w: [Vec::new(), Vec::new(), Vec::new()],
            diag: Vec::new(),
        };
        for a in 0..self.dims {
            let mut wc = vec![0.0; coarse.face_len(a)];
            let mut m = self.n;
            m[a] += 1;
            for k in 0..m[2] {
                for j in 0..m[1] {
                    for i in 0..m[0] {
                        let f = [i, j, k];
                        if which[a] && f[a] % 2 == 1 {
                            continue;
                        }
                        let mut cf = [0; 3];
                        for b in 0..3 {
                            cf[b] = if which[b] { f[b] / 2 } else { f[b] };
                        }
                        wc[coarse.face(a, cf[0], cf[1], cf[2])] += self.w[a][self.face(a, i, j, k)];
                    }
                }
            }
            coarse.w[a] = wc;
        }
        coarse.compute_diag();
        coarse
    }

    fn map_coarse(&self, which: [bool; 3], i: usize, j: usize, k: usize, nc: [usize; 3]) -> usize {
        let ci = if which[0] { i / 2 } else { i };
        let cj = if which[1] { j / 2 } else { j };
        let ck = if which[2] { k / 2 } else { k };
        ci + nc[0] * (cj + nc[1] * ck)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn remove_mean(a: &mut [f64]) {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter_mut().for_each(|x| *x -= mean);
}

/// Dense Cholesky factor of a small SPD matrix.
#[derive(Clone, Debug)]
struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    fn factor(level: &Level, singular: bool) -> Option<Self> {
        let n = level.len();
        let mut a = vec![0.0; n * n];
        for k in 0..level.n[2] {
            for j in 0..level.n[1] {
                for i in 0..level.n[0] {
                    let c = level.cell(i, j, k);
                    a[c * n + c] += level.diag[c];
                    level.for_neighbors([i, j, k], |w, o| a[c * n + o] -= w);
                }
            }
        }
        if singular {
            let shift = level.diag.iter().sum::<f64>() / (n * n) as f64;
            a.iter_mut().for_each(|x| *x += shift);
        }
        for j in 0..n {
            let mut d = a[j * n + j];
            for p in 0..j {
                d -= a[j * n + p] * a[j * n + p];
            }
            if d <= 0.0 {
                return None;
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for p in 0..j {
                    s -= a[i * n + p] * a[j * n + p];
                }
                a[i * n + j] = s / d;
            }
        }
        Some(DenseCholesky { n, l: a })
    }

    fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s -= self.l[i * n + p] * y[p];
            }
            y[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= self.l[p * n + i] * y[p];
            }
            y[i] = s / self.l[i * n + i];
        }
        x.copy_from_slice(&y);
    }
}

const COARSEST_DENSE: usize = 512;
const SMOOTH_SWEEPS: usize = 2;

/// The assembled operator for one solve.
#[derive(Clone, Debug)]
pub struct PoissonOperator {
    levels: Vec<Level>,
    coarsened: Vec<[bool; 3]>,
    coarse_solver: Option<DenseCholesky>,
    singular: bool,
    dx: f64,
}

impl PoissonOperator {
    /// Builds the operator for `∇·(β∇p)` from a cell-centered `β`.
    pub fn new(domain: &DomainSpec, beta: &GlobalField) -> Result<Self, PoissonError> {
        let n = domain.global_cells();
        let len = n[0] * n[1] * n[2];
        if beta.data.len() != len {
            return Err(PoissonError::ShapeMismatch { expected: len, got: beta.data.len() });
        }
        if let Some(&b) = beta.data.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(PoissonError::BadCoefficient(b));
        }
        let dx = domain.validate().unwrap_or_else(|_| domain.spacing(0));
        let idx2 = 1.0 / (dx * dx);
        let mut bc = [[FaceBc::Neumann; 2]; 3];
        for a in 0..domain.dims {
            for s in 0..2 {
                bc[a][s] = match domain.boundary[a][s] {
                    BoundaryType::Periodic => FaceBc::Periodic,
                    BoundaryType::OutflowIns => FaceBc::Dirichlet,
                    _ => FaceBc::Neumann,
                };
            }
        }
        let mut fine = Level {
            n,
            dims: domain.dims,
            bc,
            w: [Vec::new(), Vec::new(), Vec::new()],
            diag: Vec::new(),
        };
        for a in 0..domain.dims {
            let mut w = vec![0.0; fine.face_len(a)];
            let mut m = n;
            m[a] += 1;
            for k in 0..m[2] {
                for j in 0..m[1] {
                    for i in 0..m[0] {
                        let f = [i, j, k];
                        let fi = f[a];
                        let cell_of = |c: usize| {
                            let mut q = f;
                            q[a] = c;
                            beta.at(q[0], q[1], q[2])
                        };
                        let val = if fi > 0 && fi < n[a] {
                            let (bl, br) = (cell_of(fi - 1), cell_of(fi));
                            2.0 * bl * br / (bl + br) * idx2
                        } else {
                            let side = if fi == 0 { 0 } else { 1 };
                            match bc[a][side] {
                                FaceBc::Neumann => 0.0,
                                FaceBc::Dirichlet => {
                                    let b = cell_of(if fi == 0 { 0 } else { n[a] - 1 });
                                    2.0 * b * idx2
                                }
                                FaceBc::Periodic => {
                                    let (bl, br) = (cell_of(n[a] - 1), cell_of(0));
                                    2.0 * bl * br / (bl + br) * idx2
                                }
                            }
                        };
                        w[fine.face(a, i, j, k)] = val;
                    }
                }
            }
            fine.w[a] = w;
        }
        fine.compute_diag();
        let singular = !(0..domain.dims)
            .any(|a| bc[a].iter().any(|s| *s == FaceBc::Dirichlet));

        let mut levels = vec![fine];
        let mut coarsened = Vec::new();
        loop {
            let last = levels.last().expect("at least one level");
            if last.len() <= 64 {
                break;
            }
            let which = last.coarsenable();
            if !which.iter().any(|&c| c) {
                break;
            }
            let next = last.coarsen(which);
            coarsened.push(which);
            levels.push(next);
        }
        let coarsest = levels.last().expect("level");
        let coarse_solver = if coarsest.len() <= COARSEST_DENSE {
            DenseCholesky::factor(coarsest, singular)
        } else {
            None
        };
        Ok(PoissonOperator { levels, coarsened, coarse_solver, singular, dx })
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn cells(&self) -> [usize; 3] {
        self.levels[0].n
    }

    /// Evaluates `∇·(β∇p)`.
    pub fn apply(&self, p: &GlobalField) -> GlobalField {
        let lvl = &self.levels[0];
        let mut out = GlobalField::zeros(lvl.n);
        lvl.apply(&p.data, &mut out.data);
        out.data.iter_mut().for_each(|x| *x = -*x);
        out
    }

    /// Face flux `β ∂p/∂n` along `axis`, including boundary faces, with
    /// exactly the coefficients used by [`apply`](Self::apply).
    pub fn face_flux(&self, p: &GlobalField, axis: usize) -> GlobalField {
        let lvl = &self.levels[0];
        let n = lvl.n;
        let mut m = n;
        m[axis] += 1;
        let mut out = GlobalField::zeros(m);
        let dx = self.dx;
        for k in 0..m[2] {
            for j in 0..m[1] {
                for i in 0..m[0] {
                    let f = [i, j, k];
                    let w = lvl.w[axis][lvl.face(axis, i, j, k)];
                    let at = |c: usize| {
                        let mut q = f;
                        q[axis] = c;
                        p.at(q[0], q[1], q[2])
                    };
                    let fi = f[axis];
                    let flux = if fi > 0 && fi < n[axis] {
                        w * dx * (at(fi) - at(fi - 1))
                    } else {
                        let side = if fi == 0 { 0 } else { 1 };
                        match lvl.bc[axis][side] {
                            FaceBc::Neumann => 0.0,
                            FaceBc::Periodic => w * dx * (at(0) - at(n[axis] - 1)),
                            FaceBc::Dirichlet if side == 0 => w * dx * at(0),
                            FaceBc::Dirichlet => -w * dx * at(n[axis] - 1),
                        }
                    };
                    let o = out.idx(i, j, k);
                    out.data[o] = flux;
                }
            }
        }
        out
    }

    /// Solves `∇·(β∇p) = rhs`, starting from `guess` if given.
    pub fn solve(
        &self,
        rhs: &GlobalField,
        guess: Option<&GlobalField>,
        opts: &PoissonOptions,
    ) -> Result<(GlobalField, PoissonReport), PoissonError> {
        let lvl = &self.levels[0];
        if rhs.data.len() != lvl.len() {
            return Err(PoissonError::ShapeMismatch { expected: lvl.len(), got: rhs.data.len() });
        }
        if rhs.data.iter().any(|x| !x.is_finite()) {
            return Err(PoissonError::NonFiniteRhs);
        }
        // A = −L, so A p = −rhs.
        let mut b: Vec<f64> = rhs.data.iter().map(|x| -x).collect();
        if self.singular {
            remove_mean(&mut b);
        }
        let bnorm = norm_inf(&b);
        let mut x = match guess {
            Some(g) if g.data.len() == b.len() => g.data.clone(),
            _ => vec![0.0; b.len()],
        };
        if bnorm == 0.0 {
            let report = PoissonReport {
                iterations: 0,
                history: vec![0.0],
                relative_residual: 0.0,
                singular: self.singular,
            };
            return Ok((GlobalField::zeros(lvl.n), report));
        }
        if self.singular {
            remove_mean(&mut x);
        }
        let (iterations, history) = match opts.method {
            PoissonMethod::MgPcg => self.pcg(&b, &mut x, bnorm, opts)?,
            PoissonMethod::Sor { omega } => self.sor(&b, &mut x, bnorm, omega, opts)?,
        };
        if self.singular {
            remove_mean(&mut x);
        }
        let relative_residual = self.true_residual(&b, &x) / bnorm;
        let report = PoissonReport { iterations, history, relative_residual, singular: self.singular };
        Ok((GlobalField { n: lvl.n, data: x }, report))
    }

    fn true_residual(&self, b: &[f64], x: &[f64]) -> f64 {
        let mut ax = vec![0.0; b.len()];
        self.levels[0].apply(x, &mut ax);
        b.iter().zip(&ax).fold(0.0, |m, (bi, ai)| m.max((bi - ai).abs()))
    }

    fn pcg(
        &self,
        b: &[f64],
        x: &mut [f64],
        bnorm: f64,
        opts: &PoissonOptions,
    ) -> Result<(usize, Vec<f64>), PoissonError> {
        let lvl = &self.levels[0];
        let n = b.len();
        let mut r = vec![0.0; n];
        lvl.apply(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let mut history = vec![norm_inf(&r) / bnorm];
        if history[0] <= opts.tol {
            return Ok((0, history));
        }
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; n];
        for it in 1..=opts.max_iters {
            lvl.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            let rel = norm_inf(&r) / bnorm;
            if rel <= opts.tol {
                // Confirm against the explicitly applied operator.
                let tr = self.true_residual(b, x) / bnorm;
                history.push(tr);
                if tr <= opts.tol {
                    return Ok((it, history));
                }
                lvl.apply(x, &mut r);
                for i in 0..n {
                    r[i] = b[i] - r[i];
                }
            } else {
                history.push(rel);
            }
            z = self.precondition(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(PoissonError::NonConvergence {
            iterations: opts.max_iters,
            last: *history.last().unwrap_or(&f64::NAN),
            history,
        })
    }

    fn sor(
        &self,
        b: &[f64],
        x: &mut [f64],
        bnorm: f64,
        omega: f64,
        opts: &PoissonOptions,
    ) -> Result<(usize, Vec<f64>), PoissonError> {
        let lvl = &self.levels[0];
        let mut history = vec![self.true_residual(b, x) / bnorm];
        if history[0] <= opts.tol {
            return Ok((0, history));
        }
        for it in 1..=opts.max_iters {
            lvl.smooth_color(x, b, 0, omega);
            lvl.smooth_color(x, b, 1, omega);
            if self.singular {
                remove_mean(x);
            }
            let rel = self.true_residual(b, x) / bnorm;
            history.push(rel);
            if rel <= opts.tol {
                return Ok((it, history));
            }
        }
        Err(PoissonError::NonConvergence {
            iterations: opts.max_iters,
            last: *history.last().unwrap_or(&f64::NAN),
            history,
        })
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z = self.vcycle(0, r);
        if self.singular {
            remove_mean(&mut z);
        }
        z
    }

    fn vcycle(&self, l: usize, r: &[f64]) -> Vec<f64> {
        let lvl = &self.levels[l];
        let mut z = vec![0.0; r.len()];
        if l + 1 == self.levels.len() {
            match &self.coarse_solver {
                Some(chol) => {
                    let mut rhs = r.to_vec();
                    if self.singular {
                        remove_mean(&mut rhs);
                    }
                    chol.solve(&rhs, &mut z);
                }
                None => {
                    for _ in 0..50 {
                        lvl.smooth_color(&mut z, r, 0, 1.0);
                        lvl.smooth_color(&mut z, r, 1, 1.0);
                    }
                    for _ in 0..50 {
                        lvl.smooth_color(&mut z, r, 1, 1.0);
                        lvl.smooth_color(&mut z, r, 0, 1.0);
                    }
                }
            }
            return z;
        }
        for _ in 0..SMOOTH_SWEEPS {
            lvl.smooth_color(&mut z, r, 0, 1.0);
            lvl.smooth_color(&mut z, r, 1, 1.0);
        }
        let mut az = vec![0.0; r.len()];
        lvl.apply(&z, &mut az);
        let which = self.coarsened[l];
        let coarse = &self.levels[l + 1];
        let mut rc = vec![0.0; coarse.len()];
        for k in 0..lvl.n[2] {
            for j in 0..lvl.n[1] {
                for i in 0..lvl.n[0] {
                    let c = lvl.cell(i, j, k);
                    rc[lvl.map_coarse(which, i, j, k, coarse.n)] += r[c] - az[c];
                }
            }
        }
        let zc = self.vcycle(l + 1, &rc);
        for k in 0..lvl.n[2] {
            for j in 0..lvl.n[1] {
                for i in 0..lvl.n[0] {
                    z[lvl.cell(i, j, k)] += zc[lvl.map_coarse(which, i, j, k, coarse.n)];
                }
            }
        }
        for _ in 0..SMOOTH_SWEEPS {
            lvl.smooth_color(&mut z, r, 1, 1.0);
            lvl.smooth_color(&mut z, r, 0, 1.0);
        }
        z
    }
}

/// Solves `∇·(β∇p) = rhs` on the domain's global cell mesh.
pub fn solve_poisson(
    domain: &DomainSpec,
    beta: &GlobalField,
    rhs: &GlobalField,
    opts: &PoissonOptions,
) -> Result<(GlobalField, PoissonReport), PoissonError> {
    PoissonOperator::new(domain, beta)?.solve(rhs, None, opts)
}
