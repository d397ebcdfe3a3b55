//! Pointwise transport kernels on tile arrays: upwind advection, flux-form
//! diffusion, Adams-Bashforth time integration, and level-set utilities.
//!
//! Every kernel reads guard points and writes owned points only. Returned
//! tendencies share the layout of their target and carry zero guards.

pub mod levelset;

use thiserror::Error;

use crate::grid::{Centering, Field};

pub use levelset::{
    curvature, redistance, redistance_step, smoothed_delta, smoothed_heaviside, RedistanceOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StencilError {
    #[error("centering mismatch: expected {expected}, found {found}")]
    CenteringMismatch { expected: Centering, found: Centering },
    #[error("array layouts differ")]
    LayoutMismatch,
    #[error("diffusivity must be positive, found {0}")]
    NonPositiveDiffusivity(f64),
    #[error("level set has no interface")]
    NoInterface,
}

/// Component `b` of the face velocity evaluated at point `p` of an array with
/// centering `at`. Off-axis components are averaged from the nearest faces.
#[inline]
pub fn velocity_at(v: &Field, b: usize, at: Centering, p: [usize; 3]) -> f64 {
    match at.face_axis() {
        Some(a) if a == b => v.get(p),
        None => {
            let mut q = p;
            q[b] += 1;
            0.5 * (v.get(p) + v.get(q))
        }
        Some(a) => {
            let mut w = p;
            w[a] -= 1;
            let mut pb = p;
            pb[b] += 1;
            let mut wb = w;
            wb[b] += 1;
            0.25 * (v.get(w) + v.get(p) + v.get(wb) + v.get(pb))
        }
    }
}

fn check_velocity(q: &Field, vel: &[&Field]) -> Result<(), StencilError> {
    for (b, v) in vel.iter().enumerate() {
        let expected = Centering::face(b);
        if v.centering() != expected {
            return Err(StencilError::CenteringMismatch { expected, found: v.centering() });
        }
        if v.shape() != q.shape() {
            return Err(StencilError::LayoutMismatch);
        }
    }
    Ok(())
}

/// First-order upwind `−u·∇Q`. `vel[b]` is the face velocity normal to axis
/// `b`; only the first `Q.dims()` components are used.
pub fn advect_upwind(q: &Field, vel: &[&Field], dx: f64) -> Result<Field, StencilError> {
    let dims = q.dims();
    check_velocity(q, &vel[..dims])?;
    let mut out = Field::zeros_like(q);
    let s = q.strides();
    let qd = q.data();
    let at = q.centering();
    let mut vals = Vec::with_capacity(qd.len());
    q.for_each_interior(|p, n| {
        let mut t = 0.0;
        for b in 0..dims {
            let w = velocity_at(vel[b], b, at, p);
            if w > 0.0 {
                t -= w * (qd[n] - qd[n - s[b]]) / dx;
            } else if w < 0.0 {
                t -= w * (qd[n + s[b]] - qd[n]) / dx;
            }
        }
        vals.push((n, t));
    });
    let od = out.data_mut();
    for (n, t) in vals {
        od[n] = t;
    }
    Ok(out)
}

/// Diffusion coefficient for [`diffuse_central`].
#[derive(Clone, Copy, Debug)]
pub enum Diffusivity<'a> {
    Constant(f64),
    /// Cell-centered coefficient with filled guards.
    Cell(&'a Field),
}

/// `∇·(K∇Q)` in flux form. Face coefficients are harmonic means of adjacent
/// cells for cell-centered `Q`; for face-centered `Q` they are the enclosed
/// cell value (along the face normal) or the arithmetic mean of the four
/// cells sharing the edge.
pub fn diffuse_central(q: &Field, k: Diffusivity<'_>, dx: f64) -> Result<Field, StencilError> {
    let dims = q.dims();
    if let Diffusivity::Constant(c) = k {
        if !(c > 0.0) {
            return Err(StencilError::NonPositiveDiffusivity(c));
        }
    }
    if let Diffusivity::Cell(kf) = k {
        if kf.centering() != Centering::Center {
            return Err(StencilError::CenteringMismatch {
                expected: Centering::Center,
                found: kf.centering(),
            });
        }
        if kf.shape() != q.shape() {
            return Err(StencilError::LayoutMismatch);
        }
    }
    let at = q.centering();
    let s = q.strides();
    let qd = q.data();
    let idx2 = 1.0 / (dx * dx);
    let mut vals = Vec::with_capacity(qd.len());
    let mut bad = None;
    q.for_each_interior(|p, n| {
        let mut t = 0.0;
        for b in 0..dims {
            let (klo, khi) = match k {
                Diffusivity::Constant(c) => (c, c),
                Diffusivity::Cell(kf) => face_coefficients(kf, at, p, b),
            };
            if !(klo > 0.0) || !(khi > 0.0) {
                bad = Some(if klo > 0.0 { khi } else { klo });
            }
            let flo = klo * (qd[n] - qd[n - s[b]]);
            let fhi = khi * (qd[n + s[b]] - qd[n]);
            t += (fhi - flo) * idx2;
        }
        vals.push((n, t));
    });
    if let Some(v) = bad {
        return Err(StencilError::NonPositiveDiffusivity(v));
    }
    let mut out = Field::zeros_like(q);
    let od = out.data_mut();
    for (n, t) in vals {
        od[n] = t;
    }
    Ok(out)
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Coefficients on the low and high flux points of `p` along axis `b`.
fn face_coefficients(kf: &Field, at: Centering, p: [usize; 3], b: usize) -> (f64, f64) {
    let shift = |q: [usize; 3], axis: usize, d: isize| {
        let mut r = q;
        r[axis] = (r[axis] as isize + d) as usize;
        r
    };
    match at.face_axis() {
        None => {
            let c = kf.get(p);
            (
                harmonic(kf.get(shift(p, b, -1)), c),
                harmonic(c, kf.get(shift(p, b, 1))),
            )
        }
        Some(a) if a == b => (kf.get(shift(p, b, -1)), kf.get(p)),
        Some(a) => {
            let w = shift(p, a, -1);
            let edge = |hi: [usize; 3], lo: [usize; 3]| {
                0.25 * (kf.get(lo) + kf.get(hi) + kf.get(shift(lo, b, -1)) + kf.get(shift(hi, b, -1)))
            };
            let low = edge(p, w);
            let high = edge(shift(p, b, 1), shift(w, b, 1));
            (low, high)
        }
    }
}

/// Adams-Bashforth increment; forward Euler when `first_step`.
#[inline]
pub fn ab2_increment(now: f64, prev: f64, dt: f64, first_step: bool) -> f64 {
    if first_step {
        dt * now
    } else {
        dt * (1.5 * now - 0.5 * prev)
    }
}

/// `Q += dt·(3/2·rhs_now − 1/2·rhs_prev)` on owned points, or forward Euler
/// when `first_step` (then `rhs_prev` is ignored).
pub fn integrate_ab2(q: &mut Field, rhs_now: &Field, rhs_prev: &Field, dt: f64, first_step: bool) {
    assert!(q.same_layout(rhs_now) && q.same_layout(rhs_prev), "layout mismatch");
    let mut pts = Vec::new();
    q.for_each_interior(|_, n| pts.push(n));
    let now = rhs_now.data();
    let prev = rhs_prev.data();
    let qd = q.data_mut();
    for n in pts {
        qd[n] += ab2_increment(now[n], prev[n], dt, first_step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BlockShape;

    fn shape2(n: usize) -> BlockShape {
        BlockShape::new(2, [n, n, 1], 2)
    }

    fn fill(f: &mut Field, dx: f64, g: impl Fn([f64; 3]) -> f64) {
        let pts: Vec<_> = f.points_with_margin(2).collect();
        for p in pts {
            let x = f.coord(p, [0.0; 3], dx);
            f.set(p[0], p[1], p[2], g(x));
        }
    }

    #[test]
    fn upwind_zero_velocity_gives_zero() {
        let sh = shape2(8);
        let mut q = Field::zeros(Centering::Center, sh);
        fill(&mut q, 0.125, |x| x[0] * x[1]);
        let u = Field::zeros(Centering::FaceX, sh);
        let v = Field::zeros(Centering::FaceY, sh);
        let t = advect_upwind(&q, &[&u, &v], 0.125).unwrap();
        assert!(t.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn upwind_linear_field_exact() {
        let sh = shape2(8);
        let dx = 0.125;
        let mut q = Field::zeros(Centering::Center, sh);
        fill(&mut q, dx, |x| x[0]);
        let mut u = Field::zeros(Centering::FaceX, sh);
        u.fill(1.0);
        let v = Field::zeros(Centering::FaceY, sh);
        let t = advect_upwind(&q, &[&u, &v], dx).unwrap();
        for p in t.interior_points() {
            assert!((t.get(p) + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn upwind_rejects_wrong_centering() {
        let sh = shape2(8);
        let q = Field::zeros(Centering::Center, sh);
        let u = Field::zeros(Centering::FaceY, sh);
        let v = Field::zeros(Centering::FaceY, sh);
        assert!(matches!(
            advect_upwind(&q, &[&u, &v], 0.1),
            Err(StencilError::CenteringMismatch { .. })
        ));
    }

    #[test]
    fn diffusion_of_constant_vanishes_and_quadratic_is_exact() {
        let sh = shape2(8);
        let dx = 0.125;
        let mut q = Field::zeros(Centering::Center, sh);
        q.fill(3.0);
        let t = diffuse_central(&q, Diffusivity::Constant(1.0), dx).unwrap();
        assert!(t.max_abs_interior() < 1e-12);
        fill(&mut q, dx, |x| x[0] * x[0]);
        let t = diffuse_central(&q, Diffusivity::Constant(1.0), dx).unwrap();
        for p in t.interior_points() {
            assert!((t.get(p) - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn face_centered_quadratic_is_exact_with_variable_layout() {
        let sh = shape2(8);
        let dx = 0.125;
        let mut q = Field::zeros(Centering::FaceX, sh);
        fill(&mut q, dx, |x| x[1] * x[1] + x[0] * x[0]);
        let mut k = Field::zeros(Centering::Center, sh);
        k.fill(0.5);
        let t = diffuse_central(&q, Diffusivity::Cell(&k), dx).unwrap();
        for p in t.interior_points() {
            assert!((t.get(p) - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nonpositive_diffusivity_rejected() {
        let q = Field::zeros(Centering::Center, shape2(4));
        assert_eq!(
            diffuse_central(&q, Diffusivity::Constant(0.0), 0.25).unwrap_err(),
            StencilError::NonPositiveDiffusivity(0.0)
        );
        let k = Field::zeros(Centering::Center, shape2(4));
        assert!(diffuse_central(&q, Diffusivity::Cell(&k), 0.25).is_err());
    }

    #[test]
    fn ab2_constant_rhs_and_euler_start() {
        let sh = shape2(4);
        let mut q = Field::zeros(Centering::Center, sh);
        let mut c = Field::zeros(Centering::Center, sh);
        c.fill(2.0);
        let mut garbage = Field::zeros(Centering::Center, sh);
        garbage.fill(f64::MAX);
        integrate_ab2(&mut q, &c, &garbage, 0.1, true);
        assert!(q.interior_points().all(|p| (q.get(p) - 0.2).abs() < 1e-15));
        integrate_ab2(&mut q, &c, &c, 0.1, false);
        assert!(q.interior_points().all(|p| (q.get(p) - 0.4).abs() < 1e-15));
    }

    #[test]
    fn ab2_ode_decay_is_second_order() {
        let solve = |n: usize| {
            let dt = 1.0 / n as f64;
            let (mut q, mut prev) = (1.0f64, 0.0);
            for s in 0..n {
                let now = -q;
                q += ab2_increment(now, prev, dt, s == 0);
                prev = now;
            }
            (q - (-1.0f64).exp()).abs()
        };
        let e1 = solve(100);
        let e2 = solve(200);
        assert!(e1 < 2e-3);
        assert!((e1 / e2).log2() > 1.9);
    }
}
