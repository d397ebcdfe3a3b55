//! Level-set helpers: reinitialization, smoothed step and delta functions,
//! and interface curvature.

use std::f64::consts::PI;

use super::StencilError;
use crate::grid::{Centering, Field};

/// `H_ε(φ)`: 0 below `−ε`, 1 above `ε`, sinusoidal blend in between.
#[inline]
pub fn smoothed_heaviside(phi: f64, eps: f64) -> f64 {
    if phi <= -eps {
        0.0
    } else if phi >= eps {
        1.0
    } else {
        0.5 * (1.0 + phi / eps + (PI * phi / eps).sin() / PI)
    }
}

/// `δ_ε(φ) = dH_ε/dφ`.
#[inline]
pub fn smoothed_delta(phi: f64, eps: f64) -> f64 {
    if phi.abs() >= eps {
        0.0
    } else {
        0.5 / eps * (1.0 + (PI * phi / eps).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RedistanceOptions {
    pub iters: usize,
    /// Cells with `|φ₀| > band·Δx` are left untouched.
    pub band: f64,
}

impl Default for RedistanceOptions {
    fn default() -> Self {
        RedistanceOptions { iters: 20, band: f64::INFINITY }
    }
}

/// Whether the owned cells of `phi` change sign (or touch zero).
pub fn has_interface(phi: &Field) -> bool {
    let (mut neg, mut pos) = (false, false);
    phi.for_each_interior(|p, _| {
        let v = phi.get(p);
        if v <= 0.0 {
            neg = true;
        }
        if v >= 0.0 {
            pos = true;
        }
    });
    neg && pos
}

/// One pseudo-time step of `∂φ/∂τ = S(φ₀)(1 − |∇φ|)` with a Godunov
/// Hamiltonian on ENO2 one-sided differences and `Δτ = Δx/2`. Cells adjacent
/// to the zero set of `φ₀` use the subcell fix, which keeps the interface
/// anchored to its initial location. Needs two guard layers.
/// Guards of the result are copied from `phi`.
pub fn redistance_step(phi: &Field, phi0: &Field, dx: f64, band: f64) -> Field {
    assert!(phi.same_layout(phi0), "layout mismatch");
    let dims = phi.dims();
    let s = phi.strides();
    let f = phi.data();
    let f0 = phi0.data();
    let dtau = 0.5 * dx;
    let mut out = phi.clone();
    let mut vals = Vec::new();
    phi.for_each_interior(|_, n| {
        let p0 = f0[n];
        if p0.abs() > band * dx {
            return;
        }
        let interface = (0..dims).any(|b| p0 * f0[n - s[b]] <= 0.0 || p0 * f0[n + s[b]] <= 0.0);
        let new = if interface {
            let (mut central, mut crude) = (0.0, 0.0);
            for b in 0..dims {
                let (l, r) = (f0[n - s[b]], f0[n + s[b]]);
                let c = 0.5 * (r - l);
                let m = c.abs().max((r - p0).abs()).max((p0 - l).abs()).max(1e-12);
                central += c * c;
                crude += m * m;
            }
            let norm = if central >= 0.25 * crude { central.sqrt() } else { crude.sqrt() };
            let d = dx * p0 / norm;
            f[n] - dtau / dx * (p0.signum() * f[n].abs() - d)
        } else {
            let mut g2 = 0.0;
            for b in 0..dims {
                let sb = s[b];
                let d2 = |m: usize| f[m + sb] - 2.0 * f[m] + f[m - sb];
                let a = (f[n] - f[n - sb] + 0.5 * minmod(d2(n - sb), d2(n))) / dx;
                let c = (f[n + sb] - f[n] - 0.5 * minmod(d2(n), d2(n + sb))) / dx;
                g2 += if p0 > 0.0 {
                    a.max(0.0).powi(2).max(c.min(0.0).powi(2))
                } else {
                    a.min(0.0).powi(2).max(c.max(0.0).powi(2))
                };
            }
            let sgn = p0 / (p0 * p0 + dx * dx).sqrt();
            f[n] - dtau * sgn * (g2.sqrt() - 1.0)
        };
        vals.push((n, new));
    });
    let od = out.data_mut();
    for (n, v) in vals {
        od[n] = v;
    }
    out
}

pub(crate) fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Reinitializes a single-tile level set. `fill` refreshes guard points and
/// is called before every pseudo-step and once at the end.
pub fn redistance(
    phi: &mut Field,
    opts: &RedistanceOptions,
    dx: f64,
    mut fill: impl FnMut(&mut Field),
) -> Result<(), StencilError> {
    fill(phi);
    if !has_interface(phi) {
        return Err(StencilError::NoInterface);
    }
    let phi0 = phi.clone();
    for _ in 0..opts.iters {
        fill(phi);
        *phi = redistance_step(phi, &phi0, dx, opts.band);
    }
    fill(phi);
    Ok(())
}

/// Floor on `|∇φ|` in [`curvature`].
pub const GRAD_FLOOR: f64 = 1e-12;

/// Mean curvature `∇·(∇φ/|∇φ|)` from central differences, clamped to
/// `±1/Δx`. Positive for a convex region of negative `φ`.
pub fn curvature(phi: &Field, dx: f64) -> Result<Field, StencilError> {
    if phi.centering() != Centering::Center {
        return Err(StencilError::CenteringMismatch {
            expected: Centering::Center,
            found: phi.centering(),
        });
    }
    let dims = phi.dims();
    let s = phi.strides();
    let f = phi.data();
    let mut vals = Vec::new();
    phi.for_each_interior(|_, n| {
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for a in 0..dims {
            g[a] = (f[n + s[a]] - f[n - s[a]]) / (2.0 * dx);
            h[a][a] = (f[n + s[a]] - 2.0 * f[n] + f[n - s[a]]) / (dx * dx);
            for b in a + 1..dims {
                let v = (f[n + s[a] + s[b]] - f[n + s[a] - s[b]] - f[n - s[a] + s[b]]
                    + f[n - s[a] - s[b]])
                    / (4.0 * dx * dx);
                h[a][b] = v;
                h[b][a] = v;
            }
        }
        let mut num = 0.0;
        for a in 0..dims {
            for b in 0..dims {
                if a != b {
                    num += h[b][b] * g[a] * g[a];
                }
            }
        }
        for a in 0..dims {
            for b in a + 1..dims {
                num -= 2.0 * g[a] * g[b] * h[a][b];
            }
        }
        let norm = (0..dims).map(|a| g[a] * g[a]).sum::<f64>().sqrt().max(GRAD_FLOOR);
        let k = num / (norm * norm * norm);
        vals.push((n, k.clamp(-1.0 / dx, 1.0 / dx)));
    });
    let mut out = Field::zeros_like(phi);
    let od = out.data_mut();
    for (n, v) in vals {
        od[n] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BlockShape;

    fn seeded(n: usize, dims: usize, g: impl Fn([f64; 3]) -> f64) -> (Field, f64) {
        let dx = 1.0 / n as f64;
        let sh = BlockShape::new(dims, [n, n, n], 2);
        let mut f = Field::zeros(Centering::Center, sh);
        let pts: Vec<_> = f.points_with_margin(2).collect();
        for p in pts {
            let x = f.coord(p, [0.0; 3], dx);
            f.set(p[0], p[1], p[2], g(x));
        }
        (f, dx)
    }

    /// Linear extrapolation of the two outermost owned layers into guards.
    fn extrapolate(f: &mut Field) {
        let ext = f.ext();
        let g = f.guards();
        for a in 0..f.dims() {
            let n = f.shape().cells[a];
            let s = f.strides()[a];
            let mut lo = [0; 3];
            let mut hi = ext;
            hi[a] = 1;
            lo[a] = 0;
            for k in lo[2]..hi[2] {
                for j in lo[1]..hi[1] {
                    for i in lo[0]..hi[0] {
                        let base = f.idx(i, j, k);
                        let d = f.data_mut();
                        for m in 0..g[a] {
                            let lo_dst = base + (g[a] - 1 - m) * s;
                            d[lo_dst] = 2.0 * d[lo_dst + s] - d[lo_dst + 2 * s];
                            let hi_dst = base + (g[a] + n + m) * s;
                            d[hi_dst] = 2.0 * d[hi_dst - s] - d[hi_dst - 2 * s];
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn heaviside_limits_and_midpoint() {
        let e = 0.1;
        assert_eq!(smoothed_heaviside(-10.0 * e, e), 0.0);
        assert_eq!(smoothed_heaviside(10.0 * e, e), 1.0);
        assert_eq!(smoothed_heaviside(0.0, e), 0.5);
        assert_eq!(smoothed_delta(2.0 * e, e), 0.0);
    }

    #[test]
    fn delta_integrates_to_one_on_grid_line() {
        let dx = 1.0 / 128.0;
        let eps = 2.5 * dx;
        for shift in [0.0, 0.3, 0.5, 0.77] {
            let sum: f64 = (-20..20)
                .map(|i| smoothed_delta((i as f64 + shift) * dx, eps) * dx)
                .sum();
            assert!((sum - 1.0).abs() < 0.02, "sum {sum}");
        }
    }

    #[test]
    fn plane_distance_is_a_fixed_point() {
        let nrm = [0.6, 0.8];
        let (mut phi, dx) = seeded(32, 2, |x| nrm[0] * (x[0] - 0.4) + nrm[1] * (x[1] - 0.55));
        let before = phi.clone();
        redistance(&mut phi, &RedistanceOptions::default(), dx, extrapolate).unwrap();
        for p in phi.interior_points() {
            assert!((phi.get(p) - before.get(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_sign_has_no_interface() {
        let (mut phi, dx) = seeded(8, 2, |_| 1.0);
        assert_eq!(
            redistance(&mut phi, &RedistanceOptions::default(), dx, extrapolate).unwrap_err(),
            StencilError::NoInterface
        );
    }

    #[test]
    fn stretched_circle_recovers_unit_gradient() {
        let r0 = 0.25;
        let dist = |x: [f64; 3]| ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() - r0;
        let (mut phi, dx) = seeded(128, 2, |x| 2.0 * dist(x));
        let sign0: Vec<_> = phi.interior_points().map(|p| phi.get(p) > 0.0).collect();
        redistance(&mut phi, &RedistanceOptions { iters: 20, band: f64::INFINITY }, dx, extrapolate)
            .unwrap();
        let mut worst: f64 = 0.0;
        for (m, p) in phi.interior_points().enumerate() {
            let x = phi.coord(p, [0.0; 3], dx);
            let d = dist(x);
            if d.abs() > 1.0 * dx {
                assert_eq!(phi.get(p) > 0.0, sign0[m]);
            }
            if d.abs() <= 5.0 * dx {
                let gx = (phi.at(p[0] + 1, p[1], 0) - phi.at(p[0] - 1, p[1], 0)) / (2.0 * dx);
                let gy = (phi.at(p[0], p[1] + 1, 0) - phi.at(p[0], p[1] - 1, 0)) / (2.0 * dx);
                worst = worst.max(((gx * gx + gy * gy).sqrt() - 1.0).abs());
            }
        }
        assert!(worst <= 0.05, "worst gradient deviation {worst}");
    }

    #[test]
    fn flat_interface_has_zero_curvature() {
        let (phi, dx) = seeded(16, 2, |x| x[1] - 0.5);
        let k = curvature(&phi, dx).unwrap();
        assert!(k.max_abs_interior() <= 1e-10);
    }

    #[test]
    fn circle_curvature_matches_inverse_radius() {
        let r0 = 0.25;
        let dist = |x: [f64; 3]| ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt() - r0;
        let (phi, dx) = seeded(256, 2, dist);
        let k = curvature(&phi, dx).unwrap();
        for p in k.interior_points() {
            if phi.get(p).abs() < dx {
                assert!((k.get(p) - 4.0).abs() / 4.0 < 0.05);
            }
        }
    }

    #[test]
    fn sphere_curvature_is_twice_inverse_radius() {
        let r0 = 0.3;
        let dist = |x: [f64; 3]| {
            ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2)).sqrt() - r0
        };
        let (phi, dx) = seeded(48, 3, dist);
        let k = curvature(&phi, dx).unwrap();
        let mut seen = 0;
        for p in k.interior_points() {
            if phi.get(p).abs() < dx {
                seen += 1;
                assert!((k.get(p) - 2.0 / r0).abs() / (2.0 / r0) < 0.1);
            }
        }
        assert!(seen > 0);
    }
}
