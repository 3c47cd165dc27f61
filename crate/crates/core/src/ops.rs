//! Finite-difference operators on the staggered grid.
//!
//! Conventions frozen here and relied on everywhere else:
//! - cell-centered second derivatives use the 5-point stencil with ghost
//!   values mirrored across the wall (negated for Dirichlet-0, copied for
//!   Neumann-0);
//! - `gradient` (centers -> faces) and `divergence` (faces -> centers) are
//!   the natural MAC differences; with zero wall faces they are exact
//!   negative adjoints of each other and compose to the 5-point Neumann
//!   Laplacian, which is what makes the pressure projection exact up to the
//!   linear-solver tolerance;
//! - advection is centered in the interior and first-order one-sided on the
//!   outermost sample ring.

use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField2};
use crate::grid::{Bc, Grid, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Edge rule for first derivatives of cell-centered fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    /// Centered difference against a mirrored ghost value.
    Ghost(Bc),
    /// First-order one-sided difference using interior values only.
    OneSided,
}

/// 5-point Laplacian. Center fields use ghost mirroring per `bc`; face
/// fields (velocity components) support Dirichlet-0 only: wall nodes are
/// pinned to zero in the output and tangential ghosts mirror-negate.
pub fn laplacian(grid: &Grid, f: &ScalarField, bc: Bc) -> Result<ScalarField> {
    f.expect(grid, f.layout(), "laplacian")?;
    match f.layout() {
        Layout::Center => Ok(laplacian_center(grid, f, bc)),
        Layout::FaceX | Layout::FaceY => {
            if bc != Bc::Dirichlet0 {
                return Err(Error::config(
                    "laplacian on face layouts supports dirichlet0 only",
                ));
            }
            Ok(laplacian_face(grid, f))
        }
    }
}

fn laplacian_center(grid: &Grid, f: &ScalarField, bc: Bc) -> ScalarField {
    let (w, h) = (f.w(), f.h());
    let (ix2, iy2) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    // Ghost = sign * first interior value.
    let sign = match bc {
        Bc::Dirichlet0 => -1.0,
        Bc::Neumann0 => 1.0,
    };
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let d = f.data();
    let o = out.data_mut();
    for j in 0..h {
        let row = j * w;
        for i in 0..w {
            let c = d[row + i];
            let fw = if i > 0 { d[row + i - 1] } else { sign * c };
            let fe = if i + 1 < w { d[row + i + 1] } else { sign * c };
            let fs = if j > 0 { d[row - w + i] } else { sign * c };
            let fn_ = if j + 1 < h { d[row + w + i] } else { sign * c };
            o[row + i] = (fw - 2.0 * c + fe) * ix2 + (fs - 2.0 * c + fn_) * iy2;
        }
    }
    out
}

fn laplacian_face(grid: &Grid, f: &ScalarField) -> ScalarField {
    let (w, h) = (f.w(), f.h());
    let (ix2, iy2) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let mut out = f.clone();
    out.fill(0.0);
    let d = f.data();
    let o = out.data_mut();
    // For FaceX the wall-normal direction is x (columns 0 and w-1 pinned),
    // for FaceY it is y (rows 0 and h-1 pinned). Pinned wall values enter the
    // stencil directly; in the tangential direction the wall sits half a cell
    // beyond the outermost row, so ghosts mirror-negate.
    let (i0, i1, j0, j1) = match f.layout() {
        Layout::FaceX => (1, w - 1, 0, h),
        Layout::FaceY => (0, w, 1, h - 1),
        Layout::Center => unreachable!(),
    };
    for j in j0..j1 {
        let row = j * w;
        for i in i0..i1 {
            let c = d[row + i];
            let fw = if i > 0 { d[row + i - 1] } else { -c };
            let fe = if i + 1 < w { d[row + i + 1] } else { -c };
            let fs = if j > 0 { d[row - w + i] } else { -c };
            let fn_ = if j + 1 < h { d[row + w + i] } else { -c };
            o[row + i] = (fw - 2.0 * c + fe) * ix2 + (fs - 2.0 * c + fn_) * iy2;
        }
    }
    out
}

/// MAC gradient of a cell-centered scalar: differences between adjacent
/// centers land on interior faces; wall faces get 0, consistent with the
/// zero-normal-derivative convention of the pressure solve.
pub fn gradient(grid: &Grid, p: &ScalarField) -> Result<VectorField2> {
    p.expect(grid, Layout::Center, "gradient")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = VectorField2::mac_zeros(grid);
    let d = p.data();
    {
        let ih = 1.0 / grid.hx();
        let gx = out.x.data_mut();
        let w = nx + 1;
        for j in 0..ny {
            for i in 1..nx {
                gx[j * w + i] = (d[j * nx + i] - d[j * nx + i - 1]) * ih;
            }
        }
    }
    {
        let ih = 1.0 / grid.hy();
        let gy = out.y.data_mut();
        for j in 1..ny {
            for i in 0..nx {
                gy[j * nx + i] = (d[j * nx + i] - d[(j - 1) * nx + i]) * ih;
            }
        }
    }
    Ok(out)
}

/// MAC divergence of a face vector field, cell by cell.
pub fn divergence(grid: &Grid, v: &VectorField2) -> Result<ScalarField> {
    v.expect_mac(grid, "divergence")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let o = out.data_mut();
    let vx = v.x.data();
    let vy = v.y.data();
    let wx = nx + 1;
    for j in 0..ny {
        for i in 0..nx {
            o[j * nx + i] = (vx[j * wx + i + 1] - vx[j * wx + i]) * ihx
                + (vy[(j + 1) * nx + i] - vy[j * nx + i]) * ihy;
        }
    }
    Ok(out)
}

/// First derivative of a cell-centered field along an axis: centered in the
/// interior, edge behavior per `rule`.
pub fn deriv_center(grid: &Grid, f: &ScalarField, axis: Axis, rule: Edge) -> Result<ScalarField> {
    f.expect(grid, Layout::Center, "deriv_center")?;
    let (w, h) = (f.w(), f.h());
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let d = f.data();
    let o = out.data_mut();
    match axis {
        Axis::X => {
            let ih2 = 0.5 / grid.hx();
            let ih = 1.0 / grid.hx();
            for j in 0..h {
                let row = j * w;
                for i in 1..w - 1 {
                    o[row + i] = (d[row + i + 1] - d[row + i - 1]) * ih2;
                }
                match rule {
                    Edge::Ghost(Bc::Dirichlet0) => {
                        o[row] = (d[row + 1] + d[row]) * ih2;
                        o[row + w - 1] = (-d[row + w - 1] - d[row + w - 2]) * ih2;
                    }
                    Edge::Ghost(Bc::Neumann0) => {
                        o[row] = (d[row + 1] - d[row]) * ih2;
                        o[row + w - 1] = (d[row + w - 1] - d[row + w - 2]) * ih2;
                    }
                    Edge::OneSided => {
                        o[row] = (d[row + 1] - d[row]) * ih;
                        o[row + w - 1] = (d[row + w - 1] - d[row + w - 2]) * ih;
                    }
                }
            }
        }
        Axis::Y => {
            let ih2 = 0.5 / grid.hy();
            let ih = 1.0 / grid.hy();
            for j in 0..h {
                let row = j * w;
                for i in 0..w {
                    let (below, above) = match (j, rule) {
                        (0, Edge::Ghost(Bc::Dirichlet0)) => (-d[i], d[row + w + i]),
                        (0, Edge::Ghost(Bc::Neumann0)) => (d[i], d[row + w + i]),
                        (0, Edge::OneSided) => {
                            o[row + i] = (d[w + i] - d[i]) * ih;
                            continue;
                        }
                        (j_, Edge::Ghost(Bc::Dirichlet0)) if j_ == h - 1 => {
                            (d[row - w + i], -d[row + i])
                        }
                        (j_, Edge::Ghost(Bc::Neumann0)) if j_ == h - 1 => {
                            (d[row - w + i], d[row + i])
                        }
                        (j_, Edge::OneSided) if j_ == h - 1 => {
                            o[row + i] = (d[row + i] - d[row - w + i]) * ih;
                            continue;
                        }
                        _ => (d[row - w + i], d[row + w + i]),
                    };
                    o[row + i] = (above - below) * ih2;
                }
            }
        }
    }
    Ok(out)
}

/// x velocity component averaged to cell centers.
pub fn face_x_to_center(grid: &Grid, vx: &ScalarField) -> Result<ScalarField> {
    vx.expect(grid, Layout::FaceX, "face_x_to_center")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let w = nx + 1;
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let d = vx.data();
    let o = out.data_mut();
    for j in 0..ny {
        for i in 0..nx {
            o[j * nx + i] = 0.5 * (d[j * w + i] + d[j * w + i + 1]);
        }
    }
    Ok(out)
}

/// y velocity component averaged to cell centers.
pub fn face_y_to_center(grid: &Grid, vy: &ScalarField) -> Result<ScalarField> {
    vy.expect(grid, Layout::FaceY, "face_y_to_center")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let d = vy.data();
    let o = out.data_mut();
    for j in 0..ny {
        for i in 0..nx {
            o[j * nx + i] = 0.5 * (d[j * nx + i] + d[(j + 1) * nx + i]);
        }
    }
    Ok(out)
}

/// MAC velocity averaged to cell centers.
pub fn mac_to_center(grid: &Grid, v: &VectorField2) -> Result<VectorField2> {
    v.expect_mac(grid, "mac_to_center")?;
    Ok(VectorField2 {
        x: face_x_to_center(grid, &v.x)?,
        y: face_y_to_center(grid, &v.y)?,
    })
}

/// Cell-centered force vector averaged onto faces; wall faces stay zero
/// (velocity is pinned there, so the force never acts on them).
pub fn center_to_faces(grid: &Grid, f: &VectorField2) -> Result<VectorField2> {
    f.expect_centered(grid, "center_to_faces")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = VectorField2::mac_zeros(grid);
    {
        let d = f.x.data();
        let o = out.x.data_mut();
        let w = nx + 1;
        for j in 0..ny {
            for i in 1..nx {
                o[j * w + i] = 0.5 * (d[j * nx + i - 1] + d[j * nx + i]);
            }
        }
    }
    {
        let d = f.y.data();
        let o = out.y.data_mut();
        for j in 1..ny {
            for i in 0..nx {
                o[j * nx + i] = 0.5 * (d[(j - 1) * nx + i] + d[j * nx + i]);
            }
        }
    }
    Ok(out)
}

/// (v . grad) f for a cell-centered scalar; the advecting velocity is
/// interpolated from faces to centers.
pub fn advect(grid: &Grid, f: &ScalarField, v: &VectorField2) -> Result<ScalarField> {
    v.expect_mac(grid, "advect")?;
    let vxc = face_x_to_center(grid, &v.x)?;
    let vyc = face_y_to_center(grid, &v.y)?;
    advect_centered(grid, f, &vxc, &vyc)
}

/// `advect` with the centered velocity already interpolated, so callers
/// transporting several scalars can share the interpolation.
pub fn advect_centered(
    grid: &Grid,
    f: &ScalarField,
    vxc: &ScalarField,
    vyc: &ScalarField,
) -> Result<ScalarField> {
    f.expect(grid, Layout::Center, "advect_centered")?;
    vxc.expect(grid, Layout::Center, "advect_centered")?;
    vyc.expect(grid, Layout::Center, "advect_centered")?;
    let dfdx = deriv_center(grid, f, Axis::X, Edge::OneSided)?;
    let dfdy = deriv_center(grid, f, Axis::Y, Edge::OneSided)?;
    let mut out = ScalarField::zeros(grid, Layout::Center);
    let o = out.data_mut();
    for i in 0..o.len() {
        o[i] = vxc.data()[i] * dfdx.data()[i] + vyc.data()[i] * dfdy.data()[i];
    }
    Ok(out)
}

/// (v . grad) u for a MAC field u, component-wise at its own face nodes.
/// Wall faces of the output are zero (pinned degrees of freedom).
pub fn advect_mac(grid: &Grid, u: &VectorField2, v: &VectorField2) -> Result<VectorField2> {
    u.expect_mac(grid, "advect_mac")?;
    v.expect_mac(grid, "advect_mac")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let mut out = VectorField2::mac_zeros(grid);
    {
        // x component at interior vertical faces.
        let w = nx + 1;
        let ux = u.x.data();
        let vx = v.x.data();
        let vy = v.y.data();
        let o = out.x.data_mut();
        for j in 0..ny {
            for i in 1..nx {
                let here = j * w + i;
                let vxh = vx[here];
                let vyh = 0.25
                    * (vy[j * nx + i - 1]
                        + vy[j * nx + i]
                        + vy[(j + 1) * nx + i - 1]
                        + vy[(j + 1) * nx + i]);
                let ddx = (ux[here + 1] - ux[here - 1]) * 0.5 * ihx;
                let ddy = if j == 0 {
                    (ux[here + w] - ux[here]) * ihy
                } else if j == ny - 1 {
                    (ux[here] - ux[here - w]) * ihy
                } else {
                    (ux[here + w] - ux[here - w]) * 0.5 * ihy
                };
                o[here] = vxh * ddx + vyh * ddy;
            }
        }
    }
    {
        // y component at interior horizontal faces.
        let w = nx;
        let uy = u.y.data();
        let vx = v.x.data();
        let vy = v.y.data();
        let o = out.y.data_mut();
        let wx = nx + 1;
        for j in 1..ny {
            for i in 0..nx {
                let here = j * w + i;
                let vyh = vy[here];
                let vxh = 0.25
                    * (vx[(j - 1) * wx + i]
                        + vx[(j - 1) * wx + i + 1]
                        + vx[j * wx + i]
                        + vx[j * wx + i + 1]);
                let ddy = (uy[here + w] - uy[here - w]) * 0.5 * ihy;
                let ddx = if i == 0 {
                    (uy[here + 1] - uy[here]) * ihx
                } else if i == nx - 1 {
                    (uy[here] - uy[here - 1]) * ihx
                } else {
                    (uy[here + 1] - uy[here - 1]) * 0.5 * ihx
                };
                o[here] = vxh * ddx + vyh * ddy;
            }
        }
    }
    Ok(out)
}

/// Velocity gradient tensor at cell centers: [dvx/dx, dvx/dy, dvy/dx, dvy/dy].
/// The diagonal entries are exact MAC differences; the off-diagonal ones
/// differentiate the center-interpolated component with Dirichlet-0 ghosts.
pub fn velocity_gradient_center(
    grid: &Grid,
    v: &VectorField2,
) -> Result<[ScalarField; 4]> {
    v.expect_mac(grid, "velocity_gradient_center")?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx, ihy) = (1.0 / grid.hx(), 1.0 / grid.hy());
    let mut d11 = ScalarField::zeros(grid, Layout::Center);
    let mut d22 = ScalarField::zeros(grid, Layout::Center);
    {
        let vx = v.x.data();
        let o = d11.data_mut();
        let w = nx + 1;
        for j in 0..ny {
            for i in 0..nx {
                o[j * nx + i] = (vx[j * w + i + 1] - vx[j * w + i]) * ihx;
            }
        }
    }
    {
        let vy = v.y.data();
        let o = d22.data_mut();
        for j in 0..ny {
            for i in 0..nx {
                o[j * nx + i] = (vy[(j + 1) * nx + i] - vy[j * nx + i]) * ihy;
            }
        }
    }
    let vxc = face_x_to_center(grid, &v.x)?;
    let vyc = face_y_to_center(grid, &v.y)?;
    let d12 = deriv_center(grid, &vxc, Axis::Y, Edge::Ghost(Bc::Dirichlet0))?;
    let d21 = deriv_center(grid, &vyc, Axis::X, Edge::Ghost(Bc::Dirichlet0))?;
    Ok([d11, d12, d21, d22])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn unit_grid(n: usize) -> Grid {
        Grid::from_domain(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn laplacian_of_constant_is_zero_under_neumann() {
        let g = unit_grid(16);
        let f = ScalarField::from_fn(&g, Layout::Center, |_, _| 3.5);
        let lap = laplacian(&g, &f, Bc::Neumann0).unwrap();
        for v in lap.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn laplacian_matches_sine_eigenvalue_to_second_order() {
        // f = sin(pi x) sin(pi y) on the unit square: Lap f = -2 pi^2 f.
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = unit_grid(n);
            let f = ScalarField::from_fn(&g, Layout::Center, |x, y| {
                (PI * x).sin() * (PI * y).sin()
            });
            let lap = laplacian(&g, &f, Bc::Dirichlet0).unwrap();
            let mut worst: f64 = 0.0;
            for (l, v) in lap.data().iter().zip(f.data()) {
                worst = worst.max((l + 2.0 * PI * PI * v).abs());
            }
            errs.push(worst);
        }
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                (1.8..=2.2).contains(&order),
                "laplacian order {order} out of range, errors {errs:?}"
            );
        }
    }

    #[test]
    fn divergence_of_gradient_equals_neumann_laplacian_exactly() {
        let g = unit_grid(12);
        let p = ScalarField::from_fn(&g, Layout::Center, |x, y| {
            (3.0 * x).cos() + x * y * y - 0.3 * y
        });
        let lap = laplacian(&g, &p, Bc::Neumann0).unwrap();
        let div = divergence(&g, &gradient(&g, &p).unwrap()).unwrap();
        for (a, b) in div.data().iter().zip(lap.data()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_and_divergence_are_negative_adjoints_on_interior_support() {
        // <grad p, u> + <p, div u> = 0 for u supported away from the walls.
        let g = unit_grid(24);
        let bump = |x: f64, y: f64| {
            let wx = (PI * x).sin().powi(4);
            let wy = (PI * y).sin().powi(4);
            wx * wy
        };
        let p = ScalarField::from_fn(&g, Layout::Center, |x, y| bump(x, y) * (5.0 * x + y).cos());
        let mut u = VectorField2::mac_zeros(&g);
        // Zero wall faces by construction of the bump window.
        let (wxf, _) = g.shape(Layout::FaceX);
        for j in 0..g.ny() {
            for i in 1..g.nx() {
                let (x, y) = (g.x(Layout::FaceX, i), g.y(Layout::FaceX, j));
                u.x.data_mut()[j * wxf + i] = bump(x, y) * (2.0 * y).sin();
            }
        }
        for j in 1..g.ny() {
            for i in 0..g.nx() {
                let (x, y) = (g.x(Layout::FaceY, i), g.y(Layout::FaceY, j));
                u.y.data_mut()[j * g.nx() + i] = bump(x, y) * (3.0 * x).cos();
            }
        }
        let gp = gradient(&g, &p).unwrap();
        let div = divergence(&g, &u).unwrap();
        let area = g.cell_area();
        let a = (reduce::dot(gp.x.data(), u.x.data()) + reduce::dot(gp.y.data(), u.y.data())) * area;
        let b = reduce::dot(p.data(), div.data()) * area;
        let scale = p.data().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        assert!(
            (a + b).abs() <= 1e-12 * scale,
            "adjointness defect {} (a={a}, b={b})",
            a + b
        );
    }

    #[test]
    fn advect_uniform_velocity_recovers_x_derivative() {
        // v = (1,0), f = sin(2 pi x): (v.grad) f -> 2 pi cos(2 pi x), order ~2
        // away from the one-sided ring.
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = unit_grid(n);
            let f = ScalarField::from_fn(&g, Layout::Center, |x, _| (2.0 * PI * x).sin());
            let mut v = VectorField2::mac_zeros(&g);
            v.x.fill(1.0);
            let adv = advect(&g, &f, &v).unwrap();
            let mut worst: f64 = 0.0;
            for j in 1..n - 1 {
                for i in 1..n - 1 {
                    let x = g.x(Layout::Center, i);
                    let exact = 2.0 * PI * (2.0 * PI * x).cos();
                    worst = worst.max((adv.at(i, j) - exact).abs());
                }
            }
            errs.push(worst);
        }
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                (1.8..=2.2).contains(&order),
                "advect order {order}, errors {errs:?}"
            );
        }
    }

    #[test]
    fn advect_mac_annihilates_a_pure_shear_profile() {
        // u = (y(1-y), 0) on every x-face, including the walls: ux depends
        // on y only and uy = 0, so (u.grad)u vanishes identically.
        let g = unit_grid(20);
        let mut u = VectorField2::mac_zeros(&g);
        let (w, _) = g.shape(Layout::FaceX);
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                let y = g.y(Layout::FaceX, j);
                u.x.data_mut()[j * w + i] = y * (1.0 - y);
            }
        }
        let adv = advect_mac(&g, &u, &u).unwrap();
        for v in adv.x.data().iter().chain(adv.y.data()) {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn velocity_gradient_diagonal_is_exact_for_linear_field() {
        // v = (a x, -a y) is divergence-free and linear: d11 = a, d22 = -a
        // exactly at every center.
        let g = unit_grid(8);
        let a = 0.7;
        let mut v = VectorField2::mac_zeros(&g);
        let (w, _) = g.shape(Layout::FaceX);
        for j in 0..g.ny() {
            for i in 0..=g.nx() {
                v.x.data_mut()[j * w + i] = a * g.x(Layout::FaceX, i);
            }
        }
        for j in 0..=g.ny() {
            for i in 0..g.nx() {
                v.y.data_mut()[j * g.nx() + i] = -a * g.y(Layout::FaceY, j);
            }
        }
        let [d11, _, _, d22] = velocity_gradient_center(&g, &v).unwrap();
        for (x, y) in d11.data().iter().zip(d22.data()) {
            assert_relative_eq!(*x, a, max_relative = 1e-13);
            assert_relative_eq!(*y, -a, max_relative = 1e-13);
        }
    }

    #[test]
    fn deriv_center_orders() {
        // Neumann-compatible profile differentiated with ghost rule stays
        // second order up to the wall; one-sided rule is first order there.
        let mut errs_ghost = Vec::new();
        for n in [16, 32, 64] {
            let g = unit_grid(n);
            let f = ScalarField::from_fn(&g, Layout::Center, |x, _| (PI * x).cos());
            let dx = deriv_center(&g, &f, Axis::X, Edge::Ghost(Bc::Neumann0)).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let x = g.x(Layout::Center, i);
                    worst = worst.max((dx.at(i, j) + PI * (PI * x).sin()).abs());
                }
            }
            errs_ghost.push(worst);
        }
        for pair in errs_ghost.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!((1.8..=2.2).contains(&order), "ghost deriv order {order}");
        }
    }
}
