//! Discrete norms: midpoint quadrature over cell centers,
//! `||f||_q = (sum |f_i|^q hx hy)^(1/q)`, with the H1 seminorm built from the
//! centered ghost derivatives. MAC vector fields are averaged to centers
//! first so every norm uses the same quadrature rule.

use crate::error::Result;
use crate::field::{MatrixField22, ScalarField, VectorField2, VectorField3};
use crate::grid::{Bc, Grid, Layout};
use crate::ops::{self, Axis, Edge};
use crate::reduce;

fn quad(grid: &Grid, len: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    reduce::sum_with(len, f) * grid.cell_area()
}

pub fn norm_l2(grid: &Grid, f: &ScalarField) -> Result<f64> {
    f.expect(grid, Layout::Center, "norm_l2")?;
    let d = f.data();
    Ok(quad(grid, d.len(), |i| d[i] * d[i]).sqrt())
}

pub fn norm_l4(grid: &Grid, f: &ScalarField) -> Result<f64> {
    f.expect(grid, Layout::Center, "norm_l4")?;
    let d = f.data();
    Ok(quad(grid, d.len(), |i| d[i].powi(4)).sqrt().sqrt())
}

/// General even-exponent L^p norm (the interpolation inequalities need p=6).
pub fn norm_lp(grid: &Grid, f: &ScalarField, p: u32) -> Result<f64> {
    assert!(p >= 1);
    f.expect(grid, Layout::Center, "norm_lp")?;
    let d = f.data();
    Ok(quad(grid, d.len(), |i| d[i].abs().powi(p as i32)).powf(1.0 / p as f64))
}

pub fn norm_sup(f: &ScalarField) -> f64 {
    reduce::max_with(f.len(), |i| f.data()[i].abs())
}

/// ||grad f||_2 for a cell-centered scalar under its boundary condition.
pub fn seminorm_h1(grid: &Grid, f: &ScalarField, bc: Bc) -> Result<f64> {
    let dx = ops::deriv_center(grid, f, Axis::X, Edge::Ghost(bc))?;
    let dy = ops::deriv_center(grid, f, Axis::Y, Edge::Ghost(bc))?;
    let (a, b) = (dx.data(), dy.data());
    Ok(quad(grid, a.len(), |i| a[i] * a[i] + b[i] * b[i]).sqrt())
}

fn centered_components<'a>(
    grid: &Grid,
    v: &'a VectorField2,
    op: &'static str,
) -> Result<(ScalarField, ScalarField)> {
    if v.is_centered() {
        v.expect_centered(grid, op)?;
        Ok((v.x.clone(), v.y.clone()))
    } else {
        v.expect_mac(grid, op)?;
        Ok((
            ops::face_x_to_center(grid, &v.x)?,
            ops::face_y_to_center(grid, &v.y)?,
        ))
    }
}

/// L2 norm of the pointwise Euclidean magnitude of a 2-vector field.
pub fn norm_l2_vec2(grid: &Grid, v: &VectorField2) -> Result<f64> {
    let (x, y) = centered_components(grid, v, "norm_l2_vec2")?;
    let (a, b) = (x.data(), y.data());
    Ok(quad(grid, a.len(), |i| a[i] * a[i] + b[i] * b[i]).sqrt())
}

pub fn norm_sup_vec2(grid: &Grid, v: &VectorField2) -> Result<f64> {
    let (x, y) = centered_components(grid, v, "norm_sup_vec2")?;
    let (a, b) = (x.data(), y.data());
    Ok(reduce::max_with(a.len(), |i| (a[i] * a[i] + b[i] * b[i]).sqrt()))
}

pub fn norm_l2_vec3(grid: &Grid, m: &VectorField3) -> Result<f64> {
    m.expect(grid, "norm_l2_vec3")?;
    let [a, b, c] = [m.c[0].data(), m.c[1].data(), m.c[2].data()];
    Ok(quad(grid, a.len(), |i| a[i] * a[i] + b[i] * b[i] + c[i] * c[i]).sqrt())
}

pub fn norm_l2_mat22(grid: &Grid, f: &MatrixField22) -> Result<f64> {
    f.expect(grid, "norm_l2_mat22")?;
    let d: [&[f64]; 4] = std::array::from_fn(|k| f.c[k].data());
    Ok(quad(grid, d[0].len(), |i| {
        d[0][i] * d[0][i] + d[1][i] * d[1][i] + d[2][i] * d[2][i] + d[3][i] * d[3][i]
    })
    .sqrt())
}

/// ||grad v||_2 for a MAC velocity via the centered gradient tensor.
pub fn seminorm_h1_mac(grid: &Grid, v: &VectorField2) -> Result<f64> {
    let parts = ops::velocity_gradient_center(grid, v)?;
    let d: [&[f64]; 4] = std::array::from_fn(|k| parts[k].data());
    Ok(quad(grid, d[0].len(), |i| {
        d[0][i] * d[0][i] + d[1][i] * d[1][i] + d[2][i] * d[2][i] + d[3][i] * d[3][i]
    })
    .sqrt())
}

/// Sum of componentwise H1 seminorms squared, square-rooted, for a
/// 3-component field under one boundary condition.
pub fn seminorm_h1_vec3(grid: &Grid, m: &VectorField3, bc: Bc) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..3 {
        acc += seminorm_h1(grid, &m.c[k], bc)?.powi(2);
    }
    Ok(acc.sqrt())
}

pub fn seminorm_h1_mat22(grid: &Grid, f: &MatrixField22, bc: Bc) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..4 {
        acc += seminorm_h1(grid, &f.c[k], bc)?.powi(2);
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    /// Adaptive Simpson quadrature, used only to verify the frozen constants
    /// below independently of the closed forms.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, eps: f64) -> f64 {
        fn s<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F,
            a: f64,
            b: f64,
            whole: f64,
            eps: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (s(f, a, m), s(f, m, b));
            if depth == 0 || (l + r - whole).abs() <= 15.0 * eps {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, l, eps / 2.0, depth - 1) + rec(f, m, b, r, eps / 2.0, depth - 1)
            }
        }
        rec(f, a, b, s(f, a, b), eps, 40)
    }

    #[test]
    fn frozen_sine_mode_constants_match_quadrature_oracle() {
        // On the unit square for f = sin(pi x) sin(pi y):
        //   ||f||_2 = 1/2, ||f||_4 = (9/64)^(1/4), ||grad f||_2 = pi/sqrt(2).
        let s2 = simpson(|x| (PI * x).sin().powi(2), 0.0, 1.0, 1e-13);
        let s4 = simpson(|x| (PI * x).sin().powi(4), 0.0, 1.0, 1e-13);
        let c2 = simpson(|x| (PI * x).cos().powi(2), 0.0, 1.0, 1e-13);
        assert_relative_eq!((s2 * s2).sqrt(), 0.5, max_relative = 1e-10);
        assert_relative_eq!((s4 * s4).sqrt().sqrt(), (9.0f64 / 64.0).powf(0.25), max_relative = 1e-10);
        assert_relative_eq!(
            (PI * PI * (c2 * s2 + s2 * c2)).sqrt(),
            PI / 2.0f64.sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn sine_mode_norms_hit_their_frozen_values() {
        // Midpoint quadrature is exact (to rounding) for these periodic trig
        // integrands, so L2 and L4 land on the closed forms at any n. The H1
        // seminorm goes through finite differences and converges at order 2.
        let exact = [0.5, (9.0f64 / 64.0).powf(0.25), PI / 2.0f64.sqrt()];
        let mut h1_errs: Vec<f64> = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::from_domain(n, n, 1.0, 1.0).unwrap();
            let f = ScalarField::from_fn(&g, Layout::Center, |x, y| {
                (PI * x).sin() * (PI * y).sin()
            });
            assert_relative_eq!(norm_l2(&g, &f).unwrap(), exact[0], max_relative = 1e-13);
            assert_relative_eq!(norm_l4(&g, &f).unwrap(), exact[1], max_relative = 1e-13);
            h1_errs.push((seminorm_h1(&g, &f, Bc::Dirichlet0).unwrap() - exact[2]).abs());
        }
        for pair in h1_errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                (1.8..=2.2).contains(&order),
                "H1 order {order}, errors {h1_errs:?}"
            );
        }
    }

    #[test]
    fn quadrature_converges_at_second_order_on_a_nonperiodic_integrand() {
        // f = exp(x + y/2): ||f||_2^2 = (e^2-1)/2 * (e-1), checked against
        // the Simpson oracle, then the midpoint error halves twice per
        // refinement.
        let sq_exact = (1f64.exp().powi(2) - 1.0) / 2.0 * (1f64.exp() - 1.0);
        let oracle = simpson(|x| (2.0 * x).exp(), 0.0, 1.0, 1e-13)
            * simpson(|y| y.exp(), 0.0, 1.0, 1e-13);
        assert_relative_eq!(sq_exact, oracle, max_relative = 1e-10);
        let mut errs: Vec<f64> = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::from_domain(n, n, 1.0, 1.0).unwrap();
            let f = ScalarField::from_fn(&g, Layout::Center, |x, y| (x + 0.5 * y).exp());
            errs.push((norm_l2(&g, &f).unwrap() - sq_exact.sqrt()).abs());
        }
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!((1.8..=2.2).contains(&order), "order {order}, errors {errs:?}");
        }
    }

    #[test]
    fn lp_matches_specialized_norms() {
        let g = Grid::from_domain(12, 10, 1.0, 2.0).unwrap();
        let f = ScalarField::from_fn(&g, Layout::Center, |x, y| x * x - 0.3 * y + 0.1);
        assert_relative_eq!(
            norm_lp(&g, &f, 2).unwrap(),
            norm_l2(&g, &f).unwrap(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            norm_lp(&g, &f, 4).unwrap(),
            norm_l4(&g, &f).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn sup_norm_ignores_quadrature_weights() {
        let g = Grid::from_domain(8, 8, 3.0, 3.0).unwrap();
        let mut f = ScalarField::zeros(&g, Layout::Center);
        f.set(3, 4, -7.5);
        assert_eq!(norm_sup(&f), 7.5);
    }
}
