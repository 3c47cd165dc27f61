//! Per-step scalar diagnostics: the energy functional, its dissipation
//! terms, constraint monitors, source-field norms, and the running
//! energy-inequality residual
//!
//! `r(t) = [E(t) + cumulative dissipation]
//!        - [E(0) + 2 sup_s ||H(s)||_1 + int_0^t ||dH/dt||_1 ds]`,
//!
//! which must stay below `C_e (dt + h^2) t` for the scheme to shadow the
//! continuous energy inequality. Cumulative integrals use the trapezoid
//! rule, matching the first-order splitting accuracy. The exchange-energy
//! production/dissipation pair (`delta_m_sq`, `grad_m_l4_4`) is recorded for
//! inspection but carries no pass/fail threshold since its continuous
//! counterpart involves unknown constants.

use crate::elastic::ElasticDensity;
use crate::error::{Error, Result};
use crate::field::{MatrixField22, ScalarField, VectorField3};
use crate::grid::{Bc, Grid, Layout};
use crate::hext::ExternalField;
use crate::norms;
use crate::ops::{self, Axis, Edge};
use crate::reduce;
use crate::state::State;

/// E = 1/2 ||v||_2^2 + ||W(F)||_1 + 1/2 ||grad M||_2^2 + 1/2 ||M.e3||_2^2.
pub fn total_energy(grid: &Grid, state: &State, density: &dyn ElasticDensity) -> Result<f64> {
    state.expect(grid, "total_energy")?;
    let kinetic = 0.5 * norms::norm_l2_vec2(grid, &state.velocity)?.powi(2);
    let elastic = elastic_energy(grid, &state.deformation, density)?;
    let exchange = 0.5
        * norms::seminorm_h1_vec3(grid, &state.magnetization, Bc::Neumann0)?
            .powi(2);
    let stray = 0.5 * norms::norm_l2(grid, &state.magnetization.c[2])?.powi(2);
    Ok(kinetic + elastic + exchange + stray)
}

/// Quadrature of the density over the domain, `||W(F)||_1` for W >= 0.
pub fn elastic_energy(
    grid: &Grid,
    f: &MatrixField22,
    density: &dyn ElasticDensity,
) -> Result<f64> {
    f.expect(grid, "elastic_energy")?;
    let d: [&[f64]; 4] = std::array::from_fn(|k| f.c[k].data());
    Ok(reduce::sum_with(d[0].len(), |i| {
        density.value([d[0][i], d[1][i], d[2][i], d[3][i]])
    }) * grid.cell_area())
}

/// kappa * integral of W''(F) dF . dF summed over both gradient directions,
/// the elastic part of the dissipation rate.
pub fn elastic_dissipation_rate(
    grid: &Grid,
    f: &MatrixField22,
    density: &dyn ElasticDensity,
    kappa: f64,
) -> Result<f64> {
    f.expect(grid, "elastic_dissipation_rate")?;
    let mut acc = 0.0;
    for axis in [Axis::X, Axis::Y] {
        let mut grads: Vec<ScalarField> = Vec::with_capacity(4);
        for k in 0..4 {
            grads.push(ops::deriv_center(
                grid,
                &f.c[k],
                axis,
                Edge::Ghost(Bc::Dirichlet0),
            )?);
        }
        let d: [&[f64]; 4] = std::array::from_fn(|k| f.c[k].data());
        let g: [&[f64]; 4] = std::array::from_fn(|k| grads[k].data());
        acc += reduce::sum_with(d[0].len(), |i| {
            let a = [d[0][i], d[1][i], d[2][i], d[3][i]];
            let dir = [g[0][i], g[1][i], g[2][i], g[3][i]];
            let hd = density.hessian_apply(a, dir);
            hd[0] * dir[0] + hd[1] * dir[1] + hd[2] * dir[2] + hd[3] * dir[3]
        });
    }
    Ok(kappa * acc * grid.cell_area())
}

/// Sum over components of ||Lap M_a||_2^2 under the Neumann wall condition.
pub fn delta_m_sq(grid: &Grid, m: &VectorField3) -> Result<f64> {
    let mut acc = 0.0;
    for k in 0..3 {
        acc += norms::norm_l2(grid, &ops::laplacian(grid, &m.c[k], Bc::Neumann0)?)?.powi(2);
    }
    Ok(acc)
}

/// Fourth power of the L4 norm of |grad M| (Frobenius over the 3x2 Jacobian).
pub fn grad_m_l4_4(grid: &Grid, m: &VectorField3) -> Result<f64> {
    m.expect(grid, "grad_m_l4_4")?;
    let mut sq = ScalarField::zeros(grid, Layout::Center);
    for k in 0..3 {
        for axis in [Axis::X, Axis::Y] {
            let d = ops::deriv_center(grid, &m.c[k], axis, Edge::Ghost(Bc::Neumann0))?;
            for (o, v) in sq.data_mut().iter_mut().zip(d.data()) {
                *o += v * v;
            }
        }
    }
    let s = sq.data();
    Ok(reduce::sum_with(s.len(), |i| s[i] * s[i]) * grid.cell_area())
}

/// L1 norm over the domain of the pointwise Euclidean magnitude of H(t).
pub fn hext_l1(grid: &Grid, h: &ExternalField, t: f64) -> f64 {
    if h.is_zero() {
        return 0.0;
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    reduce::sum_with(nx * ny, |idx| {
        let (i, j) = (idx % nx, idx / nx);
        let v = h.value(t, grid.x(Layout::Center, i), grid.y(Layout::Center, j));
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }) * grid.cell_area()
}

/// Same L1 norm for the time derivative of H.
pub fn dthext_l1(grid: &Grid, h: &ExternalField, t: f64) -> f64 {
    if h.is_zero() {
        return 0.0;
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    reduce::sum_with(nx * ny, |idx| {
        let (i, j) = (idx % nx, idx / nx);
        let v = h.time_derivative(t, grid.x(Layout::Center, i), grid.y(Layout::Center, j));
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }) * grid.cell_area()
}

/// Bound the residual may not exceed at time t on a grid of spacing h.
pub fn energy_tolerance(c_e: f64, dt: f64, h: f64, t: f64) -> f64 {
    c_e * (dt + h * h) * t
}

/// Theorem-style smallness scalar of the data: E(0) plus the source-field
/// norms over the whole horizon, sampled at stride dt (sup for the field,
/// trapezoid for its time derivative). Reported raw; the threshold constant
/// is domain-dependent and unknown.
pub fn smallness_indicator(
    grid: &Grid,
    initial: &State,
    density: &dyn ElasticDensity,
    hext: &ExternalField,
    t_final: f64,
    dt: f64,
) -> Result<f64> {
    let e0 = total_energy(grid, initial, density)?;
    if hext.is_zero() || t_final == 0.0 {
        return Ok(e0);
    }
    let steps = (t_final / dt).ceil() as usize;
    let mut sup_h = 0.0f64;
    let mut int_dth = 0.0;
    let mut prev = dthext_l1(grid, hext, 0.0);
    sup_h = sup_h.max(hext_l1(grid, hext, 0.0));
    for k in 1..=steps {
        let t = (k as f64 * dt).min(t_final);
        let w = t - ((k - 1) as f64 * dt).min(t_final);
        let cur = dthext_l1(grid, hext, t);
        int_dth += 0.5 * w * (prev + cur);
        prev = cur;
        sup_h = sup_h.max(hext_l1(grid, hext, t));
    }
    Ok(e0 + 2.0 * sup_h + int_dth)
}

#[derive(Clone, Debug)]
pub struct DiagRow {
    pub t: f64,
    pub energy: f64,
    pub grad_v_sq: f64,
    pub elastic_dissipation: f64,
    pub delta_m_sq: f64,
    pub f_l2_sq: f64,
    pub grad_f_sq: f64,
    pub grad_m_sq: f64,
    pub grad_m_l4_4: f64,
    pub m3_sq: f64,
    pub constraint_drift: f64,
    pub div_residual: f64,
    pub cum_dissipation: f64,
    pub cum_delta_m_sq: f64,
    pub hext_l1: f64,
    pub dthext_l1: f64,
    pub cum_dthext_l1: f64,
    pub energy_residual: f64,
    /// Data smallness scalar; populated on row 0 only, 0 afterwards.
    pub smallness: f64,
}

pub const CSV_HEADER: &str = "t,energy,grad_v_sq,elastic_dissipation,delta_m_sq,f_l2_sq,\
grad_f_sq,grad_m_sq,grad_m_l4_4,m3_sq,constraint_drift,div_residual,cum_dissipation,\
cum_delta_m_sq,hext_l1,dthext_l1,cum_dthext_l1,energy_residual,smallness";

impl DiagRow {
    fn csv_line(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        [
            self.t,
            self.energy,
            self.grad_v_sq,
            self.elastic_dissipation,
            self.delta_m_sq,
            self.f_l2_sq,
            self.grad_f_sq,
            self.grad_m_sq,
            self.grad_m_l4_4,
            self.m3_sq,
            self.constraint_drift,
            self.div_residual,
            self.cum_dissipation,
            self.cum_delta_m_sq,
            self.hext_l1,
            self.dthext_l1,
            self.cum_dthext_l1,
            self.energy_residual,
            self.smallness,
        ]
        .map(f)
        .join(",")
    }

    fn is_finite(&self) -> bool {
        [
            self.t,
            self.energy,
            self.grad_v_sq,
            self.elastic_dissipation,
            self.delta_m_sq,
            self.f_l2_sq,
            self.grad_f_sq,
            self.grad_m_sq,
            self.grad_m_l4_4,
            self.m3_sq,
            self.constraint_drift,
            self.div_residual,
            self.cum_dissipation,
            self.cum_delta_m_sq,
            self.hext_l1,
            self.dthext_l1,
            self.cum_dthext_l1,
            self.energy_residual,
            self.smallness,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, Default)]
pub struct DiagnosticsSeries {
    pub rows: Vec<DiagRow>,
}

impl DiagnosticsSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + self.rows.len() * 420);
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.rows.iter().enumerate() {
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    op: "diagnostics row",
                });
            }
            if k > 0 && !(r.t > self.rows[k - 1].t) {
                return Err(Error::config(format!(
                    "diagnostics times must increase strictly, row {k} has t = {}",
                    r.t
                )));
            }
        }
        Ok(())
    }

    /// Largest positive energy-inequality residual, 0 if none is positive.
    pub fn max_positive_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.energy_residual.max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Accumulates rows from a run: instantaneous quantities from the state,
/// cumulative quantities by trapezoid, and the running residual.
pub struct SeriesBuilder {
    rows: Vec<DiagRow>,
    e0: f64,
    sup_hext: f64,
    cum_dissipation: f64,
    cum_delta_m: f64,
    cum_dthext: f64,
    prev: Option<PrevRates>,
}

struct PrevRates {
    t: f64,
    dissipation: f64,
    delta_m: f64,
    dthext: f64,
}

impl SeriesBuilder {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        SeriesBuilder {
            rows: Vec::new(),
            e0: 0.0,
            sup_hext: 0.0,
            cum_dissipation: 0.0,
            cum_delta_m: 0.0,
            cum_dthext: 0.0,
            prev: None,
        }
    }

    /// One diagnostics row. Runs once per step on the hot path, so shared
    /// intermediates (F gradients, M gradients, ||M_3||) are computed once
    /// and reused across the quantities that need them; the values match the
    /// standalone helpers up to summation roundoff.
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        grid: &Grid,
        state: &State,
        density: &dyn ElasticDensity,
        kappa: f64,
        hext: &ExternalField,
        constraint_drift: f64,
        div_residual: f64,
    ) -> Result<()> {
        state.expect(grid, "observe")?;
        let t = state.time;
        let area = grid.cell_area();

        let kinetic = 0.5 * norms::norm_l2_vec2(grid, &state.velocity)?.powi(2);
        let grad_v_sq = norms::seminorm_h1_mac(grid, &state.velocity)?.powi(2);

        // Deformation: the componentwise gradients feed both the H1 seminorm
        // and the dissipation quadrature.
        let f = &state.deformation;
        let elastic = elastic_energy(grid, f, density)?;
        let f_l2_sq = norms::norm_l2_mat22(grid, f)?.powi(2);
        let fd: [&[f64]; 4] = std::array::from_fn(|k| f.c[k].data());
        let mut grad_f_sq = 0.0;
        let mut elastic_dissipation = 0.0;
        for axis in [Axis::X, Axis::Y] {
            let mut grads: Vec<ScalarField> = Vec::with_capacity(4);
            for k in 0..4 {
                grads.push(ops::deriv_center(
                    grid,
                    &f.c[k],
                    axis,
                    Edge::Ghost(Bc::Dirichlet0),
                )?);
            }
            let g: [&[f64]; 4] = std::array::from_fn(|k| grads[k].data());
            grad_f_sq += area
                * reduce::sum_with(g[0].len(), |i| {
                    g[0][i] * g[0][i] + g[1][i] * g[1][i] + g[2][i] * g[2][i] + g[3][i] * g[3][i]
                });
            elastic_dissipation += kappa
                * area
                * reduce::sum_with(g[0].len(), |i| {
                    let a = [fd[0][i], fd[1][i], fd[2][i], fd[3][i]];
                    let dir = [g[0][i], g[1][i], g[2][i], g[3][i]];
                    let hd = density.hessian_apply(a, dir);
                    hd[0] * dir[0] + hd[1] * dir[1] + hd[2] * dir[2] + hd[3] * dir[3]
                });
        }

        // Magnetization: gradients feed the exchange energy and both gradient
        // norms; Laplacians feed the Delta M quadrature.
        let m = &state.magnetization;
        let mut sq = vec![0.0; grid.cell_count()];
        for k in 0..3 {
            for axis in [Axis::X, Axis::Y] {
                let d = ops::deriv_center(grid, &m.c[k], axis, Edge::Ghost(Bc::Neumann0))?;
                for (o, v) in sq.iter_mut().zip(d.data()) {
                    *o += v * v;
                }
            }
        }
        let grad_m_sq = area * reduce::sum(&sq);
        let gm44 = area * reduce::sum_with(sq.len(), |i| sq[i] * sq[i]);
        let dm_sq = delta_m_sq(grid, m)?;
        let m3 = m.c[2].data();
        let m3_sq = area * reduce::sum_with(m3.len(), |i| m3[i] * m3[i]);

        let energy = kinetic + elastic + 0.5 * grad_m_sq + 0.5 * m3_sq;
        let h_l1 = hext_l1(grid, hext, t);
        let dth_l1 = dthext_l1(grid, hext, t);

        let dissipation = grad_v_sq + elastic_dissipation;
        match &self.prev {
            None => self.e0 = energy,
            Some(p) => {
                let w = 0.5 * (t - p.t);
                self.cum_dissipation += w * (dissipation + p.dissipation);
                self.cum_delta_m += w * (dm_sq + p.delta_m);
                self.cum_dthext += w * (dth_l1 + p.dthext);
            }
        }
        self.sup_hext = self.sup_hext.max(h_l1);
        self.prev = Some(PrevRates {
            t,
            dissipation,
            delta_m: dm_sq,
            dthext: dth_l1,
        });

        let energy_residual = (energy + self.cum_dissipation)
            - (self.e0 + 2.0 * self.sup_hext + self.cum_dthext);

        self.rows.push(DiagRow {
            t,
            energy,
            grad_v_sq,
            elastic_dissipation,
            delta_m_sq: dm_sq,
            f_l2_sq,
            grad_f_sq,
            grad_m_sq,
            grad_m_l4_4: gm44,
            m3_sq,
            constraint_drift,
            div_residual,
            cum_dissipation: self.cum_dissipation,
            cum_delta_m_sq: self.cum_delta_m,
            hext_l1: h_l1,
            dthext_l1: dth_l1,
            cum_dthext_l1: self.cum_dthext,
            energy_residual,
            smallness: 0.0,
        });
        Ok(())
    }

    pub fn set_smallness(&mut self, value: f64) {
        if let Some(row) = self.rows.first_mut() {
            row.smallness = value;
        }
    }

    pub fn finish(self) -> DiagnosticsSeries {
        DiagnosticsSeries { rows: self.rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elastic::Quadratic;
    use crate::scenario::MagnetizationPreset;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::from_domain(16, 16, 1.0, 1.0).unwrap()
    }

    #[test]
    fn energy_of_the_two_rest_states() {
        let g = grid();
        let mut s = State::zeros(&g);
        s.magnetization = MagnetizationPreset::Uniform {
            mx: 1.0,
            my: 0.0,
            mz: 0.0,
        }
        .sample(&g);
        assert_eq!(total_energy(&g, &s, &Quadratic).unwrap(), 0.0);
        s.magnetization = MagnetizationPreset::Uniform {
            mx: 0.0,
            my: 0.0,
            mz: 1.0,
        }
        .sample(&g);
        assert_relative_eq!(
            total_energy(&g, &s, &Quadratic).unwrap(),
            0.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn energy_matches_an_independent_compensated_sum() {
        use rand::{Rng, SeedableRng};
        let g = grid();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = State::zeros(&g);
        for f in [&mut s.velocity.x, &mut s.velocity.y] {
            for v in f.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        for k in 0..4 {
            for v in s.deformation.c[k].data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        s.magnetization = MagnetizationPreset::Wave { amp: 0.8, tilt: 0.3 }.sample(&g);

        // Kahan-compensated reference written against the same definitions
        // but through none of the norm helpers.
        let kahan = |values: &mut dyn Iterator<Item = f64>| -> f64 {
            let (mut sum, mut c) = (0.0f64, 0.0f64);
            for v in values {
                let y = v - c;
                let t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            sum
        };
        let area = g.cell_area();
        let vxc = crate::ops::face_x_to_center(&g, &s.velocity.x).unwrap();
        let vyc = crate::ops::face_y_to_center(&g, &s.velocity.y).unwrap();
        let kin = 0.5
            * area
            * kahan(
                &mut (0..vxc.len())
                    .map(|i| vxc.data()[i].powi(2) + vyc.data()[i].powi(2)),
            );
        let ela = area
            * kahan(&mut (0..g.cell_count()).map(|i| {
                0.5 * (0..4)
                    .map(|k| s.deformation.c[k].data()[i].powi(2))
                    .sum::<f64>()
            }));
        let mut grads = Vec::new();
        for k in 0..3 {
            for axis in [Axis::X, Axis::Y] {
                grads.push(
                    ops::deriv_center(&g, &s.magnetization.c[k], axis, Edge::Ghost(Bc::Neumann0))
                        .unwrap(),
                );
            }
        }
        let exch = 0.5
            * area
            * kahan(&mut (0..g.cell_count()).map(|i| {
                grads.iter().map(|d| d.data()[i].powi(2)).sum::<f64>()
            }));
        let stray = 0.5
            * area
            * kahan(
                &mut (0..g.cell_count()).map(|i| s.magnetization.c[2].data()[i].powi(2)),
            );
        let reference = kin + ela + exch + stray;
        let e = total_energy(&g, &s, &Quadratic).unwrap();
        assert_relative_eq!(e, reference, max_relative = 1e-10);
        assert!(e >= 0.0);
    }

    #[test]
    fn quad_dissipation_reduces_to_weighted_gradient_norm() {
        let g = grid();
        let mut f = MatrixField22::zeros(&g);
        for (k, c) in f.c.iter_mut().enumerate() {
            *c = ScalarField::from_fn(&g, Layout::Center, |x, y| {
                ((k + 1) as f64) * (std::f64::consts::PI * x).sin() * (2.3 * y).cos()
            });
        }
        let kappa = 0.37;
        let direct = elastic_dissipation_rate(&g, &f, &Quadratic, kappa).unwrap();
        let via_norm =
            kappa * norms::seminorm_h1_mat22(&g, &f, Bc::Dirichlet0).unwrap().powi(2);
        assert_relative_eq!(direct, via_norm, max_relative = 1e-13);
    }

    #[test]
    fn smallness_of_the_rest_state_is_half() {
        let g = grid();
        let mut s = State::zeros(&g);
        s.magnetization = MagnetizationPreset::Uniform {
            mx: 0.0,
            my: 0.0,
            mz: 1.0,
        }
        .sample(&g);
        let v =
            smallness_indicator(&g, &s, &Quadratic, &ExternalField::Zero, 1.0, 1e-3).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn smallness_source_terms_match_a_time_quadrature_oracle() {
        // H = h cos(w t): sup_t ||H||_1 = |h| |Omega| for w T >= 0, and
        // int_0^T ||dH/dt||_1 = |h| |Omega| w int |sin(w t)| = |h||Omega|(1-cos(w T))
        // for w T <= pi.
        let g = grid();
        let s = State::zeros(&g);
        let (w, t_final) = (2.0, 0.5);
        let h = ExternalField::Uniform {
            h: [0.3, 0.0, 0.4],
            omega: w,
        };
        let hmag = 0.5; // |(0.3, 0, 0.4)|
        let exact = 2.0 * hmag + hmag * (1.0 - (w * t_final).cos());
        let got = smallness_indicator(&g, &s, &Quadratic, &h, t_final, 2e-4).unwrap();
        assert_relative_eq!(got, exact, max_relative = 1e-8);
    }

    #[test]
    fn series_accumulates_trapezoids_and_flags_nonmonotone_time() {
        let g = grid();
        let mut s = State::zeros(&g);
        s.magnetization = MagnetizationPreset::Uniform {
            mx: 1.0,
            my: 0.0,
            mz: 0.0,
        }
        .sample(&g);
        let mut b = SeriesBuilder::new();
        for k in 0..3 {
            s.time = k as f64 * 0.1;
            b.observe(&g, &s, &Quadratic, 0.5, &ExternalField::Zero, 0.0, 0.0)
                .unwrap();
        }
        b.set_smallness(0.25);
        let series = b.finish();
        series.validate().unwrap();
        assert_eq!(series.rows[0].smallness, 0.25);
        assert_eq!(series.rows[1].smallness, 0.0);
        // Steady state: residual identically 0 and no positive part.
        assert_eq!(series.max_positive_residual(), 0.0);
        let csv = series.to_csv();
        assert!(csv.starts_with("t,energy,"));
        assert_eq!(csv.lines().count(), 4);

        let mut bad = series.clone();
        bad.rows[2].t = bad.rows[1].t;
        assert!(bad.validate().is_err());
    }
}
