//! Two-run stability harness. It evolves a reference solution and a
//! perturbed twin in lockstep, tracks the squared-distance functional
//!
//!   f(t) = 1/2 ( ||dv||^2 + ||dF||^2 + ||dM||^2 + ||grad dM||^2 )
//!
//! together with the cumulative dissipation of the difference
//!
//!   g(t) = integral of ||grad dv||^2 + ||grad dF||^2 + ||grad dM||^2
//!          + ||lap dM||^2,
//!
//! and assembles the weight h(t) of the Gronwall bound
//! f(t) <= f(0) exp(c int_0^t h). The constant c is a single fitted
//! parameter; the harness reports the smallest c that makes the bound hold
//! on the sampled trajectory and how it responds to step refinement.
//!
//! Second-derivative norms on Neumann data use the Laplacian as the
//! Hessian block: under a homogeneous zero-normal-derivative condition the
//! two have equal L^2 norms, and the fitted constant absorbs the discrete
//! mismatch. The harness is a measurement device, not a proof.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Bc, Grid, Layout};
use crate::hext::ExternalField;
use crate::norms;
use crate::ops;
use crate::reduce;
use crate::scenario::{InitialData, Scenario};
use crate::solver::Simulation;
use crate::state::State;
use std::f64::consts::PI;

/// Labels of the Gronwall weight terms, in CSV column order. Superscripts
/// 1/2 pick the reference and the perturbed run respectively.
pub const GRONWALL_LABELS: [&str; 12] = [
    "const",
    "grad_v1_sq",
    "grad_v2_sq",
    "v2_sq_grad_v2_sq",
    "grad_f1_sq",
    "grad_f2_sq",
    "m1_w22_sq",
    "m2_w22_sq",
    "m1_w32_sq",
    "m1_w22_pow4",
    "lap_m2_sq",
    "hext_w12_sq",
];

/// Which estimate family each weight term absorbs, aligned with
/// `GRONWALL_LABELS`.
pub const GRONWALL_SOURCES: [&str; 12] = [
    "interpolation slack",
    "velocity advection",
    "velocity advection",
    "velocity advection",
    "deformation transport",
    "deformation transport and stretching",
    "magnetization advection and exchange",
    "magnetization advection and exchange",
    "exchange stress coupling",
    "precession nonlinearity",
    "precession nonlinearity",
    "applied field forcing",
];

/// Distance functional f and instantaneous dissipation integrand g for a
/// pair of states on the same grid. Symmetric in its arguments.
pub fn difference_functionals(grid: &Grid, a: &State, b: &State) -> Result<(f64, f64)> {
    a.expect(grid, "difference functional")?;
    b.expect(grid, "difference functional")?;

    let mut dv = a.velocity.clone();
    dv.x.axpy(-1.0, &b.velocity.x);
    dv.y.axpy(-1.0, &b.velocity.y);
    let mut df = a.deformation.clone();
    for k in 0..4 {
        df.c[k].axpy(-1.0, &b.deformation.c[k]);
    }
    let mut dm = a.magnetization.clone();
    for k in 0..3 {
        dm.c[k].axpy(-1.0, &b.magnetization.c[k]);
    }

    let dv_l2 = norms::norm_l2_vec2(grid, &dv)?;
    let df_l2 = norms::norm_l2_mat22(grid, &df)?;
    let dm_l2 = norms::norm_l2_vec3(grid, &dm)?;
    let dm_h1 = norms::seminorm_h1_vec3(grid, &dm, Bc::Neumann0)?;
    let f = 0.5 * (dv_l2 * dv_l2 + df_l2 * df_l2 + dm_l2 * dm_l2 + dm_h1 * dm_h1);

    let dv_h1 = norms::seminorm_h1_mac(grid, &dv)?;
    let df_h1 = norms::seminorm_h1_mat22(grid, &df, Bc::Dirichlet0)?;
    let mut lap_sq = 0.0;
    for k in 0..3 {
        let lap = ops::laplacian(grid, &dm.c[k], Bc::Neumann0)?;
        let n = norms::norm_l2(grid, &lap)?;
        lap_sq += n * n;
    }
    let g = dv_h1 * dv_h1 + df_h1 * df_h1 + dm_h1 * dm_h1 + lap_sq;
    if !(f.is_finite() && g.is_finite()) {
        return Err(Error::NonFinite {
            op: "difference functional",
        });
    }
    Ok((f, g))
}

/// ||M||_{2,2}^2 with the Laplacian standing in for the Hessian block.
fn m_w22_sq(grid: &Grid, m: &crate::field::VectorField3) -> Result<(f64, f64)> {
    let l2 = norms::norm_l2_vec3(grid, m)?;
    let h1 = norms::seminorm_h1_vec3(grid, m, Bc::Neumann0)?;
    let mut lap_sq = 0.0;
    for k in 0..3 {
        let lap = ops::laplacian(grid, &m.c[k], Bc::Neumann0)?;
        let n = norms::norm_l2(grid, &lap)?;
        lap_sq += n * n;
    }
    Ok((l2 * l2 + h1 * h1 + lap_sq, lap_sq))
}

/// Adds the third-order block ||grad lap M||^2 on top of the W^{2,2} norm.
fn m_w32_sq(grid: &Grid, m: &crate::field::VectorField3) -> Result<f64> {
    let (w22, _) = m_w22_sq(grid, m)?;
    let mut third = 0.0;
    for k in 0..3 {
        let lap = ops::laplacian(grid, &m.c[k], Bc::Neumann0)?;
        let s = norms::seminorm_h1(grid, &lap, Bc::Neumann0)?;
        third += s * s;
    }
    Ok(w22 + third)
}

fn hext_w12_sq(grid: &Grid, h: &ExternalField, t: f64) -> f64 {
    if h.is_zero() {
        return 0.0;
    }
    let nx = grid.nx();
    let sum = reduce::sum_with(grid.cell_count(), |idx| {
        let (i, j) = (idx % nx, idx / nx);
        let x = grid.x(Layout::Center, i);
        let y = grid.y(Layout::Center, j);
        let v = h.value(t, x, y);
        let jac = h.jacobian(t, x, y);
        let mut s = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        for row in jac {
            s += row[0] * row[0] + row[1] * row[1];
        }
        s
    });
    sum * grid.cell_area()
}

#[derive(Clone, Debug)]
pub struct GronwallTerm {
    pub label: &'static str,
    pub source: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct GronwallBreakdown {
    pub terms: Vec<GronwallTerm>,
}

impl GronwallBreakdown {
    pub fn total(&self) -> f64 {
        self.terms.iter().map(|t| t.value).sum()
    }
}

/// The Gronwall weight h(t) for the pair (reference a, perturbed b), term
/// by term. Every term is a norm of one of the two solutions or of the
/// applied field, never of the difference, so h is computable without
/// knowing which bound step produced it.
pub fn gronwall_integrand(
    grid: &Grid,
    a: &State,
    b: &State,
    hext: &ExternalField,
    t: f64,
) -> Result<GronwallBreakdown> {
    a.expect(grid, "gronwall integrand")?;
    b.expect(grid, "gronwall integrand")?;
    let sq = |x: f64| x * x;

    let grad_v1 = sq(norms::seminorm_h1_mac(grid, &a.velocity)?);
    let grad_v2 = sq(norms::seminorm_h1_mac(grid, &b.velocity)?);
    let v2_l2 = sq(norms::norm_l2_vec2(grid, &b.velocity)?);
    let grad_f1 = sq(norms::seminorm_h1_mat22(grid, &a.deformation, Bc::Dirichlet0)?);
    let grad_f2 = sq(norms::seminorm_h1_mat22(grid, &b.deformation, Bc::Dirichlet0)?);
    let (m1_w22, _) = m_w22_sq(grid, &a.magnetization)?;
    let (m2_w22, lap_m2) = m_w22_sq(grid, &b.magnetization)?;
    let m1_w32 = m_w32_sq(grid, &a.magnetization)?;
    let hext_sq = hext_w12_sq(grid, hext, t);

    let values = [
        1.0,
        grad_v1,
        grad_v2,
        v2_l2 * grad_v2,
        grad_f1,
        grad_f2,
        m1_w22,
        m2_w22,
        m1_w32,
        m1_w22 * m1_w22,
        lap_m2,
        hext_sq,
    ];
    let terms: Vec<GronwallTerm> = GRONWALL_LABELS
        .iter()
        .zip(GRONWALL_SOURCES.iter())
        .zip(values.iter())
        .map(|((label, source), value)| GronwallTerm {
            label,
            source,
            value: *value,
        })
        .collect();
    if terms.iter().any(|t| !t.value.is_finite() || t.value < 0.0) {
        return Err(Error::NonFinite {
            op: "gronwall integrand",
        });
    }
    Ok(GronwallBreakdown { terms })
}

#[derive(Clone, Debug)]
pub struct DifferenceRow {
    pub t: f64,
    pub f: f64,
    /// Instantaneous dissipation integrand of the difference.
    pub g: f64,
    /// Trapezoid accumulation of `g`; zero at the first row.
    pub g_cum: f64,
    pub h: f64,
    pub cum_h: f64,
    /// f(0) exp(cum_h), the Gronwall majorant with c = 1.
    pub bound_unit: f64,
    /// Values aligned with `GRONWALL_LABELS`.
    pub h_terms: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DifferenceSeries {
    pub rows: Vec<DifferenceRow>,
}

impl DifferenceSeries {
    pub fn f0(&self) -> f64 {
        self.rows.first().map_or(0.0, |r| r.f)
    }

    /// Smallest c for which f(t) <= f(0) exp(c int h) holds at every
    /// sample; zero when the difference never grows (or is identically
    /// zero).
    pub fn c_fit(&self) -> f64 {
        let f0 = self.f0();
        if f0 <= 0.0 {
            return 0.0;
        }
        let mut c = 0.0f64;
        for r in &self.rows {
            if r.cum_h > 0.0 && r.f > 0.0 {
                c = c.max((r.f / f0).ln() / r.cum_h);
            }
        }
        c
    }

    /// max_t f(t) / ( f(0) exp(c int h) ); by construction <= 1 at
    /// c = c_fit, up to rounding.
    pub fn max_bound_ratio(&self, c: f64) -> f64 {
        let f0 = self.f0();
        if f0 <= 0.0 {
            return 0.0;
        }
        self.rows
            .iter()
            .map(|r| r.f / (f0 * (c * r.cum_h).exp()))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_g = 0.0;
        for r in &self.rows {
            let finite = r.t.is_finite()
                && r.f.is_finite()
                && r.g.is_finite()
                && r.g_cum.is_finite()
                && r.h.is_finite()
                && r.cum_h.is_finite()
                && r.h_terms.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite {
                    op: "difference series",
                });
            }
            if r.t <= prev_t {
                return Err(Error::config(format!(
                    "difference series time must increase, got {} after {}",
                    r.t, prev_t
                )));
            }
            if r.g_cum + 1e-15 < prev_g {
                return Err(Error::config(
                    "cumulative dissipation of the difference decreased",
                ));
            }
            prev_t = r.t;
            prev_g = r.g_cum;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,f,g,g_cum,h,cum_h,bound_unit");
        for label in GRONWALL_LABELS {
            s.push_str(",h_");
            s.push_str(label);
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.f, r.g, r.g_cum, r.h, r.cum_h, r.bound_unit
            ));
            for v in &r.h_terms {
                s.push_str(&format!(",{v:.16e}"));
            }
            s.push('\n');
        }
        s
    }
}

struct SeriesAccum {
    rows: Vec<DifferenceRow>,
    prev: Option<(f64, f64, f64)>,
}

impl SeriesAccum {
    fn new() -> SeriesAccum {
        SeriesAccum {
            rows: Vec::new(),
            prev: None,
        }
    }

    fn observe(
        &mut self,
        grid: &Grid,
        a: &State,
        b: &State,
        hext: &ExternalField,
    ) -> Result<()> {
        let t = a.time;
        let (f, g) = difference_functionals(grid, a, b)?;
        let breakdown = gronwall_integrand(grid, a, b, hext, t)?;
        let h = breakdown.total();
        let (mut g_cum, mut cum_h) = (0.0, 0.0);
        if let Some((pt, pg, ph)) = self.prev {
            let last = self.rows.last().expect("rows nonempty when prev is set");
            let w = 0.5 * (t - pt);
            g_cum = last.g_cum + w * (pg + g);
            cum_h = last.cum_h + w * (ph + h);
        }
        let f0 = self.rows.first().map_or(f, |r| r.f);
        self.rows.push(DifferenceRow {
            t,
            f,
            g,
            g_cum,
            h,
            cum_h,
            bound_unit: f0 * cum_h.exp(),
            h_terms: breakdown.terms.iter().map(|t| t.value).collect(),
        });
        self.prev = Some((t, g, h));
        Ok(())
    }
}

/// Adds a solenoidal velocity eddy, a single-mode deformation component
/// and an out-of-plane magnetization tilt, all of amplitude `eps`. The
/// velocity part is the discrete curl of a stream function vanishing on
/// the boundary, so wall pinning and the divergence constraint survive to
/// rounding.
fn perturb_state(grid: &Grid, state: &mut State, eps: f64) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let (lx, ly) = (hx * nx as f64, hy * ny as f64);
    let psi =
        |i: usize, j: usize| eps * (PI * i as f64 * hx / lx).sin() * (PI * j as f64 * hy / ly).sin();

    let vx = state.velocity.x.data_mut();
    for j in 0..ny {
        for i in 0..=nx {
            vx[j * (nx + 1) + i] += (psi(i, j + 1) - psi(i, j)) / hy;
        }
    }
    let vy = state.velocity.y.data_mut();
    for j in 0..=ny {
        for i in 0..nx {
            vy[j * nx + i] -= (psi(i + 1, j) - psi(i, j)) / hx;
        }
    }

    let f11 = state.deformation.c[0].data_mut();
    let m2 = state.magnetization.c[1].data_mut();
    for j in 0..ny {
        let y = grid.y(Layout::Center, j);
        for i in 0..nx {
            let x = grid.x(Layout::Center, i);
            let idx = j * nx + i;
            f11[idx] += eps * (PI * x / lx).sin() * (PI * y / ly).sin();
            m2[idx] += eps * (PI * x / lx).cos() * (PI * y / ly).cos();
        }
    }
}

/// Runs the scenario twice, once as given and once with an `eps`
/// perturbation of the initial data, and samples the difference
/// functionals after every step. With eps = 0 the twin is constructed by
/// the identical code path, so the difference is exactly zero bit for bit.
pub fn stability_experiment(scenario: &Scenario, eps: f64) -> Result<DifferenceSeries> {
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::config("perturbation amplitude must be finite and >= 0"));
    }
    let mut reference = Simulation::new(scenario)?;
    let mut perturbed = if eps == 0.0 {
        Simulation::new(scenario)?
    } else {
        let mut s = reference.state().clone();
        perturb_state(reference.grid(), &mut s, eps);
        Simulation::from_state(scenario, s)?
    };
    run_pair(scenario, &mut reference, &mut perturbed, None)
}

/// Secondary mode: the twin is the same scenario on a half-resolution
/// grid, prolonged to the fine grid for the comparison. The reported
/// difference carries the O(h^2) interpolation floor of the prolongation,
/// so f cannot reach zero here; the series measures divergence of the two
/// discretizations on top of that floor.
pub fn cross_resolution_experiment(scenario: &Scenario) -> Result<DifferenceSeries> {
    if scenario.nx % 2 != 0 || scenario.ny % 2 != 0 {
        return Err(Error::config(
            "cross-resolution mode needs even nx and ny",
        ));
    }
    if !matches!(scenario.initial, InitialData::Presets { .. }) {
        return Err(Error::config(
            "cross-resolution mode needs preset initial data (a snapshot fixes one grid)",
        ));
    }
    let mut coarse_sc = scenario.clone();
    coarse_sc.nx = scenario.nx / 2;
    coarse_sc.ny = scenario.ny / 2;
    let mut fine = Simulation::new(scenario)?;
    let mut coarse = Simulation::new(&coarse_sc)?;
    run_pair(scenario, &mut fine, &mut coarse, Some(scenario.grid()?))
}

fn run_pair(
    scenario: &Scenario,
    a: &mut Simulation,
    b: &mut Simulation,
    prolong_to: Option<Grid>,
) -> Result<DifferenceSeries> {
    let t_final = scenario.t_final;
    let tiny = 1e-12 * t_final.max(1.0);
    let mut accum = SeriesAccum::new();
    let observe = |accum: &mut SeriesAccum, a: &Simulation, b: &Simulation| -> Result<()> {
        match &prolong_to {
            None => accum.observe(a.grid(), a.state(), b.state(), &scenario.hext),
            Some(fine) => {
                let lifted = prolong_state(b.grid(), b.state(), fine)?;
                accum.observe(fine, a.state(), &lifted, &scenario.hext)
            }
        }
    };
    observe(&mut accum, a, b)?;
    while a.time() < t_final - tiny {
        let (ra, rb) = rayon::join(|| a.advance_clipped(t_final), || b.advance_clipped(t_final));
        ra?;
        rb?;
        if (a.time() - b.time()).abs() > tiny {
            return Err(Error::config(format!(
                "runs desynchronized: t = {} vs {}",
                a.time(),
                b.time()
            )));
        }
        observe(&mut accum, a, b)?;
    }
    let series = DifferenceSeries { rows: accum.rows };
    series.validate()?;
    Ok(series)
}

/// Clamped bilinear interpolation in index space.
fn bilinear(data: &[f64], n_u: usize, n_v: usize, u: f64, v: f64) -> f64 {
    let uc = u.clamp(0.0, (n_u - 1) as f64);
    let vc = v.clamp(0.0, (n_v - 1) as f64);
    let i0 = uc.floor() as usize;
    let j0 = vc.floor() as usize;
    let i1 = (i0 + 1).min(n_u - 1);
    let j1 = (j0 + 1).min(n_v - 1);
    let fu = uc - i0 as f64;
    let fv = vc - j0 as f64;
    let at = |i: usize, j: usize| data[j * n_u + i];
    (1.0 - fu) * (1.0 - fv) * at(i0, j0)
        + fu * (1.0 - fv) * at(i1, j0)
        + (1.0 - fu) * fv * at(i0, j1)
        + fu * fv * at(i1, j1)
}

/// Bilinear prolongation of a full state onto a finer grid covering the
/// same domain. Values outside the coarse sample hull are clamped
/// (constant extrapolation), an O(h^2) effect confined to the boundary
/// band. The prolonged magnetization is no longer exactly unit length.
pub fn prolong_state(coarse: &Grid, state: &State, fine: &Grid) -> Result<State> {
    state.expect(coarse, "prolongation")?;
    let same_domain = (coarse.nx() as f64 * coarse.hx() - fine.nx() as f64 * fine.hx()).abs()
        < 1e-12
        && (coarse.ny() as f64 * coarse.hy() - fine.ny() as f64 * fine.hy()).abs() < 1e-12;
    if !same_domain {
        return Err(Error::config(
            "prolongation requires grids over the same domain",
        ));
    }
    let mut out = State::zeros(fine);
    out.time = state.time;

    let lift = |src: &ScalarField, layout: Layout, dst: &mut ScalarField| {
        let (n_u, n_v, off_u, off_v) = match layout {
            Layout::Center => (coarse.nx(), coarse.ny(), 0.5, 0.5),
            Layout::FaceX => (coarse.nx() + 1, coarse.ny(), 0.0, 0.5),
            Layout::FaceY => (coarse.nx(), coarse.ny() + 1, 0.5, 0.0),
        };
        let (fn_u, fn_v) = match layout {
            Layout::Center => (fine.nx(), fine.ny()),
            Layout::FaceX => (fine.nx() + 1, fine.ny()),
            Layout::FaceY => (fine.nx(), fine.ny() + 1),
        };
        let d = dst.data_mut();
        for j in 0..fn_v {
            let y = fine.y(layout, j);
            let v = y / coarse.hy() - off_v;
            for i in 0..fn_u {
                let x = fine.x(layout, i);
                let u = x / coarse.hx() - off_u;
                d[j * fn_u + i] = bilinear(src.data(), n_u, n_v, u, v);
            }
        }
    };
    lift(&state.velocity.x, Layout::FaceX, &mut out.velocity.x);
    lift(&state.velocity.y, Layout::FaceY, &mut out.velocity.y);
    lift(&state.pressure, Layout::Center, &mut out.pressure);
    for k in 0..4 {
        lift(&state.deformation.c[k], Layout::Center, &mut out.deformation.c[k]);
    }
    for k in 0..3 {
        lift(&state.magnetization.c[k], Layout::Center, &mut out.magnetization.c[k]);
    }
    Ok(out)
}
