//! Matrix-free conjugate gradients plus the two linear solves the scheme
//! needs: the Neumann pressure Poisson problem and implicit-diffusion
//! (Helmholtz) solves.
//!
//! Both solves are damped-Jacobi flavoured CG. The Helmholtz operators are
//! diagonally dominant and take a plain damped-Jacobi preconditioner; the
//! pressure Poisson problem is ill-conditioned enough that plain CG needs
//! O(n) iterations per decade, so [`PressureSolver`] wraps CG around one
//! geometric multigrid V-cycle per iteration, with the same damped Jacobi as
//! the smoother. Everything stays matrix-free, serial in the smoothing loops,
//! and bitwise deterministic.
//!
//! Operator convention: `solve_poisson` returns phi with `Lap phi = rhs`
//! (check: rhs = cos(2 pi x / Lx) gives phi = -(Lx / 2 pi)^2 cos(2 pi x / Lx)).
//! Internally CG runs on the positive (semi)definite form `c0 I + a (-Lap)`.
//!
//! The Neumann operator is singular with constant kernel: the right-hand side
//! is projected mean-free, the returned solution is mean-free, and the amount
//! subtracted is reported in [`PoissonSolution::mean_removed`].

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Bc, Grid, Layout};
use crate::reduce;

/// Damped-Jacobi weight. The scale of a preconditioner cancels from the CG
/// trajectory in exact arithmetic; the classical 2/3 is kept for clarity.
const JACOBI_OMEGA: f64 = 2.0 / 3.0;

const MAX_ITER_DEFAULT: usize = 20_000;

/// Matrix-free stencil for `c0 I + a (-Lap)` on one layout.
///
/// Face layouts pin their wall nodes: those rows act as the identity, and as
/// long as right-hand side and initial guess vanish there (enforced by the
/// solvers below), CG never moves them, so the iteration is exactly CG on the
/// interior block, which is symmetric.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    w: usize,
    h: usize,
    ix2: f64,
    iy2: f64,
    c0: f64,
    a: f64,
    layout: Layout,
    /// Ghost multiplier for center layouts: -1 Dirichlet, +1 Neumann.
    sign: f64,
}

impl Stencil {
    pub fn new(grid: &Grid, layout: Layout, bc: Bc, c0: f64, a: f64) -> Result<Stencil> {
        if layout != Layout::Center && bc != Bc::Dirichlet0 {
            return Err(Error::config(
                "face-layout solves support dirichlet0 only",
            ));
        }
        let (w, h) = grid.shape(layout);
        Ok(Stencil {
            w,
            h,
            ix2: 1.0 / (grid.hx() * grid.hx()),
            iy2: 1.0 / (grid.hy() * grid.hy()),
            c0,
            a,
            layout,
            sign: match bc {
                Bc::Dirichlet0 => -1.0,
                Bc::Neumann0 => 1.0,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.w * self.h
    }

    fn pinned(&self, i: usize, j: usize) -> bool {
        match self.layout {
            Layout::Center => false,
            Layout::FaceX => i == 0 || i == self.w - 1,
            Layout::FaceY => j == 0 || j == self.h - 1,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        assert_eq!(x.len(), w * h);
        assert_eq!(out.len(), w * h);
        // Face layouts mirror-negate in the tangential direction; centers use
        // self.sign in both.
        let (sx, sy) = match self.layout {
            Layout::Center => (self.sign, self.sign),
            Layout::FaceX | Layout::FaceY => (-1.0, -1.0),
        };
        for j in 0..h {
            let row = j * w;
            let cur = &x[row..row + w];
            let (below, ms) = if j > 0 {
                (&x[row - w..row], 1.0)
            } else {
                (cur, sy)
            };
            let (above, ma) = if j + 1 < h {
                (&x[row + w..row + 2 * w], 1.0)
            } else {
                (cur, sy)
            };
            let o = &mut out[row..row + w];
            for i in 0..w {
                let c = cur[i];
                let fw = if i > 0 { cur[i - 1] } else { sx * c };
                let fe = if i + 1 < w { cur[i + 1] } else { sx * c };
                let fs = ms * below[i];
                let fn_ = ma * above[i];
                o[i] = self.c0 * c
                    + self.a
                        * ((2.0 * c - fw - fe) * self.ix2 + (2.0 * c - fs - fn_) * self.iy2);
            }
            // Pinned wall rows act as identity.
            match self.layout {
                Layout::FaceX => {
                    o[0] = cur[0];
                    o[w - 1] = cur[w - 1];
                }
                Layout::FaceY if j == 0 || j == h - 1 => {
                    o.copy_from_slice(cur);
                }
                _ => {}
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let mut d = vec![0.0; w * h];
        let (sx, sy) = match self.layout {
            Layout::Center => (self.sign, self.sign),
            Layout::FaceX | Layout::FaceY => (-1.0, -1.0),
        };
        for j in 0..h {
            for i in 0..w {
                if self.pinned(i, j) {
                    d[j * w + i] = 1.0;
                    continue;
                }
                // A ghost with multiplier s folds into the diagonal as (2 - s).
                let cx = match self.layout {
                    Layout::FaceX => 2.0,
                    _ => {
                        let mut c = 2.0;
                        if i == 0 {
                            c -= sx;
                        }
                        if i == w - 1 {
                            c -= sx;
                        }
                        c
                    }
                };
                let cy = match self.layout {
                    Layout::FaceY => 2.0,
                    _ => {
                        let mut c = 2.0;
                        if j == 0 {
                            c -= sy;
                        }
                        if j == h - 1 {
                            c -= sy;
                        }
                        c
                    }
                };
                d[j * w + i] = self.c0 + self.a * (cx * self.ix2 + cy * self.iy2);
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final absolute residual 2-norm.
    pub residual: f64,
}

#[derive(Debug, Default)]
pub(crate) struct CgScratch {
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
}

impl CgScratch {
    fn ensure(&mut self, n: usize) {
        for v in [&mut self.r, &mut self.z, &mut self.p, &mut self.ap] {
            v.clear();
            v.resize(n, 0.0);
        }
    }
}

/// Preconditioned CG on `op x = b` with absolute residual target `tol_abs`.
/// `x` holds the initial guess on entry and the solution on exit.
/// `precond` must apply a fixed symmetric positive definite operator.
pub(crate) fn pcg(
    op: &Stencil,
    precond: &mut dyn FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol_abs: f64,
    max_iter: usize,
    ws: &mut CgScratch,
) -> Result<CgOutcome> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    ws.ensure(n);

    op.apply(x, &mut ws.ap);
    for i in 0..n {
        ws.r[i] = b[i] - ws.ap[i];
    }
    let mut rnorm = reduce::dot(&ws.r, &ws.r).sqrt();
    if rnorm <= tol_abs {
        return Ok(CgOutcome {
            iterations: 0,
            residual: rnorm,
        });
    }
    precond(&ws.r, &mut ws.z);
    ws.p.copy_from_slice(&ws.z);
    let mut rz = reduce::dot(&ws.r, &ws.z);
    for k in 0..max_iter {
        op.apply(&ws.p, &mut ws.ap);
        let pap = reduce::dot(&ws.p, &ws.ap);
        if !(pap > 0.0 && pap.is_finite()) || !(rz > 0.0 && rz.is_finite()) {
            return Err(Error::Solver {
                iterations: k,
                residual: rnorm,
                target: tol_abs,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * ws.p[i];
        }
        for i in 0..n {
            ws.r[i] -= alpha * ws.ap[i];
        }
        rnorm = reduce::dot(&ws.r, &ws.r).sqrt();
        if rnorm <= tol_abs {
            return Ok(CgOutcome {
                iterations: k + 1,
                residual: rnorm,
            });
        }
        precond(&ws.r, &mut ws.z);
        let rz_next = reduce::dot(&ws.r, &ws.z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            ws.p[i] = ws.z[i] + beta * ws.p[i];
        }
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: rnorm,
        target: tol_abs,
    })
}

/// Damped-Jacobi sweeps on the coarsest multigrid level. The coarsest
/// problem has at most a few dozen unknowns; a fixed sweep count keeps the
/// preconditioner a fixed linear operator (exact singular solves are neither
/// possible nor needed).
const COARSE_SWEEPS: usize = 24;

/// Coarsening stops once a side would shrink to this size or below.
const MG_MIN_SIDE: usize = 3;

/// One interpolation tap: fine index i draws from coarse `i0`, `i1` with
/// weights `w0`, `w1` (w0 + w1 = 1; clamped at walls, where i0 == i1).
type Tap = (usize, usize, f64, f64);

/// Cell-centered bilinear taps from `nc` coarse cells onto `nf` fine cells.
fn transfer_taps(nf: usize, nc: usize) -> Vec<Tap> {
    (0..nf)
        .map(|i| {
            let u = (i as f64 + 0.5) * nc as f64 / nf as f64 - 0.5;
            let base = u.floor();
            let frac = u - base;
            let base = base as isize;
            if base < 0 {
                (0, 0, 1.0, 0.0)
            } else if base as usize >= nc - 1 {
                (nc - 1, nc - 1, 1.0, 0.0)
            } else {
                (base as usize, base as usize + 1, 1.0 - frac, frac)
            }
        })
        .collect()
}

/// One multigrid level: the rediscretized Neumann operator, the damped-Jacobi
/// smoother weights, interpolation taps toward the next coarser level, and
/// the level's residual / correction / scratch vectors.
struct MgLevel {
    op: Stencil,
    /// JACOBI_OMEGA / diag, so a smoothing sweep is a single multiply.
    idiag: Vec<f64>,
    w: usize,
    h: usize,
    tx: Vec<Tap>,
    ty: Vec<Tap>,
    r: Vec<f64>,
    z: Vec<f64>,
    tmp: Vec<f64>,
}

impl MgLevel {
    /// z = omega D^-1 r (one Jacobi sweep from a zero start).
    fn smooth_assign(&mut self) {
        for i in 0..self.z.len() {
            self.z[i] = self.r[i] * self.idiag[i];
        }
    }

    /// tmp = r - A z.
    fn residual(&mut self) {
        self.op.apply(&self.z, &mut self.tmp);
        for i in 0..self.tmp.len() {
            self.tmp[i] = self.r[i] - self.tmp[i];
        }
    }

    /// z += omega D^-1 tmp (expects `residual` to have just run).
    fn smooth_correct(&mut self) {
        for i in 0..self.z.len() {
            self.z[i] += self.tmp[i] * self.idiag[i];
        }
    }

    fn coarse_solve(&mut self) {
        self.smooth_assign();
        for _ in 1..COARSE_SWEEPS {
            self.residual();
            self.smooth_correct();
        }
    }
}

/// Full-weighting restriction: coarse.r = (1/4) P^T fine.tmp. Using the exact
/// transpose of the prolongation taps keeps the V-cycle symmetric, which CG
/// requires of its preconditioner.
fn restrict(fine: &MgLevel, coarse: &mut MgLevel) {
    for v in &mut coarse.r {
        *v = 0.0;
    }
    let wc = coarse.w;
    for j in 0..fine.h {
        let (j0, j1, wy0, wy1) = fine.ty[j];
        for i in 0..fine.w {
            let (i0, i1, wx0, wx1) = fine.tx[i];
            let s = 0.25 * fine.tmp[j * fine.w + i];
            coarse.r[j0 * wc + i0] += wy0 * wx0 * s;
            coarse.r[j0 * wc + i1] += wy0 * wx1 * s;
            coarse.r[j1 * wc + i0] += wy1 * wx0 * s;
            coarse.r[j1 * wc + i1] += wy1 * wx1 * s;
        }
    }
}

/// fine.z += P coarse.z (cell-centered bilinear prolongation).
fn prolong_add(fine: &mut MgLevel, coarse: &MgLevel) {
    let wc = coarse.w;
    for j in 0..fine.h {
        let (j0, j1, wy0, wy1) = fine.ty[j];
        for i in 0..fine.w {
            let (i0, i1, wx0, wx1) = fine.tx[i];
            fine.z[j * fine.w + i] += wy0
                * (wx0 * coarse.z[j0 * wc + i0] + wx1 * coarse.z[j0 * wc + i1])
                + wy1 * (wx0 * coarse.z[j1 * wc + i0] + wx1 * coarse.z[j1 * wc + i1]);
        }
    }
}

/// One V(1,1) cycle: reads `levels[0].r`, writes `levels[0].z`. Symmetric by
/// construction (matching pre/post smoothers, restriction the transpose of
/// prolongation, recursion preserving the pattern), so it is a valid CG
/// preconditioner regardless of how well it happens to contract.
fn vcycle(levels: &mut [MgLevel]) {
    if levels.len() == 1 {
        levels[0].coarse_solve();
        return;
    }
    let (fine, rest) = levels.split_first_mut().expect("empty hierarchy");
    fine.smooth_assign();
    fine.residual();
    restrict(fine, &mut rest[0]);
    vcycle(rest);
    prolong_add(fine, &rest[0]);
    fine.residual();
    fine.smooth_correct();
}

/// Pressure Poisson solver: CG preconditioned with one multigrid V-cycle per
/// iteration. The hierarchy is built once per grid and reused across steps,
/// so a running simulation should hold on to one of these.
pub(crate) struct PressureSolver {
    levels: Vec<MgLevel>,
    ws: CgScratch,
}

impl PressureSolver {
    pub fn new(grid: &Grid) -> Result<PressureSolver> {
        let (w0, h0) = grid.shape(Layout::Center);
        let lx = w0 as f64 * grid.hx();
        let ly = h0 as f64 * grid.hy();
        let mut dims = vec![(w0, h0)];
        loop {
            let (w, h) = *dims.last().expect("nonempty");
            if w.min(h) <= MG_MIN_SIDE {
                break;
            }
            dims.push((w.div_ceil(2), h.div_ceil(2)));
        }
        let mut levels = Vec::with_capacity(dims.len());
        for (k, &(w, h)) in dims.iter().enumerate() {
            let hx = lx / w as f64;
            let hy = ly / h as f64;
            let op = Stencil {
                w,
                h,
                ix2: 1.0 / (hx * hx),
                iy2: 1.0 / (hy * hy),
                c0: 0.0,
                a: 1.0,
                layout: Layout::Center,
                sign: 1.0,
            };
            let idiag = op.diagonal().iter().map(|d| JACOBI_OMEGA / d).collect();
            let (tx, ty) = match dims.get(k + 1) {
                Some(&(wc, hc)) => (transfer_taps(w, wc), transfer_taps(h, hc)),
                None => (Vec::new(), Vec::new()),
            };
            levels.push(MgLevel {
                op,
                idiag,
                w,
                h,
                tx,
                ty,
                r: vec![0.0; w * h],
                z: vec![0.0; w * h],
                tmp: vec![0.0; w * h],
            });
        }
        Ok(PressureSolver {
            levels,
            ws: CgScratch::default(),
        })
    }

    /// Solve `Lap phi = rhs` with homogeneous Neumann walls; `phi` is
    /// mean-free and `tol_rel` bounds the residual relative to `||rhs||_2`.
    /// An optional `guess` warm-starts the iteration.
    pub fn solve(
        &mut self,
        grid: &Grid,
        rhs: &ScalarField,
        tol_rel: f64,
        guess: Option<&ScalarField>,
    ) -> Result<PoissonSolution> {
        rhs.expect(grid, Layout::Center, "solve_poisson")?;
        let n = rhs.len();
        let fine = &self.levels[0];
        if (fine.w, fine.h) != grid.shape(Layout::Center) {
            return Err(Error::config(
                "pressure solver was built for a different grid",
            ));
        }
        let op = fine.op;

        // A = -Lap, so b = -(rhs - mean(rhs)); the projection enforces the
        // compatibility condition of the singular Neumann problem.
        let rhs_mean = reduce::sum(rhs.data()) / n as f64;
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = -(rhs.data()[i] - rhs_mean);
        }
        let bnorm = reduce::dot(&b, &b).sqrt();
        let mut phi = ScalarField::zeros(grid, Layout::Center);
        let mut mean_removed = 0.0;
        if let Some(g) = guess {
            g.expect(grid, Layout::Center, "solve_poisson guess")?;
            let gm = reduce::sum(g.data()) / n as f64;
            mean_removed += gm;
            for (o, v) in phi.data_mut().iter_mut().zip(g.data()) {
                *o = v - gm;
            }
        }
        if bnorm == 0.0 {
            phi.fill(0.0);
            return Ok(PoissonSolution {
                phi,
                iterations: 0,
                residual: 0.0,
                mean_removed,
            });
        }
        let PressureSolver { levels, ws } = self;
        let mut precond = |r: &[f64], z: &mut [f64]| {
            levels[0].r.copy_from_slice(r);
            vcycle(levels);
            z.copy_from_slice(&levels[0].z);
        };
        let outcome = pcg(
            &op,
            &mut precond,
            &b,
            phi.data_mut(),
            tol_rel * bnorm,
            MAX_ITER_DEFAULT,
            ws,
        )?;
        let m = reduce::sum(phi.data()) / n as f64;
        for v in phi.data_mut() {
            *v -= m;
        }
        mean_removed += m;
        Ok(PoissonSolution {
            phi,
            iterations: outcome.iterations,
            residual: outcome.residual,
            mean_removed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub phi: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Mean value subtracted to return a mean-free solution (guess mean plus
    /// final polish).
    pub mean_removed: f64,
}

/// Solve `Lap phi = rhs` with homogeneous Neumann walls; `phi` is mean-free.
/// `tol_rel` bounds the residual relative to `||rhs||_2`. One-shot wrapper
/// around [`PressureSolver`]; repeated solves should reuse one solver so the
/// multigrid hierarchy is built once.
pub fn solve_poisson(grid: &Grid, rhs: &ScalarField, tol_rel: f64) -> Result<PoissonSolution> {
    PressureSolver::new(grid)?.solve(grid, rhs, tol_rel, None)
}

/// Solve `(I + a (-Lap)) u = rhs` on the layout of `rhs` (implicit diffusion
/// step with step-size-times-diffusivity `a`). Face layouts keep their wall
/// nodes pinned to zero.
pub fn solve_helmholtz(
    grid: &Grid,
    rhs: &ScalarField,
    a: f64,
    bc: Bc,
    tol_rel: f64,
) -> Result<(ScalarField, CgOutcome)> {
    let mut out = rhs.clone();
    let outcome = solve_helmholtz_warm(grid, rhs, a, bc, tol_rel, None, &mut out, &mut CgScratch::default())?;
    Ok((out, outcome))
}

pub(crate) fn solve_helmholtz_warm(
    grid: &Grid,
    rhs: &ScalarField,
    a: f64,
    bc: Bc,
    tol_rel: f64,
    guess: Option<&ScalarField>,
    out: &mut ScalarField,
    ws: &mut CgScratch,
) -> Result<CgOutcome> {
    rhs.expect(grid, rhs.layout(), "solve_helmholtz")?;
    out.expect(grid, rhs.layout(), "solve_helmholtz out")?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::config(format!(
            "helmholtz coefficient must be finite and >= 0, got {a}"
        )));
    }
    let op = Stencil::new(grid, rhs.layout(), bc, 1.0, a)?;
    let diag = op.diagonal();
    let mut precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..r.len() {
            z[i] = JACOBI_OMEGA * r[i] / diag[i];
        }
    };
    // Wall rows of face layouts are pinned boundary conditions: any rhs
    // values there are ignored so the reduced interior system stays symmetric.
    let b_clean: Option<Vec<f64>> = if rhs.layout() != Layout::Center {
        let mut b = rhs.data().to_vec();
        force_pinned_zero(&op, &mut b);
        Some(b)
    } else {
        None
    };
    let b: &[f64] = b_clean.as_deref().unwrap_or(rhs.data());
    let bnorm = reduce::dot(b, b).sqrt();
    match guess {
        Some(g) => out.data_mut().copy_from_slice(g.data()),
        None => out.fill(0.0),
    }
    force_pinned_zero(&op, out.data_mut());
    if bnorm == 0.0 {
        out.fill(0.0);
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    pcg(
        &op,
        &mut precond,
        b,
        out.data_mut(),
        tol_rel * bnorm,
        MAX_ITER_DEFAULT,
        ws,
    )
}

fn force_pinned_zero(op: &Stencil, x: &mut [f64]) {
    let (w, h) = (op.w, op.h);
    match op.layout {
        Layout::Center => {}
        Layout::FaceX => {
            for j in 0..h {
                x[j * w] = 0.0;
                x[j * w + w - 1] = 0.0;
            }
        }
        Layout::FaceY => {
            for i in 0..w {
                x[i] = 0.0;
                x[(h - 1) * w + i] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn poisson_zero_rhs_returns_zero() {
        let g = Grid::from_domain(16, 16, 1.0, 1.0).unwrap();
        let rhs = ScalarField::zeros(&g, Layout::Center);
        let sol = solve_poisson(&g, &rhs, 1e-8).unwrap();
        assert_eq!(sol.iterations, 0);
        for v in sol.phi.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn poisson_cosine_mode_second_order() {
        // Lap phi = cos(2 pi x / Lx)  =>  phi -> -(Lx / 2 pi)^2 cos(2 pi x / Lx).
        let lx = 2.0;
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::from_domain(n, n, lx, 1.0).unwrap();
            let rhs =
                ScalarField::from_fn(&g, Layout::Center, |x, _| (2.0 * PI * x / lx).cos());
            let sol = solve_poisson(&g, &rhs, 1e-10).unwrap();
            let scale = (lx / (2.0 * PI)).powi(2);
            let mut worst: f64 = 0.0;
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let x = g.x(Layout::Center, i);
                    let exact = -scale * (2.0 * PI * x / lx).cos();
                    worst = worst.max((sol.phi.at(i, j) - exact).abs());
                }
            }
            errs.push(worst);
        }
        for pair in errs.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(
                (1.8..=2.2).contains(&order),
                "poisson order {order}, errors {errs:?}"
            );
        }
    }

    #[test]
    fn poisson_solution_is_mean_free_and_residual_small() {
        let g = Grid::from_domain(24, 20, 1.0, 1.5).unwrap();
        let rhs = ScalarField::from_fn(&g, Layout::Center, |x, y| {
            (3.1 * x).sin() * (1.7 * y).cos() + 0.2
        });
        let sol = solve_poisson(&g, &rhs, 1e-9).unwrap();
        let n = sol.phi.len() as f64;
        let mean = crate::reduce::sum(sol.phi.data()) / n;
        let l2 = crate::reduce::dot(sol.phi.data(), sol.phi.data()).sqrt();
        assert!(mean.abs() <= 1e-13 * l2.max(1e-300), "mean {mean}, l2 {l2}");
        // Residual check against the raw operator, including the reported
        // mean compatibility shift.
        let lap = crate::ops::laplacian(&g, &sol.phi, Bc::Neumann0).unwrap();
        let rhs_mean = crate::reduce::sum(rhs.data()) / n;
        let mut res = 0.0f64;
        for (l, r) in lap.data().iter().zip(rhs.data()) {
            res += (l - (r - rhs_mean)).powi(2);
        }
        let rhs_norm = crate::reduce::dot(rhs.data(), rhs.data()).sqrt();
        assert!(res.sqrt() <= 2e-9 * rhs_norm);
    }

    #[test]
    fn poisson_nonconvergence_reports_residual() {
        let g = Grid::from_domain(16, 16, 1.0, 1.0).unwrap();
        let rhs = ScalarField::from_fn(&g, Layout::Center, |x, y| {
            (5.0 * x).sin() + (7.0 * y).cos()
        });
        let op = Stencil::new(&g, Layout::Center, Bc::Neumann0, 0.0, 1.0).unwrap();
        let diag = op.diagonal();
        let mut pc = |r: &[f64], z: &mut [f64]| {
            for i in 0..r.len() {
                z[i] = JACOBI_OMEGA * r[i] / diag[i];
            }
        };
        let n = rhs.len();
        let mean = crate::reduce::sum(rhs.data()) / n as f64;
        let b: Vec<f64> = rhs.data().iter().map(|v| -(v - mean)).collect();
        let mut x = vec![0.0; n];
        let err = pcg(&op, &mut pc, &b, &mut x, 1e-30, 3, &mut CgScratch::default())
            .unwrap_err();
        match err {
            Error::Solver {
                iterations,
                residual,
                ..
            } => {
                assert_eq!(iterations, 3);
                assert!(residual.is_finite() && residual > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vcycle_is_a_symmetric_positive_preconditioner() {
        // Odd sides exercise the clamped interpolation taps and the folded
        // coarsening path. Assemble the V-cycle as a dense matrix and check
        // M = M^T along with x^T M x > 0 on mean-free probes; both are what
        // CG needs of its preconditioner.
        let g = Grid::from_domain(7, 5, 1.3, 0.9).unwrap();
        let mut ps = PressureSolver::new(&g).unwrap();
        assert!(ps.levels.len() >= 2, "expected a real hierarchy");
        let n = 35;
        let mut m = vec![vec![0.0; n]; n];
        for col in 0..n {
            let mut e = vec![0.0; n];
            e[col] = 1.0;
            ps.levels[0].r.copy_from_slice(&e);
            vcycle(&mut ps.levels);
            for row in 0..n {
                m[row][col] = ps.levels[0].z[row];
            }
        }
        let scale = m
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                assert!(
                    (m[i][j] - m[j][i]).abs() <= 1e-13 * scale,
                    "asymmetry at ({i},{j}): {} vs {}",
                    m[i][j],
                    m[j][i]
                );
            }
        }
        for probe in 0..4u32 {
            let mut x: Vec<f64> = (0..n)
                .map(|i| ((i as f64 + 1.3) * (probe as f64 + 0.7)).sin())
                .collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            for v in &mut x {
                *v -= mean;
            }
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    quad += x[i] * m[i][j] * x[j];
                }
            }
            assert!(quad > 0.0, "probe {probe}: x^T M x = {quad}");
        }
    }

    #[test]
    fn multigrid_cuts_the_iteration_count() {
        let g = Grid::from_domain(64, 64, 1.0, 1.0).unwrap();
        let rhs = ScalarField::from_fn(&g, Layout::Center, |x, y| {
            (3.0 * x).sin() * (2.0 * y).cos() + 0.4 * (5.0 * x * y).cos()
        });
        let tol = 1e-10;
        let mg = solve_poisson(&g, &rhs, tol).unwrap();

        // Plain damped-Jacobi CG on the same prepared system for comparison.
        let op = Stencil::new(&g, Layout::Center, Bc::Neumann0, 0.0, 1.0).unwrap();
        let diag = op.diagonal();
        let mut pc = |r: &[f64], z: &mut [f64]| {
            for i in 0..r.len() {
                z[i] = JACOBI_OMEGA * r[i] / diag[i];
            }
        };
        let n = rhs.len();
        let mean = crate::reduce::sum(rhs.data()) / n as f64;
        let b: Vec<f64> = rhs.data().iter().map(|v| -(v - mean)).collect();
        let bnorm = crate::reduce::dot(&b, &b).sqrt();
        let mut x = vec![0.0; n];
        let plain = pcg(
            &op,
            &mut pc,
            &b,
            &mut x,
            tol * bnorm,
            MAX_ITER_DEFAULT,
            &mut CgScratch::default(),
        )
        .unwrap();

        assert!(
            mg.iterations <= 16,
            "V-cycle preconditioning should converge in a few iterations, took {}",
            mg.iterations
        );
        assert!(
            4 * mg.iterations < plain.iterations,
            "mg {} vs plain {}",
            mg.iterations,
            plain.iterations
        );
        // Same solution up to the solver tolerances (both mean-free).
        let xm = crate::reduce::sum(&x) / n as f64;
        for (a, b) in mg.phi.data().iter().zip(&x) {
            assert_relative_eq!(*a, *b - xm, epsilon = 1e-6, max_relative = 1e-4);
        }
    }

    #[test]
    fn warm_started_pressure_solves_are_bitwise_deterministic() {
        let g = Grid::from_domain(48, 40, 1.0, 1.2).unwrap();
        let rhs = ScalarField::from_fn(&g, Layout::Center, |x, y| {
            (2.0 * x - y).sin() + (4.0 * y).cos() * x
        });
        let run = || {
            let mut ps = PressureSolver::new(&g).unwrap();
            let a = ps.solve(&g, &rhs, 1e-9, None).unwrap();
            let b = ps.solve(&g, &rhs, 1e-9, Some(&a.phi)).unwrap();
            (a, b)
        };
        let (a1, b1) = run();
        let (a2, b2) = run();
        assert_eq!(a1.iterations, a2.iterations);
        assert_eq!(b1.iterations, b2.iterations);
        for (u, v) in a1.phi.data().iter().zip(a2.phi.data()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        for (u, v) in b1.phi.data().iter().zip(b2.phi.data()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        // Warm-starting from the solution itself must be near-free.
        assert!(b1.iterations <= 2, "warm restart took {}", b1.iterations);
    }

    #[test]
    fn helmholtz_face_solve_recovers_manufactured_solution() {
        // (I + a(-Lap)) u = rhs with u = sin(pi x) sin(pi y) sampled on faces
        // (wall values exactly zero), rhs manufactured discretely.
        let g = Grid::from_domain(32, 32, 1.0, 1.0).unwrap();
        let u = ScalarField::from_fn(&g, Layout::FaceX, |x, y| {
            (PI * x).sin() * (PI * y).sin()
        });
        let a = 3e-3;
        let op = Stencil::new(&g, Layout::FaceX, Bc::Dirichlet0, 1.0, a).unwrap();
        let mut rhs_data = vec![0.0; u.len()];
        op.apply(u.data(), &mut rhs_data);
        let mut rhs = ScalarField::zeros(&g, Layout::FaceX);
        rhs.data_mut().copy_from_slice(&rhs_data);
        let (sol, outcome) = solve_helmholtz(&g, &rhs, a, Bc::Dirichlet0, 1e-12).unwrap();
        assert!(outcome.iterations > 0);
        for (s, e) in sol.data().iter().zip(u.data()) {
            assert_relative_eq!(*s, *e, max_relative = 1e-8, epsilon = 1e-10);
        }
    }
}
