//! Empirical study of the interpolation and embedding inequalities the
//! stability analysis leans on. Each inequality is checked on randomized
//! tensor trig polynomials that satisfy its boundary hypothesis exactly;
//! derivatives are spectral (exact per mode), norms are midpoint
//! quadratures, which for trig polynomials of degree <= K are themselves
//! exact once the resolution exceeds the Nyquist bound of the highest
//! product frequency. The outcome is never a proof: reports state the
//! largest ratio found and the seed attaining it, so the estimated
//! constant is a certified lower bound for the true one.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{Grid, Layout};
use crate::norms;
use crate::reduce;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryClass {
    /// Sine basis: functions vanish on the boundary.
    Dirichlet0,
    /// Cosine basis: normal derivative vanishes on the boundary.
    Neumann0,
    /// Random-phase basis: no boundary constraint.
    Free,
}

impl BoundaryClass {
    fn label(self) -> &'static str {
        match self {
            BoundaryClass::Dirichlet0 => "dirichlet0",
            BoundaryClass::Neumann0 => "neumann0",
            BoundaryClass::Free => "free",
        }
    }
}

/// Random family of tensor trig polynomials sum a_kl phi_k(x) psi_l(y) up
/// to degree K, with coefficient amplitude decaying like (kl)^(-decay) so
/// the variance decays at twice that rate.
#[derive(Clone, Debug)]
pub struct TestFunctionFamily {
    pub class: BoundaryClass,
    pub degree: usize,
    pub decay: f64,
    pub seed: u64,
}

impl TestFunctionFamily {
    pub fn new(class: BoundaryClass, degree: usize, seed: u64) -> TestFunctionFamily {
        TestFunctionFamily {
            class,
            degree,
            decay: 1.0,
            seed,
        }
    }

    /// Deterministic per-sample seed; independent of how many samples a
    /// particular run requests, so sample sets nest as n_samples grows.
    pub fn sample_seed(&self, index: usize) -> u64 {
        splitmix64(self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// All ten derivative fields of sample `index` on the grid. Index 0 is
    /// the deterministic fundamental mode of the class, giving every report
    /// a closed-form-checkable floor; the rest are random draws.
    pub fn evaluate(&self, grid: &Grid, index: usize) -> Result<DerivativeBundle> {
        let k_max = self.degree;
        let modes = k_max + 1;
        let seed = self.sample_seed(index);
        let mut coeffs = vec![0.0f64; modes * modes];
        let mut theta_x = vec![0.0f64; modes];
        let mut theta_y = vec![0.0f64; modes];
        match self.class {
            BoundaryClass::Dirichlet0 => {}
            BoundaryClass::Neumann0 => {
                theta_x.iter_mut().for_each(|t| *t = FRAC_PI_2);
                theta_y.iter_mut().for_each(|t| *t = FRAC_PI_2);
            }
            BoundaryClass::Free => {
                if index > 0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bf0_3635);
                    for t in theta_x.iter_mut().chain(theta_y.iter_mut()) {
                        *t = rng.gen_range(0.0..std::f64::consts::TAU);
                    }
                }
            }
        }
        if index == 0 {
            // Fundamental probe: sin(pi x)sin(pi y), cos(pi x)cos(pi y), or
            // the sine mode again for the free class.
            let k = 1.min(k_max);
            coeffs[k * modes + k] = 1.0;
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k_min = if self.class == BoundaryClass::Dirichlet0 { 1 } else { 0 };
            for k in k_min..=k_max {
                for l in k_min..=k_max {
                    let scale =
                        ((k.max(1) * l.max(1)) as f64).powf(-self.decay);
                    coeffs[k * modes + l] = rng.gen_range(-1.0..1.0) * scale;
                }
            }
        }
        eval_bundle(grid, modes, &coeffs, &theta_x, &theta_y)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// f and its derivatives up to third order at cell centers, all evaluated
/// spectrally (no stencils involved).
pub struct DerivativeBundle {
    pub f: ScalarField,
    pub fx: ScalarField,
    pub fy: ScalarField,
    pub fxx: ScalarField,
    pub fxy: ScalarField,
    pub fyy: ScalarField,
    pub fxxx: ScalarField,
    pub fxxy: ScalarField,
    pub fxyy: ScalarField,
    pub fyyy: ScalarField,
}

impl DerivativeBundle {
    fn fields(&self) -> [&ScalarField; 10] {
        [
            &self.f, &self.fx, &self.fy, &self.fxx, &self.fxy, &self.fyy, &self.fxxx,
            &self.fxxy, &self.fxyy, &self.fyyy,
        ]
    }

    pub fn scaled(&self, lambda: f64) -> DerivativeBundle {
        let s = |f: &ScalarField| {
            let mut g = f.clone();
            g.scale(lambda);
            g
        };
        DerivativeBundle {
            f: s(&self.f),
            fx: s(&self.fx),
            fy: s(&self.fy),
            fxx: s(&self.fxx),
            fxy: s(&self.fxy),
            fyy: s(&self.fyy),
            fxxx: s(&self.fxxx),
            fxxy: s(&self.fxxy),
            fxyy: s(&self.fxyy),
            fyyy: s(&self.fyyy),
        }
    }
}

/// Basis value tables: table[d][k*n + i] = d-th derivative of the k-th mode
/// at coordinate i. A phase shift of d*pi/2 encodes differentiation of
/// sin(k pi x / L + theta).
fn basis_tables(
    modes: usize,
    theta: &[f64],
    coords: &[f64],
    length: f64,
) -> [Vec<f64>; 4] {
    let n = coords.len();
    let mut tables = [
        vec![0.0; modes * n],
        vec![0.0; modes * n],
        vec![0.0; modes * n],
        vec![0.0; modes * n],
    ];
    for k in 0..modes {
        let freq = k as f64 * PI / length;
        for (d, table) in tables.iter_mut().enumerate() {
            let amp = freq.powi(d as i32);
            let shift = theta[k] + d as f64 * FRAC_PI_2;
            for (i, &x) in coords.iter().enumerate() {
                table[k * n + i] = amp * (freq * x + shift).sin();
            }
        }
    }
    // k = 0 modes: constant for d = 0 (sin(theta)), zero derivatives.
    for (d, table) in tables.iter_mut().enumerate() {
        for i in 0..n {
            table[i] = if d == 0 { theta[0].sin() } else { 0.0 };
        }
    }
    tables
}

fn eval_bundle(
    grid: &Grid,
    modes: usize,
    coeffs: &[f64],
    theta_x: &[f64],
    theta_y: &[f64],
) -> Result<DerivativeBundle> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let xs: Vec<f64> = (0..nx).map(|i| grid.x(Layout::Center, i)).collect();
    let ys: Vec<f64> = (0..ny).map(|j| grid.y(Layout::Center, j)).collect();
    let bx = basis_tables(modes, theta_x, &xs, grid.hx() * nx as f64);
    let by = basis_tables(modes, theta_y, &ys, grid.hy() * ny as f64);

    // ty[b][k*ny + j] = sum_l coeffs[k][l] * by[b][l][j]
    let mut ty = [
        vec![0.0; modes * ny],
        vec![0.0; modes * ny],
        vec![0.0; modes * ny],
        vec![0.0; modes * ny],
    ];
    for (b, t) in ty.iter_mut().enumerate() {
        for k in 0..modes {
            for l in 0..modes {
                let a = coeffs[k * modes + l];
                if a == 0.0 {
                    continue;
                }
                for j in 0..ny {
                    t[k * ny + j] += a * by[b][l * ny + j];
                }
            }
        }
    }

    let eval = |a: usize, b: usize| -> ScalarField {
        let mut out = ScalarField::zeros(grid, Layout::Center);
        let o = out.data_mut();
        for j in 0..ny {
            for k in 0..modes {
                let w = ty[b][k * ny + j];
                if w == 0.0 {
                    continue;
                }
                let row = &bx[a][k * nx..(k + 1) * nx];
                for i in 0..nx {
                    o[j * nx + i] += w * row[i];
                }
            }
        }
        out
    };

    let bundle = DerivativeBundle {
        f: eval(0, 0),
        fx: eval(1, 0),
        fy: eval(0, 1),
        fxx: eval(2, 0),
        fxy: eval(1, 1),
        fyy: eval(0, 2),
        fxxx: eval(3, 0),
        fxxy: eval(2, 1),
        fxyy: eval(1, 2),
        fyyy: eval(0, 3),
    };
    if !bundle.fields().iter().all(|f| f.is_finite()) {
        return Err(Error::NonFinite {
            op: "test function evaluation",
        });
    }
    Ok(bundle)
}

pub const INEQUALITY_NAMES: [&str; 9] = [
    "Lad2D",
    "GenLad2D",
    "LongIneq",
    "LadForLaplacian",
    "AgmonVariant",
    "W22Est",
    "LadMatrix",
    "L6Interp",
    "Agmon2D",
];

/// Boundary hypothesis of each inequality; None admits any class.
pub fn required_class(name: &str) -> Result<Option<BoundaryClass>> {
    match name {
        "Lad2D" | "W22Est" => Ok(Some(BoundaryClass::Dirichlet0)),
        "LadMatrix" | "L6Interp" => Ok(Some(BoundaryClass::Neumann0)),
        "GenLad2D" | "LongIneq" | "LadForLaplacian" | "AgmonVariant" | "Agmon2D" => Ok(None),
        other => Err(Error::config(format!(
            "unknown inequality '{other}', expected one of {INEQUALITY_NAMES:?}"
        ))),
    }
}

/// (LHS, constant-free RHS) of the named inequality for one sample.
pub fn ratio_terms(name: &str, grid: &Grid, b: &DerivativeBundle) -> Result<(f64, f64)> {
    let area = grid.cell_area();
    let n = grid.cell_count();
    let integ =
        |f: &(dyn Fn(usize) -> f64 + Sync)| reduce::sum_with(n, f) * area;

    let fx = b.fx.data();
    let fy = b.fy.data();
    let fxx = b.fxx.data();
    let fxy = b.fxy.data();
    let fyy = b.fyy.data();
    let fxxx = b.fxxx.data();
    let fxxy = b.fxxy.data();
    let fxyy = b.fxyy.data();
    let fyyy = b.fyyy.data();

    let lap = |i: usize| fxx[i] + fyy[i];
    let grad_sq = |i: usize| fx[i] * fx[i] + fy[i] * fy[i];
    // grad(lap f) components.
    let glx = |i: usize| fxxx[i] + fxyy[i];
    let gly = |i: usize| fxxy[i] + fyyy[i];

    let l2 = norms::norm_l2(grid, &b.f)?;
    let grad_l2_sq = integ(&grad_sq);
    let grad_l2 = grad_l2_sq.sqrt();
    let lap_l2_sq = integ(&|i| lap(i) * lap(i));
    let lap_l2 = lap_l2_sq.sqrt();
    let grad_lap_sq = integ(&|i| glx(i) * glx(i) + gly(i) * gly(i));

    let pair = match name {
        "Lad2D" => (norms::norm_l4(grid, &b.f)?, l2.sqrt() * grad_l2.sqrt()),
        "GenLad2D" => (
            norms::norm_l4(grid, &b.f)?,
            l2 + l2.sqrt() * grad_l2.sqrt(),
        ),
        "LongIneq" => {
            // W^{2,2} norm of the gradient vector field: multi-index sum
            // over both components, so mixed derivatives of f appear with
            // their natural multiplicities.
            let first = grad_l2_sq;
            let second = integ(&|i| {
                fxx[i] * fxx[i] + 2.0 * fxy[i] * fxy[i] + fyy[i] * fyy[i]
            });
            let third = integ(&|i| {
                fxxx[i] * fxxx[i]
                    + 2.0 * fxxy[i] * fxxy[i]
                    + 2.0 * fxyy[i] * fxyy[i]
                    + fyyy[i] * fyyy[i]
            });
            (
                (first + second + third).sqrt(),
                (grad_l2_sq + grad_lap_sq).sqrt(),
            )
        }
        "LadForLaplacian" => {
            let lap_l4 = integ(&|i| lap(i).powi(4)).powf(0.25);
            (lap_l4, lap_l2.sqrt() * (lap_l2_sq + grad_lap_sq).powf(0.25))
        }
        "AgmonVariant" => {
            let sup = (0..n)
                .map(grad_sq)
                .fold(0.0f64, f64::max)
                .sqrt();
            (sup, grad_l2.sqrt() * (grad_l2_sq + grad_lap_sq).powf(0.25))
        }
        "W22Est" => {
            let sobolev2 = l2 * l2
                + grad_l2_sq
                + integ(&|i| fxx[i] * fxx[i] + fxy[i] * fxy[i] + fyy[i] * fyy[i]);
            (sobolev2.sqrt(), lap_l2)
        }
        "LadMatrix" => {
            let grad_l4 = integ(&|i| grad_sq(i) * grad_sq(i)).powf(0.25);
            (grad_l4, grad_l2.sqrt() * lap_l2.sqrt())
        }
        "L6Interp" => {
            let grad_l6 = integ(&|i| grad_sq(i).powi(3)).powf(1.0 / 6.0);
            (
                grad_l6,
                grad_l2.powf(1.0 / 3.0) * (grad_l2_sq + lap_l2_sq).powf(1.0 / 3.0),
            )
        }
        "Agmon2D" => {
            let sup = norms::norm_sup(&b.f);
            let w12 = (l2 * l2 + grad_l2_sq).sqrt();
            let w22 = (l2 * l2
                + grad_l2_sq
                + integ(&|i| fxx[i] * fxx[i] + fxy[i] * fxy[i] + fyy[i] * fyy[i]))
            .sqrt();
            (sup, w12.sqrt() * w22.sqrt())
        }
        other => {
            return Err(Error::config(format!("unknown inequality '{other}'")));
        }
    };
    if !(pair.0.is_finite() && pair.1.is_finite()) {
        return Err(Error::NonFinite {
            op: "inequality ratio",
        });
    }
    Ok(pair)
}

#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    pub resolution: usize,
    pub worst_ratio: f64,
    pub argmax_seed: u64,
    /// Ratio of the deterministic fundamental-mode probe (sample 0).
    pub fundamental_ratio: f64,
    /// Set by `sweep`: ratio drift under grid refinement below 5%.
    pub stable: Option<bool>,
}

/// Estimates the inequality constant as a sup of LHS/RHS over the family.
/// A sample with vanishing RHS but positive LHS would falsify the
/// inequality and is reported as a counterexample error.
pub fn check_inequality(
    name: &str,
    family: &TestFunctionFamily,
    n_samples: usize,
    grid: &Grid,
) -> Result<InequalityReport> {
    if let Some(req) = required_class(name)? {
        if family.class != req {
            return Err(Error::config(format!(
                "{name} requires the {} class, family is {}",
                req.label(),
                family.class.label()
            )));
        }
    }
    if n_samples == 0 {
        return Err(Error::config("need at least one sample"));
    }
    if family.class == BoundaryClass::Dirichlet0 && family.degree == 0 {
        return Err(Error::config(
            "a degree-0 dirichlet family contains only the zero function",
        ));
    }
    let mut worst = 0.0f64;
    let mut argmax_seed = family.sample_seed(0);
    let mut fundamental_ratio = 0.0;
    for idx in 0..n_samples {
        let bundle = family.evaluate(grid, idx)?;
        let (lhs, rhs) = ratio_terms(name, grid, &bundle)?;
        if rhs == 0.0 {
            if lhs > 0.0 {
                return Err(Error::Counterexample {
                    name: name.to_string(),
                    seed: family.sample_seed(idx),
                    lhs,
                    rhs,
                });
            }
            continue;
        }
        let ratio = lhs / rhs;
        if idx == 0 {
            fundamental_ratio = ratio;
        }
        if ratio > worst {
            worst = ratio;
            argmax_seed = family.sample_seed(idx);
        }
    }
    Ok(InequalityReport {
        name: name.to_string(),
        samples: n_samples,
        resolution: grid.nx(),
        worst_ratio: worst,
        argmax_seed,
        fundamental_ratio,
        stable: None,
    })
}

/// Runs each named inequality across the resolutions with coupled seeds
/// (the k-th sample is the same function at every resolution) and flags
/// whether the estimated constant has converged in resolution.
pub fn sweep(
    names: &[String],
    resolutions: &[usize],
    family: &TestFunctionFamily,
    n_samples: usize,
) -> Result<Vec<InequalityReport>> {
    if resolutions.len() < 2 {
        return Err(Error::config(
            "resolution sweep needs at least two resolutions",
        ));
    }
    let mut out = Vec::new();
    for name in names {
        let mut prev: Option<f64> = None;
        for &n in resolutions {
            let grid = Grid::from_domain(n, n, 1.0, 1.0)?;
            let mut report = check_inequality(name, family, n_samples, &grid)?;
            report.stable = prev.map(|p| {
                let scale = p.abs().max(f64::MIN_POSITIVE);
                (report.worst_ratio - p).abs() / scale < 0.05
            });
            prev = Some(report.worst_ratio);
            out.push(report);
        }
    }
    Ok(out)
}

pub fn reports_to_csv(reports: &[InequalityReport]) -> String {
    let mut s = String::from(
        "name,resolution,samples,worst_ratio,fundamental_ratio,argmax_seed,stable\n",
    );
    for r in reports {
        let stable = match r.stable {
            None => "",
            Some(true) => "true",
            Some(false) => "false",
        };
        s.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{},{}\n",
            r.name, r.resolution, r.samples, r.worst_ratio, r.fundamental_ratio, r.argmax_seed,
            stable
        ));
    }
    s
}
