//! Scalar comparison ODE `z' = c (1 + z^3)` used to bound the growth of
//! higher-order norms: the horizon at which `z` reaches a cap, and a
//! discrete comparison check that a sampled trajectory stays below the
//! exactly integrated majorant.
//!
//! The integrator is an adaptive Dormand-Prince 5(4) pair with pure
//! relative/absolute error control. Every quantity in the stepper scales as
//! `(something) / c`, so halving `c` doubles every accepted step and hence
//! the horizon exactly, a property the tests pin down.

use crate::error::{Error, Result};

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-12;
const MAX_STEPS: usize = 2_000_000;
/// Beyond this the cubic overflows f64 long before; treated as blown up.
const Z_HUGE: f64 = 1e100;

/// One Dormand-Prince step for the autonomous scalar RHS. Returns the
/// fifth-order solution and the embedded error estimate.
fn dp_step(f: impl Fn(f64) -> f64, z: f64, h: f64) -> (f64, f64) {
    let k1 = f(z);
    let k2 = f(z + h * (0.2 * k1));
    let k3 = f(z + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = f(z + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
    let k5 = f(z
        + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
            - 212.0 / 729.0 * k4));
    let k6 = f(z
        + h * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3
            + 49.0 / 176.0 * k4
            - 5103.0 / 18656.0 * k5));
    let z5 = z
        + h * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4
            - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
    let k7 = f(z5);
    let err = h
        * ((35.0 / 384.0 - 5179.0 / 57600.0) * k1
            + (500.0 / 1113.0 - 7571.0 / 16695.0) * k3
            + (125.0 / 192.0 - 393.0 / 640.0) * k4
            + (-2187.0 / 6784.0 + 92097.0 / 339200.0) * k5
            + (11.0 / 84.0 - 187.0 / 2100.0) * k6
            - k7 / 40.0);
    (z5, err)
}

fn step_factor(err: f64, scale: f64) -> f64 {
    if err == 0.0 {
        return 5.0;
    }
    (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0)
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::config(format!(
            "comparison rate c must be positive and finite, got {c}"
        )));
    }
    Ok(())
}

/// Time at which the solution of `z' = c (1 + z^3)`, `z(0) = z0`, first
/// reaches `z_cap`. Requires `c > 0`, `z0 >= 0`, and `z0 < z_cap <= 1e100`;
/// the blow-up time is finite, so the result is finite for any admissible
/// cap. The crossing inside the last step is resolved by bisection on the
/// step fraction.
pub fn blowup_horizon(c: f64, z0: f64, z_cap: f64) -> Result<f64> {
    check_c(c)?;
    if !(z0 >= 0.0 && z0.is_finite()) {
        return Err(Error::config(format!(
            "initial value z0 must be finite and nonnegative, got {z0}"
        )));
    }
    if !(z_cap > z0) {
        return Err(Error::config(format!(
            "cap {z_cap} must exceed the initial value {z0}"
        )));
    }
    if z_cap > Z_HUGE {
        return Err(Error::config(format!(
            "cap {z_cap} is outside the representable range (max 1e100)"
        )));
    }
    let f = |z: f64| c * (1.0 + z * z * z);
    let mut t = 0.0;
    let mut z = z0;
    let mut h = 0.01 * (1.0 + z0) / f(z0);
    for _ in 0..MAX_STEPS {
        let (z_new, err) = dp_step(f, z, h);
        let scale = ATOL + RTOL * z.abs().max(z_new.abs());
        if err.abs() > scale {
            h *= step_factor(err.abs(), scale);
            continue;
        }
        if z_new >= z_cap {
            // Bisect the step fraction; 80 halvings put the bracket far
            // below f64 resolution of t.
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (zm, _) = dp_step(&f, z, h * mid);
                if zm >= z_cap {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(t + h * hi);
        }
        t += h;
        z = z_new;
        h *= step_factor(err.abs(), scale);
    }
    Err(Error::Solver {
        iterations: MAX_STEPS,
        residual: z_cap - z,
        target: 0.0,
    })
}

/// Advances `z' = c (1 + z^3)` over an interval of length `len`. Returns
/// `+inf` if the solution exceeds the representable range inside the
/// interval (it blows up in finite time, so this is reachable).
fn advance_interval(c: f64, z0: f64, len: f64) -> Result<f64> {
    let f = |z: f64| c * (1.0 + z * z * z);
    let mut t = 0.0;
    let mut z = z0;
    let mut h = (0.01 * (1.0 + z0.abs()) / f(z0).abs().max(1e-300)).min(len);
    for _ in 0..MAX_STEPS {
        if len - t <= 1e-15 * len.max(1.0) {
            return Ok(z);
        }
        let h_try = h.min(len - t);
        let (z_new, err) = dp_step(f, z, h_try);
        let scale = ATOL + RTOL * z.abs().max(z_new.abs());
        if err.abs() > scale {
            h = h_try * step_factor(err.abs(), scale);
            continue;
        }
        t += h_try;
        z = z_new;
        if z >= Z_HUGE {
            return Ok(f64::INFINITY);
        }
        h = h_try * step_factor(err.abs(), scale);
    }
    Err(Error::Solver {
        iterations: MAX_STEPS,
        residual: len - t,
        target: 0.0,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ComparisonOutcome {
    pub pass: bool,
    /// Index of the first sample exceeding the majorant, if any.
    pub first_violation: Option<usize>,
    /// Largest observed y_k / z(t_k); at most 1 + 1e-8 on a pass.
    pub max_ratio: f64,
}

/// Integrates the majorant from `z(0) = y[0]` and checks
/// `y[k] <= z(k dt) * (1 + 1e-8)` at every sample. The relative slack
/// covers the integration tolerance; a trajectory that truly crosses the
/// majorant fails by a margin that grows with k.
pub fn comparison_check(y: &[f64], dt: f64, c: f64) -> Result<ComparisonOutcome> {
    check_c(c)?;
    if y.is_empty() {
        return Err(Error::config("comparison trajectory must be nonempty"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!(
            "sample spacing dt must be positive, got {dt}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "comparison trajectory",
        });
    }
    if y[0] < 0.0 {
        return Err(Error::config(format!(
            "comparison trajectory must start nonnegative, got y[0] = {}",
            y[0]
        )));
    }
    let mut z = y[0];
    let mut max_ratio = 1.0f64;
    for (k, &yk) in y.iter().enumerate() {
        if k > 0 {
            if z.is_finite() {
                z = advance_interval(c, z, dt)?;
            }
            // z = +inf majorizes everything from here on.
        }
        if z > 0.0 && yk > 0.0 && z.is_finite() {
            max_ratio = max_ratio.max(yk / z);
        }
        if yk > z * (1.0 + 1e-8) {
            return Ok(ComparisonOutcome {
                pass: false,
                first_violation: Some(k),
                max_ratio,
            });
        }
    }
    Ok(ComparisonOutcome {
        pass: true,
        first_violation: None,
        max_ratio,
    })
}

/// Smallest rate that makes the discrete increments of `y` consistent with
/// the majorant: `max_k (y[k+1] - y[k]) / (dt (1 + y[k]^3))`, clamped to a
/// tiny positive floor for nonincreasing trajectories. By convexity of the
/// majorant, `comparison_check(y, dt, fit)` passes for any sampled data.
pub fn fit_comparison_constant(y: &[f64], dt: f64) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::config(
            "need at least two samples to fit a comparison rate",
        ));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!(
            "sample spacing dt must be positive, got {dt}"
        )));
    }
    let mut c = 0.0f64;
    for k in 0..y.len() - 1 {
        let denom = dt * (1.0 + y[k] * y[k] * y[k]);
        if denom > 0.0 {
            c = c.max((y[k + 1] - y[k]) / denom);
        }
    }
    Ok(c.max(1e-12))
}
