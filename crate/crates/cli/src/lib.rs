//! Command implementations behind the `mvsim` binary. Each command takes
//! plain arguments, does its work, and returns a single machine-readable
//! summary line for standard output; human-readable detail goes to
//! standard error. Errors carry the process exit code: 1 for validation
//! problems, 2 for solver failures, 3 for property violations.

use mvsim_core::diagnostics;
use mvsim_core::elastic::{check_growth, density_by_id};
use mvsim_core::inequality::{
    required_class, reports_to_csv, sweep, BoundaryClass, InequalityReport, TestFunctionFamily,
    INEQUALITY_NAMES,
};
use mvsim_core::ode;
use mvsim_core::scenario::parse_scenario;
use mvsim_core::solver;
use mvsim_core::state::{magnetization_drift, read_snapshot, write_snapshot};
use mvsim_core::uniqueness::{
    cross_resolution_experiment, stability_experiment, GRONWALL_LABELS, GRONWALL_SOURCES,
};
use mvsim_core::{norms, ops, Error, Grid, Scenario, State};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub mod manifest;

use manifest::{Manifest, OutputRecord};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "MVSIM_OUTPUT_DIR";

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_PROPERTY: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    /// Machine-readable line for stdout, when the failure still has a
    /// well-defined summary (e.g. a witnessed property violation).
    pub summary: Option<String>,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> CliError {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
            summary: None,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let code = match &e {
            Error::Shape { .. }
            | Error::Layout { .. }
            | Error::Config { .. }
            | Error::Snapshot(_)
            | Error::Io(_) => EXIT_VALIDATION,
            Error::Solver { .. }
            | Error::StepRejected { .. }
            | Error::DegenerateMagnetization { .. }
            | Error::NonFinite { .. } => EXIT_SOLVER,
            Error::Counterexample { .. } => EXIT_PROPERTY,
        };
        CliError {
            code,
            message: e.to_string(),
            summary: None,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::validation(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Holds `.mvsim.lock` in the output directory for the lifetime of a
/// writing command, so concurrent runs cannot interleave their artifacts.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<DirLock> {
        let path = dir.join(".mvsim.lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::validation(format!(
                    "output directory {} is locked by another run (remove {} if that run is dead)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Resolves the output directory: explicit flag, then the environment
/// variable, then the current directory. Creates it if needed.
pub fn resolve_output_dir(flag: Option<&Path>) -> CliResult<PathBuf> {
    let dir = match flag {
        Some(d) => d.to_path_buf(),
        None => match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("."),
        },
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs `f` on a dedicated rayon pool of `threads` workers, or on the
/// ambient pool when no count is given. Reductions are fixed-shape, so the
/// numeric results do not depend on this choice.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::validation("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::validation(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read scenario {}: {e}", path.display()))
    })?;
    Ok(parse_scenario(&text)?)
}

fn write_output(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    records: &mut Vec<OutputRecord>,
) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    records.push(OutputRecord::for_bytes(name, bytes));
    Ok(())
}

/// Largest nodewise absolute difference over all fields of two states.
fn max_state_change(a: &State, b: &State) -> f64 {
    let mut worst = 0.0f64;
    let mut scan = |x: &[f64], y: &[f64]| {
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    };
    scan(a.velocity.x.data(), b.velocity.x.data());
    scan(a.velocity.y.data(), b.velocity.y.data());
    scan(a.pressure.data(), b.pressure.data());
    for k in 0..4 {
        scan(a.deformation.c[k].data(), b.deformation.c[k].data());
    }
    for k in 0..3 {
        scan(a.magnetization.c[k].data(), b.magnetization.c[k].data());
    }
    worst
}

pub fn cmd_simulate(
    scenario_path: &Path,
    output_dir: Option<&Path>,
    threads: Option<usize>,
) -> CliResult<String> {
    let scenario = load_scenario(scenario_path)?;
    let dir = resolve_output_dir(output_dir)?;
    let _lock = DirLock::acquire(&dir)?;
    let started = unix_now();
    let mut records = Vec::new();

    let mut snapshot_files: Vec<(String, PathBuf)> = Vec::new();
    let mut initial: Option<State> = None;
    let output = with_pool(threads, || {
        solver::run_with(&scenario, |step, grid, state| {
            if step == 0 {
                initial = Some(state.clone());
            }
            let name = format!("snap_{step:08}.bin");
            let path = dir.join(&name);
            write_snapshot(&path, grid, state)?;
            snapshot_files.push((name, path));
            Ok(())
        })
    })??;

    for (name, path) in &snapshot_files {
        records.push(OutputRecord::for_file(name, path)?);
    }
    {
        let grid = scenario.grid()?;
        let path = dir.join("final.bin");
        write_snapshot(&path, &grid, &output.final_state)?;
        records.push(OutputRecord::for_file("final.bin", &path)?);
    }
    write_output(dir.as_path(), "diagnostics.csv", output.series.to_csv().as_bytes(), &mut records)?;
    let resolved = scenario.to_text();
    write_output(dir.as_path(), "scenario_resolved.cfg", resolved.as_bytes(), &mut records)?;

    let rows = &output.series.rows;
    let e0 = rows.first().map_or(0.0, |r| r.energy);
    let e_final = rows.last().map_or(0.0, |r| r.energy);
    let max_residual = output.series.max_positive_residual();
    let max_change = initial
        .as_ref()
        .map_or(f64::NAN, |s| max_state_change(s, &output.final_state));

    Manifest::new("simulate", started, Some(resolved), records).write(&dir)?;
    let mut line = String::from("simulate status=ok");
    let _ = write!(
        line,
        " steps={} t_final={:.16e} dt_final={:.16e} halved={} energy0={:.16e} energy_final={:.16e} \
         max_energy_residual={:.16e} smallness={:.16e} max_change={:.16e} dir={}",
        output.steps,
        output.final_state.time,
        output.dt_final,
        output.halved,
        e0,
        e_final,
        max_residual,
        output.smallness,
        max_change,
        dir.display()
    );
    Ok(line)
}

const DIAGNOSE_HEADER: &str = "t,energy,grad_v_sq,elastic_dissipation,delta_m_sq,f_l2_sq,\
grad_f_sq,grad_m_sq,grad_m_l4_4,m3_sq,constraint_drift,div_residual";

/// Recomputes the instantaneous (non-cumulative) diagnostics of stored
/// snapshots; rows come out sorted by snapshot time.
pub fn cmd_diagnose(
    scenario_path: &Path,
    snapshots: &[PathBuf],
    output_dir: Option<&Path>,
    threads: Option<usize>,
) -> CliResult<String> {
    if snapshots.is_empty() {
        return Err(CliError::validation("diagnose needs at least one snapshot"));
    }
    let scenario = load_scenario(scenario_path)?;
    let grid = scenario.grid()?;
    let density = density_by_id(&scenario.density)?;
    let dir = resolve_output_dir(output_dir)?;
    let _lock = DirLock::acquire(&dir)?;
    let started = unix_now();

    let rows = with_pool(threads, || -> CliResult<Vec<(f64, String)>> {
        let mut rows = Vec::new();
        for path in snapshots {
            let (g, state) = read_snapshot(path)?;
            if g.nx() != grid.nx() || g.ny() != grid.ny() {
                return Err(CliError::validation(format!(
                    "snapshot {} has grid {}x{}, scenario wants {}x{}",
                    path.display(),
                    g.nx(),
                    g.ny(),
                    grid.nx(),
                    grid.ny()
                )));
            }
            let energy = diagnostics::total_energy(&grid, &state, density.as_ref())?;
            let gv = norms::seminorm_h1_mac(&grid, &state.velocity)?;
            let el = diagnostics::elastic_dissipation_rate(
                &grid,
                &state.deformation,
                density.as_ref(),
                scenario.kappa,
            )?;
            let dm = diagnostics::delta_m_sq(&grid, &state.magnetization)?;
            let fl2 = norms::norm_l2_mat22(&grid, &state.deformation)?;
            let gf = norms::seminorm_h1_mat22(
                &grid,
                &state.deformation,
                mvsim_core::Bc::Dirichlet0,
            )?;
            let gm = norms::seminorm_h1_vec3(
                &grid,
                &state.magnetization,
                mvsim_core::Bc::Neumann0,
            )?;
            let gm4 = diagnostics::grad_m_l4_4(&grid, &state.magnetization)?;
            let m3 = norms::norm_l2(&grid, &state.magnetization.c[2])?;
            let drift = magnetization_drift(&state.magnetization);
            let div = norms::norm_l2(&grid, &ops::divergence(&grid, &state.velocity)?)?;
            let line = format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                state.time,
                energy,
                gv * gv,
                el,
                dm,
                fl2 * fl2,
                gf * gf,
                gm * gm,
                gm4,
                m3 * m3,
                drift,
                div
            );
            rows.push((state.time, line));
        }
        Ok(rows)
    })??;

    let mut rows = rows;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut csv = String::from(DIAGNOSE_HEADER);
    csv.push('\n');
    for (_, line) in &rows {
        csv.push_str(line);
        csv.push('\n');
    }
    let mut records = Vec::new();
    write_output(dir.as_path(), "diagnose.csv", csv.as_bytes(), &mut records)?;
    Manifest::new("diagnose", started, None, records).write(&dir)?;
    Ok(format!(
        "diagnose status=ok snapshots={} csv=diagnose.csv dir={}",
        rows.len(),
        dir.display()
    ))
}

pub fn cmd_stability(
    scenario_path: &Path,
    eps: f64,
    cross_resolution: bool,
    output_dir: Option<&Path>,
    threads: Option<usize>,
) -> CliResult<String> {
    let scenario = load_scenario(scenario_path)?;
    let dir = resolve_output_dir(output_dir)?;
    let _lock = DirLock::acquire(&dir)?;
    let started = unix_now();

    let series = with_pool(threads, || {
        if cross_resolution {
            cross_resolution_experiment(&scenario)
        } else {
            stability_experiment(&scenario, eps)
        }
    })??;

    let mut records = Vec::new();
    write_output(dir.as_path(), "difference.csv", series.to_csv().as_bytes(), &mut records)?;
    let mut legend = String::from("column,source\n");
    for (label, source) in GRONWALL_LABELS.iter().zip(GRONWALL_SOURCES.iter()) {
        let _ = writeln!(legend, "h_{label},{source}");
    }
    write_output(dir.as_path(), "gronwall_legend.csv", legend.as_bytes(), &mut records)?;
    Manifest::new("stability", started, Some(scenario.to_text()), records).write(&dir)?;

    let c_fit = series.c_fit();
    Ok(format!(
        "stability status=ok mode={} rows={} f0={:.16e} c_fit={:.16e} max_bound_ratio={:.16e} dir={}",
        if cross_resolution { "cross_resolution" } else { "perturbation" },
        series.rows.len(),
        series.f0(),
        c_fit,
        series.max_bound_ratio(c_fit),
        dir.display()
    ))
}

pub fn cmd_inequalities(
    names: Option<Vec<String>>,
    samples: usize,
    degree: usize,
    resolutions: &[usize],
    seed: u64,
    output_dir: Option<&Path>,
    threads: Option<usize>,
) -> CliResult<String> {
    let names = names.unwrap_or_else(|| INEQUALITY_NAMES.iter().map(|s| s.to_string()).collect());
    let dir = resolve_output_dir(output_dir)?;
    let _lock = DirLock::acquire(&dir)?;
    let started = unix_now();

    let reports = with_pool(threads, || -> mvsim_core::Result<Vec<InequalityReport>> {
        let mut all = Vec::new();
        for name in &names {
            let class = required_class(name)?.unwrap_or(BoundaryClass::Free);
            let family = TestFunctionFamily::new(class, degree, seed);
            all.extend(sweep(
                std::slice::from_ref(name),
                resolutions,
                &family,
                samples,
            )?);
        }
        Ok(all)
    })??;

    let all_stable = reports.iter().all(|r| r.stable.unwrap_or(true));
    let max_ratio = reports.iter().map(|r| r.worst_ratio).fold(0.0, f64::max);
    let mut records = Vec::new();
    write_output(dir.as_path(), "inequalities.csv", reports_to_csv(&reports).as_bytes(), &mut records)?;
    Manifest::new("inequalities", started, None, records).write(&dir)?;
    Ok(format!(
        "inequalities status=ok reports={} samples={} degree={} all_stable={} max_ratio={:.16e} dir={}",
        reports.len(),
        samples,
        degree,
        all_stable,
        max_ratio,
        dir.display()
    ))
}

pub fn cmd_horizon(c: f64, z0: f64, cap: f64) -> CliResult<String> {
    let t_star = ode::blowup_horizon(c, z0, cap)?;
    Ok(format!(
        "horizon status=ok c={c:.16e} z0={z0:.16e} cap={cap:.16e} t_star={t_star:.16e}"
    ))
}

pub fn cmd_checkgrowth(density: &str, samples: usize, r_max: f64, seed: u64) -> CliResult<String> {
    let w = density_by_id(density)?;
    let report = check_growth(w.as_ref(), samples, r_max, seed)?;
    eprintln!("{report}");
    if report.pass {
        Ok(format!(
            "checkgrowth status=pass density={} samples={} lipschitz={:.16e} hessian={:.16e} convexity={:.16e}",
            report.density, report.samples, report.lipschitz, report.hessian, report.convexity
        ))
    } else {
        let witness = report
            .witness
            .as_ref()
            .expect("failing growth report carries a witness");
        Err(CliError {
            code: EXIT_PROPERTY,
            message: format!(
                "density '{}' violates its growth contract: condition {} at F = {:?} with ratio {:.6e}",
                report.density, witness.condition, witness.a, witness.ratio
            ),
            summary: Some(format!(
                "checkgrowth status=violation density={} condition={} ratio={:.16e}",
                report.density, witness.condition, witness.ratio
            )),
        })
    }
}

/// Shared helper for tests and the binary: the maximum |values| difference
/// between two snapshot files, for steady-state checks.
pub fn snapshot_max_difference(a: &Path, b: &Path) -> CliResult<f64> {
    let (ga, sa) = read_snapshot(a)?;
    let (gb, sb) = read_snapshot(b)?;
    if ga.nx() != gb.nx() || ga.ny() != gb.ny() {
        return Err(CliError::validation("snapshots live on different grids"));
    }
    Ok(max_state_change(&sa, &sb))
}

/// Re-exported for integration tests that need a grid without touching
/// solver internals.
pub fn scenario_grid(scenario: &Scenario) -> CliResult<Grid> {
    Ok(scenario.grid()?)
}
