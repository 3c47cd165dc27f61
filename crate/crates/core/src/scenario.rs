//! Run descriptions and their on-disk format: a strict sectioned key-value
//! file. Unknown sections or keys are rejected with the offending line so a
//! typo in a physics parameter can never silently fall back to a default.
//! `to_text` emits every resolved value and parses back to an identical
//! scenario, which makes resolved-config echoes reproducible inputs.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::field::{MatrixField22, ScalarField, VectorField2, VectorField3};
use crate::grid::{Grid, Layout};
use crate::hext::ExternalField;

use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub enum VelocityPreset {
    Zero,
    /// Curl of the stream function amp sin^2(pi x/Lx) sin^2(pi y/Ly):
    /// divergence-free in the continuum and zero on the walls.
    Vortex { amp: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum DeformationPreset {
    Zero,
    /// F11 = amp sin(pi x/Lx) sin(pi y/Ly), other entries zero. Vanishes on
    /// the boundary in the continuum sense (cell centers sample near-zero
    /// values next to the walls).
    Bump { amp: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum MagnetizationPreset {
    /// Constant direction, normalized at load time.
    Uniform { mx: f64, my: f64, mz: f64 },
    /// In-plane angle amp cos(pi x/Lx) cos(pi y/Ly) with constant out-of-plane
    /// tilt: exactly unit length and with vanishing normal derivative.
    Wave { amp: f64, tilt: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Presets {
        v0: VelocityPreset,
        f0: DeformationPreset,
        m0: MagnetizationPreset,
    },
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub kappa: f64,
    pub nu: f64,
    pub density: String,
    pub dt: f64,
    pub t_final: f64,
    /// Emit a snapshot every this many steps; 0 keeps only first and last.
    pub snapshot_stride: usize,
    pub initial: InitialData,
    pub hext: ExternalField,
    pub tol_poisson: f64,
    pub tol_div: f64,
    pub eps_renorm: f64,
    pub cfl_safety: f64,
    pub c_energy: f64,
    pub seed: u64,
    pub freeze_velocity: bool,
}

impl Scenario {
    pub fn grid(&self) -> Result<Grid> {
        Grid::from_domain(self.nx, self.ny, self.lx, self.ly)
    }

    pub fn validate(&self) -> Result<()> {
        let check_pos = |key: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config_key(key, format!("must be positive, got {v}")))
            }
        };
        check_pos("[domain].Lx", self.lx)?;
        check_pos("[domain].Ly", self.ly)?;
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::config_key(
                "[domain].nx",
                format!("grid must be at least 3x3, got {}x{}", self.nx, self.ny),
            ));
        }
        check_pos("[physics].kappa", self.kappa)?;
        check_pos("[physics].nu", self.nu)?;
        check_pos("[time].dt", self.dt)?;
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::config_key("[time].T", "must be nonnegative"));
        }
        check_pos("[tolerances].tol_poisson", self.tol_poisson)?;
        check_pos("[tolerances].tol_div", self.tol_div)?;
        check_pos("[tolerances].eps_renorm", self.eps_renorm)?;
        check_pos("[tolerances].cfl_safety", self.cfl_safety)?;
        check_pos("[tolerances].C_e", self.c_energy)?;
        let grid = self.grid()?;
        let h = grid.hx().min(grid.hy());
        let bound = self.cfl_safety * h * h / 4.0;
        if self.dt > bound * (1.0 + 1e-12) {
            return Err(Error::config_key(
                "[time].dt",
                format!(
                    "dt = {} exceeds the diffusion limit cfl_safety*min(h)^2/4 = {bound:.6e}; \
                     raise [tolerances].cfl_safety only for runs whose explicit terms are inactive",
                    self.dt
                ),
            ));
        }
        if let InitialData::Presets {
            m0: MagnetizationPreset::Uniform { mx, my, mz },
            ..
        } = &self.initial
        {
            if (mx * mx + my * my + mz * mz).sqrt() < 1e-8 {
                return Err(Error::config_key(
                    "[initial].M0",
                    "uniform magnetization direction must be nonzero",
                ));
            }
        }
        Ok(())
    }
}

impl VelocityPreset {
    /// Samples onto the staggered grid. Wall-normal faces stay exactly zero.
    pub fn sample(&self, grid: &Grid) -> VectorField2 {
        match *self {
            VelocityPreset::Zero => VectorField2::mac_zeros(grid),
            VelocityPreset::Vortex { amp } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                let sx = move |x: f64| (PI * x / lx).sin();
                let sy = move |y: f64| (PI * y / ly).sin();
                let mut v = VectorField2 {
                    x: ScalarField::from_fn(grid, Layout::FaceX, |x, y| {
                        amp * sx(x).powi(2) * (PI / ly) * (2.0 * PI * y / ly).sin()
                    }),
                    y: ScalarField::from_fn(grid, Layout::FaceY, |x, y| {
                        -amp * (PI / lx) * (2.0 * PI * x / lx).sin() * sy(y).powi(2)
                    }),
                };
                for j in 0..grid.ny() {
                    v.x.set(0, j, 0.0);
                    v.x.set(grid.nx(), j, 0.0);
                }
                for i in 0..grid.nx() {
                    v.y.set(i, 0, 0.0);
                    v.y.set(i, grid.ny(), 0.0);
                }
                v
            }
        }
    }
}

impl DeformationPreset {
    pub fn sample(&self, grid: &Grid) -> MatrixField22 {
        match *self {
            DeformationPreset::Zero => MatrixField22::zeros(grid),
            DeformationPreset::Bump { amp } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                let mut f = MatrixField22::zeros(grid);
                f.c[0] = ScalarField::from_fn(grid, Layout::Center, |x, y| {
                    amp * (PI * x / lx).sin() * (PI * y / ly).sin()
                });
                f
            }
        }
    }
}

impl MagnetizationPreset {
    pub fn sample(&self, grid: &Grid) -> VectorField3 {
        match *self {
            MagnetizationPreset::Uniform { mx, my, mz } => {
                let n = (mx * mx + my * my + mz * mz).sqrt();
                VectorField3::from_fn(grid, |_, _| [mx / n, my / n, mz / n])
            }
            MagnetizationPreset::Wave { amp, tilt } => {
                let (lx, ly) = (grid.lx(), grid.ly());
                VectorField3::from_fn(grid, |x, y| {
                    let theta = amp * (PI * x / lx).cos() * (PI * y / ly).cos();
                    [
                        tilt.cos() * theta.cos(),
                        tilt.cos() * theta.sin(),
                        tilt.sin(),
                    ]
                })
            }
        }
    }
}

fn fmt_preset_args(pairs: &[(&str, f64)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!(" {k}={v}"))
        .collect::<String>()
}

impl Scenario {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[domain]\n");
        s.push_str(&format!("Lx = {}\n", self.lx));
        s.push_str(&format!("Ly = {}\n", self.ly));
        s.push_str(&format!("nx = {}\n", self.nx));
        s.push_str(&format!("ny = {}\n\n", self.ny));
        s.push_str("[physics]\n");
        s.push_str(&format!("kappa = {}\n", self.kappa));
        s.push_str(&format!("nu = {}\n", self.nu));
        s.push_str(&format!("density = {}\n\n", self.density));
        s.push_str("[time]\n");
        s.push_str(&format!("dt = {}\n", self.dt));
        s.push_str(&format!("T = {}\n", self.t_final));
        s.push_str(&format!("snapshot_stride = {}\n\n", self.snapshot_stride));
        s.push_str("[initial]\n");
        match &self.initial {
            InitialData::Snapshot(p) => s.push_str(&format!("snapshot = {}\n", p.display())),
            InitialData::Presets { v0, f0, m0 } => {
                match v0 {
                    VelocityPreset::Zero => s.push_str("v0 = zero\n"),
                    VelocityPreset::Vortex { amp } => {
                        s.push_str(&format!("v0 = vortex{}\n", fmt_preset_args(&[("amp", *amp)])))
                    }
                }
                match f0 {
                    DeformationPreset::Zero => s.push_str("F0 = zero\n"),
                    DeformationPreset::Bump { amp } => {
                        s.push_str(&format!("F0 = bump{}\n", fmt_preset_args(&[("amp", *amp)])))
                    }
                }
                match m0 {
                    MagnetizationPreset::Uniform { mx, my, mz } => s.push_str(&format!(
                        "M0 = uniform{}\n",
                        fmt_preset_args(&[("mx", *mx), ("my", *my), ("mz", *mz)])
                    )),
                    MagnetizationPreset::Wave { amp, tilt } => s.push_str(&format!(
                        "M0 = wave{}\n",
                        fmt_preset_args(&[("amp", *amp), ("tilt", *tilt)])
                    )),
                }
            }
        }
        s.push('\n');
        s.push_str("[external]\n");
        match &self.hext {
            ExternalField::Zero => s.push_str("hext = zero\n"),
            ExternalField::Uniform { h, omega } => s.push_str(&format!(
                "hext = uniform{}\n",
                fmt_preset_args(&[("hx", h[0]), ("hy", h[1]), ("hz", h[2]), ("omega", *omega)])
            )),
            ExternalField::LinearX { a, omega } => s.push_str(&format!(
                "hext = linear_x{}\n",
                fmt_preset_args(&[("a", *a), ("omega", *omega)])
            )),
        }
        s.push('\n');
        s.push_str("[tolerances]\n");
        s.push_str(&format!("tol_poisson = {}\n", self.tol_poisson));
        s.push_str(&format!("tol_div = {}\n", self.tol_div));
        s.push_str(&format!("eps_renorm = {}\n", self.eps_renorm));
        s.push_str(&format!("cfl_safety = {}\n", self.cfl_safety));
        s.push_str(&format!("C_e = {}\n\n", self.c_energy));
        s.push_str("[run]\n");
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("freeze_velocity = {}\n", self.freeze_velocity));
        s
    }
}

struct RawEntry {
    line: usize,
    value: String,
    consumed: bool,
}

/// Section-scoped key-value store from one pass over the text, with
/// duplicate and unknown-section detection.
struct RawScenario {
    entries: Vec<(String, RawEntry)>,
}

const SECTIONS: &[&str] = &[
    "domain",
    "physics",
    "time",
    "initial",
    "external",
    "tolerances",
    "run",
];

impl RawScenario {
    fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, RawEntry)> = Vec::new();
        let mut section: Option<&str> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::config_at("section", line_no, "unterminated section header")
                })?;
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|s| **s == name)
                        .copied()
                        .ok_or_else(|| {
                            Error::config_at(
                                format!("[{name}]"),
                                line_no,
                                "unknown section",
                            )
                        })?,
                );
                continue;
            }
            let sec = section.ok_or_else(|| {
                Error::config_at("scenario", line_no, "entry before any [section] header")
            })?;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config_at(format!("[{sec}]"), line_no, "expected key = value")
            })?;
            let full_key = format!("[{sec}].{}", key.trim());
            if entries.iter().any(|(k, _)| *k == full_key) {
                return Err(Error::config_at(full_key, line_no, "duplicate key"));
            }
            entries.push((
                full_key,
                RawEntry {
                    line: line_no,
                    value: value.trim().to_string(),
                    consumed: false,
                },
            ));
        }
        Ok(RawScenario { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.iter_mut().find(|(k, _)| k == key).map(|(_, e)| {
            e.consumed = true;
            (e.line, e.value.clone())
        })
    }

    fn require(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key)
            .ok_or_else(|| Error::config_key(key, "required key missing"))
    }

    fn finish(&self) -> Result<()> {
        for (k, e) in &self.entries {
            if !e.consumed {
                return Err(Error::config_at(k.clone(), e.line, "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_f64(key: &str, line: usize, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::config_at(key, line, format!("expected a number, got '{value}'")))
}

fn parse_usize(key: &str, line: usize, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::config_at(key, line, format!("expected a nonnegative integer, got '{value}'")))
}

fn parse_bool(key: &str, line: usize, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config_at(
            key,
            line,
            format!("expected true or false, got '{value}'"),
        )),
    }
}

/// Splits "name k1=v1 k2=v2" preset syntax into the name and numeric args.
fn parse_preset(key: &str, line: usize, value: &str) -> Result<(String, Vec<(String, f64)>)> {
    let mut tokens = value.split_whitespace();
    let name = tokens
        .next()
        .ok_or_else(|| Error::config_at(key, line, "empty preset"))?
        .to_string();
    let mut args = Vec::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| {
            Error::config_at(key, line, format!("expected param=value, got '{tok}'"))
        })?;
        args.push((k.to_string(), parse_f64(key, line, v)?));
    }
    Ok((name, args))
}

fn preset_arg(args: &[(String, f64)], name: &str, default: f64) -> f64 {
    args.iter()
        .find(|(k, _)| k == name)
        .map(|&(_, v)| v)
        .unwrap_or(default)
}

fn check_preset_args(key: &str, line: usize, args: &[(String, f64)], allowed: &[&str]) -> Result<()> {
    for (k, _) in args {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::config_at(
                key,
                line,
                format!("unknown preset parameter '{k}'"),
            ));
        }
    }
    Ok(())
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut raw = RawScenario::parse(text)?;

    let (l, v) = raw.require("[domain].Lx")?;
    let lx = parse_f64("[domain].Lx", l, &v)?;
    let (l, v) = raw.require("[domain].Ly")?;
    let ly = parse_f64("[domain].Ly", l, &v)?;
    let (l, v) = raw.require("[domain].nx")?;
    let nx = parse_usize("[domain].nx", l, &v)?;
    let (l, v) = raw.require("[domain].ny")?;
    let ny = parse_usize("[domain].ny", l, &v)?;

    let (l, v) = raw.require("[physics].kappa")?;
    let kappa = parse_f64("[physics].kappa", l, &v)?;
    let nu = match raw.take("[physics].nu") {
        Some((l, v)) => parse_f64("[physics].nu", l, &v)?,
        None => 1.0,
    };
    let density = match raw.take("[physics].density") {
        Some((_, v)) => v,
        None => "quad".to_string(),
    };
    crate::elastic::density_by_id(&density)?;

    let (l, v) = raw.require("[time].dt")?;
    let dt = parse_f64("[time].dt", l, &v)?;
    let (l, v) = raw.require("[time].T")?;
    let t_final = parse_f64("[time].T", l, &v)?;
    let snapshot_stride = match raw.take("[time].snapshot_stride") {
        Some((l, v)) => parse_usize("[time].snapshot_stride", l, &v)?,
        None => 0,
    };

    let initial = if let Some((l, v)) = raw.take("[initial].snapshot") {
        for key in ["[initial].v0", "[initial].F0", "[initial].M0"] {
            if raw.take(key).is_some() {
                return Err(Error::config_at(
                    key,
                    l,
                    "snapshot initial data cannot be combined with presets",
                ));
            }
        }
        InitialData::Snapshot(PathBuf::from(v))
    } else {
        let v0 = match raw.take("[initial].v0") {
            None => VelocityPreset::Zero,
            Some((l, v)) => {
                let (name, args) = parse_preset("[initial].v0", l, &v)?;
                match name.as_str() {
                    "zero" => {
                        check_preset_args("[initial].v0", l, &args, &[])?;
                        VelocityPreset::Zero
                    }
                    "vortex" => {
                        check_preset_args("[initial].v0", l, &args, &["amp"])?;
                        VelocityPreset::Vortex {
                            amp: preset_arg(&args, "amp", 0.1),
                        }
                    }
                    other => {
                        return Err(Error::config_at(
                            "[initial].v0",
                            l,
                            format!("unknown velocity preset '{other}'"),
                        ))
                    }
                }
            }
        };
        let f0 = match raw.take("[initial].F0") {
            None => DeformationPreset::Zero,
            Some((l, v)) => {
                let (name, args) = parse_preset("[initial].F0", l, &v)?;
                match name.as_str() {
                    "zero" => {
                        check_preset_args("[initial].F0", l, &args, &[])?;
                        DeformationPreset::Zero
                    }
                    "bump" => {
                        check_preset_args("[initial].F0", l, &args, &["amp"])?;
                        DeformationPreset::Bump {
                            amp: preset_arg(&args, "amp", 0.1),
                        }
                    }
                    other => {
                        return Err(Error::config_at(
                            "[initial].F0",
                            l,
                            format!("unknown deformation preset '{other}'"),
                        ))
                    }
                }
            }
        };
        let m0 = match raw.take("[initial].M0") {
            None => MagnetizationPreset::Uniform {
                mx: 1.0,
                my: 0.0,
                mz: 0.0,
            },
            Some((l, v)) => {
                let (name, args) = parse_preset("[initial].M0", l, &v)?;
                match name.as_str() {
                    "uniform" => {
                        check_preset_args("[initial].M0", l, &args, &["mx", "my", "mz"])?;
                        MagnetizationPreset::Uniform {
                            mx: preset_arg(&args, "mx", 0.0),
                            my: preset_arg(&args, "my", 0.0),
                            mz: preset_arg(&args, "mz", 0.0),
                        }
                    }
                    "wave" => {
                        check_preset_args("[initial].M0", l, &args, &["amp", "tilt"])?;
                        MagnetizationPreset::Wave {
                            amp: preset_arg(&args, "amp", 0.5),
                            tilt: preset_arg(&args, "tilt", 0.0),
                        }
                    }
                    other => {
                        return Err(Error::config_at(
                            "[initial].M0",
                            l,
                            format!("unknown magnetization preset '{other}'"),
                        ))
                    }
                }
            }
        };
        InitialData::Presets { v0, f0, m0 }
    };

    let hext = match raw.take("[external].hext") {
        None => ExternalField::Zero,
        Some((l, v)) => {
            let (name, args) = parse_preset("[external].hext", l, &v)?;
            ExternalField::from_preset(&name, &args).map_err(|e| match e {
                Error::Config { message, .. } => {
                    Error::config_at("[external].hext", l, message)
                }
                other => other,
            })?
        }
    };

    let mut tol = |key: &'static str, default: f64| -> Result<f64> {
        match raw.take(key) {
            Some((l, v)) => parse_f64(key, l, &v),
            None => Ok(default),
        }
    };
    let tol_poisson = tol("[tolerances].tol_poisson", 1e-8)?;
    let tol_div = tol("[tolerances].tol_div", 1e-8)?;
    let eps_renorm = tol("[tolerances].eps_renorm", 1e-8)?;
    let cfl_safety = tol("[tolerances].cfl_safety", 0.4)?;
    let c_energy = tol("[tolerances].C_e", 5.0)?;

    let seed = match raw.take("[run].seed") {
        Some((l, v)) => v
            .parse::<u64>()
            .map_err(|_| Error::config_at("[run].seed", l, "expected an unsigned integer"))?,
        None => 0,
    };
    let freeze_velocity = match raw.take("[run].freeze_velocity") {
        Some((l, v)) => parse_bool("[run].freeze_velocity", l, &v)?,
        None => false,
    };

    raw.finish()?;

    let scenario = Scenario {
        lx,
        ly,
        nx,
        ny,
        kappa,
        nu,
        density,
        dt,
        t_final,
        snapshot_stride,
        initial,
        hext,
        tol_poisson,
        tol_div,
        eps_renorm,
        cfl_safety,
        c_energy,
        seed,
        freeze_velocity,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "\
[domain]
Lx = 1
Ly = 1
nx = 16
ny = 16

[physics]
kappa = 0.5

[time]
dt = 1e-5
T = 0.001
";

    #[test]
    fn minimal_file_materializes_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.nu, 1.0);
        assert_eq!(s.density, "quad");
        assert_eq!(s.cfl_safety, 0.4);
        assert_eq!(s.hext, ExternalField::Zero);
        assert!(matches!(
            s.initial,
            InitialData::Presets {
                v0: VelocityPreset::Zero,
                f0: DeformationPreset::Zero,
                m0: MagnetizationPreset::Uniform { mx, .. }
            } if mx == 1.0
        ));
        assert!(!s.freeze_velocity);
    }

    #[test]
    fn nonpositive_kappa_is_rejected_citing_the_key() {
        let text = MINIMAL.replace("kappa = 0.5", "kappa = 0");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("[physics].kappa"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let text = format!("{MINIMAL}\n[physics]\nviscosity = 2\n");
        let err = parse_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("viscosity") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn time_step_above_the_diffusion_limit_is_rejected() {
        let text = MINIMAL.replace("dt = 1e-5", "dt = 1e-2");
        let err = parse_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("cfl_safety"), "{err}");
        // Raising the safety factor makes the same dt legal.
        let relaxed = format!(
            "{}\n[tolerances]\ncfl_safety = 50\n",
            MINIMAL.replace("dt = 1e-5", "dt = 1e-2")
        );
        parse_scenario(&relaxed).unwrap();
    }

    #[test]
    fn snapshot_initial_data_excludes_presets() {
        let text = format!("{MINIMAL}\n[initial]\nsnapshot = runs/x.bin\nM0 = uniform mx=1\n");
        assert!(parse_scenario(&text).is_err());
        let ok = format!("{MINIMAL}\n[initial]\nsnapshot = runs/x.bin\n");
        let s = parse_scenario(&ok).unwrap();
        assert_eq!(s.initial, InitialData::Snapshot(PathBuf::from("runs/x.bin")));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# a comment\n\n{MINIMAL}  # trailing\n");
        parse_scenario(&text).unwrap();
    }

    #[test]
    fn vortex_preset_is_nearly_divergence_free_and_wall_pinned() {
        let s = parse_scenario(&format!("{MINIMAL}\n[initial]\nv0 = vortex amp=0.3\n")).unwrap();
        let grid = s.grid().unwrap();
        let InitialData::Presets { v0, .. } = &s.initial else {
            panic!()
        };
        let v = v0.sample(&grid);
        for j in 0..grid.ny() {
            assert_eq!(v.x.at(0, j), 0.0);
            assert_eq!(v.x.at(grid.nx(), j), 0.0);
        }
        let div = crate::ops::divergence(&grid, &v).unwrap();
        // Discrete divergence of the sampled analytic curl is only O(h^2).
        assert!(crate::norms::norm_sup(&div) < 0.5);
    }

    #[test]
    fn wave_preset_is_unit_length_to_rounding() {
        let grid = Grid::from_domain(8, 8, 1.0, 1.0).unwrap();
        let m = MagnetizationPreset::Wave { amp: 0.7, tilt: 0.4 }.sample(&grid);
        assert!(crate::state::magnetization_drift(&m) < 1e-15);
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        (
            3usize..20,
            3usize..20,
            0.5f64..2.0,
            0.5f64..2.0,
            1u64..1000,
            any::<bool>(),
        )
            .prop_map(|(nx, ny, lx, ly, seed, freeze)| Scenario {
                lx,
                ly,
                nx,
                ny,
                kappa: 0.25,
                nu: 1.0,
                density: "quad".to_string(),
                dt: 1e-6,
                t_final: 1e-4,
                snapshot_stride: (seed % 7) as usize,
                initial: InitialData::Presets {
                    v0: if freeze {
                        VelocityPreset::Zero
                    } else {
                        VelocityPreset::Vortex { amp: 0.03 }
                    },
                    f0: DeformationPreset::Bump { amp: 0.125 },
                    m0: MagnetizationPreset::Wave {
                        amp: 0.5,
                        tilt: 0.25,
                    },
                },
                hext: ExternalField::Uniform {
                    h: [0.01, 0.0, 0.02],
                    omega: 1.0,
                },
                tol_poisson: 1e-8,
                tol_div: 1e-8,
                eps_renorm: 1e-8,
                cfl_safety: 0.4,
                c_energy: 5.0,
                seed,
                freeze_velocity: freeze,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn serialize_parse_round_trip(s in arb_scenario()) {
            let text = s.to_text();
            let back = parse_scenario(&text).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
