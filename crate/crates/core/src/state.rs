//! Full solver state (velocity, pressure, deformation gradient,
//! magnetization) plus a bit-exact binary snapshot format so a run can be
//! resumed or post-processed without any rounding drift.
//!
//! File layout, all little-endian: an 8-byte magic `MVSIM1\0\0`, then
//! `nx: u64, ny: u64, hx: f64, hy: f64, t: f64`, then four field records in
//! the fixed order velocity, pressure, deformation, magnetization. Each
//! record is `tag: u64, components: u64` followed by the raw f64 payload of
//! every component in row-major order. Velocity components carry their MAC
//! shapes, everything else is cell-centered.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{MatrixField22, ScalarField, VectorField2, VectorField3};
use crate::grid::{Grid, Layout};

const MAGIC: [u8; 8] = *b"MVSIM1\0\0";
const TAG_VELOCITY: u64 = 1;
const TAG_PRESSURE: u64 = 2;
const TAG_DEFORMATION: u64 = 3;
const TAG_MAGNETIZATION: u64 = 4;

#[derive(Clone, Debug)]
pub struct State {
    pub time: f64,
    pub velocity: VectorField2,
    pub pressure: ScalarField,
    pub deformation: MatrixField22,
    pub magnetization: VectorField3,
}

impl State {
    pub fn zeros(grid: &Grid) -> Self {
        State {
            time: 0.0,
            velocity: VectorField2::mac_zeros(grid),
            pressure: ScalarField::zeros(grid, Layout::Center),
            deformation: MatrixField22::zeros(grid),
            magnetization: VectorField3::zeros(grid),
        }
    }

    pub fn expect(&self, grid: &Grid, op: &'static str) -> Result<()> {
        self.velocity.expect_mac(grid, op)?;
        self.pressure.expect(grid, Layout::Center, op)?;
        self.deformation.expect(grid, op)?;
        self.magnetization.expect(grid, op)
    }

    pub fn is_finite(&self) -> bool {
        self.velocity.is_finite()
            && self.pressure.is_finite()
            && self.deformation.is_finite()
            && self.magnetization.is_finite()
    }
}

/// Rescales every magnetization vector back to unit length and returns the
/// largest deviation `max_i | |M_i| - 1 |` seen beforehand. Vectors shorter
/// than `eps` cannot be meaningfully rescaled and abort the step.
pub fn renormalize_magnetization(m: &mut VectorField3, eps: f64) -> Result<f64> {
    let n = m.c[0].len();
    let mut worst = 0.0f64;
    for i in 0..n {
        let a = m.c[0].data()[i];
        let b = m.c[1].data()[i];
        let c = m.c[2].data()[i];
        let len = (a * a + b * b + c * c).sqrt();
        if !(len >= eps) {
            return Err(Error::DegenerateMagnetization { min_norm: len, eps });
        }
        worst = worst.max((len - 1.0).abs());
        let inv = 1.0 / len;
        m.c[0].data_mut()[i] = a * inv;
        m.c[1].data_mut()[i] = b * inv;
        m.c[2].data_mut()[i] = c * inv;
    }
    Ok(worst)
}

/// Largest pointwise deviation of |M| from 1, without modifying the field.
pub fn magnetization_drift(m: &VectorField3) -> f64 {
    let n = m.c[0].len();
    crate::reduce::max_with(n, |i| {
        let a = m.c[0].data()[i];
        let b = m.c[1].data()[i];
        let c = m.c[2].data()[i];
        ((a * a + b * b + c * c).sqrt() - 1.0).abs()
    })
}

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_field(w: &mut impl Write, f: &ScalarField) -> Result<()> {
    let mut buf = Vec::with_capacity(f.len() * 8);
    for &v in f.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_field(r: &mut impl Read, grid: &Grid, layout: Layout) -> Result<ScalarField> {
    let mut f = ScalarField::zeros(grid, layout);
    let mut buf = vec![0u8; f.len() * 8];
    r.read_exact(&mut buf)?;
    for (i, chunk) in buf.chunks_exact(8).enumerate() {
        f.data_mut()[i] = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(f)
}

fn record_header(r: &mut impl Read, tag: u64, comps: u64) -> Result<()> {
    let got_tag = get_u64(r)?;
    let got_comps = get_u64(r)?;
    if got_tag != tag || got_comps != comps {
        return Err(Error::Snapshot(format!(
            "expected record tag {tag} with {comps} components, found tag {got_tag} with {got_comps}"
        )));
    }
    Ok(())
}

pub fn write_snapshot(path: &Path, grid: &Grid, state: &State) -> Result<()> {
    state.expect(grid, "write_snapshot")?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    put_u64(&mut w, grid.nx() as u64)?;
    put_u64(&mut w, grid.ny() as u64)?;
    put_f64(&mut w, grid.hx())?;
    put_f64(&mut w, grid.hy())?;
    put_f64(&mut w, state.time)?;

    put_u64(&mut w, TAG_VELOCITY)?;
    put_u64(&mut w, 2)?;
    put_field(&mut w, &state.velocity.x)?;
    put_field(&mut w, &state.velocity.y)?;

    put_u64(&mut w, TAG_PRESSURE)?;
    put_u64(&mut w, 1)?;
    put_field(&mut w, &state.pressure)?;

    put_u64(&mut w, TAG_DEFORMATION)?;
    put_u64(&mut w, 4)?;
    for k in 0..4 {
        put_field(&mut w, &state.deformation.c[k])?;
    }

    put_u64(&mut w, TAG_MAGNETIZATION)?;
    put_u64(&mut w, 3)?;
    for k in 0..3 {
        put_field(&mut w, &state.magnetization.c[k])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(Grid, State)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Snapshot(format!(
            "bad magic {magic:?} in {}",
            path.display()
        )));
    }
    let nx = get_u64(&mut r)? as usize;
    let ny = get_u64(&mut r)? as usize;
    let hx = get_f64(&mut r)?;
    let hy = get_f64(&mut r)?;
    let time = get_f64(&mut r)?;
    let grid = Grid::new(nx, ny, hx, hy)?;

    record_header(&mut r, TAG_VELOCITY, 2)?;
    let vx = get_field(&mut r, &grid, Layout::FaceX)?;
    let vy = get_field(&mut r, &grid, Layout::FaceY)?;

    record_header(&mut r, TAG_PRESSURE, 1)?;
    let pressure = get_field(&mut r, &grid, Layout::Center)?;

    record_header(&mut r, TAG_DEFORMATION, 4)?;
    let mut deformation = MatrixField22::zeros(&grid);
    for k in 0..4 {
        deformation.c[k] = get_field(&mut r, &grid, Layout::Center)?;
    }

    record_header(&mut r, TAG_MAGNETIZATION, 3)?;
    let mut magnetization = VectorField3::zeros(&grid);
    for k in 0..3 {
        magnetization.c[k] = get_field(&mut r, &grid, Layout::Center)?;
    }

    let state = State {
        time,
        velocity: VectorField2 { x: vx, y: vy },
        pressure,
        deformation,
        magnetization,
    };
    if !state.is_finite() {
        return Err(Error::NonFinite { op: "read_snapshot" });
    }
    Ok((grid, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(grid: &Grid, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = State::zeros(grid);
        s.time = rng.gen_range(0.0..10.0);
        for f in [&mut s.velocity.x, &mut s.velocity.y, &mut s.pressure] {
            for v in f.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        for k in 0..4 {
            for v in s.deformation.c[k].data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        for k in 0..3 {
            for v in s.magnetization.c[k].data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        s
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let grid = Grid::from_domain(6, 5, 1.0, 2.0).unwrap();
        let s = random_state(&grid, 7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        write_snapshot(&path, &grid, &s).unwrap();
        let (g2, s2) = read_snapshot(&path).unwrap();
        assert_eq!(g2.nx(), grid.nx());
        assert_eq!(g2.hy().to_bits(), grid.hy().to_bits());
        assert_eq!(s2.time.to_bits(), s.time.to_bits());
        for (a, b) in [
            (&s.velocity.x, &s2.velocity.x),
            (&s.velocity.y, &s2.velocity.y),
            (&s.pressure, &s2.pressure),
            (&s.deformation.c[3], &s2.deformation.c[3]),
            (&s.magnetization.c[2], &s2.magnetization.c[2]),
        ] {
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncated_snapshot_is_rejected() {
        let grid = Grid::from_domain(4, 4, 1.0, 1.0).unwrap();
        let s = random_state(&grid, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bin");
        write_snapshot(&path, &grid, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn renormalize_reports_drift_and_is_idempotent() {
        let grid = Grid::from_domain(4, 3, 1.0, 1.0).unwrap();
        let mut m = VectorField3::from_fn(&grid, |x, y| [1.0 + 0.1 * x, 0.2 * y, -0.05]);
        let drift = renormalize_magnetization(&mut m, 1e-8).unwrap();
        assert!(drift > 0.01);
        assert!(magnetization_drift(&m) < 1e-15);
        let again = renormalize_magnetization(&mut m, 1e-8).unwrap();
        assert!(again < 1e-15);
    }

    #[test]
    fn degenerate_magnetization_is_an_error() {
        let grid = Grid::from_domain(3, 3, 1.0, 1.0).unwrap();
        let mut m = VectorField3::zeros(&grid);
        m.c[0].fill(1.0);
        m.c[0].set(1, 1, 1e-12);
        let err = renormalize_magnetization(&mut m, 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegenerateMagnetization { .. }));
    }
}
