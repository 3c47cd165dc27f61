//! Uniform staggered (MAC) grid on the rectangle [0, Lx] x [0, Ly].
//!
//! Scalars (pressure, deformation and magnetization components) live at cell
//! centers, the x velocity component on vertical faces, the y component on
//! horizontal faces. Face nodes with index 0 or nx (resp. ny) lie exactly on
//! the wall, which is where the no-slip condition is pinned.

use crate::error::{Error, Result};

/// Storage layout of a field on the staggered grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// nx x ny values at ((i+1/2)hx, (j+1/2)hy).
    Center,
    /// (nx+1) x ny values at (i hx, (j+1/2)hy); columns 0 and nx are on the wall.
    FaceX,
    /// nx x (ny+1) values at ((i+1/2)hx, j hy); rows 0 and ny are on the wall.
    FaceY,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Center => "center",
            Layout::FaceX => "face-x",
            Layout::FaceY => "face-y",
        }
    }
}

/// Homogeneous boundary condition tag for cell-centered ghost mirroring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    /// Value 0 on the wall: ghost = -(first interior value).
    Dirichlet0,
    /// Zero normal derivative on the wall: ghost = first interior value.
    Neumann0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64) -> Result<Grid> {
        if nx < 3 || ny < 3 {
            return Err(Error::config(format!(
                "grid needs nx, ny >= 3, got {nx} x {ny}"
            )));
        }
        if !(hx > 0.0 && hx.is_finite() && hy > 0.0 && hy.is_finite()) {
            return Err(Error::config(format!(
                "grid spacings must be positive and finite, got hx={hx}, hy={hy}"
            )));
        }
        Ok(Grid { nx, ny, hx, hy })
    }

    /// Grid from domain lengths; hx = lx/nx, hy = ly/ny.
    pub fn from_domain(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid> {
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::config(format!(
                "domain lengths must be positive and finite, got Lx={lx}, Ly={ly}"
            )));
        }
        Grid::new(nx, ny, lx / nx as f64, ly / ny as f64)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.hx
    }
    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.hy
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    /// (width, height) of the storage array for a layout.
    pub fn shape(&self, layout: Layout) -> (usize, usize) {
        match layout {
            Layout::Center => (self.nx, self.ny),
            Layout::FaceX => (self.nx + 1, self.ny),
            Layout::FaceY => (self.nx, self.ny + 1),
        }
    }

    pub fn len(&self, layout: Layout) -> usize {
        let (w, h) = self.shape(layout);
        w * h
    }

    /// x coordinate of sample column i for a layout.
    pub fn x(&self, layout: Layout, i: usize) -> f64 {
        match layout {
            Layout::Center | Layout::FaceY => (i as f64 + 0.5) * self.hx,
            Layout::FaceX => i as f64 * self.hx,
        }
    }

    /// y coordinate of sample row j for a layout.
    pub fn y(&self, layout: Layout, j: usize) -> f64 {
        match layout {
            Layout::Center | Layout::FaceX => (j as f64 + 0.5) * self.hy,
            Layout::FaceY => j as f64 * self.hy,
        }
    }
}
