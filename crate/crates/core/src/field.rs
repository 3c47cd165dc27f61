//! Field containers: flat row-major `Vec<f64>` storage tagged with a layout.
//!
//! Index convention everywhere: `data[j * w + i]`, x fastest.

use crate::error::{Error, Result};
use crate::grid::{Grid, Layout};

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    layout: Layout,
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, layout: Layout) -> ScalarField {
        let (w, h) = grid.shape(layout);
        ScalarField {
            layout,
            w,
            h,
            data: vec![0.0; w * h],
        }
    }

    /// Sample an analytic function at the layout's nodes.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: &Grid, layout: Layout, f: F) -> ScalarField {
        let (w, h) = grid.shape(layout);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            let y = grid.y(layout, j);
            for i in 0..w {
                data.push(f(grid.x(layout, i), y));
            }
        }
        ScalarField { layout, w, h, data }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }
    pub fn w(&self) -> usize {
        self.w
    }
    pub fn h(&self) -> usize {
        self.h
    }
    pub fn len(&self) -> usize {
        self.data.len()
    }
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.w && j < self.h);
        j * self.w + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.w + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.w + i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Check that this field matches the grid and an expected layout; every
    /// operator calls this before touching data.
    pub fn expect(&self, grid: &Grid, layout: Layout, op: &'static str) -> Result<()> {
        if self.layout != layout {
            return Err(Error::Layout {
                op,
                expected: layout.name(),
                got: self.layout.name(),
            });
        }
        let (w, h) = grid.shape(layout);
        if (self.w, self.h) != (w, h) {
            return Err(Error::Shape {
                op,
                expected: format!("{w}x{h} ({})", layout.name()),
                got: format!("{}x{}", self.w, self.h),
            });
        }
        Ok(())
    }

    /// a += s * b, shapes must match.
    pub fn axpy(&mut self, s: f64, b: &ScalarField) {
        assert_eq!(self.data.len(), b.data.len(), "axpy: length mismatch");
        for (x, y) in self.data.iter_mut().zip(&b.data) {
            *x += s * *y;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for x in &mut self.data {
            *x *= s;
        }
    }
}

/// Two-component vector field. MAC variant holds the velocity (x on vertical
/// faces, y on horizontal faces); the centered variant holds forces and other
/// derived vectors at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField2 {
    pub fn mac_zeros(grid: &Grid) -> VectorField2 {
        VectorField2 {
            x: ScalarField::zeros(grid, Layout::FaceX),
            y: ScalarField::zeros(grid, Layout::FaceY),
        }
    }

    pub fn centered_zeros(grid: &Grid) -> VectorField2 {
        VectorField2 {
            x: ScalarField::zeros(grid, Layout::Center),
            y: ScalarField::zeros(grid, Layout::Center),
        }
    }

    pub fn is_mac(&self) -> bool {
        self.x.layout() == Layout::FaceX && self.y.layout() == Layout::FaceY
    }

    pub fn is_centered(&self) -> bool {
        self.x.layout() == Layout::Center && self.y.layout() == Layout::Center
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn expect_mac(&self, grid: &Grid, op: &'static str) -> Result<()> {
        self.x.expect(grid, Layout::FaceX, op)?;
        self.y.expect(grid, Layout::FaceY, op)
    }

    pub fn expect_centered(&self, grid: &Grid, op: &'static str) -> Result<()> {
        self.x.expect(grid, Layout::Center, op)?;
        self.y.expect(grid, Layout::Center, op)
    }
}

/// Three-component cell-centered field (magnetization).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField3 {
    pub c: [ScalarField; 3],
}

impl VectorField3 {
    pub fn zeros(grid: &Grid) -> VectorField3 {
        VectorField3 {
            c: std::array::from_fn(|_| ScalarField::zeros(grid, Layout::Center)),
        }
    }

    pub fn from_fn<F: Fn(f64, f64) -> [f64; 3]>(grid: &Grid, f: F) -> VectorField3 {
        let mut out = VectorField3::zeros(grid);
        let (w, h) = grid.shape(Layout::Center);
        for j in 0..h {
            let y = grid.y(Layout::Center, j);
            for i in 0..w {
                let v = f(grid.x(Layout::Center, i), y);
                for k in 0..3 {
                    out.c[k].set(i, j, v[k]);
                }
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 3] {
        [self.c[0].data()[idx], self.c[1].data()[idx], self.c[2].data()[idx]]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|f| f.is_finite())
    }

    pub fn expect(&self, grid: &Grid, op: &'static str) -> Result<()> {
        for f in &self.c {
            f.expect(grid, Layout::Center, op)?;
        }
        Ok(())
    }
}

/// Cell-centered 2x2 matrix field (deformation gradient), components stored
/// row-major: [xx, xy, yx, yy].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixField22 {
    pub c: [ScalarField; 4],
}

impl MatrixField22 {
    pub fn zeros(grid: &Grid) -> MatrixField22 {
        MatrixField22 {
            c: std::array::from_fn(|_| ScalarField::zeros(grid, Layout::Center)),
        }
    }

    #[inline]
    pub fn comp(&self, row: usize, col: usize) -> &ScalarField {
        &self.c[2 * row + col]
    }

    #[inline]
    pub fn comp_mut(&mut self, row: usize, col: usize) -> &mut ScalarField {
        &mut self.c[2 * row + col]
    }

    /// Matrix entries at a flat index as [xx, xy, yx, yy].
    #[inline]
    pub fn at(&self, idx: usize) -> [f64; 4] {
        [
            self.c[0].data()[idx],
            self.c[1].data()[idx],
            self.c[2].data()[idx],
            self.c[3].data()[idx],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|f| f.is_finite())
    }

    pub fn expect(&self, grid: &Grid, op: &'static str) -> Result<()> {
        for f in &self.c {
            f.expect(grid, Layout::Center, op)?;
        }
        Ok(())
    }
}
