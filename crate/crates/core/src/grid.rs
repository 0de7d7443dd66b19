//! Staggered (marker-and-cell) grid on the periodic channel `(0,Lx)×(0,Ly)`.
//!
//! * horizontal velocity at `(i hx, (j+½) hy)`, `nx × ny`, periodic in `i`
//! * vertical velocity at `((i+½) hx, j hy)`, `nx × (ny+1)`, rows `0` and `ny` on the walls
//! * pressure and stress at cell centres `((i+½) hx, (j+½) hy)`, `nx × ny`
//!
//! All arrays are row-major with `i` fastest.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 4 cells per direction, got {nx}×{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "domain lengths must be positive, got {lx}×{ly}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / nx as f64,
            hy: ly / ny as f64,
        })
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn v_len(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ip(&self, i: usize) -> usize {
        if i + 1 == self.nx {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    pub fn im(&self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }

    #[inline]
    pub fn xc(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx
    }

    #[inline]
    pub fn yc(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy
    }

    #[inline]
    pub fn xf(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn yf(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    /// Cell-centre sample of `f(x, y)`.
    pub fn sample_cells(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(f(self.xc(i), self.yc(j)));
            }
        }
        out
    }

    /// Sample on horizontal-velocity faces.
    pub fn sample_u(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells());
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(f(self.xf(i), self.yc(j)));
            }
        }
        out
    }

    /// Sample on vertical-velocity faces, wall rows included.
    pub fn sample_v(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.v_len());
        for j in 0..=self.ny {
            for i in 0..self.nx {
                out.push(f(self.xc(i), self.yf(j)));
            }
        }
        out
    }

    /// Shell nodes sit above the cell centres of the top row.
    pub fn shell_nodes(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.xc(i)).collect()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_positions() {
        let g = Grid::new(64, 32, 2.0, 1.0).unwrap();
        assert_eq!(g.hx, 1.0 / 32.0);
        assert_eq!(g.hy, 1.0 / 32.0);
        assert_eq!(g.xc(0), 0.5 / 32.0);
        assert_eq!(g.yf(32), 1.0);
        assert_eq!(g.ip(63), 0);
        assert_eq!(g.im(0), 63);
        assert_eq!(g.sample_v(|_, y| y).len(), 64 * 33);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(Grid::new(2, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
    }
}
