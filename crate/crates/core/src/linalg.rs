//! Linear solvers: Thomas algorithm, an FFT/tridiagonal fast solver for
//! separable Helmholtz problems on the channel, and preconditioned CG.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// End condition of the second difference in y at one wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YBc {
    /// Cell-centred unknowns, zero-flux wall (mirror ghost `u_g = u_0`).
    Neumann,
    /// Cell-centred unknowns, zero wall value (ghost `u_g = −u_0`).
    DirichletMirror,
    /// Node-based unknowns with the wall node eliminated.
    DirichletNode,
}

impl YBc {
    /// Diagonal entry of `h²·Δ_y` in the first/last row.
    fn diag(self) -> f64 {
        match self {
            YBc::Neumann => -1.0,
            YBc::DirichletMirror => -3.0,
            YBc::DirichletNode => -2.0,
        }
    }
}

/// Applies `h²·Δ_y` with the given end conditions to one column.
pub fn second_difference_y(col: &[f64], lo: YBc, hi: YBc) -> Vec<f64> {
    let m = col.len();
    let mut out = vec![0.0; m];
    for j in 0..m {
        let d = if j == 0 {
            lo.diag()
        } else if j + 1 == m {
            hi.diag()
        } else {
            -2.0
        };
        let mut s = d * col[j];
        if j > 0 {
            s += col[j - 1];
        }
        if j + 1 < m {
            s += col[j + 1];
        }
        out[j] = s;
    }
    out
}

/// Solves a tridiagonal system with constant off-diagonals `off` and diagonal `diag`.
fn thomas_const_off(diag: &[f64], off: f64, rhs: &mut [Complex64], scratch: &mut [f64]) {
    let m = diag.len();
    scratch[0] = off / diag[0];
    rhs[0] /= diag[0];
    for j in 1..m {
        let denom = diag[j] - off * scratch[j - 1];
        scratch[j] = off / denom;
        let prev = rhs[j - 1];
        rhs[j] = (rhs[j] - prev * off) / denom;
    }
    for j in (0..m - 1).rev() {
        let next = rhs[j + 1];
        rhs[j] -= next * scratch[j];
    }
}

/// General tridiagonal solve (real): `a` sub, `b` diagonal, `c` super.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) {
    let n = b.len();
    let mut cp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let denom = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / denom } else { 0.0 };
        d[i] = (d[i] - a[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
}

/// Direct solver for `(α − ν(Δ_x + Δ_y)) φ = r` on an `nx × m` array,
/// periodic in x with five-point differences.
///
/// With `α = 0` and Neumann ends on both walls the problem is singular; the
/// solver then returns the mean-zero solution for mean-zero data.
#[derive(Clone)]
pub struct SeparableSolver {
    nx: usize,
    m: usize,
    hy: f64,
    alpha: f64,
    nu: f64,
    lo: YBc,
    hi: YBc,
    kx: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SeparableSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparableSolver")
            .field("nx", &self.nx)
            .field("m", &self.m)
            .field("alpha", &self.alpha)
            .field("nu", &self.nu)
            .finish()
    }
}

impl SeparableSolver {
    #[allow(clippy::too_many_arguments)]
    pub fn new(nx: usize, m: usize, hx: f64, hy: f64, alpha: f64, nu: f64, lo: YBc, hi: YBc) -> Self {
        let mut planner = FftPlanner::new();
        let kx = (0..nx)
            .map(|k| {
                let s = (std::f64::consts::PI * k as f64 / nx as f64).sin();
                4.0 * s * s / (hx * hx)
            })
            .collect();
        Self {
            nx,
            m,
            hy,
            alpha,
            nu,
            lo,
            hi,
            kx,
            fwd: planner.plan_fft_forward(nx),
            inv: planner.plan_fft_inverse(nx),
        }
    }

    fn singular(&self) -> bool {
        self.alpha == 0.0 && self.lo == YBc::Neumann && self.hi == YBc::Neumann
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let (nx, m) = (self.nx, self.m);
        assert_eq!(rhs.len(), nx * m);
        let mut buf: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let ih2 = 1.0 / (self.hy * self.hy);
        let off = -self.nu * ih2;
        let mut diag = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        let mut col = vec![Complex64::new(0.0, 0.0); m];
        for k in 0..nx {
            for j in 0..m {
                col[j] = buf[j * nx + k];
            }
            if k == 0 && self.singular() {
                solve_neumann_singular(&mut col, self.nu * ih2);
            } else {
                for (j, d) in diag.iter_mut().enumerate() {
                    let dy = if j == 0 {
                        self.lo.diag()
                    } else if j + 1 == m {
                        self.hi.diag()
                    } else {
                        -2.0
                    };
                    *d = self.alpha + self.nu * self.kx[k] - self.nu * ih2 * dy;
                }
                thomas_const_off(&diag, off, &mut col, &mut scratch);
            }
            for j in 0..m {
                buf[j * nx + k] = col[j];
            }
        }
        self.inv.process(&mut buf);
        let s = 1.0 / nx as f64;
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re * s;
        }
    }
}

/// Mean-zero solution of `−c·Δ_y φ = r` with Neumann ends, by flux accumulation.
fn solve_neumann_singular(col: &mut [Complex64], c: f64) {
    let m = col.len();
    let mean = col.iter().sum::<Complex64>() / m as f64;
    let mut flux = Complex64::new(0.0, 0.0);
    let mut phi = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m - 1 {
        // −c(φ_{j+1} − φ_j) accumulated from the bottom wall.
        flux += col[j] - mean;
        phi[j + 1] = phi[j] - flux / c;
    }
    let pm = phi.iter().sum::<Complex64>() / m as f64;
    for (d, p) in col.iter_mut().zip(&phi) {
        *d = *p - pm;
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    /// Remove the mean of residual and iterate (for singular Neumann problems).
    pub project_mean: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Preconditioned conjugate gradients for a symmetric positive (semi-)definite
/// operator. `x` holds the initial guess on entry and the solution on exit.
pub fn pcg(
    name: &'static str,
    apply: impl Fn(&[f64], &mut [f64]),
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgReport> {
    let n = b.len();
    let mut rhs = b.to_vec();
    if opts.project_mean {
        remove_mean(&mut rhs);
        remove_mean(x);
    }
    let bnorm = dot(&rhs, &rhs).sqrt();
    let tol = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if opts.project_mean {
        remove_mean(&mut r);
    }
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= tol || bnorm == 0.0 && rnorm == 0.0 {
        return Ok(CgReport {
            iterations: 0,
            residual: rnorm,
        });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    if opts.project_mean {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                solver: name,
                iterations: it,
                residual: rnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.project_mean {
            remove_mean(&mut r);
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= tol {
            if opts.project_mean {
                remove_mean(x);
            }
            return Ok(CgReport {
                iterations: it,
                residual: rnorm,
            });
        }
        precond(&r, &mut z);
        if opts.project_mean {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver {
        solver: name,
        iterations: opts.max_iter,
        residual: rnorm,
    })
}
