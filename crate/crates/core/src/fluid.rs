//! Incompressible solvent on the reference grid.
//!
//! Pulled back to the reference channel the momentum balance reads
//!
//! ```text
//! J ∂ₜū = ν div(∇ū A) − Bᵀ∇p̄ + div(𝕋̄ Bᵀ) − (∇ū) c,    div(B ū) = 0,
//! c = B (ū − ∂ₜΨ),
//! ```
//!
//! with row-wise gradients and divergences. One step is a Chorin projection:
//! backward-Euler viscosity `(J/dt − νΔ)u* = …` with every other term
//! explicit, then a `J`-weighted projection onto `div(B u) = 0`.
//!
//! Without a map (or with the identity map) every mapped expression reduces
//! to the plain fixed-domain one by multiplications with `1.0` and additions
//! of `±0.0`, so both paths produce identical floats.

use crate::algebra::Mat2;
use crate::error::{Error, Result};
use crate::geometry::HanzawaMap;
use crate::grid::Grid;
use crate::linalg::{pcg, CgOptions, SeparableSolver, YBc};
use crate::solute::StressField;

/// Target for the discrete `L²` norm of `div(B u)` after projection.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    /// horizontal velocity, `nx × ny`
    pub u: Vec<f64>,
    /// vertical velocity, `nx × (ny+1)`, wall rows included
    pub v: Vec<f64>,
    /// cell pressure, mean zero
    pub p: Vec<f64>,
    pub t: f64,
}

impl FluidState {
    pub fn rest(grid: &Grid) -> Self {
        Self {
            u: vec![0.0; grid.cells()],
            v: vec![0.0; grid.v_len()],
            p: vec![0.0; grid.cells()],
            t: 0.0,
        }
    }

    /// Vertical velocity on the top wall (one value per shell node).
    pub fn top_velocity(&self, grid: &Grid) -> &[f64] {
        &self.v[grid.ny * grid.nx..]
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    pub divergence_l2: f64,
    pub viscous_iterations: usize,
    pub pressure_iterations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FluidOptions {
    pub viscous_rel_tol: f64,
    pub max_iter: usize,
}

impl Default for FluidOptions {
    fn default() -> Self {
        Self {
            viscous_rel_tol: 1e-13,
            max_iter: 1000,
        }
    }
}

/// Fixed-step solver with its fast preconditioners.
#[derive(Clone, Debug)]
pub struct FluidSolver {
    pub grid: Grid,
    pub nu: f64,
    pub dt: f64,
    pub options: FluidOptions,
    visc_u: SeparableSolver,
    visc_v: SeparableSolver,
    poisson: SeparableSolver,
}

#[inline]
fn avg4(a: f64, b: f64, c: f64, d: f64) -> f64 {
    0.25 * (a + b + c + d)
}

/// `A − I` from the closed-form metric coefficients.
#[inline]
fn a_minus_i(a: f64, b: f64) -> (f64, f64, f64) {
    (b - 1.0, -a, (1.0 + a * a) / b - 1.0)
}

impl FluidSolver {
    pub fn new(grid: Grid, nu: f64, dt: f64) -> Result<Self> {
        if !(nu > 0.0 && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "viscosity and time step must be positive, got ν = {nu}, dt = {dt}"
            )));
        }
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        let idt = 1.0 / dt;
        Ok(Self {
            grid,
            nu,
            dt,
            options: FluidOptions::default(),
            visc_u: SeparableSolver::new(nx, ny, hx, hy, idt, nu, YBc::DirichletMirror, YBc::DirichletMirror),
            visc_v: SeparableSolver::new(nx, ny - 1, hx, hy, idt, nu, YBc::DirichletNode, YBc::DirichletNode),
            poisson: SeparableSolver::new(nx, ny, hx, hy, 0.0, 1.0, YBc::Neumann, YBc::Neumann),
        })
    }

    /// One projection step. `top` is the prescribed vertical velocity on the
    /// flexible wall; it must have zero mean for the pressure problem to be solvable.
    pub fn step(
        &self,
        state: &FluidState,
        stress: &StressField,
        map: Option<&HanzawaMap>,
        top: &[f64],
    ) -> Result<(FluidState, StepInfo)> {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        if state.u.len() != g.cells() || state.v.len() != g.v_len() || top.len() != nx {
            return Err(Error::InvalidArgument("fluid state does not match the grid".into()));
        }
        if let Some(m) = map {
            if !m.grid.same_shape(g) {
                return Err(Error::InvalidArgument("map grid does not match the fluid grid".into()));
            }
        }
        let mut info = StepInfo::default();
        let idt = 1.0 / self.dt;
        let nu = self.nu;

        // Explicit forcing.
        let (mut fu, mut fv) = stress_divergence(g, stress, map);
        let (cu, cv) = convection(g, &state.u, &state.v, map);
        for (f, c) in fu.iter_mut().zip(&cu) {
            *f -= c;
        }
        for (f, c) in fv.iter_mut().zip(&cv) {
            *f -= c;
        }
        if let Some(m) = map {
            let (du, dv) = viscous_correction(g, &state.u, &state.v, m);
            for (f, d) in fu.iter_mut().zip(&du) {
                *f += nu * d;
            }
            for (f, d) in fv.iter_mut().zip(&dv) {
                *f += nu * d;
            }
        }

        // Viscous solve for u.
        let ju: Option<&[f64]> = map.map(|m| m.b_u.as_slice());
        let mut rhs_u = vec![0.0; g.cells()];
        for k in 0..g.cells() {
            rhs_u[k] = match ju {
                None => idt * state.u[k] + fu[k],
                Some(j) => (j[k] * idt) * state.u[k] + fu[k],
            };
        }
        let mut ustar = state.u.clone();
        let rep = pcg(
            "viscous-u",
            |x, y| self.apply_helmholtz_u(x, y, ju),
            |r, z| self.visc_u.solve(r, z),
            &rhs_u,
            &mut ustar,
            self.cg_viscous(),
        )?;
        info.viscous_iterations += rep.iterations;

        // Viscous solve for interior v rows.
        let nint = nx * (ny - 1);
        let jv: Option<&[f64]> = map.map(|m| &m.j_v[nx..nx * ny]);
        let ih2 = 1.0 / (g.hy * g.hy);
        let mut rhs_v = vec![0.0; nint];
        for j in 1..ny {
            for i in 0..nx {
                let k = g.idx(i, j);
                let kk = k - nx;
                let mut r = match jv {
                    None => idt * state.v[k] + fv[k],
                    Some(w) => (w[kk] * idt) * state.v[k] + fv[k],
                };
                if j == 1 {
                    r += nu * ih2 * 0.0;
                }
                if j == ny - 1 {
                    r += nu * ih2 * top[i];
                }
                rhs_v[kk] = r;
            }
        }
        let mut vint = state.v[nx..nx * ny].to_vec();
        let rep = pcg(
            "viscous-v",
            |x, y| self.apply_helmholtz_v(x, y, jv),
            |r, z| self.visc_v.solve(r, z),
            &rhs_v,
            &mut vint,
            self.cg_viscous(),
        )?;
        info.viscous_iterations += rep.iterations;
        let mut vstar = vec![0.0; g.v_len()];
        vstar[nx..nx * ny].copy_from_slice(&vint);
        vstar[nx * ny..].copy_from_slice(top);

        // Projection.
        let (u, v, phi, iters) = self.project_with_guess(ustar, vstar, map, &state.p)?;
        info.pressure_iterations = iters;
        let div = transformed_divergence(g, &u, &v, map);
        info.divergence_l2 = (div.iter().map(|d| d * d).sum::<f64>() * g.cell_area()).sqrt();
        if !info.divergence_l2.is_finite() {
            return Err(Error::Numerical("non-finite velocity after projection".into()));
        }
        Ok((
            FluidState {
                u,
                v,
                p: phi,
                t: state.t + self.dt,
            },
            info,
        ))
    }

    /// Projects `(u, v)` onto `div(B u) = 0` keeping the wall rows of `v`.
    /// Returns the projected velocity and the pressure `φ` with `u ← u − dt W⁻¹Bᵀ∇φ`.
    pub fn project(&self, u: Vec<f64>, v: Vec<f64>, map: Option<&HanzawaMap>) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let g = &self.grid;
        if u.len() != g.cells() || v.len() != g.v_len() {
            return Err(Error::InvalidArgument("velocity does not match the grid".into()));
        }
        let (u, v, p, _) = self.project_with_guess(u, v, map, &vec![0.0; g.cells()])?;
        Ok((u, v, p))
    }

    fn project_with_guess(
        &self,
        mut u: Vec<f64>,
        mut v: Vec<f64>,
        map: Option<&HanzawaMap>,
        guess: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let idt = 1.0 / self.dt;
        let div = transformed_divergence(g, &u, &v, map);
        let rhs_p: Vec<f64> = div.iter().map(|d| -d * idt).collect();
        let mut phi = guess.to_vec();
        let abs_tol = DIVERGENCE_TOL / (self.dt * g.cell_area().sqrt());
        let rep = pcg(
            "pressure",
            |x, y| pressure_operator(g, x, y, map),
            |r, z| self.poisson.solve(r, z),
            &rhs_p,
            &mut phi,
            CgOptions {
                rel_tol: 1e-15,
                abs_tol,
                max_iter: self.options.max_iter,
                project_mean: true,
            },
        )?;
        let (gu, gv) = pressure_correction(g, &phi, map);
        for (x, c) in u.iter_mut().zip(&gu) {
            *x -= self.dt * c;
        }
        for k in nx..nx * ny {
            v[k] -= self.dt * gv[k];
        }
        Ok((u, v, phi, rep.iterations))
    }

    fn cg_viscous(&self) -> CgOptions {
        CgOptions {
            rel_tol: self.options.viscous_rel_tol,
            abs_tol: 1e-300,
            max_iter: self.options.max_iter,
            project_mean: false,
        }
    }

    fn apply_helmholtz_u(&self, x: &[f64], y: &mut [f64], jw: Option<&[f64]>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let idt = 1.0 / self.dt;
        let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
        for j in 0..ny {
            for i in 0..nx {
                let k = g.idx(i, j);
                let c = x[k];
                let lo = if j == 0 { -c } else { x[k - nx] };
                let hi = if j + 1 == ny { -c } else { x[k + nx] };
                let lap = (x[g.idx(g.im(i), j)] - 2.0 * c + x[g.idx(g.ip(i), j)]) * ihx2 + (lo - 2.0 * c + hi) * ihy2;
                y[k] = match jw {
                    None => idt * c - self.nu * lap,
                    Some(w) => (w[k] * idt) * c - self.nu * lap,
                };
            }
        }
    }

    fn apply_helmholtz_v(&self, x: &[f64], y: &mut [f64], jw: Option<&[f64]>) {
        let g = &self.grid;
        let nx = g.nx;
        let m = g.ny - 1;
        let idt = 1.0 / self.dt;
        let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
        for j in 0..m {
            for i in 0..nx {
                let k = j * nx + i;
                let c = x[k];
                let lo = if j == 0 { 0.0 } else { x[k - nx] };
                let hi = if j + 1 == m { 0.0 } else { x[k + nx] };
                let lap = (x[j * nx + g.im(i)] - 2.0 * c + x[j * nx + g.ip(i)]) * ihx2 + (lo - 2.0 * c + hi) * ihy2;
                y[k] = match jw {
                    None => idt * c - self.nu * lap,
                    Some(w) => (w[k] * idt) * c - self.nu * lap,
                };
            }
        }
    }
}

/// Horizontal velocity with the no-slip ghost rows (`u_ghost = −u`).
#[inline]
fn u_at(g: &Grid, u: &[f64], i: usize, j: i64) -> f64 {
    if j < 0 {
        -u[g.idx(i, 0)]
    } else if j >= g.ny as i64 {
        -u[g.idx(i, g.ny - 1)]
    } else {
        u[g.idx(i, j as usize)]
    }
}

/// Cell value with mirrored (zero-flux) ghost rows.
#[inline]
fn cell_at(g: &Grid, f: &[f64], i: usize, j: i64) -> f64 {
    let j = j.clamp(0, g.ny as i64 - 1) as usize;
    f[g.idx(i, j)]
}

/// Average of the four cells around corner `(i, j)` (x = i·hx, y = j·hy).
#[inline]
fn corner_avg(g: &Grid, f: &[f64], i: usize, j: usize) -> f64 {
    let im = g.im(i);
    let (jl, jh) = (j as i64 - 1, j as i64);
    avg4(cell_at(g, f, im, jl), cell_at(g, f, i, jl), cell_at(g, f, im, jh), cell_at(g, f, i, jh))
}

/// `div(𝕋 Bᵀ)` on the velocity faces (`div 𝕋` without a map). The v part is
/// returned on the full `nx × (ny+1)` layout with zero wall rows.
pub fn stress_divergence(g: &Grid, s: &StressField, map: Option<&HanzawaMap>) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let mut fu = vec![0.0; g.cells()];
    let mut fv = vec![0.0; g.v_len()];
    // Corner stresses and fluxes, corners j = 0..=ny.
    let mut t11n = vec![0.0; g.v_len()];
    let mut t12n = vec![0.0; g.v_len()];
    for j in 0..=ny {
        for i in 0..nx {
            t12n[g.idx(i, j)] = corner_avg(g, &s.t12, i, j);
            if map.is_some() {
                t11n[g.idx(i, j)] = corner_avg(g, &s.t11, i, j);
            }
        }
    }
    match map {
        None => {
            for j in 0..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let km = g.idx(g.im(i), j);
                    fu[k] = (s.t11[k] - s.t11[km]) / g.hx + (t12n[g.idx(i, j + 1)] - t12n[k]) / g.hy;
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let kp = g.idx(g.ip(i), j);
                    let kd = g.idx(i, j - 1);
                    fv[k] = (t12n[kp] - t12n[k]) / g.hx + (s.t22[k] - s.t22[kd]) / g.hy;
                }
            }
        }
        Some(m) => {
            // x-flux of row 1 at cells: b T11; y-flux at corners: T12 − a T11.
            let fx1: Vec<f64> = (0..g.cells()).map(|k| m.cell.b[k] * s.t11[k]).collect();
            let fy1: Vec<f64> = (0..g.v_len()).map(|k| t12n[k] - m.corner.a[k] * t11n[k]).collect();
            // row 2: x-flux at corners b T12; y-flux at cells T22 − a T12.
            let fx2: Vec<f64> = (0..g.v_len()).map(|k| m.corner.b[k] * t12n[k]).collect();
            let fy2: Vec<f64> = (0..g.cells()).map(|k| s.t22[k] - m.cell.a[k] * s.t12[k]).collect();
            for j in 0..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let km = g.idx(g.im(i), j);
                    fu[k] = (fx1[k] - fx1[km]) / g.hx + (fy1[g.idx(i, j + 1)] - fy1[k]) / g.hy;
                }
            }
            for j in 1..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let kp = g.idx(g.ip(i), j);
                    let kd = g.idx(i, j - 1);
                    fv[k] = (fx2[kp] - fx2[k]) / g.hx + (fy2[k] - fy2[kd]) / g.hy;
                }
            }
        }
    }
    (fu, fv)
}

/// Centred convection `(∇ū) c` on the velocity faces, `c = B(ū − ∂ₜΨ)`.
pub fn convection(g: &Grid, u: &[f64], v: &[f64], map: Option<&HanzawaMap>) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let mut cu = vec![0.0; g.cells()];
    let mut cv = vec![0.0; g.v_len()];
    let (i2x, i2y) = (0.5 / g.hx, 0.5 / g.hy);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let im = g.im(i);
            let vbar = avg4(v[g.idx(im, j)], v[g.idx(i, j)], v[g.idx(im, j + 1)], v[g.idx(i, j + 1)]);
            let dx = (u[g.idx(g.ip(i), j)] - u[g.idx(im, j)]) * i2x;
            let dy = (u_at(g, u, i, j as i64 + 1) - u_at(g, u, i, j as i64 - 1)) * i2y;
            let (c1, c2) = match map {
                None => (u[k], vbar),
                Some(m) => {
                    let (a, b, w) = m.uface.at(k);
                    (b * u[k], (vbar - a * u[k]) - w)
                }
            };
            cu[k] = c1 * dx + c2 * dy;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let ip = g.ip(i);
            let ubar = avg4(u[g.idx(i, j - 1)], u[g.idx(ip, j - 1)], u[g.idx(i, j)], u[g.idx(ip, j)]);
            let dx = (v[g.idx(ip, j)] - v[g.idx(g.im(i), j)]) * i2x;
            let dy = (v[k + nx] - v[k - nx]) * i2y;
            let (c1, c2) = match map {
                None => (ubar, v[k]),
                Some(m) => {
                    let (a, b, w) = m.vface.at(k);
                    (b * ubar, (v[k] - a * ubar) - w)
                }
            };
            cv[k] = c1 * dx + c2 * dy;
        }
    }
    (cu, cv)
}

/// `div(∇ū (A − I))` on the velocity faces.
pub fn viscous_correction(g: &Grid, u: &[f64], v: &[f64], m: &HanzawaMap) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx, g.hy);
    let mut du = vec![0.0; g.cells()];
    let mut dv = vec![0.0; g.v_len()];

    // Horizontal component: x-fluxes at cells, y-fluxes at corners.
    let mut fx = vec![0.0; g.cells()];
    for j in 0..ny {
        for i in 0..nx {
            let ip = g.ip(i);
            let d1 = (u[g.idx(ip, j)] - u[g.idx(i, j)]) / hx;
            let jj = j as i64;
            let d2 = ((u_at(g, u, i, jj + 1) - u_at(g, u, i, jj - 1)) + (u_at(g, u, ip, jj + 1) - u_at(g, u, ip, jj - 1)))
                / (4.0 * hy);
            let k = g.idx(i, j);
            let (e11, e12, _) = a_minus_i(m.cell.a[k], m.cell.b[k]);
            fx[k] = d1 * e11 + d2 * e12;
        }
    }
    let mut fy = vec![0.0; g.v_len()];
    for j in 0..=ny {
        for i in 0..nx {
            let (ip, im) = (g.ip(i), g.im(i));
            let jj = j as i64;
            let d2 = (u_at(g, u, i, jj) - u_at(g, u, i, jj - 1)) / hy;
            let d1 = ((u_at(g, u, ip, jj) - u_at(g, u, im, jj)) + (u_at(g, u, ip, jj - 1) - u_at(g, u, im, jj - 1)))
                / (4.0 * hx);
            let k = g.idx(i, j);
            let (_, e12, e22) = a_minus_i(m.corner.a[k], m.corner.b[k]);
            fy[k] = d1 * e12 + d2 * e22;
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            du[k] = (fx[k] - fx[g.idx(g.im(i), j)]) / hx + (fy[g.idx(i, j + 1)] - fy[k]) / hy;
        }
    }

    // Vertical component: x-fluxes at corners, y-fluxes at cells.
    let mut gx = vec![0.0; g.v_len()];
    for j in 1..ny {
        for i in 0..nx {
            let im = g.im(i);
            let d1 = (v[g.idx(i, j)] - v[g.idx(im, j)]) / hx;
            let d2 = ((v[g.idx(im, j + 1)] - v[g.idx(im, j - 1)]) + (v[g.idx(i, j + 1)] - v[g.idx(i, j - 1)])) / (4.0 * hy);
            let k = g.idx(i, j);
            let (e11, e12, _) = a_minus_i(m.corner.a[k], m.corner.b[k]);
            gx[k] = d1 * e11 + d2 * e12;
        }
    }
    let mut gy = vec![0.0; g.cells()];
    for j in 0..ny {
        for i in 0..nx {
            let (ip, im) = (g.ip(i), g.im(i));
            let d2 = (v[g.idx(i, j + 1)] - v[g.idx(i, j)]) / hy;
            let d1 = ((v[g.idx(ip, j)] - v[g.idx(im, j)]) + (v[g.idx(ip, j + 1)] - v[g.idx(im, j + 1)])) / (4.0 * hx);
            let k = g.idx(i, j);
            let (_, e12, e22) = a_minus_i(m.cell.a[k], m.cell.b[k]);
            gy[k] = d1 * e12 + d2 * e22;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            dv[k] = (gx[g.idx(g.ip(i), j)] - gx[k]) / hx + (gy[k] - gy[g.idx(i, j - 1)]) / hy;
        }
    }
    (du, dv)
}

/// Cell values of `div(B u)` (`div u` without a map), wall fluxes included.
pub fn transformed_divergence(g: &Grid, u: &[f64], v: &[f64], map: Option<&HanzawaMap>) -> Vec<f64> {
    let (nx, ny) = (g.nx, g.ny);
    let mut out = vec![0.0; g.cells()];
    match map {
        None => {
            for j in 0..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    out[k] = (u[g.idx(g.ip(i), j)] - u[k]) / g.hx + (v[g.idx(i, j + 1)] - v[k]) / g.hy;
                }
            }
        }
        Some(m) => {
            let fy = vertical_flux(g, u, v, m);
            for j in 0..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let kp = g.idx(g.ip(i), j);
                    out[k] = (m.b_u[kp] * u[kp] - m.b_u[k] * u[k]) / g.hx + (fy[g.idx(i, j + 1)] - fy[k]) / g.hy;
                }
            }
        }
    }
    out
}

/// `v − a·avg(u)` on vertical faces; on the walls the averaged `u` vanishes.
fn vertical_flux(g: &Grid, u: &[f64], v: &[f64], m: &HanzawaMap) -> Vec<f64> {
    let (nx, ny) = (g.nx, g.ny);
    let mut fy = v.to_vec();
    for j in 1..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let ip = g.ip(i);
            let ubar = avg4(u[g.idx(i, j - 1)], u[g.idx(ip, j - 1)], u[g.idx(i, j)], u[g.idx(ip, j)]);
            fy[k] = v[k] - m.a_v[k] * ubar;
        }
    }
    fy
}

/// Cell gradient of `φ` on interior faces, then `W⁻¹ Bᵀ` applied.
fn pressure_correction(g: &Grid, phi: &[f64], map: Option<&HanzawaMap>) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let mut gx = vec![0.0; g.cells()];
    let mut gy = vec![0.0; g.v_len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            gx[k] = (phi[k] - phi[g.idx(g.im(i), j)]) / g.hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            gy[k] = (phi[k] - phi[k - nx]) / g.hy;
        }
    }
    match map {
        None => (gx, gy),
        Some(m) => {
            // Bᵀ(gx, gy) = (b gx − avgᵀ(a gy), gy)
            let mut tu: Vec<f64> = (0..g.cells()).map(|k| m.b_u[k] * gx[k]).collect();
            for j in 1..ny {
                for i in 0..nx {
                    let k = g.idx(i, j);
                    let q = 0.25 * (m.a_v[k] * gy[k]);
                    let ip = g.ip(i);
                    tu[g.idx(i, j - 1)] -= q;
                    tu[g.idx(ip, j - 1)] -= q;
                    tu[g.idx(i, j)] -= q;
                    tu[g.idx(ip, j)] -= q;
                }
            }
            for (t, w) in tu.iter_mut().zip(&m.b_u) {
                *t /= w;
            }
            for k in nx..nx * ny {
                gy[k] /= m.j_v[k];
            }
            (tu, gy)
        }
    }
}

/// `−div(B W⁻¹ Bᵀ ∇φ)` with homogeneous wall fluxes; symmetric positive semi-definite.
fn pressure_operator(g: &Grid, phi: &[f64], out: &mut [f64], map: Option<&HanzawaMap>) {
    let (nx, ny) = (g.nx, g.ny);
    let (cu, mut cv) = pressure_correction(g, phi, map);
    for i in 0..nx {
        cv[i] = 0.0;
        cv[ny * nx + i] = 0.0;
    }
    let div = transformed_divergence(g, &cu, &cv, map);
    for (o, d) in out.iter_mut().zip(&div) {
        *o = -d;
    }
}

/// Velocity gradient `∇ū` (row convention, `G_ij = ∂_j u_i`) at cell centres.
pub fn velocity_gradient_cells(g: &Grid, u: &[f64], v: &[f64]) -> Vec<Mat2> {
    let (nx, ny) = (g.nx, g.ny);
    let mut out = Vec::with_capacity(g.cells());
    for j in 0..ny {
        for i in 0..nx {
            let (ip, im) = (g.ip(i), g.im(i));
            let jj = j as i64;
            let du1 = (u[g.idx(ip, j)] - u[g.idx(i, j)]) / g.hx;
            let du2 = ((u_at(g, u, i, jj + 1) - u_at(g, u, i, jj - 1)) + (u_at(g, u, ip, jj + 1) - u_at(g, u, ip, jj - 1)))
                / (4.0 * g.hy);
            let dv1 = ((v[g.idx(ip, j)] - v[g.idx(im, j)]) + (v[g.idx(ip, j + 1)] - v[g.idx(im, j + 1)])) / (4.0 * g.hx);
            let dv2 = (v[g.idx(i, j + 1)] - v[g.idx(i, j)]) / g.hy;
            out.push(Mat2::new(du1, du2, dv1, dv2));
        }
    }
    out
}

/// Velocity interpolated to cell centres.
pub fn velocity_cells(g: &Grid, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (g.nx, g.ny);
    let mut uc = vec![0.0; g.cells()];
    let mut vc = vec![0.0; g.cells()];
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            uc[k] = 0.5 * (u[k] + u[g.idx(g.ip(i), j)]);
            vc[k] = 0.5 * (v[k] + v[k + nx]);
        }
    }
    (uc, vc)
}

/// `½‖u‖²` with the map's volume weights (interior velocity unknowns).
pub fn kinetic_energy(g: &Grid, s: &FluidState, map: Option<&HanzawaMap>) -> f64 {
    let nx = g.nx;
    let mut e = 0.0;
    for k in 0..g.cells() {
        let w = map.map_or(1.0, |m| m.b_u[k]);
        e += w * s.u[k] * s.u[k];
    }
    for k in nx..nx * g.ny {
        let w = map.map_or(1.0, |m| m.j_v[k]);
        e += w * s.v[k] * s.v[k];
    }
    0.5 * e * g.cell_area()
}

/// `‖u‖_{L²(Ω_η)}`
pub fn velocity_l2(g: &Grid, s: &FluidState, map: Option<&HanzawaMap>) -> f64 {
    (2.0 * kinetic_energy(g, s, map)).sqrt()
}

/// `∫ ∇ū A : ∇ū`, the squared physical gradient norm on the deformed domain.
pub fn gradient_energy(g: &Grid, s: &FluidState, map: Option<&HanzawaMap>) -> f64 {
    let grads = velocity_gradient_cells(g, &s.u, &s.v);
    let mut acc = 0.0;
    for (k, gr) in grads.iter().enumerate() {
        acc += match map {
            None => gr.ddot(gr),
            Some(m) => (*gr * m.cell.a_matrix(k)).ddot(gr),
        };
    }
    acc * g.cell_area()
}

/// Physical Cauchy-type stress `−p I + 𝕋 + ν ∇u` on the top row of cells,
/// with `∇u = ∇ū (∇Ψ)⁻¹`. Its normal component reproduces the discrete wall
/// work of the scheme, so it is the traction handed to the shell.
pub fn interface_stress(g: &Grid, s: &FluidState, stress: &StressField, map: Option<&HanzawaMap>, nu: f64) -> Vec<Mat2> {
    let (nx, ny) = (g.nx, g.ny);
    let j = ny - 1;
    let grads = velocity_gradient_cells(g, &s.u, &s.v);
    (0..nx)
        .map(|i| {
            let k = g.idx(i, j);
            let grad = match map {
                None => grads[k],
                Some(m) => {
                    let bm = m.cell.b_matrix(k);
                    (grads[k] * bm).scale(1.0 / m.cell.b[k])
                }
            };
            let t = stress.at(k);
            t + grad.scale(nu) - Mat2::diag(s.p[k], s.p[k])
        })
        .collect()
}

/// Pointwise `h = (1−J)∂ₜū − J(∇ū) ∂ₜΨ⁻¹∘Ψ − (∇ū) B ū`.
pub fn correction_h_point(j: f64, b: &Mat2, w_inv: [f64; 2], u: [f64; 2], dudt: [f64; 2], grad: &Mat2) -> [f64; 2] {
    let gw = grad.mul_vec(w_inv);
    let gbu = grad.mul_vec(b.mul_vec(u));
    [
        (1.0 - j) * dudt[0] - j * gw[0] - gbu[0],
        (1.0 - j) * dudt[1] - j * gw[1] - gbu[1],
    ]
}

/// Pointwise `G = (I − A)∇ᵀū·ν − (I − B)(p̄ I − 𝕋̄)`.
///
/// The tensor is returned in the column convention (`(∇ᵀū)_ij = ∂_i u_j`,
/// divergence over the first index), the transpose of the row layout used by
/// the solver.
pub fn correction_g_point(a: &Mat2, b: &Mat2, grad: &Mat2, p: f64, t: &Mat2, nu: f64) -> Mat2 {
    let ia = Mat2::IDENTITY - *a;
    let ib = Mat2::IDENTITY - *b;
    (ia * grad.transpose()).scale(nu) - ib * (Mat2::diag(p, p) - *t)
}

/// Cell-centre values of `h` for a state, with `∂ₜū` supplied as cell arrays.
pub fn correction_h(g: &Grid, s: &FluidState, dudt: (&[f64], &[f64]), map: &HanzawaMap) -> Vec<[f64; 2]> {
    let grads = velocity_gradient_cells(g, &s.u, &s.v);
    let (uc, vc) = velocity_cells(g, &s.u, &s.v);
    (0..g.cells())
        .map(|k| {
            let (a, b, w) = map.cell.at(k);
            let bm = map.cell.b_matrix(k);
            let w_inv = [0.0, -w / b];
            let _ = a;
            correction_h_point(b, &bm, w_inv, [uc[k], vc[k]], [dudt.0[k], dudt.1[k]], &grads[k])
        })
        .collect()
}

/// Cell-centre values of `G`.
pub fn correction_g(g: &Grid, s: &FluidState, stress: &StressField, map: &HanzawaMap, nu: f64) -> Vec<Mat2> {
    let grads = velocity_gradient_cells(g, &s.u, &s.v);
    (0..g.cells())
        .map(|k| {
            correction_g_point(
                &map.cell.a_matrix(k),
                &map.cell.b_matrix(k),
                &grads[k],
                s.p[k],
                &stress.at(k),
                nu,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReferenceDomain;
    use std::f64::consts::PI;

    fn setup(nx: usize) -> (ReferenceDomain, Grid) {
        let d = ReferenceDomain::channel(nx).unwrap();
        (d, d.grid())
    }

    #[test]
    fn rest_state_is_fixed_point() {
        let (d, g) = setup(16);
        let solver = FluidSolver::new(g, 1.0, 1e-2).unwrap();
        let s = FluidState::rest(&g);
        let t = StressField::zeros(&g);
        let (n, _) = solver.step(&s, &t, None, &[0.0; 16]).unwrap();
        assert!(n.u.iter().chain(&n.v).chain(&n.p).all(|&x| x == 0.0));
        let m = HanzawaMap::identity(&d, 0.0).unwrap();
        let (n, _) = solver.step(&s, &t, Some(&m), &[0.0; 16]).unwrap();
        assert!(n.u.iter().chain(&n.v).chain(&n.p).all(|&x| x == 0.0));
    }

    #[test]
    fn constant_velocity_has_zero_transformed_divergence() {
        let (d, g) = setup(32);
        let eta: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.05 * (PI * x).sin()).collect();
        let m = HanzawaMap::new(&d, &eta, &vec![0.0; 32], 0.0).unwrap();
        // u = const: the mimetic metrics make ∂₁b − ∂₂a vanish exactly.
        let u = vec![0.7; g.cells()];
        let v = vec![0.0; g.v_len()];
        let div = transformed_divergence(&g, &u, &v, Some(&m));
        // The top row sees the wall flux, where the averaged ū is taken as zero.
        for j in 1..g.ny - 1 {
            for i in 0..g.nx {
                assert!(div[g.idx(i, j)].abs() < 1e-12, "{}", div[g.idx(i, j)]);
            }
        }
    }

    #[test]
    fn shear_mode_decays_at_heat_rate() {
        let (_, g) = setup(32);
        let nu = 0.5;
        let dt = 1e-3;
        let solver = FluidSolver::new(g, nu, dt).unwrap();
        let k = PI / g.ly;
        let mut s = FluidState::rest(&g);
        s.u = g.sample_u(|_, y| (k * y).sin());
        let t = StressField::zeros(&g);
        let steps = 100;
        for _ in 0..steps {
            s = solver.step(&s, &t, None, &vec![0.0; g.nx]).unwrap().0;
        }
        let tt = steps as f64 * dt;
        let want = (-nu * k * k * tt).exp();
        let got = s.u[g.idx(3, g.ny / 2)] / (k * g.yc(g.ny / 2)).sin();
        assert!((got - want).abs() < 5e-3, "{got} vs {want}");
    }

    #[test]
    fn correction_examples() {
        let grad = Mat2::new(0.3, -0.2, 0.5, -0.3);
        let u = [0.4, -1.1];
        // identity map
        let h = correction_h_point(1.0, &Mat2::IDENTITY, [0.0, 0.0], u, [2.0, 3.0], &grad);
        let adv = grad.mul_vec(u);
        assert_eq!(h, [-adv[0], -adv[1]]);
        assert_eq!(correction_h_point(1.3, &Mat2::new(1.3, 0.0, 0.2, 1.0), [0.0, 0.1], [0.0, 0.0], [0.0, 0.0], &Mat2::ZERO), [0.0, 0.0]);
        let g0 = correction_g_point(&Mat2::IDENTITY, &Mat2::IDENTITY, &grad, 2.0, &Mat2::sym(1.0, 2.0, 3.0), 0.7);
        assert_eq!(g0, Mat2::ZERO);
        let (a, b) = (0.1, 1.2);
        let bm = Mat2::new(b, 0.0, -a, 1.0);
        let am = Mat2::sym(b, -a, (1.0 + a * a) / b);
        let p0 = 1.5;
        let gp = correction_g_point(&am, &bm, &Mat2::ZERO, p0, &Mat2::ZERO, 1.0);
        assert_eq!(gp, (Mat2::IDENTITY - bm).scale(-p0));
    }
}
