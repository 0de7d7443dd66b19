//! Extra-stress transport on the reference grid.
//!
//! In reference coordinates the stress moves with
//! `V = (∇Ψ)⁻¹(ū − ∂ₜΨ) = (u₁, (u₂ − a u₁ − w)/b)` and obeys
//!
//! ```text
//! ∂ₜ𝕋̄ + V·∇𝕋̄ = W𝕋̄ + 𝕋̄Wᵀ − ε(1 − Δ)𝕋̄ + ε[(1/J) div(∇𝕋̄(A − I)) + (1/J − 1)Δ𝕋̄],
//! ```
//!
//! where `W` is the vorticity of the physical gradient `∇ū B / J`. Both the
//! damped (`ε > 0`) and the pure-transport (`ε = 0`) systems share one
//! semi-Lagrangian transport with exact per-cell rotation. The `ε` part adds
//! the metric correction explicitly and then applies `exp(−ε dt (1 − Δ_h))`
//! exactly in the Neumann eigenbasis.

use crate::algebra::{conjugate, corotation_unchecked, planar_rotation, vorticity_tensor, Mat2};
use crate::error::{Error, Result};
use crate::fluid::{velocity_cells, velocity_gradient_cells, FluidState};
use crate::geometry::HanzawaMap;
use crate::grid::Grid;
use crate::interp::{bicubic, bilinear_with_walls, clamp_y};
use crate::spectral::ModalBasis2d;

/// Symmetric stress per cell, stored as its three independent entries.
#[derive(Clone, Debug, PartialEq)]
pub struct StressField {
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t22: Vec<f64>,
    pub t: f64,
    pub eps: f64,
}

impl StressField {
    pub fn zeros(g: &Grid) -> Self {
        let n = g.cells();
        Self {
            t11: vec![0.0; n],
            t12: vec![0.0; n],
            t22: vec![0.0; n],
            t: 0.0,
            eps: 0.0,
        }
    }

    pub fn constant(g: &Grid, m: &Mat2) -> Self {
        let n = g.cells();
        Self {
            t11: vec![m.get(0, 0); n],
            t12: vec![0.5 * (m.get(0, 1) + m.get(1, 0)); n],
            t22: vec![m.get(1, 1); n],
            t: 0.0,
            eps: 0.0,
        }
    }

    /// Samples `f(x, y)` at the cell centres; the symmetric part is stored.
    pub fn from_fn(g: &Grid, f: impl Fn(f64, f64) -> Mat2) -> Self {
        let mut s = Self::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                s.set(g.idx(i, j), &f(g.xc(i), g.yc(j)));
            }
        }
        s
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn len(&self) -> usize {
        self.t11.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t11.is_empty()
    }

    #[inline]
    pub fn at(&self, k: usize) -> Mat2 {
        Mat2::sym(self.t11[k], self.t12[k], self.t22[k])
    }

    #[inline]
    pub fn set(&mut self, k: usize, m: &Mat2) {
        self.t11[k] = m.get(0, 0);
        self.t12[k] = 0.5 * (m.get(0, 1) + m.get(1, 0));
        self.t22[k] = m.get(1, 1);
    }

    /// Cell-wise Frobenius norms.
    pub fn frobenius(&self) -> Vec<f64> {
        (0..self.len()).map(|k| frob(self.t11[k], self.t12[k], self.t22[k])).collect()
    }

    pub fn max_frobenius(&self) -> f64 {
        self.frobenius().into_iter().fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.t11.iter().chain(&self.t12).chain(&self.t22).all(|x| x.is_finite())
    }

    fn components(&self) -> [&Vec<f64>; 3] {
        [&self.t11, &self.t12, &self.t22]
    }

    fn components_mut(&mut self) -> [&mut Vec<f64>; 3] {
        [&mut self.t11, &mut self.t12, &mut self.t22]
    }
}

#[inline]
fn frob(a: f64, b: f64, c: f64) -> f64 {
    (a * a + 2.0 * b * b + c * c).sqrt()
}

/// `J`-weighted discrete `L^q` norm of `|𝕋|_F`; `q = ∞` gives the maximum.
pub fn lq_norm(g: &Grid, t: &StressField, q: f64, map: Option<&HanzawaMap>) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidArgument(format!("L^q exponent must be ≥ 1, got {q}")));
    }
    let f = t.frobenius();
    if q.is_infinite() {
        return Ok(f.into_iter().fold(0.0, f64::max));
    }
    let mut acc = 0.0;
    for (k, v) in f.iter().enumerate() {
        let w = map.map_or(1.0, |m| m.j_cell[k]);
        acc += w * v.powf(q);
    }
    Ok((acc * g.cell_area()).powf(1.0 / q))
}

/// `‖𝕋‖_{L²(Ω_η)}`
pub fn l2_norm(g: &Grid, t: &StressField, map: Option<&HanzawaMap>) -> f64 {
    lq_norm(g, t, 2.0, map).expect("q = 2 is valid")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SoluteInfo {
    /// characteristic feet that left the channel and were clamped to a wall
    pub clamped_feet: usize,
}

/// Stress stepper for a fixed grid, damping `ε` and step `dt`.
#[derive(Clone, Debug)]
pub struct SoluteSolver {
    pub grid: Grid,
    pub eps: f64,
    pub dt: f64,
    modes: Option<ModalBasis2d>,
    /// `exp(−ε dt (1 − λ))` per mode
    decay: Vec<f64>,
}

impl SoluteSolver {
    pub fn new(grid: Grid, eps: f64, dt: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("ε must be finite and ≥ 0, got {eps}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let modes = (eps > 0.0).then(|| ModalBasis2d::new(grid.nx, grid.ny, grid.hx, grid.hy));
        let decay = modes.as_ref().map(|m| m.factors(|lam| (-eps * dt * (1.0 - lam)).exp())).unwrap_or_default();
        Ok(Self { grid, eps, dt, modes, decay })
    }

    pub fn step(&self, t: &StressField, fluid: &FluidState, map: Option<&HanzawaMap>) -> Result<(StressField, SoluteInfo)> {
        let g = &self.grid;
        if t.len() != g.cells() || fluid.u.len() != g.cells() || fluid.v.len() != g.v_len() {
            return Err(Error::InvalidArgument("solute inputs do not match the grid".into()));
        }
        let (mut out, info) = transport_rotate(g, t, fluid, map, self.dt);
        if let Some(modes) = &self.modes {
            let eps = self.eps;
            if let Some(m) = map.filter(|m| !m.is_identity()) {
                let corr = metric_diffusion_correction(g, t, m);
                for (dst, c) in out.components_mut().into_iter().zip(corr.iter()) {
                    for (d, v) in dst.iter_mut().zip(c) {
                        *d += self.dt * eps * v;
                    }
                }
            }
            for c in out.components_mut() {
                modes.apply_factors(c, &self.decay);
            }
        }
        out.t = t.t + self.dt;
        out.eps = self.eps;
        if !out.is_finite() {
            return Err(Error::Numerical(format!("non-finite stress at t = {}", out.t)));
        }
        Ok((out, info))
    }
}

/// One step of the damped system (`ε > 0`).
pub fn solute_step_diffusive(
    t: &StressField,
    fluid: &FluidState,
    map: Option<&HanzawaMap>,
    grid: &Grid,
    eps: f64,
    dt: f64,
) -> Result<StressField> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("the damped step needs ε > 0, got {eps}")));
    }
    Ok(SoluteSolver::new(*grid, eps, dt)?.step(t, fluid, map)?.0)
}

/// One step of the pure-transport system (`ε = 0`).
pub fn solute_step_hyperbolic(
    u: &StressField,
    fluid: &FluidState,
    map: Option<&HanzawaMap>,
    grid: &Grid,
    dt: f64,
) -> Result<(StressField, SoluteInfo)> {
    SoluteSolver::new(*grid, 0.0, dt)?.step(u, fluid, map)
}

/// Reference-frame transport velocity at cell centres.
pub fn transport_velocity(g: &Grid, fluid: &FluidState, map: Option<&HanzawaMap>) -> (Vec<f64>, Vec<f64>) {
    let (uc, mut vc) = velocity_cells(g, &fluid.u, &fluid.v);
    if let Some(m) = map {
        for k in 0..g.cells() {
            let (a, b, w) = m.cell.at(k);
            vc[k] = ((vc[k] - a * uc[k]) - w) / b;
        }
    }
    (uc, vc)
}

/// Vorticity `W` of the physical velocity gradient at cell centres.
pub fn cell_vorticity(g: &Grid, fluid: &FluidState, map: Option<&HanzawaMap>) -> Vec<Mat2> {
    let grads = velocity_gradient_cells(g, &fluid.u, &fluid.v);
    grads
        .iter()
        .enumerate()
        .map(|(k, gr)| match map {
            None => vorticity_tensor(gr),
            Some(m) => vorticity_tensor(&(*gr * m.cell.b_matrix(k)).scale(1.0 / m.cell.b[k])),
        })
        .collect()
}

/// Semi-Lagrangian transport (RK2 feet, clipped Catmull-Rom) followed by the
/// exact rotation `R 𝕋 Rᵀ`, `Ṙ = W R`, over the step.
fn transport_rotate(g: &Grid, t: &StressField, fluid: &FluidState, map: Option<&HanzawaMap>, dt: f64) -> (StressField, SoluteInfo) {
    let (nx, ny) = (g.nx, g.ny);
    let (vx, vy) = transport_velocity(g, fluid, map);
    let omega = cell_vorticity(g, fluid, map);
    let still = vx.iter().chain(&vy).all(|&x| x == 0.0);
    let mut out = t.clone();
    let mut info = SoluteInfo::default();
    let [c11, c12, c22] = t.components();
    let frob_in = t.frobenius();
    let (sx, sy) = (dt / g.hx, dt / g.hy);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.idx(i, j);
            let mut m = if still {
                t.at(k)
            } else {
                let (fx, fy) = (i as f64, j as f64);
                let (mx, my) = (fx - 0.5 * sx * vx[k], fy - 0.5 * sy * vy[k]);
                let (my, _) = clamp_y(my, ny);
                let ux = bilinear_with_walls(&vx, nx, ny, mx, my, 0.0);
                let uy = bilinear_with_walls(&vy, nx, ny, mx, my, 0.0);
                let (px, py) = (fx - sx * ux, fy - sy * uy);
                let (py, clamped) = clamp_y(py, ny);
                if clamped {
                    info.clamped_feet += 1;
                }
                let smp = bicubic([c11.as_slice(), c12, c22], nx, ny, px, py);
                let mut val = smp.value;
                for (c, comp) in val.iter_mut().zip([c11, c12, c22]) {
                    let (lo, hi) = smp
                        .neighbours
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &n| (lo.min(comp[n]), hi.max(comp[n])));
                    *c = c.clamp(lo, hi);
                }
                let cap = smp.neighbours.iter().fold(0.0f64, |a, &n| a.max(frob_in[n]));
                let f = frob(val[0], val[1], val[2]);
                if f > cap {
                    let s = cap / f;
                    for c in &mut val {
                        *c *= s;
                    }
                }
                Mat2::sym(val[0], val[1], val[2])
            };
            let w12 = omega[k].get(0, 1);
            if w12 != 0.0 {
                m = conjugate(&planar_rotation(-dt * w12), &m);
            }
            out.set(k, &m);
        }
    }
    (out, info)
}

/// Mirrored cell lookup in y, periodic in x.
#[inline]
fn cell(g: &Grid, f: &[f64], i: usize, j: i64) -> f64 {
    f[g.idx(i, j.clamp(0, g.ny as i64 - 1) as usize)]
}

/// `(1/J) div(∇𝕋̄(A − I)) + (1/J − 1)Δ_h 𝕋̄` per component, zero conormal wall flux.
pub fn metric_diffusion_correction(g: &Grid, t: &StressField, m: &HanzawaMap) -> [Vec<f64>; 3] {
    let (nx, ny) = (g.nx, g.ny);
    let (hx, hy) = (g.hx, g.hy);
    let one = |f: &[f64]| -> Vec<f64> {
        // x-faces at (i hx, yc_j) use the u-face metric samples.
        let mut fx = vec![0.0; g.cells()];
        for j in 0..ny {
            for i in 0..nx {
                let im = g.im(i);
                let jj = j as i64;
                let d1 = (f[g.idx(i, j)] - f[g.idx(im, j)]) / hx;
                let d2 = ((cell(g, f, i, jj + 1) - cell(g, f, i, jj - 1)) + (cell(g, f, im, jj + 1) - cell(g, f, im, jj - 1)))
                    / (4.0 * hy);
                let k = g.idx(i, j);
                let (a, b, _) = m.uface.at(k);
                fx[k] = d1 * (b - 1.0) + d2 * (-a);
            }
        }
        // y-faces at (xc_i, j hy); wall rows carry zero flux.
        let mut fy = vec![0.0; g.v_len()];
        for j in 1..ny {
            for i in 0..nx {
                let (ip, im) = (g.ip(i), g.im(i));
                let jj = j as i64;
                let d2 = (f[g.idx(i, j)] - f[g.idx(i, j - 1)]) / hy;
                let d1 = ((cell(g, f, ip, jj) - cell(g, f, im, jj)) + (cell(g, f, ip, jj - 1) - cell(g, f, im, jj - 1)))
                    / (4.0 * hx);
                let k = g.idx(i, j);
                let (a, b, _) = m.vface.at(k);
                fy[k] = d1 * (-a) + d2 * ((1.0 + a * a) / b - 1.0);
            }
        }
        let mut out = vec![0.0; g.cells()];
        for j in 0..ny {
            for i in 0..nx {
                let k = g.idx(i, j);
                let jj = j as i64;
                let div = (fx[g.idx(g.ip(i), j)] - fx[k]) / hx + (fy[g.idx(i, j + 1)] - fy[k]) / hy;
                let lap = (f[g.idx(g.ip(i), j)] - 2.0 * f[k] + f[g.idx(g.im(i), j)]) / (hx * hx)
                    + (cell(g, f, i, jj + 1) - 2.0 * f[k] + cell(g, f, i, jj - 1)) / (hy * hy);
                let jac = m.cell.b[k];
                out[k] = div / jac + (1.0 / jac - 1.0) * lap;
            }
        }
        out
    };
    [one(&t.t11), one(&t.t12), one(&t.t22)]
}

/// The five terms of `H`, evaluated at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HTerms {
    /// `(1 − J)∂ₜ𝕋̄`
    pub time: Mat2,
    /// `−J ∇𝕋̄·(∂ₜΨ⁻¹∘Ψ)`
    pub mesh: Mat2,
    /// `W(∇ū(B − I))𝕋̄`
    pub rotation_left: Mat2,
    /// `𝕋̄ W(∇ū(B − I))ᵀ`
    pub rotation_right: Mat2,
    /// `((I − B)ū)·∇𝕋̄`
    pub transport: Mat2,
}

impl HTerms {
    pub fn total(&self) -> Mat2 {
        self.time + self.mesh + self.rotation_left + self.rotation_right + self.transport
    }
}

/// Pointwise `H`.
///
/// `grad_u` is `∇ū` in the row convention and `grad_t = [∂₁𝕋̄, ∂₂𝕋̄]`. The
/// vorticity terms use `W(∇ū(B − I))`, which is what remains of the physical
/// corotation `J·W(∇ū B/J)` after `W(∇ū)` has been moved to the left-hand side.
pub fn correction_h_point(
    j: f64,
    b: &Mat2,
    w_inv: [f64; 2],
    u: [f64; 2],
    grad_u: &Mat2,
    t: &Mat2,
    dtdt: &Mat2,
    grad_t: [Mat2; 2],
) -> HTerms {
    let ib = Mat2::IDENTITY - *b;
    let wb = vorticity_tensor(&(*grad_u * (*b - Mat2::IDENTITY)));
    let r = corotation_unchecked(&wb, t);
    let left = wb * *t;
    let right = r - left;
    let c = ib.mul_vec(u);
    HTerms {
        time: dtdt.scale(1.0 - j),
        mesh: (grad_t[0].scale(w_inv[0]) + grad_t[1].scale(w_inv[1])).scale(-j),
        rotation_left: left,
        rotation_right: right,
        transport: grad_t[0].scale(c[0]) + grad_t[1].scale(c[1]),
    }
}

/// Cell-centre `H` for a stress, its time derivative estimate and a velocity.
pub fn correction_h(g: &Grid, t: &StressField, dtdt: &StressField, fluid: &FluidState, m: &HanzawaMap) -> Vec<HTerms> {
    let grads = velocity_gradient_cells(g, &fluid.u, &fluid.v);
    let (uc, vc) = velocity_cells(g, &fluid.u, &fluid.v);
    let [c11, c12, c22] = t.components();
    let d = |f: &[f64], i: usize, j: usize| -> (f64, f64) {
        let jj = j as i64;
        (
            (f[g.idx(g.ip(i), j)] - f[g.idx(g.im(i), j)]) / (2.0 * g.hx),
            (cell(g, f, i, jj + 1) - cell(g, f, i, jj - 1)) / (2.0 * g.hy),
        )
    };
    let mut out = Vec::with_capacity(g.cells());
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let (a, b, w) = m.cell.at(k);
            let _ = a;
            let (d11, d12, d22) = (d(c11, i, j), d(c12, i, j), d(c22, i, j));
            let gt = [Mat2::sym(d11.0, d12.0, d22.0), Mat2::sym(d11.1, d12.1, d22.1)];
            out.push(correction_h_point(
                b,
                &m.cell.b_matrix(k),
                [0.0, -w / b],
                [uc[k], vc[k]],
                &grads[k],
                &t.at(k),
                &dtdt.at(k),
                gt,
            ));
        }
    }
    out
}
