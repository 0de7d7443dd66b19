//! Spatially homogeneous Fokker–Planck solver in the conformation variable
//! and the moment-closure check.
//!
//! `∂ₜf + div_q(Wq f) = D div_q(M∇_q(f/M))` on the truncated ball `|q| ≤ R_q`,
//! with zero flux through the ball boundary. `D = 1/(4λ)` makes the second
//! moment relax at rate `1/(2λ)`.

use std::sync::Arc;

use crate::algebra::{conjugate, planar_rotation, Mat2};
use crate::error::{Error, Result};

/// Relaxation time matching a center-of-mass diffusion `ε`.
pub fn lambda_from_eps(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("ε must be positive and finite, got {eps}")));
    }
    Ok(1.0 / (2.0 * eps))
}

/// Cartesian cells of width `h` covering `[−R_q, R_q]²`; a cell is active
/// if its centre lies in the ball. Quadrature is the midpoint rule over
/// active cells.
#[derive(Clone, Debug, PartialEq)]
pub struct QSpace {
    pub r_q: f64,
    pub nq: usize,
    pub h: f64,
    pub active: Vec<bool>,
    /// Maxwellian, normalized by the same quadrature
    pub m: Vec<f64>,
    /// `∫ M q₁² dq`
    pub sigma2: f64,
}

impl QSpace {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nq + i
    }

    pub fn centre(&self, i: usize) -> f64 {
        -self.r_q + (i as f64 + 0.5) * self.h
    }

    pub fn len(&self) -> usize {
        self.nq * self.nq
    }

    pub fn is_empty(&self) -> bool {
        self.nq == 0
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.active).filter(|(_, &a)| a).map(|(v, _)| v).sum::<f64>() * self.h * self.h
    }

    /// `∫ f q⊗q dq`
    pub fn second_moment(&self, f: &[f64]) -> Mat2 {
        let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
        for j in 0..self.nq {
            let q2 = self.centre(j);
            for i in 0..self.nq {
                let k = self.idx(i, j);
                if !self.active[k] {
                    continue;
                }
                let q1 = self.centre(i);
                s11 += f[k] * q1 * q1;
                s12 += f[k] * q1 * q2;
                s22 += f[k] * q2 * q2;
            }
        }
        let w = self.h * self.h;
        Mat2::sym(s11 * w, s12 * w, s22 * w)
    }

    /// Samples `g(q)` on active cells, zero elsewhere.
    pub fn sample(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for j in 0..self.nq {
            for i in 0..self.nq {
                let k = self.idx(i, j);
                if self.active[k] {
                    out[k] = g(self.centre(i), self.centre(j));
                }
            }
        }
        out
    }
}

/// Maxwellian `exp(−½|q|²)` on the ball, normalized to unit quadrature mass.
pub fn maxwellian_grid(r_q: f64, nq: usize) -> Result<QSpace> {
    if !(r_q > 0.0 && r_q.is_finite()) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {r_q}")));
    }
    if nq < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 cells per direction, got {nq}")));
    }
    let h = 2.0 * r_q / nq as f64;
    let c = |i: usize| -r_q + (i as f64 + 0.5) * h;
    let mut active = vec![false; nq * nq];
    for j in 0..nq {
        for i in 0..nq {
            active[j * nq + i] = c(i).hypot(c(j)) <= r_q;
        }
    }
    let mut q = QSpace {
        r_q,
        nq,
        h,
        active,
        m: Vec::new(),
        sigma2: 0.0,
    };
    let raw = q.sample(|a, b| (-0.5 * (a * a + b * b)).exp());
    let z = q.integrate(&raw);
    q.m = raw.iter().map(|v| v / z).collect();
    q.sigma2 = q.second_moment(&q.m).get(0, 0);
    Ok(q)
}

#[derive(Clone, Debug)]
pub struct KineticState {
    pub space: Arc<QSpace>,
    pub f: Vec<f64>,
    pub lambda: f64,
    /// antisymmetric, constant in time
    pub w: Mat2,
    pub t: f64,
}

impl KineticState {
    pub fn new(space: Arc<QSpace>, f: Vec<f64>, lambda: f64, w: Mat2) -> Result<Self> {
        if f.len() != space.len() {
            return Err(Error::InvalidArgument(format!("density has {} values, q-grid has {}", f.len(), space.len())));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("relaxation time must be positive, got {lambda}")));
        }
        if !w.is_antisymmetric(1e-14) {
            return Err(Error::InvalidArgument("velocity-gradient surrogate must be antisymmetric".into()));
        }
        if let Some(v) = f.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("density must be nonnegative, found {v}")));
        }
        let mut f = f;
        for (v, &a) in f.iter_mut().zip(&space.active) {
            if !a {
                *v = 0.0;
            }
        }
        Ok(Self { space, f, lambda, w, t: 0.0 })
    }

    /// `ρM`.
    pub fn equilibrium(space: Arc<QSpace>, rho: f64, lambda: f64, w: Mat2) -> Result<Self> {
        let f = space.m.iter().map(|m| rho * m).collect();
        Self::new(space, f, lambda, w)
    }

    /// Centred Gaussian with covariance `Σ`, scaled to quadrature mass `rho`.
    pub fn gaussian(space: Arc<QSpace>, rho: f64, cov: &Mat2, lambda: f64, w: Mat2) -> Result<Self> {
        let inv = cov
            .inverse()
            .filter(|_| cov.det() > 0.0 && cov.get(0, 0) > 0.0 && cov.is_symmetric())
            .ok_or_else(|| Error::InvalidArgument("covariance must be symmetric positive definite".into()))?;
        let raw = space.sample(|a, b| {
            let v = inv.mul_vec([a, b]);
            (-0.5 * (a * v[0] + b * v[1])).exp()
        });
        let z = space.integrate(&raw);
        let f = raw.iter().map(|v| rho * v / z).collect();
        Self::new(space, f, lambda, w)
    }

    pub fn mass(&self) -> f64 {
        self.space.integrate(&self.f)
    }

    /// `T̂ = ∫ f q⊗q dq`
    pub fn stress_moment(&self) -> Mat2 {
        self.space.second_moment(&self.f)
    }

    /// `𝕋 = T̂ − kρ𝕀` with `k = σ²`.
    pub fn extra_stress(&self) -> Mat2 {
        let kr = self.space.sigma2 * self.mass();
        self.stress_moment() - Mat2::sym(kr, 0.0, kr)
    }

    /// Largest admissible `dt` for the explicit step.
    pub fn max_dt(&self) -> f64 {
        let s = &self.space;
        let vmax = s.r_q * (self.w.get(0, 1).abs() + self.w.get(1, 0).abs()).max(1e-300);
        let d = 1.0 / (4.0 * self.lambda);
        // M_face / M_cell ≤ e^{R h / 2} bounds the diffusive weights
        let ratio = (0.5 * s.r_q * s.h).exp();
        let diff = 0.45 * s.h * s.h / (4.0 * d * ratio);
        (0.45 * s.h / vmax).min(diff)
    }
}

/// Monotonized-central slope limiter.
fn mc_limiter(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        a.signum() * (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs())
    }
}

/// Right-hand side `−div(Wq f) + D div(M∇(f/M))`: MUSCL with MC limiter upwind drift,
/// Maxwellian-weighted central diffusion with geometric-mean face weights.
fn rhs(s: &KineticState, f: &[f64]) -> Vec<f64> {
    let sp = &s.space;
    let (n, h) = (sp.nq, sp.h);
    let d = 1.0 / (4.0 * s.lambda);
    let mut out = vec![0.0; f.len()];
    let act = |i: i64, j: i64| i >= 0 && j >= 0 && (i as usize) < n && (j as usize) < n && sp.active[j as usize * n + i as usize];
    let val = |i: i64, j: i64| if act(i, j) { f[j as usize * n + i as usize] } else { 0.0 };
    for dir in 0..2 {
        // faces between (i, j) and its +dir neighbour
        for j in 0..n as i64 {
            for i in 0..n as i64 {
                let (di, dj) = if dir == 0 { (1, 0) } else { (0, 1) };
                let (i1, j1) = (i + di, j + dj);
                if !act(i, j) || !act(i1, j1) {
                    continue;
                }
                let ka = j as usize * n + i as usize;
                let kb = j1 as usize * n + i1 as usize;
                // face centre
                let qf = if dir == 0 {
                    [sp.centre(i as usize) + 0.5 * h, sp.centre(j as usize)]
                } else {
                    [sp.centre(i as usize), sp.centre(j as usize) + 0.5 * h]
                };
                let vel = s.w.mul_vec(qf)[dir];
                let (fa, fb) = (f[ka], f[kb]);
                let slope = |k0: (i64, i64), k1: (i64, i64), k2: (i64, i64)| {
                    if act(k0.0, k0.1) && act(k2.0, k2.1) {
                        mc_limiter(val(k1.0, k1.1) - val(k0.0, k0.1), val(k2.0, k2.1) - val(k1.0, k1.1))
                    } else {
                        0.0
                    }
                };
                let upwind = if vel >= 0.0 {
                    fa + 0.5 * slope((i - di, j - dj), (i, j), (i1, j1))
                } else {
                    fb - 0.5 * slope((i, j), (i1, j1), (i1 + di, j1 + dj))
                };
                let (ma, mb) = (sp.m[ka], sp.m[kb]);
                let flux = vel * upwind - d * (ma * mb).sqrt() * (fb / mb - fa / ma) / h;
                out[ka] -= flux / h;
                out[kb] += flux / h;
            }
        }
    }
    out
}

/// One SSP-RK2 step. Mass is conserved to round-off; negativity below
/// `−1e-12` relative to the peak is reported as a numerical error.
pub fn fokker_planck_step(state: &KineticState, dt: f64) -> Result<KineticState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let lim = state.max_dt();
    if dt > lim {
        return Err(Error::InvalidArgument(format!("time step {dt} exceeds the stability limit {lim}")));
    }
    let k1 = rhs(state, &state.f);
    let f1: Vec<f64> = state.f.iter().zip(&k1).map(|(f, k)| f + dt * k).collect();
    let k2 = rhs(state, &f1);
    let f2: Vec<f64> = state
        .f
        .iter()
        .zip(&f1)
        .zip(&k2)
        .map(|((f0, f1), k)| 0.5 * f0 + 0.5 * (f1 + dt * k))
        .collect();
    let peak = f2.iter().copied().fold(0.0, f64::max);
    if let Some((k, v)) = f2.iter().enumerate().find(|(_, v)| **v < -1e-12 * peak.max(1e-300)) {
        return Err(Error::Numerical(format!("kinetic density went negative ({v}) at cell {k}")));
    }
    Ok(KineticState {
        f: f2.into_iter().map(|v| v.max(0.0)).collect(),
        t: state.t + dt,
        ..state.clone()
    })
}

/// `e^{−t/(2λ)} R(t) 𝕋₀ R(t)ᵀ` with `R(t) = exp(tW)`.
pub fn closure_oracle(t0: &Mat2, w: &Mat2, lambda: f64, t: f64) -> Mat2 {
    // exp(tW) for W = [[0, ω], [−ω, 0]] is the rotation by −ωt
    let r = planar_rotation(-w.get(0, 1) * t);
    conjugate(&r, t0).scale((-t / (2.0 * lambda)).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosureSample {
    pub t: f64,
    pub stress: Mat2,
    pub oracle: Mat2,
    pub residual: Mat2,
    /// `|residual|_F / |𝕋₀|_F`
    pub res_frob_rel: f64,
    /// `|𝕋 − oracle|_F / |𝕋₀|_F`
    pub oracle_rel: f64,
}

/// `d𝕋/dt − (W𝕋 + 𝕋Wᵀ − 𝕋/(2λ))` along a sampled moment series, with
/// second-order differences (one-sided at the ends).
pub fn closure_residual(times: &[f64], stress: &[Mat2], w: &Mat2, lambda: f64) -> Result<Vec<ClosureSample>> {
    let n = times.len();
    if n != stress.len() || n < 3 {
        return Err(Error::InvalidArgument("closure residual needs at least three matched samples".into()));
    }
    let norm0 = stress[0].frobenius();
    let scale = if norm0 > 0.0 { norm0 } else { 1.0 };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (a, b, c) = match k {
            0 => (0, 1, 2),
            k if k == n - 1 => (n - 3, n - 2, n - 1),
            k => (k - 1, k, k + 1),
        };
        // derivative of the quadratic through three samples, at times[k]
        let (ta, tb, tc) = (times[a], times[b], times[c]);
        let x = times[k];
        let la = ((x - tb) + (x - tc)) / ((ta - tb) * (ta - tc));
        let lb = ((x - ta) + (x - tc)) / ((tb - ta) * (tb - tc));
        let lc = ((x - ta) + (x - tb)) / ((tc - ta) * (tc - tb));
        let dtdt = stress[a].scale(la) + stress[b].scale(lb) + stress[c].scale(lc);
        let s = stress[k];
        let rhs = *w * s + s * w.transpose() - s.scale(1.0 / (2.0 * lambda));
        let residual = dtdt - rhs;
        let oracle = closure_oracle(&stress[0], w, lambda, x - times[0]);
        out.push(ClosureSample {
            t: x,
            stress: s,
            oracle,
            residual,
            res_frob_rel: residual.frobenius() / scale,
            oracle_rel: (s - oracle).frobenius() / scale,
        });
    }
    Ok(out)
}

/// Runs the kinetic solve to `horizon`, recording `𝕋` every `every` steps.
pub fn kinetic_trajectory(initial: &KineticState, dt: f64, horizon: f64, every: usize) -> Result<(Vec<f64>, Vec<Mat2>, KineticState)> {
    let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
    let every = every.max(1);
    let mut s = initial.clone();
    let (mut ts, mut ms) = (vec![s.t], vec![s.extra_stress()]);
    for n in 1..=steps {
        s = fokker_planck_step(&s, dt)?;
        if n % every == 0 || n == steps {
            ts.push(s.t);
            ms.push(s.extra_stress());
        }
    }
    Ok((ts, ms, s))
}
