//! Periodic viscoelastic shell `η_tt − γ η_tyy + η_yyyy = g` with a modally
//! exact time integrator.

use rustfft::num_complex::Complex64;

use crate::algebra::Mat2;
use crate::error::{Error, Result};
use crate::spectral::Periodic1d;

#[derive(Clone, Debug, PartialEq)]
pub struct ShellState {
    pub eta: Vec<f64>,
    pub eta_dot: Vec<f64>,
    pub t: f64,
}

impl ShellState {
    pub fn rest(n: usize) -> Self {
        Self {
            eta: vec![0.0; n],
            eta_dot: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn sup_eta(&self) -> f64 {
        self.eta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Exact propagator of `ÿ + c ẏ + ω² y = 0` over `dt`, as a 2×2 matrix acting on `(y, ẏ)`.
pub fn damped_oscillator_propagator(c: f64, omega2: f64, dt: f64) -> Mat2 {
    let mu = 0.5 * c;
    let disc = mu * mu - omega2;
    let scale = mu * mu + omega2;
    if disc.abs() <= 1e-12 * scale {
        // critical damping
        let e = (-mu * dt).exp();
        return Mat2::new(e * (1.0 + mu * dt), e * dt, -e * omega2 * dt, e * (1.0 - mu * dt));
    }
    if disc < 0.0 {
        let wd = (-disc).sqrt();
        let e = (-mu * dt).exp();
        let (s, co) = (wd * dt).sin_cos();
        let sw = if wd * dt < 1e-8 { dt } else { s / wd };
        return Mat2::new(
            e * (co + mu * sw),
            e * sw,
            -e * omega2 * sw,
            e * (co - mu * sw),
        );
    }
    // overdamped: roots r_fast = −(μ+δ), r_slow = −ω²/(μ+δ)
    let delta = disc.sqrt();
    let fast = -(mu + delta);
    let slow = -omega2 / (mu + delta);
    let (ef, es) = ((fast * dt).exp(), (slow * dt).exp());
    // e^{−μt}·sinh(δt)/δ and e^{−μt}·cosh(δt)
    let sh = if delta * dt < 1e-4 {
        (-mu * dt).exp() * dt * (1.0 + (delta * dt).powi(2) / 6.0)
    } else {
        (es - ef) / (2.0 * delta)
    };
    let ch = 0.5 * (es + ef);
    Mat2::new(ch + mu * sh, sh, -omega2 * sh, ch - mu * sh)
}

/// Shell operator on a periodic grid of `n` nodes over length `lx`.
#[derive(Clone, Debug)]
pub struct ShellModel {
    pub plan: Periodic1d,
    pub gamma: f64,
    pub half_width: f64,
}

impl ShellModel {
    pub fn new(n: usize, lx: f64, gamma: f64, half_width: f64) -> Self {
        Self {
            plan: Periodic1d::new(n, lx),
            gamma,
            half_width,
        }
    }

    pub fn n(&self) -> usize {
        self.plan.n()
    }

    pub fn h(&self) -> f64 {
        self.plan.len() / self.plan.n() as f64
    }

    /// Advances one step with `g` held constant; the mean mode is removed.
    pub fn step(&self, state: &ShellState, g: &[f64], dt: f64) -> Result<ShellState> {
        let n = self.n();
        if state.eta.len() != n || state.eta_dot.len() != n || g.len() != n {
            return Err(Error::InvalidArgument(format!(
                "shell arrays must have length {n}"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let t_new = state.t + dt;
        let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        if zero(&state.eta) && zero(&state.eta_dot) && zero(g) {
            return Ok(ShellState {
                eta: vec![0.0; n],
                eta_dot: vec![0.0; n],
                t: t_new,
            });
        }
        let ze = self.plan.forward(&state.eta);
        let zd = self.plan.forward(&state.eta_dot);
        let zg = self.plan.forward(g);
        let mut oe = vec![Complex64::new(0.0, 0.0); n];
        let mut od = vec![Complex64::new(0.0, 0.0); n];
        for m in 1..n {
            let k = self.plan.wavenumber(m);
            let k2 = k * k;
            let k4 = k2 * k2;
            let p = damped_oscillator_propagator(self.gamma * k2, k4, dt);
            let zp = zg[m] / k4;
            let y0 = ze[m] - zp;
            let y1 = zd[m];
            oe[m] = zp + y0 * p.get(0, 0) + y1 * p.get(0, 1);
            od[m] = y0 * p.get(1, 0) + y1 * p.get(1, 1);
        }
        let eta = self.plan.inverse(oe);
        let eta_dot = self.plan.inverse(od);
        let sup = eta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sup < self.half_width) {
            return Err(Error::Degeneracy {
                time: t_new,
                detail: format!(
                    "shell displacement ‖η‖∞ = {sup} reached L = {}",
                    self.half_width
                ),
            });
        }
        Ok(ShellState {
            eta,
            eta_dot,
            t: t_new,
        })
    }

    fn l2_sq(&self, v: &[f64]) -> f64 {
        self.h() * v.iter().map(|x| x * x).sum::<f64>()
    }

    /// `½‖η̇‖² + ½‖∂²η‖²`
    pub fn energy(&self, s: &ShellState) -> f64 {
        0.5 * self.l2_sq(&s.eta_dot) + 0.5 * self.l2_sq(&self.plan.derivative(&s.eta, 2))
    }

    /// `γ‖∂η̇‖²`
    pub fn dissipation(&self, s: &ShellState) -> f64 {
        self.gamma * self.l2_sq(&self.plan.derivative(&s.eta_dot, 1))
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        self.l2_sq(v).sqrt()
    }

    /// `(‖η‖² + ‖∂η‖² + ‖∂²η‖²)^{1/2}`
    pub fn w22_norm(&self, v: &[f64]) -> f64 {
        (self.l2_sq(v)
            + self.l2_sq(&self.plan.derivative(v, 1))
            + self.l2_sq(&self.plan.derivative(v, 2)))
        .sqrt()
    }

    pub fn second_derivative_norm(&self, v: &[f64]) -> f64 {
        self.l2_norm(&self.plan.derivative(v, 2))
    }

    /// Constants `(c, C)` with `c‖η‖_{W²,²} ≤ ‖∂²η‖ ≤ C‖η‖_{W²,²}` for mean-zero grid functions.
    pub fn norm_equivalence_constants(&self) -> (f64, f64) {
        let n = self.n();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for m in 1..=n / 2 {
            let k2 = self.plan.wavenumber(m).powi(2);
            let r = k2 / (1.0 + k2 + k2 * k2).sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }
}

/// One shell step for the given damping; see [`ShellModel::step`].
pub fn shell_step(state: &ShellState, g: &[f64], gamma: f64, dt: f64, lx: f64, half_width: f64) -> Result<ShellState> {
    ShellModel::new(state.eta.len(), lx, gamma, half_width).step(state, g, dt)
}

/// Normal traction `−(S n_η)·e₂·|∂𝛗_η|` without mean projection.
///
/// With `n_η = (−∂η, 1)/√(1+∂η²)` and `|∂𝛗_η| = √(1+∂η²)` the metric factors cancel.
pub fn traction_forcing_raw(stress: &[Mat2], eta_slope: &[f64]) -> Vec<f64> {
    stress
        .iter()
        .zip(eta_slope)
        .map(|(s, &dy)| s.get(1, 0) * dy - s.get(1, 1))
        .collect()
}

/// Mean-projected shell forcing from interface stress samples.
pub fn traction_forcing(stress: &[Mat2], eta_slope: &[f64]) -> Vec<f64> {
    let mut g = traction_forcing_raw(stress, eta_slope);
    Periodic1d::project_mean_zero(&mut g);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (*a - *b).frobenius() <= tol
    }

    fn propagator_oracle(c: f64, w2: f64, t: f64) -> Mat2 {
        // Independent oracle: Taylor series of the 2×2 matrix exponential.
        let m = Mat2::new(0.0, 1.0, -w2, -c);
        let steps = 64;
        let h = t / steps as f64;
        let mut term = Mat2::IDENTITY;
        let mut e = Mat2::IDENTITY;
        for k in 1..40 {
            term = (term * m).scale(h / k as f64);
            e += term;
        }
        e.powi(steps)
    }

    #[test]
    fn propagator_matches_series_in_all_regimes() {
        for (c, w2, t) in [(0.0, 4.0, 0.3), (0.5, 4.0, 0.2), (4.0, 4.0, 0.1), (10.0, 4.0, 0.1), (1e-9, 1.0, 0.5)] {
            let p = damped_oscillator_propagator(c, w2, t);
            let o = propagator_oracle(c, w2, t);
            assert!(close(&p, &o, 1e-12), "c={c} w2={w2}: {p:?} vs {o:?}");
        }
    }

    #[test]
    fn rest_state_is_fixed() {
        let m = ShellModel::new(16, 2.0, 0.5, 0.4);
        let s = ShellState::rest(16);
        let n = m.step(&s, &[0.0; 16], 0.01).unwrap();
        assert_eq!(n.eta, s.eta);
        assert_eq!(n.eta_dot, s.eta_dot);
    }

    #[test]
    fn constant_modal_forcing_reaches_static_deflection() {
        let n = 16;
        let lx = 2.0;
        let m = ShellModel::new(n, lx, 1.0, 0.4);
        let k = 2.0 * PI / lx;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * lx / n as f64).collect();
        let g: Vec<f64> = x.iter().map(|&x| 0.1 * (k * x).cos()).collect();
        let mut s = ShellState::rest(n);
        for _ in 0..2000 {
            s = m.step(&s, &g, 0.05).unwrap();
        }
        for (e, gx) in s.eta.iter().zip(&g) {
            assert!((e - gx / k.powi(4)).abs() < 1e-10);
        }
    }

    #[test]
    fn unforced_energy_conserved_without_damping() {
        let n = 32;
        let m = ShellModel::new(n, 2.0, 0.0, 0.4);
        let mut s = ShellState::rest(n);
        for i in 0..n {
            let x = (i as f64 + 0.5) / 16.0;
            s.eta[i] = 0.01 * (PI * x).sin() + 0.004 * (3.0 * PI * x).cos();
        }
        let e0 = m.energy(&s);
        for _ in 0..10_000 {
            s = m.step(&s, &vec![0.0; n], 1e-3).unwrap();
        }
        assert!((m.energy(&s) - e0).abs() < 1e-10 * e0.max(1.0));
    }

    #[test]
    fn traction_examples() {
        let p0 = 1.7;
        let s = vec![Mat2::diag(-p0, -p0); 8];
        let flat = vec![0.0; 8];
        assert!(traction_forcing_raw(&s, &flat).iter().all(|&g| g == p0));
        assert!(traction_forcing(&s, &flat).iter().all(|&g| g.abs() < 1e-15));
        let tau = 0.3;
        let s = vec![Mat2::diag(0.0, tau); 8];
        assert!(traction_forcing_raw(&s, &flat).iter().all(|&g| g == -tau));
        let slope: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let s = vec![Mat2::diag(-p0, -p0); 8];
        assert!(traction_forcing_raw(&s, &slope).iter().all(|&g| (g - p0).abs() < 1e-15));
    }

    #[test]
    fn degeneracy_is_reported_with_time() {
        let m = ShellModel::new(8, 2.0, 0.1, 0.05);
        let mut s = ShellState::rest(8);
        s.t = 2.0;
        let g: Vec<f64> = (0..8).map(|i| 50.0 * (PI * (i as f64 + 0.5) / 4.0).cos()).collect();
        let mut err = None;
        for _ in 0..100 {
            match m.step(&s, &g, 0.05) {
                Ok(n) => s = n,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        match err {
            Some(Error::Degeneracy { time, .. }) => assert!(time > 2.0),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }
}
